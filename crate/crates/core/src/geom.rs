//! Plane coordinates and the pixel grids laid over them.
//!
//! Planes use meters with the optical axis at the origin. `x` grows with the
//! column index and `y` grows with the row index, so a grid stored row-major
//! maps onto the plane without flips.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// A correlation or orientation sign, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn apply(self, v: Vec2) -> Vec2 {
        match self {
            Sign::Positive => v,
            Sign::Negative => -v,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

/// A rectangular grid of square cells centered on `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    pub origin: Vec2,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, pitch: f64) -> Self {
        GridGeometry {
            width,
            height,
            pitch,
            origin: Vec2::ZERO,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Continuous cell coordinates of a plane position: cell `(c, r)` spans
    /// `[c, c + 1) x [r, r + 1)`.
    pub fn to_cell(&self, p: Vec2) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.pitch + self.width as f64 / 2.0,
            (p.y - self.origin.y) / self.pitch + self.height as f64 / 2.0,
        )
    }

    /// Plane position of the center of cell `(col, row)`.
    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        self.index_to_plane(col as f64, row as f64)
    }

    /// Plane position for fractional cell-index coordinates, where integer
    /// values land on cell centers.
    pub fn index_to_plane(&self, col: f64, row: f64) -> Vec2 {
        Vec2::new(
            self.origin.x + (col + 0.5 - self.width as f64 / 2.0) * self.pitch,
            self.origin.y + (row + 0.5 - self.height as f64 / 2.0) * self.pitch,
        )
    }

    /// Index of the cell containing `p`, if any.
    pub fn locate(&self, p: Vec2) -> Option<(usize, usize)> {
        let (cx, cy) = self.to_cell(p);
        if cx >= 0.0 && cy >= 0.0 && cx < self.width as f64 && cy < self.height as f64 {
            Some((cx as usize, cy as usize))
        } else {
            None
        }
    }

    /// Lower and upper plane bounds `(min, max)` of the grid.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let half = Vec2::new(
            self.width as f64 * self.pitch / 2.0,
            self.height as f64 * self.pitch / 2.0,
        );
        (self.origin - half, self.origin + half)
    }
}
