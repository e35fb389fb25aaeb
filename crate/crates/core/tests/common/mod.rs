#![allow(dead_code)]

use ghostim::detection::Frame;
use ghostim::reconstruction::BinaryGrid;

/// Component summary used to compare against `extract_events`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEvent {
    pub first_pixel: usize,
    pub pixel_count: usize,
    pub mass: f64,
    pub centroid: (f64, f64),
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// 8-connected labelling by union-find over all neighbour pairs, then a
/// raster-order summary of every component with at least `min_pixels`.
pub fn union_find_events(grid: &BinaryGrid, frame: &Frame, min_pixels: usize) -> Vec<OracleEvent> {
    let (w, h) = (grid.width, grid.height);
    let mut parent: Vec<usize> = (0..w * h).collect();
    for r in 0..h {
        for c in 0..w {
            if !grid.get(c, r) {
                continue;
            }
            for (dc, dr) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (cc, rr) = (c as i64 + dc, r as i64 + dr);
                if cc < 0 || rr < 0 || cc >= w as i64 || rr >= h as i64 {
                    continue;
                }
                let (cc, rr) = (cc as usize, rr as usize);
                if grid.get(cc, rr) {
                    let a = find(&mut parent, r * w + c);
                    let b = find(&mut parent, rr * w + cc);
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..w * h {
        if grid.cells[i] {
            let root = find(&mut parent, i);
            members.entry(root).or_default().push(i);
        }
    }
    let mut out: Vec<OracleEvent> = members
        .into_values()
        .filter(|m| m.len() >= min_pixels)
        .map(|m| {
            let mass: f64 = m.iter().map(|&i| frame.values[i] as f64).sum();
            let (sx, sy) = m.iter().fold((0.0, 0.0), |(x, y), &i| {
                let v = frame.values[i] as f64;
                (x + v * (i % w) as f64, y + v * (i / w) as f64)
            });
            let centroid = if mass > 0.0 {
                (sx / mass, sy / mass)
            } else {
                let n = m.len() as f64;
                (
                    m.iter().map(|&i| (i % w) as f64).sum::<f64>() / n,
                    m.iter().map(|&i| (i / w) as f64).sum::<f64>() / n,
                )
            };
            OracleEvent {
                first_pixel: m[0],
                pixel_count: m.len(),
                mass,
                centroid,
            }
        })
        .collect();
    out.sort_by_key(|e| e.first_pixel);
    out
}

/// Samples of `f(x)` at pixel centers, as ghost-image counts scaled by `scale`.
pub fn synthetic_edge_image(
    width: usize,
    height: usize,
    edge_px: f64,
    sigma_px: f64,
    scale: f64,
    horizontal_profile: bool,
) -> ghostim::reconstruction::GhostImage {
    let mut g = ghostim::reconstruction::GhostImage::new(width, height);
    for r in 0..height {
        for c in 0..width {
            let u = if horizontal_profile { c } else { r } as f64;
            let z = (u - edge_px) / (sigma_px * std::f64::consts::SQRT_2);
            let v = 0.5 * erfc_approx(z);
            g.counts[r * width + c] = (v * scale).round() as u32;
        }
    }
    g
}

/// Complementary error function, Abramowitz-Stegun 7.1.26 rational
/// approximation (absolute error below 1.5e-7).
pub fn erfc_approx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_approx(-x);
    }
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}
