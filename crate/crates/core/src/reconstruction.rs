//! Photon-counting reconstruction.
//!
//! Each analog frame is thresholded, split into 8-connected components, and
//! every component of at least two pixels counts as one detected photon at
//! its intensity-weighted centroid. Single-pixel components are read-out
//! noise. Summing the per-frame events gives the ghost image.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::detection::Frame;
use crate::error::{Error, Result};
use crate::imageio;

/// Components smaller than this are discarded.
pub const MIN_EVENT_PIXELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(width: usize, height: usize, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), width * height, "grid size mismatch");
        BinaryGrid {
            width,
            height,
            cells,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    /// Intensity-weighted centroid in pixel-index coordinates (integer
    /// values are pixel centers).
    pub centroid_px: (f64, f64),
    pub pixel_count: usize,
    pub total_mass: f64,
}

/// Marks pixels strictly above `theta`.
pub fn threshold_frame(frame: &Frame, theta: f64) -> BinaryGrid {
    let cells = frame.values.iter().map(|&v| v as f64 > theta).collect();
    BinaryGrid::new(frame.width, frame.height, cells)
}

/// 8-connected components of `grid` with at least [`MIN_EVENT_PIXELS`]
/// pixels, in raster order of their first pixel.
pub fn extract_events(grid: &BinaryGrid, frame: &Frame) -> Vec<PhotonEvent> {
    assert_eq!(
        (grid.width, grid.height),
        (frame.width, frame.height),
        "binary grid and frame dimensions differ"
    );
    let (w, h) = (grid.width, grid.height);
    let mut open = grid.cells.clone();
    let mut stack = Vec::new();
    let mut events = Vec::new();
    for start in 0..open.len() {
        if !open[start] {
            continue;
        }
        open[start] = false;
        stack.push(start);
        let (mut n, mut mass, mut mx, mut my) = (0usize, 0.0f64, 0.0f64, 0.0f64);
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        while let Some(i) = stack.pop() {
            let (c, r) = (i % w, i / w);
            let v = frame.values[i] as f64;
            n += 1;
            mass += v;
            mx += v * c as f64;
            my += v * r as f64;
            sx += c as f64;
            sy += r as f64;
            let r0 = r.saturating_sub(1);
            let r1 = (r + 1).min(h - 1);
            let c0 = c.saturating_sub(1);
            let c1 = (c + 1).min(w - 1);
            for rr in r0..=r1 {
                for cc in c0..=c1 {
                    let j = rr * w + cc;
                    if open[j] {
                        open[j] = false;
                        stack.push(j);
                    }
                }
            }
        }
        if n < MIN_EVENT_PIXELS {
            continue;
        }
        let centroid_px = if mass > 0.0 {
            (mx / mass, my / mass)
        } else {
            (sx / n as f64, sy / n as f64)
        };
        events.push(PhotonEvent {
            centroid_px,
            pixel_count: n,
            total_mass: mass,
        });
    }
    events
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GhostMeta {
    pub frames: u64,
    pub total_events: u64,
    pub dropped_events: u64,
    /// Flat-text configuration that produced the image, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_echo: Option<String>,
}

/// Summed photon counts per sensor pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostImage {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
    pub meta: GhostMeta,
}

impl GhostImage {
    pub fn new(width: usize, height: usize) -> Self {
        GhostImage {
            width,
            height,
            counts: vec![0; width * height],
            meta: GhostMeta::default(),
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u32 {
        self.counts[row * self.width + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Adds one frame's events, each to the pixel nearest its centroid.
    pub fn add_frame(&mut self, events: &[PhotonEvent]) {
        for e in events {
            let c = (e.centroid_px.0 + 0.5).floor();
            let r = (e.centroid_px.1 + 0.5).floor();
            if c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height {
                self.counts[r as usize * self.width + c as usize] += 1;
                self.meta.total_events += 1;
            } else {
                self.meta.dropped_events += 1;
            }
        }
        self.meta.frames += 1;
    }

    /// Pixel-wise sum with another image of the same size.
    pub fn merge(&mut self, other: &GhostImage) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.meta.frames += other.meta.frames;
        self.meta.total_events += other.meta.total_events;
        self.meta.dropped_events += other.meta.dropped_events;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// 16-bit binary PGM; counts saturate at 65535.
    pub fn to_pgm(&self) -> Vec<u8> {
        let data: Vec<u16> = self.counts.iter().map(|&c| c.min(65535) as u16).collect();
        imageio::encode_pgm16(self.width, self.height, 65535, &data)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        imageio::write_bytes(path, &self.to_pgm())
    }

    /// Reads counts back from a PGM. Meta is reconstructed from the counts
    /// unless a sidecar is merged in by the caller.
    pub fn read_pgm(path: &Path) -> Result<GhostImage> {
        let img = imageio::read_gray(path)?;
        let counts = img.data;
        let total = counts.iter().map(|&c| c as u64).sum();
        Ok(GhostImage {
            width: img.width,
            height: img.height,
            counts,
            meta: GhostMeta {
                total_events: total,
                ..GhostMeta::default()
            },
        })
    }

    /// Linear 8-bit rendering scaled to the image maximum.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let data: Vec<u8> = self
            .counts
            .iter()
            .map(|&c| (c as f64 / max * 255.0).round() as u8)
            .collect();
        imageio::write_png8(path, self.width, self.height, &data)
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.meta)
            .map_err(|e| Error::format(path, e.to_string()))?;
        imageio::write_bytes(path, &json)
    }
}

/// Sums per-frame event lists into a ghost image of the given size.
pub fn accumulate<I, E>(frames: I, width: usize, height: usize) -> GhostImage
where
    I: IntoIterator<Item = E>,
    E: AsRef<[PhotonEvent]>,
{
    let mut img = GhostImage::new(width, height);
    for events in frames {
        img.add_frame(events.as_ref());
    }
    img
}

/// Threshold and event extraction for one frame.
pub fn frame_events(frame: &Frame, theta: f64) -> Vec<PhotonEvent> {
    extract_events(&threshold_frame(frame, theta), frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(rows: &[&str]) -> (BinaryGrid, Frame) {
        let h = rows.len();
        let w = rows[0].len();
        let cells: Vec<bool> = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        let values = cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        (
            BinaryGrid::new(w, h, cells),
            Frame {
                width: w,
                height: h,
                values,
                exposure_s: 1.0,
            },
        )
    }

    #[test]
    fn threshold_edges() {
        let mut f = Frame::zeros(8, 8, 1.0);
        assert_eq!(threshold_frame(&f, 0.0).count(), 0);
        f.splat(4.2, 3.7, 1.2, 80.0 / 0.104);
        let b = threshold_frame(&f, 10.0);
        let peak = f
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(b.cells[peak]);
        assert_eq!(extract_events(&b, &f).len(), 1, "contiguous region");
        assert_eq!(threshold_frame(&f, f64::INFINITY).count(), 0);
    }

    #[test]
    fn single_pixels_are_noise() {
        let (g, f) = grid_from(&["....", ".#..", "....", "...#"]);
        assert!(extract_events(&g, &f).is_empty());
    }

    #[test]
    fn block_centroid_at_center() {
        let (g, f) = grid_from(&[".....", ".###.", ".###.", ".###.", "....."]);
        let ev = extract_events(&g, &f);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].pixel_count, 9);
        assert_eq!(ev[0].centroid_px, (2.0, 2.0));
    }

    #[test]
    fn diagonal_neighbors_join() {
        let (g, f) = grid_from(&["#...", ".#..", "....", "..##"]);
        let ev = extract_events(&g, &f);
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].pixel_count, 2);
    }

    #[test]
    fn separated_blocks_stay_apart() {
        let (g, f) = grid_from(&["##...", "##...", ".....", "...##", "...##"]);
        assert_eq!(extract_events(&g, &f).len(), 2);
    }

    #[test]
    fn accumulate_counts_and_drops() {
        let ev = PhotonEvent {
            centroid_px: (2.4, 1.6),
            pixel_count: 3,
            total_mass: 1.0,
        };
        let img = accumulate(vec![vec![ev]; 7], 4, 4);
        assert_eq!(img.get(2, 2), 7);
        assert_eq!(img.total(), 7);
        assert_eq!(img.meta.frames, 7);

        let off = PhotonEvent {
            centroid_px: (9.0, 0.0),
            ..ev
        };
        let img = accumulate([[ev, off]], 4, 4);
        assert_eq!(img.meta.total_events, 1);
        assert_eq!(img.meta.dropped_events, 1);
        assert_eq!(img.total(), img.meta.total_events);

        let empty = accumulate(Vec::<Vec<PhotonEvent>>::new(), 3, 3);
        assert_eq!(empty.total(), 0);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = GhostImage::new(3, 2);
        img.counts = vec![0, 1, 2, 70000, 4, 5];
        let p = dir.path().join("g.pgm");
        img.write_pgm(&p).unwrap();
        let back = GhostImage::read_pgm(&p).unwrap();
        assert_eq!(back.counts, vec![0, 1, 2, 65535, 4, 5]);
    }
}
