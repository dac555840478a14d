//! Multi-channel binary street rasters.
//!
//! Cells are half-open `[x0 + i*cw, x0 + (i+1)*cw) x [y0 + j*ch, ...)`,
//! with the far edges of the box folded into the last row/column. Row 0
//! holds the smallest y; PNG export flips rows so north is up.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::geom::{BBox, Point};

use super::graph::StreetGraph;

pub const RASTER_SIZE: usize = 192;

#[derive(Debug, Clone, PartialEq)]
pub struct MapRaster {
    /// `channels[c][row * RASTER_SIZE + col]` in {0, 1}
    pub channels: Vec<Vec<u8>>,
    pub bbox: BBox,
    /// (x, y) meters
    pub cell_size: (f64, f64),
}

impl MapRaster {
    pub fn empty(bbox: BBox, classes: usize) -> Self {
        MapRaster {
            channels: vec![vec![0; RASTER_SIZE * RASTER_SIZE]; classes],
            bbox,
            cell_size: (
                bbox.width() / RASTER_SIZE as f64,
                bbox.height() / RASTER_SIZE as f64,
            ),
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> u8 {
        self.channels[c][row * RASTER_SIZE + col]
    }

    /// Cell holding `p`, if it lies inside the box.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        if !self.bbox.contains(p) {
            return None;
        }
        let col = ((p.x - self.bbox.x0) / self.cell_size.0).floor() as usize;
        let row = ((p.y - self.bbox.y0) / self.cell_size.1).floor() as usize;
        Some((row.min(RASTER_SIZE - 1), col.min(RASTER_SIZE - 1)))
    }

    /// Logical OR over channels.
    pub fn union(&self) -> Vec<u8> {
        let mut out = vec![0u8; RASTER_SIZE * RASTER_SIZE];
        for ch in &self.channels {
            for (o, v) in out.iter_mut().zip(ch) {
                *o |= v;
            }
        }
        out
    }

    pub fn png_path(prefix: &Path, channel: usize) -> PathBuf {
        let mut s = prefix.as_os_str().to_owned();
        s.push(format!("_c{channel}.png"));
        PathBuf::from(s)
    }

    /// One 8-bit grayscale PNG per channel at `<prefix>_c<k>.png`, 255 = street.
    pub fn save_pngs(&self, prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let prefix = prefix.as_ref();
        let n = RASTER_SIZE as u32;
        let mut paths = Vec::new();
        for (c, ch) in self.channels.iter().enumerate() {
            let img = GrayImage::from_fn(n, n, |x, y| {
                let row = RASTER_SIZE - 1 - y as usize;
                Luma([if ch[row * RASTER_SIZE + x as usize] != 0 { 255 } else { 0 }])
            });
            let path = Self::png_path(prefix, c);
            img.save(&path)?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn load_pngs(prefix: impl AsRef<Path>, classes: usize, bbox: BBox) -> Result<Self> {
        let prefix = prefix.as_ref();
        let mut r = MapRaster::empty(bbox, classes);
        for c in 0..classes {
            let path = Self::png_path(prefix, c);
            let img = image::open(&path)?.to_luma8();
            if img.width() as usize != RASTER_SIZE || img.height() as usize != RASTER_SIZE {
                return Err(Error::Validation {
                    line: 0,
                    msg: format!("{} is {}x{}, expected {RASTER_SIZE}x{RASTER_SIZE}", path.display(), img.width(), img.height()),
                });
            }
            for (x, y, px) in img.enumerate_pixels() {
                let row = RASTER_SIZE - 1 - y as usize;
                r.channels[c][row * RASTER_SIZE + x as usize] = u8::from(px.0[0] >= 128);
            }
        }
        Ok(r)
    }
}

/// Rasterize a street graph: cell `(row, col)` of channel `c` is 1 iff some
/// edge of class `c` intersects it. Classes at or beyond `classes` fold
/// into the last channel, so `classes = 1` is the class-blind raster.
pub fn rasterize_graph(graph: &StreetGraph, bbox: BBox, classes: usize) -> MapRaster {
    let classes = classes.max(1);
    let mut r = MapRaster::empty(bbox, classes);
    for &(a, b, class) in &graph.edges {
        let ch = (class as usize).min(classes - 1);
        let grid = &mut r.channels[ch];
        for_each_cell_on_segment(graph.nodes[a], graph.nodes[b], bbox, |row, col| {
            grid[row * RASTER_SIZE + col] = 1;
        });
    }
    r
}

/// Visit every cell a closed segment intersects (possibly more than once).
pub(crate) fn for_each_cell_on_segment(p: Point, q: Point, bbox: BBox, mut visit: impl FnMut(usize, usize)) {
    let n = RASTER_SIZE as f64;
    let (cw, chh) = (bbox.width() / n, bbox.height() / n);
    // grid coordinates
    let (mut u0, mut v0) = ((p.x - bbox.x0) / cw, (p.y - bbox.y0) / chh);
    let (mut u1, mut v1) = ((q.x - bbox.x0) / cw, (q.y - bbox.y0) / chh);
    if !clip(&mut u0, &mut v0, &mut u1, &mut v1, n) {
        return;
    }
    let last = RASTER_SIZE - 1;
    let idx = |v: f64| (v.floor().max(0.0) as usize).min(last);
    if u0 > u1 {
        std::mem::swap(&mut u0, &mut u1);
        std::mem::swap(&mut v0, &mut v1);
    }
    let c0 = idx(u0);
    let c1 = idx(u1);
    if u1 == u0 {
        let (lo, hi) = (v0.min(v1), v0.max(v1));
        for row in idx(lo)..=idx(hi) {
            visit(row, c0);
        }
        return;
    }
    let slope = (v1 - v0) / (u1 - u0);
    for col in c0..=c1 {
        let a = u0.max(col as f64);
        let (b, open) = if u1 > (col + 1) as f64 && col < last {
            ((col + 1) as f64, true)
        } else {
            (u1, false)
        };
        if a > b || (a == b && open) {
            continue;
        }
        let va = v0 + slope * (a - u0);
        let mut vb = v0 + slope * (b - u0);
        if open {
            // stop just short of the next column boundary
            vb -= slope * 1e-9;
        }
        let (lo, hi) = (va.min(vb), va.max(vb));
        for row in idx(lo)..=idx(hi) {
            visit(row, col);
        }
    }
}

/// Liang-Barsky clip to `[0, n]^2`; false when fully outside.
fn clip(u0: &mut f64, v0: &mut f64, u1: &mut f64, v1: &mut f64, n: f64) -> bool {
    let (du, dv) = (*u1 - *u0, *v1 - *v0);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (pk, qk) in [(-du, *u0), (du, n - *u0), (-dv, *v0), (dv, n - *v0)] {
        if pk == 0.0 {
            if qk < 0.0 {
                return false;
            }
        } else {
            let r = qk / pk;
            if pk < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return false;
    }
    let (su, sv) = (*u0, *v0);
    if t0 > 0.0 {
        *u0 = su + t0 * du;
        *v0 = sv + t0 * dv;
    }
    if t1 < 1.0 {
        *u1 = su + t1 * du;
        *v1 = sv + t1 * dv;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::graph::synth_street_graph;

    fn bbox() -> BBox {
        BBox::from_area(192.0, 192.0)
    }

    #[test]
    fn empty_graph_gives_zero_raster() {
        let g = StreetGraph::new(vec![], vec![]).unwrap();
        let r = rasterize_graph(&g, bbox(), 3);
        assert_eq!(r.num_channels(), 3);
        assert!(r.channels.iter().all(|c| c.iter().all(|&v| v == 0)));
    }

    #[test]
    fn horizontal_midline_is_one_row() {
        let g = StreetGraph::new(vec![Point::new(0.0, 96.0), Point::new(192.0, 96.0)], vec![(0, 1, 1)]).unwrap();
        let r = rasterize_graph(&g, bbox(), 3);
        assert!(r.channels[0].iter().all(|&v| v == 0));
        assert!(r.channels[2].iter().all(|&v| v == 0));
        for row in 0..RASTER_SIZE {
            for col in 0..RASTER_SIZE {
                assert_eq!(r.get(1, row, col), u8::from(row == 96), "({row},{col})");
            }
        }
    }

    // brute force: dense sampling along the segment marks every cell touched
    fn sampled_cells(p: Point, q: Point, b: BBox) -> Vec<u8> {
        let r = MapRaster::empty(b, 1);
        let mut out = vec![0u8; RASTER_SIZE * RASTER_SIZE];
        let steps = 20_000;
        for k in 0..=steps {
            let pt = p.lerp(q, k as f64 / steps as f64);
            if let Some((row, col)) = r.cell_of(pt) {
                out[row * RASTER_SIZE + col] = 1;
            }
        }
        out
    }

    #[test]
    fn diagonal_segment_covers_sampled_cells() {
        let b = BBox::from_area(1000.0, 1000.0);
        let cases = [
            (Point::new(13.0, 17.0), Point::new(977.0, 611.0)),
            (Point::new(900.0, 20.0), Point::new(40.0, 950.0)),
            (Point::new(-100.0, 500.0), Point::new(1200.0, 520.0)),
        ];
        for (p, q) in cases {
            let g = StreetGraph::new(vec![p, q], vec![(0, 1, 0)]).unwrap();
            let r = rasterize_graph(&g, b, 1);
            let sampled = sampled_cells(p, q, b);
            for i in 0..sampled.len() {
                if sampled[i] == 1 {
                    assert_eq!(r.channels[0][i], 1, "missed cell {i}");
                }
            }
            // exact traversal never marks more than a sliver beyond sampling
            let extra = (0..sampled.len()).filter(|&i| r.channels[0][i] == 1 && sampled[i] == 0).count();
            assert!(extra <= 2, "extra {extra}");
        }
    }

    #[test]
    fn channel_union_equals_class_blind() {
        for seed in 0..10 {
            let g = synth_street_graph(seed, (1000.0, 1000.0), 90.0, 0.25, &[1.0, 1.0, 2.0]).unwrap();
            let b = BBox::from_area(1000.0, 1000.0);
            let multi = rasterize_graph(&g, b, 3);
            let blind = rasterize_graph(&g, b, 1);
            assert_eq!(multi.union(), blind.channels[0]);
            assert_eq!(multi, rasterize_graph(&g, b, 3));
        }
    }

    #[test]
    fn png_round_trip() {
        let g = synth_street_graph(3, (1000.0, 1000.0), 100.0, 0.2, &[1.0, 1.0, 1.0]).unwrap();
        let b = BBox::from_area(1000.0, 1000.0);
        let r = rasterize_graph(&g, b, 3);
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("map");
        let paths = r.save_pngs(&prefix).unwrap();
        assert!(paths[1].to_string_lossy().ends_with("map_c1.png"));
        let back = MapRaster::load_pngs(&prefix, 3, b).unwrap();
        assert_eq!(back, r);
    }
}
