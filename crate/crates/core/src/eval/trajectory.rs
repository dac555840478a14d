//! Trajectory fidelity metrics.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geo::Trajectory;
use crate::geom::{BBox, Point};

pub const EDR_DEFAULT_TAU: f64 = 20.0;

/// Edit distance on real sequences: unit cost for insert, delete and
/// substitute; a pair closer than `tau` matches at no cost.
pub fn edr(a: &Trajectory, b: &Trajectory, tau: f64) -> usize {
    let p: Vec<Point> = a.positions().collect();
    let q: Vec<Point> = b.positions().collect();
    let (n, m) = (p.len(), q.len());
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let sub = if p[i - 1].dist(q[j - 1]) < tau { 0 } else { 1 };
            cur[j] = (prev[j - 1] + sub).min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Dynamic time warping with squared Euclidean point cost.
pub fn dtw(a: &Trajectory, b: &Trajectory) -> f64 {
    let p: Vec<Point> = a.positions().collect();
    let q: Vec<Point> = b.positions().collect();
    let m = q.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    let mut cur = vec![f64::INFINITY; m + 1];
    for pi in &p {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let c = pi.dist2(q[j - 1]);
            cur[j] = c + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// For each generated trajectory the best score against the real set,
/// averaged over the generated set.
pub fn min_match_score<F>(generated: &[Trajectory], real: &[Trajectory], metric: F) -> f64
where
    F: Fn(&Trajectory, &Trajectory) -> f64,
{
    assert!(!generated.is_empty() && !real.is_empty(), "min-match needs non-empty sets");
    generated
        .iter()
        .map(|g| real.iter().map(|r| metric(g, r)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / generated.len() as f64
}

/// `G x G` grid of visit mass over a bounding box, row 0 at `y0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub size: usize,
    pub bbox: BBox,
    pub cells: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(size: usize, bbox: BBox) -> Self {
        Heatmap {
            size,
            bbox,
            cells: vec![0.0; size * size],
        }
    }

    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let g = self.size as f64;
        let col = ((p.x - self.bbox.x0) / self.bbox.width() * g).floor();
        let row = ((p.y - self.bbox.y0) / self.bbox.height() * g).floor();
        let clamp = |v: f64| (v.max(0.0) as usize).min(self.size - 1);
        (clamp(row), clamp(col))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        let g = self.size as f64;
        Point::new(
            self.bbox.x0 + (col as f64 + 0.5) * self.bbox.width() / g,
            self.bbox.y0 + (row as f64 + 0.5) * self.bbox.height() / g,
        )
    }

    pub fn add(&mut self, p: Point, w: f64) {
        let (r, c) = self.cell_of(p);
        self.cells[r * self.size + c] += w;
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let t = self.total();
        if !(t > 0.0) {
            return Err(Error::Normalization("heatmap has no mass".into()));
        }
        for c in &mut self.cells {
            *c /= t;
        }
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 1.0).abs() <= 1e-9 && self.cells.iter().all(|&c| c >= 0.0)
    }
}

/// Every trajectory sample counts one unit of mass; the result sums to 1.
pub fn heatmap(trajs: &[Trajectory], size: usize, bbox: BBox) -> Result<Heatmap> {
    let mut h = Heatmap::zeros(size, bbox);
    for t in trajs {
        for p in t.positions() {
            h.add(p, 1.0);
        }
    }
    h.normalize()?;
    Ok(h)
}

pub fn cosine_similarity(a: &Heatmap, b: &Heatmap) -> Result<f64> {
    if a.cells.len() != b.cells.len() {
        return Err(Error::Contract("heatmaps differ in size".into()));
    }
    let dot: f64 = a.cells.iter().zip(&b.cells).map(|(x, y)| x * y).sum();
    let na = a.cells.iter().map(|x| x * x).sum::<f64>();
    let nb = b.cells.iter().map(|x| x * x).sum::<f64>();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Normalization("cosine similarity of a zero heatmap".into()));
    }
    // sqrt of the product keeps a.a / sqrt(a.a a.a) exactly 1
    Ok(dot / (na * nb).sqrt())
}

/// Exact 1-D Wasserstein-1 distance between two weighted point sets of
/// equal total mass: the integral of |F_a - F_b|.
pub fn wasserstein_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut ev: Vec<(f64, f64)> = a.iter().map(|&(x, w)| (x, w)).chain(b.iter().map(|&(x, w)| (x, -w))).collect();
    ev.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf = 0.0;
    let mut dist = 0.0;
    for k in 0..ev.len() {
        cdf += ev[k].1;
        if k + 1 < ev.len() {
            dist += cdf.abs() * (ev[k + 1].0 - ev[k].0);
        }
    }
    dist
}

/// Sliced Wasserstein distance between two normalized heatmaps, with mass
/// at cell centres, averaged over `n_projections` uniform directions.
pub fn sliced_wasserstein<R: Rng + ?Sized>(a: &Heatmap, b: &Heatmap, n_projections: usize, rng: &mut R) -> Result<f64> {
    if !a.is_normalized() || !b.is_normalized() {
        return Err(Error::Normalization("sliced Wasserstein needs heatmaps summing to 1".into()));
    }
    let atoms = |h: &Heatmap| -> Vec<(Point, f64)> {
        (0..h.size * h.size)
            .filter(|&k| h.cells[k] > 0.0)
            .map(|k| (h.cell_center(k / h.size, k % h.size), h.cells[k]))
            .collect()
    };
    Ok(sliced_wasserstein_points(&atoms(a), &atoms(b), n_projections, rng))
}

/// Sliced Wasserstein distance between weighted point sets of unit mass.
pub fn sliced_wasserstein_points<R: Rng + ?Sized>(
    a: &[(Point, f64)],
    b: &[(Point, f64)],
    n_projections: usize,
    rng: &mut R,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..n_projections {
        let th = rng.random::<f64>() * std::f64::consts::TAU;
        let (c, s) = (th.cos(), th.sin());
        let pa: Vec<(f64, f64)> = a.iter().map(|(p, w)| (p.x * c + p.y * s, *w)).collect();
        let pb: Vec<(f64, f64)> = b.iter().map(|(p, w)| (p.x * c + p.y * s, *w)).collect();
        total += wasserstein_1d(&pa, &pb);
    }
    total / n_projections as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::TrajPoint;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(pts.iter().enumerate().map(|(i, &(x, y))| TrajPoint::new(i as f64, x, y)).collect()).unwrap()
    }

    fn random_traj(rng: &mut SimRng, n: usize, scale: f64) -> Trajectory {
        traj(&(0..n).map(|_| (rng.random::<f64>() * scale, rng.random::<f64>() * scale)).collect::<Vec<_>>())
    }

    // all monotone alignment paths from (0,0) to (n-1,m-1)
    fn dtw_brute(p: &[Point], q: &[Point], i: usize, j: usize) -> f64 {
        let c = p[i].dist2(q[j]);
        if i + 1 == p.len() && j + 1 == q.len() {
            return c;
        }
        let mut best = f64::INFINITY;
        if i + 1 < p.len() {
            best = best.min(dtw_brute(p, q, i + 1, j));
        }
        if j + 1 < q.len() {
            best = best.min(dtw_brute(p, q, i, j + 1));
        }
        if i + 1 < p.len() && j + 1 < q.len() {
            best = best.min(dtw_brute(p, q, i + 1, j + 1));
        }
        c + best
    }

    // edit distance by exhaustive recursion
    fn edr_brute(p: &[Point], q: &[Point], tau: f64) -> usize {
        if p.is_empty() {
            return q.len();
        }
        if q.is_empty() {
            return p.len();
        }
        let sub = if p[0].dist(q[0]) < tau { 0 } else { 1 };
        (edr_brute(&p[1..], &q[1..], tau) + sub)
            .min(edr_brute(&p[1..], q, tau) + 1)
            .min(edr_brute(p, &q[1..], tau) + 1)
    }

    #[test]
    fn identities() {
        let mut rng = SimRng::seed_from_u64(1);
        let t = random_traj(&mut rng, 30, 1000.0);
        assert_eq!(edr(&t, &t, EDR_DEFAULT_TAU), 0);
        assert_eq!(dtw(&t, &t), 0.0);
        assert_eq!(dtw(&traj(&[(0.0, 0.0)]), &traj(&[(3.0, 4.0)])), 25.0);
    }

    #[test]
    fn edr_far_apart_is_length() {
        let a = traj(&(0..10).map(|i| (i as f64, 0.0)).collect::<Vec<_>>());
        let b = traj(&(0..10).map(|i| (i as f64, 1000.0)).collect::<Vec<_>>());
        assert_eq!(edr(&a, &b, 20.0), 10);
    }

    #[test]
    fn small_cases_match_exhaustive() {
        let mut rng = SimRng::seed_from_u64(2);
        for _ in 0..300 {
            let (na, nb) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let a = random_traj(&mut rng, na, 60.0);
            let b = random_traj(&mut rng, nb, 60.0);
            let p: Vec<Point> = a.positions().collect();
            let q: Vec<Point> = b.positions().collect();
            let (d, o) = (dtw(&a, &b), dtw_brute(&p, &q, 0, 0));
            assert!((d - o).abs() <= 1e-12 * o.max(1.0), "{d} vs {o}");
            assert_eq!(edr(&a, &b, 20.0), edr_brute(&p, &q, 20.0));
            assert_eq!(edr(&a, &b, 20.0), edr(&b, &a, 20.0));
            assert!((dtw(&a, &b) - dtw(&b, &a)).abs() <= 1e-12 * d.max(1.0));
            assert!(edr(&a, &b, 20.0) <= p.len().max(q.len()));
        }
    }

    #[test]
    fn min_match_cases() {
        let mut rng = SimRng::seed_from_u64(3);
        let real: Vec<Trajectory> = (0..5).map(|_| random_traj(&mut rng, 8, 500.0)).collect();
        let gen = vec![real[1].clone(), real[3].clone()];
        assert_eq!(min_match_score(&gen, &real, dtw), 0.0);
        assert_eq!(min_match_score(&gen, &real, |a, b| edr(a, b, 20.0) as f64), 0.0);
        let g2: Vec<Trajectory> = (0..4).map(|_| random_traj(&mut rng, 8, 500.0)).collect();
        let mut sum = 0.0;
        for g in &g2 {
            let mut best = f64::INFINITY;
            for r in &real {
                best = best.min(dtw(g, r));
            }
            sum += best;
        }
        assert_eq!(min_match_score(&g2, &real, dtw), sum / 4.0);
        assert_eq!(min_match_score(&g2[..1], &real[..1], dtw), dtw(&g2[0], &real[0]));
    }

    #[test]
    fn heatmap_properties() {
        let bb = BBox::from_area(100.0, 100.0);
        let h = heatmap(&[Trajectory::stationary(0.0, Point::new(10.0, 90.0))], 10, bb).unwrap();
        assert_eq!(h.cells.iter().filter(|&&c| c > 0.0).count(), 1);
        assert_eq!(h.cells[9 * 10 + 1], 1.0);
        assert!(heatmap(&[], 10, bb).is_err());

        let mut rng = SimRng::seed_from_u64(4);
        let a: Vec<Trajectory> = (0..3).map(|_| random_traj(&mut rng, 11, 100.0)).collect();
        let b: Vec<Trajectory> = (0..5).map(|_| random_traj(&mut rng, 7, 100.0)).collect();
        let ha = heatmap(&a, 16, bb).unwrap();
        let hb = heatmap(&b, 16, bb).unwrap();
        let all: Vec<Trajectory> = a.iter().chain(&b).cloned().collect();
        let hu = heatmap(&all, 16, bb).unwrap();
        let (wa, wb) = (33.0 / 68.0, 35.0 / 68.0);
        for k in 0..256 {
            assert!((hu.cells[k] - (wa * ha.cells[k] + wb * hb.cells[k])).abs() < 1e-15);
        }
        assert!((hu.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_cases() {
        let bb = BBox::from_area(1.0, 1.0);
        let mut a = Heatmap::zeros(2, bb);
        let mut b = Heatmap::zeros(2, bb);
        a.cells = vec![1.0, 2.0, 0.0, 0.0];
        b.cells = vec![0.0, 0.0, 3.0, 1.0];
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        let mut a2 = a.clone();
        let mut c = b.clone();
        c.cells[0] = 0.5;
        let base = cosine_similarity(&a, &c).unwrap();
        for x in a2.cells.iter_mut() {
            *x *= 7.0;
        }
        let mut c2 = c.clone();
        for x in c2.cells.iter_mut() {
            *x *= 7.0;
        }
        assert!((cosine_similarity(&a2, &c2).unwrap() - base).abs() < 1e-15);
        assert!(cosine_similarity(&a, &Heatmap::zeros(2, bb)).is_err());
    }

    #[test]
    fn wasserstein_cases() {
        assert_eq!(wasserstein_1d(&[(0.0, 1.0)], &[(2.0, 1.0)]), 2.0);
        assert!((wasserstein_1d(&[(0.0, 0.5), (1.0, 0.5)], &[(0.5, 1.0)]) - 0.5).abs() < 1e-15);
        let mut rng = SimRng::seed_from_u64(5);
        let d = sliced_wasserstein_points(
            &[(Point::new(0.0, 0.0), 1.0)],
            &[(Point::new(1.0, 0.0), 1.0)],
            10_000,
            &mut rng,
        );
        assert!((d - 2.0 / std::f64::consts::PI).abs() < 0.01, "{d}");
    }

    #[test]
    fn swd_identity_symmetry_and_checks() {
        let bb = BBox::from_area(100.0, 100.0);
        let mut rng = SimRng::seed_from_u64(6);
        let a = heatmap(&[random_traj(&mut rng, 40, 100.0)], 12, bb).unwrap();
        let b = heatmap(&[random_traj(&mut rng, 40, 100.0)], 12, bb).unwrap();
        assert_eq!(sliced_wasserstein(&a, &a, 50, &mut SimRng::seed_from_u64(9)).unwrap(), 0.0);
        let ab = sliced_wasserstein(&a, &b, 50, &mut SimRng::seed_from_u64(9)).unwrap();
        let ba = sliced_wasserstein(&b, &a, 50, &mut SimRng::seed_from_u64(9)).unwrap();
        assert!(ab > 0.0 && (ab - ba).abs() < 1e-12);
        let mut un = a.clone();
        un.cells[0] += 0.5;
        assert!(sliced_wasserstein(&un, &b, 5, &mut rng).is_err());
    }
}
