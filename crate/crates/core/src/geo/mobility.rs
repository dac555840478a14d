//! User mobility models: random waypoint, Gauss-Markov and their
//! street-restricted variants.
//!
//! Generators emit a sample every `dt` seconds plus every corner of the
//! path (waypoints, graph nodes), so consecutive samples always lie on one
//! straight piece travelled at constant speed.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geom::{BBox, Point};

use super::graph::StreetGraph;
use super::trajectory::{TrajPoint, Trajectory};

const TIME_EPS: f64 = 1e-9;

/// Accumulates samples on a `dt` grid plus explicit corner points.
struct Recorder {
    points: Vec<TrajPoint>,
    dt: f64,
    next_grid: f64,
}

impl Recorder {
    fn new(p: Point, dt: f64) -> Self {
        Recorder {
            points: vec![TrajPoint::new(0.0, p.x, p.y)],
            dt,
            next_grid: dt,
        }
    }

    fn now(&self) -> f64 {
        self.points.last().unwrap().t
    }

    fn push(&mut self, t: f64, p: Point) {
        if t > self.now() + TIME_EPS {
            self.points.push(TrajPoint::new(t, p.x, p.y));
        }
    }

    /// Straight move from the current point to `to` at `speed`, stopping at
    /// `t_max`. Returns false if cut short.
    fn travel(&mut self, to: Point, speed: f64, t_max: f64) -> bool {
        let last = *self.points.last().unwrap();
        let from = last.pos();
        let len = from.dist(to);
        if len == 0.0 {
            return true;
        }
        let t_end = last.t + len / speed;
        while self.next_grid < t_end.min(t_max) - TIME_EPS {
            let t = self.next_grid;
            self.push(t, from.lerp(to, (t - last.t) / (t_end - last.t)));
            self.next_grid += self.dt;
        }
        if t_end <= t_max {
            self.push(t_end, to);
            while self.next_grid <= t_end + TIME_EPS {
                self.next_grid += self.dt;
            }
            true
        } else {
            self.push(t_max, from.lerp(to, (t_max - last.t) / (t_end - last.t)));
            false
        }
    }

    /// Stand still until `t`.
    fn wait_until(&mut self, t: f64) {
        let p = self.points.last().unwrap().pos();
        self.push(t, p);
        while self.next_grid <= t + TIME_EPS {
            self.next_grid += self.dt;
        }
    }

    fn finish(self) -> Trajectory {
        Trajectory::from_sorted_unchecked(self.points)
    }
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, area: BBox) -> Point {
    Point::new(
        area.x0 + rng.random::<f64>() * area.width(),
        area.y0 + rng.random::<f64>() * area.height(),
    )
}

fn uniform_speed<R: Rng + ?Sized>(rng: &mut R, v_range: (f64, f64)) -> f64 {
    if v_range.1 > v_range.0 {
        rng.random_range(v_range.0..=v_range.1)
    } else {
        v_range.0
    }
}

/// Random waypoint: uniform waypoints in `area`, uniform per-leg speed in
/// `v_range` (m/s), for `duration` seconds starting at t = 0.
pub fn rwp_trajectory<R: Rng + ?Sized>(rng: &mut R, area: BBox, v_range: (f64, f64), duration: f64, dt: f64) -> Trajectory {
    debug_assert!(v_range.0 > 0.0 && v_range.1 >= v_range.0);
    let mut rec = Recorder::new(uniform_point(rng, area), dt);
    while rec.now() < duration {
        let to = uniform_point(rng, area);
        let v = uniform_speed(rng, v_range);
        if !rec.travel(to, v, duration) {
            break;
        }
    }
    rec.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussMarkovParams {
    /// m/s
    pub mean_speed: f64,
    /// memory factor in [0, 1]
    pub memory: f64,
    /// stationary std of speed, m/s
    pub speed_noise: f64,
    /// stationary std of heading, rad
    pub heading_noise: f64,
    /// cap on the speed actually travelled, m/s
    pub v_max: f64,
}

impl Default for GaussMarkovParams {
    fn default() -> Self {
        GaussMarkovParams {
            mean_speed: 10.0,
            memory: 0.9,
            speed_noise: 2.0,
            heading_noise: 0.4,
            v_max: 20.0,
        }
    }
}

/// First-order autoregressive speed/heading state.
#[derive(Debug, Clone)]
pub struct GaussMarkovState {
    pub speed: f64,
    pub heading: f64,
    pub mean_heading: f64,
}

impl GaussMarkovState {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, p: &GaussMarkovParams) -> Self {
        let mean_heading = rng.random::<f64>() * TAU;
        GaussMarkovState {
            speed: p.mean_speed,
            heading: mean_heading,
            mean_heading,
        }
    }

    /// `s <- m s + (1 - m) mean + sqrt(1 - m^2) noise xi`, same for heading.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R, p: &GaussMarkovParams) {
        let m = p.memory;
        let k = (1.0 - m * m).max(0.0).sqrt();
        let xs: f64 = StandardNormal.sample(rng);
        let xh: f64 = StandardNormal.sample(rng);
        self.speed = m * self.speed + (1.0 - m) * p.mean_speed + k * p.speed_noise * xs;
        self.heading = m * self.heading + (1.0 - m) * self.mean_heading + k * p.heading_noise * xh;
    }

    pub fn travel_speed(&self, p: &GaussMarkovParams) -> f64 {
        self.speed.clamp(0.0, p.v_max)
    }
}

/// Gauss-Markov motion with mirror reflection at the area boundary.
pub fn gm_trajectory<R: Rng + ?Sized>(rng: &mut R, area: BBox, params: &GaussMarkovParams, duration: f64, dt: f64) -> Trajectory {
    let mut pos = uniform_point(rng, area);
    let mut st = GaussMarkovState::new(rng, params);
    let mut points = vec![TrajPoint::new(0.0, pos.x, pos.y)];
    let steps = (duration / dt).floor() as usize;
    for k in 1..=steps {
        let d = st.travel_speed(params) * dt;
        let mut x = pos.x + d * st.heading.cos();
        let mut y = pos.y + d * st.heading.sin();
        // reflect until inside; each reflection mirrors heading and its mean
        for _ in 0..8 {
            let mut hit = false;
            if x < area.x0 {
                x = 2.0 * area.x0 - x;
                hit = true;
                reflect_x(&mut st);
            } else if x > area.x1 {
                x = 2.0 * area.x1 - x;
                hit = true;
                reflect_x(&mut st);
            }
            if y < area.y0 {
                y = 2.0 * area.y0 - y;
                hit = true;
                reflect_y(&mut st);
            } else if y > area.y1 {
                y = 2.0 * area.y1 - y;
                hit = true;
                reflect_y(&mut st);
            }
            if !hit {
                break;
            }
        }
        pos = Point::new(x.clamp(area.x0, area.x1), y.clamp(area.y0, area.y1));
        points.push(TrajPoint::new(k as f64 * dt, pos.x, pos.y));
        st.advance(rng, params);
    }
    Trajectory::from_sorted_unchecked(points)
}

fn reflect_x(st: &mut GaussMarkovState) {
    st.heading = PI - st.heading;
    st.mean_heading = PI - st.mean_heading;
}

fn reflect_y(st: &mut GaussMarkovState) {
    st.heading = -st.heading;
    st.mean_heading = -st.mean_heading;
}

/// One M-RWP leg: BFS route between two drawn nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteLeg {
    pub from: usize,
    pub to: usize,
    pub nodes: Vec<usize>,
    pub speed: f64,
}

/// Map-restricted random waypoint: destinations are uniform graph nodes and
/// each leg follows the BFS shortest path.
pub fn m_rwp_trajectory<R: Rng + ?Sized>(rng: &mut R, graph: &StreetGraph, v_range: (f64, f64), duration: f64, dt: f64) -> Trajectory {
    m_rwp_with_legs(rng, graph, v_range, duration, dt).0
}

pub fn m_rwp_with_legs<R: Rng + ?Sized>(
    rng: &mut R,
    graph: &StreetGraph,
    v_range: (f64, f64),
    duration: f64,
    dt: f64,
) -> (Trajectory, Vec<RouteLeg>) {
    let n = graph.num_nodes();
    assert!(n > 0, "street graph has no nodes");
    let adj = graph.adjacency();
    let mut cur = rng.random_range(0..n);
    let mut rec = Recorder::new(graph.nodes[cur], dt);
    let mut legs = Vec::new();
    if adj[cur].is_empty() {
        rec.wait_until(duration);
        return (rec.finish(), legs);
    }
    'outer: while rec.now() < duration {
        let mut to = rng.random_range(0..n);
        while to == cur && n > 1 {
            to = rng.random_range(0..n);
        }
        let Ok(path) = graph.shortest_path_with(&adj, cur, to) else {
            continue;
        };
        let v = uniform_speed(rng, v_range);
        legs.push(RouteLeg {
            from: cur,
            to,
            nodes: path.clone(),
            speed: v,
        });
        for &node in &path[1..] {
            if !rec.travel(graph.nodes[node], v, duration) {
                break 'outer;
            }
        }
        cur = to;
    }
    (rec.finish(), legs)
}

/// Map-restricted Gauss-Markov: the GM speed drives motion along edges;
/// at each step the user takes the edge direction closest to the GM
/// heading (forward or back mid-edge, any incident edge at a node).
pub fn m_gm_trajectory<R: Rng + ?Sized>(rng: &mut R, graph: &StreetGraph, params: &GaussMarkovParams, duration: f64, dt: f64) -> Trajectory {
    let n = graph.num_nodes();
    assert!(n > 0, "street graph has no nodes");
    let adj = graph.adjacency();
    let start = rng.random_range(0..n);
    let mut rec = Recorder::new(graph.nodes[start], dt);
    let mut st = GaussMarkovState::new(rng, params);
    if adj[start].is_empty() {
        rec.wait_until(duration);
        return rec.finish();
    }
    // position: on edge (a -> b) at distance `off` from a
    let mut a = start;
    let mut b = closest_neighbour(graph, &adj[a], a, st.heading, None);
    let mut off = 0.0;
    let steps = (duration / dt).floor() as usize;
    for k in 1..=steps {
        let t_end = k as f64 * dt;
        let speed = st.travel_speed(params);
        let t_start = rec.now();
        let mut remaining = speed * (t_end - t_start);
        // mid-edge: pick the direction along the edge nearest the heading
        if off > 0.0 {
            let fwd = angle_of(graph.nodes[a], graph.nodes[b]);
            if angle_diff(fwd, st.heading) > PI / 2.0 {
                let len = graph.nodes[a].dist(graph.nodes[b]);
                std::mem::swap(&mut a, &mut b);
                off = len - off;
            }
        }
        let mut t = t_start;
        while remaining > 0.0 && speed > 0.0 {
            let len = graph.nodes[a].dist(graph.nodes[b]);
            let left = len - off;
            if remaining < left {
                off += remaining;
                remaining = 0.0;
            } else {
                remaining -= left;
                t += left / speed;
                rec.push(t.min(t_end), graph.nodes[b]);
                let prev = a;
                a = b;
                off = 0.0;
                b = closest_neighbour(graph, &adj[a], a, st.heading, Some(prev));
            }
        }
        let pos = graph.nodes[a].lerp(graph.nodes[b], off / graph.nodes[a].dist(graph.nodes[b]));
        rec.push(t_end, pos);
        st.advance(rng, params);
    }
    rec.finish()
}

fn angle_of(from: Point, to: Point) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Neighbour of `at` whose direction is closest to `heading`, avoiding an
/// immediate U-turn to `came_from` unless it is the only option.
fn closest_neighbour(graph: &StreetGraph, nbrs: &[usize], at: usize, heading: f64, came_from: Option<usize>) -> usize {
    let candidates: Vec<usize> = match came_from {
        Some(c) if nbrs.len() > 1 => nbrs.iter().copied().filter(|&v| v != c).collect(),
        _ => nbrs.to_vec(),
    };
    let mut best = candidates[0];
    let mut best_d = f64::INFINITY;
    for v in candidates {
        let d = angle_diff(angle_of(graph.nodes[at], graph.nodes[v]), heading);
        if d < best_d {
            best_d = d;
            best = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::graph::synth_street_graph;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn area() -> BBox {
        BBox::from_area(1000.0, 800.0)
    }

    #[test]
    fn rwp_zero_duration_is_single_point() {
        let mut rng = SimRng::seed_from_u64(1);
        let t = rwp_trajectory(&mut rng, area(), (1.0, 5.0), 0.0, 1.0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn rwp_stays_inside_with_bounded_speed() {
        let mut rng = SimRng::seed_from_u64(2);
        for _ in 0..20 {
            let t = rwp_trajectory(&mut rng, area(), (2.0, 8.0), 500.0, 1.0);
            assert!(t.positions().all(|p| area().contains(p)));
            assert!((t.end_time() - 500.0).abs() < 1e-9);
            for w in t.points().windows(2) {
                let v = w[0].pos().dist(w[1].pos()) / (w[1].t - w[0].t);
                assert!(v >= 2.0 - 1e-6 && v <= 8.0 + 1e-6, "speed {v}");
            }
        }
    }

    #[test]
    fn gm_degenerate_is_straight_line() {
        let mut rng = SimRng::seed_from_u64(3);
        let p = GaussMarkovParams {
            mean_speed: 1.0,
            memory: 1.0,
            speed_noise: 0.0,
            heading_noise: 0.0,
            v_max: 10.0,
        };
        let big = BBox::from_area(1e6, 1e6);
        let t = gm_trajectory(&mut rng, big, &p, 100.0, 1.0);
        let pts = t.points();
        let d0 = (pts[1].x - pts[0].x, pts[1].y - pts[0].y);
        for w in pts.windows(2) {
            let d = (w[1].x - w[0].x, w[1].y - w[0].y);
            assert!((d.0 - d0.0).abs() < 1e-9 && (d.1 - d0.1).abs() < 1e-9);
            assert!(((d.0 * d.0 + d.1 * d.1).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gm_speed_process_moments() {
        let mut rng = SimRng::seed_from_u64(4);
        let n = 10_000;
        for memory in [0.0, 0.5, 0.9] {
            let p = GaussMarkovParams {
                mean_speed: 10.0,
                memory,
                speed_noise: 2.0,
                heading_noise: 0.3,
                v_max: 100.0,
            };
            let mut st = GaussMarkovState::new(&mut rng, &p);
            let mut xs = Vec::with_capacity(n);
            for _ in 0..200 {
                st.advance(&mut rng, &p);
            }
            for _ in 0..n {
                st.advance(&mut rng, &p);
                xs.push(st.speed);
            }
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            // AR(1) stationary moments: mean, noise^2
            let se_mean = 2.0 * ((1.0 + memory) / (1.0 - memory)).sqrt() / (n as f64).sqrt();
            assert!((mean - 10.0).abs() < 4.0 * se_mean, "m={memory}: mean {mean}");
            assert!((var / 4.0 - 1.0).abs() < 0.12, "m={memory}: var {var}");
        }
    }

    #[test]
    fn gm_memoryless_mean_speed_from_positions() {
        let mut rng = SimRng::seed_from_u64(5);
        let p = GaussMarkovParams {
            mean_speed: 5.0,
            memory: 0.0,
            speed_noise: 1.0,
            heading_noise: 0.5,
            v_max: 50.0,
        };
        let t = gm_trajectory(&mut rng, BBox::from_area(1e7, 1e7), &p, 10_000.0, 1.0);
        let pts = t.points();
        let mean = pts.windows(2).map(|w| w[0].pos().dist(w[1].pos())).sum::<f64>() / (pts.len() - 1) as f64;
        assert!((mean - 5.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn gm_reflects_inside() {
        let mut rng = SimRng::seed_from_u64(6);
        let p = GaussMarkovParams::default();
        for _ in 0..10 {
            let t = gm_trajectory(&mut rng, area(), &p, 1000.0, 0.5);
            assert!(t.positions().all(|q| area().contains(q)));
            assert!(t.max_speed() <= p.v_max + 1e-9);
        }
    }

    fn graph() -> StreetGraph {
        synth_street_graph(9, (1000.0, 1000.0), 100.0, 0.25, &[1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn m_rwp_on_street_and_replays_bfs() {
        let g = graph();
        let mut rng = SimRng::seed_from_u64(7);
        for _ in 0..10 {
            let (t, legs) = m_rwp_with_legs(&mut rng, &g, (3.0, 12.0), 400.0, 1.0);
            assert!(!legs.is_empty());
            for p in t.positions() {
                assert!(g.distance_to_street(p) < 1e-6);
            }
            for leg in &legs {
                assert_eq!(leg.nodes, g.shortest_path(leg.from, leg.to).unwrap());
            }
            assert!(t.max_speed() <= 12.0 + 1e-6);
        }
    }

    #[test]
    fn single_edge_graph_oscillates() {
        let g = StreetGraph::new(vec![Point::new(0.0, 0.0), Point::new(100.0, 0.0)], vec![(0, 1, 0)]).unwrap();
        let mut rng = SimRng::seed_from_u64(8);
        let (t, legs) = m_rwp_with_legs(&mut rng, &g, (5.0, 5.0), 200.0, 1.0);
        assert!(legs.len() >= 4);
        for w in legs.windows(2) {
            assert_eq!(w[0].to, w[1].from);
            assert_ne!(w[0].from, w[0].to);
        }
        assert!(t.positions().all(|p| p.y == 0.0 && (0.0..=100.0).contains(&p.x)));
        let t = m_gm_trajectory(&mut rng, &g, &GaussMarkovParams::default(), 200.0, 1.0);
        assert!(t.positions().all(|p| p.y == 0.0 && (0.0..=100.0).contains(&p.x)));
    }

    #[test]
    fn m_gm_on_street() {
        let g = graph();
        let mut rng = SimRng::seed_from_u64(10);
        let p = GaussMarkovParams::default();
        for _ in 0..10 {
            let t = m_gm_trajectory(&mut rng, &g, &p, 300.0, 1.0);
            for q in t.positions() {
                assert!(g.distance_to_street(q) < 1e-6);
            }
            assert!(t.max_speed() <= p.v_max + 1e-6);
            assert!(t.duration() > 299.0);
        }
    }
}
