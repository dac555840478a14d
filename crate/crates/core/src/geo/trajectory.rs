use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl TrajPoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        TrajPoint { t, x, y }
    }

    pub fn pos(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Timestamped positions of one user; timestamps strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<TrajPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation {
                line: 0,
                msg: "trajectory has no points".into(),
            });
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::Validation {
                    line: i as u64 + 1,
                    msg: format!("timestamp {} does not exceed {}", w[1].t, w[0].t),
                });
            }
        }
        if points.iter().any(|p| !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::Validation {
                line: 0,
                msg: "non-finite trajectory value".into(),
            });
        }
        Ok(Trajectory { points })
    }

    pub(crate) fn from_sorted_unchecked(points: Vec<TrajPoint>) -> Self {
        debug_assert!(!points.is_empty());
        debug_assert!(points.windows(2).all(|w| w[1].t > w[0].t));
        Trajectory { points }
    }

    pub fn stationary(t: f64, p: Point) -> Self {
        Trajectory {
            points: vec![TrajPoint::new(t, p.x, p.y)],
        }
    }

    pub fn points(&self) -> &[TrajPoint] {
        &self.points
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.points.iter().map(TrajPoint::pos)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.points[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Piecewise-linear position at `t`, clamped to the end points. At a
    /// sample timestamp the sample itself is returned.
    pub fn position_at(&self, t: f64) -> Point {
        let pts = &self.points;
        let k = pts.partition_point(|p| p.t <= t);
        if k == 0 {
            return pts[0].pos();
        }
        let a = pts[k - 1];
        if a.t == t || k == pts.len() {
            return a.pos();
        }
        let b = pts[k];
        a.pos().lerp(b.pos(), (t - a.t) / (b.t - a.t))
    }

    /// Same path with every timestamp shifted by `dt`.
    pub fn shifted(&self, dt: f64) -> Trajectory {
        Trajectory {
            points: self
                .points
                .iter()
                .map(|p| TrajPoint::new(p.t + dt, p.x, p.y))
                .collect(),
        }
    }

    /// Extend past the current end by replaying the path backwards and
    /// forwards until `until` is covered. Speeds and the set of visited
    /// positions are unchanged.
    pub fn extend_ping_pong(&mut self, until: f64) {
        if self.points.len() < 2 {
            let p = self.points[0];
            if until > p.t {
                self.points.push(TrajPoint::new(until, p.x, p.y));
            }
            return;
        }
        let base = self.points.clone();
        let mut forward = false;
        while self.end_time() < until {
            let end = self.end_time();
            let n = base.len();
            let seq: Vec<TrajPoint> = if forward {
                let t0 = base[0].t;
                base[1..]
                    .iter()
                    .map(|p| TrajPoint::new(end + (p.t - t0), p.x, p.y))
                    .collect()
            } else {
                let t1 = base[n - 1].t;
                base[..n - 1]
                    .iter()
                    .rev()
                    .map(|p| TrajPoint::new(end + (t1 - p.t), p.x, p.y))
                    .collect()
            };
            self.points.extend(seq);
            forward = !forward;
        }
    }

    /// Largest implied speed between consecutive samples.
    pub fn max_speed(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].pos().dist(w[1].pos()) / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj() -> Trajectory {
        Trajectory::new(vec![
            TrajPoint::new(0.0, 0.0, 0.0),
            TrajPoint::new(1.0, 10.0, 0.0),
            TrajPoint::new(3.0, 10.0, 20.0),
        ])
        .unwrap()
    }

    #[test]
    fn interpolation() {
        let t = traj();
        assert_eq!(t.position_at(0.5), Point::new(5.0, 0.0));
        assert_eq!(t.position_at(2.0), Point::new(10.0, 10.0));
        assert_eq!(t.position_at(-1.0), Point::new(0.0, 0.0));
        assert_eq!(t.position_at(9.0), Point::new(10.0, 20.0));
    }

    #[test]
    fn rejects_non_increasing_time() {
        let err = Trajectory::new(vec![TrajPoint::new(0.0, 0.0, 0.0), TrajPoint::new(0.0, 1.0, 0.0)]);
        assert!(err.is_err());
        assert!(Trajectory::new(vec![]).is_err());
    }

    #[test]
    fn ping_pong_keeps_speed() {
        let mut t = traj();
        let vmax = t.max_speed();
        t.extend_ping_pong(20.0);
        assert!(t.end_time() >= 20.0);
        assert!(t.max_speed() <= vmax + 1e-12);
        assert_eq!(t.position_at(6.0), Point::new(0.0, 0.0));
        assert!(t.points().windows(2).all(|w| w[1].t > w[0].t));
        let mut s = Trajectory::stationary(1.0, Point::new(2.0, 3.0));
        s.extend_ping_pong(5.0);
        assert_eq!(s.end_time(), 5.0);
    }

    proptest! {
        #[test]
        fn sample_times_return_samples(steps in proptest::collection::vec((0.01f64..5.0, -50.0f64..50.0, -50.0f64..50.0), 1..30)) {
            let mut t = 0.0;
            let pts: Vec<TrajPoint> = steps.iter().map(|(dt, x, y)| { t += dt; TrajPoint::new(t, *x, *y) }).collect();
            let traj = Trajectory::new(pts.clone()).unwrap();
            for p in &pts {
                prop_assert_eq!(traj.position_at(p.t), p.pos());
            }
        }
    }
}
