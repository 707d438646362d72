//! Coordinate boxes and sampling regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point};

/// Axis-aligned coordinate box `Π [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoordBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Domain("box bounds have mismatched lengths".into()));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !a.is_finite() || !b.is_finite() || a > b)
        {
            return Err(Error::Domain(
                "box bounds must be finite with lo ≤ hi in every coordinate".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// Cube `[-r, r]^n`.
    pub fn centered_cube(n: usize, r: f64) -> Self {
        Self {
            lo: vec![-r; n],
            hi: vec![r; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.coords()
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (a, b))| c >= a && c <= b)
    }

    pub fn sample(&self, g: &CarnotGroup, rng: &mut impl rand::Rng) -> Point {
        g.sample_box(&self.lo, &self.hi, rng)
    }
}

/// Metric used when a region or family is defined through balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Explicit homogeneous distance d_∞ (exact membership tests).
    Dinf,
    /// Carnot–Carathéodory distance estimated by trajectory optimization.
    Cc,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Dinf => write!(f, "dinf"),
            MetricKind::Cc => write!(f, "cc"),
        }
    }
}

/// Region of a group over which fields are sampled and measures estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Box(CoordBox),
    /// Metric ball; membership is exact for `Dinf`.
    Ball {
        center: Point,
        radius: f64,
        metric: MetricKind,
    },
}

impl Region {
    pub fn ball(center: Point, radius: f64, metric: MetricKind) -> Self {
        Region::Ball {
            center,
            radius,
            metric,
        }
    }

    /// Coordinate box certain to contain the region.
    ///
    /// For a d_∞ ball around `c` the extent of layer i is `(r/εᵢ)^i` plus, in
    /// the second layer, the drift `½|[c¹, p¹]| ≤ ½·‖B‖·|c¹|·r` of the group
    /// translation.
    pub fn bounding_box(&self, g: &CarnotGroup) -> Result<CoordBox> {
        match self {
            Region::Box(b) => Ok(b.clone()),
            Region::Ball {
                center,
                radius,
                metric: _,
            } => {
                let strat = g.strat();
                let mut lo = center.coords().to_vec();
                let mut hi = center.coords().to_vec();
                let c1_norm = g.horizontal_norm(center);
                for (i, _) in strat.layer_dims().iter().enumerate() {
                    let mut extent = (radius / g.eps()[i]).powi(i as i32 + 1);
                    if i == 1 {
                        extent += 0.5 * g.bracket_bound() * c1_norm * (radius / g.eps()[0]);
                    }
                    for j in strat.layer_range(i) {
                        lo[j] -= extent;
                        hi[j] += extent;
                    }
                }
                CoordBox::new(lo, hi)
            }
        }
    }

    /// Exact coordinate volume, when one is available without Monte-Carlo.
    pub fn volume(&self, g: &CarnotGroup) -> Option<f64> {
        match self {
            Region::Box(b) => Some(b.volume()),
            Region::Ball {
                radius,
                metric: MetricKind::Dinf,
                ..
            } => Some(g.dinf_ball_volume(*radius)),
            Region::Ball { .. } => None,
        }
    }

    /// Exact membership test (d_∞ balls and boxes only).
    pub fn contains(&self, g: &CarnotGroup, p: &Point) -> Result<bool> {
        match self {
            Region::Box(b) => Ok(b.contains(p)),
            Region::Ball {
                center,
                radius,
                metric: MetricKind::Dinf,
            } => Ok(g.dinf_distance(center, p)? < *radius),
            Region::Ball { .. } => Err(Error::Unsupported(
                "membership in a CC ball needs a distance estimate, not an exact test".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_validation() {
        assert!(CoordBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(CoordBox::new(vec![0.0, f64::INFINITY], vec![1.0, 2.0]).is_err());
        assert!(CoordBox::new(vec![3.0], vec![1.0]).is_err());
        let b = CoordBox::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(b.volume(), 4.0);
    }

    #[test]
    fn ball_bounding_box_contains_ball() {
        let g = CarnotGroup::heisenberg1();
        let region = Region::ball(Point::new(vec![1.0, 2.0, 0.5]), 0.7, MetricKind::Dinf);
        let bb = region.bounding_box(&g).unwrap();
        let mut rng = crate::rng::stream_rng(3, 0);
        let mut inside = 0;
        for _ in 0..2000 {
            let p = bb.sample(&g, &mut rng);
            if region.contains(&g, &p).unwrap() {
                inside += 1;
                assert!(bb.contains(&p));
            }
        }
        assert!(inside > 0);
    }
}
