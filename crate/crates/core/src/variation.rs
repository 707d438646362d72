//! Q-variation lower bounds, Q-absolute-continuity moduli and the (RR)
//! weight condition, all through greedy families of disjoint metric balls.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point};
use crate::maps::MapSpec;
use crate::metric::sample_ball;
use crate::region::{CoordBox, MetricKind, Region};

/// Disjoint family of metric balls with their sampled oscillations.
#[derive(Debug, Clone, Serialize)]
pub struct BallFamily {
    pub centers: Vec<Point>,
    pub radii: Vec<f64>,
    pub metric: MetricKind,
    /// Sampled oscillation of the map over each ball (a lower estimate of
    /// the true sup, from `osc_samples` image points).
    pub oscillations: Vec<f64>,
    pub osc_samples: usize,
}

impl BallFamily {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Exact pairwise disjointness: `d(cᵢ, cⱼ) > rᵢ + rⱼ`.
    pub fn verify_disjoint(&self, g: &CarnotGroup) -> Result<bool> {
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d = match self.metric {
                    MetricKind::Dinf => g.dinf_distance(&self.centers[i], &self.centers[j])?,
                    MetricKind::Cc => {
                        return Err(Error::Unsupported(
                            "disjointness certification uses d_∞ families".into(),
                        ))
                    }
                };
                if d <= self.radii[i] + self.radii[j] {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Total coordinate measure `Σ |Uᵢ|` (exact for d_∞ balls).
    pub fn total_measure(&self, g: &CarnotGroup) -> f64 {
        self.radii.iter().map(|&r| g.dinf_ball_volume(r)).sum()
    }

    pub fn sum_osc_pow(&self, q: f64) -> f64 {
        self.oscillations.iter().map(|o| o.powf(q)).sum()
    }

    pub fn sum_radius_pow(&self, q: f64) -> f64 {
        self.radii.iter().map(|r| r.powf(q)).sum()
    }
}

/// Search budget for the greedy family construction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VariationBudget {
    pub candidate_balls: usize,
    pub osc_samples: usize,
}

impl Default for VariationBudget {
    fn default() -> Self {
        Self {
            candidate_balls: 4000,
            osc_samples: 128,
        }
    }
}

struct Candidate {
    center: Point,
    radius: f64,
    osc: f64,
}

/// Sampled oscillation: max pairwise target distance among image points of a
/// `d_∞` ball sample.
fn sampled_oscillation(
    f: &MapSpec,
    center: &Point,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let pts = sample_ball(f.source(), center, radius, MetricKind::Dinf, samples, seed)?;
    let images: Vec<Point> = pts.iter().map(|p| f.apply(p)).collect();
    let g2 = f.target();
    let mut worst: f64 = 0.0;
    for i in 0..images.len() {
        for j in (i + 1)..images.len() {
            worst = worst.max(g2.dinf_distance(&images[i], &images[j])?);
        }
    }
    Ok(worst)
}

fn generate_candidates(
    f: &MapSpec,
    domain: &CoordBox,
    budget: &VariationBudget,
    seed: u64,
) -> Result<Vec<Candidate>> {
    let g = f.source();
    if domain.dim() != g.dim() {
        return Err(Error::Domain("domain box does not match the source group".into()));
    }
    let span = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(a, b)| b - a)
        .fold(f64::INFINITY, f64::min);
    let r_max = span / 4.0;
    let r_min = (span / 200.0).min(r_max / 2.0);
    let mut rng = crate::rng::stream_rng(seed, 0);
    let mut out = Vec::with_capacity(budget.candidate_balls);
    let mut tries = 0usize;
    use rand::Rng;
    while out.len() < budget.candidate_balls && tries < budget.candidate_balls * 20 {
        tries += 1;
        let center = domain.sample(g, &mut rng);
        let u: f64 = rng.random_range(0.0..1.0);
        let radius = r_min * (r_max / r_min).powf(u);
        // the ball must sit inside the domain
        let bb = Region::ball(center.clone(), radius, MetricKind::Dinf).bounding_box(g)?;
        let inside = bb
            .lo
            .iter()
            .zip(&bb.hi)
            .zip(domain.lo.iter().zip(&domain.hi))
            .all(|((blo, bhi), (dlo, dhi))| blo >= dlo && bhi <= dhi);
        if !inside {
            continue;
        }
        let osc = sampled_oscillation(f, &center, radius, budget.osc_samples, seed ^ (out.len() as u64 + 1))?;
        out.push(Candidate {
            center,
            radius,
            osc,
        });
    }
    Ok(out)
}

fn greedy_family(
    g: &CarnotGroup,
    candidates: &[Candidate],
    q: f64,
    order: &[usize],
    measure_cap: Option<f64>,
    taken: &mut Vec<usize>,
    used_measure: &mut f64,
) -> Result<()> {
    let _ = q;
    'cand: for &idx in order {
        if taken.contains(&idx) {
            continue;
        }
        let c = &candidates[idx];
        if let Some(cap) = measure_cap {
            if *used_measure + g.dinf_ball_volume(c.radius) >= cap {
                continue;
            }
        }
        for &t in taken.iter() {
            let other = &candidates[t];
            let d = g.dinf_distance(&c.center, &other.center)?;
            if d <= c.radius + other.radius {
                continue 'cand;
            }
        }
        *used_measure += g.dinf_ball_volume(c.radius);
        taken.push(idx);
    }
    Ok(())
}

/// Greedy lower estimate of the Q-variation `sup Σ (osc_{Uᵢ} f)^Q` over
/// disjoint ball families in a domain box.
#[derive(Debug, Clone, Serialize)]
pub struct QVariationEstimate {
    pub estimate: f64,
    pub family: BallFamily,
}

/// Candidate balls (random centers, log-uniform radii) are ranked by
/// sampled oscillation and selected greedily under exact disjointness; the
/// result is a certified-disjoint family whose oscillation sum is a lower
/// bound estimate (the oscillations themselves are sampled).
pub fn q_variation_lower(
    f: &MapSpec,
    domain: &CoordBox,
    q: f64,
    budget: &VariationBudget,
    seed: u64,
) -> Result<QVariationEstimate> {
    let g = f.source();
    let candidates = generate_candidates(f, domain, budget, seed)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .osc
            .powf(q)
            .partial_cmp(&candidates[a].osc.powf(q))
            .expect("finite oscillations")
    });
    let mut taken = Vec::new();
    let mut used = 0.0;
    greedy_family(g, &candidates, q, &order, None, &mut taken, &mut used)?;
    let family = BallFamily {
        centers: taken.iter().map(|&i| candidates[i].center.clone()).collect(),
        radii: taken.iter().map(|&i| candidates[i].radius).collect(),
        metric: MetricKind::Dinf,
        oscillations: taken.iter().map(|&i| candidates[i].osc).collect(),
        osc_samples: budget.osc_samples,
    };
    Ok(QVariationEstimate {
        estimate: family.sum_osc_pow(q),
        family,
    })
}

/// One point of the Q-absolute-continuity modulus curve.
#[derive(Debug, Clone, Serialize)]
pub struct ModulusPoint {
    pub delta: f64,
    pub epsilon: f64,
    pub balls: usize,
}

/// Empirical modulus `ε(δ) = max Σ osc^Q` over sampled disjoint families with
/// `Σ|Uᵢ| < δ`.
///
/// The accepted family grows monotonically as δ sweeps upward, so the curve
/// is nondecreasing by construction.
pub fn qac_modulus(
    f: &MapSpec,
    domain: &CoordBox,
    q: f64,
    delta_grid: &[f64],
    budget: &VariationBudget,
    seed: u64,
) -> Result<Vec<ModulusPoint>> {
    if delta_grid.is_empty() || delta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("delta grid must be increasing".into()));
    }
    if delta_grid.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Domain("deltas must be positive".into()));
    }
    let g = f.source();
    let candidates = generate_candidates(f, domain, budget, seed)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .osc
            .powf(q)
            .partial_cmp(&candidates[a].osc.powf(q))
            .expect("finite oscillations")
    });

    let mut taken: Vec<usize> = Vec::new();
    let mut used = 0.0;
    let mut curve = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        greedy_family(g, &candidates, q, &order, Some(delta), &mut taken, &mut used)?;
        let eps: f64 = taken.iter().map(|&i| candidates[i].osc.powf(q)).sum();
        curve.push(ModulusPoint {
            delta,
            epsilon: eps,
            balls: taken.len(),
        });
    }
    Ok(curve)
}

/// Per-ball outcome of the (RR) weight condition
/// `osc_{U_r(x)}(f)^Q ≤ ∫_{U_r(x)} w`.
#[derive(Debug, Clone, Serialize)]
pub struct RrBallRecord {
    pub center: Vec<f64>,
    pub radius: f64,
    pub osc_pow_q: f64,
    pub weight_integral: f64,
    pub weight_stderr: f64,
    pub pass: bool,
}

/// Monte-Carlo both sides of (RR) on a given family: the weight integral by
/// uniform ball sampling, the oscillation by image-diameter sampling; a ball
/// passes when `osc^Q ≤ ∫w + 3·stderr`.
pub fn rr_check<W>(
    f: &MapSpec,
    weight: W,
    balls: &BallFamily,
    osc_samples: usize,
    seed: u64,
) -> Result<Vec<RrBallRecord>>
where
    W: Fn(&Point) -> f64,
{
    let g = f.source();
    let q = g.hom_dim() as f64;
    let mut out = Vec::with_capacity(balls.len());
    for i in 0..balls.len() {
        let center = &balls.centers[i];
        let radius = balls.radii[i];
        let osc = sampled_oscillation(f, center, radius, osc_samples, seed ^ (i as u64) << 8)?;
        let vol = g.dinf_ball_volume(radius);
        let pts = sample_ball(g, center, radius, MetricKind::Dinf, osc_samples.max(256), seed ^ 0x5151 ^ (i as u64))?;
        let vals: Vec<f64> = pts.iter().map(|p| weight(p)).collect();
        if vals.iter().any(|v| *v < 0.0) {
            return Err(Error::Domain("(RR) weights must be nonnegative".into()));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let integral = vol * mean;
        let stderr = vol * (var / vals.len() as f64).sqrt();
        let osc_pow_q = osc.powf(q);
        out.push(RrBallRecord {
            center: center.coords().to_vec(),
            radius,
            osc_pow_q,
            weight_integral: integral,
            weight_stderr: stderr,
            pass: osc_pow_q <= integral + 3.0 * stderr,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_has_zero_variation() {
        let g = CarnotGroup::heisenberg1();
        let f = MapSpec::constant(&g, &g, g.identity());
        let domain = CoordBox::centered_cube(3, 1.0);
        let budget = VariationBudget {
            candidate_balls: 100,
            osc_samples: 16,
        };
        let est = q_variation_lower(&f, &domain, 4.0, &budget, 1).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert!(est.family.verify_disjoint(&g).unwrap());
    }

    #[test]
    fn abelian_identity_on_unit_interval() {
        let g = CarnotGroup::abelian(1);
        let f = MapSpec::identity(&g);
        let domain = CoordBox::new(vec![0.0], vec![1.0]).unwrap();
        let est = q_variation_lower(&f, &domain, 1.0, &VariationBudget::default(), 2).unwrap();
        assert!(est.family.verify_disjoint(&g).unwrap());
        // oscillation of an interval is its length and disjoint intervals in
        // (0,1) total below 1
        assert!(est.estimate <= 1.0 + 1e-9, "estimate {}", est.estimate);
        assert!(est.estimate >= 0.95, "estimate {}", est.estimate);
    }

    #[test]
    fn lipschitz_family_bound_is_exact() {
        let g = CarnotGroup::heisenberg1();
        let q = g.hom_dim() as f64;
        let f = MapSpec::dilation(&g, 2.0).unwrap(); // 2-Lipschitz in d_∞
        let domain = CoordBox::centered_cube(3, 1.0);
        let budget = VariationBudget {
            candidate_balls: 300,
            osc_samples: 32,
        };
        let est = q_variation_lower(&f, &domain, q, &budget, 3).unwrap();
        let lip = 2.0;
        let bound = (2.0 * lip).powf(q) * est.family.sum_radius_pow(q);
        assert!(est.estimate <= bound, "{} vs {}", est.estimate, bound);
    }

    #[test]
    fn modulus_curve_is_monotone() {
        let g = CarnotGroup::heisenberg1();
        let f = MapSpec::identity(&g);
        let domain = CoordBox::centered_cube(3, 1.0);
        let budget = VariationBudget {
            candidate_balls: 400,
            osc_samples: 24,
        };
        let deltas = [0.01, 0.05, 0.2, 1.0, 5.0];
        let curve = qac_modulus(&f, &domain, 4.0, &deltas, &budget, 5).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].epsilon >= w[0].epsilon);
        }
        // constant maps give the zero curve
        let c = MapSpec::constant(&g, &g, g.identity());
        let curve = qac_modulus(&c, &domain, 4.0, &deltas, &budget, 5).unwrap();
        assert!(curve.iter().all(|p| p.epsilon == 0.0));
    }

    #[test]
    fn lipschitz_modulus_linear_bound() {
        // ε(δ) ≤ L₁·δ with L₁ = (2L)^Q / |U(0,1)|
        let g = CarnotGroup::heisenberg1();
        let q = g.hom_dim() as f64;
        let lip = 2.0;
        let f = MapSpec::dilation(&g, lip).unwrap();
        let domain = CoordBox::centered_cube(3, 1.0);
        let budget = VariationBudget {
            candidate_balls: 300,
            osc_samples: 24,
        };
        let deltas = [0.05, 0.2, 0.8];
        let curve = qac_modulus(&f, &domain, q, &deltas, &budget, 7).unwrap();
        let l1 = (2.0 * lip).powf(q) / g.dinf_ball_volume(1.0);
        for p in &curve {
            assert!(
                p.epsilon <= l1 * p.delta + 1e-12,
                "ε({}) = {} exceeds {}",
                p.delta,
                p.epsilon,
                l1 * p.delta
            );
        }
    }

    #[test]
    fn rr_check_outcomes() {
        let g = CarnotGroup::heisenberg1();
        let q = g.hom_dim() as f64;
        let domain = CoordBox::centered_cube(3, 1.0);
        let budget = VariationBudget {
            candidate_balls: 60,
            osc_samples: 24,
        };
        let lip = 1.0;
        let f = MapSpec::identity(&g);
        let est = q_variation_lower(&f, &domain, q, &budget, 9).unwrap();
        assert!(!est.family.is_empty());

        // constant weight sized from the Lipschitz computation:
        // ∫_{U_r} w = (2L)^Q r^Q when w ≡ (2L)^Q / |U(0,1)|
        let w0 = (2.0 * lip).powf(q) / g.dinf_ball_volume(1.0);
        let recs = rr_check(&f, |_| w0, &est.family, 32, 11).unwrap();
        assert!(recs.iter().all(|r| r.pass), "{recs:?}");

        // zero weight with a nonconstant map fails
        let recs = rr_check(&f, |_| 0.0, &est.family, 32, 13).unwrap();
        assert!(recs.iter().any(|r| !r.pass));

        // constant map passes any nonnegative weight
        let c = MapSpec::constant(&g, &g, g.identity());
        let recs = rr_check(&c, |_| 0.0, &est.family, 32, 15).unwrap();
        assert!(recs.iter().all(|r| r.pass));
    }
}
