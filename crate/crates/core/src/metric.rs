//! Carnot–Carathéodory distance by trajectory optimization, metric-ball
//! sampling and Monte-Carlo measure estimation.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point};
use crate::lbfgs;
use crate::region::{CoordBox, MetricKind, Region};
use crate::rng::{shards, stream_rng};

/// Piecewise-constant horizontal control, `segments` blocks of length m₁.
#[derive(Debug, Clone, Serialize)]
pub struct ControlPath {
    controls: Vec<f64>,
    m1: usize,
    duration: f64,
}

impl ControlPath {
    pub fn new(controls: Vec<Vec<f64>>, duration: f64) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::Domain("a control path needs ≥ 1 segment".into()));
        }
        if !(duration > 0.0) {
            return Err(Error::Domain("path duration must be positive".into()));
        }
        let m1 = controls[0].len();
        if controls.iter().any(|u| u.len() != m1) {
            return Err(Error::Domain("all control segments must share a length".into()));
        }
        Ok(Self {
            controls: controls.into_iter().flatten().collect(),
            m1,
            duration,
        })
    }

    fn from_flat(controls: Vec<f64>, m1: usize, duration: f64) -> Self {
        Self {
            controls,
            m1,
            duration,
        }
    }

    pub fn segments(&self) -> usize {
        self.controls.len() / self.m1
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn segment(&self, k: usize) -> &[f64] {
        &self.controls[k * self.m1..(k + 1) * self.m1]
    }

    /// Horizontal length `Σ |u_k| · τ` with `τ` the segment duration.
    pub fn horizontal_length(&self) -> f64 {
        let tau = self.duration / self.segments() as f64;
        (0..self.segments())
            .map(|k| tau * norm(self.segment(k)))
            .sum()
    }
}

/// Move `start` along `path`: a constant horizontal control `u` over time `τ`
/// is the group exponential `(τ·u, 0)`, applied by right multiplication.
/// Exact on step-2 groups.
pub fn endpoint(g: &CarnotGroup, start: &Point, path: &ControlPath) -> Result<Point> {
    if path.m1 != g.m1() {
        return Err(Error::Structure(format!(
            "controls have {} horizontal components, group has m₁ = {}",
            path.m1,
            g.m1()
        )));
    }
    let tau = path.duration / path.segments() as f64;
    let mut x = start.clone();
    let mut step = vec![0.0; g.dim()];
    for k in 0..path.segments() {
        for (i, &u) in path.segment(k).iter().enumerate() {
            step[i] = tau * u;
        }
        x = g.multiply(&x, &Point::new(step.clone()))?;
    }
    Ok(x)
}

/// Options for the CC distance solver.
#[derive(Debug, Clone)]
pub struct CcOptions {
    pub segments: usize,
    /// Inner L-BFGS iterations per penalty stage.
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// d_∞ endpoint residual below which the estimate counts as converged.
    pub endpoint_tol: f64,
}

impl Default for CcOptions {
    fn default() -> Self {
        Self {
            segments: 32,
            iterations: 200,
            restarts: 8,
            seed: 0,
            endpoint_tol: 1e-5,
        }
    }
}

/// Result of a CC distance computation.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceEstimate {
    /// Horizontal length of the best path found (an upper-bound estimate).
    pub value: f64,
    /// First-layer Euclidean displacement; every horizontal path projects to
    /// a first-layer curve of at least this length.
    pub lower_bound: f64,
    pub path: ControlPath,
    pub converged: bool,
    /// d_∞ norm of the endpoint residual of the reported path.
    pub residual: f64,
}

struct Transcription<'a> {
    g: &'a CarnotGroup,
    target: Point,
    segments: usize,
    tau: f64,
}

impl Transcription<'_> {
    /// Value and gradient of `Σ τ|u_k|² + λᵀc + (μ/2)|c|²` where `c` are the
    /// coordinates of `endpoint(u)⁻¹ · target`. Reverse-mode through the
    /// chain of group products.
    fn objective(&self, u: &[f64], lambda: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let g = self.g;
        let n = g.dim();
        let m1 = g.m1();
        let tau = self.tau;

        // forward pass
        let mut states = Vec::with_capacity(self.segments + 1);
        states.push(Point::zeros(n));
        let mut step = vec![0.0; n];
        for k in 0..self.segments {
            for i in 0..m1 {
                step[i] = tau * u[k * m1 + i];
            }
            let next = g.mul_unchecked(states.last().unwrap(), &Point::new(step.clone()));
            states.push(next);
        }
        let end = states.last().unwrap();
        let neg_end = Point::new(end.coords().iter().map(|c| -c).collect());
        let c = g.mul_unchecked(&neg_end, &self.target);

        let mut energy = 0.0;
        for k in 0..self.segments {
            let uk = &u[k * m1..(k + 1) * m1];
            energy += tau * uk.iter().map(|v| v * v).sum::<f64>();
        }
        let mut value = energy;
        let mut w = vec![0.0; n];
        for i in 0..n {
            value += lambda[i] * c.coords()[i] + 0.5 * mu * c.coords()[i] * c.coords()[i];
            w[i] = lambda[i] + mu * c.coords()[i];
        }

        // adjoint of c = (−end)·target w.r.t. end:
        // ∂c/∂a = −∂(a·b)/∂a at a = −end, b = target
        let mut adj = self.pullback_left(&self.target, &w);
        adj.iter_mut().for_each(|a| *a = -*a);

        // march the adjoint back through the product chain
        for k in (0..self.segments).rev() {
            for i in 0..m1 {
                step[i] = tau * u[k * m1 + i];
            }
            let adj_u = self.pullback_right(&states[k], &adj);
            for i in 0..m1 {
                grad[k * m1 + i] = 2.0 * tau * u[k * m1 + i] + tau * adj_u[i];
            }
            adj = self.pullback_left(&Point::new(step.clone()), &adj);
        }
        value
    }

    /// `(∂(a·b)/∂a)ᵀ w`; the second-layer correction ½[a¹,b¹] makes this
    /// depend on `b` only.
    fn pullback_left(&self, b: &Point, w: &[f64]) -> Vec<f64> {
        let g = self.g;
        let m1 = g.m1();
        let mut out = w.to_vec();
        if g.step() == 2 {
            for i in 0..m1 {
                let mut acc = 0.0;
                for k in 0..g.m2() {
                    let wk = w[m1 + k];
                    if wk == 0.0 {
                        continue;
                    }
                    let mut row = 0.0;
                    for j in 0..m1 {
                        row += g.bracket_coeff(k, i, j) * b.coords()[j];
                    }
                    acc += wk * 0.5 * row;
                }
                out[i] += acc;
            }
        }
        out
    }

    /// `(∂(a·b)/∂b)ᵀ w`; depends on `a` only.
    fn pullback_right(&self, a: &Point, w: &[f64]) -> Vec<f64> {
        let g = self.g;
        let m1 = g.m1();
        let mut out = w.to_vec();
        if g.step() == 2 {
            for j in 0..m1 {
                let mut acc = 0.0;
                for k in 0..g.m2() {
                    let wk = w[m1 + k];
                    if wk == 0.0 {
                        continue;
                    }
                    let mut col = 0.0;
                    for i in 0..m1 {
                        col += a.coords()[i] * g.bracket_coeff(k, i, j);
                    }
                    acc += wk * 0.5 * col;
                }
                out[j] += acc;
            }
        }
        out
    }
}

/// CC distance between `p` and `q` by penalty-augmented direct transcription
/// with multi-start.
///
/// The path is optimized in displacement coordinates (from the identity to
/// `p⁻¹·q`), so left-invariance of the reported distance holds by
/// construction. Energy `Σ τ|u|²` is minimized under an augmented-Lagrangian
/// endpoint constraint with penalty continuation μ ∈ {10, 10², 10³}; the
/// reported value is the horizontal length of the best found path.
pub fn cc_distance(g: &CarnotGroup, p: &Point, q: &Point, opts: &CcOptions) -> Result<DistanceEstimate> {
    let target = g.displacement(p, q)?;
    let n = g.dim();
    let m1 = g.m1();
    let segments = opts.segments.max(1);
    let lower_bound = g.horizontal_norm(&target);

    let scale = g.dinf_norm(&target);
    if scale == 0.0 {
        let path = ControlPath::from_flat(vec![0.0; segments * m1], m1, 1.0);
        return Ok(DistanceEstimate {
            value: 0.0,
            lower_bound,
            path,
            converged: true,
            residual: 0.0,
        });
    }

    let tr = Transcription {
        g,
        target: target.clone(),
        segments,
        tau: 1.0 / segments as f64,
    };

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut u = vec![0.0; segments * m1];
        // first restart aims straight at the horizontal displacement, the
        // rest explore winding paths
        for k in 0..segments {
            for i in 0..m1 {
                u[k * m1 + i] = target.coords()[i];
            }
        }
        if restart > 0 {
            let mut rng = stream_rng(opts.seed, restart as u64);
            let sigma = 2.0 * scale + lower_bound;
            for v in u.iter_mut() {
                *v += sigma * gaussian(&mut rng);
            }
        }

        let mut lambda = vec![0.0; n];
        for &mu in &[10.0, 100.0, 1000.0, 1000.0, 1000.0] {
            let res = lbfgs::minimize(
                |x, grad| tr.objective(x, &lambda, mu, grad),
                &u,
                opts.iterations,
                1e-10 * (1.0 + scale),
            );
            u = res.x;
            // multiplier update with the current residual
            let path = ControlPath::from_flat(u.clone(), m1, 1.0);
            let end = endpoint(g, &g.identity(), &path)?;
            let c = g.displacement(&end, &target)?;
            for i in 0..n {
                lambda[i] += mu * c.coords()[i];
            }
        }

        let path = ControlPath::from_flat(u.clone(), m1, 1.0);
        let end = endpoint(g, &g.identity(), &path)?;
        let residual = g.dinf_distance(&end, &target)?;
        let length = path.horizontal_length();
        let score = length + 10.0 * residual;
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, u, residual));
        }
    }

    let (_, u, residual) = best.unwrap();
    let path = ControlPath::from_flat(u, m1, 1.0);
    let value = path.horizontal_length().max(lower_bound);
    Ok(DistanceEstimate {
        value,
        lower_bound,
        converged: residual <= opts.endpoint_tol * (1.0 + scale),
        residual,
        path,
    })
}

fn gaussian(rng: &mut impl rand::Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Monte-Carlo Lebesgue measure estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasureEstimate {
    pub value: f64,
    /// Binomial standard error of the hit fraction times the box volume.
    pub stderr: f64,
    pub samples: usize,
}

/// Estimate the Lebesgue measure of `{indicator} ∩ bounds`.
///
/// Sharded ChaCha streams keyed by `(seed, shard)` and a fixed reduction
/// order make the estimate identical for any worker count.
pub fn mc_measure<F>(indicator: F, bounds: &CoordBox, n: usize, seed: u64) -> MeasureEstimate
where
    F: Fn(&Point) -> bool + Sync,
{
    let piece_hits: Vec<u64> = shards(n)
        .par_iter()
        .map(|&(idx, len)| {
            let mut rng = stream_rng(seed, idx);
            let mut hits = 0u64;
            for _ in 0..len {
                let coords: Vec<f64> = bounds
                    .lo
                    .iter()
                    .zip(&bounds.hi)
                    .map(|(&a, &b)| rng.random_range(a..b))
                    .collect();
                if indicator(&Point::new(coords)) {
                    hits += 1;
                }
            }
            hits
        })
        .collect();
    let hits: u64 = piece_hits.iter().sum();
    let vol = bounds.volume();
    let frac = hits as f64 / n as f64;
    MeasureEstimate {
        value: vol * frac,
        stderr: vol * (frac * (1.0 - frac) / n as f64).sqrt(),
        samples: n,
    }
}

/// Draw `n` points with `d(center, ·) < r`.
///
/// `Dinf` rejects from the exact coordinate box of the centered ball and
/// left-translates, so membership is exact. `Cc` accepts a candidate when the
/// optimizer's upper bound is below `r`: accepted points are certainly
/// inside, and points near the boundary may be missed, biasing enclosed
/// volume low.
pub fn sample_ball(
    g: &CarnotGroup,
    center: &Point,
    r: f64,
    metric: MetricKind,
    n: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    if !(r > 0.0) {
        return Err(Error::Domain("ball radius must be positive".into()));
    }
    let bounds = match metric {
        MetricKind::Dinf => Region::ball(g.identity(), r, MetricKind::Dinf).bounding_box(g)?,
        MetricKind::Cc => {
            // a horizontal curve of length r has |p¹| ≤ r and second-layer
            // drift ≤ ½‖B‖r²
            let mut lo = vec![-r; g.dim()];
            let mut hi = vec![r; g.dim()];
            let drift = 0.5 * g.bracket_bound() * r * r;
            for j in g.strat().layer_range(1.min(g.step() - 1)) {
                if g.step() == 2 {
                    lo[j] = -drift;
                    hi[j] = drift;
                }
            }
            CoordBox::new(lo, hi)?
        }
    };
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let min_rate = 1e-4;
    while out.len() < n {
        attempts += 1;
        let p = bounds.sample(g, &mut rng);
        let inside = match metric {
            MetricKind::Dinf => g.dinf_norm(&p) < r,
            MetricKind::Cc => {
                let est = cc_distance(g, &g.identity(), &p, &CcOptions {
                    restarts: 3,
                    segments: 16,
                    ..CcOptions::default()
                })?;
                est.converged && est.value <= r
            }
        };
        if inside {
            out.push(g.multiply(center, &p)?);
        }
        if attempts >= 10_000 && (out.len() as f64 / attempts as f64) < min_rate {
            return Err(Error::Sampling {
                rate: out.len() as f64 / attempts as f64,
                min_rate,
                context: format!("ball of radius {r} in metric {metric}"),
            });
        }
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
