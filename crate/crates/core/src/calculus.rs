//! Discrete horizontal differentiation, Pansu difference quotients and
//! differential estimation, pointwise Lipschitz constants and group mollifier
//! convolution.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point};
use crate::maps::MapSpec;
use crate::metric::sample_ball;
use crate::region::{CoordBox, MetricKind};

/// Point reached by flowing from `x` along `Xᵢ` for time `h`: `x·(h eᵢ)`.
fn horizontal_flow(g: &CarnotGroup, x: &Point, i: usize, h: f64) -> Result<Point> {
    let mut step = vec![0.0; g.dim()];
    step[i] = h;
    g.multiply(x, &Point::new(step))
}

/// Difference quotient `D^h_i f(x) = (f(x·(h eᵢ)) − f(x)) / h`.
pub fn difference_quotient<F>(g: &CarnotGroup, f: F, x: &Point, i: usize, h: f64) -> Result<f64>
where
    F: Fn(&Point) -> f64,
{
    if i >= g.m1() {
        return Err(Error::Domain(format!(
            "direction {i} is not horizontal (m₁ = {})",
            g.m1()
        )));
    }
    if h == 0.0 {
        return Err(Error::Domain("difference quotient needs h ≠ 0".into()));
    }
    let shifted = horizontal_flow(g, x, i, h)?;
    Ok((f(&shifted) - f(x)) / h)
}

/// Central-difference horizontal gradient
/// `(f(x·(h eᵢ)) − f(x·(−h eᵢ))) / 2h` per horizontal direction; second-order
/// accurate for smooth `f`.
pub fn horizontal_gradient<F>(g: &CarnotGroup, f: F, x: &Point, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&Point) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Domain("gradient step must be positive".into()));
    }
    let mut out = Vec::with_capacity(g.m1());
    for i in 0..g.m1() {
        let fwd = f(&horizontal_flow(g, x, i, h)?);
        let bwd = f(&horizontal_flow(g, x, i, -h)?);
        out.push((fwd - bwd) / (2.0 * h));
    }
    Ok(out)
}

/// Pansu difference quotient `δ²_{1/t}( f(x)⁻¹ · f(x·δ¹_t v) )`.
pub fn pansu_quotient(f: &MapSpec, x: &Point, v: &Point, t: f64) -> Result<Point> {
    if !(t > 0.0) {
        return Err(Error::Domain("Pansu quotient needs t > 0".into()));
    }
    let g1 = f.source();
    let g2 = f.target();
    let moved = g1.multiply(x, &g1.dilate(t, v)?)?;
    let diff = g2.displacement(&f.apply(x), &f.apply(&moved))?;
    g2.dilate(1.0 / t, &diff)
}

/// Estimated horizontal block of a Pansu differential.
#[derive(Debug, Clone, Serialize)]
pub struct PansuEstimate {
    /// m₁(target) × m₁(source) block, taken at the last schedule entry.
    #[serde(skip)]
    pub horizontal_matrix: DMatrix<f64>,
    pub t_schedule: Vec<f64>,
    /// Max-abs change of the block between consecutive schedule entries.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

const PANSU_REL_TOL: f64 = 1e-4;

/// Track the first-layer Pansu quotients along a decreasing `t` schedule.
///
/// Only horizontal directions are probed; higher-layer blocks of a
/// differential are determined by the horizontal block (graded extension),
/// not estimated. Divergent residuals yield `converged = false` rather than
/// an error.
pub fn estimate_pansu_differential(f: &MapSpec, x: &Point, schedule: &[f64]) -> Result<PansuEstimate> {
    if schedule.len() < 3 {
        return Err(Error::Domain("schedule needs at least 3 entries".into()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) || schedule.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Domain("schedule must be positive and strictly decreasing".into()));
    }
    let m1s = f.source().m1();
    let m1t = f.target().m1();
    let n = f.source().dim();

    let mut residuals = Vec::with_capacity(schedule.len() - 1);
    let mut prev: Option<DMatrix<f64>> = None;
    let mut last = DMatrix::zeros(m1t, m1s);
    let mut finite = true;
    for &t in schedule {
        let mut m = DMatrix::zeros(m1t, m1s);
        for i in 0..m1s {
            let q = pansu_quotient(f, x, &Point::basis(n, i), t)?;
            if !q.is_finite() {
                finite = false;
            }
            for r in 0..m1t {
                m[(r, i)] = q.coords()[r];
            }
        }
        if let Some(p) = &prev {
            residuals.push((&m - p).amax());
        }
        prev = Some(m.clone());
        last = m;
    }
    let scale = 1.0 + last.amax();
    let k = residuals.len();
    let converged = finite
        && k >= 2
        && residuals[k - 1] <= PANSU_REL_TOL * scale
        && residuals[k - 2] <= PANSU_REL_TOL * scale;
    Ok(PansuEstimate {
        horizontal_matrix: last,
        t_schedule: schedule.to_vec(),
        residuals,
        converged,
    })
}

/// Dyadic schedule `t = 2^{−k}` for `k = lo..=hi`.
pub fn dyadic_schedule(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|k| 0.5f64.powi(k as i32)).collect()
}

/// Sampled lower estimate of the pointwise Lipschitz constant
/// `limsup_{q→x} d₂(f(q), f(x)) / d₁(q, x)`, with the per-radius trend.
#[derive(Debug, Clone, Serialize)]
pub struct LipEstimate {
    /// Max sampled ratio in the smallest-radius ball.
    pub estimate: f64,
    /// Max sampled ratio per radius, in the order given.
    pub per_radius: Vec<f64>,
}

/// Sample `d₂/d₁` ratios in shrinking `d_∞` balls around `x`.
pub fn pointwise_lip(
    f: &MapSpec,
    x: &Point,
    radii: &[f64],
    samples_per_radius: usize,
    seed: u64,
) -> Result<LipEstimate> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Domain("radii must be positive and decreasing".into()));
    }
    let g1 = f.source();
    let g2 = f.target();
    let fx = f.apply(x);
    let mut per_radius = Vec::with_capacity(radii.len());
    for (j, &r) in radii.iter().enumerate() {
        let pts = sample_ball(g1, x, r, MetricKind::Dinf, samples_per_radius, seed.wrapping_add(j as u64))?;
        let mut worst: f64 = 0.0;
        for q in &pts {
            let d1 = g1.dinf_distance(x, q)?;
            if d1 == 0.0 {
                continue;
            }
            let d2 = g2.dinf_distance(&fx, &f.apply(q))?;
            worst = worst.max(d2 / d1);
        }
        per_radius.push(worst);
    }
    Ok(LipEstimate {
        estimate: *per_radius.last().unwrap(),
        per_radius,
    })
}

/// Uniform cell-centered grid over a coordinate box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub bounds: CoordBox,
    pub spacing: f64,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: CoordBox, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::Domain("grid spacing must be positive".into()));
        }
        let counts: Vec<usize> = bounds
            .lo
            .iter()
            .zip(&bounds.hi)
            .map(|(&a, &b)| ((b - a) / spacing + 1e-9).floor() as usize)
            .collect();
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Domain("grid has an empty axis; enlarge the box".into()));
        }
        Ok(Self {
            bounds,
            spacing,
            counts,
        })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node of flat index, row-major with the last axis fastest.
    pub fn node(&self, flat: usize) -> Point {
        let mut out = vec![0.0; self.counts.len()];
        let mut rem = flat;
        for d in (0..self.counts.len()).rev() {
            let i = rem % self.counts[d];
            rem /= self.counts[d];
            out[d] = self.bounds.lo[d] + (i as f64 + 0.5) * self.spacing;
        }
        Point::new(out)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    /// Quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.counts.len() as i32)
    }

    /// Nodes at least `margin` inside the box boundary.
    pub fn interior_indices(&self, margin: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let p = self.node(i);
                p.coords()
                    .iter()
                    .zip(self.bounds.lo.iter().zip(&self.bounds.hi))
                    .all(|(c, (a, b))| c - a >= margin && b - c >= margin)
            })
            .collect()
    }
}

/// Scalar values on the nodes of a [`GridSpec`].
#[derive(Debug, Clone, Serialize)]
pub struct GriddedField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Smooth even bump supported in the unit `d_∞` ball.
#[derive(Clone)]
pub struct Mollifier {
    eval: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
}

impl Mollifier {
    /// `exp(−1/(1−|x|²))` inside the Euclidean unit ball, which is contained
    /// in the unit `d_∞` ball whenever all εᵢ ≤ 1.
    pub fn standard() -> Self {
        Self {
            eval: Arc::new(|p| {
                let s: f64 = p.coords().iter().map(|c| c * c).sum();
                if s >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - s)).exp()
                }
            }),
        }
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(f) }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        (self.eval)(p)
    }
}

fn convolve_quadrature(
    g: &CarnotGroup,
    nodes: &[Point],
    values_f: &[f64],
    epsilon: f64,
    x: &Point,
    kernel: &Mollifier,
    fallback: f64,
) -> f64 {
    let scale = epsilon.powi(-(g.hom_dim() as i32));
    let mut num = 0.0;
    let mut den = 0.0;
    for (iy, y) in nodes.iter().enumerate() {
        // support test: ‖δ_{1/ε}(x·y⁻¹)‖ ≤ 1 forces |x¹−y¹| ≤ ε
        let mut first_layer_far = false;
        for i in 0..g.m1() {
            if (x.coords()[i] - y.coords()[i]).abs() > epsilon {
                first_layer_far = true;
                break;
            }
        }
        if first_layer_far {
            continue;
        }
        let diff = g.mul_unchecked(x, &g.inverse(y).expect("validated"));
        let arg = g.dilate(1.0 / epsilon, &diff).expect("epsilon > 0");
        let w = scale * kernel.eval(&arg);
        if w > 0.0 {
            num += w * values_f[iy];
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        fallback
    }
}

/// Group convolution `(f ⋆ ρ_ε)(x) = ∫ ρ_ε(x·y⁻¹) f(y) dy` with
/// `ρ_ε = ε^{−Q} ρ(δ_{1/ε}(·))`, evaluated by grid quadrature.
///
/// Kernel weights are normalized per evaluation point so constants are
/// reproduced exactly; `epsilon < 2·spacing` is rejected as unresolvable.
pub fn group_convolve<F>(
    g: &CarnotGroup,
    f: F,
    epsilon: f64,
    grid: &GridSpec,
    kernel: &Mollifier,
) -> Result<GriddedField>
where
    F: Fn(&Point) -> f64 + Sync,
{
    if grid.bounds.dim() != g.dim() {
        return Err(Error::Domain("grid dimension does not match the group".into()));
    }
    if epsilon < 2.0 * grid.spacing {
        return Err(Error::Resolution(format!(
            "mollification scale {epsilon} needs grid spacing ≤ {}",
            epsilon / 2.0
        )));
    }
    let nodes: Vec<Point> = grid.nodes().collect();
    let values_f: Vec<f64> = nodes.iter().map(|p| f(p)).collect();

    let values: Vec<f64> = (0..nodes.len())
        .into_par_iter()
        .map(|ix| convolve_quadrature(g, &nodes, &values_f, epsilon, &nodes[ix], kernel, values_f[ix]))
        .collect();

    Ok(GriddedField {
        grid: grid.clone(),
        values,
    })
}

/// The same quadrature evaluated at an arbitrary point (used to
/// finite-difference a mollified field off the lattice).
pub fn group_convolve_at<F>(
    g: &CarnotGroup,
    f: F,
    epsilon: f64,
    grid: &GridSpec,
    kernel: &Mollifier,
    x: &Point,
) -> Result<f64>
where
    F: Fn(&Point) -> f64,
{
    if epsilon < 2.0 * grid.spacing {
        return Err(Error::Resolution(format!(
            "mollification scale {epsilon} needs grid spacing ≤ {}",
            epsilon / 2.0
        )));
    }
    let nodes: Vec<Point> = grid.nodes().collect();
    let values_f: Vec<f64> = nodes.iter().map(|p| f(p)).collect();
    Ok(convolve_quadrature(g, &nodes, &values_f, epsilon, x, kernel, f(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h1() -> CarnotGroup {
        CarnotGroup::heisenberg1()
    }

    #[test]
    fn quotient_of_coordinate_fields() {
        let g = h1();
        let x = Point::new(vec![0.3, -0.8, 0.4]);
        // f = p₁: slope 1 in direction 0 for any h
        let d = difference_quotient(&g, |p| p.coords()[0], &x, 0, 0.37).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
        // constants have zero quotient
        let d = difference_quotient(&g, |_| 4.2, &x, 1, 0.1).unwrap();
        assert_abs_diff_eq!(d, 0.0);
        // f = p₃ along X₁ is −x₂/2 independently of h
        for &h in &[1e-1, 1e-3, 2.0] {
            let d = difference_quotient(&g, |p| p.coords()[2], &x, 0, h).unwrap();
            assert_abs_diff_eq!(d, 0.4, epsilon = 1e-12);
        }
        assert!(difference_quotient(&g, |p| p.coords()[0], &x, 0, 0.0).is_err());
        assert!(difference_quotient(&g, |p| p.coords()[0], &x, 2, 0.1).is_err());
    }

    #[test]
    fn gradient_of_vertical_coordinate() {
        let g = h1();
        let x = Point::new(vec![1.0, 2.0, 0.0]);
        let grad = horizontal_gradient(&g, |p| p.coords()[2], &x, 1e-4).unwrap();
        assert_abs_diff_eq!(grad[0], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(grad[1], 0.5, epsilon = 1e-10);

        let grad = horizontal_gradient(&g, |p| p.coords()[0], &x, 1e-4).unwrap();
        assert_abs_diff_eq!(grad[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(grad[1], 0.0, epsilon = 1e-10);

        // O(h²) accuracy on a quadratic
        let h = 1e-3;
        let grad = horizontal_gradient(&g, |p| p.coords()[0].powi(2), &x, h).unwrap();
        assert!((grad[0] - 2.0).abs() <= 10.0 * h * h);
    }

    #[test]
    fn pansu_quotient_of_identity_and_translation() {
        let g = h1();
        let f = MapSpec::identity(&g);
        let x = Point::new(vec![0.2, 0.1, -0.3]);
        let v = Point::new(vec![1.0, -2.0, 0.5]);
        for &t in &[1.0, 0.1, 1e-3] {
            let q = pansu_quotient(&f, &x, &v, t).unwrap();
            for (a, b) in q.coords().iter().zip(v.coords()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
        let tr = MapSpec::left_translation(&g, Point::new(vec![0.4, 0.4, -1.0])).unwrap();
        let q = pansu_quotient(&tr, &x, &v, 0.25).unwrap();
        for (a, b) in q.coords().iter().zip(v.coords()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let dil = MapSpec::dilation(&g, 3.0).unwrap();
        let e1 = Point::basis(3, 0);
        let q = pansu_quotient(&dil, &x, &e1, 0.5).unwrap();
        assert_abs_diff_eq!(q.coords()[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.coords()[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn estimator_recovers_hlinear_block() {
        let g = h1();
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[1.5, 0.5, -0.25, 2.0]);
        let l = crate::hlinear::HLinearMap::from_horizontal(&g, &g, &a).unwrap();
        let f = MapSpec::hlinear(&g, &g, l).unwrap();
        let est = estimate_pansu_differential(&f, &Point::new(vec![0.1, 0.2, 0.3]), &dyadic_schedule(4, 12)).unwrap();
        assert!(est.converged);
        assert!((est.horizontal_matrix.clone() - a).amax() <= 1e-8);
        // quotients of an H-linear map are t-independent
        let var = est.residuals.iter().fold(0.0f64, |m, &r| m.max(r));
        assert!(var <= 1e-12, "residual spread {var}");
    }

    #[test]
    fn estimator_matches_hand_derivative_for_scalar_square() {
        let g = h1();
        let f = MapSpec::scalar_field(&g, |p| p.coords()[0].powi(2));
        let x = Point::new(vec![0.7, -0.2, 0.05]);
        let est = estimate_pansu_differential(&f, &x, &dyadic_schedule(4, 16)).unwrap();
        assert!(est.converged);
        assert_abs_diff_eq!(est.horizontal_matrix[(0, 0)], 1.4, epsilon = 1e-4);
        assert_abs_diff_eq!(est.horizontal_matrix[(0, 1)], 0.0, epsilon = 1e-4);
        // agreement with the central-difference gradient
        let grad = horizontal_gradient(&g, |p| p.coords()[0].powi(2), &x, 1e-3).unwrap();
        assert!((est.horizontal_matrix[(0, 0)] - grad[0]).abs() <= 1e-4);
    }

    #[test]
    fn estimator_on_right_translation_converges() {
        let g = h1();
        let z = Point::new(vec![0.3, -0.5, 0.2]);
        let gz = g.clone();
        let f = MapSpec::new(g.clone(), g.clone(), move |p| gz.multiply(p, &z).unwrap());
        let x = Point::new(vec![0.25, 0.45, -0.15]);
        let est = estimate_pansu_differential(&f, &x, &dyadic_schedule(4, 12)).unwrap();
        assert!(est.converged);
        // brute-force limit over a deeper refinement is the oracle
        let deep = estimate_pansu_differential(&f, &x, &dyadic_schedule(14, 18)).unwrap();
        assert!((est.horizontal_matrix.clone() - deep.horizontal_matrix.clone()).amax() <= 1e-3);
    }

    #[test]
    fn lip_estimates() {
        let g = h1();
        let c = MapSpec::constant(&g, &g, Point::zeros(3));
        let x = Point::new(vec![0.2, 0.0, 0.1]);
        let radii = [0.4, 0.2, 0.1];
        let est = pointwise_lip(&c, &x, &radii, 64, 3).unwrap();
        assert_eq!(est.estimate, 0.0);

        let tr = MapSpec::left_translation(&g, Point::new(vec![1.0, -1.0, 0.5])).unwrap();
        let est = pointwise_lip(&tr, &x, &radii, 128, 4).unwrap();
        assert!(est.estimate >= 0.9 && est.estimate <= 1.0 + 1e-9, "{}", est.estimate);

        let sc = MapSpec::scalar_field(&g, |p| p.coords()[0]);
        let est = pointwise_lip(&sc, &x, &radii, 256, 5).unwrap();
        assert!(est.estimate >= 0.9 && est.estimate <= 1.0, "{}", est.estimate);
    }

    #[test]
    fn convolution_reproduces_constants_and_commutes() {
        let g = h1();
        let grid = GridSpec::new(CoordBox::centered_cube(3, 1.0), 0.125).unwrap();
        let kernel = Mollifier::standard();
        let eps = 0.5;

        let conv = group_convolve(&g, |_| 2.5, eps, &grid, &kernel).unwrap();
        for &v in &conv.values {
            assert_abs_diff_eq!(v, 2.5, epsilon = 1e-12);
        }

        // X₁(φ⋆ρ_ε) ≈ (X₁φ)⋆ρ_ε on smooth φ, up to quadrature error
        let phi = |p: &Point| (p.coords()[0]).sin() * (p.coords()[1] + 0.5 * p.coords()[2]);
        let x1_phi = {
            let g = g.clone();
            move |p: &Point| horizontal_gradient(&g, phi, p, 1e-5).unwrap()[0]
        };
        let conv_x1 = group_convolve(&g, &x1_phi, eps, &grid, &kernel).unwrap();
        let mollified = |p: &Point| group_convolve_at(&g, phi, eps, &grid, &kernel, p).unwrap();
        let interior = grid.interior_indices(eps + 2.0 * grid.spacing);
        assert!(!interior.is_empty());
        let mut worst: f64 = 0.0;
        for &ix in interior.iter().take(6) {
            let x = grid.node(ix);
            let d = horizontal_gradient(&g, &mollified, &x, grid.spacing).unwrap()[0];
            worst = worst.max((d - conv_x1.values[ix]).abs());
        }
        assert!(worst <= 10.0 * grid.spacing * grid.spacing, "commutation defect {worst}");
    }

    #[test]
    fn convolution_resolution_guard() {
        let g = h1();
        let grid = GridSpec::new(CoordBox::centered_cube(3, 1.0), 0.25).unwrap();
        let err = group_convolve(&g, |_| 1.0, 0.3, &grid, &Mollifier::standard()).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)));
    }

    #[test]
    fn convolution_approaches_continuous_field() {
        let g = h1();
        let kernel = Mollifier::standard();
        let f = |p: &Point| (2.0 * p.coords()[0]).cos() + p.coords()[2];
        let grid = GridSpec::new(CoordBox::centered_cube(3, 1.2), 0.1).unwrap();
        let interior = grid.interior_indices(0.9);
        let sup_err = |eps: f64| {
            let conv = group_convolve(&g, f, eps, &grid, &kernel).unwrap();
            interior
                .iter()
                .map(|&i| (conv.values[i] - f(&grid.node(i))).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = sup_err(0.8);
        let fine = sup_err(0.4);
        assert!(fine < coarse, "sup error did not shrink: {fine} vs {coarse}");
    }
}
