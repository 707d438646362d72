//! Horizontal Jacobians and Monte-Carlo verification of the area formula
//! `∫_E J_Q(d_Pf) = L^n(f(E))` for injective maps with closed-form inverses
//! on a common source/target group (the Hausdorff normalization then cancels
//! on both sides).

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::estimate_pansu_differential;
use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point};
use crate::hlinear::HLinearMap;
use crate::maps::MapSpec;
use crate::metric::mc_measure;
use crate::region::{CoordBox, Region};
use crate::rng::stream_rng;

/// How to evaluate `J_Q(L) = H^Q(L(B₁)) / H^Q(B₁)`.
#[derive(Debug, Clone, Copy)]
pub enum JqMode {
    /// `|det|` of the graded matrix; needs source = target so the Hausdorff
    /// normalizations cancel against the Lebesgue measure.
    Exact,
    /// Monte-Carlo of both ball measures through inverse membership.
    Mc { samples: usize, seed: u64 },
}

/// Jacobian value with the Monte-Carlo error when estimated.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JqEstimate {
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Horizontal Jacobian of an H-linear map.
pub fn jacobian_jq(l: &HLinearMap, g1: &CarnotGroup, g2: &CarnotGroup, mode: JqMode) -> Result<JqEstimate> {
    if l.source() != g1.strat() || l.target() != g2.strat() {
        return Err(Error::Structure("map does not match the given groups".into()));
    }
    match mode {
        JqMode::Exact => {
            if g1 != g2 {
                return Err(Error::Unsupported(
                    "exact J_Q needs source = target; the Hausdorff normalization ratio is unknown otherwise".into(),
                ));
            }
            Ok(JqEstimate {
                value: l.determinant()?.abs(),
                stderr: None,
            })
        }
        JqMode::Mc { samples, seed } => {
            if g1 != g2 {
                return Err(Error::Unsupported(
                    "Monte-Carlo J_Q is implemented for source = target".into(),
                ));
            }
            let (smin, smax) = l.singular_extremes();
            if smin <= 1e-10 * smax.max(1.0) {
                // rank-deficient: the image is a proper homogeneous subset of
                // measure zero
                return Ok(JqEstimate {
                    value: 0.0,
                    stderr: Some(0.0),
                });
            }
            let inv = l
                .try_inverse()
                .ok_or_else(|| Error::Unsupported("Monte-Carlo J_Q needs an invertible matrix".into()))?;
            let ball = Region::ball(g1.identity(), 1.0, crate::region::MetricKind::Dinf);
            let ball_box = ball.bounding_box(g1)?;
            // interval image of the ball box under the matrix
            let n = g1.dim();
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for r in 0..n {
                for c in 0..n {
                    let m = l.matrix()[(r, c)];
                    let (a, b) = (m * ball_box.lo[c], m * ball_box.hi[c]);
                    lo[r] += a.min(b);
                    hi[r] += a.max(b);
                }
            }
            let image_box = CoordBox::new(lo, hi)?;
            let num = mc_measure(
                |y| {
                    inv.apply(y)
                        .map(|x| g1.dinf_norm(&x) < 1.0)
                        .unwrap_or(false)
                },
                &image_box,
                samples,
                seed,
            );
            let den = mc_measure(|p| g1.dinf_norm(p) < 1.0, &ball_box, samples, seed ^ 0x9e3779b9);
            let value = num.value / den.value;
            // first-order ratio error propagation
            let rel = (num.stderr / num.value).hypot(den.stderr / den.value);
            Ok(JqEstimate {
                value,
                stderr: Some(value * rel),
            })
        }
    }
}

/// Options for area-formula verification.
#[derive(Debug, Clone)]
pub struct AreaOptions {
    pub n_lhs: usize,
    pub n_rhs: usize,
    pub pansu_schedule: Vec<f64>,
    pub seed: u64,
    /// Optional CSV dump of per-sample Jacobians.
    pub diagnostics: Option<PathBuf>,
}

impl Default for AreaOptions {
    fn default() -> Self {
        Self {
            n_lhs: 100_000,
            n_rhs: 100_000,
            pansu_schedule: crate::calculus::dyadic_schedule(4, 12),
            seed: 0,
            diagnostics: None,
        }
    }
}

/// Two-sided Monte-Carlo record of one area-formula verification.
#[derive(Debug, Clone, Serialize)]
pub struct AreaReport {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub relative_gap: f64,
    pub pansu_failures: usize,
    /// Set when the Pansu failure rate exceeded 5%.
    pub flagged_invalid: bool,
    /// Relative padding applied to the probed image bounding box.
    pub image_box_padding: f64,
    pub n_lhs: usize,
    pub n_rhs: usize,
}

impl AreaReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const IMAGE_BOX_PROBES: usize = 1000;
const IMAGE_BOX_PADDING: f64 = 0.10;
const PANSU_FAILURE_CAP: f64 = 0.05;

fn sample_region(g: &CarnotGroup, region: &Region, n: usize, seed: u64, shard: u64) -> Result<Vec<Point>> {
    let bounds = region.bounding_box(g)?;
    let mut rng = stream_rng(seed, shard);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        let p = bounds.sample(g, &mut rng);
        if region.contains(g, &p)? {
            out.push(p);
        }
        if attempts > 10_000 && (out.len() as f64 / attempts as f64) < 1e-4 {
            return Err(Error::Sampling {
                rate: out.len() as f64 / attempts as f64,
                min_rate: 1e-4,
                context: "area-formula region sampling".into(),
            });
        }
    }
    Ok(out)
}

/// Jacobian of `f` at `x`: exact differential when provided, otherwise the
/// Pansu estimator with graded extension. `None` marks estimator failure.
fn jacobian_at(f: &MapSpec, x: &Point, schedule: &[f64]) -> Option<f64> {
    let g = f.source();
    if let Some(l) = f.exact_pansu_at(x) {
        return l.determinant().ok().map(|d| d.abs());
    }
    let est = estimate_pansu_differential(f, x, schedule).ok()?;
    if !est.converged {
        return None;
    }
    let l = HLinearMap::from_horizontal_tol(g, f.target(), &est.horizontal_matrix, 1e-3).ok()?;
    l.determinant().ok().map(|d| d.abs())
}

fn image_bounding_box(f: &MapSpec, e: &Region, seed: u64) -> Result<CoordBox> {
    let g = f.source();
    let probes = sample_region(g, e, IMAGE_BOX_PROBES, seed, 7)?;
    let m = f.target().dim();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for p in &probes {
        let y = f.apply(p);
        for i in 0..m {
            lo[i] = lo[i].min(y.coords()[i]);
            hi[i] = hi[i].max(y.coords()[i]);
        }
    }
    for i in 0..m {
        let extent = (hi[i] - lo[i]).max(1e-9);
        lo[i] -= IMAGE_BOX_PADDING * extent;
        hi[i] += IMAGE_BOX_PADDING * extent;
    }
    CoordBox::new(lo, hi)
}

/// Verify `∫_E J_Q(d_Pf) dx = L^n(f(E))` for an injective `f` with inverse.
///
/// The left side averages Jacobians over uniform samples of `E`; the right
/// side measures `f(E)` through inverse membership `y ∈ f(E) ⇔ f⁻¹(y) ∈ E`
/// over a probed, padded bounding box.
pub fn area_formula_verify(f: &MapSpec, e: &Region, opts: &AreaOptions) -> Result<AreaReport> {
    let g = f.source();
    if f.source() != f.target() {
        return Err(Error::Unsupported(
            "verification needs source = target so Hausdorff constants cancel".into(),
        ));
    }
    if !f.has_inverse() {
        return Err(Error::Unsupported("verification needs a closed-form inverse".into()));
    }
    let volume = e
        .volume(g)
        .ok_or_else(|| Error::Unsupported("the region needs an exactly known volume".into()))?;

    // left side: |E| · mean J
    let xs = sample_region(g, e, opts.n_lhs, opts.seed, 1)?;
    let jacobians: Vec<Option<f64>> = xs
        .par_iter()
        .map(|x| jacobian_at(f, x, &opts.pansu_schedule))
        .collect();
    let pansu_failures = jacobians.iter().filter(|j| j.is_none()).count();
    let good: Vec<f64> = jacobians.iter().flatten().copied().collect();
    if good.is_empty() {
        return Err(Error::Calibration("no sample produced a Jacobian".into()));
    }
    let mean = good.iter().sum::<f64>() / good.len() as f64;
    let var = good.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / good.len() as f64;
    let lhs = volume * mean;
    let lhs_stderr = volume * (var / good.len() as f64).sqrt();

    if let Some(path) = &opts.diagnostics {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample", "jacobian", "converged"])?;
        for (i, j) in jacobians.iter().enumerate() {
            w.write_record(&[
                i.to_string(),
                j.map_or(String::from("nan"), |v| v.to_string()),
                j.is_some().to_string(),
            ])?;
        }
        w.flush()?;
    }

    // right side: measure of f(E) by inverse membership
    let image_box = image_bounding_box(f, e, opts.seed)?;
    let est = mc_measure(
        |y| {
            f.apply_inverse(y)
                .and_then(|x| e.contains(g, &x))
                .unwrap_or(false)
        },
        &image_box,
        opts.n_rhs,
        opts.seed ^ 0xabcdef,
    );

    let relative_gap = (lhs - est.value).abs() / est.value.max(1e-300);
    Ok(AreaReport {
        lhs,
        lhs_stderr,
        rhs: est.value,
        rhs_stderr: est.stderr,
        relative_gap,
        pansu_failures,
        flagged_invalid: pansu_failures as f64 > PANSU_FAILURE_CAP * opts.n_lhs as f64,
        image_box_padding: IMAGE_BOX_PADDING,
        n_lhs: opts.n_lhs,
        n_rhs: opts.n_rhs,
    })
}

/// Two sides of the weighted change of variables
/// `∫_E u·J_Q(d_Pf) = ∫_{f(E)} u(f⁻¹(y)) dy`.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedAreaReport {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
}

pub fn weighted_area_check<U>(f: &MapSpec, e: &Region, u: U, opts: &AreaOptions) -> Result<WeightedAreaReport>
where
    U: Fn(&Point) -> f64 + Sync,
{
    let g = f.source();
    if f.source() != f.target() {
        return Err(Error::Unsupported(
            "verification needs source = target so Hausdorff constants cancel".into(),
        ));
    }
    if !f.has_inverse() {
        return Err(Error::Unsupported("verification needs a closed-form inverse".into()));
    }
    let volume = e
        .volume(g)
        .ok_or_else(|| Error::Unsupported("the region needs an exactly known volume".into()))?;

    let xs = sample_region(g, e, opts.n_lhs, opts.seed, 1)?;
    let products: Vec<f64> = xs
        .par_iter()
        .map(|x| jacobian_at(f, x, &opts.pansu_schedule).map_or(f64::NAN, |j| j * u(x)))
        .collect();
    let good: Vec<f64> = products.iter().copied().filter(|v| v.is_finite()).collect();
    if good.is_empty() {
        return Err(Error::Calibration("no sample produced a Jacobian".into()));
    }
    let mean = good.iter().sum::<f64>() / good.len() as f64;
    let var = good.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / good.len() as f64;
    let lhs = volume * mean;
    let lhs_stderr = volume * (var / good.len() as f64).sqrt();

    let image_box = image_bounding_box(f, e, opts.seed)?;
    // mean of 1_{f(E)}·u∘f⁻¹ over the box, in deterministic shards
    let shards = crate::rng::shards(opts.n_rhs);
    let partials: Vec<(f64, f64, usize)> = shards
        .par_iter()
        .map(|&(idx, len)| {
            let mut rng = stream_rng(opts.seed ^ 0xabcdef, idx);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..len {
                let y = image_box.sample(f.target(), &mut rng);
                let v = f
                    .apply_inverse(&y)
                    .ok()
                    .filter(|x| e.contains(g, x).unwrap_or(false))
                    .map_or(0.0, |x| u(&x));
                s += v;
                s2 += v * v;
            }
            (s, s2, len)
        })
        .collect();
    let (sum, sum2, count) = partials
        .iter()
        .fold((0.0, 0.0, 0usize), |(a, b, c), &(s, s2, l)| (a + s, b + s2, c + l));
    let mean_rhs = sum / count as f64;
    let var_rhs = sum2 / count as f64 - mean_rhs * mean_rhs;
    let boxvol = image_box.volume();
    Ok(WeightedAreaReport {
        lhs,
        lhs_stderr,
        rhs: boxvol * mean_rhs,
        rhs_stderr: boxvol * (var_rhs.max(0.0) / count as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::MetricKind;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn h1() -> CarnotGroup {
        CarnotGroup::heisenberg1()
    }

    #[test]
    fn jq_exact_values() {
        let g = h1();
        let id = HLinearMap::identity(&g);
        assert_eq!(jacobian_jq(&id, &g, &g, JqMode::Exact).unwrap().value, 1.0);

        // δ_r has J_Q = r^Q
        let d = HLinearMap::dilation(&g, 2.0);
        assert_abs_diff_eq!(
            jacobian_jq(&d, &g, &g, JqMode::Exact).unwrap().value,
            16.0,
            epsilon = 1e-12
        );

        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let l = HLinearMap::from_horizontal(&g, &g, &a).unwrap();
        assert_abs_diff_eq!(
            jacobian_jq(&l, &g, &g, JqMode::Exact).unwrap().value,
            36.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn jq_multiplicativity_and_mc_cross_check() {
        let g = h1();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 3.0]);
        let l1 = HLinearMap::from_horizontal(&g, &g, &a).unwrap();
        let l2 = HLinearMap::dilation(&g, 0.5);
        let composed = l1.compose(&l2).unwrap();
        let j1 = jacobian_jq(&l1, &g, &g, JqMode::Exact).unwrap().value;
        let j2 = jacobian_jq(&l2, &g, &g, JqMode::Exact).unwrap().value;
        let jc = jacobian_jq(&composed, &g, &g, JqMode::Exact).unwrap().value;
        assert_abs_diff_eq!(jc, j1 * j2, epsilon = 1e-9 * jc.max(1.0));

        let mc = jacobian_jq(
            &l1,
            &g,
            &g,
            JqMode::Mc {
                samples: 200_000,
                seed: 17,
            },
        )
        .unwrap();
        let stderr = mc.stderr.unwrap();
        assert!(
            (mc.value - j1).abs() <= 3.0 * stderr,
            "mc {} exact {} stderr {}",
            mc.value,
            j1,
            stderr
        );
    }

    #[test]
    fn jq_rank_deficient_is_zero() {
        let g = h1();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = HLinearMap::from_horizontal(&g, &g, &a).unwrap();
        let est = jacobian_jq(
            &l,
            &g,
            &g,
            JqMode::Mc {
                samples: 1000,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(jacobian_jq(&l, &g, &g, JqMode::Exact).unwrap().value, 0.0);
    }

    #[test]
    fn area_identity_on_box() {
        let g = h1();
        let f = MapSpec::identity(&g);
        let e = Region::Box(CoordBox::centered_cube(3, 0.8));
        let opts = AreaOptions {
            n_lhs: 20_000,
            n_rhs: 100_000,
            seed: 5,
            ..AreaOptions::default()
        };
        let rep = area_formula_verify(&f, &e, &opts).unwrap();
        let volume = 1.6f64.powi(3);
        assert!((rep.lhs - volume).abs() <= 1e-9);
        assert!((rep.rhs - volume).abs() <= 3.0 * rep.rhs_stderr);
        assert!(!rep.flagged_invalid);
    }

    #[test]
    fn area_dilation_on_ball() {
        let g = h1();
        let r = 1.3;
        let f = MapSpec::dilation(&g, r).unwrap();
        let e = Region::ball(g.identity(), 1.0, MetricKind::Dinf);
        let opts = AreaOptions {
            n_lhs: 20_000,
            n_rhs: 200_000,
            seed: 6,
            ..AreaOptions::default()
        };
        let rep = area_formula_verify(&f, &e, &opts).unwrap();
        let expect = r.powi(4) * g.dinf_ball_volume(1.0);
        assert!((rep.lhs - expect).abs() <= 1e-9 * expect);
        assert!(
            (rep.rhs - expect).abs() <= 3.0 * rep.rhs_stderr,
            "rhs {} expect {} stderr {}",
            rep.rhs,
            expect,
            rep.rhs_stderr
        );
        assert!(rep.relative_gap <= 0.02);
    }

    #[test]
    fn area_estimated_differential_without_exact_pansu() {
        // strip the exact differential to exercise the estimator path
        let g = h1();
        let base = MapSpec::dilation(&g, 1.5).unwrap();
        let fwd = base.clone();
        let g2 = g.clone();
        let f = MapSpec::new(g.clone(), g.clone(), move |p| fwd.apply(p))
            .with_inverse(move |q| g2.dilate(1.0 / 1.5, q).unwrap());
        let e = Region::Box(CoordBox::centered_cube(3, 0.6));
        let opts = AreaOptions {
            n_lhs: 2_000,
            n_rhs: 100_000,
            seed: 8,
            ..AreaOptions::default()
        };
        let rep = area_formula_verify(&f, &e, &opts).unwrap();
        assert_eq!(rep.pansu_failures, 0);
        assert!(rep.relative_gap <= 0.02, "gap {}", rep.relative_gap);
    }

    #[test]
    fn weighted_area_with_dilation() {
        // u(x) = x₁² under δ_r: closed-form change of variables gives the oracle
        let g = h1();
        let r: f64 = 1.5;
        let f = MapSpec::dilation(&g, r).unwrap();
        let e = Region::Box(CoordBox::centered_cube(3, 0.5));
        let opts = AreaOptions {
            n_lhs: 200_000,
            n_rhs: 400_000,
            seed: 9,
            ..AreaOptions::default()
        };
        let rep = weighted_area_check(&f, &e, |x| x.coords()[0].powi(2), &opts).unwrap();
        // lhs = r⁴·∫_E x₁² dx = r⁴·(1/12)·s³·s... over the cube [-1/2,1/2]³:
        // ∫ x₁² = s^{n+2}/12 with s = 1
        let exact = r.powi(4) / 12.0;
        assert!(
            (rep.lhs - exact).abs() <= 3.0 * rep.lhs_stderr + 1e-9,
            "lhs {} exact {}",
            rep.lhs,
            exact
        );
        assert!(
            (rep.rhs - exact).abs() <= 3.0 * rep.rhs_stderr,
            "rhs {} exact {} stderr {}",
            rep.rhs,
            exact,
            rep.rhs_stderr
        );

        // u ≡ 0 collapses both sides
        let rep = weighted_area_check(&f, &e, |_| 0.0, &opts).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
    }

    #[test]
    fn missing_inverse_is_unsupported() {
        let g = h1();
        let f = MapSpec::new(g.clone(), g.clone(), |p| p.clone());
        let e = Region::Box(CoordBox::centered_cube(3, 0.5));
        assert!(matches!(
            area_formula_verify(&f, &e, &AreaOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }
}
