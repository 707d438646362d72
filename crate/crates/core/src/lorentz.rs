//! Lorentz `L^{Q,1}` machinery over uniformly sampled scalar fields.
//!
//! A sampled field carries one quadrature weight `w = |Ω|/N` per sample, so
//! its distribution function and nonincreasing rearrangement are exact step
//! functions and the two routes to the `L^{Q,1}` quasi-norm — the weighted
//! rearrangement integral and the layer-cake formula `Q·∫ λ_g(s)^{1/Q} ds` —
//! can both be integrated in closed form per step.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point};
use crate::region::Region;
use crate::rng::stream_rng;

/// Scalar samples on a region with uniform weight `|Ω|/N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledScalarField {
    points: Vec<Point>,
    values: Vec<f64>,
    weight: f64,
}

impl SampledScalarField {
    pub fn new(points: Vec<Point>, values: Vec<f64>, domain_measure: f64) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Domain("points and values differ in length".into()));
        }
        if points.is_empty() {
            return Err(Error::Domain("a sampled field needs ≥ 1 sample".into()));
        }
        if !(domain_measure > 0.0) {
            return Err(Error::Domain("domain measure must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sampled values must be finite".into()));
        }
        let weight = domain_measure / points.len() as f64;
        Ok(Self {
            points,
            values,
            weight,
        })
    }

    /// Sample `f` uniformly over a region with an exactly known volume.
    pub fn sample<F>(g: &CarnotGroup, region: &Region, f: F, n: usize, seed: u64) -> Result<Self>
    where
        F: Fn(&Point) -> f64,
    {
        let volume = region.volume(g).ok_or_else(|| {
            Error::Unsupported("sampling needs a region with exactly known volume".into())
        })?;
        let bounds = region.bounding_box(g)?;
        let mut rng = stream_rng(seed, 0);
        let mut points = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while points.len() < n {
            attempts += 1;
            let p = bounds.sample(g, &mut rng);
            if region.contains(g, &p)? {
                values.push(f(&p));
                points.push(p);
            }
            if attempts > 1000 && (points.len() as f64 / attempts as f64) < 1e-4 {
                return Err(Error::Sampling {
                    rate: points.len() as f64 / attempts as f64,
                    min_rate: 1e-4,
                    context: "field sampling".into(),
                });
            }
        }
        Self::new(points, values, volume)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn domain_measure(&self) -> f64 {
        self.weight * self.len() as f64
    }

    /// Weighted sum `Σ w·φ(vᵢ)`, the quadrature of `∫ φ(g)`.
    pub fn integrate<F>(&self, phi: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        self.values.iter().map(|&v| phi(v)).sum::<f64>() * self.weight
    }

    /// Discrete `L^p` norm `(Σ w·|v|^p)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.integrate(|v| v.abs().powf(p)).powf(1.0 / p)
    }

    pub fn map_values<F>(&self, f: F) -> Self
    where
        F: Fn(f64) -> f64,
    {
        Self {
            points: self.points.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            weight: self.weight,
        }
    }

    /// Write as CSV with columns `c0..c{n-1}, value, weight`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let dim = self.points[0].dim();
        let mut header: Vec<String> = (0..dim).map(|i| format!("c{i}")).collect();
        header.push("value".into());
        header.push("weight".into());
        w.write_record(&header)?;
        for (p, v) in self.points.iter().zip(&self.values) {
            let mut rec: Vec<String> = p.coords().iter().map(|c| format!("{c}")).collect();
            rec.push(format!("{v}"));
            rec.push(format!("{}", self.weight));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let dim = headers.len().checked_sub(2).ok_or_else(|| {
            Error::Domain("field CSV needs coordinate, value and weight columns".into())
        })?;
        let mut points = Vec::new();
        let mut values = Vec::new();
        let mut weight = None;
        for rec in r.records() {
            let rec = rec?;
            let coords: Vec<f64> = (0..dim)
                .map(|i| rec[i].parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Domain(format!("bad coordinate in CSV: {e}")))?;
            points.push(Point::new(coords));
            values.push(
                rec[dim]
                    .parse::<f64>()
                    .map_err(|e| Error::Domain(format!("bad value in CSV: {e}")))?,
            );
            let w: f64 = rec[dim + 1]
                .parse()
                .map_err(|e| Error::Domain(format!("bad weight in CSV: {e}")))?;
            if let Some(prev) = weight {
                if (w - prev as f64).abs() > 1e-12 * (1.0 + w.abs()) {
                    return Err(Error::Domain("field CSV weights must be uniform".into()));
                }
            }
            weight = Some(w);
        }
        let weight = weight.ok_or_else(|| Error::Domain("empty field CSV".into()))?;
        let measure = weight * points.len() as f64;
        Self::new(points, values, measure)
    }

    /// Random field with values drawn from `draw`, for tests and suites.
    pub fn random<F>(g: &CarnotGroup, region: &Region, n: usize, seed: u64, mut draw: F) -> Result<Self>
    where
        F: FnMut(&mut rand_chacha::ChaCha8Rng) -> f64,
    {
        let mut rng = stream_rng(seed, 1);
        let mut values_rng = stream_rng(seed, 2);
        let volume = region.volume(g).ok_or_else(|| {
            Error::Unsupported("sampling needs a region with exactly known volume".into())
        })?;
        let bounds = region.bounding_box(g)?;
        let mut points = Vec::with_capacity(n);
        while points.len() < n {
            let p = bounds.sample(g, &mut rng);
            if region.contains(g, &p)? {
                points.push(p);
            }
        }
        let values = (0..n).map(|_| draw(&mut values_rng)).collect();
        Self::new(points, values, volume)
    }
}

/// Distribution function `λ_g(s) = |{|g| > s}|` of the sampled field.
pub fn distribution_function(g: &SampledScalarField, s: f64) -> f64 {
    debug_assert!(s >= 0.0);
    g.weight() * g.values().iter().filter(|v| v.abs() > s).count() as f64
}

/// Nonincreasing rearrangement as an exact step function: `heights[k]` on
/// `[k·width, (k+1)·width)`.
#[derive(Debug, Clone, Serialize)]
pub struct Rearrangement {
    pub heights: Vec<f64>,
    pub width: f64,
}

impl Rearrangement {
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.heights.first().copied().unwrap_or(0.0);
        }
        let k = (t / self.width).floor() as usize;
        self.heights.get(k).copied().unwrap_or(0.0)
    }

    /// The measure `|{g* > s}|`, for equimeasurability checks.
    pub fn distribution(&self, s: f64) -> f64 {
        self.width * self.heights.iter().filter(|&&h| h > s).count() as f64
    }
}

/// Sort `|values|` descending into a step function of step `w`.
pub fn rearrangement(g: &SampledScalarField) -> Rearrangement {
    let mut heights: Vec<f64> = g.values().iter().map(|v| v.abs()).collect();
    heights.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    Rearrangement {
        heights,
        width: g.weight(),
    }
}

/// Route used to compute the `L^{Q,1}` quasi-norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LorentzMethod {
    /// `∫₀^A t^{(1−Q)/Q} g*(t) dt`, power rule per step of `g*`.
    Rearrangement,
    /// `Q·∫₀^∞ λ_g(s)^{1/Q} ds`, exact over the value steps of `λ_g`.
    LayerCake,
}

/// `L^{Q,1}` quasi-norm of a sampled field.
pub fn lorentz_q1_norm(g: &SampledScalarField, q: f64, method: LorentzMethod) -> Result<f64> {
    if !(q > 1.0) {
        return Err(Error::Domain("Lorentz exponent needs Q > 1".into()));
    }
    match method {
        LorentzMethod::Rearrangement => {
            let r = rearrangement(g);
            let w = r.width;
            let mut acc = 0.0;
            for (k, &h) in r.heights.iter().enumerate() {
                if h == 0.0 {
                    break;
                }
                let t0 = k as f64 * w;
                let t1 = (k + 1) as f64 * w;
                // ∫ t^{(1−Q)/Q} dt = Q·t^{1/Q}
                acc += h * q * (t1.powf(1.0 / q) - t0.powf(1.0 / q));
            }
            Ok(acc)
        }
        LorentzMethod::LayerCake => {
            let mut levels: Vec<f64> = g.values().iter().map(|v| v.abs()).collect();
            levels.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
            // λ_g is constant between consecutive distinct |values|
            let mut acc = 0.0;
            let w = g.weight();
            let mut upper = levels[0];
            for (count, &level) in levels.iter().enumerate() {
                if level < upper {
                    // on (level, upper), λ = w·count
                    acc += (w * count as f64).powf(1.0 / q) * (upper - level);
                    upper = level;
                }
            }
            if upper > 0.0 {
                // on (0, smallest positive value), λ = w·N⁺ with N⁺ the count
                // of nonzero samples
                let nonzero = levels.iter().filter(|&&v| v > 0.0).count();
                acc += (w * nonzero as f64).powf(1.0 / q) * upper;
            }
            Ok(q * acc)
        }
    }
}
