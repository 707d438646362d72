//! Exact arithmetic for step-≤2 Carnot groups in exponential coordinates.
//!
//! A group element is a coordinate vector partitioned by layers. The product
//! is `x·y = x + y + Q(x,y)` where the only nonzero block of `Q` is the
//! second-layer correction `½·[x¹,y¹]` given by the bracket table, so the
//! step-2 law is exact in real arithmetic (no BCH truncation error).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Layer structure of a stratified algebra: `layer_dims[i]` is dim V_{i+1}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratification {
    layer_dims: Vec<usize>,
}

impl Stratification {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.is_empty() || layer_dims.iter().any(|&m| m == 0) {
            return Err(Error::Structure(
                "layer dimensions must be a nonempty list of positive integers".into(),
            ));
        }
        Ok(Self { layer_dims })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Nilpotency step `s`.
    pub fn step(&self) -> usize {
        self.layer_dims.len()
    }

    /// Topological dimension `n = Σ mᵢ`.
    pub fn topological_dim(&self) -> usize {
        self.layer_dims.iter().sum()
    }

    /// Homogeneous dimension `Q = Σ i·mᵢ`.
    pub fn hom_dim(&self) -> usize {
        self.layer_dims
            .iter()
            .enumerate()
            .map(|(i, &m)| (i + 1) * m)
            .sum()
    }

    /// Coordinate range of layer `i` (0-based layer index).
    pub fn layer_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.layer_dims[..i].iter().sum();
        start..start + self.layer_dims[i]
    }

    /// Degree `d(j)` of coordinate `j` (1-based degree, 0-based coordinate).
    pub fn degree(&self, j: usize) -> usize {
        let mut acc = 0;
        for (i, &m) in self.layer_dims.iter().enumerate() {
            acc += m;
            if j < acc {
                return i + 1;
            }
        }
        panic!("coordinate index {j} out of range");
    }
}

/// Point of a Carnot group in exponential coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            coords: vec![0.0; n],
        }
    }

    /// `j`-th canonical basis point (0-based) in an `n`-dimensional group.
    pub fn basis(n: usize, j: usize) -> Self {
        let mut coords = vec![0.0; n];
        coords[j] = 1.0;
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Self::new(coords)
    }
}

/// One entry of a bracket table: `[e_i, e_j] = coeff · e_k` with `i, j`
/// first-layer coordinates and `k` a second-layer coordinate (all 1-based,
/// `k` counted over the whole coordinate vector).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub coeff: f64,
}

/// JSON shape of a group definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDefinition {
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub bracket: Vec<(usize, usize, usize, f64)>,
    #[serde(default)]
    pub eps: Vec<f64>,
}

/// A step-≤2 Carnot group: stratification, bracket table and the ε constants
/// of the homogeneous norm `d_∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarnotGroup {
    strat: Stratification,
    /// Dense antisymmetric table: `bracket[k][i][j]` flattened as
    /// `k*m1*m1 + i*m1 + j`, with `k` indexing the second layer.
    bracket: Vec<f64>,
    eps: Vec<f64>,
}

impl CarnotGroup {
    pub fn new(strat: Stratification, entries: &[BracketEntry], eps: Vec<f64>) -> Result<Self> {
        if strat.step() > 2 {
            return Err(Error::Structure(format!(
                "built-in exact law covers step ≤ 2, got step {}",
                strat.step()
            )));
        }
        if strat.step() == 1 && !entries.is_empty() {
            return Err(Error::Structure(
                "abelian group cannot carry a bracket table".into(),
            ));
        }
        let m1 = strat.layer_dims()[0];
        let m2 = if strat.step() == 2 {
            strat.layer_dims()[1]
        } else {
            0
        };
        let mut bracket = vec![0.0; m2 * m1 * m1];
        for e in entries {
            if e.i == 0 || e.j == 0 || e.i > m1 || e.j > m1 {
                return Err(Error::Structure(format!(
                    "bracket entry ({}, {}, {}) has a non-first-layer generator index",
                    e.i, e.j, e.k
                )));
            }
            if e.k <= m1 || e.k > m1 + m2 {
                return Err(Error::Structure(format!(
                    "bracket entry ({}, {}, {}) must target a second-layer coordinate",
                    e.i, e.j, e.k
                )));
            }
            if e.i == e.j && e.coeff != 0.0 {
                return Err(Error::Structure("([e_i, e_i] must vanish".into()));
            }
            let (i, j, k) = (e.i - 1, e.j - 1, e.k - 1 - m1);
            bracket[k * m1 * m1 + i * m1 + j] += e.coeff;
            bracket[k * m1 * m1 + j * m1 + i] -= e.coeff;
        }
        let eps = if eps.is_empty() {
            vec![1.0; strat.step()]
        } else {
            eps
        };
        if eps.len() != strat.step() {
            return Err(Error::Structure(format!(
                "eps must have one constant per layer ({} expected, {} given)",
                strat.step(),
                eps.len()
            )));
        }
        if (eps[0] - 1.0).abs() > 0.0 {
            return Err(Error::Structure("ε₁ must equal 1".into()));
        }
        if eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::Structure("each εᵢ must lie in (0, 1]".into()));
        }
        Ok(Self {
            strat,
            bracket,
            eps,
        })
    }

    /// First Heisenberg group H¹: layers (2, 1), `[e₁, e₂] = e₃`.
    pub fn heisenberg1() -> Self {
        Self::new(
            Stratification::new(vec![2, 1]).unwrap(),
            &[BracketEntry {
                i: 1,
                j: 2,
                k: 3,
                coeff: 1.0,
            }],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    /// Abelian group ℝⁿ (step 1).
    pub fn abelian(n: usize) -> Self {
        Self::new(Stratification::new(vec![n]).unwrap(), &[], vec![1.0]).unwrap()
    }

    /// Free step-2 group on `m` generators: layers (m, m(m−1)/2) with
    /// `[e_i, e_j]` (i < j) an independent second-layer basis vector.
    pub fn free_step2(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Structure(
                "free step-2 group needs at least 2 generators".into(),
            ));
        }
        let m2 = m * (m - 1) / 2;
        let strat = Stratification::new(vec![m, m2])?;
        let mut entries = Vec::with_capacity(m2);
        let mut k = m + 1;
        for i in 1..=m {
            for j in (i + 1)..=m {
                entries.push(BracketEntry {
                    i,
                    j,
                    k,
                    coeff: 1.0,
                });
                k += 1;
            }
        }
        Self::new(strat, &entries, vec![1.0, 1.0])
    }

    /// Resolve a built-in name: `heisenberg1`, `abelian:<n>`, `free-step2:<m>`.
    pub fn by_name(name: &str) -> Result<Self> {
        if name == "heisenberg1" {
            return Ok(Self::heisenberg1());
        }
        if let Some(n) = name.strip_prefix("abelian:") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Domain(format!("bad dimension in group name {name:?}")))?;
            if n == 0 {
                return Err(Error::Domain("abelian group needs n ≥ 1".into()));
            }
            return Ok(Self::abelian(n));
        }
        if let Some(m) = name.strip_prefix("free-step2:") {
            let m: usize = m
                .parse()
                .map_err(|_| Error::Domain(format!("bad generator count in {name:?}")))?;
            return Self::free_step2(m);
        }
        Err(Error::Domain(format!("unknown group name {name:?}")))
    }

    /// Load a group from its JSON definition.
    pub fn from_definition(def: &GroupDefinition) -> Result<Self> {
        let strat = Stratification::new(def.layer_dims.clone())?;
        let entries: Vec<BracketEntry> = def
            .bracket
            .iter()
            .map(|&(i, j, k, coeff)| BracketEntry { i, j, k, coeff })
            .collect();
        Self::new(strat, &entries, def.eps.clone())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let def: GroupDefinition = serde_json::from_str(json)?;
        Self::from_definition(&def)
    }

    pub fn definition(&self) -> GroupDefinition {
        let m1 = self.m1();
        let mut bracket = Vec::new();
        for k in 0..self.m2() {
            for i in 0..m1 {
                for j in (i + 1)..m1 {
                    let c = self.bracket[k * m1 * m1 + i * m1 + j];
                    if c != 0.0 {
                        bracket.push((i + 1, j + 1, m1 + k + 1, c));
                    }
                }
            }
        }
        GroupDefinition {
            layer_dims: self.strat.layer_dims().to_vec(),
            bracket,
            eps: self.eps.clone(),
        }
    }

    pub fn strat(&self) -> &Stratification {
        &self.strat
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// Same group with replaced ε constants.
    pub fn with_eps(&self, eps: Vec<f64>) -> Result<Self> {
        let mut g = self.clone();
        if eps.len() != self.strat.step() || eps[0] != 1.0 {
            return Err(Error::Structure("invalid eps vector".into()));
        }
        g.eps = eps;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.strat.topological_dim()
    }

    pub fn hom_dim(&self) -> usize {
        self.strat.hom_dim()
    }

    pub fn step(&self) -> usize {
        self.strat.step()
    }

    /// First-layer dimension m₁.
    pub fn m1(&self) -> usize {
        self.strat.layer_dims()[0]
    }

    /// Second-layer dimension m₂ (0 for abelian groups).
    pub fn m2(&self) -> usize {
        if self.step() >= 2 {
            self.strat.layer_dims()[1]
        } else {
            0
        }
    }

    pub fn identity(&self) -> Point {
        Point::zeros(self.dim())
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::Structure(format!(
                "point has dimension {}, group has dimension {}",
                p.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Bracket of two first-layer vectors, landing in the second layer.
    pub fn bracket_of(&self, x1: &[f64], y1: &[f64]) -> Vec<f64> {
        let m1 = self.m1();
        let m2 = self.m2();
        let mut out = vec![0.0; m2];
        for k in 0..m2 {
            let table = &self.bracket[k * m1 * m1..(k + 1) * m1 * m1];
            let mut acc = 0.0;
            for i in 0..m1 {
                let xi = x1[i];
                if xi == 0.0 {
                    continue;
                }
                for j in 0..m1 {
                    acc += xi * table[i * m1 + j] * y1[j];
                }
            }
            out[k] = acc;
        }
        out
    }

    /// Operator-norm bound for the bracket map (Frobenius bound).
    pub fn bracket_bound(&self) -> f64 {
        self.bracket.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Structure constant `b^k_{ij}` (0-based, `k` over the second layer).
    pub(crate) fn bracket_coeff(&self, k: usize, i: usize, j: usize) -> f64 {
        let m1 = self.m1();
        self.bracket[k * m1 * m1 + i * m1 + j]
    }

    pub(crate) fn mul_unchecked(&self, a: &Point, b: &Point) -> Point {
        let n = self.dim();
        let m1 = self.m1();
        let mut coords = vec![0.0; n];
        for i in 0..n {
            coords[i] = a.coords[i] + b.coords[i];
        }
        if self.step() == 2 {
            let corr = self.bracket_of(&a.coords[..m1], &b.coords[..m1]);
            for (k, c) in corr.into_iter().enumerate() {
                coords[m1 + k] += 0.5 * c;
            }
        }
        Point::new(coords)
    }

    /// Group product `a·b = a + b + ½[a¹, b¹]`.
    pub fn multiply(&self, a: &Point, b: &Point) -> Result<Point> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    /// Inversion `p ↦ −p`.
    pub fn inverse(&self, p: &Point) -> Result<Point> {
        self.check_point(p)?;
        Ok(Point::new(p.coords.iter().map(|c| -c).collect()))
    }

    /// Dilation `δ_λ`, scaling layer `i` by `λ^i`.
    pub fn dilate(&self, lambda: f64, p: &Point) -> Result<Point> {
        self.check_point(p)?;
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!(
                "dilation factor must be ≥ 0, got {lambda}"
            )));
        }
        let mut coords = p.coords.clone();
        for (i, _) in self.strat.layer_dims().iter().enumerate() {
            let factor = lambda.powi(i as i32 + 1);
            for j in self.strat.layer_range(i) {
                coords[j] *= factor;
            }
        }
        Ok(Point::new(coords))
    }

    /// Difference `a⁻¹·b`, the displacement of `b` as seen from `a`.
    pub fn displacement(&self, a: &Point, b: &Point) -> Result<Point> {
        let ai = self.inverse(a)?;
        self.multiply(&ai, b)
    }

    /// Homogeneous norm `‖p‖_∞ = max εᵢ·|p⁽ⁱ⁾|^{1/i}`.
    pub fn dinf_norm(&self, p: &Point) -> f64 {
        let mut best: f64 = 0.0;
        for (i, _) in self.strat.layer_dims().iter().enumerate() {
            let block: f64 = self.strat.layer_range(i).map(|j| p.coords[j].powi(2)).sum();
            let val = self.eps[i] * block.sqrt().powf(1.0 / (i as f64 + 1.0));
            best = best.max(val);
        }
        best
    }

    /// Left-invariant distance `d_∞(a, b) = ‖a⁻¹·b‖_∞`.
    pub fn dinf_distance(&self, a: &Point, b: &Point) -> Result<f64> {
        Ok(self.dinf_norm(&self.displacement(a, b)?))
    }

    /// Euclidean norm of the first-layer block.
    pub fn horizontal_norm(&self, p: &Point) -> f64 {
        p.coords[..self.m1()]
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Coordinate-volume of the d_∞ ball of radius `r`: a product of layer
    /// balls `{|p⁽ⁱ⁾| < (r/εᵢ)^i}`, so the volume is exactly
    /// `Π V_{mᵢ} (r/εᵢ)^{i·mᵢ}` with `V_m` the Euclidean unit-ball volume.
    pub fn dinf_ball_volume(&self, r: f64) -> f64 {
        let mut vol = 1.0;
        for (i, &m) in self.strat.layer_dims().iter().enumerate() {
            let radius = (r / self.eps[i]).powi(i as i32 + 1);
            vol *= euclidean_ball_volume(m) * radius.powi(m as i32);
        }
        vol
    }

    /// Uniform sample from a coordinate box, as a point of this group.
    pub fn sample_box(&self, lo: &[f64], hi: &[f64], rng: &mut impl Rng) -> Point {
        let coords = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| rng.random_range(a..b))
            .collect();
        Point::new(coords)
    }
}

/// Volume of the Euclidean unit ball in ℝ^m.
pub fn euclidean_ball_volume(m: usize) -> f64 {
    // V_m = π^{m/2} / Γ(m/2 + 1), via the two-step recurrence V_m = 2π/m · V_{m−2}.
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / m as f64 * euclidean_ball_volume(m - 2),
    }
}

/// Report from the ε calibration search.
#[derive(Debug, Clone, Serialize)]
pub struct EpsCalibration {
    pub eps: Vec<f64>,
    /// Worst value of d(a,c) − d(a,b) − d(b,c) over the sample (≤ 0 means the
    /// triangle inequality held everywhere).
    pub worst_defect: f64,
    pub samples: usize,
}

/// Search the geometric grid {1, 1/2, 1/4, …} for the largest ε₂ that makes
/// `d_∞` satisfy the triangle inequality on `samples` random triples.
///
/// The defect is scale-invariant (both sides are 1-homogeneous), so sampling
/// from a fixed box loses no generality.
pub fn calibrate_eps(g: &CarnotGroup, samples: usize, rng_seed: u64) -> Result<EpsCalibration> {
    if samples < 1000 {
        return Err(Error::Domain("calibration needs at least 10³ samples".into()));
    }
    if g.step() == 1 {
        return Ok(EpsCalibration {
            eps: vec![1.0],
            worst_defect: 0.0,
            samples,
        });
    }
    let mut rng = stream_rng(rng_seed, 0);
    let n = g.dim();
    let lo = vec![-1.0; n];
    let hi = vec![1.0; n];
    let triples: Vec<[Point; 3]> = (0..samples)
        .map(|_| {
            [
                g.sample_box(&lo, &hi, &mut rng),
                g.sample_box(&lo, &hi, &mut rng),
                g.sample_box(&lo, &hi, &mut rng),
            ]
        })
        .collect();

    let mut eps2 = 1.0;
    for _ in 0..24 {
        let cand = g.with_eps(vec![1.0, eps2])?;
        let mut worst = f64::NEG_INFINITY;
        for [a, b, c] in &triples {
            let dac = cand.dinf_distance(a, c)?;
            let dab = cand.dinf_distance(a, b)?;
            let dbc = cand.dinf_distance(b, c)?;
            worst = worst.max(dac - dab - dbc);
        }
        if worst <= 0.0 {
            return Ok(EpsCalibration {
                eps: vec![1.0, eps2],
                worst_defect: worst,
                samples,
            });
        }
        eps2 *= 0.5;
    }
    Err(Error::Calibration(format!(
        "no ε₂ in the geometric grid down to 2^-24 satisfied the triangle inequality on {samples} triples"
    )))
}
