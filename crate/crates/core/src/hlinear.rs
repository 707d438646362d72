//! Homogeneous homomorphisms between Carnot groups.
//!
//! An H-linear map is a group homomorphism commuting with dilations. In
//! exponential coordinates it is a linear map whose matrix is graded: the
//! block from source layer i to target layer j vanishes unless i = j, which
//! makes dilation equivariance `L∘δ_λ = δ_λ∘L` hold identically.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point, Stratification};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct HLinearMap {
    matrix: DMatrix<f64>,
    source: Stratification,
    target: Stratification,
}

impl HLinearMap {
    /// Wrap a graded matrix; off-layer nonzero entries are structural errors.
    pub fn new(matrix: DMatrix<f64>, source: &Stratification, target: &Stratification) -> Result<Self> {
        if matrix.nrows() != target.topological_dim() || matrix.ncols() != source.topological_dim() {
            return Err(Error::Structure(format!(
                "matrix is {}×{}, expected {}×{}",
                matrix.nrows(),
                matrix.ncols(),
                target.topological_dim(),
                source.topological_dim()
            )));
        }
        for r in 0..matrix.nrows() {
            for c in 0..matrix.ncols() {
                if matrix[(r, c)] != 0.0 && target.degree(r) != source.degree(c) {
                    return Err(Error::Structure(format!(
                        "entry ({r}, {c}) couples layers of degree {} and {}",
                        target.degree(r),
                        source.degree(c)
                    )));
                }
            }
        }
        Ok(Self {
            matrix,
            source: source.clone(),
            target: target.clone(),
        })
    }

    /// Identity automorphism of `g`.
    pub fn identity(g: &CarnotGroup) -> Self {
        Self {
            matrix: DMatrix::identity(g.dim(), g.dim()),
            source: g.strat().clone(),
            target: g.strat().clone(),
        }
    }

    /// The dilation `δ_r` as an H-linear self-map.
    pub fn dilation(g: &CarnotGroup, r: f64) -> Self {
        let mut matrix = DMatrix::zeros(g.dim(), g.dim());
        for j in 0..g.dim() {
            matrix[(j, j)] = r.powi(g.strat().degree(j) as i32);
        }
        Self {
            matrix,
            source: g.strat().clone(),
            target: g.strat().clone(),
        }
    }

    /// Extend a horizontal block `a` (m₁ᵗ×m₁ˢ) to the full graded matrix.
    ///
    /// The second layer of a Carnot algebra is spanned by brackets of
    /// generators, so the homomorphism property forces the second-layer block
    /// through `L[x, y] = [Lx, Ly]`: one linear solve per target row. A
    /// horizontal block incompatible with the brackets is rejected.
    pub fn from_horizontal(g1: &CarnotGroup, g2: &CarnotGroup, a: &DMatrix<f64>) -> Result<Self> {
        Self::from_horizontal_tol(g1, g2, a, 1e-8)
    }

    /// [`Self::from_horizontal`] with an explicit compatibility tolerance,
    /// for horizontal blocks that are themselves numerical estimates.
    pub fn from_horizontal_tol(
        g1: &CarnotGroup,
        g2: &CarnotGroup,
        a: &DMatrix<f64>,
        tol: f64,
    ) -> Result<Self> {
        let (m1s, m1t) = (g1.m1(), g2.m1());
        if a.nrows() != m1t || a.ncols() != m1s {
            return Err(Error::Structure(format!(
                "horizontal block is {}×{}, expected {}×{}",
                a.nrows(),
                a.ncols(),
                m1t,
                m1s
            )));
        }
        let (m2s, m2t) = (g1.m2(), g2.m2());
        let n_s = g1.dim();
        let n_t = g2.dim();
        let mut matrix = DMatrix::zeros(n_t, n_s);
        matrix.view_mut((0, 0), (m1t, m1s)).copy_from(a);

        // bracket images of the source generator pairs under a
        let pairs: Vec<(usize, usize)> = (0..m1s)
            .flat_map(|i| ((i + 1)..m1s).map(move |j| (i, j)))
            .collect();
        if pairs.is_empty() {
            return Self::new(matrix, g1.strat(), g2.strat());
        }

        // rhs_{(i,j), l} = [a eᵢ, a eⱼ]ₗ in the target
        let mut rhs = DMatrix::zeros(pairs.len(), m2t.max(1));
        for (row, &(i, j)) in pairs.iter().enumerate() {
            let ai: Vec<f64> = (0..m1t).map(|r| a[(r, i)]).collect();
            let aj: Vec<f64> = (0..m1t).map(|r| a[(r, j)]).collect();
            for (l, v) in g2.bracket_of(&ai, &aj).into_iter().enumerate() {
                rhs[(row, l)] = v;
            }
        }

        if m2s == 0 {
            // abelian source: brackets of images must vanish
            if rhs.amax() > tol {
                return Err(Error::Structure(
                    "horizontal block maps commuting generators to non-commuting images".into(),
                ));
            }
            return Self::new(matrix, g1.strat(), g2.strat());
        }

        // pair_table_{(i,j), k} = b^k_{ij} in the source
        let mut pair_table = DMatrix::zeros(pairs.len(), m2s);
        for (row, &(i, j)) in pairs.iter().enumerate() {
            let mut x = vec![0.0; m1s];
            let mut y = vec![0.0; m1s];
            x[i] = 1.0;
            y[j] = 1.0;
            for (k, v) in g1.bracket_of(&x, &y).into_iter().enumerate() {
                pair_table[(row, k)] = v;
            }
        }

        let svd = pair_table.clone().svd(true, true);
        for l in 0..m2t {
            let b = DMatrix::from_column_slice(pairs.len(), 1, rhs.column(l).as_slice());
            let sol = svd
                .solve(&b, 1e-12)
                .map_err(|e| Error::Structure(format!("graded extension solve failed: {e}")))?;
            let residual = (&pair_table * &sol - &b).amax();
            if residual > tol {
                return Err(Error::Structure(format!(
                    "horizontal block is not bracket-compatible (residual {residual:.3e})"
                )));
            }
            for k in 0..m2s {
                matrix[(m1t + l, m1s + k)] = sol[(k, 0)];
            }
        }
        Self::new(matrix, g1.strat(), g2.strat())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn horizontal_block(&self) -> DMatrix<f64> {
        let (m1s, m1t) = (self.source.layer_dims()[0], self.target.layer_dims()[0]);
        self.matrix.view((0, 0), (m1t, m1s)).into()
    }

    pub fn source(&self) -> &Stratification {
        &self.source
    }

    pub fn target(&self) -> &Stratification {
        &self.target
    }

    pub fn apply(&self, p: &Point) -> Result<Point> {
        if p.dim() != self.source.topological_dim() {
            return Err(Error::Structure("point dimension mismatch".into()));
        }
        let v = nalgebra::DVector::from_column_slice(p.coords());
        Ok(Point::new((&self.matrix * v).as_slice().to_vec()))
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &HLinearMap) -> Result<HLinearMap> {
        if other.target != self.source {
            return Err(Error::Structure(
                "composition needs matching intermediate stratifications".into(),
            ));
        }
        Ok(HLinearMap {
            matrix: &self.matrix * &other.matrix,
            source: other.source.clone(),
            target: self.target.clone(),
        })
    }

    /// Inverse map, when the matrix is invertible and the groups match.
    pub fn try_inverse(&self) -> Option<HLinearMap> {
        self.matrix.clone().try_inverse().map(|matrix| HLinearMap {
            matrix,
            source: self.target.clone(),
            target: self.source.clone(),
        })
    }

    pub fn determinant(&self) -> Result<f64> {
        if self.matrix.nrows() != self.matrix.ncols() {
            return Err(Error::Unsupported(
                "determinant of a non-square graded matrix".into(),
            ));
        }
        Ok(self.matrix.determinant())
    }

    /// Smallest and largest singular values.
    pub fn singular_extremes(&self) -> (f64, f64) {
        let svd = self.matrix.clone().svd(false, false);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for s in svd.singular_values.iter() {
            lo = lo.min(*s);
            hi = hi.max(*s);
        }
        (lo, hi)
    }
}

/// Sampled homomorphism defect and dilation-equivariance check.
#[derive(Debug, Clone, Serialize)]
pub struct HLinearValidation {
    /// max over sampled pairs of `‖L(x·y) − L(x)·L(y)‖_∞` (coordinate-wise).
    pub max_hom_defect: f64,
    /// Exact by the graded block structure; re-checked on samples.
    pub equivariance_ok: bool,
}

pub fn validate_hlinear(
    l: &HLinearMap,
    g1: &CarnotGroup,
    g2: &CarnotGroup,
    samples: usize,
    seed: u64,
) -> Result<HLinearValidation> {
    if l.source != *g1.strat() || l.target != *g2.strat() {
        return Err(Error::Structure(
            "map stratifications do not match the given groups".into(),
        ));
    }
    let mut rng = stream_rng(seed, 0);
    let lo = vec![-1.0; g1.dim()];
    let hi = vec![1.0; g1.dim()];
    let mut max_hom_defect: f64 = 0.0;
    let mut equivariance_ok = true;
    for _ in 0..samples {
        let x = g1.sample_box(&lo, &hi, &mut rng);
        let y = g1.sample_box(&lo, &hi, &mut rng);
        let lhs = l.apply(&g1.multiply(&x, &y)?)?;
        let rhs = g2.multiply(&l.apply(&x)?, &l.apply(&y)?)?;
        let defect = lhs
            .coords()
            .iter()
            .zip(rhs.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        max_hom_defect = max_hom_defect.max(defect);

        let lam: f64 = rng.random_range(0.1..2.5);
        let e1 = l.apply(&g1.dilate(lam, &x)?)?;
        let e2 = g2.dilate(lam, &l.apply(&x)?)?;
        let edef = e1
            .coords()
            .iter()
            .zip(e2.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if edef > 1e-12 * (1.0 + e2.coords().iter().map(|c| c.abs()).fold(0.0, f64::max)) {
            equivariance_ok = false;
        }
    }
    Ok(HLinearValidation {
        max_hom_defect,
        equivariance_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_has_zero_defect() {
        let g = CarnotGroup::heisenberg1();
        let l = HLinearMap::identity(&g);
        let v = validate_hlinear(&l, &g, &g, 200, 1).unwrap();
        assert_eq!(v.max_hom_defect, 0.0);
        assert!(v.equivariance_ok);
    }

    #[test]
    fn graded_extension_on_h1_yields_det_multiplier() {
        let g = CarnotGroup::heisenberg1();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let l = HLinearMap::from_horizontal(&g, &g, &a).unwrap();
        // center multiplier is det(a) = 6
        assert_abs_diff_eq!(l.matrix()[(2, 2)], 6.0, epsilon = 1e-12);
        let v = validate_hlinear(&l, &g, &g, 500, 2).unwrap();
        assert!(v.max_hom_defect <= 1e-9, "defect {}", v.max_hom_defect);
    }

    #[test]
    fn wrong_center_multiplier_fails_homomorphism() {
        let g = CarnotGroup::heisenberg1();
        let mut matrix = DMatrix::zeros(3, 3);
        matrix[(0, 0)] = 2.0;
        matrix[(1, 1)] = 3.0;
        matrix[(2, 2)] = 5.0; // should be 6
        let l = HLinearMap::new(matrix, g.strat(), g.strat()).unwrap();
        let v = validate_hlinear(&l, &g, &g, 500, 3).unwrap();
        assert!(v.max_hom_defect > 0.05, "defect {}", v.max_hom_defect);
    }

    #[test]
    fn off_layer_block_rejected() {
        let g = CarnotGroup::heisenberg1();
        let mut matrix = DMatrix::identity(3, 3);
        matrix[(2, 0)] = 1.0; // degree-2 row fed from a degree-1 column
        assert!(HLinearMap::new(matrix, g.strat(), g.strat()).is_err());
    }

    #[test]
    fn rotation_is_an_automorphism_of_h1() {
        let g = CarnotGroup::heisenberg1();
        let t = 0.7f64;
        let a = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let l = HLinearMap::from_horizontal(&g, &g, &a).unwrap();
        assert_abs_diff_eq!(l.matrix()[(2, 2)], 1.0, epsilon = 1e-12);
        let v = validate_hlinear(&l, &g, &g, 300, 4).unwrap();
        assert!(v.max_hom_defect <= 1e-9);
    }

    #[test]
    fn incompatible_block_from_abelian_source() {
        // a full-rank map ℝ² → H¹ first layer cannot be a homomorphism
        let ab = CarnotGroup::abelian(2);
        let h1 = CarnotGroup::heisenberg1();
        let a = DMatrix::identity(2, 2);
        assert!(HLinearMap::from_horizontal(&ab, &h1, &a).is_err());
        // rank-one maps commute and pass
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(HLinearMap::from_horizontal(&ab, &h1, &a).is_ok());
    }
}
