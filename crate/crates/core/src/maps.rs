//! Closed-form maps between Carnot groups.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::{CarnotGroup, Point};
use crate::hlinear::HLinearMap;
use crate::region::CoordBox;
use crate::rng::stream_rng;

type EvalFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
type PansuFn = Arc<dyn Fn(&Point) -> HLinearMap + Send + Sync>;

/// A map `f: G₁ → G₂` with optional closed-form inverse, exact differential
/// and Lipschitz bound.
#[derive(Clone)]
pub struct MapSpec {
    source: CarnotGroup,
    target: CarnotGroup,
    eval: EvalFn,
    inverse: Option<EvalFn>,
    exact_pansu: Option<PansuFn>,
    lipschitz_bound: Option<f64>,
}

impl std::fmt::Debug for MapSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MapSpec")
            .field("source_dim", &self.source.dim())
            .field("target_dim", &self.target.dim())
            .field("has_inverse", &self.inverse.is_some())
            .field("has_exact_pansu", &self.exact_pansu.is_some())
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish()
    }
}

impl MapSpec {
    pub fn new<F>(source: CarnotGroup, target: CarnotGroup, eval: F) -> Self
    where
        F: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        Self {
            source,
            target,
            eval: Arc::new(eval),
            inverse: None,
            exact_pansu: None,
            lipschitz_bound: None,
        }
    }

    pub fn with_inverse<F>(mut self, inverse: F) -> Self
    where
        F: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn with_exact_pansu<F>(mut self, pansu: F) -> Self
    where
        F: Fn(&Point) -> HLinearMap + Send + Sync + 'static,
    {
        self.exact_pansu = Some(Arc::new(pansu));
        self
    }

    pub fn with_lipschitz_bound(mut self, bound: f64) -> Self {
        self.lipschitz_bound = Some(bound);
        self
    }

    pub fn source(&self) -> &CarnotGroup {
        &self.source
    }

    pub fn target(&self) -> &CarnotGroup {
        &self.target
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn has_exact_pansu(&self) -> bool {
        self.exact_pansu.is_some()
    }

    pub fn apply(&self, p: &Point) -> Point {
        (self.eval)(p)
    }

    pub fn apply_inverse(&self, q: &Point) -> Result<Point> {
        match &self.inverse {
            Some(inv) => Ok(inv(q)),
            None => Err(Error::Unsupported("map carries no inverse".into())),
        }
    }

    pub fn exact_pansu_at(&self, p: &Point) -> Option<HLinearMap> {
        self.exact_pansu.as_ref().map(|f| f(p))
    }

    /// Max coordinate defect of `inverse(eval(x)) − x` on sampled points.
    pub fn inverse_defect(&self, bounds: &CoordBox, samples: usize, seed: u64) -> Result<f64> {
        let inv = self
            .inverse
            .as_ref()
            .ok_or_else(|| Error::Unsupported("map carries no inverse".into()))?;
        let mut rng = stream_rng(seed, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = bounds.sample(&self.source, &mut rng);
            let back = inv(&self.apply(&x));
            let defect = back
                .coords()
                .iter()
                .zip(x.coords())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(defect);
        }
        Ok(worst)
    }

    /// Identity automorphism.
    pub fn identity(g: &CarnotGroup) -> Self {
        let gp = g.clone();
        Self::new(g.clone(), g.clone(), |p| p.clone())
            .with_inverse(|p| p.clone())
            .with_exact_pansu(move |_| HLinearMap::identity(&gp))
            .with_lipschitz_bound(1.0)
    }

    /// Left translation `τ_z`.
    pub fn left_translation(g: &CarnotGroup, z: Point) -> Result<Self> {
        let zi = g.inverse(&z)?;
        let (gf, gi, gp) = (g.clone(), g.clone(), g.clone());
        let z2 = z.clone();
        Ok(Self::new(g.clone(), g.clone(), move |p| {
            gf.multiply(&z2, p).expect("dimension checked")
        })
        .with_inverse(move |p| gi.multiply(&zi, p).expect("dimension checked"))
        .with_exact_pansu(move |_| HLinearMap::identity(&gp))
        .with_lipschitz_bound(1.0))
    }

    /// Dilation `δ_r`, `r > 0`.
    pub fn dilation(g: &CarnotGroup, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Domain("dilation map needs r > 0".into()));
        }
        let (gf, gi, gp) = (g.clone(), g.clone(), g.clone());
        Ok(Self::new(g.clone(), g.clone(), move |p| {
            gf.dilate(r, p).expect("r > 0")
        })
        .with_inverse(move |p| gi.dilate(1.0 / r, p).expect("r > 0"))
        .with_exact_pansu(move |_| HLinearMap::dilation(&gp, r))
        .with_lipschitz_bound(r))
    }

    /// An H-linear map as a MapSpec; the inverse is attached when the matrix
    /// is invertible.
    pub fn hlinear(g1: &CarnotGroup, g2: &CarnotGroup, l: HLinearMap) -> Result<Self> {
        if l.source() != g1.strat() || l.target() != g2.strat() {
            return Err(Error::Structure(
                "H-linear map does not match the given groups".into(),
            ));
        }
        let fwd = l.clone();
        let mut spec = Self::new(g1.clone(), g2.clone(), move |p| {
            fwd.apply(p).expect("dimension checked")
        });
        if let Some(inv) = l.try_inverse() {
            spec = spec.with_inverse(move |q| inv.apply(q).expect("dimension checked"));
        }
        spec = spec.with_exact_pansu(move |_| l.clone());
        Ok(spec)
    }

    /// Composition `outer ∘ inner`.
    pub fn compose(outer: &MapSpec, inner: &MapSpec) -> Result<Self> {
        if inner.target.strat() != outer.source.strat() {
            return Err(Error::Structure(
                "composition needs inner target = outer source".into(),
            ));
        }
        let (fo, fi) = (outer.eval.clone(), inner.eval.clone());
        let mut spec = Self::new(inner.source.clone(), outer.target.clone(), move |p| fo(&fi(p)));
        if let (Some(io), Some(ii)) = (&outer.inverse, &inner.inverse) {
            let (io, ii) = (io.clone(), ii.clone());
            spec = spec.with_inverse(move |q| ii(&io(q)));
        }
        if let (Some(po), Some(pi)) = (&outer.exact_pansu, &inner.exact_pansu) {
            let (po, pi) = (po.clone(), pi.clone());
            let fi2 = inner.eval.clone();
            spec = spec.with_exact_pansu(move |x| {
                let inner_l = pi(x);
                let outer_l = po(&fi2(x));
                outer_l.compose(&inner_l).expect("chain rule composition")
            });
        }
        if let (Some(a), Some(b)) = (outer.lipschitz_bound, inner.lipschitz_bound) {
            spec = spec.with_lipschitz_bound(a * b);
        }
        Ok(spec)
    }

    /// A scalar field as a map into the abelian line.
    pub fn scalar_field<F>(g: &CarnotGroup, f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Self::new(g.clone(), CarnotGroup::abelian(1), move |p| {
            Point::new(vec![f(p)])
        })
    }

    /// Constant map.
    pub fn constant(g: &CarnotGroup, target: &CarnotGroup, value: Point) -> Self {
        Self::new(g.clone(), target.clone(), move |_| value.clone()).with_lipschitz_bound(0.0)
    }
}
