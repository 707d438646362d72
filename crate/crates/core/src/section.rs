//! Sections `u_z(x) = d₂(z, f(x))` of group-valued maps and their
//! horizontal-gradient envelope.

use crate::calculus::{horizontal_gradient, GridSpec, GriddedField};
use crate::error::{Error, Result};
use crate::group::Point;
use crate::maps::MapSpec;
use crate::region::MetricKind;

/// The section of `f` at `z`: a scalar field on the source group measuring
/// the target distance from `z` to the image. The metric tag is recorded by
/// the caller; only `d_∞` is evaluated here.
pub fn section<'a>(f: &'a MapSpec, z: &'a Point, metric: MetricKind) -> Result<impl Fn(&Point) -> f64 + 'a> {
    if z.dim() != f.target().dim() {
        return Err(Error::Structure("z must live in the target group".into()));
    }
    if metric != MetricKind::Dinf {
        return Err(Error::Unsupported(
            "CC-metric sections go through the distance estimator; use d_∞ here".into(),
        ));
    }
    let g2 = f.target();
    Ok(move |x: &Point| {
        g2.dinf_distance(z, &f.apply(x))
            .expect("target dimensions checked")
    })
}

/// Pointwise max over `z_samples` of `|∇_{G₁} u_z|` on a grid: an empirical
/// lower envelope of the dominating gradient bound.
pub fn section_gradient_envelope(
    f: &MapSpec,
    z_samples: &[Point],
    x_grid: &GridSpec,
    h: f64,
) -> Result<GriddedField> {
    if z_samples.is_empty() {
        return Err(Error::Domain("envelope needs at least one section point".into()));
    }
    let g1 = f.source();
    let sections: Vec<_> = z_samples
        .iter()
        .map(|z| section(f, z, MetricKind::Dinf))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(x_grid.len());
    for x in x_grid.nodes() {
        let mut worst: f64 = 0.0;
        for u_z in &sections {
            let grad = horizontal_gradient(g1, u_z, &x, h)?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            worst = worst.max(norm);
        }
        values.push(worst);
    }
    Ok(GriddedField {
        grid: x_grid.clone(),
        values,
    })
}
