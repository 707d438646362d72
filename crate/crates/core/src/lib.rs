//! Desk-scale computational toolkit for analysis on Carnot groups.
//!
//! The crate provides exact arithmetic for step-≤2 Carnot groups, the
//! homogeneous distance `d_∞` and a trajectory-optimized Carnot–Carathéodory
//! distance, Pansu difference quotients and differential estimation,
//! Lorentz `L^{Q,1}` and Orlicz machinery, Q-variation and (RR) diagnostics
//! and Monte-Carlo verification of the area formula.

pub mod area;
pub mod calculus;
pub mod error;
pub mod group;
pub mod hlinear;
pub mod lattice;
pub mod lorentz;
pub mod maps;
pub mod metric;
pub mod orlicz;
pub mod region;
pub mod riesz;
pub mod rng;
pub mod section;
pub mod variation;

mod lbfgs;

pub use area::{
    area_formula_verify, jacobian_jq, weighted_area_check, AreaOptions, AreaReport, JqEstimate,
    JqMode, WeightedAreaReport,
};
pub use calculus::{
    difference_quotient, dyadic_schedule, estimate_pansu_differential, group_convolve,
    group_convolve_at, horizontal_gradient, pansu_quotient, pointwise_lip, GridSpec, GriddedField,
    LipEstimate, Mollifier, PansuEstimate,
};
pub use error::{Error, Result};
pub use group::{calibrate_eps, CarnotGroup, EpsCalibration, Point, Stratification};
pub use hlinear::{validate_hlinear, HLinearMap, HLinearValidation};
pub use lattice::{estimate_lattice_calibration, lattice_points, verify_pavage_cover, CoverReport, LatticeCalibration};
pub use lorentz::{
    distribution_function, lorentz_q1_norm, rearrangement, LorentzMethod, Rearrangement,
    SampledScalarField,
};
pub use maps::MapSpec;
pub use metric::{cc_distance, endpoint, mc_measure, sample_ball, CcOptions, ControlPath, DistanceEstimate, MeasureEstimate};
pub use orlicz::{
    build_phi, check_integrability_condition, f_phi, luxemburg_norm, young_conjugate,
    IntegrabilityReport, NFunction, PhiFunction,
};
pub use region::{CoordBox, MetricKind, Region};
pub use riesz::{riesz_inequality_check, riesz_potential, surrogate_c_q, RieszCheck};
pub use section::{section, section_gradient_envelope};
pub use variation::{
    q_variation_lower, qac_modulus, rr_check, BallFamily, ModulusPoint, QVariationEstimate,
    RrBallRecord, VariationBudget,
};
