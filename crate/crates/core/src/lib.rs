//! Exact verification of classification and attention robustness of ReLU
//! networks against parameterised semantic perturbations.
//!
//! The perturbation `g(θ, x0)` is encoded as a ReLU network over a box of
//! parameters Θ, composed with the classifier `f`, and the activation regions
//! of `f ∘ g` are enumerated. On each region the network is affine, so the
//! classification margin and the attention inconsistency have exact ranges.

// `!(a <= b)` style comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod error;
pub mod lp;
pub mod nn;
pub mod perturb;
pub mod polytope;
pub mod scalar;
pub mod traverse;
pub mod verify;

pub use attention::{
    ai_range_in_region, attention_inconsistency, maps_for_pattern, margin_range_in_region, saliency_map, saliency_maps,
    AttentionConfig, AttentionMap, Dist, Filter, ValueRange,
};
pub use error::{Error, Result};
pub use lp::lp_calls;
pub use nn::{ActivationPattern, AffineLayer, AffineRestriction, Network, NeuronId};
pub use perturb::{
    apply_direct, encode, encode_with, expected_map_transform, Clipping, ImageMeta, PerturbationKind,
    PerturbationSpec,
};
pub use polytope::{is_stable, FaceSet, HPolytope, RowLabel, ThetaBox};
pub use scalar::Scalar;
pub use traverse::{
    bfs, gbs, traverse, Budget, TraversalConfig, TraversalMode, TraversalResult, TraversalStats, VisitedRegion,
};
pub use verify::{
    argmax, attention_verdict, class_verdict, grid_oracle, grid_points, reconcile, reconcile_regions, verify_region, AttentionVerdict,
    ClassVerdict, GridOracleResult, Mismatch, MismatchKind, Problem, ReconcileReport, RegionVerdict,
};

pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
pub type Problem64 = Problem<f64>;
pub type Problem32 = Problem<f32>;
pub type HPolytope64 = HPolytope<f64>;
pub type PerturbationSpec64 = PerturbationSpec<f64>;
