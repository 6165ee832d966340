//! Entropic causal optimal transport between Gaussian process laws.
//!
//! Given an input law `mu`, an output law `nu` and a reference coupling
//! `gamma` induced by a linear Gaussian input-output model, [`sinkhorn::run`]
//! finds the coupling of `mu` and `nu` closest to `gamma` in KL divergence
//! among couplings in which past outputs carry no information about future
//! inputs beyond past inputs. [`identify`] turns the result back into an
//! input-output model and checks the causality constraint.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaussian;
pub mod identify;
mod linalg;
pub mod reference;
pub mod sinkhorn;

pub use error::{Error, Result};
pub use gaussian::{
    condition, disintegrate, future_given_past, joint_distance, kl_divergence, marginalize,
    recompose, AutoregressiveForm, ConditionalGaussian, Coord, GaussianJoint, InputStep, Layout,
    OutputStep, Role,
};
pub use identify::{
    check_causality, conditional_cross_covariance, extract_model, symlog_transform, CausalityReport,
};
pub use reference::{
    build_reference, kalman_coefficients, realize_marginal, reference_from_state_space,
    CoefficientSpec, MarginalSpec, ModelStep, StateSpaceSpec,
};
pub use sinkhorn::{
    even_projection, odd_projection_causal, odd_projection_noncausal, run, Mode, SinkhornResult,
    SinkhornSettings,
};
