//! Model features for tabular MDPs.
//!
//! Learns real-valued state features that approximate a bisimulation
//! (model reduction) of a finite MDP by fitting a feature-space reward and
//! successor-feature model, then evaluates policies purely in feature space
//! and bounds the resulting value error.
//!
//! - [`mdp`]: MDPs, policies and exact policy evaluation.
//! - [`abstraction`]: partitions, weight matrices, abstract MDPs and a
//!   bisimulation oracle.
//! - [`successor`]: successor representations and feature models.
//! - [`learner`]: loss, gradients, Adam, k-means projection and training.
//! - [`feature_eval`]: feature-space policy evaluation and the error bound.
//! - [`experiments`]: grid world, planted MDPs and transfer protocols.

pub mod abstraction;
pub mod error;
pub mod experiments;
pub mod feature_eval;
pub mod learner;
pub mod linalg;
pub mod mdp;
pub mod successor;

pub use error::{Error, Result};
