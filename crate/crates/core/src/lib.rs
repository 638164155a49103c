//! Prediction-intervention games on structural causal models.
//!
//! The crate is organized around the pipeline of a leader/follower game:
//!
//! * [`graph`] — DAGs with a response node `Y` and an environment node `E`,
//!   d-separation, Markov blankets, stable blankets, and action-set
//!   augmentation.
//! * [`scm`] — structural causal models with environment-indexed mechanism
//!   overrides, forward sampling, and exact enumeration of discrete models.
//! * [`gaussian`] — closed-form moments, population regressions, and exact
//!   risks for linear-Gaussian models.
//! * [`predictors`] — losses, subset-restricted base learners, and ensembles.
//! * [`invariance`] — tests of `Y ⊥ E | X_S` (IRD, GCM, ITP, IEP) and the
//!   tail functions backing them.
//! * [`learn`] — subset search: screening, invariant-most-predictive
//!   selection, and stabilized regression/classification.
//! * [`game`] — follower best responses over environment grids and bounded
//!   perturbation policies, worst-case risks, and executable theory checks.

pub mod error;
pub mod game;
pub mod gaussian;
pub mod graph;
pub mod invariance;
pub mod learn;
pub mod predictors;
pub mod presets;
pub mod random;
pub mod rng;
pub mod scm;
pub mod stats;

pub use error::{Error, Result};
