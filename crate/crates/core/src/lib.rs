//! Hybrid-dynamics laboratory for a planar three-link biped (two kneeless legs
//! and a torso) walking on an inclined plane.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] parameter and state types shared by every module.
//! * [`dynamics`] closed-form swing-phase equations of motion.
//! * [`impact`] the rigid double-stance impact and leg relabelling.
//! * [`reduced`] output/shape/zero coordinates and the decoupled model.
//! * [`controller`] feedback regularization plus geometric PID.
//! * [`sim`] event-driven hybrid integration of the closed loop.
//! * [`analysis`] stride-map iteration, periodic orbits and robustness sweeps.
//! * [`config`] and [`output`] the file formats used by the `biped` binary.
//! * [`certify`] an automatic-differentiation Lagrangian oracle used to check
//!   the hand-written closed forms.
//!
//! Angles are radians internally and degrees in every file.

pub mod analysis;
pub mod certify;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod impact;
pub mod model;
pub mod ode;
pub mod output;
pub mod reduced;
pub mod sim;

pub use error::{Error, Result};
pub use model::{Incline, JointConfig, RobotParams, SwingState};
