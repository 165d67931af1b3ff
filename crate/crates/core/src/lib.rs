//! Kinematics and inverse dynamics of parallel kinematic manipulators whose
//! limbs contain closed loops, using local constraint embedding.
//!
//! Each limb is opened into a spanning tree by removing one cut joint per
//! loop. The loop-closure constraints are solved per loop, and the tree
//! kinematics and dynamics are projected onto independent coordinates through
//! the orthogonal complement `H` of the constraint Jacobian.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod irsbot2;
pub mod kinematics;
pub mod model;
pub mod oracle;
pub mod se3;
pub mod solver;
pub mod topology;

pub use error::Error;
pub use model::{LimbModel, PkmModel};
pub use se3::{MetricWeights, Pose};
