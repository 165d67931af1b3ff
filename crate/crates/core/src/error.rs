use alloc::boxed::Box;
use core::fmt;

use nalgebra::DVector;

/// Errors raised by model construction, the solvers and the dynamics.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A 4×4 matrix is not an element of se(3).
    NotSe3,
    InvalidInput(&'static str),
    DimensionMismatch { expected: usize, found: usize },
    /// Removing the cut joints does not leave a spanning tree.
    NotATree,
    /// A tree joint connects a body to a parent with a larger index.
    NonCanonicalOrder { joint: usize, parent: usize, child: usize },
    /// A body is not attached to any joint.
    DanglingBody(usize),
    /// Two fundamental cycles share a tree joint.
    NotHybrid { joint: usize },
    UnknownBody(usize),
    UnknownJoint(usize),
    /// The dependent-variable block of a loop's constraint Jacobian is singular.
    SingularGy { cycle: usize, rcond: f64 },
    /// The limb's task-space Jacobian `L_t` cannot be inverted.
    SingularTaskJacobian { rcond: f64 },
    SingularActuationJacobian { rcond: f64 },
    /// An iteration cap was reached; `best` is the iterate with the smallest error.
    MaxIterationsExceeded { iterations: usize, error: f64, best: DVector<f64> },
    /// Annotation of a nested error with the limb, cycle and trajectory step.
    /// Indices are zero-based; the message numbers limbs and loops from 1.
    Context { limb: Option<usize>, cycle: Option<usize>, step: Option<usize>, source: Box<Error> },
}

impl Error {
    pub fn in_limb(self, limb: usize) -> Self {
        self.annotate(Some(limb), None, None)
    }

    pub fn in_cycle(self, cycle: usize) -> Self {
        self.annotate(None, Some(cycle), None)
    }

    pub fn at_step(self, step: usize) -> Self {
        self.annotate(None, None, Some(step))
    }

    fn annotate(self, limb: Option<usize>, cycle: Option<usize>, step: Option<usize>) -> Self {
        match self {
            Error::Context { limb: l, cycle: c, step: s, source } => Error::Context {
                limb: l.or(limb),
                cycle: c.or(cycle),
                step: s.or(step),
                source,
            },
            other => Error::Context { limb, cycle, step, source: Box::new(other) },
        }
    }

    /// The innermost error without annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSe3 => write!(f, "matrix is not an element of se(3)"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotATree => write!(f, "tree joints do not form a spanning tree"),
            Error::NonCanonicalOrder { joint, parent, child } => {
                write!(f, "joint {joint} connects parent body {parent} to child body {child}, violating canonical numbering")
            }
            Error::DanglingBody(b) => write!(f, "body {b} is not connected to any joint"),
            Error::NotHybrid { joint } => write!(f, "tree joint {joint} belongs to more than one loop"),
            Error::UnknownBody(b) => write!(f, "unknown body {b}"),
            Error::UnknownJoint(j) => write!(f, "unknown joint {j}"),
            Error::SingularGy { cycle, rcond } => {
                write!(f, "loop {}: dependent constraint Jacobian is singular (rcond {rcond:.3e})", cycle + 1)
            }
            Error::SingularTaskJacobian { rcond } => {
                write!(f, "task-space Jacobian is singular (rcond {rcond:.3e})")
            }
            Error::SingularActuationJacobian { rcond } => {
                write!(f, "actuation Jacobian is singular (rcond {rcond:.3e})")
            }
            Error::MaxIterationsExceeded { iterations, error, .. } => {
                write!(f, "no convergence after {iterations} iterations (error {error:.3e})")
            }
            Error::Context { limb, cycle, step, source } => {
                if let Some(s) = step {
                    write!(f, "step {s}: ")?;
                }
                if let Some(l) = limb {
                    write!(f, "limb {}: ", l + 1)?;
                }
                if let Some(c) = cycle {
                    write!(f, "loop {}: ", c + 1)?;
                }
                write!(f, "{source}")
            }
        }
    }
}
