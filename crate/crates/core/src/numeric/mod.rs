//! Exact numeric kernel: arbitrary-precision rationals, dense linear
//! algebra, and a rational-arithmetic LP solver producing vertex solutions
//! and infeasibility certificates.

pub mod linalg;
pub mod lp;
pub mod rational;

pub use lp::{
    move_to_adjacent_vertex, solve_vertex, BoundSide, FarkasCertificate, LinearSystem, LpOutcome,
    LpStatus, TightBound,
};
pub use rational::{rat, Rational};
