//! Exact randomized fair-division mechanisms for indivisible items.
//!
//! The crate provides truthful lottery mechanisms (two agents, three agents,
//! general `n`, and bi-valued valuations), exact fairness and efficiency
//! verifiers, realizability checks that decompose fractional allocations
//! into lotteries of fair integral allocations (or refute with an exact
//! certificate), and a brute-force truthfulness harness. All arithmetic is
//! over arbitrary-precision rationals; nothing is ever rounded.

pub mod bivalued;
pub mod error;
pub mod harness;
pub mod numeric;

pub mod fairness;
pub mod graphs;
pub mod mech_n;
pub mod mech_three;
pub mod mech_two;
pub mod model;
pub mod realize;

pub use error::{Error, Result};
pub use model::{
    expected_utility, marginals, pad_to_multiple, strip, strip_fractional, DummyPad,
    FractionalAllocation, Instance, IntegralAllocation, Lottery, LotteryEntry,
};
pub use numeric::Rational;

/// Cap on exhaustive enumerations (`n^m` allocation scans, misreport
/// families). Overridable through the `FAIRDIV_ENUM_BUDGET` environment
/// variable.
pub fn enumeration_budget() -> u64 {
    std::env::var("FAIRDIV_ENUM_BUDGET")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1_000_000)
}
