//! Exact analysis toolkit for discrete probabilistic programs that encode
//! Bayesian networks with observations.
//!
//! The crate is organised bottom-up:
//!
//! * [`coeff`] — exact scalars: multivariate rational functions over ℚ,
//!   extended with an absorbing `∞` element and the conventions `0·∞ = 0`,
//!   `0/0 := 0`, `a/0 := ∞` used by expected-runtime calculi.
//! * [`expectation`] — finite maps from program states to coefficients
//!   (“expectations”), with guards, substitution and distribution averaging.
//! * [`pgcl`] — the guarded-command program syntax, the weakest-preexpectation
//!   transformer `wp`, the expected-runtime transformer `ert`, and bounded
//!   fixpoint-iteration orbits for loops.
//! * [`iid`] — closed-form loop rules for loops whose iterations are
//!   independent and identically distributed with respect to the
//!   postexpectation, plus the `repeat … until` quotient rules.
//! * [`bayesnet`] — discrete Bayesian networks: a BIF-subset parser, a JSON
//!   format for networks with symbolic parameters, validation, and a
//!   brute-force enumeration oracle for joint and conditional probabilities.
//! * [`translate`] — compilation of a network plus observations into a
//!   `repeat { … } until (observations)` program.
//! * [`engine`] — expected sampling times and exact posteriors computed from
//!   the translated program, parameter sweeps, and an oracle cross-check.
//! * [`sim`] — a seeded rejection-sampling interpreter whose step counting
//!   matches the `ert` cost model exactly.
//!
//! All analysis results are exact: probabilities are arbitrary-precision
//! rationals, and networks may carry named parameters, in which case results
//! are rational functions of those parameters.

pub mod bayesnet;
pub mod coeff;
pub mod engine;
pub mod expectation;
pub mod iid;
pub mod pgcl;
pub mod sim;
pub mod translate;

pub use num::BigRational;
