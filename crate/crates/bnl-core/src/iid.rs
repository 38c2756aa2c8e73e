//! Closed-form rules for f-i.i.d. loops.
//!
//! A loop `while (φ) { C }` is *f-i.i.d.* when both `wp(C, [φ])` and
//! `wp(C, [¬φ]·f)` are unaffected by `C` — every iteration then behaves, with
//! respect to the postexpectation `f`, like an independent copy of the first
//! one, and the loop semantics collapses to a geometric-series quotient:
//!
//! * `wp(while (φ) { C }, f) = [φ] · wp(C, [¬φ]·f) / (1 − wp(C, [φ])) + [¬φ]·f`
//! * `ert(while (φ) { C }, f) = 1 + [φ] · (1 + ert(C, [¬φ]·f)) / (1 − wp(C, [φ])) + [¬φ]·f`
//!
//! with the convention `0/0 := 0`, `a/0 := ∞` applied cell by cell. The `ert`
//! rule additionally requires the body to terminate universally
//! (`wp(C, 1) = 1`) and to run in iteration-independent expected time
//! (`ert(C, 0)` unaffected by `C`).
//!
//! `repeat { C } until (ψ)`, definitionally `C ; while (¬ψ) { C }`, admits the
//! equivalent quotient forms used for expected sampling times:
//!
//! * `wp(repeat C until ψ, f) = wp(C, [ψ]·f) / wp(C, [ψ])`
//! * `ert(repeat C until ψ, f) = (1 + ert(C, [ψ]·f)) / wp(C, [ψ])`
//!
//! Premise violations are reported as hard errors, never silently ignored.

use crate::expectation::{Expectation, Guard};
use crate::pgcl::{Program, TransformError};
use thiserror::Error;

/// Premise violations of the closed-form loop rules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IidError {
    /// The loop is not f-i.i.d. for the requested postexpectation.
    #[error("loop is not f-i.i.d.: {detail}")]
    NotFIID { detail: String },
    /// The loop body is not universally terminating: `wp(body, 1) ≠ 1`.
    #[error("loop body may diverge: wp(body, 1) = {mass}")]
    BodyMayDiverge { mass: String },
    /// The expected runtime of one iteration depends on variables the body
    /// writes: `ert(body, 0)` is not unaffected by the body.
    #[error("iteration time varies across iterations: ert(body, 0) = {runtime} depends on modified variables")]
    VaryingIterationTime { runtime: String },
}

/// `f ⋈ C`: the expectation does not depend on any variable the program
/// writes.
pub fn unaffected(f: &Expectation, c: &Program) -> bool {
    let modified = c.modified_vars();
    f.support_names().iter().all(|v| !modified.contains(*v))
}

/// Checks the f-i.i.d. premise of `while (guard) { body }` with respect to
/// the postexpectation `f`; `None` means the premise holds, otherwise a
/// human-readable witness of the violation is returned.
fn iid_witness(
    guard: &Guard,
    body: &Program,
    f: &Expectation,
) -> Result<Option<String>, TransformError> {
    let domains = f.domains();
    let on_guard = body.wp(&Expectation::iverson(domains, guard)?)?;
    if !unaffected(&on_guard, body) {
        return Ok(Some(format!(
            "wp(body, [φ]) = {on_guard} depends on modified variables"
        )));
    }
    let niv = Expectation::iverson(domains, &Guard::not(guard.clone()))?;
    let on_exit = body.wp(&niv.mul(f)?)?;
    if !unaffected(&on_exit, body) {
        return Ok(Some(format!(
            "wp(body, [¬φ]·f) = {on_exit} depends on modified variables"
        )));
    }
    Ok(None)
}

/// Whether `while (guard) { body }` is f-i.i.d. with respect to `f`.
pub fn is_f_iid(guard: &Guard, body: &Program, f: &Expectation) -> Result<bool, TransformError> {
    Ok(iid_witness(guard, body, f)?.is_none())
}

/// The weakest preexpectation of an f-i.i.d. loop:
/// `[φ] · wp(C, [¬φ]·f) / (1 − wp(C, [φ])) + [¬φ]·f`, cell-wise with
/// `0/0 := 0` and `a/0 := ∞`.
pub fn wp_while_iid(
    guard: &Guard,
    body: &Program,
    f: &Expectation,
) -> Result<Expectation, TransformError> {
    if let Some(detail) = iid_witness(guard, body, f)? {
        return Err(IidError::NotFIID { detail }.into());
    }
    let domains = f.domains();
    let iv = Expectation::iverson(domains, guard)?;
    let niv = Expectation::iverson(domains, &Guard::not(guard.clone()))?;
    let exit = niv.mul(f)?;
    let numer = body.wp(&exit)?;
    let stay = body.wp(&iv)?;
    let denom = Expectation::one(domains).sub(&stay)?;
    let quotient = numer.zip_with(&denom, |a, b| Ok(a.guarded_div(b)?))?;
    Ok(iv.mul(&quotient)?.add(&exit)?)
}

/// The expected runtime of an f-i.i.d., universally terminating loop with
/// iteration-independent body runtime:
/// `1 + [φ] · (1 + ert(C, [¬φ]·f)) / (1 − wp(C, [φ])) + [¬φ]·f`.
pub fn ert_while_iid(
    guard: &Guard,
    body: &Program,
    f: &Expectation,
) -> Result<Expectation, TransformError> {
    if let Some(detail) = iid_witness(guard, body, f)? {
        return Err(IidError::NotFIID { detail }.into());
    }
    let domains = f.domains();
    check_ert_premises(body, domains)?;
    let iv = Expectation::iverson(domains, guard)?;
    let niv = Expectation::iverson(domains, &Guard::not(guard.clone()))?;
    let exit = niv.mul(f)?;
    let one = crate::coeff::Coefficient::one();
    let numer = body.ert(&exit)?.plus_const(&one);
    let stay = body.wp(&iv)?;
    let denom = Expectation::one(domains).sub(&stay)?;
    let quotient = numer.zip_with(&denom, |a, b| Ok(a.guarded_div(b)?))?;
    Ok(iv.mul(&quotient)?.plus_const(&one).add(&niv.mul(f)?)?)
}

fn check_ert_premises(
    body: &Program,
    domains: &std::sync::Arc<crate::expectation::VarDomain>,
) -> Result<(), TransformError> {
    let mass = body.wp(&Expectation::one(domains))?;
    if !mass.is_one() {
        return Err(IidError::BodyMayDiverge { mass: mass.to_string() }.into());
    }
    let runtime = body.ert(&Expectation::zero(domains))?;
    if !unaffected(&runtime, body) {
        return Err(IidError::VaryingIterationTime { runtime: runtime.to_string() }.into());
    }
    Ok(())
}

/// The expected runtime of `repeat { body } until (ψ)` with postruntime `f`:
/// `(1 + ert(body, [ψ]·f)) / wp(body, [ψ])`, cell-wise with `0/0 := 0` and
/// `a/0 := ∞`. Premises are those of [`ert_while_iid`] for the desugared
/// loop `while (¬ψ) { body }`.
pub fn ert_repeat_until(
    body: &Program,
    until: &Guard,
    f: &Expectation,
) -> Result<Expectation, TransformError> {
    let loop_guard = Guard::not(until.clone());
    if let Some(detail) = iid_witness(&loop_guard, body, f)? {
        return Err(IidError::NotFIID { detail }.into());
    }
    let domains = f.domains();
    check_ert_premises(body, domains)?;
    let iv_until = Expectation::iverson(domains, until)?;
    let one = crate::coeff::Coefficient::one();
    let numer = body.ert(&iv_until.mul(f)?)?.plus_const(&one);
    let denom = body.wp(&iv_until)?;
    numer.zip_with(&denom, |a, b| Ok(a.guarded_div(b)?)).map_err(Into::into)
}

/// The weakest preexpectation of `repeat { body } until (ψ)`:
/// `wp(body, [ψ]·f) / wp(body, [ψ])` cell-wise, under the same premises as
/// [`ert_repeat_until`].
pub fn wp_repeat_until(
    body: &Program,
    until: &Guard,
    f: &Expectation,
) -> Result<Expectation, TransformError> {
    let loop_guard = Guard::not(until.clone());
    if let Some(detail) = iid_witness(&loop_guard, body, f)? {
        return Err(IidError::NotFIID { detail }.into());
    }
    let domains = f.domains();
    check_ert_premises(body, domains)?;
    let iv_until = Expectation::iverson(domains, until)?;
    let numer = body.wp(&iv_until.mul(f)?)?;
    let denom = body.wp(&iv_until)?;
    numer.zip_with(&denom, |a, b| Ok(a.guarded_div(b)?)).map_err(Into::into)
}
