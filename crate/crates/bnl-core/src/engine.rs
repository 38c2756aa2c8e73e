//! Top-level exact analyses: expected sampling times, posteriors via the
//! weakest-preexpectation transformer, enumeration-based soundness checks,
//! and parameter sweeps.
//!
//! The expected sampling time (EST) of a network under observations is the
//! expected runtime of the translated rejection-sampling loop started with
//! post-runtime 0. [`est`] evaluates it along two independent code paths —
//! the full runtime transformer on the desugared loop, and the closed-form
//! quotient for `repeat … until` — and insists on exact agreement.

use crate::bayesnet::{BnError, Network};
use crate::coeff::{exact_decimal, CoeffError, Coefficient, ExtRational};
use crate::expectation::{ExpError, Expectation};
use crate::iid;
use crate::pgcl::{Program, TransformError};
use crate::translate::{self, TranslateError};
use num::BigRational;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Errors from the analysis entry points.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("analysis result is not a constant; free program variables remain")]
    NotConstant,
    #[error("parameters remain unbound: {names}")]
    ParamsRemain { names: String },
    #[error("state space too large for the enumeration oracle ({states} states, cap {cap})")]
    OracleTooLarge { states: String, cap: u64 },
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Bn(#[from] BnError),
    #[error(transparent)]
    Exp(#[from] ExpError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// An exact expected-sampling-time result.
#[derive(Debug, Clone, PartialEq)]
pub struct EstReport {
    /// The EST: a nonnegative rational, a rational function of the network
    /// parameters, or `∞` exactly when the observation has probability 0.
    pub est: Coefficient,
    pub observed: BTreeMap<String, BigRational>,
    /// AST node count of the translated program (loop body plus wrapper).
    pub program_size: usize,
    /// Branch enumeration order used by the translation.
    pub branch_order: &'static str,
}

/// The expected sampling time of `net` under `observations`: the expected
/// runtime, from zero post-runtime, of the translated rejection-sampling
/// loop.
pub fn est(
    net: &Network,
    observations: &BTreeMap<String, BigRational>,
) -> Result<EstReport, EngineError> {
    let program = translate::with_observations(net, observations)?;
    let domains = net.domains();
    // Path 1: the runtime transformer over the desugared loop.
    let via_transformer = program.ert(&Expectation::zero(domains))?;
    // Path 2: the closed-form quotient for the repeat-until wrapper.
    let (body, guard) = match &program {
        Program::RepeatUntil { body, guard } => (body.as_ref(), guard),
        other => unreachable!("translation always yields a repeat-until loop, got {other}"),
    };
    let via_quotient =
        iid::ert_repeat_until(body, guard, &Expectation::zero(domains))?;
    assert_eq!(
        via_transformer, via_quotient,
        "the two expected-runtime paths must agree exactly"
    );
    let est = via_transformer.as_constant().ok_or(EngineError::NotConstant)?.clone();
    Ok(EstReport {
        est,
        observed: observations.clone(),
        program_size: program.size(),
        branch_order: translate::BRANCH_ORDER,
    })
}

/// The posterior probability of `query` given `observations`, computed as
/// the weakest preexpectation of the translated program applied to the
/// query indicator.
pub fn posterior(
    net: &Network,
    query: &BTreeMap<String, BigRational>,
    observations: &BTreeMap<String, BigRational>,
) -> Result<Coefficient, EngineError> {
    let program = translate::with_observations(net, observations)?;
    let guard = translate::observation_guard(net, query)?;
    let post = Expectation::iverson(net.domains(), &guard)?;
    let wp = program.wp(&post)?;
    Ok(wp.as_constant().ok_or(EngineError::NotConstant)?.clone())
}

/// One posterior disagreement found by [`soundness_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub query: BTreeMap<String, BigRational>,
    pub via_wp: Coefficient,
    pub via_enumeration: Coefficient,
}

/// The outcome of a [`soundness_check`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport {
    pub trials: u64,
    pub mismatches: Vec<Mismatch>,
}

/// Full-state count above which the enumeration oracle refuses to run.
pub const ORACLE_STATE_CAP: u64 = 1_000_000;

/// Cross-checks the transformer-based posterior against brute-force
/// enumeration on `trials` random queries (seeded, deterministic). Each
/// query assigns a random value to a random nonempty subset of the
/// unobserved nodes. Disagreements are reported, not raised.
pub fn soundness_check(
    net: &Network,
    observations: &BTreeMap<String, BigRational>,
    trials: u64,
    seed: u64,
) -> Result<MismatchReport, EngineError> {
    if !net.params().is_empty() {
        return Err(EngineError::ParamsRemain { names: net.params().names().join(", ") });
    }
    let mut states: u64 = 1;
    for (var, _) in net.variables() {
        let k = net.labels(var)?.len() as u64;
        states = states.saturating_mul(k);
        if states > ORACLE_STATE_CAP {
            return Err(EngineError::OracleTooLarge {
                states: format!("> {ORACLE_STATE_CAP}"),
                cap: ORACLE_STATE_CAP,
            });
        }
    }
    let unobserved: Vec<&String> = net
        .nodes()
        .iter()
        .filter(|n| !observations.contains_key(*n))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    for _ in 0..trials {
        let mut query: BTreeMap<String, BigRational> = BTreeMap::new();
        if !unobserved.is_empty() {
            loop {
                for var in &unobserved {
                    if rng.next_u64() % 2 == 0 {
                        let k = net.labels(var)?.len() as u64;
                        let idx = rng.next_u64() % k;
                        query.insert(
                            (*var).clone(),
                            BigRational::from_integer((idx as i64).into()),
                        );
                    }
                }
                if !query.is_empty() {
                    break;
                }
            }
        }
        let via_wp = posterior(net, &query, observations)?;
        let via_enumeration = net.conditional_prob(&query, observations)?;
        if via_wp != via_enumeration {
            mismatches.push(Mismatch { query, via_wp, via_enumeration });
        }
    }
    Ok(MismatchReport { trials, mismatches })
}

/// One grid point of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepPoint {
    Value(ExtRational),
    /// The EST is undefined at this point (vanishing denominator or a
    /// negative, out-of-model value).
    Pole,
}

/// Evaluates the symbolic EST at each grid value of `param`. Undefined
/// points become [`SweepPoint::Pole`] entries instead of aborting the sweep.
pub fn sweep(
    net: &Network,
    observations: &BTreeMap<String, BigRational>,
    param: &str,
    grid: &[BigRational],
) -> Result<Vec<(BigRational, SweepPoint)>, EngineError> {
    if net.params().index_of(param).is_none() {
        return Err(EngineError::Bn(BnError::UndeclaredParameter {
            name: param.to_string(),
        }));
    }
    let report = est(net, observations)?;
    let est_params = report.est.params();
    let leftover: Vec<&str> = est_params
        .names()
        .iter()
        .filter(|n| n.as_str() != param)
        .map(|n| n.as_str())
        .collect();
    if !leftover.is_empty() {
        return Err(EngineError::ParamsRemain { names: leftover.join(", ") });
    }
    Ok(grid
        .iter()
        .map(|g| {
            let point = BTreeMap::from([(param.to_string(), g.clone())]);
            match report.est.eval_at(&point) {
                Ok(value) => (g.clone(), SweepPoint::Value(value)),
                Err(_) => (g.clone(), SweepPoint::Pole),
            }
        })
        .collect())
}

/// Renders a rational exactly: its terminating decimal expansion when one
/// exists, otherwise `numerator/denominator`.
pub fn decimal_or_fraction(q: &BigRational) -> String {
    exact_decimal(q).unwrap_or_else(|| q.to_string())
}

/// Renders sweep rows as CSV with header `param,est`; infinite ESTs print
/// as `inf`, undefined points as `pole`.
pub fn render_sweep_csv(rows: &[(BigRational, SweepPoint)]) -> String {
    let mut out = String::from("param,est\n");
    for (g, point) in rows {
        let value = match point {
            SweepPoint::Value(ExtRational::Finite(q)) => decimal_or_fraction(q),
            SweepPoint::Value(ExtRational::Infinity) => "inf".to_string(),
            SweepPoint::Pole => "pole".to_string(),
        };
        out.push_str(&format!("{},{}\n", decimal_or_fraction(g), value));
    }
    out
}

/// Expands a grid specification `start:end:step` (exact rationals, step
/// positive) into the values `start, start+step, …` up to and including
/// `end` when the step divides the span exactly. A bare rational denotes a
/// single-point grid; comma-separated pieces concatenate.
pub fn parse_grid(spec: &str) -> Result<Vec<BigRational>, CoeffError> {
    use crate::coeff::parse_rational;
    let mut out = Vec::new();
    for piece in spec.split(',') {
        let parts: Vec<&str> = piece.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(parse_rational(single)?),
            [start, end, step] => {
                let start = parse_rational(start)?;
                let end = parse_rational(end)?;
                let step = parse_rational(step)?;
                if step <= BigRational::from_integer(0.into()) {
                    return Err(CoeffError::InvalidNumber {
                        text: format!("grid step must be positive in `{piece}`"),
                    });
                }
                let mut v = start;
                while v <= end {
                    out.push(v.clone());
                    v += &step;
                }
            }
            _ => {
                return Err(CoeffError::InvalidNumber {
                    text: format!("grid piece `{piece}` is not `value` or `start:end:step`"),
                })
            }
        }
    }
    Ok(out)
}
