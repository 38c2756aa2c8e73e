//! Seeded rejection-sampling interpreter whose step counting mirrors the
//! expected-runtime cost model: one unit per `skip`, one per assignment, one
//! per guard evaluation (including every `until` check), so the sample mean
//! of step counts is an unbiased estimator of the program's exact expected
//! runtime.
//!
//! Reproducibility contract: the random source is ChaCha8 (`rand_chacha`),
//! seeded via `seed_from_u64`. A draw from a distribution expression takes
//! one uniform 64-bit word `r` and selects the first value whose cumulative
//! probability `c` satisfies `r < ⌊c·2⁶⁴⌋`, with the final threshold forced
//! to `2⁶⁴`; each value is therefore chosen with probability within `2⁻⁶⁴`
//! of its exact weight, and identically on every platform. Sharded runs
//! derive the seed of shard `i` (0-based) as
//! `seed XOR (0x9E3779B97F4A7C15 · (i+1) mod 2⁶⁴)`; results are
//! deterministic for a fixed `(seed, trials, shard count)` plan.

use crate::coeff::Coefficient;
use crate::expectation::{ExpError, Guard, VarDomain};
use crate::pgcl::{DistExpr, Program};
use num::{BigInt, BigRational, FromPrimitive, Integer, ToPrimitive, Zero};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

/// Two-sided 99% normal quantile used for the confidence half-width.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

/// Errors from simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("all {trials} trials hit the step limit {limit}")]
    AllTrialsTruncated { trials: u64, limit: u64 },
    #[error("cannot simulate: at least one trial is required")]
    NoTrials,
    #[error("cannot simulate a program with unbound parameters or infinite weights ({detail})")]
    NotConcrete { detail: String },
    #[error(transparent)]
    Exp(#[from] ExpError),
}

/// Tallied final states of completed trials: `vars` names the tuple
/// positions, `counts` maps value tuples to trial counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    pub vars: Vec<String>,
    pub counts: BTreeMap<Vec<BigRational>, u64>,
}

impl FrequencyTable {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// The result of a seeded simulation run. Statistics cover completed trials
/// only; trials that hit the step limit are counted in `truncated` and
/// excluded from the mean, variance, and frequency table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trials: u64,
    pub truncated: u64,
    pub mean_steps: BigRational,
    pub sample_variance: BigRational,
    /// `Z_99 · sqrt(sample_variance / completed)`, computed in `f64` and
    /// stored as the nearest rational.
    pub half_width_99: BigRational,
    /// Final full states of completed trials, in domain declaration order.
    pub posterior_frequencies: FrequencyTable,
}

impl SimResult {
    pub fn completed(&self) -> u64 {
        self.trials - self.truncated
    }
}

// ---------------------------------------------------------------------------
// Compilation to an interned form
// ---------------------------------------------------------------------------

enum CGuard {
    Const(bool),
    Eq(usize, u16),
    InSet(Vec<usize>, HashSet<Vec<u16>>),
    Not(Box<CGuard>),
    And(Box<CGuard>, Box<CGuard>),
    Or(Box<CGuard>, Box<CGuard>),
}

impl CGuard {
    fn eval(&self, state: &[u16]) -> bool {
        match self {
            CGuard::Const(b) => *b,
            CGuard::Eq(v, i) => state[*v] == *i,
            CGuard::InSet(vars, set) => {
                let tuple: Vec<u16> = vars.iter().map(|&v| state[v]).collect();
                set.contains(&tuple)
            }
            CGuard::Not(g) => !g.eval(state),
            CGuard::And(a, b) => a.eval(state) && b.eval(state),
            CGuard::Or(a, b) => a.eval(state) || b.eval(state),
        }
    }
}

struct CDist {
    var: usize,
    /// `(threshold, value index)` pairs with strictly increasing thresholds;
    /// the final threshold is `2⁶⁴`.
    thresholds: Vec<(u128, u16)>,
}

impl CDist {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u16 {
        let r = rng.next_u64() as u128;
        for (t, idx) in &self.thresholds {
            if r < *t {
                return *idx;
            }
        }
        unreachable!("final threshold is 2^64")
    }
}

enum CProg {
    Skip,
    Diverge,
    Assign(CDist),
    Seq(Box<CProg>, Box<CProg>),
    If(CGuard, Box<CProg>, Box<CProg>),
    While(CGuard, Box<CProg>),
    RepeatUntil(Box<CProg>, CGuard),
}

fn compile_guard(guard: &Guard, domains: &VarDomain) -> Result<CGuard, SimError> {
    Ok(match guard {
        Guard::True => CGuard::Const(true),
        Guard::False => CGuard::Const(false),
        Guard::Eq { var, value } => {
            let v = var_position(domains, var)?;
            let i = domains.value_index(var, value)?;
            CGuard::Eq(v, i as u16)
        }
        Guard::InSet { vars, set } => {
            let idxs: Vec<usize> = vars
                .iter()
                .map(|v| var_position(domains, v))
                .collect::<Result<_, _>>()?;
            let mut tuples = HashSet::new();
            for tuple in set {
                let interned: Vec<u16> = vars
                    .iter()
                    .zip(tuple)
                    .map(|(v, val)| Ok::<u16, ExpError>(domains.value_index(v, val)? as u16))
                    .collect::<Result<_, _>>()?;
                tuples.insert(interned);
            }
            CGuard::InSet(idxs, tuples)
        }
        Guard::Not(g) => CGuard::Not(Box::new(compile_guard(g, domains)?)),
        Guard::And(a, b) => CGuard::And(
            Box::new(compile_guard(a, domains)?),
            Box::new(compile_guard(b, domains)?),
        ),
        Guard::Or(a, b) => CGuard::Or(
            Box::new(compile_guard(a, domains)?),
            Box::new(compile_guard(b, domains)?),
        ),
    })
}

fn var_position(domains: &VarDomain, var: &str) -> Result<usize, SimError> {
    domains
        .var_index(var)
        .ok_or_else(|| SimError::Exp(ExpError::UnknownVariable { name: var.to_string() }))
}

fn compile_dist(var: &str, dist: &DistExpr, domains: &VarDomain) -> Result<CDist, SimError> {
    let var_idx = var_position(domains, var)?;
    let two64 = BigInt::from(1u8) << 64;
    let mut cum = BigRational::zero();
    let mut thresholds = Vec::new();
    for (prob, value) in dist.items() {
        let p = match prob {
            Coefficient::Infinity => None,
            _ => prob.as_constant(),
        }
        .ok_or_else(|| SimError::NotConcrete { detail: format!("weight {prob} of `{var}`") })?;
        cum += p;
        let scaled = Integer::div_floor(&(cum.numer() * &two64), cum.denom());
        let t = scaled.to_u128().expect("cumulative mass is at most 1");
        thresholds.push((t, domains.value_index(var, value)? as u16));
    }
    let last = thresholds.last_mut().expect("distributions are nonempty");
    last.0 = 1u128 << 64;
    Ok(CDist { var: var_idx, thresholds })
}

fn compile(program: &Program, domains: &VarDomain) -> Result<CProg, SimError> {
    Ok(match program {
        Program::Skip => CProg::Skip,
        Program::Diverge => CProg::Diverge,
        Program::Assign { var, dist } => CProg::Assign(compile_dist(var, dist, domains)?),
        Program::Seq(a, b) => CProg::Seq(
            Box::new(compile(a, domains)?),
            Box::new(compile(b, domains)?),
        ),
        Program::If { guard, then_branch, else_branch } => CProg::If(
            compile_guard(guard, domains)?,
            Box::new(compile(then_branch, domains)?),
            Box::new(compile(else_branch, domains)?),
        ),
        Program::While { guard, body } => CProg::While(
            compile_guard(guard, domains)?,
            Box::new(compile(body, domains)?),
        ),
        Program::RepeatUntil { body, guard } => CProg::RepeatUntil(
            Box::new(compile(body, domains)?),
            compile_guard(guard, domains)?,
        ),
    })
}

struct Truncated;

/// Runs one fragment, charging steps per the runtime cost model.
fn exec(
    prog: &CProg,
    state: &mut [u16],
    rng: &mut ChaCha8Rng,
    steps: &mut u64,
    cap: u64,
) -> Result<(), Truncated> {
    let charge = |steps: &mut u64| {
        *steps += 1;
        if *steps > cap {
            Err(Truncated)
        } else {
            Ok(())
        }
    };
    match prog {
        CProg::Skip => charge(steps),
        CProg::Diverge => {
            *steps = cap;
            Err(Truncated)
        }
        CProg::Assign(dist) => {
            charge(steps)?;
            state[dist.var] = dist.draw(rng);
            Ok(())
        }
        CProg::Seq(a, b) => {
            exec(a, state, rng, steps, cap)?;
            exec(b, state, rng, steps, cap)
        }
        CProg::If(guard, then_branch, else_branch) => {
            charge(steps)?;
            if guard.eval(state) {
                exec(then_branch, state, rng, steps, cap)
            } else {
                exec(else_branch, state, rng, steps, cap)
            }
        }
        CProg::While(guard, body) => loop {
            charge(steps)?;
            if !guard.eval(state) {
                return Ok(());
            }
            exec(body, state, rng, steps, cap)?;
        },
        CProg::RepeatUntil(body, until) => loop {
            exec(body, state, rng, steps, cap)?;
            charge(steps)?;
            if until.eval(state) {
                return Ok(());
            }
        },
    }
}

fn shard_seed(seed: u64, shard: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(shard + 1)
}

struct ShardStats {
    sum: u128,
    sum_sq: u128,
    truncated: u64,
    counts: BTreeMap<Vec<u16>, u64>,
}

fn run_shard(
    prog: &CProg,
    var_count: usize,
    seed: u64,
    trials: u64,
    max_steps: u64,
) -> ShardStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ShardStats {
        sum: 0,
        sum_sq: 0,
        truncated: 0,
        counts: BTreeMap::new(),
    };
    let mut state = vec![0u16; var_count];
    for _ in 0..trials {
        // Every trial starts from the canonical initial state: each variable
        // at the first value of its domain.
        state.iter_mut().for_each(|s| *s = 0);
        let mut steps = 0u64;
        match exec(prog, &mut state, &mut rng, &mut steps, max_steps) {
            Ok(()) => {
                stats.sum += steps as u128;
                stats.sum_sq += (steps as u128) * (steps as u128);
                *stats.counts.entry(state.clone()).or_insert(0) += 1;
            }
            Err(Truncated) => stats.truncated += 1,
        }
    }
    stats
}

/// Simulates `trials` runs of `program` over `domains` from `seed`, in a
/// single shard. See the module docs for the reproducibility contract.
pub fn simulate(
    program: &Program,
    domains: &Arc<VarDomain>,
    seed: u64,
    trials: u64,
    max_steps: u64,
) -> Result<SimResult, SimError> {
    simulate_sharded(program, domains, seed, trials, max_steps, 1)
}

/// Simulates with `shards` independent trial blocks under derived per-shard
/// seeds. The result is deterministic for a fixed `(seed, trials, shards)`
/// plan.
pub fn simulate_sharded(
    program: &Program,
    domains: &Arc<VarDomain>,
    seed: u64,
    trials: u64,
    max_steps: u64,
    shards: u64,
) -> Result<SimResult, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let shards = shards.clamp(1, trials);
    let prog = compile(program, domains)?;
    let var_count = domains.var_count();
    let base = trials / shards;
    let extra = trials % shards;
    let mut sum: u128 = 0;
    let mut sum_sq: u128 = 0;
    let mut truncated: u64 = 0;
    let mut counts: BTreeMap<Vec<u16>, u64> = BTreeMap::new();
    for shard in 0..shards {
        let shard_trials = base + u64::from(shard < extra);
        let stats = run_shard(&prog, var_count, shard_seed(seed, shard), shard_trials, max_steps);
        sum += stats.sum;
        sum_sq += stats.sum_sq;
        truncated += stats.truncated;
        for (k, v) in stats.counts {
            *counts.entry(k).or_insert(0) += v;
        }
    }
    let completed = trials - truncated;
    if completed == 0 {
        return Err(SimError::AllTrialsTruncated { trials, limit: max_steps });
    }
    let n = BigRational::from_integer(BigInt::from(completed));
    let sum_r = BigRational::from_integer(BigInt::from(sum));
    let sum_sq_r = BigRational::from_integer(BigInt::from(sum_sq));
    let mean_steps = &sum_r / &n;
    let sample_variance = if completed >= 2 {
        (&sum_sq_r - &sum_r * &sum_r / &n)
            / BigRational::from_integer(BigInt::from(completed - 1))
    } else {
        BigRational::zero()
    };
    let hw = Z_99
        * (sample_variance.to_f64().unwrap_or(f64::MAX) / completed as f64).sqrt();
    let half_width_99 = BigRational::from_f64(hw).unwrap_or_else(BigRational::zero);
    let vars: Vec<String> = domains.names().map(str::to_string).collect();
    let mut freq = BTreeMap::new();
    for (key, count) in counts {
        let tuple: Vec<BigRational> = key
            .iter()
            .enumerate()
            .map(|(v, &i)| domains.values_by_index(v)[i as usize].clone())
            .collect();
        freq.insert(tuple, count);
    }
    Ok(SimResult {
        trials,
        truncated,
        mean_steps,
        sample_variance,
        half_width_99,
        posterior_frequencies: FrequencyTable { vars, counts: freq },
    })
}

/// Tallies the final values of `query_vars` over completed trials.
pub fn sample_posterior(
    program: &Program,
    domains: &Arc<VarDomain>,
    query_vars: &[String],
    seed: u64,
    trials: u64,
    max_steps: u64,
) -> Result<FrequencyTable, SimError> {
    let positions: Vec<usize> = query_vars
        .iter()
        .map(|v| var_position(domains, v))
        .collect::<Result<_, _>>()?;
    let result = simulate(program, domains, seed, trials, max_steps)?;
    let mut counts: BTreeMap<Vec<BigRational>, u64> = BTreeMap::new();
    for (state, count) in &result.posterior_frequencies.counts {
        let key: Vec<BigRational> = positions.iter().map(|&p| state[p].clone()).collect();
        *counts.entry(key).or_insert(0) += count;
    }
    Ok(FrequencyTable { vars: query_vars.to_vec(), counts })
}
