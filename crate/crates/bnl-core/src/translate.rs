//! Translation of Bayesian networks into loop-free sampling programs, and of
//! observations into rejection-sampling loops around them.
//!
//! Each node becomes a guarded block of assignments: the block branches on
//! the node's parent values and draws the node from the matching CPT row.
//! Blocks are emitted in dependency rounds — all current roots (name order),
//! then the roots of the remaining network, and so on — so every variable is
//! assigned before it is read. Observations wrap the sampling program in a
//! `repeat … until (observations)` loop, the program-level counterpart of
//! rejection sampling.

use crate::bayesnet::{BnError, Network};
use crate::expectation::Guard;
use crate::pgcl::{DistExpr, PgclError, Program};
use num::BigRational;
use std::collections::BTreeMap;
use thiserror::Error;

/// The branch enumeration order used by [`block_of`]: parent value tuples in
/// lexicographic order (first declared parent most significant, values in
/// declaration order), with the last tuple as the unguarded `else` branch.
pub const BRANCH_ORDER: &str = "lex";

/// Errors from network translation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranslateError {
    #[error("cannot translate a network with inputs ({inputs}); every variable needs a CPT")]
    HasInputs { inputs: String },
    #[error("observed variable `{name}` is not a node of the network")]
    ObservedNonNode { name: String },
    #[error(transparent)]
    Bn(#[from] BnError),
    #[error(transparent)]
    Pgcl(#[from] PgclError),
}

/// The guard selecting one CPT row: a conjunction of equality atoms over the
/// node's parents in declared parent order.
pub fn guard_of(net: &Network, node: &str, parent_values: &[usize]) -> Result<Guard, TranslateError> {
    let parents = net.dep(node)?;
    debug_assert_eq!(parents.len(), parent_values.len());
    Ok(Guard::conj(
        parents
            .iter()
            .zip(parent_values)
            .map(|(p, &i)| Guard::atom(p, BigRational::from_integer((i as i64).into()))),
    ))
}

/// The assignment drawing `node` from the CPT row selected by
/// `parent_values`.
pub fn assign_of(
    net: &Network,
    node: &str,
    parent_values: &[usize],
) -> Result<Program, TranslateError> {
    let row = net
        .cpt(node)?
        .row(parent_values)
        .expect("validated CPTs are complete")
        .to_vec();
    let values = net.domains().values(node).map_err(BnError::from)?;
    let dist = DistExpr::new(row.into_iter().zip(values.iter().cloned()).collect())?;
    Ok(Program::assign(node, dist))
}

/// The full sampling block for one node: branches over all parent value
/// tuples in [`BRANCH_ORDER`], assigning from the matching CPT row; the last
/// tuple becomes the unguarded `else` branch. Parentless nodes yield a plain
/// assignment.
pub fn block_of(net: &Network, node: &str) -> Result<Program, TranslateError> {
    let parents = net.dep(node)?.to_vec();
    let sizes: Vec<usize> = parents
        .iter()
        .map(|p| Ok::<usize, BnError>(net.labels(p)?.len()))
        .collect::<Result<_, _>>()?;
    let mut combos: Vec<Vec<usize>> = Vec::new();
    let mut idx = vec![0usize; sizes.len()];
    loop {
        combos.push(idx.clone());
        let mut k = sizes.len();
        loop {
            if k == 0 {
                let last = combos.pop().expect("at least one combination");
                let mut acc = assign_of(net, node, &last)?;
                for combo in combos.into_iter().rev() {
                    acc = Program::if_else(
                        guard_of(net, node, &combo)?,
                        assign_of(net, node, &combo)?,
                        acc,
                    );
                }
                return Ok(acc);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Translates a fully specified network into a loop-free sampling program:
/// node blocks sequenced in dependency rounds, roots of each round in name
/// order.
pub fn program_of(net: &Network) -> Result<Program, TranslateError> {
    let inputs = net.inputs();
    if !inputs.is_empty() {
        return Err(TranslateError::HasInputs { inputs: inputs.join(", ") });
    }
    let mut blocks = Vec::new();
    let mut current = net.clone();
    while !current.nodes().is_empty() {
        for root in current.roots() {
            // CPT rows live in the original network; `current` only tracks
            // which nodes remain.
            blocks.push(block_of(net, &root)?);
        }
        current = current.peel();
    }
    Ok(Program::seq_all(blocks))
}

/// The observation guard: a conjunction of equality atoms in variable name
/// order.
pub fn observation_guard(
    net: &Network,
    observations: &BTreeMap<String, BigRational>,
) -> Result<Guard, TranslateError> {
    let mut atoms = Vec::new();
    for (var, value) in observations {
        if !net.nodes().contains(var) {
            return Err(TranslateError::ObservedNonNode { name: var.clone() });
        }
        net.domains().value_index(var, value).map_err(BnError::from)?;
        atoms.push(Guard::atom(var, value.clone()));
    }
    Ok(Guard::conj(atoms))
}

/// Translates a network with observations into a rejection-sampling loop:
/// `repeat { <sampling program> } until (<observations>)`. With no
/// observations the loop guard is `true` and the loop runs exactly once.
pub fn with_observations(
    net: &Network,
    observations: &BTreeMap<String, BigRational>,
) -> Result<Program, TranslateError> {
    let body = program_of(net)?;
    let guard = observation_guard(net, observations)?;
    Ok(Program::repeat_until(body, guard))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesnet::parse_bif;
    use crate::coeff::{parse_rational, Coefficient};
    use crate::expectation::Expectation;
    use num::BigRational;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    const CHAIN_BIF: &str = r#"
network chain {
}
variable A {
  type discrete [ 2 ] { yes, no };
}
variable B {
  type discrete [ 2 ] { on, off };
}
probability ( A ) {
  table 0.3, 0.7;
}
probability ( B | A ) {
  (yes) 0.9, 0.1;
  (no) 0.25, 0.75;
}
"#;

    const DIAMOND_BIF: &str = r#"
network diamond {
}
variable A {
  type discrete [ 2 ] { 0, 1 };
}
variable B {
  type discrete [ 2 ] { 0, 1 };
}
variable C {
  type discrete [ 2 ] { 0, 1 };
}
variable D {
  type discrete [ 2 ] { 0, 1 };
}
probability ( A ) {
  table 0.5, 0.5;
}
probability ( B | A ) {
  (0) 0.8, 0.2;
  (1) 0.1, 0.9;
}
probability ( C | A ) {
  (0) 0.3, 0.7;
  (1) 0.6, 0.4;
}
probability ( D | C, B ) {
  (0, 0) 0.9, 0.1;
  (0, 1) 0.4, 0.6;
  (1, 0) 0.2, 0.8;
  (1, 1) 0.05, 0.95;
}
"#;

    #[test]
    fn chain_translates_to_assign_then_branch() {
        let net = parse_bif(CHAIN_BIF).unwrap();
        let prog = program_of(&net).unwrap();
        let text = prog.to_string();
        assert_eq!(
            text,
            "A := 3/10·⟨0⟩ + 7/10·⟨1⟩;\n\
             if (A = 0) {\n  B := 9/10·⟨0⟩ + 1/10·⟨1⟩\n} else {\n  B := 1/4·⟨0⟩ + 3/4·⟨1⟩\n}"
        );
    }

    #[test]
    fn wp_of_translation_matches_enumeration() {
        let net = parse_bif(DIAMOND_BIF).unwrap();
        let prog = program_of(&net).unwrap();
        for var in ["A", "B", "C", "D"] {
            for value in ["0", "1"] {
                let post = Expectation::iverson(
                    net.domains(),
                    &Guard::atom(var, rat(value)),
                )
                .unwrap();
                let wp = prog.wp(&post).unwrap();
                let marginal = net
                    .conditional_prob(
                        &BTreeMap::from([(var.to_string(), rat(value))]),
                        &BTreeMap::new(),
                    )
                    .unwrap();
                assert_eq!(
                    wp.as_constant(),
                    Some(&marginal),
                    "marginal of {var}={value}"
                );
            }
        }
    }

    #[test]
    fn rounds_follow_peeling_and_name_order() {
        let net = parse_bif(DIAMOND_BIF).unwrap();
        let prog = program_of(&net).unwrap();
        let text = prog.to_string();
        let pos = |needle: &str| text.find(needle).unwrap_or_else(|| panic!("{needle} missing"));
        // Round 1: A. Round 2: B before C (name order). Round 3: D.
        assert!(pos("A :=") < pos("B :="));
        assert!(pos("B :=") < pos("C :="));
        assert!(text.match_indices("C :=").map(|(i, _)| i).max().unwrap() < pos("(C = 0"));
    }

    #[test]
    fn branches_enumerate_in_lex_order_with_unguarded_else() {
        let net = parse_bif(DIAMOND_BIF).unwrap();
        let block = block_of(&net, "D").unwrap();
        let text = block.to_string();
        // Guard conjunctions follow the declared parent order (C, B); the
        // (1, 1) combination is the plain else branch.
        let g00 = text.find("(C = 0 ∧ B = 0)").expect("first guard");
        let g01 = text.find("(C = 0 ∧ B = 1)").expect("second guard");
        let g10 = text.find("(C = 1 ∧ B = 0)").expect("third guard");
        assert!(g00 < g01 && g01 < g10);
        assert!(!text.contains("(C = 1 ∧ B = 1)"));
        assert_eq!(text.matches("if").count(), 3);
        assert_eq!(BRANCH_ORDER, "lex");
    }

    #[test]
    fn observation_loop_posterior_matches_enumeration() {
        let net = parse_bif(CHAIN_BIF).unwrap();
        let obs = BTreeMap::from([("B".to_string(), rat("0"))]);
        let prog = with_observations(&net, &obs).unwrap();
        assert!(matches!(prog, Program::RepeatUntil { .. }));
        let post =
            Expectation::iverson(net.domains(), &Guard::atom("A", rat("0"))).unwrap();
        let wp = prog.wp(&post).unwrap();
        let expected = net
            .conditional_prob(
                &BTreeMap::from([("A".to_string(), rat("0"))]),
                &BTreeMap::from([("B".to_string(), rat("0"))]),
            )
            .unwrap();
        assert_eq!(wp.as_constant(), Some(&expected));
        assert_eq!(expected, Coefficient::from_rational(rat("54/89")));
    }

    #[test]
    fn empty_observation_set_yields_a_true_guard() {
        let net = parse_bif(CHAIN_BIF).unwrap();
        let prog = with_observations(&net, &BTreeMap::new()).unwrap();
        match &prog {
            Program::RepeatUntil { guard, .. } => assert_eq!(guard, &Guard::True),
            other => panic!("expected a repeat-until loop, got {other}"),
        }
        // The loop runs exactly once: its expected runtime is finite and the
        // posterior is the prior.
        let post =
            Expectation::iverson(net.domains(), &Guard::atom("A", rat("0"))).unwrap();
        let wp = prog.wp(&post).unwrap();
        assert_eq!(wp.as_constant(), Some(&Coefficient::from_rational(rat("3/10"))));
    }

    #[test]
    fn inputs_and_bad_observations_are_rejected() {
        let no_cpt = CHAIN_BIF.replace(
            "probability ( A ) {\n  table 0.3, 0.7;\n}",
            "",
        );
        let net = parse_bif(&no_cpt).unwrap();
        assert!(matches!(
            program_of(&net),
            Err(TranslateError::HasInputs { .. })
        ));

        let net = parse_bif(CHAIN_BIF).unwrap();
        let bad_var = BTreeMap::from([("Z".to_string(), rat("0"))]);
        assert!(matches!(
            with_observations(&net, &bad_var),
            Err(TranslateError::ObservedNonNode { .. })
        ));
        let bad_value = BTreeMap::from([("B".to_string(), rat("7"))]);
        assert!(with_observations(&net, &bad_value).is_err());
    }
}
