//! Program syntax and the exact transformers.
//!
//! The language is a guarded-command core with discrete random assignment:
//! `skip`, `diverge`, `x := μ` (draw from a finite distribution expression),
//! sequencing, `if`/`else`, `while`, and `repeat { … } until (φ)`. The latter
//! is definitionally equal to its desugaring `C ; while (¬φ) { C }`, and that
//! is exactly how both transformers treat it.
//!
//! [`Program::wp`] computes weakest preexpectations: `wp(C, f)` maps an
//! initial state `σ` to the expected value of `f` in the final states of `C`
//! run from `σ`. [`Program::ert`] computes expected runtimes under the unit
//! cost model (one tick per `skip`, per assignment, and per guard
//! evaluation): `ert(C, f)` is the expected number of ticks of `C` from `σ`
//! plus the expected value of the "postruntime" `f` in the final states.
//! Loops are resolved through the closed-form rules of [`crate::iid`], which
//! require the loop to be f-i.i.d.; loops outside that fragment are reported
//! as unsupported rather than approximated.
//!
//! [`orbit_wp`] and [`orbit_ert`] expose the underlying fixpoint iteration:
//! the `n`-th Kleene iterate of the loop characteristic functional, starting
//! from the constant-zero expectation.

use crate::coeff::Coefficient;
use crate::expectation::{ExpError, Expectation, Guard, VarDomain};
use crate::iid::{self, IidError};
use num::BigRational;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Errors from building distribution expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PgclError {
    #[error("distribution has no outcomes")]
    EmptyDistribution,
    #[error("distribution repeats the value {value}")]
    DuplicateValue { value: BigRational },
    #[error("distribution mass sums to {sum}, expected exactly 1")]
    MassNotOne { sum: Coefficient },
}

/// Errors from the transformers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    /// A loop falls outside the supported closed-form fragment.
    #[error("unsupported loop: {0}")]
    UnsupportedLoop(#[from] IidError),
    /// Orbit iteration is only defined for loop-free bodies.
    #[error("orbit iteration requires a loop-free body")]
    OrbitBodyNotLoopFree,
    #[error(transparent)]
    Expectation(#[from] ExpError),
}

/// A finite distribution expression: outcomes `⟨vᵢ⟩` with probability
/// coefficients `pᵢ` summing to exactly 1 (symbolically, in canonical form).
/// Values are pairwise distinct rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct DistExpr {
    items: Vec<(Coefficient, BigRational)>,
}

impl DistExpr {
    pub fn new(items: Vec<(Coefficient, BigRational)>) -> Result<Self, PgclError> {
        if items.is_empty() {
            return Err(PgclError::EmptyDistribution);
        }
        for (i, (_, v)) in items.iter().enumerate() {
            if items[..i].iter().any(|(_, w)| w == v) {
                return Err(PgclError::DuplicateValue { value: v.clone() });
            }
        }
        let mut mass = Coefficient::zero();
        for (p, _) in &items {
            mass = mass.add(p);
        }
        if !mass.is_one() {
            return Err(PgclError::MassNotOne { sum: mass });
        }
        Ok(DistExpr { items })
    }

    /// The point distribution `⟨value⟩`.
    pub fn point(value: BigRational) -> DistExpr {
        DistExpr { items: vec![(Coefficient::one(), value)] }
    }

    /// The uniform distribution over the given (distinct) values.
    pub fn uniform(values: Vec<BigRational>) -> Result<DistExpr, PgclError> {
        let n = values.len();
        if n == 0 {
            return Err(PgclError::EmptyDistribution);
        }
        let p = Coefficient::from_rational(BigRational::new(1.into(), (n as i64).into()));
        DistExpr::new(values.into_iter().map(|v| (p.clone(), v)).collect())
    }

    pub fn items(&self) -> &[(Coefficient, BigRational)] {
        &self.items
    }
}

impl fmt::Display for DistExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.items.len() == 1 {
            return write!(f, "⟨{}⟩", self.items[0].1);
        }
        for (i, (p, v)) in self.items.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            let p_str = p.to_string();
            if p_str.contains(' ') {
                write!(f, "({p_str})·⟨{v}⟩")?;
            } else {
                write!(f, "{p_str}·⟨{v}⟩")?;
            }
        }
        Ok(())
    }
}

/// A program of the guarded-command core language.
#[derive(Debug, Clone, PartialEq)]
pub enum Program {
    Skip,
    Diverge,
    Assign { var: String, dist: DistExpr },
    Seq(Box<Program>, Box<Program>),
    If { guard: Guard, then_branch: Box<Program>, else_branch: Box<Program> },
    While { guard: Guard, body: Box<Program> },
    RepeatUntil { body: Box<Program>, guard: Guard },
}

impl Program {
    pub fn assign(var: impl Into<String>, dist: DistExpr) -> Program {
        Program::Assign { var: var.into(), dist }
    }

    pub fn seq(first: Program, second: Program) -> Program {
        Program::Seq(Box::new(first), Box::new(second))
    }

    /// Right-nested sequencing of a nonempty list; `skip` for an empty one.
    pub fn seq_all(programs: impl IntoIterator<Item = Program>) -> Program {
        let mut items: Vec<Program> = programs.into_iter().collect();
        match items.pop() {
            None => Program::Skip,
            Some(last) => items.into_iter().rev().fold(last, |acc, p| Program::seq(p, acc)),
        }
    }

    pub fn if_else(guard: Guard, then_branch: Program, else_branch: Program) -> Program {
        Program::If {
            guard,
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        }
    }

    pub fn while_loop(guard: Guard, body: Program) -> Program {
        Program::While { guard, body: Box::new(body) }
    }

    pub fn repeat_until(body: Program, guard: Guard) -> Program {
        Program::RepeatUntil { body: Box::new(body), guard }
    }

    /// The variables written by the program.
    pub fn modified_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_modified(&mut out);
        out
    }

    fn collect_modified(&self, out: &mut BTreeSet<String>) {
        match self {
            Program::Skip | Program::Diverge => {}
            Program::Assign { var, .. } => {
                out.insert(var.clone());
            }
            Program::Seq(a, b) => {
                a.collect_modified(out);
                b.collect_modified(out);
            }
            Program::If { then_branch, else_branch, .. } => {
                then_branch.collect_modified(out);
                else_branch.collect_modified(out);
            }
            Program::While { body, .. } | Program::RepeatUntil { body, .. } => {
                body.collect_modified(out)
            }
        }
    }

    /// Number of syntax-tree nodes.
    pub fn size(&self) -> usize {
        match self {
            Program::Skip | Program::Diverge | Program::Assign { .. } => 1,
            Program::Seq(a, b) => 1 + a.size() + b.size(),
            Program::If { then_branch, else_branch, .. } => {
                1 + then_branch.size() + else_branch.size()
            }
            Program::While { body, .. } | Program::RepeatUntil { body, .. } => 1 + body.size(),
        }
    }

    pub fn contains_loop(&self) -> bool {
        match self {
            Program::Skip | Program::Diverge | Program::Assign { .. } => false,
            Program::Seq(a, b) => a.contains_loop() || b.contains_loop(),
            Program::If { then_branch, else_branch, .. } => {
                then_branch.contains_loop() || else_branch.contains_loop()
            }
            Program::While { .. } | Program::RepeatUntil { .. } => true,
        }
    }

    /// The definitional expansion of `repeat { C } until (φ)` into
    /// `C ; while (¬φ) { C }`. Other constructors are returned unchanged.
    pub fn desugared(&self) -> Program {
        match self {
            Program::RepeatUntil { body, guard } => Program::seq(
                (**body).clone(),
                Program::while_loop(Guard::not(guard.clone()), (**body).clone()),
            ),
            other => other.clone(),
        }
    }

    /// The weakest preexpectation `wp(self, f)`.
    pub fn wp(&self, f: &Expectation) -> Result<Expectation, TransformError> {
        let domains = f.domains();
        match self {
            Program::Skip => Ok(f.clone()),
            Program::Diverge => Ok(Expectation::zero(domains)),
            Program::Assign { var, dist } => Ok(f.expected_over_dist(var, dist.items())?),
            Program::Seq(a, b) => a.wp(&b.wp(f)?),
            Program::If { guard, then_branch, else_branch } => {
                let iv = Expectation::iverson(domains, guard)?;
                let niv = Expectation::iverson(domains, &Guard::not(guard.clone()))?;
                Ok(iv.mul(&then_branch.wp(f)?)?.add(&niv.mul(&else_branch.wp(f)?)?)?)
            }
            Program::While { guard, body } => iid::wp_while_iid(guard, body, f),
            Program::RepeatUntil { .. } => self.desugared().wp(f),
        }
    }

    /// The expected runtime `ert(self, f)` under the unit cost model, with
    /// postruntime `f`.
    pub fn ert(&self, f: &Expectation) -> Result<Expectation, TransformError> {
        let domains = f.domains();
        let one = Coefficient::one();
        match self {
            Program::Skip => Ok(f.plus_const(&one)),
            Program::Diverge => Ok(Expectation::constant(domains, Coefficient::infinity())),
            Program::Assign { var, dist } => {
                Ok(f.expected_over_dist(var, dist.items())?.plus_const(&one))
            }
            Program::Seq(a, b) => a.ert(&b.ert(f)?),
            Program::If { guard, then_branch, else_branch } => {
                let iv = Expectation::iverson(domains, guard)?;
                let niv = Expectation::iverson(domains, &Guard::not(guard.clone()))?;
                Ok(iv
                    .mul(&then_branch.ert(f)?)?
                    .add(&niv.mul(&else_branch.ert(f)?)?)?
                    .plus_const(&one))
            }
            Program::While { guard, body } => iid::ert_while_iid(guard, body, f),
            Program::RepeatUntil { .. } => self.desugared().ert(f),
        }
    }
}

/// The `n`-th Kleene iterate `Φ_f^n(0)` of the `wp` characteristic functional
/// `Φ_f(X) = [¬φ]·f + [φ]·wp(body, X)` of `while (φ) { body }`. The body must
/// be loop-free.
pub fn orbit_wp(
    guard: &Guard,
    body: &Program,
    f: &Expectation,
    n: usize,
) -> Result<Expectation, TransformError> {
    if body.contains_loop() {
        return Err(TransformError::OrbitBodyNotLoopFree);
    }
    let domains = f.domains();
    let iv = Expectation::iverson(domains, guard)?;
    let niv = Expectation::iverson(domains, &Guard::not(guard.clone()))?;
    let base = niv.mul(f)?;
    let mut x = Expectation::zero(domains);
    for _ in 0..n {
        x = base.add(&iv.mul(&body.wp(&x)?)?)?;
    }
    Ok(x)
}

/// The `n`-th Kleene iterate `Φ^n(0)` of the `ert` characteristic functional
/// `Φ(X) = 1 + [φ]·ert(body, X)` of `while (φ) { body }` with zero
/// postruntime. The body must be loop-free.
pub fn orbit_ert(
    domains: &Arc<VarDomain>,
    guard: &Guard,
    body: &Program,
    n: usize,
) -> Result<Expectation, TransformError> {
    if body.contains_loop() {
        return Err(TransformError::OrbitBodyNotLoopFree);
    }
    let iv = Expectation::iverson(domains, guard)?;
    let one = Coefficient::one();
    let mut x = Expectation::zero(domains);
    for _ in 0..n {
        x = iv.mul(&body.ert(&x)?)?.plus_const(&one);
    }
    Ok(x)
}

impl Program {
    fn fmt_indent(&self, f: &mut fmt::Formatter<'_>, indent: usize) -> fmt::Result {
        let pad = "  ".repeat(indent);
        match self {
            Program::Skip => write!(f, "{pad}skip"),
            Program::Diverge => write!(f, "{pad}diverge"),
            Program::Assign { var, dist } => write!(f, "{pad}{var} := {dist}"),
            Program::Seq(a, b) => {
                a.fmt_indent(f, indent)?;
                writeln!(f, ";")?;
                b.fmt_indent(f, indent)
            }
            Program::If { guard, then_branch, else_branch } => {
                writeln!(f, "{pad}if ({guard}) {{")?;
                then_branch.fmt_indent(f, indent + 1)?;
                writeln!(f)?;
                writeln!(f, "{pad}}} else {{")?;
                else_branch.fmt_indent(f, indent + 1)?;
                writeln!(f)?;
                write!(f, "{pad}}}")
            }
            Program::While { guard, body } => {
                writeln!(f, "{pad}while ({guard}) {{")?;
                body.fmt_indent(f, indent + 1)?;
                writeln!(f)?;
                write!(f, "{pad}}}")
            }
            Program::RepeatUntil { body, guard } => {
                writeln!(f, "{pad}repeat {{")?;
                body.fmt_indent(f, indent + 1)?;
                writeln!(f)?;
                write!(f, "{pad}}} until ({guard})")
            }
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indent(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::parse_rational;
    use std::collections::BTreeMap;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn coeff(s: &str) -> Coefficient {
        Coefficient::from_rational(rat(s))
    }

    fn bit_domain() -> Arc<VarDomain> {
        Arc::new(
            VarDomain::new(vec![
                ("x".to_string(), vec![rat("0"), rat("1")]),
                ("y".to_string(), vec![rat("0"), rat("1")]),
            ])
            .unwrap(),
        )
    }

    fn coin(var: &str) -> Program {
        Program::assign(
            var,
            DistExpr::new(vec![(coeff("1/2"), rat("0")), (coeff("1/2"), rat("1"))]).unwrap(),
        )
    }

    #[test]
    fn dist_expr_validation() {
        assert!(matches!(DistExpr::new(vec![]), Err(PgclError::EmptyDistribution)));
        assert!(matches!(
            DistExpr::new(vec![(coeff("1/2"), rat("0")), (coeff("1/2"), rat("0"))]),
            Err(PgclError::DuplicateValue { .. })
        ));
        assert!(matches!(
            DistExpr::new(vec![(coeff("1/2"), rat("0")), (coeff("1/3"), rat("1"))]),
            Err(PgclError::MassNotOne { .. })
        ));
    }

    #[test]
    fn wp_of_coin_flip() {
        let d = bit_domain();
        let f = Expectation::iverson(&d, &Guard::atom("x", rat("1"))).unwrap();
        let wp = coin("x").wp(&f).unwrap();
        assert_eq!(wp.as_constant(), Some(&coeff("1/2")));
    }

    #[test]
    fn wp_is_compositional_over_seq_and_if() {
        let d = bit_domain();
        // if (x = 1) { y := coin } else { y := <0> }; f = [y=1].
        let p = Program::if_else(
            Guard::atom("x", rat("1")),
            coin("y"),
            Program::assign("y", DistExpr::point(rat("0"))),
        );
        let f = Expectation::iverson(&d, &Guard::atom("y", rat("1"))).unwrap();
        let wp = p.wp(&f).unwrap();
        // [x=1]·1/2 + [x=0]·0.
        let expected = Expectation::iverson(&d, &Guard::atom("x", rat("1")))
            .unwrap()
            .scale(&coeff("1/2"));
        assert_eq!(wp, expected);
    }

    #[test]
    fn ert_charges_units_per_step() {
        let d = bit_domain();
        let zero = Expectation::zero(&d);
        assert_eq!(Program::Skip.ert(&zero).unwrap().as_constant(), Some(&coeff("1")));
        assert_eq!(coin("x").ert(&zero).unwrap().as_constant(), Some(&coeff("1")));
        let two_assigns = Program::seq(coin("x"), coin("y"));
        assert_eq!(two_assigns.ert(&zero).unwrap().as_constant(), Some(&coeff("2")));
        // if costs one guard evaluation plus the taken branch.
        let p = Program::if_else(Guard::atom("x", rat("1")), coin("y"), Program::Skip);
        let e = p.ert(&zero).unwrap();
        assert_eq!(e.as_constant(), Some(&coeff("2")));
    }

    #[test]
    fn diverge_has_zero_wp_and_infinite_ert() {
        let d = bit_domain();
        let one = Expectation::one(&d);
        assert!(Program::Diverge.wp(&one).unwrap().is_zero());
        let e = Program::Diverge.ert(&Expectation::zero(&d)).unwrap();
        assert_eq!(e.as_constant(), Some(&Coefficient::infinity()));
    }

    #[test]
    fn geometric_loop_wp_and_ert() {
        let d = bit_domain();
        // while (x = 1) { x := coin }.
        let guard = Guard::atom("x", rat("1"));
        let p = Program::while_loop(guard.clone(), coin("x"));
        // Termination is almost sure: wp(P, 1) = 1.
        assert!(p.wp(&Expectation::one(&d)).unwrap().is_one());
        // ert(P, 0) = 1 + [x=1]·4: from x=1, two expected iterations at cost
        // 2 each (guard + assignment) plus the final guard check.
        let e = p.ert(&Expectation::zero(&d)).unwrap();
        let expected = Expectation::iverson(&d, &guard)
            .unwrap()
            .scale(&coeff("4"))
            .plus_const(&coeff("1"));
        assert_eq!(e, expected);
    }

    #[test]
    fn repeat_until_matches_its_desugaring() {
        let d = bit_domain();
        let p = Program::repeat_until(coin("x"), Guard::atom("x", rat("0")));
        let f = Expectation::iverson(&d, &Guard::atom("x", rat("0"))).unwrap();
        let direct_wp = p.wp(&f).unwrap();
        let desugared_wp = p.desugared().wp(&f).unwrap();
        assert_eq!(direct_wp, desugared_wp);
        assert!(direct_wp.is_one());
        let e = p.ert(&Expectation::zero(&d)).unwrap();
        // One coin flip per round, one check per round, two expected rounds.
        assert_eq!(e.as_constant(), Some(&coeff("4")));
    }

    #[test]
    fn orbit_wp_iterates_are_monotone_and_bounded() {
        let d = bit_domain();
        let guard = Guard::atom("x", rat("1"));
        let body = coin("x");
        let f = Expectation::iverson(&d, &Guard::atom("x", rat("0"))).unwrap();
        let limit = Program::while_loop(guard.clone(), body.clone()).wp(&f).unwrap();
        let mut prev = Expectation::zero(&d);
        for n in 1..=8 {
            let x = orbit_wp(&guard, &body, &f, n).unwrap();
            assert!(prev.leq(&x).unwrap(), "orbit not monotone at n = {n}");
            assert!(x.leq(&limit).unwrap(), "orbit exceeds the fixpoint at n = {n}");
            prev = x;
        }
    }

    #[test]
    fn orbit_ert_first_iterate() {
        let d = bit_domain();
        let guard = Guard::atom("x", rat("1"));
        let body = coin("x");
        let x1 = orbit_ert(&d, &guard, &body, 1).unwrap();
        // Φ(0) = 1 + [x=1]·ert(body, 0) = 1 + [x=1].
        let expected = Expectation::iverson(&d, &guard).unwrap().plus_const(&coeff("1"));
        assert_eq!(x1, expected);
    }

    #[test]
    fn orbit_rejects_loopy_bodies() {
        let d = bit_domain();
        let guard = Guard::atom("x", rat("1"));
        let loopy = Program::while_loop(guard.clone(), coin("x"));
        let f = Expectation::zero(&d);
        assert!(matches!(
            orbit_wp(&guard, &loopy, &f, 3),
            Err(TransformError::OrbitBodyNotLoopFree)
        ));
    }

    #[test]
    fn pretty_printer_layout() {
        let p = Program::seq(
            coin("x"),
            Program::repeat_until(
                Program::if_else(Guard::atom("x", rat("1")), coin("y"), Program::Skip),
                Guard::atom("y", rat("1")),
            ),
        );
        let text = p.to_string();
        let expected = "\
x := 1/2·⟨0⟩ + 1/2·⟨1⟩;
repeat {
  if (x = 1) {
    y := 1/2·⟨0⟩ + 1/2·⟨1⟩
  } else {
    skip
  }
} until (y = 1)";
        assert_eq!(text, expected);
    }

    #[test]
    fn modified_vars_and_size() {
        let p = Program::seq(coin("x"), Program::if_else(Guard::atom("x", rat("1")), coin("y"), Program::Skip));
        let vars: Vec<String> = p.modified_vars().into_iter().collect();
        assert_eq!(vars, vec!["x".to_string(), "y".to_string()]);
        assert_eq!(p.size(), 5);
    }

    #[test]
    fn point_eval_of_loop_ert() {
        let d = bit_domain();
        let p = Program::while_loop(Guard::atom("x", rat("1")), coin("x"));
        let e = p.ert(&Expectation::zero(&d)).unwrap();
        let at = |v: &str| {
            e.point_eval(&BTreeMap::from([
                ("x".to_string(), rat(v)),
                ("y".to_string(), rat("0")),
            ]))
            .unwrap()
        };
        assert_eq!(at("1"), coeff("5"));
        assert_eq!(at("0"), coeff("1"));
    }
}
