//! Expectations: exact maps from program states to [`Coefficient`]s.
//!
//! A state assigns each program variable one value from its finite domain of
//! rationals. An [`Expectation`] stores a dense table over the cross product
//! of the domains of its *support* — the variables the map actually depends
//! on — and is kept canonical by dropping every axis along which the table is
//! constant. Two expectations over the same [`VarDomain`] are semantically
//! equal iff they are structurally equal.
//!
//! Guards ([`Guard`]) are boolean state predicates built from `var = value`
//! atoms and propositional connectives, or given extensionally as a
//! satisfying set of value tuples; `[φ]` (the Iverson bracket) embeds them as
//! 0/1-valued expectations.

use crate::coeff::{CoeffError, Coefficient};
use num::BigRational;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Environment variable capping the number of cells of any single expectation
/// table; exceeding the cap aborts the analysis with
/// [`ExpError::TableTooLarge`].
pub const TABLE_CELL_CAP_ENV: &str = "BNL_MAX_TABLE_CELLS";

/// Errors from expectation construction and manipulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpError {
    #[error("unknown variable `{name}`")]
    UnknownVariable { name: String },
    #[error("value {value} is outside the domain of `{var}`")]
    ValueOutOfDomain { var: String, value: BigRational },
    #[error("distribution mass sums to {sum}, expected exactly 1")]
    MassNotOne { sum: Coefficient },
    #[error("state does not bind variable `{missing}`")]
    IncompleteState { missing: String },
    #[error("comparison of parameterized expectations is not defined")]
    ParameterizedComparison,
    #[error(
        "expectation table needs {cells} cells, above the {TABLE_CELL_CAP_ENV} cap of {cap}"
    )]
    TableTooLarge { cells: usize, cap: usize },
    #[error("domain of `{var}` is empty")]
    EmptyDomain { var: String },
    #[error("domain of `{var}` repeats the value {value}")]
    DuplicateValue { var: String, value: BigRational },
    #[error("variable `{name}` is declared twice")]
    DuplicateVariable { name: String },
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// The finite domains of all program variables, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDomain {
    vars: Vec<(String, Vec<BigRational>)>,
    index: BTreeMap<String, usize>,
}

impl VarDomain {
    pub fn new(vars: Vec<(String, Vec<BigRational>)>) -> Result<Self, ExpError> {
        let mut index = BTreeMap::new();
        for (i, (name, values)) in vars.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(ExpError::DuplicateVariable { name: name.clone() });
            }
            if values.is_empty() {
                return Err(ExpError::EmptyDomain { var: name.clone() });
            }
            for (j, v) in values.iter().enumerate() {
                if values[..j].contains(v) {
                    return Err(ExpError::DuplicateValue { var: name.clone(), value: v.clone() });
                }
            }
        }
        Ok(VarDomain { vars, index })
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|(n, _)| n.as_str())
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name_of(&self, idx: usize) -> &str {
        &self.vars[idx].0
    }

    pub fn values(&self, name: &str) -> Result<&[BigRational], ExpError> {
        match self.index.get(name) {
            Some(&i) => Ok(&self.vars[i].1),
            None => Err(ExpError::UnknownVariable { name: name.to_string() }),
        }
    }

    pub fn values_by_index(&self, idx: usize) -> &[BigRational] {
        &self.vars[idx].1
    }

    pub fn value_index(&self, var: &str, value: &BigRational) -> Result<usize, ExpError> {
        self.values(var)?
            .iter()
            .position(|v| v == value)
            .ok_or_else(|| ExpError::ValueOutOfDomain { var: var.to_string(), value: value.clone() })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[BigRational])> {
        self.vars.iter().map(|(n, vs)| (n.as_str(), vs.as_slice()))
    }
}

/// A boolean predicate over states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Guard {
    True,
    False,
    /// `var = value`.
    Eq { var: String, value: BigRational },
    /// Extensional form: the state satisfies the guard iff the tuple of
    /// values of `vars` (in order) is in `set`.
    InSet { vars: Vec<String>, set: BTreeSet<Vec<BigRational>> },
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    pub fn atom(var: impl Into<String>, value: BigRational) -> Guard {
        Guard::Eq { var: var.into(), value }
    }

    pub fn not(g: Guard) -> Guard {
        Guard::Not(Box::new(g))
    }

    pub fn and(a: Guard, b: Guard) -> Guard {
        Guard::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Guard, b: Guard) -> Guard {
        Guard::Or(Box::new(a), Box::new(b))
    }

    /// Conjunction of a sequence of guards; the empty conjunction is `true`.
    pub fn conj(gs: impl IntoIterator<Item = Guard>) -> Guard {
        let mut iter = gs.into_iter();
        match iter.next() {
            None => Guard::True,
            Some(first) => iter.fold(first, Guard::and),
        }
    }

    /// Builds the extensional guard holding exactly on the tuples of
    /// `domains`-values of `vars` satisfying `pred`.
    pub fn extensional(
        vars: Vec<String>,
        domains: &VarDomain,
        pred: impl Fn(&[BigRational]) -> bool,
    ) -> Result<Guard, ExpError> {
        let value_lists: Vec<&[BigRational]> = vars
            .iter()
            .map(|v| domains.values(v))
            .collect::<Result<_, _>>()?;
        let mut set = BTreeSet::new();
        let mut tuple_idx = vec![0usize; vars.len()];
        loop {
            let tuple: Vec<BigRational> = tuple_idx
                .iter()
                .enumerate()
                .map(|(i, &j)| value_lists[i][j].clone())
                .collect();
            if pred(&tuple) {
                set.insert(tuple);
            }
            // Advance the odometer (last position fastest).
            let mut pos = vars.len();
            loop {
                if pos == 0 {
                    return Ok(Guard::InSet { vars, set });
                }
                pos -= 1;
                tuple_idx[pos] += 1;
                if tuple_idx[pos] < value_lists[pos].len() {
                    break;
                }
                tuple_idx[pos] = 0;
            }
        }
    }

    /// The variables the guard mentions.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Guard::True | Guard::False => {}
            Guard::Eq { var, .. } => {
                out.insert(var.clone());
            }
            Guard::InSet { vars, .. } => out.extend(vars.iter().cloned()),
            Guard::Not(g) => g.collect_vars(out),
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates the guard in a state binding at least its variables.
    pub fn eval(&self, state: &BTreeMap<String, BigRational>) -> Result<bool, ExpError> {
        match self {
            Guard::True => Ok(true),
            Guard::False => Ok(false),
            Guard::Eq { var, value } => match state.get(var) {
                Some(v) => Ok(v == value),
                None => Err(ExpError::IncompleteState { missing: var.clone() }),
            },
            Guard::InSet { vars, set } => {
                let mut tuple = Vec::with_capacity(vars.len());
                for var in vars {
                    match state.get(var) {
                        Some(v) => tuple.push(v.clone()),
                        None => return Err(ExpError::IncompleteState { missing: var.clone() }),
                    }
                }
                Ok(set.contains(&tuple))
            }
            Guard::Not(g) => Ok(!g.eval(state)?),
            Guard::And(a, b) => Ok(a.eval(state)? && b.eval(state)?),
            Guard::Or(a, b) => Ok(a.eval(state)? || b.eval(state)?),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => write!(f, "true"),
            Guard::False => write!(f, "false"),
            Guard::Eq { var, value } => write!(f, "{var} = {value}"),
            Guard::InSet { vars, set } => {
                write!(f, "({}) ∈ {{", vars.join(", "))?;
                for (i, tuple) in set.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(
                        f,
                        "({})",
                        tuple.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
                    )?;
                }
                write!(f, "}}")
            }
            Guard::Not(g) => write!(f, "¬({g})"),
            Guard::And(a, b) => write!(f, "({a} ∧ {b})"),
            Guard::Or(a, b) => write!(f, "({a} ∨ {b})"),
        }
    }
}

fn check_table_size(cells: usize) -> Result<(), ExpError> {
    if let Ok(text) = std::env::var(TABLE_CELL_CAP_ENV) {
        if let Ok(cap) = text.trim().parse::<usize>() {
            if cells > cap {
                return Err(ExpError::TableTooLarge { cells, cap });
            }
        }
    }
    Ok(())
}

/// An exact expectation (a map from states to coefficients) over a shared
/// [`VarDomain`].
///
/// Canonical form: the support lists variable indices in ascending order and
/// contains no variable along which the table is constant; in particular a
/// constant map has empty support and a single cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    domains: Arc<VarDomain>,
    support: Vec<usize>,
    table: Vec<Coefficient>,
}

impl Expectation {
    /// The constant map `σ ↦ c`.
    pub fn constant(domains: &Arc<VarDomain>, c: Coefficient) -> Expectation {
        Expectation { domains: domains.clone(), support: Vec::new(), table: vec![c] }
    }

    pub fn zero(domains: &Arc<VarDomain>) -> Expectation {
        Expectation::constant(domains, Coefficient::zero())
    }

    pub fn one(domains: &Arc<VarDomain>) -> Expectation {
        Expectation::constant(domains, Coefficient::one())
    }

    /// The Iverson bracket `[φ]`: 1 where the guard holds, 0 elsewhere.
    pub fn iverson(domains: &Arc<VarDomain>, guard: &Guard) -> Result<Expectation, ExpError> {
        // Validate the mentioned variables and values.
        validate_guard(domains, guard)?;
        let mut support: Vec<usize> = guard
            .vars()
            .iter()
            .map(|v| domains.var_index(v).expect("validated above"))
            .collect();
        support.sort_unstable();
        let sizes: Vec<usize> =
            support.iter().map(|&i| domains.values_by_index(i).len()).collect();
        let cells = sizes.iter().product::<usize>().max(1);
        check_table_size(cells)?;
        let mut table = Vec::with_capacity(cells);
        let mut state = BTreeMap::new();
        let mut idx = vec![0usize; support.len()];
        loop {
            for (k, &var) in support.iter().enumerate() {
                state.insert(
                    self_name(domains, var).to_string(),
                    domains.values_by_index(var)[idx[k]].clone(),
                );
            }
            table.push(if guard.eval(&state)? {
                Coefficient::one()
            } else {
                Coefficient::zero()
            });
            if !advance(&mut idx, &sizes) {
                break;
            }
        }
        Ok(Expectation { domains: domains.clone(), support, table }.minimized())
    }

    pub fn domains(&self) -> &Arc<VarDomain> {
        &self.domains
    }

    /// Names of the variables the expectation depends on, in ascending
    /// declaration order.
    pub fn support_names(&self) -> Vec<&str> {
        self.support.iter().map(|&i| self.domains.name_of(i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty() && self.table[0].is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.support.is_empty() && self.table[0].is_one()
    }

    /// The coefficient of a constant expectation.
    pub fn as_constant(&self) -> Option<&Coefficient> {
        if self.support.is_empty() {
            Some(&self.table[0])
        } else {
            None
        }
    }

    fn sizes(&self) -> Vec<usize> {
        self.support.iter().map(|&i| self.domains.values_by_index(i).len()).collect()
    }

    /// Drops every axis along which the table is constant.
    fn minimized(mut self) -> Expectation {
        loop {
            let sizes = self.sizes();
            let mut dropped = false;
            for k in 0..self.support.len() {
                let stride: usize = sizes[k + 1..].iter().product();
                let block = stride * sizes[k];
                let constant = (0..self.table.len()).step_by(block).all(|base| {
                    (0..stride).all(|off| {
                        let first = &self.table[base + off];
                        (1..sizes[k]).all(|j| self.table[base + j * stride + off] == *first)
                    })
                });
                if constant {
                    let mut table = Vec::with_capacity(self.table.len() / sizes[k]);
                    for base in (0..self.table.len()).step_by(block) {
                        table.extend_from_slice(&self.table[base..base + stride]);
                    }
                    self.table = table;
                    self.support.remove(k);
                    dropped = true;
                    break;
                }
            }
            if !dropped {
                return self;
            }
        }
    }

    /// Pointwise combination over the union support.
    pub fn zip_with(
        &self,
        other: &Expectation,
        mut f: impl FnMut(&Coefficient, &Coefficient) -> Result<Coefficient, ExpError>,
    ) -> Result<Expectation, ExpError> {
        assert!(
            Arc::ptr_eq(&self.domains, &other.domains) || self.domains == other.domains,
            "expectations must share a variable domain"
        );
        let mut support: Vec<usize> = self.support.clone();
        support.extend(&other.support);
        support.sort_unstable();
        support.dedup();
        let sizes: Vec<usize> =
            support.iter().map(|&i| self.domains.values_by_index(i).len()).collect();
        let cells = sizes.iter().product::<usize>().max(1);
        check_table_size(cells)?;
        let pos_a = positions(&support, &self.support);
        let pos_b = positions(&support, &other.support);
        let strides_a = strides(&self.sizes());
        let strides_b = strides(&other.sizes());
        let mut table = Vec::with_capacity(cells);
        let mut idx = vec![0usize; support.len()];
        loop {
            let ia: usize = pos_a.iter().zip(&strides_a).map(|(&p, s)| idx[p] * s).sum();
            let ib: usize = pos_b.iter().zip(&strides_b).map(|(&p, s)| idx[p] * s).sum();
            table.push(f(&self.table[ia], &other.table[ib])?);
            if !advance(&mut idx, &sizes) {
                break;
            }
        }
        Ok(Expectation { domains: self.domains.clone(), support, table }.minimized())
    }

    /// Pointwise map.
    pub fn map(
        &self,
        mut f: impl FnMut(&Coefficient) -> Result<Coefficient, ExpError>,
    ) -> Result<Expectation, ExpError> {
        let table: Vec<Coefficient> =
            self.table.iter().map(&mut f).collect::<Result<_, _>>()?;
        Ok(Expectation {
            domains: self.domains.clone(),
            support: self.support.clone(),
            table,
        }
        .minimized())
    }

    /// Pointwise addition. Fails only when the joint support would exceed the
    /// table-size cap.
    pub fn add(&self, other: &Expectation) -> Result<Expectation, ExpError> {
        self.zip_with(other, |a, b| Ok(a.add(b)))
    }

    /// Pointwise subtraction; used internally for `1 - wp(C, [φ])`.
    pub(crate) fn sub(&self, other: &Expectation) -> Result<Expectation, ExpError> {
        self.zip_with(other, |a, b| Ok(a.sub(b)))
    }

    /// Pointwise multiplication. Fails only when the joint support would exceed
    /// the table-size cap.
    pub fn mul(&self, other: &Expectation) -> Result<Expectation, ExpError> {
        self.zip_with(other, |a, b| Ok(a.mul(b)))
    }

    pub fn scale(&self, c: &Coefficient) -> Expectation {
        self.map(|x| Ok(x.mul(c))).expect("scaling cannot fail")
    }

    /// Adds the constant `c` pointwise.
    pub fn plus_const(&self, c: &Coefficient) -> Expectation {
        self.map(|x| Ok(x.add(c))).expect("addition cannot fail")
    }

    /// The expectation `f[var := value]`.
    pub fn substitute(&self, var: &str, value: &BigRational) -> Result<Expectation, ExpError> {
        let vi = self
            .domains
            .var_index(var)
            .ok_or_else(|| ExpError::UnknownVariable { name: var.to_string() })?;
        let value_idx = self.domains.value_index(var, value)?;
        let Some(k) = self.support.iter().position(|&i| i == vi) else {
            return Ok(self.clone());
        };
        let sizes = self.sizes();
        let stride: usize = sizes[k + 1..].iter().product();
        let block = stride * sizes[k];
        let mut table = Vec::with_capacity(self.table.len() / sizes[k]);
        for base in (0..self.table.len()).step_by(block) {
            let start = base + value_idx * stride;
            table.extend_from_slice(&self.table[start..start + stride]);
        }
        let mut support = self.support.clone();
        support.remove(k);
        Ok(Expectation { domains: self.domains.clone(), support, table }.minimized())
    }

    /// The expected value of `self` when `var` is drawn from the given
    /// distribution: `Σᵢ pᵢ · self[var := vᵢ]`. The distribution mass must be
    /// exactly 1 and every value must lie in the domain of `var`.
    pub fn expected_over_dist(
        &self,
        var: &str,
        dist: &[(Coefficient, BigRational)],
    ) -> Result<Expectation, ExpError> {
        let mut mass = Coefficient::zero();
        for (p, _) in dist {
            mass = mass.add(p);
        }
        if !mass.is_one() {
            return Err(ExpError::MassNotOne { sum: mass });
        }
        let mut acc = Expectation::zero(&self.domains);
        for (p, value) in dist {
            let branch = self.substitute(var, value)?;
            acc = acc.add(&branch.scale(p))?;
        }
        Ok(acc)
    }

    /// Evaluates at a state binding at least the support variables.
    pub fn point_eval(
        &self,
        state: &BTreeMap<String, BigRational>,
    ) -> Result<Coefficient, ExpError> {
        let sizes = self.sizes();
        let stride = strides(&sizes);
        let mut idx = 0usize;
        for (k, &vi) in self.support.iter().enumerate() {
            let name = self.domains.name_of(vi);
            let value = state
                .get(name)
                .ok_or_else(|| ExpError::IncompleteState { missing: name.to_string() })?;
            idx += self.domains.value_index(name, value)? * stride[k];
        }
        Ok(self.table[idx].clone())
    }

    /// Pointwise `self ≤ other`; defined only for parameter-free expectations.
    pub fn leq(&self, other: &Expectation) -> Result<bool, ExpError> {
        let mut ok = true;
        self.zip_with(other, |a, b| {
            let (a, b) = match (a.as_ext_rational(), b.as_ext_rational()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(ExpError::ParameterizedComparison),
            };
            if a > b {
                ok = false;
            }
            Ok(Coefficient::zero())
        })?;
        Ok(ok)
    }

    /// Iterates over all support states with their coefficients, in table
    /// (odometer) order. States are given as `(name, value)` pairs.
    pub fn cells(&self) -> impl Iterator<Item = (Vec<(&str, &BigRational)>, &Coefficient)> {
        let sizes = self.sizes();
        let total = self.table.len();
        let mut idx = vec![0usize; self.support.len()];
        let mut states = Vec::with_capacity(total);
        for cell in 0..total {
            let state: Vec<(&str, &BigRational)> = self
                .support
                .iter()
                .enumerate()
                .map(|(k, &vi)| {
                    (self.domains.name_of(vi), &self.domains.values_by_index(vi)[idx[k]])
                })
                .collect();
            states.push((state, &self.table[cell]));
            advance(&mut idx, &sizes);
        }
        states.into_iter()
    }
}

fn self_name<'d>(domains: &'d VarDomain, idx: usize) -> &'d str {
    domains.name_of(idx)
}

fn validate_guard(domains: &VarDomain, guard: &Guard) -> Result<(), ExpError> {
    match guard {
        Guard::True | Guard::False => Ok(()),
        Guard::Eq { var, value } => {
            domains.value_index(var, value)?;
            Ok(())
        }
        Guard::InSet { vars, set } => {
            for tuple in set {
                if tuple.len() != vars.len() {
                    return Err(ExpError::IncompleteState {
                        missing: format!("tuple arity {} vs {} vars", tuple.len(), vars.len()),
                    });
                }
                for (var, value) in vars.iter().zip(tuple) {
                    domains.value_index(var, value)?;
                }
            }
            for var in vars {
                domains.values(var)?;
            }
            Ok(())
        }
        Guard::Not(g) => validate_guard(domains, g),
        Guard::And(a, b) | Guard::Or(a, b) => {
            validate_guard(domains, a)?;
            validate_guard(domains, b)
        }
    }
}

/// Positions of each element of `sub` inside `sup` (both sorted ascending).
fn positions(sup: &[usize], sub: &[usize]) -> Vec<usize> {
    sub.iter()
        .map(|v| sup.iter().position(|s| s == v).expect("subset of the union support"))
        .collect()
}

/// Row-major strides for the given axis sizes.
fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![1usize; sizes.len()];
    for k in (0..sizes.len().saturating_sub(1)).rev() {
        out[k] = out[k + 1] * sizes[k + 1];
    }
    out
}

/// Advances a mixed-radix odometer (last digit fastest); `false` on wrap.
fn advance(idx: &mut [usize], sizes: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < sizes[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.support.is_empty() {
            return write!(f, "{}", self.table[0]);
        }
        let mut first = true;
        for (state, coeff) in self.cells() {
            if coeff.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let atoms: Vec<String> =
                state.iter().map(|(n, v)| format!("{n}={v}")).collect();
            write!(f, "[{}]·{}", atoms.join(" ∧ "), coeff)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::parse_rational;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn dom() -> Arc<VarDomain> {
        Arc::new(
            VarDomain::new(vec![
                ("x".to_string(), vec![rat("0"), rat("1")]),
                ("y".to_string(), vec![rat("0"), rat("1"), rat("2")]),
            ])
            .unwrap(),
        )
    }

    fn coeff(s: &str) -> Coefficient {
        Coefficient::from_rational(rat(s))
    }

    #[test]
    fn iverson_of_true_and_false_are_constants() {
        let d = dom();
        assert!(Expectation::iverson(&d, &Guard::True).unwrap().is_one());
        assert!(Expectation::iverson(&d, &Guard::False).unwrap().is_zero());
    }

    #[test]
    fn iverson_atom_dependencies_and_negation() {
        let d = dom();
        let g = Guard::atom("x", rat("1"));
        let iv = Expectation::iverson(&d, &g).unwrap();
        assert_eq!(iv.support_names(), vec!["x"]);
        let niv = Expectation::iverson(&d, &Guard::not(g)).unwrap();
        assert!(iv.add(&niv).unwrap().is_one());
    }

    #[test]
    fn constant_axes_are_dropped() {
        let d = dom();
        // [x=0]·2 + [x=1]·2 is the constant 2.
        let two = coeff("2");
        let f = Expectation::iverson(&d, &Guard::atom("x", rat("0")))
            .unwrap()
            .scale(&two)
            .add(
                &Expectation::iverson(&d, &Guard::atom("x", rat("1")))
                    .unwrap()
                    .scale(&two),
            )
            .unwrap();
        assert_eq!(f.as_constant(), Some(&two));
    }

    #[test]
    fn substitute_slices_the_table() {
        let d = dom();
        let g = Guard::and(Guard::atom("x", rat("1")), Guard::atom("y", rat("2")));
        let iv = Expectation::iverson(&d, &g).unwrap();
        let at_x1 = iv.substitute("x", &rat("1")).unwrap();
        assert_eq!(
            at_x1,
            Expectation::iverson(&d, &Guard::atom("y", rat("2"))).unwrap()
        );
        let at_x0 = iv.substitute("x", &rat("0")).unwrap();
        assert!(at_x0.is_zero());
        assert!(matches!(
            iv.substitute("z", &rat("0")),
            Err(ExpError::UnknownVariable { .. })
        ));
        assert!(matches!(
            iv.substitute("x", &rat("7")),
            Err(ExpError::ValueOutOfDomain { .. })
        ));
    }

    #[test]
    fn expected_over_dist_averages() {
        let d = dom();
        // f = [x=1]; E over x ~ 1/3·<0> + 2/3·<1> gives the constant 2/3.
        let f = Expectation::iverson(&d, &Guard::atom("x", rat("1"))).unwrap();
        let dist = vec![(coeff("1/3"), rat("0")), (coeff("2/3"), rat("1"))];
        let e = f.expected_over_dist("x", &dist).unwrap();
        assert_eq!(e.as_constant(), Some(&coeff("2/3")));
    }

    #[test]
    fn expected_over_dist_rejects_bad_mass() {
        let d = dom();
        let f = Expectation::one(&d);
        let dist = vec![(coeff("1/3"), rat("0")), (coeff("1/3"), rat("1"))];
        assert!(matches!(
            f.expected_over_dist("x", &dist),
            Err(ExpError::MassNotOne { .. })
        ));
    }

    #[test]
    fn point_eval_requires_support_bindings() {
        let d = dom();
        let g = Guard::and(Guard::atom("x", rat("1")), Guard::atom("y", rat("0")));
        let iv = Expectation::iverson(&d, &g).unwrap();
        let full = BTreeMap::from([
            ("x".to_string(), rat("1")),
            ("y".to_string(), rat("0")),
        ]);
        assert!(iv.point_eval(&full).unwrap().is_one());
        let partial = BTreeMap::from([("x".to_string(), rat("1"))]);
        assert!(matches!(
            iv.point_eval(&partial),
            Err(ExpError::IncompleteState { .. })
        ));
    }

    #[test]
    fn leq_is_pointwise_and_rejects_parameters() {
        let d = dom();
        let f = Expectation::iverson(&d, &Guard::atom("x", rat("1"))).unwrap();
        let one = Expectation::one(&d);
        assert!(f.leq(&one).unwrap());
        assert!(!one.leq(&f).unwrap());
        assert!(f.leq(&f).unwrap());
        let inf = Expectation::constant(&d, Coefficient::infinity());
        assert!(one.leq(&inf).unwrap());
        assert!(!inf.leq(&one).unwrap());
        let params = crate::coeff::Params::new(vec!["a".to_string()]).unwrap();
        let sym = Expectation::constant(&d, Coefficient::parameter(&params, "a").unwrap());
        assert!(matches!(sym.leq(&one), Err(ExpError::ParameterizedComparison)));
    }

    #[test]
    fn extensional_guard_matches_predicate() {
        let d = dom();
        // y >= x over the grid {0,1} x {0,1,2}: 5 of 6 pairs.
        let g = Guard::extensional(
            vec!["x".to_string(), "y".to_string()],
            &d,
            |t| t[1] >= t[0],
        )
        .unwrap();
        let iv = Expectation::iverson(&d, &g).unwrap();
        let dist_x = vec![(coeff("1/2"), rat("0")), (coeff("1/2"), rat("1"))];
        let dist_y = vec![
            (coeff("1/3"), rat("0")),
            (coeff("1/3"), rat("1")),
            (coeff("1/3"), rat("2")),
        ];
        let avg = iv
            .expected_over_dist("x", &dist_x)
            .unwrap()
            .expected_over_dist("y", &dist_y)
            .unwrap();
        assert_eq!(avg.as_constant(), Some(&coeff("5/6")));
    }

    #[test]
    fn display_lists_nonzero_cells() {
        let d = dom();
        let g = Guard::atom("x", rat("1"));
        let iv = Expectation::iverson(&d, &g).unwrap().scale(&coeff("3/4"));
        assert_eq!(iv.to_string(), "[x=1]·3/4");
        assert_eq!(Expectation::zero(&d).to_string(), "0");
        assert_eq!(Expectation::constant(&d, coeff("5")).to_string(), "5");
    }
}
