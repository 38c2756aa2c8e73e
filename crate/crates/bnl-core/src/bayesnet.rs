//! Discrete Bayesian networks with exact (optionally parameterized) CPTs.
//!
//! A [`Network`] consists of variables with finite label domains and one
//! conditional probability table (CPT) per *node*; a declared variable
//! without a CPT is treated as an *input* (its distribution is left open).
//! CPT entries are [`Coefficient`]s: exact rationals, or polynomials in the
//! network's declared parameters.
//!
//! Value labels are mapped to the rationals `0, 1, …, k−1` in declaration
//! order, which is the domain representation used by the program-level
//! analyses; [`Network::value_of_label`] and [`Network::label_of_value`]
//! convert between the two views.
//!
//! Two interchange formats are supported:
//!
//! * a strict subset of the BIF format ([`parse_bif`], [`render_bif`]), and
//! * a JSON format for networks with named parameters
//!   ([`load_param_network`]), whose distribution entries are arithmetic
//!   expressions over rationals and parameters.
//!
//! [`Network::joint_prob`] and [`Network::conditional_prob`] implement a
//! brute-force enumeration oracle used to cross-check the program-level
//! analyses.

use crate::coeff::{self, CoeffError, Coefficient, Params};
use crate::expectation::{ExpError, VarDomain};
use num::{BigRational, One, Signed, Zero};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;
use thiserror::Error;

/// Errors from parsing, validating and querying networks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BnError {
    #[error("syntax error at {line}:{col}: {message}")]
    SyntaxError { line: usize, col: usize, message: String },
    #[error("missing CPT row for node `{node}` given ({combo})")]
    MissingCptRow { node: String, combo: String },
    #[error("duplicate CPT row for node `{node}` given ({given})")]
    DuplicateCptRow { node: String, given: String },
    #[error("CPT row for node `{node}` given ({given}) has mass {sum}, expected exactly 1")]
    RowMassNotOne { node: String, given: String, sum: String },
    #[error("the parent relation has a cycle: {cycle}")]
    CycleDetected { cycle: String },
    #[error("parameter `{name}` is not declared")]
    UndeclaredParameter { name: String },
    #[error("assignment does not cover node `{missing}`")]
    IncompleteAssignment { missing: String },
    #[error("inconsistent query: {message}")]
    InconsistentQuery { message: String },
    #[error("node `{node}` expects {want} distribution entries, found {got}")]
    WrongDistLength { node: String, want: usize, got: usize },
    #[error("unknown value label `{label}` for variable `{var}`")]
    UnknownValueLabel { var: String, label: String },
    #[error("variable `{name}` is not declared")]
    UndeclaredVariable { name: String },
    #[error("variable `{name}` is declared twice")]
    DuplicateVariable { name: String },
    #[error("node `{node}` declares `{parent}` twice as a parent")]
    DuplicateParent { node: String, parent: String },
    #[error("node `{node}` has more than one CPT")]
    DuplicateCpt { node: String },
    #[error("negative probability {value} in the CPT of `{node}`")]
    NegativeProbability { node: String, value: String },
    #[error("network has inputs ({inputs}); the operation requires a fully specified network")]
    NetworkHasInputs { inputs: String },
    #[error("cannot render network: {reason}")]
    NotRenderable { reason: String },
    #[error(transparent)]
    Exp(#[from] ExpError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// One conditional probability table: rows keyed by the tuple of parent value
/// indices (in `dep` order), each holding a distribution over the node's
/// value indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    rows: BTreeMap<Vec<usize>, Vec<Coefficient>>,
}

impl Cpt {
    pub fn rows(&self) -> impl Iterator<Item = (&Vec<usize>, &[Coefficient])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn row(&self, given: &[usize]) -> Option<&[Coefficient]> {
        self.rows.get(given).map(|v| v.as_slice())
    }
}

/// A discrete Bayesian network with exact, possibly parameterized CPTs.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    params: Params,
    /// All declared variables in declaration order, with their value labels.
    variables: Vec<(String, Vec<String>)>,
    /// Variables that carry a CPT, in declaration order.
    nodes: Vec<String>,
    domains: Arc<VarDomain>,
    dep: BTreeMap<String, Vec<String>>,
    cpt: BTreeMap<String, Cpt>,
}

/// A raw CPT description used by the parsers and [`Network::from_parts`]:
/// `(node, parents, rows)` with each row `(given value labels, distribution)`.
pub type RawCpt = (String, Vec<String>, Vec<(Vec<String>, Vec<Coefficient>)>);

impl Network {
    /// Assembles and validates a network from parsed parts.
    pub fn from_parts(
        name: impl Into<String>,
        params: Params,
        variables: Vec<(String, Vec<String>)>,
        cpts: Vec<RawCpt>,
    ) -> Result<Network, BnError> {
        Network::assemble(name.into(), params, variables, cpts, false)
    }

    fn assemble(
        name: String,
        params: Params,
        variables: Vec<(String, Vec<String>)>,
        cpts: Vec<RawCpt>,
        normalize: bool,
    ) -> Result<Network, BnError> {
        // Variable declarations: unique names, unique labels.
        let mut label_index: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for (var, labels) in &variables {
            if label_index.contains_key(var) {
                return Err(BnError::DuplicateVariable { name: var.clone() });
            }
            let mut m = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                if m.insert(l.clone(), i).is_some() {
                    return Err(BnError::UnknownValueLabel {
                        var: var.clone(),
                        label: format!("{l} (declared twice)"),
                    });
                }
            }
            if m.is_empty() {
                return Err(BnError::Exp(ExpError::EmptyDomain { var: var.clone() }));
            }
            label_index.insert(var.clone(), m);
        }
        let domains = Arc::new(VarDomain::new(
            variables
                .iter()
                .map(|(var, labels)| {
                    (
                        var.clone(),
                        (0..labels.len())
                            .map(|i| BigRational::from_integer((i as i64).into()))
                            .collect(),
                    )
                })
                .collect(),
        )?);

        // CPT structure.
        let mut nodes = Vec::new();
        let mut dep = BTreeMap::new();
        let mut cpt_rows: BTreeMap<String, BTreeMap<Vec<usize>, Vec<Coefficient>>> =
            BTreeMap::new();
        for (node, parents, rows) in &cpts {
            if !label_index.contains_key(node) {
                return Err(BnError::UndeclaredVariable { name: node.clone() });
            }
            if cpt_rows.contains_key(node) {
                return Err(BnError::DuplicateCpt { node: node.clone() });
            }
            for (i, p) in parents.iter().enumerate() {
                if !label_index.contains_key(p) {
                    return Err(BnError::UndeclaredVariable { name: p.clone() });
                }
                if parents[..i].contains(p) || p == node {
                    return Err(BnError::DuplicateParent {
                        node: node.clone(),
                        parent: p.clone(),
                    });
                }
            }
            nodes.push(node.clone());
            dep.insert(node.clone(), parents.clone());

            let want = label_index[node].len();
            let mut table: BTreeMap<Vec<usize>, Vec<Coefficient>> = BTreeMap::new();
            for (given_labels, dist) in rows {
                if given_labels.len() != parents.len() {
                    return Err(BnError::MissingCptRow {
                        node: node.clone(),
                        combo: format!(
                            "row with {} given values, expected {}",
                            given_labels.len(),
                            parents.len()
                        ),
                    });
                }
                let mut key = Vec::with_capacity(parents.len());
                for (p, l) in parents.iter().zip(given_labels) {
                    let idx = *label_index[p].get(l).ok_or_else(|| {
                        BnError::UnknownValueLabel { var: p.clone(), label: l.clone() }
                    })?;
                    key.push(idx);
                }
                if dist.len() != want {
                    return Err(BnError::WrongDistLength {
                        node: node.clone(),
                        want,
                        got: dist.len(),
                    });
                }
                let mut dist = dist.clone();
                let mut mass = Coefficient::zero();
                for c in &dist {
                    if let Some(q) = c.as_constant() {
                        if q.is_negative() {
                            return Err(BnError::NegativeProbability {
                                node: node.clone(),
                                value: q.to_string(),
                            });
                        }
                    }
                    mass = mass.add(c);
                }
                if !mass.is_one() {
                    let fixed = normalize
                        && match mass.as_constant() {
                            Some(sum) => {
                                let tol = BigRational::new(1.into(), 1_000_000.into());
                                !sum.is_zero() && (sum.clone() - BigRational::one()).abs() <= tol
                            }
                            None => false,
                        };
                    if fixed {
                        let sum = Coefficient::from_rational(mass.as_constant().unwrap());
                        for c in dist.iter_mut() {
                            *c = c.guarded_div(&sum)?;
                        }
                    } else {
                        return Err(BnError::RowMassNotOne {
                            node: node.clone(),
                            given: given_labels.join(", "),
                            sum: mass.to_string(),
                        });
                    }
                }
                if table.insert(key, dist).is_some() {
                    return Err(BnError::DuplicateCptRow {
                        node: node.clone(),
                        given: given_labels.join(", "),
                    });
                }
            }
            // Completeness over the full parent cross product.
            let sizes: Vec<usize> = parents.iter().map(|p| label_index[p].len()).collect();
            let total: usize = sizes.iter().product::<usize>().max(1);
            if table.len() != total {
                let mut idx = vec![0usize; sizes.len()];
                loop {
                    if !table.contains_key(&idx) {
                        let combo: Vec<String> = parents
                            .iter()
                            .zip(&idx)
                            .map(|(p, &i)| {
                                let labels = &variables
                                    .iter()
                                    .find(|(v, _)| v == p)
                                    .expect("declared above")
                                    .1;
                                format!("{p}={}", labels[i])
                            })
                            .collect();
                        return Err(BnError::MissingCptRow {
                            node: node.clone(),
                            combo: combo.join(", "),
                        });
                    }
                    let mut k = sizes.len();
                    loop {
                        if k == 0 {
                            unreachable!("row count mismatch implies a missing key");
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
            cpt_rows.insert(node.clone(), table);
        }

        let net = Network {
            name,
            params,
            variables,
            nodes,
            domains,
            dep,
            cpt: cpt_rows.into_iter().map(|(k, rows)| (k, Cpt { rows })).collect(),
        };
        net.check_acyclic()?;
        Ok(net)
    }

    fn check_acyclic(&self) -> Result<(), BnError> {
        // Depth-first search over node→parent edges, reporting a cycle.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let mut marks: BTreeMap<&str, Mark> =
            self.nodes.iter().map(|n| (n.as_str(), Mark::New)).collect();
        fn visit<'a>(
            net: &'a Network,
            v: &'a str,
            marks: &mut BTreeMap<&'a str, Mark>,
            stack: &mut Vec<&'a str>,
        ) -> Result<(), BnError> {
            match marks.get(v) {
                None => return Ok(()), // input variable
                Some(Mark::Done) => return Ok(()),
                Some(Mark::Open) => {
                    let pos = stack.iter().position(|s| s == &v).unwrap_or(0);
                    let mut cycle: Vec<&str> = stack[pos..].to_vec();
                    cycle.push(v);
                    return Err(BnError::CycleDetected { cycle: cycle.join(" -> ") });
                }
                Some(Mark::New) => {}
            }
            marks.insert(v, Mark::Open);
            stack.push(v);
            if let Some(parents) = net.dep.get(v) {
                for p in parents {
                    visit(net, p, marks, stack)?;
                }
            }
            stack.pop();
            marks.insert(v, Mark::Done);
            Ok(())
        }
        let mut stack = Vec::new();
        for n in &self.nodes {
            visit(self, n, &mut marks, &mut stack)?;
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// All declared variables with their labels, in declaration order.
    pub fn variables(&self) -> &[(String, Vec<String>)] {
        &self.variables
    }

    /// Variables carrying a CPT, in declaration order.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Declared variables without a CPT, in declaration order.
    pub fn inputs(&self) -> Vec<&str> {
        self.variables
            .iter()
            .map(|(v, _)| v.as_str())
            .filter(|v| !self.cpt.contains_key(*v))
            .collect()
    }

    pub fn domains(&self) -> &Arc<VarDomain> {
        &self.domains
    }

    pub fn labels(&self, var: &str) -> Result<&[String], BnError> {
        self.variables
            .iter()
            .find(|(v, _)| v == var)
            .map(|(_, l)| l.as_slice())
            .ok_or_else(|| BnError::UndeclaredVariable { name: var.to_string() })
    }

    /// The parent list of a node, in declared order.
    pub fn dep(&self, node: &str) -> Result<&[String], BnError> {
        self.dep
            .get(node)
            .map(|v| v.as_slice())
            .ok_or_else(|| BnError::UndeclaredVariable { name: node.to_string() })
    }

    pub fn cpt(&self, node: &str) -> Result<&Cpt, BnError> {
        self.cpt
            .get(node)
            .ok_or_else(|| BnError::UndeclaredVariable { name: node.to_string() })
    }

    /// The domain value (an index rational) of a value label.
    pub fn value_of_label(&self, var: &str, label: &str) -> Result<BigRational, BnError> {
        let labels = self.labels(var)?;
        match labels.iter().position(|l| l == label) {
            Some(i) => Ok(BigRational::from_integer((i as i64).into())),
            None => Err(BnError::UnknownValueLabel {
                var: var.to_string(),
                label: label.to_string(),
            }),
        }
    }

    pub fn label_of_value(&self, var: &str, value: &BigRational) -> Result<&str, BnError> {
        let idx = self.domains.value_index(var, value)?;
        Ok(&self.labels(var)?[idx])
    }

    /// Parses a user-facing value: a label, or a numeric domain value.
    pub fn parse_value(&self, var: &str, text: &str) -> Result<BigRational, BnError> {
        let labels = self.labels(var)?;
        if let Some(i) = labels.iter().position(|l| l == text) {
            return Ok(BigRational::from_integer((i as i64).into()));
        }
        if let Ok(q) = coeff::parse_rational(text) {
            if self.domains.value_index(var, &q).is_ok() {
                return Ok(q);
            }
        }
        Err(BnError::UnknownValueLabel { var: var.to_string(), label: text.to_string() })
    }

    /// Directed edges `(parent, child)` over nodes and inputs.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            for p in &self.dep[node] {
                out.push((p.clone(), node.clone()));
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| self.dep[n].len()).sum()
    }

    /// Nodes with no incoming edge from another node, in name order.
    pub fn roots(&self) -> Vec<String> {
        let node_set: BTreeSet<&str> = self.nodes.iter().map(|s| s.as_str()).collect();
        let mut out: Vec<String> = self
            .nodes
            .iter()
            .filter(|n| self.dep[*n].iter().all(|p| !node_set.contains(p.as_str())))
            .cloned()
            .collect();
        out.sort();
        out
    }

    /// Removes the current roots, yielding the next peeling round: the
    /// removed roots keep their variable declarations but lose their CPTs
    /// (they become inputs).
    pub fn peel(&self) -> Network {
        let roots: BTreeSet<String> = self.roots().into_iter().collect();
        let mut out = self.clone();
        out.nodes.retain(|n| !roots.contains(n));
        out.cpt.retain(|n, _| !roots.contains(n));
        out.dep.retain(|n, _| !roots.contains(n));
        out
    }

    /// The average Markov blanket size over nodes: parents, children and the
    /// children's other parents, excluding the node itself.
    pub fn markov_blanket_avg(&self) -> BigRational {
        if self.nodes.is_empty() {
            return BigRational::zero();
        }
        let mut total = 0usize;
        for v in &self.nodes {
            let mut blanket: BTreeSet<&str> = BTreeSet::new();
            for p in &self.dep[v] {
                blanket.insert(p.as_str());
            }
            for c in &self.nodes {
                if self.dep[c].iter().any(|p| p == v) {
                    blanket.insert(c.as_str());
                    for p in &self.dep[c] {
                        blanket.insert(p.as_str());
                    }
                }
            }
            blanket.remove(v.as_str());
            total += blanket.len();
        }
        BigRational::new((total as i64).into(), (self.nodes.len() as i64).into())
    }

    fn require_no_inputs(&self) -> Result<(), BnError> {
        let inputs = self.inputs();
        if inputs.is_empty() {
            Ok(())
        } else {
            Err(BnError::NetworkHasInputs { inputs: inputs.join(", ") })
        }
    }

    fn cpt_entry(
        &self,
        node: &str,
        state: &BTreeMap<String, usize>,
    ) -> Result<Coefficient, BnError> {
        let key: Vec<usize> = self.dep[node]
            .iter()
            .map(|p| *state.get(p).expect("full state"))
            .collect();
        let row = self.cpt[node].row(&key).expect("validated complete CPT");
        Ok(row[*state.get(node).expect("full state")].clone())
    }

    fn indices_of(
        &self,
        assignment: &BTreeMap<String, BigRational>,
    ) -> Result<BTreeMap<String, usize>, BnError> {
        let mut out = BTreeMap::new();
        for (var, value) in assignment {
            self.labels(var)?;
            out.insert(var.clone(), self.domains.value_index(var, value)?);
        }
        Ok(out)
    }

    /// The joint probability of a full assignment of all nodes, by direct
    /// CPT product.
    pub fn joint_prob(
        &self,
        assignment: &BTreeMap<String, BigRational>,
    ) -> Result<Coefficient, BnError> {
        self.require_no_inputs()?;
        let state = self.indices_of(assignment)?;
        for node in &self.nodes {
            if !state.contains_key(node) {
                return Err(BnError::IncompleteAssignment { missing: node.clone() });
            }
        }
        let mut acc = Coefficient::one();
        for node in &self.nodes {
            acc = acc.mul(&self.cpt_entry(node, &state)?);
        }
        Ok(acc)
    }

    /// The total probability mass of all full states extending `partial`.
    fn marginal(&self, partial: &BTreeMap<String, usize>) -> Result<Coefficient, BnError> {
        let free: Vec<&String> =
            self.nodes.iter().filter(|n| !partial.contains_key(*n)).collect();
        let sizes: Vec<usize> =
            free.iter().map(|n| self.labels(n).expect("node").len()).collect();
        let mut acc = Coefficient::zero();
        let mut idx = vec![0usize; free.len()];
        loop {
            let mut state = partial.clone();
            for (k, n) in free.iter().enumerate() {
                state.insert((*n).clone(), idx[k]);
            }
            let mut term = Coefficient::one();
            for node in &self.nodes {
                term = term.mul(&self.cpt_entry(node, &state)?);
            }
            acc = acc.add(&term);
            let mut k = free.len();
            loop {
                if k == 0 {
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

    /// The conditional probability `P(query | evidence)` by brute-force
    /// enumeration, with `0/0 := 0`.
    pub fn conditional_prob(
        &self,
        query: &BTreeMap<String, BigRational>,
        evidence: &BTreeMap<String, BigRational>,
    ) -> Result<Coefficient, BnError> {
        self.require_no_inputs()?;
        let q = self.indices_of(query)?;
        let e = self.indices_of(evidence)?;
        let mut joint = e.clone();
        for (var, idx) in &q {
            if let Some(prev) = joint.insert(var.clone(), *idx) {
                if prev != *idx {
                    return Err(BnError::InconsistentQuery {
                        message: format!(
                            "`{var}` is queried as index {idx} but observed as index {prev}"
                        ),
                    });
                }
            }
        }
        let numer = self.marginal(&joint)?;
        let denom = self.marginal(&e)?;
        Ok(numer.guarded_div(&denom)?)
    }

    /// Substitutes values for (a subset of) the parameters in every CPT
    /// entry.
    pub fn bind_params(
        &self,
        bindings: &BTreeMap<String, BigRational>,
    ) -> Result<Network, BnError> {
        for name in bindings.keys() {
            if self.params.index_of(name).is_none() {
                return Err(BnError::UndeclaredParameter { name: name.clone() });
            }
        }
        let remaining: Vec<String> = self
            .params
            .names()
            .iter()
            .filter(|n| !bindings.contains_key(*n))
            .cloned()
            .collect();
        let mut out = self.clone();
        out.params = Params::new(remaining).expect("subset of a valid context");
        for (node, cpt) in out.cpt.iter_mut() {
            for (_, dist) in cpt.rows.iter_mut() {
                for c in dist.iter_mut() {
                    *c = c.substitute(bindings)?;
                    if let Some(q) = c.as_constant() {
                        if q.is_negative() {
                            return Err(BnError::NegativeProbability {
                                node: node.clone(),
                                value: q.to_string(),
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// BIF subset parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(BigRational, String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Pipe,
}

#[derive(Debug, Clone)]
struct Sp {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> BnError {
    BnError::SyntaxError { line, col, message: message.into() }
}

fn lex_bif(text: &str) -> Result<Vec<Sp>, BnError> {
    let mut out = Vec::new();
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0usize;
    let mut line = 1usize;
    let mut col = 1usize;
    let n = bytes.len();
    while i < n {
        let c = bytes[i];
        let (tline, tcol) = (line, col);
        let bump = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if bytes[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col);
            continue;
        }
        if c == '/' && i + 1 < n && bytes[i + 1] == '/' {
            while i < n && bytes[i] != '\n' {
                bump(&mut i, &mut line, &mut col);
            }
            continue;
        }
        if c == '/' && i + 1 < n && bytes[i + 1] == '*' {
            bump(&mut i, &mut line, &mut col);
            bump(&mut i, &mut line, &mut col);
            loop {
                if i >= n {
                    return Err(syntax(tline, tcol, "unterminated block comment"));
                }
                if bytes[i] == '*' && i + 1 < n && bytes[i + 1] == '/' {
                    bump(&mut i, &mut line, &mut col);
                    bump(&mut i, &mut line, &mut col);
                    break;
                }
                bump(&mut i, &mut line, &mut col);
            }
            continue;
        }
        if c == '"' {
            bump(&mut i, &mut line, &mut col);
            let mut s = String::new();
            loop {
                if i >= n {
                    return Err(syntax(tline, tcol, "unterminated string literal"));
                }
                if bytes[i] == '"' {
                    bump(&mut i, &mut line, &mut col);
                    break;
                }
                s.push(bytes[i]);
                bump(&mut i, &mut line, &mut col);
            }
            out.push(Sp { tok: Tok::Str(s), line: tline, col: tcol });
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            '|' => Some(Tok::Pipe),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Sp { tok, line: tline, col: tcol });
            bump(&mut i, &mut line, &mut col);
            continue;
        }
        if c.is_ascii_digit() {
            let mut raw = String::new();
            while i < n
                && (bytes[i].is_ascii_digit()
                    || bytes[i] == '.'
                    || bytes[i] == 'e'
                    || bytes[i] == 'E'
                    || ((bytes[i] == '+' || bytes[i] == '-')
                        && raw
                            .chars()
                            .last()
                            .map(|p| p == 'e' || p == 'E')
                            .unwrap_or(false)))
            {
                raw.push(bytes[i]);
                bump(&mut i, &mut line, &mut col);
            }
            let value = coeff::parse_rational(&raw)
                .map_err(|_| syntax(tline, tcol, format!("invalid number `{raw}`")))?;
            out.push(Sp { tok: Tok::Num(value, raw), line: tline, col: tcol });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < n
                && (bytes[i].is_alphanumeric()
                    || bytes[i] == '_'
                    || bytes[i] == '-'
                    || bytes[i] == '.')
            {
                s.push(bytes[i]);
                bump(&mut i, &mut line, &mut col);
            }
            out.push(Sp { tok: Tok::Ident(s), line: tline, col: tcol });
            continue;
        }
        return Err(syntax(tline, tcol, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

struct BifParser {
    toks: Vec<Sp>,
    pos: usize,
}

impl BifParser {
    fn peek(&self) -> Option<&Sp> {
        self.toks.get(self.pos)
    }

    fn at_end(&self) -> (usize, usize) {
        self.toks
            .last()
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    fn next(&mut self, what: &str) -> Result<Sp, BnError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => {
                let (l, c) = self.at_end();
                Err(syntax(l, c, format!("unexpected end of input, expected {what}")))
            }
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Sp, BnError> {
        let t = self.next(what)?;
        if t.tok == tok {
            Ok(t)
        } else {
            Err(syntax(t.line, t.col, format!("expected {what}, found {:?}", t.tok)))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize), BnError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            other => Err(syntax(t.line, t.col, format!("expected {what}, found {other:?}"))),
        }
    }

    /// An identifier or a number used as a value label.
    fn label(&mut self, what: &str) -> Result<String, BnError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => Ok(s),
            Tok::Num(_, raw) => Ok(raw),
            other => Err(syntax(t.line, t.col, format!("expected {what}, found {other:?}"))),
        }
    }

    fn number(&mut self, what: &str) -> Result<BigRational, BnError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Num(q, _) => Ok(q),
            other => Err(syntax(t.line, t.col, format!("expected {what}, found {other:?}"))),
        }
    }

    /// Skips a `property` statement.
    fn skip_property(&mut self) -> Result<(), BnError> {
        loop {
            let t = self.next("`;` ending the property")?;
            if t.tok == Tok::Semi {
                return Ok(());
            }
        }
    }
}

/// Parses the supported BIF subset with strict row-mass checking.
pub fn parse_bif(text: &str) -> Result<Network, BnError> {
    parse_bif_with_options(text, false)
}

/// Parses the supported BIF subset. With `normalize`, parameter-free CPT rows
/// whose mass differs from 1 by at most 10⁻⁶ are rescaled exactly to mass 1;
/// larger deviations remain errors.
pub fn parse_bif_with_options(text: &str, normalize: bool) -> Result<Network, BnError> {
    let mut p = BifParser { toks: lex_bif(text)?, pos: 0 };
    // network <name> { properties }
    let (kw, l, c) = p.ident("`network`")?;
    if kw != "network" {
        return Err(syntax(l, c, "expected `network`"));
    }
    let (name, ..) = p.ident("network name")?;
    p.expect(Tok::LBrace, "`{`")?;
    loop {
        let t = p.next("`}` or `property`")?;
        match t.tok {
            Tok::RBrace => break,
            Tok::Ident(ref s) if s == "property" => p.skip_property()?,
            other => return Err(syntax(t.line, t.col, format!("unexpected {other:?}"))),
        }
    }

    let mut variables: Vec<(String, Vec<String>)> = Vec::new();
    let mut cpts: Vec<RawCpt> = Vec::new();
    while let Some(t) = p.peek() {
        let t = t.clone();
        match t.tok {
            Tok::Ident(ref s) if s == "variable" => {
                p.pos += 1;
                let (var, ..) = p.ident("variable name")?;
                p.expect(Tok::LBrace, "`{`")?;
                let mut labels: Option<Vec<String>> = None;
                loop {
                    let t = p.next("`type`, `property` or `}`")?;
                    match t.tok {
                        Tok::RBrace => break,
                        Tok::Ident(ref s) if s == "property" => p.skip_property()?,
                        Tok::Ident(ref s) if s == "type" => {
                            let (d, dl, dc) = p.ident("`discrete`")?;
                            if d != "discrete" {
                                return Err(syntax(dl, dc, "expected `discrete`"));
                            }
                            p.expect(Tok::LBracket, "`[`")?;
                            let count = p.number("value count")?;
                            p.expect(Tok::RBracket, "`]`")?;
                            p.expect(Tok::LBrace, "`{`")?;
                            let mut ls = vec![p.label("value label")?];
                            loop {
                                let t = p.next("`,` or `}`")?;
                                match t.tok {
                                    Tok::RBrace => break,
                                    Tok::Comma => ls.push(p.label("value label")?),
                                    other => {
                                        return Err(syntax(
                                            t.line,
                                            t.col,
                                            format!("unexpected {other:?}"),
                                        ))
                                    }
                                }
                            }
                            p.expect(Tok::Semi, "`;`")?;
                            let declared =
                                count.to_integer().to_string().parse::<usize>().ok();
                            if declared != Some(ls.len()) {
                                return Err(syntax(
                                    t.line,
                                    t.col,
                                    format!(
                                        "variable `{var}` declares {count} values but lists {}",
                                        ls.len()
                                    ),
                                ));
                            }
                            labels = Some(ls);
                        }
                        other => {
                            return Err(syntax(t.line, t.col, format!("unexpected {other:?}")))
                        }
                    }
                }
                let labels = labels.ok_or_else(|| {
                    syntax(t.line, t.col, format!("variable `{var}` lacks a type declaration"))
                })?;
                variables.push((var, labels));
            }
            Tok::Ident(ref s) if s == "probability" => {
                p.pos += 1;
                p.expect(Tok::LParen, "`(`")?;
                let (node, ..) = p.ident("node name")?;
                let mut parents = Vec::new();
                let t = p.next("`|` or `)`")?;
                match t.tok {
                    Tok::RParen => {}
                    Tok::Pipe => loop {
                        parents.push(p.ident("parent name")?.0);
                        let t = p.next("`,` or `)`")?;
                        match t.tok {
                            Tok::RParen => break,
                            Tok::Comma => continue,
                            other => {
                                return Err(syntax(
                                    t.line,
                                    t.col,
                                    format!("unexpected {other:?}"),
                                ))
                            }
                        }
                    },
                    other => return Err(syntax(t.line, t.col, format!("unexpected {other:?}"))),
                }
                p.expect(Tok::LBrace, "`{`")?;
                let mut rows: Vec<(Vec<String>, Vec<Coefficient>)> = Vec::new();
                loop {
                    let t = p.next("CPT row, `property` or `}`")?;
                    match t.tok {
                        Tok::RBrace => break,
                        Tok::Ident(ref s) if s == "property" => p.skip_property()?,
                        Tok::Ident(ref s) if s == "table" => {
                            if !parents.is_empty() {
                                return Err(syntax(
                                    t.line,
                                    t.col,
                                    "`table` rows are only valid for parentless nodes",
                                ));
                            }
                            let mut dist =
                                vec![Coefficient::from_rational(p.number("probability")?)];
                            loop {
                                let t = p.next("`,` or `;`")?;
                                match t.tok {
                                    Tok::Semi => break,
                                    Tok::Comma => dist.push(Coefficient::from_rational(
                                        p.number("probability")?,
                                    )),
                                    other => {
                                        return Err(syntax(
                                            t.line,
                                            t.col,
                                            format!("unexpected {other:?}"),
                                        ))
                                    }
                                }
                            }
                            rows.push((Vec::new(), dist));
                        }
                        Tok::LParen => {
                            let mut given = vec![p.label("parent value")?];
                            loop {
                                let t = p.next("`,` or `)`")?;
                                match t.tok {
                                    Tok::RParen => break,
                                    Tok::Comma => given.push(p.label("parent value")?),
                                    other => {
                                        return Err(syntax(
                                            t.line,
                                            t.col,
                                            format!("unexpected {other:?}"),
                                        ))
                                    }
                                }
                            }
                            let mut dist =
                                vec![Coefficient::from_rational(p.number("probability")?)];
                            loop {
                                let t = p.next("`,` or `;`")?;
                                match t.tok {
                                    Tok::Semi => break,
                                    Tok::Comma => dist.push(Coefficient::from_rational(
                                        p.number("probability")?,
                                    )),
                                    other => {
                                        return Err(syntax(
                                            t.line,
                                            t.col,
                                            format!("unexpected {other:?}"),
                                        ))
                                    }
                                }
                            }
                            rows.push((given, dist));
                        }
                        other => {
                            return Err(syntax(t.line, t.col, format!("unexpected {other:?}")))
                        }
                    }
                }
                cpts.push((node, parents, rows));
            }
            other => return Err(syntax(t.line, t.col, format!("unexpected {other:?}"))),
        }
    }
    Network::assemble(name, Params::empty(), variables, cpts, normalize)
}

/// Renders a parameter-free network in the supported BIF subset.
/// `parse_bif(render_bif(net))` reproduces `net` exactly when every
/// probability has a terminating decimal expansion.
pub fn render_bif(net: &Network) -> Result<String, BnError> {
    if !net.params.is_empty() {
        return Err(BnError::NotRenderable {
            reason: "the BIF format cannot express parameters".to_string(),
        });
    }
    let mut out = String::new();
    let _ = writeln!(out, "network {} {{", net.name);
    let _ = writeln!(out, "}}");
    for (var, labels) in &net.variables {
        let _ = writeln!(out, "variable {var} {{");
        let _ = writeln!(
            out,
            "  type discrete [ {} ] {{ {} }};",
            labels.len(),
            labels.join(", ")
        );
        let _ = writeln!(out, "}}");
    }
    for node in &net.nodes {
        let parents = &net.dep[node];
        if parents.is_empty() {
            let _ = writeln!(out, "probability ( {node} ) {{");
        } else {
            let _ = writeln!(out, "probability ( {node} | {} ) {{", parents.join(", "));
        }
        for (key, dist) in net.cpt[node].rows() {
            let probs: Vec<String> = dist
                .iter()
                .map(|c| {
                    let q = c.as_constant().expect("parameter-free");
                    exact_decimal(&q).ok_or_else(|| BnError::NotRenderable {
                        reason: format!(
                            "probability {q} of `{node}` has no terminating decimal expansion"
                        ),
                    })
                })
                .collect::<Result<_, _>>()?;
            if parents.is_empty() {
                let _ = writeln!(out, "  table {};", probs.join(", "));
            } else {
                let labels: Vec<&str> = parents
                    .iter()
                    .zip(key)
                    .map(|(p, &i)| net.labels(p).expect("validated").get(i).unwrap().as_str())
                    .collect();
                let _ = writeln!(out, "  ({}) {};", labels.join(", "), probs.join(", "));
            }
        }
        let _ = writeln!(out, "}}");
    }
    Ok(out)
}

use crate::coeff::exact_decimal;

// ---------------------------------------------------------------------------
// Parameterized networks (JSON)
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct ParamNetFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    parameters: Vec<String>,
    variables: Vec<JsonVar>,
    cpt: Vec<JsonCpt>,
}

#[derive(Deserialize)]
struct JsonVar {
    name: String,
    values: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
struct JsonCpt {
    node: String,
    #[serde(default)]
    parents: Vec<String>,
    rows: Vec<JsonRow>,
}

#[derive(Deserialize)]
struct JsonRow {
    #[serde(default)]
    given: Vec<serde_json::Value>,
    dist: Vec<String>,
}

fn json_label(v: &serde_json::Value) -> Result<String, BnError> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(BnError::SyntaxError {
            line: 0,
            col: 0,
            message: format!("value labels must be strings or numbers, found {other}"),
        }),
    }
}

/// Loads a parameterized network from its JSON description. Distribution
/// entries are expressions over rationals and the declared parameters with
/// `+`, `-`, `*`, `^` and parentheses.
pub fn load_param_network(text: &str) -> Result<Network, BnError> {
    let file: ParamNetFile = serde_json::from_str(text).map_err(|e| BnError::SyntaxError {
        line: e.line(),
        col: e.column(),
        message: e.to_string(),
    })?;
    let params = Params::new(file.parameters.clone())
        .map_err(|e| BnError::Coeff(e))?;
    let variables: Vec<(String, Vec<String>)> = file
        .variables
        .iter()
        .map(|v| {
            Ok((
                v.name.clone(),
                v.values.iter().map(json_label).collect::<Result<Vec<_>, _>>()?,
            ))
        })
        .collect::<Result<_, BnError>>()?;
    let mut cpts: Vec<RawCpt> = Vec::new();
    for c in &file.cpt {
        let mut rows = Vec::new();
        for row in &c.rows {
            let given: Vec<String> =
                row.given.iter().map(json_label).collect::<Result<_, _>>()?;
            let dist: Vec<Coefficient> = row
                .dist
                .iter()
                .map(|e| parse_coeff_expr(e, &params))
                .collect::<Result<_, _>>()?;
            rows.push((given, dist));
        }
        cpts.push((c.node.clone(), c.parents.clone(), rows));
    }
    Network::assemble(
        file.name.unwrap_or_else(|| "network".to_string()),
        params,
        variables,
        cpts,
        false,
    )
}

/// Parses a coefficient expression: `expr := term (('+'|'-') term)*`,
/// `term := factor ('*' factor)*`, `factor := primary ('^' uint)*`,
/// `primary := rational | parameter | '(' expr ')'`, with an optional leading
/// minus.
pub fn parse_coeff_expr(text: &str, params: &Params) -> Result<Coefficient, BnError> {
    let mut p = ExprParser { text, chars: text.char_indices().peekable(), params };
    let value = p.expr()?;
    p.skip_ws();
    if let Some(&(i, c)) = p.chars.peek() {
        return Err(p.err(i, format!("unexpected `{c}`")));
    }
    Ok(value)
}

struct ExprParser<'a> {
    text: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    params: &'a Params,
}

impl<'a> ExprParser<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> BnError {
        BnError::SyntaxError {
            line: 1,
            col: offset + 1,
            message: format!("in expression `{}`: {}", self.text, message.into()),
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(&(_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn expr(&mut self) -> Result<Coefficient, BnError> {
        self.skip_ws();
        let negate = if matches!(self.chars.peek(), Some(&(_, '-'))) {
            self.chars.next();
            true
        } else {
            false
        };
        let mut acc = self.term()?;
        if negate {
            acc = Coefficient::zero().sub(&acc);
        }
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some(&(_, '+')) => {
                    self.chars.next();
                    let rhs = self.term()?;
                    acc = acc.add(&rhs);
                }
                Some(&(_, '-')) => {
                    self.chars.next();
                    let rhs = self.term()?;
                    acc = acc.sub(&rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Coefficient, BnError> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some(&(_, '*')) => {
                    self.chars.next();
                    let rhs = self.factor()?;
                    acc = acc.mul(&rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Coefficient, BnError> {
        let mut acc = self.primary()?;
        loop {
            self.skip_ws();
            match self.chars.peek() {
                Some(&(_, '^')) => {
                    self.chars.next();
                    self.skip_ws();
                    let mut digits = String::new();
                    while matches!(self.chars.peek(), Some(&(_, c)) if c.is_ascii_digit()) {
                        digits.push(self.chars.next().unwrap().1);
                    }
                    if digits.is_empty() {
                        let at = self.chars.peek().map(|&(i, _)| i).unwrap_or(self.text.len());
                        return Err(self.err(at, "expected an integer exponent"));
                    }
                    let exp: u32 = digits
                        .parse()
                        .map_err(|_| self.err(0, format!("exponent `{digits}` too large")))?;
                    let base = acc.clone();
                    acc = Coefficient::one();
                    for _ in 0..exp {
                        acc = acc.mul(&base);
                    }
                }
                _ => return Ok(acc),
            }
        }
    }

    fn primary(&mut self) -> Result<Coefficient, BnError> {
        self.skip_ws();
        match self.chars.peek().copied() {
            None => Err(self.err(self.text.len(), "unexpected end of expression")),
            Some((i, '(')) => {
                self.chars.next();
                let inner = self.expr()?;
                self.skip_ws();
                match self.chars.next() {
                    Some((_, ')')) => Ok(inner),
                    _ => Err(self.err(i, "unbalanced parenthesis")),
                }
            }
            Some((i, c)) if c.is_ascii_digit() => {
                let mut raw = String::new();
                let mut slash_seen = false;
                while let Some(&(_, c)) = self.chars.peek() {
                    let take = c.is_ascii_digit()
                        || c == '.'
                        || (c == '/' && !slash_seen)
                        || c == 'e'
                        || c == 'E'
                        || ((c == '+' || c == '-')
                            && raw.chars().last().map(|p| p == 'e' || p == 'E').unwrap_or(false));
                    if !take {
                        break;
                    }
                    if c == '/' {
                        slash_seen = true;
                    }
                    raw.push(c);
                    self.chars.next();
                }
                let q = coeff::parse_rational(&raw)
                    .map_err(|_| self.err(i, format!("invalid number `{raw}`")))?;
                Ok(Coefficient::from_rational(q))
            }
            Some((i, c)) if c.is_alphabetic() || c == '_' => {
                let mut name = String::new();
                while matches!(self.chars.peek(), Some(&(_, c)) if c.is_alphanumeric() || c == '_')
                {
                    name.push(self.chars.next().unwrap().1);
                }
                Coefficient::parameter(self.params, &name).map_err(|_| {
                    let _ = i;
                    BnError::UndeclaredParameter { name }
                })
            }
            Some((i, c)) => Err(self.err(i, format!("unexpected `{c}`"))),
        }
    }
}
