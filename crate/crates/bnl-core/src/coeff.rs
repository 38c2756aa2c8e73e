//! Exact scalar arithmetic for the analysis: multivariate rational functions
//! over ℚ in a fixed set of named parameters, extended with an absorbing
//! positive infinity.
//!
//! The extended conventions used throughout the crate are:
//!
//! * `0 · ∞ = ∞ · 0 = 0`,
//! * `x + ∞ = ∞ + x = ∞`,
//! * division is only available as [`Coefficient::guarded_div`], which maps
//!   `0/0` to `0` and `a/0` (with `a ≠ 0`, including `a = ∞`) to `∞`.
//!
//! Finite values are kept in a canonical form so that structural equality is
//! semantic equality: numerator and denominator are coprime polynomials with
//! integer coefficients, their joint integer content is `1`, and the leading
//! coefficient of the denominator (under the lexicographic monomial order) is
//! positive. The canonical zero is `0/1` and constants are reduced fractions
//! `p/q` with `q > 0`.

use num::{BigInt, BigRational, One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Errors produced by coefficient arithmetic and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoeffError {
    /// `guarded_div` was asked to divide by `∞`.
    #[error("division by infinity")]
    DivByInfinity,
    /// The denominator vanishes at the evaluation point while the numerator
    /// does not.
    #[error("pole at evaluation point (numerator evaluates to {num})")]
    PoleAtPoint { num: BigRational },
    /// Both numerator and denominator vanish at the evaluation point; outside
    /// a guarded division this has no defined value.
    #[error("undefined at evaluation point (numerator and denominator both vanish)")]
    UndefinedAtPoint,
    /// The value at the evaluation point is negative, which no expectation may
    /// produce.
    #[error("negative value {value} at evaluation point")]
    NegativeValue { value: BigRational },
    /// The evaluation point does not bind a parameter that occurs in the
    /// coefficient.
    #[error("parameter `{name}` is not bound by the evaluation point")]
    UnboundParameter { name: String },
    /// A parameter name was used that the context does not declare.
    #[error("parameter `{name}` is not declared")]
    NoSuchParameter { name: String },
    /// A parameter list contains a duplicate name.
    #[error("duplicate parameter name `{name}`")]
    DuplicateParameter { name: String },
    /// A string could not be parsed as an exact rational number.
    #[error("cannot parse `{text}` as an exact rational")]
    InvalidNumber { text: String },
}

/// A shared list of parameter names (the variables of the rational
/// functions). The empty context denotes parameter-free (constant) values.
///
/// Contexts are kept sorted by name so that values built over different
/// subsets of the parameters compose: binary operations take the union of the
/// two contexts, and canonical forms project down to the parameters that
/// actually occur.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Params(Arc<Vec<String>>);

impl Params {
    /// The empty (parameter-free) context.
    pub fn empty() -> Self {
        Params(Arc::new(Vec::new()))
    }

    /// A context with the given parameter names.
    pub fn new(mut names: Vec<String>) -> Result<Self, CoeffError> {
        names.sort();
        for pair in names.windows(2) {
            if pair[0] == pair[1] {
                return Err(CoeffError::DuplicateParameter { name: pair[0].clone() });
            }
        }
        Ok(Params(Arc::new(names)))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    /// The union of two contexts (a sorted merge of the name lists).
    pub fn union(a: &Params, b: &Params) -> Params {
        if a == b || b.is_empty() {
            return a.clone();
        }
        if a.is_empty() {
            return b.clone();
        }
        let mut names: Vec<String> = a.names().to_vec();
        names.extend(b.names().iter().cloned());
        names.sort();
        names.dedup();
        Params(Arc::new(names))
    }
}

/// A multivariate polynomial over ℚ in the parameters of its context.
///
/// Invariants: terms are sorted in strictly descending lexicographic order of
/// their exponent vectors and no coefficient is zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Poly {
    params: Params,
    /// `(exponents, coefficient)` pairs; `exponents.len() == params.len()`.
    terms: Vec<(Vec<u32>, BigRational)>,
}

impl Poly {
    pub fn zero(params: &Params) -> Self {
        Poly { params: params.clone(), terms: Vec::new() }
    }

    pub fn constant(params: &Params, value: BigRational) -> Self {
        let mut p = Poly::zero(params);
        if !value.is_zero() {
            p.terms.push((vec![0; params.len()], value));
        }
        p
    }

    pub fn one(params: &Params) -> Self {
        Poly::constant(params, BigRational::one())
    }

    /// The polynomial consisting of the single parameter with index `idx`.
    pub fn var(params: &Params, idx: usize) -> Self {
        assert!(idx < params.len(), "parameter index out of range");
        let mut exps = vec![0; params.len()];
        exps[idx] = 1;
        Poly { params: params.clone(), terms: vec![(exps, BigRational::one())] }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty() || (self.terms.len() == 1 && self.terms[0].0.iter().all(|&e| e == 0))
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        if self.terms.is_empty() {
            Some(BigRational::zero())
        } else if self.is_constant() {
            Some(self.terms[0].1.clone())
        } else {
            None
        }
    }

    /// Rebuilds the invariant from an arbitrary term list.
    fn normalize(params: Params, mut terms: Vec<(Vec<u32>, BigRational)>) -> Self {
        terms.sort_by(|a, b| b.0.cmp(&a.0));
        let mut out: Vec<(Vec<u32>, BigRational)> = Vec::with_capacity(terms.len());
        for (e, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == e => last.1 += c,
                _ => out.push((e, c)),
            }
        }
        out.retain(|(_, c)| !c.is_zero());
        Poly { params, terms: out }
    }

    /// Re-expresses the polynomial in the (super)context `target`; the current
    /// context must be empty or consist of names present in `target`.
    pub fn lift(&self, target: &Params) -> Poly {
        if self.params == *target {
            return self.clone();
        }
        let map: Vec<usize> = self
            .params
            .names()
            .iter()
            .map(|n| target.index_of(n).expect("lift target must contain all parameters"))
            .collect();
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut exps = vec![0; target.len()];
                for (i, &ex) in e.iter().enumerate() {
                    exps[map[i]] = ex;
                }
                (exps, c.clone())
            })
            .collect();
        Poly::normalize(target.clone(), terms)
    }

    fn unify_pair(a: &Poly, b: &Poly) -> (Poly, Poly) {
        let params = Params::union(&a.params, &b.params);
        (a.lift(&params), b.lift(&params))
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let (a, b) = Poly::unify_pair(self, other);
        let mut terms = a.terms;
        terms.extend(b.terms);
        Poly::normalize(a.params, terms)
    }

    pub fn neg(&self) -> Poly {
        Poly {
            params: self.params.clone(),
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect(),
        }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let (a, b) = Poly::unify_pair(self, other);
        let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
        for (ea, ca) in &a.terms {
            for (eb, cb) in &b.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                terms.push((exps, ca * cb));
            }
        }
        Poly::normalize(a.params, terms)
    }

    pub fn scale(&self, factor: &BigRational) -> Poly {
        if factor.is_zero() {
            return Poly::zero(&self.params);
        }
        Poly {
            params: self.params.clone(),
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * factor)).collect(),
        }
    }

    /// Evaluates at a full point given as values per parameter index.
    pub fn eval(&self, point: &[BigRational]) -> BigRational {
        assert_eq!(point.len(), self.params.len(), "evaluation point arity mismatch");
        let mut acc = BigRational::zero();
        for (exps, c) in &self.terms {
            let mut term = c.clone();
            for (i, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    term *= &point[i];
                }
            }
            acc += term;
        }
        acc
    }

    /// Substitutes values for a subset of the parameters, returning a
    /// polynomial over the remaining ones.
    pub fn substitute(&self, bindings: &BTreeMap<String, BigRational>) -> Poly {
        let remaining: Vec<String> = self
            .params
            .names()
            .iter()
            .filter(|n| !bindings.contains_key(*n))
            .cloned()
            .collect();
        let target = Params::new(remaining).expect("subset of a valid context");
        let mut terms = Vec::with_capacity(self.terms.len());
        for (exps, c) in &self.terms {
            let mut coeff = c.clone();
            let mut new_exps = vec![0; target.len()];
            for (i, &e) in exps.iter().enumerate() {
                let name = &self.params.names()[i];
                match bindings.get(name) {
                    Some(v) => {
                        for _ in 0..e {
                            coeff *= v;
                        }
                    }
                    None => {
                        let j = target.index_of(name).unwrap();
                        new_exps[j] = e;
                    }
                }
            }
            terms.push((new_exps, coeff));
        }
        Poly::normalize(target, terms)
    }

    /// Degree in parameter `v`.
    fn degree_in(&self, v: usize) -> u32 {
        self.terms.iter().map(|(e, _)| e[v]).max().unwrap_or(0)
    }

    /// Coefficient polynomials with respect to parameter `v`, indexed by the
    /// power of `v` (degree `0..=deg`). The returned polynomials do not
    /// mention `v`.
    fn coeffs_in(&self, v: usize) -> Vec<Poly> {
        let deg = self.degree_in(v) as usize;
        let mut out = vec![Poly::zero(&self.params); deg + 1];
        for (e, c) in &self.terms {
            let d = e[v] as usize;
            let mut exps = e.clone();
            exps[v] = 0;
            out[d].terms.push((exps, c.clone()));
        }
        out.into_iter().map(|p| Poly::normalize(p.params.clone(), p.terms)).collect()
    }

    fn from_coeffs_in(params: &Params, v: usize, coeffs: &[Poly]) -> Poly {
        let mut terms = Vec::new();
        for (d, p) in coeffs.iter().enumerate() {
            for (e, c) in &p.lift(params).terms {
                let mut exps = e.clone();
                exps[v] += d as u32;
                terms.push((exps, c.clone()));
            }
        }
        Poly::normalize(params.clone(), terms)
    }

    /// Exact multivariate division; `None` when `divisor` does not divide
    /// `self`.
    pub fn exact_div(&self, divisor: &Poly) -> Option<Poly> {
        assert!(!divisor.is_zero(), "division by the zero polynomial");
        let (mut rem, div) = Poly::unify_pair(self, divisor);
        let params = rem.params.clone();
        let (de, dc) = div.terms.first().cloned().unwrap();
        let mut quot: Vec<(Vec<u32>, BigRational)> = Vec::new();
        while !rem.is_zero() {
            let (re, rc) = rem.terms[0].clone();
            if re.iter().zip(&de).any(|(r, d)| r < d) {
                return None;
            }
            let exps: Vec<u32> = re.iter().zip(&de).map(|(r, d)| r - d).collect();
            let coeff = &rc / &dc;
            let mono = Poly { params: params.clone(), terms: vec![(exps.clone(), coeff.clone())] };
            rem = rem.sub(&mono.mul(&div));
            quot.push((exps, coeff));
        }
        Some(Poly::normalize(params, quot))
    }

    /// Strips the rational content and fixes the sign: the result has integer
    /// coefficients with gcd 1 and a positive leading coefficient.
    fn primitive_normalized(&self) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        let denom_lcm = self
            .terms
            .iter()
            .fold(BigInt::one(), |acc, (_, c)| num::integer::lcm(acc, c.denom().clone()));
        let numer_gcd = self
            .terms
            .iter()
            .fold(BigInt::zero(), |acc, (_, c)| {
                num::integer::gcd(acc, (c.numer() * &denom_lcm / c.denom()).abs())
            });
        let mut scale = BigRational::new(denom_lcm, numer_gcd);
        if self.terms[0].1.is_negative() {
            scale = -scale;
        }
        self.scale(&scale)
    }

    /// Greatest common divisor under the primitive-PRS scheme; the result is
    /// primitive with a positive leading coefficient (`1` for coprime inputs).
    pub fn gcd(a: &Poly, b: &Poly) -> Poly {
        let (a, b) = Poly::unify_pair(a, b);
        if a.is_zero() {
            return if b.is_zero() { b } else { b.primitive_normalized() };
        }
        if b.is_zero() {
            return a.primitive_normalized();
        }
        if a.is_constant() || b.is_constant() {
            return Poly::one(&a.params);
        }
        let v = (0..a.params.len())
            .find(|&v| a.degree_in(v) > 0 || b.degree_in(v) > 0)
            .expect("non-constant polynomial has a main variable");
        let (cont_a, pp_a) = a.split_content(v);
        let (cont_b, pp_b) = b.split_content(v);
        let cont = Poly::gcd(&cont_a, &cont_b);

        let (mut r0, mut r1) = if pp_a.degree_in(v) >= pp_b.degree_in(v) {
            (pp_a, pp_b)
        } else {
            (pp_b, pp_a)
        };
        let pp_gcd = loop {
            if r1.is_zero() {
                break r0.split_content(v).1;
            }
            if r1.degree_in(v) == 0 {
                break Poly::one(&a.params);
            }
            let r = Poly::pseudo_rem(&r0, &r1, v);
            r0 = r1;
            r1 = r.split_content(v).1;
        };
        cont.mul(&pp_gcd).primitive_normalized()
    }

    /// Content (gcd of the `v`-coefficients) and primitive part w.r.t. `v`.
    fn split_content(&self, v: usize) -> (Poly, Poly) {
        let coeffs = self.coeffs_in(v);
        let mut cont = Poly::zero(&self.params);
        for c in &coeffs {
            cont = Poly::gcd(&cont, c);
        }
        if cont.is_zero() || cont.is_constant() {
            return (Poly::one(&self.params), self.primitive_normalized());
        }
        let pp_coeffs: Vec<Poly> = coeffs
            .iter()
            .map(|c| {
                if c.is_zero() {
                    c.clone()
                } else {
                    c.exact_div(&cont).expect("content divides every coefficient")
                }
            })
            .collect();
        let pp = Poly::from_coeffs_in(&self.params, v, &pp_coeffs).primitive_normalized();
        (cont, pp)
    }

    /// One full pseudo-remainder step sequence: reduces the degree of `a` in
    /// `v` below that of `b` by repeatedly cancelling leading terms.
    fn pseudo_rem(a: &Poly, b: &Poly, v: usize) -> Poly {
        let db = b.degree_in(v);
        let lb = Poly::from_coeffs_in(&b.params, v, &[b.coeffs_in(v)[db as usize].clone()]);
        let mut r = a.clone();
        while !r.is_zero() && r.degree_in(v) >= db {
            let dr = r.degree_in(v);
            let lr_coeffs = r.coeffs_in(v);
            let lr = &lr_coeffs[dr as usize];
            // shift = lr * v^(dr - db)
            let mut shift = vec![Poly::zero(&r.params); (dr - db) as usize];
            shift.push(lr.clone());
            let shift = Poly::from_coeffs_in(&r.params, v, &shift);
            r = r.mul(&lb).sub(&b.mul(&shift));
        }
        r
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (exps, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mono: Vec<String> = exps
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(j, &e)| {
                    let name = &self.params.names()[j];
                    if e == 1 {
                        name.clone()
                    } else {
                        format!("{name}^{e}")
                    }
                })
                .collect();
            if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{mag}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

/// The value of a parameter-free coefficient: a rational or `∞`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExtRational {
    Finite(BigRational),
    Infinity,
}

impl ExtRational {
    pub fn as_finite(&self) -> Option<&BigRational> {
        match self {
            ExtRational::Finite(q) => Some(q),
            ExtRational::Infinity => None,
        }
    }
}

impl fmt::Display for ExtRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtRational::Finite(q) => write!(f, "{q}"),
            ExtRational::Infinity => write!(f, "inf"),
        }
    }
}

/// An exact coefficient: a rational function of the declared parameters, or
/// the absorbing `∞`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Coefficient {
    Finite { num: Poly, den: Poly },
    Infinity,
}

impl Coefficient {
    pub fn zero() -> Self {
        Coefficient::from_rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Coefficient::from_rational(BigRational::one())
    }

    pub fn infinity() -> Self {
        Coefficient::Infinity
    }

    pub fn from_rational(q: BigRational) -> Self {
        let params = Params::empty();
        Coefficient::Finite {
            num: Poly::constant(&params, q),
            den: Poly::one(&params),
        }
        .canonical()
    }

    pub fn from_integer(n: i64) -> Self {
        Coefficient::from_rational(BigRational::from_integer(n.into()))
    }

    /// The coefficient consisting of the named parameter.
    pub fn parameter(params: &Params, name: &str) -> Result<Self, CoeffError> {
        let idx = params
            .index_of(name)
            .ok_or_else(|| CoeffError::NoSuchParameter { name: name.to_string() })?;
        Ok(Coefficient::Finite {
            num: Poly::var(params, idx),
            den: Poly::one(params),
        })
    }

    /// Builds `num/den` from polynomials; `den` must not be the zero
    /// polynomial (a vanishing denominator only ever arises through
    /// [`Coefficient::guarded_div`]).
    pub fn from_num_den(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "zero denominator outside guarded division");
        Coefficient::Finite { num, den }.canonical()
    }

    fn canonical(self) -> Self {
        match self {
            Coefficient::Infinity => Coefficient::Infinity,
            Coefficient::Finite { num, den } => {
                let (num, den) = Poly::unify_pair(&num, &den);
                if num.is_zero() {
                    let empty = Params::empty();
                    return Coefficient::Finite {
                        num: Poly::zero(&empty),
                        den: Poly::one(&empty),
                    };
                }
                let g = Poly::gcd(&num, &den);
                let (mut num, mut den) = if g.is_constant() {
                    (num, den)
                } else {
                    (
                        num.exact_div(&g).expect("gcd divides numerator"),
                        den.exact_div(&g).expect("gcd divides denominator"),
                    )
                };
                // Joint integer-primitive scaling with a positive denominator
                // leading coefficient.
                let denom_lcm = num
                    .terms
                    .iter()
                    .chain(&den.terms)
                    .fold(BigInt::one(), |acc, (_, c)| num::integer::lcm(acc, c.denom().clone()));
                let numer_gcd = num
                    .terms
                    .iter()
                    .chain(&den.terms)
                    .fold(BigInt::zero(), |acc, (_, c)| {
                        num::integer::gcd(acc, (c.numer() * &denom_lcm / c.denom()).abs())
                    });
                let mut scale = BigRational::new(denom_lcm, numer_gcd);
                if den.terms[0].1.is_negative() {
                    scale = -scale;
                }
                num = num.scale(&scale);
                den = den.scale(&scale);
                // Project the context down to the parameters that occur, so
                // that values constant in some parameter compare equal across
                // contexts (e.g. `a/(2a)` equals the plain constant `1/2`).
                let used: Vec<usize> = (0..num.params().len())
                    .filter(|&i| {
                        num.terms.iter().chain(&den.terms).any(|(e, _)| e[i] > 0)
                    })
                    .collect();
                if used.len() < num.params().len() {
                    let names: Vec<String> =
                        used.iter().map(|&i| num.params().names()[i].clone()).collect();
                    let sub = Params::new(names).expect("subset of a valid context");
                    let project = |p: &Poly| {
                        let terms = p
                            .terms
                            .iter()
                            .map(|(e, c)| {
                                (used.iter().map(|&i| e[i]).collect::<Vec<u32>>(), c.clone())
                            })
                            .collect();
                        Poly::normalize(sub.clone(), terms)
                    };
                    num = project(&num);
                    den = project(&den);
                }
                Coefficient::Finite { num, den }
            }
        }
    }

    pub fn params(&self) -> Params {
        match self {
            Coefficient::Finite { num, .. } => num.params().clone(),
            Coefficient::Infinity => Params::empty(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Finite { num, .. } if num.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Coefficient::Finite { num, den } if num == den)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Coefficient::Infinity)
    }

    /// The value as a plain rational, when parameter-free and finite.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self {
            Coefficient::Finite { num, den } => {
                Some(num.as_constant()? / den.as_constant()?)
            }
            Coefficient::Infinity => None,
        }
    }

    /// The value as an extended rational, when parameter-free.
    pub fn as_ext_rational(&self) -> Option<ExtRational> {
        match self {
            Coefficient::Infinity => Some(ExtRational::Infinity),
            _ => self.as_constant().map(ExtRational::Finite),
        }
    }

    pub fn add(&self, other: &Coefficient) -> Coefficient {
        match (self, other) {
            (Coefficient::Infinity, _) | (_, Coefficient::Infinity) => Coefficient::Infinity,
            (
                Coefficient::Finite { num: n1, den: d1 },
                Coefficient::Finite { num: n2, den: d2 },
            ) => Coefficient::Finite {
                num: n1.mul(d2).add(&n2.mul(d1)),
                den: d1.mul(d2),
            }
            .canonical(),
        }
    }

    /// Subtraction, used internally for terms like `1 - wp(C, [φ])`; the
    /// subtrahend must be finite.
    pub(crate) fn sub(&self, other: &Coefficient) -> Coefficient {
        match (self, other) {
            (_, Coefficient::Infinity) => panic!("subtraction of infinity is undefined"),
            (Coefficient::Infinity, _) => Coefficient::Infinity,
            (
                Coefficient::Finite { num: n1, den: d1 },
                Coefficient::Finite { num: n2, den: d2 },
            ) => Coefficient::Finite {
                num: n1.mul(d2).sub(&n2.mul(d1)),
                den: d1.mul(d2),
            }
            .canonical(),
        }
    }

    pub fn mul(&self, other: &Coefficient) -> Coefficient {
        // 0 · ∞ = 0 by convention.
        if self.is_zero() || other.is_zero() {
            return Coefficient::zero();
        }
        match (self, other) {
            (Coefficient::Infinity, _) | (_, Coefficient::Infinity) => Coefficient::Infinity,
            (
                Coefficient::Finite { num: n1, den: d1 },
                Coefficient::Finite { num: n2, den: d2 },
            ) => Coefficient::Finite { num: n1.mul(n2), den: d1.mul(d2) }.canonical(),
        }
    }

    /// Division with the runtime-calculus conventions: `0/0 = 0`, `a/0 = ∞`
    /// for `a ≠ 0` (including `∞/0 = ∞`) and `∞/a = ∞` for finite `a ≠ 0`.
    /// Division by `∞` is an error.
    pub fn guarded_div(&self, den: &Coefficient) -> Result<Coefficient, CoeffError> {
        if den.is_infinite() {
            return Err(CoeffError::DivByInfinity);
        }
        if den.is_zero() {
            return Ok(if self.is_zero() { Coefficient::zero() } else { Coefficient::Infinity });
        }
        match (self, den) {
            (Coefficient::Infinity, _) => Ok(Coefficient::Infinity),
            (
                Coefficient::Finite { num: n1, den: d1 },
                Coefficient::Finite { num: n2, den: d2 },
            ) => Ok(Coefficient::Finite { num: n1.mul(d2), den: d1.mul(n2) }.canonical()),
            (_, Coefficient::Infinity) => unreachable!("handled above"),
        }
    }

    /// Substitutes values for a subset of the parameters; the remaining
    /// parameters stay symbolic. Every bound name must be declared.
    pub fn substitute(
        &self,
        bindings: &BTreeMap<String, BigRational>,
    ) -> Result<Coefficient, CoeffError> {
        match self {
            Coefficient::Infinity => Ok(Coefficient::Infinity),
            Coefficient::Finite { num, den } => {
                // Bindings for parameters the value does not mention are
                // ignored: canonical forms project the context down to the
                // occurring parameters, so "not mentioned" carries no
                // information about what was declared.
                let num = num.substitute(bindings);
                let den = den.substitute(bindings);
                if den.is_zero() {
                    // A vanishing denominator after substitution is a pole (or
                    // an undefined 0/0 point) rather than a value.
                    return if num.is_zero() {
                        Err(CoeffError::UndefinedAtPoint)
                    } else {
                        Err(CoeffError::PoleAtPoint {
                            num: num.as_constant().unwrap_or_else(BigRational::zero),
                        })
                    };
                }
                Ok(Coefficient::Finite { num, den }.canonical())
            }
        }
    }

    /// Evaluates at a point binding every parameter. `∞` evaluates to `∞`;
    /// for finite values the errors distinguish poles, undefined `0/0`
    /// points, and (invalid) negative results.
    pub fn eval_at(
        &self,
        point: &BTreeMap<String, BigRational>,
    ) -> Result<ExtRational, CoeffError> {
        match self {
            Coefficient::Infinity => Ok(ExtRational::Infinity),
            Coefficient::Finite { num, den } => {
                let params = num.params();
                let mut values = Vec::with_capacity(params.len());
                for name in params.names() {
                    match point.get(name) {
                        Some(v) => values.push(v.clone()),
                        None => {
                            return Err(CoeffError::UnboundParameter { name: name.clone() })
                        }
                    }
                }
                let n = num.eval(&values);
                let d = den.eval(&values);
                if d.is_zero() {
                    return if n.is_zero() {
                        Err(CoeffError::UndefinedAtPoint)
                    } else {
                        Err(CoeffError::PoleAtPoint { num: n })
                    };
                }
                let q = n / d;
                if q.is_negative() {
                    return Err(CoeffError::NegativeValue { value: q });
                }
                Ok(ExtRational::Finite(q))
            }
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Infinity => write!(f, "inf"),
            Coefficient::Finite { num, den } => {
                if num.is_zero() {
                    return write!(f, "0");
                }
                let den_is_one = den.as_constant().map(|c| c.is_one()).unwrap_or(false);
                if den_is_one {
                    return write!(f, "{num}");
                }
                let wrap = |p: &Poly| {
                    if p.terms.len() > 1 {
                        format!("({p})")
                    } else {
                        format!("{p}")
                    }
                };
                write!(f, "{}/{}", wrap(num), wrap(den))
            }
        }
    }
}

/// Parses an exact rational from decimal or fraction notation: `7`, `-3/4`,
/// `0.95`, `1.5e-3`. Decimal notation is converted exactly in base 10.
pub fn parse_rational(text: &str) -> Result<BigRational, CoeffError> {
    let bad = || CoeffError::InvalidNumber { text: text.to_string() };
    let s = text.trim();
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp10) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i64>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, fr)) => (i, fr),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let scale = frac_part.len() as i64;
    let all: BigInt = format!("{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(all * BigInt::from(sign));
    let net = exp10 - scale;
    let pow = num::pow::pow(ten, net.unsigned_abs() as usize);
    if net >= 0 {
        value *= BigRational::from_integer(pow);
    } else {
        value /= BigRational::from_integer(pow);
    }
    Ok(value)
}

/// The exact terminating decimal expansion of `q`, if one exists (i.e. if
/// the reduced denominator has no prime factors besides 2 and 5).
pub fn exact_decimal(q: &BigRational) -> Option<String> {
    let mut den = q.denom().clone();
    let mut twos = 0usize;
    let mut fives = 0usize;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = q * BigRational::from_integer(num::pow::pow(BigInt::from(10), places));
    let digits = scaled.to_integer();
    if places == 0 {
        return Some(digits.to_string());
    }
    let sign = if digits.is_negative() { "-" } else { "" };
    let mag = digits.abs().to_string();
    let mag = format!("{mag:0>width$}", width = places + 1);
    let (int_part, frac_part) = mag.split_at(mag.len() - places);
    Some(format!("{sign}{int_part}.{frac_part}"))
}

/// Renders `x` in fixed-point decimal with `places` fractional digits,
/// rounding half away from zero: `decimal_fixed(352/15, 6) = "23.466667"`.
pub fn decimal_fixed(x: &BigRational, places: usize) -> String {
    let sign = if x.is_negative() { "-" } else { "" };
    let mag = x.abs();
    let pow = BigRational::from_integer(num::pow::pow(BigInt::from(10), places));
    let scaled = &mag * &pow;
    // Round half away from zero.
    let rounded = (scaled + BigRational::new(BigInt::from(1), BigInt::from(2))).floor();
    let total = rounded.to_integer();
    let divisor = num::pow::pow(BigInt::from(10), places);
    let int_part = &total / &divisor;
    let frac_part = &total % &divisor;
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part:0>places$}", places = places)
    }
}

/// Renders `x` in scientific notation with six significant digits, e.g.
/// `2.34667·10^1`. Zero renders as `0`.
pub fn decimal_sci6(x: &BigRational) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let sign = if x.is_negative() { "-" } else { "" };
    let mag = x.abs();
    let ten = BigRational::from_integer(BigInt::from(10));
    // Find e with 10^e <= mag < 10^(e+1).
    let mut e: i64 = 0;
    let mut probe = mag.clone();
    while probe >= ten {
        probe /= &ten;
        e += 1;
    }
    let one = BigRational::one();
    while probe < one {
        probe *= &ten;
        e -= 1;
    }
    // probe in [1, 10); take six significant digits with rounding.
    let scale = BigRational::from_integer(num::pow::pow(BigInt::from(10), 5));
    let mut digits = ((&probe * &scale)
        + BigRational::new(BigInt::from(1), BigInt::from(2)))
    .floor()
    .to_integer();
    let million = num::pow::pow(BigInt::from(10), 6);
    if digits >= million {
        digits /= BigInt::from(10);
        e += 1;
    }
    let s = digits.to_string();
    let (head, tail) = s.split_at(1);
    format!("{sign}{head}.{tail}·10^{e}")
}
