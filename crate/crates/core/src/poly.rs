//! Exact multivariate polynomials of bounded degree.
//!
//! Every function handled by the toolkit (upper and lower objectives,
//! constraints, Lagrangians and the rows of the single-level reformulations)
//! is a [`PolyFunction`]. Values, gradients and Hessians are evaluated
//! exactly from the monomial representation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest total degree a [`PolyFunction`] may carry.
pub const MAX_DEGREE: u32 = 4;

/// A monomial as a sorted list of `(variable, exponent)` pairs, exponents > 0.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<(usize, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(index: usize) -> Self {
        Monomial(vec![(index, 1)])
    }

    /// Builds a monomial from unsorted pairs, merging repeated variables and
    /// dropping zero exponents.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map: BTreeMap<usize, u32> = BTreeMap::new();
        for (v, e) in pairs {
            if e > 0 {
                *map.entry(v).or_insert(0) += e;
            }
        }
        Monomial(map.into_iter().collect())
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn factors(&self) -> &[(usize, u32)] {
        &self.0
    }

    fn product(&self, other: &Monomial) -> Monomial {
        Monomial::from_pairs(self.0.iter().chain(other.0.iter()).copied())
    }

    fn eval(&self, point: &[f64]) -> f64 {
        self.0.iter().map(|&(v, e)| powi(point[v], e)).product()
    }

    /// Value of the monomial with the factor at `skip` removed.
    fn eval_without(&self, point: &[f64], skip: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != skip)
            .map(|(_, &(v, e))| powi(point[v], e))
            .product()
    }
}

#[inline]
fn powi(base: f64, exp: u32) -> f64 {
    match exp {
        0 => 1.0,
        1 => base,
        2 => base * base,
        3 => base * base * base,
        _ => base.powi(exp as i32),
    }
}

/// A polynomial in `num_vars` real variables.
///
/// Terms are kept in canonical form: sorted by monomial, no duplicates and no
/// zero coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct PolyFunction {
    num_vars: usize,
    terms: Vec<(Monomial, f64)>,
}

impl PolyFunction {
    pub fn zero(num_vars: usize) -> Self {
        PolyFunction {
            num_vars,
            terms: Vec::new(),
        }
    }

    pub fn constant(num_vars: usize, value: f64) -> Self {
        let mut p = Self::zero(num_vars);
        if value != 0.0 {
            p.terms.push((Monomial::one(), value));
        }
        p
    }

    /// The coordinate function `x_index`.
    pub fn variable(num_vars: usize, index: usize) -> Result<Self> {
        if index >= num_vars {
            return Err(Error::VariableOutOfRange { index, num_vars });
        }
        Ok(PolyFunction {
            num_vars,
            terms: vec![(Monomial::var(index), 1.0)],
        })
    }

    /// `coeffs · x + constant`.
    pub fn affine(coeffs: &[f64], constant: f64) -> Result<Self> {
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, vec![(i, 1)]))
            .chain(std::iter::once((constant, vec![])));
        Self::from_terms(coeffs.len(), terms)
    }

    /// Builds a canonical polynomial from `(coefficient, [(var, exp)])` terms.
    pub fn from_terms<I>(num_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Vec<(usize, u32)>)>,
    {
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (coef, pairs) in terms {
            if !coef.is_finite() {
                return Err(Error::NonFinite("polynomial coefficient".into()));
            }
            for &(v, _) in &pairs {
                if v >= num_vars {
                    return Err(Error::VariableOutOfRange { index: v, num_vars });
                }
            }
            let mono = Monomial::from_pairs(pairs);
            let degree = mono.degree();
            if degree > MAX_DEGREE {
                return Err(Error::DegreeExceeded {
                    degree,
                    max: MAX_DEGREE,
                });
            }
            *map.entry(mono).or_insert(0.0) += coef;
        }
        Ok(Self::from_map(num_vars, map))
    }

    fn from_map(num_vars: usize, map: BTreeMap<Monomial, f64>) -> Self {
        PolyFunction {
            num_vars,
            terms: map.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> &[(Monomial, f64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(m, _)| m.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_affine(&self) -> bool {
        self.degree() <= 1
    }

    /// Returns `(coefficients, constant)` when the polynomial is affine.
    pub fn affine_parts(&self) -> Option<(Vec<f64>, f64)> {
        if !self.is_affine() {
            return None;
        }
        let mut coeffs = vec![0.0; self.num_vars];
        let mut constant = 0.0;
        for (m, c) in &self.terms {
            match m.factors() {
                [] => constant += c,
                [(v, 1)] => coeffs[*v] += c,
                _ => unreachable!("affine polynomial with nonlinear monomial"),
            }
        }
        Some((coeffs, constant))
    }

    /// Constant term.
    pub fn constant_term(&self) -> f64 {
        self.terms
            .iter()
            .find(|(m, _)| m.0.is_empty())
            .map(|(_, c)| *c)
            .unwrap_or(0.0)
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.num_vars {
            return Err(Error::dim("polynomial point", self.num_vars, point.len()));
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.check_point(point)?;
        Ok(self.value(point))
    }

    pub fn grad(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_point(point)?;
        let mut g = vec![0.0; self.num_vars];
        self.add_grad_to(point, 1.0, &mut g);
        Ok(g)
    }

    pub fn hess(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(point)?;
        let mut h = DMatrix::zeros(self.num_vars, self.num_vars);
        self.add_hess_to(point, 1.0, &mut h);
        Ok(h)
    }

    /// Unchecked evaluation; `point` must have `num_vars` entries.
    pub fn value(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.num_vars);
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// `Σ |c·m(point)|` over the terms; the scale of rounding error in
    /// [`Self::value`].
    pub fn magnitude(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.num_vars);
        self.terms
            .iter()
            .map(|(m, c)| (c * m.eval(point)).abs())
            .sum()
    }

    /// `out += weight * ∇p(point)`.
    pub fn add_grad_to(&self, point: &[f64], weight: f64, out: &mut [f64]) {
        if weight == 0.0 {
            return;
        }
        for (m, c) in &self.terms {
            for (k, &(v, e)) in m.0.iter().enumerate() {
                let rest = m.eval_without(point, k);
                out[v] += weight * c * e as f64 * powi(point[v], e - 1) * rest;
            }
        }
    }

    /// `out += weight * ∇²p(point)`.
    pub fn add_hess_to(&self, point: &[f64], weight: f64, out: &mut DMatrix<f64>) {
        if weight == 0.0 {
            return;
        }
        for (m, c) in &self.terms {
            if m.degree() < 2 {
                continue;
            }
            let f = m.factors();
            for a in 0..f.len() {
                let (va, ea) = f[a];
                if ea >= 2 {
                    let rest = m.eval_without(point, a);
                    let d = (ea * (ea - 1)) as f64 * powi(point[va], ea - 2) * rest;
                    out[(va, va)] += weight * c * d;
                }
                for b in (a + 1)..f.len() {
                    let (vb, eb) = f[b];
                    let rest: f64 = f
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != a && k != b)
                        .map(|(_, &(v, e))| powi(point[v], e))
                        .product();
                    let d = ea as f64
                        * powi(point[va], ea - 1)
                        * eb as f64
                        * powi(point[vb], eb - 1)
                        * rest;
                    out[(va, vb)] += weight * c * d;
                    out[(vb, va)] += weight * c * d;
                }
            }
        }
    }

    fn check_same_space(&self, other: &PolyFunction) -> Result<()> {
        if self.num_vars != other.num_vars {
            return Err(Error::dim(
                "polynomial arithmetic",
                self.num_vars,
                other.num_vars,
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyFunction) -> Result<PolyFunction> {
        self.check_same_space(other)?;
        Ok(self.combine(other, 1.0))
    }

    pub fn sub(&self, other: &PolyFunction) -> Result<PolyFunction> {
        self.check_same_space(other)?;
        Ok(self.combine(other, -1.0))
    }

    fn combine(&self, other: &PolyFunction, sign: f64) -> PolyFunction {
        let mut map: BTreeMap<Monomial, f64> = self.terms.iter().cloned().collect();
        for (m, c) in &other.terms {
            *map.entry(m.clone()).or_insert(0.0) += sign * c;
        }
        Self::from_map(self.num_vars, map)
    }

    pub fn scale(&self, factor: f64) -> PolyFunction {
        if factor == 0.0 {
            return Self::zero(self.num_vars);
        }
        PolyFunction {
            num_vars: self.num_vars,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * factor))
                .collect(),
        }
    }

    pub fn add_constant(&self, value: f64) -> PolyFunction {
        self.combine(&PolyFunction::constant(self.num_vars, value), 1.0)
    }

    pub fn neg(&self) -> PolyFunction {
        self.scale(-1.0)
    }

    /// Product of two polynomials; fails when the result exceeds [`MAX_DEGREE`].
    pub fn mul(&self, other: &PolyFunction) -> Result<PolyFunction> {
        self.check_same_space(other)?;
        let degree = self.degree() + other.degree();
        if degree > MAX_DEGREE && !self.is_zero() && !other.is_zero() {
            return Err(Error::DegreeExceeded {
                degree,
                max: MAX_DEGREE,
            });
        }
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *map.entry(ma.product(mb)).or_insert(0.0) += ca * cb;
            }
        }
        Ok(Self::from_map(self.num_vars, map))
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn partial_derivative(&self, var: usize) -> Result<PolyFunction> {
        if var >= self.num_vars {
            return Err(Error::VariableOutOfRange {
                index: var,
                num_vars: self.num_vars,
            });
        }
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in &self.terms {
            if let Some(&(_, e)) = m.0.iter().find(|&&(v, _)| v == var) {
                let reduced = Monomial::from_pairs(m.0.iter().map(|&(v, ee)| {
                    if v == var {
                        (v, ee - 1)
                    } else {
                        (v, ee)
                    }
                }));
                *map.entry(reduced).or_insert(0.0) += c * e as f64;
            }
        }
        Ok(Self::from_map(self.num_vars, map))
    }

    /// Re-expresses the polynomial in a space of `num_vars` variables, sending
    /// old variable `i` to `mapping[i]`.
    pub fn embed(&self, num_vars: usize, mapping: &[usize]) -> Result<PolyFunction> {
        if mapping.len() != self.num_vars {
            return Err(Error::dim("embedding map", self.num_vars, mapping.len()));
        }
        if let Some(&bad) = mapping.iter().find(|&&t| t >= num_vars) {
            return Err(Error::VariableOutOfRange {
                index: bad,
                num_vars,
            });
        }
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mono = Monomial::from_pairs(m.0.iter().map(|&(v, e)| (mapping[v], e)));
            *map.entry(mono).or_insert(0.0) += c;
        }
        Ok(Self::from_map(num_vars, map))
    }

    /// Fixes the variables with `Some(value)` and renumbers the remaining free
    /// variables in increasing order.
    pub fn substitute(&self, fixed: &[Option<f64>]) -> Result<PolyFunction> {
        if fixed.len() != self.num_vars {
            return Err(Error::dim("substitution", self.num_vars, fixed.len()));
        }
        let mut new_index = vec![usize::MAX; self.num_vars];
        let mut count = 0;
        for (i, f) in fixed.iter().enumerate() {
            if f.is_none() {
                new_index[i] = count;
                count += 1;
            }
        }
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut coef = *c;
            let mut pairs = Vec::new();
            for &(v, e) in &m.0 {
                match fixed[v] {
                    Some(val) => coef *= powi(val, e),
                    None => pairs.push((new_index[v], e)),
                }
            }
            *map.entry(Monomial::from_pairs(pairs)).or_insert(0.0) += coef;
        }
        Ok(Self::from_map(count, map))
    }
}

/// `f + Σ u_i g_i + Σ v_j h_j` for numeric multipliers `u`, `v`.
pub fn compose_lagrangian(
    f: &PolyFunction,
    g: &[PolyFunction],
    h: &[PolyFunction],
    u: &[f64],
    v: &[f64],
) -> Result<PolyFunction> {
    if u.len() != g.len() {
        return Err(Error::dim(
            "lagrangian inequality multipliers",
            g.len(),
            u.len(),
        ));
    }
    if v.len() != h.len() {
        return Err(Error::dim(
            "lagrangian equality multipliers",
            h.len(),
            v.len(),
        ));
    }
    let mut acc = f.clone();
    for (gi, &ui) in g.iter().zip(u) {
        acc = acc.add(&gi.scale(ui))?;
    }
    for (hj, &vj) in h.iter().zip(v) {
        acc = acc.add(&hj.scale(vj))?;
    }
    Ok(acc)
}

impl fmt::Display for PolyFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            let a = c.abs();
            if m.0.is_empty() || a != 1.0 {
                write!(f, "{a}")?;
            }
            for (i, &(v, e)) in m.0.iter().enumerate() {
                if i > 0 || a != 1.0 {
                    write!(f, "*")?;
                }
                if e == 1 {
                    write!(f, "w{v}")?;
                } else {
                    write!(f, "w{v}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// JSON form: `{"num_vars": n, "terms": [[coef, {"var": exp, ...}], ...]}`.
#[derive(Serialize, Deserialize)]
struct PolyRepr {
    num_vars: usize,
    terms: Vec<Term>,
}

/// One polynomial term as serialized: `[coef, {"index": exponent}]`.
pub type Term = (f64, BTreeMap<String, u32>);

impl From<PolyFunction> for PolyRepr {
    fn from(p: PolyFunction) -> Self {
        PolyRepr {
            num_vars: p.num_vars,
            terms: p.to_term_list(),
        }
    }
}

impl TryFrom<PolyRepr> for PolyFunction {
    type Error = Error;

    fn try_from(r: PolyRepr) -> Result<Self> {
        PolyFunction::from_term_list(r.num_vars, &r.terms)
    }
}

impl PolyFunction {
    pub fn to_term_list(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(m, c)| {
                let map = m.0.iter().map(|&(v, e)| (v.to_string(), e)).collect();
                (*c, map)
            })
            .collect()
    }

    pub fn from_term_list(num_vars: usize, terms: &[Term]) -> Result<Self> {
        let mut parsed = Vec::with_capacity(terms.len());
        for (coef, map) in terms {
            let mut pairs = Vec::with_capacity(map.len());
            for (key, &e) in map {
                let v: usize = key.trim().parse().map_err(|_| {
                    Error::instance("terms", format!("variable key `{key}` is not an index"))
                })?;
                pairs.push((v, e));
            }
            parsed.push((*coef, pairs));
        }
        Self::from_terms(num_vars, parsed)
    }
}
