//! Single-level reformulations of a bilevel program.
//!
//! Variable layout is positional: `(x | y | u | v)` for the complementarity
//! reformulation and `(x | y | z | u | v)` for the two dual reformulations,
//! where `z` is the dual copy of the lower-level variable. Every `≥` row is
//! stored negated so all inequalities read `c(w) ≤ 0`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BilevelProgram;
use crate::poly::PolyFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockName {
    X,
    Y,
    Z,
    U,
    V,
}

/// Provenance of a constraint row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    /// Upper-level constraint from `Ω`.
    Omega,
    /// `g_i(x, y) ≤ 0`.
    LowerIneq(usize),
    /// `h_j(x, y) = 0`.
    LowerEq(usize),
    /// `uᵀg(x, y) = 0`, or its relaxation.
    Complementarity,
    /// `∂_{y_k} L(x, y, u, v) = 0`.
    LowerStationarity(usize),
    /// `f(x,y) − f(x,z) − uᵀg(x,z) − vᵀh(x,z) ≤ 0`.
    WolfeDual,
    /// `f(x,y) − f(x,z) ≤ 0`.
    ValueGap,
    /// `−(uᵀg(x,z) + vᵀh(x,z)) ≤ 0`.
    DualSign,
    /// `∂_{z_k} L(x, z, u, v) = 0`.
    DualStationarity(usize),
    Generic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub func: PolyFunction,
    pub kind: RowKind,
}

/// `min objective(w)` s.t. `ineq(w) ≤ 0`, `eq(w) = 0`, `lower ≤ w ≤ upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nlp {
    pub num_vars: usize,
    pub blocks: Vec<(BlockName, Range<usize>)>,
    pub objective: PolyFunction,
    pub ineq: Vec<Constraint>,
    pub eq: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Nlp {
    /// An unconstrained problem whose variables form one `X` block.
    pub fn generic(objective: PolyFunction) -> Self {
        let n = objective.num_vars();
        Nlp {
            num_vars: n,
            blocks: vec![(BlockName::X, 0..n)],
            objective,
            ineq: Vec::new(),
            eq: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn check(&self, f: &PolyFunction) -> Result<()> {
        if f.num_vars() != self.num_vars {
            return Err(Error::dim("constraint row", self.num_vars, f.num_vars()));
        }
        Ok(())
    }

    pub fn push_ineq(&mut self, func: PolyFunction, kind: RowKind) -> Result<()> {
        self.check(&func)?;
        self.ineq.push(Constraint { func, kind });
        Ok(())
    }

    pub fn push_eq(&mut self, func: PolyFunction, kind: RowKind) -> Result<()> {
        self.check(&func)?;
        self.eq.push(Constraint { func, kind });
        Ok(())
    }

    pub fn push_ineq_generic(&mut self, func: PolyFunction) -> Result<()> {
        self.push_ineq(func, RowKind::Generic)
    }

    pub fn push_eq_generic(&mut self, func: PolyFunction) -> Result<()> {
        self.push_eq(func, RowKind::Generic)
    }

    pub fn block(&self, name: BlockName) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|(b, _)| *b == name)
            .map(|(_, r)| r.clone())
    }

    /// The entries of `point` belonging to block `name` (empty when absent).
    pub fn slice<'p>(&self, point: &'p [f64], name: BlockName) -> &'p [f64] {
        match self.block(name) {
            Some(r) => &point[r],
            None => &[],
        }
    }

    pub fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.num_vars {
            return Err(Error::dim("NLP point", self.num_vars, point.len()));
        }
        Ok(())
    }

    pub fn ineq_index(&self, kind: RowKind) -> Option<usize> {
        self.ineq.iter().position(|c| c.kind == kind)
    }

    pub fn eq_index(&self, kind: RowKind) -> Option<usize> {
        self.eq.iter().position(|c| c.kind == kind)
    }

    /// Largest violation over rows and bounds.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let a = self.ineq.iter().map(|c| c.func.value(point).max(0.0));
        let b = self.eq.iter().map(|c| c.func.value(point).abs());
        let bounds = point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0));
        a.chain(b).chain(bounds).fold(0.0, f64::max)
    }

    /// Largest row violation divided by `max(1, Σ|terms|)` of that row, so
    /// that rounding error in large-magnitude rows does not count.
    pub fn scaled_violation(&self, point: &[f64]) -> f64 {
        let rel = |v: f64, f: &PolyFunction| v / f.magnitude(point).max(1.0);
        let a = self
            .ineq
            .iter()
            .map(|c| rel(c.func.value(point).max(0.0), &c.func));
        let b = self
            .eq
            .iter()
            .map(|c| rel(c.func.value(point).abs(), &c.func));
        let bounds = point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0));
        a.chain(b).chain(bounds).fold(0.0, f64::max)
    }

    /// Sum of row and bound violations (ℓ1).
    pub fn l1_violation(&self, point: &[f64]) -> f64 {
        let a: f64 = self.ineq.iter().map(|c| c.func.value(point).max(0.0)).sum();
        let b: f64 = self.eq.iter().map(|c| c.func.value(point).abs()).sum();
        let bounds: f64 = point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .sum();
        a + b + bounds
    }
}

/// The relaxation families of the outer loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelaxationScheme {
    /// Complementarity relaxed to `0 ≤ −uᵀg(x,y) ≤ t`.
    MpccT,
    /// Wolfe row relaxed by `t`.
    WdpT,
    /// Value-gap row relaxed by `t`.
    Mdp1,
    /// Dual-sign row relaxed by `t`.
    Mdp2,
    /// Both rows relaxed by `t`.
    Mdp3,
}

impl RelaxationScheme {
    pub const ALL: [RelaxationScheme; 5] = [
        RelaxationScheme::Mdp1,
        RelaxationScheme::Mdp2,
        RelaxationScheme::Mdp3,
        RelaxationScheme::MpccT,
        RelaxationScheme::WdpT,
    ];

    /// Whether the variable layout carries the dual copy `z`.
    pub fn has_z(self) -> bool {
        !matches!(self, RelaxationScheme::MpccT)
    }

    pub fn label(self) -> &'static str {
        match self {
            RelaxationScheme::MpccT => "MPCC",
            RelaxationScheme::WdpT => "WDP",
            RelaxationScheme::Mdp1 => "MDP1",
            RelaxationScheme::Mdp2 => "MDP2",
            RelaxationScheme::Mdp3 => "MDP3",
        }
    }
}

impl fmt::Display for RelaxationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RelaxationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mpcc" | "mpcc_t" | "mpcct" => Ok(RelaxationScheme::MpccT),
            "wdp" | "wdp_t" | "wdpt" => Ok(RelaxationScheme::WdpT),
            "mdp1" => Ok(RelaxationScheme::Mdp1),
            "mdp2" => Ok(RelaxationScheme::Mdp2),
            "mdp3" => Ok(RelaxationScheme::Mdp3),
            other => Err(Error::InvalidParameter(format!(
                "unknown scheme `{other}` (expected mpcc, wdp, mdp1, mdp2 or mdp3)"
            ))),
        }
    }
}

/// Index maps and helpers shared by the builders.
struct Layout {
    n: usize,
    m: usize,
    total: usize,
    y: usize,
    z: Option<usize>,
    u: usize,
    v: usize,
}

impl Layout {
    fn new(bp: &BilevelProgram, with_z: bool) -> Self {
        let (n, m, p, q) = (bp.n, bp.m, bp.p(), bp.q());
        let y = n;
        let z = with_z.then_some(n + m);
        let u = n + m + if with_z { m } else { 0 };
        let v = u + p;
        Layout {
            n,
            m,
            total: v + q,
            y,
            z,
            u,
            v,
        }
    }

    fn blocks(&self) -> Vec<(BlockName, Range<usize>)> {
        let mut b = vec![
            (BlockName::X, 0..self.n),
            (BlockName::Y, self.y..self.y + self.m),
        ];
        if let Some(z) = self.z {
            b.push((BlockName::Z, z..z + self.m));
        }
        b.push((BlockName::U, self.u..self.v));
        b.push((BlockName::V, self.v..self.total));
        b
    }

    /// `(x | y) ↦ (x | y)` inside the full layout.
    fn at_y(&self) -> Vec<usize> {
        (0..self.n + self.m).collect()
    }

    /// `(x | y) ↦ (x | z)` inside the full layout.
    fn at_z(&self) -> Vec<usize> {
        let z = self.z.expect("layout has a z block");
        (0..self.n).chain(z..z + self.m).collect()
    }

    fn var(&self, index: usize) -> PolyFunction {
        PolyFunction::variable(self.total, index).expect("index inside layout")
    }

    fn empty_nlp(&self, bp: &BilevelProgram) -> Result<Nlp> {
        let mut lower = vec![f64::NEG_INFINITY; self.total];
        for lo in &mut lower[self.u..self.v] {
            *lo = 0.0;
        }
        Ok(Nlp {
            num_vars: self.total,
            blocks: self.blocks(),
            objective: bp.upper_obj.embed(self.total, &self.at_y())?,
            ineq: Vec::new(),
            eq: Vec::new(),
            lower,
            upper: vec![f64::INFINITY; self.total],
        })
    }

    /// `Σ u_i g_i + Σ v_j h_j` with `g`, `h` evaluated through `map`.
    fn multiplier_sum(&self, bp: &BilevelProgram, map: &[usize]) -> Result<PolyFunction> {
        let mut acc = PolyFunction::zero(self.total);
        for (i, gi) in bp.g.iter().enumerate() {
            acc = acc.add(&self.var(self.u + i).mul(&gi.embed(self.total, map)?)?)?;
        }
        for (j, hj) in bp.h.iter().enumerate() {
            acc = acc.add(&self.var(self.v + j).mul(&hj.embed(self.total, map)?)?)?;
        }
        Ok(acc)
    }

    /// Lagrangian `f + uᵀg + vᵀh` through `map`.
    fn lagrangian(&self, bp: &BilevelProgram, map: &[usize]) -> Result<PolyFunction> {
        bp.lower_obj
            .embed(self.total, map)?
            .add(&self.multiplier_sum(bp, map)?)
    }

    fn push_common(&self, bp: &BilevelProgram, nlp: &mut Nlp) -> Result<()> {
        let at_y = self.at_y();
        for c in &bp.omega_ineq {
            nlp.push_ineq(c.embed(self.total, &at_y)?, RowKind::Omega)?;
        }
        for c in &bp.omega_eq {
            nlp.push_eq(c.embed(self.total, &at_y)?, RowKind::Omega)?;
        }
        for (i, c) in bp.g.iter().enumerate() {
            nlp.push_ineq(c.embed(self.total, &at_y)?, RowKind::LowerIneq(i))?;
        }
        for (j, c) in bp.h.iter().enumerate() {
            nlp.push_eq(c.embed(self.total, &at_y)?, RowKind::LowerEq(j))?;
        }
        Ok(())
    }

    fn push_stationarity(
        &self,
        nlp: &mut Nlp,
        lagrangian: &PolyFunction,
        start: usize,
        kind: fn(usize) -> RowKind,
    ) -> Result<()> {
        for k in 0..self.m {
            nlp.push_eq(lagrangian.partial_derivative(start + k)?, kind(k))?;
        }
        Ok(())
    }
}

/// `min F` s.t. `Ω`, `g ≤ 0`, `h = 0`, `u ≥ 0`, `uᵀg = 0`, `∇_y L = 0`.
pub fn build_mpcc(bp: &BilevelProgram) -> Result<Nlp> {
    bp.validate()?;
    let lay = Layout::new(bp, false);
    let mut nlp = lay.empty_nlp(bp)?;
    lay.push_common(bp, &mut nlp)?;
    let at_y = lay.at_y();
    let mut comp = PolyFunction::zero(lay.total);
    for (i, gi) in bp.g.iter().enumerate() {
        comp = comp.add(&lay.var(lay.u + i).mul(&gi.embed(lay.total, &at_y)?)?)?;
    }
    nlp.push_eq(comp, RowKind::Complementarity)?;
    let lag = lay.lagrangian(bp, &at_y)?;
    lay.push_stationarity(&mut nlp, &lag, lay.y, RowKind::LowerStationarity)?;
    Ok(nlp)
}

/// Dual stationarity `∇_z L(x,z,u,v) = 0` plus the shared rows.
fn dual_base(bp: &BilevelProgram) -> Result<(Layout, Nlp)> {
    bp.validate()?;
    let lay = Layout::new(bp, true);
    let mut nlp = lay.empty_nlp(bp)?;
    lay.push_common(bp, &mut nlp)?;
    let lag = lay.lagrangian(bp, &lay.at_z())?;
    let z = lay.z.expect("dual layout");
    lay.push_stationarity(&mut nlp, &lag, z, RowKind::DualStationarity)?;
    Ok((lay, nlp))
}

/// `min F` s.t. `Ω`, `g ≤ 0`, `h = 0`, `f(x,y) − L(x,z,u,v) ≤ 0`,
/// `∇_z L = 0`, `u ≥ 0`.
pub fn build_wdp(bp: &BilevelProgram) -> Result<Nlp> {
    let (lay, mut nlp) = dual_base(bp)?;
    let row = bp
        .lower_obj
        .embed(lay.total, &lay.at_y())?
        .sub(&lay.lagrangian(bp, &lay.at_z())?)?;
    nlp.push_ineq(row, RowKind::WolfeDual)?;
    Ok(nlp)
}

/// `min F` s.t. `Ω`, `g ≤ 0`, `h = 0`, `f(x,y) − f(x,z) ≤ 0`,
/// `uᵀg(x,z) + vᵀh(x,z) ≥ 0`, `∇_z L = 0`, `u ≥ 0`.
pub fn build_mdp(bp: &BilevelProgram) -> Result<Nlp> {
    let (lay, mut nlp) = dual_base(bp)?;
    let gap = bp
        .lower_obj
        .embed(lay.total, &lay.at_y())?
        .sub(&bp.lower_obj.embed(lay.total, &lay.at_z())?)?;
    nlp.push_ineq(gap, RowKind::ValueGap)?;
    let sign = lay.multiplier_sum(bp, &lay.at_z())?.neg();
    nlp.push_ineq(sign, RowKind::DualSign)?;
    Ok(nlp)
}

fn shift_row(nlp: &mut Nlp, kind: RowKind, t: f64) {
    for c in nlp.ineq.iter_mut().filter(|c| c.kind == kind) {
        c.func = c.func.add_constant(-t);
    }
}

/// The relaxed problem of `scheme` at parameter `t ≥ 0`.
pub fn build_relaxed(bp: &BilevelProgram, scheme: RelaxationScheme, t: f64) -> Result<Nlp> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "relaxation parameter must be finite and nonnegative, got {t}"
        )));
    }
    match scheme {
        RelaxationScheme::Mdp1 => {
            let mut nlp = build_mdp(bp)?;
            shift_row(&mut nlp, RowKind::ValueGap, t);
            Ok(nlp)
        }
        RelaxationScheme::Mdp2 => {
            let mut nlp = build_mdp(bp)?;
            shift_row(&mut nlp, RowKind::DualSign, t);
            Ok(nlp)
        }
        RelaxationScheme::Mdp3 => {
            let mut nlp = build_mdp(bp)?;
            shift_row(&mut nlp, RowKind::ValueGap, t);
            shift_row(&mut nlp, RowKind::DualSign, t);
            Ok(nlp)
        }
        RelaxationScheme::WdpT => {
            let mut nlp = build_wdp(bp)?;
            shift_row(&mut nlp, RowKind::WolfeDual, t);
            Ok(nlp)
        }
        RelaxationScheme::MpccT => {
            let mut nlp = build_mpcc(bp)?;
            let k = nlp
                .eq_index(RowKind::Complementarity)
                .expect("complementarity row present");
            let comp = nlp.eq.remove(k);
            // u ≥ 0 and g ≤ 0 already force uᵀg ≤ 0; only −uᵀg ≤ t remains.
            nlp.push_ineq(comp.func.neg().add_constant(-t), RowKind::Complementarity)?;
            Ok(nlp)
        }
    }
}

/// The unrelaxed problem underlying `scheme`.
pub fn build_base(bp: &BilevelProgram, scheme: RelaxationScheme) -> Result<Nlp> {
    match scheme {
        RelaxationScheme::MpccT => build_mpcc(bp),
        RelaxationScheme::WdpT => build_wdp(bp),
        _ => build_mdp(bp),
    }
}

/// Mond-Weir dual of `p` in minimization form:
/// `min −f(z)` s.t. `∇_z L(z,u,v) = 0`, `−(uᵀg(z) + vᵀh(z)) ≤ 0`, `u ≥ 0`.
///
/// Finite variable bounds of `p` are treated as extra inequality rows, so `u`
/// has one entry per row of `p.ineq` followed by one per finite bound (lower
/// bounds first, then upper bounds, each in variable order).
pub fn build_mond_weir_dual(p: &Nlp) -> Result<Nlp> {
    if p.block(BlockName::U).is_some() || p.block(BlockName::V).is_some() {
        return Err(Error::Structure(
            "problem already carries dual blocks".into(),
        ));
    }
    let nz = p.num_vars;
    let mut g: Vec<PolyFunction> = p.ineq.iter().map(|c| c.func.clone()).collect();
    for (j, &lo) in p.lower.iter().enumerate() {
        if lo.is_finite() {
            g.push(PolyFunction::variable(nz, j)?.neg().add_constant(lo));
        }
    }
    for (j, &hi) in p.upper.iter().enumerate() {
        if hi.is_finite() {
            g.push(PolyFunction::variable(nz, j)?.add_constant(-hi));
        }
    }
    let h: Vec<PolyFunction> = p.eq.iter().map(|c| c.func.clone()).collect();
    let (np, nq) = (g.len(), h.len());
    let total = nz + np + nq;
    let id: Vec<usize> = (0..nz).collect();
    let var = |i: usize| PolyFunction::variable(total, i);
    let mut sum = PolyFunction::zero(total);
    for (i, gi) in g.iter().enumerate() {
        sum = sum.add(&var(nz + i)?.mul(&gi.embed(total, &id)?)?)?;
    }
    for (j, hj) in h.iter().enumerate() {
        sum = sum.add(&var(nz + np + j)?.mul(&hj.embed(total, &id)?)?)?;
    }
    let f = p.objective.embed(total, &id)?;
    let lag = f.add(&sum)?;
    let mut lower = vec![f64::NEG_INFINITY; total];
    for lo in &mut lower[nz..nz + np] {
        *lo = 0.0;
    }
    let mut dual = Nlp {
        num_vars: total,
        blocks: vec![
            (BlockName::Z, 0..nz),
            (BlockName::U, nz..nz + np),
            (BlockName::V, nz + np..total),
        ],
        objective: f.neg(),
        ineq: Vec::new(),
        eq: Vec::new(),
        lower,
        upper: vec![f64::INFINITY; total],
    };
    for k in 0..nz {
        dual.push_eq(lag.partial_derivative(k)?, RowKind::DualStationarity(k))?;
    }
    dual.push_ineq(sum.neg(), RowKind::DualSign)?;
    Ok(dual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::fixtures;

    #[test]
    fn cubic_example_mdp_rows() {
        let bp = fixtures::motivating_example().program;
        let nlp = build_mdp(&bp).unwrap();
        assert_eq!(nlp.num_vars, 4);
        // point (x, y, z, u)
        let w = [0.5, 2.0, -1.0, 3.0];
        let gap = nlp.ineq[nlp.ineq_index(RowKind::ValueGap).unwrap()]
            .func
            .value(&w);
        assert_eq!(gap, (8.0 + 2.0) - (-1.0 - 1.0));
        let sign = nlp.ineq[nlp.ineq_index(RowKind::DualSign).unwrap()]
            .func
            .value(&w);
        assert_eq!(sign, 3.0 * (-1.0 - 0.5));
        let st = nlp.eq[nlp.eq_index(RowKind::DualStationarity(0)).unwrap()]
            .func
            .value(&w);
        assert_eq!(st, 3.0 * 1.0 + 1.0 - 3.0);
        assert_eq!(nlp.lower[3], 0.0);
        assert_eq!(nlp.block(BlockName::Z), Some(2..3));
    }

    #[test]
    fn cubic_example_wdp_rows() {
        let bp = fixtures::motivating_example().program;
        let nlp = build_wdp(&bp).unwrap();
        let w = [0.5, 2.0, -1.0, 3.0];
        let wolfe = nlp.ineq[nlp.ineq_index(RowKind::WolfeDual).unwrap()]
            .func
            .value(&w);
        // y³+y − z³ − z + u(z − x)
        assert_eq!(wolfe, 10.0 + 2.0 + 3.0 * (-1.5));
    }

    #[test]
    fn mfcq_example_mdp_rows() {
        let bp = fixtures::mfcq_example().program;
        let nlp = build_mdp(&bp).unwrap();
        let w = [-1.0, 1.0, -2.0, 9.0];
        assert!(nlp.max_violation(&w) <= 1e-12);
        let gap = nlp.ineq[nlp.ineq_index(RowKind::ValueGap).unwrap()]
            .func
            .value(&w);
        assert_eq!(gap, 0.0);
        let st = nlp.eq[nlp.eq_index(RowKind::DualStationarity(0)).unwrap()]
            .func
            .value(&w);
        assert_eq!(st, 0.0);
    }

    #[test]
    fn mpcc_layout_for_two_constraint_example() {
        let bp = fixtures::stationarity_gap_example().program;
        let nlp = build_mpcc(&bp).unwrap();
        assert_eq!(nlp.num_vars, 4);
        assert_eq!(nlp.block(BlockName::U), Some(2..4));
        let w = [0.0, 1.0, 0.5, 0.25];
        let comp = nlp.eq[nlp.eq_index(RowKind::Complementarity).unwrap()]
            .func
            .value(&w);
        assert_eq!(comp, 0.5 * (0.0 - 1.0 - 3.0) + 0.25 * 0.0);
        let st = nlp.eq[nlp.eq_index(RowKind::LowerStationarity(0)).unwrap()]
            .func
            .value(&w);
        assert_eq!(st, 2.0 * (1.0 - 1.0) - 0.5 + 0.25);
    }

    #[test]
    fn unconstrained_lower_level() {
        let f =
            PolyFunction::from_terms(2, vec![(1.0, vec![(1, 2)]), (-1.0, vec![(0, 1), (1, 1)])])
                .unwrap();
        let big_f = PolyFunction::affine(&[1.0, 1.0], 0.0).unwrap();
        let bp = BilevelProgram::new(1, 1, big_f, vec![], vec![], f, vec![], vec![]).unwrap();
        let nlp = build_mpcc(&bp).unwrap();
        assert_eq!(nlp.num_vars, 2);
        assert!(nlp.ineq.is_empty());
        // complementarity row is identically zero, stationarity is 2y − x
        assert!(nlp.eq[0].func.is_zero());
        assert_eq!(nlp.eq[1].func.value(&[1.0, 3.0]), 5.0);
        let wdp = build_wdp(&bp).unwrap();
        let row = &wdp.ineq[wdp.ineq_index(RowKind::WolfeDual).unwrap()].func;
        assert_eq!(row.value(&[1.0, 2.0, 0.5]), (4.0 - 2.0) - (0.25 - 0.5));
    }

    #[test]
    fn relaxation_shifts_rows() {
        let bp = fixtures::motivating_example().program;
        let base = build_mdp(&bp).unwrap();
        assert_eq!(
            build_relaxed(&bp, RelaxationScheme::Mdp1, 0.0).unwrap(),
            base
        );
        let r = build_relaxed(&bp, RelaxationScheme::Mdp3, 0.1).unwrap();
        let w = [0.3, 0.2, -0.4, 1.7];
        for (a, b) in r.ineq.iter().zip(&base.ineq) {
            let shift = a.func.value(&w) - b.func.value(&w);
            match a.kind {
                RowKind::ValueGap | RowKind::DualSign => assert!((shift + 0.1).abs() < 1e-15),
                _ => assert_eq!(shift, 0.0),
            }
        }
        assert!(build_relaxed(&bp, RelaxationScheme::Mdp1, -1.0).is_err());
    }

    #[test]
    fn mpcc_relaxation_is_one_sided_row() {
        let bp = fixtures::motivating_example().program;
        let r = build_relaxed(&bp, RelaxationScheme::MpccT, 0.1).unwrap();
        assert!(r.eq_index(RowKind::Complementarity).is_none());
        let row = &r.ineq[r.ineq_index(RowKind::Complementarity).unwrap()].func;
        // (x, y, u): −u(x − y) − 0.1
        assert!((row.value(&[0.0, 1.0, 2.0]) - (2.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn mond_weir_dual_of_one_dimensional_lp() {
        let mut p = Nlp::generic(PolyFunction::variable(1, 0).unwrap());
        p.push_ineq_generic(PolyFunction::variable(1, 0).unwrap().neg())
            .unwrap();
        let d = build_mond_weir_dual(&p).unwrap();
        assert_eq!(d.num_vars, 2);
        // stationarity 1 − u, sign row −(−u z) = u z
        assert_eq!(d.eq[0].func.value(&[5.0, 1.0]), 0.0);
        assert_eq!(d.ineq[0].func.value(&[5.0, 1.0]), 5.0);
        assert_eq!(d.objective.value(&[5.0, 1.0]), -5.0);
        assert_eq!(d.lower[1], 0.0);
        assert!(build_mond_weir_dual(&d).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!(
            "MDP1".parse::<RelaxationScheme>().unwrap(),
            RelaxationScheme::Mdp1
        );
        assert_eq!(
            "mpcc".parse::<RelaxationScheme>().unwrap(),
            RelaxationScheme::MpccT
        );
        assert!("foo".parse::<RelaxationScheme>().is_err());
    }
}
