//! Dense strictly convex QP by the Goldfarb–Idnani dual active-set method.
//!
//! Solves `min ½ dᵀG d + cᵀd` s.t. `a_kᵀd = b_k` (equalities) and
//! `a_kᵀd ≥ b_k` (inequalities) for positive definite `G`. The factors
//! `J = L⁻ᵀ Q` and `R` are updated with Givens rotations as constraints enter
//! and leave the active set.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct LinRow {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinRow {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        LinRow { a, b }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(p, q)| p * q).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Failure,
}

/// Solution with `G d + c = Σ μ_k a_k(eq) + Σ λ_k a_k(ineq)`, `λ ≥ 0`.
#[derive(Clone, Debug)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: Vec<f64>,
    pub eq_mult: Vec<f64>,
    pub ineq_mult: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Id {
    Eq(usize),
    Ineq(usize),
}

struct Factors {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    iq: usize,
    r_norm: f64,
}

impl Factors {
    /// `d = Jᵀ a`.
    fn project(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n];
        for (col, dc) in d.iter_mut().enumerate() {
            let mut s = 0.0;
            for (row, av) in a.iter().enumerate() {
                s += self.j[(row, col)] * av;
            }
            *dc = s;
        }
        d
    }

    /// Primal direction `z = J₂ d₂`.
    fn primal_dir(&self, d: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = vec![0.0; n];
        for col in self.iq..n {
            let dc = d[col];
            if dc != 0.0 {
                for (row, zr) in z.iter_mut().enumerate() {
                    *zr += self.j[(row, col)] * dc;
                }
            }
        }
        z
    }

    /// Dual direction `r = R⁻¹ d₁`.
    fn dual_dir(&self, d: &[f64]) -> Vec<f64> {
        let iq = self.iq;
        let mut r = vec![0.0; iq];
        for i in (0..iq).rev() {
            let mut s = d[i];
            for k in (i + 1)..iq {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }

    fn add(&mut self, d: &mut [f64]) -> bool {
        let n = self.n;
        let mut jj = n;
        while jj > self.iq + 1 {
            jj -= 1;
            let cc0 = d[jj - 1];
            let ss0 = d[jj];
            let h = cc0.hypot(ss0);
            if h == 0.0 {
                continue;
            }
            d[jj] = 0.0;
            let mut ss = ss0 / h;
            let mut cc = cc0 / h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                d[jj - 1] = -h;
            } else {
                d[jj - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..n {
                let t1 = self.j[(k, jj - 1)];
                let t2 = self.j[(k, jj)];
                let nv = t1 * cc + t2 * ss;
                self.j[(k, jj - 1)] = nv;
                self.j[(k, jj)] = xny * (t1 + nv) - t2;
            }
        }
        self.iq += 1;
        let iq = self.iq;
        for i in 0..iq {
            self.r[(i, iq - 1)] = d[i];
        }
        if d[iq - 1].abs() <= f64::EPSILON * self.r_norm {
            return false;
        }
        self.r_norm = self.r_norm.max(d[iq - 1].abs());
        true
    }

    fn remove(&mut self, l: usize) {
        let n = self.n;
        for i in l..self.iq - 1 {
            for row in 0..n {
                self.r[(row, i)] = self.r[(row, i + 1)];
            }
        }
        for row in 0..n {
            self.r[(row, self.iq - 1)] = 0.0;
        }
        self.iq -= 1;
        let iq = self.iq;
        for j in l..iq {
            let cc0 = self.r[(j, j)];
            let ss0 = self.r[(j + 1, j)];
            let h = cc0.hypot(ss0);
            if h == 0.0 {
                continue;
            }
            let mut cc = cc0 / h;
            let mut ss = ss0 / h;
            self.r[(j + 1, j)] = 0.0;
            if cc < 0.0 {
                self.r[(j, j)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(j, j)] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in (j + 1)..iq {
                let t1 = self.r[(j, k)];
                let t2 = self.r[(j + 1, k)];
                let nv = t1 * cc + t2 * ss;
                self.r[(j, k)] = nv;
                self.r[(j + 1, k)] = xny * (t1 + nv) - t2;
            }
            for k in 0..n {
                let t1 = self.j[(k, j)];
                let t2 = self.j[(k, j + 1)];
                let nv = t1 * cc + t2 * ss;
                self.j[(k, j)] = nv;
                self.j[(k, j + 1)] = xny * (nv + t1) - t2;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn row_tol(row: &LinRow, x: &[f64]) -> f64 {
    let s: f64 = row.a.iter().zip(x).map(|(p, q)| (p * q).abs()).sum();
    1e-11 * (1.0 + row.b.abs() + s)
}

pub fn solve_qp(g: &DMatrix<f64>, c: &[f64], eq: &[LinRow], ineq: &[LinRow]) -> QpSolution {
    let n = c.len();
    let fail = |status| QpSolution {
        status,
        x: vec![0.0; n],
        eq_mult: vec![0.0; eq.len()],
        ineq_mult: vec![0.0; ineq.len()],
    };
    let Some(chol) = g.clone().cholesky() else {
        return fail(QpStatus::Failure);
    };
    let l = chol.l();
    let Some(linv) = l.solve_lower_triangular(&DMatrix::identity(n, n)) else {
        return fail(QpStatus::Failure);
    };
    let mut fac = Factors {
        n,
        j: linv.transpose(),
        r: DMatrix::zeros(n, n),
        iq: 0,
        r_norm: 1.0,
    };
    let mut x: Vec<f64> = (-chol.solve(&DVector::from_column_slice(c)))
        .iter()
        .copied()
        .collect();
    let mut active: Vec<Id> = Vec::new();
    let mut u: Vec<f64> = Vec::new();

    for (k, row) in eq.iter().enumerate() {
        let mut d = fac.project(&row.a);
        let z = fac.primal_dir(&d);
        let r = fac.dual_dir(&d);
        let resid = row.dot(&x) - row.b;
        let tail = norm_inf(&d[fac.iq..]);
        if tail <= 1e-11 * norm_inf(&d).max(f64::MIN_POSITIVE) || fac.iq == n {
            if resid.abs() <= row_tol(row, &x) * 100.0 {
                continue;
            }
            return fail(QpStatus::Infeasible);
        }
        let t2 = -resid / dot(&z, &row.a);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += t2 * zi;
        }
        for (ui, ri) in u.iter_mut().zip(&r) {
            *ui -= t2 * ri;
        }
        if !fac.add(&mut d) {
            fac.iq -= 1;
            if resid.abs() <= row_tol(row, &x) * 100.0 {
                continue;
            }
            return fail(QpStatus::Failure);
        }
        u.push(t2);
        active.push(Id::Eq(k));
    }

    let mut is_active = vec![false; ineq.len()];
    let max_iter = 1000 + 20 * (n + ineq.len());
    let mut iter = 0;
    loop {
        iter += 1;
        if iter > max_iter {
            return fail(QpStatus::Failure);
        }
        let mut worst: Option<(usize, f64)> = None;
        for (k, row) in ineq.iter().enumerate() {
            if is_active[k] {
                continue;
            }
            let s = row.dot(&x) - row.b;
            if s < -row_tol(row, &x) {
                let scaled = s / (1.0 + norm_inf(&row.a));
                if worst.is_none_or(|(_, w)| scaled < w) {
                    worst = Some((k, scaled));
                }
            }
        }
        let Some((p, _)) = worst else {
            break;
        };
        let row = &ineq[p];
        let mut u_new = 0.0;
        loop {
            iter += 1;
            if iter > max_iter {
                return fail(QpStatus::Failure);
            }
            let mut d = fac.project(&row.a);
            let z = fac.primal_dir(&d);
            let r = fac.dual_dir(&d);
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for k in 0..fac.iq {
                if let Id::Ineq(_) = active[k] {
                    if r[k] > 0.0 {
                        let ratio = u[k] / r[k];
                        if ratio < t1 {
                            t1 = ratio;
                            drop = Some(k);
                        }
                    }
                }
            }
            let tail = norm_inf(&d[fac.iq..]);
            let dependent = fac.iq == n || tail <= 1e-11 * norm_inf(&d).max(f64::MIN_POSITIVE);
            let s = row.dot(&x) - row.b;
            let t2 = if dependent {
                f64::INFINITY
            } else {
                let zn = dot(&z, &row.a);
                if zn > 0.0 {
                    -s / zn
                } else {
                    f64::INFINITY
                }
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return fail(QpStatus::Infeasible);
            }
            if !t2.is_finite() {
                for (ui, ri) in u.iter_mut().zip(&r) {
                    *ui -= t * ri;
                }
                u_new += t;
                let l = drop.expect("finite partial step");
                fac.remove(l);
                if let Id::Ineq(q) = active.remove(l) {
                    is_active[q] = false;
                }
                u.remove(l);
                continue;
            }
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (ui, ri) in u.iter_mut().zip(&r) {
                *ui -= t * ri;
            }
            u_new += t;
            if t2 <= t1 {
                if !fac.add(&mut d) {
                    fac.iq -= 1;
                    return fail(QpStatus::Failure);
                }
                active.push(Id::Ineq(p));
                u.push(u_new);
                is_active[p] = true;
                break;
            }
            let l = drop.expect("partial step has a blocking constraint");
            fac.remove(l);
            if let Id::Ineq(q) = active.remove(l) {
                is_active[q] = false;
            }
            u.remove(l);
        }
    }

    let mut eq_mult = vec![0.0; eq.len()];
    let mut ineq_mult = vec![0.0; ineq.len()];
    for (id, &val) in active.iter().zip(&u) {
        match *id {
            Id::Eq(k) => eq_mult[k] = val,
            Id::Ineq(k) => ineq_mult[k] = val.max(0.0),
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return fail(QpStatus::Failure);
    }
    QpSolution {
        status: QpStatus::Optimal,
        x,
        eq_mult,
        ineq_mult,
    }
}
