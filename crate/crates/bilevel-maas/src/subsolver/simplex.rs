#![allow(clippy::needless_range_loop)]

//! Bounded-variable revised simplex with a dense maintained basis inverse.
//!
//! Columns are the structural variables followed by one slack per row
//! (`<=` slack in [0, inf), `>=` slack in (-inf, 0], `=` slack fixed at 0).
//! Phase 1 minimizes the sum of basic bound violations with composite
//! pricing; phase 2 maximizes the objective. Pricing is Dantzig with
//! lowest-index tie-breaks, switching permanently to Bland's rule after 1000
//! degenerate pivots. The basis inverse is updated in product form and
//! refactorized periodically. Solves that stall far past the expected pivot
//! count restart from the cold basis and then hand over to an artificial
//! two-phase method whose fixed phase objectives cannot cycle.

use super::{MixedProgram, Relation, SolveOutcome, SolveStatus, SolverConfig, Variable};

const INF: f64 = f64::INFINITY;
const PIV_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const DEGEN_STEP: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;

/// Basis snapshot for warm-starting a related LP (same shape, changed
/// bounds or appended rows are fine as long as the column count matches).
#[derive(Debug, Clone)]
pub struct Basis {
    /// Basic column index per row.
    pub basic: Vec<usize>,
    /// Nonbasic-at-upper flag per column.
    pub at_upper: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ColState {
    Basic(usize),
    Lower,
    Upper,
}

struct Simplex {
    m: usize,
    n_struct: usize,
    n: usize,
    /// Sparse structural columns; slack columns are implicit unit vectors.
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    up: Vec<f64>,
    c: Vec<f64>,
    rhs: Vec<f64>,
    binv: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    x: Vec<f64>,
    bland: bool,
    degen: usize,
    pivots: usize,
    since_refactor: usize,
}

enum StepOutcome {
    Moved,
    NoEntering,
    Unbounded,
}

impl Simplex {
    fn build(prog: &MixedProgram, bounds: Option<(&[f64], &[f64])>) -> Self {
        let m = prog.lin.len();
        let n_struct = prog.variables.len();
        let n = n_struct + m;
        let mut cols = vec![Vec::new(); n_struct];
        let mut rhs = vec![0.0; m];
        let mut lo = Vec::with_capacity(n);
        let mut up = Vec::with_capacity(n);
        match bounds {
            Some((l, u)) => {
                lo.extend_from_slice(l);
                up.extend_from_slice(u);
            }
            None => {
                for v in &prog.variables {
                    lo.push(v.lower);
                    up.push(v.upper);
                }
            }
        }
        for (k, con) in prog.lin.iter().enumerate() {
            rhs[k] = con.rhs;
            for &(j, a) in &con.coeffs {
                if a != 0.0 {
                    cols[j].push((k, a));
                }
            }
            match con.relation {
                Relation::Le => {
                    lo.push(0.0);
                    up.push(INF);
                }
                Relation::Ge => {
                    lo.push(-INF);
                    up.push(0.0);
                }
                Relation::Eq => {
                    lo.push(0.0);
                    up.push(0.0);
                }
            }
        }
        let mut c = vec![0.0; n];
        c[..n_struct].copy_from_slice(&prog.objective);
        Simplex {
            m,
            n_struct,
            n,
            cols,
            lo,
            up,
            c,
            rhs,
            binv: vec![0.0; m * m],
            basis: vec![0; m],
            state: vec![ColState::Lower; n],
            x: vec![0.0; n],
            bland: false,
            degen: 0,
            pivots: 0,
            since_refactor: 0,
        }
    }

    fn nonbasic_resting_value(&self, j: usize) -> (ColState, f64) {
        if self.lo[j].is_finite() {
            (ColState::Lower, self.lo[j])
        } else {
            (ColState::Upper, self.up[j])
        }
    }

    fn reset_cold(&mut self) {
        for j in 0..self.n {
            let (s, v) = self.nonbasic_resting_value(j);
            self.state[j] = s;
            self.x[j] = v;
        }
        for k in 0..self.m {
            let j = self.n_struct + k;
            self.basis[k] = j;
            self.state[j] = ColState::Basic(k);
        }
        self.binv.fill(0.0);
        for k in 0..self.m {
            self.binv[k * self.m + k] = 1.0;
        }
        self.compute_xb();
    }

    fn apply_hint(&mut self, hint: &Basis) -> bool {
        if hint.basic.len() != self.m || hint.at_upper.len() > self.n {
            return false;
        }
        let mut used = vec![false; self.n];
        for &j in &hint.basic {
            if j >= self.n || used[j] {
                return false;
            }
            used[j] = true;
        }
        for j in 0..self.n {
            let prefer_upper = hint.at_upper.get(j).copied().unwrap_or(false);
            self.state[j] = if prefer_upper && self.up[j].is_finite() {
                ColState::Upper
            } else {
                self.nonbasic_resting_value(j).0
            };
            self.x[j] = match self.state[j] {
                ColState::Upper => self.up[j],
                _ => self.lo[j],
            };
        }
        for (k, &j) in hint.basic.iter().enumerate() {
            self.basis[k] = j;
            self.state[j] = ColState::Basic(k);
        }
        if !self.refactor() {
            return false;
        }
        self.compute_xb();
        true
    }

    /// Rebuild the dense inverse from the basis columns (Gauss-Jordan with
    /// partial pivoting). Returns false when the basis is singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            if j < self.n_struct {
                for &(row, a) in &self.cols[j] {
                    mat[row * m + k] = a;
                }
            } else {
                mat[(j - self.n_struct) * m + k] = 1.0;
            }
        }
        let mut inv = vec![0.0; m * m];
        for k in 0..m {
            inv[k * m + k] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = mat[col * m + col].abs();
            for r in (col + 1)..m {
                let v = mat[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-11 {
                return false;
            }
            if piv_row != col {
                for j in 0..m {
                    mat.swap(col * m + j, piv_row * m + j);
                    inv.swap(col * m + j, piv_row * m + j);
                }
            }
            let p = mat[col * m + col];
            for j in 0..m {
                mat[col * m + j] /= p;
                inv[col * m + j] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = mat[r * m + col];
                if f != 0.0 {
                    for j in 0..m {
                        mat[r * m + j] -= f * mat[col * m + j];
                        inv[r * m + j] -= f * inv[col * m + j];
                    }
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        true
    }

    fn compute_xb(&mut self) {
        let m = self.m;
        let mut r = self.rhs.clone();
        for j in 0..self.n {
            if matches!(self.state[j], ColState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < self.n_struct {
                for &(row, a) in &self.cols[j] {
                    r[row] -= a * xj;
                }
            } else {
                r[j - self.n_struct] -= xj;
            }
        }
        for i in 0..m {
            let mut v = 0.0;
            for k in 0..m {
                v += self.binv[i * m + k] * r[k];
            }
            self.x[self.basis[i]] = v;
        }
    }

    /// alpha = B^-1 a_j for a structural or slack column.
    fn ftran_col(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        if j < self.n_struct {
            for &(row, a) in &self.cols[j] {
                for i in 0..m {
                    alpha[i] += a * self.binv[i * m + row];
                }
            }
        } else {
            let row = j - self.n_struct;
            for i in 0..m {
                alpha[i] = self.binv[i * m + row];
            }
        }
        alpha
    }

    /// y = (w' B^-1)' for pricing.
    fn btran(&self, w: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let wi = w[i];
            if wi != 0.0 {
                for r in 0..m {
                    y[r] += wi * self.binv[i * m + r];
                }
            }
        }
        y
    }

    fn col_dot(&self, y: &[f64], j: usize) -> f64 {
        if j < self.n_struct {
            self.cols[j].iter().map(|&(row, a)| y[row] * a).sum()
        } else {
            y[j - self.n_struct]
        }
    }

    /// One simplex step. `w` is None for phase 2 (objective pricing) or the
    /// violation-sign vector for phase 1.
    fn step(&mut self, w: Option<&[f64]>) -> StepOutcome {
        let phase1 = w.is_some();
        let y = match w {
            Some(w) => self.btran(w),
            None => {
                let cb: Vec<f64> = self.basis.iter().map(|&j| self.c[j]).collect();
                self.btran(&cb)
            }
        };

        let mut enter: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for j in 0..self.n {
            let (dir, score) = match self.state[j] {
                ColState::Basic(_) => continue,
                ColState::Lower => {
                    if self.lo[j] == self.up[j] {
                        continue;
                    }
                    let d = self.col_dot(&y, j);
                    let score = if phase1 { d } else { self.c[j] - d };
                    if score <= RC_TOL {
                        continue;
                    }
                    (1.0, score)
                }
                ColState::Upper => {
                    if self.lo[j] == self.up[j] {
                        continue;
                    }
                    let d = self.col_dot(&y, j);
                    let score = if phase1 { d } else { self.c[j] - d };
                    if score >= -RC_TOL {
                        continue;
                    }
                    (-1.0, -score)
                }
            };
            if self.bland {
                enter = Some((j, dir, score));
                break;
            }
            if enter.is_none_or(|(_, _, s)| score > s) {
                enter = Some((j, dir, score));
            }
        }
        let Some((q, dir, _)) = enter else {
            return StepOutcome::NoEntering;
        };

        let alpha = self.ftran_col(q);
        let flip_len = self.up[q] - self.lo[q];
        let mut best_t = if flip_len.is_finite() { flip_len } else { INF };
        let mut leave: Option<(usize, bool)> = None; // (row, leaves_at_upper)
        for i in 0..self.m {
            let rate = -dir * alpha[i];
            if rate.abs() <= PIV_TOL {
                continue;
            }
            let bj = self.basis[i];
            let xv = self.x[bj];
            let (t, to_upper) = if phase1 && xv < self.lo[bj] - FEAS_TOL {
                if rate > 0.0 {
                    ((self.lo[bj] - xv) / rate, false)
                } else {
                    continue;
                }
            } else if phase1 && xv > self.up[bj] + FEAS_TOL {
                if rate < 0.0 {
                    ((self.up[bj] - xv) / rate, true)
                } else {
                    continue;
                }
            } else if rate > 0.0 {
                if !self.up[bj].is_finite() {
                    continue;
                }
                ((self.up[bj] - xv) / rate, true)
            } else {
                if !self.lo[bj].is_finite() {
                    continue;
                }
                ((self.lo[bj] - xv) / rate, false)
            };
            let t = t.max(0.0);
            let replace = match leave {
                None => t < best_t - 1e-12,
                Some((cur, _)) => {
                    t < best_t - 1e-12
                        || (t < best_t + 1e-12 && self.bland && self.basis[i] < self.basis[cur])
                }
            };
            if replace {
                best_t = t;
                leave = Some((i, to_upper));
            }
        }

        if leave.is_none() && !best_t.is_finite() {
            return StepOutcome::Unbounded;
        }
        let t = best_t;
        if t <= DEGEN_STEP {
            self.degen += 1;
            if self.degen >= 1000 {
                self.bland = true;
            }
        }

        // Move the entering variable and all basics.
        self.x[q] += dir * t;
        for i in 0..self.m {
            if alpha[i] != 0.0 {
                let bj = self.basis[i];
                self.x[bj] -= dir * t * alpha[i];
            }
        }

        match leave {
            None => {
                // Bound flip.
                self.state[q] = if dir > 0.0 { ColState::Upper } else { ColState::Lower };
                self.x[q] = if dir > 0.0 { self.up[q] } else { self.lo[q] };
            }
            Some((r, to_upper)) => {
                let out = self.basis[r];
                self.x[out] = if to_upper { self.up[out] } else { self.lo[out] };
                self.state[out] = if to_upper { ColState::Upper } else { ColState::Lower };
                self.basis[r] = q;
                self.state[q] = ColState::Basic(r);
                // Product-form update of the inverse.
                let m = self.m;
                let piv = alpha[r];
                let row_r: Vec<f64> = (0..m).map(|k| self.binv[r * m + k] / piv).collect();
                for i in 0..m {
                    if i == r {
                        continue;
                    }
                    let f = alpha[i];
                    if f != 0.0 {
                        for k in 0..m {
                            self.binv[i * m + k] -= f * row_r[k];
                        }
                    }
                }
                self.binv[r * m..(r + 1) * m].copy_from_slice(&row_r);
                self.since_refactor += 1;
            }
        }
        self.pivots += 1;
        StepOutcome::Moved
    }

    fn violation_signs(&self) -> Option<Vec<f64>> {
        let mut w = vec![0.0; self.m];
        let mut any = false;
        for (i, &j) in self.basis.iter().enumerate() {
            if self.x[j] < self.lo[j] - FEAS_TOL {
                w[i] = -1.0;
                any = true;
            } else if self.x[j] > self.up[j] + FEAS_TOL {
                w[i] = 1.0;
                any = true;
            }
        }
        any.then_some(w)
    }

    fn export_basis(&self) -> Basis {
        Basis {
            basic: self.basis.clone(),
            at_upper: self.state.iter().map(|s| *s == ColState::Upper).collect(),
        }
    }
}

/// Solve a pure LP with optional warm-start basis. Returns the outcome and
/// the final basis (reusable as a hint for a nearby program).
pub fn solve_lp_cfg(
    prog: &MixedProgram,
    cfg: &SolverConfig,
    hint: Option<&Basis>,
) -> (SolveOutcome, Basis) {
    prog.assert_well_formed();
    solve_lp_bounded(prog, cfg, None, hint)
}

/// [`solve_lp_cfg`] with overridden variable bounds (used by branch and
/// bound to avoid cloning the program at every node). Bound slices must
/// cover the structural variables.
pub fn solve_lp_bounded(
    prog: &MixedProgram,
    cfg: &SolverConfig,
    bounds: Option<(&[f64], &[f64])>,
    hint: Option<&Basis>,
) -> (SolveOutcome, Basis) {
    solve_core(prog, cfg, bounds, hint, true)
}

fn solve_core(
    prog: &MixedProgram,
    cfg: &SolverConfig,
    bounds: Option<(&[f64], &[f64])>,
    hint: Option<&Basis>,
    allow_rescue: bool,
) -> (SolveOutcome, Basis) {
    let mut s = Simplex::build(prog, bounds);
    let warm_ok = hint.is_some_and(|h| s.apply_hint(h));
    if !warm_ok {
        s.reset_cold();
    }

    // A solve that runs far past the expected pivot count is stuck in a
    // degenerate swamp. First rescue: restart from the cold slack basis.
    // Second rescue: hand over to the artificial two-phase method, whose
    // fixed phase objectives restore Bland's finiteness guarantee. The
    // pivot cap stays as the final backstop.
    let rescue_at = if cfg.rescue_cap > 0 {
        cfg.rescue_cap
    } else {
        5_000.max(20 * (s.m + s.n))
    };
    let mut rescued = false;
    let mut refreshes = 0;
    let status = loop {
        if s.pivots >= cfg.pivot_cap {
            break SolveStatus::IterLimit;
        }
        if allow_rescue && s.pivots >= rescue_at {
            if !rescued {
                rescued = true;
                s.reset_cold();
            } else if s.pivots >= 2 * rescue_at {
                return solve_artificial(prog, cfg, bounds);
            }
        }
        if s.since_refactor >= REFACTOR_EVERY {
            if !s.refactor() {
                s.reset_cold();
            }
            s.compute_xb();
        }
        let w = s.violation_signs();
        let phase1 = w.is_some();
        match s.step(w.as_deref()) {
            StepOutcome::Moved => {}
            StepOutcome::Unbounded => {
                // An unbounded ray in phase 1 only ever arises from pivot
                // noise; the program itself cannot escape its bound box.
                break if phase1 {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::Unbounded
                };
            }
            StepOutcome::NoEntering => {
                // Refresh the factorization before trusting the verdict.
                if refreshes < 3 {
                    refreshes += 1;
                    if !s.refactor() {
                        s.reset_cold();
                    }
                    s.compute_xb();
                    if s.violation_signs().is_some() != phase1 {
                        continue;
                    }
                    let w2 = s.violation_signs();
                    match s.step(w2.as_deref()) {
                        StepOutcome::Moved => continue,
                        StepOutcome::Unbounded => break SolveStatus::Unbounded,
                        StepOutcome::NoEntering => {}
                    }
                }
                break if s.violation_signs().is_some() {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::Optimal
                };
            }
        }
    };

    let basis = s.export_basis();
    if status != SolveStatus::Optimal {
        let out = if status == SolveStatus::Infeasible {
            SolveOutcome::infeasible()
        } else {
            SolveOutcome {
                status,
                objective: f64::NAN,
                point: s.x[..s.n_struct].to_vec(),
                duals: Vec::new(),
            }
        };
        return (out, basis);
    }

    // Snap nonbasic values exactly to their bounds and recompute basics.
    s.compute_xb();
    let cb: Vec<f64> = s.basis.iter().map(|&j| s.c[j]).collect();
    let duals = s.btran(&cb);
    let point: Vec<f64> = s.x[..s.n_struct].to_vec();
    let objective = prog.objective_value(&point);
    (
        SolveOutcome {
            status: SolveStatus::Optimal,
            objective,
            point,
            duals,
        },
        basis,
    )
}

/// Two-phase rescue with explicit artificial columns.
///
/// Phase A starts from an exactly feasible basis (one artificial per row
/// absorbs that row's residual at the resting point) and drives the total
/// artificial mass down under a fixed objective, so the anti-cycling rule
/// is sound where the composite phase 1 is not. Phase B re-solves the
/// original objective from the feasible basis phase A leaves behind, with
/// the artificials pinned to whatever sliver of mass remains.
fn solve_artificial(
    prog: &MixedProgram,
    cfg: &SolverConfig,
    bounds: Option<(&[f64], &[f64])>,
) -> (SolveOutcome, Basis) {
    let m = prog.lin.len();
    let n0 = prog.variables.len();
    let mut ext = prog.clone();
    if let Some((l, u)) = bounds {
        for (j, v) in ext.variables.iter_mut().enumerate() {
            v.lower = l[j];
            v.upper = u[j];
        }
    }
    let rest: Vec<f64> = ext
        .variables
        .iter()
        .map(|v| if v.lower.is_finite() { v.lower } else { v.upper })
        .collect();
    for k in 0..m {
        let resid = ext.lin[k].rhs - ext.lin[k].lhs(&rest);
        let sign = if resid < 0.0 { -1.0 } else { 1.0 };
        let j = ext.add_var(Variable::cont(format!("art_{k}"), 0.0, resid.abs()));
        ext.lin[k].coeffs.push((j, sign));
    }
    let original = ext.objective.clone();
    ext.objective[..n0].fill(0.0);
    ext.objective[n0..].fill(-1.0);
    let start = Basis {
        basic: (n0..n0 + m).collect(),
        at_upper: Vec::new(),
    };

    let (a_out, a_basis) = solve_core(&ext, cfg, None, Some(&start), false);
    if a_out.status != SolveStatus::Optimal {
        let mut out = a_out;
        out.point.truncate(n0);
        return (out, a_basis);
    }
    if a_out.objective < -cfg.feas_tol {
        return (SolveOutcome::infeasible(), a_basis);
    }

    ext.objective = original;
    for k in 0..m {
        ext.variables[n0 + k].upper = a_out.point[n0 + k].max(0.0);
    }
    let (mut out, basis) = solve_core(&ext, cfg, None, Some(&a_basis), false);
    out.point.truncate(n0);
    (out, basis)
}
