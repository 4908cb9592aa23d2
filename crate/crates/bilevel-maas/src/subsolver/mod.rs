//! Self-contained solver for the single-level sub-problems: linear programs,
//! mixed-binary linear programs, and mixed-binary programs with convex
//! quadratic constraints.
//!
//! Everything runs on one engine: a bounded-variable revised simplex
//! ([`simplex`]), a best-bound branch and bound over binaries ([`milp`]), and
//! an outer-approximation loop that turns convex quadratic constraints into
//! accumulated gradient cuts ([`outer`]). All pivoting and branching choices
//! are deterministic, so identical programs produce identical solve paths.

mod milp;
mod outer;
mod simplex;

pub use milp::solve_milp_cfg;
pub use simplex::{solve_lp_cfg, Basis};

/// Variable kind: continuous within bounds, or binary (integral in {0,1}).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// One decision variable. Bounds must be finite.
#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

impl Variable {
    pub fn cont(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Continuous,
            lower,
            upper,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
        }
    }
}

/// Linear constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// Sparse linear constraint `sum coeffs . x  relation  rhs`.
#[derive(Debug, Clone)]
pub struct LinCon {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinCon {
    pub fn new(
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Self {
        LinCon {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        }
    }

    /// Left-hand-side value at a point.
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Signed violation at a point (positive means violated).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.lhs(x);
        match self.relation {
            Relation::Le => v - self.rhs,
            Relation::Ge => self.rhs - v,
            Relation::Eq => (v - self.rhs).abs(),
        }
    }
}

/// Convex quadratic constraint `x' Q x + a' x <= rhs`.
///
/// `q` holds the upper triangle of Q: an entry `(i, j, v)` with `i == j`
/// contributes `v * x_i^2`, and with `i < j` contributes `v * x_i * x_j`
/// (v is the full cross coefficient). Q must be positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadCon {
    pub name: String,
    pub q: Vec<(usize, usize, f64)>,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl QuadCon {
    /// Quadratic-form value x' Q x at a point.
    pub fn quad_value(&self, x: &[f64]) -> f64 {
        self.q
            .iter()
            .map(|&(i, j, v)| if i == j { v * x[i] * x[i] } else { v * x[i] * x[j] })
            .sum()
    }

    /// Violation `x' Q x + a' x - rhs` (positive means violated).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
        self.quad_value(x) + lin - self.rhs
    }

    /// Gradient cut at `xb`: `(2 Q xb + a)' x <= rhs + xb' Q xb`.
    ///
    /// Valid for every point satisfying the constraint whenever Q is PSD.
    pub fn gradient_cut(&self, xb: &[f64]) -> LinCon {
        let mut grad: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for &(i, j, v) in &self.q {
            if i == j {
                *grad.entry(i).or_insert(0.0) += 2.0 * v * xb[i];
            } else {
                *grad.entry(i).or_insert(0.0) += v * xb[j];
                *grad.entry(j).or_insert(0.0) += v * xb[i];
            }
        }
        for &(j, c) in &self.coeffs {
            *grad.entry(j).or_insert(0.0) += c;
        }
        LinCon::new(
            format!("{}_cut", self.name),
            grad.into_iter().collect(),
            Relation::Le,
            self.rhs + self.quad_value(xb),
        )
    }

    /// True when every connected block of Q is positive semidefinite.
    pub fn is_psd(&self, tol: f64) -> bool {
        let vars: Vec<usize> = {
            let mut v: Vec<usize> = self.q.iter().flat_map(|&(i, j, _)| [i, j]).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        if vars.is_empty() {
            return true;
        }
        let pos = |k: usize| vars.binary_search(&k).unwrap();
        let n = vars.len();
        let mut mat = vec![0.0; n * n];
        for &(i, j, v) in &self.q {
            let (a, b) = (pos(i), pos(j));
            if a == b {
                mat[a * n + a] += v;
            } else {
                mat[a * n + b] += v / 2.0;
                mat[b * n + a] += v / 2.0;
            }
        }
        min_eigenvalue(&mut mat, n) >= -tol
    }
}

/// Smallest eigenvalue of a small dense symmetric matrix (cyclic Jacobi).
fn min_eigenvalue(mat: &mut [f64], n: usize) -> f64 {
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += mat[i * n + j] * mat[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = mat[p * n + q];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let theta = (mat[q * n + q] - mat[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = mat[k * n + p];
                    let akq = mat[k * n + q];
                    mat[k * n + p] = c * akp - s * akq;
                    mat[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = mat[p * n + k];
                    let aqk = mat[q * n + k];
                    mat[p * n + k] = c * apk - s * aqk;
                    mat[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| mat[i * n + i]).fold(f64::INFINITY, f64::min)
}

/// A mixed program: maximize a linear objective over linear and convex
/// quadratic constraints with bounded continuous/binary variables.
#[derive(Debug, Clone, Default)]
pub struct MixedProgram {
    pub name: String,
    pub variables: Vec<Variable>,
    /// Dense objective coefficient vector (sense: maximize).
    pub objective: Vec<f64>,
    pub lin: Vec<LinCon>,
    pub quad: Vec<QuadCon>,
}

impl MixedProgram {
    pub fn new(name: impl Into<String>) -> Self {
        MixedProgram {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Add a variable, returning its column index.
    pub fn add_var(&mut self, var: Variable) -> usize {
        self.variables.push(var);
        self.objective.push(0.0);
        self.variables.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn has_binaries(&self) -> bool {
        self.variables.iter().any(|v| v.kind == VarKind::Binary)
    }

    /// Panics when the program violates its structural invariants
    /// (finite bounds, lower <= upper, indices in range, PSD quadratics).
    pub fn assert_well_formed(&self) {
        assert_eq!(
            self.objective.len(),
            self.variables.len(),
            "{}: objective length mismatch",
            self.name
        );
        for (j, v) in self.variables.iter().enumerate() {
            assert!(
                v.lower.is_finite() && v.upper.is_finite() && v.lower <= v.upper + 1e-12,
                "{}: variable {} ({}) needs finite ordered bounds, got [{}, {}]",
                self.name,
                j,
                v.name,
                v.lower,
                v.upper
            );
        }
        for c in self.lin.iter() {
            for &(j, _) in &c.coeffs {
                assert!(j < self.variables.len(), "{}: bad index in {}", self.name, c.name);
            }
        }
        for qc in &self.quad {
            for &(i, j, _) in &qc.q {
                assert!(
                    i <= j && j < self.variables.len(),
                    "{}: bad quad index in {}",
                    self.name,
                    qc.name
                );
            }
            assert!(qc.is_psd(1e-7), "{}: {} is not PSD", self.name, qc.name);
        }
    }

    /// Objective value at a point.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Maximum constraint/bound/integrality violation at a point.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, v) in self.variables.iter().enumerate() {
            worst = worst.max(v.lower - x[j]).max(x[j] - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((x[j] - x[j].round()).abs());
            }
        }
        for c in &self.lin {
            worst = worst.max(c.violation(x));
        }
        for qc in &self.quad {
            worst = worst.max(qc.violation(x));
        }
        worst
    }

    /// Plain-text dump: one declaration or constraint per line, in
    /// declaration order, suitable for diffing solver inputs.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "program {}", self.name);
        let mut obj = String::from("maximize:");
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(obj, " {:+} {}", c, self.variables[j].name);
            }
        }
        let _ = writeln!(out, "{obj}");
        for v in &self.variables {
            let kind = match v.kind {
                VarKind::Continuous => "cont",
                VarKind::Binary => "bin",
            };
            let _ = writeln!(out, "var {} {} [{}, {}]", v.name, kind, v.lower, v.upper);
        }
        for c in &self.lin {
            let mut line = format!("st {}:", c.name);
            for &(j, coef) in &c.coeffs {
                let _ = write!(line, " {:+} {}", coef, self.variables[j].name);
            }
            let _ = writeln!(out, "{line} {} {}", c.relation.symbol(), c.rhs);
        }
        for qc in &self.quad {
            let mut line = format!("qc {}:", qc.name);
            for &(i, j, v) in &qc.q {
                if i == j {
                    let _ = write!(line, " {:+} {}^2", v, self.variables[i].name);
                } else {
                    let _ = write!(
                        line,
                        " {:+} {}*{}",
                        v, self.variables[i].name, self.variables[j].name
                    );
                }
            }
            for &(j, coef) in &qc.coeffs {
                let _ = write!(line, " {:+} {}", coef, self.variables[j].name);
            }
            let _ = writeln!(out, "{line} <= {}", qc.rhs);
        }
        out
    }
}

/// Solve status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

/// Result of a solve. `duals` holds per-linear-constraint multipliers and is
/// populated by the pure LP path only.
///
/// Dual sign convention for `maximize`: `<=` rows get duals >= 0, `>=` rows
/// duals <= 0, `=` rows free, and complementary slackness
/// `dual * (rhs - lhs) = 0` holds at optimality.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    pub point: Vec<f64>,
    pub duals: Vec<f64>,
}

impl SolveOutcome {
    pub(crate) fn infeasible() -> Self {
        SolveOutcome {
            status: SolveStatus::Infeasible,
            objective: f64::NAN,
            point: Vec::new(),
            duals: Vec::new(),
        }
    }
}

/// Solver tolerances and caps. All fields have the documented defaults.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Absolute feasibility tolerance on constraints at reported solutions.
    pub feas_tol: f64,
    /// Integrality tolerance on binaries.
    pub int_tol: f64,
    /// Simplex pivot cap per LP solve.
    pub pivot_cap: usize,
    /// Outer-approximation cut cap.
    pub cut_cap: usize,
    /// Outer-approximation violation tolerance on quadratic constraints.
    pub quad_tol: f64,
    /// Branch-and-bound node cap per MILP solve.
    pub node_cap: usize,
    /// Pivot count after which a stalled LP solve is rescued (cold restart,
    /// then the artificial two-phase method at twice the count). Zero picks
    /// a threshold proportional to the program size.
    pub rescue_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-6,
            int_tol: 1e-9,
            pivot_cap: 1_000_000,
            cut_cap: 500,
            quad_tol: 1e-6,
            node_cap: 500_000,
            rescue_cap: 0,
        }
    }
}

/// Solve a pure LP (no binaries, no quadratic constraints).
pub fn solve_lp(prog: &MixedProgram) -> SolveOutcome {
    assert!(!prog.has_binaries(), "{}: solve_lp requires no binaries", prog.name);
    assert!(prog.quad.is_empty(), "{}: solve_lp requires no quadratics", prog.name);
    solve_lp_cfg(prog, &SolverConfig::default(), None).0
}

/// Solve a mixed-binary linear program (no quadratic constraints).
pub fn solve_milp(prog: &MixedProgram) -> SolveOutcome {
    assert!(prog.quad.is_empty(), "{}: solve_milp requires no quadratics", prog.name);
    solve_milp_cfg(prog, &SolverConfig::default())
}

/// Solve a mixed-binary program with convex quadratic constraints by outer
/// approximation.
pub fn solve_miconvex(prog: &MixedProgram) -> SolveOutcome {
    solve_miconvex_cfg(prog, &SolverConfig::default())
}

/// [`solve_miconvex`] with explicit configuration.
pub fn solve_miconvex_cfg(prog: &MixedProgram, cfg: &SolverConfig) -> SolveOutcome {
    outer::solve_outer(prog, cfg)
}

/// Dispatch on program shape: LP, MILP, or outer approximation.
pub fn solve(prog: &MixedProgram) -> SolveOutcome {
    solve_cfg(prog, &SolverConfig::default())
}

/// [`solve`] with explicit configuration.
pub fn solve_cfg(prog: &MixedProgram, cfg: &SolverConfig) -> SolveOutcome {
    if !prog.quad.is_empty() {
        outer::solve_outer(prog, cfg)
    } else if prog.has_binaries() {
        solve_milp_cfg(prog, cfg)
    } else {
        solve_lp_cfg(prog, cfg, None).0
    }
}

/// Maximum KKT residual of an LP solution: primal feasibility, dual sign
/// feasibility, reduced-cost sign conditions, and complementary slackness.
/// Used by tests to certify `solve_lp` outcomes.
pub fn lp_kkt_residual(prog: &MixedProgram, out: &SolveOutcome) -> f64 {
    if out.status != SolveStatus::Optimal {
        return f64::INFINITY;
    }
    let x = &out.point;
    let pi = &out.duals;
    let mut res = prog.max_violation(x).max(0.0);
    for (k, c) in prog.lin.iter().enumerate() {
        match c.relation {
            Relation::Le => res = res.max(-pi[k]),
            Relation::Ge => res = res.max(pi[k]),
            Relation::Eq => {}
        }
        res = res.max((pi[k] * (c.rhs - c.lhs(x))).abs());
    }
    let mut reduced = prog.objective.clone();
    for (k, c) in prog.lin.iter().enumerate() {
        for &(j, a) in &c.coeffs {
            reduced[j] -= pi[k] * a;
        }
    }
    for (j, v) in prog.variables.iter().enumerate() {
        let at_lower = x[j] - v.lower <= 1e-7;
        let at_upper = v.upper - x[j] <= 1e-7;
        if at_lower && at_upper {
            continue;
        }
        if at_lower {
            res = res.max(reduced[j]);
        } else if at_upper {
            res = res.max(-reduced[j]);
        } else {
            res = res.max(reduced[j].abs());
        }
    }
    res
}
