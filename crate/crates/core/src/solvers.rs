//! Saddle-point solves and time stepping: the one-level nonlinear scheme
//! (Newton iteration) and the two-level schemes that correct a coarse
//! nonlinear solution with one linear fine-mesh solve.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::Mat;
use log::{debug, warn};

use crate::diagnostics::{
    angular_momentum, build_cylinder_test_field, drag_lift_unsteady, energy, error_norms, momentum, pressure_difference,
    DiagnosticsSeries, ForceScales, Record,
};
use crate::error::{Error, Result};
use crate::fespace::{build_taylor_hood, interpolate, l2_project, prolongate, FeSpace, FieldVector};
use crate::forms::{
    assemble_divergence, assemble_mass, assemble_stiffness, assemble_trilinear_jacobian, trilinear_vector, FormKind,
};
use crate::linalg::{norm2, SparseOperator};
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::problems::FlowProblem;

/// Constrained system
///
/// ```text
/// [ A  -B^T  0 ] [u]   [f]
/// [ B   0    m ] [p] = [g]
/// [ 0   m^T  0 ] [l]   [0]
/// ```
///
/// with Dirichlet values imposed on the listed velocity DOFs. `m` holds the
/// integrals of the pressure basis, so the last row fixes the pressure mean.
#[derive(Clone, Copy, Debug)]
pub struct SaddlePointSystem<'a> {
    pub a: &'a SparseOperator,
    pub b: &'a SparseOperator,
    pub f: &'a [f64],
    pub g: &'a [f64],
    /// Sorted `(dof, value)` pairs.
    pub dirichlet: &'a [(usize, f64)],
    pub mean: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct SaddlePointSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub multiplier: f64,
    /// Relative residual of the constrained system.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSettings {
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for LinearSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_refinements: 4,
        }
    }
}

/// Triplet pattern, its compressed structure and the argsort between them.
type Layout = (Vec<Pair<usize, usize>>, SymbolicSparseColMat<usize>, Argsort<usize>);

/// Sparse LU solver. The symbolic analysis is kept while the structure of
/// the assembled system does not change, and the latest numeric factor is
/// reused as a preconditioner until refinement with it stalls.
#[derive(Debug, Default)]
pub struct SaddlePointSolver {
    pub settings: LinearSettings,
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    factor: Option<BorderedLu>,
    layout: Option<Layout>,
}

impl SaddlePointSolver {
    pub fn new(settings: LinearSettings) -> Self {
        Self {
            settings,
            symbolic: None,
            factor: None,
            layout: None,
        }
    }

    pub fn solve(&mut self, sys: &SaddlePointSystem) -> Result<SaddlePointSolution> {
        let nv = sys.a.nrows();
        let np = sys.b.nrows();
        if sys.a.ncols() != nv || sys.b.ncols() != nv || sys.f.len() != nv || sys.g.len() != np || sys.mean.len() != np {
            return Err(Error::SpaceMismatch("inconsistent saddle-point block sizes".into()));
        }
        let n = nv + np + 1;
        let mut fixed = vec![None; nv];
        for &(d, v) in sys.dirichlet {
            fixed[d] = Some(v);
        }

        let mut rhs = vec![0.0; n];
        rhs[..nv].copy_from_slice(sys.f);
        rhs[nv..nv + np].copy_from_slice(sys.g);
        let cap = sys.a.values().len() + 2 * sys.b.values().len() + 2 * np + nv;
        let mut idx = Vec::with_capacity(cap);
        let mut val = Vec::with_capacity(cap);
        let mut push = |row: usize, col: usize, v: f64| {
            idx.push(Pair { row, col });
            val.push(v);
        };
        for r in 0..nv {
            if let Some(v) = fixed[r] {
                push(r, r, 1.0);
                rhs[r] = v;
                continue;
            }
            for (c, a) in sys.a.row_entries(r) {
                match fixed[c] {
                    Some(v) => rhs[r] -= a * v,
                    None => push(r, c, a),
                }
            }
        }
        for q in 0..np {
            for (c, b) in sys.b.row_entries(q) {
                match fixed[c] {
                    Some(v) => rhs[nv + q] -= b * v,
                    None => {
                        push(nv + q, c, b);
                        push(c, nv + q, -b);
                    }
                }
            }
        }
        // Only one pressure couples to the multiplier in the factored
        // matrix; a dense row and column would wreck the sparsity of the LU
        // factors. The rest of the border is added back by a rank-2 update.
        let pin = sys
            .mean
            .iter()
            .position(|&m| m != 0.0)
            .ok_or_else(|| Error::LinearSolve("pressure mean functional vanishes".into()))?;
        push(nv + pin, nv + np, sys.mean[pin]);
        push(nv + np, nv + pin, sys.mean[pin]);
        let mut border = sys.mean.to_vec();
        border[pin] = 0.0;

        let rhs_norm = norm2(&rhs);
        if rhs_norm == 0.0 {
            return Ok(SaddlePointSolution {
                u: vec![0.0; nv],
                p: vec![0.0; np],
                multiplier: 0.0,
                residual: 0.0,
            });
        }

        let mat = self.compress(n, idx.as_slice(), &val)?;
        let residual_of = |x: &[f64]| -> Vec<f64> {
            let mut r = rhs.clone();
            for (ij, v) in idx.iter().zip(&val) {
                r[ij.row] -= v * x[ij.col];
            }
            for (q, m) in border.iter().enumerate() {
                r[nv + q] -= m * x[nv + np];
                r[nv + np] -= m * x[nv + q];
            }
            r
        };
        let target = 1e-3 * self.settings.tolerance;

        // A factorization of an earlier matrix with the same structure is
        // tried first as a preconditioner; consecutive time steps differ
        // only slightly, so a few sweeps usually suffice.
        let mut solved = None;
        if self.same_structure(&mat) {
            if let Some(stale) = self.factor.as_mut() {
                if stale.border != border {
                    *stale = BorderedLu::new(stale.lu.clone(), border.clone(), nv);
                }
                let (x, res) = refine(stale, &rhs, rhs_norm, &residual_of, target, STALE_CONTRACTION, STALE_SWEEPS);
                if res <= target {
                    solved = Some((x, res));
                } else {
                    debug!("stale factorization stalled at residual {res:.3e}; refactoring");
                }
            }
        }
        let (x, res) = match solved {
            Some(s) => s,
            None => {
                let lu = BorderedLu::new(self.factor(&mat)?, border.clone(), nv);
                let out = refine(&lu, &rhs, rhs_norm, &residual_of, target, 1.0, self.settings.max_refinements);
                self.factor = Some(lu);
                out
            }
        };
        if !(res <= self.settings.tolerance) {
            return Err(Error::ResidualTolerance {
                residual: res,
                tolerance: self.settings.tolerance,
            });
        }

        let mut p = x[nv..nv + np].to_vec();
        let area: f64 = sys.mean.iter().sum();
        let mean = sys.mean.iter().zip(&p).map(|(m, q)| m * q).sum::<f64>() / area;
        p.iter_mut().for_each(|q| *q -= mean);
        Ok(SaddlePointSolution {
            u: x[..nv].to_vec(),
            p,
            multiplier: x[nv + np],
            residual: res,
        })
    }

    /// Compressed column form of the assembled entries, reusing the sort
    /// order from the previous call when the index list is unchanged.
    fn compress(&mut self, n: usize, idx: &[Pair<usize, usize>], val: &[f64]) -> Result<SparseColMat<usize, f64>> {
        let cached = matches!(&self.layout, Some((prev, _, _)) if prev.as_slice() == idx);
        if !cached {
            let (sym, order) = SymbolicSparseColMat::try_new_from_indices(n, n, idx)
                .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
            self.layout = Some((idx.to_vec(), sym, order));
        }
        let (_, sym, order) = self.layout.as_ref().expect("set above");
        SparseColMat::new_from_argsort(sym.clone(), order, val).map_err(|e| Error::LinearSolve(format!("{e:?}")))
    }

    fn same_structure(&self, mat: &SparseColMat<usize, f64>) -> bool {
        let s = mat.symbolic();
        matches!(&self.symbolic, Some((cp, ri, _)) if cp.as_slice() == s.col_ptr() && ri.as_slice() == s.row_idx())
    }

    fn factor(&mut self, mat: &SparseColMat<usize, f64>) -> Result<Lu<usize, f64>> {
        if !self.same_structure(mat) {
            let s = mat.symbolic();
            let sym = SymbolicLu::try_new(s).map_err(|e| Error::LinearSolve(format!("symbolic LU: {e:?}")))?;
            self.symbolic = Some((s.col_ptr().to_vec(), s.row_idx().to_vec(), sym));
            self.factor = None;
        }
        let sym = self.symbolic.as_ref().expect("set above").2.clone();
        Lu::try_new_with_symbolic(sym, mat.as_ref()).map_err(|e| Error::LinearSolve(format!("LU factorization: {e:?}")))
    }
}

const STALE_SWEEPS: usize = 8;
const STALE_CONTRACTION: f64 = 0.25;

/// LU factors of the system with a single pressure tied to the multiplier,
/// corrected for the full border `mean` by the Sherman-Morrison-Woodbury
/// formula. The border vector is stored with the pinned entry zeroed.
#[derive(Debug)]
struct BorderedLu {
    lu: Lu<usize, f64>,
    border: Vec<f64>,
    nv: usize,
    /// `P^{-1} e_lambda` and `P^{-1} border`.
    w: [Vec<f64>; 2],
    /// Inverse of the 2 x 2 capacitance matrix.
    cap: [[f64; 2]; 2],
}

impl BorderedLu {
    fn new(lu: Lu<usize, f64>, border: Vec<f64>, nv: usize) -> Self {
        let n = nv + border.len() + 1;
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0;
        let mut b = vec![0.0; n];
        b[nv..n - 1].copy_from_slice(&border);
        let w = [lu_solve(&lu, &e), lu_solve(&lu, &b)];
        let dot = |v: &[f64]| border.iter().zip(&v[nv..n - 1]).map(|(a, b)| a * b).sum::<f64>();
        let c = [[1.0 + dot(&w[0]), dot(&w[1])], [w[0][n - 1], 1.0 + w[1][n - 1]]];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let cap = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
        Self { lu, border, nv, w, cap }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut z = lu_solve(&self.lu, rhs);
        let n = z.len();
        let y0 = self.border.iter().zip(&z[self.nv..n - 1]).map(|(a, b)| a * b).sum::<f64>();
        let y = [y0, z[n - 1]];
        let c = [
            self.cap[0][0] * y[0] + self.cap[0][1] * y[1],
            self.cap[1][0] * y[0] + self.cap[1][1] * y[1],
        ];
        for (i, zi) in z.iter_mut().enumerate() {
            *zi -= c[0] * self.w[0][i] + c[1] * self.w[1][i];
        }
        z
    }
}

fn lu_solve(lu: &Lu<usize, f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let sol = lu.solve(Mat::<f64>::from_fn(n, 1, |i, _| b[i]));
    (0..n).map(|i| sol[(i, 0)]).collect()
}

/// Iterative refinement with `lu` as the approximate inverse. Stops at
/// `target`, after `sweeps` corrections, or once a sweep reduces the
/// residual by less than `min_contraction`.
fn refine(
    lu: &BorderedLu,
    rhs: &[f64],
    rhs_norm: f64,
    residual_of: &dyn Fn(&[f64]) -> Vec<f64>,
    target: f64,
    min_contraction: f64,
    sweeps: usize,
) -> (Vec<f64>, f64) {
    let solve = |b: &[f64]| lu.solve(b);
    let mut x = solve(rhs);
    let mut r = residual_of(&x);
    let mut res = norm2(&r) / rhs_norm;
    for _ in 0..sweeps {
        if res <= target || !res.is_finite() {
            break;
        }
        let dx = solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        r = residual_of(&x);
        let next = norm2(&r) / rhs_norm;
        let stalled = next > min_contraction * res;
        res = next;
        if stalled {
            break;
        }
    }
    (x, res)
}

/// One-shot direct solve of a saddle-point system.
pub fn solve_saddle_point(sys: &SaddlePointSystem) -> Result<SaddlePointSolution> {
    SaddlePointSolver::default().solve(sys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeScheme {
    Bdf1,
    Bdf2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    OneLevel,
    TwoLevelStokes,
    TwoLevelNewton,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::OneLevel => "one-level",
            Method::TwoLevelStokes => "two-level-stokes",
            Method::TwoLevelNewton => "two-level-newton",
        }
    }

    pub fn is_two_level(self) -> bool {
        self != Method::OneLevel
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::OneLevel, Method::TwoLevelStokes, Method::TwoLevelNewton]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub time_scheme: TimeScheme,
    pub method: Method,
    pub form: FormKind,
    pub newton: NewtonSettings,
    pub linear: LinearSettings,
}

impl SchemeConfig {
    pub fn new(nu: f64, dt: f64, t_final: f64) -> Self {
        Self {
            nu,
            dt,
            t_final,
            time_scheme: TimeScheme::Bdf2,
            method: Method::TwoLevelNewton,
            form: FormKind::Emac,
            newton: NewtonSettings::default(),
            linear: LinearSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.t_final >= self.dt
            && self.nu >= 0.0
            && self.newton.tolerance > 0.0
            && self.newton.max_iterations > 0
            && self.linear.tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid scheme settings: {self:?}")))
        }
    }

    /// `floor(T / dt)`, tolerant to the rounding of `T / dt`.
    pub fn num_steps(&self) -> usize {
        (self.t_final / self.dt + 1e-9).floor() as usize
    }
}

/// Solution at one time level, plus the previous velocity for BDF2.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub u: FieldVector,
    pub u_prev: Option<FieldVector>,
    pub p: FieldVector,
    /// BDF approximation of `du/dt` from the step that produced the state.
    pub du_dt: Option<FieldVector>,
    pub multiplier: f64,
    pub t: f64,
    pub step: usize,
}

impl FlowState {
    pub fn new(u: FieldVector, p: FieldVector) -> Self {
        Self {
            u,
            u_prev: None,
            p,
            du_dt: None,
            multiplier: 0.0,
            t: 0.0,
            step: 0,
        }
    }
}

/// Per-step solver statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub newton_iterations: usize,
    pub newton_residual: f64,
    /// Largest relative residual over the step's linear solves.
    pub linear_residual: f64,
    pub linear_solves: usize,
}

impl StepReport {
    fn absorb(&mut self, residual: f64) {
        self.linear_residual = self.linear_residual.max(residual);
        self.linear_solves += 1;
    }
}

/// Spaces and fixed operators on one mesh.
#[derive(Debug)]
pub struct Discretization {
    pub vel: Arc<FeSpace>,
    pub pres: Arc<FeSpace>,
    pub mass: SparseOperator,
    pub stiffness: SparseOperator,
    pub div: SparseOperator,
    pub pressure_mean: Vec<f64>,
    /// Boundary scalar DOFs with the tag whose data they carry (the
    /// smallest tag where edges with different tags meet).
    boundary: Vec<(usize, BoundaryTag)>,
    solver: SaddlePointSolver,
}

impl Discretization {
    pub fn new(mesh: &Arc<Mesh>, linear: LinearSettings) -> Result<Self> {
        let (vel, pres) = build_taylor_hood(mesh);
        let mass = assemble_mass(&vel);
        let stiffness = assemble_stiffness(&vel);
        let div = assemble_divergence(&vel, &pres)?;
        let pressure_mean = pres.load_vector(|_| 1.0)?;
        let mut tag_of = vec![None; vel.num_scalar_dofs()];
        let tags: Vec<BoundaryTag> = vel.boundary_tags().collect();
        for tag in tags {
            for &s in vel.tagged_scalar_dofs(tag).unwrap_or_default() {
                tag_of[s].get_or_insert(tag);
            }
        }
        let boundary = tag_of.iter().enumerate().filter_map(|(s, t)| t.map(|t| (s, t))).collect();
        Ok(Self {
            vel,
            pres,
            mass,
            stiffness,
            div,
            pressure_mean,
            boundary,
            solver: SaddlePointSolver::new(linear),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.vel.mesh()
    }

    /// Sorted Dirichlet data at time `t`.
    pub fn dirichlet_values(&self, problem: &dyn FlowProblem, t: f64) -> Vec<(usize, f64)> {
        let n = self.vel.num_scalar_dofs();
        let nodes = self.vel.nodes();
        let mut out = Vec::with_capacity(2 * self.boundary.len());
        let vals: Vec<[f64; 2]> = self
            .boundary
            .iter()
            .map(|&(s, tag)| problem.boundary_velocity(nodes[s], tag, t))
            .collect();
        for comp in 0..2 {
            for (&(s, _), v) in self.boundary.iter().zip(&vals) {
                out.push((comp * n + s, v[comp]));
            }
        }
        out
    }

    pub fn is_dirichlet(&self) -> Vec<bool> {
        let n = self.vel.num_scalar_dofs();
        let mut mask = vec![false; 2 * n];
        for &(s, _) in &self.boundary {
            mask[s] = true;
            mask[n + s] = true;
        }
        mask
    }

    /// Initial state: `u_0` projected (or interpolated) and zero pressure.
    pub fn initial_state(&self, problem: &dyn FlowProblem, data: InitialData) -> Result<FlowState> {
        let u = match data {
            InitialData::L2Projection => l2_project(|x| problem.initial_velocity(x), &self.vel)?,
            InitialData::Interpolation => interpolate(|x, _| problem.initial_velocity(x), 0.0, &self.vel)?,
        };
        Ok(FlowState::new(u, FieldVector::zeros(Arc::clone(&self.pres))))
    }

    pub fn solve(&mut self, a: &SparseOperator, f: &[f64], dirichlet: &[(usize, f64)]) -> Result<SaddlePointSolution> {
        let g = vec![0.0; self.pres.num_dofs()];
        let sys = SaddlePointSystem {
            a,
            b: &self.div,
            f,
            g: &g,
            dirichlet,
            mean: &self.pressure_mean,
        };
        self.solver.solve(&sys)
    }

    /// `alpha_0 M + nu K` with the history term of the time scheme and the
    /// initial Newton guess.
    fn time_terms(&self, state: &FlowState, cfg: &SchemeConfig) -> (SparseOperator, Vec<f64>, Vec<f64>) {
        let dt = cfg.dt;
        let un = state.u.coeffs();
        let (alpha, hist, guess) = match (&state.u_prev, cfg.time_scheme) {
            (Some(prev), TimeScheme::Bdf2) => {
                let um = prev.coeffs();
                let h: Vec<f64> = un.iter().zip(um).map(|(a, b)| (4.0 * a - b) / (2.0 * dt)).collect();
                let g: Vec<f64> = un.iter().zip(um).map(|(a, b)| 2.0 * a - b).collect();
                (1.5 / dt, h, g)
            }
            _ => (1.0 / dt, un.iter().map(|a| a / dt).collect(), un.to_vec()),
        };
        let mut lin = self.mass.scaled(alpha);
        lin.axpy(cfg.nu, &self.stiffness);
        let hist = self.mass.matvec(&hist);
        (lin, hist, guess)
    }

    fn forcing(&self, problem: &dyn FlowProblem, t: f64) -> Result<Vec<f64>> {
        if problem.has_forcing() {
            self.vel.load_vector(|x| problem.forcing(x, t))
        } else {
            Ok(vec![0.0; self.vel.num_dofs()])
        }
    }

    fn advance(&self, state: &FlowState, sol: SaddlePointSolution, cfg: &SchemeConfig, t: f64) -> Result<FlowState> {
        let un = state.u.coeffs();
        let du: Vec<f64> = match (&state.u_prev, cfg.time_scheme) {
            (Some(prev), TimeScheme::Bdf2) => (sol.u.iter().zip(un).zip(prev.coeffs()))
                .map(|((a, b), c)| (3.0 * a - 4.0 * b + c) / (2.0 * cfg.dt))
                .collect(),
            _ => sol.u.iter().zip(un).map(|(a, b)| (a - b) / cfg.dt).collect(),
        };
        Ok(FlowState {
            u: FieldVector::from_coeffs(Arc::clone(&self.vel), sol.u)?,
            u_prev: Some(state.u.clone()),
            p: FieldVector::from_coeffs(Arc::clone(&self.pres), sol.p)?,
            du_dt: Some(FieldVector::from_coeffs(Arc::clone(&self.vel), du)?),
            multiplier: sol.multiplier,
            t,
            step: state.step + 1,
        })
    }

    /// Relative residual of `lin u + b(u, u, .) - B^T p = rhs` on free rows
    /// and of the continuity rows.
    fn nonlinear_residual(&self, lin: &SparseOperator, sol: &SaddlePointSolution, nk: &[f64], rhs: &[f64], free: &[bool]) -> f64 {
        let lu = lin.matvec(&sol.u);
        let btp = self.div.transpose_matvec(&sol.p);
        let (mut r2, mut s2) = (0.0, 0.0);
        for i in 0..lu.len() {
            if !free[i] {
                continue;
            }
            let r = lu[i] + nk[i] - btp[i] - rhs[i];
            r2 += r * r;
            s2 += lu[i] * lu[i] + nk[i] * nk[i] + btp[i] * btp[i] + rhs[i] * rhs[i];
        }
        let bu = self.div.matvec(&sol.u);
        for (q, b) in bu.iter().enumerate() {
            let r = b + self.pressure_mean[q] * sol.multiplier;
            r2 += r * r;
            s2 += b * b;
        }
        if s2 == 0.0 {
            r2.sqrt()
        } else {
            (r2 / s2).sqrt()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialData {
    #[default]
    L2Projection,
    Interpolation,
}

/// Advances one step of the fully nonlinear scheme by Newton's method.
pub fn step_one_level(
    disc: &mut Discretization,
    state: &FlowState,
    cfg: &SchemeConfig,
    problem: &dyn FlowProblem,
) -> Result<(FlowState, StepReport)> {
    state.u.ensure_space(&disc.vel)?;
    let t1 = state.t + cfg.dt;
    let (lin, hist, guess) = disc.time_terms(state, cfg);
    let forcing = disc.forcing(problem, t1)?;
    let base: Vec<f64> = hist.iter().zip(&forcing).map(|(a, b)| a + b).collect();
    let bc = disc.dirichlet_values(problem, t1);
    let free: Vec<bool> = disc.is_dirichlet().iter().map(|d| !d).collect();

    let mut uk = guess;
    for &(d, v) in &bc {
        uk[d] = v;
    }
    let mut uk = FieldVector::from_coeffs(Arc::clone(&disc.vel), uk)?;
    let mut nk = trilinear_vector(cfg.form, &uk, &uk)?;
    let mut report = StepReport {
        step: state.step + 1,
        t: t1,
        ..Default::default()
    };
    let mut last = f64::INFINITY;
    for it in 1..=cfg.newton.max_iterations {
        let mut a = assemble_trilinear_jacobian(cfg.form, &uk, &disc.vel)?;
        a.axpy(1.0, &lin);
        let rhs: Vec<f64> = base.iter().zip(&nk).map(|(b, n)| b + n).collect();
        let sol = disc.solve(&a, &rhs, &bc)?;
        report.absorb(sol.residual);
        uk = FieldVector::from_coeffs(Arc::clone(&disc.vel), sol.u.clone())?;
        nk = trilinear_vector(cfg.form, &uk, &uk)?;
        last = disc.nonlinear_residual(&lin, &sol, &nk, &base, &free);
        debug!("step {} newton {it}: residual {last:.3e}", report.step);
        if !last.is_finite() {
            break;
        }
        if last <= cfg.newton.tolerance {
            report.newton_iterations = it;
            report.newton_residual = last;
            return Ok((disc.advance(state, sol, cfg, t1)?, report));
        }
    }
    Err(Error::NewtonDiverged {
        iterations: cfg.newton.max_iterations,
        residual: last,
    })
}

/// Fine-mesh correction used by the two-level schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Correction {
    /// Inertial term frozen at the coarse solution.
    Stokes,
    /// First-order linearization about the coarse solution.
    Newton,
}

/// Assembles and solves the linear fine-mesh problem with the prolongated
/// coarse velocity `u_coarse` as the known field.
pub fn fine_correction(
    fine_disc: &mut Discretization,
    fine: &FlowState,
    u_coarse: &FieldVector,
    cfg: &SchemeConfig,
    problem: &dyn FlowProblem,
    correction: Correction,
) -> Result<(FlowState, f64)> {
    let t1 = fine.t + cfg.dt;
    let uh = if u_coarse.space().same_as(&fine_disc.vel) {
        u_coarse.clone()
    } else {
        prolongate(u_coarse, &fine_disc.vel)?
    };
    let (mut a, hist, _) = fine_disc.time_terms(fine, cfg);
    let forcing = fine_disc.forcing(problem, t1)?;
    let inertia = trilinear_vector(cfg.form, &uh, &uh)?;
    let rhs: Vec<f64> = match correction {
        Correction::Stokes => hist.iter().zip(&forcing).zip(&inertia).map(|((h, f), n)| h + f - n).collect(),
        Correction::Newton => {
            a.axpy(1.0, &assemble_trilinear_jacobian(cfg.form, &uh, &fine_disc.vel)?);
            hist.iter().zip(&forcing).zip(&inertia).map(|((h, f), n)| h + f + n).collect()
        }
    };
    let bc = fine_disc.dirichlet_values(problem, t1);
    let sol = fine_disc.solve(&a, &rhs, &bc)?;
    let res = sol.residual;
    Ok((fine_disc.advance(fine, sol, cfg, t1)?, res))
}

fn step_two_level(
    coarse_disc: &mut Discretization,
    fine_disc: &mut Discretization,
    coarse: &FlowState,
    fine: &FlowState,
    cfg: &SchemeConfig,
    problem: &dyn FlowProblem,
    correction: Correction,
) -> Result<(FlowState, FlowState, StepReport)> {
    let (c1, mut report) = step_one_level(coarse_disc, coarse, cfg, problem)?;
    let (f1, res) = fine_correction(fine_disc, fine, &c1.u, cfg, problem, correction)?;
    report.absorb(res);
    Ok((c1, f1, report))
}

/// Coarse Newton step, then a fine solve with the inertial term frozen at
/// the coarse solution.
pub fn step_two_level_stokes(
    coarse_disc: &mut Discretization,
    fine_disc: &mut Discretization,
    coarse: &FlowState,
    fine: &FlowState,
    cfg: &SchemeConfig,
    problem: &dyn FlowProblem,
) -> Result<(FlowState, FlowState, StepReport)> {
    step_two_level(coarse_disc, fine_disc, coarse, fine, cfg, problem, Correction::Stokes)
}

/// Coarse Newton step, then a fine solve linearized about the coarse
/// solution.
pub fn step_two_level_newton(
    coarse_disc: &mut Discretization,
    fine_disc: &mut Discretization,
    coarse: &FlowState,
    fine: &FlowState,
    cfg: &SchemeConfig,
    problem: &dyn FlowProblem,
) -> Result<(FlowState, FlowState, StepReport)> {
    step_two_level(coarse_disc, fine_disc, coarse, fine, cfg, problem, Correction::Newton)
}

/// When error norms against the exact solution are recorded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ErrorSchedule {
    #[default]
    Never,
    Final,
    EveryStep,
}

/// Cylinder benchmark functionals recorded each step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceSetup {
    pub tag: BoundaryTag,
    pub front: Point,
    pub back: Point,
    pub scales: ForceScales,
}

impl Default for ForceSetup {
    fn default() -> Self {
        Self {
            tag: BoundaryTag::CYLINDER,
            front: [0.15, 0.2],
            back: [0.25, 0.2],
            scales: ForceScales::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub initial: InitialData,
    pub errors: ErrorSchedule,
    pub pivot: Point,
    pub forces: Option<ForceSetup>,
    /// Stop gracefully once the energy exceeds this multiple of its initial
    /// value, or a step fails; `None` propagates failures as errors.
    pub blow_up_factor: Option<f64>,
    pub label: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            initial: InitialData::default(),
            errors: ErrorSchedule::default(),
            pivot: [0.5, 0.5],
            forces: None,
            blow_up_factor: None,
            label: String::from("run"),
        }
    }
}

#[derive(Debug)]
pub struct SimulationResult {
    pub fine: FlowState,
    pub coarse: Option<FlowState>,
    pub series: DiagnosticsSeries,
    pub reports: Vec<StepReport>,
}

struct Recorder<'a> {
    problem: &'a dyn FlowProblem,
    cfg: &'a SchemeConfig,
    opts: &'a RunOptions,
    test_fields: Option<(FieldVector, FieldVector)>,
}

impl Recorder<'_> {
    fn record(&self, state: &FlowState, final_step: bool) -> Result<Record> {
        let u = &state.u;
        let errors = match (self.opts.errors, self.problem.exact()) {
            (ErrorSchedule::EveryStep, Some(ex)) => Some(error_norms(u, &state.p, ex, state.t)?),
            (ErrorSchedule::Final, Some(ex)) if final_step => Some(error_norms(u, &state.p, ex, state.t)?),
            _ => None,
        };
        let forces = match (&self.test_fields, &self.opts.forces) {
            (Some((vd, vl)), Some(fs)) => {
                let du = state.du_dt.clone().unwrap_or_else(|| FieldVector::zeros(Arc::clone(u.space())));
                let (cd, cl) = drag_lift_unsteady(u, &du, &state.p, vd, vl, self.cfg.nu, self.cfg.form, fs.scales)?;
                Some([cd, cl, pressure_difference(&state.p, fs.front, fs.back)?])
            }
            _ => None,
        };
        Ok(Record {
            step: state.step,
            t: state.t,
            energy: energy(u),
            momentum: [momentum(u, 0), momentum(u, 1)],
            angular_momentum: angular_momentum(u, self.opts.pivot),
            errors,
            forces,
        })
    }
}

/// Runs a problem from `t = 0` to `T`. `coarse_mesh` is required by the
/// two-level methods and ignored otherwise. `observer` sees every accepted
/// state with its record.
pub fn run_simulation(
    problem: &dyn FlowProblem,
    cfg: &SchemeConfig,
    fine_mesh: &Arc<Mesh>,
    coarse_mesh: Option<&Arc<Mesh>>,
    opts: &RunOptions,
    mut observer: impl FnMut(&FlowState, &Record),
) -> Result<SimulationResult> {
    cfg.validate()?;
    let mut fine_disc = Discretization::new(fine_mesh, cfg.linear)?;
    let mut coarse_disc = match (cfg.method.is_two_level(), coarse_mesh) {
        (false, _) => None,
        (true, Some(m)) => {
            if !fine_mesh.descends_from(m) && !Arc::ptr_eq(fine_mesh, m) {
                return Err(Error::NotNested("fine mesh is not a refinement of the coarse mesh".into()));
            }
            Some(Discretization::new(m, cfg.linear)?)
        }
        (true, None) => return Err(Error::Config(format!("{} needs a coarse mesh", cfg.method.name()))),
    };

    let test_fields = match &opts.forces {
        Some(fs) => Some((
            build_cylinder_test_field(&fine_disc.vel, fs.tag, [1.0, 0.0])?,
            build_cylinder_test_field(&fine_disc.vel, fs.tag, [0.0, 1.0])?,
        )),
        None => None,
    };
    let recorder = Recorder {
        problem,
        cfg,
        opts,
        test_fields,
    };

    let mut fine = fine_disc.initial_state(problem, opts.initial)?;
    let mut coarse = match &coarse_disc {
        Some(d) => Some(d.initial_state(problem, opts.initial)?),
        None => None,
    };
    let n_steps = cfg.num_steps();
    let mut series = DiagnosticsSeries::new(opts.label.clone(), opts.pivot);
    let r0 = recorder.record(&fine, n_steps == 0)?;
    observer(&fine, &r0);
    let e0 = r0.energy;
    series.push(r0);
    let mut reports = Vec::with_capacity(n_steps);

    for step in 1..=n_steps {
        let outcome = match (cfg.method, coarse_disc.as_mut(), coarse.as_ref()) {
            (Method::OneLevel, _, _) => step_one_level(&mut fine_disc, &fine, cfg, problem).map(|(f, r)| (None, f, r)),
            (m, Some(cd), Some(c)) => {
                let corr = if m == Method::TwoLevelStokes {
                    Correction::Stokes
                } else {
                    Correction::Newton
                };
                step_two_level(cd, &mut fine_disc, c, &fine, cfg, problem, corr).map(|(c, f, r)| (Some(c), f, r))
            }
            _ => unreachable!("coarse discretization checked above"),
        };
        let (c1, mut f1, report) = match outcome {
            Ok(v) => v,
            Err(e) => {
                if opts.blow_up_factor.is_some() {
                    warn!("{}: stopping at step {step}: {e}", opts.label);
                    series.blow_up = Some((step, e.to_string()));
                    break;
                }
                return Err(Error::Step {
                    step,
                    source: Box::new(e),
                });
            }
        };
        // Exact multiple of dt avoids drift in the time stamps.
        f1.t = step as f64 * cfg.dt;
        let rec = recorder.record(&f1, step == n_steps).map_err(|e| Error::Step {
            step,
            source: Box::new(e),
        })?;
        observer(&f1, &rec);
        let e = rec.energy;
        series.push(rec);
        reports.push(report);
        fine = f1;
        if let Some(mut c) = c1 {
            c.t = fine.t;
            coarse = Some(c);
        }
        if let Some(factor) = opts.blow_up_factor {
            if !e.is_finite() || e > factor * e0.max(f64::MIN_POSITIVE) {
                warn!("{}: energy {e:.3e} exceeds {factor} x initial at step {step}", opts.label);
                series.blow_up = Some((step, format!("energy {e:.6e} above {factor} x initial")));
                break;
            }
        }
    }
    Ok(SimulationResult {
        fine,
        coarse,
        series,
        reports,
    })
}
