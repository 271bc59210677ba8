//! Damped Newton iteration with ε-continuation for the mixed system
//!
//! ```text
//! R₁(μ) = (σ, μ) + (div μ, Du) − ⟨g̃, μ⟩                 μ ∈ W₀
//! R₂(v) = ε (div σ, Dv) + (det σ, v) − (f, v)            v ∈ V₀
//! ```
//!
//! Rows of constrained dofs are replaced by identity rows; iterates always
//! satisfy the constraints, so Newton updates vanish there.

use std::sync::Arc;

use log::{debug, warn};

use crate::assembly::{
    assemble_boundary_g, assemble_cof_jacobian, assemble_det_residual, assemble_div_coupling, assemble_load, assemble_mass,
    assemble_phi_grad, assemble_scalar_laplacian, default_quad_degree, min_eigenvalue, Tabulation,
};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, to_csr, CsrMatrix, Factorization, Triplets};
use crate::mesh::{build_rect_mesh, DiagonalPattern, Mesh, Rect};
use crate::problem::ProblemSpec;
use crate::space::{constraints_sigma, constraints_u, ConstraintSet, DofMap, Field, XX, XY, YY};

/// How `det σ` is linearized in the Newton matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    /// Exact derivative `cof(σ) : δσ`.
    #[default]
    Cofactor,
    /// Gradient form `−(cof(σ) Dδu, Dv)`; an inexact Newton matrix.
    PhiGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on the ∞-norm of the ε-scaled residual.
    pub tol: f64,
    pub max_iters: usize,
    pub backtrack: f64,
    pub min_step: f64,
    /// First continuation value; stages halve from here.
    pub eps_start: f64,
    pub linearization: Linearization,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 50,
            backtrack: 0.5,
            min_step: 2f64.powi(-20),
            eps_start: 1.0,
            linearization: Linearization::Cofactor,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max iterations must be at least 1".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::InvalidInput("invalid damping parameters".into()));
        }
        if !(self.eps_start > 0.0) {
            return Err(Error::InvalidInput("continuation start must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageReport {
    pub eps: f64,
    pub iterations: usize,
    /// Residual ∞-norm before the first step and after every accepted step.
    pub residual_history: Vec<f64>,
    /// Smallest eigenvalue of σ_h over quadrature points, per iterate.
    pub convexity_history: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    pub damped_steps: usize,
    /// ‖R₁‖∞ after the first accepted step.
    pub r1_after_first_step: Option<f64>,
}

impl StageReport {
    pub fn min_eigenvalue(&self) -> f64 {
        self.convexity_history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    pub converged: bool,
    pub last_converged_eps: Option<f64>,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    pub fn max_stage_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).max().unwrap_or(0)
    }

    pub fn final_residual(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.final_residual)
    }

    pub fn final_min_eigenvalue(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.min_eigenvalue())
    }

    fn push(&mut self, stage: StageReport) {
        if stage.converged {
            self.last_converged_eps = Some(stage.eps);
        } else {
            self.warnings.push(format!(
                "Newton did not converge at eps = {} (residual {:.3e} after {} iterations)",
                stage.eps, stage.final_residual, stage.iterations
            ));
        }
        self.converged = stage.converged;
        self.stages.push(stage);
    }
}

/// Discrete pair `(σ_h, u_h)`.
#[derive(Debug, Clone)]
pub struct MixedState {
    pub sigma: Field,
    pub u: Field,
}

impl MixedState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.sigma.coeffs.clone();
        v.extend_from_slice(&self.u.coeffs);
        v
    }

    /// `self + t * d` for a stacked direction `d`.
    pub fn shifted(&self, t: f64, d: &[f64]) -> MixedState {
        let nw = self.sigma.coeffs.len();
        let mut s = self.clone();
        s.sigma.coeffs.iter_mut().zip(&d[..nw]).for_each(|(a, b)| *a += t * b);
        s.u.coeffs.iter_mut().zip(&d[nw..]).for_each(|(a, b)| *a += t * b);
        s
    }
}

/// Result of [`MixedSystem::solve_linearized`].
#[derive(Debug, Clone)]
pub struct LinearizedSolution {
    pub chi: Field,
    pub w: Field,
    pub warnings: Vec<String>,
}

/// Spaces, ε-independent matrices and boundary data of one discretization.
pub struct MixedSystem {
    problem: ProblemSpec,
    w: Arc<DofMap>,
    v: Arc<DofMap>,
    quad: usize,
    mass: Triplets,
    coupling: Triplets,
    mass_csr: CsrMatrix,
    coupling_csr: CsrMatrix,
    coupling_t_csr: CsrMatrix,
    boundary_g: Vec<f64>,
    u_bc: ConstraintSet,
    sigma_mask: Vec<bool>,
    u_mask: Vec<bool>,
}

impl std::fmt::Debug for MixedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MixedSystem")
            .field("problem", &self.problem.name)
            .field("sigma_dofs", &self.w.num_dofs())
            .field("u_dofs", &self.v.num_dofs())
            .field("quad", &self.quad)
            .finish()
    }
}

impl MixedSystem {
    /// Uniform `nx × nx` mesh of the unit square with the default diagonal pattern.
    pub fn new(problem: ProblemSpec, nx: usize, k: usize, quad: Option<usize>) -> Result<Self> {
        let mesh = build_rect_mesh(Rect::unit_square(), nx, nx, DiagonalPattern::default())?;
        Self::from_mesh(problem, Arc::new(mesh), k, quad)
    }

    pub fn from_mesh(problem: ProblemSpec, mesh: Arc<Mesh>, k: usize, quad: Option<usize>) -> Result<Self> {
        let w = Arc::new(DofMap::new(mesh.clone(), k, 3)?);
        let v = Arc::new(DofMap::new(mesh, k, 1)?);
        let quad = quad.unwrap_or_else(|| default_quad_degree(k));
        let mass = assemble_mass(&w, quad)?;
        let coupling = assemble_div_coupling(&w, &v, quad)?;
        let boundary_g = assemble_boundary_g(&w, |p, t| problem.dg_dtau(p, t))?;
        let u_bc = constraints_u(&v, problem.g)?;
        let sigma_mask = constraints_sigma(&w, |_, _| 0.0)?.mask(w.num_dofs());
        let u_mask = u_bc.mask(v.num_dofs());
        Ok(Self {
            mass_csr: to_csr(&mass)?,
            coupling_csr: to_csr(&coupling)?,
            coupling_t_csr: to_csr(&coupling.transpose())?,
            problem,
            w,
            v,
            quad,
            mass,
            coupling,
            boundary_g,
            u_bc,
            sigma_mask,
            u_mask,
        })
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn tensor_space(&self) -> &Arc<DofMap> {
        &self.w
    }

    pub fn scalar_space(&self) -> &Arc<DofMap> {
        &self.v
    }

    pub fn quad_degree(&self) -> usize {
        self.quad
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.v.mesh()
    }

    pub fn num_unknowns(&self) -> usize {
        self.w.num_dofs() + self.v.num_dofs()
    }

    pub fn u_constraints(&self) -> &ConstraintSet {
        &self.u_bc
    }

    pub fn sigma_constraints(&self, eps: f64) -> Result<ConstraintSet> {
        constraints_sigma(&self.w, |p, side| self.problem.h_nn(p, side, eps))
    }

    pub fn mass_matrix(&self) -> &CsrMatrix {
        &self.mass_csr
    }

    pub fn coupling_matrix(&self) -> &CsrMatrix {
        &self.coupling_csr
    }

    /// `(f^ε, v)` for every scalar basis function.
    pub fn load(&self, eps: f64) -> Result<Vec<f64>> {
        assemble_load(&self.v, |p| self.problem.source(p, eps), self.quad)
    }

    fn is_constrained(&self, row: usize) -> bool {
        let nw = self.w.num_dofs();
        if row < nw {
            self.sigma_mask[row]
        } else {
            self.u_mask[row - nw]
        }
    }

    /// Residual on every row, constrained or not.
    pub fn full_residual(&self, eps: f64, state: &MixedState, load: &[f64]) -> Result<Vec<f64>> {
        let ms = self.mass_csr.spmv(&state.sigma.coeffs)?;
        let bu = self.coupling_csr.spmv(&state.u.coeffs)?;
        let bts = self.coupling_t_csr.spmv(&state.sigma.coeffs)?;
        let det = assemble_det_residual(&state.sigma, &self.v, self.quad)?;
        let mut r: Vec<f64> = ms.iter().zip(&bu).zip(&self.boundary_g).map(|((m, b), g)| m + b - g).collect();
        r.extend(bts.iter().zip(&det).zip(load).map(|((b, d), f)| eps * b + d - f));
        Ok(r)
    }

    /// Residual with constrained rows set to zero.
    pub fn residual(&self, eps: f64, state: &MixedState, load: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.full_residual(eps, state, load)?;
        for (i, ri) in r.iter_mut().enumerate() {
            if self.is_constrained(i) {
                *ri = 0.0;
            }
        }
        Ok(r)
    }

    /// `[[M, B], [εBᵀ + C(σ), 0]]` on every row.
    pub fn full_jacobian(&self, eps: f64, sigma: &Field) -> Result<CsrMatrix> {
        let mut t = self.static_blocks(eps, |_| true);
        let c = assemble_cof_jacobian(sigma, &self.w, &self.v, self.quad)?;
        t.add_block(&c, self.w.num_dofs(), 0, 1.0, |_| true);
        to_csr(&t)
    }

    fn static_blocks(&self, eps: f64, keep: impl Fn(usize) -> bool + Copy) -> Triplets {
        let (nw, n) = (self.w.num_dofs(), self.num_unknowns());
        let mut t = Triplets::new(n, n);
        t.entries.reserve(self.mass.len() + 2 * self.coupling.len());
        t.add_block(&self.mass, 0, 0, 1.0, keep);
        t.add_block(&self.coupling, 0, nw, 1.0, keep);
        t.add_block(&self.coupling.transpose(), nw, 0, eps, keep);
        t
    }

    /// Newton matrix with identity rows on constrained dofs.
    pub fn jacobian(&self, eps: f64, sigma: &Field, lin: Linearization) -> Result<CsrMatrix> {
        let nw = self.w.num_dofs();
        let keep = |r: usize| !self.is_constrained(r);
        let mut t = self.static_blocks(eps, keep);
        match lin {
            Linearization::Cofactor => {
                let c = assemble_cof_jacobian(sigma, &self.w, &self.v, self.quad)?;
                t.add_block(&c, nw, 0, 1.0, keep);
            }
            Linearization::PhiGradient => {
                let s = assemble_phi_grad(&cofactor_field(sigma), &self.v, self.quad)?;
                t.add_block(&s, nw, nw, -1.0, keep);
            }
        }
        self.push_identity_rows(&mut t);
        to_csr(&t)
    }

    fn push_identity_rows(&self, t: &mut Triplets) {
        for r in 0..self.num_unknowns() {
            if self.is_constrained(r) {
                t.push(r, r, 1.0);
            }
        }
    }

    /// Solves `[[M, B], [Bᵀ, −(1/ε) S(Φ)]] (χ, w) = (0, q)` with the given
    /// constraints on `χ` and `w`.
    pub fn solve_linearized(
        &self,
        phi: &Field,
        eps: f64,
        q: &[f64],
        chi_bc: &ConstraintSet,
        w_bc: &ConstraintSet,
    ) -> Result<LinearizedSolution> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        let (nw, nv) = (self.w.num_dofs(), self.v.num_dofs());
        if q.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, got: q.len() });
        }
        let mut warnings = Vec::new();
        let lam = min_eigenvalue(phi, self.quad)?;
        if lam <= 0.0 {
            let msg = format!("Φ is not positive definite (smallest eigenvalue {lam:.3e})");
            warn!("{msg}");
            warnings.push(msg);
        }
        let mut mask = chi_bc.mask(nw);
        mask.extend(w_bc.mask(nv));
        let keep = |r: usize| !mask[r];
        let mut t = Triplets::new(nw + nv, nw + nv);
        t.add_block(&self.mass, 0, 0, 1.0, keep);
        t.add_block(&self.coupling, 0, nw, 1.0, keep);
        t.add_block(&self.coupling.transpose(), nw, 0, 1.0, keep);
        let s = assemble_phi_grad(phi, &self.v, self.quad)?;
        t.add_block(&s, nw, nw, -1.0 / eps, keep);
        let mut rhs = vec![0.0; nw];
        rhs.extend_from_slice(q);
        for &(d, val) in chi_bc.entries() {
            t.push(d, d, 1.0);
            rhs[d] = val;
        }
        for &(d, val) in w_bc.entries() {
            t.push(nw + d, nw + d, 1.0);
            rhs[nw + d] = val;
        }
        let x = Factorization::new(&to_csr(&t)?)?.solve(&rhs)?;
        Ok(LinearizedSolution {
            chi: Field::from_coeffs(self.w.clone(), x[..nw].to_vec())?,
            w: Field::from_coeffs(self.v.clone(), x[nw..].to_vec())?,
            warnings,
        })
    }

    /// Poisson-based start: `(Du⁰, Dv) = −(2√f, v)` with `u⁰ = g` on the
    /// boundary, then the discrete Hessian `M σ⁰ = G − B u⁰` with the σ
    /// boundary values for `eps`. The source is taken at `ε = 0`.
    pub fn initial_guess(&self, eps: f64) -> Result<MixedState> {
        let f0 = |p: [f64; 2]| self.problem.source(p, 0.0);
        self.check_source(f0)?;
        let v = &self.v;
        let nv = v.num_dofs();
        let mut k = assemble_scalar_laplacian(v, self.quad)?;
        k.entries.retain(|&(r, _, _)| !self.u_mask[r]);
        let mut rhs: Vec<f64> = assemble_load(v, |p| -2.0 * f0(p).max(0.0).sqrt(), self.quad)?;
        for &(d, val) in self.u_bc.entries() {
            k.push(d, d, 1.0);
            rhs[d] = val;
        }
        let mut u = Field::from_coeffs(v.clone(), Factorization::new(&to_csr(&k)?)?.solve(&rhs)?)?;
        debug_assert_eq!(u.coeffs.len(), nv);
        self.u_bc.apply(&mut u.coeffs);
        let sigma = self.recover_hessian(&u, eps)?;
        Ok(MixedState { sigma, u })
    }

    /// Solves the first equation for σ given `u`: `M σ = G − B u` on free rows.
    pub fn recover_hessian(&self, u: &Field, eps: f64) -> Result<Field> {
        let bc = self.sigma_constraints(eps)?;
        let mut m = self.mass.clone();
        m.entries.retain(|&(r, _, _)| !self.sigma_mask[r]);
        let bu = self.coupling_csr.spmv(&u.coeffs)?;
        let mut rhs: Vec<f64> = self.boundary_g.iter().zip(&bu).map(|(g, b)| g - b).collect();
        for &(d, val) in bc.entries() {
            m.push(d, d, 1.0);
            rhs[d] = val;
        }
        let mut sigma = Field::from_coeffs(self.w.clone(), Factorization::new(&to_csr(&m)?)?.solve(&rhs)?)?;
        bc.apply(&mut sigma.coeffs);
        Ok(sigma)
    }

    fn check_source(&self, f: impl Fn([f64; 2]) -> f64) -> Result<()> {
        let tab = Tabulation::new(&self.v, self.quad)?;
        let mesh = self.mesh();
        let node_pts = self.v.node_coords().iter().copied();
        let mut quad_pts = Vec::new();
        for e in 0..mesh.num_elements() {
            let g = mesh.element_geometry(e)?;
            quad_pts.extend(tab.rule.points.iter().map(|&p| g.map(p)));
        }
        for p in node_pts.chain(quad_pts) {
            let value = f(p);
            if !(value >= 0.0) {
                return Err(Error::NegativeSource { x: p[0], y: p[1], value });
            }
        }
        Ok(())
    }

    /// Solves the Newton system; constrained entries are zeroed exactly so
    /// iterates keep their boundary values bit for bit.
    fn newton_direction(&self, j: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut d = Factorization::new(j)?.solve(rhs)?;
        for (i, di) in d.iter_mut().enumerate() {
            if self.is_constrained(i) {
                *di = 0.0;
            }
        }
        Ok(d)
    }

    /// One undamped Newton step.
    pub fn newton_step(&self, eps: f64, state: &MixedState, load: &[f64], lin: Linearization) -> Result<MixedState> {
        let r = self.residual(eps, state, load)?;
        let j = self.jacobian(eps, &state.sigma, lin)?;
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        let d = self.newton_direction(&j, &neg)?;
        Ok(state.shifted(1.0, &d))
    }

    /// Damped Newton at fixed `eps` from `start`, which must satisfy the
    /// constraints for `eps`. Non-convergence is reported, not raised.
    pub fn newton_solve(&self, eps: f64, start: &MixedState, opts: &NewtonOptions) -> Result<(MixedState, StageReport)> {
        opts.validate()?;
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        let sigma_bc = self.sigma_constraints(eps)?;
        if !sigma_bc.is_satisfied(&start.sigma.coeffs, 1e-12) || !self.u_bc.is_satisfied(&start.u.coeffs, 1e-12) {
            return Err(Error::InvalidInput("start state violates the boundary constraints".into()));
        }
        let load = self.load(eps)?;
        let nw = self.w.num_dofs();
        let mut x = start.clone();
        let mut r = self.residual(eps, &x, &load)?;
        let mut rn = inf_norm(&r);
        let mut rep = StageReport {
            eps,
            residual_history: vec![rn],
            convexity_history: vec![min_eigenvalue(&x.sigma, self.quad)?],
            ..Default::default()
        };
        while rn > opts.tol && rep.iterations < opts.max_iters {
            let j = self.jacobian(eps, &x.sigma, opts.linearization)?;
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let d = self.newton_direction(&j, &neg)?;
            let mut step = 1.0;
            let accepted = loop {
                let trial = x.shifted(step, &d);
                let rt = self.residual(eps, &trial, &load)?;
                let rtn = inf_norm(&rt);
                if rtn < rn {
                    break Some((trial, rt, rtn));
                }
                step *= opts.backtrack;
                if step < opts.min_step {
                    break None;
                }
            };
            let Some((trial, rt, rtn)) = accepted else {
                debug!("eps {eps}: line search failed at residual {rn:.3e}");
                break;
            };
            rep.iterations += 1;
            if step < 1.0 {
                rep.damped_steps += 1;
            }
            x = trial;
            r = rt;
            rn = rtn;
            if rep.iterations == 1 {
                rep.r1_after_first_step = Some(inf_norm(&r[..nw]));
            }
            rep.residual_history.push(rn);
            rep.convexity_history.push(min_eigenvalue(&x.sigma, self.quad)?);
            debug!("eps {eps}: iter {} step {step} residual {rn:.3e}", rep.iterations);
        }
        rep.final_residual = rn;
        rep.converged = rn <= opts.tol;
        Ok((x, rep))
    }

    /// Continuation from the Poisson start at `max(target, opts.eps_start)`.
    pub fn continuation_solve(&self, eps_target: f64, opts: &NewtonOptions) -> Result<(MixedState, SolveReport)> {
        let schedule = continuation_schedule(eps_target, opts.eps_start)?;
        let start = self.initial_guess(schedule[0])?;
        self.run_schedule(start, &schedule, opts)
    }

    /// Continuation from a state converged at `eps_from` down to `eps_target`.
    pub fn continue_from(
        &self,
        state: &MixedState,
        eps_from: f64,
        eps_target: f64,
        opts: &NewtonOptions,
    ) -> Result<(MixedState, SolveReport)> {
        let schedule = warm_schedule(eps_from, eps_target)?;
        self.run_schedule(state.clone(), &schedule, opts)
    }

    fn run_schedule(&self, mut state: MixedState, schedule: &[f64], opts: &NewtonOptions) -> Result<(MixedState, SolveReport)> {
        let mut report = SolveReport::default();
        for &eps in schedule {
            self.sigma_constraints(eps)?.apply(&mut state.sigma.coeffs);
            let (next, stage) = self.newton_solve(eps, &state, opts)?;
            let ok = stage.converged;
            report.push(stage);
            state = next;
            if !ok {
                break;
            }
        }
        let lam = report.final_min_eigenvalue();
        if report.converged && !(lam > 0.0) {
            report
                .warnings
                .push(format!("converged σ_h is not positive definite (smallest eigenvalue {lam:.3e})"));
        }
        for w in &report.warnings {
            warn!("{}: {w}", self.problem.name);
        }
        Ok((state, report))
    }
}

/// Pointwise cofactor of a tensor field; exact because `cof` is linear.
pub fn cofactor_field(sigma: &Field) -> Field {
    let mut out = sigma.clone();
    for n in 0..sigma.space.num_nodes() {
        let (xx, xy, yy) = (sigma.space.dof(XX, n), sigma.space.dof(XY, n), sigma.space.dof(YY, n));
        out.coeffs[xx] = sigma.coeffs[yy];
        out.coeffs[xy] = -sigma.coeffs[xy];
        out.coeffs[yy] = sigma.coeffs[xx];
    }
    out
}

/// `start, start/2, …` while above `target`, then `target`.
pub fn continuation_schedule(target: f64, start: f64) -> Result<Vec<f64>> {
    if !(target > 0.0) || !(start > 0.0) {
        return Err(Error::InvalidInput(format!("continuation needs positive eps, got {target}")));
    }
    let mut out = Vec::new();
    let mut e = start.max(target);
    while e > target {
        out.push(e);
        e *= 0.5;
    }
    out.push(target);
    Ok(out)
}

fn warm_schedule(from: f64, target: f64) -> Result<Vec<f64>> {
    let mut s = continuation_schedule(target, from)?;
    if s.len() > 1 {
        s.remove(0);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::Sym2;
    use crate::problem::{builtin_problem, ExactData, SigmaBc};
    use crate::space::interpolate_tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paraboloid() -> ProblemSpec {
        let d = ExactData {
            u: |[x, y]| 0.5 * (x * x + y * y),
            grad: |[x, y]| [x, y],
            hess: |_| Sym2::IDENTITY,
            hess_grad: |_| [Sym2::default(); 2],
            bilaplacian: |_| 0.0,
        };
        ProblemSpec {
            name: "paraboloid".into(),
            f: |_, _| 1.0,
            g: d.u,
            g_grad: d.grad,
            sigma_bc: SigmaBc::Function(|_, _| 1.0),
            exact_u0: Some(d),
            exact_ueps: Some(d),
        }
    }

    #[test]
    fn schedules() {
        assert_eq!(continuation_schedule(0.25, 0.25).unwrap(), vec![0.25]);
        assert_eq!(
            continuation_schedule(0.0125, 0.25).unwrap(),
            vec![0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0125]
        );
        assert_eq!(continuation_schedule(0.5, 0.25).unwrap(), vec![0.5]);
        assert_eq!(warm_schedule(0.25, 0.1).unwrap(), vec![0.125, 0.1]);
        assert_eq!(warm_schedule(0.1, 0.1).unwrap(), vec![0.1]);
        assert!(continuation_schedule(0.0, 0.25).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(NewtonOptions::default().validate().is_ok());
        assert!(NewtonOptions { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(NewtonOptions { max_iters: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn paraboloid_initial_guess_is_exact() {
        let sys = MixedSystem::new(paraboloid(), 4, 2, None).unwrap();
        let s = sys.initial_guess(0.1).unwrap();
        // quadratic g lies in the space and Δg = 2√f
        let exact = crate::space::interpolate_scalar(sys.scalar_space(), |[x, y]| 0.5 * (x * x + y * y));
        let du = s.u.coeffs.iter().zip(&exact.coeffs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(du < 1e-12, "{du}");
        let id = interpolate_tensor(sys.tensor_space(), |_| Sym2::IDENTITY);
        let ds = s.sigma.coeffs.iter().zip(&id.coeffs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(ds < 1e-11, "{ds}");
    }

    #[test]
    fn negative_source_is_rejected() {
        let mut p = paraboloid();
        p.f = |[x, _], _| x - 0.5;
        let sys = MixedSystem::new(p, 3, 2, None).unwrap();
        assert!(matches!(sys.initial_guess(0.1), Err(Error::NegativeSource { .. })));
    }

    #[test]
    fn initial_guess_meets_boundary_values() {
        let sys = MixedSystem::new(builtin_problem("test1b").unwrap(), 5, 2, None).unwrap();
        let s = sys.initial_guess(0.05).unwrap();
        assert!(sys.u_constraints().is_satisfied(&s.u.coeffs, 1e-14));
        assert!(sys.sigma_constraints(0.05).unwrap().is_satisfied(&s.sigma.coeffs, 1e-14));
    }

    #[test]
    fn linearized_solve_trivial_and_linear() {
        let sys = MixedSystem::new(paraboloid(), 4, 2, None).unwrap();
        let id = interpolate_tensor(sys.tensor_space(), |_| Sym2::IDENTITY);
        let chi_bc = sys.sigma_constraints(0.0).unwrap().homogeneous();
        let w_bc = sys.u_constraints().homogeneous();
        let nv = sys.scalar_space().num_dofs();
        let z = sys.solve_linearized(&id, 0.1, &vec![0.0; nv], &chi_bc, &w_bc).unwrap();
        assert!(z.chi.max_abs() == 0.0 && z.w.max_abs() == 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<f64> = (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q2: Vec<f64> = q.iter().map(|x| 2.0 * x).collect();
        let a = sys.solve_linearized(&id, 0.1, &q, &chi_bc, &w_bc).unwrap();
        let b = sys.solve_linearized(&id, 0.1, &q2, &chi_bc, &w_bc).unwrap();
        for (x, y) in a.w.coeffs.iter().zip(&b.w.coeffs).chain(a.chi.coeffs.iter().zip(&b.chi.coeffs)) {
            assert!((2.0 * x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
        let neg = interpolate_tensor(sys.tensor_space(), |_| Sym2::new(-1.0, 0.0, 1.0));
        let r = sys.solve_linearized(&neg, 0.1, &q, &chi_bc, &w_bc).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sys = MixedSystem::new(builtin_problem("test1b").unwrap(), 3, 2, None).unwrap();
        let eps = 0.05;
        let load = sys.load(eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = sys.initial_guess(eps).unwrap();
        s.sigma.coeffs.iter_mut().for_each(|c| *c += rng.gen_range(-1.0..1.0));
        s.u.coeffs.iter_mut().for_each(|c| *c += rng.gen_range(-1.0..1.0));
        let d: Vec<f64> = (0..sys.num_unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jd = sys.full_jacobian(eps, &s.sigma).unwrap().spmv(&d).unwrap();
        let t = 1e-4;
        let rp = sys.full_residual(eps, &s.shifted(t, &d), &load).unwrap();
        let rm = sys.full_residual(eps, &s.shifted(-t, &d), &load).unwrap();
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * t)).collect();
        let err = inf_norm(&fd.iter().zip(&jd).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 1e-6 * inf_norm(&jd), "{err}");
    }

    #[test]
    fn newton_at_coarse_mesh() {
        let sys = MixedSystem::new(builtin_problem("test1b").unwrap(), 4, 2, None).unwrap();
        let opts = NewtonOptions { eps_start: 0.25, ..NewtonOptions::default() };
        let (s, rep) = sys.continuation_solve(0.25, &opts).unwrap();
        assert_eq!(rep.stages.len(), 1);
        assert!(rep.converged, "{rep:?}");
        let st = &rep.stages[0];
        assert!(st.residual_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(st.r1_after_first_step.unwrap() <= 1e-10);

        let start = sys.initial_guess(0.25).unwrap();
        let (s2, rep2) = sys.newton_solve(0.25, &start, &opts).unwrap();
        assert_eq!(s.to_vec(), s2.to_vec());
        assert_eq!(rep2.iterations, st.iterations);

        let (again, r3) = sys.newton_solve(0.25, &s, &opts).unwrap();
        assert_eq!(r3.iterations, 0);
        assert_eq!(again.to_vec(), s.to_vec());
        let load = sys.load(0.25).unwrap();
        let stepped = sys.newton_step(0.25, &s, &load, Linearization::Cofactor).unwrap();
        let change = s.to_vec().iter().zip(stepped.to_vec()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(change <= 10.0 * opts.tol, "{change}");
    }

    #[test]
    fn start_must_satisfy_constraints() {
        let sys = MixedSystem::new(builtin_problem("test1b").unwrap(), 3, 2, None).unwrap();
        let mut s = sys.initial_guess(0.1).unwrap();
        s.u.coeffs[0] += 1.0;
        assert!(sys.newton_solve(0.1, &s, &NewtonOptions::default()).is_err());
    }

    #[test]
    fn cofactor_field_is_pointwise() {
        let sys = MixedSystem::new(paraboloid(), 2, 2, None).unwrap();
        let f = interpolate_tensor(sys.tensor_space(), |[x, y]| Sym2::new(x, y, x * y));
        let c = cofactor_field(&f);
        let expect = interpolate_tensor(sys.tensor_space(), |[x, y]| Sym2::new(x * y, -y, x));
        assert_eq!(c.coeffs, expect.coeffs);
    }
}
