#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use monge_ampere::assembly::{
    assemble_div_coupling, assemble_load, assemble_scalar_laplacian, default_quad_degree, error_norm, Norm, Sym2,
};
use monge_ampere::element::quad_rule;
use monge_ampere::harness::{builtin_problem, fit_power, FitMode};
use monge_ampere::linalg::{inf_norm, to_csr};
use monge_ampere::mesh::{build_rect_mesh, DiagonalPattern, Rect};
use monge_ampere::solver::{cofactor_field, Linearization, MixedState, MixedSystem, NewtonOptions};
use monge_ampere::space::{build_space, interpolate_scalar, interpolate_tensor, DofMap, Field, XX, YY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spaces(nx: usize, k: usize, pattern: DiagonalPattern) -> (Arc<DofMap>, Arc<DofMap>) {
    let mesh = Arc::new(build_rect_mesh(Rect::unit_square(), nx, nx, pattern).unwrap());
    let w = Arc::new(build_space(mesh.clone(), k, 3).unwrap());
    let v = Arc::new(build_space(mesh, k, 1).unwrap());
    (w, v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|(div(v I), Dv) − ‖Dv‖²| / ‖Dv‖²` for a random `v_h`.
pub fn inf_sup_identity_error(seed: u64, nx: usize, k: usize) -> f64 {
    let (w, v) = spaces(nx, k, DiagonalPattern::Alternating);
    let quad = default_quad_degree(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vh: Vec<f64> = (0..v.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut mu = vec![0.0; w.num_dofs()];
    for n in 0..v.num_nodes() {
        mu[w.dof(XX, n)] = vh[n];
        mu[w.dof(YY, n)] = vh[n];
    }
    let b = to_csr(&assemble_div_coupling(&w, &v, quad).unwrap()).unwrap();
    let s = to_csr(&assemble_scalar_laplacian(&v, quad).unwrap()).unwrap();
    let lhs = dot(&mu, &b.spmv(&vh).unwrap());
    let rhs = dot(&vh, &s.spmv(&vh).unwrap());
    (lhs - rhs).abs() / rhs
}

/// `max_j |(div cof(D²φ), Dv_j)|` relative to `‖cof(D²φ)‖∞`, for a random
/// polynomial `φ` of degree `k + 2` whose Hessian lies in the tensor space.
pub fn cofactor_divergence_residual(seed: u64, nx: usize, k: usize) -> f64 {
    let (w, v) = spaces(nx, k, DiagonalPattern::Slash);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deg = k + 2;
    let mut terms = Vec::new();
    for a in 0..=deg {
        for b in 0..=deg - a {
            terms.push((a as i32, b as i32, rng.gen_range(-1.0..1.0)));
        }
    }
    let d = |n: i32, m: i32| if n >= m { (0..m).map(|i| (n - i) as f64).product::<f64>() } else { 0.0 };
    let p = |x: f64, n: i32| if n >= 0 { x.powi(n) } else { 0.0 };
    let hess = |[x, y]: [f64; 2]| {
        let mut s = Sym2::default();
        for &(a, b, c) in &terms {
            s.a += c * d(a, 2) * p(x, a - 2) * p(y, b);
            s.b += c * d(a, 1) * d(b, 1) * p(x, a - 1) * p(y, b - 1);
            s.c += c * d(b, 2) * p(x, a) * p(y, b - 2);
        }
        s
    };
    let sigma = interpolate_tensor(&w, hess);
    let cof = cofactor_field(&sigma);
    let bt = to_csr(&assemble_div_coupling(&w, &v, default_quad_degree(k)).unwrap().transpose()).unwrap();
    inf_norm(&bt.spmv(&cof.coeffs).unwrap()) / cof.max_abs().max(1.0)
}

/// Relative central-difference mismatch of the Jacobian at a random
/// admissible state and direction.
pub fn jacobian_fd_error(sys: &MixedSystem, eps: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let load = sys.load(eps).unwrap();
    let mut s = sys.initial_guess(eps).unwrap();
    s.sigma.coeffs.iter_mut().for_each(|c| *c += rng.gen_range(-2.0..2.0));
    s.u.coeffs.iter_mut().for_each(|c| *c += rng.gen_range(-1.0..1.0));
    sys.u_constraints().apply(&mut s.u.coeffs);
    sys.sigma_constraints(eps).unwrap().apply(&mut s.sigma.coeffs);
    let d: Vec<f64> = (0..sys.num_unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let jd = sys.full_jacobian(eps, &s.sigma).unwrap().spmv(&d).unwrap();
    let t = 1e-4;
    let rp = sys.full_residual(eps, &s.shifted(t, &d), &load).unwrap();
    let rm = sys.full_residual(eps, &s.shifted(-t, &d), &load).unwrap();
    let diff: Vec<f64> = rp.iter().zip(&rm).zip(&jd).map(|((a, b), j)| (a - b) / (2.0 * t) - j).collect();
    inf_norm(&diff) / inf_norm(&jd)
}

/// `(change of one Newton step at the converged state, tol, ‖R₁‖∞ after the first step)`.
pub fn fixed_point_checks(name: &str, nx: usize, eps: f64) -> (f64, f64, f64) {
    let sys = MixedSystem::new(builtin_problem(name).unwrap(), nx, 2, None).unwrap();
    let opts = NewtonOptions::default();
    let (s, rep) = sys.continuation_solve(eps, &opts).unwrap();
    assert!(rep.converged, "{name} did not converge");
    let load = sys.load(eps).unwrap();
    let stepped = sys.newton_step(eps, &s, &load, Linearization::Cofactor).unwrap();
    let change = s
        .to_vec()
        .iter()
        .zip(stepped.to_vec())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let r1 = rep
        .stages
        .iter()
        .filter_map(|st| st.r1_after_first_step)
        .fold(0.0f64, f64::max);
    (change, opts.tol, r1)
}

/// Largest `|Q(x^a y^b) − a! b! / (a+b+2)!|` over monomials of degree ≤ d.
pub fn quadrature_error(d: usize) -> f64 {
    let rule = quad_rule(d).unwrap();
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    let mut worst = 0.0f64;
    for a in 0..=d {
        for b in 0..=d - a {
            let q = rule.integrate(|[x, y]| x.powi(a as i32) * y.powi(b as i32));
            worst = worst.max((q - fact(a) * fact(b) / fact(a + b + 2)).abs());
        }
    }
    worst
}

/// H¹ errors of the linearized solve with `Φ = I` against
/// `w = sin(πx) sin(πy)`, `χ = D²w`.
pub fn linearized_h1_errors(nxs: &[usize], eps: f64) -> Vec<(f64, f64)> {
    let w = |[x, y]: [f64; 2]| (PI * x).sin() * (PI * y).sin();
    let grad = |[x, y]: [f64; 2]| [PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos()];
    // −Δ²w + Δw/ε with Δw = −2π²w and Δ²w = 4π⁴w
    let q = move |p: [f64; 2]| (-4.0 * PI.powi(4) - 2.0 * PI * PI / eps) * w(p);
    nxs.iter()
        .map(|&nx| {
            let sys = MixedSystem::new(builtin_problem("test1b").unwrap(), nx, 2, None).unwrap();
            let phi = interpolate_tensor(sys.tensor_space(), |_| Sym2::IDENTITY);
            let load = assemble_load(sys.scalar_space(), q, sys.quad_degree()).unwrap();
            let chi_bc = sys.sigma_constraints(eps).unwrap().homogeneous();
            let w_bc = sys.u_constraints().homogeneous();
            let sol = sys.solve_linearized(&phi, eps, &load, &chi_bc, &w_bc).unwrap();
            let g: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync) = &grad;
            (1.0 / nx as f64, error_norm(&sol.w, w, Some(g), Norm::H1).unwrap())
        })
        .collect()
}

pub fn fitted_order(points: &[(f64, f64)]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    fit_power(&xs, &ys, FitMode::Free).unwrap().0
}

/// Converges Test 2a with the Φ-gradient matrix as the inner solver.
pub fn phi_gradient_solve(nx: usize, eps: f64) -> (MixedState, f64, bool) {
    let sys = MixedSystem::new(builtin_problem("test2a").unwrap(), nx, 2, None).unwrap();
    let opts = NewtonOptions { linearization: Linearization::PhiGradient, ..NewtonOptions::default() };
    let (s, rep) = sys.continuation_solve(eps, &opts).unwrap();
    (s, rep.final_residual(), rep.converged)
}

pub fn random_scalar_field(v: &Arc<DofMap>, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = interpolate_scalar(v, |_| 0.0);
    f.coeffs.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
    f
}
