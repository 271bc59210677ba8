//! Built-in manufactured problems on the unit square.

use std::fmt;

use crate::assembly::Sym2;
use crate::error::{Error, Result};
use crate::mesh::Side;

pub type Point = [f64; 2];

/// Closed-form solution with derivatives up to the bilaplacian.
#[derive(Clone, Copy)]
pub struct ExactData {
    pub u: fn(Point) -> f64,
    pub grad: fn(Point) -> [f64; 2],
    pub hess: fn(Point) -> Sym2,
    /// x- and y-derivatives of the Hessian.
    pub hess_grad: fn(Point) -> [Sym2; 2],
    pub bilaplacian: fn(Point) -> f64,
}

/// Boundary data for `σ ν·ν`.
#[derive(Clone, Copy)]
pub enum SigmaBc {
    /// `σ ν·ν = ε`.
    ConstantEps,
    /// `σ ν·ν = h(x, ν)`.
    Function(fn(Point, [f64; 2]) -> f64),
}

/// Which exact solution errors are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// The viscosity solution `u⁰`.
    U0,
    /// The regularized solution `u^ε`.
    UEps,
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reference::U0 => "u0",
            Reference::UEps => "ueps",
        })
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// Source `f(x, ε)`.
    pub f: fn(Point, f64) -> f64,
    pub g: fn(Point) -> f64,
    pub g_grad: fn(Point) -> [f64; 2],
    pub sigma_bc: SigmaBc,
    pub exact_u0: Option<ExactData>,
    pub exact_ueps: Option<ExactData>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("exact_u0", &self.exact_u0.is_some())
            .field("exact_ueps", &self.exact_ueps.is_some())
            .finish()
    }
}

pub const BUILTIN_NAMES: [&str; 6] = ["test1a", "test1b", "test2a", "test2b", "test3a", "test3b"];

impl ProblemSpec {
    pub fn source(&self, p: Point, eps: f64) -> f64 {
        (self.f)(p, eps)
    }

    /// Tangential derivative of `g`.
    pub fn dg_dtau(&self, p: Point, tau: [f64; 2]) -> f64 {
        let d = (self.g_grad)(p);
        d[0] * tau[0] + d[1] * tau[1]
    }

    pub fn h_nn(&self, p: Point, side: Side, eps: f64) -> f64 {
        match self.sigma_bc {
            SigmaBc::ConstantEps => eps,
            SigmaBc::Function(h) => h(p, side.normal()),
        }
    }

    /// Errors are taken against `u^ε` when available, otherwise `u⁰`.
    pub fn reference(&self) -> Option<(Reference, ExactData)> {
        self.exact_ueps
            .map(|d| (Reference::UEps, d))
            .or(self.exact_u0.map(|d| (Reference::U0, d)))
    }

    /// Checks the exact data against `f`, `g` and the σ boundary data on a
    /// sample grid. Returns warnings for points where `f <= 0`.
    pub fn check_consistency(&self, eps_values: &[f64]) -> Result<Vec<String>> {
        const TOL: f64 = 1e-8;
        let n = 12;
        let pts: Vec<Point> = (0..=n)
            .flat_map(|j| (0..=n).map(move |i| [i as f64 / n as f64, j as f64 / n as f64]))
            .collect();
        let close = |a: f64, b: f64| (a - b).abs() <= TOL * (1.0 + b.abs());
        let fail = |what: &str, p: Point, a: f64, b: f64| {
            Err(Error::InvalidInput(format!(
                "{}: inconsistent {what} at ({}, {}): {a} vs {b}",
                self.name, p[0], p[1]
            )))
        };
        if let Some(d) = self.exact_u0 {
            for &p in &pts {
                let (lhs, rhs) = ((d.hess)(p).det(), self.source(p, 0.0));
                if !close(lhs, rhs) {
                    return fail("det(D²u0) = f", p, lhs, rhs);
                }
            }
        }
        let boundary_exact = self.exact_ueps.or(self.exact_u0);
        if let Some(d) = self.exact_ueps {
            for &eps in eps_values {
                for &p in &pts {
                    let lhs = -eps * (d.bilaplacian)(p) + (d.hess)(p).det();
                    let rhs = self.source(p, eps);
                    if !close(lhs, rhs) {
                        return fail("-εΔ²u + det(D²u) = f", p, lhs, rhs);
                    }
                }
            }
        }
        if let Some(d) = boundary_exact {
            for &p in &pts {
                let on_boundary = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
                if on_boundary && !close((self.g)(p), (d.u)(p)) {
                    return fail("g", p, (self.g)(p), (d.u)(p));
                }
                let (a, b) = ((self.g_grad)(p), (d.grad)(p));
                if !close(a[0], b[0]) || !close(a[1], b[1]) {
                    return fail("∇g", p, a[0], b[0]);
                }
            }
        }
        if let (SigmaBc::Function(h), Some(d)) = (self.sigma_bc, self.exact_ueps) {
            for &p in &pts {
                for side in Side::ALL {
                    let nu = side.normal();
                    let (lhs, rhs) = (h(p, nu), {
                        let s = (d.hess)(p).apply(nu);
                        s[0] * nu[0] + s[1] * nu[1]
                    });
                    if !close(lhs, rhs) {
                        return fail("h", p, lhs, rhs);
                    }
                }
            }
        }
        let mut warnings = Vec::new();
        let eps0 = eps_values.first().copied().unwrap_or(0.0);
        if let Some(p) = pts.iter().find(|&&p| self.source(p, eps0) <= 0.0) {
            warnings.push(format!(
                "{}: f = {} <= 0 at ({}, {})",
                self.name,
                self.source(*p, eps0),
                p[0],
                p[1]
            ));
        }
        Ok(warnings)
    }
}

fn exp_u(p: Point) -> f64 {
    (0.5 * (p[0] * p[0] + p[1] * p[1])).exp()
}

const EXP_HALF: ExactData = ExactData {
    u: exp_u,
    grad: |p| {
        let e = exp_u(p);
        [p[0] * e, p[1] * e]
    },
    hess: |[x, y]| {
        let e = exp_u([x, y]);
        Sym2::new((1.0 + x * x) * e, x * y * e, (1.0 + y * y) * e)
    },
    hess_grad: |[x, y]| {
        let e = exp_u([x, y]);
        let (xxx, xxy, xyy, yyy) = ((3.0 * x + x.powi(3)) * e, (1.0 + x * x) * y * e, x * (1.0 + y * y) * e, (3.0 * y + y.powi(3)) * e);
        [Sym2::new(xxx, xxy, xyy), Sym2::new(xxy, xyy, yyy)]
    },
    bilaplacian: |[x, y]| {
        let r2 = x * x + y * y;
        (8.0 + 8.0 * r2 + r2 * r2) * exp_u([x, y])
    },
};

const QUARTIC: ExactData = ExactData {
    u: |[x, y]| x.powi(4) + y * y,
    grad: |[x, y]| [4.0 * x.powi(3), 2.0 * y],
    hess: |[x, _]| Sym2::new(12.0 * x * x, 0.0, 2.0),
    hess_grad: |[x, _]| [Sym2::new(24.0 * x, 0.0, 0.0), Sym2::default()],
    bilaplacian: |_| 24.0,
};

const SEXTIC: ExactData = ExactData {
    u: |[x, y]| 20.0 * x.powi(6) + y.powi(6),
    grad: |[x, y]| [120.0 * x.powi(5), 6.0 * y.powi(5)],
    hess: |[x, y]| Sym2::new(600.0 * x.powi(4), 0.0, 30.0 * y.powi(4)),
    hess_grad: |[x, y]| [Sym2::new(2400.0 * x.powi(3), 0.0, 0.0), Sym2::new(0.0, 0.0, 120.0 * y.powi(3))],
    bilaplacian: |[x, y]| 7200.0 * x * x + 360.0 * y * y,
};

const XSINX: ExactData = ExactData {
    u: |[x, y]| x * x.sin() + y * y.sin(),
    grad: |[x, y]| [x.sin() + x * x.cos(), y.sin() + y * y.cos()],
    hess: |[x, y]| Sym2::new(2.0 * x.cos() - x * x.sin(), 0.0, 2.0 * y.cos() - y * y.sin()),
    hess_grad: |[x, y]| {
        [
            Sym2::new(-3.0 * x.sin() - x * x.cos(), 0.0, 0.0),
            Sym2::new(0.0, 0.0, -3.0 * y.sin() - y * y.cos()),
        ]
    },
    bilaplacian: |[x, y]| x * x.sin() - 4.0 * x.cos() + y * y.sin() - 4.0 * y.cos(),
};

fn viscosity_problem(name: &str, d: ExactData, f: fn(Point, f64) -> f64) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        f,
        g: d.u,
        g_grad: d.grad,
        sigma_bc: SigmaBc::ConstantEps,
        exact_u0: Some(d),
        exact_ueps: None,
    }
}

fn regularized_problem(name: &str, d: ExactData, f: fn(Point, f64) -> f64, h: fn(Point, [f64; 2]) -> f64) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        f,
        g: d.u,
        g_grad: d.grad,
        sigma_bc: SigmaBc::Function(h),
        exact_u0: None,
        exact_ueps: Some(d),
    }
}

pub fn builtin_problem(name: &str) -> Result<ProblemSpec> {
    let p = match name {
        "test1a" => viscosity_problem(name, EXP_HALF, |[x, y], _| {
            let r2 = x * x + y * y;
            (1.0 + r2) * r2.exp()
        }),
        "test1b" | "test3a" => viscosity_problem(name, QUARTIC, |[x, _], _| 24.0 * x * x),
        "test3b" => viscosity_problem(name, SEXTIC, |[x, y], _| 18000.0 * x.powi(4) * y.powi(4)),
        "test2a" => regularized_problem(
            name,
            SEXTIC,
            |[x, y], eps| 18000.0 * x.powi(4) * y.powi(4) - eps * (7200.0 * x * x + 360.0 * y * y),
            |[x, y], nu| 600.0 * x.powi(4) * nu[0] * nu[0] + 30.0 * y.powi(4) * nu[1] * nu[1],
        ),
        "test2b" => regularized_problem(
            name,
            XSINX,
            |[x, y], eps| {
                let (a, b) = (2.0 * x.cos() - x * x.sin(), 2.0 * y.cos() - y * y.sin());
                a * b - eps * (x * x.sin() - 4.0 * x.cos() + y * y.sin() - 4.0 * y.cos())
            },
            |[x, y], nu| (2.0 * x.cos() - x * x.sin()) * nu[0] * nu[0] + (2.0 * y.cos() - y * y.sin()) * nu[1] * nu[1],
        ),
        _ => {
            return Err(Error::UnknownProblem {
                name: name.into(),
                valid: BUILTIN_NAMES.join(", "),
            })
        }
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Second differences of `u` and first differences of the Hessian.
    fn fd_check(d: &ExactData, p: Point) {
        let h = 1e-4;
        let u = d.u;
        let uxx = (u([p[0] + h, p[1]]) - 2.0 * u(p) + u([p[0] - h, p[1]])) / (h * h);
        let uyy = (u([p[0], p[1] + h]) - 2.0 * u(p) + u([p[0], p[1] - h])) / (h * h);
        let uxy = (u([p[0] + h, p[1] + h]) - u([p[0] + h, p[1] - h]) - u([p[0] - h, p[1] + h]) + u([p[0] - h, p[1] - h])) / (4.0 * h * h);
        let hs = (d.hess)(p);
        let tol = |v: f64| 1e-4 * (1.0 + v.abs());
        assert!((uxx - hs.a).abs() < tol(hs.a) && (uxy - hs.b).abs() < tol(hs.b) && (uyy - hs.c).abs() < tol(hs.c));
        let gx = ((d.grad)([p[0] + h, p[1]])[0] - (d.grad)([p[0] - h, p[1]])[0]) / (2.0 * h);
        assert!((gx - hs.a).abs() < tol(hs.a));
        let hg = (d.hess_grad)(p);
        for (axis, dh) in hg.iter().enumerate() {
            let mut pp = p;
            let mut pm = p;
            pp[axis] += h;
            pm[axis] -= h;
            let fd = (1.0 / (2.0 * h)) * ((d.hess)(pp) - (d.hess)(pm));
            for c in 0..3 {
                assert!((fd.component(c) - dh.component(c)).abs() < tol(dh.component(c)));
            }
        }
        let lap = |q: Point| (d.hess)(q).trace();
        let bl = (lap([p[0] + h, p[1]]) + lap([p[0] - h, p[1]]) + lap([p[0], p[1] + h]) + lap([p[0], p[1] - h]) - 4.0 * lap(p)) / (h * h);
        assert!((bl - (d.bilaplacian)(p)).abs() < 1e-3 * (1.0 + bl.abs()));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [EXP_HALF, QUARTIC, SEXTIC, XSINX] {
            for _ in 0..20 {
                fd_check(&d, [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]);
            }
        }
    }

    #[test]
    fn builtins_are_consistent() {
        for name in BUILTIN_NAMES {
            let p = builtin_problem(name).unwrap();
            p.check_consistency(&[0.25, 0.01, 0.001]).unwrap();
        }
    }

    #[test]
    fn test1a_random_points() {
        let p = builtin_problem("test1a").unwrap();
        let d = p.exact_u0.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            assert!(((d.hess)(x).det() - p.source(x, 0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn examples() {
        let p = builtin_problem("test1b").unwrap();
        for y in [0.0, 0.3, 1.0] {
            assert_eq!(p.source([0.5, y], 0.1), 6.0);
        }
        let p = builtin_problem("test2a").unwrap();
        assert_eq!(p.h_nn([1.0, 0.5], Side::Right, 0.1), 600.0);
        assert_eq!(p.h_nn([0.5, 1.0], Side::Top, 0.1), 30.0);
        assert_eq!(p.reference().unwrap().0, Reference::UEps);
        assert_eq!(builtin_problem("test3a").unwrap().reference().unwrap().0, Reference::U0);
        assert_eq!(builtin_problem("test1b").unwrap().h_nn([0.0, 0.5], Side::Left, 0.05), 0.05);
        match builtin_problem("test9") {
            Err(Error::UnknownProblem { valid, .. }) => assert!(valid.contains("test2b")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_data_is_rejected() {
        let mut p = builtin_problem("test1b").unwrap();
        p.f = |[x, _], _| 20.0 * x * x;
        assert!(p.check_consistency(&[0.1]).is_err());
        let mut p = builtin_problem("test2a").unwrap();
        p.f = |[x, y], _| 18000.0 * x.powi(4) * y.powi(4);
        assert!(p.check_consistency(&[0.1]).is_err());
    }
}
