//! Problem definitions: coefficients, boundary data, and exact solutions.
//!
//! A [`ProblemSpec`] describes the convection-diffusion-reaction equation
//! `-eps lap(u) + b.grad(u) + c u = f` with Dirichlet data `u_D` and Neumann
//! data `g`. Coefficient callbacks must be pure and re-entrant; the spec is
//! immutable once built. Two classic benchmarks are provided: a manufactured
//! solution with an exponential boundary layer, and the interior-layer
//! problem of Hughes, Mallet and Mizukami (all-Dirichlet, no known solution,
//! but `u` is confined to `[0, 1]`).

use crate::mesh::Mesh;
use crate::quadrature::triangle_rule;

pub type ScalarFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type VectorFn = Box<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// Exact solution and gradient callbacks for manufactured problems.
pub struct ExactSolution {
    pub u: ScalarFn,
    pub grad: VectorFn,
}

/// One steady convection-diffusion-reaction problem on the unit square.
pub struct ProblemSpec {
    /// Identifier used by config files and reports.
    pub name: String,
    /// Constant diffusion coefficient, > 0.
    pub epsilon: f64,
    /// Lower bound of `c - div(b)/2`; >= 0. A zero value switches the
    /// energy norm to `sqrt(eps) |.|_1` and all estimator branch selections
    /// to the eps-scaled branch.
    pub sigma0: f64,
    /// Convective field (divergence-free for both benchmarks).
    pub b: VectorFn,
    /// Reaction coefficient.
    pub c: ScalarFn,
    /// Source term.
    pub f: ScalarFn,
    /// Neumann datum on the Neumann boundary.
    pub g: ScalarFn,
    /// Dirichlet datum on the Dirichlet boundary.
    pub u_d: ScalarFn,
    /// Exact solution, when known.
    pub exact: Option<ExactSolution>,
    /// A priori solution bounds, when known (used for maximum principle
    /// checks on problems without an exact solution).
    pub bounds: Option<(f64, f64)>,
}

impl ProblemSpec {
    /// Largest pointwise residual `|-eps lap(u) + b.grad(u) + c u - f|` of
    /// the exact solution, sampled at all volume quadrature points of `mesh`.
    /// Laplacian and gradient are formed by central finite differences, so
    /// the check is independent of the hand-derived `f`.
    pub fn consistency_residual(&self, mesh: &Mesh) -> Option<f64> {
        let exact = self.exact.as_ref()?;
        // second differences of values ~1e-1 lose ~16 digits of absolute
        // accuracy; h = 1e-4 balances that cancellation against the O(h^2)
        // truncation error
        let h = 1e-4;
        let mut worst = 0.0_f64;
        for c in 0..mesh.n_cells() {
            let [p0, p1, p2] = mesh.cell_coords(c);
            for q in triangle_rule() {
                let x = q.bary[0] * p0[0] + q.bary[1] * p1[0] + q.bary[2] * p2[0];
                let y = q.bary[0] * p0[1] + q.bary[1] * p1[1] + q.bary[2] * p2[1];
                let u = |x: f64, y: f64| (exact.u)(x, y);
                let lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h)
                    - 4.0 * u(x, y))
                    / (h * h);
                let gx = (u(x + h, y) - u(x - h, y)) / (2.0 * h);
                let gy = (u(x, y + h) - u(x, y - h)) / (2.0 * h);
                let b = (self.b)(x, y);
                let r = -self.epsilon * lap + b[0] * gx + b[1] * gy
                    + (self.c)(x, y) * u(x, y)
                    - (self.f)(x, y);
                worst = worst.max(r.abs());
            }
        }
        Some(worst)
    }
}

/// Manufactured solution with an exponential boundary layer at `x = 1`:
///
/// `u(x, y) = y (1 - y) (x - l(x))`, `l(x) = (e^((x-1)/eps) - e^(-1/eps)) / (1 - e^(-1/eps))`,
///
/// with `b = (2, 1)`, `c = 1`, homogeneous Dirichlet data on the whole
/// boundary and `f` derived in closed form. All exponentials have
/// non-positive arguments, so nothing overflows for any `eps > 0`.
pub fn example_boundary_layer(epsilon: f64) -> ProblemSpec {
    assert!(epsilon > 0.0, "diffusion coefficient must be positive");
    let eps = epsilon;
    let e0 = (-1.0 / eps).exp();
    let denom = 1.0 - e0;

    let layer = move |x: f64| (((x - 1.0) / eps).exp() - e0) / denom;
    let layer_dx = move |x: f64| ((x - 1.0) / eps).exp() / (eps * denom);

    let u = move |x: f64, y: f64| y * (1.0 - y) * (x - layer(x));
    let grad = move |x: f64, y: f64| {
        [
            y * (1.0 - y) * (1.0 - layer_dx(x)),
            (1.0 - 2.0 * y) * (x - layer(x)),
        ]
    };
    // f = -eps lap(u) + b.grad(u) + c u with b = (2, 1), c = 1; using
    // l'' = l'/eps the closed form collapses to
    // f = 2 eps X + 2 Y - Y l' + X (Y' + Y),  X = x - l(x), Y = y(1 - y).
    let f = move |x: f64, y: f64| {
        let big_x = x - layer(x);
        let big_y = y * (1.0 - y);
        let dy = 1.0 - 2.0 * y;
        2.0 * eps * big_x + 2.0 * big_y - big_y * layer_dx(x) + big_x * (dy + big_y)
    };

    ProblemSpec {
        name: "boundary_layer".into(),
        epsilon,
        sigma0: 1.0,
        b: Box::new(|_, _| [2.0, 1.0]),
        c: Box::new(|_, _| 1.0),
        f: Box::new(f),
        g: Box::new(|_, _| 0.0),
        u_d: Box::new(|_, _| 0.0),
        exact: Some(ExactSolution {
            u: Box::new(u),
            grad: Box::new(grad),
        }),
        bounds: None,
    }
}

/// Interior-plus-boundary-layer benchmark: skew convection at -60 degrees,
/// no diffusion source, discontinuous Dirichlet data
///
/// `u_D = 1` on `{y = 1, x > 0}` and `{x = 0, y > 0.7}`, else `0`.
///
/// The solution develops an interior layer along the convection direction
/// starting at the jump `(0, 0.7)` and exponential layers at the right and
/// lower boundary. No exact solution is known; `u` lies in `[0, 1]`.
pub fn example_hmm86(epsilon: f64) -> ProblemSpec {
    assert!(epsilon > 0.0, "diffusion coefficient must be positive");
    let angle = -std::f64::consts::FRAC_PI_3;
    let bx = angle.cos();
    let by = angle.sin();
    let tol = 1e-12;
    let u_d = move |x: f64, y: f64| {
        let on_top = (y - 1.0).abs() < tol && x > tol;
        let on_left_high = x.abs() < tol && y > 0.7;
        if on_top || on_left_high {
            1.0
        } else {
            0.0
        }
    };

    ProblemSpec {
        name: "hmm86".into(),
        epsilon,
        sigma0: 0.0,
        b: Box::new(move |_, _| [bx, by]),
        c: Box::new(|_, _| 0.0),
        f: Box::new(|_, _| 0.0),
        g: Box::new(|_, _| 0.0),
        u_d: Box::new(u_d),
        exact: None,
        bounds: Some((0.0, 1.0)),
    }
}

/// Problem with constant coefficients, used for config-defined custom runs
/// and constant-reproduction tests. The whole boundary is Dirichlet.
#[allow(clippy::too_many_arguments)]
pub fn custom_constant(
    epsilon: f64,
    b: [f64; 2],
    c: f64,
    f: f64,
    u_d: f64,
    g: f64,
    sigma0: f64,
) -> crate::Result<ProblemSpec> {
    if !(epsilon > 0.0) {
        return Err(crate::Error::Config(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if sigma0 < 0.0 || sigma0 > c.max(0.0) {
        return Err(crate::Error::Config(format!(
            "sigma0 = {sigma0} must satisfy 0 <= sigma0 <= c for constant coefficients"
        )));
    }
    Ok(ProblemSpec {
        name: "custom".into(),
        epsilon,
        sigma0,
        b: Box::new(move |_, _| b),
        c: Box::new(move |_, _| c),
        f: Box::new(move |_, _| f),
        g: Box::new(move |_, _| g),
        u_d: Box::new(move |_, _| u_d),
        exact: None,
        bounds: None,
    })
}

/// Look up a benchmark problem by its config name.
pub fn by_name(name: &str, epsilon: f64) -> crate::Result<ProblemSpec> {
    match name {
        "boundary_layer" => Ok(example_boundary_layer(epsilon)),
        "hmm86" => Ok(example_hmm86(epsilon)),
        other => Err(crate::Error::Config(format!(
            "unknown problem {other:?} (expected \"boundary_layer\", \"hmm86\" or \"custom\")"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square_macro;

    #[test]
    fn boundary_layer_vanishes_on_boundary() {
        let prob = example_boundary_layer(1e-3);
        let u = &prob.exact.as_ref().unwrap().u;
        for t in [0.0, 0.25, 0.5, 0.774, 1.0] {
            assert_eq!(u(0.0, t), 0.0);
            assert!(u(1.0, t).abs() < 1e-15);
            assert_eq!(u(t, 0.0), 0.0);
            assert_eq!(u(t, 1.0), 0.0);
        }
    }

    #[test]
    fn boundary_layer_center_value() {
        // away from the layer the solution is y(1-y)x to machine precision
        let prob = example_boundary_layer(1e-3);
        let u = &prob.exact.as_ref().unwrap().u;
        assert!((u(0.5, 0.5) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn boundary_layer_strong_consistency() {
        // benchmark-scale diffusion coefficients; in between (layer width
        // comparable to the finite-difference stencil) the check itself
        // becomes ill-conditioned
        for eps in [1.0, 1e-3, 1e-4] {
            let prob = example_boundary_layer(eps);
            let res = prob.consistency_residual(&unit_square_macro()).unwrap();
            assert!(res < 1e-8, "eps = {eps}: residual {res}");
        }
    }

    #[test]
    fn hmm86_convection_direction() {
        let prob = example_hmm86(1e-4);
        let b = (prob.b)(0.3, 0.7);
        assert!((b[0] - 0.5).abs() < 1e-15);
        assert!((b[1] + 3.0_f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn hmm86_dirichlet_case_split() {
        let prob = example_hmm86(1e-4);
        let u_d = &prob.u_d;
        assert_eq!(u_d(0.0, 0.8), 1.0);
        assert_eq!(u_d(0.0, 0.5), 0.0);
        assert_eq!(u_d(0.5, 1.0), 1.0);
        // the jump point itself: x = 0, y > 0.7 is strict
        assert_eq!(u_d(0.0, 0.7), 0.0);
        // corners where both clauses meet or touch
        assert_eq!(u_d(0.0, 1.0), 1.0);
        assert_eq!(u_d(1.0, 1.0), 1.0);
        assert_eq!(u_d(0.0, 0.0), 0.0);
        assert_eq!(u_d(1.0, 0.0), 0.0);
    }

    #[test]
    fn divergence_free_convection() {
        let h = 1e-6;
        for prob in [example_boundary_layer(1e-3), example_hmm86(1e-4)] {
            for (x, y) in [(0.3, 0.4), (0.711, 0.205), (0.95, 0.99)] {
                let div = ((prob.b)(x + h, y)[0] - (prob.b)(x - h, y)[0]) / (2.0 * h)
                    + ((prob.b)(x, y + h)[1] - (prob.b)(x, y - h)[1]) / (2.0 * h);
                assert!(div.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn custom_constant_validation() {
        assert!(custom_constant(0.0, [1.0, 0.0], 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(custom_constant(1.0, [1.0, 0.0], 1.0, 0.0, 0.0, 0.0, 2.0).is_err());
        assert!(custom_constant(1.0, [1.0, 0.0], 1.0, 0.0, 0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn by_name_rejects_unknown() {
        assert!(by_name("boundary_layer", 1e-3).is_ok());
        assert!(by_name("hmm86", 1e-4).is_ok());
        assert!(by_name("does_not_exist", 1e-3).is_err());
    }
}
