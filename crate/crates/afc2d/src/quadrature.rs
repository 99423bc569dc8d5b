//! Quadrature rules used by assembly and norm evaluation.
//!
//! All volume terms use a symmetric 7-point triangle rule that is exact for
//! bivariate polynomials up to total degree 5; edge integrals use 3-point
//! Gauss-Legendre (exact up to degree 5 as well). Layers make low-order
//! rules noisy, while degree 5 is plenty for P1 data with smooth
//! coefficients.

/// One quadrature point in barycentric coordinates with its weight.
///
/// Weights sum to 1; multiply by the cell area when integrating.
#[derive(Clone, Copy, Debug)]
pub struct TrianglePoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// The 7-point, degree-5 symmetric triangle rule.
pub fn triangle_rule() -> [TrianglePoint; 7] {
    let s = 15.0_f64.sqrt();
    // group with weight (155 - sqrt(15))/1200 around barycentric (6 - sqrt(15))/21
    let b_minus = (6.0 - s) / 21.0;
    let a_minus = 1.0 - 2.0 * b_minus;
    let w_minus = (155.0 - s) / 1200.0;
    // group with weight (155 + sqrt(15))/1200 around barycentric (6 + sqrt(15))/21
    let b_plus = (6.0 + s) / 21.0;
    let a_plus = 1.0 - 2.0 * b_plus;
    let w_plus = (155.0 + s) / 1200.0;

    [
        TrianglePoint {
            bary: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            weight: 9.0 / 40.0,
        },
        TrianglePoint {
            bary: [a_minus, b_minus, b_minus],
            weight: w_minus,
        },
        TrianglePoint {
            bary: [b_minus, a_minus, b_minus],
            weight: w_minus,
        },
        TrianglePoint {
            bary: [b_minus, b_minus, a_minus],
            weight: w_minus,
        },
        TrianglePoint {
            bary: [a_plus, b_plus, b_plus],
            weight: w_plus,
        },
        TrianglePoint {
            bary: [b_plus, a_plus, b_plus],
            weight: w_plus,
        },
        TrianglePoint {
            bary: [b_plus, b_plus, a_plus],
            weight: w_plus,
        },
    ]
}

/// 3-point Gauss-Legendre rule on [0, 1]: `(position, weight)`, weights sum to 1.
pub fn edge_rule() -> [(f64, f64); 3] {
    let r = (3.0_f64 / 5.0).sqrt();
    [
        (0.5 * (1.0 - r), 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 * (1.0 + r), 5.0 / 18.0),
    ]
}

/// Integrate `f` over the triangle spanned by `p0, p1, p2` with signed area `area`.
pub fn integrate_triangle<F: FnMut(f64, f64) -> f64>(
    p0: [f64; 2],
    p1: [f64; 2],
    p2: [f64; 2],
    area: f64,
    mut f: F,
) -> f64 {
    let mut acc = 0.0;
    for q in triangle_rule() {
        let x = q.bary[0] * p0[0] + q.bary[1] * p1[0] + q.bary[2] * p2[0];
        let y = q.bary[0] * p0[1] + q.bary[1] * p1[1] + q.bary[2] * p2[1];
        acc += q.weight * f(x, y);
    }
    acc * area
}

/// Adaptively integrate a nonnegative integrand over a triangle.
///
/// The base rule is applied on a uniform red subdivision whose depth grows
/// wherever parent and children disagree, which resolves boundary-layer
/// integrands (widths far below the mesh size) that any fixed-order rule
/// silently misses. Two subdivision levels are always performed so that a
/// layer hiding between the points of the coarse rule still gets detected.
pub fn adaptive_triangle_integral<F: Fn(f64, f64) -> f64>(
    p0: [f64; 2],
    p1: [f64; 2],
    p2: [f64; 2],
    area: f64,
    f: &F,
) -> f64 {
    fn rule<F: Fn(f64, f64) -> f64>(t: &[[f64; 2]; 3], area: f64, f: &F) -> f64 {
        integrate_triangle(t[0], t[1], t[2], area, |x, y| f(x, y))
    }
    fn recurse<F: Fn(f64, f64) -> f64>(
        t: [[f64; 2]; 3],
        area: f64,
        coarse: f64,
        f: &F,
        depth: usize,
        force: usize,
    ) -> f64 {
        let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let m01 = mid(t[0], t[1]);
        let m12 = mid(t[1], t[2]);
        let m20 = mid(t[2], t[0]);
        let children = [
            [t[0], m01, m20],
            [m01, t[1], m12],
            [m20, m12, t[2]],
            [m01, m12, m20],
        ];
        let quarter = area / 4.0;
        let fine: [f64; 4] = std::array::from_fn(|k| rule(&children[k], quarter, f));
        let fine_sum: f64 = fine.iter().sum();
        let converged = (fine_sum - coarse).abs() <= 1e-9 * fine_sum.abs() + 1e-300;
        if depth == 0 || (force == 0 && converged) {
            return fine_sum;
        }
        children
            .iter()
            .zip(fine)
            .map(|(child, c)| {
                recurse(*child, quarter, c, f, depth - 1, force.saturating_sub(1))
            })
            .sum()
    }
    let t = [p0, p1, p2];
    recurse(t, area, rule(&t, area, f), f, 20, 2)
}

/// Integrate `f` along the segment from `a` to `b` (arc-length measure).
pub fn integrate_edge<F: FnMut(f64, f64) -> f64>(a: [f64; 2], b: [f64; 2], mut f: F) -> f64 {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut acc = 0.0;
    for (t, w) in edge_rule() {
        let x = a[0] + t * (b[0] - a[0]);
        let y = a[1] + t * (b[1] - a[1]);
        acc += w * f(x, y);
    }
    acc * len
}
