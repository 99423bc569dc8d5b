//! Scratch diagnostics for the error-evaluation convention (temporary).

use afc2d::afc::{self, LimiterKind, SolverOptions};
use afc2d::assembly::{assemble_system, energy_norm_error};
use afc2d::linalg::DofVector;
use afc2d::mesh::{refine_uniform, unit_square_macro, Mesh};
use afc2d::problems::example_boundary_layer;
use afc2d::quadrature::triangle_rule;

/// Energy error with per-cell composite quadrature: subdivide each cell `k`
/// times (4^k subtriangles) before applying the 7-point rule.
fn energy_error_composite(
    u_h: &DofVector,
    prob: &afc2d::problems::ProblemSpec,
    mesh: &Mesh,
    max_depth: usize,
) -> f64 {
    let exact = prob.exact.as_ref().unwrap();
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let tri = mesh.cell(c);
        let grads = mesh.p1_gradients(c);
        let mut gh = [0.0, 0.0];
        for k in 0..3 {
            gh[0] += u_h.values[tri[k]] * grads[k][0];
            gh[1] += u_h.values[tri[k]] * grads[k][1];
        }
        let coords = mesh.cell_coords(c);
        // value of u_h via barycentric interpolation on the original cell
        let vals = [
            u_h.values[tri[0]],
            u_h.values[tri[1]],
            u_h.values[tri[2]],
        ];
        // subdivide more aggressively near the outflow layer at x = 1
        let xmax = coords[0][0].max(coords[1][0]).max(coords[2][0]);
        let depth = if xmax > 0.99 { max_depth } else { 2 };
        acc += integrate_sub(coords, depth, &|x, y, l0, l1, l2| {
            let ue = (exact.u)(x, y);
            let ge = (exact.grad)(x, y);
            let uh = l0 * vals[0] + l1 * vals[1] + l2 * vals[2];
            let dg = [ge[0] - gh[0], ge[1] - gh[1]];
            prob.epsilon * (dg[0] * dg[0] + dg[1] * dg[1])
                + prob.sigma0 * (ue - uh) * (ue - uh)
        });
    }
    acc.sqrt()
}

type Integrand<'a> = &'a dyn Fn(f64, f64, f64, f64, f64) -> f64;

fn integrate_sub(coords: [[f64; 2]; 3], depth: usize, f: Integrand) -> f64 {
    // recursive barycentric subdivision; keeps track of barycentric coords
    fn go(
        p: [[f64; 2]; 3],
        l: [[f64; 3]; 3],
        depth: usize,
        f: Integrand,
        area: f64,
    ) -> f64 {
        if depth == 0 {
            let mut acc = 0.0;
            for q in triangle_rule() {
                let x = q.bary[0] * p[0][0] + q.bary[1] * p[1][0] + q.bary[2] * p[2][0];
                let y = q.bary[0] * p[0][1] + q.bary[1] * p[1][1] + q.bary[2] * p[2][1];
                let mut lam = [0.0; 3];
                for d in 0..3 {
                    lam[d] =
                        q.bary[0] * l[0][d] + q.bary[1] * l[1][d] + q.bary[2] * l[2][d];
                }
                acc += q.weight * f(x, y, lam[0], lam[1], lam[2]);
            }
            return acc * area;
        }
        let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let lmid = |a: [f64; 3], b: [f64; 3]| {
            [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
        };
        let m01 = mid(p[0], p[1]);
        let m12 = mid(p[1], p[2]);
        let m20 = mid(p[2], p[0]);
        let l01 = lmid(l[0], l[1]);
        let l12 = lmid(l[1], l[2]);
        let l20 = lmid(l[2], l[0]);
        let quarter = area / 4.0;
        go([p[0], m01, m20], [l[0], l01, l20], depth - 1, f, quarter)
            + go([m01, p[1], m12], [l01, l[1], l12], depth - 1, f, quarter)
            + go([m20, m12, p[2]], [l20, l12, l[2]], depth - 1, f, quarter)
            + go([m01, m12, m20], [l01, l12, l20], depth - 1, f, quarter)
    }
    let area = afc2d::mesh::signed_area(coords[0], coords[1], coords[2]);
    go(
        coords,
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        depth,
        f,
        area,
    )
}

/// Gauss-Legendre nodes/weights on [0, 1] by Newton iteration.
fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // initial guess (Chebyshev-like)
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n and derivative by recurrence
            let (mut p0, mut p1) = (1.0_f64, x);
            for j in 2..=n {
                let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = pj;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0_f64, x);
        for j in 2..=n {
            let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = pj;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Energy error via the conical-product (Duffy) rule of order n per
/// direction: (x, y) = (s (1 - t), t) on the reference triangle.
fn energy_error_conical(
    u_h: &DofVector,
    prob: &afc2d::problems::ProblemSpec,
    mesh: &Mesh,
    n: usize,
) -> f64 {
    let exact = prob.exact.as_ref().unwrap();
    let gl = gauss_legendre_01(n);
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let tri = mesh.cell(c);
        let grads = mesh.p1_gradients(c);
        let [p0, p1, p2] = mesh.cell_coords(c);
        let area = afc2d::mesh::signed_area(p0, p1, p2);
        let mut gh = [0.0, 0.0];
        for k in 0..3 {
            gh[0] += u_h.values[tri[k]] * grads[k][0];
            gh[1] += u_h.values[tri[k]] * grads[k][1];
        }
        let vals = [
            u_h.values[tri[0]],
            u_h.values[tri[1]],
            u_h.values[tri[2]],
        ];
        for &(s, ws) in &gl {
            for &(t, wt) in &gl {
                // barycentric coordinates on the reference map
                let l1 = s * (1.0 - t);
                let l2 = t;
                let l0 = 1.0 - l1 - l2;
                let x = l0 * p0[0] + l1 * p1[0] + l2 * p2[0];
                let y = l0 * p0[1] + l1 * p1[1] + l2 * p2[1];
                let w = ws * wt * (1.0 - t) * 2.0 * area;
                let ue = (exact.u)(x, y);
                let ge = (exact.grad)(x, y);
                let uh = l0 * vals[0] + l1 * vals[1] + l2 * vals[2];
                let dg = [ge[0] - gh[0], ge[1] - gh[1]];
                acc += w
                    * (prob.epsilon * (dg[0] * dg[0] + dg[1] * dg[1])
                        + prob.sigma0 * (ue - uh) * (ue - uh));
            }
        }
    }
    acc.sqrt()
}

fn scan_conical() {
    let prob = example_boundary_layer(1e-3);
    let paper_kuzmin = [
        (2usize, 0.077891666488992),
        (3, 0.121846769481),
        (4, 0.14133350854),
        (5, 0.133267362871),
        (6, 0.122336162121),
    ];
    let mut meshes: Vec<Mesh> = Vec::new();
    let mut m = unit_square_macro();
    for _ in 0..2 {
        m = refine_uniform(&m);
    }
    for _ in 0..5 {
        meshes.push(m.clone());
        m = refine_uniform(&m);
    }
    let sols: Vec<DofVector> = meshes
        .iter()
        .map(|mesh| {
            afc::solve_afc(mesh, &prob, LimiterKind::Kuzmin, &SolverOptions::default())
                .unwrap()
                .0
        })
        .collect();
    println!("conical-product scan (ratios to the published Kuzmin series):");
    print!("{:>4}", "n");
    for (lvl, _) in &paper_kuzmin {
        print!(" {:>10}", format!("L{lvl}"));
    }
    println!();
    for n in [2usize, 3, 4, 5, 6, 8, 10, 12, 14, 16, 20, 24] {
        print!("{n:>4}");
        for (i, (_, target)) in paper_kuzmin.iter().enumerate() {
            let e = energy_error_conical(&sols[i], &prob, &meshes[i], n);
            print!(" {:>10.4}", e / target);
        }
        println!();
    }
}

/// Replace the load vector by a high-order conical evaluation of (f, phi_i)
/// and re-solve: isolates the effect of under-integrating the layer in f.
fn probe_load_quadrature() {
    let prob = example_boundary_layer(1e-3);
    let paper = [
        (4usize, 0.14133350854),
        (5, 0.133267362871),
        (6, 0.122336162121),
    ];
    println!("\nhigh-order load vector (conical n=24), Kuzmin:");
    for (lvl, target) in paper {
        let mesh = (0..lvl).fold(unit_square_macro(), |m, _| refine_uniform(&m));
        let mut sys = assemble_system(&mesh, &prob).unwrap();
        // recompute (f, phi_i) with the conical rule
        let gl = gauss_legendre_01(24);
        let mut load = vec![0.0; mesh.n_vertices()];
        for c in 0..mesh.n_cells() {
            let tri = mesh.cell(c);
            let [p0, p1, p2] = mesh.cell_coords(c);
            let area = afc2d::mesh::signed_area(p0, p1, p2);
            for &(s, ws) in &gl {
                for &(t, wt) in &gl {
                    let l1 = s * (1.0 - t);
                    let l2 = t;
                    let l0 = 1.0 - l1 - l2;
                    let x = l0 * p0[0] + l1 * p1[0] + l2 * p2[0];
                    let y = l0 * p0[1] + l1 * p1[1] + l2 * p2[1];
                    let w = ws * wt * (1.0 - t) * 2.0 * area;
                    let fv = (prob.f)(x, y);
                    load[tri[0]] += w * fv * l0;
                    load[tri[1]] += w * fv * l1;
                    load[tri[2]] += w * fv * l2;
                }
            }
        }
        sys.f = DofVector::from_values(load, sys.dirichlet_dofs.clone());
        let sys = afc2d::assembly::apply_dirichlet(sys, &prob, &mesh);
        let (u, _, _) = afc::solve_afc_assembled(
            &mesh,
            &prob,
            &sys,
            LimiterKind::Kuzmin,
            &SolverOptions::default(),
        )
        .unwrap();
        let e_true = energy_error_conical(&u, &prob, &mesh, 24);
        let e5 = energy_norm_error(&u, &prob, &mesh).unwrap();
        println!(
            "  level {lvl}: true {e_true:.6} ({:.4} of paper), deg5 {e5:.6}",
            e_true / target
        );
    }
}

/// Compare against the discrete-error convention |I_h u - u_h|_a and a
/// Lobatto-style conical rule with boundary nodes.
fn probe_conventions() {
    let prob = example_boundary_layer(1e-3);
    let paper = [
        (2usize, 0.077891666488992),
        (3, 0.121846769481),
        (4, 0.14133350854),
        (5, 0.133267362871),
        (6, 0.122336162121),
    ];
    println!("\ninterpolant-difference convention, Kuzmin (ratio to paper):");
    for (lvl, target) in paper {
        let mesh = (0..lvl).fold(unit_square_macro(), |m, _| refine_uniform(&m));
        let (u, _, _) =
            afc::solve_afc(&mesh, &prob, LimiterKind::Kuzmin, &SolverOptions::default()).unwrap();
        let exact = prob.exact.as_ref().unwrap();
        let diff: Vec<f64> = (0..mesh.n_vertices())
            .map(|v| {
                let [x, y] = mesh.vertex(v);
                (exact.u)(x, y) - u.values[v]
            })
            .collect();
        let e = afc2d::assembly::discrete_energy_norm(&diff, &prob, &mesh);
        println!("  level {lvl}: |I_h u - u_h|_a = {e:.6}  ratio {:.4}", e / target);
    }
}

/// Test the AFC-norm convention: reported^2 = |u - u_h|_a^2 (deg-5) +
/// d_h(u_h; I_h u - u_h, I_h u - u_h).
fn probe_afc_norm() {
    let prob = example_boundary_layer(1e-3);
    let paper = [
        (2usize, 0.077891666488992),
        (3, 0.121846769481),
        (4, 0.14133350854),
        (5, 0.133267362871),
        (6, 0.122336162121),
    ];
    println!("\nAFC-norm convention, Kuzmin (ratio to paper):");
    for (lvl, target) in paper {
        let mesh = (0..lvl).fold(unit_square_macro(), |m, _| refine_uniform(&m));
        let sys = assemble_system(&mesh, &prob).unwrap();
        let (u, state, _) = afc::solve_afc_assembled(
            &mesh,
            &prob,
            &sys,
            LimiterKind::Kuzmin,
            &SolverOptions::default(),
        )
        .unwrap();
        let exact = prob.exact.as_ref().unwrap();
        let diff = DofVector::from_values(
            (0..mesh.n_vertices())
                .map(|v| {
                    let [x, y] = mesh.vertex(v);
                    (exact.u)(x, y) - u.values[v]
                })
                .collect(),
            sys.dirichlet_dofs.clone(),
        );
        let dh = afc::dh_point(&state, &sys.d, &diff, &diff);
        let e5 = energy_norm_error(&u, &prob, &mesh).unwrap();
        let afc_norm = (e5 * e5 + dh).sqrt();
        let e_true = energy_error_conical(&u, &prob, &mesh, 24);
        let afc_true = (e_true * e_true + dh).sqrt();
        println!(
            "  level {lvl}: dh = {dh:.6}, deg5-based {afc_norm:.6} (r {:.4}), true-based {afc_true:.6} (r {:.4})",
            afc_norm / target,
            afc_true / target
        );
    }
}

fn main() {
    scan_conical();
    probe_load_quadrature();
    probe_conventions();
    probe_afc_norm();
    let prob = example_boundary_layer(1e-3);
    for levels in [2usize, 4] {
        let mesh = (0..levels).fold(unit_square_macro(), |m, _| refine_uniform(&m));
        println!("== level {levels}, dofs {}", mesh.n_vertices());
        let sys = assemble_system(&mesh, &prob).unwrap();

        // variants of u_h
        let (kuz, _, _) =
            afc::solve_afc(&mesh, &prob, LimiterKind::Kuzmin, &SolverOptions::default()).unwrap();
        let (bjk, _, _) =
            afc::solve_afc(&mesh, &prob, LimiterKind::Bjk, &SolverOptions::default()).unwrap();
        let mut ones = sys.d.zeros_like();
        ones.values_mut().fill(1.0);
        let galerkin = afc::solve_frozen_alpha(&sys, &ones).unwrap();
        let upwind = afc::solve_frozen_alpha(&sys, &sys.d.zeros_like()).unwrap();
        let interp = DofVector::from_values(
            (0..mesh.n_vertices())
                .map(|v| {
                    let [x, y] = mesh.vertex(v);
                    (prob.exact.as_ref().unwrap().u)(x, y)
                })
                .collect(),
            mesh.dirichlet_vertices(),
        );

        for (name, u) in [
            ("kuzmin", &kuz),
            ("bjk", &bjk),
            ("galerkin", &galerkin),
            ("upwind", &upwind),
            ("interpolant", &interp),
        ] {
            let e5 = energy_norm_error(u, &prob, &mesh).unwrap();
            let e_acc = energy_error_composite(u, &prob, &mesh, 9);
            println!("{name:>12}: deg5 {e5:.6}  composite {e_acc:.6}  min {:.4} max {:.4}",
                u.values.iter().cloned().fold(f64::MAX, f64::min),
                u.values.iter().cloned().fold(f64::MIN, f64::max));
        }
    }
}
