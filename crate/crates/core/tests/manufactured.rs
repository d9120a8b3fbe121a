use ferrosolve::elliptic::{assemble, nodal_lp_norm, Grid, NodalLoads};
use ferrosolve::field::CellField;
use ferrosolve::material::{
    make_tensors, CouplingParams, DielectricParams, ElasticParams, HardeningParams, MaterialTensors,
};
use std::f64::consts::PI;

fn tensors_2d() -> MaterialTensors {
    make_tensors(
        2,
        &ElasticParams::Isotropic { lambda: 1.0, mu: 0.8 },
        &DielectricParams::Diagonal(vec![0.9, 1.3]),
        &CouplingParams::Poled { e31: -0.4, e33: 0.9, e15: 0.6 },
        &HardeningParams::Zero,
    )
    .unwrap()
}

fn nodal_error(grid: &Grid, approx: &[f64], width: usize, exact: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut err = vec![0.0; approx.len()];
    for v in 0..grid.nnodes() {
        let ex = exact(&grid.node_coords(v));
        for i in 0..width {
            err[v * width + i] = approx[v * width + i] - ex[i];
        }
    }
    nodal_lp_norm(grid, &err, width, 2.0)
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn one_dimensional_manufactured_solution_converges_at_second_order() {
    let (c, eps, e) = (1.5, 0.7, 0.4);
    let t = make_tensors(
        1,
        &ElasticParams::Matrix(vec![c]),
        &DielectricParams::Diagonal(vec![eps]),
        &CouplingParams::Matrix(vec![e]),
        &HardeningParams::Zero,
    )
    .unwrap();
    let mut errs = Vec::new();
    for n in [8, 16, 32, 64] {
        let grid = Grid::new(vec![n], vec![1.0]).unwrap();
        let sys = assemble(&grid, &t).unwrap();
        // u = phi = sin(pi x): -(C u' + e phi')' = b, (e u' - eps phi')' = q
        let loads = NodalLoads::from_fn(&grid, |x| {
            let s = (PI * x[0]).sin();
            (vec![PI * PI * (c + e) * s], PI * PI * (eps - e) * s)
        });
        let fs = sys.solve_bvp(&CellField::zeros(n, 2), &loads).unwrap();
        let exact = |x: &[f64]| vec![(PI * x[0]).sin()];
        errs.push(nodal_error(&grid, &fs.u, 1, exact) + nodal_error(&grid, &fs.phi, 1, exact));
    }
    for o in orders(&errs) {
        assert!((o - 2.0).abs() <= 0.2, "order {o}, errors {errs:?}");
    }
}

#[test]
fn two_dimensional_manufactured_solution_converges_at_second_order() {
    let t = tensors_2d();
    let u_exact = |x: &[f64]| {
        let s = (PI * x[0]).sin() * (PI * x[1]).sin();
        vec![s, 0.5 * (PI * x[0]).sin() * (2.0 * PI * x[1]).sin()]
    };
    let phi_exact = |x: &[f64]| (PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
    // analytic (sigma, D) from exact gradients
    let fluxes = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let (sx, cx) = ((PI * x[0]).sin(), (PI * x[0]).cos());
        let (sy, cy) = ((PI * x[1]).sin(), (PI * x[1]).cos());
        let (s2y, c2y) = ((2.0 * PI * x[1]).sin(), (2.0 * PI * x[1]).cos());
        let du = [[PI * cx * sy, PI * sx * cy], [0.5 * PI * cx * s2y, PI * sx * c2y]];
        let strain = [du[0][0], du[1][1], (du[0][1] + du[1][0]) / std::f64::consts::SQRT_2];
        let gphi = [PI * cx * s2y, 2.0 * PI * sx * c2y];
        let ef = [-gphi[0], -gphi[1]];
        t.constitutive(&strain, &ef, &[0.0, 0.0])
    };
    let full = |packed: &[f64]| {
        let o = packed[2] / std::f64::consts::SQRT_2;
        [[packed[0], o], [o, packed[1]]]
    };
    let hfd = 1e-5;
    let mut errs = Vec::new();
    for n in [8, 16, 32, 64] {
        let grid = Grid::new(vec![n, n], vec![1.0, 1.0]).unwrap();
        let sys = assemble(&grid, &t).unwrap();
        let loads = NodalLoads::from_fn(&grid, |x| {
            let mut b = vec![0.0; 2];
            let mut q = 0.0;
            for j in 0..2 {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += hfd;
                xm[j] -= hfd;
                let (sp, dp) = fluxes(&xp);
                let (sm, dm) = fluxes(&xm);
                let (fp, fm) = (full(&sp), full(&sm));
                for i in 0..2 {
                    b[i] -= (fp[i][j] - fm[i][j]) / (2.0 * hfd);
                }
                q += (dp[j] - dm[j]) / (2.0 * hfd);
            }
            (b, q)
        });
        let fs = sys.solve_bvp(&CellField::zeros(n * n, 5), &loads).unwrap();
        errs.push(
            nodal_error(&grid, &fs.u, 2, u_exact) + nodal_error(&grid, &fs.phi, 1, |x| vec![phi_exact(x)]),
        );
    }
    for o in orders(&errs) {
        assert!((o - 2.0).abs() <= 0.2, "order {o}, errors {errs:?}");
    }
}

#[test]
fn stability_constant_stays_bounded_under_refinement() {
    let t = tensors_2d();
    let mut ratios = Vec::new();
    for n in [4, 8, 16, 32] {
        let grid = Grid::new(vec![n, n], vec![1.0, 1.0]).unwrap();
        let sys = assemble(&grid, &t).unwrap();
        let z = CellField::from_fn(grid.ncells(), 5, |c| {
            let x = grid.cell_center(c);
            let s = (PI * x[0]).sin() * (PI * x[1]).cos();
            vec![s, -s, 0.5 * s, s, 0.2]
        });
        let loads = NodalLoads::from_fn(&grid, |x| (vec![x[0], 1.0], x[1]));
        ratios.push(sys.stability_ratio(&z, &loads).unwrap());
    }
    let first = ratios[0];
    assert!(ratios.iter().all(|r| *r > 0.0 && *r <= 2.0 * first), "{ratios:?}");
}

#[test]
fn discrete_coercivity_constant_on_small_grids() {
    let t = tensors_2d();
    for n in [2, 3, 5] {
        let grid = Grid::new(vec![n, n], vec![1.0, 1.0]).unwrap();
        let sys = assemble(&grid, &t).unwrap();
        assert!(sys.symmetric_min_eigenvalue() > 0.0, "n = {n}");
    }
}
