//! Discrete linear piezoelectric boundary value problem on a structured box grid.
//!
//! Displacement `u` and potential `phi` are multilinear nodal fields vanishing on the boundary.
//! Strains and potential gradients are taken cellwise as averages over the cell, so every
//! derived quantity (strain, field, stress, displacement, the internal variable) is piecewise
//! constant. With this choice the bilinear form is
//!
//! `A(U, V) = sum_c |c| <A G_c U, G_c V>`
//!
//! where `G_c` is the averaged (strain, gradient) operator of cell `c`, and the projection onto
//! compatible fields is exact on the piecewise-constant internal-variable space.

mod banded;

pub use banded::{BandLu, BandMatrix};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::CellField;
use crate::material::{assemble_block_a, assemble_block_d, sym_pairs, BlockOperatorA, BlockOperatorD, MaterialTensors};

const NO_DOF: usize = usize::MAX;

/// Tensor-product grid on the box `[0, L_0] x ... x [0, L_{d-1}]`. Cells and nodes are numbered
/// lexicographically with axis 0 running fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
    pub h: Vec<f64>,
}

impl Grid {
    pub fn new(cells: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        let dim = cells.len();
        if !(1..=3).contains(&dim) || lengths.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "grid needs 1 to 3 axes with one length each, got {} cell counts and {} lengths",
                cells.len(),
                lengths.len()
            )));
        }
        if cells.contains(&0) || lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::DimensionMismatch(
                "cell counts and axis lengths must be positive".into(),
            ));
        }
        let h = cells.iter().zip(&lengths).map(|(&n, &l)| l / n as f64).collect();
        Ok(Grid {
            dim,
            cells,
            lengths,
            h,
        })
    }

    /// Same box with every axis subdivided `factor` times as finely.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid::new(
            self.cells.iter().map(|n| n * factor).collect(),
            self.lengths.clone(),
        )
        .expect("refinement of a valid grid")
    }

    pub fn ncells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn nnodes(&self) -> usize {
        self.cells.iter().map(|n| n + 1).product()
    }

    pub fn cell_measure(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn cell_measures(&self) -> Vec<f64> {
        vec![self.cell_measure(); self.ncells()]
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn cell_multi(&self, mut c: usize) -> Vec<usize> {
        self.cells
            .iter()
            .map(|&n| {
                let i = c % n;
                c /= n;
                i
            })
            .collect()
    }

    pub fn node_multi(&self, mut v: usize) -> Vec<usize> {
        self.cells
            .iter()
            .map(|&n| {
                let i = v % (n + 1);
                v /= n + 1;
                i
            })
            .collect()
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, &m) in multi.iter().enumerate() {
            idx += m * stride;
            stride *= self.cells[i] + 1;
        }
        idx
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, &m) in multi.iter().enumerate() {
            idx += m * stride;
            stride *= self.cells[i];
        }
        idx
    }

    pub fn node_coords(&self, v: usize) -> Vec<f64> {
        self.node_multi(v)
            .iter()
            .zip(&self.h)
            .map(|(&i, h)| i as f64 * h)
            .collect()
    }

    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        self.cell_multi(c)
            .iter()
            .zip(&self.h)
            .map(|(&i, h)| (i as f64 + 0.5) * h)
            .collect()
    }

    pub fn is_boundary_node(&self, v: usize) -> bool {
        self.node_multi(v)
            .iter()
            .zip(&self.cells)
            .any(|(&i, &n)| i == 0 || i == n)
    }

    /// Corner nodes of a cell; corner `s` sits at offset `(s >> i) & 1` along axis `i`.
    pub fn cell_corners(&self, c: usize) -> Vec<usize> {
        let base = self.cell_multi(c);
        (0..1usize << self.dim)
            .map(|s| {
                let m: Vec<usize> = base
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| b + ((s >> i) & 1))
                    .collect();
                self.node_index(&m)
            })
            .collect()
    }

    /// Trapezoidal (lumped) quadrature weight of a node.
    pub fn node_weight(&self, v: usize) -> f64 {
        self.node_multi(v)
            .iter()
            .zip(&self.cells)
            .zip(&self.h)
            .map(|((&i, &n), h)| if i == 0 || i == n { 0.5 * h } else { *h })
            .product()
    }
}

/// Nodal body force `b` (`dim` components per node) and free charge density `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalLoads {
    pub b: Vec<f64>,
    pub q: Vec<f64>,
}

impl NodalLoads {
    pub fn zeros(grid: &Grid) -> Self {
        NodalLoads {
            b: vec![0.0; grid.nnodes() * grid.dim],
            q: vec![0.0; grid.nnodes()],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> (Vec<f64>, f64)) -> Self {
        let mut loads = NodalLoads::zeros(grid);
        for v in 0..grid.nnodes() {
            let (b, q) = f(&grid.node_coords(v));
            loads.b[v * grid.dim..(v + 1) * grid.dim].copy_from_slice(&b);
            loads.q[v] = q;
        }
        loads
    }

    pub fn scaled(&self, sb: f64, sq: f64) -> Self {
        NodalLoads {
            b: self.b.iter().map(|x| sb * x).collect(),
            q: self.q.iter().map(|x| sq * x).collect(),
        }
    }

    pub fn add(&self, other: &NodalLoads) -> Self {
        NodalLoads {
            b: self.b.iter().zip(&other.b).map(|(x, y)| x + y).collect(),
            q: self.q.iter().zip(&other.q).map(|(x, y)| x + y).collect(),
        }
    }
}

/// Solution of one elliptic solve with its cellwise derived quantities.
#[derive(Clone, Debug)]
pub struct FieldState {
    /// Nodal displacement, `dim` components per node.
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    /// Packed strain `eps(u)` per cell.
    pub strain: CellField,
    /// `E = -grad phi` per cell.
    pub e_field: CellField,
    pub sigma: CellField,
    pub displacement: CellField,
}

impl FieldState {
    /// `(sigma, E)` stacked per cell.
    pub fn sigma_e(&self) -> CellField {
        stack(&self.sigma, &self.e_field)
    }

    /// `(eps(u), D)` stacked per cell.
    pub fn strain_d(&self) -> CellField {
        stack(&self.strain, &self.displacement)
    }
}

pub fn stack(a: &CellField, b: &CellField) -> CellField {
    let n = a.ncells().max(b.ncells());
    CellField::from_fn(n, a.width + b.width, |c| {
        let mut v = a.cell(c).to_vec();
        v.extend_from_slice(b.cell(c));
        v
    })
}

/// Grid-L^p norms of the parts of a field state (nodal fields with lumped weights).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldNorms {
    pub u: f64,
    pub phi: f64,
    pub sigma: f64,
    pub e_field: f64,
    pub displacement: f64,
}

/// Lumped grid-L^p norm of a nodal field with `width` components per node.
pub fn nodal_lp_norm(grid: &Grid, values: &[f64], width: usize, p: f64) -> f64 {
    let mut acc = 0.0;
    let mut max = 0.0f64;
    for v in 0..grid.nnodes() {
        let n = crate::field::norm(&values[v * width..(v + 1) * width]);
        acc += grid.node_weight(v) * n.powf(p);
        max = max.max(n);
    }
    if p.is_infinite() {
        max
    } else {
        acc.powf(1.0 / p)
    }
}

pub fn field_norms(grid: &Grid, fs: &FieldState, p: f64) -> FieldNorms {
    let m = grid.cell_measures();
    FieldNorms {
        u: nodal_lp_norm(grid, &fs.u, grid.dim, p),
        phi: nodal_lp_norm(grid, &fs.phi, 1, p),
        sigma: fs.sigma.lp_norm(p, &m),
        e_field: fs.e_field.lp_norm(p, &m),
        displacement: fs.displacement.lp_norm(p, &m),
    }
}

/// Stiffness operator over the interior degrees of freedom, its factorization, and the cellwise
/// operators needed to build right-hand sides and reconstruct fields.
///
/// DOFs are interleaved per interior node: `(u_0, .., u_{d-1}, phi)`.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub grid: Grid,
    pub tensors: MaterialTensors,
    pub block_a: BlockOperatorA,
    pub block_d: BlockOperatorD,
    pub linear_tol: f64,
    matrix: BandMatrix,
    lu: BandLu,
    node_dof: Vec<usize>,
    /// Averaged (strain, grad phi) operator of one cell, `k x (2^d (d+1))`.
    local_grad: DMatrix<f64>,
    /// `|c| G^T [[C, 0], [-e, I]]`, mapping a cell's `z` to its local right-hand side.
    local_z_rhs: DMatrix<f64>,
}

impl AssembledSystem {
    pub fn ndof(&self) -> usize {
        self.matrix.size()
    }

    pub fn bandwidth(&self) -> usize {
        self.matrix.bandwidth()
    }

    pub fn internal_dim(&self) -> usize {
        self.tensors.internal_dim()
    }

    fn local_dofs(&self, c: usize) -> Vec<usize> {
        let d1 = self.grid.dim + 1;
        let mut out = Vec::with_capacity(self.local_grad.ncols());
        for v in self.grid.cell_corners(c) {
            let base = self.node_dof[v];
            for comp in 0..d1 {
                out.push(if base == NO_DOF { NO_DOF } else { base + comp });
            }
        }
        out
    }

    /// Dense copy of the stiffness matrix, for inspection on small grids.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Smallest eigenvalue of the symmetric part of the stiffness matrix (dense eigensolve).
    pub fn symmetric_min_eigenvalue(&self) -> f64 {
        crate::material::min_sym_eigenvalue(&self.dense_matrix())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }

    /// Solves `A x = rhs` with a few rounds of iterative refinement and checks the residual.
    pub fn solve_linear(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let bnorm = crate::field::norm(rhs);
        if bnorm == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let mut x = self.lu.solve(rhs);
        let mut rel = f64::INFINITY;
        for _ in 0..3 {
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let new_rel = crate::field::norm(&r) / bnorm;
            if new_rel <= 1e-15 || new_rel >= rel {
                rel = rel.min(new_rel);
                break;
            }
            rel = new_rel;
            let dx = self.lu.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
        if !(rel <= self.linear_tol) {
            return Err(Error::LinearSolveFailure {
                residual: rel,
                tolerance: self.linear_tol,
            });
        }
        Ok(x)
    }

    /// Right-hand side contribution `sum_c |c| <(C r, -e r + P), G_c V>` of an internal variable.
    pub fn rhs_internal(&self, z: &CellField) -> Vec<f64> {
        let mut rhs = vec![0.0; self.ndof()];
        for c in 0..self.grid.ncells() {
            let local = &self.local_z_rhs * DVector::from_column_slice(z.cell(c));
            for (l, g) in self.local_dofs(c).into_iter().enumerate() {
                if g != NO_DOF {
                    rhs[g] += local[l];
                }
            }
        }
        rhs
    }

    /// Lumped right-hand side `sum_n w_n (b . v + q psi)` of the loads.
    pub fn rhs_loads(&self, loads: &NodalLoads) -> Vec<f64> {
        let d = self.grid.dim;
        let mut rhs = vec![0.0; self.ndof()];
        for v in 0..self.grid.nnodes() {
            let base = self.node_dof[v];
            if base == NO_DOF {
                continue;
            }
            let w = self.grid.node_weight(v);
            for i in 0..d {
                rhs[base + i] = w * loads.b[v * d + i];
            }
            rhs[base + d] = w * loads.q[v];
        }
        rhs
    }

    /// Cellwise `(eps(u), grad phi)` of a DOF vector.
    pub fn cell_gradients(&self, x: &[f64]) -> CellField {
        let k = self.internal_dim();
        let mut out = CellField::zeros(self.grid.ncells(), k);
        let mut loc = DVector::zeros(self.local_grad.ncols());
        for c in 0..self.grid.ncells() {
            for (l, g) in self.local_dofs(c).into_iter().enumerate() {
                loc[l] = if g == NO_DOF { 0.0 } else { x[g] };
            }
            let eta = &self.local_grad * &loc;
            out.cell_mut(c).copy_from_slice(eta.as_slice());
        }
        out
    }

    /// Weak divergence of a piecewise-constant vector field tested against every interior hat
    /// function: `sum_c |c| <D_c, grad_c psi_n>`.
    pub fn weak_divergence(&self, dfield: &CellField) -> Vec<f64> {
        let d = self.grid.dim;
        let ks = self.tensors.sym_dim();
        let mut out = vec![0.0; self.ndof() / (d + 1)];
        let measure = self.grid.cell_measure();
        for c in 0..self.grid.ncells() {
            let dofs = self.local_dofs(c);
            for s in 0..1usize << d {
                let g = dofs[s * (d + 1) + d];
                if g == NO_DOF {
                    continue;
                }
                let col = s * (d + 1) + d;
                let mut acc = 0.0;
                for i in 0..d {
                    acc += self.local_grad[(ks + i, col)] * dfield.cell(c)[i];
                }
                out[g / (d + 1)] += measure * acc;
            }
        }
        out
    }

    fn expand_nodal(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.grid.dim;
        let nn = self.grid.nnodes();
        let mut u = vec![0.0; nn * d];
        let mut phi = vec![0.0; nn];
        for v in 0..nn {
            let base = self.node_dof[v];
            if base == NO_DOF {
                continue;
            }
            u[v * d..(v + 1) * d].copy_from_slice(&x[base..base + d]);
            phi[v] = x[base + d];
        }
        (u, phi)
    }

    /// Builds the field state from a DOF vector and the internal variable.
    pub fn reconstruct(&self, x: &[f64], z: &CellField) -> FieldState {
        let d = self.grid.dim;
        let ks = self.tensors.sym_dim();
        let ncells = self.grid.ncells();
        let grads = self.cell_gradients(x);
        let mut strain = CellField::zeros(ncells, ks);
        let mut e_field = CellField::zeros(ncells, d);
        let mut sigma = CellField::zeros(ncells, ks);
        let mut disp = CellField::zeros(ncells, d);
        for c in 0..ncells {
            let eta = grads.cell(c);
            let zc = z.cell(c);
            let rev: Vec<f64> = (0..ks).map(|a| eta[a] - zc[a]).collect();
            let ef: Vec<f64> = (0..d).map(|i| -eta[ks + i]).collect();
            let (s, dd) = self.tensors.constitutive(&rev, &ef, &zc[ks..]);
            strain.cell_mut(c).copy_from_slice(&eta[..ks]);
            e_field.cell_mut(c).copy_from_slice(&ef);
            sigma.cell_mut(c).copy_from_slice(&s);
            disp.cell_mut(c).copy_from_slice(&dd);
        }
        let (u, phi) = self.expand_nodal(x);
        FieldState {
            u,
            phi,
            strain,
            e_field,
            sigma,
            displacement: disp,
        }
    }

    /// Discrete weak solution for internal variable `z` and loads `(b, q)`.
    pub fn solve_bvp(&self, z: &CellField, loads: &NodalLoads) -> Result<FieldState> {
        self.check_field(z)?;
        let mut rhs = self.rhs_internal(z);
        for (r, l) in rhs.iter_mut().zip(self.rhs_loads(loads)) {
            *r += l;
        }
        let x = self.solve_linear(&rhs)?;
        Ok(self.reconstruct(&x, z))
    }

    fn check_field(&self, z: &CellField) -> Result<()> {
        if z.width != self.internal_dim() || z.ncells() != self.grid.ncells() {
            return Err(Error::DimensionMismatch(format!(
                "internal variable has {} cells of width {}, grid needs {} cells of width {}",
                z.ncells(),
                z.width,
                self.grid.ncells(),
                self.internal_dim()
            )));
        }
        Ok(())
    }

    fn zero_load_solve(&self, z: &CellField) -> Result<FieldState> {
        self.check_field(z)?;
        let x = self.solve_linear(&self.rhs_internal(z))?;
        Ok(self.reconstruct(&x, z))
    }

    /// `Q z = (eps(u_0), D_0)` from the solve with vanishing loads.
    pub fn project_q(&self, z: &CellField) -> Result<CellField> {
        Ok(self.zero_load_solve(z)?.strain_d())
    }

    /// `M z = D (I - Q) z = -(sigma_0, E_0)`.
    pub fn apply_m(&self, z: &CellField) -> Result<CellField> {
        Ok(self.zero_load_solve(z)?.sigma_e().scale(-1.0))
    }

    /// `z_hat = (sigma_B, E_B)` from the solve with vanishing internal variable.
    pub fn load_trace(&self, loads: &NodalLoads) -> Result<CellField> {
        let z0 = CellField::zeros(self.grid.ncells(), self.internal_dim());
        Ok(self.solve_bvp(&z0, loads)?.sigma_e())
    }

    /// Cellwise `D z`.
    pub fn apply_block_d(&self, z: &CellField) -> CellField {
        let m = &self.block_d.matrix;
        CellField::from_fn(z.ncells(), z.width, |c| {
            (m * DVector::from_column_slice(z.cell(c))).as_slice().to_vec()
        })
    }

    /// `[a, b]_D = sum_c |c| <D a_c, b_c>`
    pub fn d_inner(&self, a: &CellField, b: &CellField) -> f64 {
        self.apply_block_d(a).dot(b, &self.grid.cell_measures())
    }

    /// Ratio `(|u| + |phi|) / (|r| + |P| + |b| + |q|)` in grid-L2 norms: the measured constant
    /// of the discrete stability estimate for one data set.
    pub fn stability_ratio(&self, z: &CellField, loads: &NodalLoads) -> Result<f64> {
        let fs = self.solve_bvp(z, loads)?;
        let m = self.grid.cell_measures();
        let ks = self.tensors.sym_dim();
        let d = self.grid.dim;
        let r = CellField::from_fn(z.ncells(), ks, |c| z.cell(c)[..ks].to_vec());
        let p = CellField::from_fn(z.ncells(), d, |c| z.cell(c)[ks..].to_vec());
        let num = nodal_lp_norm(&self.grid, &fs.u, d, 2.0) + nodal_lp_norm(&self.grid, &fs.phi, 1, 2.0);
        let den = r.lp_norm(2.0, &m)
            + p.lp_norm(2.0, &m)
            + nodal_lp_norm(&self.grid, &loads.b, d, 2.0)
            + nodal_lp_norm(&self.grid, &loads.q, 1, 2.0);
        Ok(if den == 0.0 { 0.0 } else { num / den })
    }
}

/// Averaged gradient operator of one cell. Corner `s` contributes to the mean of `d_i` with
/// weight `(2 s_i - 1) / (h_i 2^{d-1})`.
fn local_gradient(grid: &Grid) -> DMatrix<f64> {
    let d = grid.dim;
    let ks = d * (d + 1) / 2;
    let ncorner = 1usize << d;
    let scale = (1usize << (d - 1)) as f64;
    let mut b = DMatrix::zeros(ks + d, ncorner * (d + 1));
    let pairs = sym_pairs(d);
    for s in 0..ncorner {
        let gw: Vec<f64> = (0..d)
            .map(|i| (2.0 * ((s >> i) & 1) as f64 - 1.0) / (grid.h[i] * scale))
            .collect();
        let col = |comp: usize| s * (d + 1) + comp;
        for (a, &(i, j)) in pairs.iter().enumerate() {
            if i == j {
                b[(a, col(i))] += gw[i];
            } else {
                b[(a, col(j))] += gw[i] / std::f64::consts::SQRT_2;
                b[(a, col(i))] += gw[j] / std::f64::consts::SQRT_2;
            }
        }
        for i in 0..d {
            b[(ks + i, col(d))] = gw[i];
        }
    }
    b
}

/// Assembles and factorizes the stiffness operator.
pub fn assemble(grid: &Grid, tensors: &MaterialTensors) -> Result<AssembledSystem> {
    if grid.dim != tensors.dim {
        return Err(Error::DimensionMismatch(format!(
            "grid dimension {} differs from tensor dimension {}",
            grid.dim, tensors.dim
        )));
    }
    let d = grid.dim;
    let ks = tensors.sym_dim();
    let k = ks + d;
    let block_a = assemble_block_a(tensors);
    let block_d = assemble_block_d(tensors);

    let mut node_dof = vec![NO_DOF; grid.nnodes()];
    let mut next = 0;
    for (v, slot) in node_dof.iter_mut().enumerate() {
        if !grid.is_boundary_node(v) {
            *slot = next;
            next += d + 1;
        }
    }
    let ndof = next;

    let local_grad = local_gradient(grid);
    let measure = grid.cell_measure();
    let local_k = local_grad.transpose() * &block_a.matrix * &local_grad * measure;
    let mut t = DMatrix::zeros(k, k);
    t.view_mut((0, 0), (ks, ks)).copy_from(&tensors.elastic);
    t.view_mut((ks, 0), (d, ks)).copy_from(&(-&tensors.coupling));
    t.view_mut((ks, ks), (d, d)).fill_with_identity();
    let local_z_rhs = local_grad.transpose() * t * measure;

    let mut partial = AssembledSystem {
        grid: grid.clone(),
        tensors: tensors.clone(),
        block_a,
        block_d,
        linear_tol: 1e-10,
        matrix: BandMatrix::zeros(0, 0),
        lu: BandMatrix::zeros(0, 0).factorize()?,
        node_dof,
        local_grad,
        local_z_rhs,
    };

    let mut bw = 0;
    for c in 0..grid.ncells() {
        let dofs: Vec<usize> = partial.local_dofs(c).into_iter().filter(|&g| g != NO_DOF).collect();
        if let (Some(lo), Some(hi)) = (dofs.iter().min(), dofs.iter().max()) {
            bw = bw.max(hi - lo);
        }
    }
    let mut matrix = BandMatrix::zeros(ndof, bw);
    for c in 0..grid.ncells() {
        let dofs = partial.local_dofs(c);
        for (li, &gi) in dofs.iter().enumerate() {
            if gi == NO_DOF {
                continue;
            }
            for (lj, &gj) in dofs.iter().enumerate() {
                if gj != NO_DOF {
                    matrix.add(gi, gj, local_k[(li, lj)]);
                }
            }
        }
    }
    partial.lu = matrix.factorize()?;
    partial.matrix = matrix;
    Ok(partial)
}
