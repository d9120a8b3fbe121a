//! Constant material tensors of linear piezoelectricity and the block operators built from them.
//!
//! Symmetric `d x d` tensors are stored in Mandel packing: the `d` diagonal entries first,
//! then the off-diagonal entries scaled by `sqrt(2)` in the order `(1,2),(0,2),(0,1)` for
//! `d = 3` and `(0,1)` for `d = 2`. With this packing the Frobenius product of two symmetric
//! tensors is the plain dot product of their packed vectors, so all block identities below hold
//! exactly as matrix identities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Number of packed components of a symmetric `dim x dim` tensor.
pub fn sym_dim(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index pairs `(i, j)` of the packed components, diagonal first.
pub fn sym_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..dim).map(|i| (i, i)).collect();
    match dim {
        2 => pairs.push((0, 1)),
        3 => pairs.extend([(1, 2), (0, 2), (0, 1)]),
        _ => {}
    }
    pairs
}

/// Packs a full symmetric matrix (row-major `dim*dim` slice) into Mandel form.
pub fn pack_sym(dim: usize, full: &[f64]) -> Vec<f64> {
    sym_pairs(dim)
        .into_iter()
        .map(|(i, j)| {
            if i == j {
                full[i * dim + i]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (full[i * dim + j] + full[j * dim + i])
            }
        })
        .collect()
}

/// Inverse of [`pack_sym`].
pub fn unpack_sym(dim: usize, packed: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; dim * dim];
    for (a, (i, j)) in sym_pairs(dim).into_iter().enumerate() {
        if i == j {
            full[i * dim + i] = packed[a];
        } else {
            let v = packed[a] / std::f64::consts::SQRT_2;
            full[i * dim + j] = v;
            full[j * dim + i] = v;
        }
    }
    full
}

#[derive(Clone, Debug, PartialEq)]
pub enum ElasticParams {
    /// Lamé pair.
    Isotropic { lambda: f64, mu: f64 },
    /// Packed `sym_dim x sym_dim` stiffness, row-major.
    Matrix(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DielectricParams {
    Diagonal(Vec<f64>),
    Matrix(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CouplingParams {
    Zero,
    /// Transversely isotropic coupling poled along the last coordinate axis.
    Poled { e31: f64, e33: f64, e15: f64 },
    /// Packed `dim x sym_dim` matrix, row-major.
    Matrix(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum HardeningParams {
    Zero,
    Isotropic(f64),
    /// `k x k` matrix on the internal-variable space, row-major.
    Matrix(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HardeningKind {
    Zero,
    Semidefinite,
    PositiveDefinite,
}

#[derive(Clone, Debug)]
pub struct MaterialTensors {
    pub dim: usize,
    pub elastic: DMatrix<f64>,
    pub dielectric: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub hardening: DMatrix<f64>,
    pub hardening_kind: HardeningKind,
    dielectric_inv: DMatrix<f64>,
}

fn matrix_from(rows: usize, cols: usize, data: &[f64], name: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{name}: expected {rows}x{cols} = {} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::DimensionMismatch(format!(
            "{name} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.max()
}

fn require_positive_definite(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let lmin = min_sym_eigenvalue(m);
    if !(lmin > 0.0) {
        return Err(Error::NonPositiveDefinite {
            tensor: name.to_string(),
            eigenvalue: lmin,
        });
    }
    Ok(())
}

fn isotropic_stiffness(dim: usize, lambda: f64, mu: f64) -> DMatrix<f64> {
    let ks = sym_dim(dim);
    let mut c = DMatrix::zeros(ks, ks);
    for i in 0..dim {
        for j in 0..dim {
            c[(i, j)] = lambda;
        }
        c[(i, i)] += 2.0 * mu;
    }
    for a in dim..ks {
        c[(a, a)] = 2.0 * mu;
    }
    c
}

fn poled_coupling(dim: usize, e31: f64, e33: f64, e15: f64) -> DMatrix<f64> {
    let mut n = vec![0.0; dim];
    n[dim - 1] = 1.0;
    let alpha = |i: usize, j: usize| (if i == j { 1.0 } else { 0.0 }) - n[i] * n[j];
    let full = |k: usize, i: usize, j: usize| {
        e33 * n[k] * n[i] * n[j]
            + e31 * n[k] * alpha(i, j)
            + 0.5 * e15 * (n[i] * alpha(j, k) + n[j] * alpha(i, k))
    };
    let pairs = sym_pairs(dim);
    let mut e = DMatrix::zeros(dim, pairs.len());
    for k in 0..dim {
        for (a, &(i, j)) in pairs.iter().enumerate() {
            e[(k, a)] = if i == j {
                full(k, i, i)
            } else {
                std::f64::consts::SQRT_2 * full(k, i, j)
            };
        }
    }
    e
}

impl MaterialTensors {
    /// Validates and stores the tensors. `coupling` is `dim x sym_dim`, `hardening` is `k x k`
    /// with `k = sym_dim + dim`.
    pub fn new(
        dim: usize,
        elastic: DMatrix<f64>,
        dielectric: DMatrix<f64>,
        coupling: DMatrix<f64>,
        hardening: DMatrix<f64>,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::DimensionMismatch(format!(
                "spatial dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        let ks = sym_dim(dim);
        let k = ks + dim;
        let shapes = [
            ("elastic", &elastic, ks, ks),
            ("dielectric", &dielectric, dim, dim),
            ("coupling", &coupling, dim, ks),
            ("hardening", &hardening, k, k),
        ];
        for (name, m, r, c) in shapes {
            if m.nrows() != r || m.ncols() != c {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: expected {r}x{c}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        check_symmetric(&elastic, "elastic")?;
        check_symmetric(&dielectric, "dielectric")?;
        check_symmetric(&hardening, "hardening")?;
        require_positive_definite(&elastic, "elastic")?;
        require_positive_definite(&dielectric, "dielectric")?;

        let hardening_kind = if hardening.amax() == 0.0 {
            HardeningKind::Zero
        } else {
            let lmin = min_sym_eigenvalue(&hardening);
            let scale = hardening.amax();
            if lmin > SYMMETRY_TOL * scale {
                HardeningKind::PositiveDefinite
            } else if lmin >= -SYMMETRY_TOL * scale {
                HardeningKind::Semidefinite
            } else {
                return Err(Error::NonPositiveDefinite {
                    tensor: "hardening".into(),
                    eigenvalue: lmin,
                });
            }
        };
        let dielectric_inv = dielectric
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NonPositiveDefinite {
                tensor: "dielectric".into(),
                eigenvalue: 0.0,
            })?;
        Ok(MaterialTensors {
            dim,
            elastic,
            dielectric,
            coupling,
            hardening,
            hardening_kind,
            dielectric_inv,
        })
    }

    pub fn sym_dim(&self) -> usize {
        sym_dim(self.dim)
    }

    /// Dimension `k` of the internal-variable space `S^d x R^d`.
    pub fn internal_dim(&self) -> usize {
        self.sym_dim() + self.dim
    }

    pub fn dielectric_inv(&self) -> &DMatrix<f64> {
        &self.dielectric_inv
    }

    /// Stress and electric displacement from the reversible strain `strain - r`, the electric
    /// field and the remanent polarization.
    pub fn constitutive(
        &self,
        reversible_strain: &[f64],
        e_field: &[f64],
        polarization: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let a = DVector::from_column_slice(reversible_strain);
        let ef = DVector::from_column_slice(e_field);
        let sigma = &self.elastic * &a - self.coupling.transpose() * &ef;
        let disp = &self.coupling * &a + &self.dielectric * &ef + DVector::from_column_slice(polarization);
        (sigma.as_slice().to_vec(), disp.as_slice().to_vec())
    }
}

/// Builds validated tensors from parameter sets.
pub fn make_tensors(
    dim: usize,
    elastic: &ElasticParams,
    dielectric: &DielectricParams,
    coupling: &CouplingParams,
    hardening: &HardeningParams,
) -> Result<MaterialTensors> {
    if !(1..=3).contains(&dim) {
        return Err(Error::DimensionMismatch(format!(
            "spatial dimension must be 1, 2 or 3, got {dim}"
        )));
    }
    let ks = sym_dim(dim);
    let k = ks + dim;
    let c = match elastic {
        ElasticParams::Isotropic { lambda, mu } => isotropic_stiffness(dim, *lambda, *mu),
        ElasticParams::Matrix(v) => matrix_from(ks, ks, v, "elastic")?,
    };
    let eps = match dielectric {
        DielectricParams::Diagonal(v) => {
            if v.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "dielectric: expected {dim} diagonal entries, got {}",
                    v.len()
                )));
            }
            DMatrix::from_diagonal(&DVector::from_column_slice(v))
        }
        DielectricParams::Matrix(v) => matrix_from(dim, dim, v, "dielectric")?,
    };
    let e = match coupling {
        CouplingParams::Zero => DMatrix::zeros(dim, ks),
        CouplingParams::Poled { e31, e33, e15 } => poled_coupling(dim, *e31, *e33, *e15),
        CouplingParams::Matrix(v) => matrix_from(dim, ks, v, "coupling")?,
    };
    let l = match hardening {
        HardeningParams::Zero => DMatrix::zeros(k, k),
        HardeningParams::Isotropic(s) => DMatrix::identity(k, k) * *s,
        HardeningParams::Matrix(v) => matrix_from(k, k, v, "hardening")?,
    };
    MaterialTensors::new(dim, c, eps, e, l)
}

/// The operator `[[C, e^T], [-e, eps]]` acting on (packed strain, potential gradient) pairs.
#[derive(Clone, Debug)]
pub struct BlockOperatorA {
    pub matrix: DMatrix<f64>,
    /// Ellipticity constant: smallest eigenvalue of the symmetric part.
    pub c0: f64,
}

pub fn assemble_block_a(t: &MaterialTensors) -> BlockOperatorA {
    let ks = t.sym_dim();
    let d = t.dim;
    let mut a = DMatrix::zeros(ks + d, ks + d);
    a.view_mut((0, 0), (ks, ks)).copy_from(&t.elastic);
    a.view_mut((0, ks), (ks, d)).copy_from(&t.coupling.transpose());
    a.view_mut((ks, 0), (d, ks)).copy_from(&(-&t.coupling));
    a.view_mut((ks, ks), (d, d)).copy_from(&t.dielectric);
    let c0 = min_sym_eigenvalue(&a);
    BlockOperatorA { matrix: a, c0 }
}

/// The operator mapping `(strain - r, D - P)` to `(sigma, E)`.
#[derive(Clone, Debug)]
pub struct BlockOperatorD {
    pub matrix: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn assemble_block_d(t: &MaterialTensors) -> BlockOperatorD {
    let ks = t.sym_dim();
    let d = t.dim;
    let e = &t.coupling;
    let eps_inv = t.dielectric_inv();
    let et_epsinv = e.transpose() * eps_inv;
    let mut m = DMatrix::zeros(ks + d, ks + d);
    m.view_mut((0, 0), (ks, ks))
        .copy_from(&(&t.elastic + &et_epsinv * e));
    m.view_mut((0, ks), (ks, d)).copy_from(&(-&et_epsinv));
    m.view_mut((ks, 0), (d, ks)).copy_from(&(-(eps_inv * e)));
    m.view_mut((ks, ks), (d, d)).copy_from(eps_inv);
    // exact symmetry; the blocks above are transposes of each other up to rounding
    let m = (&m + m.transpose()) * 0.5;

    let eig = SymmetricEigen::new(m.clone());
    let lambda_min = eig.eigenvalues.min();
    let lambda_max = eig.eigenvalues.max();
    let q = &eig.eigenvectors;
    let spectral = |f: &dyn Fn(f64) -> f64| {
        let diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
        q * diag * q.transpose()
    };
    BlockOperatorD {
        sqrt: spectral(&|x| x.sqrt()),
        inv_sqrt: spectral(&|x| 1.0 / x.sqrt()),
        inverse: spectral(&|x| 1.0 / x),
        matrix: m,
        lambda_min,
        lambda_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_tensors(c: f64, eps: f64, e: f64) -> MaterialTensors {
        make_tensors(
            1,
            &ElasticParams::Matrix(vec![c]),
            &DielectricParams::Diagonal(vec![eps]),
            &CouplingParams::Matrix(vec![e]),
            &HardeningParams::Zero,
        )
        .unwrap()
    }

    fn random_tensors(rng: &mut ChaCha8Rng, dim: usize) -> MaterialTensors {
        let ks = sym_dim(dim);
        let b = DMatrix::from_fn(ks, ks, |_, _| rng.gen_range(-1.0..1.0));
        let c = &b * b.transpose() + DMatrix::identity(ks, ks);
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let eps = &b * b.transpose() + DMatrix::identity(dim, dim) * 0.5;
        let e: Vec<f64> = (0..dim * ks).map(|_| rng.gen_range(-2.0..2.0)).collect();
        make_tensors(
            dim,
            &ElasticParams::Matrix(c.transpose().as_slice().to_vec()),
            &DielectricParams::Matrix(eps.transpose().as_slice().to_vec()),
            &CouplingParams::Matrix(e),
            &HardeningParams::Zero,
        )
        .unwrap()
    }

    #[test]
    fn packing_preserves_frobenius_product() {
        let a = [1.0, 2.0, 3.0, 2.0, 5.0, -1.0, 3.0, -1.0, 4.0];
        let b = [0.5, -1.0, 2.0, -1.0, 1.0, 0.25, 2.0, 0.25, -3.0];
        let frob: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let pa = pack_sym(3, &a);
        let pb = pack_sym(3, &b);
        let dot: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
        assert_relative_eq!(frob, dot, epsilon = 1e-13);
        assert_eq!(unpack_sym(3, &pa), a.to_vec());
    }

    #[test]
    fn identity_coefficients_in_one_dimension() {
        let t = scalar_tensors(1.0, 1.0, 0.0);
        assert_eq!(t.hardening_kind, HardeningKind::Zero);
        let a = assemble_block_a(&t);
        assert_relative_eq!(a.c0, 1.0, epsilon = 1e-14);
        let d = assemble_block_d(&t);
        assert_relative_eq!(d.lambda_min, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn isotropic_smallest_eigenvalue_is_two_mu() {
        let t = make_tensors(
            2,
            &ElasticParams::Isotropic { lambda: 1.0, mu: 1.0 },
            &DielectricParams::Diagonal(vec![2.0, 2.0]),
            &CouplingParams::Zero,
            &HardeningParams::Zero,
        )
        .unwrap();
        // Voigt/Mandel matrix [[3,1,0],[1,3,0],[0,0,2]]: eigenvalues 2, 2, 4
        assert_relative_eq!(min_sym_eigenvalue(&t.elastic), 2.0, epsilon = 1e-13);
        assert_relative_eq!(max_sym_eigenvalue(&t.elastic), 4.0, epsilon = 1e-13);
    }

    #[test]
    fn indefinite_dielectric_is_rejected() {
        let err = make_tensors(
            2,
            &ElasticParams::Isotropic { lambda: 1.0, mu: 1.0 },
            &DielectricParams::Diagonal(vec![1.0, -1.0]),
            &CouplingParams::Zero,
            &HardeningParams::Zero,
        )
        .unwrap_err();
        match err {
            Error::NonPositiveDefinite { tensor, eigenvalue } => {
                assert_eq!(tensor, "dielectric");
                assert_relative_eq!(eigenvalue, -1.0, epsilon = 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_hardening_is_rejected() {
        let err = make_tensors(
            1,
            &ElasticParams::Matrix(vec![1.0]),
            &DielectricParams::Diagonal(vec![1.0]),
            &CouplingParams::Zero,
            &HardeningParams::Isotropic(-0.5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveDefinite { .. }));
    }

    #[test]
    fn hardening_kind_flags() {
        let semidef = make_tensors(
            1,
            &ElasticParams::Matrix(vec![1.0]),
            &DielectricParams::Diagonal(vec![1.0]),
            &CouplingParams::Zero,
            &HardeningParams::Matrix(vec![1.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(semidef.hardening_kind, HardeningKind::Semidefinite);
        let pd = make_tensors(
            1,
            &ElasticParams::Matrix(vec![1.0]),
            &DielectricParams::Diagonal(vec![1.0]),
            &CouplingParams::Zero,
            &HardeningParams::Isotropic(0.3),
        )
        .unwrap();
        assert_eq!(pd.hardening_kind, HardeningKind::PositiveDefinite);
    }

    #[test]
    fn decoupled_block_a_is_block_diagonal() {
        let t = make_tensors(
            2,
            &ElasticParams::Isotropic { lambda: 0.5, mu: 0.75 },
            &DielectricParams::Diagonal(vec![0.8, 1.7]),
            &CouplingParams::Zero,
            &HardeningParams::Zero,
        )
        .unwrap();
        let a = assemble_block_a(&t);
        assert_eq!(a.matrix.view((0, 3), (3, 2)).amax(), 0.0);
        assert_eq!(a.matrix.view((3, 0), (2, 3)).amax(), 0.0);
        let expected = min_sym_eigenvalue(&t.elastic).min(0.8);
        assert_relative_eq!(a.c0, expected, epsilon = 1e-13);
    }

    #[test]
    fn coupling_cancels_in_quadratic_form() {
        let t = scalar_tensors(2.0, 3.0, 5.0);
        let a = assemble_block_a(&t);
        assert_relative_eq!(a.c0, 2.0, epsilon = 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let eta = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let q = eta.dot(&(&a.matrix * &eta));
            assert_relative_eq!(q, 2.0 * eta[0] * eta[0] + 3.0 * eta[1] * eta[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn ellipticity_constant_ignores_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let t = random_tensors(&mut rng, 2);
            let a = assemble_block_a(&t);
            let mut decoupled = t.clone();
            decoupled.coupling.fill(0.0);
            let a0 = assemble_block_a(&decoupled);
            assert!((a.c0 - a0.c0).abs() <= 1e-12 * a0.c0.abs().max(1.0));
            assert!(a.c0 > 0.0);
            // random unit probes never fall below c0
            for _ in 0..1000 {
                let mut eta = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
                eta /= eta.norm();
                assert!(eta.dot(&(&a.matrix * &eta)) >= a.c0 - 1e-12);
            }
        }
    }

    #[test]
    fn block_d_decoupled_is_diagonal() {
        let t = scalar_tensors(1.7, 0.4, 0.0);
        let d = assemble_block_d(&t);
        assert_relative_eq!(d.matrix[(0, 0)], 1.7, epsilon = 1e-14);
        assert_relative_eq!(d.matrix[(1, 1)], 2.5, epsilon = 1e-14);
        assert_eq!(d.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn block_d_unit_coupling() {
        let t = scalar_tensors(1.0, 1.0, 1.0);
        let d = assemble_block_d(&t);
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]);
        assert_relative_eq!(d.matrix, expected, epsilon = 1e-14);
        let s5 = 5f64.sqrt();
        assert_relative_eq!(d.lambda_min, (3.0 - s5) / 2.0, epsilon = 1e-13);
        assert_relative_eq!(d.lambda_max, (3.0 + s5) / 2.0, epsilon = 1e-13);
        assert_relative_eq!(&d.sqrt * &d.sqrt, d.matrix.clone(), epsilon = 1e-13);
        assert_relative_eq!(
            &d.inv_sqrt * &d.matrix * &d.inv_sqrt,
            DMatrix::identity(2, 2),
            epsilon = 1e-13
        );
    }

    #[test]
    fn block_d_symmetric_positive_definite_on_random_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in 1..=3 {
            let t = random_tensors(&mut rng, dim);
            let d = assemble_block_d(&t);
            assert!(d.lambda_min > 0.0);
            let k = t.internal_dim();
            for _ in 0..50 {
                let a = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
                let b = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
                let lhs = (&d.matrix * &a).dot(&b);
                let rhs = a.dot(&(&d.matrix * &b));
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn block_d_reproduces_piezoelectric_constitutive_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dim in 1..=3 {
            let t = random_tensors(&mut rng, dim);
            let d = assemble_block_d(&t);
            let ks = t.sym_dim();
            for _ in 0..50 {
                let a: Vec<f64> = (0..ks).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // invert D - P = e a + eps E for E, then evaluate sigma from the stress law
                let rhs = DVector::from_column_slice(&b) - &t.coupling * DVector::from_column_slice(&a);
                let ef = t.dielectric.clone().lu().solve(&rhs).unwrap();
                let (sigma, disp) = t.constitutive(&a, ef.as_slice(), &vec![0.0; dim]);
                for i in 0..dim {
                    assert!((disp[i] - b[i]).abs() < 1e-12);
                }
                let mut ab = a.clone();
                ab.extend_from_slice(&b);
                let via_d = &d.matrix * DVector::from_vec(ab);
                let scale = via_d.amax().max(1.0);
                for i in 0..ks {
                    assert!((via_d[i] - sigma[i]).abs() <= 1e-12 * scale);
                }
                for i in 0..dim {
                    assert!((via_d[ks + i] - ef[i]).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn poled_coupling_in_one_dimension_is_e33() {
        let t = make_tensors(
            1,
            &ElasticParams::Isotropic { lambda: 1.0, mu: 1.0 },
            &DielectricParams::Diagonal(vec![1.0]),
            &CouplingParams::Poled { e31: -0.3, e33: 0.7, e15: 0.2 },
            &HardeningParams::Zero,
        )
        .unwrap();
        assert_relative_eq!(t.coupling[(0, 0)], 0.7);
    }
}
