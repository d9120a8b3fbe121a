//! Convex potentials: the dissipation potential `g`, the remanent energy `f`, their conjugates,
//! proximal maps and Young–Fenchel residuals.
//!
//! Every potential is a function on the internal-variable space `S^d x R^d` (packed, length
//! `k`). The logarithmic saturation families read only the polarization block (the last `d`
//! entries).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Violation};
use crate::field::{dot, norm, CellField};
use crate::material::{min_sym_eigenvalue, sym_dim};

/// Iterates of the saturation families are kept inside `|P| <= (1 - SATURATION_CLAMP) P_s`.
pub const SATURATION_CLAMP: f64 = 1e-9;
const MAX_SCALAR_ITERS: usize = 200;
const MAX_SPLITTING_ITERS: usize = 20_000;
const SERIES_CUTOFF: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `c |v|^p`
    PowerLaw { c: f64, p: f64 },
    /// Indicator of the closed ball of radius `kappa`.
    BallIndicator { kappa: f64 },
    LogSaturationRadial { ps: f64 },
    LogSaturationDirectional { ps: f64, a: Vec<f64> },
    /// `1/2 <H z, z>`
    Quadratic { h: DMatrix<f64> },
    Sum(Vec<PotentialSpec>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActsOn {
    Full,
    Polarization,
}

/// Two-sided power growth of `g` and the induced lower bound on `g*`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthConstants {
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub d1: f64,
    pub d2: f64,
    pub empirical: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coercivity {
    /// `f(P) >= a1 |P|^2 - a2`
    Polarization { a1: f64, a2: f64 },
    /// `f(z) >= b1 |z|^q - b2`
    Full { b1: f64, b2: f64, exponent: f64 },
    /// A direction along which `f` stays bounded.
    Fails { witness: Vec<f64> },
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    pub family: Family,
    pub acts_on: ActsOn,
    /// Spatial dimension `d`.
    pub dim: usize,
    pub growth: Option<GrowthConstants>,
    pub coercivity: Coercivity,
}

fn invalid(field: &str, rule: &str) -> Error {
    Error::Validation(vec![Violation::new(field, rule)])
}

/// Constant of the closed-form conjugate `c*(p) |w|^{p*}` of `c |v|^p`.
pub fn power_conjugate_constant(c: f64, p: f64) -> f64 {
    let ps = p / (p - 1.0);
    (c * p).powf(1.0 - ps) / ps
}

/// Root of an increasing function on `[lo, hi]` by Newton steps safeguarded with bisection.
fn monotone_root(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    what: &str,
) -> Result<f64> {
    let (flo, _) = f(lo);
    if flo >= 0.0 {
        return Ok(lo);
    }
    let (fhi, _) = f(hi);
    if fhi <= 0.0 {
        return Ok(hi);
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..MAX_SCALAR_ITERS {
        let (ft, dft) = f(t);
        if ft == 0.0 {
            return Ok(t);
        }
        if ft < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = if dft > 0.0 && dft.is_finite() { t - ft / dft } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let scale = 1.0 + next.abs();
        if (next - t).abs() <= 1e-15 * scale || hi - lo <= 4.0 * f64::EPSILON * scale {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::NoConvergence {
        what: what.to_string(),
        iterations: MAX_SCALAR_ITERS,
    })
}

/// `-(ln(1-x) + x)` for `0 <= x < 1`.
fn neg_log_minus_linear(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        let mut sum = 0.0;
        let mut pow = x * x;
        for k in 2..14 {
            sum += pow / k as f64;
            pow *= x;
        }
        sum
    } else {
        -(f64::ln_1p(-x) + x)
    }
}

/// `(1+x) ln(1+x) + (1-x) ln(1-x)` for `|x| < 1`.
fn entropy_pair(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_CUTOFF {
        let x2 = x * x;
        let mut pow = x2;
        let mut sum = 0.0;
        for k in 1..8 {
            let kf = k as f64;
            sum += pow / (kf * (2.0 * kf - 1.0));
            pow *= x2;
        }
        sum
    } else {
        (1.0 + ax) * f64::ln_1p(ax) + (1.0 - ax) * f64::ln_1p(-ax)
    }
}

impl PotentialSpec {
    pub fn power_law(dim: usize, c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid("c", "must be > 0"));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(invalid("p", "must satisfy 2 <= p < inf"));
        }
        let d1 = power_conjugate_constant(c, p);
        Ok(PotentialSpec {
            family: Family::PowerLaw { c, p },
            acts_on: ActsOn::Full,
            dim,
            growth: Some(GrowthConstants {
                p,
                c1: c,
                c2: 0.0,
                c3: c,
                c4: 0.0,
                d1,
                d2: 0.0,
                empirical: false,
            }),
            coercivity: Coercivity::Full {
                b1: c,
                b2: 0.0,
                exponent: p,
            },
        })
    }

    pub fn ball(dim: usize, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(invalid("kappa", "must be > 0"));
        }
        Ok(PotentialSpec {
            family: Family::BallIndicator { kappa },
            acts_on: ActsOn::Full,
            dim,
            growth: None,
            coercivity: Coercivity::NotApplicable,
        })
    }

    pub fn log_radial(dim: usize, ps: f64) -> Result<Self> {
        if !(ps > 0.0) || !ps.is_finite() {
            return Err(invalid("ps", "must be > 0"));
        }
        // -ln(1-x) - x = sum_{k>=2} x^k / k >= x^2 / 2
        Ok(PotentialSpec {
            family: Family::LogSaturationRadial { ps },
            acts_on: ActsOn::Polarization,
            dim,
            growth: None,
            coercivity: Coercivity::Polarization { a1: 0.5, a2: 0.0 },
        })
    }

    pub fn log_directional(dim: usize, ps: f64, a: Vec<f64>) -> Result<Self> {
        if !(ps > 0.0) || !ps.is_finite() {
            return Err(invalid("ps", "must be > 0"));
        }
        if a.len() != dim {
            return Err(invalid("direction", &format!("must have {dim} components")));
        }
        if (norm(&a) - 1.0).abs() > 1e-12 {
            return Err(invalid("direction", "must have unit length"));
        }
        let coercivity = if dim == 1 {
            // second derivative 1/(P_s (1 - x^2)) >= 1/P_s along the only direction
            Coercivity::Polarization {
                a1: 0.5 / ps,
                a2: 0.0,
            }
        } else {
            let j = (0..dim)
                .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
                .unwrap();
            let mut w: Vec<f64> = a.iter().map(|ai| -a[j] * ai).collect();
            w[j] += 1.0;
            let n = norm(&w);
            w.iter_mut().for_each(|x| *x /= n);
            Coercivity::Fails { witness: w }
        };
        Ok(PotentialSpec {
            family: Family::LogSaturationDirectional { ps, a },
            acts_on: ActsOn::Polarization,
            dim,
            growth: None,
            coercivity,
        })
    }

    /// `h` is `k x k` symmetric positive semidefinite.
    pub fn quadratic(dim: usize, h: DMatrix<f64>) -> Result<Self> {
        let k = sym_dim(dim) + dim;
        if h.nrows() != k || h.ncols() != k {
            return Err(invalid("h", &format!("must be {k}x{k}")));
        }
        let scale = h.amax().max(f64::MIN_POSITIVE);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return Err(invalid("h", "must be symmetric"));
        }
        let lmin = min_sym_eigenvalue(&h);
        if lmin < -1e-12 * scale {
            return Err(invalid("h", "must be positive semidefinite"));
        }
        let coercivity = if lmin > 1e-12 * scale {
            Coercivity::Full {
                b1: 0.5 * lmin,
                b2: 0.0,
                exponent: 2.0,
            }
        } else {
            let eig = nalgebra::SymmetricEigen::new(h.clone());
            let i = eig.eigenvalues.imin();
            Coercivity::Fails {
                witness: eig.eigenvectors.column(i).iter().copied().collect(),
            }
        };
        Ok(PotentialSpec {
            family: Family::Quadratic { h },
            acts_on: ActsOn::Full,
            dim,
            growth: None,
            coercivity,
        })
    }

    pub fn sum(parts: Vec<PotentialSpec>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(invalid("parts", "must not be empty"));
        };
        let dim = first.dim;
        if parts.iter().any(|s| s.dim != dim) {
            return Err(invalid("parts", "must share one spatial dimension"));
        }
        // all families are nonnegative, so any coercive summand makes the sum coercive
        let coercivity = parts
            .iter()
            .map(|s| s.coercivity.clone())
            .find(|c| matches!(c, Coercivity::Polarization { .. } | Coercivity::Full { .. }))
            .unwrap_or(Coercivity::NotApplicable);
        Ok(PotentialSpec {
            family: Family::Sum(parts),
            acts_on: ActsOn::Full,
            dim,
            growth: None,
            coercivity,
        })
    }

    pub fn internal_dim(&self) -> usize {
        sym_dim(self.dim) + self.dim
    }

    /// True for the families usable as a dissipation potential.
    pub fn is_dissipation(&self) -> bool {
        matches!(
            self.family,
            Family::PowerLaw { .. } | Family::BallIndicator { .. }
        )
    }

    pub fn is_energy(&self) -> bool {
        match &self.family {
            Family::LogSaturationRadial { .. }
            | Family::LogSaturationDirectional { .. }
            | Family::Quadratic { .. } => true,
            Family::Sum(parts) => parts.iter().all(|s| s.is_energy()),
            _ => false,
        }
    }

    /// Whether `f` satisfies the coercivity needed without hardening, given the growth exponent
    /// of `g`.
    pub fn coercive_for(&self, p: f64) -> bool {
        match &self.coercivity {
            Coercivity::Polarization { .. } => true,
            Coercivity::Full { exponent, .. } => *exponent >= p,
            _ => false,
        }
    }

    fn block<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        match self.acts_on {
            ActsOn::Full => z,
            ActsOn::Polarization => &z[z.len() - self.dim..],
        }
    }

    fn embed(&self, z: &[f64], block: Vec<f64>) -> Vec<f64> {
        match self.acts_on {
            ActsOn::Full => block,
            ActsOn::Polarization => {
                let mut out = z.to_vec();
                let off = z.len() - self.dim;
                out[off..].copy_from_slice(&block);
                out
            }
        }
    }

    /// Value on the extended reals; `+inf` outside the domain.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let v = self.block(z);
        match &self.family {
            Family::PowerLaw { c, p } => c * norm(v).powf(*p),
            Family::BallIndicator { kappa } => {
                if norm(v) <= kappa * (1.0 + 1e-12) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Family::LogSaturationRadial { ps } => {
                let x = norm(v) / ps;
                if x >= 1.0 {
                    f64::INFINITY
                } else {
                    ps * ps * neg_log_minus_linear(x)
                }
            }
            Family::LogSaturationDirectional { ps, a } => {
                let x = dot(v, a) / ps;
                if x.abs() >= 1.0 {
                    f64::INFINITY
                } else {
                    0.5 * ps * entropy_pair(x)
                }
            }
            Family::Quadratic { h } => {
                let zv = DVector::from_column_slice(v);
                0.5 * zv.dot(&(h * &zv))
            }
            Family::Sum(parts) => parts.iter().map(|s| s.eval(z)).sum(),
        }
    }

    /// Distance from the argument to the boundary of the domain (`+inf` for full domains).
    pub fn domain_margin(&self, z: &[f64]) -> f64 {
        let v = self.block(z);
        match &self.family {
            Family::BallIndicator { kappa } => kappa - norm(v),
            Family::LogSaturationRadial { ps } => ps - norm(v),
            Family::LogSaturationDirectional { ps, a } => ps - dot(v, a).abs(),
            Family::Sum(parts) => parts
                .iter()
                .map(|s| s.domain_margin(z))
                .fold(f64::INFINITY, f64::min),
            _ => f64::INFINITY,
        }
    }

    /// Euclidean projection onto the (closed) domain; identity for full-space domains.
    pub fn project_domain(&self, z: &[f64]) -> Vec<f64> {
        match &self.family {
            Family::BallIndicator { kappa } => {
                let n = norm(z);
                if n <= *kappa {
                    z.to_vec()
                } else {
                    z.iter().map(|x| x * kappa / n).collect()
                }
            }
            _ => z.to_vec(),
        }
    }

    pub fn grad(&self, z: &[f64]) -> Result<Vec<f64>> {
        let v = self.block(z);
        let g = match &self.family {
            Family::PowerLaw { c, p } => {
                let n = norm(v);
                if n == 0.0 {
                    vec![0.0; v.len()]
                } else {
                    let s = c * p * n.powf(p - 2.0);
                    v.iter().map(|x| s * x).collect()
                }
            }
            Family::BallIndicator { kappa } => {
                if norm(v) < *kappa {
                    vec![0.0; v.len()]
                } else {
                    return Err(Error::OutsideDomain(format!(
                        "indicator gradient requested at |v| = {} >= {kappa}",
                        norm(v)
                    )));
                }
            }
            Family::LogSaturationRadial { ps } => {
                let r = norm(v);
                if r >= *ps {
                    return Err(Error::OutsideDomain(format!(
                        "|P| = {r} reaches the saturation bound {ps}"
                    )));
                }
                let s = ps / (ps - r);
                v.iter().map(|x| s * x).collect()
            }
            Family::LogSaturationDirectional { ps, a } => {
                let x = dot(v, a) / ps;
                if x.abs() >= 1.0 {
                    return Err(Error::OutsideDomain(format!(
                        "(P, a) = {} reaches the saturation bound {ps}",
                        x * ps
                    )));
                }
                let s = x.atanh();
                a.iter().map(|ai| s * ai).collect()
            }
            Family::Quadratic { h } => {
                let zv = DVector::from_column_slice(v);
                (h * zv).as_slice().to_vec()
            }
            Family::Sum(parts) => {
                let mut acc = vec![0.0; z.len()];
                for s in parts {
                    for (a, b) in acc.iter_mut().zip(s.grad(z)?) {
                        *a += b;
                    }
                }
                return Ok(acc);
            }
        };
        Ok(match self.acts_on {
            ActsOn::Full => g,
            ActsOn::Polarization => {
                let mut out = vec![0.0; z.len()];
                let off = z.len() - self.dim;
                out[off..].copy_from_slice(&g);
                out
            }
        })
    }

    /// Legendre–Fenchel conjugate of a dissipation potential.
    pub fn conjugate_eval(&self, w: &[f64]) -> Result<f64> {
        match &self.family {
            Family::PowerLaw { c, p } => {
                let ps = p / (p - 1.0);
                Ok(power_conjugate_constant(*c, *p) * norm(w).powf(ps))
            }
            Family::BallIndicator { kappa } => Ok(kappa * norm(w)),
            _ => Err(Error::UnsupportedFamily(
                "conjugates are only available for dissipation potentials".into(),
            )),
        }
    }

    /// `argmin_x spec(x) + |x - v|^2 / (2 lambda)`
    pub fn prox(&self, lambda: f64, z: &[f64]) -> Result<Vec<f64>> {
        assert!(lambda > 0.0, "prox parameter must be positive");
        let v = self.block(z);
        let out = match &self.family {
            Family::PowerLaw { c, p } => {
                let r0 = norm(v);
                if r0 == 0.0 {
                    return Ok(self.embed(z, vec![0.0; v.len()]));
                }
                let t = if *p == 2.0 {
                    r0 / (1.0 + 2.0 * c * lambda)
                } else {
                    let k = lambda * c * p;
                    monotone_root(
                        |t| (t + k * t.powf(p - 1.0) - r0, 1.0 + k * (p - 1.0) * t.powf(p - 2.0)),
                        0.0,
                        r0,
                        "power-law prox",
                    )?
                };
                v.iter().map(|x| x * t / r0).collect()
            }
            Family::BallIndicator { .. } => self.project_domain(v),
            Family::LogSaturationRadial { ps } => {
                let r0 = norm(v);
                if r0 == 0.0 {
                    return Ok(z.to_vec());
                }
                // smaller root of r^2 - B r + r0 P_s = 0
                let b = ps * (1.0 + lambda) + r0;
                let disc = (b * b - 4.0 * r0 * ps).max(0.0);
                let r = (2.0 * r0 * ps / (b + disc.sqrt())).min((1.0 - SATURATION_CLAMP) * ps);
                v.iter().map(|x| x * r / r0).collect()
            }
            Family::LogSaturationDirectional { ps, a } => {
                let s0 = dot(v, a);
                let bound = (1.0 - SATURATION_CLAMP) * ps;
                let (lo, hi) = if s0 >= 0.0 {
                    (0.0, s0.min(bound))
                } else {
                    (s0.max(-bound), 0.0)
                };
                let s = monotone_root(
                    |s| {
                        let x = s / ps;
                        (s + lambda * x.atanh() - s0, 1.0 + lambda / (ps * (1.0 - x * x)))
                    },
                    lo,
                    hi,
                    "directional saturation prox",
                )?;
                v.iter().zip(a).map(|(x, ai)| x + (s - s0) * ai).collect()
            }
            Family::Quadratic { h } => {
                let n = h.nrows();
                let m = DMatrix::identity(n, n) + h * lambda;
                let x = m
                    .cholesky()
                    .expect("I + lambda H is positive definite")
                    .solve(&DVector::from_column_slice(v));
                x.as_slice().to_vec()
            }
            Family::Sum(parts) => return prox_sum(parts, lambda, z),
        };
        Ok(self.embed(z, out))
    }

    /// `argmin_x spec*(x) + |x - w|^2 / (2 lambda)`, computed directly from the conjugate.
    pub fn prox_conjugate(&self, lambda: f64, w: &[f64]) -> Result<Vec<f64>> {
        assert!(lambda > 0.0, "prox parameter must be positive");
        match &self.family {
            Family::PowerLaw { c, p } => {
                let r0 = norm(w);
                if r0 == 0.0 {
                    return Ok(vec![0.0; w.len()]);
                }
                let q = p / (p - 1.0);
                let k = lambda * q * power_conjugate_constant(*c, *p);
                let t = if q == 2.0 {
                    r0 / (1.0 + k)
                } else {
                    monotone_root(
                        |t| (t + k * t.powf(q - 1.0) - r0, 1.0 + k * (q - 1.0) * t.powf(q - 2.0)),
                        0.0,
                        r0,
                        "power-law conjugate prox",
                    )?
                };
                Ok(w.iter().map(|x| x * t / r0).collect())
            }
            Family::BallIndicator { kappa } => {
                let r0 = norm(w);
                let s = if r0 == 0.0 {
                    0.0
                } else {
                    (1.0 - lambda * kappa / r0).max(0.0)
                };
                Ok(w.iter().map(|x| x * s).collect())
            }
            _ => Err(Error::UnsupportedFamily(
                "conjugate prox is only available for dissipation potentials".into(),
            )),
        }
    }
}

/// Prox of a sum by parallel Douglas–Rachford splitting over the summands.
fn prox_sum(parts: &[PotentialSpec], lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
    if parts.len() == 1 {
        return parts[0].prox(lambda, v);
    }
    let n = parts.len() as f64;
    // each summand carries |x - v|^2 / (2 lambda n); gamma = lambda gives mu = lambda n / 2
    let gamma = lambda;
    let mu = 1.0 / (1.0 / (lambda * n) + 1.0 / (gamma * n));
    let mut ys: Vec<Vec<f64>> = vec![v.to_vec(); parts.len()];
    let mut x = v.to_vec();
    for _ in 0..MAX_SPLITTING_ITERS {
        let mut ps = Vec::with_capacity(parts.len());
        for (s, y) in parts.iter().zip(&ys) {
            let w: Vec<f64> = v
                .iter()
                .zip(y)
                .map(|(vi, yi)| mu * (vi / (lambda * n) + yi / (gamma * n)))
                .collect();
            ps.push(s.prox(mu, &w)?);
        }
        let mut p = vec![0.0; v.len()];
        for pi in &ps {
            for (a, b) in p.iter_mut().zip(pi) {
                *a += b / n;
            }
        }
        for (y, pi) in ys.iter_mut().zip(&ps) {
            for j in 0..v.len() {
                y[j] += 2.0 * p[j] - x[j] - pi[j];
            }
        }
        let change = norm(&p.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        x = p;
        if change <= 1e-14 * (1.0 + norm(&x)) {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what: "prox of a sum".into(),
        iterations: MAX_SPLITTING_ITERS,
    })
}

/// `g(w) + g*(v) - <v, w>`: zero exactly when `v` is a subgradient of `g` at `w`.
///
/// # Panics
/// If `g` is not a dissipation potential.
pub fn fenchel_residual(g: &PotentialSpec, v: &[f64], w: &[f64]) -> f64 {
    let gw = g.eval(w);
    if gw.is_infinite() {
        return f64::INFINITY;
    }
    let gs = g
        .conjugate_eval(v)
        .expect("Young-Fenchel residual needs a dissipation potential");
    gw + gs - dot(v, w)
}

/// `sum_c |c| spec(field_c)`; `+inf` as soon as one cell leaves the domain.
pub fn integral_functional(spec: &PotentialSpec, field: &CellField, measures: &[f64]) -> f64 {
    let mut total = 0.0;
    for (z, m) in field.cells().zip(measures) {
        let v = spec.eval(z);
        if v.is_infinite() {
            return f64::INFINITY;
        }
        total += m * v;
    }
    total
}

/// `sum_c |c| spec*(field_c)` for a dissipation potential.
pub fn integral_conjugate(spec: &PotentialSpec, field: &CellField, measures: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (w, m) in field.cells().zip(measures) {
        total += m * spec.conjugate_eval(w)?;
    }
    Ok(total)
}
