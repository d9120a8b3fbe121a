//! Rothe time discretization of the reduced evolution inclusion
//!
//! `(z^n - z^{n-1}) / h  in  dg(Sigma^n)`,  `Sigma^n = -M_m z^n - grad f(z^n) + zhat^n`,
//!
//! with `M_m = M + L + w I`. Each step minimizes
//!
//! `h I_{g*}((v - z^{n-1}) / h) + 1/2 <M_m v, v> + I_f(v) - <zhat^n, v>`
//!
//! by Davis–Yin three-operator splitting: the quadratic part enters through its gradient (one
//! elliptic solve per iteration), the conjugate dissipation and the remanent energy through their
//! cellwise proximal maps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::convex::{Family, PotentialSpec};
use crate::elliptic::{AssembledSystem, FieldState, NodalLoads};
use crate::error::{Error, Result};
use crate::field::{dot, norm, CellField};

/// Cell count above which cellwise maps run on the rayon pool.
const PARALLEL_CELLS: usize = 1024;
const POWER_ITERATIONS: usize = 50;

/// Dyadic time grid `h = T / 2^m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub level: u32,
}

impl TimeGrid {
    pub fn new(horizon: f64, level: u32) -> Self {
        assert!(horizon > 0.0 && level < 40);
        TimeGrid { horizon, level }
    }

    pub fn steps(&self) -> usize {
        1usize << self.level
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h()
    }

    /// Index `n` with `(n-1) h < t <= n h` (and 0 for `t <= 0`).
    pub fn step_containing(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        ((t / self.h()).ceil() as usize).clamp(1, self.steps())
    }
}

/// A piecewise-linear-in-time cell field given by samples `(t_i, value_i)` with increasing times.
/// Outside the sampled range the end values are held constant.
#[derive(Clone, Debug)]
pub struct LoadHistory {
    pub samples: Vec<(f64, CellField)>,
}

impl LoadHistory {
    pub fn constant(value: CellField) -> Self {
        LoadHistory {
            samples: vec![(0.0, value)],
        }
    }

    pub fn at(&self, t: f64) -> CellField {
        let s = &self.samples;
        if t <= s[0].0 || s.len() == 1 {
            return s[0].1.clone();
        }
        for w in s.windows(2) {
            let ((t0, v0), (t1, v1)) = (&w[0], &w[1]);
            if t <= *t1 {
                let a = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                return v0.scale(1.0 - a).axpy(a, v1);
            }
        }
        s[s.len() - 1].1.clone()
    }

    /// Exact integral over `[a, b]` (trapezoid on every linear piece).
    pub fn integral(&self, a: f64, b: f64) -> CellField {
        let mut knots = vec![a];
        knots.extend(self.samples.iter().map(|(t, _)| *t).filter(|t| *t > a && *t < b));
        knots.push(b);
        let mut acc = self.samples[0].1.scale(0.0);
        for w in knots.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let mid = self.at(t0).axpy(1.0, &self.at(t1));
            acc = acc.axpy(0.5 * (t1 - t0), &mid);
        }
        acc
    }
}

/// Step averages `zhat^n = (1/h) int_{(n-1)h}^{nh} zhat(s) ds`, `n = 1..2^m`.
pub fn average_loads(history: &LoadHistory, grid: &TimeGrid) -> Vec<CellField> {
    let h = grid.h();
    (1..=grid.steps())
        .map(|n| history.integral(grid.time(n - 1), grid.time(n)).scale(1.0 / h))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    /// Bound on the integrated Young–Fenchel residual of an accepted step.
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Relative bound on the splitting fixed-point residual.
    pub fixed_point_tol: f64,
    /// Seed of the power iteration start vector.
    pub seed: u64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            step_tol: 1e-6,
            max_iterations: 20_000,
            fixed_point_tol: 1e-11,
            seed: 0,
        }
    }
}

/// Data of one discretized problem at a fixed level.
#[derive(Clone, Debug)]
pub struct SteppedProblem<'a> {
    pub system: &'a AssembledSystem,
    pub f: PotentialSpec,
    pub g: PotentialSpec,
    /// Weight `w` of the identity in `M_m = M + L + w I`.
    pub weight: f64,
    pub time: TimeGrid,
    /// `zhat` at `t = 0` followed by the step averages (length `2^m + 1`).
    pub zhat: Vec<CellField>,
    /// Nodal loads matching `zhat` entry by entry.
    pub loads: Vec<NodalLoads>,
    pub options: StepOptions,
    lipschitz: f64,
}

/// Result of one step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub z: CellField,
    pub sigma: CellField,
    pub certificate: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub fixed_point: f64,
}

/// Integrated Young–Fenchel residual of `(rate, Sigma)` with `Sigma` projected onto `dom g`.
///
/// The value carries the floating-point evaluation bound `(k + 2) eps |terms|` of each cell, so it
/// is an upper bound on the true residual rather than an estimate that can round to zero.
pub fn step_certificate(g: &PotentialSpec, rate: &CellField, sigma: &CellField, measures: &[f64]) -> (f64, f64) {
    let mut cert = 0.0;
    let mut violation = 0.0f64;
    let rounding = (rate.width as f64 + 2.0) * f64::EPSILON;
    for ((r, s), m) in rate.cells().zip(sigma.cells()).zip(measures) {
        let ps = g.project_domain(s);
        let dist = norm(&s.iter().zip(&ps).map(|(a, b)| a - b).collect::<Vec<_>>());
        violation = violation.max(dist);
        let gs = g.eval(&ps);
        let gc = g.conjugate_eval(r).expect("dissipation potential");
        let pair = dot(r, &ps);
        let resid = gs + gc - pair;
        cert += m * (resid.abs() + rounding * (gs.abs() + gc.abs() + pair.abs()));
    }
    (cert, violation)
}

fn map_cells<F>(field: &CellField, width: usize, f: F) -> Result<CellField>
where
    F: Fn(usize, &[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = field.ncells();
    let mut out = CellField::zeros(n, width);
    if width == 0 {
        return Ok(out);
    }
    if n >= PARALLEL_CELLS {
        out.data
            .par_chunks_mut(width)
            .enumerate()
            .try_for_each(|(c, dst)| {
                dst.copy_from_slice(&f(c, field.cell(c))?);
                Ok::<(), Error>(())
            })?;
    } else {
        for c in 0..n {
            let v = f(c, field.cell(c))?;
            out.cell_mut(c).copy_from_slice(&v);
        }
    }
    Ok(out)
}

impl<'a> SteppedProblem<'a> {
    /// `zhat` and `loads` hold the values at `t = 0` followed by the `2^m` step averages.
    pub fn new(
        system: &'a AssembledSystem,
        f: PotentialSpec,
        g: PotentialSpec,
        weight: f64,
        time: TimeGrid,
        zhat: Vec<CellField>,
        loads: Vec<NodalLoads>,
        options: StepOptions,
    ) -> Result<Self> {
        if zhat.len() != time.steps() + 1 || loads.len() != time.steps() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "level {} needs {} load entries, got {} traces and {} nodal loads",
                time.level,
                time.steps() + 1,
                zhat.len(),
                loads.len()
            )));
        }
        if !(weight >= 0.0) {
            return Err(Error::DimensionMismatch("regularization weight must be >= 0".into()));
        }
        let mut problem = SteppedProblem {
            system,
            f,
            g,
            weight,
            time,
            zhat,
            loads,
            options,
            lipschitz: 1.0,
        };
        problem.lipschitz = problem.estimate_lambda_max()?;
        Ok(problem)
    }

    pub fn h(&self) -> f64 {
        self.time.h()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn ncells(&self) -> usize {
        self.system.grid.ncells()
    }

    fn k(&self) -> usize {
        self.system.internal_dim()
    }

    fn hardening(&self) -> &DMatrix<f64> {
        &self.system.tensors.hardening
    }

    /// `L z` cellwise.
    pub fn apply_hardening(&self, z: &CellField) -> CellField {
        let l = self.hardening();
        CellField::from_fn(z.ncells(), z.width, |c| {
            (l * DVector::from_column_slice(z.cell(c))).as_slice().to_vec()
        })
    }

    /// `(L + w I) z` cellwise.
    pub fn apply_local(&self, z: &CellField) -> CellField {
        self.apply_hardening(z).axpy(self.weight, z)
    }

    /// `M_m z = (M + L + w I) z`.
    pub fn apply_mm(&self, z: &CellField) -> Result<CellField> {
        Ok(self.system.apply_m(z)?.axpy(1.0, &self.apply_local(z)))
    }

    fn estimate_lambda_max(&self) -> Result<f64> {
        let n = self.ncells() * self.k();
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed);
        let mut v = CellField {
            width: self.k(),
            data: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let nv = norm(&v.data);
            if nv == 0.0 {
                break;
            }
            v = v.scale(1.0 / nv);
            let mv = self.apply_mm(&v)?;
            lambda = dot(&mv.data, &v.data);
            v = mv;
        }
        Ok(lambda.max(self.weight).max(f64::MIN_POSITIVE))
    }

    /// Smallest Rayleigh quotient of `M_m` over `probes` random fields.
    pub fn min_rayleigh_quotient(&self, probes: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let measures = self.system.grid.cell_measures();
        let mut best = f64::INFINITY;
        for _ in 0..probes {
            let z = CellField {
                width: self.k(),
                data: (0..self.ncells() * self.k()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let q = self.apply_mm(&z)?.dot(&z, &measures) / z.dot(&z, &measures);
            best = best.min(q);
        }
        Ok(best)
    }

    /// `Sigma = zhat - M_m z - grad f(z)`.
    pub fn driving_force(&self, z: &CellField, zhat: &CellField, step: usize) -> Result<CellField> {
        let mz = self.apply_mm(z)?;
        let gf = self.energy_gradient(z, step)?;
        Ok(zhat.axpy(-1.0, &mz).axpy(-1.0, &gf))
    }

    fn energy_gradient(&self, z: &CellField, step: usize) -> Result<CellField> {
        map_cells(z, self.k(), |c, zc| {
            self.f.grad(zc).map_err(|e| Error::DomainEscape {
                step,
                detail: format!("cell {c}: {e}"),
            })
        })
    }

    /// Solves step `n` (1-based) from `z_prev`. `init` seeds the splitting iterate.
    pub fn step(&self, n: usize, z_prev: &CellField, init: Option<&CellField>) -> Result<StepOutcome> {
        let h = self.h();
        let zhat = &self.zhat[n];
        let measures = self.system.grid.cell_measures();
        let gamma = 0.9 / self.lipschitz;
        let mut y = init.unwrap_or(z_prev).clone();
        let mut last = (f64::INFINITY, f64::INFINITY);
        for it in 1..=self.options.max_iterations {
            let xf = map_cells(&y, self.k(), |_, yc| self.f.prox(gamma, yc))?;
            let grad_q = self.apply_mm(&xf)?.axpy(-1.0, zhat);
            let reflected = xf.scale(2.0).axpy(-1.0, &y).axpy(-gamma, &grad_q);
            let xg = map_cells(&reflected, self.k(), |c, v| {
                let zp = z_prev.cell(c);
                let s0: Vec<f64> = v.iter().zip(zp).map(|(a, b)| (a - b) / h).collect();
                let s = self.g.prox_conjugate(gamma / h, &s0)?;
                Ok(zp.iter().zip(&s).map(|(a, b)| a + h * b).collect())
            })?;
            let diff = xg.axpy(-1.0, &xf);
            y = y.axpy(1.0, &diff);
            let fixed_point = norm(&diff.data) / (1.0 + norm(&xf.data));
            if fixed_point <= self.options.fixed_point_tol || it == self.options.max_iterations {
                let gf = self.energy_gradient(&xf, n)?;
                let sigma = grad_q.scale(-1.0).axpy(-1.0, &gf);
                let rate = xf.axpy(-1.0, z_prev).scale(1.0 / h);
                let (certificate, violation) = step_certificate(&self.g, &rate, &sigma, &measures);
                last = (certificate, fixed_point);
                if fixed_point <= self.options.fixed_point_tol && certificate <= self.options.step_tol {
                    return Ok(StepOutcome {
                        z: xf,
                        sigma,
                        certificate,
                        constraint_violation: violation,
                        iterations: it,
                        fixed_point,
                    });
                }
            }
        }
        Err(Error::StepSolveFailure {
            step: n,
            iterations: self.options.max_iterations,
            certificate: last.0,
            tolerance: self.options.step_tol,
            fixed_point: last.1,
        })
    }

    /// All `2^m` steps from `z0`.
    pub fn run(&self, z0: &CellField) -> Result<(Trajectory, EnergyLedger)> {
        for (c, zc) in z0.cells().enumerate() {
            if !self.f.eval(zc).is_finite() {
                return Err(Error::DomainEscape {
                    step: 0,
                    detail: format!("initial state of cell {c} lies outside the domain of f"),
                });
            }
        }
        let sigma0 = self.driving_force(z0, &self.zhat[0], 0)?;
        let mut states = vec![z0.clone()];
        let mut sigmas = vec![sigma0];
        let mut fields = vec![self.system.solve_bvp(z0, &self.loads[0])?];
        let mut records = vec![StepRecord::default()];
        for n in 1..=self.time.steps() {
            let out = self.step(n, &states[n - 1], None)?;
            fields.push(self.system.solve_bvp(&out.z, &self.loads[n])?);
            records.push(StepRecord {
                certificate: out.certificate,
                constraint_violation: out.constraint_violation,
                iterations: out.iterations,
                fixed_point: out.fixed_point,
            });
            states.push(out.z);
            sigmas.push(out.sigma);
        }
        let traj = Trajectory {
            time: self.time,
            states,
            sigma: sigmas,
            fields,
            records,
            measures: self.system.grid.cell_measures(),
        };
        let ledger = self.ledger(&traj)?;
        Ok((traj, ledger))
    }

    fn ledger(&self, traj: &Trajectory) -> Result<EnergyLedger> {
        let h = self.h();
        let m = &traj.measures;
        let p = match self.g.family {
            Family::PowerLaw { p, .. } => p,
            _ => 2.0,
        };
        let q = p / (p - 1.0);
        let mut rows = Vec::with_capacity(traj.states.len());
        for n in 0..traj.states.len() {
            let z = &traj.states[n];
            let mz = self.system.apply_m(z)?.axpy(1.0, &self.apply_hardening(z));
            let hardening_energy = 0.5 * mz.dot(z, m);
            let regularization_energy = 0.5 * self.weight * z.dot(z, m);
            let remanent_energy = crate::convex::integral_functional(&self.f, z, m);
            let mut row = LedgerRow {
                step: n,
                time: self.time.time(n),
                hardening_energy,
                regularization_energy,
                remanent_energy,
                ..LedgerRow::default()
            };
            if n > 0 {
                let dz = z.axpy(-1.0, &traj.states[n - 1]);
                let rate = dz.scale(1.0 / h);
                let sigma = &traj.sigma[n];
                let proj = CellField::from_fn(sigma.ncells(), sigma.width, |c| self.g.project_domain(sigma.cell(c)));
                row.conjugate_dissipation = h * crate::convex::integral_conjugate(&self.g, &rate, m)?;
                row.dissipation = h * crate::convex::integral_functional(&self.g, &proj, m);
                row.load_work = dz.dot(&self.zhat[n], m);
                row.load_work_holder = h * rate.lp_norm(q, m) * self.zhat[n].lp_norm(p, m);
                row.rate_power = rate.dot(sigma, m);
                row.certificate = traj.records[n].certificate;
                row.constraint_violation = traj.records[n].constraint_violation;
            }
            rows.push(row);
        }
        Ok(EnergyLedger { rows, p, weight: self.weight })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub certificate: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub fixed_point: f64,
}

/// Node values of a Rothe solution with the derived fields and step diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub time: TimeGrid,
    /// `z^0 .. z^N`
    pub states: Vec<CellField>,
    /// `Sigma^0 .. Sigma^N`; `Sigma^0` uses the load trace at `t = 0`.
    pub sigma: Vec<CellField>,
    pub fields: Vec<FieldState>,
    pub records: Vec<StepRecord>,
    pub measures: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Piecewise-affine interpolant.
    pub fn affine(&self, t: f64) -> CellField {
        let n = self.time.step_containing(t);
        if n == 0 {
            return self.states[0].clone();
        }
        let a = t / self.time.h() - (n as f64 - 1.0);
        self.states[n - 1].scale(1.0 - a).axpy(a, &self.states[n])
    }

    /// Piecewise-constant interpolant: `z^n` on `((n-1)h, nh]`.
    pub fn constant(&self, t: f64) -> CellField {
        self.states[self.time.step_containing(t)].clone()
    }

    /// `(z^n - z^{n-1}) / h`
    pub fn rate(&self, n: usize) -> CellField {
        self.states[n].axpy(-1.0, &self.states[n - 1]).scale(1.0 / self.time.h())
    }

    /// `|| z_m - zbar_m ||^{p*}_{p*, Omega_T}` by composite Gauss quadrature of the two
    /// interpolants, graded toward the step ends where the integrand loses smoothness.
    pub fn interpolant_gap(&self, q: f64) -> f64 {
        let (nodes, weights) = gauss_legendre_8();
        let h = self.time.h();
        let mut total = 0.0;
        for n in 1..=self.steps() {
            let t0 = self.time.time(n - 1);
            // geometric pieces toward both ends of the step
            let mut edges = vec![0.0];
            for j in (1..48).rev() {
                edges.push(0.5f64.powi(j));
            }
            for j in 2..48 {
                edges.push(1.0 - 0.5f64.powi(j));
            }
            edges.push(1.0);
            for w in edges.windows(2) {
                let (a, b) = (w[0], w[1]);
                for (x, wt) in nodes.iter().zip(&weights) {
                    let s = a + (b - a) * 0.5 * (x + 1.0);
                    let t = t0 + s * h;
                    let gap = self.affine(t).axpy(-1.0, &self.constant(t));
                    let integrand: f64 = gap
                        .cells()
                        .zip(&self.measures)
                        .map(|(g, m)| m * norm(g).powf(q))
                        .sum();
                    total += integrand * wt * 0.5 * (b - a) * h;
                }
            }
        }
        total
    }

    /// `h^{p*} / (p* + 1) || dz/dt ||^{p*}_{p*, Omega_T}`
    pub fn interpolant_gap_closed_form(&self, q: f64) -> f64 {
        let h = self.time.h();
        let mut rate_norm = 0.0;
        for n in 1..=self.steps() {
            let r = self.rate(n);
            rate_norm += h * r.cells().zip(&self.measures).map(|(c, m)| m * norm(c).powf(q)).sum::<f64>();
        }
        h.powf(q) / (q + 1.0) * rate_norm
    }

    /// The three members of `||xi||_{L^s(0,T;X)} <= ||xibar||_{L^s(-h,T;X)} <= (h||xi^0||^s +
    /// ||xibar||^s_{L^s(0,T;X)})^{1/s}` with `X = L^2(Omega)`.
    pub fn interpolant_norm_bounds(&self, s: f64) -> (f64, f64, f64) {
        let (nodes, weights) = gauss_legendre_8();
        let h = self.time.h();
        let xnorm = |f: &CellField| f.dot(f, &self.measures).sqrt();
        let mut affine = 0.0;
        let mut constant = 0.0;
        for n in 1..=self.steps() {
            let t0 = self.time.time(n - 1);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = t0 + h * 0.5 * (x + 1.0);
                affine += 0.5 * h * w * xnorm(&self.affine(t)).powf(s);
            }
            constant += h * xnorm(&self.states[n]).powf(s);
        }
        let initial = h * xnorm(&self.states[0]).powf(s);
        (
            affine.powf(1.0 / s),
            (initial + constant).powf(1.0 / s),
            (initial + constant).powf(1.0 / s),
        )
    }
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    (
        [
            -0.960_289_856_497_536_2,
            -0.796_666_477_413_626_7,
            -0.525_532_409_916_329,
            -0.183_434_642_495_649_8,
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_2,
        ],
        [
            0.101_228_536_290_376_26,
            0.222_381_034_453_374_47,
            0.313_706_645_877_887_3,
            0.362_683_783_378_362,
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_47,
            0.101_228_536_290_376_26,
        ],
    )
}

/// Per-step energy terms of a run. Row `n = 0` holds the initial energies only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    /// `h I_{g*}(rate)`
    pub conjugate_dissipation: f64,
    /// `h I_g(Sigma)` with `Sigma` projected onto `dom g`
    pub dissipation: f64,
    /// `1/2 ||(M + L)^{1/2} z||^2`
    pub hardening_energy: f64,
    /// `w/2 ||z||^2`
    pub regularization_energy: f64,
    /// `I_f(z)`
    pub remanent_energy: f64,
    /// `<z^n - z^{n-1}, zhat^n>`
    pub load_work: f64,
    /// `h ||rate||_{p*} ||zhat^n||_p`
    pub load_work_holder: f64,
    /// `<rate, Sigma>`
    pub rate_power: f64,
    pub certificate: f64,
    pub constraint_violation: f64,
}

impl LedgerRow {
    pub fn stored_energy(&self) -> f64 {
        self.hardening_energy + self.regularization_energy + self.remanent_energy
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
    /// Exponent used for the Hölder bound of the load work.
    pub p: f64,
    pub weight: f64,
}

/// Slacks of the discrete a-priori inequality at partial sum `l` and the boundedness numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub level: u32,
    /// `l = 1..N`: right side minus left side with the exact load work.
    pub slack: Vec<f64>,
    /// Same with the load work bounded by Hölder's inequality.
    pub slack_holder: Vec<f64>,
    /// `sum_{n<=l} (h I_{g*} + h I_g)`, nondecreasing.
    pub dissipation_sums: Vec<f64>,
    /// `sum_n h ||rate||^{p*}_{p*}`
    pub rate_norm: f64,
    /// `sum_n h ||Sigma^n||^p_p`
    pub sigma_norm: f64,
    pub max_hardening_energy: f64,
    pub max_regularization_energy: f64,
    pub max_remanent_energy: f64,
}

pub fn energy_report(ledger: &EnergyLedger, traj: &Trajectory) -> EnergyReport {
    let rows = &ledger.rows;
    let e0 = rows[0].stored_energy();
    let mut slack = Vec::new();
    let mut slack_holder = Vec::new();
    let mut sums = Vec::new();
    let (mut diss, mut work, mut work_h) = (0.0, 0.0, 0.0);
    for row in &rows[1..] {
        diss += row.conjugate_dissipation + row.dissipation;
        work += row.load_work;
        work_h += row.load_work_holder;
        let lhs = diss + row.stored_energy();
        slack.push(e0 + work - lhs);
        slack_holder.push(e0 + work_h - lhs);
        sums.push(diss);
    }
    let p = ledger.p;
    let q = p / (p - 1.0);
    let h = traj.time.h();
    let m = &traj.measures;
    let mut rate_norm = 0.0;
    let mut sigma_norm = 0.0;
    for n in 1..=traj.steps() {
        rate_norm += h * traj.rate(n).lp_norm(q, m).powf(q);
        sigma_norm += h * traj.sigma[n].lp_norm(p, m).powf(p);
    }
    let max_of = |f: fn(&LedgerRow) -> f64| rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    EnergyReport {
        level: traj.time.level,
        slack,
        slack_holder,
        dissipation_sums: sums,
        rate_norm,
        sigma_norm,
        max_hardening_energy: max_of(|r| r.hardening_energy),
        max_regularization_energy: max_of(|r| r.regularization_energy),
        max_remanent_energy: max_of(|r| r.remanent_energy),
    }
}
