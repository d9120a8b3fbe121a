//! Orchestration of runs, refinement studies and static checks, and their file outputs.

use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::convex::{Coercivity, PotentialSpec};
use crate::elliptic::{AssembledSystem, FieldState, Grid};
use crate::error::{Error, Result, Violation};
use crate::field::{norm, CellField};
use crate::material::{sym_dim, unpack_sym};
use crate::rothe::{energy_report, EnergyLedger, EnergyReport, Trajectory};
use crate::scenario::Scenario;
use crate::young::{
    build_measure, convergence_study, mvs_residual, regime, ConvergenceReport, EmpiricalYoungMeasure,
    MvsResidualReport, Partition, Regime,
};

/// Refuses configurations outside both existence regimes unless overridden. Returns the warning
/// text when the override is in effect.
pub fn coercivity_gate(scenario: &Scenario, override_gate: bool) -> Result<Option<String>> {
    if regime(&scenario.tensors, &scenario.f, &scenario.g) != Regime::Uncovered {
        return Ok(None);
    }
    let witness = match &scenario.f.coercivity {
        Coercivity::Fails { witness } => format!(" (f stays bounded along {witness:?})"),
        _ => String::new(),
    };
    let msg = format!(
        "the remanent energy is not coercive{witness} and the hardening is not positive definite, \
         so the existence result for the rate-dependent problem cannot be applied to this configuration"
    );
    if override_gate {
        Ok(Some(format!("warning: {msg}")))
    } else {
        Err(Error::CoercivityGate(format!("{msg}; pass --override-coercivity to run it anyway")))
    }
}

/// One completed level.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub level: u32,
    pub weight: f64,
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
    pub energy: EnergyReport,
    /// Computed and closed-form interpolant gap.
    pub interpolant_gap: (f64, f64),
}

pub fn solve_level(scenario: &Scenario, system: &AssembledSystem, level: u32) -> Result<RunOutcome> {
    let problem = scenario.problem(system, level)?;
    let (trajectory, ledger) = problem.run(&scenario.initial)?;
    let energy = energy_report(&ledger, &trajectory);
    let q = ledger.p / (ledger.p - 1.0);
    let interpolant_gap = (trajectory.interpolant_gap(q), trajectory.interpolant_gap_closed_form(q));
    Ok(RunOutcome {
        level,
        weight: problem.weight,
        trajectory,
        ledger,
        energy,
        interpolant_gap,
    })
}

fn check_level(scenario: &Scenario, level: u32) -> Result<()> {
    if level > 30 {
        return Err(Error::Validation(vec![Violation::new("level", "must be <= 30")]));
    }
    if level == 0 && scenario.config.time.regularization.is_none() {
        return Err(Error::Validation(vec![Violation::new(
            "level",
            "level 0 needs an explicit time.regularization",
        )]));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub level: u32,
    pub steps: usize,
    pub max_certificate: f64,
    pub total_iterations: usize,
    pub min_energy_slack: f64,
    pub min_energy_slack_holder: f64,
    pub min_rate_power: f64,
    pub max_constraint_violation: f64,
    pub interpolant_gap_error: f64,
    pub energy_ok: bool,
}

impl RunSummary {
    fn from_outcome(run: &RunOutcome, energy_tol: f64) -> Self {
        let rows = &run.ledger.rows[1..];
        let fold_min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
        let min_energy_slack = fold_min(&mut run.energy.slack.iter().copied());
        let min_energy_slack_holder = fold_min(&mut run.energy.slack_holder.iter().copied());
        let (gap, closed) = run.interpolant_gap;
        RunSummary {
            level: run.level,
            steps: run.trajectory.steps(),
            max_certificate: rows.iter().map(|r| r.certificate).fold(0.0, f64::max),
            total_iterations: run.trajectory.records.iter().map(|r| r.iterations).sum(),
            min_energy_slack,
            min_energy_slack_holder,
            min_rate_power: fold_min(&mut rows.iter().map(|r| r.rate_power)) + 0.0,
            max_constraint_violation: rows.iter().map(|r| r.constraint_violation).fold(0.0, f64::max),
            interpolant_gap_error: if closed == 0.0 { gap.abs() } else { (gap - closed).abs() / closed },
            energy_ok: rows.is_empty() || min_energy_slack.min(min_energy_slack_holder) >= -energy_tol,
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "level {} ({} steps)", self.level, self.steps)?;
        writeln!(f, "  max step certificate       {:e}", self.max_certificate)?;
        writeln!(f, "  splitting iterations       {}", self.total_iterations)?;
        writeln!(f, "  min energy slack (exact)   {:e}", self.min_energy_slack)?;
        writeln!(f, "  min energy slack (Hoelder) {:e}", self.min_energy_slack_holder)?;
        writeln!(f, "  min dissipation rate       {:e}", self.min_rate_power)?;
        writeln!(f, "  max constraint violation   {:e}", self.max_constraint_violation)?;
        writeln!(f, "  interpolant gap rel. error {:e}", self.interpolant_gap_error)?;
        write!(f, "  energy inequality          {}", if self.energy_ok { "holds" } else { "VIOLATED" })
    }
}

pub fn cmd_run(scenario: &Scenario, level: u32, out: &Path) -> Result<RunSummary> {
    check_level(scenario, level)?;
    let system = scenario.assemble()?;
    let run = solve_level(scenario, &system, level)?;
    std::fs::create_dir_all(out)?;
    write_trajectory(&out.join("trajectory.csv"), scenario.dim(), &[&run])?;
    write_ledger(&out.join("ledger.csv"), &run)?;
    for (tag, n) in snapshot_steps(scenario, &run.trajectory) {
        let fs = &run.trajectory.fields[n];
        write_vtk(&out.join(format!("fields_{tag}.vtk")), &scenario.grid, &run.trajectory, n, fs)?;
        write_snapshot_csv(&out.join(format!("fields_{tag}.csv")), &scenario.grid, &run.trajectory.states[n], fs)?;
    }
    let summary = RunSummary::from_outcome(&run, scenario.config.tolerances.energy);
    std::fs::write(out.join("summary.txt"), format!("{summary}\n"))?;
    Ok(summary)
}

/// Step index of `t = 0` and of every checkpoint, tagged for file names.
fn snapshot_steps(scenario: &Scenario, traj: &Trajectory) -> Vec<(String, usize)> {
    let mut out = vec![("0000".to_string(), 0)];
    for t in scenario.checkpoints() {
        let n = traj.time.step_containing(t);
        let tag = format!("{n:04}");
        if !out.iter().any(|(s, _)| *s == tag) {
            out.push((tag, n));
        }
    }
    out
}

/// Everything a refinement study produces.
#[derive(Clone, Debug)]
pub struct StudyOutcome {
    pub runs: Vec<RunOutcome>,
    pub convergence: ConvergenceReport,
    pub measure: EmpiricalYoungMeasure,
    pub mvs: MvsResidualReport,
}

/// Solves all levels `m0..=m1` (in parallel), pools them into a Young measure on the level-`m0`
/// time grid and evaluates the measure-valued residual on the finest trajectory.
pub fn study(scenario: &Scenario, m0: u32, m1: u32) -> Result<StudyOutcome> {
    if m1 < m0 {
        return Err(Error::Validation(vec![Violation::new("levels", format!("needs m0 <= m1, got {m0}..{m1}"))]));
    }
    check_level(scenario, m0)?;
    check_level(scenario, m1)?;
    let system = scenario.assemble()?;
    let runs = (m0..=m1)
        .into_par_iter()
        .map(|m| solve_level(scenario, &system, m))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(Trajectory, EnergyLedger)> =
        runs.iter().map(|r| (r.trajectory.clone(), r.ledger.clone())).collect();
    let convergence = convergence_study(&pairs, &scenario.grid, &scenario.f)?;
    let partition = Partition::new(
        &scenario.grid,
        scenario.config.study.coarsen,
        1usize << m0,
        scenario.config.time.horizon,
    )?;
    let trajs: Vec<&Trajectory> = runs.iter().map(|r| &r.trajectory).collect();
    let measure = build_measure(&trajs, &partition)?;
    let finest = runs.last().expect("at least one level");
    let mvs = mvs_residual(
        &finest.trajectory,
        &measure,
        &scenario.tensors,
        &scenario.f,
        &scenario.g,
        finest.weight,
        &scenario.checkpoints(),
    )?;
    Ok(StudyOutcome {
        runs,
        convergence,
        measure,
        mvs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudySummary {
    pub runs: Vec<RunSummary>,
    pub differences: Vec<f64>,
    pub ratios: Vec<f64>,
    pub spreads: Vec<f64>,
    pub min_mvs_slack: f64,
    /// `tol_mvs` times the space-time measure.
    pub mvs_tolerance: f64,
    pub regime: Regime,
}

impl fmt::Display for StudySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.runs {
            writeln!(f, "{r}")?;
        }
        writeln!(f, "regime                 {:?}", self.regime)?;
        writeln!(f, "level differences      {:?}", self.differences)?;
        writeln!(f, "difference ratios      {:?}", self.ratios)?;
        writeln!(f, "pooled measure spreads {:?}", self.spreads)?;
        write!(
            f,
            "min residual slack     {:e} ({})",
            self.min_mvs_slack,
            if self.min_mvs_slack >= -self.mvs_tolerance { "holds" } else { "VIOLATED" }
        )
    }
}

pub fn cmd_converge(scenario: &Scenario, m0: u32, m1: u32, out: &Path) -> Result<StudySummary> {
    let s = study(scenario, m0, m1)?;
    std::fs::create_dir_all(out)?;
    let refs: Vec<&RunOutcome> = s.runs.iter().collect();
    write_trajectory(&out.join("trajectory.csv"), scenario.dim(), &refs)?;
    write_convergence(&out.join("convergence.csv"), &s)?;
    write_mvs(&out.join("mvs.csv"), &s.mvs)?;
    write_atoms(&out.join("atoms.csv"), &s.measure)?;
    let tol = &scenario.config.tolerances;
    let summary = StudySummary {
        runs: s.runs.iter().map(|r| RunSummary::from_outcome(r, tol.energy)).collect(),
        differences: s.convergence.differences.clone(),
        ratios: s.convergence.ratios.clone(),
        spreads: s.convergence.spreads.clone(),
        min_mvs_slack: s.mvs.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min),
        mvs_tolerance: tol.mvs * scenario.grid.volume() * scenario.config.time.horizon,
        regime: s.mvs.regime,
    };
    std::fs::write(out.join("summary.txt"), format!("{summary}\n"))?;
    Ok(summary)
}

/// Static certificates of a scenario, no time stepping.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub c0: f64,
    pub d_lambda_min: f64,
    pub d_lambda_max: f64,
    pub hardening: String,
    pub regime: Regime,
    pub growth: String,
    pub coercivity: String,
    pub stiffness_min_eigenvalue: Option<f64>,
    /// Largest relative asymmetry `|<Mx,y> - <x,My>|` over random probes.
    pub m_asymmetry: f64,
    pub m_min_quotient: f64,
    /// Largest deviation of the Moreau identity for `g` over random probes.
    pub moreau_error: f64,
    /// Largest relative gradient error of `f` against central differences.
    pub gradient_error: f64,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ellipticity c0             {:e}", self.c0)?;
        writeln!(f, "lambda_min(D)              {:e}", self.d_lambda_min)?;
        writeln!(f, "lambda_max(D)              {:e}", self.d_lambda_max)?;
        if let Some(l) = self.stiffness_min_eigenvalue {
            writeln!(f, "lambda_min(stiffness)      {l:e}")?;
        }
        writeln!(f, "hardening                  {}", self.hardening)?;
        writeln!(f, "regime                     {:?}", self.regime)?;
        writeln!(f, "growth of g                {}", self.growth)?;
        writeln!(f, "coercivity of f            {}", self.coercivity)?;
        writeln!(f, "M asymmetry (relative)     {:e}", self.m_asymmetry)?;
        writeln!(f, "M min Rayleigh quotient    {:e}", self.m_min_quotient)?;
        writeln!(f, "Moreau identity error      {:e}", self.moreau_error)?;
        write!(f, "grad f rel. error          {:e}", self.gradient_error)
    }
}

fn random_field(rng: &mut ChaCha8Rng, ncells: usize, k: usize) -> CellField {
    CellField::from_fn(ncells, k, |_| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// A random point well inside the domain of `f`.
fn interior_point(rng: &mut ChaCha8Rng, f: &PotentialSpec, k: usize) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = z.iter().map(|x| x * 0.9).collect();
        if f.domain_margin(&z) > 0.05 {
            return z;
        }
        let s: Vec<f64> = z.iter().map(|x| x * 0.5).collect();
        if f.domain_margin(&s) > 0.05 {
            return s;
        }
    }
}

pub fn check(scenario: &Scenario) -> Result<CheckReport> {
    let system = scenario.assemble()?;
    let k = system.internal_dim();
    let n = scenario.grid.ncells();
    let m = scenario.grid.cell_measures();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.config.tolerances.seed);
    let mut m_asymmetry = 0.0f64;
    let mut m_min_quotient = f64::INFINITY;
    for _ in 0..10 {
        let x = random_field(&mut rng, n, k);
        let y = random_field(&mut rng, n, k);
        let (mx, my) = (system.apply_m(&x)?, system.apply_m(&y)?);
        let scale = mx.dot(&mx, &m).sqrt() * y.dot(&y, &m).sqrt() + f64::MIN_POSITIVE;
        m_asymmetry = m_asymmetry.max((mx.dot(&y, &m) - x.dot(&my, &m)).abs() / scale);
        m_min_quotient = m_min_quotient.min(mx.dot(&x, &m) / x.dot(&x, &m));
    }
    let g = &scenario.g;
    let mut moreau_error = 0.0f64;
    for _ in 0..100 {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = g.prox(0.7, &v)?;
        let b = g.prox_conjugate(1.0 / 0.7, &v.iter().map(|x| x / 0.7).collect::<Vec<_>>())?;
        let r: Vec<f64> = (0..k).map(|i| a[i] + 0.7 * b[i] - v[i]).collect();
        moreau_error = moreau_error.max(norm(&r) / norm(&v).max(1.0));
    }
    let f = &scenario.f;
    let mut gradient_error = 0.0f64;
    for _ in 0..100 {
        let z = interior_point(&mut rng, f, k);
        let grad = f.grad(&z)?;
        let step = 1e-6;
        let fd: Vec<f64> = (0..k)
            .map(|i| {
                let (mut p, mut q) = (z.clone(), z.clone());
                p[i] += step;
                q[i] -= step;
                (f.eval(&p) - f.eval(&q)) / (2.0 * step)
            })
            .collect();
        let err: Vec<f64> = grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
        gradient_error = gradient_error.max(norm(&err) / norm(&grad).max(1.0));
    }
    let growth = match &g.growth {
        Some(c) => format!(
            "p={} c1={} c2={} c3={} c4={} d1={} d2={}{}",
            c.p,
            c.c1,
            c.c2,
            c.c3,
            c.c4,
            c.d1,
            c.d2,
            if c.empirical { " (empirical)" } else { "" }
        ),
        None => "none".into(),
    };
    let coercivity = match &f.coercivity {
        Coercivity::Polarization { a1, a2 } => format!("f >= {a1} |P|^2 - {a2}"),
        Coercivity::Full { b1, b2, exponent } => format!("f >= {b1} |z|^{exponent} - {b2}"),
        Coercivity::Fails { witness } => format!("fails along {witness:?}"),
        Coercivity::NotApplicable => "not applicable".into(),
    };
    Ok(CheckReport {
        c0: system.block_a.c0,
        d_lambda_min: system.block_d.lambda_min,
        d_lambda_max: system.block_d.lambda_max,
        hardening: format!("{:?}", scenario.tensors.hardening_kind),
        regime: regime(&scenario.tensors, f, g),
        growth,
        coercivity,
        stiffness_min_eigenvalue: (system.ndof() <= 2000).then(|| system.symmetric_min_eigenvalue()),
        m_asymmetry,
        m_min_quotient,
        moreau_error,
        gradient_error,
    })
}

/// Shortest round-trip representation; negative zero prints as zero.
fn num(x: f64) -> String {
    format!("{:e}", x + 0.0)
}

fn versioned(path: &Path, tag: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# ferrosolve {tag} v1")?;
    Ok(csv::Writer::from_writer(file))
}

/// Columns: level, step, time, cell, r.., P.., sigma.., E.., certificate.
pub fn write_trajectory(path: &Path, dim: usize, runs: &[&RunOutcome]) -> Result<()> {
    let ks = sym_dim(dim);
    let mut w = versioned(path, "trajectory")?;
    let mut header: Vec<String> = ["level", "step", "time", "cell"].iter().map(|s| s.to_string()).collect();
    for (name, count) in [("r", ks), ("P", dim), ("sigma", ks), ("E", dim)] {
        header.extend((0..count).map(|i| format!("{name}{i}")));
    }
    header.push("certificate".into());
    w.write_record(&header)?;
    for run in runs {
        let t = &run.trajectory;
        for n in 0..=t.steps() {
            let fs = &t.fields[n];
            for (c, z) in t.states[n].cells().enumerate() {
                let mut rec = vec![run.level.to_string(), n.to_string(), num(t.time.time(n)), c.to_string()];
                rec.extend(z.iter().map(|x| num(*x)));
                rec.extend(fs.sigma.cell(c).iter().map(|x| num(*x)));
                rec.extend(fs.e_field.cell(c).iter().map(|x| num(*x)));
                rec.push(num(t.records[n].certificate));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ledger(path: &Path, run: &RunOutcome) -> Result<()> {
    let mut w = versioned(path, "ledger")?;
    w.write_record([
        "step",
        "time",
        "conjugate_dissipation",
        "dissipation",
        "hardening_energy",
        "regularization_energy",
        "remanent_energy",
        "load_work",
        "load_work_holder",
        "rate_power",
        "certificate",
        "constraint_violation",
        "slack",
        "slack_holder",
    ])?;
    for (i, r) in run.ledger.rows.iter().enumerate() {
        let (s, sh) = if i == 0 {
            (0.0, 0.0)
        } else {
            (run.energy.slack[i - 1], run.energy.slack_holder[i - 1])
        };
        let rec = [
            r.time,
            r.conjugate_dissipation,
            r.dissipation,
            r.hardening_energy,
            r.regularization_energy,
            r.remanent_energy,
            r.load_work,
            r.load_work_holder,
            r.rate_power,
            r.certificate,
            r.constraint_violation,
            s,
            sh,
        ];
        let mut out = vec![r.step.to_string()];
        out.extend(rec.iter().map(|x| num(*x)));
        w.write_record(&out)?;
    }
    w.flush()?;
    Ok(())
}

fn write_convergence(path: &Path, s: &StudyOutcome) -> Result<()> {
    let mut w = versioned(path, "convergence")?;
    w.write_record([
        "level",
        "difference_to_next",
        "ratio",
        "pooled_spread",
        "f_deviation",
        "dissipation",
        "rate_norm",
        "sigma_norm",
        "max_hardening_energy",
        "max_regularization_energy",
        "max_remanent_energy",
    ])?;
    let c = &s.convergence;
    for (i, e) in c.energy.iter().enumerate() {
        let opt = |v: Option<&f64>| v.map_or(String::new(), |x| num(*x));
        let ratio = if i == 0 { None } else { c.ratios.get(i - 1) };
        w.write_record([
            c.levels[i].to_string(),
            opt(c.differences.get(i)),
            opt(ratio),
            opt(c.spreads.get(i)),
            opt(c.f_deviations.get(i)),
            opt(e.dissipation_sums.last()),
            num(e.rate_norm),
            num(e.sigma_norm),
            num(e.max_hardening_energy),
            num(e.max_regularization_energy),
            num(e.max_remanent_energy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_mvs(path: &Path, r: &MvsResidualReport) -> Result<()> {
    let mut w = versioned(path, "mvs")?;
    w.write_record(["time", "left", "right", "slack", "constraint_violation"])?;
    for row in &r.rows {
        w.write_record([row.time, row.left, row.right, row.slack, row.constraint_violation].map(num))?;
    }
    w.flush()?;
    Ok(())
}

fn write_atoms(path: &Path, m: &EmpiricalYoungMeasure) -> Result<()> {
    let mut w = versioned(path, "atoms")?;
    let mut header: Vec<String> = ["slab", "group", "weight"].iter().map(|s| s.to_string()).collect();
    header.extend((0..m.width).map(|i| format!("xi{i}")));
    w.write_record(&header)?;
    let ng = m.partition.ngroups();
    for (c, atoms) in m.atoms.iter().enumerate() {
        for a in atoms {
            let mut rec = vec![(c / ng).to_string(), (c % ng).to_string(), num(a.weight)];
            rec.extend(a.xi.iter().map(|x| num(*x)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pads a cell vector to three components.
fn vector3(v: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    out
}

/// Unpacks a Mandel vector into a row-major 3x3 tensor.
fn tensor3(dim: usize, packed: &[f64]) -> [f64; 9] {
    let full = unpack_sym(dim, packed);
    let mut out = [0.0; 9];
    for i in 0..dim {
        for j in 0..dim {
            out[i * 3 + j] = full[i * dim + j];
        }
    }
    out
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ")
}

/// Legacy ASCII structured-points file. Point data: displacement (vector) and potential
/// (scalar). Cell data: `r` and `sigma` as tensors, `P`, `E` and `D` as vectors. Axes beyond
/// the grid dimension have one node and zero components.
pub fn write_vtk(path: &Path, grid: &Grid, traj: &Trajectory, n: usize, fs: &FieldState) -> Result<()> {
    let d = grid.dim;
    let ks = sym_dim(d);
    let mut s = String::new();
    let pad = |v: &dyn Fn(usize) -> String, fill: &str| {
        (0..3).map(|i| if i < d { v(i) } else { fill.to_string() }).collect::<Vec<_>>().join(" ")
    };
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "ferrosolve level {} step {} time {}", traj.time.level, n, num(traj.time.time(n))).unwrap();
    writeln!(s, "ASCII").unwrap();
    writeln!(s, "DATASET STRUCTURED_POINTS").unwrap();
    writeln!(s, "DIMENSIONS {}", pad(&|i| (grid.cells[i] + 1).to_string(), "1")).unwrap();
    writeln!(s, "ORIGIN 0 0 0").unwrap();
    writeln!(s, "SPACING {}", pad(&|i| num(grid.h[i]), "1")).unwrap();
    let nn = grid.nnodes();
    writeln!(s, "POINT_DATA {nn}").unwrap();
    writeln!(s, "VECTORS displacement double").unwrap();
    for v in 0..nn {
        writeln!(s, "{}", join(&vector3(&fs.u[v * d..(v + 1) * d]))).unwrap();
    }
    writeln!(s, "SCALARS potential double 1").unwrap();
    writeln!(s, "LOOKUP_TABLE default").unwrap();
    for v in 0..nn {
        writeln!(s, "{}", num(fs.phi[v])).unwrap();
    }
    let z = &traj.states[n];
    writeln!(s, "CELL_DATA {}", grid.ncells()).unwrap();
    writeln!(s, "TENSORS r double").unwrap();
    for cell in z.cells() {
        writeln!(s, "{}", join(&tensor3(d, &cell[..ks]))).unwrap();
    }
    writeln!(s, "TENSORS sigma double").unwrap();
    for cell in fs.sigma.cells() {
        writeln!(s, "{}", join(&tensor3(d, cell))).unwrap();
    }
    writeln!(s, "VECTORS P double").unwrap();
    for cell in z.cells() {
        writeln!(s, "{}", join(&vector3(&cell[ks..]))).unwrap();
    }
    for (name, field) in [("E", &fs.e_field), ("D", &fs.displacement)] {
        writeln!(s, "VECTORS {name} double").unwrap();
        for cell in field.cells() {
            writeln!(s, "{}", join(&vector3(cell))).unwrap();
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Cellwise snapshot: cell, center coordinates, r.., P.., sigma.., E.., D...
pub fn write_snapshot_csv(path: &Path, grid: &Grid, z: &CellField, fs: &FieldState) -> Result<()> {
    let d = grid.dim;
    let ks = sym_dim(d);
    let mut w = versioned(path, "snapshot")?;
    let mut header = vec!["cell".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    for (name, count) in [("r", ks), ("P", d), ("sigma", ks), ("E", d), ("D", d)] {
        header.extend((0..count).map(|i| format!("{name}{i}")));
    }
    w.write_record(&header)?;
    for c in 0..grid.ncells() {
        let mut rec = vec![c.to_string()];
        let values = grid
            .cell_center(c)
            .into_iter()
            .chain(z.cell(c).iter().copied())
            .chain(fs.sigma.cell(c).iter().copied())
            .chain(fs.e_field.cell(c).iter().copied())
            .chain(fs.displacement.cell(c).iter().copied());
        rec.extend(values.map(num));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
