//! Empirical Young measures pooled from refinement sequences of Rothe trajectories, and the
//! residual of the measure-valued solution inequality.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::convex::PotentialSpec;
use crate::elliptic::Grid;
use crate::error::{Error, Result};
use crate::field::{dot, norm, CellField};
use crate::material::{HardeningKind, MaterialTensors};
use crate::rothe::{energy_report, EnergyLedger, EnergyReport, Trajectory};

/// Space-time reference partition: groups of grid cells times uniform time slabs.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Fine cells of every spatial group.
    pub groups: Vec<Vec<usize>>,
    pub group_measures: Vec<f64>,
    pub slabs: usize,
    pub horizon: f64,
}

impl Partition {
    /// Groups `coarsen^d` neighbouring cells (every axis count must be divisible by `coarsen`).
    pub fn new(grid: &Grid, coarsen: usize, slabs: usize, horizon: f64) -> Result<Self> {
        if coarsen == 0 || grid.cells.iter().any(|n| n % coarsen != 0) {
            return Err(Error::MismatchedScenario(format!(
                "coarsening factor {coarsen} does not divide the grid {:?}",
                grid.cells
            )));
        }
        if slabs == 0 || !slabs.is_power_of_two() {
            return Err(Error::MismatchedScenario(format!("slab count {slabs} is not a power of two")));
        }
        let coarse: Vec<usize> = grid.cells.iter().map(|n| n / coarsen).collect();
        let ngroups: usize = coarse.iter().product();
        let mut groups = vec![Vec::new(); ngroups];
        for c in 0..grid.ncells() {
            let multi = grid.cell_multi(c);
            let mut g = 0;
            for i in (0..grid.dim).rev() {
                g = g * coarse[i] + multi[i] / coarsen;
            }
            groups[g].push(c);
        }
        let group_measures = groups.iter().map(|g| g.len() as f64 * grid.cell_measure()).collect();
        Ok(Partition {
            groups,
            group_measures,
            slabs,
            horizon,
        })
    }

    pub fn ngroups(&self) -> usize {
        self.groups.len()
    }

    pub fn ncells(&self) -> usize {
        self.slabs * self.ngroups()
    }

    pub fn index(&self, slab: usize, group: usize) -> usize {
        slab * self.ngroups() + group
    }

    pub fn slab_width(&self) -> f64 {
        self.horizon / self.slabs as f64
    }

    /// Slab holding the open-closed interval `((n-1)h, nh]` of a level with `steps` steps.
    fn slab_of_step(&self, n: usize, steps: usize) -> usize {
        (n - 1) * self.slabs / steps
    }

    fn group_of_cells(&self, ncells: usize) -> Vec<usize> {
        let mut out = vec![0; ncells];
        for (g, cells) in self.groups.iter().enumerate() {
            for &c in cells {
                out[c] = g;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub xi: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalYoungMeasure {
    pub partition: Partition,
    pub levels: Vec<u32>,
    /// Atoms of every partition cell, slab-major.
    pub atoms: Vec<Vec<Atom>>,
    pub width: usize,
}

/// Pools the piecewise-constant interpolants of all trajectories. Each level carries the same
/// total weight; within a level the weights are the space-time volumes of the samples.
pub fn build_measure(trajectories: &[&Trajectory], partition: &Partition) -> Result<EmpiricalYoungMeasure> {
    let Some(first) = trajectories.first() else {
        return Err(Error::MismatchedScenario("no trajectories to pool".into()));
    };
    let width = first.states[0].width;
    let ncells = first.states[0].ncells();
    for t in trajectories {
        if t.time.horizon != partition.horizon || t.time.horizon != first.time.horizon {
            return Err(Error::MismatchedScenario(format!(
                "horizon {} differs from {}",
                t.time.horizon, partition.horizon
            )));
        }
        if t.states[0] != first.states[0] || t.measures != first.measures {
            return Err(Error::MismatchedScenario(format!(
                "level {} does not share grid and initial state with level {}",
                t.time.level, first.time.level
            )));
        }
        if t.steps() < partition.slabs {
            return Err(Error::MismatchedScenario(format!(
                "level {} has {} steps, fewer than the {} slabs of the partition",
                t.time.level,
                t.steps(),
                partition.slabs
            )));
        }
    }
    let covered: usize = partition.groups.iter().map(Vec::len).sum();
    if covered != ncells {
        return Err(Error::MismatchedScenario(format!(
            "partition covers {covered} cells, trajectories have {ncells}"
        )));
    }
    let group_of = partition.group_of_cells(ncells);
    let nlev = trajectories.len() as f64;
    let mut atoms: Vec<Vec<Atom>> = vec![Vec::new(); partition.ncells()];
    for t in trajectories {
        let h = t.time.h();
        let steps = t.steps();
        for n in 1..=steps {
            let slab = partition.slab_of_step(n, steps);
            for (c, zc) in t.states[n].cells().enumerate() {
                let g = group_of[c];
                let w = h * t.measures[c] / (partition.slab_width() * partition.group_measures[g] * nlev);
                let cell = &mut atoms[partition.index(slab, g)];
                match cell.iter_mut().find(|a| a.xi == zc) {
                    Some(a) => a.weight += w,
                    None => cell.push(Atom { xi: zc.to_vec(), weight: w }),
                }
            }
        }
    }
    Ok(EmpiricalYoungMeasure {
        partition: partition.clone(),
        levels: trajectories.iter().map(|t| t.time.level).collect(),
        atoms,
        width,
    })
}

impl EmpiricalYoungMeasure {
    pub fn first_moment(&self) -> CellField {
        CellField::from_fn(self.atoms.len(), self.width, |c| {
            let mut m = vec![0.0; self.width];
            for a in &self.atoms[c] {
                for (mi, x) in m.iter_mut().zip(&a.xi) {
                    *mi += a.weight * x;
                }
            }
            m
        })
    }

    /// Largest deviation of `sum w = 1` over the partition.
    pub fn normalization_error(&self) -> f64 {
        self.atoms
            .iter()
            .map(|c| (c.iter().map(|a| a.weight).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Per partition cell: largest distance of an atom to the first moment.
    pub fn cell_spreads(&self) -> Vec<f64> {
        let mean = self.first_moment();
        self.atoms
            .iter()
            .enumerate()
            .map(|(c, atoms)| {
                atoms
                    .iter()
                    .map(|a| norm(&a.xi.iter().zip(mean.cell(c)).map(|(x, m)| x - m).collect::<Vec<_>>()))
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn spread(&self) -> f64 {
        self.cell_spreads().into_iter().fold(0.0, f64::max)
    }

    /// Cells whose atoms all coincide; there `F = grad f(z)` holds exactly.
    pub fn dirac_cells(&self) -> Vec<usize> {
        (0..self.atoms.len()).filter(|&c| self.atoms[c].len() == 1).collect()
    }
}

/// `F = sum_k w_k grad f(xi_k)` on every partition cell.
pub fn eval_f(measure: &EmpiricalYoungMeasure, f: &PotentialSpec) -> Result<CellField> {
    let mut worst: Option<(usize, f64)> = None;
    for (c, atoms) in measure.atoms.iter().enumerate() {
        for a in atoms {
            if !f.eval(&a.xi).is_finite() || f.grad(&a.xi).is_err() {
                let margin = f.domain_margin(&a.xi);
                if worst.is_none_or(|(_, m)| margin < m) {
                    worst = Some((c, margin));
                }
            }
        }
    }
    if let Some((cell, margin)) = worst {
        return Err(Error::AtomOutsideDomain { cell, margin });
    }
    let rows: Vec<Vec<f64>> = measure
        .atoms
        .par_iter()
        .map(|atoms| {
            let mut acc = vec![0.0; measure.width];
            for a in atoms {
                let g = f.grad(&a.xi).expect("checked above");
                for (s, v) in acc.iter_mut().zip(&g) {
                    *s += a.weight * v;
                }
            }
            acc
        })
        .collect();
    Ok(CellField::from_fn(rows.len(), measure.width, |c| rows[c].clone()))
}

/// Which existence result covers the configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// No hardening, coercive remanent energy.
    RateDependentCoercive,
    /// Positive definite hardening.
    Hardening,
    /// Neither hypothesis holds.
    Uncovered,
}

pub fn regime(tensors: &MaterialTensors, f: &PotentialSpec, g: &PotentialSpec) -> Regime {
    let p = match g.family {
        crate::convex::Family::PowerLaw { p, .. } => p,
        _ => 2.0,
    };
    match tensors.hardening_kind {
        HardeningKind::PositiveDefinite => Regime::Hardening,
        HardeningKind::Zero if f.coercive_for(p) => Regime::RateDependentCoercive,
        _ => Regime::Uncovered,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvsRow {
    pub time: f64,
    pub left: f64,
    pub right: f64,
    pub slack: f64,
    /// Largest distance of `(sigma, E) - L z - F` to `dom g` up to this time.
    pub constraint_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvsResidualReport {
    pub rows: Vec<MvsRow>,
    pub field_f: CellField,
    pub regime: Regime,
    /// Largest `|F - grad f(first moment)|` over the partition.
    pub f_deviation: f64,
}

/// Evaluates both sides of the measure-valued inequality on the finest trajectory at every
/// checkpoint. The hardening acting in the inequality is `L + w I`, the operator the trajectory
/// was computed with. The right side integrates in time per cell before summing over space.
pub fn mvs_residual(
    traj: &Trajectory,
    measure: &EmpiricalYoungMeasure,
    tensors: &MaterialTensors,
    f: &PotentialSpec,
    g: &PotentialSpec,
    weight: f64,
    checkpoints: &[f64],
) -> Result<MvsResidualReport> {
    let field_f = eval_f(measure, f)?;
    let part = &measure.partition;
    if part.horizon != traj.time.horizon || traj.steps() < part.slabs {
        return Err(Error::MismatchedScenario("trajectory does not refine the measure partition".into()));
    }
    let ncells = traj.states[0].ncells();
    let group_of = part.group_of_cells(ncells);
    let moment = measure.first_moment();
    let f_deviation = (0..moment.ncells())
        .map(|c| {
            let gm = f.grad(moment.cell(c)).map_err(|_| Error::AtomOutsideDomain {
                cell: c,
                margin: f.domain_margin(moment.cell(c)),
            })?;
            Ok(norm(&gm.iter().zip(field_f.cell(c)).map(|(a, b)| a - b).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let h = traj.time.h();
    let steps = traj.steps();
    let k = traj.states[0].width;
    let l_eff = &tensors.hardening + DMatrix::identity(k, k) * weight;
    // per step and cell: (left integrand, right integrand, violation)
    let mut per_step = Vec::with_capacity(steps);
    for n in 1..=steps {
        let rate = traj.rate(n);
        let se = traj.fields[n].sigma_e();
        let z = &traj.states[n];
        let slab = part.slab_of_step(n, steps);
        let mut cells = Vec::with_capacity(ncells);
        for c in 0..ncells {
            let zc = z.cell(c);
            let lz = &l_eff * DVector::from_column_slice(zc);
            let fc = field_f.cell(part.index(slab, group_of[c]));
            let s: Vec<f64> = (0..k).map(|i| se.cell(c)[i] - lz[i] - fc[i]).collect();
            let ps = g.project_domain(&s);
            let viol = norm(&s.iter().zip(&ps).map(|(a, b)| a - b).collect::<Vec<_>>());
            let gf = f.grad(zc).map_err(|e| Error::DomainEscape {
                step: n,
                detail: format!("cell {c}: {e}"),
            })?;
            let drive: Vec<f64> = (0..k).map(|i| se.cell(c)[i] - gf[i] - lz[i]).collect();
            let left = g.conjugate_eval(rate.cell(c))? + g.eval(&ps);
            let right = dot(rate.cell(c), &drive);
            cells.push((left, right, viol));
        }
        per_step.push(cells);
    }
    let rows = checkpoints
        .iter()
        .map(|&t| {
            let t = t.clamp(0.0, traj.time.horizon);
            let mut left = 0.0;
            let mut right = 0.0;
            let mut viol = 0.0f64;
            for c in 0..ncells {
                let mut inner = 0.0;
                for n in 1..=steps {
                    let t0 = (n - 1) as f64 * h;
                    if t0 >= t {
                        break;
                    }
                    let dt = (n as f64 * h).min(t) - t0;
                    let (l, r, v) = per_step[n - 1][c];
                    left += traj.measures[c] * dt * l;
                    inner += dt * r;
                    viol = viol.max(v);
                }
                right += traj.measures[c] * inner;
            }
            MvsRow {
                time: t,
                left,
                right,
                slack: right - left,
                constraint_violation: viol,
            }
        })
        .collect();
    Ok(MvsResidualReport {
        rows,
        field_f,
        regime: regime(tensors, f, g),
        f_deviation,
    })
}

/// `|| z_a - z_b ||_{L^2(Omega_T)}` of the piecewise-affine interpolants, exact on the finer grid.
pub fn level_difference(a: &Trajectory, b: &Trajectory) -> f64 {
    let fine = if a.steps() >= b.steps() { a } else { b };
    let h = fine.time.h();
    let gauss = [-1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()];
    let mut total = 0.0;
    for n in 1..=fine.steps() {
        for x in gauss {
            let t = fine.time.time(n - 1) + 0.5 * h * (1.0 + x);
            let d = a.affine(t).axpy(-1.0, &b.affine(t));
            total += 0.5 * h * d.dot(&d, &fine.measures);
        }
    }
    total.sqrt()
}

/// Refinement study over consecutive levels.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<u32>,
    /// `||z_{m+1} - z_m||` for consecutive levels.
    pub differences: Vec<f64>,
    /// `differences[i+1] / differences[i]`
    pub ratios: Vec<f64>,
    /// Spread of the measure pooled from levels `m, m+1` on the level-`m` time grid.
    pub spreads: Vec<f64>,
    /// `max |F - grad f(first moment)|` of the same measures.
    pub f_deviations: Vec<f64>,
    pub energy: Vec<EnergyReport>,
}

/// Tabulates level differences, pooled-measure statistics and ledger sequences.
/// `runs` must be sorted by level and nest dyadically.
pub fn convergence_study(
    runs: &[(Trajectory, EnergyLedger)],
    grid: &Grid,
    f: &PotentialSpec,
) -> Result<ConvergenceReport> {
    for w in runs.windows(2) {
        if w[1].0.time.level != w[0].0.time.level + 1 {
            return Err(Error::MismatchedScenario(format!(
                "levels {} and {} are not consecutive",
                w[0].0.time.level, w[1].0.time.level
            )));
        }
    }
    let mut differences = Vec::new();
    let mut spreads = Vec::new();
    let mut f_deviations = Vec::new();
    for w in runs.windows(2) {
        let (coarse, fine) = (&w[0].0, &w[1].0);
        differences.push(level_difference(coarse, fine));
        let part = Partition::new(grid, 1, coarse.steps(), coarse.time.horizon)?;
        let measure = build_measure(&[coarse, fine], &part)?;
        spreads.push(measure.spread());
        let field_f = eval_f(&measure, f)?;
        let moment = measure.first_moment();
        let mut dev = 0.0f64;
        for c in 0..moment.ncells() {
            let gm = f.grad(moment.cell(c))?;
            dev = dev.max(norm(&gm.iter().zip(field_f.cell(c)).map(|(a, b)| a - b).collect::<Vec<_>>()));
        }
        f_deviations.push(dev);
    }
    let ratios = differences
        .windows(2)
        .map(|d| if d[0] == 0.0 { 0.0 } else { d[1] / d[0] })
        .collect();
    Ok(ConvergenceReport {
        levels: runs.iter().map(|r| r.0.time.level).collect(),
        differences,
        ratios,
        spreads,
        f_deviations,
        energy: runs.iter().map(|(t, l)| energy_report(l, t)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{assemble, NodalLoads};
    use crate::material::{make_tensors, CouplingParams, DielectricParams, ElasticParams, HardeningParams};
    use crate::rothe::{StepOptions, SteppedProblem, TimeGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bare(level: u32, states: Vec<CellField>) -> Trajectory {
        let n = states[0].ncells();
        Trajectory {
            time: TimeGrid::new(1.0, level),
            measures: vec![1.0 / n as f64; n],
            states,
            sigma: Vec::new(),
            fields: Vec::new(),
            records: Vec::new(),
        }
    }

    fn grid(n: usize) -> Grid {
        Grid::new(vec![n], vec![1.0]).unwrap()
    }

    fn radial() -> PotentialSpec {
        PotentialSpec::log_radial(1, 1.0).unwrap()
    }

    #[test]
    fn identical_levels_give_dirac_measures() {
        let z = CellField::from_fn(4, 2, |c| vec![0.1 * c as f64, -0.2]);
        let a = bare(2, vec![z.clone(); 5]);
        let b = bare(3, vec![z.clone(); 9]);
        let part = Partition::new(&grid(4), 1, 2, 1.0).unwrap();
        let m = build_measure(&[&a, &b], &part).unwrap();
        assert_eq!(m.dirac_cells().len(), part.ncells());
        for (i, atoms) in m.atoms.iter().enumerate() {
            assert_eq!(atoms[0].xi, z.cell(i % 4));
            assert!((atoms[0].weight - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.spread(), 0.0);
        let f = radial();
        let ff = eval_f(&m, &f).unwrap();
        for c in 0..part.ncells() {
            assert_eq!(ff.cell(c), f.grad(z.cell(c % 4)).unwrap().as_slice());
        }
    }

    #[test]
    fn two_levels_split_the_weight() {
        let z1 = CellField::from_fn(1, 2, |_| vec![0.1, 0.2]);
        let z2 = CellField::from_fn(1, 2, |_| vec![0.3, -0.1]);
        let z0 = CellField::zeros(1, 2);
        let a = bare(0, vec![z0.clone(), z1.clone()]);
        let b = bare(1, vec![z0, z2.clone(), z2.clone()]);
        let m = build_measure(&[&a, &b], &Partition::new(&grid(1), 1, 1, 1.0).unwrap()).unwrap();
        assert_eq!(m.atoms[0].len(), 2);
        assert_eq!(m.atoms[0][0].xi, z1.data);
        assert_eq!(m.atoms[0][1].xi, z2.data);
        for a in &m.atoms[0] {
            assert!((a.weight - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_match_pooled_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut random_traj = |level: u32| {
            let steps = 1usize << level;
            let states = (0..=steps)
                .map(|n| {
                    CellField::from_fn(8, 2, |_| {
                        if n == 0 {
                            vec![0.0, 0.0]
                        } else {
                            vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]
                        }
                    })
                })
                .collect();
            bare(level, states)
        };
        let trajs: Vec<Trajectory> = (2..=4).map(&mut random_traj).collect();
        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let part = Partition::new(&grid(8), 2, 4, 1.0).unwrap();
        let m = build_measure(&refs, &part).unwrap();
        assert!(m.normalization_error() <= 1e-12);
        let moment = m.first_moment();
        for slab in 0..4 {
            for (gi, group) in part.groups.iter().enumerate() {
                // independent pooled average: per level, mean over the samples in the cell
                let mut avg = [0.0; 2];
                for t in &trajs {
                    let steps = t.steps();
                    let per = steps / 4;
                    for n in slab * per + 1..=(slab + 1) * per {
                        for &c in group {
                            for i in 0..2 {
                                avg[i] += t.states[n].cell(c)[i] / (per * group.len() * trajs.len()) as f64;
                            }
                        }
                    }
                }
                let got = moment.cell(part.index(slab, gi));
                assert!((got[0] - avg[0]).abs() <= 1e-12 && (got[1] - avg[1]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_energy_averages_to_the_moment() {
        let f = PotentialSpec::quadratic(1, DMatrix::identity(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let states = (0..=4).map(|_| CellField::from_fn(2, 2, |_| vec![rng.gen(), rng.gen()])).collect();
        let t = bare(2, states);
        let m = build_measure(&[&t], &Partition::new(&grid(2), 2, 1, 1.0).unwrap()).unwrap();
        let ff = eval_f(&m, &f).unwrap();
        let mom = m.first_moment();
        for (a, b) in ff.data.iter().zip(&mom.data) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_atom_average_matches_finite_differences() {
        let f = radial();
        let atoms = [vec![0.3, 0.45], vec![-0.2, -0.7]];
        let m = EmpiricalYoungMeasure {
            partition: Partition::new(&grid(1), 1, 1, 1.0).unwrap(),
            levels: vec![0],
            atoms: vec![vec![
                Atom { xi: atoms[0].clone(), weight: 0.3 },
                Atom { xi: atoms[1].clone(), weight: 0.7 },
            ]],
            width: 2,
        };
        let ff = eval_f(&m, &f).unwrap();
        let step = 1e-6;
        for i in 0..2 {
            let mut fd = 0.0;
            for (a, w) in atoms.iter().zip([0.3, 0.7]) {
                let (mut p, mut q) = (a.clone(), a.clone());
                p[i] += step;
                q[i] -= step;
                fd += w * (f.eval(&p) - f.eval(&q)) / (2.0 * step);
            }
            assert!((ff.data[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn atoms_outside_the_domain_are_reported() {
        let m = EmpiricalYoungMeasure {
            partition: Partition::new(&grid(2), 1, 1, 1.0).unwrap(),
            levels: vec![0],
            atoms: vec![
                vec![Atom { xi: vec![0.0, 1.2], weight: 1.0 }],
                vec![Atom { xi: vec![0.0, 1.5], weight: 0.5 }, Atom { xi: vec![0.0, 0.0], weight: 0.5 }],
            ],
            width: 2,
        };
        match eval_f(&m, &radial()) {
            Err(Error::AtomOutsideDomain { cell, margin }) => {
                assert_eq!(cell, 1);
                assert!((margin + 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let z = CellField::zeros(2, 2);
        let a = bare(1, vec![z.clone(); 3]);
        let mut b = bare(2, vec![z.clone(); 5]);
        b.time = TimeGrid::new(2.0, 2);
        let part = Partition::new(&grid(2), 1, 2, 1.0).unwrap();
        assert!(matches!(build_measure(&[&a, &b], &part), Err(Error::MismatchedScenario(_))));
        let fine = Partition::new(&grid(2), 1, 4, 1.0).unwrap();
        assert!(matches!(build_measure(&[&a], &fine), Err(Error::MismatchedScenario(_))));
        assert!(Partition::new(&grid(3), 2, 1, 1.0).is_err());
    }

    #[test]
    fn measure_average_of_gradient_norm_dominates() {
        // |grad f| is a convex function of P for the radial saturation energy
        let f = radial();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-0.95..0.95)];
            let b = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-0.95..0.95)];
            let w: f64 = rng.gen();
            let mean: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
            let avg = w * norm(&f.grad(&a).unwrap()) + (1.0 - w) * norm(&f.grad(&b).unwrap());
            assert!(avg >= norm(&f.grad(&mean).unwrap()) - 1e-12);
        }
    }

    fn bar_tensors(hardening: HardeningParams) -> MaterialTensors {
        make_tensors(
            1,
            &ElasticParams::Matrix(vec![2.0]),
            &DielectricParams::Diagonal(vec![1.5]),
            &CouplingParams::Matrix(vec![0.4]),
            &hardening,
        )
        .unwrap()
    }

    #[test]
    fn dirac_residual_is_bounded_by_the_certificates() {
        let tensors = bar_tensors(HardeningParams::Zero);
        let grid = grid(8);
        let sys = assemble(&grid, &tensors).unwrap();
        let f = radial();
        let g = PotentialSpec::power_law(1, 1.0, 2.0).unwrap();
        let time = TimeGrid::new(1.0, 4);
        let unit = NodalLoads::from_fn(&grid, |x| (vec![(3.0 * x[0]).sin()], 1.0));
        let trace = sys.load_trace(&unit).unwrap();
        let amp: Vec<f64> = (0..=time.steps()).map(|n| 2.0 * (n as f64 * time.h()).min(0.5)).collect();
        let p = SteppedProblem::new(
            &sys,
            f.clone(),
            g.clone(),
            0.25,
            time,
            amp.iter().map(|a| trace.scale(*a)).collect(),
            amp.iter().map(|a| unit.scaled(*a, *a)).collect(),
            StepOptions::default(),
        )
        .unwrap();
        let (traj, _) = p.run(&CellField::zeros(8, 2)).unwrap();
        let m = build_measure(&[&traj], &Partition::new(&grid, 1, 16, 1.0).unwrap()).unwrap();
        let rep = mvs_residual(&traj, &m, &tensors, &f, &g, 0.25, &[0.5, 1.0]).unwrap();
        assert_eq!(rep.regime, Regime::RateDependentCoercive);
        assert_eq!(rep.f_deviation, 0.0);
        let certs: f64 = traj.records[1..].iter().map(|r| time.h() * r.certificate).sum();
        let last = rep.rows.last().unwrap();
        assert!(last.left > 0.0);
        assert!(last.slack >= -1e-5);
        assert!(-last.slack <= certs + 1e-13, "{} vs {certs}", last.slack);
    }

    #[test]
    fn zero_trajectory_has_zero_residual() {
        let tensors = bar_tensors(HardeningParams::Isotropic(1.0));
        let grid = grid(4);
        let sys = assemble(&grid, &tensors).unwrap();
        let f = radial();
        let g = PotentialSpec::power_law(1, 1.0, 2.0).unwrap();
        let time = TimeGrid::new(1.0, 2);
        let p = SteppedProblem::new(
            &sys,
            f.clone(),
            g.clone(),
            0.5,
            time,
            vec![CellField::zeros(4, 2); 5],
            vec![NodalLoads::zeros(&grid); 5],
            StepOptions::default(),
        )
        .unwrap();
        let (traj, ledger) = p.run(&CellField::zeros(4, 2)).unwrap();
        let m = build_measure(&[&traj], &Partition::new(&grid, 1, 4, 1.0).unwrap()).unwrap();
        let rep = mvs_residual(&traj, &m, &tensors, &f, &g, 0.5, &[1.0]).unwrap();
        assert_eq!(rep.regime, Regime::Hardening);
        assert_eq!((rep.rows[0].left, rep.rows[0].right, rep.rows[0].slack), (0.0, 0.0, 0.0));
        let study = convergence_study(&[(traj.clone(), ledger.clone()), (traj, ledger)], &grid, &f);
        assert!(matches!(study, Err(Error::MismatchedScenario(_))));
    }

    #[test]
    fn steady_flow_scales_with_the_horizon() {
        // f = 0 and no hardening: starting from M z0 = zhat - s with s the kernel part of zhat, the
        // driving force stays at s and z drifts at the constant rate 2 c s.
        let tensors = bar_tensors(HardeningParams::Zero);
        let grid = grid(4);
        let sys = assemble(&grid, &tensors).unwrap();
        let f = PotentialSpec::quadratic(1, DMatrix::zeros(2, 2)).unwrap();
        let g = PotentialSpec::power_law(1, 0.5, 2.0).unwrap();
        let loads = NodalLoads::from_fn(&grid, |x| (vec![1.0 + x[0]], 0.5));
        let zhat = sys.load_trace(&loads).unwrap();
        let n = zhat.data.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = CellField::zeros(4, 2);
            e.data[j] = 1.0;
            m.set_column(j, &DVector::from_vec(sys.apply_m(&e).unwrap().data));
        }
        let m = (&m + m.transpose()) * 0.5;
        let eig = m.clone().symmetric_eigen();
        let zh = DVector::from_column_slice(&zhat.data);
        let mut kernel_part = DVector::zeros(n);
        let mut z0 = DVector::zeros(n);
        let top = eig.eigenvalues.amax();
        for i in 0..n {
            let v = eig.eigenvectors.column(i);
            let coef = v.dot(&zh);
            if eig.eigenvalues[i].abs() < 1e-10 * top {
                kernel_part += v * coef;
            } else {
                z0 += v * (coef / eig.eigenvalues[i]);
            }
        }
        assert!(kernel_part.norm() > 1e-3);
        let z0 = CellField { width: 2, data: z0.as_slice().to_vec() };
        let run = |horizon: f64, level: u32| {
            let time = TimeGrid::new(horizon, level);
            let k = time.steps() + 1;
            let p = SteppedProblem::new(
                &sys,
                f.clone(),
                g.clone(),
                0.0,
                time,
                vec![zhat.clone(); k],
                vec![loads.clone(); k],
                StepOptions::default(),
            )
            .unwrap();
            let (traj, _) = p.run(&z0).unwrap();
            let meas = build_measure(&[&traj], &Partition::new(&grid, 1, time.steps(), horizon).unwrap()).unwrap();
            let rep = mvs_residual(&traj, &meas, &tensors, &f, &g, 0.0, &[horizon]).unwrap();
            (traj, rep.rows[0].clone())
        };
        let (short, a) = run(1.0, 3);
        let (_, b) = run(2.0, 4);
        let r1 = short.rate(1);
        for n in 2..=short.steps() {
            assert!(short.rate(n).axpy(-1.0, &r1).max_norm() < 1e-9);
        }
        assert!(a.left > 1e-4);
        assert!((b.left - 2.0 * a.left).abs() <= 1e-9 * a.left);
        assert!((b.right - 2.0 * a.right).abs() <= 1e-9 * a.right.abs());
        assert!((b.slack - 2.0 * a.slack).abs() <= 1e-9 * a.left);
    }
}
