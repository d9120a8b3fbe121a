//! Scenario files: TOML schema, validation and canonical serialization.
//!
//! ```toml
//! [grid]
//! cells = [16]
//! lengths = [1.0]
//!
//! [material]
//! elastic = { kind = "isotropic", lambda = 1.0, mu = 0.5 }
//! dielectric = { kind = "diagonal", values = [1.5] }
//! coupling = { kind = "matrix", values = [0.4] }
//! hardening = { kind = "isotropic", value = 0.5 }
//!
//! [potential.f]
//! family = "quadratic"
//! h = [1.0, 0.2, 0.2, 0.8]
//!
//! [potential.g]
//! family = "power_law"
//! c = 1.0
//! p = 2.0
//!
//! [time]
//! horizon = 1.0
//! level = 6
//!
//! [load]
//! profile = "sine"
//! direction = [1.0]
//! [[load.sample]]
//! t = 0.0
//! b = 0.0
//! q = 0.0
//! ```
//!
//! Omitted sections take the defaults of [`Config::default`]; `potential.f`, `potential.g`,
//! `grid` and `material` are required.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex::PotentialSpec;
use crate::elliptic::{AssembledSystem, Grid, NodalLoads};
use crate::error::{Error, Result, Violation};
use crate::field::CellField;
use crate::material::{
    make_tensors, sym_dim, CouplingParams, DielectricParams, ElasticParams, HardeningParams, MaterialTensors,
};
use crate::rothe::{average_loads, LoadHistory, StepOptions, SteppedProblem, TimeGrid};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: Option<GridConfig>,
    pub material: Option<MaterialConfig>,
    #[serde(default)]
    pub potential: PotentialsConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub load: LoadConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub study: StudyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub elastic: ElasticConfig,
    pub dielectric: DielectricConfig,
    #[serde(default = "zero_coupling")]
    pub coupling: CouplingConfig,
    #[serde(default = "zero_hardening")]
    pub hardening: HardeningConfig,
}

fn zero_coupling() -> CouplingConfig {
    CouplingConfig::Zero
}

fn zero_hardening() -> HardeningConfig {
    HardeningConfig::Zero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElasticConfig {
    Isotropic { lambda: f64, mu: f64 },
    /// Row-major Mandel matrix.
    Matrix { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DielectricConfig {
    Diagonal { values: Vec<f64> },
    Matrix { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    Zero,
    Poled { e31: f64, e33: f64, e15: f64 },
    Matrix { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HardeningConfig {
    Zero,
    Isotropic { value: f64 },
    Matrix { values: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialsConfig {
    pub f: Option<PotentialConfig>,
    pub g: Option<PotentialConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    PowerLaw { c: f64, p: f64 },
    Ball { kappa: f64 },
    LogRadial { ps: f64 },
    LogDirectional { ps: f64, direction: Vec<f64> },
    /// Row-major `k x k` matrix.
    Quadratic { h: Vec<f64> },
    Sum { parts: Vec<PotentialConfig> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub level: u32,
    /// Level range `[m0, m1]` of the convergence study.
    pub levels: [u32; 2],
    /// Weight of the identity added to the hardening; `1/m` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<f64>,
    /// Checkpoint times of the measure-valued residual; the horizon when empty.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            horizon: 1.0,
            level: 4,
            levels: [3, 5],
            regularization: None,
            checkpoints: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    /// `prod_i sin(pi x_i / L_i)`
    Sine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    pub profile: Profile,
    /// Direction of the body force; defaults to the last axis.
    #[serde(default)]
    pub direction: Vec<f64>,
    /// Amplitudes of `b` and `q`, linear between samples.
    #[serde(default, rename = "sample")]
    pub samples: Vec<LoadSample>,
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig {
            profile: Profile::Uniform,
            direction: Vec::new(),
            samples: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSample {
    pub t: f64,
    pub b: f64,
    pub q: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Zero,
    Uniform { value: Vec<f64> },
    Cells { values: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub step: f64,
    pub energy: f64,
    pub mvs: f64,
    pub linear: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            step: 1e-6,
            energy: 1e-8,
            mvs: 1e-5,
            linear: 1e-10,
            max_iterations: 20_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Cells per axis merged into one cell of the measure partition.
    pub coarsen: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { coarsen: 1 }
    }
}

fn parse_error(src: &str, err: toml::de::Error) -> Error {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &src[..span.start.min(src.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse {
        line,
        column,
        message: err.message().trim().to_string(),
    }
}

impl Config {
    pub fn parse(src: &str) -> Result<Config> {
        toml::from_str(src).map_err(|e| parse_error(src, e))
    }

    /// Canonical text: every field explicit, fixed key order.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// A validated scenario with the derived objects.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: Config,
    pub grid: Grid,
    pub tensors: MaterialTensors,
    pub f: PotentialSpec,
    pub g: PotentialSpec,
    pub initial: CellField,
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let src = std::fs::read_to_string(path).map_err(|e| {
        Error::Validation(vec![Violation::new("scenario", format!("cannot read {}: {e}", path.display()))])
    })?;
    Scenario::from_config(Config::parse(&src)?)
}

fn build_potential(cfg: &PotentialConfig, dim: usize) -> Result<PotentialSpec> {
    match cfg {
        PotentialConfig::PowerLaw { c, p } => PotentialSpec::power_law(dim, *c, *p),
        PotentialConfig::Ball { kappa } => PotentialSpec::ball(dim, *kappa),
        PotentialConfig::LogRadial { ps } => PotentialSpec::log_radial(dim, *ps),
        PotentialConfig::LogDirectional { ps, direction } => {
            PotentialSpec::log_directional(dim, *ps, direction.clone())
        }
        PotentialConfig::Quadratic { h } => {
            let k = sym_dim(dim) + dim;
            if h.len() != k * k {
                return Err(Error::Validation(vec![Violation::new("h", format!("needs {} entries", k * k))]));
            }
            PotentialSpec::quadratic(dim, DMatrix::from_row_slice(k, k, h))
        }
        PotentialConfig::Sum { parts } => {
            let specs = parts.iter().map(|p| build_potential(p, dim)).collect::<Result<Vec<_>>>()?;
            PotentialSpec::sum(specs)
        }
    }
}

/// Collects the violations of a fallible build under the given field prefix.
fn absorb<T>(out: &mut Vec<Violation>, prefix: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(Error::Validation(vs)) => {
            out.extend(vs.into_iter().map(|v| Violation::new(format!("{prefix}.{}", v.field), v.rule)));
            None
        }
        Err(e) => {
            out.push(Violation::new(prefix, e.to_string()));
            None
        }
    }
}

impl Scenario {
    pub fn from_config(config: Config) -> Result<Scenario> {
        let mut v = Vec::new();
        let grid = match &config.grid {
            None => {
                v.push(Violation::new("grid", "required"));
                None
            }
            Some(g) => {
                if !(1..=3).contains(&g.cells.len()) {
                    v.push(Violation::new("grid.cells", "needs 1, 2 or 3 entries"));
                }
                if g.cells.contains(&0) {
                    v.push(Violation::new("grid.cells", "every count must be >= 1"));
                }
                if g.lengths.len() != g.cells.len() {
                    v.push(Violation::new("grid.lengths", "needs one length per axis"));
                }
                if g.lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    v.push(Violation::new("grid.lengths", "every length must be > 0"));
                }
                if v.is_empty() {
                    absorb(&mut v, "grid", Grid::new(g.cells.clone(), g.lengths.clone()))
                } else {
                    None
                }
            }
        };
        let dim = grid.as_ref().map(|g| g.dim);

        let f = match &config.potential.f {
            None => {
                v.push(Violation::new("potential.f", "required"));
                None
            }
            Some(c) => dim.and_then(|d| absorb(&mut v, "potential.f", build_potential(c, d))),
        };
        if let Some(f) = &f {
            if !f.is_energy() {
                v.push(Violation::new("potential.f", "must be quadratic, log_radial, log_directional or a sum of these"));
            }
        }
        let g = match &config.potential.g {
            None => {
                v.push(Violation::new("potential.g", "required"));
                None
            }
            Some(c) => dim.and_then(|d| absorb(&mut v, "potential.g", build_potential(c, d))),
        };
        if let Some(g) = &g {
            if !g.is_dissipation() {
                v.push(Violation::new("potential.g", "must be power_law or ball"));
            }
        }

        let t = &config.time;
        if !(t.horizon > 0.0 && t.horizon.is_finite()) {
            v.push(Violation::new("time.horizon", "must be > 0"));
        }
        if t.level > 30 {
            v.push(Violation::new("time.level", "must be <= 30"));
        }
        if t.levels[0] > t.levels[1] {
            v.push(Violation::new("time.levels", "needs m0 <= m1"));
        }
        if t.levels[1] > 30 {
            v.push(Violation::new("time.levels", "must be <= 30"));
        }
        match t.regularization {
            Some(w) if !(w >= 0.0 && w.is_finite()) => v.push(Violation::new("time.regularization", "must be >= 0")),
            None if t.level == 0 || t.levels[0] == 0 => {
                v.push(Violation::new("time.level", "level 0 needs an explicit time.regularization"))
            }
            _ => {}
        }
        if t.checkpoints.iter().any(|c| !(*c > 0.0 && *c <= t.horizon)) {
            v.push(Violation::new("time.checkpoints", "must lie in (0, horizon]"));
        }

        let l = &config.load;
        if let Some(d) = dim {
            if !l.direction.is_empty() && l.direction.len() != d {
                v.push(Violation::new("load.direction", format!("needs {d} entries")));
            }
        }
        if !l.samples.is_empty() {
            if l.samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
                v.push(Violation::new("load.sample", "times must increase strictly"));
            }
            if l.samples[0].t > 0.0 || l.samples[l.samples.len() - 1].t < t.horizon {
                v.push(Violation::new("load.sample", "must cover [0, horizon]"));
            }
            if l.samples.iter().any(|s| !(s.t.is_finite() && s.b.is_finite() && s.q.is_finite())) {
                v.push(Violation::new("load.sample", "values must be finite"));
            }
        }

        let tol = &config.tolerances;
        for (name, val) in [
            ("tolerances.step", tol.step),
            ("tolerances.energy", tol.energy),
            ("tolerances.mvs", tol.mvs),
            ("tolerances.linear", tol.linear),
        ] {
            if !(val > 0.0 && val.is_finite()) {
                v.push(Violation::new(name, "must be > 0"));
            }
        }
        if tol.max_iterations == 0 {
            v.push(Violation::new("tolerances.max_iterations", "must be >= 1"));
        }
        if let Some(grid) = &grid {
            let c = config.study.coarsen;
            if c == 0 || grid.cells.iter().any(|n| n % c != 0) {
                v.push(Violation::new("study.coarsen", "must divide every cell count"));
            }
        }

        let mut tensor_error = None;
        let tensors = match (&config.material, dim) {
            (None, _) => {
                v.push(Violation::new("material", "required"));
                None
            }
            (Some(_), None) => None,
            (Some(m), Some(d)) => match build_tensors(m, d) {
                Ok(t) => Some(t),
                Err(e @ Error::NonPositiveDefinite { .. }) => {
                    tensor_error = Some(e);
                    None
                }
                Err(e) => absorb(&mut v, "material", Err(e)),
            },
        };

        let initial = match (&grid, dim) {
            (Some(grid), Some(d)) => {
                let k = sym_dim(d) + d;
                let init = initial_state(&config.initial, grid.ncells(), k, &mut v);
                if let (Some(z0), Some(f)) = (&init, &f) {
                    for (c, zc) in z0.cells().enumerate() {
                        if !f.eval(zc).is_finite() {
                            v.push(Violation::new("initial", format!("cell {c} lies outside the domain of f")));
                        }
                    }
                }
                init
            }
            _ => None,
        };

        if let Some(e) = tensor_error {
            if v.is_empty() {
                return Err(e);
            }
            v.push(Violation::new("material", e.to_string()));
        }
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        Ok(Scenario {
            grid: grid.expect("validated"),
            tensors: tensors.expect("validated"),
            f: f.expect("validated"),
            g: g.expect("validated"),
            initial: initial.expect("validated"),
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Weight `w` of `M_m = M + L + w I` at level `m`.
    pub fn weight(&self, level: u32) -> f64 {
        self.config.time.regularization.unwrap_or(1.0 / level as f64)
    }

    pub fn options(&self) -> StepOptions {
        StepOptions {
            step_tol: self.config.tolerances.step,
            max_iterations: self.config.tolerances.max_iterations,
            seed: self.config.tolerances.seed,
            ..StepOptions::default()
        }
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        if self.config.time.checkpoints.is_empty() {
            vec![self.config.time.horizon]
        } else {
            self.config.time.checkpoints.clone()
        }
    }

    /// Nodal loads with unit amplitudes: `(b, q) = (direction * profile, profile)`.
    pub fn unit_loads(&self) -> (NodalLoads, NodalLoads) {
        let d = self.dim();
        let direction = if self.config.load.direction.is_empty() {
            let mut e = vec![0.0; d];
            e[d - 1] = 1.0;
            e
        } else {
            self.config.load.direction.clone()
        };
        let lengths = self.grid.lengths.clone();
        let profile = self.config.load.profile;
        let shape = move |x: &[f64]| match profile {
            Profile::Uniform => 1.0,
            Profile::Sine => x
                .iter()
                .zip(&lengths)
                .map(|(xi, l)| (std::f64::consts::PI * xi / l).sin())
                .product(),
        };
        let b = NodalLoads::from_fn(&self.grid, |x| (direction.iter().map(|e| e * shape(x)).collect(), 0.0));
        let q = NodalLoads::from_fn(&self.grid, |x| (vec![0.0; d], shape(x)));
        (b, q)
    }

    /// Amplitudes `(b, q)` at `t = 0` followed by their step averages.
    pub fn amplitudes(&self, time: &TimeGrid) -> Vec<(f64, f64)> {
        let s = &self.config.load.samples;
        if s.is_empty() {
            return vec![(0.0, 0.0); time.steps() + 1];
        }
        let history = LoadHistory {
            samples: s.iter().map(|x| (x.t, CellField { width: 2, data: vec![x.b, x.q] })).collect(),
        };
        let at0 = history.at(0.0);
        std::iter::once((at0.data[0], at0.data[1]))
            .chain(average_loads(&history, time).into_iter().map(|a| (a.data[0], a.data[1])))
            .collect()
    }

    pub fn assemble(&self) -> Result<AssembledSystem> {
        let mut system = crate::elliptic::assemble(&self.grid, &self.tensors)?;
        system.linear_tol = self.config.tolerances.linear;
        Ok(system)
    }

    /// The stepped problem at `level`; load traces follow from the unit traces by linearity.
    pub fn problem<'a>(&self, system: &'a AssembledSystem, level: u32) -> Result<SteppedProblem<'a>> {
        let time = TimeGrid::new(self.config.time.horizon, level);
        let (ub, uq) = self.unit_loads();
        let (tb, tq) = (system.load_trace(&ub)?, system.load_trace(&uq)?);
        let amps = self.amplitudes(&time);
        let zhat = amps.iter().map(|(a, b)| tb.scale(*a).axpy(*b, &tq)).collect();
        let loads = amps.iter().map(|(a, b)| ub.scaled(*a, 0.0).add(&uq.scaled(0.0, *b))).collect();
        SteppedProblem::new(system, self.f.clone(), self.g.clone(), self.weight(level), time, zhat, loads, self.options())
    }
}

fn build_tensors(m: &MaterialConfig, dim: usize) -> Result<MaterialTensors> {
    let elastic = match &m.elastic {
        ElasticConfig::Isotropic { lambda, mu } => ElasticParams::Isotropic {
            lambda: *lambda,
            mu: *mu,
        },
        ElasticConfig::Matrix { values } => ElasticParams::Matrix(values.clone()),
    };
    let dielectric = match &m.dielectric {
        DielectricConfig::Diagonal { values } => DielectricParams::Diagonal(values.clone()),
        DielectricConfig::Matrix { values } => DielectricParams::Matrix(values.clone()),
    };
    let coupling = match &m.coupling {
        CouplingConfig::Zero => CouplingParams::Zero,
        CouplingConfig::Poled { e31, e33, e15 } => CouplingParams::Poled {
            e31: *e31,
            e33: *e33,
            e15: *e15,
        },
        CouplingConfig::Matrix { values } => CouplingParams::Matrix(values.clone()),
    };
    let hardening = match &m.hardening {
        HardeningConfig::Zero => HardeningParams::Zero,
        HardeningConfig::Isotropic { value } => HardeningParams::Isotropic(*value),
        HardeningConfig::Matrix { values } => HardeningParams::Matrix(values.clone()),
    };
    make_tensors(dim, &elastic, &dielectric, &coupling, &hardening)
}

fn initial_state(cfg: &InitialConfig, ncells: usize, k: usize, v: &mut Vec<Violation>) -> Option<CellField> {
    match cfg {
        InitialConfig::Zero => Some(CellField::zeros(ncells, k)),
        InitialConfig::Uniform { value } => {
            if value.len() != k {
                v.push(Violation::new("initial.value", format!("needs {k} entries")));
                return None;
            }
            Some(CellField::from_fn(ncells, k, |_| value.clone()))
        }
        InitialConfig::Cells { values } => {
            if values.len() != ncells {
                v.push(Violation::new("initial.values", format!("needs one row per cell ({ncells})")));
                return None;
            }
            if let Some(c) = values.iter().position(|r| r.len() != k) {
                v.push(Violation::new("initial.values", format!("row of cell {c} needs {k} entries")));
                return None;
            }
            Some(CellField::from_fn(ncells, k, |c| values[c].clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
cells = [4]
lengths = [1.0]

[material]
elastic = { kind = "matrix", values = [1.0] }
dielectric = { kind = "diagonal", values = [1.0] }

[potential.f]
family = "quadratic"
h = [1.0, 0.0, 0.0, 1.0]

[potential.g]
family = "power_law"
c = 1.0
p = 2.0
"#;

    fn with(extra: &str) -> String {
        format!("{MINIMAL}\n{extra}")
    }

    fn violations(src: &str) -> Vec<Violation> {
        match Scenario::from_config(Config::parse(src).unwrap()) {
            Err(Error::Validation(v)) => v,
            other => panic!("expected validation error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_config(Config::parse(MINIMAL).unwrap()).unwrap();
        assert_eq!(s.config.time, TimeConfig::default());
        assert_eq!(s.config.tolerances, Tolerances::default());
        assert_eq!(s.config.tolerances.step, 1e-6);
        assert_eq!(s.config.tolerances.energy, 1e-8);
        assert_eq!(s.config.tolerances.mvs, 1e-5);
        assert_eq!(s.config.tolerances.linear, 1e-10);
        assert_eq!(s.initial, CellField::zeros(4, 2));
        assert_eq!(s.weight(4), 0.25);
        assert!(s.amplitudes(&TimeGrid::new(1.0, 2)).iter().all(|a| *a == (0.0, 0.0)));
    }

    #[test]
    fn partial_sections_keep_remaining_defaults() {
        let s = Scenario::from_config(Config::parse(&with("[time]\nlevel = 2\n")).unwrap()).unwrap();
        assert_eq!(s.config.time.level, 2);
        assert_eq!(s.config.time.levels, TimeConfig::default().levels);
    }

    #[test]
    fn missing_dissipation_is_named() {
        let src = MINIMAL.replace("[potential.g]\nfamily = \"power_law\"\nc = 1.0\np = 2.0\n", "");
        let v = violations(&src);
        assert!(v.iter().any(|x| x.to_string() == "potential.g: required"), "{v:?}");
    }

    #[test]
    fn saturated_initial_state_names_the_cell() {
        let src = MINIMAL.replace(
            "family = \"quadratic\"\nh = [1.0, 0.0, 0.0, 1.0]",
            "family = \"log_radial\"\nps = 0.5",
        );
        let src = format!("{src}\n[initial]\nkind = \"cells\"\nvalues = [[0.0, 0.1], [0.0, 0.2], [0.0, 0.5], [0.0, 0.0]]\n");
        let v = violations(&src);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "initial");
        assert!(v[0].rule.contains("cell 2"));
    }

    #[test]
    fn every_violation_is_reported() {
        let src = with("[time]\nhorizon = -1.0\nlevels = [5, 3]\n\n[tolerances]\nstep = 0.0\n");
        let v = violations(&src);
        let fields: Vec<&str> = v.iter().map(|x| x.field.as_str()).collect();
        assert!(fields.contains(&"time.horizon"));
        assert!(fields.contains(&"time.levels"));
        assert!(fields.contains(&"tolerances.step"));
    }

    #[test]
    fn wrong_family_roles_are_rejected() {
        let src = MINIMAL
            .replace("family = \"power_law\"\nc = 1.0\np = 2.0", "family = \"log_radial\"\nps = 1.0");
        let v = violations(&src);
        assert!(v.iter().any(|x| x.field == "potential.g"));
    }

    #[test]
    fn indefinite_permittivity_is_a_tensor_error() {
        let src = MINIMAL.replace("values = [1.0] }\n\n[potential.f]", "values = [-1.0] }\n\n[potential.f]");
        match Scenario::from_config(Config::parse(&src).unwrap()) {
            Err(e @ Error::NonPositiveDefinite { .. }) => assert_eq!(e.exit_code(), 3),
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        let src = "[grid]\ncells = [4]\nlengths = [1.0\n";
        match Config::parse(src) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column >= 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        match Config::parse(&with("[tolerances]\nstepp = 1.0\n")) {
            Err(Error::Parse { line, message, .. }) => {
                assert!(line > 15);
                assert!(message.contains("stepp"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let cfg = Config::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
            let text = cfg.to_canonical();
            let again = Config::parse(&text).unwrap();
            assert_eq!(again, cfg, "{}", path.display());
            assert_eq!(again.to_canonical(), text);
            n += 1;
        }
        assert!(n >= 5);
    }

    #[test]
    fn amplitudes_are_step_averages() {
        let src = with("[[load.sample]]\nt = 0.0\nb = 0.0\nq = 1.0\n\n[[load.sample]]\nt = 1.0\nb = 2.0\nq = 1.0\n");
        let s = Scenario::from_config(Config::parse(&src).unwrap()).unwrap();
        let a = s.amplitudes(&TimeGrid::new(1.0, 1));
        assert_eq!(a, vec![(0.0, 1.0), (0.5, 1.0), (1.5, 1.0)]);
    }

    #[test]
    fn uncovered_load_window_is_rejected() {
        let src = with("[[load.sample]]\nt = 0.0\nb = 0.0\nq = 1.0\n\n[[load.sample]]\nt = 0.5\nb = 2.0\nq = 1.0\n");
        assert!(violations(&src).iter().any(|x| x.field == "load.sample"));
    }
}
