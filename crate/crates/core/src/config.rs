//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Keys may appear once per
//! file, unknown keys are rejected, and `--set` style overrides are applied
//! on top. Without `preset = cantilever` the mesh and load keys are
//! required; everything else defaults to the benchmark values.

use std::collections::HashSet;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adversary::BarrierConfig;
use crate::error::{Error, Result};
use crate::fe::{build_mesh, FeModel, LoadCase};
use crate::filter::build_filter;
use crate::material::MaterialParams;
use crate::robust::{MmaSettings, OuterSettings, RobustProblem};
use crate::uncertainty::{UncertaintySet, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Cantilever,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cantilever" => Ok(Preset::Cantilever),
            _ => Err(format!("unknown preset `{s}` (expected cantilever)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Linear,
    RhoWeighted,
    AvgQuad,
}

impl SetKind {
    fn name(self) -> &'static str {
        match self {
            SetKind::Linear => "linear",
            SetKind::RhoWeighted => "rho_weighted",
            SetKind::AvgQuad => "avg_quad",
        }
    }
}

impl FromStr for SetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(SetKind::Linear),
            "rho_weighted" => Ok(SetKind::RhoWeighted),
            "avg_quad" => Ok(SetKind::AvgQuad),
            _ => Err(format!("unknown set `{s}` (expected linear, rho_weighted or avg_quad)")),
        }
    }
}

/// Keys that must be given explicitly when no preset is selected.
const REQUIRED: [&str; 7] = ["nx", "ny", "width", "height", "load_x0", "load_x1", "load_magnitude"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    pub load_x0: f64,
    pub load_x1: f64,
    pub load_magnitude: f64,
    pub load_direction: [f64; 2],
    pub volume_fraction: f64,
    pub rho_min: f64,
    pub penal: f64,
    pub nu: f64,
    pub e0: f64,
    pub e_d: f64,
    pub filter_radius: f64,
    pub set: SetKind,
    /// `D` for the linear sets, `D1` for the averaged-quadratic set.
    pub budget: f64,
    /// `D2`.
    pub dispersion: f64,
    /// `m`, also the reference degradation of averaged-quadratic runs.
    pub anchor: f64,
    pub weighting: Weighting,
    pub barrier: BarrierConfig,
    pub outer: OuterSettings,
    /// Number of RAMP continuation values used in the report; `None` is off.
    pub continuation: Option<usize>,
    pub tikhonov: Option<f64>,
    /// Budgets of a sweep; empty runs the single `budget`.
    pub sweep: Vec<f64>,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Cantilever)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("cannot parse `{value}` for `{key}`: {e}"))
}

fn parse_list(key: &str, value: &str) -> std::result::Result<Vec<f64>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn parse_optional<T: FromStr + PartialEq + Default>(key: &str, value: &str) -> std::result::Result<Option<T>, String>
where
    T::Err: Display,
{
    if value == "off" {
        return Ok(None);
    }
    let v: T = parse_value(key, value)?;
    Ok((v != T::default()).then_some(v))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Benchmark values of the cantilever study.
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Cantilever => RunConfig {
                preset: Some(Preset::Cantilever),
                nx: 300,
                ny: 150,
                width: 2.0,
                height: 1.0,
                load_x0: 1.9,
                load_x1: 2.0,
                load_magnitude: 0.3,
                load_direction: [0.0, -1.0],
                volume_fraction: 0.5,
                rho_min: 0.01,
                penal: 4.0,
                nu: 0.3,
                e0: 1.0,
                e_d: 0.7,
                filter_radius: 0.045,
                set: SetKind::RhoWeighted,
                budget: 0.03,
                dispersion: 0.01,
                anchor: 0.4,
                weighting: Weighting::Plain,
                barrier: BarrierConfig::default(),
                outer: OuterSettings::default(),
                continuation: None,
                tikhonov: None,
                sweep: Vec::new(),
                out: PathBuf::from("out"),
                seed: 0,
            },
        }
    }

    /// Parse file text, with `preset` acting like a `preset = …` line.
    pub fn parse(text: &str, preset: Option<Preset>) -> Result<Self> {
        Self::from_sources(Some(text), preset, &[])
    }

    /// Combine an optional file, an optional preset and `key=value`
    /// overrides (later overrides win), then validate.
    pub fn from_sources(file: Option<&str>, preset: Option<Preset>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.preset = preset;
        let mut given: HashSet<String> = HashSet::new();
        if let Some(text) = file {
            for (idx, raw) in text.lines().enumerate() {
                let line = idx + 1;
                let content = raw.split('#').next().unwrap_or("").trim();
                if content.is_empty() {
                    continue;
                }
                let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                })?;
                let (key, value) = (key.trim(), value.trim());
                if !given.insert(key.to_string()) {
                    return Err(Error::Config {
                        line,
                        message: format!("duplicate key `{key}`"),
                    });
                }
                cfg.set(key, value).map_err(|message| Error::Config { line, message })?;
            }
        }
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| Error::Override {
                key: item.clone(),
                message: "expected key=value".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            given.insert(key.to_string());
            cfg.set(key, value).map_err(|message| Error::Override {
                key: key.to_string(),
                message,
            })?;
        }
        if cfg.preset.is_none() {
            if let Some(missing) = REQUIRED.iter().find(|k| !given.contains(**k)) {
                return Err(Error::Config {
                    line: 0,
                    message: format!("missing required key `{missing}` (or select a preset)"),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assign one key. The error string is the bare message.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let b = &mut self.barrier;
        let o = &mut self.outer;
        match key {
            "preset" => self.preset = if value == "none" { None } else { Some(parse_value(key, value)?) },
            "nx" => self.nx = parse_value(key, value)?,
            "ny" => self.ny = parse_value(key, value)?,
            "width" => self.width = parse_value(key, value)?,
            "height" => self.height = parse_value(key, value)?,
            "load_x0" => self.load_x0 = parse_value(key, value)?,
            "load_x1" => self.load_x1 = parse_value(key, value)?,
            "load_magnitude" => self.load_magnitude = parse_value(key, value)?,
            "load_dir_x" => self.load_direction[0] = parse_value(key, value)?,
            "load_dir_y" => self.load_direction[1] = parse_value(key, value)?,
            "volume_fraction" => self.volume_fraction = parse_value(key, value)?,
            "rho_min" => self.rho_min = parse_value(key, value)?,
            "penal" => self.penal = parse_value(key, value)?,
            "nu" => self.nu = parse_value(key, value)?,
            "e0" => self.e0 = parse_value(key, value)?,
            "e_d" => self.e_d = parse_value(key, value)?,
            "filter_radius" => self.filter_radius = parse_value(key, value)?,
            "set" => self.set = parse_value(key, value)?,
            "budget" => self.budget = parse_value(key, value)?,
            "dispersion" => self.dispersion = parse_value(key, value)?,
            "anchor" => self.anchor = parse_value(key, value)?,
            "weighting" => {
                self.weighting = match value {
                    "plain" => Weighting::Plain,
                    "rho" => Weighting::Rho,
                    _ => return Err(format!("unknown weighting `{value}` (expected plain or rho)")),
                }
            }
            "mu_init" => b.mu_init = parse_value(key, value)?,
            "mu_target" => b.mu_target = parse_value(key, value)?,
            "mu_decrease" => b.mu_decrease = parse_value(key, value)?,
            "mu_warm" => b.mu_warm = parse_value(key, value)?,
            "tol" => b.tol = parse_value(key, value)?,
            "constr_viol_tol" => b.constr_viol_tol = parse_value(key, value)?,
            "compl_inf_tol" => b.compl_inf_tol = parse_value(key, value)?,
            "max_newton" => b.max_newton = parse_value(key, value)?,
            "tau" => b.tau = parse_value(key, value)?,
            "max_iter" => o.max_iter = parse_value(key, value)?,
            "change_tol" => o.change_tol = parse_value(key, value)?,
            "move_limit" => o.mma.move_limit = parse_value(key, value)?,
            "asymptote_init" => o.mma.asymptote_init = parse_value(key, value)?,
            "asymptote_shrink" => o.mma.asymptote_shrink = parse_value(key, value)?,
            "asymptote_grow" => o.mma.asymptote_grow = parse_value(key, value)?,
            "albefa" => o.mma.albefa = parse_value(key, value)?,
            "continuation" => self.continuation = parse_optional(key, value)?,
            "tikhonov" => self.tikhonov = parse_optional(key, value)?,
            "sweep" => self.sweep = parse_list(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, name: &'static str, value: impl ToString, bound: &'static str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::param(name, value, bound))
            }
        }
        check(self.nx >= 1, "nx", self.nx, "at least 1")?;
        check(self.ny >= 1, "ny", self.ny, "at least 1")?;
        check(self.width > 0.0 && self.width.is_finite(), "width", self.width, "positive")?;
        check(self.height > 0.0 && self.height.is_finite(), "height", self.height, "positive")?;
        check(
            self.load_x0 >= 0.0 && self.load_x0 < self.load_x1,
            "load_x0",
            self.load_x0,
            "in [0, load_x1)",
        )?;
        check(self.load_x1 <= self.width, "load_x1", self.load_x1, "at most width")?;
        check(self.load_magnitude.is_finite(), "load_magnitude", self.load_magnitude, "finite")?;
        check(
            self.load_direction[0].hypot(self.load_direction[1]) > 0.0,
            "load_dir",
            format!("{:?}", self.load_direction),
            "a nonzero vector",
        )?;
        check(
            self.volume_fraction > 0.0 && self.volume_fraction <= 1.0,
            "volume_fraction",
            self.volume_fraction,
            "in (0, 1]",
        )?;
        check(self.rho_min > 0.0 && self.rho_min < 1.0, "rho_min", self.rho_min, "in (0, 1)")?;
        check(self.penal >= 1.0 && self.penal.is_finite(), "penal", self.penal, "at least 1")?;
        check((0.0..0.5).contains(&self.nu), "nu", self.nu, "in [0, 0.5)")?;
        check(self.e0 > 0.0 && self.e0.is_finite(), "e0", self.e0, "positive")?;
        check(self.e_d > 0.0 && self.e_d < self.e0, "e_d", self.e_d, "in (0, e0)")?;
        check(
            self.filter_radius > 0.0 && self.filter_radius.is_finite(),
            "filter_radius",
            self.filter_radius,
            "positive",
        )?;
        match self.set {
            SetKind::Linear | SetKind::RhoWeighted => {
                check((0.0..1.0).contains(&self.budget), "budget", self.budget, "in [0, 1)")?;
                for &d in &self.sweep {
                    check((0.0..1.0).contains(&d), "sweep", d, "budgets in [0, 1)")?;
                }
            }
            SetKind::AvgQuad => {
                check(self.budget > 0.0 && self.budget < 1.0, "budget", self.budget, "in (0, 1)")?;
                for &d in &self.sweep {
                    check(d > 0.0 && d < 1.0, "sweep", d, "budgets in (0, 1)")?;
                }
                check(self.dispersion >= 0.0 && self.dispersion.is_finite(), "dispersion", self.dispersion, "nonnegative")?;
                check(self.anchor.is_finite(), "anchor", self.anchor, "finite")?;
            }
        }
        if let Some(steps) = self.continuation {
            check(steps >= 2, "continuation", steps, "off or at least 2 steps")?;
        }
        if let Some(eps) = self.tikhonov {
            check(eps > 0.0 && eps.is_finite(), "tikhonov", eps, "off or positive")?;
        }
        self.barrier.validate()?;
        self.outer.validate()?;
        Ok(())
    }

    pub fn material(&self) -> MaterialParams {
        MaterialParams {
            e0: self.e0,
            e_d: self.e_d,
            nu: self.nu,
            p: self.penal,
        }
    }

    /// Uncertainty set for an equality budget.
    pub fn uncertainty_set(&self, budget: f64) -> UncertaintySet {
        match self.set {
            SetKind::Linear => UncertaintySet::Linear { budget },
            SetKind::RhoWeighted => UncertaintySet::RhoWeighted { budget },
            SetKind::AvgQuad => UncertaintySet::AvgQuad {
                mean: budget,
                dispersion: self.dispersion,
                anchor: self.anchor,
                weighting: self.weighting,
            },
        }
    }

    /// Budgets to run, ascending.
    pub fn budgets(&self) -> Vec<f64> {
        let mut v = if self.sweep.is_empty() {
            vec![self.budget]
        } else {
            self.sweep.clone()
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn build_model(&self) -> Result<FeModel> {
        let mesh = build_mesh(self.nx, self.ny, self.width, self.height)?;
        let load = LoadCase::cantilever(&mesh, self.load_x0, self.load_x1, self.load_magnitude, self.load_direction)?;
        FeModel::new(mesh, self.nu, load)
    }

    /// Problem for the first budget of [`RunConfig::budgets`].
    pub fn build_problem(&self) -> Result<RobustProblem> {
        self.validate()?;
        let model = self.build_model()?;
        let filter = build_filter(model.mesh(), self.filter_radius)?;
        Ok(RobustProblem {
            model,
            filter,
            params: self.material(),
            set: self.uncertainty_set(self.budgets()[0]),
            volume_fraction: self.volume_fraction,
            rho_min: self.rho_min,
            barrier: self.barrier,
            outer: self.outer,
            tikhonov: self.tikhonov.unwrap_or(0.0),
        })
    }

    /// Every key with its resolved value, in a fixed order. Parsing the
    /// output again reproduces the configuration.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let b = &self.barrier;
        let m: &MmaSettings = &self.outer.mma;
        let preset = match self.preset {
            Some(Preset::Cantilever) => "cantilever",
            None => "none",
        };
        vec![
            ("preset", preset.to_string()),
            ("nx", self.nx.to_string()),
            ("ny", self.ny.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("load_x0", self.load_x0.to_string()),
            ("load_x1", self.load_x1.to_string()),
            ("load_magnitude", self.load_magnitude.to_string()),
            ("load_dir_x", self.load_direction[0].to_string()),
            ("load_dir_y", self.load_direction[1].to_string()),
            ("volume_fraction", self.volume_fraction.to_string()),
            ("rho_min", self.rho_min.to_string()),
            ("penal", self.penal.to_string()),
            ("nu", self.nu.to_string()),
            ("e0", self.e0.to_string()),
            ("e_d", self.e_d.to_string()),
            ("filter_radius", self.filter_radius.to_string()),
            ("set", self.set.name().to_string()),
            ("budget", self.budget.to_string()),
            ("dispersion", self.dispersion.to_string()),
            ("anchor", self.anchor.to_string()),
            (
                "weighting",
                match self.weighting {
                    Weighting::Plain => "plain",
                    Weighting::Rho => "rho",
                }
                .to_string(),
            ),
            ("mu_init", b.mu_init.to_string()),
            ("mu_target", b.mu_target.to_string()),
            ("mu_decrease", b.mu_decrease.to_string()),
            ("mu_warm", b.mu_warm.to_string()),
            ("tol", b.tol.to_string()),
            ("constr_viol_tol", b.constr_viol_tol.to_string()),
            ("compl_inf_tol", b.compl_inf_tol.to_string()),
            ("max_newton", b.max_newton.to_string()),
            ("tau", b.tau.to_string()),
            ("max_iter", self.outer.max_iter.to_string()),
            ("change_tol", self.outer.change_tol.to_string()),
            ("move_limit", m.move_limit.to_string()),
            ("asymptote_init", m.asymptote_init.to_string()),
            ("asymptote_shrink", m.asymptote_shrink.to_string()),
            ("asymptote_grow", m.asymptote_grow.to_string()),
            ("albefa", m.albefa.to_string()),
            ("continuation", self.continuation.map_or("off".into(), |s| s.to_string())),
            ("tikhonov", self.tikhonov.map_or("off".into(), |e| e.to_string())),
            ("sweep", fmt_list(&self.sweep)),
            ("out", self.out.display().to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// [`RunConfig::echo`] as file text.
    pub fn to_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
