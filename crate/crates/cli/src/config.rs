//! Flat `key = value` run configuration. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qdissip_core::{ModelKind, ModelSpec, OptimizerConfig, TimeGrid, DEFAULT_STEPS_PER_UNIT_TIME};
use serde::Serialize;

/// β grid used when `betas = default`. Not taken from any published table.
pub const DEFAULT_BETA_GRID: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

const KNOWN_KEYS: &[&str] = &[
    "model",
    "delta",
    "k",
    "gamma",
    "beta",
    "T",
    "N",
    "u0",
    "u_target",
    "alpha",
    "kappa",
    "eta",
    "max_iters",
    "u_min",
    "u_max",
    "v_min",
    "v_max",
    "tol_rel_j",
    "window",
    "record_every",
    "output_dir",
    "alphas",
    "betas",
    "restart",
    "plateau",
    "protocol",
    "fd_h",
    "fd_points",
    "fd_tol",
    "variance_tol",
    "trace_tol",
    "stationarity_tol",
    "rapid_tol",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Restart {
    Cold,
    Warm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub fd_h: f64,
    pub fd_points: usize,
    pub fd_tol: f64,
    pub variance_tol: f64,
    pub trace_tol: f64,
    pub stationarity_tol: f64,
    pub rapid_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            fd_h: 1e-6,
            fd_points: 20,
            fd_tol: 1e-6,
            variance_tol: 1e-12,
            trace_tol: 1e-10,
            stationarity_tol: 1e-10,
            rapid_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub horizon: f64,
    pub steps: usize,
    pub u0: f64,
    pub u_target: f64,
    pub optimizer: OptimizerConfig,
    pub output_dir: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
    /// True when `betas` came from [`DEFAULT_BETA_GRID`].
    pub betas_default: bool,
    pub restart: Restart,
    pub plateau: Option<f64>,
    pub protocol: Option<PathBuf>,
    pub thresholds: Thresholds,
}

impl RunConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(self.horizon, self.steps)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        // relative paths inside the file are taken relative to the file
        if let Some(dir) = path.parent() {
            if let Some(p) = cfg.protocol.as_mut().filter(|p| p.is_relative()) {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw = parse_pairs(text)?;
        let get = |key: &str| raw.get(key).map(String::as_str);

        let kind = match get("model").unwrap_or("spin_boson") {
            "spin_boson" => ModelKind::SpinBoson,
            "quantum_dot" => ModelKind::QuantumDot,
            other => bail!("model: expected spin_boson or quantum_dot, got `{other}`"),
        };
        let beta = real(&raw, "beta")?.unwrap_or(1.0);
        let mut model = match kind {
            ModelKind::SpinBoson => ModelSpec::spin_boson(real(&raw, "delta")?.unwrap_or(0.0), beta),
            ModelKind::QuantumDot => {
                let mut m = ModelSpec::quantum_dot(beta);
                if let Some(d) = real(&raw, "delta")? {
                    m.delta = d;
                }
                m
            }
        };
        if let Some(k) = real(&raw, "k")? {
            model = model.with_k(k);
        }
        if let Some(g) = real(&raw, "gamma")? {
            model = model.with_gamma_tunnel(g);
        }
        model.validate()?;

        let (u0_default, target_default) = match kind {
            ModelKind::SpinBoson => (0.0, 1.0),
            ModelKind::QuantumDot => (2.0, -2.0),
        };
        let horizon = real(&raw, "T")?.unwrap_or(1.0);
        if !(horizon > 0.0 && horizon.is_finite()) {
            bail!("T: must be > 0, got {horizon}");
        }
        let steps = match integer(&raw, "N")? {
            Some(n) => n,
            None => (DEFAULT_STEPS_PER_UNIT_TIME * horizon).round().max(1.0) as usize,
        };

        let defaults = OptimizerConfig::for_horizon(horizon);
        let optimizer = OptimizerConfig {
            alpha: real(&raw, "alpha")?.unwrap_or(defaults.alpha),
            kappa: real(&raw, "kappa")?.unwrap_or(defaults.kappa),
            eta: real(&raw, "eta")?.unwrap_or(defaults.eta),
            max_iters: integer(&raw, "max_iters")?.unwrap_or(defaults.max_iters),
            u_bounds: (
                real(&raw, "u_min")?.unwrap_or(defaults.u_bounds.0),
                real(&raw, "u_max")?.unwrap_or(defaults.u_bounds.1),
            ),
            v_bounds: (
                real(&raw, "v_min")?.unwrap_or(defaults.v_bounds.0),
                real(&raw, "v_max")?.unwrap_or(defaults.v_bounds.1),
            ),
            tol_rel_j: real(&raw, "tol_rel_j")?.unwrap_or(defaults.tol_rel_j),
            window: integer(&raw, "window")?.unwrap_or(defaults.window),
            record_every: integer(&raw, "record_every")?.unwrap_or(defaults.record_every),
        };
        optimizer.validate()?;

        let alphas = get("alphas").map(|s| list(s).context("alphas")).transpose()?;
        let (betas, betas_default) = match get("betas") {
            Some("default") => (Some(DEFAULT_BETA_GRID.to_vec()), true),
            Some(s) => (Some(list(s).context("betas")?), false),
            None => (None, false),
        };
        let restart = match get("restart").unwrap_or("cold") {
            "cold" => Restart::Cold,
            "warm" => Restart::Warm,
            other => bail!("restart: expected cold or warm, got `{other}`"),
        };

        let d = Thresholds::default();
        let thresholds = Thresholds {
            fd_h: real(&raw, "fd_h")?.unwrap_or(d.fd_h),
            fd_points: integer(&raw, "fd_points")?.unwrap_or(d.fd_points),
            fd_tol: real(&raw, "fd_tol")?.unwrap_or(d.fd_tol),
            variance_tol: real(&raw, "variance_tol")?.unwrap_or(d.variance_tol),
            trace_tol: real(&raw, "trace_tol")?.unwrap_or(d.trace_tol),
            stationarity_tol: real(&raw, "stationarity_tol")?.unwrap_or(d.stationarity_tol),
            rapid_tol: real(&raw, "rapid_tol")?.unwrap_or(d.rapid_tol),
        };

        Ok(Self {
            model,
            horizon,
            steps,
            u0: real(&raw, "u0")?.unwrap_or(u0_default),
            u_target: real(&raw, "u_target")?.unwrap_or(target_default),
            optimizer,
            output_dir: get("output_dir").map(PathBuf::from),
            alphas,
            betas,
            betas_default,
            restart,
            plateau: real(&raw, "plateau")?,
            protocol: get("protocol").map(PathBuf::from),
            thresholds,
        })
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value, got `{line}`", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            bail!("line {}: unknown key `{key}`", lineno + 1);
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            bail!("line {}: duplicate key `{key}`", lineno + 1);
        }
    }
    Ok(out)
}

fn real(raw: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    raw.get(key)
        .map(|s| {
            let x: f64 = s.parse().with_context(|| format!("{key}: `{s}` is not a number"))?;
            if !x.is_finite() {
                bail!("{key}: must be finite, got {s}");
            }
            Ok(x)
        })
        .transpose()
}

fn integer(raw: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>> {
    raw.get(key)
        .map(|s| {
            // accept 1e5 style values as long as they are whole
            let x: f64 = s.parse().with_context(|| format!("{key}: `{s}` is not a number"))?;
            if !(x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 * 1e3) {
                bail!("{key}: expected a non-negative integer, got `{s}`");
            }
            Ok(x as usize)
        })
        .transpose()
}

/// `start:step:stop` (inclusive) or a comma-separated list.
pub fn list(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let nums = parts
            .iter()
            .map(|p| p.parse::<f64>().with_context(|| format!("`{p}` is not a number")))
            .collect::<Result<Vec<_>>>()?;
        let (start, step, stop) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            bail!("range `{s}` needs step > 0 and stop >= start");
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        // i·step rather than accumulation keeps 0.05·k exact to rounding
        return Ok((0..=count).map(|i| (start + i as f64 * step).min(stop)).collect());
    }
    if parts.len() != 1 {
        bail!("`{s}`: expected start:step:stop or a comma-separated list");
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("`{p}` is not a number")))
        .collect()
}
