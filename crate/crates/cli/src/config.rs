//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use limitset::group::{load_preset, GroupSpec, PRESET_NAMES};
use limitset::walk::{StepDistribution, DEFAULT_EPS_STOP, DEFAULT_MAX_STEPS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line { line, message: message.into() }
}

/// Where the group comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupSource {
    Preset(String),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub group: GroupSource,
    pub spec: GroupSpec,
    pub mu: StepDistribution,
    pub seed: u64,
    /// Word depth of the orbit used for fitting and PS sums.
    pub depth: usize,
    /// Word depth of the rows written to `orbit.csv`.
    pub orbit_csv_depth: usize,
    /// PS exponent; `None` means the fitted exponent plus `ps_offset`.
    pub ps_s: Option<f64>,
    pub ps_offset: f64,
    pub ps_min_radius: f64,
    pub sample_size: usize,
    pub eps_stop: f64,
    pub max_steps: usize,
    pub walk_paths: usize,
    pub walk_length: usize,
    pub green_max_len: usize,
    pub green_trials: u64,
    pub green_horizon: u64,
    pub series_n_max: usize,
    pub series_radius_cap: usize,
    pub scales: Vec<f64>,
    pub probes: usize,
    pub bin_counts: Vec<usize>,
    pub n_list: Vec<u64>,
    pub lemma_d: Vec<f64>,
    pub lemma_n_max: u64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// The defaults for a given group.
    pub fn defaults(group: GroupSource, spec: GroupSpec) -> Self {
        let mu = StepDistribution::uniform(&spec);
        ExperimentConfig {
            group,
            spec,
            mu,
            seed: 1,
            depth: 14,
            orbit_csv_depth: 8,
            ps_s: None,
            ps_offset: 0.05,
            ps_min_radius: 5.0,
            sample_size: 10_000,
            eps_stop: DEFAULT_EPS_STOP,
            max_steps: DEFAULT_MAX_STEPS,
            walk_paths: 10_000,
            walk_length: 300,
            green_max_len: 4,
            green_trials: 1_000_000,
            green_horizon: 200,
            series_n_max: 60,
            series_radius_cap: 10,
            scales: vec![0.1, 0.0464, 0.0215, 0.01],
            probes: 1000,
            bin_counts: vec![32, 128, 512, 2048],
            n_list: (1..=256).collect(),
            lemma_d: vec![0.5, 1.0, 2.0, 5.0],
            lemma_n_max: 10_000,
            out: PathBuf::from("out"),
        }
    }

    /// Every key with its value, in a form [`parse_config`] reads back.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        match &self.group {
            GroupSource::Preset(p) => {
                let _ = writeln!(s, "preset = {p}");
            }
            GroupSource::File(f) => {
                let _ = writeln!(s, "group_file = {}", f.display());
            }
        }
        let list = |v: Vec<String>| v.join(",");
        let _ = writeln!(s, "mu = {}", self.mu.label());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "depth = {}", self.depth);
        let _ = writeln!(s, "orbit_csv_depth = {}", self.orbit_csv_depth);
        match self.ps_s {
            Some(v) => {
                let _ = writeln!(s, "ps_s = {v}");
            }
            None => {
                let _ = writeln!(s, "ps_s = auto");
            }
        }
        let _ = writeln!(s, "ps_offset = {}", self.ps_offset);
        let _ = writeln!(s, "ps_min_radius = {}", self.ps_min_radius);
        let _ = writeln!(s, "sample_size = {}", self.sample_size);
        let _ = writeln!(s, "eps_stop = {}", self.eps_stop);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "walk_paths = {}", self.walk_paths);
        let _ = writeln!(s, "walk_length = {}", self.walk_length);
        let _ = writeln!(s, "green_max_len = {}", self.green_max_len);
        let _ = writeln!(s, "green_trials = {}", self.green_trials);
        let _ = writeln!(s, "green_horizon = {}", self.green_horizon);
        let _ = writeln!(s, "series_n_max = {}", self.series_n_max);
        let _ = writeln!(s, "series_radius_cap = {}", self.series_radius_cap);
        let _ = writeln!(s, "scales = {}", list(self.scales.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "probes = {}", self.probes);
        let _ = writeln!(s, "bin_counts = {}", list(self.bin_counts.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "n_list = {}", list(self.n_list.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "lemma_d = {}", list(self.lemma_d.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "lemma_n_max = {}", self.lemma_n_max);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

fn scalar<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| at(line, format!("malformed value '{v}' for {key}")))
}

fn list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|t| scalar(line, key, t.trim())).collect()
}

// comma list whose items may be inclusive ranges `a..b`
fn int_list(line: usize, key: &str, v: &str) -> Result<Vec<u64>, ConfigError> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (scalar(line, key, a.trim())?, scalar(line, key, b.trim())?);
                if b < a {
                    return Err(at(line, format!("empty range '{item}' for {key}")));
                }
                out.extend(a..=b);
            }
            None => out.push(scalar(line, key, item)?),
        }
    }
    Ok(out)
}

/// Parses a configuration; relative `group_file` paths are taken relative to `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| at(i + 1, "expected `key = value`"))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if let Some((first, ..)) = entries.iter().find(|e| e.1 == k) {
            return Err(at(i + 1, format!("duplicate key {k} (first set on line {first})")));
        }
        entries.push((i + 1, k, v));
    }

    let find = |key: &str| entries.iter().find(|e| e.1 == key);
    let (group, spec) = match (find("preset"), find("group_file")) {
        (Some(p), Some(_)) => return Err(at(p.0, "preset and group_file are mutually exclusive")),
        (Some((line, _, name)), None) => {
            if !PRESET_NAMES.contains(&name.as_str()) {
                return Err(at(*line, format!("unknown preset '{name}'; catalog: {}", PRESET_NAMES.join(", "))));
            }
            let spec = load_preset(name).map_err(|e| at(*line, e.to_string()))?;
            (GroupSource::Preset(name.clone()), spec)
        }
        (None, Some((line, _, path))) => {
            let path = base.join(path);
            let path = path.canonicalize().map_err(|e| at(*line, format!("cannot read {}: {e}", path.display())))?;
            let text = std::fs::read_to_string(&path)
                .map_err(|e| at(*line, format!("cannot read {}: {e}", path.display())))?;
            let spec = GroupSpec::from_text(&text).map_err(|e| at(*line, format!("{}: {e}", path.display())))?;
            (GroupSource::File(path), spec)
        }
        (None, None) => {
            let spec = load_preset("gamma2").expect("shipped preset");
            (GroupSource::Preset("gamma2".into()), spec)
        }
    };

    let mut cfg = ExperimentConfig::defaults(group, spec);
    for (line, key, v) in &entries {
        let (line, v) = (*line, v.as_str());
        match key.as_str() {
            "preset" | "group_file" => {}
            "mu" => {
                let w = list(line, "mu", v)?;
                cfg.mu = StepDistribution::new(&cfg.spec, w).map_err(|e| at(line, e.to_string()))?;
            }
            "seed" => cfg.seed = scalar(line, key, v)?,
            "depth" => cfg.depth = scalar(line, key, v)?,
            "orbit_csv_depth" => cfg.orbit_csv_depth = scalar(line, key, v)?,
            "ps_s" => cfg.ps_s = if v == "auto" { None } else { Some(scalar(line, key, v)?) },
            "ps_offset" => cfg.ps_offset = scalar(line, key, v)?,
            "ps_min_radius" => cfg.ps_min_radius = scalar(line, key, v)?,
            "sample_size" => cfg.sample_size = scalar(line, key, v)?,
            "eps_stop" => cfg.eps_stop = scalar(line, key, v)?,
            "max_steps" => cfg.max_steps = scalar(line, key, v)?,
            "walk_paths" => cfg.walk_paths = scalar(line, key, v)?,
            "walk_length" => cfg.walk_length = scalar(line, key, v)?,
            "green_max_len" => cfg.green_max_len = scalar(line, key, v)?,
            "green_trials" => cfg.green_trials = scalar(line, key, v)?,
            "green_horizon" => cfg.green_horizon = scalar(line, key, v)?,
            "series_n_max" => cfg.series_n_max = scalar(line, key, v)?,
            "series_radius_cap" => cfg.series_radius_cap = scalar(line, key, v)?,
            "scales" => cfg.scales = list(line, key, v)?,
            "probes" => cfg.probes = scalar(line, key, v)?,
            "bin_counts" => cfg.bin_counts = list(line, key, v)?,
            "n_list" => cfg.n_list = int_list(line, key, v)?,
            "lemma_d" => cfg.lemma_d = list(line, key, v)?,
            "lemma_n_max" => cfg.lemma_n_max = scalar(line, key, v)?,
            "out" => cfg.out = PathBuf::from(v),
            other => return Err(at(line, format!("unknown key '{other}'"))),
        }
    }
    validate(&cfg, &entries)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig, entries: &[(usize, String, String)]) -> Result<(), ConfigError> {
    let line_of = |key: &str| entries.iter().find(|e| e.1 == key).map(|e| e.0);
    let fail = |key: &str, msg: String| match line_of(key) {
        Some(line) => at(line, msg),
        None => ConfigError::Invalid(msg),
    };
    if cfg.depth == 0 {
        return Err(fail("depth", "depth must be positive".into()));
    }
    if !(cfg.eps_stop > 0.0 && cfg.eps_stop <= 1e-2) {
        return Err(fail("eps_stop", format!("eps_stop {} outside (0, 1e-2]", cfg.eps_stop)));
    }
    if let Some(b) = cfg.bin_counts.iter().find(|b| ![32, 128, 512, 2048].contains(*b)) {
        return Err(fail("bin_counts", format!("bin count {b} not in 32, 128, 512, 2048")));
    }
    if cfg.n_list.is_empty() || cfg.n_list.windows(2).any(|p| p[1] <= p[0]) || cfg.n_list[0] == 0 {
        return Err(fail("n_list", "n_list must be positive and strictly increasing".into()));
    }
    if cfg.scales.len() < 2 {
        return Err(fail("scales", "need at least two scales".into()));
    }
    Ok(())
}
