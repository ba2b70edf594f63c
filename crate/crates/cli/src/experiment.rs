//! The batch commands and the files they write.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use limitset::conformal::{critical_exponent_fit, poincare_series, ps_boundary_sample, ExponentFit};
use limitset::green::{
    estimates_csv, green_f_montecarlo_ball, green_series, spectral_radius, tree_first_passage_solve, truncation_bound,
};
use limitset::group::{enumerate_orbit, load_preset, OrbitTable, Word, WordBall, DEFAULT_ENTRY_CAP, PRESET_NAMES};
use limitset::moebius::BallPoint;
use limitset::rng::child_seed;
use limitset::sample::{json_text, BoundarySampleSet};
use limitset::singularity::{
    lemma_exp_sequence, local_dimension, overlap_statistic, proof_gap_series, DimensionReport,
};
use limitset::walk::{drift_estimates, entropy_estimate, harmonic_sample};
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, GroupSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Orbit,
    Walk,
    Ps,
    Green,
    Diagnose,
    Presets,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Walk => "walk",
            Command::Ps => "ps",
            Command::Green => "green",
            Command::Diagnose => "diagnose",
            Command::Presets => "presets",
        }
    }
}

/// What a run produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

// stage offsets for child seeds, fixed so that adding a stage never shifts another
const SEED_HARMONIC: u64 = 1;
const SEED_HARMONIC_BASELINE: u64 = 2;
const SEED_PS: u64 = 3;
const SEED_PS_BASELINE: u64 = 4;
const SEED_DIM_HARMONIC: u64 = 5;
const SEED_DIM_PS: u64 = 6;
const SEED_DRIFT: u64 = 7;
const SEED_GREEN: u64 = 8;

struct Writer<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl Writer<'_> {
    fn file(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(name), body).with_context(|| format!("writing {name}"))?;
        self.outcome.files.push(name.to_string());
        Ok(())
    }

    fn sample(&mut self, s: &BoundarySampleSet, stem: &str) -> Result<()> {
        s.write(self.dir, stem).with_context(|| format!("writing {stem}"))?;
        self.outcome.files.push(format!("{stem}.csv"));
        self.outcome.files.push(format!("{stem}.meta.json"));
        Ok(())
    }

    fn warn(&mut self, w: String) {
        self.outcome.warnings.push(w);
    }
}

fn base_meta(cfg: &ExperimentConfig, command: Command) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), command.as_str().into());
    m.insert("group".into(), cfg.spec.name.as_str().into());
    if let GroupSource::Preset(p) = &cfg.group {
        m.insert("preset".into(), p.as_str().into());
    }
    m.insert("mu".into(), cfg.mu.label().into());
    m.insert("seed".into(), cfg.seed.into());
    m
}

/// Runs `command`, writing into `cfg.out`, which is created if needed.
pub fn run_experiment(cfg: &ExperimentConfig, command: Command) -> Result<Outcome> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut w = Writer { dir: &cfg.out, outcome: Outcome::default() };
    w.file("resolved-config", &cfg.resolved())?;
    let mut meta = base_meta(cfg, command);
    match command {
        Command::Orbit => orbit(cfg, &mut w, &mut meta)?,
        Command::Walk => walk(cfg, &mut w, &mut meta)?,
        Command::Ps => ps(cfg, &mut w, &mut meta)?,
        Command::Green => green(cfg, &mut w, &mut meta)?,
        Command::Diagnose => diagnose(cfg, &mut w, &mut meta)?,
        Command::Presets => presets(&mut w)?,
    }
    meta.insert("warnings".into(), w.outcome.warnings.clone().into());
    w.file("meta.json", &json_text(&Value::Object(meta)))?;
    Ok(w.outcome)
}

fn fit_meta(meta: &mut Map<String, Value>, orbit: &OrbitTable, fit: &ExponentFit) {
    meta.insert("depth".into(), (orbit.max_word_length() as u64).into());
    meta.insert("entries".into(), (orbit.len() as u64).into());
    meta.insert("reliable_radius".into(), orbit.reliable_radius().into());
    meta.insert("delta_hat".into(), fit.delta_hat.into());
    meta.insert("fit_window".into(), json!([fit.fit_window.0, fit.fit_window.1]));
    meta.insert("fit_residual".into(), fit.residual.into());
}

fn orbit_and_fit(
    cfg: &ExperimentConfig,
    w: &mut Writer,
    meta: &mut Map<String, Value>,
) -> Result<(OrbitTable, ExponentFit)> {
    let orbit = enumerate_orbit(&cfg.spec, cfg.depth).context("group-model")?;
    let fit = critical_exponent_fit(&orbit).context("conformal-measure")?;
    fit_meta(meta, &orbit, &fit);
    w.file("growth.csv", &fit.to_csv())?;
    Ok((orbit, fit))
}

fn orbit(cfg: &ExperimentConfig, w: &mut Writer, meta: &mut Map<String, Value>) -> Result<()> {
    let orbit = enumerate_orbit(&cfg.spec, cfg.depth).context("group-model")?;
    let rows = WordBall::new(cfg.spec.alphabet(), cfg.depth.min(cfg.orbit_csv_depth), DEFAULT_ENTRY_CAP)?.len();
    let mut csv = String::from("index,word,word_len,radius,x,y,z\n");
    for i in 0..rows {
        let e = orbit.entry(i);
        let [x, y, z] = e.map.orbit_point().0.coords();
        let _ = writeln!(csv, "{i},{},{},{},{x},{y},{z}", e.word.label(), e.word.len(), e.hyp_radius);
    }
    w.file("orbit.csv", &csv)?;
    match critical_exponent_fit(&orbit) {
        Ok(fit) => {
            fit_meta(meta, &orbit, &fit);
            w.file("growth.csv", &fit.to_csv())?;
        }
        Err(e) => {
            meta.insert("depth".into(), (cfg.depth as u64).into());
            meta.insert("entries".into(), (orbit.len() as u64).into());
            w.warn(format!("conformal-measure: no exponent fit at depth {}: {e}", cfg.depth));
        }
    }
    Ok(())
}

fn harmonic(cfg: &ExperimentConfig, w: &mut Writer, stage: u64) -> Result<BoundarySampleSet> {
    let s =
        harmonic_sample(&cfg.spec, &cfg.mu, cfg.sample_size, cfg.eps_stop, cfg.max_steps, child_seed(cfg.seed, stage))
            .context("walk-engine")?;
    if s.meta.get("unescaped_warning") == Some(&Value::Bool(true)) {
        w.warn(format!("walk-engine: {} paths did not escape", s.meta["unescaped"]));
    }
    Ok(s)
}

fn walk(cfg: &ExperimentConfig, w: &mut Writer, meta: &mut Map<String, Value>) -> Result<()> {
    let seed = child_seed(cfg.seed, SEED_DRIFT);
    let mut csv = String::from("quantity,value,stderr\n");
    if cfg.spec.is_free_ping_pong {
        let d = drift_estimates(&cfg.spec, &cfg.mu, cfg.walk_paths, cfg.walk_length, seed).context("walk-engine")?;
        let h = entropy_estimate(&cfg.spec, &cfg.mu, cfg.walk_paths, cfg.walk_length, seed).context("walk-engine")?;
        let _ = writeln!(csv, "word_drift,{},{}", d.word.value, d.word.stderr);
        let _ = writeln!(csv, "hyp_drift,{},{}", d.hyp.value, d.hyp.stderr);
        let _ = writeln!(csv, "entropy,{},{}", h.value, h.stderr);
    } else {
        w.warn("walk-engine: group not certified free, drift and entropy skipped".into());
    }
    meta.insert("walk_paths".into(), (cfg.walk_paths as u64).into());
    meta.insert("walk_length".into(), (cfg.walk_length as u64).into());
    w.file("drift.csv", &csv)?;
    let s = harmonic(cfg, w, SEED_HARMONIC)?;
    w.sample(&s, "harmonic")
}

fn ps_exponent(cfg: &ExperimentConfig, fit: &ExponentFit) -> f64 {
    cfg.ps_s.unwrap_or(fit.delta_hat + cfg.ps_offset)
}

fn ps(cfg: &ExperimentConfig, w: &mut Writer, meta: &mut Map<String, Value>) -> Result<()> {
    let (orbit, fit) = orbit_and_fit(cfg, w, meta)?;
    let s = ps_exponent(cfg, &fit);
    let o = BallPoint::ORIGIN;
    let sum = poincare_series(&orbit, s, &o, &o).context("conformal-measure")?;
    meta.insert("s".into(), s.into());
    meta.insert("poincare_partial_sum".into(), sum.partial_sum.into());
    meta.insert("poincare_tail_bound".into(), if sum.tail_is_finite() { sum.tail_bound.into() } else { Value::Null });
    let atoms = ps_boundary_sample(&orbit, s, cfg.ps_min_radius, cfg.spec.ambient_dim).context("conformal-measure")?;
    drop(orbit);
    let sample = atoms.resample(cfg.sample_size, child_seed(cfg.seed, SEED_PS))?;
    w.sample(&sample, "ps")
}

fn green(cfg: &ExperimentConfig, w: &mut Writer, meta: &mut Map<String, Value>) -> Result<()> {
    let tree = tree_first_passage_solve(&cfg.spec, &cfg.mu).context("green-metric")?;
    let ball = WordBall::new(cfg.spec.alphabet(), cfg.green_max_len, DEFAULT_ENTRY_CAP)?;
    let mut rows: Vec<_> = (0..ball.len()).map(|i| tree.estimate(&ball.word(i))).collect();
    rows.extend(
        green_f_montecarlo_ball(
            &cfg.spec,
            &cfg.mu,
            cfg.green_max_len,
            cfg.green_trials,
            cfg.green_horizon,
            child_seed(cfg.seed, SEED_GREEN),
        )
        .context("green-metric")?,
    );
    w.file("green.csv", &estimates_csv(&rows))?;
    let mut series = String::from("target,n_max,radius_cap,value\n");
    let mut targets = vec![Word::identity()];
    targets.extend((0..cfg.spec.alphabet().size() as u8).map(|l| Word::new(vec![l])));
    for t in targets {
        let v =
            green_series(&cfg.spec, &cfg.mu, &t, cfg.series_n_max, cfg.series_radius_cap).context("green-metric")?;
        let _ = writeln!(series, "{},{},{},{v}", t.label(), cfg.series_n_max, cfg.series_radius_cap);
    }
    w.file("series.csv", &series)?;
    meta.insert("first_passage".into(), tree.fs.clone().into());
    meta.insert("solver_residual".into(), tree.residual.into());
    meta.insert("spectral_radius".into(), spectral_radius(&cfg.mu).into());
    meta.insert("truncation_bound".into(), truncation_bound(&cfg.mu, cfg.green_horizon).into());
    Ok(())
}

fn dimension(
    cfg: &ExperimentConfig,
    w: &mut Writer,
    s: &BoundarySampleSet,
    stage: u64,
    name: &str,
) -> Result<DimensionReport> {
    let rep = local_dimension(s, &cfg.scales, cfg.probes, child_seed(cfg.seed, stage)).context("singularity-lab")?;
    if rep.reliability_warning {
        w.warn(format!(
            "singularity-lab: {:.0}% of {name} probes have empty smallest caps",
            100.0 * rep.empty_cap_share
        ));
    }
    w.file(&format!("dimension_{name}.csv"), &rep.to_csv())?;
    Ok(rep)
}

fn diagnose(cfg: &ExperimentConfig, w: &mut Writer, meta: &mut Map<String, Value>) -> Result<()> {
    let (orbit, fit) = orbit_and_fit(cfg, w, meta)?;
    let s = ps_exponent(cfg, &fit);
    meta.insert("s".into(), s.into());
    let atoms = ps_boundary_sample(&orbit, s, cfg.ps_min_radius, cfg.spec.ambient_dim).context("conformal-measure")?;
    drop(orbit);
    let ps = atoms.resample(cfg.sample_size, child_seed(cfg.seed, SEED_PS))?;
    let ps_baseline = atoms.resample(cfg.sample_size, child_seed(cfg.seed, SEED_PS_BASELINE))?;
    drop(atoms);
    w.sample(&ps, "ps")?;

    let harm = harmonic(cfg, w, SEED_HARMONIC)?;
    let harm_baseline = harmonic(cfg, w, SEED_HARMONIC_BASELINE)?;
    w.sample(&harm, "harmonic")?;

    let gap = proof_gap_series(&cfg.spec, &cfg.mu, fit.delta_hat, &cfg.n_list).context("singularity-lab")?;
    w.file("gap.csv", &gap.to_csv())?;
    meta.insert("gap_decreasing_from".into(), gap.decreasing_from.into());
    meta.insert(
        "gap_first_below".into(),
        Value::Object(gap.first_below.iter().map(|(t, n)| (t.to_string(), json!(n))).collect()),
    );
    if cfg.group == GroupSource::Preset("gamma2".into()) {
        let unit = proof_gap_series(&cfg.spec, &cfg.mu, 1.0, &cfg.n_list).context("singularity-lab")?;
        w.file("gap_unit_delta.csv", &unit.to_csv())?;
    }

    let mut lemma = String::from("D,n,word_len,hyp_dist,value\n");
    let mut first = Map::new();
    for &d in &cfg.lemma_d {
        let t = lemma_exp_sequence(&cfg.spec, d, cfg.lemma_n_max).context("singularity-lab")?;
        for r in &t.rows {
            let _ = writeln!(lemma, "{d},{},{},{},{}", r.n, r.word_len, r.hyp_dist, r.value);
        }
        first.insert(d.to_string(), json!(t.first_exceeding(10.0)));
    }
    w.file("lemma.csv", &lemma)?;
    meta.insert("lemma_first_exceeding_10".into(), Value::Object(first));

    let dh = dimension(cfg, w, &harm, SEED_DIM_HARMONIC, "harmonic")?;
    let dp = dimension(cfg, w, &ps, SEED_DIM_PS, "ps")?;
    let mut dim = String::from("measure,mean,median,ci_low,ci_high,sample_size,empty_cap_share,reliability_warning\n");
    for (name, r) in [("harmonic", &dh), ("ps", &dp)] {
        let m = &r.summary;
        let _ = writeln!(
            dim,
            "{name},{},{},{},{},{},{},{}",
            m.mean, m.median, m.ci_low, m.ci_high, r.sample_size, r.empty_cap_share, r.reliability_warning
        );
    }
    w.file("dimension.csv", &dim)?;

    let mut ov = String::from("bins,harmonic_ps,harmonic_self,ps_self\n");
    for &b in &cfg.bin_counts {
        let _ = writeln!(
            ov,
            "{b},{},{},{}",
            overlap_statistic(&harm, &ps, b)?,
            overlap_statistic(&harm, &harm_baseline, b)?,
            overlap_statistic(&ps, &ps_baseline, b)?
        );
    }
    w.file("overlap.csv", &ov)
}

fn presets(w: &mut Writer) -> Result<()> {
    let mut csv = String::from("name,rank,ambient_dim,free_ping_pong\n");
    for name in PRESET_NAMES {
        let spec = load_preset(name)?;
        let _ = writeln!(csv, "{name},{},{},{}", spec.rank(), spec.ambient_dim, spec.is_free_ping_pong);
    }
    print!("{csv}");
    w.file("presets.csv", &csv)
}
