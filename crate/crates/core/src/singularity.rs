//! Parabolic-power diagnostics and finite-scale comparisons of boundary measures.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conformal::least_squares;
use crate::error::{Error, Result};
use crate::green::tree_first_passage_solve;
use crate::group::{GroupSpec, Letter, Word};
use crate::moebius::{MoebiusMap, SpherePoint};
use crate::rng;
use crate::sample::BoundarySampleSet;
use crate::walk::StepDistribution;

/// Largest matrix entry modulus accepted for parabolic powers.
pub const MAX_POWER_ENTRY: f64 = 1e12;
/// Thresholds whose first crossing is reported by [`proof_gap_series`].
pub const GAP_THRESHOLDS: [f64; 3] = [-1.0, -3.0, -10.0];
/// Supported bin counts of the equal-area partition.
pub const BIN_COUNTS: [usize; 4] = [32, 128, 512, 2048];
/// Bootstrap resamples behind the confidence interval of [`local_dimension`].
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Share of probes with empty smallest caps above which a report is flagged.
pub const EMPTY_CAP_WARN_SHARE: f64 = 0.2;

fn parabolic_generator(spec: &GroupSpec) -> Result<Letter> {
    spec.require_free("parabolic power diagnostics")?;
    spec.parabolic_generators()
        .first()
        .copied()
        .ok_or_else(|| Error::Unsupported(format!("group '{}' has no parabolic generator", spec.name)))
}

fn checked_power(g: &MoebiusMap, n: i64) -> Result<MoebiusMap> {
    let m = g.pow(n);
    let big = m.entries().iter().map(|e| e.norm()).fold(0.0, f64::max);
    if big > MAX_POWER_ENTRY {
        return Err(Error::Range(format!("power {n} has an entry of modulus {big:.3e} > {MAX_POWER_ENTRY:e}")));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaRow {
    pub n: u64,
    pub word_len: u64,
    pub hyp_dist: f64,
    /// `|g^n| - D d(o, g^n o)`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaTable {
    pub generator: Letter,
    pub d: f64,
    pub rows: Vec<LemmaRow>,
    /// Smallest `n` from which the value column is strictly increasing to the end of the table.
    pub increasing_from: u64,
}

impl LemmaTable {
    /// First `n` whose value exceeds `target`.
    pub fn first_exceeding(&self, target: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.value > target).map(|r| r.n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,word_len,hyp_dist,value\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.n, r.word_len, r.hyp_dist, r.value);
        }
        out
    }
}

/// The table `n, |g^n|, d(o, g^n o), |g^n| - D d(o, g^n o)` for `n = 0..=n_max`
/// and the first parabolic generator `g`.
pub fn lemma_exp_sequence(spec: &GroupSpec, d: f64, n_max: u64) -> Result<LemmaTable> {
    if !(d >= 0.0) {
        return Err(Error::Invalid(format!("D = {d} must be nonnegative")));
    }
    let g_index = parabolic_generator(spec)?;
    let g = spec.generators[g_index as usize];
    let mut rows = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let hyp_dist = checked_power(&g, n as i64)?.displacement();
        rows.push(LemmaRow { n, word_len: n, hyp_dist, value: n as f64 - d * hyp_dist });
    }
    let tail = first_of_monotone_tail(&rows.iter().map(|r| r.value).collect::<Vec<_>>(), |a, b| b > a);
    let increasing_from = rows[tail].n;
    Ok(LemmaTable { generator: g_index, d, rows, increasing_from })
}

fn first_of_monotone_tail(values: &[f64], ordered: impl Fn(f64, f64) -> bool) -> usize {
    let mut start = values.len().saturating_sub(1);
    while start > 0 && ordered(values[start - 1], values[start]) {
        start -= 1;
    }
    start
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRow {
    pub n: u64,
    pub word_len: u64,
    pub hyp_dist: f64,
    pub d_g: f64,
    /// `delta_hat d(o, g^-n o) - d_G(id, g^-n)`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSeries {
    pub preset: String,
    pub mu: Vec<f64>,
    pub delta_hat: f64,
    pub rows: Vec<GapRow>,
    /// For each of [`GAP_THRESHOLDS`], the first listed `n` with gap below it.
    pub first_below: Vec<(f64, Option<u64>)>,
    /// Smallest listed `n` from which the gap strictly decreases to the end of the list.
    pub decreasing_from: u64,
}

impl DiagnosticSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,word_len,hyp_dist,dG,gap\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.n, r.word_len, r.hyp_dist, r.d_g, r.gap);
        }
        out
    }

    pub fn first_below(&self, threshold: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.gap < threshold).map(|r| r.n)
    }
}

/// `gap(n) = delta_hat d(o, g^-n o) - d_G(id, g^-n)` along the first parabolic generator,
/// with the Green distance from the exact tree solution.
pub fn proof_gap_series(
    spec: &GroupSpec,
    mu: &StepDistribution,
    delta_hat: f64,
    n_list: &[u64],
) -> Result<DiagnosticSeries> {
    let g_index = parabolic_generator(spec)?;
    let tree = tree_first_passage_solve(spec, mu)?;
    if n_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Invalid("n list must be strictly increasing".into()));
    }
    let g = spec.generators[g_index as usize];
    let inv = spec.alphabet().inverse(g_index);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let hyp_dist = checked_power(&g, -(n as i64))?.displacement();
        let d_g = tree.d_g(&Word::new(vec![inv; n as usize]));
        rows.push(GapRow { n, word_len: n, hyp_dist, d_g, gap: delta_hat * hyp_dist - d_g });
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let decreasing_from = rows.get(first_of_monotone_tail(&gaps, |a, b| b < a)).map_or(0, |r| r.n);
    let mut series = DiagnosticSeries {
        preset: spec.name.clone(),
        mu: mu.weights().to_vec(),
        delta_hat,
        rows,
        first_below: Vec::new(),
        decreasing_from,
    };
    series.first_below = GAP_THRESHOLDS.iter().map(|&t| (t, series.first_below(t))).collect();
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeSummary {
    pub mean: f64,
    pub median: f64,
    /// 95% percentile-bootstrap interval of the mean.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    /// Strictly decreasing angular radii.
    pub scales: Vec<f64>,
    pub slopes: Vec<f64>,
    pub summary: SlopeSummary,
    pub sample_size: usize,
    /// Share of probes whose smallest cap holds no other atom.
    pub empty_cap_share: f64,
    pub reliability_warning: bool,
}

impl DimensionReport {
    /// CSV with one row per probe: `probe,slope`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe,slope\n");
        for (i, s) in self.slopes.iter().enumerate() {
            let _ = writeln!(out, "{i},{s}");
        }
        out
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Per-probe slopes of `log mu(cap(eta, r))` against `log r`, with caps of
/// angular radius `r` around probes drawn from the sample by weight.
pub fn local_dimension(
    sample: &BoundarySampleSet,
    scales: &[f64],
    probe_count: usize,
    seed: u64,
) -> Result<DimensionReport> {
    if sample.len() < 1000 {
        return Err(Error::Invalid(format!("sample of size {} is below the minimum of 1000", sample.len())));
    }
    if scales.len() < 2 || scales.iter().any(|&r| !(1e-3..=0.3).contains(&r)) {
        return Err(Error::Invalid("need at least two scales, all within [1e-3, 0.3]".into()));
    }
    if probe_count < 2 {
        return Err(Error::Invalid("need at least two probes".into()));
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    if scales.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::Invalid("scales must be distinct".into()));
    }
    let mut cdf = Vec::with_capacity(sample.len());
    let mut acc = 0.0;
    for w in &sample.weights {
        acc += w;
        cdf.push(acc);
    }
    let mut rng = rng::stream(seed);
    let probes: Vec<usize> = (0..probe_count)
        .map(|_| cdf.partition_point(|&c| c <= rng.random::<f64>() * acc).min(sample.len() - 1))
        .collect();
    let smallest = *scales.last().expect("two scales");
    let log_r: Vec<f64> = scales.iter().map(|r| r.ln()).collect();
    let per_probe: Vec<(f64, bool)> = probes
        .par_iter()
        .map(|&i| {
            let eta = sample.points[i];
            let mut mass = vec![0.0; scales.len()];
            let mut others_in_smallest = false;
            for (j, (p, w)) in sample.points.iter().zip(&sample.weights).enumerate() {
                let a = eta.angle_to(p);
                if a > scales[0] {
                    continue;
                }
                if j != i && a <= smallest {
                    others_in_smallest = true;
                }
                for (m, &r) in mass.iter_mut().zip(&scales) {
                    if a <= r {
                        *m += w;
                    }
                }
            }
            let log_m: Vec<f64> = mass.iter().map(|m| m.ln()).collect();
            (least_squares(&log_r, &log_m).0, !others_in_smallest)
        })
        .collect();
    let slopes: Vec<f64> = per_probe.iter().map(|p| p.0).collect();
    let empty_cap_share = per_probe.iter().filter(|p| p.1).count() as f64 / probe_count as f64;

    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let mut sorted = slopes.clone();
    sorted.sort_by(f64::total_cmp);
    let boot_seed = rng::child_seed(seed, u64::MAX);
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::child_stream(boot_seed, b as u64);
            (0..slopes.len()).map(|_| slopes[r.random_range(0..slopes.len())]).sum::<f64>() / slopes.len() as f64
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let pick = |q: f64| boot[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round() as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    Ok(DimensionReport {
        scales,
        summary: SlopeSummary { mean, median: median(&sorted), ci_low: pick(0.025), ci_high: pick(0.975) },
        slopes,
        sample_size: sample.len(),
        empty_cap_share,
        reliability_warning: empty_cap_share > EMPTY_CAP_WARN_SHARE,
    })
}

/// Cell of `eta` in the nested equal-area partition with `bin_count` cells.
///
/// On the sphere (`ambient_dim = 3`) the cells are `m` bands of equal height
/// in `x3` times `2m` equal longitude sectors, `m = 4, 8, 16, 32`; each level
/// splits every cell into four. On the real circle (`ambient_dim = 2`) they
/// are `bin_count` equal arcs of the angle `atan2(x3, x1)`.
pub fn equal_area_bin(eta: &SpherePoint, bin_count: usize, ambient_dim: u8) -> Result<usize> {
    if !BIN_COUNTS.contains(&bin_count) {
        return Err(Error::Invalid(format!("bin count {bin_count} not in {BIN_COUNTS:?}")));
    }
    let [x, y, z] = eta.coords();
    let frac = |v: f64, n: usize| ((v * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
    Ok(match ambient_dim {
        2 => frac((z.atan2(x) + PI) / TAU, bin_count),
        3 => {
            let m = ((bin_count / 2) as f64).sqrt() as usize;
            let band = frac((z + 1.0) / 2.0, m);
            let sector = frac((y.atan2(x) + PI) / TAU, 2 * m);
            band * 2 * m + sector
        }
        other => return Err(Error::Invalid(format!("ambient dimension {other} unsupported"))),
    })
}

/// Binned measure of a sample.
pub fn bin_masses(sample: &BoundarySampleSet, bin_count: usize) -> Result<Vec<f64>> {
    let mut mass = vec![0.0; bin_count];
    for (p, w) in sample.points.iter().zip(&sample.weights) {
        mass[equal_area_bin(p, bin_count, sample.ambient_dim)?] += w;
    }
    Ok(mass)
}

/// `sum_bins min(a, b)` for the binned measures.
pub fn overlap_statistic(a: &BoundarySampleSet, b: &BoundarySampleSet, bin_count: usize) -> Result<f64> {
    if a.ambient_dim != b.ambient_dim {
        return Err(Error::Domain(format!(
            "samples live in ambient dimensions {} and {}",
            a.ambient_dim, b.ambient_dim
        )));
    }
    let (ma, mb) = (bin_masses(a, bin_count)?, bin_masses(b, bin_count)?);
    Ok(ma.iter().zip(&mb).map(|(x, y)| x.min(*y)).sum::<f64>().min(1.0))
}
