//! Random walks `Y_n = Z_1 ... Z_n` driven by a symmetric step distribution
//! on the generators, with drift, entropy and harmonic-measure estimators.
//!
//! Every path `i` draws from its own stream seeded by
//! [`rng::child_seed`]`(master, i)`, and results are collected in path order,
//! so output never depends on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::tree_first_passage_solve;
use crate::group::{GroupSpec, Letter};
use crate::moebius::{compose, MoebiusMap, SpherePoint};
use crate::rng;
use crate::sample::{BoundarySampleSet, Provenance};

/// Default stopping distance `1 - |Y_n o|` for harmonic sampling.
pub const DEFAULT_EPS_STOP: f64 = 1e-3;
/// Default step cap for harmonic sampling.
pub const DEFAULT_MAX_STEPS: usize = 100_000;
/// Share of unescaped paths above which a harmonic sample is flagged.
pub const UNESCAPED_WARN_SHARE: f64 = 0.01;
/// Largest hyperbolic radius at which products are still representable.
const MAX_TRACKED_RADIUS: f64 = 1400.0;

/// A symmetric, nondegenerate probability vector on the generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDistribution {
    weights: Vec<f64>,
}

impl StepDistribution {
    /// Validates `weights` (one per generator, in generator order).
    pub fn new(spec: &GroupSpec, weights: Vec<f64>) -> Result<Self> {
        let n = spec.generators.len();
        if weights.len() != n {
            return Err(Error::Invalid(format!("step distribution needs {n} weights, got {}", weights.len())));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!(
                "weight {i} is {}; every generator needs positive weight (nondegeneracy)",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("weights sum to {total}, not 1")));
        }
        let alphabet = spec.alphabet();
        for s in 0..n {
            let t = alphabet.inverse(s as Letter) as usize;
            if (weights[s] - weights[t]).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "symmetry violated: weight {s} is {} but its inverse {t} has {}",
                    weights[s], weights[t]
                )));
            }
        }
        Ok(StepDistribution { weights })
    }

    pub fn uniform(spec: &GroupSpec) -> Self {
        let n = spec.generators.len();
        StepDistribution { weights: vec![1.0 / n as f64; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        *cdf.last_mut().expect("nonempty") = f64::INFINITY;
        cdf
    }

    pub(crate) fn check_matches(&self, spec: &GroupSpec) -> Result<()> {
        if self.weights.len() == spec.generators.len() {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "step distribution has {} weights but the group has {} generators",
                self.weights.len(),
                spec.generators.len()
            )))
        }
    }

    pub fn label(&self) -> String {
        self.weights.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
    }
}

pub(crate) fn draw<R: Rng>(rng: &mut R, cdf: &[f64]) -> Letter {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as Letter
}

/// `Y_n o` in polar form: direction seen from `o` and hyperbolic radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitPolar {
    pub direction: SpherePoint,
    pub radius: f64,
}

/// One sampled path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub seed: u64,
    pub increments: Vec<Letter>,
    /// `Y_0 = id, Y_1, ..., Y_n`.
    pub states: Vec<MoebiusMap>,
    /// `Y_k o` for every state; polar form stays accurate far from `o`.
    pub orbit_trace: Vec<OrbitPolar>,
}

fn polar(m: &MoebiusMap) -> OrbitPolar {
    let (direction, radius) = m.orbit_point();
    OrbitPolar { direction, radius }
}

/// Samples `n` steps from the stream seeded by `seed`.
pub fn sample_path(spec: &GroupSpec, mu: &StepDistribution, n: usize, seed: u64) -> Result<PathSample> {
    mu.check_matches(spec)?;
    let cdf = mu.cdf();
    let mut rng = rng::stream(seed);
    let mut y = MoebiusMap::IDENTITY;
    let mut out = PathSample { seed, increments: Vec::with_capacity(n), states: vec![y], orbit_trace: vec![polar(&y)] };
    for _ in 0..n {
        let z = draw(&mut rng, &cdf);
        y = compose(&y, &spec.generators[z as usize]);
        out.increments.push(z);
        out.states.push(y);
        out.orbit_trace.push(polar(&y));
    }
    Ok(out)
}

/// A mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Mean and jackknife standard error.
pub fn jackknife_mean(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    let value = total / n;
    if xs.len() < 2 {
        return Estimate { value, stderr: f64::INFINITY };
    }
    let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
    let mean_loo = loo.iter().sum::<f64>() / n;
    let var = loo.iter().map(|t| (t - mean_loo).powi(2)).sum::<f64>() * (n - 1.0) / n;
    Estimate { value, stderr: var.sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftEstimates {
    /// `|Y_n| / n`.
    pub word: Estimate,
    /// `d(o, Y_n o) / n`.
    pub hyp: Estimate,
    pub n_paths: usize,
    pub length: usize,
}

struct PathEnd {
    reduced: Vec<Letter>,
    radius: f64,
}

fn run_to_length(spec: &GroupSpec, cdf: &[f64], length: usize, seed: u64) -> PathEnd {
    let alphabet = spec.alphabet();
    let mut rng = rng::stream(seed);
    let mut reduced: Vec<Letter> = Vec::with_capacity(length);
    let mut y = MoebiusMap::IDENTITY;
    for _ in 0..length {
        let z = draw(&mut rng, cdf);
        if reduced.last() == Some(&alphabet.inverse(z)) {
            reduced.pop();
        } else {
            reduced.push(z);
        }
        y = compose(&y, &spec.generators[z as usize]);
    }
    PathEnd { reduced, radius: y.displacement() }
}

fn check_length(spec: &GroupSpec, length: usize) -> Result<()> {
    if length < 100 {
        return Err(Error::Invalid(format!("walk length {length} is below the minimum of 100")));
    }
    let c = spec.generators.iter().map(|g| g.displacement()).fold(0.0, f64::max);
    if c * length as f64 > MAX_TRACKED_RADIUS {
        return Err(Error::Range(format!(
            "length {length} can reach radius {:.0}, beyond the representable {MAX_TRACKED_RADIUS}",
            c * length as f64
        )));
    }
    Ok(())
}

fn path_ends(spec: &GroupSpec, mu: &StepDistribution, n_paths: usize, length: usize, seed: u64) -> Vec<PathEnd> {
    let cdf = mu.cdf();
    (0..n_paths).into_par_iter().map(|i| run_to_length(spec, &cdf, length, rng::child_seed(seed, i as u64))).collect()
}

/// Word and hyperbolic drift at time `length`, averaged over `n_paths` paths.
pub fn drift_estimates(
    spec: &GroupSpec,
    mu: &StepDistribution,
    n_paths: usize,
    length: usize,
    seed: u64,
) -> Result<DriftEstimates> {
    spec.require_free("drift estimation")?;
    mu.check_matches(spec)?;
    check_length(spec, length)?;
    if n_paths < 2 {
        return Err(Error::Invalid("drift estimation needs at least two paths".into()));
    }
    let ends = path_ends(spec, mu, n_paths, length, seed);
    let n = length as f64;
    let word: Vec<f64> = ends.iter().map(|e| e.reduced.len() as f64 / n).collect();
    let hyp: Vec<f64> = ends.iter().map(|e| e.radius / n).collect();
    Ok(DriftEstimates { word: jackknife_mean(&word), hyp: jackknife_mean(&hyp), n_paths, length })
}

/// Asymptotic entropy estimated as the Green drift `d_G(id, Y_n) / n`.
pub fn entropy_estimate(
    spec: &GroupSpec,
    mu: &StepDistribution,
    n_paths: usize,
    length: usize,
    seed: u64,
) -> Result<Estimate> {
    spec.require_free("entropy estimation")?;
    mu.check_matches(spec)?;
    check_length(spec, length)?;
    if n_paths < 2 {
        return Err(Error::Invalid("entropy estimation needs at least two paths".into()));
    }
    let tree = tree_first_passage_solve(spec, mu)?;
    let minus_log: Vec<f64> = tree.fs.iter().map(|f| -f.ln()).collect();
    let ends = path_ends(spec, mu, n_paths, length, seed);
    let n = length as f64;
    let green: Vec<f64> =
        ends.iter().map(|e| e.reduced.iter().map(|&l| minus_log[l as usize]).sum::<f64>() / n).collect();
    Ok(jackknife_mean(&green))
}

/// Harmonic-measure sample: each path walks until `|Y_n o| > 1 - eps_stop`
/// and contributes the direction of `Y_n o`.
///
/// Paths still inside after `max_steps` steps are left out of the sample;
/// their number is recorded in the metadata as `unescaped`, and
/// `unescaped_warning` is set above one percent.
pub fn harmonic_sample(
    spec: &GroupSpec,
    mu: &StepDistribution,
    n_paths: usize,
    eps_stop: f64,
    max_steps: usize,
    seed: u64,
) -> Result<BoundarySampleSet> {
    mu.check_matches(spec)?;
    if !(eps_stop > 0.0 && eps_stop <= 1e-2) {
        return Err(Error::Invalid(format!("eps_stop {eps_stop} outside (0, 1e-2]")));
    }
    if max_steps < 1000 {
        return Err(Error::Invalid(format!("max_steps {max_steps} is below the minimum of 1000")));
    }
    let stop_radius = 2.0 * (1.0 - eps_stop).atanh();
    let cdf = mu.cdf();
    let exits: Vec<Option<SpherePoint>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::child_stream(seed, i as u64);
            let mut y = MoebiusMap::IDENTITY;
            for _ in 0..max_steps {
                let z = draw(&mut rng, &cdf);
                y = compose(&y, &spec.generators[z as usize]);
                let (dir, r) = y.orbit_point();
                if r > stop_radius {
                    return Some(dir);
                }
            }
            None
        })
        .collect();
    let unescaped = exits.iter().filter(|e| e.is_none()).count();
    let points: Vec<SpherePoint> = exits.into_iter().flatten().collect();
    let warn = n_paths > 0 && unescaped as f64 > UNESCAPED_WARN_SHARE * n_paths as f64;
    Ok(BoundarySampleSet::uniform(points, Provenance::Harmonic, spec.ambient_dim)
        .with_meta("preset", spec.name.as_str())
        .with_meta("mu", mu.label())
        .with_meta("eps_stop", eps_stop)
        .with_meta("max_steps", max_steps as u64)
        .with_meta("seed", seed)
        .with_meta("paths", n_paths as u64)
        .with_meta("escaped", (n_paths - unescaped) as u64)
        .with_meta("unescaped", unescaped as u64)
        .with_meta("unescaped_warning", warn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::load_preset;

    #[test]
    fn step_distribution_validation() {
        let spec = load_preset("gamma2").unwrap();
        assert!(StepDistribution::new(&spec, vec![0.25; 4]).is_ok());
        let asym = StepDistribution::new(&spec, vec![0.4, 0.4, 0.1, 0.1]).unwrap_err();
        assert!(asym.to_string().contains("symmetry"));
        assert!(StepDistribution::new(&spec, vec![0.5, 0.0, 0.5, 0.0]).is_err());
        assert!(StepDistribution::new(&spec, vec![0.3, 0.3, 0.3, 0.3]).is_err());
        assert!(StepDistribution::new(&spec, vec![0.25; 3]).is_err());
    }

    #[test]
    fn empty_path_is_identity() {
        let spec = load_preset("gamma2").unwrap();
        let p = sample_path(&spec, &StepDistribution::uniform(&spec), 0, 3).unwrap();
        assert_eq!(p.states, vec![MoebiusMap::IDENTITY]);
        assert_eq!(p.orbit_trace[0].radius, 0.0);
    }

    #[test]
    fn states_follow_increments() {
        let spec = load_preset("kleinian_pp").unwrap();
        let mu = StepDistribution::uniform(&spec);
        let p = sample_path(&spec, &mu, 50, 11).unwrap();
        assert_eq!(p, sample_path(&spec, &mu, 50, 11).unwrap());
        for (k, z) in p.increments.iter().enumerate() {
            let want = compose(&p.states[k], &spec.generators[*z as usize]);
            assert!(want.approx_eq(&p.states[k + 1], 1e-12));
        }
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let e = jackknife_mean(&xs);
        let mean = 3.5;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
        assert!((e.value - mean).abs() < 1e-15);
        assert!((e.stderr - (var / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn harmonic_guards_and_empty() {
        let spec = load_preset("gamma2").unwrap();
        let mu = StepDistribution::uniform(&spec);
        assert!(harmonic_sample(&spec, &mu, 0, 1e-3, 1000, 1).unwrap().is_empty());
        assert!(harmonic_sample(&spec, &mu, 10, 0.5, 1000, 1).is_err());
        assert!(harmonic_sample(&spec, &mu, 10, 1e-3, 10, 1).is_err());
        assert!(drift_estimates(&spec, &mu, 10, 50, 1).is_err());
    }
}
