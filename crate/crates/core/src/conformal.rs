//! Orbit counting, critical exponents, Poincare series and discrete
//! Patterson-Sullivan approximants.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::OrbitTable;
use crate::moebius::{
    ball_to_half_space, busemann, busemann_cocycle, compose, BallPoint, Complex, MoebiusMap, SpherePoint,
};
use crate::sample::{BoundarySampleSet, Provenance};

/// Fraction of the reliable radius where the exponent fit starts.
pub const FIT_WINDOW_LOW: f64 = 0.4;
/// Fraction of the reliable radius where the exponent fit ends.
pub const FIT_WINDOW_HIGH: f64 = 0.95;
/// Number of evaluation radii in the fit window.
pub const FIT_GRID: usize = 64;
/// Offsets above the fitted exponent used for the Patterson-Sullivan schedule.
pub const PS_SCHEDULE: [f64; 4] = [0.3, 0.2, 0.1, 0.05];

/// `#{h : d(o, h o) <= r}` from the table; refuses radii past the reliable range.
pub fn lattice_count(orbit: &OrbitTable, r: f64) -> Result<u64> {
    let safe = orbit.reliable_radius();
    if r > safe {
        return Err(Error::Range(format!(
            "radius {r} exceeds the reliable maximum {safe} for word depth {}",
            orbit.max_word_length()
        )));
    }
    Ok(orbit.sorted_radii().partition_point(|&x| x <= r) as u64)
}

/// Least-squares fit of `log N(r) ~ delta r + c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub radii: Vec<f64>,
    pub counts: Vec<u64>,
    pub delta_hat: f64,
    pub intercept: f64,
    pub fit_window: (f64, f64),
    /// Root-mean-square residual of `log N` about the fitted line.
    pub residual: f64,
}

impl ExponentFit {
    /// CSV with columns `r,count,log_count,fitted`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,count,log_count,fitted\n");
        for (r, n) in self.radii.iter().zip(&self.counts) {
            let fitted = self.delta_hat * r + self.intercept;
            let _ = writeln!(out, "{r},{n},{},{fitted}", (*n as f64).ln());
        }
        out
    }
}

/// Ordinary least squares `y = slope x + intercept`, returning `(slope, intercept, rms)`.
pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Fits the growth rate of a sorted list of radii over `window`.
pub fn fit_exponent(sorted_radii: &[f64], window: (f64, f64)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    let distinct = {
        let a = sorted_radii.partition_point(|&x| x < lo);
        let b = sorted_radii.partition_point(|&x| x <= hi);
        let mut v: Vec<f64> = sorted_radii[a..b].to_vec();
        v.dedup_by(|p, q| (*p - *q).abs() <= 1e-9);
        v.len()
    };
    if !(hi > lo) || distinct < 5 {
        return Err(Error::Range(format!(
            "fit window [{lo:.3}, {hi:.3}] holds {distinct} distinct radii; at least 5 are needed"
        )));
    }
    let radii: Vec<f64> = (0..FIT_GRID).map(|i| lo + (hi - lo) * i as f64 / (FIT_GRID - 1) as f64).collect();
    let counts: Vec<u64> = radii.iter().map(|&r| sorted_radii.partition_point(|&x| x <= r) as u64).collect();
    let logs: Vec<f64> = counts.iter().map(|&n| (n as f64).ln()).collect();
    let (delta_hat, intercept, residual) = least_squares(&radii, &logs);
    if !(delta_hat > 0.0) {
        return Err(Error::Range(format!("fitted exponent {delta_hat} is not positive")));
    }
    Ok(ExponentFit { radii, counts, delta_hat, intercept, fit_window: window, residual })
}

/// Critical exponent estimate over `[0.4, 0.95]` times the reliable radius.
pub fn critical_exponent_fit(orbit: &OrbitTable) -> Result<ExponentFit> {
    let r = orbit.reliable_radius();
    fit_exponent(orbit.sorted_radii(), (FIT_WINDOW_LOW * r, FIT_WINDOW_HIGH * r))
}

/// The half-space translation taking the basepoint to `x`.
pub fn ball_point_lift(x: &BallPoint) -> MoebiusMap {
    let (z, t) = ball_to_half_space(x);
    let s = t.sqrt();
    MoebiusMap::new(Complex::new(s, 0.0), z / s, Complex::new(0.0, 0.0), Complex::new(1.0 / s, 0.0))
        .expect("upper-triangular lift is invertible")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareSum {
    pub partial_sum: f64,
    /// Bound on the omitted terms from the fitted growth; infinite when `s <= delta_hat`.
    pub tail_bound: f64,
}

impl PoincareSum {
    pub fn tail_is_finite(&self) -> bool {
        self.tail_bound.is_finite()
    }
}

/// `sum_h exp(-s d(x, h y))` over the table, summed in ascending `d(o, h o)`.
///
/// The tail bound uses `N(r) <= A exp(delta_hat r)` with `A` the largest ratio
/// `N(r) exp(-delta_hat r)` seen in the fit window, and
/// `d(x, h y) >= d(o, h o) - d(o, x) - d(o, y)`.
pub fn poincare_series(orbit: &OrbitTable, s: f64, x: &BallPoint, y: &BallPoint) -> Result<PoincareSum> {
    if !(s > 0.0) {
        return Err(Error::Invalid(format!("exponent s = {s} must be positive")));
    }
    let lx_inv = ball_point_lift(x).inverse();
    let ly = ball_point_lift(y);
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(orbit.len());
    orbit.for_each_map(|_, h, r| {
        let d = compose(&compose(&lx_inv, h), &ly).displacement();
        terms.push((r, (-s * d).exp()));
    });
    terms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let partial_sum = terms.iter().map(|t| t.1).sum();
    drop(terms);

    let tail_bound = match critical_exponent_fit(orbit) {
        Ok(fit) if s > fit.delta_hat => {
            let envelope = fit
                .radii
                .iter()
                .zip(&fit.counts)
                .map(|(r, &n)| (n as f64).ln() - fit.delta_hat * r)
                .fold(f64::NEG_INFINITY, f64::max);
            let big_r = orbit.reliable_radius();
            let shift = x.norm_hyp() + y.norm_hyp();
            let gap = s - fit.delta_hat;
            s / gap * (envelope - gap * big_r + s * shift).exp()
        }
        Ok(_) => f64::INFINITY,
        Err(_) if orbit.len() == 1 => 0.0,
        Err(_) => f64::INFINITY,
    };
    Ok(PoincareSum { partial_sum, tail_bound })
}

/// Discrete Patterson-Sullivan approximant: the atoms `h o` with
/// `d(o, h o) >= min_radius`, projected radially and weighted `exp(-s d(o, h o))`.
pub fn ps_boundary_sample(orbit: &OrbitTable, s: f64, min_radius: f64, ambient_dim: u8) -> Result<BoundarySampleSet> {
    if !(s > 0.0) {
        return Err(Error::Invalid(format!("exponent s = {s} must be positive")));
    }
    if min_radius < 5.0 {
        return Err(Error::Invalid(format!("minimum radius {min_radius} is below 5")));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    orbit.for_each_map(|_, h, r| {
        if r >= min_radius {
            points.push(h.orbit_point().0);
            // shift the exponent so deep tables do not underflow
            weights.push((-s * (r - min_radius)).exp());
        }
    });
    if points.is_empty() {
        return Err(Error::Range(format!("no orbit points at radius >= {min_radius}")));
    }
    let set = BoundarySampleSet::new(points, weights, Provenance::PattersonSullivan, ambient_dim)?;
    Ok(set
        .with_meta("s", s)
        .with_meta("min_radius", min_radius)
        .with_meta("max_word_length", orbit.max_word_length() as u64))
}

/// `d rho_x / d rho_y (eta) = exp(-delta b_{x, eta}(y))`.
pub fn conformal_rn_derivative(x: &BallPoint, y: &BallPoint, eta: &SpherePoint, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("exponent {delta} must be positive")));
    }
    Ok((-delta * busemann(x, eta, y)).exp())
}

/// Density of the doubled measure against the product measure, `exp(2 delta B_o)`.
pub fn tilde_rho_density(eta1: &SpherePoint, eta2: &SpherePoint, delta: f64) -> Result<f64> {
    Ok((2.0 * delta * busemann_cocycle(&BallPoint::ORIGIN, eta1, eta2)?).exp())
}

trait HypNorm {
    fn norm_hyp(&self) -> f64;
}

impl HypNorm for BallPoint {
    fn norm_hyp(&self) -> f64 {
        2.0 * self.norm().atanh()
    }
}
