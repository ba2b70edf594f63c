//! First-passage probabilities, the Green metric and Martin kernels for
//! nearest-neighbour walks on free groups.
//!
//! Three routes compute `F(id, w)`: the exact tree recursion (authoritative),
//! a truncated convolution series, and Monte Carlo (validation only).

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{Alphabet, GroupSpec, Letter, Word, WordBall, DEFAULT_ENTRY_CAP};
use crate::rng;
use crate::walk::{draw, StepDistribution};

/// Residual at which the fixed-point iteration stops.
pub const SOLVER_TOL: f64 = 1e-12;
/// Iteration cap of the fixed-point solver.
pub const SOLVER_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenMethod {
    Montecarlo,
    Convolution,
    TreeExact,
}

impl GreenMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            GreenMethod::Montecarlo => "montecarlo",
            GreenMethod::Convolution => "convolution",
            GreenMethod::TreeExact => "tree-exact",
        }
    }
}

/// An estimate of `F(id, target)` and the Green distance `-log F`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenEstimate {
    pub target: Word,
    pub f_hat: f64,
    pub stderr: f64,
    pub trials: u64,
    pub horizon: u64,
    pub d_g: f64,
    pub method: GreenMethod,
    /// Set when the estimate can only err downwards (finite horizon).
    pub underestimate: bool,
}

impl GreenEstimate {
    fn from_f(target: Word, f_hat: f64, stderr: f64, trials: u64, horizon: u64, method: GreenMethod) -> Self {
        GreenEstimate {
            target,
            f_hat,
            stderr,
            trials,
            horizon,
            d_g: 0.0 - f_hat.ln(),
            method,
            underestimate: method == GreenMethod::Montecarlo,
        }
    }
}

/// CSV with columns `word,F_hat,stderr,dG,method,trials,horizon`.
pub fn estimates_csv(rows: &[GreenEstimate]) -> String {
    let mut out = String::from("word,F_hat,stderr,dG,method,trials,horizon\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.target.label(),
            r.f_hat,
            r.stderr,
            r.d_g,
            r.method.as_str(),
            r.trials,
            r.horizon
        );
    }
    out
}

/// Single-letter first-passage probabilities `F_s = F(id, s)` on the Cayley tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeFirstPassage {
    pub fs: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip)]
    alphabet: Alphabet,
}

impl TreeFirstPassage {
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// `F(id, w) = prod F_letter` over the reduced word.
    pub fn f(&self, w: &Word) -> f64 {
        self.alphabet.reduce(&w.letters).letters.iter().map(|&l| self.fs[l as usize]).product()
    }

    /// `d_G(id, w) = sum -log F_letter`.
    pub fn d_g(&self, w: &Word) -> f64 {
        self.alphabet.reduce(&w.letters).letters.iter().map(|&l| -self.fs[l as usize].ln()).sum()
    }

    /// `d_G(g, h) = d_G(id, g^-1 h)`.
    pub fn distance(&self, g: &Word, h: &Word) -> f64 {
        self.d_g(&self.alphabet.multiply(&self.alphabet.invert(g), h))
    }

    /// `F(g, h)`.
    pub fn f_between(&self, g: &Word, h: &Word) -> f64 {
        (-self.distance(g, h)).exp()
    }

    pub fn estimate(&self, w: &Word) -> GreenEstimate {
        let reduced = self.alphabet.reduce(&w.letters);
        GreenEstimate::from_f(reduced, self.f(w), 0.0, 0, 0, GreenMethod::TreeExact)
    }
}

fn tree_map(mu: &StepDistribution, alphabet: Alphabet, f: &[f64]) -> Vec<f64> {
    let p = mu.weights();
    (0..alphabet.size())
        .map(|s| {
            let through: f64 = (0..alphabet.size())
                .filter(|&t| t != s)
                .map(|t| p[t] * f[alphabet.inverse(t as Letter) as usize])
                .sum();
            p[s] + through * f[s]
        })
        .collect()
}

/// Solves `F_s = mu(s) + sum_{t != s} mu(t) F_{t^-1} F_s` by iteration from zero.
pub fn tree_first_passage_solve(spec: &GroupSpec, mu: &StepDistribution) -> Result<TreeFirstPassage> {
    spec.require_free("the tree first-passage solver")?;
    if spec.rank() < 2 {
        return Err(Error::Unsupported("the tree solver needs rank at least 2".into()));
    }
    mu.check_matches(spec)?;
    let alphabet = spec.alphabet();
    let mut f = vec![0.0; alphabet.size()];
    let mut done: Option<TreeFirstPassage> = None;
    for iterations in 1..=SOLVER_MAX_ITER {
        let next = tree_map(mu, alphabet, &f);
        let residual = tree_map(mu, alphabet, &next).iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        f = next;
        // past the tolerance, keep iterating while the residual still shrinks
        match done {
            Some(ref best) if residual >= best.residual => return Ok(done.unwrap()),
            _ if residual <= SOLVER_TOL => {
                done = Some(TreeFirstPassage { fs: f.clone(), iterations, residual, alphabet });
            }
            _ => {}
        }
    }
    if let Some(best) = done {
        return Ok(best);
    }
    Err(Error::Range(format!("tree solver did not reach residual {SOLVER_TOL} in {SOLVER_MAX_ITER} iterations")))
}

/// Spectral radius of a nearest-neighbour walk on the free group,
/// `min_t [ sum_i sqrt(t^2 + 4 p_i^2) - (k - 1) t ]` with `p_i` the weight of
/// the `i`-th generator (and of its inverse).
pub fn spectral_radius(mu: &StepDistribution) -> f64 {
    let k = mu.weights().len() / 2;
    let p = &mu.weights()[..k];
    let phi = |t: f64| p.iter().map(|pi| (t * t + 4.0 * pi * pi).sqrt()).sum::<f64>() - (k as f64 - 1.0) * t;
    // phi is convex on t >= 0
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if phi(m1) <= phi(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    phi(0.5 * (lo + hi))
}

/// Upper bound `sum_{n > horizon} rho^n` on the first-passage mass missed by a finite horizon.
pub fn truncation_bound(mu: &StepDistribution, horizon: u64) -> f64 {
    let rho = spectral_radius(mu);
    rho.powf(horizon as f64 + 1.0) / (1.0 - rho)
}

/// Monte Carlo estimates of `F(id, w)` for every reduced word with `|w| <= max_len`,
/// all read off the same paths: a trial counts as a hit for `w` when the
/// walk visits `w` within `horizon` steps. Rows are in breadth-first word order.
pub fn green_f_montecarlo_ball(
    spec: &GroupSpec,
    mu: &StepDistribution,
    max_len: usize,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<Vec<GreenEstimate>> {
    spec.require_free("Monte Carlo first passage")?;
    mu.check_matches(spec)?;
    if trials < 10_000 {
        return Err(Error::Invalid(format!("{trials} trials is below the minimum of 10^4")));
    }
    if horizon < 10 * max_len as u64 {
        return Err(Error::Invalid(format!("horizon {horizon} is below 10 |target| = {}", 10 * max_len)));
    }
    let alphabet = spec.alphabet();
    let ball = WordBall::new(alphabet, max_len, DEFAULT_ENTRY_CAP)?;
    let cdf = mu.cdf();
    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let hits: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; ball.len()];
            let mut stamp = vec![u64::MAX; ball.len()];
            let mut letters: Vec<Letter> = Vec::with_capacity(horizon as usize);
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = rng::child_stream(seed, trial);
                letters.clear();
                let mut idx = Some(0usize);
                counts[0] += 1;
                stamp[0] = trial;
                for _ in 0..horizon {
                    let l = draw(&mut rng, &cdf);
                    if letters.last() == Some(&alphabet.inverse(l)) {
                        letters.pop();
                    } else {
                        letters.push(l);
                    }
                    idx = if letters.len() <= max_len {
                        match idx {
                            Some(i) => ball.step(i, l),
                            None => ball.index_of(&Word { letters: letters.clone(), reduced: true }),
                        }
                    } else {
                        None
                    };
                    if let Some(i) = idx {
                        if stamp[i] != trial {
                            stamp[i] = trial;
                            counts[i] += 1;
                        }
                    }
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; ball.len()];
    for h in hits {
        for (t, x) in total.iter_mut().zip(h) {
            *t += x;
        }
    }
    Ok(total
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let p = k as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            GreenEstimate::from_f(ball.word(i), p, se, trials, horizon, GreenMethod::Montecarlo)
        })
        .collect())
}

/// Monte Carlo estimate of `F(id, target)`: the fraction of paths visiting `target` within `horizon` steps.
pub fn green_f_montecarlo(
    spec: &GroupSpec,
    mu: &StepDistribution,
    target: &Word,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<GreenEstimate> {
    let target = spec.alphabet().reduce(&target.letters);
    if target.is_empty() {
        return Ok(GreenEstimate::from_f(target, 1.0, 0.0, trials, horizon, GreenMethod::Montecarlo));
    }
    let ball = green_f_montecarlo_ball(spec, mu, target.len(), trials, horizon, seed)?;
    Ok(ball.into_iter().find(|e| e.target == target).expect("target lies in the ball"))
}

/// `sum_{n <= n_max} mu^n(target)` restricted to paths that stay in the word ball of radius `radius_cap`.
///
/// The restriction only removes mass, so the value is a lower bound for the
/// partial sum, and equals it once `2 radius_cap >= n_max + |target|`.
pub fn green_series(
    spec: &GroupSpec,
    mu: &StepDistribution,
    target: &Word,
    n_max: usize,
    radius_cap: usize,
) -> Result<f64> {
    spec.require_free("the convolution series")?;
    mu.check_matches(spec)?;
    let alphabet = spec.alphabet();
    let target = alphabet.reduce(&target.letters);
    if target.len() > radius_cap {
        return Ok(0.0);
    }
    let ball = WordBall::new(alphabet, radius_cap, DEFAULT_ENTRY_CAP)?;
    let t = ball.index_of(&target).expect("target inside the ball");
    let p = mu.weights();
    let mut cur = vec![0.0; ball.len()];
    cur[0] = 1.0;
    let mut next = vec![0.0; ball.len()];
    let mut sum = cur[t];
    for _ in 0..n_max {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &m) in cur.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (l, &pl) in p.iter().enumerate() {
                if let Some(j) = ball.step(i, l as Letter) {
                    next[j] += m * pl;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        sum += cur[t];
    }
    Ok(sum)
}

/// `K(g, h) = F(g, h) / F(id, h)`.
pub fn martin_kernel(tree: &TreeFirstPassage, g: &Word, h: &Word) -> f64 {
    (tree.d_g(h) - tree.distance(g, h)).exp()
}

/// A geodesic ray in the Cayley tree, known through a finite reduced prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ray {
    prefix: Word,
}

impl Ray {
    /// A ray from nested reduced prefixes `h_1, h_2, ...`.
    pub fn from_prefixes(alphabet: Alphabet, prefixes: &[Word]) -> Result<Self> {
        let last = prefixes.last().ok_or_else(|| Error::Domain("a ray needs at least one prefix".into()))?;
        for w in prefixes {
            if !alphabet.is_reduced(&w.letters) {
                return Err(Error::Domain(format!("prefix {} is not reduced", w.label())));
            }
        }
        for p in prefixes.windows(2) {
            if p[1].len() <= p[0].len() || p[1].letters[..p[0].len()] != p[0].letters[..] {
                return Err(Error::Domain(format!("prefixes {} and {} are not nested", p[0].label(), p[1].label())));
            }
        }
        Ok(Ray { prefix: last.clone() })
    }

    /// The ray `l, l^2, ...` known up to `len` letters.
    pub fn power(l: Letter, len: usize) -> Self {
        Ray { prefix: Word { letters: vec![l; len], reduced: true } }
    }

    pub fn prefix(&self) -> &Word {
        &self.prefix
    }
}

fn common_prefix_len(a: &[Letter], b: &[Letter]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Green Busemann function `lim d_G(h_n, id) - d_G(h_n, h)` along the ray.
///
/// On the tree the difference is constant once `h_n` leaves the geodesic
/// from `id` to `h`, so it equals `d_G(m, id) - d_G(m, h)` for `m` the
/// branch point.
pub fn green_busemann(tree: &TreeFirstPassage, ray: &Ray, h: &Word) -> Result<f64> {
    let h = tree.alphabet().reduce(&h.letters);
    let xi = &ray.prefix.letters;
    let m = common_prefix_len(xi, &h.letters);
    if m == xi.len() && m < h.len() {
        return Err(Error::Range(format!(
            "ray prefix of length {} is too short to separate it from {}",
            xi.len(),
            h.label()
        )));
    }
    let branch = Word { letters: h.letters[..m].to_vec(), reduced: true };
    Ok(tree.d_g(&branch) - tree.distance(&branch, &h))
}

/// `d(h^* nu) / d nu` at the endpoint of the ray, where `h^* nu = nu(h .)`; equals `exp(b^G(h^-1))`.
pub fn harmonic_rn_derivative(tree: &TreeFirstPassage, h: &Word, ray: &Ray) -> Result<f64> {
    let inv = tree.alphabet().invert(&tree.alphabet().reduce(&h.letters));
    Ok(green_busemann(tree, ray, &inv)?.exp())
}

/// `exp(2 (xi1 | xi2)^G)` where the Green Gromov product is `d_G(id, m)` for `m` the common prefix.
pub fn tilde_nu_density(tree: &TreeFirstPassage, xi1: &Ray, xi2: &Ray) -> Result<f64> {
    let (a, b) = (&xi1.prefix.letters, &xi2.prefix.letters);
    let m = common_prefix_len(a, b);
    if m == a.len() || m == b.len() {
        return Err(Error::Domain("rays do not separate within their known prefixes".into()));
    }
    let branch = Word { letters: a[..m].to_vec(), reduced: true };
    Ok((2.0 * tree.d_g(&branch)).exp())
}
