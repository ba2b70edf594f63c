use limitset::green::*;
use limitset::group::{load_preset, GroupSpec, Word};
use limitset::walk::StepDistribution;
use proptest::prelude::*;

fn schottky(weights: Option<Vec<f64>>) -> (GroupSpec, StepDistribution) {
    let spec = load_preset("schottky2").unwrap();
    let mu = match weights {
        Some(w) => StepDistribution::new(&spec, w).unwrap(),
        None => StepDistribution::uniform(&spec),
    };
    (spec, mu)
}

// F_i = p_i + sum_{j != i} p_j F_{j^-1} F_i, solved by plain iteration
fn first_passage_oracle(p: &[f64]) -> Vec<f64> {
    let k = p.len() / 2;
    let inv = |j: usize| (j + k) % (2 * k);
    let mut f = vec![0.0; p.len()];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..p.len())
            .map(|i| {
                let back: f64 = (0..p.len()).filter(|&j| j != i).map(|j| p[j] * f[inv(j)]).sum();
                p[i] / (1.0 - back)
            })
            .collect();
        f = next;
    }
    f
}

fn w(letters: &[u8]) -> Word {
    Word::new(letters.to_vec())
}

#[test]
fn uniform_rank_two_passage_is_one_third() {
    let (spec, mu) = schottky(None);
    let tree = tree_first_passage_solve(&spec, &mu).unwrap();
    assert!(tree.residual <= 1e-12);
    for f in &tree.fs {
        assert!((f - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn nonuniform_solver_matches_iteration() {
    let p = vec![0.1, 0.4, 0.1, 0.4];
    let (spec, mu) = schottky(Some(p.clone()));
    let tree = tree_first_passage_solve(&spec, &mu).unwrap();
    for (a, b) in tree.fs.iter().zip(first_passage_oracle(&p)) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert!((tree.fs[0] - tree.fs[2]).abs() <= 1e-12);
    assert!((tree.fs[1] - tree.fs[3]).abs() <= 1e-12);
}

fn check_montecarlo(weights: Option<Vec<f64>>, trials: u64, seed: u64) {
    let (spec, mu) = schottky(weights);
    let tree = tree_first_passage_solve(&spec, &mu).unwrap();
    let horizon = 200;
    let bound = truncation_bound(&mu, horizon);
    let rows = green_f_montecarlo_ball(&spec, &mu, 4, trials, horizon, seed).unwrap();
    assert_eq!(rows.len(), 161);
    // 160 correlated comparisons: each within a Bonferroni band, and the
    // share outside 3 sigma no larger than chance allows
    let mut outside = 0;
    for r in &rows[1..] {
        let exact = tree.f(&r.target);
        let err = (r.f_hat - exact).abs() - bound;
        assert!(err <= 4.0 * r.stderr, "{}: {} vs {exact} (se {})", r.target.label(), r.f_hat, r.stderr);
        if err > 3.0 * r.stderr {
            outside += 1;
        }
    }
    assert!(outside <= 4, "{outside} words outside 3 sigma");
    assert_eq!(rows[0].f_hat, 1.0);
}

#[test]
fn montecarlo_agrees_with_tree_uniform() {
    check_montecarlo(None, 100_000, 1);
}

#[test]
fn montecarlo_agrees_with_tree_nonuniform() {
    check_montecarlo(Some(vec![0.15, 0.35, 0.15, 0.35]), 100_000, 2);
}

#[test]
fn single_target_estimate_matches_ball_row() {
    let (spec, mu) = schottky(None);
    let target = w(&[0, 1]);
    let one = green_f_montecarlo(&spec, &mu, &target, 20_000, 100, 7).unwrap();
    let ball = green_f_montecarlo_ball(&spec, &mu, 2, 20_000, 100, 7).unwrap();
    assert!(one.underestimate);
    assert_eq!(one.f_hat, ball.iter().find(|r| r.target.letters == target.letters).unwrap().f_hat);
    assert!(green_f_montecarlo(&spec, &mu, &target, 100, 100, 7).is_err());
}

#[test]
fn spectral_radius_of_the_simple_walk() {
    // 2 sqrt(2k - 1) / 2k on the 2k-regular tree
    let (_, mu) = schottky(None);
    assert!((spectral_radius(&mu) - 3f64.sqrt() / 2.0).abs() < 1e-9);
}

// |Y_n| for the simple walk on the 4-regular tree: 0 -> 1, k -> k + 1 w.p. 3/4, k -> k - 1 w.p. 1/4
fn return_series_oracle(n_max: usize) -> f64 {
    let mut dist = vec![0.0; n_max + 2];
    dist[0] = 1.0;
    let mut sum = 1.0;
    for _ in 0..n_max {
        let mut next = vec![0.0; n_max + 2];
        next[1] += dist[0];
        for k in 1..=n_max {
            next[k + 1] += 0.75 * dist[k];
            next[k - 1] += 0.25 * dist[k];
        }
        dist = next;
        sum += dist[0];
    }
    sum
}

#[test]
fn convolution_series_matches_the_length_chain() {
    let (spec, mu) = schottky(None);
    let id = Word::identity();
    for n in [0, 1, 2, 5, 12, 20] {
        let g = green_series(&spec, &mu, &id, n, 10).unwrap();
        assert!((g - return_series_oracle(n)).abs() < 1e-12, "{n}");
    }
}

#[test]
fn convolution_series_approaches_the_green_function() {
    // G(e, e) = 1 / (1 - U) with return probability U = sum p_s F_{s^-1} = 1/3
    let (spec, mu) = schottky(None);
    let id = Word::identity();
    let mut last = 0.0;
    for n in [0, 1, 2, 4, 10, 20, 40, 60] {
        let g = green_series(&spec, &mu, &id, n, 10).unwrap();
        assert!(g >= last - 1e-15);
        assert!(g <= 1.5 + 1e-12);
        last = g;
    }
    assert!((last - 1.5).abs() < 0.01, "{last}");
    assert!(green_series(&spec, &mu, &id, 60, 8).unwrap() <= last);
    assert_eq!(green_series(&spec, &mu, &id, 0, 5).unwrap(), 1.0);
    assert_eq!(green_series(&spec, &mu, &w(&[0]), 0, 5).unwrap(), 0.0);
    // G(e, a) = F(e, a) G(a, a) = 1/2
    let ga = green_series(&spec, &mu, &w(&[0]), 60, 10).unwrap();
    assert!((ga - 0.5).abs() < 0.01, "{ga}");
}

#[test]
fn martin_kernel_through_the_tree() {
    let (spec, mu) = schottky(None);
    let tree = tree_first_passage_solve(&spec, &mu).unwrap();
    assert!((martin_kernel(&tree, &w(&[0]), &w(&[0, 1])) - 3.0).abs() < 1e-10);
    assert!((martin_kernel(&tree, &w(&[0]), &w(&[1])) - 1.0 / 3.0).abs() < 1e-10);
    assert!((martin_kernel(&tree, &Word::identity(), &w(&[1, 1, 0])) - 1.0).abs() < 1e-12);
}

// harmonic measure of the cylinder of reduced words starting with `prefix`
// for the simple walk on the rank-2 tree: 1 / (4 * 3^(n - 1))
fn cylinder(prefix: &[u8]) -> f64 {
    0.25 * 3f64.powi(1 - prefix.len() as i32)
}

#[test]
fn harmonic_derivative_matches_cylinder_ratios() {
    let (spec, mu) = schottky(None);
    let tree = tree_first_passage_solve(&spec, &mu).unwrap();
    let alphabet = spec.alphabet();
    let depth = 8;
    for h in [w(&[0]), w(&[1, 0]), w(&[2, 3, 3])] {
        for l in 0..4u8 {
            let ray = Ray::power(l, depth);
            // nu(h C) / nu(C) for the cylinder C of the ray prefix
            let image = alphabet.multiply(&h, ray.prefix());
            let want = cylinder(&image.letters) / cylinder(&ray.prefix().letters);
            let got = harmonic_rn_derivative(&tree, &h, &ray).unwrap();
            assert!((got / want - 1.0).abs() < 1e-9, "{} along {l}: {got} vs {want}", h.label());
        }
    }
}

#[test]
fn green_busemann_values() {
    let (spec, mu) = schottky(None);
    let tree = tree_first_passage_solve(&spec, &mu).unwrap();
    let ln3 = 3f64.ln();
    assert_eq!(green_busemann(&tree, &Ray::power(0, 5), &Word::identity()).unwrap(), 0.0);
    assert!((green_busemann(&tree, &Ray::power(0, 5), &w(&[0])).unwrap() - ln3).abs() < 1e-10);
    assert!((green_busemann(&tree, &Ray::power(1, 5), &w(&[0])).unwrap() + ln3).abs() < 1e-10);
    assert!(green_busemann(&tree, &Ray::power(0, 1), &w(&[0, 0, 1])).is_err());
    let bad = Ray::from_prefixes(spec.alphabet(), &[w(&[0]), w(&[1, 1])]);
    assert!(bad.is_err());
}

#[test]
fn pair_density_from_common_prefix() {
    let (spec, mu) = schottky(None);
    let tree = tree_first_passage_solve(&spec, &mu).unwrap();
    let a = spec.alphabet();
    let r = |ws: &[u8]| Ray::from_prefixes(a, &[w(ws)]).unwrap();
    assert!((tilde_nu_density(&tree, &r(&[0, 1]), &r(&[1, 0])).unwrap() - 1.0).abs() < 1e-12);
    assert!((tilde_nu_density(&tree, &r(&[0, 1]), &r(&[0, 0])).unwrap() - 9.0).abs() < 1e-9);
    assert!(tilde_nu_density(&tree, &r(&[0, 1]), &r(&[0, 1])).is_err());
}

proptest! {
    #[test]
    fn tree_passage_is_multiplicative(letters in proptest::collection::vec(0u8..4, 0..12), p in 0.05..0.45f64) {
        let (spec, mu) = schottky(Some(vec![p, 0.5 - p, p, 0.5 - p]));
        let tree = tree_first_passage_solve(&spec, &mu).unwrap();
        let word = spec.alphabet().reduce(&letters);
        let product: f64 = word.letters.iter().map(|&l| tree.fs[l as usize]).product();
        prop_assert!((tree.f(&word) - product).abs() <= 1e-12 * product.max(1e-300));
        let lows = tree.fs.iter().map(|f| -f.ln()).fold(f64::INFINITY, f64::min);
        let highs = tree.fs.iter().map(|f| -f.ln()).fold(0.0, f64::max);
        let n = word.len() as f64;
        let d = tree.d_g(&word);
        prop_assert!(d >= lows * n - 1e-9 && d <= highs * n + 1e-9);
    }

    #[test]
    fn green_distance_is_left_invariant(g in proptest::collection::vec(0u8..4, 0..8), h in proptest::collection::vec(0u8..4, 0..8)) {
        let (spec, mu) = schottky(Some(vec![0.2, 0.3, 0.2, 0.3]));
        let tree = tree_first_passage_solve(&spec, &mu).unwrap();
        let a = spec.alphabet();
        let (g, h) = (a.reduce(&g), a.reduce(&h));
        let direct = tree.d_g(&a.multiply(&a.invert(&g), &h));
        prop_assert!((tree.distance(&g, &h) - direct).abs() < 1e-9);
    }
}
