use limitset::group::{load_preset, GroupSpec};
use limitset::moebius::SpherePoint;
use limitset::sample::BoundarySampleSet;
use limitset::singularity::overlap_statistic;
use limitset::walk::*;

fn schottky() -> (GroupSpec, StepDistribution) {
    let spec = load_preset("schottky2").unwrap();
    let mu = StepDistribution::uniform(&spec);
    (spec, mu)
}

#[test]
fn simple_walk_speed_is_one_half() {
    let (spec, mu) = schottky();
    let d = drift_estimates(&spec, &mu, 10_000, 400, 11).unwrap();
    assert!((0.49..=0.51).contains(&d.word.value), "{:?}", d.word);
    let c = spec.generators.iter().map(|g| g.displacement()).fold(0.0, f64::max);
    assert!(d.hyp.value <= c * d.word.value + 3.0 * d.hyp.stderr);
    assert!(d.hyp.value > 0.0);
}

#[test]
fn simple_walk_entropy() {
    // speed (k - 1) / k times -log F_s = log(2k - 1) on the 2k-regular tree
    let (spec, mu) = schottky();
    let h = entropy_estimate(&spec, &mu, 10_000, 400, 12).unwrap();
    assert!((h.value - 0.5 * 3f64.ln()).abs() < 0.01, "{:?}", h);
}

#[test]
fn entropy_is_positive_for_nonuniform_steps() {
    for name in ["gamma2", "schottky2", "kleinian_pp"] {
        let spec = load_preset(name).unwrap();
        let mu = StepDistribution::new(&spec, vec![0.35, 0.15, 0.35, 0.15]).unwrap();
        let h = entropy_estimate(&spec, &mu, 500, 200, 3).unwrap();
        assert!(h.value > 0.1, "{name}: {:?}", h);
    }
}

#[test]
fn short_walks_are_rejected() {
    let (spec, mu) = schottky();
    assert!(entropy_estimate(&spec, &mu, 100, 99, 0).is_err());
    assert!(drift_estimates(&spec, &mu, 100, 50, 0).is_err());
}

#[test]
fn increment_frequencies_match_the_step_law() {
    let (spec, _) = schottky();
    let mu = StepDistribution::new(&spec, vec![0.1, 0.4, 0.1, 0.4]).unwrap();
    let mut counts = [0u64; 4];
    let steps_per_path = 250;
    let paths = 4000;
    for i in 0..paths {
        for &z in &sample_path(&spec, &mu, steps_per_path, 1000 + i).unwrap().increments {
            counts[z as usize] += 1;
        }
    }
    let n = (paths * steps_per_path as u64) as f64;
    for (k, &c) in counts.iter().enumerate() {
        let p = mu.weights()[k];
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((c as f64 - n * p).abs() < 3.0 * sigma, "letter {k}: {c}");
    }
}

#[test]
fn path_states_follow_increments() {
    let (spec, mu) = schottky();
    let p = sample_path(&spec, &mu, 30, 5).unwrap();
    assert_eq!(p, sample_path(&spec, &mu, 30, 5).unwrap());
    for t in 0..30 {
        let next = limitset::moebius::compose(&p.states[t], &spec.generators[p.increments[t] as usize]);
        assert!(next.approx_eq(&p.states[t + 1], 1e-9));
        assert!((p.orbit_trace[t + 1].radius - next.displacement()).abs() < 1e-9);
    }
    let empty = sample_path(&spec, &mu, 0, 5).unwrap();
    assert_eq!(empty.states.len(), 1);
    assert_eq!(empty.orbit_trace[0].radius, 0.0);
}

#[test]
fn fuchsian_exits_lie_on_the_circle() {
    let spec = load_preset("gamma2").unwrap();
    let mu = StepDistribution::uniform(&spec);
    let s = harmonic_sample(&spec, &mu, 2000, 1e-3, DEFAULT_MAX_STEPS, 4).unwrap();
    assert_eq!(s.len(), 2000);
    assert!(s.max_off_circle() < 1e-3);
    assert!((s.total_weight() - 1.0).abs() < 1e-10);
    assert!(harmonic_sample(&spec, &mu, 0, 1e-3, DEFAULT_MAX_STEPS, 4).unwrap().is_empty());
}

#[test]
fn exit_points_converge_as_eps_shrinks() {
    let spec = load_preset("kleinian_pp").unwrap();
    let mu = StepDistribution::uniform(&spec);
    let coarse = harmonic_sample(&spec, &mu, 1000, 1e-2, DEFAULT_MAX_STEPS, 8).unwrap();
    let fine = harmonic_sample(&spec, &mu, 1000, 1e-3, DEFAULT_MAX_STEPS, 8).unwrap();
    assert_eq!(coarse.len(), fine.len());
    let mut moves: Vec<f64> = coarse
        .points
        .iter()
        .zip(&fine.points)
        .map(|(a, b)| {
            let (a, b) = (a.coords(), b.coords());
            (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    moves.sort_by(f64::total_cmp);
    assert!(moves[moves.len() / 2] < 0.05, "{}", moves[moves.len() / 2]);
}

#[test]
fn gamma2_harmonic_measure_is_swap_symmetric() {
    // z -> 1/z conjugates a to b and acts on the circle by x3 -> -x3
    let spec = load_preset("gamma2").unwrap();
    let mu = StepDistribution::uniform(&spec);
    let s = harmonic_sample(&spec, &mu, 10_000, 1e-3, DEFAULT_MAX_STEPS, 21).unwrap();
    let swapped: Vec<SpherePoint> = s
        .points
        .iter()
        .map(|p| {
            let c = p.coords();
            SpherePoint::from_direction([c[0], c[1], -c[2]]).unwrap()
        })
        .collect();
    let image = BoundarySampleSet::uniform(swapped, s.provenance, 2);
    let ov = overlap_statistic(&s, &image, 32).unwrap();
    assert!(ov > 0.8, "{ov}");
}

#[test]
fn samples_do_not_depend_on_thread_count() {
    let spec = load_preset("kleinian_pp").unwrap();
    let mu = StepDistribution::uniform(&spec);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| harmonic_sample(&spec, &mu, 300, 1e-3, DEFAULT_MAX_STEPS, 99).unwrap().to_csv())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn asymmetric_steps_are_rejected() {
    let (spec, _) = schottky();
    let err = StepDistribution::new(&spec, vec![0.3, 0.2, 0.2, 0.3]).unwrap_err();
    assert!(err.to_string().contains("symmetry"));
    assert!(StepDistribution::new(&spec, vec![0.5, 0.0, 0.5, 0.0]).is_err());
    assert!(StepDistribution::new(&spec, vec![0.25; 3]).is_err());
}
