use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use affordance_grpo::grpo::{kl_estimate, Policy};
use affordance_grpo::parser::parse_response;
use affordance_grpo::toy::{
    generate_scene, Corruption, Difficulty, PreparedScene, SoftmaxPolicy, FEATURE_DIM,
};

fn scene(seed: u64, d: Difficulty) -> PreparedScene {
    PreparedScene::new(generate_scene(&mut ChaCha8Rng::seed_from_u64(seed), d))
}

#[test]
fn uniform_theta_gives_uniform_probabilities() {
    let q = scene(11, Difficulty::Hard);
    let n = q.candidates.len() as f64;
    for a in 0..q.candidates.len() {
        let lp = SoftmaxPolicy.log_prob(&[0.0; FEATURE_DIM], &q, &a);
        assert!((lp.exp() - 1.0 / n).abs() < 1e-15);
    }
}

#[test]
fn log_prob_matches_enumerated_softmax() {
    let q = scene(12, Difficulty::Easy);
    let theta = [0.7, -1.3, 0.4, 2.0, -0.5, 0.1, -2.2];
    let logits: Vec<f64> = q
        .candidates
        .iter()
        .map(|c| c.features.iter().zip(&theta).map(|(f, t)| f * t).sum())
        .collect();
    let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
    for (a, l) in logits.iter().enumerate() {
        let want = (l.exp() / z).ln();
        assert!((SoftmaxPolicy.log_prob(&theta, &q, &a) - want).abs() < 1e-12);
    }
}

#[test]
fn sampled_frequencies_within_three_sigma() {
    let q = scene(13, Difficulty::Easy);
    let theta = [1.5, 0.5, 1.0, -0.5, -0.5, -1.0, -1.0];
    let p = SoftmaxPolicy.probabilities(&theta, &q);
    let draws = 100_000;
    let mut counts = vec![0usize; p.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..draws {
        counts[SoftmaxPolicy.sample(&theta, &q, &mut rng)] += 1;
    }
    for (c, pi) in counts.iter().zip(&p) {
        let sigma = (draws as f64 * pi * (1.0 - pi)).sqrt();
        assert!(
            (*c as f64 - draws as f64 * pi).abs() <= 3.0 * sigma.max(1.0),
            "count {c} vs p {pi}"
        );
    }
}

#[test]
fn single_candidate_has_zero_gradient() {
    let mut q = scene(14, Difficulty::Easy);
    q.candidates.truncate(1);
    let g = SoftmaxPolicy.grad_log_prob(&[0.3; FEATURE_DIM], &q, &0);
    assert!(g.iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn symmetric_pair_has_antisymmetric_gradient() {
    let mut q = scene(15, Difficulty::Easy);
    q.candidates.truncate(2);
    q.candidates[0].features = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    q.candidates[1].features = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let theta = [0.4, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0];
    let g0 = SoftmaxPolicy.grad_log_prob(&theta, &q, &0);
    let g1 = SoftmaxPolicy.grad_log_prob(&theta, &q, &1);
    for (a, b) in g0.iter().zip(&g1) {
        assert!((a + b).abs() < 1e-15);
    }
    assert_eq!(g0[0], 0.5);
}

#[test]
fn k3_mean_tracks_exact_kl() {
    let q = scene(16, Difficulty::Hard);
    let theta = [1.0, 0.5, -0.5, 0.2, 0.0, -1.0, 0.3];
    let reference = [0.0, 1.0, 0.5, -0.2, 0.3, 0.0, 0.0];
    let exact = SoftmaxPolicy.exact_kl(&theta, &reference, &q);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let a = SoftmaxPolicy.sample(&theta, &q, &mut rng);
            kl_estimate(
                SoftmaxPolicy.log_prob(&theta, &q, &a),
                SoftmaxPolicy.log_prob(&reference, &q, &a),
            )
        })
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!(xs.iter().all(|&x| x >= 0.0));
    assert!(
        (mean - exact).abs() <= 3.0 * sd / (n as f64).sqrt(),
        "{mean} vs {exact}"
    );
}

#[test]
fn only_corrupted_templates_fail_format() {
    for seed in 0..20 {
        for d in [Difficulty::Easy, Difficulty::Hard] {
            let q = scene(seed, d);
            for c in &q.candidates {
                assert_eq!(
                    parse_response(&c.text).format_ok,
                    c.corruption == Corruption::None
                );
            }
        }
    }
}
