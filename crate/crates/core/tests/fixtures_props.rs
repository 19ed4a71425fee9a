//! End-to-end fixture properties: generation is reproducible through the
//! file formats, and the solver recovers the weights the animation was
//! rendered from, exactly in the noiseless case and on average under
//! measurement noise.

use facekit_core::fixtures::{make_known_blend_fixture, FixtureSpec};
use facekit_core::io::{save_animation, save_model};
use facekit_core::solver::{solve_sequence, SolveConfig};
use facekit_core::VertexSelector;

fn recovery_config() -> SolveConfig {
    SolveConfig {
        lambda_l2: 1e-9,
        max_iterations: Some(20000),
        ..SolveConfig::default()
    }
}

#[test]
fn fixture_files_are_byte_identical_across_runs() {
    let spec = FixtureSpec {
        seed: 9,
        noise_std: 0.05,
        ..FixtureSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let fixture = make_known_blend_fixture(&spec).unwrap();
        let model_path = dir.path().join(format!("model_{run}.json"));
        let anim_path = dir.path().join(format!("anim_{run}.json"));
        save_model(&model_path, &fixture.model, &[]).unwrap();
        save_animation(&anim_path, &fixture.animation).unwrap();
        files.push((
            std::fs::read(&model_path).unwrap(),
            std::fs::read(&anim_path).unwrap(),
        ));
    }
    assert_eq!(files[0].0, files[1].0, "model files differ between runs");
    assert_eq!(
        files[0].1, files[1].1,
        "animation files differ between runs"
    );
}

#[test]
fn solver_recovers_noiseless_weights() {
    for seed in 0..6 {
        let fixture = make_known_blend_fixture(&FixtureSpec {
            seed,
            ..FixtureSpec::default()
        })
        .unwrap();
        let selector = VertexSelector::all(fixture.model.vertex_count());
        let solved = solve_sequence(
            &fixture.model,
            &selector,
            &fixture.animation,
            None,
            None,
            &recovery_config(),
        )
        .unwrap();
        for (t, (got, want)) in solved
            .track
            .weights
            .iter()
            .zip(&fixture.true_weights.weights)
            .enumerate()
        {
            for s in 0..got.len() {
                assert!(
                    (got[s] - want[s]).abs() <= 1e-4,
                    "seed {seed} frame {t} shape {s}: {} vs {}",
                    got[s],
                    want[s]
                );
            }
        }
    }
}

#[test]
fn recovery_error_stays_small_under_noise() {
    // Gaussian position noise of 0.1 mm perturbs the per-frame least
    // squares solution; averaged over frames, shapes, and seeds the weight
    // error stays well under 0.05.
    let mut total_error = 0.0;
    let mut samples = 0usize;
    for seed in 0..20 {
        let fixture = make_known_blend_fixture(&FixtureSpec {
            seed,
            noise_std: 0.1,
            ..FixtureSpec::default()
        })
        .unwrap();
        let selector = VertexSelector::all(fixture.model.vertex_count());
        let solved = solve_sequence(
            &fixture.model,
            &selector,
            &fixture.animation,
            None,
            None,
            &recovery_config(),
        )
        .unwrap();
        for (got, want) in solved
            .track
            .weights
            .iter()
            .zip(&fixture.true_weights.weights)
        {
            for s in 0..got.len() {
                total_error += (got[s] - want[s]).abs();
                samples += 1;
            }
        }
    }
    let mean = total_error / samples as f64;
    assert!(mean <= 0.05, "mean absolute weight error {mean} too large");
}

#[test]
fn temporal_term_suppresses_noise_jitter() {
    // With measurement noise, pulling each frame towards the previous one
    // must reduce frame-to-frame weight jitter.
    let fixture = make_known_blend_fixture(&FixtureSpec {
        seed: 4,
        frame_count: 48,
        noise_std: 0.3,
        ..FixtureSpec::default()
    })
    .unwrap();
    let selector = VertexSelector::all(fixture.model.vertex_count());
    let jitter = |lambda_temporal: f64| -> f64 {
        let config = SolveConfig {
            lambda_temporal,
            ..recovery_config()
        };
        let solved = solve_sequence(
            &fixture.model,
            &selector,
            &fixture.animation,
            None,
            None,
            &config,
        )
        .unwrap();
        let w = &solved.track.weights;
        let mut total = 0.0;
        for t in 1..w.len() {
            for (cur, prev) in w[t].iter().zip(&w[t - 1]) {
                total += (cur - prev).powi(2);
            }
        }
        total
    };
    let rough = jitter(0.0);
    let smooth = jitter(50.0);
    assert!(
        smooth < rough,
        "temporal term failed to smooth: {smooth} vs {rough}"
    );
}
