//! Shared scenario builders for the criterion benchmarks.
//!
//! Everything here is deterministic: scenarios come from the seeded fixture
//! generators in [`facekit_core::fixtures`], so timings are comparable
//! across runs without data drift.

use facekit_core::fixtures::{make_known_blend_fixture, FixtureSpec, KnownBlendFixture};

/// Builds a noiseless known-blend scenario of the given size.
pub fn blend_scenario(
    seed: u64,
    vertices: usize,
    shapes: usize,
    frames: usize,
) -> KnownBlendFixture {
    make_known_blend_fixture(&FixtureSpec {
        seed,
        vertex_count: vertices,
        shape_count: shapes,
        frame_count: frames,
        ..FixtureSpec::default()
    })
    .expect("benchmark fixture spec is valid")
}

/// Absolute vertex positions for every frame of the scenario clip.
pub fn position_frames(fixture: &KnownBlendFixture) -> Vec<Vec<f64>> {
    (0..fixture.animation.frame_count())
        .map(|t| {
            fixture
                .animation
                .frame_positions(t, fixture.model.neutral())
                .expect("fixture frames are well formed")
        })
        .collect()
}

/// Per-frame vertex deltas for the scenario clip.
pub fn delta_frames(fixture: &KnownBlendFixture) -> Vec<Vec<f64>> {
    (0..fixture.animation.frame_count())
        .map(|t| {
            fixture
                .animation
                .frame_delta(t, fixture.model.neutral())
                .expect("fixture frames are well formed")
        })
        .collect()
}
