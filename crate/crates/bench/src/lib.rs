//! Shared fixtures for the criterion benches.

use skelfilter::sim::{generate, ScenarioSpec, Task};
use skelfilter::{CostMatrix, Frame};

/// Measurement stream of the two-person interaction task.
pub fn two_person_stream(seconds: f64, seed: u64) -> Vec<Frame> {
    generate(&ScenarioSpec::new(Task::T1Interaction, seconds, 2, seed))
        .expect("valid scenario")
        .measurements
}

/// Deterministic dense cost matrix with distinct-looking entries.
pub fn cost_matrix(rows: usize, cols: usize) -> CostMatrix {
    let values: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| ((i * 31 + j * 17) % 23) as f64 + 0.01 * (i as f64 - j as f64).abs())
                .collect()
        })
        .collect();
    CostMatrix::from_rows(&values)
}
