//! Step-cost probe at the grid sizes used by the long experiments.

use std::time::Instant;

use mmp_core::dynamics::{PhysParams, State, Stepper};
use mmp_core::grid::GridSpec;
use mmp_core::init::{random_divfree_field, SpectrumShape};

fn probe(n: [usize; 3], l: [f64; 3], steps: usize) {
    let grid = GridSpec::new(n, l, 2.0 / 3.0).unwrap();
    let params = PhysParams::new(1.0, 1.0, 1.0, 1.0, 0.2).unwrap();
    let shape = SpectrumShape {
        slope: -0.4,
        k_peak: 0.5,
    };
    let mut s = State::new(
        random_divfree_field(&grid, 1, shape, 0.05, true),
        random_divfree_field(&grid, 2, shape, 0.05, true),
        random_divfree_field(&grid, 3, shape, 0.02, true),
        0.0,
    )
    .unwrap();
    let mut stepper = Stepper::new(&grid, &params);
    stepper.horizontal_mean_free = true;
    let t0 = Instant::now();
    for _ in 0..steps {
        s = stepper.step(&s, 0.1).unwrap();
    }
    let per = t0.elapsed().as_secs_f64() / steps as f64;
    println!(
        "{}x{}x{}: {:.3} s/step ({} threads)",
        n[0],
        n[1],
        n[2],
        per,
        rayon::current_num_threads()
    );
}

fn main() {
    let pi = std::f64::consts::PI;
    probe([32, 32, 32], [2.0 * pi; 3], 5);
    probe([64, 64, 32], [8.0 * pi, 8.0 * pi, 2.0 * pi], 5);
    probe([128, 128, 32], [32.0 * pi, 32.0 * pi, 2.0 * pi], 5);
}
