//! Shared fixtures for the kernel benchmarks.

use mmp_core::dynamics::{PhysParams, State};
use mmp_core::grid::GridSpec;
use mmp_core::init::{random_divfree_field, SpectrumShape};

pub fn bench_grid(n: usize) -> GridSpec {
    GridSpec::cubic(n, 2.0 * std::f64::consts::PI).expect("valid bench grid")
}

pub fn bench_params() -> PhysParams {
    PhysParams::new(1.0, 1.0, 1.0, 1.0, 0.2).expect("valid bench params")
}

pub fn bench_state(grid: &GridSpec) -> State {
    let shape = SpectrumShape {
        slope: 2.0,
        k_peak: 3.0,
    };
    State::new(
        random_divfree_field(grid, 11, shape, 0.3, false),
        random_divfree_field(grid, 12, shape, 0.2, false),
        random_divfree_field(grid, 13, shape, 0.2, false),
        0.0,
    )
    .expect("fields share the grid")
}
