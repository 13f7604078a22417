//! Cached 3D complex FFTs over `ndarray` storage.
//!
//! Plans are memoized per axis length. Lane batches run in parallel under
//! whatever rayon pool is installed; every lane writes only its own slice,
//! so results are bit-identical for any worker count.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::parallel::prelude::*;
use ndarray::{Array3, ArrayViewMut2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(len: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, matches!(dir, Direction::Forward));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(key)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match dir {
                Direction::Forward => planner.plan_fft(len, FftDirection::Forward),
                Direction::Inverse => planner.plan_fft(len, FftDirection::Inverse),
            }
        })
        .clone()
}

/// Transform the columns (axis 0) of a 2D slab: gather each strided lane,
/// run the plan, scatter back.
fn transform_slab_columns(mut slab: ArrayViewMut2<'_, Complex64>, fft: &dyn Fft<f64>) {
    let (len, cols) = slab.dim();
    let mut buf = vec![Complex64::default(); len];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for c in 0..cols {
        for (b, v) in buf.iter_mut().zip(slab.column(c).iter()) {
            *b = *v;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (v, b) in slab.column_mut(c).iter_mut().zip(buf.iter()) {
            *v = *b;
        }
    }
}

/// Unnormalized 3D transform along all axes, in place.
///
/// `Forward` uses the `e^{-i k x}` kernel, `Inverse` the `e^{+i k x}` kernel;
/// neither applies a `1/N` factor. Callers own the normalization convention.
pub fn fft3_inplace(data: &mut Array3<Complex64>, dir: Direction) {
    let (_, _, n3) = data.dim();

    // Contiguous lanes along axis 2.
    let fft3 = plan(n3, dir);
    let scratch_len = fft3.get_inplace_scratch_len();
    {
        let slice = data
            .as_slice_mut()
            .expect("spectral storage must be standard layout");
        slice.par_chunks_exact_mut(n3).for_each_init(
            || vec![Complex64::default(); scratch_len],
            |scratch, lane| fft3.process_with_scratch(lane, scratch),
        );
    }

    // Axis 1: lanes are the columns of each (n2, n3) slab.
    let fft1 = plan(data.dim().1, dir);
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .for_each(|slab| transform_slab_columns(slab, fft1.as_ref()));

    // Axis 0: lanes are the columns of each (n1, n3) slab.
    let fft0 = plan(data.dim().0, dir);
    data.axis_iter_mut(Axis(1))
        .into_par_iter()
        .for_each(|slab| transform_slab_columns(slab, fft0.as_ref()));
}

/// Multiply every element by `factor` in parallel.
pub fn scale_inplace(data: &mut Array3<Complex64>, factor: f64) {
    Zip::from(data).par_for_each(|v| *v *= factor);
}

/// Unnormalized 1D transform on a contiguous buffer.
pub fn fft1_inplace(data: &mut [Complex64], dir: Direction) {
    let fft = plan(data.len(), dir);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(data, &mut scratch);
}
