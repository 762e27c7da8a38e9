//! Unnormalized d-dimensional FFTs on row-major cubic arrays.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction))
}

/// In-place transform of an `n^d` array, axis 0 slowest.
pub(crate) fn fft_nd(data: &mut [Complex64], n: usize, d: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), n.pow(d as u32));
    let fft = plan(n, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);
    if d == 1 {
        return;
    }

    let mut buf: Vec<Complex64> = Vec::new();
    for axis in 0..d - 1 {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = n * stride;
        buf.resize(block, Complex64::new(0.0, 0.0));
        for chunk in data.chunks_mut(block) {
            // transpose (l, i) -> (i, l) so every line is contiguous
            for l in 0..n {
                let row = &chunk[l * stride..(l + 1) * stride];
                for (i, &v) in row.iter().enumerate() {
                    buf[i * n + l] = v;
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for l in 0..n {
                let row = &mut chunk[l * stride..(l + 1) * stride];
                for (i, v) in row.iter_mut().enumerate() {
                    *v = buf[i * n + l];
                }
            }
        }
    }
}

pub(crate) fn forward(data: &mut [Complex64], n: usize, d: usize) {
    fft_nd(data, n, d, FftDirection::Forward)
}

pub(crate) fn inverse(data: &mut [Complex64], n: usize, d: usize) {
    fft_nd(data, n, d, FftDirection::Inverse)
}
