//! Separable d-dimensional FFT on row-major cubic arrays.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Clone)]
pub(crate) struct FftNd {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("n", &self.n).field("dim", &self.dim).finish()
    }
}

impl FftNd {
    pub(crate) fn new(n: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/N^d` normalization.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        if data.len() >= PAR_THRESHOLD {
            data.par_iter_mut().for_each(|v| *v *= scale);
        } else {
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.n;
        let scratch_len = fft.get_inplace_scratch_len();

        // Last axis is contiguous.
        let rows_per_chunk = (PAR_THRESHOLD / n).max(1);
        let run_rows = |chunk: &mut [Complex64]| {
            let mut scratch = vec![Complex64::default(); scratch_len];
            fft.process_with_scratch(chunk, &mut scratch);
        };
        if data.len() >= PAR_THRESHOLD {
            data.par_chunks_mut(rows_per_chunk * n).for_each(run_rows);
        } else {
            run_rows(data);
        }

        for axis in 0..self.dim.saturating_sub(1) {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = n * stride;
            let run_block = |chunk: &mut [Complex64]| {
                let mut lines = vec![Complex64::default(); block];
                let mut scratch = vec![Complex64::default(); scratch_len];
                for i in 0..n {
                    for s in 0..stride {
                        lines[s * n + i] = chunk[i * stride + s];
                    }
                }
                fft.process_with_scratch(&mut lines, &mut scratch);
                for i in 0..n {
                    for s in 0..stride {
                        chunk[i * stride + s] = lines[s * n + i];
                    }
                }
            };
            if data.len() >= PAR_THRESHOLD {
                data.par_chunks_mut(block).for_each(run_block);
            } else {
                data.chunks_mut(block).for_each(run_block);
            }
        }
    }
}
