//! FFT plumbing for periodic fields.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::SpatialGrid;

#[derive(Clone)]
pub struct Spectral {
    grid: SpatialGrid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = (0..grid.dim())
            .map(|j| planner.plan_fft_forward(grid.cells(j)))
            .collect();
        let inverse = (0..grid.dim())
            .map(|j| planner.plan_fft_inverse(grid.cells(j)))
            .collect();
        Self {
            grid: grid.clone(),
            forward,
            inverse,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let n0 = self.grid.cells(0);
        for row in data.chunks_exact_mut(n0) {
            plans[0].process(row);
        }
        if self.grid.dim() == 2 {
            let n1 = self.grid.cells(1);
            let mut column = vec![Complex64::new(0.0, 0.0); n1];
            for i0 in 0..n0 {
                for (i1, c) in column.iter_mut().enumerate() {
                    *c = data[i0 + n0 * i1];
                }
                plans[1].process(&mut column);
                for (i1, c) in column.iter().enumerate() {
                    data[i0 + n0 * i1] = *c;
                }
            }
        }
    }

    /// Unnormalised forward transform.
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Normalised inverse transform, keeping the real part.
    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    /// Spectral derivative along `axis`.
    pub fn derivative(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let mut spec = self.forward(field);
        for (idx, c) in spec.iter_mut().enumerate() {
            let kappa = self.grid.wavenumber(axis, self.grid.multi_index(idx)[axis], false);
            *c *= Complex64::new(0.0, kappa);
        }
        self.inverse(spec)
    }
}
