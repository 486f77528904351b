//! Periodic tensor grids.
//!
//! Nodes sit at `x_j = i_j * h_j`, `i_j = 0..n_j`, on the torus `[0, L_1) x ... x [0, L_d)`.
//! Flat indices run with the first axis fastest.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Smallest admissible number of cells along an axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    n: Vec<usize>,
    period: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(n: &[usize], period: &[f64]) -> Result<Self> {
        if n.is_empty() || n.len() > 2 {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {}", n.len())));
        }
        if n.len() != period.len() {
            return Err(Error::Grid(format!(
                "{} cell counts but {} periods",
                n.len(),
                period.len()
            )));
        }
        if let Some(&bad) = n.iter().find(|&&c| c < MIN_CELLS) {
            return Err(Error::Grid(format!(
                "cell count {bad} is below the minimum of {MIN_CELLS}"
            )));
        }
        if let Some(&bad) = period.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Grid(format!("period {bad} must be positive and finite")));
        }
        Ok(Self {
            n: n.to_vec(),
            period: period.to_vec(),
        })
    }

    /// Unit-period grid with `n` cells in each of `dim` axes.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(&vec![n; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.period[axis]
    }

    pub fn periods(&self) -> &[f64] {
        &self.period
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.period[axis] / self.n[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|j| self.spacing(j)).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.spacing(j)).product()
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        match self.dim() {
            1 => [flat, 0],
            _ => [flat % self.n[0], flat / self.n[0]],
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        match self.dim() {
            1 => idx[0],
            _ => idx[0] + self.n[0] * idx[1],
        }
    }

    /// Periodic neighbour of `flat` displaced by `offset` cells along `axis`.
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let mut idx = self.multi_index(flat);
        let n = self.n[axis] as isize;
        idx[axis] = (idx[axis] as isize + offset).rem_euclid(n) as usize;
        self.flat_index(idx)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        (0..self.dim()).map(|j| idx[j] as f64 * self.spacing(j)).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Evaluates `f` at every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }

    /// Up to `per_axis` evenly strided nodes along each axis.
    pub fn subsample(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(1);
        let strides: Vec<usize> = self.n.iter().map(|&n| n.div_ceil(per_axis).max(1)).collect();
        (0..self.len())
            .filter(|&i| {
                let idx = self.multi_index(i);
                (0..self.dim()).all(|j| idx[j].is_multiple_of(strides[j]))
            })
            .map(|i| self.point(i))
            .collect()
    }

    /// Signed angular wavenumber of FFT bin `m` along `axis`.
    ///
    /// With `even == false` the Nyquist bin maps to zero so that odd symbols (first
    /// derivatives) keep real fields real. Even symbols use `+pi/h` there.
    pub fn wavenumber(&self, axis: usize, m: usize, even: bool) -> f64 {
        let n = self.n[axis];
        let base = 2.0 * PI / self.period[axis];
        if n.is_multiple_of(2) && m == n / 2 {
            return if even { base * m as f64 } else { 0.0 };
        }
        let signed = if m <= n / 2 {
            m as isize
        } else {
            m as isize - n as isize
        };
        base * signed as f64
    }

    /// Wave-vector of the Fourier mode stored at flat position `flat`.
    pub fn wavevector(&self, flat: usize, even: bool) -> Vec<f64> {
        let idx = self.multi_index(flat);
        (0..self.dim()).map(|j| self.wavenumber(j, idx[j], even)).collect()
    }

    /// Largest |kappa| representable on the grid.
    pub fn max_wavenumber(&self) -> f64 {
        (0..self.dim())
            .map(|j| (PI / self.spacing(j)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Node coordinates of `self` that coincide with nodes of `coarse` (nested grids).
    pub fn restriction_to(&self, coarse: &SpatialGrid) -> Result<Vec<usize>> {
        if self.dim() != coarse.dim() || self.period != coarse.period {
            return Err(Error::Grid("grids are not nested".into()));
        }
        let ratios: Vec<usize> = (0..self.dim())
            .map(|j| {
                if self.n[j].is_multiple_of(coarse.n[j]) {
                    Ok(self.n[j] / coarse.n[j])
                } else {
                    Err(Error::Grid(format!(
                        "{} cells do not refine {}",
                        self.n[j], coarse.n[j]
                    )))
                }
            })
            .collect::<Result<_>>()?;
        Ok((0..coarse.len())
            .map(|c| {
                let idx = coarse.multi_index(c);
                let mut fine = [0usize; 2];
                for j in 0..self.dim() {
                    fine[j] = idx[j] * ratios[j];
                }
                self.flat_index(fine)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(SpatialGrid::new(&[3], &[1.0]).is_err());
        assert!(SpatialGrid::new(&[8], &[0.0]).is_err());
        assert!(SpatialGrid::new(&[8, 8, 8], &[1.0; 3]).is_err());
        assert!(SpatialGrid::new(&[8], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn periodic_shift_wraps() {
        let g = SpatialGrid::new(&[4, 5], &[1.0, 2.0]).unwrap();
        let corner = g.flat_index([0, 0]);
        assert_eq!(g.multi_index(g.shift(corner, 0, -1)), [3, 0]);
        assert_eq!(g.multi_index(g.shift(corner, 1, -1)), [0, 4]);
        assert_eq!(g.shift(g.shift(corner, 1, 7), 1, -7), corner);
    }

    #[test]
    fn wavenumbers_follow_fft_ordering() {
        let g = SpatialGrid::unit(1, 8).unwrap();
        let k: Vec<f64> = (0..8).map(|m| g.wavenumber(0, m, false) / (2.0 * PI)).collect();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, 0.0, -3.0, -2.0, -1.0]);
        assert_eq!(g.wavenumber(0, 4, true), 8.0 * PI);
    }

    #[test]
    fn restriction_picks_shared_nodes() {
        let fine = SpatialGrid::unit(1, 16).unwrap();
        let coarse = SpatialGrid::unit(1, 4).unwrap();
        assert_eq!(fine.restriction_to(&coarse).unwrap(), vec![0, 4, 8, 12]);
    }
}
