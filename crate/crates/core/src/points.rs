//! Fixed standard-normal point sets for cubature of the flow's right-hand side.

use crate::error::{config, Result};
use crate::special::normal_inv_cdf;

/// Largest block served by a single scrambled Sobol sequence.
const SOBOL_BLOCK: usize = 1 << 16;

/// `n` points in `R^d`, stored row-major, with cached squared norms.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    norms_sq: Vec<f64>,
}

impl PointSet {
    /// Owen-scrambled Sobol points mapped through the inverse normal CDF.
    ///
    /// Sets larger than 2^16 are concatenations of independently seeded
    /// scrambled blocks.
    pub fn sobol_normal(n: usize, dim: usize, seed: u32) -> Result<Self> {
        if n == 0 || dim == 0 {
            return config("point set needs at least one point and one dimension");
        }
        if dim > sobol_burley::NUM_DIMENSIONS as usize {
            return config(format!(
                "at most {} dimensions are supported",
                sobol_burley::NUM_DIMENSIONS
            ));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for i in 0..n {
            let block = (i / SOBOL_BLOCK) as u32;
            let index = (i % SOBOL_BLOCK) as u32;
            let block_seed = seed.wrapping_add(block.wrapping_mul(0x9e37_79b9));
            for k in 0..dim {
                let u = sobol_burley::sample(index, k as u32, block_seed) as f64;
                // centre of the 2^-24 output cell keeps u strictly inside (0, 1)
                coords.push(normal_inv_cdf(u + 0.5f64.powi(25)));
            }
        }
        Ok(Self::from_flat_unchecked(dim, coords))
    }

    /// Builds a set from explicit points.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return config("point set needs at least one point and one dimension");
        }
        if points.iter().any(|p| p.len() != dim) {
            return config("points have inconsistent dimensions");
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return config("points must be finite");
        }
        Ok(Self::from_flat_unchecked(dim, points.concat()))
    }

    fn from_flat_unchecked(dim: usize, coords: Vec<f64>) -> Self {
        let norms_sq = coords
            .chunks_exact(dim)
            .map(|p| p.iter().map(|c| c * c).sum())
            .collect();
        Self {
            dim,
            coords,
            norms_sq,
        }
    }

    pub fn len(&self) -> usize {
        self.norms_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms_sq.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn norm_sq(&self, j: usize) -> f64 {
        self.norms_sq[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }
}
