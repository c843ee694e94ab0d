use crate::numerics::{dot, norm2, Mat};

/// Power-iteration state for one weight matrix. The left vector persists
/// between calls so that a few iterations per training step suffice.
#[derive(Debug, Clone)]
pub struct SpectralNorm {
    left: Vec<f64>,
}

impl SpectralNorm {
    pub fn new(rows: usize) -> Self {
        // Deterministic, non-degenerate start.
        let left = (0..rows).map(|i| 1.0 + 0.1 * (i as f64 + 1.0).sin()).collect::<Vec<_>>();
        let n = norm2(&left);
        Self { left: left.into_iter().map(|v| v / n).collect() }
    }

    /// Estimates the largest singular value of `w` with `iterations` rounds.
    pub fn sigma(&mut self, w: &Mat, iterations: usize) -> f64 {
        debug_assert_eq!(self.left.len(), w.rows());
        let mut sigma = 0.0;
        for _ in 0..iterations.max(1) {
            let mut right = vec![0.0; w.cols()];
            for (r, &u) in self.left.iter().enumerate() {
                crate::numerics::axpy(u, w.row(r), &mut right);
            }
            let rn = norm2(&right);
            if rn == 0.0 {
                return 0.0;
            }
            right.iter_mut().for_each(|v| *v /= rn);
            let left: Vec<f64> = (0..w.rows()).map(|r| dot(w.row(r), &right)).collect();
            let ln = norm2(&left);
            if ln == 0.0 {
                return 0.0;
            }
            sigma = ln;
            self.left = left.into_iter().map(|v| v / ln).collect();
        }
        sigma
    }

    /// Divides `w` by its estimated largest singular value in place.
    pub fn normalize_in_place(&mut self, w: &mut Mat, iterations: usize) {
        let sigma = self.sigma(w, iterations);
        if sigma > 0.0 {
            w.scale(1.0 / sigma);
        }
    }
}

/// One-shot spectral normalization starting from a fixed vector.
/// Zero matrices come back unchanged.
pub fn spectral_normalize(w: &Mat, iterations: usize) -> Mat {
    let mut out = w.clone();
    SpectralNorm::new(w.rows()).normalize_in_place(&mut out, iterations);
    out
}
