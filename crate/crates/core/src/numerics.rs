//! Dense linear algebra, the portable RNG, and the finite-difference oracle.
//!
//! Everything here is `f64`. Matrices are row-major and small (desk scale,
//! `d` up to a few hundred), so the routines favour clarity and contiguous
//! inner loops over blocking.

use std::fmt;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension { what: "matrix row", expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::Dimension { what: "matmul inner", expected: self.cols, got: other.rows });
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension { what: "mat_vec", expected: self.cols, got: x.len() });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `self += alpha * v vᵀ`
    pub fn add_outer(&mut self, alpha: f64, v: &[f64]) {
        debug_assert_eq!(self.rows, v.len());
        debug_assert_eq!(self.cols, v.len());
        for (r, &vr) in v.iter().enumerate() {
            if vr != 0.0 {
                let row = self.row_mut(r);
                axpy(alpha * vr, v, row);
            }
        }
    }

    pub fn add_diag(&mut self, alpha: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += alpha;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| (0..r).all(|c| (self[(r, c)] - self[(c, r)]).abs() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorise without reassociation.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `a`. On failure a jitter of `1e-10 * trace / d` is added to
    /// the diagonal once before giving up.
    pub fn factor(a: &Mat) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Dimension { what: "cholesky (square)", expected: a.rows(), got: a.cols() });
        }
        if !a.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: 0 });
        }
        match Self::try_factor(a) {
            Ok(l) => Ok(Self { l, jitter: 0.0 }),
            Err(_) => {
                let d = a.rows().max(1) as f64;
                let jitter = 1e-10 * a.trace().abs() / d;
                let mut shifted = a.clone();
                shifted.add_diag(jitter);
                let l = Self::try_factor(&shifted)?;
                Ok(Self { l, jitter })
            }
        }
    }

    fn try_factor(a: &Mat) -> Result<Mat> {
        let n = a.rows();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let diag = a[(j, j)] - dot(lj, lj);
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let s = dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                l[(i, j)] = (a[(i, j)] - s) / ljj;
            }
        }
        Ok(l)
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor_l(&self) -> &Mat {
        &self.l
    }

    /// Diagonal shift that was needed to factorize (0 in the normal case).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solves `L z = b`.
    pub fn forward_sub(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension { what: "cholesky rhs", expected: n, got: b.len() });
        }
        let mut z = vec![0.0; n];
        for i in 0..n {
            let s = dot(&self.l.data[i * n..i * n + i], &z[..i]);
            z[i] = (b[i] - s) / self.l[(i, i)];
        }
        Ok(z)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut x = self.forward_sub(b)?;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        Ok(x)
    }

    /// `φᵀ A⁻¹ φ = ‖L⁻¹ φ‖²`, never negative.
    pub fn quad_form(&self, phi: &[f64]) -> Result<f64> {
        let z = self.forward_sub(phi)?;
        Ok(dot(&z, &z))
    }

    /// Explicit inverse, for reporting covariances. Solves use `solve`.
    pub fn inverse(&self) -> Mat {
        let n = self.dim();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        // Symmetrize away round-off.
        for r in 0..n {
            for c in 0..r {
                let v = 0.5 * (inv[(r, c)] + inv[(c, r)]);
                inv[(r, c)] = v;
                inv[(c, r)] = v;
            }
        }
        inv
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn spd_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() == 1 && a.cols() == 1 {
        if b.len() != 1 {
            return Err(Error::Dimension { what: "spd_solve rhs", expected: 1, got: b.len() });
        }
        let v = a[(0, 0)];
        if !(v > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: 0 });
        }
        return Ok(vec![b[0] / v]);
    }
    Cholesky::factor(a)?.solve(b)
}

/// `φᵀ A⁻¹ φ` given the factorization of `A`.
pub fn quad_form(phi: &[f64], factor: &Cholesky) -> Result<f64> {
    factor.quad_form(phi)
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Max elementwise relative error `|a-b| / max(|a|, |b|, floor)`.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator.
///
/// Draw `i` (zero-based) of a stream is `mix64(key + (i + 1) * 0x9E3779B97F4A7C15)`
/// where `key = mix64(seed)` and `mix64` is the SplitMix64 finalizer, all in
/// wrapping 64-bit arithmetic. Uniforms take the top 53 bits; normals use
/// Box-Muller on two consecutive uniforms with no caching. Child streams are
/// keyed by `mix64(key ^ mix64(index + 1))`, so any language can reproduce a
/// stream from its seed alone.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    key: u64,
    counter: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, key: mix64(seed), counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent child stream. Does not advance `self`.
    pub fn derive(&self, index: u64) -> SeededRng {
        let key = mix64(self.key ^ mix64(index.wrapping_add(1)));
        SeededRng { seed: key, key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Multiply-shift; bias is below 2^-40 for desk-scale n.
        ((self.next_u64() >> 11) as u128 * n as u128 >> 53) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}
