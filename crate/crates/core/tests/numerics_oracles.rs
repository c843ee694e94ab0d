//! Linear algebra checked against nalgebra and a cofactor-expansion inverse.

use nalgebra::DMatrix;
use proptest::prelude::*;

use pbrl_core::approximator::{spectral_normalize, SpectralNorm};
use pbrl_core::numerics::{quad_form, spd_solve, Cholesky, Mat, SeededRng};

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
}

fn random_mat(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    Mat::from_vec(rows, cols, rng.normal_vec(rows * cols)).unwrap()
}

/// `M Mᵀ + shift·I`.
fn random_spd(d: usize, shift: f64, rng: &mut SeededRng) -> Mat {
    let m = random_mat(d, d, rng);
    let mut a = m.matmul(&m.transpose()).unwrap();
    a.add_diag(shift);
    a
}

fn minor(a: &[Vec<f64>], skip_r: usize, skip_c: usize) -> Vec<Vec<f64>> {
    a.iter()
        .enumerate()
        .filter(|(r, _)| *r != skip_r)
        .map(|(_, row)| row.iter().enumerate().filter(|(c, _)| *c != skip_c).map(|(_, v)| *v).collect())
        .collect()
}

fn det(a: &[Vec<f64>]) -> f64 {
    match a.len() {
        0 => 1.0,
        1 => a[0][0],
        n => (0..n).map(|c| if c % 2 == 0 { 1.0 } else { -1.0 } * a[0][c] * det(&minor(a, 0, c))).sum(),
    }
}

/// `A⁻¹ = adj(A) / det(A)`.
fn adjugate_inverse(a: &Mat) -> Vec<Vec<f64>> {
    let n = a.rows();
    let rows: Vec<Vec<f64>> = (0..n).map(|r| a.row(r).to_vec()).collect();
    let d = det(&rows);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * det(&minor(&rows, j, i)) / d
                })
                .collect()
        })
        .collect()
}

#[test]
fn spd_solve_matches_adjugate_inverse() {
    let mut rng = SeededRng::new(11);
    for d in 1..=6 {
        for _ in 0..20 {
            let a = random_spd(d, 0.5, &mut rng);
            let b = rng.normal_vec(d);
            let x = spd_solve(&a, &b).unwrap();
            let inv = adjugate_inverse(&a);
            for i in 0..d {
                let want: f64 = (0..d).map(|j| inv[i][j] * b[j]).sum();
                assert!((x[i] - want).abs() <= 1e-9 * (1.0 + want.abs()), "d={d}: {} vs {want}", x[i]);
            }
        }
    }
}

#[test]
fn cholesky_inverse_matches_nalgebra() {
    let mut rng = SeededRng::new(12);
    for d in [1, 3, 8, 16] {
        let a = random_spd(d, 1.0, &mut rng);
        let ours = Cholesky::factor(&a).unwrap().inverse();
        let theirs = to_na(&a).try_inverse().unwrap();
        for r in 0..d {
            for c in 0..d {
                assert!((ours[(r, c)] - theirs[(r, c)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn spectral_norm_matches_largest_singular_value() {
    let mut rng = SeededRng::new(13);
    for _ in 0..10 {
        let w = random_mat(8, 8, &mut rng);
        let sigma = SpectralNorm::new(8).sigma(&w, 500);
        let svd = to_na(&w).singular_values();
        let top = svd.iter().copied().fold(0.0, f64::max);
        assert!((sigma - top).abs() / top < 1e-6, "{sigma} vs {top}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_layer_is_one_lipschitz(seed in any::<u64>(), rows in 1usize..10, cols in 1usize..10) {
        let mut rng = SeededRng::new(seed);
        let w = random_mat(rows, cols, &mut rng);
        let n = spectral_normalize(&w, 200);
        let top = to_na(&n).singular_values().iter().copied().fold(0.0, f64::max);
        prop_assert!(top <= 1.0 + 1e-3, "largest singular value {}", top);
        let x = rng.normal_vec(cols);
        let y = rng.normal_vec(cols);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let out = n.mat_vec(&diff).unwrap();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(norm(&out) <= (1.0 + 1e-3) * norm(&diff) + 1e-12);
    }

    /// `A ⪯ B` implies `φᵀA⁻¹φ ≥ φᵀB⁻¹φ`.
    #[test]
    fn quad_form_is_loewner_antitone(seed in any::<u64>(), d in 1usize..7, extra in 0usize..4) {
        let mut rng = SeededRng::new(seed);
        let a = random_spd(d, 0.1, &mut rng);
        let mut b = a.clone();
        for _ in 0..extra {
            b.add_outer(1.0, &rng.normal_vec(d));
        }
        b.add_diag(rng.uniform());
        let phi = rng.normal_vec(d);
        let qa = quad_form(&phi, &Cholesky::factor(&a).unwrap()).unwrap();
        let qb = quad_form(&phi, &Cholesky::factor(&b).unwrap()).unwrap();
        prop_assert!(qa >= qb - 1e-9 * (1.0 + qa.abs()), "{} < {}", qa, qb);
        prop_assert!(qb >= 0.0);
    }
}
