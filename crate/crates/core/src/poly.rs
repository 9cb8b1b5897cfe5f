//! Real polynomials: evaluation and all complex roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// `Σ c_k z^k` with coefficients in ascending order.
pub fn eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn eval_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Companion matrix of the monic normalisation of `coeffs` (ascending,
/// leading coefficient nonzero).
pub fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[n - 1 - j] / lead;
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m
}

/// All complex roots, as eigenvalues of the companion matrix followed by a
/// few Newton steps on the polynomial itself.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let mut coeffs = coeffs.to_vec();
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
    }
    let n = coeffs.len() - 1;
    match n {
        0 => return Vec::new(),
        1 => return vec![Complex64::new(-coeffs[0] / coeffs[1], 0.0)],
        _ => {}
    }
    let eig = companion(&coeffs).complex_eigenvalues();
    eig.iter().map(|&z| polish(&coeffs, z)).collect()
}

fn polish(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    let (mut p, _) = eval_with_derivative(coeffs, z);
    for _ in 0..4 {
        let (_, dp) = eval_with_derivative(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let (pc, _) = eval_with_derivative(coeffs, cand);
        if !(pc.norm() < p.norm()) {
            break;
        }
        z = cand;
        p = pc;
    }
    // keep real roots of real polynomials real
    if z.im != 0.0 && z.im.abs() < 1e-14 * z.norm().max(1.0) {
        let r = Complex64::new(z.re, 0.0);
        if eval(coeffs, r).norm() <= p.norm() {
            return r;
        }
    }
    z
}

/// Bottleneck distance between two equal-size multisets of complex numbers,
/// matching closest pairs first.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        worst = worst.max(d);
        matched += 1;
        if matched == a.len() {
            break;
        }
    }
    worst
}
