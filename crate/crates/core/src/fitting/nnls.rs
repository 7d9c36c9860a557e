//! Lawson-Hanson active-set non-negative least squares.

use nalgebra::{DMatrix, DVector};

/// Result of [`nnls`].
#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `||A x - b||`.
    pub residual_norm: f64,
    pub converged: bool,
}

fn passive_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive);
    let svd = sub.svd(true, true);
    let eps = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * svd.singular_values.max();
    svd.solve(b, eps).expect("SVD computed with both factors")
}

/// Minimizes `||A x - b||` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::with_capacity(n);
    let tol = 10.0 * f64::EPSILON * a.norm() * a.nrows().max(n) as f64;
    let max_outer = 30 * n.max(1);
    let mut converged = false;
    // indices whose addition could not move x; skipped until x changes
    let mut blocked: Vec<usize> = Vec::new();

    for _ in 0..max_outer {
        let gradient = a.tr_mul(&(b - a * &x));
        let candidate = (0..n)
            .filter(|j| !passive.contains(j) && !blocked.contains(j))
            .map(|j| (j, gradient[j]))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        match candidate {
            Some((j, g)) if g > tol => {
                let z = passive_least_squares(a, b, &[passive.as_slice(), &[j]].concat());
                if z[passive.len()] <= tol {
                    blocked.push(j);
                    continue;
                }
                passive.push(j);
                blocked.clear();
            }
            _ => {
                converged = true;
                break;
            }
        }

        loop {
            let z = passive_least_squares(a, b, &passive);
            if z.iter().all(|&v| v > tol) {
                for (k, &j) in passive.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            // step toward z until the first passive variable hits zero
            let mut alpha = 1.0f64;
            for (k, &j) in passive.iter().enumerate() {
                if z[k] <= tol {
                    let denom = x[j] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            for (k, &j) in passive.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
            }
            passive.retain(|&j| {
                if x[j] <= tol {
                    x[j] = 0.0;
                    false
                } else {
                    true
                }
            });
            if passive.is_empty() {
                break;
            }
        }
    }
    let residual_norm = (a * &x - b).norm();
    NnlsSolution { x, residual_norm, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_solution_matches_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = nnls(&a, &b);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 2.0).abs() < 1e-12);
        assert!(s.converged);
    }

    #[test]
    fn clamps_negative_component() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let s = nnls(&a, &b);
        assert_eq!(s.x[0], 0.0);
        assert!((s.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn all_negative_target_gives_zero() {
        let a = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![-1.0, -2.0, -0.5]);
        assert_eq!(nnls(&a, &b).x, DVector::zeros(3));
    }

    proptest! {
        // KKT conditions: x >= 0, gradient <= 0 on zero entries, ~0 on positive entries
        #[test]
        fn satisfies_kkt(seed in 0u64..500, m in 3usize..12, n in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let s = nnls(&a, &b);
            prop_assert!(s.converged);
            let g = a.tr_mul(&(&b - &a * &s.x));
            for j in 0..n {
                prop_assert!(s.x[j] >= 0.0);
                if s.x[j] > 0.0 {
                    prop_assert!(g[j].abs() < 1e-9, "gradient {} on active {}", g[j], j);
                } else {
                    prop_assert!(g[j] < 1e-9);
                }
            }
        }
    }
}
