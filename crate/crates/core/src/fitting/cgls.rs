//! Conjugate gradient on the normal equations of a least-squares problem,
//! using only products with `A` and `A^T`.

/// Stopping rule and optional Tikhonov damping for [`cgls`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CglsOptions {
    /// Stop once `||A^T (b - A x) - damping * x|| <= tolerance * ||A^T b||`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Minimizes `||A x - b||^2 + damping * ||x||^2` when positive.
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CglsOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final normal-equation residual relative to `||A^T b||`.
    pub relative_residual: f64,
    /// False when `max_iterations` ran out first; `x` is then the last iterate.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `min ||A x - b||` starting from `x0` (zero when `None`).
///
/// `apply_a(x, out)` must write `A x` into `out` (length `b.len()`), and
/// `apply_at(y, out)` must write `A^T y` into `out` (length `n`).
pub fn cgls<F, G>(apply_a: F, apply_at: G, b: &[f64], n: usize, x0: Option<&[f64]>, options: &CglsOptions) -> CglsOutcome
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    let m = b.len();
    let lambda = options.damping;
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);

    let mut s = vec![0.0; n];
    apply_at(b, &mut s);
    let rhs_norm = dot(&s, &s).sqrt();

    let mut q = vec![0.0; m];
    apply_a(&x, &mut q);
    let mut r: Vec<f64> = b.iter().zip(&q).map(|(b, ax)| b - ax).collect();
    apply_at(&r, &mut s);
    for (si, xi) in s.iter_mut().zip(&x) {
        *si -= lambda * xi;
    }
    let mut gamma = dot(&s, &s);

    let scale = if rhs_norm > 0.0 { rhs_norm } else { 1.0 };
    let mut relative = gamma.sqrt() / scale;
    if gamma == 0.0 || relative <= options.tolerance {
        return CglsOutcome { x, iterations: 0, relative_residual: relative, converged: true };
    }

    let mut p = s.clone();
    for iteration in 1..=options.max_iterations {
        apply_a(&p, &mut q);
        let delta = dot(&q, &q) + lambda * dot(&p, &p);
        if delta <= 0.0 {
            // p lies in the null space of A; nothing further to gain
            return CglsOutcome { x, iterations: iteration, relative_residual: relative, converged: true };
        }
        let alpha = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        apply_at(&r, &mut s);
        for (si, xi) in s.iter_mut().zip(&x) {
            *si -= lambda * xi;
        }
        let gamma_next = dot(&s, &s);
        relative = gamma_next.sqrt() / scale;
        if relative <= options.tolerance {
            return CglsOutcome { x, iterations: iteration, relative_residual: relative, converged: true };
        }
        let beta = gamma_next / gamma;
        gamma = gamma_next;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    CglsOutcome { x, iterations: options.max_iterations, relative_residual: relative, converged: false }
}

/// [`cgls`] for a dense row-major `m x n` matrix.
pub fn cgls_dense(a: &[f64], m: usize, n: usize, b: &[f64], options: &CglsOptions) -> CglsOutcome {
    assert_eq!(a.len(), m * n, "matrix storage does not match {m}x{n}");
    cgls(
        |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&a[i * n..(i + 1) * n], x);
            }
        },
        |y, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for (i, yi) in y.iter().enumerate() {
                for (o, aij) in out.iter_mut().zip(&a[i * n..(i + 1) * n]) {
                    *o += aij * yi;
                }
            }
        },
        b,
        n,
        None,
        options,
    )
}
