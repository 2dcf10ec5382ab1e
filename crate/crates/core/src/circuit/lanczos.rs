//! Lanczos iteration with full reorthogonalization for the lowest few
//! eigenpairs of a Hermitian (or real symmetric) operator.

use std::ops::{Add, AddAssign, Mul, MulAssign, Sub, SubAssign};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const START_SEED: u64 = 0x5eed_f1c5;

/// Field the iteration runs over: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Add<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign<f64>
    + Mul<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + std::iter::Sum
{
    fn zero() -> Self;
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn norm_sqr(self) -> f64;
    fn random(rng: &mut ChaCha8Rng) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> f64 {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn random(rng: &mut ChaCha8Rng) -> Self {
        rng.random::<f64>() - 0.5
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }
}

/// In-place projector onto an operator-invariant subspace.
pub type Projector<'a, T> = &'a (dyn Fn(&mut [T]) + Sync);

#[derive(Clone, Copy)]
pub struct LanczosOptions<'a, T> {
    /// Absolute residual bound ‖Hx − θx‖ on each returned Ritz pair.
    pub tolerance: f64,
    pub check_every: usize,
    /// Start vector; a fixed pseudo-random vector when absent.
    pub start: Option<&'a [T]>,
    /// Projector applied after every operator application, e.g. onto a
    /// symmetry sector. Must commute with the operator.
    pub project: Option<Projector<'a, T>>,
    pub vectors: bool,
}

impl<T> Default for LanczosOptions<'_, T> {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            check_every: 2,
            start: None,
            project: None,
            vectors: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpairs<T> {
    pub values: Vec<f64>,
    /// Normalized Ritz vectors, when requested.
    pub vectors: Vec<Vec<T>>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x.conj() * y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Number of eigenvalues of the symmetric tridiagonal (diag, off) below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
        q = diag[i] - x - if i > 0 { b2 / q } else { 0.0 };
        if q == 0.0 {
            q = f64::EPSILON * (diag[i].abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `index`-th smallest eigenvalue by bisection.
fn tridiagonal_eigenvalue(diag: &[f64], off: &[f64], index: usize) -> f64 {
    let n = diag.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Normalized eigenvector for eigenvalue `theta`, by inverse iteration with a
/// pivoted tridiagonal solve.
fn tridiagonal_eigenvector(diag: &[f64], off: &[f64], theta: f64) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![1.0];
    }
    let tiny = f64::EPSILON * diag.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    // LU with partial pivoting of T - theta I; U has up to two superdiagonals
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut l = vec![0.0; n];
    let mut swapped = vec![false; n];
    let mut d = diag[0] - theta;
    let mut e = off[0];
    for i in 0..n - 1 {
        let below = off[i];
        let next_d = diag[i + 1] - theta;
        let next_e = if i + 2 < n { off[i + 1] } else { 0.0 };
        if d.abs() >= below.abs() {
            let p = if d == 0.0 { tiny } else { d };
            u0[i] = p;
            u1[i] = e;
            u2[i] = 0.0;
            l[i] = below / p;
            d = next_d - l[i] * e;
            e = next_e;
        } else {
            swapped[i] = true;
            u0[i] = below;
            u1[i] = next_d;
            u2[i] = next_e;
            l[i] = d / below;
            d = e - l[i] * next_d;
            e = -l[i] * next_e;
        }
    }
    u0[n - 1] = if d == 0.0 { tiny } else { d };

    let mut x = vec![1.0; n];
    for _ in 0..3 {
        // forward: apply row swaps and L
        for i in 0..n - 1 {
            if swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= l[i] * x[i];
        }
        // back substitution with U
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * x[i + 2];
            }
            x[i] = v / u0[i];
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    x
}

/// Lowest `k` eigenpairs (ascending) of the Hermitian operator `apply` of
/// dimension `dim`.
pub fn lowest_eigenpairs<T, F>(dim: usize, k: usize, apply: F, opts: LanczosOptions<'_, T>) -> Result<Eigenpairs<T>>
where
    T: Scalar,
    F: Fn(&[T], &mut [T]),
{
    assert!(k >= 1 && k <= dim);
    let mut v: Vec<T> = match opts.start {
        Some(s) => s.to_vec(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
            (0..dim).map(|_| T::random(&mut rng)).collect()
        }
    };
    if let Some(p) = opts.project {
        p(&mut v);
    }
    let n0 = norm(&v);
    v.iter_mut().for_each(|z| *z *= 1.0 / n0);

    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![T::zero(); dim];
    let mut last_residual = f64::INFINITY;

    loop {
        apply(&v, &mut w);
        if let Some(p) = opts.project {
            p(&mut w);
        }
        let a = dot(&v, &w).re();
        alphas.push(a);
        for (wi, &vi) in w.iter_mut().zip(&v) {
            *wi -= vi * a;
        }
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            for (wi, &pi) in w.iter_mut().zip(prev.iter()) {
                *wi -= pi * b;
            }
        }
        basis.push(std::mem::take(&mut v));
        // full reorthogonalization, modified Gram-Schmidt
        for q in &basis {
            let c = dot(q, &w);
            for (wi, &qi) in w.iter_mut().zip(q) {
                *wi -= qi * c;
            }
        }
        let b = norm(&w);
        let m = alphas.len();
        let scale = alphas.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        let exhausted = m == dim || b <= 1e-14 * scale;

        if m >= k && (exhausted || m % opts.check_every == 0) {
            let off = &betas[..m - 1];
            let thetas: Vec<f64> = (0..k).map(|i| tridiagonal_eigenvalue(&alphas, off, i)).collect();
            let ys: Vec<Vec<f64>> = thetas
                .iter()
                .map(|&t| tridiagonal_eigenvector(&alphas, off, t))
                .collect();
            let residual = ys.iter().map(|y| (b * y[m - 1]).abs()).fold(0.0, f64::max);
            last_residual = residual;
            if exhausted || residual < opts.tolerance {
                let vectors = if opts.vectors {
                    ys.iter()
                        .map(|y| {
                            let mut x = vec![T::zero(); dim];
                            for (q, &c) in basis.iter().zip(y) {
                                for (xi, &qi) in x.iter_mut().zip(q) {
                                    *xi += qi * c;
                                }
                            }
                            x
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                return Ok(Eigenpairs {
                    values: thetas,
                    vectors,
                });
            }
        }
        if exhausted {
            return Err(Error::Eigensolver {
                iterations: m,
                residual: last_residual,
            });
        }
        betas.push(b);
        v = w.iter().map(|&z| z * (1.0 / b)).collect();
    }
}

/// Lowest `k` eigenvalues, starting from a fixed pseudo-random vector.
pub fn lowest_eigenvalues<F>(dim: usize, k: usize, apply: F) -> Result<Vec<f64>>
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    Ok(lowest_eigenpairs(dim, k, apply, LanczosOptions::default())?.values)
}
