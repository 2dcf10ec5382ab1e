//! Three-junction flux-qubit Hamiltonian in the two-dimensional charge basis.
//!
//! Junctions 1 and 2 carry area ratios β₁, β₂; junction 3 carries α. With the
//! fluxoid constraint φ₁ − φ₂ + φ₃ = 2πf the free phases are (φ₁, φ₂) and
//!
//! ```text
//! H/E_J = 4 (E_c/E_J) nᵀ M⁻¹ n
//!       + β₁(1 − cos φ₁) + β₂(1 − cos φ₂) + α(1 − cos(2πf − φ₁ + φ₂))
//! M = [[β₁ + α, −α], [−α, β₂ + α]]
//! ```
//!
//! where E_J and E_c belong to a unit-area junction and both the capacitance
//! and the critical current of each junction scale with its area. `e^{iφ}`
//! raises the conjugate Cooper-pair number by one.

use num_complex::Complex64;

use super::lanczos::Scalar;
use super::JunctionGeometry;

/// Sparse charge-basis Hamiltonian in units of the unit-area E_J.
#[derive(Debug, Clone)]
pub struct ChargeHamiltonian {
    cutoff: usize,
    width: usize,
    diag: Vec<f64>,
    hop1: f64,
    hop2: f64,
    /// ⟨n₁−1, n₂+1|H|n₁, n₂⟩
    hop3: Complex64,
}

impl ChargeHamiltonian {
    pub fn new(geom: &JunctionGeometry, flux_bias: f64, cutoff: usize) -> Self {
        let (a, b1, b2) = (geom.alpha, geom.beta1, geom.beta2);
        let det = (b1 + a) * (b2 + a) - a * a;
        let inv11 = (b2 + a) / det;
        let inv22 = (b1 + a) / det;
        let inv12 = a / det;
        let kinetic = 4.0 / geom.ej_over_ec;

        let width = 2 * cutoff + 1;
        let c = cutoff as f64;
        let mut diag = Vec::with_capacity(width * width);
        for i1 in 0..width {
            let n1 = i1 as f64 - c;
            for i2 in 0..width {
                let n2 = i2 as f64 - c;
                let charge = inv11 * n1 * n1 + 2.0 * inv12 * n1 * n2 + inv22 * n2 * n2;
                diag.push(kinetic * charge + a + b1 + b2);
            }
        }
        let phase = 2.0 * std::f64::consts::PI * flux_bias;
        Self {
            cutoff,
            width,
            diag,
            hop1: -0.5 * b1,
            hop2: -0.5 * b2,
            hop3: Complex64::from_polar(-0.5 * a, phase),
        }
    }

    pub fn dim(&self) -> usize {
        self.width * self.width
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// y ← H x
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_with(x, y, self.hop3, self.hop3.conj());
    }

    /// True when the bias phase makes every matrix element real (f ∈ ℤ/2).
    pub fn is_real(&self) -> bool {
        self.hop3.im.abs() <= 1e-12 * self.hop3.norm()
    }

    /// y ← H x for a real Hamiltonian; see [`Self::is_real`].
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        debug_assert!(self.is_real());
        self.apply_with(x, y, self.hop3.re, self.hop3.re);
    }

    /// Charge parity n → −n, which commutes with H when it is real.
    /// Index i maps to dim − 1 − i.
    pub fn project_parity<T: Scalar>(x: &mut [T], odd: bool) {
        let n = x.len();
        for i in 0..n / 2 {
            let (a, b) = (x[i], x[n - 1 - i]);
            let s = if odd { (a - b) * 0.5 } else { (a + b) * 0.5 };
            x[i] = s;
            x[n - 1 - i] = if odd { T::zero() - s } else { s };
        }
        if odd && n % 2 == 1 {
            x[n / 2] = T::zero();
        }
    }

    fn apply_with<T: Scalar>(&self, x: &[T], y: &mut [T], h3: T, h3c: T) {
        let w = self.width;
        debug_assert_eq!(x.len(), w * w);
        debug_assert_eq!(y.len(), w * w);
        for i1 in 0..w {
            for i2 in 0..w {
                let i = i1 * w + i2;
                let mut acc = x[i] * self.diag[i];
                let mut n1_sum = T::zero();
                if i1 + 1 < w {
                    n1_sum += x[i + w];
                }
                if i1 > 0 {
                    n1_sum += x[i - w];
                }
                acc += n1_sum * self.hop1;
                let mut n2_sum = T::zero();
                if i2 + 1 < w {
                    n2_sum += x[i + 1];
                }
                if i2 > 0 {
                    n2_sum += x[i - 1];
                }
                acc += n2_sum * self.hop2;
                // (n1+1, n2-1) -> (n1, n2) has amplitude hop3
                if i1 + 1 < w && i2 > 0 {
                    acc += h3 * x[i + w - 1];
                }
                if i1 > 0 && i2 + 1 < w {
                    acc += h3c * x[i - w + 1];
                }
                y[i] = acc;
            }
        }
    }

    /// Dense matrix, for small cutoffs only.
    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = Complex64::new(0.0, 0.0);
        }
        m
    }
}
