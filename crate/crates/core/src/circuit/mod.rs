//! Three-junction flux-qubit circuit: charge-basis diagonalization, two-level
//! parameter extraction and precomputed lookup tables.
//!
//! Energies are computed in units of the unit-area Josephson energy and then
//! scaled by [`JunctionGeometry::ej_ghz`]. At fixed E_J/E_c every level (and
//! hence Δ and I_p) is proportional to E_J, which makes calibration of the
//! absolute scale a single solve.

mod hamiltonian;
mod lanczos;
mod lookup;

pub use hamiltonian::ChargeHamiltonian;
pub use lanczos::{lowest_eigenpairs, lowest_eigenvalues, Eigenpairs, LanczosOptions, Scalar};
pub use lookup::{AxisRange, LookupSpec, LookupTable, ALPHA_STEP_BOUND, CACHE_VERSION};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::units::GHZ_PER_NA_PHI0;
use crate::{Error, Result};

/// Flux step for the central difference of the ground-state energy.
pub const CURRENT_FLUX_STEP: f64 = 1e-4;

/// Offset from degeneracy at which the two-level persistent current is read off
/// the gap.
pub const TWO_LEVEL_FLUX_OFFSET: f64 = 1e-3;

/// Gap change allowed when the charge cutoff is doubled, GHz (1 kHz).
pub const CONVERGENCE_TOLERANCE_GHZ: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionGeometry {
    /// Area of the small junction relative to the unit junction.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// E_J/E_c of the unit-area junction.
    pub ej_over_ec: f64,
    /// Josephson energy of the unit-area junction, GHz.
    pub ej_ghz: f64,
}

impl JunctionGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("ej_over_ec", self.ej_over_ec),
            ("ej_ghz", self.ej_ghz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    "junction geometry",
                    format!("{name} must be positive and finite, got {v}"),
                ));
            }
        }
        if self.alpha >= self.beta1.min(self.beta2) {
            log::warn!(
                "alpha {} >= min(beta1, beta2) {}: outside the usual flux-qubit regime",
                self.alpha,
                self.beta1.min(self.beta2)
            );
        }
        Ok(())
    }

    pub fn with_areas(&self, alpha: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            alpha,
            beta1,
            beta2,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverGrid {
    /// Charge states per phase run over −cutoff..=cutoff, so the basis has
    /// (2·cutoff + 1)² states.
    pub charge_cutoff: usize,
}

impl Default for SolverGrid {
    fn default() -> Self {
        Self { charge_cutoff: 10 }
    }
}

impl SolverGrid {
    pub fn validate(&self) -> Result<()> {
        if self.charge_cutoff < 3 {
            return Err(Error::validation(
                "solver grid",
                format!("charge_cutoff must be >= 3, got {}", self.charge_cutoff),
            ));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        let w = 2 * self.charge_cutoff + 1;
        w * w
    }

    pub fn doubled(&self) -> Self {
        Self {
            charge_cutoff: 2 * self.charge_cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSolution {
    /// Tunneling energy (gap at f = 1/2), GHz.
    pub delta: f64,
    /// |∂E₀/∂Φ_ext| at the requested flux bias, nA.
    pub persistent_current: f64,
    /// Lowest levels at the requested flux bias, GHz, ascending.
    pub level_energies: Vec<f64>,
    pub flux_bias: f64,
}

/// Lowest `k` levels in GHz at flux bias `f` (no validation).
pub fn levels(geom: &JunctionGeometry, f: f64, grid: SolverGrid, k: usize) -> Result<Vec<f64>> {
    let h = ChargeHamiltonian::new(geom, f, grid.charge_cutoff);
    let vals = lowest_eigenvalues(h.dim(), k, |x, y| h.apply(x, y))?;
    Ok(vals.into_iter().map(|e| e * geom.ej_ghz).collect())
}

/// Even- and odd-parity ground states at f = 1/2 in unit-E_J energies,
/// from the real, parity-resolved problem. These are the two lowest levels.
struct DegeneratePair {
    even: f64,
    odd: f64,
    vectors: [Vec<f64>; 2],
}

impl DegeneratePair {
    fn signed_gap(&self) -> f64 {
        self.odd - self.even
    }
}

fn degenerate_pair(geom: &JunctionGeometry, grid: SolverGrid) -> Result<DegeneratePair> {
    let h = ChargeHamiltonian::new(geom, 0.5, grid.charge_cutoff);
    let solve = |odd: bool| {
        let project = move |x: &mut [f64]| ChargeHamiltonian::project_parity(x, odd);
        let opts = LanczosOptions {
            project: Some(&project),
            vectors: true,
            ..Default::default()
        };
        lowest_eigenpairs(h.dim(), 1, |x, y| h.apply_real(x, y), opts)
    };
    let mut even = solve(false)?;
    let mut odd = solve(true)?;
    Ok(DegeneratePair {
        even: even.values[0],
        odd: odd.values[0],
        vectors: [even.vectors.remove(0), odd.vectors.remove(0)],
    })
}

/// E₁ − E₀ in GHz at the degeneracy point.
fn degeneracy_gap(geom: &JunctionGeometry, grid: SolverGrid) -> Result<f64> {
    Ok(degenerate_pair(geom, grid)?.signed_gap().abs() * geom.ej_ghz)
}

pub fn solve_circuit(
    geom: &JunctionGeometry,
    f: f64,
    grid: SolverGrid,
    k: usize,
) -> Result<CircuitSolution> {
    geom.validate()?;
    grid.validate()?;
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::validation("flux bias", format!("f must lie in [0, 1], got {f}")));
    }
    if k < 2 {
        return Err(Error::validation("level count", format!("k must be >= 2, got {k}")));
    }
    let level_energies = levels(geom, f, grid, k)?;
    let delta = if f == 0.5 {
        level_energies[1] - level_energies[0]
    } else {
        degeneracy_gap(geom, grid)?
    };
    let up = levels(geom, f + CURRENT_FLUX_STEP, grid, 1)?[0];
    let down = levels(geom, f - CURRENT_FLUX_STEP, grid, 1)?[0];
    let slope = (up - down) / (2.0 * CURRENT_FLUX_STEP);
    Ok(CircuitSolution {
        delta,
        persistent_current: slope.abs() / GHZ_PER_NA_PHI0,
        level_energies,
        flux_bias: f,
    })
}

/// Two-level parameters of one qubit: Δ in GHz and I_p in nA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    pub delta_ghz: f64,
    pub current_na: f64,
}

/// Δ from the gap at degeneracy and I_p from the gap ω at a small offset δf,
/// inverting ω² = Δ² + (2 I_p δf Φ₀)². The slope of E₀ vanishes at degeneracy
/// and far from it exceeds the near-degeneracy current, so the two-level
/// current is read off the gap instead.
pub fn two_level_params(geom: &JunctionGeometry, grid: SolverGrid) -> Result<TwoLevelParams> {
    let (signed, current_na) = signed_two_level_params(geom, grid)?;
    Ok(TwoLevelParams {
        delta_ghz: signed.abs(),
        current_na,
    })
}

/// As [`two_level_params`] but with the gap signed as E_odd − E_even, which
/// stays smooth where the two parity states cross.
pub(crate) fn signed_two_level_params(geom: &JunctionGeometry, grid: SolverGrid) -> Result<(f64, f64)> {
    let pair = degenerate_pair(geom, grid)?;
    let signed = pair.signed_gap() * geom.ej_ghz;
    let delta = signed.abs();

    // The biased ground doublet lies almost entirely in the span of the
    // degenerate pair, so starting from their sum converges quickly.
    let h = ChargeHamiltonian::new(geom, 0.5 - TWO_LEVEL_FLUX_OFFSET, grid.charge_cutoff);
    let start: Vec<Complex64> = pair.vectors[0]
        .iter()
        .zip(&pair.vectors[1])
        .map(|(a, b)| Complex64::new(a + b, 0.0))
        .collect();
    let opts = LanczosOptions {
        start: Some(&start),
        ..Default::default()
    };
    let e = lowest_eigenpairs(h.dim(), 2, |x, y| h.apply(x, y), opts)?.values;
    let biased = (e[1] - e[0]) * geom.ej_ghz;

    let eps = (biased * biased - delta * delta).max(0.0).sqrt();
    Ok((signed, eps / (2.0 * TWO_LEVEL_FLUX_OFFSET * GHZ_PER_NA_PHI0)))
}

/// Checks that doubling the charge cutoff moves the degeneracy gap by less
/// than 1 kHz. Returns (coarse, fine) gaps in GHz.
pub fn verify_convergence(geom: &JunctionGeometry, grid: SolverGrid) -> Result<(f64, f64)> {
    let coarse = degeneracy_gap(geom, grid)?;
    let fine = degeneracy_gap(geom, grid.doubled())?;
    if (coarse - fine).abs() >= CONVERGENCE_TOLERANCE_GHZ {
        return Err(Error::Convergence {
            cutoff: grid.charge_cutoff,
            doubled: 2 * grid.charge_cutoff,
            coarse_ghz: coarse,
            fine_ghz: fine,
        });
    }
    Ok((coarse, fine))
}

/// Unit-area E_J (GHz) such that the geometry (α, β₁, β₂) at the given
/// E_J/E_c has tunneling energy `target_delta_ghz`.
pub fn calibrate_ej(
    ej_over_ec: f64,
    alpha: f64,
    beta1: f64,
    beta2: f64,
    target_delta_ghz: f64,
    grid: SolverGrid,
) -> Result<f64> {
    if !(target_delta_ghz.is_finite() && target_delta_ghz > 0.0) {
        return Err(Error::validation(
            "calibration",
            format!("target gap must be positive, got {target_delta_ghz}"),
        ));
    }
    let unit = JunctionGeometry {
        alpha,
        beta1,
        beta2,
        ej_over_ec,
        ej_ghz: 1.0,
    };
    unit.validate()?;
    grid.validate()?;
    Ok(target_delta_ghz / degeneracy_gap(&unit, grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(alpha: f64) -> JunctionGeometry {
        JunctionGeometry {
            alpha,
            beta1: 1.0,
            beta2: 1.0,
            ej_over_ec: 75.0,
            ej_ghz: 1.0,
        }
    }

    #[test]
    fn lanczos_matches_dense_diagonalization() {
        // independent route: dense Hermitian eigensolve of the same matrix
        let g = JunctionGeometry {
            beta1: 1.05,
            beta2: 0.96,
            ..unit(0.66)
        };
        for f in [0.5, 0.47, 0.123] {
            let h = ChargeHamiltonian::new(&g, f, 5);
            let dense = h.to_dense();
            let mut ev: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let lz = levels(&g, f, SolverGrid { charge_cutoff: 5 }, 3).unwrap();
            for i in 0..3 {
                assert!((lz[i] - ev[i]).abs() < 1e-9, "f={f} level {i}: {} vs {}", lz[i], ev[i]);
            }
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        let mut g = unit(0.6);
        g.beta1 = -1.0;
        assert!(matches!(
            solve_circuit(&g, 0.5, SolverGrid::default(), 2),
            Err(Error::Validation { .. })
        ));
        let g = unit(0.6);
        assert!(solve_circuit(&g, 1.2, SolverGrid::default(), 2).is_err());
        assert!(solve_circuit(&g, 0.5, SolverGrid::default(), 1).is_err());
        assert!(solve_circuit(&g, 0.5, SolverGrid { charge_cutoff: 2 }, 2).is_err());
    }

    #[test]
    fn coarse_truncation_reports_both_estimates() {
        match verify_convergence(&unit(0.6285), SolverGrid { charge_cutoff: 3 }) {
            Err(Error::Convergence {
                coarse_ghz,
                fine_ghz,
                ..
            }) => assert!(coarse_ghz != fine_ghz),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn levels_scale_with_ej() {
        let a = levels(&unit(0.7), 0.48, SolverGrid::default(), 2).unwrap();
        let mut g = unit(0.7);
        g.ej_ghz = 250.0;
        let b = levels(&g, 0.48, SolverGrid::default(), 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x * 250.0 - y).abs() < 1e-9 * y.abs());
        }
    }

    #[test]
    fn junction_swap_symmetry() {
        let g = JunctionGeometry {
            beta1: 1.04,
            beta2: 0.97,
            ..unit(0.64)
        };
        let swapped = g.with_areas(0.64, 0.97, 1.04);
        let grid = SolverGrid::default();
        let a = two_level_params(&g, grid).unwrap();
        let b = two_level_params(&swapped, grid).unwrap();
        assert!((a.delta_ghz - b.delta_ghz).abs() < 1e-9);
    }

    #[test]
    fn parity_resolved_gap_matches_full_solve() {
        let grid = SolverGrid { charge_cutoff: 8 };
        for (a, b1, b2) in [(0.6285, 1.0, 1.0), (0.78, 0.75, 0.75), (0.95, 0.8, 1.2), (1.0, 1.0, 1.0)] {
            let g = JunctionGeometry {
                beta1: b1,
                beta2: b2,
                ..unit(a)
            };
            let p = two_level_params(&g, grid).unwrap();
            let e0 = levels(&g, 0.5, grid, 2).unwrap();
            let e1 = levels(&g, 0.5 - TWO_LEVEL_FLUX_OFFSET, grid, 2).unwrap();
            let (d, w) = (e0[1] - e0[0], e1[1] - e1[0]);
            let current = (w * w - d * d).sqrt() / (2.0 * TWO_LEVEL_FLUX_OFFSET * GHZ_PER_NA_PHI0);
            assert!((p.delta_ghz - d).abs() < 1e-10, "{a} {b1} {b2}");
            assert!((p.current_na / current - 1.0).abs() < 1e-6, "{a} {b1} {b2}");
        }
    }
}
