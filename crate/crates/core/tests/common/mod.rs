//! Invariant checks shared by the property suite and the acceptance run.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use fluxens::circuit::{self, JunctionGeometry, LookupTable, SolverGrid};
use fluxens::ensemble::{
    effective_params, sample_ensemble, CouplingGeometry, DisorderSpec, EffectiveQubit, MeanCurrent,
    QubitInstance,
};
use fluxens::fitting::fit_lorentzian;
use fluxens::par;
use fluxens::spectroscopy::{
    refine_peak, shift_from_effective, transmission_approx, transmission_exact, DrivePoint,
    Environment, ResonatorParams, ShiftResult,
};
use fluxens::sum::CompensatedSum;
use fluxens::units::{energy_bias_ghz, mhz_to_ghz, GHZ_PER_NA_PHI0};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = Result<(), TestCaseError>;

pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("fluxens-cache")
}

fn fail(e: fluxens::Error) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// Roughly the calibrated unit-junction E_J, GHz.
pub const EJ_GHZ: f64 = 298.4;

pub fn geometry(alpha: f64, beta1: f64, beta2: f64) -> JunctionGeometry {
    JunctionGeometry {
        alpha,
        beta1,
        beta2,
        ej_over_ec: 75.0,
        ej_ghz: EJ_GHZ,
    }
}

// ---- circuit -------------------------------------------------------------

pub fn areas() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.55..0.85f64, 0.93..1.07f64, 0.93..1.07f64)
}

/// E_k(f) = E_k(1 − f).
pub fn check_reflection((alpha, beta1, beta2): (f64, f64, f64), f: f64) -> Check {
    let g = geometry(alpha, beta1, beta2);
    let grid = SolverGrid::default();
    let a = circuit::levels(&g, f, grid, 3).map_err(fail)?;
    let b = circuit::levels(&g, 1.0 - f, grid, 3).map_err(fail)?;
    for (x, y) in a.iter().zip(&b) {
        prop_assert!((x - y).abs() <= 1e-7 * (1.0 + x.abs()), "{a:?} vs {b:?}");
    }
    Ok(())
}

pub fn check_gap_positive(alpha: f64) -> Check {
    let p = circuit::two_level_params(&geometry(alpha, 1.0, 1.0), SolverGrid::default()).map_err(fail)?;
    prop_assert!(p.delta_ghz > 0.0 && p.current_na > 0.0, "{p:?}");
    Ok(())
}

/// √(Δ² + ε²) with ε = 2 I_p δΦ reproduces E₁ − E₀ within 1% near
/// degeneracy.
pub fn check_two_level_model(alpha: f64, df: f64) -> Check {
    let g = geometry(alpha, 1.0, 1.0);
    let grid = SolverGrid::default();
    let p = circuit::two_level_params(&g, grid).map_err(fail)?;
    let e = circuit::levels(&g, 0.5 + df, grid, 2).map_err(fail)?;
    let full = e[1] - e[0];
    let eps = 2.0 * p.current_na * df * GHZ_PER_NA_PHI0;
    let model = p.delta_ghz.hypot(eps);
    prop_assert!((model / full - 1.0).abs() < 0.01, "model {model} vs full {full}");
    Ok(())
}

// ---- ensemble ------------------------------------------------------------

pub fn qubit() -> impl Strategy<Value = QubitInstance> {
    (0.2..12.0f64, 150.0..450.0f64, -8.0..8.0f64, 1.0..20.0f64).prop_map(|(d, i, e, g)| QubitInstance {
        delta_ghz: d,
        current_na: i,
        eps0_prime_ghz: e,
        bare_coupling_mhz: g,
    })
}

/// 0 < g ≤ g′ with equality only at zero bias, ω ≥ Δ, γ_j ≥ γ_qubit.
pub fn check_effective_bounds(q: QubitInstance, mean_current: f64, flux: f64, t_mk: f64) -> Check {
    let env = Environment {
        temperature_mk: t_mk,
        gamma_qubit_mhz: 50.0,
    };
    let e = effective_params(&q, mean_current, flux, &env);
    let eps = energy_bias_ghz(q.current_na, flux) + q.eps0_prime_ghz * q.current_na / mean_current;
    prop_assert!(e.coupling_mhz > 0.0 && e.coupling_mhz <= q.bare_coupling_mhz);
    prop_assert!(e.omega_ghz >= q.delta_ghz);
    if eps == 0.0 {
        prop_assert_eq!(e.coupling_mhz, q.bare_coupling_mhz);
    } else if eps.abs() > 1e-6 * q.delta_ghz {
        prop_assert!(e.coupling_mhz < q.bare_coupling_mhz);
    }
    prop_assert!(e.gamma_mhz >= 50.0);
    prop_assert!(e.polarization > 0.0 && e.polarization <= 1.0);
    Ok(())
}

/// T = 0 gives γ_j = γ_qubit and full polarization; very high temperature
/// removes the polarization while γ_j grows.
pub fn check_bose_limits(q: QubitInstance) -> Check {
    let at = |t| {
        effective_params(
            &q,
            q.current_na,
            0.0,
            &Environment {
                temperature_mk: t,
                gamma_qubit_mhz: 50.0,
            },
        )
    };
    let cold = at(0.0);
    prop_assert_eq!(cold.gamma_mhz, 50.0);
    prop_assert_eq!(cold.polarization, 1.0);
    let hot = at(1e7);
    prop_assert!(hot.polarization < 1e-3);
    prop_assert!(hot.gamma_mhz > 100.0 * 50.0);
    Ok(())
}

fn small_spec(seed: u64) -> DisorderSpec {
    DisorderSpec {
        n_qubits: 64,
        alpha_mean: 0.6285,
        alpha_sigma: 0.004,
        beta_means: [1.0, 1.0],
        beta_sigmas: [0.004, 0.004],
        eps0_sigma_ghz: 2.0,
        seed,
    }
}

/// Small table around sample A's nominal geometry, built once per process.
pub fn small_table() -> &'static LookupTable {
    static TABLE: OnceLock<LookupTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let spec = small_spec(0).lookup_spec(75.0, SolverGrid::default(), 0.02, 0.04);
        LookupTable::load_or_build(spec, Some(&cache_dir()), 0)
            .expect("small table")
            .with_ej(EJ_GHZ)
    })
}

const COUPLING: CouplingGeometry = CouplingGeometry {
    mutual_inductance_ph: 10.0,
    resonator_inductance_nh: 100.0,
    gbar_prime_mhz: None,
};

/// Same ensemble with 1 and 3 workers; g′ⱼ/I_j constant.
pub fn check_sampling_determinism(seed: u64) -> Check {
    let spec = small_spec(seed);
    let draw = |threads| {
        par::with_threads(threads, || {
            sample_ensemble(&spec, small_table(), &COUPLING, 5.5, MeanCurrent::Ensemble)
        })
    };
    let (one, _) = draw(1).map_err(fail)?;
    let (three, _) = draw(3).map_err(fail)?;
    prop_assert_eq!(one.to_csv(), three.to_csv());
    let ratio = one.gbar_prime_mhz / one.mean_current_na;
    for q in &one.qubits {
        prop_assert!((q.bare_coupling_mhz / q.current_na / ratio - 1.0).abs() < 1e-14);
    }
    Ok(())
}

// ---- spectroscopy --------------------------------------------------------

pub fn effective_qubit() -> impl Strategy<Value = EffectiveQubit> {
    (0.5..15.0f64, 0.1..30.0f64, 1.0..200.0f64, 0.0..1.0f64).prop_map(|(w, g, gamma, p)| EffectiveQubit {
        omega_ghz: w,
        coupling_mhz: g,
        gamma_mhz: gamma,
        polarization: p,
    })
}

pub fn resonator() -> impl Strategy<Value = ResonatorParams> {
    (4.0..8.0f64, 1.0..30.0f64).prop_map(|(w, g)| ResonatorParams {
        omega_r_ghz: w,
        gamma_r_mhz: g,
    })
}

/// δγ_r ≥ 0 and the stored per-qubit terms sum to the totals exactly.
pub fn check_shift_terms(qubits: &[EffectiveQubit], res: &ResonatorParams) -> Check {
    let s = shift_from_effective(qubits, res, true);
    prop_assert!(s.delta_gamma_r_mhz >= 0.0);
    let terms = s.per_qubit.as_ref().expect("terms kept");
    let shift: CompensatedSum = terms.iter().map(|t| t.shift_mhz).collect();
    let broad: CompensatedSum = terms.iter().map(|t| t.broadening_mhz).collect();
    prop_assert_eq!(shift.value(), s.delta_omega_r_mhz);
    prop_assert_eq!(broad.value(), s.delta_gamma_r_mhz);
    Ok(())
}

fn cold(omega: f64, g: f64, gamma: f64) -> EffectiveQubit {
    EffectiveQubit {
        omega_ghz: omega,
        coupling_mhz: g,
        gamma_mhz: gamma,
        polarization: 1.0,
    }
}

/// A single cold qubit pulls the resonator away from itself.
pub fn check_shift_sign(omega: f64, res: &ResonatorParams) -> Check {
    let s = shift_from_effective(&[cold(omega, 10.0, 1.0)], res, false);
    let det = omega - res.omega_r_ghz;
    prop_assert_eq!(s.delta_omega_r_mhz.signum(), -det.signum());
    Ok(())
}

/// K identical qubits shift K times as much as one.
pub fn check_collective_scaling(omega: f64, k: usize, res: &ResonatorParams) -> Check {
    let q = cold(omega, 7.0, 50.0);
    let one = shift_from_effective(&[q], res, false).delta_omega_r_mhz;
    let many = shift_from_effective(&vec![q; k], res, false).delta_omega_r_mhz;
    prop_assert!((many - k as f64 * one).abs() <= 1e-12 * (k as f64 * one).abs());
    Ok(())
}

fn thermal(q: &QubitInstance, t_mk: f64, res: &ResonatorParams) -> ShiftResult {
    let env = Environment {
        temperature_mk: t_mk,
        gamma_qubit_mhz: 50.0,
    };
    shift_from_effective(&[effective_params(q, q.current_na, 0.0, &env)], res, false)
}

/// At 10 mK a qubit with Δ ≥ 5 GHz is within 0.1% of the zero-temperature
/// shift; at very high temperature the shift vanishes but the broadening
/// stays positive.
pub fn check_thermal_limits(delta_ghz: f64, res: &ResonatorParams) -> Check {
    let q = QubitInstance {
        delta_ghz,
        current_na: 300.0,
        eps0_prime_ghz: 0.0,
        bare_coupling_mhz: 14.3,
    };
    let zero = thermal(&q, 0.0, res);
    let ten = thermal(&q, 10.0, res);
    if delta_ghz >= 5.0 {
        let rel = (ten.delta_omega_r_mhz / zero.delta_omega_r_mhz - 1.0).abs();
        prop_assert!(rel < 1e-3, "relative change {rel}");
    }
    let hot = thermal(&q, 1e7, res);
    prop_assert!(hot.delta_omega_r_mhz.abs() < 1e-3 * zero.delta_omega_r_mhz.abs());
    prop_assert!(hot.delta_gamma_r_mhz > 0.0);
    Ok(())
}

/// The dispersive Lorentzian is nonnegative and symmetric about its peak.
pub fn check_lorentzian_symmetry(shift_mhz: f64, broad_mhz: f64, x_mhz: f64, res: &ResonatorParams) -> Check {
    let s = ShiftResult {
        delta_omega_r_mhz: shift_mhz,
        delta_gamma_r_mhz: broad_mhz,
        per_qubit: None,
    };
    let center = res.omega_r_ghz + mhz_to_ghz(shift_mhz);
    let at = |w| transmission_approx(DrivePoint { omega_ghz: w, lambda: 1.5 }, &s, res);
    let (up, down) = (at(center + mhz_to_ghz(x_mhz)), at(center - mhz_to_ghz(x_mhz)));
    prop_assert!(up >= 0.0 && down >= 0.0);
    prop_assert!((up - down).abs() <= 1e-6 * up, "{up} vs {down}");
    prop_assert!(at(center) >= up);
    Ok(())
}

/// Random cold ensemble with every |ω_j − ω_r| above 20·g_j·√N.
pub fn dispersive_ensemble() -> impl Strategy<Value = (Vec<EffectiveQubit>, ResonatorParams)> {
    (resonator(), 1usize..=20).prop_flat_map(|(res, n)| {
        let q = (1.0..10.0f64, 1.05..4.0f64, any::<bool>(), 5.0..80.0f64);
        prop::collection::vec(q, n).prop_map(move |raw| {
            let root_n = (raw.len() as f64).sqrt();
            let qubits = raw
                .iter()
                .map(|&(g, factor, above, gamma)| {
                    let det = mhz_to_ghz(20.0 * g * root_n * factor);
                    cold(res.omega_r_ghz + if above { det } else { -det }, g, gamma)
                })
                .collect();
            (qubits, res)
        })
    })
}

/// Peak of the exact steady-state intensity near the dispersive estimate.
pub fn exact_peak(qubits: &[EffectiveQubit], res: &ResonatorParams, guess_ghz: f64, half_window_ghz: f64) -> f64 {
    let f = |w| transmission_exact(DrivePoint { omega_ghz: w, lambda: 1.0 }, qubits, res).norm_sqr();
    refine_peak(f, guess_ghz - half_window_ghz, guess_ghz + half_window_ghz, 401)
}

/// Exact-engine peak within max(1% of |δω_r|, γ_r/100) of ω_r + δω_r.
pub fn check_exact_matches_dispersive(qubits: &[EffectiveQubit], res: &ResonatorParams) -> Check {
    let shift = shift_from_effective(qubits, res, false);
    let predicted = res.omega_r_ghz + mhz_to_ghz(shift.delta_omega_r_mhz);
    let window = mhz_to_ghz(5.0 * (res.gamma_r_mhz + shift.delta_gamma_r_mhz) + shift.delta_omega_r_mhz.abs());
    let peak = exact_peak(qubits, res, predicted, window);
    let err_mhz = (peak - predicted).abs() * 1e3;
    let tol_mhz = (0.01 * shift.delta_omega_r_mhz.abs()).max(res.gamma_r_mhz / 100.0);
    prop_assert!(err_mhz <= tol_mhz, "peak off by {err_mhz} MHz (tolerance {tol_mhz})");
    Ok(())
}

/// Exact-engine peak splitting for two identical qubits resonant with the
/// resonator, and the normal-mode splitting of the coupled oscillators.
pub fn two_qubit_splitting(g_mhz: f64) -> (f64, f64) {
    let res = ResonatorParams {
        omega_r_ghz: 6.0,
        gamma_r_mhz: 0.05,
    };
    let q = cold(6.0, g_mhz, 0.05);
    let g = mhz_to_ghz(g_mhz);
    let upper = exact_peak(&[q, q], &res, 6.0 + 1.5 * g, 1.4 * g);
    let lower = exact_peak(&[q, q], &res, 6.0 - 1.5 * g, 1.4 * g);
    let h = nalgebra::Matrix3::new(6.0, g, g, g, 6.0, 0.0, g, 0.0, 6.0);
    let eig = h.symmetric_eigen().eigenvalues;
    (upper - lower, eig.max() - eig.min())
}

// ---- fitting -------------------------------------------------------------

pub fn lorentzian() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.1..10.0f64, 4.0..8.0f64, 2.0..40.0f64)
}

fn sampled(lambda: f64, center: f64, width_mhz: f64, shift: f64) -> (Vec<f64>, Vec<f64>) {
    let w = mhz_to_ghz(width_mhz);
    let xs: Vec<f64> = (0..121).map(|i| center - 6.0 * w + 12.0 * w * i as f64 / 120.0 + shift).collect();
    let ys = xs.iter().map(|&x| lambda * lambda / ((x - shift - center).powi(2) + w * w)).collect();
    (xs, ys)
}

/// Scaling intensities by c scales Λ by √c and leaves center and width.
pub fn check_fit_scale((lambda, center, width): (f64, f64, f64), c: f64) -> Check {
    let (xs, ys) = sampled(lambda, center, width, 0.0);
    let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
    let a = fit_lorentzian(&xs, &ys, false);
    let b = fit_lorentzian(&xs, &scaled, false);
    prop_assert!(a.converged && b.converged, "{a:?} {b:?}");
    prop_assert!((b.amplitude / (c.sqrt() * a.amplitude) - 1.0).abs() < 1e-9);
    prop_assert!((b.center_ghz - a.center_ghz).abs() < 1e-12);
    prop_assert!((b.width_mhz / a.width_mhz - 1.0).abs() < 1e-9);
    Ok(())
}

/// Shifting the grid by δ shifts the fitted center by δ.
pub fn check_fit_shift((lambda, center, width): (f64, f64, f64), delta: f64) -> Check {
    let (xs, ys) = sampled(lambda, center, width, 0.0);
    let (xs2, ys2) = sampled(lambda, center, width, delta);
    let a = fit_lorentzian(&xs, &ys, false);
    let b = fit_lorentzian(&xs2, &ys2, false);
    prop_assert!(a.converged && b.converged, "{a:?} {b:?}");
    prop_assert!((b.center_ghz - a.center_ghz - delta).abs() < 1e-9);
    prop_assert!((b.width_mhz / a.width_mhz - 1.0).abs() < 1e-6);
    prop_assert!((b.amplitude / a.amplitude - 1.0).abs() < 1e-6);
    Ok(())
}
