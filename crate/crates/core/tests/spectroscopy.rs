mod common;

use fluxens::ensemble::{Ensemble, QubitInstance};
use fluxens::fitting::DriveProfile;
use fluxens::spectroscopy::{
    shift_from_effective, sweep, thermal_shift, transmission_approx, transmission_exact, DrivePoint,
    Engine, Environment, ResonatorParams, TransmissionMap,
};
use common::{exact_peak, two_qubit_splitting};

fn res() -> ResonatorParams {
    ResonatorParams {
        omega_r_ghz: 6.4,
        gamma_r_mhz: 12.2,
    }
}

fn small_ensemble() -> Ensemble {
    Ensemble {
        qubits: (0..12)
            .map(|j| QubitInstance {
                delta_ghz: 0.5 + 0.9 * j as f64,
                current_na: 380.0 + 5.0 * j as f64,
                eps0_prime_ghz: 1.3 * (j as f64 - 6.0),
                bare_coupling_mhz: 20.0 + j as f64,
            })
            .collect(),
        mean_current_na: 410.0,
        gbar_prime_mhz: 25.0,
        seed: 9,
    }
}

#[test]
fn two_resonant_qubits_split_by_collective_coupling() {
    let g = 10.0e-3;
    let (exact, oracle) = two_qubit_splitting(10.0);
    assert!((oracle / (2.0 * g * 2f64.sqrt()) - 1.0).abs() < 1e-12);
    assert!((exact / oracle - 1.0).abs() < 0.01, "{exact} vs {oracle}");
}

#[test]
fn bare_cavity_for_either_engine() {
    let e = Ensemble::empty(0);
    let env = Environment {
        temperature_mk: 50.0,
        gamma_qubit_mhz: 50.0,
    };
    let shift = thermal_shift(&e, 0.0, &res(), &env, false);
    assert_eq!((shift.delta_omega_r_mhz, shift.delta_gamma_r_mhz), (0.0, 0.0));
    for w in [6.35, 6.4, 6.41] {
        let d = DrivePoint { omega_ghz: w, lambda: 2.0 };
        let bare = 4.0 / ((w - 6.4).powi(2) + 0.0122f64.powi(2));
        assert!((transmission_approx(d, &shift, &res()) / bare - 1.0).abs() < 1e-12);
        assert!((transmission_exact(d, &[], &res()).norm_sqr() / bare - 1.0).abs() < 1e-12);
        let off = DrivePoint { lambda: 0.0, ..d };
        assert_eq!(transmission_approx(off, &shift, &res()), 0.0);
    }
}

#[test]
fn single_point_sweep_is_one_evaluation() {
    let e = small_ensemble();
    let env = Environment {
        temperature_mk: 50.0,
        gamma_qubit_mhz: 50.0,
    };
    let map = sweep(&[120.0], &[6.41], &e, &res(), &env, &DriveProfile::default(), Engine::Approx).unwrap();
    let shift = thermal_shift(&e, 120.0, &res(), &env, false);
    let direct = transmission_approx(DrivePoint { omega_ghz: 6.41, lambda: 1.0 }, &shift, &res());
    assert_eq!(map.intensity, vec![direct]);
}

#[test]
fn sweep_is_deterministic_and_round_trips() {
    let e = small_ensemble();
    let env = Environment {
        temperature_mk: 100.0,
        gamma_qubit_mhz: 50.0,
    };
    let flux: Vec<f64> = (0..21).map(|i| -1000.0 + 100.0 * i as f64).collect();
    let freq: Vec<f64> = (0..31).map(|i| 6.35 + 0.003 * i as f64).collect();
    let drive = DriveProfile::from_knots(vec![(-500.0, 0.5), (500.0, 1.5)]).unwrap();
    for engine in [Engine::Approx, Engine::Exact] {
        let a = sweep(&flux, &freq, &e, &res(), &env, &drive, engine).unwrap();
        let b = fluxens::par::with_threads(1, || sweep(&flux, &freq, &e, &res(), &env, &drive, engine)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        a.save(&path).unwrap();
        let back = TransmissionMap::load(&path).unwrap();
        assert_eq!(back.intensity, a.intensity);
        assert_eq!(back.engine, engine);
        assert_eq!(back.to_csv(), a.to_csv());
    }
}

#[test]
fn sweep_rejects_unordered_grids() {
    let e = small_ensemble();
    let env = Environment {
        temperature_mk: 50.0,
        gamma_qubit_mhz: 50.0,
    };
    let d = DriveProfile::default();
    assert!(sweep(&[1.0, 0.0], &[6.4], &e, &res(), &env, &d, Engine::Approx).is_err());
    assert!(sweep(&[0.0], &[], &e, &res(), &env, &d, Engine::Approx).is_err());
}

#[test]
fn exact_engine_uses_thermal_population_and_width() {
    // detuning 2.6 GHz > 20·g·√N: the exact peak follows the thermal shift
    let q = QubitInstance {
        delta_ghz: 9.0,
        current_na: 300.0,
        eps0_prime_ghz: 0.0,
        bare_coupling_mhz: 20.0,
    };
    let e = Ensemble {
        qubits: vec![q; 20],
        mean_current_na: 300.0,
        gbar_prime_mhz: 20.0,
        seed: 0,
    };
    let r = res();
    for t in [0.0, 150.0, 400.0] {
        let env = Environment {
            temperature_mk: t,
            gamma_qubit_mhz: 50.0,
        };
        let eff = e.effective(0.0, &env);
        let shift = shift_from_effective(&eff, &r, false);
        let predicted = r.omega_r_ghz + shift.delta_omega_r_mhz * 1e-3;
        let peak = exact_peak(&eff, &r, predicted, 0.05);
        let tol = (0.01 * shift.delta_omega_r_mhz.abs()).max(r.gamma_r_mhz / 100.0);
        assert!(((peak - predicted) * 1e3).abs() < tol, "T = {t}");
    }
}
