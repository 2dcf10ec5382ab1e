//! Run configurations: circuit, disorder, coupling, resonator and scan
//! settings in one strict TOML document.
//!
//! Unknown keys are rejected, and every key holding a physical quantity ends
//! in its unit (`_ghz`, `_mhz`, `_mk`, `_na`, `_ph`, `_nh`, `_uphi0`).
//! Relative widths (`*_sigma_rel`) are standard deviations divided by the
//! mean.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::{self, LookupSpec, LookupTable, SolverGrid};
use crate::ensemble::{
    sample_ensemble, CouplingGeometry, DisorderSpec, Ensemble, EnsembleStats, MeanCurrent,
};
use crate::fitting::DriveProfile;
use crate::spectroscopy::{Engine, Environment, LinearGrid, ResonatorParams};
use crate::{io, Error, Result};

pub const BUILTIN_NAMES: [&str; 2] = ["sample-a", "sample-b"];

/// Temperatures of the built-in temperature series, mK.
pub const TEMPERATURE_SERIES_MK: [f64; 5] = [50.0, 100.0, 150.0, 200.0, 223.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionConfig {
    pub ej_over_ec: f64,
    /// Unit-junction E_J; calibrated from `calibration_*` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ej_ghz: Option<f64>,
    pub calibration_alpha: f64,
    pub calibration_delta_ghz: f64,
    pub charge_cutoff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderConfig {
    pub n_qubits: usize,
    pub alpha_mean: f64,
    pub alpha_sigma_rel: f64,
    pub beta1_mean: f64,
    pub beta1_sigma_rel: f64,
    pub beta2_mean: f64,
    pub beta2_sigma_rel: f64,
    pub eps0_sigma_ghz: f64,
    #[serde(default)]
    pub mean_current: MeanCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub mutual_inductance_ph: f64,
    pub resonator_inductance_nh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbar_prime_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub gamma_qubit_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub flux_start_uphi0: f64,
    pub flux_stop_uphi0: f64,
    pub flux_step_uphi0: f64,
    pub freq_start_ghz: f64,
    pub freq_stop_ghz: f64,
    pub freq_step_ghz: f64,
    pub temperatures_mk: Vec<f64>,
    #[serde(default)]
    pub engine: Engine,
    /// Constant drive amplitude, used when no profile file is given.
    #[serde(default = "one")]
    pub drive_lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_profile: Option<PathBuf>,
    /// Saved ensemble to replay instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_in: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupConfig {
    pub alpha_spacing: f64,
    pub beta_spacing: f64,
    /// Random probe points used to validate a freshly built table.
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub junction: JunctionConfig,
    pub disorder: DisorderConfig,
    pub coupling: CouplingConfig,
    pub resonator: ResonatorParams,
    pub environment: EnvironmentConfig,
    pub scan: ScanConfig,
    pub lookup: LookupConfig,
}

fn common(name: &str) -> Scenario {
    Scenario {
        name: name.to_string(),
        seed: 1,
        junction: JunctionConfig {
            ej_over_ec: 75.0,
            ej_ghz: None,
            calibration_alpha: 0.6285,
            calibration_delta_ghz: 9.74,
            charge_cutoff: SolverGrid::default().charge_cutoff,
        },
        disorder: DisorderConfig {
            n_qubits: 4300,
            alpha_mean: 0.0,
            alpha_sigma_rel: 0.0,
            beta1_mean: 1.0,
            beta1_sigma_rel: 0.0,
            beta2_mean: 1.0,
            beta2_sigma_rel: 0.0,
            eps0_sigma_ghz: 0.0,
            mean_current: MeanCurrent::Ensemble,
        },
        coupling: CouplingConfig {
            mutual_inductance_ph: 10.0,
            resonator_inductance_nh: 100.0,
            gbar_prime_mhz: None,
        },
        resonator: ResonatorParams {
            omega_r_ghz: 0.0,
            gamma_r_mhz: 0.0,
        },
        environment: EnvironmentConfig {
            gamma_qubit_mhz: 50.0,
        },
        scan: ScanConfig {
            flux_start_uphi0: -5000.0,
            flux_stop_uphi0: 5000.0,
            flux_step_uphi0: 50.0,
            freq_start_ghz: 0.0,
            freq_stop_ghz: 0.0,
            freq_step_ghz: 0.0,
            temperatures_mk: vec![50.0],
            engine: Engine::Approx,
            drive_lambda: 1.0,
            drive_profile: None,
            ensemble_in: None,
            out_dir: None,
        },
        lookup: LookupConfig {
            alpha_spacing: 0.02,
            beta_spacing: 0.04,
            probes: 100,
        },
    }
}

impl Scenario {
    pub fn sample_a() -> Self {
        let mut s = common("sample-a");
        s.disorder.alpha_mean = 0.6285;
        s.disorder.alpha_sigma_rel = 0.025;
        s.disorder.beta1_sigma_rel = 0.025;
        s.disorder.beta2_sigma_rel = 0.025;
        s.disorder.eps0_sigma_ghz = 2.8;
        s.coupling.gbar_prime_mhz = Some(14.3);
        s.resonator = ResonatorParams {
            omega_r_ghz: 5.5,
            gamma_r_mhz: 13.3,
        };
        s.scan.freq_start_ghz = 5.1;
        s.scan.freq_stop_ghz = 5.6;
        s.scan.freq_step_ghz = 0.0025;
        s
    }

    pub fn sample_b() -> Self {
        let mut s = common("sample-b");
        s.disorder.alpha_mean = 0.7815;
        s.disorder.alpha_sigma_rel = 0.055;
        s.disorder.beta1_sigma_rel = 0.055;
        s.disorder.beta2_sigma_rel = 0.055;
        s.disorder.eps0_sigma_ghz = 2.6;
        s.coupling.gbar_prime_mhz = Some(9.2);
        s.resonator = ResonatorParams {
            omega_r_ghz: 6.4,
            gamma_r_mhz: 12.2,
        };
        s.scan.freq_start_ghz = 6.3;
        s.scan.freq_stop_ghz = 6.5;
        s.scan.freq_step_ghz = 0.001;
        s
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "sample-a" => Some(Self::sample_a()),
            "sample-b" => Some(Self::sample_b()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_file(path, &self.to_toml())
    }

    pub fn validate(&self) -> Result<()> {
        let j = &self.junction;
        for (name, v) in [
            ("ej_over_ec", j.ej_over_ec),
            ("calibration_alpha", j.calibration_alpha),
            ("calibration_delta_ghz", j.calibration_delta_ghz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation("junction", format!("{name} must be positive")));
            }
        }
        if let Some(ej) = j.ej_ghz {
            if !(ej.is_finite() && ej > 0.0) {
                return Err(Error::validation("junction", "ej_ghz must be positive"));
            }
        }
        self.solver_grid().validate()?;
        if self.disorder.n_qubits > 0 {
            self.disorder_spec().validate()?;
        }
        self.coupling_geometry().validate()?;
        self.resonator.validate()?;
        self.flux_grid().validate("flux grid")?;
        self.freq_grid().validate("frequency grid")?;
        if self.scan.temperatures_mk.is_empty() {
            return Err(Error::validation("scan", "temperatures_mk must not be empty"));
        }
        for &t in &self.scan.temperatures_mk {
            self.environment(t).validate()?;
        }
        if !(self.scan.drive_lambda.is_finite() && self.scan.drive_lambda >= 0.0) {
            return Err(Error::validation("scan", "drive_lambda must be >= 0"));
        }
        let l = &self.lookup;
        if !(l.alpha_spacing > 0.0 && l.beta_spacing > 0.0) {
            return Err(Error::validation("lookup", "spacings must be positive"));
        }
        Ok(())
    }

    pub fn solver_grid(&self) -> SolverGrid {
        SolverGrid {
            charge_cutoff: self.junction.charge_cutoff,
        }
    }

    pub fn disorder_spec(&self) -> DisorderSpec {
        let d = &self.disorder;
        DisorderSpec {
            n_qubits: d.n_qubits,
            alpha_mean: d.alpha_mean,
            alpha_sigma: d.alpha_sigma_rel * d.alpha_mean,
            beta_means: [d.beta1_mean, d.beta2_mean],
            beta_sigmas: [d.beta1_sigma_rel * d.beta1_mean, d.beta2_sigma_rel * d.beta2_mean],
            eps0_sigma_ghz: d.eps0_sigma_ghz,
            seed: self.seed,
        }
    }

    pub fn coupling_geometry(&self) -> CouplingGeometry {
        CouplingGeometry {
            mutual_inductance_ph: self.coupling.mutual_inductance_ph,
            resonator_inductance_nh: self.coupling.resonator_inductance_nh,
            gbar_prime_mhz: self.coupling.gbar_prime_mhz,
        }
    }

    pub fn environment(&self, temperature_mk: f64) -> Environment {
        Environment {
            temperature_mk,
            gamma_qubit_mhz: self.environment.gamma_qubit_mhz,
        }
    }

    pub fn flux_grid(&self) -> LinearGrid {
        LinearGrid {
            start: self.scan.flux_start_uphi0,
            stop: self.scan.flux_stop_uphi0,
            step: self.scan.flux_step_uphi0,
        }
    }

    pub fn freq_grid(&self) -> LinearGrid {
        LinearGrid {
            start: self.scan.freq_start_ghz,
            stop: self.scan.freq_stop_ghz,
            step: self.scan.freq_step_ghz,
        }
    }

    pub fn drive_profile(&self) -> Result<DriveProfile> {
        match &self.scan.drive_profile {
            Some(path) => DriveProfile::load(path),
            None => DriveProfile::constant(self.scan.drive_lambda),
        }
    }

    pub fn lookup_spec(&self) -> LookupSpec {
        self.disorder_spec().lookup_spec(
            self.junction.ej_over_ec,
            self.solver_grid(),
            self.lookup.alpha_spacing,
            self.lookup.beta_spacing,
        )
    }

    /// The configured E_J, or the one giving the calibration geometry
    /// (α, 1, 1) the calibration gap.
    pub fn ej_ghz(&self) -> Result<f64> {
        let j = &self.junction;
        match j.ej_ghz {
            Some(ej) => Ok(ej),
            None => circuit::calibrate_ej(
                j.ej_over_ec,
                j.calibration_alpha,
                1.0,
                1.0,
                j.calibration_delta_ghz,
                self.solver_grid(),
            ),
        }
    }

    /// Validated lookup table scaled to the scenario's E_J, cached in
    /// `cache_dir` when given.
    pub fn lookup_table(&self, cache_dir: Option<&Path>) -> Result<LookupTable> {
        let table = LookupTable::load_or_build(self.lookup_spec(), cache_dir, self.lookup.probes)?;
        Ok(table.with_ej(self.ej_ghz()?))
    }

    /// The replayed ensemble if `scan.ensemble_in` is set, else a fresh draw.
    pub fn ensemble(&self, cache_dir: Option<&Path>) -> Result<(Ensemble, EnsembleStats)> {
        match &self.scan.ensemble_in {
            Some(path) => {
                let e = Ensemble::load(path)?;
                let stats = e.stats();
                Ok((e, stats))
            }
            None => self.sample(cache_dir),
        }
    }

    /// Draws the ensemble. With zero qubits no table is needed and the
    /// result is empty.
    pub fn sample(&self, cache_dir: Option<&Path>) -> Result<(Ensemble, EnsembleStats)> {
        if self.disorder.n_qubits == 0 {
            let e = Ensemble::empty(self.seed);
            let stats = e.stats();
            return Ok((e, stats));
        }
        let table = self.lookup_table(cache_dir)?;
        sample_ensemble(
            &self.disorder_spec(),
            &table,
            &self.coupling_geometry(),
            self.resonator.omega_r_ghz,
            self.disorder.mean_current,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_match_published_parameters() {
        let a = Scenario::sample_a();
        assert_eq!(a.disorder.n_qubits, 4300);
        assert_eq!(a.disorder.alpha_mean, 0.6285);
        assert_eq!((a.disorder.beta1_mean, a.disorder.beta2_mean), (1.0, 1.0));
        assert_eq!(a.disorder.alpha_sigma_rel, 0.025);
        assert_eq!(a.disorder.beta1_sigma_rel, 0.025);
        assert_eq!(a.disorder.beta2_sigma_rel, 0.025);
        assert_eq!(a.resonator.omega_r_ghz, 5.5);
        assert_eq!(a.coupling.gbar_prime_mhz, Some(14.3));
        assert_eq!(a.disorder.eps0_sigma_ghz, 2.8);
        assert_eq!(a.environment.gamma_qubit_mhz, 50.0);
        assert_eq!(a.resonator.gamma_r_mhz, 13.3);

        let b = Scenario::sample_b();
        assert_eq!(b.disorder.n_qubits, 4300);
        assert_eq!(b.disorder.alpha_mean, 0.7815);
        assert_eq!((b.disorder.beta1_mean, b.disorder.beta2_mean), (1.0, 1.0));
        assert_eq!(b.disorder.alpha_sigma_rel, 0.055);
        assert_eq!(b.disorder.beta1_sigma_rel, 0.055);
        assert_eq!(b.disorder.beta2_sigma_rel, 0.055);
        assert_eq!(b.resonator.omega_r_ghz, 6.4);
        assert_eq!(b.coupling.gbar_prime_mhz, Some(9.2));
        assert_eq!(b.disorder.eps0_sigma_ghz, 2.6);
        assert_eq!(b.environment.gamma_qubit_mhz, 50.0);
        assert_eq!(b.resonator.gamma_r_mhz, 12.2);

        for s in [a, b] {
            assert_eq!(s.junction.ej_over_ec, 75.0);
            assert_eq!(s.junction.calibration_alpha, 0.6285);
            assert_eq!(s.junction.calibration_delta_ghz, 9.74);
            s.validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip_is_exact() {
        for name in BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap();
            let text = s.to_toml();
            let back = Scenario::from_toml_str(&text).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = Scenario::sample_a().to_toml().replace("omega_r_ghz", "omega_r");
        assert!(matches!(Scenario::from_toml_str(&text), Err(Error::Config(_))));
        let text = format!("{}\n[extra]\nx = 1\n", Scenario::sample_a().to_toml());
        assert!(matches!(Scenario::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut s = Scenario::sample_b();
        s.scan.temperatures_mk.clear();
        assert!(s.validate().is_err());
        let mut s = Scenario::sample_b();
        s.scan.freq_step_ghz = 0.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::sample_b();
        s.disorder.n_qubits = 0;
        s.validate().unwrap();
    }

    #[test]
    fn empty_ensemble_needs_no_table() {
        let mut s = Scenario::sample_a();
        s.disorder.n_qubits = 0;
        let (e, _) = s.sample(None).unwrap();
        assert!(e.is_empty());
    }
}
