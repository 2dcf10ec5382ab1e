//! Seeded ensembles of disordered flux qubits.
//!
//! Junction areas α, β₁, β₂ and the flux-disorder bias ε′₀ are drawn
//! independently per qubit from Gaussians truncated at ±5σ (values beyond are
//! redrawn). Qubit `j` draws from its own ChaCha8 stream `j` under the run
//! seed, so an ensemble depends only on the seed and never on worker count or
//! evaluation order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::{AxisRange, LookupSpec, LookupTable, SolverGrid};
use crate::io::{self, TableWriter};
use crate::spectroscopy::Environment;
use crate::sum::CompensatedSum;
use crate::units::{bose_occupation, energy_bias_ghz, thermal_polarization, HBAR};
use crate::{par, Error, Result};

/// Truncation point of every disorder distribution, in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 5.0;

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;
const ENSEMBLE_COLUMNS: [&str; 5] = [
    "qubit_id",
    "delta_ghz",
    "current_na",
    "eps0_prime_ghz",
    "gcoupling_mhz",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub n_qubits: usize,
    pub alpha_mean: f64,
    pub alpha_sigma: f64,
    pub beta_means: [f64; 2],
    pub beta_sigmas: [f64; 2],
    /// Standard deviation of ε′₀ in GHz.
    pub eps0_sigma_ghz: f64,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::validation("disorder", "n_qubits must be at least 1"));
        }
        let pairs = [
            ("alpha", self.alpha_mean, self.alpha_sigma),
            ("beta1", self.beta_means[0], self.beta_sigmas[0]),
            ("beta2", self.beta_means[1], self.beta_sigmas[1]),
        ];
        for (name, mean, sigma) in pairs {
            if !(mean.is_finite() && sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::validation("disorder", format!("{name}: mean {mean}, sigma {sigma}")));
            }
            if mean - TRUNCATION_SIGMAS * sigma <= 0.0 {
                return Err(Error::validation(
                    "disorder",
                    format!("{name}: truncated range reaches non-positive areas"),
                ));
            }
        }
        if !(self.eps0_sigma_ghz.is_finite() && self.eps0_sigma_ghz >= 0.0) {
            return Err(Error::validation("disorder", "eps0 sigma must be >= 0"));
        }
        Ok(())
    }

    /// Lookup table parameters covering the truncated sampling box with the
    /// given node spacings.
    pub fn lookup_spec(&self, ej_over_ec: f64, grid: SolverGrid, alpha_spacing: f64, beta_spacing: f64) -> LookupSpec {
        let t = TRUNCATION_SIGMAS;
        LookupSpec {
            alpha: AxisRange::around(self.alpha_mean, t * self.alpha_sigma, alpha_spacing),
            beta1: AxisRange::around(self.beta_means[0], t * self.beta_sigmas[0], beta_spacing),
            beta2: AxisRange::around(self.beta_means[1], t * self.beta_sigmas[1], beta_spacing),
            ej_over_ec,
            grid,
        }
    }
}

/// Which current Ī normalizes couplings and flux disorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanCurrent {
    /// Sample mean of I_j over the drawn ensemble.
    #[default]
    Ensemble,
    /// Current of the nominal geometry (ᾱ, β̄₁, β̄₂).
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingGeometry {
    pub mutual_inductance_ph: f64,
    pub resonator_inductance_nh: f64,
    /// Fixes ḡ′ in MHz instead of computing it from the inductances.
    pub gbar_prime_mhz: Option<f64>,
}

impl CouplingGeometry {
    /// ḡ′ in MHz: the override if set, else M·Ī·√(ω_r/2ħL).
    pub fn gbar_prime_mhz(&self, mean_current_na: f64, omega_r_ghz: f64) -> f64 {
        if let Some(g) = self.gbar_prime_mhz {
            return g;
        }
        let m = self.mutual_inductance_ph * 1e-12;
        let l = self.resonator_inductance_nh * 1e-9;
        let w = 2.0 * std::f64::consts::PI * omega_r_ghz * 1e9;
        let g = m * mean_current_na * 1e-9 * (w / (2.0 * HBAR * l)).sqrt();
        g / (2.0 * std::f64::consts::PI) * 1e-6
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.gbar_prime_mhz {
            Some(g) => g.is_finite() && g > 0.0,
            None => self.mutual_inductance_ph > 0.0 && self.resonator_inductance_nh > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation("coupling", "need positive gbar_prime or inductances"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitInstance {
    pub delta_ghz: f64,
    pub current_na: f64,
    pub eps0_prime_ghz: f64,
    /// g′ⱼ in MHz.
    pub bare_coupling_mhz: f64,
}

/// Flux- and temperature-dependent parameters of one qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveQubit {
    pub omega_ghz: f64,
    pub coupling_mhz: f64,
    pub gamma_mhz: f64,
    /// tanh(hω/2k_BT), the thermal ground-excited population difference.
    pub polarization: f64,
}

/// ε_j = 2 I_j δΦ + ε′₀ⱼ I_j/Ī, ω_j = √(Δ_j² + ε_j²), g_j = (Δ_j/ω_j) g′ⱼ,
/// γ_j = (1 + n_B(ω_j)) γ_qubit.
pub fn effective_params(
    q: &QubitInstance,
    mean_current_na: f64,
    flux_offset_uphi0: f64,
    env: &Environment,
) -> EffectiveQubit {
    let eps = energy_bias_ghz(q.current_na, flux_offset_uphi0) + q.eps0_prime_ghz * q.current_na / mean_current_na;
    let omega = q.delta_ghz.hypot(eps);
    EffectiveQubit {
        omega_ghz: omega,
        coupling_mhz: q.delta_ghz / omega * q.bare_coupling_mhz,
        gamma_mhz: (1.0 + bose_occupation(omega, env.temperature_mk)) * env.gamma_qubit_mhz,
        polarization: thermal_polarization(omega, env.temperature_mk),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnsembleStats {
    pub n: usize,
    pub delta_mean_ghz: f64,
    pub delta_sigma_ghz: f64,
    pub current_mean_na: f64,
    pub current_sigma_na: f64,
    pub coupling_mean_mhz: f64,
    pub coupling_sigma_mhz: f64,
}

/// Mean and sample standard deviation (zero for fewer than two values).
fn mean_sigma(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().collect::<CompensatedSum>().value() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = values.map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub qubits: Vec<QubitInstance>,
    /// Ī in nA.
    pub mean_current_na: f64,
    pub gbar_prime_mhz: f64,
    pub seed: u64,
}

impl Ensemble {
    /// No qubits: a bare resonator.
    pub fn empty(seed: u64) -> Self {
        Self {
            qubits: Vec::new(),
            mean_current_na: 1.0,
            gbar_prime_mhz: 0.0,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn effective(&self, flux_offset_uphi0: f64, env: &Environment) -> Vec<EffectiveQubit> {
        self.qubits
            .iter()
            .map(|q| effective_params(q, self.mean_current_na, flux_offset_uphi0, env))
            .collect()
    }

    pub fn stats(&self) -> EnsembleStats {
        let (delta_mean_ghz, delta_sigma_ghz) = mean_sigma(self.qubits.iter().map(|q| q.delta_ghz));
        let (current_mean_na, current_sigma_na) = mean_sigma(self.qubits.iter().map(|q| q.current_na));
        let (coupling_mean_mhz, coupling_sigma_mhz) = mean_sigma(self.qubits.iter().map(|q| q.bare_coupling_mhz));
        EnsembleStats {
            n: self.qubits.len(),
            delta_mean_ghz,
            delta_sigma_ghz,
            current_mean_na,
            current_sigma_na,
            coupling_mean_mhz,
            coupling_sigma_mhz,
        }
    }

    /// Scales every coupling by `factor`, keeping g′ⱼ/I_j uniform.
    pub fn scale_couplings(&mut self, factor: f64) {
        self.gbar_prime_mhz *= factor;
        for q in &mut self.qubits {
            q.bare_coupling_mhz = self.gbar_prime_mhz * (q.current_na / self.mean_current_na);
        }
    }

    pub fn to_csv(&self) -> String {
        let meta = [
            ("seed", self.seed.to_string()),
            ("mean_current_na", io::fmt_f64(self.mean_current_na)),
            ("gbar_prime_mhz", io::fmt_f64(self.gbar_prime_mhz)),
        ];
        let mut w = TableWriter::new("ensemble", ENSEMBLE_FORMAT_VERSION, &meta, &ENSEMBLE_COLUMNS);
        for (j, q) in self.qubits.iter().enumerate() {
            w.row(&[
                j.to_string(),
                io::fmt_f64(q.delta_ghz),
                io::fmt_f64(q.current_na),
                io::fmt_f64(q.eps0_prime_ghz),
                io::fmt_f64(q.bare_coupling_mhz),
            ]);
        }
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_file(path, &self.to_csv())
    }

    /// Reads an ensemble file. Ī and ḡ′ come from the header when present and
    /// are otherwise recomputed from the rows.
    pub fn load(path: &Path) -> Result<Self> {
        let table = io::read_table(path, "ensemble", ENSEMBLE_FORMAT_VERSION, &ENSEMBLE_COLUMNS)?;
        let mut qubits = Vec::with_capacity(table.rows.len());
        for (j, (line, r)) in table.rows.iter().enumerate() {
            if r[0] != j as f64 {
                return Err(table.parse_error(*line, format!("expected qubit_id {j}")));
            }
            let q = QubitInstance {
                delta_ghz: r[1],
                current_na: r[2],
                eps0_prime_ghz: r[3],
                bare_coupling_mhz: r[4],
            };
            let ok = q.delta_ghz > 0.0
                && q.current_na > 0.0
                && q.bare_coupling_mhz >= 0.0
                && r.iter().all(|v| v.is_finite());
            if !ok {
                return Err(table.parse_error(*line, "gap and current must be positive and finite"));
            }
            qubits.push(q);
        }
        let seed = table.meta_value::<u64>("seed")?.unwrap_or(0);
        let mean_current_na = match table.meta_value::<f64>("mean_current_na")? {
            Some(v) => v,
            None if qubits.is_empty() => 1.0,
            None => mean_sigma(qubits.iter().map(|q| q.current_na)).0,
        };
        let gbar_prime_mhz = match table.meta_value::<f64>("gbar_prime_mhz")? {
            Some(v) => v,
            None => qubits
                .first()
                .map_or(0.0, |q| q.bare_coupling_mhz * mean_current_na / q.current_na),
        };
        Ok(Self {
            qubits,
            mean_current_na,
            gbar_prime_mhz,
            seed,
        })
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= TRUNCATION_SIGMAS {
            return z;
        }
    }
}

/// Junction areas and ε′₀ of qubit `j`: (α, β₁, β₂, ε′₀).
pub fn draw_qubit(spec: &DisorderSpec, j: usize) -> (f64, f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(j as u64);
    let alpha = spec.alpha_mean + spec.alpha_sigma * truncated_normal(&mut rng);
    let beta1 = spec.beta_means[0] + spec.beta_sigmas[0] * truncated_normal(&mut rng);
    let beta2 = spec.beta_means[1] + spec.beta_sigmas[1] * truncated_normal(&mut rng);
    let eps0 = spec.eps0_sigma_ghz * truncated_normal(&mut rng);
    (alpha, beta1, beta2, eps0)
}

/// Draws the ensemble and maps each qubit's geometry to (Δ, I) through the
/// lookup table, which must already carry the calibrated E_J.
pub fn sample_ensemble(
    spec: &DisorderSpec,
    lookup: &LookupTable,
    coupling: &CouplingGeometry,
    omega_r_ghz: f64,
    mean_current: MeanCurrent,
) -> Result<(Ensemble, EnsembleStats)> {
    spec.validate()?;
    coupling.validate()?;
    let draws = par::try_map_indexed(spec.n_qubits, |j| {
        let (alpha, beta1, beta2, eps0) = draw_qubit(spec, j);
        let p = lookup.query(alpha, beta1, beta2).map_err(|e| match e {
            Error::OutOfRange { .. } => Error::validation(
                "lookup table",
                format!("does not cover the truncated sampling range: {e}"),
            ),
            e => e,
        })?;
        Ok::<_, Error>((p, eps0))
    })?;

    let mean_current_na = match mean_current {
        MeanCurrent::Ensemble => mean_sigma(draws.iter().map(|(p, _)| p.current_na)).0,
        MeanCurrent::Nominal => {
            lookup
                .query(spec.alpha_mean, spec.beta_means[0], spec.beta_means[1])?
                .current_na
        }
    };
    let gbar = coupling.gbar_prime_mhz(mean_current_na, omega_r_ghz);
    let qubits = draws
        .into_iter()
        .map(|(p, eps0)| QubitInstance {
            delta_ghz: p.delta_ghz,
            current_na: p.current_na,
            eps0_prime_ghz: eps0,
            bare_coupling_mhz: gbar * (p.current_na / mean_current_na),
        })
        .collect();
    let ensemble = Ensemble {
        qubits,
        mean_current_na,
        gbar_prime_mhz: gbar,
        seed: spec.seed,
    };
    let stats = ensemble.stats();
    Ok((ensemble, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(t: f64) -> Environment {
        Environment {
            temperature_mk: t,
            gamma_qubit_mhz: 50.0,
        }
    }

    fn qubit() -> QubitInstance {
        QubitInstance {
            delta_ghz: 9.74,
            current_na: 272.0,
            eps0_prime_ghz: 0.0,
            bare_coupling_mhz: 14.3,
        }
    }

    #[test]
    fn degeneracy_point_is_bare() {
        let e = effective_params(&qubit(), 272.0, 0.0, &env(0.0));
        assert_eq!(e.omega_ghz, 9.74);
        assert_eq!(e.coupling_mhz, 14.3);
        assert_eq!(e.gamma_mhz, 50.0);
        assert_eq!(e.polarization, 1.0);
    }

    #[test]
    fn bias_adds_flux_and_disorder_terms() {
        let mut q = qubit();
        q.eps0_prime_ghz = 1.5;
        let e = effective_params(&q, 250.0, 1000.0, &env(0.0));
        let eps = 2.0 * 272.0 * 1e-3 * crate::units::GHZ_PER_NA_PHI0 + 1.5 * 272.0 / 250.0;
        assert!((e.omega_ghz - (9.74f64.powi(2) + eps * eps).sqrt()).abs() < 1e-12);
        assert!(e.coupling_mhz < 14.3);
    }

    #[test]
    fn computed_coupling_matches_inductive_estimate() {
        // M = 10 pH, L = 100 nH, I = 250 nA, ω_r/2π = 5.5 GHz → g′/2π ≈ 16 MHz
        let c = CouplingGeometry {
            mutual_inductance_ph: 10.0,
            resonator_inductance_nh: 100.0,
            gbar_prime_mhz: None,
        };
        let g = c.gbar_prime_mhz(250.0, 5.5);
        let w = 2.0 * std::f64::consts::PI * 5.5e9;
        let oracle = 10e-12 * 250e-9 * (w / (2.0 * 1.054_571_817e-34 * 100e-9)).sqrt() / (2.0 * std::f64::consts::PI) / 1e6;
        assert!((g / oracle - 1.0).abs() < 1e-9);
        assert!((g - 16.1).abs() < 0.1);
    }

    #[test]
    fn streams_are_independent_of_order() {
        let spec = DisorderSpec {
            n_qubits: 10,
            alpha_mean: 0.63,
            alpha_sigma: 0.02,
            beta_means: [1.0, 1.0],
            beta_sigmas: [0.03, 0.03],
            eps0_sigma_ghz: 2.0,
            seed: 99,
        };
        let forward: Vec<_> = (0..10).map(|j| draw_qubit(&spec, j)).collect();
        let backward: Vec<_> = (0..10).rev().map(|j| draw_qubit(&spec, j)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        assert_ne!(forward[0], forward[1]);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = DisorderSpec {
            n_qubits: 1,
            alpha_mean: 0.63,
            alpha_sigma: 0.0,
            beta_means: [1.0, 1.0],
            beta_sigmas: [0.0, 0.0],
            eps0_sigma_ghz: 0.0,
            seed: 1,
        };
        assert!(spec.validate().is_ok());
        spec.alpha_sigma = 0.2;
        assert!(spec.validate().is_err());
        spec.alpha_sigma = -0.01;
        assert!(spec.validate().is_err());
        spec.alpha_sigma = 0.0;
        spec.n_qubits = 0;
        assert!(spec.validate().is_err());
    }
}
