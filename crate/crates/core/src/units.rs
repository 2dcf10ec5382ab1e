//! Physical constants (exact SI values) and unit conversions.

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Superconducting flux quantum h/2e, Wb.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

/// Energy in GHz·h of a 1 nA current threading one flux quantum.
pub const GHZ_PER_NA_PHI0: f64 = FLUX_QUANTUM / PLANCK * 1e-18;

pub const MHZ_PER_GHZ: f64 = 1e3;

/// hν / k_B T for a frequency in GHz and a temperature in mK.
pub fn thermal_ratio(freq_ghz: f64, temperature_mk: f64) -> f64 {
    PLANCK * freq_ghz * 1e9 / (BOLTZMANN * temperature_mk * 1e-3)
}

/// Bose-Einstein occupation 1/(e^x − 1) at frequency `freq_ghz`; zero at T = 0.
pub fn bose_occupation(freq_ghz: f64, temperature_mk: f64) -> f64 {
    if temperature_mk <= 0.0 {
        return 0.0;
    }
    1.0 / thermal_ratio(freq_ghz, temperature_mk).exp_m1()
}

/// Thermal polarization tanh(hν / 2k_B T) = −⟨σ_z⟩; one at T = 0.
pub fn thermal_polarization(freq_ghz: f64, temperature_mk: f64) -> f64 {
    if temperature_mk <= 0.0 {
        return 1.0;
    }
    (0.5 * thermal_ratio(freq_ghz, temperature_mk)).tanh()
}

pub fn ghz_to_mhz(x: f64) -> f64 {
    x * MHZ_PER_GHZ
}

pub fn mhz_to_ghz(x: f64) -> f64 {
    x / MHZ_PER_GHZ
}

/// Flux offset in µΦ₀ to a fraction of Φ₀.
pub fn uphi0_to_fraction(x: f64) -> f64 {
    x * 1e-6
}

/// Energy bias 2·I·δΦ in GHz for a current in nA and flux offset in µΦ₀.
pub fn energy_bias_ghz(current_na: f64, flux_offset_uphi0: f64) -> f64 {
    2.0 * current_na * uphi0_to_fraction(flux_offset_uphi0) * GHZ_PER_NA_PHI0
}
