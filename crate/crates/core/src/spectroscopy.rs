//! Transmission of the driven resonator coupled to the ensemble.
//!
//! Two engines share the effective qubit parameters:
//!
//! * `Approx`: a Lorentzian centred at ω_r + δω_r with half-width γ_r + δγ_r,
//!   from the thermal dispersive sums of [`thermal_shift`];
//! * `Exact`: the linear-response amplitude
//!   a = λ / (ω − ω_r + iγ_r − Σ tanh_j g_j² / (ω − ω_j + iγ_j)).
//!
//! Sums run in ascending qubit order with compensated accumulation, so
//! results do not depend on how flux columns are scheduled.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, EffectiveQubit};
use crate::fitting::DriveProfile;
use crate::io::{self, TableWriter};
use crate::sum::{CompensatedComplexSum, CompensatedSum};
use crate::units::{ghz_to_mhz, mhz_to_ghz};
use crate::{par, Error, Result};

pub const MAP_FORMAT_VERSION: u32 = 1;
const MAP_COLUMNS: [&str; 3] = ["flux_uPhi0", "freq_ghz", "intensity"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorParams {
    pub omega_r_ghz: f64,
    /// Bare half-linewidth γ_r.
    pub gamma_r_mhz: f64,
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r_ghz > 0.0 && self.gamma_r_mhz > 0.0 && self.omega_r_ghz.is_finite() && self.gamma_r_mhz.is_finite()) {
            return Err(Error::validation("resonator", "frequency and linewidth must be positive"));
        }
        if mhz_to_ghz(self.gamma_r_mhz) > self.omega_r_ghz / 100.0 {
            log::warn!(
                "resonator linewidth {} MHz is not small against {} GHz",
                self.gamma_r_mhz,
                self.omega_r_ghz
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub temperature_mk: f64,
    /// Zero-temperature qubit relaxation rate, taken as a half-width.
    pub gamma_qubit_mhz: f64,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_mk >= 0.0 && self.temperature_mk.is_finite()) {
            return Err(Error::validation("environment", "temperature must be >= 0"));
        }
        if !(self.gamma_qubit_mhz > 0.0 && self.gamma_qubit_mhz.is_finite()) {
            return Err(Error::validation("environment", "gamma_qubit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePoint {
    pub omega_ghz: f64,
    pub lambda: f64,
}

/// One qubit's contribution to the shift and broadening, in MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftTerm {
    pub shift_mhz: f64,
    pub broadening_mhz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftResult {
    pub delta_omega_r_mhz: f64,
    /// Resonator broadening. Some derivations label the same quantity
    /// δγ_qubit; it is one resonator half-width correction either way.
    pub delta_gamma_r_mhz: f64,
    pub per_qubit: Option<Vec<ShiftTerm>>,
}

fn shift_term(q: &EffectiveQubit, omega_r_ghz: f64) -> ShiftTerm {
    let g = mhz_to_ghz(q.coupling_mhz);
    let gamma = mhz_to_ghz(q.gamma_mhz);
    let det = q.omega_ghz - omega_r_ghz;
    let denom = det * det + gamma * gamma;
    let w = g * g / denom;
    ShiftTerm {
        shift_mhz: ghz_to_mhz(-w * det * q.polarization),
        broadening_mhz: ghz_to_mhz(w * gamma),
    }
}

/// Dispersive shift and broadening from precomputed effective parameters.
pub fn shift_from_effective(qubits: &[EffectiveQubit], res: &ResonatorParams, keep_terms: bool) -> ShiftResult {
    let mut shift = CompensatedSum::new();
    let mut broad = CompensatedSum::new();
    let mut terms = keep_terms.then(|| Vec::with_capacity(qubits.len()));
    for q in qubits {
        let t = shift_term(q, res.omega_r_ghz);
        shift.add(t.shift_mhz);
        broad.add(t.broadening_mhz);
        if let Some(v) = terms.as_mut() {
            v.push(t);
        }
    }
    ShiftResult {
        delta_omega_r_mhz: shift.value(),
        delta_gamma_r_mhz: broad.value(),
        per_qubit: terms,
    }
}

/// δω_r = −Σ g_j² (ω_j − ω_r) tanh_j / ((ω_j − ω_r)² + γ_j²) and
/// δγ_r = Σ g_j² γ_j / ((ω_j − ω_r)² + γ_j²), with tanh_j the thermal
/// polarization tanh(hω_j/2k_BT) and γ_j the Bose-enhanced qubit width.
pub fn thermal_shift(
    ensemble: &Ensemble,
    flux_offset_uphi0: f64,
    res: &ResonatorParams,
    env: &Environment,
    keep_terms: bool,
) -> ShiftResult {
    shift_from_effective(&ensemble.effective(flux_offset_uphi0, env), res, keep_terms)
}

/// λ² / ((ω − ω_r − δω_r)² + (γ_r + δγ_r)²), frequencies in GHz.
pub fn transmission_approx(d: DrivePoint, shift: &ShiftResult, res: &ResonatorParams) -> f64 {
    let center = res.omega_r_ghz + mhz_to_ghz(shift.delta_omega_r_mhz);
    let width = mhz_to_ghz(res.gamma_r_mhz + shift.delta_gamma_r_mhz);
    let x = d.omega_ghz - center;
    d.lambda * d.lambda / (x * x + width * width)
}

/// Steady-state amplitude ⟨a⟩ (frequencies in GHz) for the given effective
/// qubits; the intensity is its squared magnitude.
pub fn transmission_exact(d: DrivePoint, qubits: &[EffectiveQubit], res: &ResonatorParams) -> Complex64 {
    let mut self_energy = CompensatedComplexSum::new();
    for q in qubits {
        let g = mhz_to_ghz(q.coupling_mhz);
        let z = Complex64::new(d.omega_ghz - q.omega_ghz, mhz_to_ghz(q.gamma_mhz));
        self_energy.add(q.polarization * g * g / z);
    }
    let denom = Complex64::new(d.omega_ghz - res.omega_r_ghz, mhz_to_ghz(res.gamma_r_mhz)) - self_energy.value();
    d.lambda / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Approx,
    Exact,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Approx => "approx",
            Engine::Exact => "exact",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approx" => Ok(Engine::Approx),
            "exact" => Ok(Engine::Exact),
            _ => Err(Error::validation("engine", format!("expected approx or exact, got '{s}'"))),
        }
    }
}

/// Inclusive grid start, start + step, ... up to stop (within 1e-9 steps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl LinearGrid {
    pub fn validate(&self, what: &'static str) -> Result<()> {
        let ok = self.start.is_finite() && self.stop.is_finite() && self.step > 0.0 && self.stop >= self.start;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(what, format!("need step > 0 and start <= stop, got {self:?}")))
        }
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Location of the maximum of sampled data, refined by a parabola through
/// the largest sample and its neighbours. At the grid edge the edge point is
/// returned unrefined.
pub fn grid_peak(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (i, _) = ys
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if i == 0 || i + 1 == xs.len() {
        return Some(xs[i]);
    }
    let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
    let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == 0.0 {
        return Some(x1);
    }
    Some(x1 - 0.5 * num / den)
}

/// Maximizer of `f` on [lo, hi]: a scan over `samples` points followed by a
/// golden-section search in the bracket around the best sample.
pub fn refine_peak<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, samples: usize) -> f64 {
    let n = samples.max(3);
    let h = (hi - lo) / (n - 1) as f64;
    let best = (0..n)
        .map(|i| (i, f(lo + i as f64 * h)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(i, _)| i);
    let (mut a, mut b) = (lo + best.saturating_sub(1) as f64 * h, lo + (best + 1).min(n - 1) as f64 * h);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// |T(ω, Φ)|² on a flux × frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap {
    pub flux_uphi0: Vec<f64>,
    pub freq_ghz: Vec<f64>,
    /// Flux-major: column `i` is `intensity[i * freq.len()..][..freq.len()]`.
    pub intensity: Vec<f64>,
    pub engine: Engine,
    pub seed: u64,
    pub temperature_mk: f64,
    /// Dispersive shift and broadening per flux point (empty for imported maps).
    pub shifts: Vec<ShiftResult>,
}

impl TransmissionMap {
    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.freq_ghz.len();
        &self.intensity[i * n..(i + 1) * n]
    }

    pub fn to_csv(&self) -> String {
        let meta = [
            ("seed", self.seed.to_string()),
            ("engine", self.engine.to_string()),
            ("temperature_mk", io::fmt_f64(self.temperature_mk)),
        ];
        let mut w = TableWriter::new("map", MAP_FORMAT_VERSION, &meta, &MAP_COLUMNS);
        for (i, &flux) in self.flux_uphi0.iter().enumerate() {
            for (&f, &v) in self.freq_ghz.iter().zip(self.column(i)) {
                w.numeric_row(&[flux, f, v]);
            }
        }
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_file(path, &self.to_csv())
    }

    /// Reads a map file; rows must form a complete flux-major grid.
    pub fn load(path: &Path) -> Result<Self> {
        let table = io::read_table(path, "map", MAP_FORMAT_VERSION, &MAP_COLUMNS)?;
        let mut flux: Vec<f64> = Vec::new();
        let mut freq: Vec<f64> = Vec::new();
        let mut intensity = Vec::with_capacity(table.rows.len());
        for (line, r) in &table.rows {
            if flux.last() != Some(&r[0]) {
                if flux.last().is_some_and(|&f| f >= r[0]) {
                    return Err(table.parse_error(*line, "flux values must increase"));
                }
                flux.push(r[0]);
            }
            if flux.len() == 1 {
                if freq.last().is_some_and(|&f| f >= r[1]) {
                    return Err(table.parse_error(*line, "frequencies must increase within a column"));
                }
                freq.push(r[1]);
            } else {
                let k = intensity.len() % freq.len().max(1);
                if freq.get(k) != Some(&r[1]) {
                    return Err(table.parse_error(*line, "frequency grid differs between columns"));
                }
            }
            intensity.push(r[2]);
        }
        if flux.is_empty() || intensity.len() != flux.len() * freq.len() {
            return Err(table.parse_error(table.rows.last().map_or(2, |r| r.0), "incomplete grid"));
        }
        Ok(Self {
            flux_uphi0: flux,
            freq_ghz: freq,
            intensity,
            engine: table
                .meta
                .get("engine")
                .map(|e| e.parse())
                .transpose()?
                .unwrap_or_default(),
            seed: table.meta_value("seed")?.unwrap_or(0),
            temperature_mk: table.meta_value("temperature_mk")?.unwrap_or(f64::NAN),
            shifts: Vec::new(),
        })
    }

    /// Parabolically refined peak frequency of every column, GHz.
    pub fn peak_frequencies(&self) -> Vec<Option<f64>> {
        (0..self.flux_uphi0.len())
            .map(|i| grid_peak(&self.freq_ghz, self.column(i)))
            .collect()
    }

    /// Per-flux dispersive shift and broadening as CSV.
    pub fn shifts_csv(&self) -> String {
        let meta = [
            ("seed", self.seed.to_string()),
            ("temperature_mk", io::fmt_f64(self.temperature_mk)),
        ];
        let mut w = TableWriter::new(
            "shift",
            MAP_FORMAT_VERSION,
            &meta,
            &["flux_uPhi0", "delta_omega_r_mhz", "delta_gamma_r_mhz"],
        );
        for (flux, s) in self.flux_uphi0.iter().zip(&self.shifts) {
            w.numeric_row(&[*flux, s.delta_omega_r_mhz, s.delta_gamma_r_mhz]);
        }
        w.finish()
    }

    /// Gnuplot `matrix nonuniform` text: the first row holds the column count
    /// and the flux values, each further row a frequency and its intensities.
    pub fn heatmap_text(&self) -> String {
        let mut out = format!(
            "# fluxens heatmap v{MAP_FORMAT_VERSION} seed={} temperature_mk={}\n\
             # plot 'file' nonuniform matrix with image (x: flux uPhi0, y: freq GHz)\n",
            self.seed,
            io::fmt_f64(self.temperature_mk)
        );
        let mut first = vec![self.flux_uphi0.len().to_string()];
        first.extend(self.flux_uphi0.iter().map(|&x| io::fmt_f64(x)));
        out.push_str(&first.join(" "));
        out.push('\n');
        let n = self.freq_ghz.len();
        for (k, &f) in self.freq_ghz.iter().enumerate() {
            let mut row = vec![io::fmt_f64(f)];
            row.extend((0..self.flux_uphi0.len()).map(|i| io::fmt_f64(self.intensity[i * n + k])));
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Evaluates the map column by column (in parallel when enabled).
pub fn sweep(
    flux_uphi0: &[f64],
    freq_ghz: &[f64],
    ensemble: &Ensemble,
    res: &ResonatorParams,
    env: &Environment,
    drive: &DriveProfile,
    engine: Engine,
) -> Result<TransmissionMap> {
    res.validate()?;
    env.validate()?;
    if flux_uphi0.is_empty() || freq_ghz.is_empty() {
        return Err(Error::validation("scan", "flux and frequency grids must be non-empty"));
    }
    for w in [flux_uphi0, freq_ghz] {
        if w.windows(2).any(|p| p[1].partial_cmp(&p[0]) != Some(Ordering::Greater)) {
            return Err(Error::validation("scan", "grid values must increase strictly"));
        }
    }
    let columns = par::map_indexed(flux_uphi0.len(), |i| {
        let flux = flux_uphi0[i];
        let lambda = drive.lambda_at(flux);
        let eff = ensemble.effective(flux, env);
        let shift = shift_from_effective(&eff, res, false);
        let values: Vec<f64> = freq_ghz
            .iter()
            .map(|&w| {
                let d = DrivePoint { omega_ghz: w, lambda };
                match engine {
                    Engine::Approx => transmission_approx(d, &shift, res),
                    Engine::Exact => transmission_exact(d, &eff, res).norm_sqr(),
                }
            })
            .collect();
        (values, shift)
    });
    let mut intensity = Vec::with_capacity(flux_uphi0.len() * freq_ghz.len());
    let mut shifts = Vec::with_capacity(flux_uphi0.len());
    for (v, s) in columns {
        intensity.extend(v);
        shifts.push(s);
    }
    Ok(TransmissionMap {
        flux_uphi0: flux_uphi0.to_vec(),
        freq_ghz: freq_ghz.to_vec(),
        intensity,
        engine,
        seed: ensemble.seed,
        temperature_mk: env.temperature_mk,
        shifts,
    })
}
