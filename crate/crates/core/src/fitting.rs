//! Lorentzian fits of transmission spectra and flux-dependent drive profiles.
//!
//! The fitted model is f(ω) = Λ² / ((ω − ω_av)² + γ²), optionally plus a
//! constant baseline. Fits run in coordinates scaled by the initial peak
//! position, half-width and height, which makes them equivariant under
//! shifting the frequency grid and scaling the intensities.
//!
//! Damping follows Marquardt: the normal matrix diagonal is scaled by
//! (1 + μ); μ starts at 1e-3, drops tenfold after an accepted step and rises
//! tenfold after a rejected one. Iteration stops once the relative parameter
//! step falls below 1e-10 or after 200 iterations.

use std::cmp::Ordering;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::io::{self, TableWriter};
use crate::spectroscopy::TransmissionMap;
use crate::{par, Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const PARAMETER_TOLERANCE: f64 = 1e-10;
/// Largest gradient norm (scaled units) a converged fit may have.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
const MIN_POINTS: usize = 5;
const MAX_DAMPING: f64 = 1e16;

pub const PROFILE_FORMAT_VERSION: u32 = 1;
const PROFILE_COLUMNS: [&str; 2] = ["flux_uPhi0", "lambda"];
const REPORT_COLUMNS: [&str; 6] = [
    "flux_uPhi0",
    "lambda",
    "center_ghz",
    "width_mhz",
    "rms_residual",
    "converged",
];

/// Why a fit did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitIssue {
    TooFewPoints,
    NonFinite,
    Flat,
    PeakAtEdge,
    IterationLimit,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    pub amplitude: f64,
    pub center_ghz: f64,
    pub width_mhz: f64,
    pub offset: f64,
    pub rms_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of Jᵀr at the returned parameters, in scaled units.
    pub gradient_norm: f64,
    pub issue: Option<FitIssue>,
}

impl LorentzianFit {
    fn failed(issue: FitIssue) -> Self {
        Self {
            amplitude: f64::NAN,
            center_ghz: f64::NAN,
            width_mhz: f64::NAN,
            offset: 0.0,
            rms_residual: f64::NAN,
            converged: false,
            iterations: 0,
            gradient_norm: f64::NAN,
            issue: Some(issue),
        }
    }

    pub fn evaluate(&self, freq_ghz: f64) -> f64 {
        let x = freq_ghz - self.center_ghz;
        let w = self.width_mhz * 1e-3;
        self.amplitude * self.amplitude / (x * x + w * w) + self.offset
    }
}

/// Model values and Jacobian in scaled coordinates for p = (a, c, w[, b]).
fn model(u: &[f64], p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let (a, c, w) = (p[0], p[1], p[2]);
    let n = u.len();
    let mut f = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, p.len());
    for (i, &ui) in u.iter().enumerate() {
        let x = ui - c;
        let d = x * x + w * w;
        let a2 = a * a;
        f[i] = a2 / d + p.get(3).copied().unwrap_or(0.0);
        j[(i, 0)] = 2.0 * a / d;
        j[(i, 1)] = 2.0 * a2 * x / (d * d);
        j[(i, 2)] = -2.0 * a2 * w / (d * d);
        if p.len() == 4 {
            j[(i, 3)] = 1.0;
        }
    }
    (f, j)
}

/// Half width at half maximum around index `peak`, by linear interpolation
/// of the first crossing on each side.
fn half_width(xs: &[f64], ys: &[f64], peak: usize, base: f64) -> Option<f64> {
    let half = base + 0.5 * (ys[peak] - base);
    let cross = |range: &mut dyn Iterator<Item = usize>| {
        for i in range {
            let k = if i < peak { i + 1 } else { i - 1 };
            if ys[i] <= half {
                let t = (ys[k] - half) / (ys[k] - ys[i]);
                return Some((xs[k] + t * (xs[i] - xs[k]) - xs[peak]).abs());
            }
        }
        None
    };
    let left = cross(&mut (0..peak).rev());
    let right = cross(&mut (peak + 1..xs.len()));
    match (left, right) {
        (Some(l), Some(r)) => Some(0.5 * (l + r)),
        (l, r) => l.or(r),
    }
}

/// Least-squares fit of Λ²/((ω − ω_av)² + γ²) (+ b when `with_offset`).
/// Degenerate data yields a non-converged fit, never an error.
pub fn fit_lorentzian(freqs: &[f64], intensities: &[f64], with_offset: bool) -> LorentzianFit {
    let n = freqs.len().min(intensities.len());
    if n < MIN_POINTS {
        return LorentzianFit::failed(FitIssue::TooFewPoints);
    }
    let (xs, ys) = (&freqs[..n], &intensities[..n]);
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return LorentzianFit::failed(FitIssue::NonFinite);
    }
    let (peak, &ymax) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    if ymax <= ymin || ymax <= 0.0 {
        return LorentzianFit::failed(FitIssue::Flat);
    }
    if peak == 0 || peak == n - 1 {
        return LorentzianFit::failed(FitIssue::PeakAtEdge);
    }
    let base = if with_offset { ymin } else { 0.0 };
    let span = xs[n - 1] - xs[0];
    let sx = half_width(xs, ys, peak, base).filter(|w| *w > 0.0).unwrap_or(span / 4.0);
    let (x0, sy) = (xs[peak], ymax);
    let u: Vec<f64> = xs.iter().map(|&x| (x - x0) / sx).collect();
    let v = DVector::from_iterator(n, ys.iter().map(|&y| y / sy));

    let mut p: Vec<f64> = vec![(1.0 - base / sy).sqrt(), 0.0, 1.0];
    if with_offset {
        p.push(base / sy);
    }
    let (f, mut jac) = model(&u, &p);
    let mut r = &f - &v;
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut issue = Some(FitIssue::IterationLimit);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;
        let mut step = None;
        while mu < MAX_DAMPING {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-30);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let (tf, tj) = model(&u, &trial);
            let tr = tf - &v;
            let tc = tr.norm_squared();
            if tc.is_finite() && tc <= cost {
                mu = (mu / 10.0).max(1e-15);
                step = Some((delta, trial, tj, tr, tc));
                break;
            }
            mu *= 10.0;
        }
        let Some((delta, trial, tj, tr, tc)) = step else {
            issue = Some(FitIssue::Stalled);
            break;
        };
        let pnorm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        p = trial;
        jac = tj;
        r = tr;
        cost = tc;
        if delta.norm() <= PARAMETER_TOLERANCE * (pnorm + PARAMETER_TOLERANCE) {
            issue = None;
            break;
        }
    }
    let gradient_norm = (jac.transpose() * &r).norm();
    // at an exact minimum rounding can stall the damping loop
    if issue == Some(FitIssue::Stalled) && gradient_norm <= GRADIENT_TOLERANCE {
        issue = None;
    }
    if issue.is_none() && gradient_norm > GRADIENT_TOLERANCE {
        issue = Some(FitIssue::Stalled);
    }
    LorentzianFit {
        amplitude: sy.sqrt() * p[0].abs() * sx,
        center_ghz: x0 + p[1] * sx,
        width_mhz: p[2].abs() * sx * 1e3,
        offset: p.get(3).map_or(0.0, |b| b * sy),
        rms_residual: sy * (cost / n as f64).sqrt(),
        converged: issue.is_none(),
        iterations,
        gradient_norm,
        issue,
    }
}

/// Piecewise-linear λ(Φ) through knots, constant beyond the end knots. With
/// no knots λ ≡ 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriveProfile {
    knots: Vec<(f64, f64)>,
}

impl DriveProfile {
    pub fn constant(lambda: f64) -> Result<Self> {
        Self::from_knots(vec![(0.0, lambda)])
    }

    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.iter().any(|&(f, l)| !(f.is_finite() && l.is_finite() && l >= 0.0)) {
            return Err(Error::validation("drive profile", "lambda must be finite and >= 0"));
        }
        if knots.windows(2).any(|w| w[1].0.partial_cmp(&w[0].0) != Some(Ordering::Greater)) {
            return Err(Error::validation("drive profile", "flux knots must increase strictly"));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn lambda_at(&self, flux_uphi0: f64) -> f64 {
        let k = &self.knots;
        match k.len() {
            0 => 1.0,
            1 => k[0].1,
            _ => {
                let i = k.partition_point(|&(f, _)| f <= flux_uphi0);
                if i == 0 {
                    k[0].1
                } else if i == k.len() {
                    k[k.len() - 1].1
                } else {
                    let ((f0, l0), (f1, l1)) = (k[i - 1], k[i]);
                    l0 + (l1 - l0) * (flux_uphi0 - f0) / (f1 - f0)
                }
            }
        }
    }

    /// CSV text; `seed` names the run the profile came from.
    pub fn to_csv(&self, seed: u64) -> String {
        let mut w = TableWriter::new(
            "profile",
            PROFILE_FORMAT_VERSION,
            &[("seed", seed.to_string())],
            &PROFILE_COLUMNS,
        );
        for &(f, l) in &self.knots {
            w.numeric_row(&[f, l]);
        }
        w.finish()
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        io::write_file(path, &self.to_csv(seed))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let table = io::read_table(path, "profile", PROFILE_FORMAT_VERSION, &PROFILE_COLUMNS)?;
        let knots = table.rows.iter().map(|(_, r)| (r[0], r[1])).collect();
        Self::from_knots(knots).map_err(|e| table.parse_error(2, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileExtraction {
    pub profile: DriveProfile,
    /// Every column's fit, by flux.
    pub fits: Vec<(f64, LorentzianFit)>,
}

impl ProfileExtraction {
    pub fn rejected(&self) -> impl Iterator<Item = &(f64, LorentzianFit)> {
        self.fits.iter().filter(|(_, f)| !f.converged)
    }

    pub fn report_csv(&self, seed: u64) -> String {
        let mut w = TableWriter::new(
            "fit",
            PROFILE_FORMAT_VERSION,
            &[("seed", seed.to_string())],
            &REPORT_COLUMNS,
        );
        for (flux, f) in &self.fits {
            w.row(&[
                io::fmt_f64(*flux),
                io::fmt_f64(f.amplitude),
                io::fmt_f64(f.center_ghz),
                io::fmt_f64(f.width_mhz),
                io::fmt_f64(f.rms_residual),
                f.converged.to_string(),
            ]);
        }
        w.finish()
    }
}

/// Fits every flux column and collects Λ(Φ) from the converged ones.
pub fn extract_profile(map: &TransmissionMap, with_offset: bool) -> Result<ProfileExtraction> {
    if map.freq_ghz.len() < MIN_POINTS {
        return Err(Error::validation(
            "map",
            format!("need at least {MIN_POINTS} frequency points per column"),
        ));
    }
    let fits = par::map_indexed(map.flux_uphi0.len(), |i| {
        (map.flux_uphi0[i], fit_lorentzian(&map.freq_ghz, map.column(i), with_offset))
    });
    let knots: Vec<(f64, f64)> = fits
        .iter()
        .filter(|(_, f)| f.converged)
        .map(|(flux, f)| (*flux, f.amplitude))
        .collect();
    if knots.is_empty() {
        return Err(Error::EmptyProfile);
    }
    for (flux, f) in fits.iter().filter(|(_, f)| !f.converged) {
        log::warn!("fit at {flux} uPhi0 did not converge: {:?}", f.issue);
    }
    Ok(ProfileExtraction {
        profile: DriveProfile::from_knots(knots)?,
        fits,
    })
}
