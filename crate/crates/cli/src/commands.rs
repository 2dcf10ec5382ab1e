use std::path::{Path, PathBuf};

use fluxens::circuit::{self, JunctionGeometry};
use fluxens::ensemble::{Ensemble, EnsembleStats};
use fluxens::fitting::extract_profile;
use fluxens::io::{self, TableWriter};
use fluxens::scenario::{Scenario, TEMPERATURE_SERIES_MK};
use fluxens::spectroscopy::{sweep, TransmissionMap};
use fluxens::{Error, Result};

use crate::{Command, FitArgs, ReproArgs, ScenarioArgs, SolveArgs, Target};

const DEFAULT_OUT_DIR: &str = "fluxens-out";
const CURVE_VERSION: u32 = 1;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve(a) => solve(a),
        Command::Sample(a) => sample(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Fit(a) => fit(a),
        Command::Repro(a) => repro(a),
    }
}

/// `FLUXENS_CACHE_DIR`, else a directory under the system temp dir.
fn cache_dir() -> PathBuf {
    std::env::var_os("FLUXENS_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fluxens-cache"))
}

fn out_dir(arg: Option<PathBuf>, scenario: Option<&Scenario>) -> PathBuf {
    arg.or_else(|| scenario.and_then(|s| s.scan.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn temperature_tag(t: f64) -> String {
    format!("T{t}mK")
}

fn base_scenario(a: &ScenarioArgs) -> Result<Scenario> {
    match (&a.config, &a.scenario) {
        (Some(path), _) => Scenario::load(path),
        (None, Some(name)) => Ok(Scenario::builtin(name).expect("clap restricts names")),
        (None, None) => Ok(Scenario::sample_a()),
    }
}

/// Applies flag overrides and pins the calibrated E_J, so that the result
/// reproduces the run when saved and reloaded.
fn resolve(mut s: Scenario, a: &ScenarioArgs) -> Result<Scenario> {
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(e) = a.engine {
        s.scan.engine = e.into();
    }
    if let Some(n) = a.n_qubits {
        s.disorder.n_qubits = n;
    }
    if let Some(t) = &a.temperatures {
        s.scan.temperatures_mk = t.clone();
    }
    if let Some(p) = &a.drive_profile {
        s.scan.drive_profile = Some(p.clone());
    }
    if let Some(p) = &a.ensemble_in {
        s.scan.ensemble_in = Some(p.clone());
    }
    s.scan.out_dir = None;
    s.validate()?;
    if s.junction.ej_ghz.is_none() {
        s.junction.ej_ghz = Some(s.ej_ghz()?);
    }
    Ok(s)
}

fn load_ensemble(s: &Scenario, ensemble_out: Option<&Path>) -> Result<(Ensemble, EnsembleStats)> {
    let (e, stats) = s.ensemble(Some(&cache_dir()))?;
    if let Some(path) = ensemble_out {
        e.save(path)?;
    }
    Ok((e, stats))
}

fn print_stats(stats: &EnsembleStats) {
    println!("n_qubits = {}", stats.n);
    println!("delta_mean_ghz = {}", stats.delta_mean_ghz);
    println!("delta_sigma_ghz = {}", stats.delta_sigma_ghz);
    println!("current_mean_na = {}", stats.current_mean_na);
    println!("current_sigma_na = {}", stats.current_sigma_na);
    println!("coupling_mean_mhz = {}", stats.coupling_mean_mhz);
    println!("coupling_sigma_mhz = {}", stats.coupling_sigma_mhz);
}

fn solve(a: SolveArgs) -> Result<()> {
    let mut s = match &a.config {
        Some(p) => Scenario::load(p)?,
        None => Scenario::sample_a(),
    };
    if let Some(c) = a.charge_cutoff {
        s.junction.charge_cutoff = c;
    }
    let ej_ghz = match a.ej_ghz {
        Some(ej) => ej,
        None => s.ej_ghz()?,
    };
    let geom = JunctionGeometry {
        alpha: a.alpha.unwrap_or(s.disorder.alpha_mean),
        beta1: a.beta1,
        beta2: a.beta2,
        ej_over_ec: s.junction.ej_over_ec,
        ej_ghz,
    };
    let sol = circuit::solve_circuit(&geom, a.flux_bias, s.solver_grid(), a.levels)?;
    let tl = circuit::two_level_params(&geom, s.solver_grid())?;
    println!("ej_ghz = {ej_ghz}");
    println!("flux_bias = {}", sol.flux_bias);
    println!("delta_ghz = {}", sol.delta);
    println!("slope_current_na = {}", sol.persistent_current);
    println!("two_level_current_na = {}", tl.current_na);
    let levels: Vec<String> = sol.level_energies.iter().map(|&e| io::fmt_f64(e)).collect();
    println!("levels_ghz = [{}]", levels.join(", "));
    Ok(())
}

fn sample(a: ScenarioArgs) -> Result<()> {
    let s = resolve(base_scenario(&a)?, &a)?;
    let dir = out_dir(a.out_dir.clone(), None);
    let target = a.ensemble_out.clone().unwrap_or_else(|| dir.join("ensemble.csv"));
    let (_, stats) = load_ensemble(&s, Some(&target))?;
    s.save(&dir.join("resolved-config.toml"))?;
    print_stats(&stats);
    Ok(())
}

/// Maps for every configured temperature, written with their shift files.
fn run_maps(s: &Scenario, ensemble: &Ensemble, dir: &Path, heatmap: bool) -> Result<Vec<TransmissionMap>> {
    let flux = s.flux_grid().points();
    let freq = s.freq_grid().points();
    let drive = s.drive_profile()?;
    let mut maps = Vec::new();
    for &t in &s.scan.temperatures_mk {
        let map = sweep(&flux, &freq, ensemble, &s.resonator, &s.environment(t), &drive, s.scan.engine)?;
        let tag = temperature_tag(t);
        map.save(&dir.join(format!("map-{tag}.csv")))?;
        io::write_file(&dir.join(format!("shifts-{tag}.csv")), &map.shifts_csv())?;
        if heatmap {
            io::write_file(&dir.join(format!("heatmap-{tag}.dat")), &map.heatmap_text())?;
        }
        log::info!("wrote map for {t} mK");
        maps.push(map);
    }
    Ok(maps)
}

fn sweep_cmd(a: ScenarioArgs) -> Result<()> {
    let base = base_scenario(&a)?;
    let dir = out_dir(a.out_dir.clone(), Some(&base));
    let s = resolve(base, &a)?;
    let (ensemble, _) = load_ensemble(&s, a.ensemble_out.as_deref())?;
    run_maps(&s, &ensemble, &dir, false)?;
    s.save(&dir.join("resolved-config.toml"))?;
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let map = TransmissionMap::load(&a.map)?;
    let extraction = extract_profile(&map, a.fit_offset)?;
    let dir = out_dir(a.out_dir, None);
    extraction.profile.save(&dir.join("profile.csv"), map.seed)?;
    io::write_file(&dir.join("fit-report.csv"), &extraction.report_csv(map.seed))?;
    let rejected = extraction.rejected().count();
    println!("columns = {}", extraction.fits.len());
    println!("rejected = {rejected}");
    Ok(())
}

/// Fitted peak shift and dispersive shift versus flux, all temperatures in
/// one file.
fn shift_curves(maps: &[TransmissionMap], s: &Scenario) -> Result<String> {
    let mut w = TableWriter::new(
        "curve",
        CURVE_VERSION,
        &[("seed", s.seed.to_string())],
        &[
            "temperature_mk",
            "flux_uPhi0",
            "fitted_shift_mhz",
            "delta_omega_r_mhz",
            "delta_gamma_r_mhz",
            "converged",
        ],
    );
    for map in maps {
        let fits = match extract_profile(map, false) {
            Ok(x) => x.fits,
            Err(Error::EmptyProfile) => Vec::new(),
            Err(e) => return Err(e),
        };
        for (i, shift) in map.shifts.iter().enumerate() {
            let fit = fits.get(i).map(|(_, f)| f);
            let fitted = fit
                .filter(|f| f.converged)
                .map_or(f64::NAN, |f| (f.center_ghz - s.resonator.omega_r_ghz) * 1e3);
            w.row(&[
                io::fmt_f64(map.temperature_mk),
                io::fmt_f64(map.flux_uphi0[i]),
                io::fmt_f64(fitted),
                io::fmt_f64(shift.delta_omega_r_mhz),
                io::fmt_f64(shift.delta_gamma_r_mhz),
                fit.is_some_and(|f| f.converged).to_string(),
            ]);
        }
    }
    Ok(w.finish())
}

fn repro(a: ReproArgs) -> Result<()> {
    let base = match a.target {
        Target::SampleA => Scenario::sample_a(),
        Target::SampleB => Scenario::sample_b(),
        Target::TempSweep => {
            let mut s = Scenario::sample_b();
            s.scan.temperatures_mk = TEMPERATURE_SERIES_MK.to_vec();
            s
        }
    };
    let args = ScenarioArgs {
        config: None,
        scenario: None,
        seed: a.seed,
        engine: a.engine,
        n_qubits: a.n_qubits,
        temperatures: a.temperatures,
        drive_profile: a.drive_profile,
        ensemble_in: a.ensemble_in,
        ensemble_out: a.ensemble_out,
        out_dir: None,
    };
    let dir = out_dir(a.out_dir, None);
    let s = resolve(base, &args)?;
    let (ensemble, stats) = load_ensemble(&s, args.ensemble_out.as_deref())?;
    let maps = run_maps(&s, &ensemble, &dir, true)?;
    io::write_file(&dir.join("shift-curves.csv"), &shift_curves(&maps, &s)?)?;
    s.save(&dir.join("resolved-config.toml"))?;

    print_stats(&stats);
    for map in &maps {
        let i = nearest_index(&map.flux_uphi0, 0.0);
        println!(
            "degeneracy_shift_mhz[{} mK] = {}",
            map.temperature_mk,
            map.shifts[i].delta_omega_r_mhz
        );
    }
    Ok(())
}

fn nearest_index(xs: &[f64], x: f64) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map_or(0, |(i, _)| i)
}
