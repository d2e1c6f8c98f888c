//! Command implementations. Each command takes the typed run configuration,
//! computes through the library, and writes its artifacts into the output
//! directory, returning the list of files it wrote.

use crate::config::{read_xy_csv, RunConfig};
use crate::fault::{CliError, CliResult};
use crate::output::{out_path, svg_line_plot, write_csv, Report};
use ladderspec::doppler::{absorption_map, average_coherence};
use ladderspec::lockin::{error_signal, lock_metrics};
use ladderspec::noisefit::{fit, model_by_name, MODEL_NAMES};
use ladderspec::spectra::{
    eit_spectrum, feature_metrics, scan_n, system_at, tpat_spectrum, SpectrumMode,
};
use ladderspec::units::angular_to_hz;
use ladderspec::{
    LadderSystem, Leg, LockResult, ScannedDetuning, TransmissionSpectrum, VelocityGrid,
};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

/// File-name tag for a spectrum mode.
fn mode_tag(mode: SpectrumMode) -> &'static str {
    match mode {
        SpectrumMode::Eit => "eit",
        SpectrumMode::Tpat => "tpat",
    }
}

/// Compute one transmission spectrum and write its CSV, metrics report, and
/// optional plot.
pub fn cmd_spectrum(
    rc: &RunConfig,
    mode: SpectrumMode,
    out_dir: &Path,
    plot: bool,
) -> CliResult<Vec<PathBuf>> {
    let raw = rc
        .scan
        .as_ref()
        .ok_or_else(|| CliError::usage("[scan]: required for the spectrum command"))?;
    let spec = match mode {
        SpectrumMode::Eit => {
            let scan = raw.resolve(ScannedDetuning::Lower, "an EIT spectrum")?;
            eit_spectrum(&rc.system, &scan, &rc.grid, &rc.calib)?
        }
        SpectrumMode::Tpat => {
            let scan = raw.resolve(ScannedDetuning::Upper, "a TPAT spectrum")?;
            tpat_spectrum(&rc.system, &scan, &rc.grid, &rc.calib)?
        }
    };
    write_spectrum_files(&spec, rc, out_dir, mode_tag(mode), true, plot)
}

/// Write a spectrum's files under the given tag; shared with scan-n.
fn write_spectrum_files(
    spec: &TransmissionSpectrum,
    rc: &RunConfig,
    out_dir: &Path,
    tag: &str,
    with_metrics: bool,
    plot: bool,
) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();

    let csv = out_path(out_dir, &format!("spectrum_{tag}.csv"))?;
    write_csv(
        &csv,
        "detuning_hz,transmission",
        spec.scan_values()
            .iter()
            .zip(spec.transmission())
            .map(|(&x, &t)| vec![angular_to_hz(x), t]),
    )?;
    written.push(csv);

    if with_metrics {
        let metrics = feature_metrics(spec, rc.noise_floor);
        let mut report = Report::new();
        report.push("mode", tag);
        report.push("points", spec.len().to_string());
        report.push_f64("reference_absorption", spec.reference());
        report.push_f64("depth", metrics.depth);
        report.push_f64("contrast", metrics.contrast);
        report.push_f64("peak_transmission", metrics.peak_transmission);
        report.push_f64("background_transmission", metrics.background_transmission);
        if let Some(fwhm) = metrics.fwhm {
            report.push_angular_as_hz("fwhm_hz", fwhm);
        }
        if let Some(split) = metrics.at_splitting {
            report.push_angular_as_hz("at_splitting_hz", split);
        }
        report.push("resolved", if metrics.resolved { "true" } else { "false" });
        let path = out_path(out_dir, &format!("metrics_{tag}.txt"))?;
        report.write(&path)?;
        written.push(path);
    }

    if plot {
        let path = out_path(out_dir, &format!("spectrum_{tag}.svg"))?;
        let x_hz: Vec<f64> = spec.scan_values().iter().map(|&x| angular_to_hz(x)).collect();
        svg_line_plot(
            &path,
            &format!("{tag} transmission spectrum"),
            "detuning (Hz)",
            "transmission",
            &x_hz,
            spec.transmission(),
        )?;
        written.push(path);
    }

    Ok(written)
}

/// Compute the velocity-resolved absorption map plus its quadrature weights
/// and velocity-integrated companion. Maps are data-only; no plot.
pub fn cmd_map(rc: &RunConfig, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let raw = rc
        .scan
        .as_ref()
        .ok_or_else(|| CliError::usage("[scan]: required for the map command"))?;
    let scan = raw.resolve_any("the map command")?;
    let leg = match scan.scanned {
        ScannedDetuning::Lower => Leg::Lower,
        ScannedDetuning::Upper => Leg::Upper,
    };

    // Grid choice: a fixed uniform velocity axis when the config asks for a
    // display resolution, otherwise the same adaptive grid the spectrum
    // command integrates over (so the two commands agree exactly).
    let uniform = match rc.map_velocity_points {
        Some(points) => {
            if rc.sigma_v == 0.0 {
                return Err(CliError::usage(
                    "map.velocity_points: needs a thermal [environment]; the cold map has a \
                     single velocity class",
                ));
            }
            let half = rc.map_half_range_mps.unwrap_or(4.5 * rc.sigma_v);
            Some(VelocityGrid::uniform(rc.sigma_v, half, points)?)
        }
        None => None,
    };
    let grid = match &uniform {
        Some(g) => g.clone(),
        None => rc.grid.build_for_scan(&rc.system, &scan)?,
    };

    let map = absorption_map(&rc.system, &scan, &grid, leg)?;

    // Transmission through the same Beer–Lambert calibration the spectrum
    // command uses, on the same velocity average.
    let transmission = match &uniform {
        None => {
            // Shared grid policy: reuse the spectrum pipeline verbatim so the
            // integrated map and the spectrum file agree to the last bit.
            let spec = match leg {
                Leg::Lower => eit_spectrum(&rc.system, &scan, &rc.grid, &rc.calib)?,
                Leg::Upper => tpat_spectrum(&rc.system, &scan, &rc.grid, &rc.calib)?,
            };
            spec.transmission().to_vec()
        }
        Some(g) => transmission_on_grid(rc, g, leg, map.integrated())?,
    };

    let mut written = Vec::new();

    let map_csv = out_path(out_dir, "map.csv")?;
    let n_v = map.n_velocity();
    write_csv(
        &map_csv,
        "velocity_mps,detuning_hz,absorption",
        (0..map.n_scan()).flat_map(|j| {
            let map = &map;
            (0..n_v).map(move |i| {
                vec![
                    map.velocities()[i],
                    angular_to_hz(map.scan_values()[j]),
                    map.value(j, i),
                ]
            })
        }),
    )?;
    written.push(map_csv);

    let weights_csv = out_path(out_dir, "map_weights.csv")?;
    write_csv(
        &weights_csv,
        "velocity_mps,weight",
        map.velocities().iter().zip(map.weights()).map(|(&v, &w)| vec![v, w]),
    )?;
    written.push(weights_csv);

    let integrated_csv = out_path(out_dir, "map_integrated.csv")?;
    write_csv(
        &integrated_csv,
        "detuning_hz,absorption,transmission",
        map.scan_values()
            .iter()
            .zip(map.integrated())
            .zip(&transmission)
            .map(|((&x, &a), &t)| vec![angular_to_hz(x), a, t]),
    )?;
    written.push(integrated_csv);

    Ok(written)
}

/// Beer–Lambert transmission of an integrated absorption column on a custom
/// (uniform) velocity grid, mirroring the spectrum normalizations.
fn transmission_on_grid(
    rc: &RunConfig,
    grid: &VelocityGrid,
    leg: Leg,
    integrated: &[f64],
) -> CliResult<Vec<f64>> {
    match leg {
        Leg::Lower => {
            let ref_sys = LadderSystem {
                rabi_upper: 0.0,
                delta_lower: 0.0,
                delta_upper: 0.0,
                ..rc.system
            };
            let reference = average_coherence(&ref_sys, grid, Leg::Lower)?.im;
            if !(reference > 0.0) || !reference.is_finite() {
                return Err(CliError::compute(
                    "map: resonant two-level reference absorption is not positive",
                ));
            }
            Ok(integrated
                .iter()
                .map(|&a| (-rc.calib.d0_lower * a.max(0.0) / reference).exp())
                .collect())
        }
        Leg::Upper => {
            let peak = integrated.iter().fold(0.0_f64, |m, &a| m.max(a.max(0.0)));
            if !(peak > 0.0) {
                return Err(CliError::compute(
                    "map: no upper-leg absorption found to anchor the calibration",
                ));
            }
            Ok(integrated
                .iter()
                .map(|&a| (-rc.calib.d_peak_upper * a.max(0.0) / peak).exp())
                .collect())
        }
    }
}

/// Compute the modulation-transfer error signal, its lock-point metrics, and
/// the optional plot.
pub fn cmd_errorsig(rc: &RunConfig, out_dir: &Path, plot: bool) -> CliResult<Vec<PathBuf>> {
    let raw = rc
        .scan
        .as_ref()
        .ok_or_else(|| CliError::usage("[scan]: required for the errorsig command"))?;
    let scan = raw.resolve(ScannedDetuning::Upper, "the error signal")?;

    let sig = error_signal(&rc.system, &scan, &rc.grid, &rc.calib, &rc.modulation)?;
    let lock = lock_metrics(&sig);

    let mut written = Vec::new();

    let csv = out_path(out_dir, "error_signal.csv")?;
    write_csv(
        &csv,
        "detuning_hz,error_signal",
        sig.scan_values()
            .iter()
            .zip(sig.values())
            .map(|(&x, &e)| vec![angular_to_hz(x), e]),
    )?;
    written.push(csv);

    let mut report = Report::new();
    report.push("points", sig.len().to_string());
    report.push_f64("demod_phase_rad", sig.demod_phase());
    report.push("quasi_static_ok", if sig.quasi_static_ok() { "true" } else { "false" });
    match &lock {
        LockResult::Locked(m) => {
            report.push("lock", "found");
            report.push_angular_as_hz("zero_crossing_hz", m.zero_crossing);
            // Signal slope per Hz of detuning (the signal itself is
            // dimensionless transmission).
            report.push_f64("slope_per_hz", m.slope * TAU);
            report.push_angular_as_hz("capture_range_hz", m.capture_range);
            report.push("range_clipped", if m.range_clipped { "true" } else { "false" });
        }
        LockResult::NoLockPoint => {
            report.push("lock", "none");
        }
    }
    let report_path = out_path(out_dir, "lock_report.txt")?;
    report.write(&report_path)?;
    written.push(report_path);

    if plot {
        let path = out_path(out_dir, "error_signal.svg")?;
        let x_hz: Vec<f64> = sig.scan_values().iter().map(|&x| angular_to_hz(x)).collect();
        svg_line_plot(
            &path,
            "modulation-transfer error signal",
            "upper-leg detuning (Hz)",
            "error signal",
            &x_hz,
            sig.values(),
        )?;
        written.push(path);
    }

    Ok(written)
}

/// Repeat the spectra across principal numbers and tabulate the amplitudes.
pub fn cmd_scan_n(rc: &RunConfig, out_dir: &Path, plot: bool) -> CliResult<Vec<PathBuf>> {
    if rc.ns.is_empty() {
        return Err(CliError::usage("[scan_n].ns: required for the scan-n command"));
    }
    let eit_scan = rc
        .eit_scan
        .as_ref()
        .ok_or_else(|| CliError::usage("[eit_scan]: required for the scan-n command"))?;
    let tpat_scan = rc
        .tpat_scan
        .as_ref()
        .ok_or_else(|| CliError::usage("[tpat_scan]: required for the scan-n command"))?;

    let rows = scan_n(
        &rc.atom,
        &rc.system_ref,
        &rc.ns,
        eit_scan,
        tpat_scan,
        &rc.grid,
        &rc.calib,
    )?;

    let mut written = Vec::new();
    let csv = out_path(out_dir, "scan_n.csv")?;
    write_csv(
        &csv,
        "n,n_star,gamma_upper_hz,rabi_upper_hz,eit_amplitude,tpat_amplitude",
        rows.iter().map(|r| {
            vec![
                r.n as f64,
                r.n_star,
                angular_to_hz(r.gamma_upper),
                angular_to_hz(r.rabi_upper),
                r.eit_amplitude,
                r.tpat_amplitude,
            ]
        }),
    )?;
    written.push(csv);

    if rc.emit_spectra {
        for &n in &rc.ns {
            let sys_n = system_at(&rc.atom, &rc.system_ref, n)?;
            let eit = eit_spectrum(&sys_n, eit_scan, &rc.grid, &rc.calib)?;
            written.extend(write_spectrum_files(
                &eit,
                rc,
                out_dir,
                &format!("eit_n{n}"),
                false,
                plot,
            )?);
            let tpat = tpat_spectrum(&sys_n, tpat_scan, &rc.grid, &rc.calib)?;
            written.extend(write_spectrum_files(
                &tpat,
                rc,
                out_dir,
                &format!("tpat_n{n}"),
                false,
                plot,
            )?);
        }
    }

    Ok(written)
}

/// Fit a noise model to a two-column data file and write the fit report.
pub fn cmd_fit_noise(
    data_path: &Path,
    model_arg: &str,
    init: Option<Vec<f64>>,
    out_dir: &Path,
) -> CliResult<Vec<PathBuf>> {
    // Short aliases for the registry names.
    let model_name = match model_arg {
        "od" => "od-noise",
        "waist" => "waist-noise",
        other => other,
    };
    let model = model_by_name(model_name).ok_or_else(|| {
        CliError::usage(format!(
            "--model: unknown model `{model_arg}` (available: {})",
            MODEL_NAMES.join(", ")
        ))
    })?;

    let data = read_xy_csv(data_path)?;
    let initial = match init {
        Some(v) => v,
        None => match model_name {
            "od-noise" => od_initial_guess(data.x(), data.y()),
            _ => waist_initial_guess(data.x(), data.y()),
        },
    };

    let result = fit(model, &data, &initial)?;

    let mut report = Report::new();
    report.push("model", model.name());
    report.push("n_points", data.len().to_string());
    report.push("converged", if result.converged { "true" } else { "false" });
    report.push("iterations", result.iterations.to_string());
    report.push_f64("residual_norm", result.residual_norm);
    for (name, value) in model.param_names().iter().zip(&result.params) {
        report.push_f64(&format!("param_{name}"), *value);
    }
    if let Some(cov) = &result.covariance {
        for (i, name) in model.param_names().iter().enumerate() {
            report.push_f64(&format!("var_{name}"), cov[(i, i)]);
        }
    }
    let path = out_path(out_dir, "fit_report.txt")?;
    report.write(&path)?;
    Ok(vec![path])
}

/// Data-driven starting point for the optical-depth noise model: the floor
/// from the smallest sample, the bump position from the largest.
fn od_initial_guess(x: &[f64], y: &[f64]) -> Vec<f64> {
    let floor = y.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let (mut x_peak, mut y_peak) = (0.0, f64::NEG_INFINITY);
    for (&xi, &yi) in x.iter().zip(y) {
        if yi > y_peak {
            y_peak = yi;
            x_peak = xi;
        }
    }
    let b = if x_peak > 0.0 { 0.5 / x_peak } else { 1.0 };
    let amp = (y_peak * y_peak - floor * floor).max(0.0).sqrt();
    let a = if x_peak > 0.0 && amp > 0.0 { amp / (x_peak.sqrt() * (-b * x_peak).exp()) } else { 1.0 };
    vec![a, b, floor]
}

/// Data-driven starting point for the waist noise model: the floor from the
/// widest beam, the amplitude from the narrowest.
fn waist_initial_guess(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut i_min = 0;
    let mut i_max = 0;
    for (i, &xi) in x.iter().enumerate() {
        if xi < x[i_min] {
            i_min = i;
        }
        if xi > x[i_max] {
            i_max = i;
        }
    }
    let b = y[i_max].max(0.0);
    let amp = (y[i_min] * y[i_min] - b * b).max(0.0).sqrt();
    let a = if amp > 0.0 && x[i_min] > 0.0 { amp * x[i_min] } else { 1.0 };
    vec![a, b]
}
