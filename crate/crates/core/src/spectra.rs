//! Transmission spectra, feature extraction, and principal-number scans.
//!
//! Two complementary probing schemes share the velocity-averaging machinery:
//!
//! - **EIT** (lower-leg probe): scan δ_l and watch the broad Doppler
//!   absorption profile develop a transparency notch where the strong upper
//!   leg opens a two-photon dark state. Transmission is calibrated so that a
//!   bare two-level medium on resonance has optical depth `d0_lower`.
//! - **TPAT** (upper-leg probe, two-photon absorption in transmission): scan
//!   δ_u and watch absorption appear where the strong lower leg dresses the
//!   intermediate state. The peak of the scanned feature is calibrated to
//!   optical depth `d_peak_upper`, which is small in practice — the upper leg
//!   is far from any single-photon resonance.
//!
//! [`feature_metrics`] reduces a spectrum to scalar figures (depth, width,
//! Autler–Townes splitting, contrast) without ever panicking on degenerate
//! shapes, and [`scan_n`] repeats both measurements across principal numbers
//! with the upper-leg decay and Rabi frequency rescaled for each n.

use crate::atom::AtomSpec;
use crate::doppler::{average_coherence, GridSpec, Leg, ScanSpec, ScannedDetuning};
use crate::error::LadderError;
use crate::lindblad::LadderSystem;
use crate::Result;

/// Optical-depth calibration of the two probing schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalDepthCalibration {
    /// Resonant optical depth of the bare two-level medium for the lower-leg
    /// probe (sets the EIT absorption background).
    pub d0_lower: f64,
    /// Peak optical depth of the scanned upper-leg feature.
    pub d_peak_upper: f64,
}

impl Default for OpticalDepthCalibration {
    fn default() -> Self {
        Self { d0_lower: 1.0, d_peak_upper: 1e-2 }
    }
}

impl OpticalDepthCalibration {
    /// Check field-level invariants; first violation wins.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("OpticalDepthCalibration.d0_lower", self.d0_lower),
            ("OpticalDepthCalibration.d_peak_upper", self.d_peak_upper),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(LadderError::domain(name, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Which probing scheme produced a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMode {
    /// Lower-leg probe: transparency peak on an absorption background.
    Eit,
    /// Upper-leg probe: absorption dip(s) on a transparent background.
    Tpat,
}

/// A transmission spectrum over a detuning scan.
#[derive(Debug, Clone)]
pub struct TransmissionSpectrum {
    mode: SpectrumMode,
    scan_values: Vec<f64>,
    transmission: Vec<f64>,
    absorbance: Vec<f64>,
    reference: f64,
}

impl TransmissionSpectrum {
    /// Probing scheme.
    pub fn mode(&self) -> SpectrumMode {
        self.mode
    }

    /// Scanned detuning values, rad/s.
    pub fn scan_values(&self) -> &[f64] {
        &self.scan_values
    }

    /// Transmission T ∈ (0, 1] per scan point.
    pub fn transmission(&self) -> &[f64] {
        &self.transmission
    }

    /// Optical depth −ln T per scan point.
    pub fn absorbance(&self) -> &[f64] {
        &self.absorbance
    }

    /// The normalizing averaged absorption (two-level resonant value for EIT,
    /// scan peak for TPAT).
    pub fn reference(&self) -> f64 {
        self.reference
    }

    /// Number of scan points.
    pub fn len(&self) -> usize {
        self.scan_values.len()
    }

    /// True if the spectrum has no points (never produced by constructors).
    pub fn is_empty(&self) -> bool {
        self.scan_values.is_empty()
    }
}

/// Averaged lower-leg absorption of the bare two-level medium on resonance:
/// the EIT normalization reference.
fn two_level_reference(sys: &LadderSystem, grid: &GridSpec) -> Result<f64> {
    let ref_sys = LadderSystem {
        rabi_upper: 0.0,
        delta_lower: 0.0,
        delta_upper: 0.0,
        ..*sys
    };
    let ref_grid = grid.build(&ref_sys)?;
    let im = average_coherence(&ref_sys, &ref_grid, Leg::Lower)?.im;
    if !(im > 0.0) || !im.is_finite() {
        return Err(LadderError::numerical(
            "eit_spectrum",
            format!("two-level reference absorption must be positive, got {im}"),
        ));
    }
    Ok(im)
}

/// Lower-leg transmission spectrum: T(δ_l) = exp(−d0·Im A_l(δ_l)/Im A_ref),
/// with the bare two-level resonant absorption as reference.
pub fn eit_spectrum(
    sys: &LadderSystem,
    scan: &ScanSpec,
    grid: &GridSpec,
    calib: &OpticalDepthCalibration,
) -> Result<TransmissionSpectrum> {
    calib.validate()?;
    if scan.scanned != ScannedDetuning::Lower {
        return Err(LadderError::domain(
            "eit_spectrum",
            "the EIT probe scans the lower-leg detuning; set the scan to the lower leg",
        ));
    }
    let reference = two_level_reference(sys, grid)?;
    let scan_grid = grid.build_for_scan(sys, scan)?;
    let scan_values = scan.values();
    let mut transmission = Vec::with_capacity(scan_values.len());
    let mut absorbance = Vec::with_capacity(scan_values.len());
    for &s in &scan_values {
        let at = scan.apply(sys, s);
        let im = average_coherence(&at, &scan_grid, Leg::Lower)?.im.max(0.0);
        let od = calib.d0_lower * im / reference;
        absorbance.push(od);
        transmission.push((-od).exp());
    }
    Ok(TransmissionSpectrum {
        mode: SpectrumMode::Eit,
        scan_values,
        transmission,
        absorbance,
        reference,
    })
}

/// Upper-leg transmission spectrum: T(δ_u) = exp(−d_peak·Im A_u(δ_u)/max Im A_u),
/// normalized to the absorption peak found within the scan itself.
pub fn tpat_spectrum(
    sys: &LadderSystem,
    scan: &ScanSpec,
    grid: &GridSpec,
    calib: &OpticalDepthCalibration,
) -> Result<TransmissionSpectrum> {
    calib.validate()?;
    if scan.scanned != ScannedDetuning::Upper {
        return Err(LadderError::domain(
            "tpat_spectrum",
            "the TPAT probe scans the upper-leg detuning; set the scan to the upper leg",
        ));
    }
    let scan_grid = grid.build_for_scan(sys, scan)?;
    let scan_values = scan.values();
    let mut ims = Vec::with_capacity(scan_values.len());
    for &s in &scan_values {
        let at = scan.apply(sys, s);
        ims.push(average_coherence(&at, &scan_grid, Leg::Upper)?.im.max(0.0));
    }
    let peak = ims.iter().copied().fold(0.0_f64, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(LadderError::numerical(
            "tpat_spectrum",
            format!("scan found no absorption to normalize against (peak = {peak})"),
        ));
    }
    let mut transmission = Vec::with_capacity(ims.len());
    let mut absorbance = Vec::with_capacity(ims.len());
    for im in &ims {
        let od = calib.d_peak_upper * im / peak;
        absorbance.push(od);
        transmission.push((-od).exp());
    }
    Ok(TransmissionSpectrum {
        mode: SpectrumMode::Tpat,
        scan_values,
        transmission,
        absorbance,
        reference: peak,
    })
}

/// Scalar figures of a spectrum's central feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMetrics {
    /// Largest optical depth in the scan (EIT: background depth; TPAT: the
    /// calibrated peak depth).
    pub depth: f64,
    /// Full width at half maximum of the feature, rad/s (EIT: transparency
    /// peak above the interpolated background; TPAT: outermost half-depth
    /// crossings of the absorbance profile). None if the feature is absent
    /// or truncated by the scan edges.
    pub fwhm: Option<f64>,
    /// Separation of the two deepest absorption dips, rad/s (TPAT only; the
    /// Autler–Townes doublet splitting). None for EIT spectra or single dips.
    pub at_splitting: Option<f64>,
    /// EIT: (T_pk − T_bg)/(1 − T_bg); TPAT: (T_bg − T_min)/T_bg. Zero when no
    /// feature is found.
    pub contrast: f64,
    /// Transmission at the feature (EIT peak / TPAT deepest dip).
    pub peak_transmission: f64,
    /// Background transmission the feature is measured against.
    pub background_transmission: f64,
    /// Whether the feature is resolved above `noise_floor` (EIT: peak rises
    /// above the background line; TPAT: the barrier between the two dips).
    pub resolved: bool,
}

fn flat_metrics(spec: &TransmissionSpectrum) -> FeatureMetrics {
    let depth = spec.absorbance.iter().copied().fold(0.0_f64, f64::max);
    let t_max = spec.transmission.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    FeatureMetrics {
        depth,
        fwhm: None,
        at_splitting: None,
        contrast: 0.0,
        peak_transmission: t_max,
        background_transmission: t_max,
        resolved: false,
    }
}

/// Indices of strict-ish local minima of `y` (plateau-tolerant: at least one
/// strictly higher neighbor, none lower).
fn local_minima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    for j in 1..n.saturating_sub(1) {
        if y[j] <= y[j - 1] && y[j] <= y[j + 1] && (y[j] < y[j - 1] || y[j] < y[j + 1]) {
            out.push(j);
        }
    }
    out
}

/// Parabolic refinement of an extremum at sample `j`: vertex of the parabola
/// through the three surrounding points. Falls back to the sample itself for
/// flat curvature or boundary indices.
fn refine_extremum(x: &[f64], y: &[f64], j: usize) -> (f64, f64) {
    if j == 0 || j + 1 >= y.len() {
        return (x[j], y[j]);
    }
    let (y0, y1, y2) = (y[j - 1], y[j], y[j + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom.abs() <= 1e-300 {
        return (x[j], y[j]);
    }
    let t = 0.5 * (y0 - y2) / denom;
    let t = t.clamp(-1.0, 1.0);
    let h = 0.5 * (x[j + 1] - x[j - 1]);
    (x[j] + t * h, y1 - 0.25 * (y0 - y2) * t)
}

/// Width of `signal` (≥ 0, peaked at index `pk`) at `level`, from the
/// outermost linear-interpolated crossings walking outward from the peak
/// region. None if either side never crosses inside the scan.
fn width_at_level(x: &[f64], signal: &[f64], pk: usize, level: f64) -> Option<f64> {
    let n = signal.len();
    // Walk left from the peak to the last index still at or above the level,
    // then interpolate into the first point below it.
    let mut left = None;
    for j in (0..=pk).rev() {
        if signal[j] < level {
            let f = (level - signal[j]) / (signal[j + 1] - signal[j]);
            left = Some(x[j] + f * (x[j + 1] - x[j]));
            break;
        }
    }
    let mut right = None;
    for j in pk..n {
        if signal[j] < level {
            let f = (level - signal[j]) / (signal[j - 1] - signal[j]);
            right = Some(x[j] - f * (x[j] - x[j - 1]));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) if r > l => Some(r - l),
        _ => None,
    }
}

/// Reduce a spectrum to scalar feature figures. Degenerate spectra (flat,
/// monotone, too short) produce `resolved = false` defaults; this function
/// never panics.
pub fn feature_metrics(spec: &TransmissionSpectrum, noise_floor: f64) -> FeatureMetrics {
    let x = &spec.scan_values;
    let t = &spec.transmission;
    if t.len() < 3 {
        return flat_metrics(spec);
    }
    match spec.mode {
        SpectrumMode::Eit => eit_metrics(spec, x, t, noise_floor),
        SpectrumMode::Tpat => tpat_metrics(spec, x, t, noise_floor),
    }
}

fn eit_metrics(
    spec: &TransmissionSpectrum,
    x: &[f64],
    t: &[f64],
    noise_floor: f64,
) -> FeatureMetrics {
    let depth = spec.absorbance.iter().copied().fold(0.0_f64, f64::max);
    let minima = local_minima(t);
    if minima.len() < 2 {
        return FeatureMetrics { depth, ..flat_metrics(spec) };
    }
    // The transparency peak lives between the two flanking absorption minima;
    // take the outermost pair so an inner substructure cannot hide the peak.
    let m1 = minima[0];
    let m2 = *minima.last().unwrap();
    let pk = (m1 + 1..m2)
        .max_by(|&a, &b| t[a].total_cmp(&t[b]))
        .unwrap_or(m1 + 1);
    let (x1, t1) = refine_extremum(x, t, m1);
    let (x2, t2) = refine_extremum(x, t, m2);
    let (xp, tp) = refine_extremum(x, t, pk);
    // Background under the peak: the line between the two absorption minima.
    let frac = if x2 > x1 { (xp - x1) / (x2 - x1) } else { 0.5 };
    let t_bg = t1 + frac.clamp(0.0, 1.0) * (t2 - t1);
    let height = tp - t_bg;
    let contrast = if t_bg < 1.0 { (height / (1.0 - t_bg)).max(0.0) } else { 0.0 };

    // FWHM of the peak above the background line, measured inside [m1, m2].
    let fwhm = if height > 0.0 {
        let seg_x = &x[m1..=m2];
        let line = |xx: f64| t1 + ((xx - x1) / (x2 - x1)) * (t2 - t1);
        let sig: Vec<f64> = (m1..=m2).map(|j| t[j] - line(x[j])).collect();
        width_at_level(seg_x, &sig, pk - m1, 0.5 * height)
    } else {
        None
    };

    FeatureMetrics {
        depth,
        fwhm,
        at_splitting: None,
        contrast,
        peak_transmission: tp,
        background_transmission: t_bg,
        resolved: height > noise_floor,
    }
}

fn tpat_metrics(
    spec: &TransmissionSpectrum,
    x: &[f64],
    t: &[f64],
    noise_floor: f64,
) -> FeatureMetrics {
    let d = &spec.absorbance;
    let depth = d.iter().copied().fold(0.0_f64, f64::max);
    let t_bg = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let minima = local_minima(t);
    if minima.is_empty() {
        return FeatureMetrics { depth, ..flat_metrics(spec) };
    }
    let deepest = *minima
        .iter()
        .min_by(|&&a, &&b| t[a].total_cmp(&t[b]))
        .unwrap();
    let (_, t_min) = refine_extremum(x, t, deepest);
    let contrast = if t_bg > 0.0 { ((t_bg - t_min) / t_bg).max(0.0) } else { 0.0 };

    // Autler–Townes splitting: separation of the two deepest dips, with the
    // barrier between them clearing the noise floor.
    let (at_splitting, resolved) = if minima.len() >= 2 {
        let mut by_depth = minima.clone();
        by_depth.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
        let (a, b) = (by_depth[0].min(by_depth[1]), by_depth[0].max(by_depth[1]));
        let barrier = (a..=b).map(|j| t[j]).fold(f64::NEG_INFINITY, f64::max);
        let (xa, ta) = refine_extremum(x, t, a);
        let (xb, tb) = refine_extremum(x, t, b);
        let split = (xb - xa).abs();
        let res = barrier - ta.max(tb) > noise_floor;
        (Some(split), res)
    } else {
        (None, false)
    };

    // Structure width: outermost half-depth crossings of the absorbance.
    let pk_d = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
    let fwhm = width_at_level(x, d, pk_d, 0.5 * depth);

    FeatureMetrics {
        depth,
        fwhm,
        at_splitting,
        contrast,
        peak_transmission: t_min,
        background_transmission: t_bg,
        resolved,
    }
}

/// One row of a principal-number scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NScanRow {
    /// Principal quantum number.
    pub n: u32,
    /// Effective principal number n − δ_defect.
    pub n_star: f64,
    /// Rydberg decay rate at this n, rad/s.
    pub gamma_upper: f64,
    /// Upper-leg Rabi frequency at this n, rad/s.
    pub rabi_upper: f64,
    /// EIT transparency amplitude in absorbance units: the drop of optical
    /// depth at the notch below the interpolated absorption background.
    pub eit_amplitude: f64,
    /// Peak upper-leg optical depth, anchored to the calibration at the
    /// atom's reference n (carries the dipole-scaling factor squared).
    pub tpat_amplitude: f64,
}

/// Rescale a reference system to principal number `n`.
///
/// `sys_ref` holds the drive parameters at the atom's reference n; the
/// upper-leg decay rate scales as (n*_ref/n*)³ and the Rabi frequency as
/// (n*_ref/n*)^{3/2}. Detunings, the lower leg, and dephasings carry over.
pub fn system_at(atom: &AtomSpec, sys_ref: &LadderSystem, n: u32) -> Result<LadderSystem> {
    Ok(LadderSystem {
        gamma_upper: atom.scale_gamma_upper(n)?,
        rabi_upper: atom.scale_omega_upper(n, sys_ref.rabi_upper)?,
        ..*sys_ref
    })
}

/// Repeat the EIT and TPAT measurements across principal numbers.
///
/// `sys_ref` holds the drive parameters at the atom's reference n; each
/// requested n is rescaled with [`system_at`]. The TPAT depth is anchored at
/// the reference row: D_u(δ; n) = d_peak·(Ω_u(n)/Ω_u(n_ref))²·Im A_u(δ; n)/peak_ref,
/// so the reference row reproduces the single-spectrum calibration exactly
/// and other rows inherit the physical n⁻³ envelope.
pub fn scan_n(
    atom: &AtomSpec,
    sys_ref: &LadderSystem,
    ns: &[u32],
    eit_scan: &ScanSpec,
    tpat_scan: &ScanSpec,
    grid: &GridSpec,
    calib: &OpticalDepthCalibration,
) -> Result<Vec<NScanRow>> {
    atom.validate()?;
    sys_ref.validate()?;
    calib.validate()?;
    if ns.is_empty() {
        return Err(LadderError::domain("scan_n", "need at least one principal number"));
    }
    if tpat_scan.scanned != ScannedDetuning::Upper || eit_scan.scanned != ScannedDetuning::Lower {
        return Err(LadderError::domain(
            "scan_n",
            "scan_n needs a lower-leg EIT scan and an upper-leg absorption scan",
        ));
    }

    // Reference peak: the upper-leg absorption maximum at the reference n.
    let ref_sys = system_at(atom, sys_ref, atom.n_ref)?;
    let ref_grid = grid.build_for_scan(&ref_sys, tpat_scan)?;
    let mut peak_ref = 0.0_f64;
    for &s in &tpat_scan.values() {
        let at = tpat_scan.apply(&ref_sys, s);
        peak_ref = peak_ref.max(average_coherence(&at, &ref_grid, Leg::Upper)?.im.max(0.0));
    }
    if !(peak_ref > 0.0) {
        return Err(LadderError::numerical(
            "scan_n",
            "reference-n scan found no upper-leg absorption to anchor the calibration",
        ));
    }

    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let sys_n = system_at(atom, sys_ref, n)?;
        let omega_ratio = sys_n.rabi_upper / ref_sys.rabi_upper;

        // TPAT amplitude: anchored absorbance peak.
        let tpat_grid = grid.build_for_scan(&sys_n, tpat_scan)?;
        let mut peak_n = 0.0_f64;
        for &s in &tpat_scan.values() {
            let at = tpat_scan.apply(&sys_n, s);
            peak_n = peak_n.max(average_coherence(&at, &tpat_grid, Leg::Upper)?.im.max(0.0));
        }
        let tpat_amplitude = calib.d_peak_upper * omega_ratio * omega_ratio * peak_n / peak_ref;

        // EIT amplitude: absorbance drop at the transparency notch.
        let eit = eit_spectrum(&sys_n, eit_scan, grid, calib)?;
        let metrics = feature_metrics(&eit, 0.0);
        let eit_amplitude = if metrics.background_transmission > 0.0 && metrics.peak_transmission > 0.0
        {
            (metrics.peak_transmission / metrics.background_transmission).ln().max(0.0)
        } else {
            0.0
        };

        rows.push(NScanRow {
            n,
            n_star: atom.effective_principal(n)?,
            gamma_upper: sys_n.gamma_upper,
            rabi_upper: sys_n.rabi_upper,
            eit_amplitude,
            tpat_amplitude,
        });
    }
    Ok(rows)
}
