//! Modulation-transfer error signals and lock metrics.
//!
//! The lower-leg detuning is frequency-modulated, δ_l(θ) = δ_l + m·sin θ, and
//! the upper-leg transmission is demodulated at the same frequency:
//!
//! ```text
//! e(δ_u) = (2/P) · Σⱼ T_u(δ_l + m·sin θⱼ, δ_u) · sin(θⱼ + φ)
//! ```
//!
//! with θⱼ uniform over one period. The model is quasi-static — the medium
//! follows the instantaneous detuning — which is accurate while the
//! modulation frequency stays well below the linewidth-scale response of the
//! medium; [`ErrorSignal::quasi_static_ok`] reports whether that holds rather
//! than enforcing it. Around an absorption doublet the demodulated signal is
//! an antisymmetric discriminator whose central zero crossing is the lock
//! point; [`lock_metrics`] extracts the crossing, the slope through it, and
//! the capture range between the flanking extrema.

use crate::doppler::{average_coherence, GridSpec, Leg, ScanSpec, ScannedDetuning};
use crate::error::LadderError;
use crate::lindblad::LadderSystem;
use crate::spectra::OpticalDepthCalibration;
use crate::Result;
use std::f64::consts::TAU;

/// Ratio of modulation frequency to lower-leg linewidth (both in Hz) below
/// which the quasi-static demodulation model is trusted. The conventional
/// 300 kHz modulation against Γ_l = 2π × 1.4 MHz sits at 0.21.
const QUASI_STATIC_RATIO: f64 = 0.25;

/// Frequency-modulation parameters of the lower-leg drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationSpec {
    /// Modulation frequency, Hz. Only the quasi-static validity check uses
    /// it; the demodulated waveform itself is frequency-independent in the
    /// quasi-static model.
    pub f_mod: f64,
    /// Peak frequency deviation of δ_l, rad/s.
    pub depth: f64,
    /// Demodulation phase, rad. `None` selects the phase that maximizes the
    /// slope at the central zero crossing; the phase actually used is
    /// reported on the [`ErrorSignal`].
    pub demod_phase: Option<f64>,
    /// Samples per modulation period for the demodulation sum (even, ≥ 8).
    pub samples_per_period: usize,
}

impl Default for ModulationSpec {
    fn default() -> Self {
        Self { f_mod: 3e5, depth: TAU * 1e6, demod_phase: None, samples_per_period: 64 }
    }
}

impl ModulationSpec {
    /// Check field-level invariants; first violation wins.
    pub fn validate(&self) -> Result<()> {
        if !(self.f_mod > 0.0) || !self.f_mod.is_finite() {
            return Err(LadderError::domain(
                "ModulationSpec.f_mod",
                format!("must be finite and > 0 Hz, got {}", self.f_mod),
            ));
        }
        if !(self.depth >= 0.0) || !self.depth.is_finite() {
            return Err(LadderError::domain(
                "ModulationSpec.depth",
                format!("must be finite and >= 0, got {}", self.depth),
            ));
        }
        if let Some(phi) = self.demod_phase {
            if !phi.is_finite() {
                return Err(LadderError::domain(
                    "ModulationSpec.demod_phase",
                    format!("must be finite, got {phi}"),
                ));
            }
        }
        if self.samples_per_period < 8 || self.samples_per_period % 2 != 0 {
            return Err(LadderError::domain(
                "ModulationSpec.samples_per_period",
                format!("must be even and >= 8, got {}", self.samples_per_period),
            ));
        }
        Ok(())
    }
}

/// A demodulated error signal over an upper-leg detuning scan.
#[derive(Debug, Clone)]
pub struct ErrorSignal {
    scan_values: Vec<f64>,
    values: Vec<f64>,
    demod_phase: f64,
    quasi_static_ok: bool,
}

impl ErrorSignal {
    /// Scanned upper-leg detuning values, rad/s.
    pub fn scan_values(&self) -> &[f64] {
        &self.scan_values
    }

    /// Demodulated amplitudes, dimensionless.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Demodulation phase actually used, rad.
    pub fn demod_phase(&self) -> f64 {
        self.demod_phase
    }

    /// True when the modulation is slow enough for the quasi-static model.
    pub fn quasi_static_ok(&self) -> bool {
        self.quasi_static_ok
    }

    /// Number of scan points.
    pub fn len(&self) -> usize {
        self.scan_values.len()
    }

    /// True if the signal has no points (never produced by the synthesizer).
    pub fn is_empty(&self) -> bool {
        self.scan_values.is_empty()
    }
}

/// Synthesize the modulation-transfer error signal over an upper-leg scan.
///
/// The upper-leg transmission is calibrated once against the unmodulated
/// absorption peak of the scan, so every modulation sample shares the same
/// Beer–Lambert anchor. A zero modulation depth short-circuits to an exactly
/// zero signal.
pub fn error_signal(
    sys: &LadderSystem,
    scan: &ScanSpec,
    grid: &GridSpec,
    calib: &OpticalDepthCalibration,
    modspec: &ModulationSpec,
) -> Result<ErrorSignal> {
    modspec.validate()?;
    calib.validate()?;
    sys.validate()?;
    if scan.scanned != ScannedDetuning::Upper {
        return Err(LadderError::domain(
            "error_signal",
            "the error signal demodulates the upper-leg transmission; scan the upper-leg detuning",
        ));
    }
    let quasi_static_ok = self::quasi_static_ok(sys, modspec);
    let scan_values = scan.values();
    let vgrid = grid.build_for_scan(sys, scan)?;

    // Unmodulated pass: fixes the Beer-Lambert normalization anchor.
    let mut peak = 0.0_f64;
    for &su in &scan_values {
        let at = scan.apply(sys, su);
        peak = peak.max(average_coherence(&at, &vgrid, Leg::Upper)?.im.max(0.0));
    }
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(LadderError::numerical(
            "error_signal",
            format!("scan found no upper-leg absorption to calibrate against (peak = {peak})"),
        ));
    }

    let n = scan_values.len();
    if modspec.depth == 0.0 {
        return Ok(ErrorSignal {
            scan_values,
            values: vec![0.0; n],
            demod_phase: modspec.demod_phase.unwrap_or(0.0),
            quasi_static_ok,
        });
    }

    // Demodulation quadratures accumulated over one modulation period.
    let p = modspec.samples_per_period;
    let mut in_phase = vec![0.0_f64; n];
    let mut quadrature = vec![0.0_f64; n];
    for j in 0..p {
        let theta = TAU * j as f64 / p as f64;
        let (s, c) = theta.sin_cos();
        let shifted = LadderSystem { delta_lower: sys.delta_lower + modspec.depth * s, ..*sys };
        for (i, &su) in scan_values.iter().enumerate() {
            let at = scan.apply(&shifted, su);
            let im = average_coherence(&at, &vgrid, Leg::Upper)?.im.max(0.0);
            let t = (-calib.d_peak_upper * im / peak).exp();
            in_phase[i] += t * s;
            quadrature[i] += t * c;
        }
    }
    let norm = 2.0 / p as f64;
    for v in &mut in_phase {
        *v *= norm;
    }
    for v in &mut quadrature {
        *v *= norm;
    }

    let phase = match modspec.demod_phase {
        Some(phi) => phi,
        None => auto_phase(&scan_values, &in_phase, &quadrature),
    };
    let (sp, cp) = phase.sin_cos();
    let values = in_phase
        .iter()
        .zip(&quadrature)
        .map(|(&i, &q)| cp * i + sp * q)
        .collect();
    Ok(ErrorSignal { scan_values, values, demod_phase: phase, quasi_static_ok })
}

/// Whether the modulation is slow enough for the quasi-static model.
fn quasi_static_ok(sys: &LadderSystem, modspec: &ModulationSpec) -> bool {
    TAU * modspec.f_mod <= QUASI_STATIC_RATIO * sys.gamma_lower
}

/// Demodulation phase maximizing the slope at the central zero crossing:
/// project onto the (I, Q) slope vector there. Falls back to the quadrature
/// channel's crossing if the in-phase channel has none, and to phase 0 if
/// neither crosses zero.
fn auto_phase(x: &[f64], in_phase: &[f64], quadrature: &[f64]) -> f64 {
    let crossing = central_crossing(x, in_phase).or_else(|| central_crossing(x, quadrature));
    let Some((left, xc)) = crossing else {
        return 0.0;
    };
    let ic = nearest_sample(x, left, xc);
    let si = lsq_slope_around(x, in_phase, ic);
    let sq = lsq_slope_around(x, quadrature, ic);
    if si == 0.0 && sq == 0.0 {
        0.0
    } else {
        sq.atan2(si)
    }
}

/// Scalar figures of a lockable error signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockMetrics {
    /// Central zero crossing of the discriminator, rad/s, localized by
    /// linear interpolation between samples.
    pub zero_crossing: f64,
    /// Least-squares slope through the samples within ±3 of the crossing,
    /// signal units per rad/s.
    pub slope: f64,
    /// Span between the extrema flanking the crossing, rad/s — the detuning
    /// range over which the discriminator drives toward the lock point.
    pub capture_range: f64,
    /// True when a flanking extremum fell outside the scan and the range was
    /// clamped to a scan endpoint.
    pub range_clipped: bool,
}

/// Outcome of lock-metric extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LockResult {
    /// The signal crosses zero; metrics were extracted.
    Locked(LockMetrics),
    /// The signal never changes sign inside the scan.
    NoLockPoint,
}

impl LockResult {
    /// The metrics, if a lock point was found.
    pub fn metrics(&self) -> Option<&LockMetrics> {
        match self {
            LockResult::Locked(m) => Some(m),
            LockResult::NoLockPoint => None,
        }
    }
}

/// Extract the lock point, slope, and capture range from an error signal.
pub fn lock_metrics(sig: &ErrorSignal) -> LockResult {
    let x = &sig.scan_values;
    let v = &sig.values;
    let Some((left, xc)) = central_crossing(x, v) else {
        return LockResult::NoLockPoint;
    };
    let ic = nearest_sample(x, left, xc);
    let slope = lsq_slope_around(x, v, ic);
    if !slope.is_finite() {
        return LockResult::NoLockPoint;
    }
    let (x_lo, clip_lo) = flanking_extremum_left(x, v, left);
    let (x_hi, clip_hi) = flanking_extremum_right(x, v, left + 1);
    LockResult::Locked(LockMetrics {
        zero_crossing: xc,
        slope,
        capture_range: (x_hi - x_lo).abs(),
        range_clipped: clip_lo || clip_hi,
    })
}

/// All sign changes of `v`: (left sample index, interpolated crossing
/// position). A sample exactly at zero counts only when strictly bracketed by
/// opposite signs.
fn sign_crossings(x: &[f64], v: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    if v.len() < 2 {
        return out;
    }
    for i in 0..v.len() - 1 {
        let (a, b) = (v[i], v[i + 1]);
        if a == 0.0 {
            if i > 0 && v[i - 1] * b < 0.0 {
                out.push((i, x[i]));
            }
        } else if a * b < 0.0 {
            out.push((i, x[i] + (x[i + 1] - x[i]) * (-a) / (b - a)));
        }
    }
    out
}

/// The sign change nearest the middle of the scan axis.
fn central_crossing(x: &[f64], v: &[f64]) -> Option<(usize, f64)> {
    let crossings = sign_crossings(x, v);
    let mid = 0.5 * (x.first()? + x.last()?);
    crossings
        .into_iter()
        .min_by(|a, b| (a.1 - mid).abs().total_cmp(&(b.1 - mid).abs()))
}

/// Index of the sample (either side of the crossing's cell) closest to `xc`.
fn nearest_sample(x: &[f64], left: usize, xc: f64) -> usize {
    if (xc - x[left]).abs() <= (x[left + 1] - xc).abs() {
        left
    } else {
        left + 1
    }
}

/// Least-squares slope through the samples within ±3 indices of `center`.
fn lsq_slope_around(x: &[f64], v: &[f64], center: usize) -> f64 {
    let lo = center.saturating_sub(3);
    let hi = (center + 3).min(v.len() - 1);
    let m = (hi - lo + 1) as f64;
    let (mut sx, mut sv) = (0.0, 0.0);
    for i in lo..=hi {
        sx += x[i];
        sv += v[i];
    }
    let (xbar, vbar) = (sx / m, sv / m);
    let (mut num, mut den) = (0.0, 0.0);
    for i in lo..=hi {
        num += (x[i] - xbar) * (v[i] - vbar);
        den += (x[i] - xbar) * (x[i] - xbar);
    }
    num / den
}

/// First extremum at or left of sample `start`; falls back to the left scan
/// edge with a clipped flag.
fn flanking_extremum_left(x: &[f64], v: &[f64], start: usize) -> (f64, bool) {
    for k in (1..=start).rev() {
        if k + 1 < v.len() && (v[k] - v[k - 1]) * (v[k + 1] - v[k]) < 0.0 {
            return (x[k], false);
        }
    }
    (x[0], true)
}

/// First extremum at or right of sample `start`; falls back to the right
/// scan edge with a clipped flag.
fn flanking_extremum_right(x: &[f64], v: &[f64], start: usize) -> (f64, bool) {
    for k in start..v.len() - 1 {
        if k > 0 && (v[k] - v[k - 1]) * (v[k + 1] - v[k]) < 0.0 {
            return (x[k], false);
        }
    }
    (*x.last().unwrap(), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tpat_system() -> LadderSystem {
        LadderSystem {
            delta_lower: 0.0,
            delta_upper: 0.0,
            rabi_lower: TAU * 4.8e6,
            rabi_upper: TAU * 36e3,
            gamma_lower: TAU * 1.4e6,
            gamma_upper: TAU * 11e3,
            k_lower: TAU / 420e-9,
            k_upper: TAU / 1020e-9,
            dephasing_ge: 0.0,
            dephasing_gr: 0.0,
        }
    }

    fn upper_scan(half: f64, points: usize) -> ScanSpec {
        ScanSpec { scanned: ScannedDetuning::Upper, start: -half, stop: half, points }
    }

    fn calib() -> OpticalDepthCalibration {
        OpticalDepthCalibration::default()
    }

    #[test]
    fn zero_depth_yields_identically_zero_signal() {
        let modspec = ModulationSpec { depth: 0.0, ..ModulationSpec::default() };
        let sig = error_signal(
            &tpat_system(),
            &upper_scan(TAU * 6e6, 21),
            &GridSpec::cold(),
            &calib(),
            &modspec,
        )
        .unwrap();
        assert!(sig.values().iter().all(|&v| v == 0.0), "zero depth must null the signal exactly");
        assert_eq!(lock_metrics(&sig), LockResult::NoLockPoint);
    }

    #[test]
    fn error_signal_is_odd_for_symmetric_configuration() {
        // δ_l = 0 and a symmetric scan: reflecting δ_u and the modulation
        // phase together maps the configuration onto itself with the signal
        // negated, and the mirror-symmetric velocity grid preserves that
        // under averaging.
        let modspec = ModulationSpec {
            depth: TAU * 1e6,
            samples_per_period: 8,
            demod_phase: Some(0.0),
            ..ModulationSpec::default()
        };
        let grid = GridSpec::thermal(186.13, 64, 17);
        let sig = error_signal(&tpat_system(), &upper_scan(TAU * 6e6, 41), &grid, &calib(), &modspec)
            .unwrap();
        let v = sig.values();
        let n = v.len();
        let amp = v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        assert!(amp > 1e-5, "signal amplitude {amp} too small to test");
        for i in 0..n {
            let asym = (v[i] + v[n - 1 - i]).abs();
            assert!(asym <= 1e-6, "odd-symmetry violation {asym} at index {i}");
        }
    }

    #[test]
    fn small_depth_matches_transmission_derivative() {
        // Quasi-static first-order expansion: with φ = 0 the demodulated
        // amplitude is depth · ∂T_u/∂δ_l. Oracle: central finite difference
        // of the unmodulated transmission with the same calibration anchor.
        let sys = tpat_system();
        let scan = upper_scan(TAU * 6e6, 81);
        let depth = sys.gamma_lower / 100.0;
        let modspec = ModulationSpec {
            depth,
            demod_phase: Some(0.0),
            ..ModulationSpec::default()
        };
        let sig = error_signal(&sys, &scan, &GridSpec::cold(), &calib(), &modspec).unwrap();

        // Finite-difference oracle sharing the normalization anchor.
        let grid = GridSpec::cold().build(&sys).unwrap();
        let values = scan.values();
        let mut peak = 0.0_f64;
        for &su in &values {
            let at = scan.apply(&sys, su);
            peak = peak.max(average_coherence(&at, &grid, Leg::Upper).unwrap().im.max(0.0));
        }
        let h = TAU * 10e3;
        let t_at = |dl: f64, du: f64| -> f64 {
            let shifted = LadderSystem { delta_lower: dl, ..sys };
            let at = scan.apply(&shifted, du);
            let im = average_coherence(&at, &grid, Leg::Upper).unwrap().im.max(0.0);
            (-calib().d_peak_upper * im / peak).exp()
        };
        let oracle: Vec<f64> = values
            .iter()
            .map(|&du| depth * (t_at(h, du) - t_at(-h, du)) / (2.0 * h))
            .collect();

        let imax = (0..oracle.len())
            .max_by(|&a, &b| oracle[a].abs().total_cmp(&oracle[b].abs()))
            .unwrap();
        let rel = (sig.values()[imax] - oracle[imax]).abs() / oracle[imax].abs();
        assert!(rel < 0.01, "derivative mismatch {rel} at the slope maximum");
    }

    #[test]
    fn slope_scales_linearly_with_depth() {
        let sys = tpat_system();
        let scan = upper_scan(TAU * 6e6, 121);
        let depth = sys.gamma_lower / 100.0;
        let slope_at = |d: f64| -> f64 {
            let modspec =
                ModulationSpec { depth: d, demod_phase: Some(0.0), ..ModulationSpec::default() };
            let sig = error_signal(&sys, &scan, &GridSpec::cold(), &calib(), &modspec).unwrap();
            match lock_metrics(&sig) {
                LockResult::Locked(m) => m.slope,
                LockResult::NoLockPoint => panic!("discriminator lost its zero crossing"),
            }
        };
        let s1 = slope_at(depth);
        let s2 = slope_at(2.0 * depth);
        assert_relative_eq!(s2, 2.0 * s1, max_relative = 0.02);
    }

    #[test]
    fn synthetic_linear_signal_recovers_slope_and_flags_clipping() {
        let scan = upper_scan(TAU * 5e6, 51);
        let x = scan.values();
        let s = 3.5e-9;
        let sig = ErrorSignal {
            values: x.iter().map(|&xi| s * xi).collect(),
            scan_values: x,
            demod_phase: 0.0,
            quasi_static_ok: true,
        };
        match lock_metrics(&sig) {
            LockResult::Locked(m) => {
                assert_relative_eq!(m.slope, s, max_relative = 1e-12);
                assert!(m.zero_crossing.abs() < 1e-9);
                assert_relative_eq!(m.capture_range, TAU * 10e6, max_relative = 1e-12);
                assert!(m.range_clipped, "monotone signal must flag clipped range");
            }
            LockResult::NoLockPoint => panic!("linear signal crosses zero"),
        }
    }

    #[test]
    fn capture_range_grows_with_rabi_lower() {
        // The discriminator lobes track the dressed-state doublet, so the
        // capture range must widen monotonically with the lower-leg drive.
        let scan = upper_scan(TAU * 14e6, 141);
        let modspec = ModulationSpec {
            depth: TAU * 1e6,
            samples_per_period: 16,
            demod_phase: Some(0.0),
            ..ModulationSpec::default()
        };
        let mut prev = 0.0;
        for mhz in [4.8, 9.6, 14.4, 19.2] {
            let sys = LadderSystem { rabi_lower: TAU * mhz * 1e6, ..tpat_system() };
            let sig = error_signal(&sys, &scan, &GridSpec::cold(), &calib(), &modspec).unwrap();
            let m = match lock_metrics(&sig) {
                LockResult::Locked(m) => m,
                LockResult::NoLockPoint => panic!("no lock point at rabi_lower = 2pi x {mhz} MHz"),
            };
            assert!(
                m.capture_range > prev,
                "capture range not growing: {prev} -> {} at rabi_lower = 2pi x {mhz} MHz",
                m.capture_range
            );
            assert!(!m.range_clipped, "scan too narrow at rabi_lower = 2pi x {mhz} MHz");
            prev = m.capture_range;
        }
    }

    #[test]
    fn auto_phase_maximizes_central_slope() {
        let sys = tpat_system();
        let scan = upper_scan(TAU * 6e6, 81);
        let modspec =
            ModulationSpec { depth: TAU * 0.5e6, samples_per_period: 16, ..ModulationSpec::default() };
        let auto = error_signal(&sys, &scan, &GridSpec::cold(), &calib(), &modspec).unwrap();
        let m = match lock_metrics(&auto) {
            LockResult::Locked(m) => m,
            LockResult::NoLockPoint => panic!("auto-phased discriminator must lock"),
        };
        assert!(m.slope > 0.0, "auto phase must leave a positive central slope");
        assert!(auto.demod_phase().is_finite());

        // A quarter-turn away the first-harmonic content vanishes.
        let off = ModulationSpec {
            demod_phase: Some(auto.demod_phase() + std::f64::consts::FRAC_PI_2),
            ..modspec
        };
        let quad = error_signal(&sys, &scan, &GridSpec::cold(), &calib(), &off).unwrap();
        let amp_auto = auto.values().iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let amp_quad = quad.values().iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        assert!(
            amp_quad < 1e-6 * amp_auto,
            "quadrature amplitude {amp_quad} should be negligible against {amp_auto}"
        );
    }

    #[test]
    fn quasi_static_flag_tracks_modulation_frequency() {
        let sys = tpat_system();
        let scan = upper_scan(TAU * 6e6, 11);
        let slow = ModulationSpec::default(); // 300 kHz against Γ_l = 2π × 1.4 MHz
        let sig = error_signal(&sys, &scan, &GridSpec::cold(), &calib(), &slow).unwrap();
        assert!(sig.quasi_static_ok());

        let fast = ModulationSpec { f_mod: 1.4e6, ..ModulationSpec::default() };
        let sig = error_signal(&sys, &scan, &GridSpec::cold(), &calib(), &fast).unwrap();
        assert!(!sig.quasi_static_ok());
    }

    #[test]
    fn modulation_spec_validation_rejects_bad_fields() {
        assert!(ModulationSpec::default().validate().is_ok());
        for bad in [
            ModulationSpec { f_mod: 0.0, ..ModulationSpec::default() },
            ModulationSpec { f_mod: f64::NAN, ..ModulationSpec::default() },
            ModulationSpec { depth: -1.0, ..ModulationSpec::default() },
            ModulationSpec { demod_phase: Some(f64::INFINITY), ..ModulationSpec::default() },
            ModulationSpec { samples_per_period: 6, ..ModulationSpec::default() },
            ModulationSpec { samples_per_period: 9, ..ModulationSpec::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?} should fail validation");
        }
    }

    #[test]
    fn error_signal_requires_upper_scan() {
        let scan = ScanSpec {
            scanned: ScannedDetuning::Lower,
            start: -TAU * 1e6,
            stop: TAU * 1e6,
            points: 11,
        };
        let err = error_signal(
            &tpat_system(),
            &scan,
            &GridSpec::cold(),
            &calib(),
            &ModulationSpec::default(),
        );
        assert!(err.is_err());
    }
}
