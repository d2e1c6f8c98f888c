//! Detection-noise models, least-squares fitting, and signal-to-noise figures.
//!
//! Two empirical noise models cover the dominant mechanisms of a
//! transmission measurement on a thermal vapor:
//!
//! - [`NoiseModelOd`]: Poisson atom-number fluctuations propagated through
//!   Beer–Lambert, ΔT(D) = √((a·√D·e^{−bD})² + c²) — rising out of the
//!   technical floor c as √D, then extinguished by the e^{−bD} attenuation.
//! - [`NoiseModelWaist`]: beam-size dependence, V_rms(w) = √(a²/w² + b²) —
//!   the interrogated atom number grows as w², so the atomic contribution to
//!   the rms noise falls as 1/w toward the floor b.
//!
//! [`fit`] estimates model parameters from measured series with a damped
//! least-squares (Levenberg–Marquardt) loop over the registered model kinds;
//! models are addressed as trait objects through [`model_by_name`] so
//! callers can select them by configuration string. [`snr`] computes the raw
//! and detector-corrected signal-to-noise figures used to compare
//! measurements against the atom-shot-noise ideal.

use crate::error::LadderError;
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Beer–Lambert/Poisson noise model ΔT(D) = √((a·√D·e^{−bD})² + c²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModelOd {
    /// Amplitude scale of the atomic contribution, signal units.
    pub a: f64,
    /// Optical-depth rescale in the Beer–Lambert attenuation, dimensionless.
    pub b: f64,
    /// Technical noise floor, signal units.
    pub c: f64,
}

impl NoiseModelOd {
    /// Build from a fit-parameter slice `[a, b, c]`.
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() != 3 {
            return Err(LadderError::domain(
                "NoiseModelOd",
                format!("expected 3 parameters [a, b, c], got {}", params.len()),
            ));
        }
        let model = Self { a: params[0], b: params[1], c: params[2] };
        model.validate()?;
        Ok(model)
    }

    /// Parameters in fit order `[a, b, c]`.
    pub fn params(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    /// Check field-level invariants; first violation wins.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("NoiseModelOd.a", self.a),
            ("NoiseModelOd.b", self.b),
            ("NoiseModelOd.c", self.c),
        ] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(LadderError::domain(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Beam-waist noise model V_rms(w) = √(a²/w² + b²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModelWaist {
    /// Atomic contribution scale, signal units × length.
    pub a: f64,
    /// Noise floor, signal units.
    pub b: f64,
}

impl NoiseModelWaist {
    /// Build from a fit-parameter slice `[a, b]`.
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() != 2 {
            return Err(LadderError::domain(
                "NoiseModelWaist",
                format!("expected 2 parameters [a, b], got {}", params.len()),
            ));
        }
        let model = Self { a: params[0], b: params[1] };
        model.validate()?;
        Ok(model)
    }

    /// Parameters in fit order `[a, b]`.
    pub fn params(&self) -> [f64; 2] {
        [self.a, self.b]
    }

    /// Check field-level invariants; first violation wins.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("NoiseModelWaist.a", self.a), ("NoiseModelWaist.b", self.b)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(LadderError::domain(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Transmission noise at optical depth D: ΔT = √((a·√D·e^{−bD})² + c²).
///
/// Monotone out of the floor c at D = 0, maximal at D = 1/(2b) when c = 0,
/// and decaying back to c as the medium goes opaque.
pub fn predict_od_noise(d: f64, model: &NoiseModelOd) -> Result<f64> {
    model.validate()?;
    if !(d >= 0.0) || !d.is_finite() {
        return Err(LadderError::domain(
            "predict_od_noise",
            format!("optical depth must be finite and >= 0, got {d}"),
        ));
    }
    let atomic = model.a * d.sqrt() * (-model.b * d).exp();
    Ok((atomic * atomic + model.c * model.c).sqrt())
}

/// rms noise at beam waist w: V_rms = √(a²/w² + b²).
///
/// The interrogated atom number grows as w², so the atomic term falls as 1/w
/// toward the floor b.
pub fn predict_waist_noise(w: f64, model: &NoiseModelWaist) -> Result<f64> {
    model.validate()?;
    if !(w > 0.0) || !w.is_finite() {
        return Err(LadderError::domain(
            "predict_waist_noise",
            format!("waist must be finite and > 0, got {w}"),
        ));
    }
    let atomic = model.a / w;
    Ok((atomic * atomic + model.b * model.b).sqrt())
}

/// Atom-shot-noise transmission fluctuation at optical depth D with N atoms:
/// ΔT = |dT/dD|·ΔD = e^{−D}·D/√N, from Poisson statistics ΔD/D = 1/√N
/// propagated through T = e^{−D}.
pub fn synth_atom_noise(d: f64, n_atoms: u64) -> Result<f64> {
    if n_atoms == 0 {
        return Err(LadderError::domain("synth_atom_noise", "need at least one atom"));
    }
    if !(d >= 0.0) || !d.is_finite() {
        return Err(LadderError::domain(
            "synth_atom_noise",
            format!("optical depth must be finite and >= 0, got {d}"),
        ));
    }
    Ok((-d).exp() * d / (n_atoms as f64).sqrt())
}

/// Which noise figure to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrMode {
    /// Signal amplitude over the measured off-resonant background rms.
    Raw,
    /// Signal amplitude over the background rms with the detector
    /// contribution subtracted in quadrature.
    Ideal,
}

/// A signal-to-noise figure, or the explicit report that the measurement is
/// detector-limited and the corrected figure is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    /// Finite signal-to-noise ratio.
    Value(f64),
    /// Ideal mode with background rms at or below the detector rms: the
    /// quadrature subtraction leaves no atomic noise to divide by.
    NoiseFloorLimited,
}

impl Snr {
    /// The numeric value, if finite.
    pub fn value(&self) -> Option<f64> {
        match self {
            Snr::Value(v) => Some(*v),
            Snr::NoiseFloorLimited => None,
        }
    }
}

/// Signal-to-noise ratio of a feature of amplitude `signal_amplitude`
/// against a measured `background_rms`, optionally correcting for
/// `detector_rms` (quadrature subtraction) in [`SnrMode::Ideal`].
pub fn snr(
    signal_amplitude: f64,
    background_rms: f64,
    detector_rms: f64,
    mode: SnrMode,
) -> Result<Snr> {
    if !(signal_amplitude >= 0.0) || !signal_amplitude.is_finite() {
        return Err(LadderError::domain(
            "snr",
            format!("signal amplitude must be finite and >= 0, got {signal_amplitude}"),
        ));
    }
    if !(background_rms > 0.0) || !background_rms.is_finite() {
        return Err(LadderError::domain(
            "snr",
            format!("background rms must be finite and > 0, got {background_rms}"),
        ));
    }
    if !(detector_rms >= 0.0) || !detector_rms.is_finite() {
        return Err(LadderError::domain(
            "snr",
            format!("detector rms must be finite and >= 0, got {detector_rms}"),
        ));
    }
    match mode {
        SnrMode::Raw => Ok(Snr::Value(signal_amplitude / background_rms)),
        SnrMode::Ideal => {
            if background_rms <= detector_rms {
                return Ok(Snr::NoiseFloorLimited);
            }
            let atomic = (background_rms * background_rms - detector_rms * detector_rms).sqrt();
            Ok(Snr::Value(signal_amplitude / atomic))
        }
    }
}

/// A measured (x, y) series, optionally tagged with the detection bandwidth
/// the rms values were integrated over (metadata only — never modeled).
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries {
    x: Vec<f64>,
    y: Vec<f64>,
    bandwidth_hz: Option<f64>,
}

impl DataSeries {
    /// Build a series; lengths must match, values must be finite, and at
    /// least one point is required.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(LadderError::domain(
                "DataSeries",
                format!("x and y lengths differ: {} vs {}", x.len(), y.len()),
            ));
        }
        if x.is_empty() {
            return Err(LadderError::domain("DataSeries", "need at least one point"));
        }
        if let Some(bad) = x.iter().chain(&y).find(|v| !v.is_finite()) {
            return Err(LadderError::domain("DataSeries", format!("non-finite entry {bad}")));
        }
        Ok(Self { x, y, bandwidth_hz: None })
    }

    /// Attach the detection bandwidth (Hz) the series was measured with.
    pub fn with_bandwidth(mut self, bandwidth_hz: f64) -> Result<Self> {
        if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
            return Err(LadderError::domain(
                "DataSeries.bandwidth_hz",
                format!("must be finite and > 0, got {bandwidth_hz}"),
            ));
        }
        self.bandwidth_hz = Some(bandwidth_hz);
        Ok(self)
    }

    /// Independent variable.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Dependent variable.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Detection bandwidth metadata, Hz.
    pub fn bandwidth_hz(&self) -> Option<f64> {
        self.bandwidth_hz
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    /// True if the series has no points (constructors forbid this).
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// A fittable noise-model kind: evaluation, analytic partials, and the x
/// domain it accepts. Implementations are registered in [`model_by_name`]
/// and addressed as trait objects so the fitting front end can select a
/// model from a configuration string.
pub trait FitModel: Send + Sync {
    /// Registry name of the model.
    fn name(&self) -> &'static str;

    /// Parameter names in fit order.
    fn param_names(&self) -> &'static [&'static str];

    /// Number of parameters.
    fn param_count(&self) -> usize {
        self.param_names().len()
    }

    /// Model value at `x` for the given parameters (assumed in-domain).
    fn eval(&self, params: &[f64], x: f64) -> f64;

    /// Partial derivatives ∂f/∂pᵢ at `x` into `out` (length `param_count`).
    fn partials(&self, params: &[f64], x: f64, out: &mut [f64]);

    /// Validate one abscissa against the model's domain.
    fn check_x(&self, x: f64) -> Result<()>;
}

/// [`FitModel`] for [`NoiseModelOd`] (parameters `[a, b, c]`, x = optical depth).
#[derive(Debug, Clone, Copy)]
pub struct OdNoiseFit;

impl FitModel for OdNoiseFit {
    fn name(&self) -> &'static str {
        "od-noise"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["a", "b", "c"]
    }

    fn eval(&self, params: &[f64], x: f64) -> f64 {
        let (a, b, c) = (params[0], params[1], params[2]);
        let atomic = a * x.sqrt() * (-b * x).exp();
        (atomic * atomic + c * c).sqrt()
    }

    fn partials(&self, params: &[f64], x: f64, out: &mut [f64]) {
        let (a, b, c) = (params[0], params[1], params[2]);
        let f = self.eval(params, x);
        if f == 0.0 {
            out.fill(0.0);
            return;
        }
        let shape = x * (-2.0 * b * x).exp();
        out[0] = a * shape / f;
        out[1] = -a * a * x * shape / f;
        out[2] = c / f;
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(LadderError::domain(
                "od-noise",
                format!("optical depth must be finite and >= 0, got {x}"),
            ));
        }
        Ok(())
    }
}

/// [`FitModel`] for [`NoiseModelWaist`] (parameters `[a, b]`, x = beam waist).
#[derive(Debug, Clone, Copy)]
pub struct WaistNoiseFit;

impl FitModel for WaistNoiseFit {
    fn name(&self) -> &'static str {
        "waist-noise"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["a", "b"]
    }

    fn eval(&self, params: &[f64], x: f64) -> f64 {
        let (a, b) = (params[0], params[1]);
        let atomic = a / x;
        (atomic * atomic + b * b).sqrt()
    }

    fn partials(&self, params: &[f64], x: f64, out: &mut [f64]) {
        let (a, b) = (params[0], params[1]);
        let f = self.eval(params, x);
        if f == 0.0 {
            out.fill(0.0);
            return;
        }
        out[0] = a / (x * x * f);
        out[1] = b / f;
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(LadderError::domain(
                "waist-noise",
                format!("waist must be finite and > 0, got {x}"),
            ));
        }
        Ok(())
    }
}

/// The registered fittable models.
pub const MODEL_NAMES: [&str; 2] = ["od-noise", "waist-noise"];

/// Look up a registered model by name.
pub fn model_by_name(name: &str) -> Option<&'static dyn FitModel> {
    match name {
        "od-noise" => Some(&OdNoiseFit),
        "waist-noise" => Some(&WaistNoiseFit),
        _ => None,
    }
}

/// Outcome of a damped least-squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Best parameters found, reported non-negative (the model surface is
    /// explored through |p|).
    pub params: Vec<f64>,
    /// Parameter covariance σ̂²·(JᵀJ)⁻¹ at the solution, if JᵀJ was
    /// invertible; symmetric positive semidefinite when converged.
    pub covariance: Option<DMatrix<f64>>,
    /// ℓ₂ norm of the residual vector at the solution.
    pub residual_norm: f64,
    /// Damped-step iterations taken.
    pub iterations: usize,
    /// True when the gradient norm fell below 10⁻¹⁰·(1 + cost) or the
    /// accepted step below 10⁻¹²; false when the iteration cap was hit.
    pub converged: bool,
}

const MAX_ITERATIONS: usize = 200;
const GRADIENT_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e12;

/// Fit a registered model to a data series by damped least squares
/// (Levenberg–Marquardt), minimizing Σ(yᵢ − f(xᵢ; |p|))².
///
/// The surface is explored through |p| so all parameters are reported
/// non-negative. Convergence: ‖Jᵀr‖ < 10⁻¹⁰·(1 + cost) or accepted step
/// < 10⁻¹²; after 200 iterations the best-so-far parameters are returned
/// with `converged = false`.
pub fn fit(model: &dyn FitModel, data: &DataSeries, initial_params: &[f64]) -> Result<FitResult> {
    let k = model.param_count();
    if initial_params.len() != k {
        return Err(LadderError::domain(
            "fit",
            format!("model {} expects {k} parameters, got {}", model.name(), initial_params.len()),
        ));
    }
    if let Some(bad) = initial_params.iter().find(|p| !p.is_finite()) {
        return Err(LadderError::domain("fit", format!("non-finite initial parameter {bad}")));
    }
    if data.len() < 2 * k {
        return Err(LadderError::domain(
            "fit",
            format!("need at least {} points to fit {k} parameters, got {}", 2 * k, data.len()),
        ));
    }
    for &x in data.x() {
        model.check_x(x)?;
    }

    let n = data.len();
    let mut p: Vec<f64> = initial_params.to_vec();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    let residuals = |p: &[f64]| -> DVector<f64> {
        let q: Vec<f64> = p.iter().map(|v| v.abs()).collect();
        DVector::from_iterator(n, data.x().iter().zip(data.y()).map(|(&x, &y)| y - model.eval(&q, x)))
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        let q: Vec<f64> = p.iter().map(|v| v.abs()).collect();
        let mut jac = DMatrix::zeros(n, k);
        let mut row = vec![0.0; k];
        for (i, &x) in data.x().iter().enumerate() {
            model.partials(&q, x, &mut row);
            for (j, (&d, &pj)) in row.iter().zip(p.iter()).enumerate() {
                // Chain rule through |p|: subgradient +1 at exactly zero.
                let sign = if pj < 0.0 { -1.0 } else { 1.0 };
                jac[(i, j)] = sign * d;
            }
        }
        jac
    };

    let mut r = residuals(&p);
    let mut cost = r.norm_squared();

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = jacobian(&p);
        let grad = jac.transpose() * &r;
        if grad.norm() < GRADIENT_TOL * (1.0 + cost) {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;

        // Inner damping loop: grow λ until a step reduces the cost.
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = jtj.clone();
            for j in 0..k {
                damped[(j, j)] += lambda * jtj[(j, j)].max(LAMBDA_MIN);
            }
            if let Some(chol) = damped.cholesky() {
                let step = chol.solve(&grad);
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(&pi, &si)| pi + si).collect();
                let r_trial = residuals(&trial);
                let cost_trial = r_trial.norm_squared();
                if cost_trial < cost {
                    p = trial;
                    r = r_trial;
                    cost = cost_trial;
                    lambda = (lambda / 3.0).max(LAMBDA_MIN);
                    accepted = true;
                    if step.norm() < STEP_TOL {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No step of any damping reduced the cost: the floating-point
            // floor of the surface — as converged as the step criterion gets.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    let p_abs: Vec<f64> = p.iter().map(|v| v.abs()).collect();
    let jac = jacobian(&p_abs);
    let jtj = jac.transpose() * &jac;
    let covariance = jtj.try_inverse().map(|inv| {
        let dof = (n - k).max(1) as f64;
        let scaled = inv * (cost / dof);
        // Symmetrize away the inversion's floating-point asymmetry.
        (&scaled + scaled.transpose()) * 0.5
    });

    Ok(FitResult { params: p_abs, covariance, residual_norm: cost.sqrt(), iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn od_grid(n: usize, max_d: f64) -> Vec<f64> {
        (0..n).map(|i| max_d * (i as f64 + 1.0) / n as f64).collect()
    }

    #[test]
    fn od_noise_examples() {
        let floor = NoiseModelOd { a: 1.0, b: 1.0, c: 0.25 };
        assert_eq!(predict_od_noise(0.0, &floor).unwrap(), 0.25);

        let pure = NoiseModelOd { a: 1.0, b: 1.0, c: 0.0 };
        let peak = predict_od_noise(0.5, &pure).unwrap();
        assert_relative_eq!(peak, 0.5_f64.sqrt() * (-0.5_f64).exp(), max_relative = 1e-15);
        assert!((peak - 0.4289).abs() < 1e-4);

        let dead = NoiseModelOd { a: 0.0, b: 1.0, c: 0.0 };
        for d in [0.0, 0.3, 2.0, 50.0] {
            assert_eq!(predict_od_noise(d, &dead).unwrap(), 0.0);
        }

        // Floors at both ends: → c as D → 0 and as D → ∞.
        let model = NoiseModelOd { a: 0.3, b: 0.8, c: 0.01 };
        assert!((predict_od_noise(1e-12, &model).unwrap() - model.c).abs() < 1e-6);
        assert!((predict_od_noise(40.0, &model).unwrap() - model.c).abs() < 1e-12);
        assert!(predict_od_noise(-0.1, &model).is_err());
    }

    #[test]
    fn od_noise_stationary_point_at_half_inverse_b() {
        // With c = 0 the model is a·√D·e^{−bD}, stationary where
        // d/dD (½ln D − bD) = 0, i.e. D = 1/(2b). Dense-scan argmax check.
        let model = NoiseModelOd { a: 0.7, b: 0.8, c: 0.0 };
        let step = 1e-4;
        let mut best = (0.0, f64::NEG_INFINITY);
        let mut d = step;
        while d < 2.0 {
            let v = predict_od_noise(d, &model).unwrap();
            if v > best.1 {
                best = (d, v);
            }
            d += step;
        }
        assert!((best.0 - 1.0 / (2.0 * model.b)).abs() <= step, "argmax {} vs 0.625", best.0);
    }

    #[test]
    fn waist_noise_examples() {
        let model = NoiseModelWaist { a: 2.0, b: 0.0 };
        assert_relative_eq!(predict_waist_noise(2.0, &model).unwrap(), 1.0, max_relative = 1e-15);
        // Doubling the waist halves the value when the floor is zero.
        let v1 = predict_waist_noise(1.5, &model).unwrap();
        let v2 = predict_waist_noise(3.0, &model).unwrap();
        assert_relative_eq!(v1, 2.0 * v2, max_relative = 1e-15);

        let floored = NoiseModelWaist { a: 2.0, b: 0.05 };
        assert!((predict_waist_noise(1e9, &floored).unwrap() - 0.05).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for w in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let v = predict_waist_noise(w, &floored).unwrap();
            assert!(v < prev, "not decreasing at w = {w}");
            assert!(v >= floored.b);
            prev = v;
        }
        assert!(predict_waist_noise(0.0, &floored).is_err());
        assert!(predict_waist_noise(-1.0, &floored).is_err());
    }

    #[test]
    fn atom_noise_examples() {
        assert_eq!(synth_atom_noise(0.0, 100).unwrap(), 0.0);
        assert_relative_eq!(
            synth_atom_noise(1.0, 1_000_000).unwrap(),
            (-1.0_f64).exp() * 1e-3,
            max_relative = 1e-15
        );
        // Quadrupling the atom number halves the fluctuation exactly.
        let n1 = synth_atom_noise(0.7, 2500).unwrap();
        let n4 = synth_atom_noise(0.7, 10_000).unwrap();
        assert_relative_eq!(n1, 2.0 * n4, max_relative = 1e-15);
        assert!(synth_atom_noise(1.0, 0).is_err());
        assert!(synth_atom_noise(-1.0, 10).is_err());
    }

    #[test]
    fn snr_examples_and_ordering() {
        // Worked example: A = 1 against 0.5 rms with a 0.3 detector floor.
        let raw = snr(1.0, 0.5, 0.3, SnrMode::Raw).unwrap();
        assert_eq!(raw, Snr::Value(2.0));
        let ideal = snr(1.0, 0.5, 0.3, SnrMode::Ideal).unwrap();
        assert_relative_eq!(ideal.value().unwrap(), 2.5, max_relative = 1e-12);

        // Zero detector noise: both modes agree.
        assert_eq!(
            snr(1.0, 0.5, 0.0, SnrMode::Raw).unwrap(),
            snr(1.0, 0.5, 0.0, SnrMode::Ideal).unwrap()
        );
        // Zero amplitude: zero either way.
        assert_eq!(snr(0.0, 0.5, 0.3, SnrMode::Ideal).unwrap(), Snr::Value(0.0));

        // Ideal ≥ raw whenever both are finite.
        for (bg, det) in [(0.5, 0.3), (1.0, 0.2), (0.4, 0.39)] {
            let r = snr(1.0, bg, det, SnrMode::Raw).unwrap().value().unwrap();
            let i = snr(1.0, bg, det, SnrMode::Ideal).unwrap().value().unwrap();
            assert!(i >= r, "ideal {i} < raw {r} at bg {bg}, det {det}");
        }

        // Detector-limited: explicit sentinel, not an error and not infinity.
        assert_eq!(snr(1.0, 0.3, 0.3, SnrMode::Ideal).unwrap(), Snr::NoiseFloorLimited);
        assert_eq!(snr(1.0, 0.2, 0.3, SnrMode::Ideal).unwrap(), Snr::NoiseFloorLimited);
        // But raw mode still works there.
        assert_eq!(snr(1.0, 0.2, 0.3, SnrMode::Raw).unwrap(), Snr::Value(5.0));

        assert!(snr(-1.0, 0.5, 0.0, SnrMode::Raw).is_err());
        assert!(snr(1.0, 0.0, 0.0, SnrMode::Raw).is_err());
        assert!(snr(1.0, 0.5, -0.1, SnrMode::Ideal).is_err());
    }

    #[test]
    fn registry_resolves_models_by_name() {
        for name in MODEL_NAMES {
            let model = model_by_name(name).expect(name);
            assert_eq!(model.name(), name);
            assert_eq!(model.param_count(), model.param_names().len());
        }
        assert!(model_by_name("gaussian").is_none());

        // Trait-object evaluation agrees with the typed predictors bit for bit.
        let od = NoiseModelOd { a: 0.1, b: 0.8, c: 0.02 };
        let od_fit = model_by_name("od-noise").unwrap();
        for d in [0.0, 0.4, 1.3, 3.0] {
            assert_eq!(od_fit.eval(&od.params(), d), predict_od_noise(d, &od).unwrap());
        }
        let waist = NoiseModelWaist { a: 2.0, b: 0.05 };
        let w_fit = model_by_name("waist-noise").unwrap();
        for w in [0.5, 1.0, 4.0] {
            assert_eq!(w_fit.eval(&waist.params(), w), predict_waist_noise(w, &waist).unwrap());
        }
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        let h = 1e-7;
        for (model, params, xs) in [
            (
                model_by_name("od-noise").unwrap(),
                vec![0.1, 0.8, 0.02],
                vec![0.1, 0.5, 1.0, 2.5],
            ),
            (model_by_name("waist-noise").unwrap(), vec![2.0, 0.05], vec![0.5, 1.0, 3.0]),
        ] {
            let k = model.param_count();
            let mut analytic = vec![0.0; k];
            for &x in &xs {
                model.partials(&params, x, &mut analytic);
                for j in 0..k {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    plus[j] += h;
                    minus[j] -= h;
                    let fd = (model.eval(&plus, x) - model.eval(&minus, x)) / (2.0 * h);
                    assert_relative_eq!(analytic[j], fd, max_relative = 1e-5, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn noiseless_od_round_trip_recovers_parameters() {
        let truth = [0.1, 0.8, 0.02];
        let model = model_by_name("od-noise").unwrap();
        let x = od_grid(50, 4.0);
        let y: Vec<f64> = x.iter().map(|&d| model.eval(&truth, d)).collect();
        let data = DataSeries::new(x, y).unwrap();
        let result = fit(model, &data, &[0.05, 0.5, 0.01]).unwrap();
        assert!(result.converged, "fit did not converge: {result:?}");
        for (fitted, expect) in result.params.iter().zip(truth) {
            assert_relative_eq!(fitted, &expect, max_relative = 1e-6);
        }
        assert!(result.residual_norm < 1e-9);
        // Covariance well-formed: symmetric with non-negative diagonal.
        let cov = result.covariance.expect("covariance");
        for i in 0..3 {
            assert!(cov[(i, i)] >= 0.0);
            for j in 0..3 {
                assert_eq!(cov[(i, j)], cov[(j, i)]);
            }
        }
    }

    #[test]
    fn noiseless_waist_round_trip_recovers_parameters() {
        let truth = [2.0, 0.05];
        let model = model_by_name("waist-noise").unwrap();
        let x: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&w| model.eval(&truth, w)).collect();
        let data = DataSeries::new(x, y).unwrap();
        let result = fit(model, &data, &[1.0, 0.1]).unwrap();
        assert!(result.converged);
        for (fitted, expect) in result.params.iter().zip(truth) {
            assert_relative_eq!(fitted, &expect, max_relative = 1e-6);
        }
    }

    #[test]
    fn negative_initial_parameters_are_folded_positive() {
        let truth = [0.1, 0.8, 0.02];
        let model = model_by_name("od-noise").unwrap();
        let x = od_grid(50, 4.0);
        let y: Vec<f64> = x.iter().map(|&d| model.eval(&truth, d)).collect();
        let data = DataSeries::new(x, y).unwrap();
        let result = fit(model, &data, &[-0.05, 0.5, -0.01]).unwrap();
        assert!(result.converged);
        for (fitted, expect) in result.params.iter().zip(truth) {
            assert!(*fitted >= 0.0, "parameter reported negative: {fitted}");
            assert_relative_eq!(fitted, &expect, max_relative = 1e-6);
        }
    }

    #[test]
    fn constant_data_pins_the_floor() {
        // y ≡ c with a zero-amplitude seed: a has no gradient and stays put,
        // c walks to the constant.
        let model = model_by_name("od-noise").unwrap();
        let x = od_grid(30, 3.0);
        let y = vec![0.02; 30];
        let data = DataSeries::new(x, y).unwrap();
        let result = fit(model, &data, &[0.0, 0.5, 0.01]).unwrap();
        assert!(result.converged);
        assert!(result.params[0].abs() < 1e-9, "a = {}", result.params[0]);
        assert_relative_eq!(result.params[2], 0.02, max_relative = 1e-9);
    }

    #[test]
    fn monte_carlo_od_fits_recover_within_five_percent() {
        let truth = [0.1, 0.8, 0.02];
        let model = model_by_name("od-noise").unwrap();
        let x = od_grid(50, 4.0);
        let clean: Vec<f64> = x.iter().map(|&d| model.eval(&truth, d)).collect();
        let peak = clean.iter().copied().fold(0.0_f64, f64::max);
        let noise = Normal::new(0.0, 0.01 * peak).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x0D15_EA5E);
        let mut hits = 0;
        for _ in 0..100 {
            let y: Vec<f64> = clean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
            let data = DataSeries::new(x.clone(), y).unwrap();
            let result = fit(model, &data, &[0.08, 0.6, 0.015]).unwrap();
            let ok = result.converged
                && result
                    .params
                    .iter()
                    .zip(truth)
                    .all(|(fitted, expect)| (fitted - expect).abs() <= 0.05 * expect);
            if ok {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 trials recovered within 5%");
    }

    #[test]
    fn monte_carlo_waist_fits_recover_within_five_percent() {
        // Both parameters must shape the data above the noise: the floor b
        // is chosen comparable to the large-waist asymptote, where it is the
        // only thing left to measure.
        let truth = [2.0, 1.0];
        let model = model_by_name("waist-noise").unwrap();
        let x: Vec<f64> = (1..=50).map(|i| 0.5 + 0.19 * (i - 1) as f64).collect();
        let clean: Vec<f64> = x.iter().map(|&w| model.eval(&truth, w)).collect();
        let peak = clean.iter().copied().fold(0.0_f64, f64::max);
        let noise = Normal::new(0.0, 0.01 * peak).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x0D15_EA5E);
        let mut hits = 0;
        for _ in 0..100 {
            let y: Vec<f64> = clean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
            let data = DataSeries::new(x.clone(), y).unwrap();
            let result = fit(model, &data, &[1.5, 0.8]).unwrap();
            let ok = result.converged
                && result
                    .params
                    .iter()
                    .zip(truth)
                    .all(|(fitted, expect)| (fitted - expect).abs() <= 0.05 * expect);
            if ok {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 trials recovered within 5%");
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let model = model_by_name("od-noise").unwrap();
        let x = od_grid(5, 2.0); // fewer than 2 × 3 points
        let y = vec![0.02; 5];
        let data = DataSeries::new(x, y).unwrap();
        assert!(fit(model, &data, &[0.1, 0.8, 0.02]).is_err());

        let data = DataSeries::new(od_grid(10, 2.0), vec![0.02; 10]).unwrap();
        assert!(fit(model, &data, &[0.1, 0.8]).is_err());
        assert!(fit(model, &data, &[f64::NAN, 0.8, 0.02]).is_err());

        // Out-of-domain abscissa for the model.
        let bad = DataSeries::new(vec![-1.0, 0.5, 1.0, 1.5, 2.0, 2.5], vec![0.02; 6]).unwrap();
        assert!(fit(model, &bad, &[0.1, 0.8, 0.02]).is_err());

        // Waist model rejects non-positive waists.
        let wmodel = model_by_name("waist-noise").unwrap();
        let bad = DataSeries::new(vec![0.0, 0.5, 1.0, 1.5], vec![0.1; 4]).unwrap();
        assert!(fit(wmodel, &bad, &[1.0, 0.1]).is_err());
    }

    #[test]
    fn data_series_validation() {
        assert!(DataSeries::new(vec![1.0, 2.0], vec![0.1]).is_err());
        assert!(DataSeries::new(vec![], vec![]).is_err());
        assert!(DataSeries::new(vec![1.0, f64::NAN], vec![0.1, 0.2]).is_err());
        let s = DataSeries::new(vec![1.0, 2.0], vec![0.1, 0.2]).unwrap();
        assert_eq!(s.bandwidth_hz(), None);
        let s = s.with_bandwidth(4e5).unwrap();
        assert_eq!(s.bandwidth_hz(), Some(4e5));
        assert!(s.clone().with_bandwidth(0.0).is_err());
        assert_eq!(s.len(), 2);
    }
}
