//! Atomic species data, Rydberg scaling laws, and the thermal environment.
//!
//! The default parameter set describes ⁸⁷Rb driven on a blue lower leg
//! (5S₁/₂ → 6P₃/₂ at 420 nm) and an infrared upper leg to a Rydberg nS state
//! near 1020 nm — an *inverted* wavelength scheme, since the lower-leg
//! wavelength is the shorter one. Upper-leg decay and coupling strengths are
//! anchored at a reference principal quantum number and extrapolated with the
//! usual effective-quantum-number power laws.

use crate::error::LadderError;
use crate::Result;
use std::f64::consts::TAU;

/// Boltzmann constant, J/K (exact SI value).
pub const KB: f64 = 1.380649e-23;

/// Atomic mass unit, kg (CODATA).
pub const AMU: f64 = 1.66053906660e-27;

/// Mass of ⁸⁷Rb in atomic mass units.
pub const RB87_MASS_AMU: f64 = 86.909180527;

/// Which leg carries the shorter wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavelengthScheme {
    /// Lower-leg wavelength shorter than the upper-leg wavelength.
    Inverted,
    /// Lower-leg wavelength longer than (or equal to) the upper-leg one.
    Normal,
}

/// Static atomic parameters of the ladder species.
///
/// Rates are angular frequencies (rad/s); wavelengths are meters.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpec {
    /// Atomic mass, kg.
    pub mass: f64,
    /// Lower-leg (g–e) transition wavelength, m.
    pub lower_wavelength: f64,
    /// Upper-leg (e–r) transition wavelength, m.
    pub upper_wavelength: f64,
    /// Intermediate-state decay rate Γ_l, rad/s.
    pub gamma_lower: f64,
    /// Rydberg-state decay rate at the reference principal number, rad/s.
    pub gamma_upper_ref: f64,
    /// Principal quantum number the upper-leg anchors refer to.
    pub n_ref: u32,
    /// Quantum defect of the Rydberg series.
    pub quantum_defect: f64,
}

impl AtomSpec {
    /// ⁸⁷Rb defaults: 420 nm lower leg, 1020 nm upper leg, Γ_l = 2π × 1.4 MHz,
    /// Γ_u = 2π × 11 kHz anchored at n = 30, quantum defect 3.131 (nS₁/₂).
    pub fn rb87() -> Self {
        Self {
            mass: RB87_MASS_AMU * AMU,
            lower_wavelength: 420e-9,
            upper_wavelength: 1020e-9,
            gamma_lower: TAU * 1.4e6,
            gamma_upper_ref: TAU * 11e3,
            n_ref: 30,
            quantum_defect: 3.131,
        }
    }

    /// Check field-level invariants; first violation wins.
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(LadderError::domain("AtomSpec.mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.lower_wavelength > 0.0) {
            return Err(LadderError::domain(
                "AtomSpec.lower_wavelength",
                format!("must be > 0, got {}", self.lower_wavelength),
            ));
        }
        if !(self.upper_wavelength > 0.0) {
            return Err(LadderError::domain(
                "AtomSpec.upper_wavelength",
                format!("must be > 0, got {}", self.upper_wavelength),
            ));
        }
        if !(self.gamma_lower > 0.0) {
            return Err(LadderError::domain(
                "AtomSpec.gamma_lower",
                format!("must be > 0, got {}", self.gamma_lower),
            ));
        }
        if !(self.gamma_upper_ref >= 0.0) {
            return Err(LadderError::domain(
                "AtomSpec.gamma_upper_ref",
                format!("must be >= 0, got {}", self.gamma_upper_ref),
            ));
        }
        if self.n_ref < 5 {
            return Err(LadderError::domain("AtomSpec.n_ref", format!("must be >= 5, got {}", self.n_ref)));
        }
        if !(self.quantum_defect >= 0.0) {
            return Err(LadderError::domain(
                "AtomSpec.quantum_defect",
                format!("must be >= 0, got {}", self.quantum_defect),
            ));
        }
        Ok(())
    }

    /// Wavelength ordering of the two legs; ⁸⁷Rb defaults are `Inverted`.
    pub fn scheme(&self) -> WavelengthScheme {
        if self.lower_wavelength < self.upper_wavelength {
            WavelengthScheme::Inverted
        } else {
            WavelengthScheme::Normal
        }
    }

    /// Lower-leg wavevector magnitude 2π/λ_l, rad/m.
    pub fn wavevector_lower(&self) -> f64 {
        TAU / self.lower_wavelength
    }

    /// Upper-leg wavevector magnitude 2π/λ_u, rad/m.
    pub fn wavevector_upper(&self) -> f64 {
        TAU / self.upper_wavelength
    }

    /// Effective principal quantum number n* = n − δ_qd.
    ///
    /// Errors for n < 5, where the single-defect description of the series
    /// is meaningless.
    pub fn effective_principal(&self, n: u32) -> Result<f64> {
        if n < 5 {
            return Err(LadderError::domain("effective_principal", format!("n must be >= 5, got {n}")));
        }
        let nstar = f64::from(n) - self.quantum_defect;
        if !(nstar > 0.0) {
            return Err(LadderError::domain(
                "effective_principal",
                format!("n* = {nstar} not positive for n = {n}, defect {}", self.quantum_defect),
            ));
        }
        Ok(nstar)
    }

    /// Rydberg decay rate at principal number n: Γ_u(n) = Γ_ref · (n*_ref/n*)³.
    ///
    /// Radiative lifetimes grow as n*³, so the rate falls with n; the anchor
    /// n = n_ref reproduces `gamma_upper_ref` exactly.
    pub fn scale_gamma_upper(&self, n: u32) -> Result<f64> {
        let nstar = self.effective_principal(n)?;
        let nstar_ref = self.effective_principal(self.n_ref)?;
        Ok(self.gamma_upper_ref * (nstar_ref / nstar).powi(3))
    }

    /// Upper-leg Rabi frequency at principal number n for fixed laser
    /// intensity: Ω_u(n) = Ω_ref · (n*_ref/n*)^(3/2).
    ///
    /// The e–r dipole matrix element scales as n*^(−3/2); `omega_ref` is the
    /// Rabi frequency at n = n_ref (rad/s).
    pub fn scale_omega_upper(&self, n: u32, omega_ref: f64) -> Result<f64> {
        if !(omega_ref >= 0.0) {
            return Err(LadderError::domain(
                "scale_omega_upper",
                format!("omega_ref must be >= 0, got {omega_ref}"),
            ));
        }
        let nstar = self.effective_principal(n)?;
        let nstar_ref = self.effective_principal(self.n_ref)?;
        Ok(omega_ref * (nstar_ref / nstar).powf(1.5))
    }
}

/// Thermal environment of the vapor; `sigma_v` is derived from the
/// temperature at construction and the two never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerEnvironment {
    temperature: f64,
    sigma_v: f64,
}

impl DopplerEnvironment {
    /// Build from a temperature in kelvin and the atom it applies to.
    pub fn new(temperature: f64, atom: &AtomSpec) -> Result<Self> {
        let sigma_v = doppler_sigma(temperature, atom.mass)?;
        Ok(Self { temperature, sigma_v })
    }

    /// Vapor temperature, K.
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// One-dimensional Maxwell-Boltzmann velocity width σ_v = √(k_B T / m), m/s.
    pub fn sigma_v(&self) -> f64 {
        self.sigma_v
    }
}

/// One-dimensional thermal velocity width √(k_B T / m).
///
/// Errors for non-positive temperature or mass.
pub fn doppler_sigma(temperature: f64, mass: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(LadderError::domain(
            "doppler_sigma",
            format!("temperature must be > 0 K, got {temperature}"),
        ));
    }
    if !(mass > 0.0) {
        return Err(LadderError::domain("doppler_sigma", format!("mass must be > 0, got {mass}")));
    }
    Ok((KB * temperature / mass).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn effective_principal_subtracts_defect() {
        let atom = AtomSpec::rb87();
        assert_relative_eq!(atom.effective_principal(30).unwrap(), 26.869, max_relative = 1e-12);
        assert_relative_eq!(atom.effective_principal(80).unwrap(), 76.869, max_relative = 1e-12);
    }

    #[test]
    fn effective_principal_rejects_small_n() {
        let atom = AtomSpec::rb87();
        assert!(atom.effective_principal(4).is_err());
    }

    #[test]
    fn gamma_scaling_anchored_at_reference() {
        let atom = AtomSpec::rb87();
        // The anchor must reproduce the reference rate exactly: (n*/n*)³ = 1.
        assert_eq!(atom.scale_gamma_upper(30).unwrap(), atom.gamma_upper_ref);
    }

    #[test]
    fn gamma_scaling_matches_cubic_law() {
        let atom = AtomSpec::rb87();
        // Independent evaluation of the cubic law at n = 60.
        let expect = TAU * 11e3 * (26.869f64 / 56.869).powi(3);
        assert_relative_eq!(atom.scale_gamma_upper(60).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn omega_scaling_matches_three_halves_law() {
        let atom = AtomSpec::rb87();
        let omega_ref = TAU * 36e3;
        let expect = omega_ref * (26.869f64 / 76.869).powf(1.5);
        assert_relative_eq!(atom.scale_omega_upper(80, omega_ref).unwrap(), expect, max_relative = 1e-12);
        assert_eq!(atom.scale_omega_upper(30, omega_ref).unwrap(), omega_ref);
    }

    #[test]
    fn scalings_strictly_decreasing_in_n() {
        let atom = AtomSpec::rb87();
        let mut prev_gamma = f64::INFINITY;
        let mut prev_omega = f64::INFINITY;
        for n in 10..=120 {
            let g = atom.scale_gamma_upper(n).unwrap();
            let o = atom.scale_omega_upper(n, TAU * 1.2e6).unwrap();
            assert!(g < prev_gamma, "gamma_upper not decreasing at n = {n}");
            assert!(o < prev_omega, "omega_upper not decreasing at n = {n}");
            prev_gamma = g;
            prev_omega = o;
        }
    }

    #[test]
    fn doppler_sigma_thermal_width() {
        // Hand-evaluated √(k_B · 362.15 K / m(⁸⁷Rb)) = 186.13 m/s.
        let atom = AtomSpec::rb87();
        let sigma = doppler_sigma(362.15, atom.mass).unwrap();
        assert!((sigma - 186.13).abs() < 0.1, "sigma_v = {sigma}");
    }

    #[test]
    fn doppler_sigma_quadrupled_temperature_doubles_width() {
        let atom = AtomSpec::rb87();
        let s1 = doppler_sigma(100.0, atom.mass).unwrap();
        let s4 = doppler_sigma(400.0, atom.mass).unwrap();
        assert_relative_eq!(s4, 2.0 * s1, max_relative = 1e-15);
    }

    #[test]
    fn doppler_sigma_rejects_nonpositive_temperature() {
        let atom = AtomSpec::rb87();
        assert!(doppler_sigma(0.0, atom.mass).is_err());
        assert!(doppler_sigma(-1.0, atom.mass).is_err());
        assert!(DopplerEnvironment::new(-5.0, &atom).is_err());
    }

    #[test]
    fn environment_sigma_consistent_with_free_function() {
        let atom = AtomSpec::rb87();
        let env = DopplerEnvironment::new(362.15, &atom).unwrap();
        assert_eq!(env.sigma_v(), doppler_sigma(362.15, atom.mass).unwrap());
        assert_eq!(env.temperature(), 362.15);
    }

    #[test]
    fn rb87_is_inverted_scheme() {
        let atom = AtomSpec::rb87();
        assert_eq!(atom.scheme(), WavelengthScheme::Inverted);
        assert!(atom.validate().is_ok());

        let mut normal = atom.clone();
        normal.lower_wavelength = 780e-9;
        normal.upper_wavelength = 480e-9;
        assert_eq!(normal.scheme(), WavelengthScheme::Normal);
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let mut atom = AtomSpec::rb87();
        atom.gamma_lower = 0.0;
        assert!(atom.validate().is_err());

        let mut atom = AtomSpec::rb87();
        atom.mass = -1.0;
        assert!(atom.validate().is_err());
    }

    #[test]
    fn wavevectors_follow_wavelengths() {
        let atom = AtomSpec::rb87();
        assert_relative_eq!(atom.wavevector_lower(), TAU / 420e-9, max_relative = 1e-15);
        assert_relative_eq!(atom.wavevector_upper(), TAU / 1020e-9, max_relative = 1e-15);
        // Inverted scheme: the lower leg carries the larger wavevector.
        assert!(atom.wavevector_lower() > atom.wavevector_upper());
    }
}
