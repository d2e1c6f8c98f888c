//! Unit conventions and the single Hz ↔ rad/s conversion point.
//!
//! Internally every rate, Rabi frequency, detuning, and linewidth is an
//! angular frequency in rad/s. Configuration files, CSV outputs, and reports
//! use ordinary frequencies in Hz. The factor of 2π lives here and nowhere
//! else, so it cannot be applied twice.

use std::f64::consts::TAU;

/// Convert an ordinary frequency in Hz to an angular frequency in rad/s.
pub fn hz_to_angular(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// Convert an angular frequency in rad/s to an ordinary frequency in Hz.
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Convert a temperature in degrees Celsius to kelvin.
pub fn celsius_to_kelvin(t_c: f64) -> f64 {
    t_c + 273.15
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hz_angular_round_trip() {
        for f in [0.0, 1.4e6, 11e3, 3.7e8, -2.5e6] {
            assert_relative_eq!(angular_to_hz(hz_to_angular(f)), f, max_relative = 1e-15);
        }
    }

    #[test]
    fn one_hertz_is_tau_radians_per_second() {
        assert_relative_eq!(hz_to_angular(1.0), TAU);
    }

    #[test]
    fn celsius_conversion() {
        assert_relative_eq!(celsius_to_kelvin(89.0), 362.15);
        assert_relative_eq!(celsius_to_kelvin(-273.15), 0.0);
    }
}
