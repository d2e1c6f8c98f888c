//! Velocity grids and Maxwell–Boltzmann averaging of optical coherences.
//!
//! A thermal vapor mixes velocity classes whose Doppler shifts move narrow
//! features across the spectrum, so a uniform velocity grid either misses the
//! resonant classes or wastes thousands of solver calls. The grids built here
//! combine a uniform base covering ±4.5σ_v with refinement windows that track
//! the three resonant velocities of the ladder:
//!
//! - v₁ = δ_l/k_l (lower leg alone resonant),
//! - v₂ = −δ_u/k_u (upper leg alone resonant),
//! - v₁₂ = (δ_l + δ_u)/(k_l − k_u) (two-photon resonance; for
//!   counter-propagating beams the residual Doppler coefficient is
//!   k_l − k_u).
//!
//! Each window carries a fine uniform core sized by the total rate scale, an
//! intermediate padding zone that eases the transition back to the base grid,
//! and — for the two-photon window — an extra sub-window resolving the
//! transparency notch, whose width (dephasing plus power broadening) can be
//! orders of magnitude below every other scale. Weights are trapezoid cells
//! multiplied by the Maxwell–Boltzmann density and normalized against their
//! own sum, so they always add to 1 within a tight band no matter how the
//! node set was assembled.

use crate::error::LadderError;
use crate::lindblad::{steady_state, LadderSystem};
use crate::Result;
use num_complex::Complex64;
use rayon::prelude::*;

/// Which optical transition a coherence or spectrum refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    /// The g–e transition driven by the lower-leg laser.
    Lower,
    /// The e–r transition driven by the upper-leg laser.
    Upper,
}

/// Which detuning a scan sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScannedDetuning {
    /// Sweep δ_l, holding δ_u fixed.
    Lower,
    /// Sweep δ_u, holding δ_l fixed.
    Upper,
}

/// A linear detuning scan (angular frequencies, rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSpec {
    /// Detuning being swept.
    pub scanned: ScannedDetuning,
    /// First scan value, rad/s.
    pub start: f64,
    /// Last scan value (inclusive), rad/s.
    pub stop: f64,
    /// Number of scan points, ≥ 2.
    pub points: usize,
}

impl ScanSpec {
    /// Check field-level invariants; first violation wins.
    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(LadderError::domain(
                "ScanSpec.start/stop",
                format!("must be finite, got {}..{}", self.start, self.stop),
            ));
        }
        if self.points < 2 {
            return Err(LadderError::domain(
                "ScanSpec.points",
                format!("need at least 2 scan points, got {}", self.points),
            ));
        }
        Ok(())
    }

    /// The scan axis: `points` values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| self.start + (self.stop - self.start) * (i as f64) / denom)
            .collect()
    }

    /// The system with the scanned detuning set to `value`.
    pub fn apply(&self, sys: &LadderSystem, value: f64) -> LadderSystem {
        match self.scanned {
            ScannedDetuning::Lower => LadderSystem { delta_lower: value, ..*sys },
            ScannedDetuning::Upper => LadderSystem { delta_upper: value, ..*sys },
        }
    }
}

/// The three resonant velocities [v₁, v₂, v₁₂] of the system.
///
/// v₁ zeroes the lower-leg detuning, v₂ the upper-leg detuning, and v₁₂ the
/// two-photon detuning δ_l′ + δ_u′. With equal wavevectors the two-photon
/// shift cancels for every velocity class: the third entry is then ±∞ when a
/// finite two-photon detuning can never be bridged, or 0 when every class is
/// resonant simultaneously.
pub fn resonant_velocities(sys: &LadderSystem) -> [f64; 3] {
    let v1 = sys.delta_lower / sys.k_lower;
    let v2 = -sys.delta_upper / sys.k_upper;
    let dk = sys.k_lower - sys.k_upper;
    let mut v12 = (sys.delta_lower + sys.delta_upper) / dk;
    if v12.is_nan() {
        v12 = 0.0;
    }
    [v1, v2, v12]
}

/// A refinement window: uniform nodes covering `[lo − half_width, hi + half_width]`.
#[derive(Debug, Clone, Copy)]
struct Window {
    lo: f64,
    hi: f64,
    half_width: f64,
    spacing: f64,
}

impl Window {
    fn emit(&self, nodes: &mut Vec<f64>) {
        let center = 0.5 * (self.lo + self.hi);
        let extent = 0.5 * (self.hi - self.lo) + self.half_width;
        if !(extent > 0.0) || !extent.is_finite() || !(self.spacing > 0.0) {
            return;
        }
        let m = (extent / self.spacing).ceil() as i64;
        let m = m.max(1).min(400_000);
        let step = extent / (m as f64);
        for i in -m..=m {
            nodes.push(center + (i as f64) * step);
        }
    }
}

/// Total rate scale of the system: every decay, dephasing, and Rabi frequency.
fn rate_scale(sys: &LadderSystem) -> f64 {
    sys.gamma_lower
        + sys.gamma_upper
        + sys.rabi_lower
        + sys.rabi_upper
        + sys.dephasing_ge
        + sys.dephasing_gr
}

/// Width of the two-photon transparency notch: dephasing plus power
/// broadening, capped at the total rate scale (beyond which the ordinary
/// windows already resolve everything).
fn notch_rate(sys: &LadderSystem) -> f64 {
    let gamma_ge = sys.gamma_ge();
    let power = if gamma_ge > 0.0 {
        0.25 * (sys.rabi_lower * sys.rabi_lower + sys.rabi_upper * sys.rabi_upper) / gamma_ge
    } else {
        f64::INFINITY
    };
    (sys.gamma_gr() + power).min(rate_scale(sys))
}

/// Grid-construction parameters. `sigma_v = 0` selects the exact cold limit
/// (a single stationary atom); anything positive builds a thermal quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Thermal velocity spread, m/s (0 = stationary atom).
    pub sigma_v: f64,
    /// Uniform base nodes over ±4.5σ_v.
    pub base_points: usize,
    /// Node-density control for the refinement windows.
    pub window_points: usize,
}

impl GridSpec {
    /// The stationary cold-atom grid.
    pub fn cold() -> Self {
        Self { sigma_v: 0.0, base_points: 1, window_points: 0 }
    }

    /// A thermal grid specification.
    pub fn thermal(sigma_v: f64, base_points: usize, window_points: usize) -> Self {
        Self { sigma_v, base_points, window_points }
    }

    /// True if this spec selects the stationary cold limit.
    pub fn is_cold(&self) -> bool {
        self.sigma_v == 0.0
    }

    /// Build the grid for a fixed system.
    pub fn build(&self, sys: &LadderSystem) -> Result<VelocityGrid> {
        if self.is_cold() {
            return Ok(VelocityGrid::stationary());
        }
        VelocityGrid::build(sys, self.sigma_v, self.base_points, self.window_points)
    }

    /// Build the grid for a system swept by `scan`.
    pub fn build_for_scan(&self, sys: &LadderSystem, scan: &ScanSpec) -> Result<VelocityGrid> {
        if self.is_cold() {
            scan.validate()?;
            return Ok(VelocityGrid::stationary());
        }
        VelocityGrid::build_for_scan(sys, scan, self.sigma_v, self.base_points, self.window_points)
    }
}

/// Velocity quadrature: nodes, Maxwell–Boltzmann weights, and the parameters
/// needed to rebuild a compatible grid for a reference system.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    sigma_v: f64,
    base_points: usize,
    window_points: usize,
}

impl VelocityGrid {
    /// The single-node grid of an atom at rest: the exact cold limit through
    /// the same averaging code path.
    pub fn stationary() -> Self {
        Self {
            nodes: vec![0.0],
            weights: vec![1.0],
            sigma_v: 0.0,
            base_points: 1,
            window_points: 0,
        }
    }

    /// Build a grid refined around the resonant velocities of `sys`.
    ///
    /// `base_points` controls the uniform base over ±4.5σ_v (forced odd so a
    /// node sits exactly at v = 0); `window_points` controls the density of
    /// each refinement window.
    pub fn build(
        sys: &LadderSystem,
        sigma_v: f64,
        base_points: usize,
        window_points: usize,
    ) -> Result<Self> {
        Self::build_windows(sys, sys, sigma_v, base_points, window_points)
    }

    /// Build a grid whose refinement windows cover every velocity that
    /// becomes resonant anywhere in `scan`.
    ///
    /// The resonant velocities are linear in the detunings, so the band swept
    /// by each one is bounded by its values at the scan endpoints.
    pub fn build_for_scan(
        sys: &LadderSystem,
        scan: &ScanSpec,
        sigma_v: f64,
        base_points: usize,
        window_points: usize,
    ) -> Result<Self> {
        scan.validate()?;
        let at_start = scan.apply(sys, scan.start);
        let at_stop = scan.apply(sys, scan.stop);
        Self::build_windows(&at_start, &at_stop, sigma_v, base_points, window_points)
    }

    /// Build a plain uniform grid over ±`half_range` with Maxwell–Boltzmann
    /// trapezoid weights — the natural quadrature for rendering velocity maps
    /// at a fixed display resolution.
    ///
    /// Weights are normalized over the grid, so averages taken on a
    /// restricted range are conditional on the velocity lying inside it.
    pub fn uniform(sigma_v: f64, half_range: f64, points: usize) -> Result<Self> {
        if !(sigma_v > 0.0) || !sigma_v.is_finite() {
            return Err(LadderError::domain(
                "VelocityGrid.sigma_v",
                format!("must be finite and > 0, got {sigma_v}"),
            ));
        }
        if !(half_range > 0.0) || !half_range.is_finite() {
            return Err(LadderError::domain(
                "VelocityGrid.half_range",
                format!("must be finite and > 0, got {half_range}"),
            ));
        }
        if points < 2 {
            return Err(LadderError::domain(
                "VelocityGrid.points",
                format!("need at least 2 points, got {points}"),
            ));
        }
        let n = if points % 2 == 0 { points + 1 } else { points };
        let h = 2.0 * half_range / ((n - 1) as f64);
        let center = ((n - 1) / 2) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| ((i as f64) - center) * h).collect();
        let weights = maxwell_trapezoid_weights(&nodes, sigma_v);
        let grid = Self { nodes, weights, sigma_v, base_points: n, window_points: 0 };
        grid.validate()?;
        Ok(grid)
    }

    fn build_windows(
        sys_a: &LadderSystem,
        sys_b: &LadderSystem,
        sigma_v: f64,
        base_points: usize,
        window_points: usize,
    ) -> Result<Self> {
        sys_a.validate()?;
        sys_b.validate()?;
        if !(sigma_v > 0.0) || !sigma_v.is_finite() {
            return Err(LadderError::domain(
                "VelocityGrid.sigma_v",
                format!("must be finite and > 0, got {sigma_v}"),
            ));
        }
        if base_points < 16 {
            return Err(LadderError::domain(
                "VelocityGrid.base_points",
                format!("need at least 16 base points, got {base_points}"),
            ));
        }
        if window_points != 0 && window_points < 8 {
            return Err(LadderError::domain(
                "VelocityGrid.window_points",
                format!("need 0 (uniform base only) or at least 8 window points, got {window_points}"),
            ));
        }

        // Uniform base over ±4.5σ with an odd node count: nodes are built as
        // (i − c)·h so the set is mirror-symmetric to the last bit.
        let n_base = if base_points % 2 == 0 { base_points + 1 } else { base_points };
        let span = 4.5 * sigma_v;
        let base_h = 2.0 * span / ((n_base - 1) as f64);
        let center = ((n_base - 1) / 2) as f64;
        let mut nodes: Vec<f64> = (0..n_base).map(|i| ((i as f64) - center) * base_h).collect();

        // Refinement windows around each resonant velocity (or the band it
        // sweeps): a fine core, an intermediate padding zone, and for the
        // two-photon family an extra notch-resolving sub-window. A window
        // count of zero keeps the plain uniform base, which is what map
        // renderings want: fixed resolution, no adaptive clustering.
        let wp = match window_points {
            0 => 0,
            w if w % 2 == 0 => w + 1,
            w => w,
        };
        if wp > 0 {
            let va = resonant_velocities(sys_a);
            let vb = resonant_velocities(sys_b);
            let rate = rate_scale(sys_a);
            let dk = (sys_a.k_lower - sys_a.k_upper).abs();
            let fine_denom = (wp - 1) as f64;
    
            // Narrowest response width: decay and dephasing only. Rabi drives
            // widen the window a feature can appear in (Autler–Townes splitting)
            // but not the feature's own linewidth, so they enter the window
            // half-widths, not the node spacing.
            let gamma_nar = sys_a.gamma_lower
                + sys_a.gamma_upper
                + sys_a.dephasing_ge
                + sys_a.dephasing_gr;
            let feature_rate = if gamma_nar > 0.0 { gamma_nar } else { rate };
    
            let scales = [sys_a.k_lower, sys_a.k_upper, dk];
            for family in 0..3 {
                let (a, b) = (va[family], vb[family]);
                if !a.is_finite() || !b.is_finite() || scales[family] <= 0.0 {
                    continue;
                }
                let (lo, hi) = (a.min(b), a.max(b));
                let band = hi - lo;
                let core = 5.0 * rate / scales[family];
                if !core.is_finite() || core <= 0.0 {
                    continue;
                }
                // Velocity width of the narrowest feature this family can host.
                // The two-photon family also carries the dressed-state spikes,
                // whose slopes involve the single-photon wavevectors.
                let mut feature_v = feature_rate / scales[family];
                if family == 2 {
                    feature_v = feature_v
                        .min(0.5 * feature_rate / sys_a.k_lower)
                        .min(0.5 * feature_rate / sys_a.k_upper);
                }
                // Fine core: dense enough for both the window count and the
                // feature width, floored to keep the node count bounded.
                let sp_fine = (2.0 * core / fine_denom)
                    .min(12.0 * feature_v / fine_denom)
                    .max((band + 2.0 * core) / 6000.0);
                Window { lo, hi, half_width: core, spacing: sp_fine }.emit(&mut nodes);
                // Intermediate padding: five times wider, much finer than the
                // base. Softens the trapezoid-rule jump where the Lorentzian
                // tails meet the coarse base grid.
                Window { lo, hi, half_width: 5.0 * core, spacing: (0.1 * base_h).max(sp_fine) }
                    .emit(&mut nodes);
                if family == 2 {
                    // Transparency-notch sub-window: the two-photon dip can be
                    // orders of magnitude narrower than every other scale.
                    let notch_w = 8.0 * notch_rate(sys_a) / scales[family];
                    let sp_n = (12.0 * feature_v.min(notch_rate(sys_a) / scales[family]) / fine_denom)
                        .max((band + 2.0 * notch_w) / 6000.0);
                    if notch_w.is_finite() && notch_w > 0.0 && notch_w < core && sp_n < 0.9 * sp_fine {
                        Window { lo, hi, half_width: notch_w, spacing: sp_n }.emit(&mut nodes);
                    }
                }
            }
        }

        nodes.retain(|v| v.is_finite());
        nodes.sort_unstable_by(f64::total_cmp);
        nodes.dedup();
        if nodes.len() > 3_000_000 {
            return Err(LadderError::numerical(
                "VelocityGrid",
                format!("grid exploded to {} nodes; check rates and wavevectors", nodes.len()),
            ));
        }

        let weights = maxwell_trapezoid_weights(&nodes, sigma_v);
        let grid = Self { nodes, weights, sigma_v, base_points: n_base, window_points: wp };
        grid.validate()?;
        Ok(grid)
    }

    /// Quadrature nodes, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Maxwell–Boltzmann quadrature weights, aligned with [`Self::nodes`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Thermal velocity spread the weights were built for (0 for the
    /// stationary grid).
    pub fn sigma_v(&self) -> f64 {
        self.sigma_v
    }

    /// Base-grid node count used at construction.
    pub fn base_points(&self) -> usize {
        self.base_points
    }

    /// Window node count used at construction.
    pub fn window_points(&self) -> usize {
        self.window_points
    }

    /// Number of quadrature nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True if the grid has no nodes (never produced by the constructors).
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of the quadrature weights.
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Check grid invariants: ascending finite nodes, non-negative weights,
    /// and a weight sum inside [1 − 1e-6, 1].
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() || self.nodes.len() != self.weights.len() {
            return Err(LadderError::numerical(
                "VelocityGrid",
                format!("{} nodes vs {} weights", self.nodes.len(), self.weights.len()),
            ));
        }
        if self.nodes.len() == 1 {
            if self.sigma_v != 0.0 {
                return Err(LadderError::numerical(
                    "VelocityGrid",
                    "single-node grid only valid for a stationary atom",
                ));
            }
            if self.weights[0] != 1.0 {
                return Err(LadderError::numerical("VelocityGrid", "stationary weight must be 1"));
            }
            return Ok(());
        }
        for pair in self.nodes.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(LadderError::numerical(
                    "VelocityGrid",
                    format!("nodes not strictly ascending near {}", pair[0]),
                ));
            }
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(LadderError::numerical("VelocityGrid", "negative or non-finite weight"));
        }
        let sum = self.weight_sum();
        if !(sum >= 1.0 - 1e-6 && sum <= 1.0) {
            return Err(LadderError::numerical(
                "VelocityGrid",
                format!("weight sum {sum} outside [1 − 1e-6, 1]"),
            ));
        }
        Ok(())
    }
}

/// Trapezoid-rule weights against the Maxwell–Boltzmann density, normalized
/// by their own sum (padded by one part in 10¹² so the float total always
/// lands at or just below 1).
fn maxwell_trapezoid_weights(nodes: &[f64], sigma_v: f64) -> Vec<f64> {
    let n = nodes.len();
    if n == 1 {
        return vec![1.0];
    }
    let norm = 1.0 / (sigma_v * (2.0 * std::f64::consts::PI).sqrt());
    let pdf = |v: f64| norm * (-0.5 * (v / sigma_v) * (v / sigma_v)).exp();
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let cell = match i {
            0 => 0.5 * (nodes[1] - nodes[0]),
            _ if i == n - 1 => 0.5 * (nodes[n - 1] - nodes[n - 2]),
            _ => 0.5 * (nodes[i + 1] - nodes[i - 1]),
        };
        raw.push(pdf(nodes[i]) * cell);
    }
    let total: f64 = raw.iter().sum();
    let scale = 1.0 / (total * (1.0 + 1e-12));
    raw.iter_mut().for_each(|w| *w *= scale);
    raw
}

/// Steady-state coherence of the requested leg at one velocity, normalized by
/// half the driving Rabi frequency (ρ_ge/(Ω_l/2) or ρ_er/(Ω_u/2)).
fn node_coherence(sys: &LadderSystem, v: f64, leg: Leg) -> Result<Complex64> {
    let rho = steady_state(sys, v)?;
    let (value, omega) = match leg {
        Leg::Lower => (rho.coherence_ge(), sys.rabi_lower),
        Leg::Upper => (rho.coherence_er(), sys.rabi_upper),
    };
    Ok(value / Complex64::new(0.5 * omega, 0.0))
}

fn require_drive(sys: &LadderSystem, leg: Leg) -> Result<()> {
    let (name, omega) = match leg {
        Leg::Lower => ("rabi_lower", sys.rabi_lower),
        Leg::Upper => ("rabi_upper", sys.rabi_upper),
    };
    if omega <= 0.0 {
        return Err(LadderError::domain(
            "average_coherence",
            format!("{name} must be > 0 to normalize the {leg:?}-leg coherence"),
        ));
    }
    Ok(())
}

/// Normalized coherence of one leg at every grid node (ascending node order).
///
/// This is the shared evaluation path for spectra and velocity-class maps:
/// averaging these values with the grid weights in ascending order is, bit
/// for bit, what [`average_coherence`] returns.
pub fn per_velocity_coherence(
    sys: &LadderSystem,
    grid: &VelocityGrid,
    leg: Leg,
) -> Result<Vec<Complex64>> {
    sys.validate()?;
    grid.validate()?;
    require_drive(sys, leg)?;
    grid.nodes.par_iter().map(|&v| node_coherence(sys, v, leg)).collect()
}

/// Maxwell–Boltzmann average of the normalized coherence of one leg.
pub fn average_coherence(sys: &LadderSystem, grid: &VelocityGrid, leg: Leg) -> Result<Complex64> {
    let chis = per_velocity_coherence(sys, grid, leg)?;
    Ok(weighted_sum(&grid.weights, &chis))
}

/// Maxwell–Boltzmann averages of both legs from a single steady-state pass:
/// (⟨ρ_ge⟩/(Ω_l/2), ⟨ρ_er⟩/(Ω_u/2)).
pub fn average_coherences(
    sys: &LadderSystem,
    grid: &VelocityGrid,
) -> Result<(Complex64, Complex64)> {
    sys.validate()?;
    grid.validate()?;
    require_drive(sys, Leg::Lower)?;
    require_drive(sys, Leg::Upper)?;
    let half_l = Complex64::new(0.5 * sys.rabi_lower, 0.0);
    let half_u = Complex64::new(0.5 * sys.rabi_upper, 0.0);
    let pairs: Vec<(Complex64, Complex64)> = grid
        .nodes
        .par_iter()
        .map(|&v| {
            steady_state(sys, v).map(|rho| (rho.coherence_ge() / half_l, rho.coherence_er() / half_u))
        })
        .collect::<Result<_>>()?;
    let mut lower = Complex64::new(0.0, 0.0);
    let mut upper = Complex64::new(0.0, 0.0);
    for (w, (cl, cu)) in grid.weights.iter().zip(&pairs) {
        lower += *w * *cl;
        upper += *w * *cu;
    }
    Ok((lower, upper))
}

fn weighted_sum(weights: &[f64], values: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, x) in weights.iter().zip(values) {
        acc += *w * *x;
    }
    acc
}

/// Velocity-resolved absorption across a detuning scan.
///
/// `values[j·n_v + i]` is the normalized absorption Im χ of the chosen leg at
/// scan point j and velocity node i; `integrated[j]` is the weighted sum over
/// velocity, identical (bitwise) to the imaginary part of
/// [`average_coherence`] at that scan point.
#[derive(Debug, Clone)]
pub struct AbsorptionMap {
    scan_values: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    integrated: Vec<f64>,
}

impl AbsorptionMap {
    /// Scanned detuning values, rad/s.
    pub fn scan_values(&self) -> &[f64] {
        &self.scan_values
    }

    /// Velocity axis (the quadrature nodes), m/s.
    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    /// Quadrature weights aligned with [`Self::velocities`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major map values: scan index major, velocity index minor.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Weighted velocity integral per scan point.
    pub fn integrated(&self) -> &[f64] {
        &self.integrated
    }

    /// Map value at scan index `j`, velocity index `i`.
    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.velocities.len() + i]
    }

    /// One scan row: absorption versus velocity at scan index `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.velocities.len();
        &self.values[j * n..(j + 1) * n]
    }

    /// Number of scan points.
    pub fn n_scan(&self) -> usize {
        self.scan_values.len()
    }

    /// Number of velocity nodes.
    pub fn n_velocity(&self) -> usize {
        self.velocities.len()
    }
}

/// Compute the velocity-class absorption map of one leg across a scan.
pub fn absorption_map(
    sys: &LadderSystem,
    scan: &ScanSpec,
    grid: &VelocityGrid,
    leg: Leg,
) -> Result<AbsorptionMap> {
    scan.validate()?;
    let scan_values = scan.values();
    let n_v = grid.len();
    let mut values = Vec::with_capacity(scan_values.len() * n_v);
    let mut integrated = Vec::with_capacity(scan_values.len());
    for &s in &scan_values {
        let at = scan.apply(sys, s);
        let chis = per_velocity_coherence(&at, grid, leg)?;
        let mut acc = 0.0;
        for (w, chi) in grid.weights.iter().zip(&chis) {
            values.push(chi.im);
            acc += *w * chi.im;
        }
        integrated.push(acc);
    }
    Ok(AbsorptionMap {
        scan_values,
        velocities: grid.nodes.clone(),
        weights: grid.weights.clone(),
        values,
        integrated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::weak_probe_chi_lower;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn eit_system() -> LadderSystem {
        LadderSystem {
            delta_lower: 0.0,
            delta_upper: 0.0,
            rabi_lower: TAU * 40e3,
            rabi_upper: TAU * 1.2e6,
            gamma_lower: TAU * 1.4e6,
            gamma_upper: TAU * 11e3,
            k_lower: TAU / 420e-9,
            k_upper: TAU / 1020e-9,
            dephasing_ge: 0.0,
            dephasing_gr: 0.0,
        }
    }

    #[test]
    fn resonant_velocity_formulas() {
        // δ_l = 2π×10 MHz alone: v₁ = δ_l/k_l = 10 MHz × 420 nm = 4.2 m/s.
        let sys = LadderSystem { delta_lower: TAU * 10e6, ..eit_system() };
        let v = resonant_velocities(&sys);
        assert_relative_eq!(v[0], 4.2, max_relative = 1e-12);

        // δ_u = 2π×10 MHz alone: v₂ = −δ_u/k_u = −10.2 m/s, and the
        // two-photon class v₁₂ = δ_u/(k_l − k_u) = 10 MHz/(1/420nm − 1/1020nm)
        // = +7.1400 m/s.
        let sys = LadderSystem { delta_upper: TAU * 10e6, ..eit_system() };
        let v = resonant_velocities(&sys);
        assert_relative_eq!(v[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(v[1], -10.2, max_relative = 1e-12);
        assert_relative_eq!(v[2], 7.14, max_relative = 1e-4);

        // On resonance every class index is 0.
        let v = resonant_velocities(&eit_system());
        assert_eq!(v, [0.0, 0.0, 0.0]);

        // Degenerate wavevectors: finite two-photon detuning unreachable.
        let sys = LadderSystem {
            k_upper: TAU / 420e-9,
            delta_upper: TAU * 1e6,
            ..eit_system()
        };
        assert!(resonant_velocities(&sys)[2].is_infinite());
        let sys = LadderSystem { k_upper: TAU / 420e-9, ..eit_system() };
        assert_eq!(resonant_velocities(&sys)[2], 0.0);
    }

    #[test]
    fn stationary_grid_reproduces_single_atom() {
        let grid = VelocityGrid::stationary();
        grid.validate().unwrap();
        let sys = eit_system();
        let avg = average_coherence(&sys, &grid, Leg::Lower).unwrap();
        let direct = steady_state(&sys, 0.0).unwrap().coherence_ge()
            / Complex64::new(0.5 * sys.rabi_lower, 0.0);
        assert_eq!(avg, direct);
    }

    #[test]
    fn weight_sums_inside_unit_band() {
        let sys = eit_system();
        for (sigma, base, wp) in [(186.13, 128, 33), (186.13, 512, 129), (12.0, 64, 65), (1e-4, 64, 17)] {
            let grid = VelocityGrid::build(&sys, sigma, base, wp).unwrap();
            let sum = grid.weight_sum();
            assert!(
                (1.0 - 1e-6..=1.0).contains(&sum),
                "weight sum {sum} outside band for σ={sigma}, base={base}, wp={wp}"
            );
        }
    }

    #[test]
    fn symmetric_problem_gives_mirror_symmetric_nodes() {
        // All detunings zero: the resonant set {0} is symmetric, so the node
        // set must mirror exactly, node for node, to the last bit.
        let grid = VelocityGrid::build(&eit_system(), 186.13, 128, 33).unwrap();
        let nodes = grid.nodes();
        let n = nodes.len();
        assert_eq!(n % 2, 1);
        assert_eq!(nodes[n / 2], 0.0);
        for i in 0..n {
            assert_eq!(nodes[i], -nodes[n - 1 - i], "asymmetry at index {i}");
        }
        // Weights mirror too (same cells, symmetric density).
        for i in 0..n {
            assert_relative_eq!(grid.weights()[i], grid.weights()[n - 1 - i], max_relative = 1e-12);
        }
    }

    #[test]
    fn two_level_average_matches_dense_quadrature() {
        // Two-level reduction (Ω_u = 0) with a weak probe: the steady-state
        // average must match a dense Simpson integral of the analytic
        // susceptibility over the same ±4.5σ span, both self-normalized.
        let sigma = 186.13;
        let sys = LadderSystem {
            rabi_upper: 0.0,
            rabi_lower: 1e-4 * TAU * 1.4e6,
            delta_lower: TAU * 50e6,
            ..eit_system()
        };
        let grid = VelocityGrid::build(&sys, sigma, 512, 129).unwrap();
        let avg = average_coherence(&sys, &grid, Leg::Lower).unwrap();

        let span = 4.5 * sigma;
        let n = 20_001;
        let h = 2.0 * span / ((n - 1) as f64);
        let pdf = |v: f64| (-0.5 * (v / sigma) * (v / sigma)).exp();
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for i in 0..n {
            let v = -span + (i as f64) * h;
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            num += c * pdf(v) * weak_probe_chi_lower(&sys, v);
            den += c * pdf(v);
        }
        let dense = num / den;

        let err = (avg - dense).norm() / dense.norm();
        assert!(err < 1.5e-3, "two-level quadrature error {err:e}");
    }

    #[test]
    fn grid_average_converges_under_refinement() {
        let sys = eit_system();
        let coarse = VelocityGrid::build(&sys, 186.13, 256, 65).unwrap();
        let fine = VelocityGrid::build(&sys, 186.13, 512, 129).unwrap();
        let a = average_coherence(&sys, &coarse, Leg::Lower).unwrap();
        let b = average_coherence(&sys, &fine, Leg::Lower).unwrap();
        let rel = (a - b).norm() / b.norm();
        assert!(rel < 1e-3, "refinement moved the average by {rel:e}");
    }

    #[test]
    fn narrow_distribution_approaches_stationary_atom() {
        // The slowest-converging Doppler scale is the two-photon coherence:
        // its curvature enters as ((k_l − k_u)σ/γ_gr)² with γ_gr = Γ_u/2 =
        // 2π×5.5 kHz. At σ_v = 2e-5 m/s that ratio is ~5e-3, leaving a
        // second-order residual safely below 1e-6.
        let sys = eit_system();
        let grid = VelocityGrid::build(&sys, 2e-5, 64, 33).unwrap();
        let avg = average_coherence(&sys, &grid, Leg::Lower).unwrap();
        let cold = average_coherence(&sys, &VelocityGrid::stationary(), Leg::Lower).unwrap();
        let rel = (avg - cold).norm() / cold.norm();
        assert!(rel < 1e-6, "delta-function limit off by {rel:e}");
    }

    #[test]
    fn map_integration_reproduces_average_bitwise() {
        let sys = LadderSystem { rabi_lower: TAU * 4.8e6, rabi_upper: TAU * 36e3, ..eit_system() };
        let scan = ScanSpec {
            scanned: ScannedDetuning::Upper,
            start: -TAU * 6e6,
            stop: TAU * 6e6,
            points: 5,
        };
        let grid = VelocityGrid::build_for_scan(&sys, &scan, 40.0, 64, 17).unwrap();
        let map = absorption_map(&sys, &scan, &grid, Leg::Upper).unwrap();
        assert_eq!(map.n_scan(), 5);
        assert_eq!(map.n_velocity(), grid.len());
        for (j, &s) in map.scan_values().iter().enumerate() {
            let at = scan.apply(&sys, s);
            let avg = average_coherence(&at, &grid, Leg::Upper).unwrap();
            assert_eq!(map.integrated()[j], avg.im, "row {j} integral differs from average");
            let manual: f64 = map.row(j).iter().zip(grid.weights()).map(|(v, w)| v * w).sum();
            assert_relative_eq!(manual, avg.im, max_relative = 1e-12);
        }
    }

    #[test]
    fn scan_windows_cover_moving_resonances() {
        // A wide upper-leg scan drags v₂ and v₁₂ across tens of m/s; the grid
        // must keep fine nodes near the resonant class at both scan ends.
        let sys = LadderSystem { rabi_lower: TAU * 4.8e6, rabi_upper: TAU * 36e3, ..eit_system() };
        let scan = ScanSpec {
            scanned: ScannedDetuning::Upper,
            start: -TAU * 20e6,
            stop: TAU * 20e6,
            points: 3,
        };
        let grid = VelocityGrid::build_for_scan(&sys, &scan, 186.13, 128, 129).unwrap();
        for s in [scan.start, 0.0, scan.stop] {
            let at = scan.apply(&sys, s);
            for v_res in resonant_velocities(&at) {
                let nearest = grid
                    .nodes()
                    .iter()
                    .map(|v| (v - v_res).abs())
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    nearest < 0.2,
                    "no fine node near resonant velocity {v_res} at scan value {s}: nearest {nearest}"
                );
            }
        }
    }

    #[test]
    fn averaging_requires_drive_on_requested_leg() {
        let sys = LadderSystem { rabi_upper: 0.0, ..eit_system() };
        let grid = VelocityGrid::stationary();
        assert!(average_coherence(&sys, &grid, Leg::Upper).is_err());
        assert!(average_coherence(&sys, &grid, Leg::Lower).is_ok());
        assert!(average_coherences(&sys, &grid).is_err());
    }

    #[test]
    fn scan_spec_values_and_validation() {
        let scan = ScanSpec {
            scanned: ScannedDetuning::Lower,
            start: -TAU * 1e6,
            stop: TAU * 1e6,
            points: 5,
        };
        let vals = scan.values();
        assert_eq!(vals.len(), 5);
        assert_eq!(vals[0], scan.start);
        assert_eq!(vals[4], scan.stop);
        assert_relative_eq!(vals[2], 0.0, epsilon = 1e-9);
        let sys = scan.apply(&eit_system(), TAU * 0.3e6);
        assert_eq!(sys.delta_lower, TAU * 0.3e6);
        assert_eq!(sys.delta_upper, 0.0);

        assert!(ScanSpec { points: 1, ..scan }.validate().is_err());
        assert!(ScanSpec { start: f64::NAN, ..scan }.validate().is_err());
    }

    #[test]
    fn zero_window_points_gives_plain_uniform_base() {
        let sys = eit_system();
        let grid = VelocityGrid::build(&sys, 150.0, 64, 0).unwrap();
        assert_eq!(grid.len(), 65); // forced odd
        assert_eq!(grid.window_points(), 0);
        let nodes = grid.nodes();
        assert_relative_eq!(nodes[0], -4.5 * 150.0, max_relative = 1e-12);
        assert_relative_eq!(nodes[64], 4.5 * 150.0, max_relative = 1e-12);
        let h = nodes[1] - nodes[0];
        for w in nodes.windows(2) {
            assert_relative_eq!(w[1] - w[0], h, max_relative = 1e-9);
        }
        assert!(grid.weight_sum() > 1.0 - 1e-6 && grid.weight_sum() <= 1.0);
        // Window counts between 1 and 7 stay rejected.
        assert!(VelocityGrid::build(&sys, 150.0, 64, 4).is_err());
    }

    #[test]
    fn uniform_grid_spans_requested_range() {
        // Zoomed display grid: range much narrower than the thermal spread.
        let grid = VelocityGrid::uniform(186.0, 25.0, 400).unwrap();
        assert_eq!(grid.len(), 401);
        assert_relative_eq!(grid.nodes()[0], -25.0, max_relative = 1e-12);
        assert_relative_eq!(grid.nodes()[400], 25.0, max_relative = 1e-12);
        // Weights are conditional on the window: still normalized.
        assert!(grid.weight_sum() > 1.0 - 1e-6 && grid.weight_sum() <= 1.0);
        assert!(grid.validate().is_ok());

        assert!(VelocityGrid::uniform(0.0, 25.0, 400).is_err());
        assert!(VelocityGrid::uniform(186.0, 0.0, 400).is_err());
        assert!(VelocityGrid::uniform(186.0, 25.0, 1).is_err());
    }
}
