//! Three-level ladder master equation and its steady state.
//!
//! Basis ordering is (|g⟩, |e⟩, |r⟩) = (0, 1, 2). In the frame rotating with
//! both lasers the Hamiltonian for an atom moving at velocity v reads
//!
//! ```text
//! H/ħ = −δ_l′·|e⟩⟨e| − (δ_l′ + δ_u′)·|r⟩⟨r|
//!       + (Ω_l/2)(|g⟩⟨e| + |e⟩⟨g|) + (Ω_u/2)(|e⟩⟨r| + |r⟩⟨e|)
//! ```
//!
//! with Doppler-shifted detunings δ_l′ = δ_l − k_l·v and δ_u′ = δ_u + k_u·v
//! (counter-propagating beams, velocity measured along the lower-leg beam).
//! Dissipation enters through the decay channels |g⟩⟨e| (rate Γ_l) and
//! |e⟩⟨r| (rate Γ_u) plus optional extra dephasing of the g–e and g–r
//! coherences. Density matrices are 3×3 complex; the generator acts on the
//! row-major vectorization ρ_vec[3i+j] = ρ_ij.

use crate::error::LadderError;
use crate::Result;
use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;

/// 9×9 complex Lindblad generator in row-major vectorization.
pub type Generator = SMatrix<Complex64, 9, 9>;

type Vec9 = SVector<Complex64, 9>;

/// Basis index of the ground state |g⟩.
pub const GROUND: usize = 0;
/// Basis index of the intermediate state |e⟩.
pub const INTERMEDIATE: usize = 1;
/// Basis index of the Rydberg state |r⟩.
pub const RYDBERG: usize = 2;

const fn idx(i: usize, j: usize) -> usize {
    3 * i + j
}

/// Full parameter set of the driven ladder at a given principal number.
///
/// All rates and detunings are angular frequencies (rad/s); wavevectors are
/// rad/m. Detunings are laser-minus-atom: negative values mean red detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderSystem {
    /// Lower-leg (g–e) detuning δ_l, rad/s.
    pub delta_lower: f64,
    /// Upper-leg (e–r) detuning δ_u, rad/s.
    pub delta_upper: f64,
    /// Lower-leg Rabi frequency Ω_l ≥ 0, rad/s.
    pub rabi_lower: f64,
    /// Upper-leg Rabi frequency Ω_u ≥ 0, rad/s.
    pub rabi_upper: f64,
    /// Intermediate-state decay rate Γ_l ≥ 0, rad/s.
    pub gamma_lower: f64,
    /// Rydberg-state decay rate Γ_u ≥ 0, rad/s.
    pub gamma_upper: f64,
    /// Lower-leg wavevector magnitude, rad/m.
    pub k_lower: f64,
    /// Upper-leg wavevector magnitude, rad/m.
    pub k_upper: f64,
    /// Extra g–e coherence decay beyond Γ_l/2, rad/s.
    pub dephasing_ge: f64,
    /// Extra g–r coherence decay beyond Γ_u/2, rad/s.
    pub dephasing_gr: f64,
}

impl LadderSystem {
    /// Assemble a system from atomic data at principal number `n`.
    ///
    /// The upper-leg decay rate is scaled from the atom's reference anchor and
    /// `rabi_upper_ref` (the Rabi frequency the laser would drive at n_ref)
    /// is scaled with the dipole power law. At n = n_ref both reduce to the
    /// reference values exactly.
    pub fn from_atom(
        atom: &crate::atom::AtomSpec,
        n: u32,
        delta_lower: f64,
        delta_upper: f64,
        rabi_lower: f64,
        rabi_upper_ref: f64,
    ) -> Result<Self> {
        atom.validate()?;
        let sys = Self {
            delta_lower,
            delta_upper,
            rabi_lower,
            rabi_upper: atom.scale_omega_upper(n, rabi_upper_ref)?,
            gamma_lower: atom.gamma_lower,
            gamma_upper: atom.scale_gamma_upper(n)?,
            k_lower: atom.wavevector_lower(),
            k_upper: atom.wavevector_upper(),
            dephasing_ge: 0.0,
            dephasing_gr: 0.0,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Same system with extra coherence-decay rates.
    pub fn with_dephasing(mut self, dephasing_ge: f64, dephasing_gr: f64) -> Self {
        self.dephasing_ge = dephasing_ge;
        self.dephasing_gr = dephasing_gr;
        self
    }

    /// Check field-level invariants; first violation wins.
    pub fn validate(&self) -> Result<()> {
        let nonneg: [(&'static str, f64); 6] = [
            ("LadderSystem.rabi_lower", self.rabi_lower),
            ("LadderSystem.rabi_upper", self.rabi_upper),
            ("LadderSystem.gamma_lower", self.gamma_lower),
            ("LadderSystem.gamma_upper", self.gamma_upper),
            ("LadderSystem.dephasing_ge", self.dephasing_ge),
            ("LadderSystem.dephasing_gr", self.dephasing_gr),
        ];
        for (name, value) in nonneg {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(LadderError::domain(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        for (name, value) in [("LadderSystem.k_lower", self.k_lower), ("LadderSystem.k_upper", self.k_upper)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(LadderError::domain(name, format!("must be finite and > 0, got {value}")));
            }
        }
        for (name, value) in
            [("LadderSystem.delta_lower", self.delta_lower), ("LadderSystem.delta_upper", self.delta_upper)]
        {
            if !value.is_finite() {
                return Err(LadderError::domain(name, format!("must be finite, got {value}")));
            }
        }
        Ok(())
    }

    /// Effective lower-leg detuning seen by an atom at velocity `v`.
    pub fn detuning_lower_at(&self, v: f64) -> f64 {
        self.delta_lower - self.k_lower * v
    }

    /// Effective upper-leg detuning seen by an atom at velocity `v`
    /// (counter-propagating upper beam).
    pub fn detuning_upper_at(&self, v: f64) -> f64 {
        self.delta_upper + self.k_upper * v
    }

    /// Two-photon detuning δ_l′ + δ_u′ at velocity `v`; zero on the
    /// g–r dark-state resonance.
    pub fn two_photon_detuning_at(&self, v: f64) -> f64 {
        self.detuning_lower_at(v) + self.detuning_upper_at(v)
    }

    /// Equivalent stationary-atom system: Doppler shifts folded into the
    /// detunings.
    pub fn doppler_shifted(&self, v: f64) -> Self {
        Self {
            delta_lower: self.detuning_lower_at(v),
            delta_upper: self.detuning_upper_at(v),
            ..*self
        }
    }

    /// Total g–e coherence decay rate γ_ge = Γ_l/2 + extra dephasing.
    pub fn gamma_ge(&self) -> f64 {
        0.5 * self.gamma_lower + self.dephasing_ge
    }

    /// Total g–r coherence decay rate γ_gr = Γ_u/2 + extra dephasing.
    pub fn gamma_gr(&self) -> f64 {
        0.5 * self.gamma_upper + self.dephasing_gr
    }
}

/// Steady-state density matrix of the ladder, kept Hermitian with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Matrix3<Complex64>);

impl DensityMatrix {
    /// Wrap and validate a candidate density matrix.
    pub fn new(rho: Matrix3<Complex64>) -> Result<Self> {
        let dm = Self(rho);
        dm.validate()?;
        Ok(dm)
    }

    /// Underlying 3×3 matrix.
    pub fn matrix(&self) -> &Matrix3<Complex64> {
        &self.0
    }

    /// Population of basis state `level` (0 = g, 1 = e, 2 = r).
    pub fn population(&self, level: usize) -> f64 {
        self.0[(level, level)].re
    }

    /// All three populations in basis order.
    pub fn populations(&self) -> [f64; 3] {
        [self.population(GROUND), self.population(INTERMEDIATE), self.population(RYDBERG)]
    }

    /// Lower-leg optical coherence ρ_ge = ⟨g|ρ|e⟩.
    pub fn coherence_ge(&self) -> Complex64 {
        self.0[(GROUND, INTERMEDIATE)]
    }

    /// Upper-leg optical coherence ρ_er = ⟨e|ρ|r⟩.
    pub fn coherence_er(&self) -> Complex64 {
        self.0[(INTERMEDIATE, RYDBERG)]
    }

    /// Two-photon coherence ρ_gr = ⟨g|ρ|r⟩.
    pub fn coherence_gr(&self) -> Complex64 {
        self.0[(GROUND, RYDBERG)]
    }

    /// Enforce the density-matrix contract: Hermitian and unit trace to
    /// 1e-12, populations within [−1e-10, 1 + 1e-10].
    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        for i in 0..3 {
            for j in i..3 {
                let asym = (m[(i, j)] - m[(j, i)].conj()).norm();
                if asym > 1e-12 {
                    return Err(LadderError::numerical(
                        "DensityMatrix",
                        format!("Hermiticity violated at ({i},{j}): |ρ_ij − ρ_ji*| = {asym:e}"),
                    ));
                }
            }
        }
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        if (trace - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(LadderError::numerical("DensityMatrix", format!("trace = {trace} differs from 1")));
        }
        for (level, p) in self.populations().iter().enumerate() {
            if !(*p >= -1e-10 && *p <= 1.0 + 1e-10) {
                return Err(LadderError::numerical(
                    "DensityMatrix",
                    format!("population {level} = {p} outside [−1e-10, 1+1e-10]"),
                ));
            }
        }
        Ok(())
    }
}

/// Lower- and upper-leg optical coherences (ρ_ge, ρ_er) of a state.
pub fn coherences(rho: &DensityMatrix) -> (Complex64, Complex64) {
    (rho.coherence_ge(), rho.coherence_er())
}

fn hamiltonian(sys: &LadderSystem) -> Matrix3<f64> {
    let d1 = sys.delta_lower;
    let d2 = sys.delta_lower + sys.delta_upper;
    let mut h = Matrix3::zeros();
    h[(INTERMEDIATE, INTERMEDIATE)] = -d1;
    h[(RYDBERG, RYDBERG)] = -d2;
    h[(GROUND, INTERMEDIATE)] = 0.5 * sys.rabi_lower;
    h[(INTERMEDIATE, GROUND)] = 0.5 * sys.rabi_lower;
    h[(INTERMEDIATE, RYDBERG)] = 0.5 * sys.rabi_upper;
    h[(RYDBERG, INTERMEDIATE)] = 0.5 * sys.rabi_upper;
    h
}

/// Assemble the 9×9 Lindblad generator L with dρ/dt = L·vec(ρ) at velocity
/// `v` (row-major vectorization).
///
/// Trace is conserved structurally: the three population rows sum to zero in
/// every column.
pub fn build_generator(sys: &LadderSystem, v: f64) -> Generator {
    let shifted = sys.doppler_shifted(v);
    let h = hamiltonian(&shifted);
    let mut l = Generator::zeros();

    // Coherent part: dρ_ij += −i Σ_k (H_ik ρ_kj − ρ_ik H_kj).
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                l[(idx(i, j), idx(k, j))] += Complex64::new(0.0, -h[(i, k)]);
                l[(idx(i, j), idx(i, k))] += Complex64::new(0.0, h[(k, j)]);
            }
        }
    }

    // Decay |g⟩⟨e| at Γ_l: feeds ρ_gg from ρ_ee, damps anything touching e.
    let gl = sys.gamma_lower;
    l[(idx(GROUND, GROUND), idx(INTERMEDIATE, INTERMEDIATE))] += Complex64::new(gl, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            let touches =
                0.5 * gl * ((i == INTERMEDIATE) as u8 as f64 + (j == INTERMEDIATE) as u8 as f64);
            l[(idx(i, j), idx(i, j))] -= Complex64::new(touches, 0.0);
        }
    }

    // Decay |e⟩⟨r| at Γ_u: feeds ρ_ee from ρ_rr, damps anything touching r.
    let gu = sys.gamma_upper;
    l[(idx(INTERMEDIATE, INTERMEDIATE), idx(RYDBERG, RYDBERG))] += Complex64::new(gu, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            let touches = 0.5 * gu * ((i == RYDBERG) as u8 as f64 + (j == RYDBERG) as u8 as f64);
            l[(idx(i, j), idx(i, j))] -= Complex64::new(touches, 0.0);
        }
    }

    // Phenomenological extra dephasing of the g–e and g–r coherences.
    for (a, b, rate) in [
        (GROUND, INTERMEDIATE, sys.dephasing_ge),
        (GROUND, RYDBERG, sys.dephasing_gr),
    ] {
        l[(idx(a, b), idx(a, b))] -= Complex64::new(rate, 0.0);
        l[(idx(b, a), idx(b, a))] -= Complex64::new(rate, 0.0);
    }

    l
}

/// Relative residual tolerance of the steady-state solve.
const RESIDUAL_TOL: f64 = 1e-10;

/// Steady state of the generator at velocity `v`.
///
/// Solves L·vec(ρ) = 0 with the ρ_gg row replaced by the unit-trace
/// constraint, then symmetrizes to exact Hermiticity. Requires at least one
/// nonzero decay or dephasing rate; a singular system or a residual above
/// 1e-10 (relative to the generator's Frobenius norm) is reported as the
/// absence of a unique steady state.
pub fn steady_state(sys: &LadderSystem, v: f64) -> Result<DensityMatrix> {
    sys.validate()?;
    if sys.gamma_lower + sys.gamma_upper + sys.dephasing_ge + sys.dephasing_gr <= 0.0 {
        return Err(LadderError::NoUniqueSteadyState(
            "all decay and dephasing rates are zero; purely coherent evolution has no attractor".into(),
        ));
    }

    let l = build_generator(sys, v);
    let l_norm = l.norm();

    let mut a = l;
    for c in 0..9 {
        a[(0, c)] = Complex64::new(0.0, 0.0);
    }
    for level in 0..3 {
        a[(0, idx(level, level))] = Complex64::new(1.0, 0.0);
    }
    let mut b = Vec9::zeros();
    b[0] = Complex64::new(1.0, 0.0);

    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| LadderError::NoUniqueSteadyState("singular trace-replaced generator".into()))?;

    // The exact steady state is Hermitian; symmetrizing discards the
    // anti-Hermitian part of the solver error.
    let mut rho = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            rho[(i, j)] = 0.5 * (x[idx(i, j)] + x[idx(j, i)].conj());
        }
    }

    let mut xh = Vec9::zeros();
    for i in 0..3 {
        for j in 0..3 {
            xh[idx(i, j)] = rho[(i, j)];
        }
    }
    let residual = (l * xh).norm();
    if !(residual <= RESIDUAL_TOL * l_norm) {
        return Err(LadderError::NoUniqueSteadyState(format!(
            "steady-state residual {residual:e} exceeds {RESIDUAL_TOL:e} × ‖L‖ = {:e}",
            RESIDUAL_TOL * l_norm
        )));
    }

    DensityMatrix::new(rho)
}

/// Analytic weak-probe lower-leg susceptibility, normalized as ρ_ge/(Ω_l/2).
///
/// First order in Ω_l with the upper leg at arbitrary strength:
///
/// ```text
/// χ = i / (γ_ge + i·δ_l′ + (Ω_u²/4) / (γ_gr + i·(δ_l′ + δ_u′)))
/// ```
///
/// The imaginary part is the absorption profile and is non-negative; on exact
/// two-photon resonance with γ_gr = 0 the coupling term diverges and the
/// probe decouples completely (perfect dark state, χ = 0).
pub fn weak_probe_chi_lower(sys: &LadderSystem, v: f64) -> Complex64 {
    let d1 = sys.detuning_lower_at(v);
    let d2 = sys.two_photon_detuning_at(v);
    let gamma_ge = sys.gamma_ge();
    let gamma_gr = sys.gamma_gr();

    let mut denom = Complex64::new(gamma_ge, d1);
    if sys.rabi_upper > 0.0 {
        if gamma_gr == 0.0 && d2 == 0.0 {
            // Dark-state pole: the coupling term diverges, absorption vanishes.
            return Complex64::new(0.0, 0.0);
        }
        let w = 0.25 * sys.rabi_upper * sys.rabi_upper;
        denom += w / Complex64::new(gamma_gr, d2);
    }
    Complex64::new(0.0, 1.0) / denom
}
