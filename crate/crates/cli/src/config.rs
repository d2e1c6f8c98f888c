//! Run configuration: flat `key = value` pairs under `[section]` headers,
//! merged with `--set` overrides (flag wins over file, file wins over
//! default), then lowered into the typed inputs of the library.
//!
//! All frequencies in config files are ordinary frequencies in Hz; the 2π
//! conversion to angular units happens exactly once, here at the boundary.
//! Temperatures carry a unit suffix (`89C` or `362.15K`); omitting the
//! `[environment]` section selects the stationary cold-atom limit.

use crate::fault::{CliError, CliResult};
use ladderspec::spectra::system_at;
use ladderspec::units::{celsius_to_kelvin, hz_to_angular};
use ladderspec::{
    atom::doppler_sigma, AtomSpec, GridSpec, LadderSystem, ModulationSpec,
    OpticalDepthCalibration, ScanSpec, ScannedDetuning,
};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Raw key/value store keyed by `section.key`, with consumption tracking so
/// unknown (misspelled) keys can be reported after extraction.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl RawConfig {
    /// Parse config text. Lines are `key = value` pairs under `[section]`
    /// headers; `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            if let Some(inner) = line.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or_else(|| {
                    CliError::usage(format!("config line {lineno}: unterminated section header"))
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(CliError::usage(format!(
                        "config line {lineno}: empty section name"
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!(
                    "config line {lineno}: expected `key = value`, got `{line}`"
                ))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::usage(format!("config line {lineno}: empty key")));
            }
            if section.is_empty() {
                return Err(CliError::usage(format!(
                    "config line {lineno}: key `{key}` appears before any [section] header"
                )));
            }
            entries.insert(format!("{section}.{key}"), value.trim().to_string());
        }
        Ok(Self { entries, consumed: BTreeSet::new() })
    }

    /// Read and parse a config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Apply one `--set section.key=value` override on top of the file.
    pub fn apply_set(&mut self, assignment: &str) -> CliResult<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::usage(format!("--set expects section.key=value, got `{assignment}`"))
        })?;
        let key = key.trim();
        if !key.contains('.') {
            return Err(CliError::usage(format!(
                "--set key must be qualified as section.key, got `{key}`"
            )));
        }
        self.entries.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Fetch a value and mark the key consumed.
    fn get(&mut self, key: &str) -> Option<String> {
        let v = self.entries.get(key).cloned();
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    /// Reject any key that no extractor asked for: almost always a typo, and
    /// a silently ignored physics parameter is worse than an error.
    fn finish(&self) -> CliResult<()> {
        for key in self.entries.keys() {
            if !self.consumed.contains(key) {
                return Err(CliError::usage(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    fn f64_field(&mut self, key: &str) -> CliResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| CliError::usage(format!("{key}: not a number: `{s}`")))?;
                if !v.is_finite() {
                    return Err(CliError::usage(format!("{key}: must be finite, got `{s}`")));
                }
                Ok(Some(v))
            }
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64_field(key)?.unwrap_or(default))
    }

    fn f64_required(&mut self, key: &str) -> CliResult<f64> {
        self.f64_field(key)?
            .ok_or_else(|| CliError::usage(format!("{key}: required, no default")))
    }

    fn u32_field(&mut self, key: &str) -> CliResult<Option<u32>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| CliError::usage(format!("{key}: not a whole number: `{s}`"))),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> CliResult<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| CliError::usage(format!("{key}: not a whole number: `{s}`"))),
        }
    }

    fn usize_field(&mut self, key: &str) -> CliResult<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| CliError::usage(format!("{key}: not a whole number: `{s}`"))),
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> CliResult<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => match s.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => {
                    Err(CliError::usage(format!("{key}: expected true or false, got `{other}`")))
                }
            },
        }
    }

    fn u32_list(&mut self, key: &str) -> CliResult<Option<Vec<u32>>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => {
                let mut out = Vec::new();
                for part in s.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    out.push(part.parse().map_err(|_| {
                        CliError::usage(format!("{key}: not a whole number: `{part}`"))
                    })?);
                }
                if out.is_empty() {
                    return Err(CliError::usage(format!("{key}: empty list")));
                }
                Ok(Some(out))
            }
        }
    }
}

/// A scan block as written in the file: detuning bounds in Hz already
/// converted to angular units, with the swept leg possibly left implicit.
#[derive(Debug, Clone)]
pub struct RawScan {
    /// The swept detuning, if the file named one.
    pub leg: Option<ScannedDetuning>,
    /// First scan value, rad/s.
    pub start: f64,
    /// Last scan value, rad/s.
    pub stop: f64,
    /// Inclusive point count.
    pub points: usize,
}

impl RawScan {
    /// Resolve against the leg a command requires: an explicit mismatch is an
    /// error, an absent leg is filled in.
    pub fn resolve(&self, expected: ScannedDetuning, context: &str) -> CliResult<ScanSpec> {
        if let Some(leg) = self.leg {
            if leg != expected {
                return Err(CliError::usage(format!(
                    "[scan].leg: {context} sweeps the {} detuning, but the config names {}",
                    leg_name(expected),
                    leg_name(leg)
                )));
            }
        }
        self.build(expected)
    }

    /// Resolve for a command that accepts either leg; the file must name one.
    pub fn resolve_any(&self, context: &str) -> CliResult<ScanSpec> {
        let leg = self.leg.ok_or_else(|| {
            CliError::usage(format!("[scan].leg: required for {context} (lower or upper)"))
        })?;
        self.build(leg)
    }

    fn build(&self, leg: ScannedDetuning) -> CliResult<ScanSpec> {
        let spec =
            ScanSpec { scanned: leg, start: self.start, stop: self.stop, points: self.points };
        spec.validate()?;
        Ok(spec)
    }
}

fn leg_name(leg: ScannedDetuning) -> &'static str {
    match leg {
        ScannedDetuning::Lower => "lower",
        ScannedDetuning::Upper => "upper",
    }
}

/// Fully validated run configuration, lowered to library types.
#[derive(Debug)]
pub struct RunConfig {
    /// Atomic constants and scaling anchors.
    pub atom: AtomSpec,
    /// Principal quantum number of the single-system commands.
    pub n: u32,
    /// System with the drive parameters as written, anchored at the atom's
    /// reference principal number (input to n-scaling).
    pub system_ref: LadderSystem,
    /// System rescaled to `n` — what spectrum/map/errorsig compute on.
    pub system: LadderSystem,
    /// Thermal velocity spread, m/s (0 = cold).
    pub sigma_v: f64,
    /// Velocity-grid policy derived from the environment.
    pub grid: GridSpec,
    /// Beer–Lambert calibration.
    pub calib: OpticalDepthCalibration,
    /// The `[scan]` block, if present.
    pub scan: Option<RawScan>,
    /// The `[eit_scan]` block (lower-leg sweep), if present.
    pub eit_scan: Option<ScanSpec>,
    /// The `[tpat_scan]` block (upper-leg sweep), if present.
    pub tpat_scan: Option<ScanSpec>,
    /// Modulation and demodulation parameters for the error signal.
    pub modulation: ModulationSpec,
    /// Principal numbers for scan-n (empty if the section is absent).
    pub ns: Vec<u32>,
    /// Whether scan-n also writes the per-n spectra.
    pub emit_spectra: bool,
    /// Uniform velocity-axis resolution for maps (adaptive grid if absent).
    pub map_velocity_points: Option<usize>,
    /// Half-range of the uniform map velocity axis, m/s.
    pub map_half_range_mps: Option<f64>,
    /// Noise floor used when judging whether spectral features are resolved.
    pub noise_floor: f64,
    /// Whether to render SVG plots alongside the CSV outputs.
    pub plot: bool,
}

impl RunConfig {
    /// Load a config file, apply `--set` overrides, and lower to typed form.
    pub fn load(path: &Path, sets: &[String]) -> CliResult<Self> {
        let mut raw = RawConfig::load(path)?;
        for assignment in sets {
            raw.apply_set(assignment)?;
        }
        Self::from_raw(raw)
    }

    /// Lower a raw key/value store into validated library types.
    pub fn from_raw(mut raw: RawConfig) -> CliResult<Self> {
        // [atom]: defaults are the rubidium ladder; every anchor can be
        // overridden individually.
        let mut atom = AtomSpec::rb87();
        if let Some(m) = raw.f64_field("atom.mass_amu")? {
            atom.mass = m * ladderspec::atom::AMU;
        }
        if let Some(wl) = raw.f64_field("atom.lower_wavelength_nm")? {
            atom.lower_wavelength = wl * 1e-9;
        }
        if let Some(wl) = raw.f64_field("atom.upper_wavelength_nm")? {
            atom.upper_wavelength = wl * 1e-9;
        }
        if let Some(g) = raw.f64_field("atom.gamma_lower_hz")? {
            atom.gamma_lower = hz_to_angular(g);
        }
        if let Some(g) = raw.f64_field("atom.gamma_upper_ref_hz")? {
            atom.gamma_upper_ref = hz_to_angular(g);
        }
        if let Some(n) = raw.u32_field("atom.n_ref")? {
            atom.n_ref = n;
        }
        if let Some(d) = raw.f64_field("atom.quantum_defect")? {
            atom.quantum_defect = d;
        }
        atom.validate()?;

        // [ladder]: Rabi frequencies are required — a default drive strength
        // would be an invented experiment. Detunings and dephasings default
        // to zero. Rabi values are anchored at the atom's reference n.
        let rabi_lower = hz_to_angular(raw.f64_required("ladder.rabi_lower_hz")?);
        let rabi_upper = hz_to_angular(raw.f64_required("ladder.rabi_upper_hz")?);
        let delta_lower = hz_to_angular(raw.f64_or("ladder.delta_lower_hz", 0.0)?);
        let delta_upper = hz_to_angular(raw.f64_or("ladder.delta_upper_hz", 0.0)?);
        let dephasing_ge = hz_to_angular(raw.f64_or("ladder.dephasing_ge_hz", 0.0)?);
        let dephasing_gr = hz_to_angular(raw.f64_or("ladder.dephasing_gr_hz", 0.0)?);
        let n = raw.u32_field("ladder.n")?.unwrap_or(atom.n_ref);

        let system_ref = LadderSystem {
            delta_lower,
            delta_upper,
            rabi_lower,
            rabi_upper,
            gamma_lower: atom.gamma_lower,
            gamma_upper: atom.gamma_upper_ref,
            k_lower: atom.wavevector_lower(),
            k_upper: atom.wavevector_upper(),
            dephasing_ge,
            dephasing_gr,
        };
        system_ref.validate()?;
        let system = system_at(&atom, &system_ref, n)?;
        system.validate()?;

        // [environment]: absent temperature means the stationary cold limit.
        let sigma_v = match raw.get("environment.temperature") {
            None => 0.0,
            Some(text) => {
                let kelvin = parse_temperature(&text)?;
                doppler_sigma(kelvin, atom.mass)?
            }
        };

        // [grid]
        let base_points = raw.usize_or("grid.base_points", 513)?;
        let window_points = raw.usize_or("grid.window_points", 129)?;
        let grid = if sigma_v == 0.0 {
            GridSpec::cold()
        } else {
            GridSpec::thermal(sigma_v, base_points, window_points)
        };

        // [calibration]
        let defaults = OpticalDepthCalibration::default();
        let calib = OpticalDepthCalibration {
            d0_lower: raw.f64_or("calibration.d0_lower", defaults.d0_lower)?,
            d_peak_upper: raw.f64_or("calibration.d_peak_upper", defaults.d_peak_upper)?,
        };
        calib.validate()?;

        // [scan] and the two scan-n blocks.
        let scan = extract_scan(&mut raw, "scan")?;
        let eit_scan = extract_scan_fixed(&mut raw, "eit_scan", ScannedDetuning::Lower)?;
        let tpat_scan = extract_scan_fixed(&mut raw, "tpat_scan", ScannedDetuning::Upper)?;

        // [modulation]
        let mod_defaults = ModulationSpec::default();
        let modulation = ModulationSpec {
            f_mod: raw.f64_or("modulation.f_mod_hz", mod_defaults.f_mod)?,
            depth: hz_to_angular(
                raw.f64_or("modulation.depth_hz", ladderspec::units::angular_to_hz(
                    mod_defaults.depth,
                ))?,
            ),
            demod_phase: match raw.get("modulation.demod_phase_rad") {
                None => None,
                Some(s) if s == "auto" => None,
                Some(s) => Some(s.parse::<f64>().map_err(|_| {
                    CliError::usage(format!(
                        "modulation.demod_phase_rad: expected a number or `auto`, got `{s}`"
                    ))
                })?),
            },
            samples_per_period: raw.usize_or(
                "modulation.samples_per_period",
                mod_defaults.samples_per_period,
            )?,
        };
        modulation.validate()?;

        // [scan_n]
        let ns = raw.u32_list("scan_n.ns")?.unwrap_or_default();
        for &n_i in &ns {
            // Surface an unreachable principal number as a config error
            // before any computation starts.
            atom.effective_principal(n_i)?;
        }
        let emit_spectra = raw.bool_or("scan_n.emit_spectra", false)?;

        // [map]
        let map_velocity_points = raw.usize_field("map.velocity_points")?;
        let map_half_range_mps = raw.f64_field("map.velocity_half_range_mps")?;
        if map_half_range_mps.is_some() && map_velocity_points.is_none() {
            return Err(CliError::usage(
                "map.velocity_half_range_mps: only meaningful with map.velocity_points",
            ));
        }

        // [output]
        let noise_floor = raw.f64_or("output.noise_floor", 0.0)?;
        if noise_floor < 0.0 {
            return Err(CliError::usage(format!(
                "output.noise_floor: must be >= 0, got {noise_floor}"
            )));
        }
        let plot = raw.bool_or("output.plot", false)?;

        raw.finish()?;

        Ok(Self {
            atom,
            n,
            system_ref,
            system,
            sigma_v,
            grid,
            calib,
            scan,
            eit_scan,
            tpat_scan,
            modulation,
            ns,
            emit_spectra,
            map_velocity_points,
            map_half_range_mps,
            noise_floor,
            plot,
        })
    }
}

/// Extract a `[scan]`-style block with an optional `leg` key.
fn extract_scan(raw: &mut RawConfig, section: &str) -> CliResult<Option<RawScan>> {
    let leg = match raw.get(&format!("{section}.leg")) {
        None => None,
        Some(s) => match s.as_str() {
            "lower" => Some(ScannedDetuning::Lower),
            "upper" => Some(ScannedDetuning::Upper),
            other => {
                return Err(CliError::usage(format!(
                    "{section}.leg: expected lower or upper, got `{other}`"
                )))
            }
        },
    };
    let start = raw.f64_field(&format!("{section}.start_hz"))?;
    let stop = raw.f64_field(&format!("{section}.stop_hz"))?;
    let points = raw.usize_field(&format!("{section}.points"))?;
    match (start, stop) {
        (None, None) => {
            if leg.is_some() || points.is_some() {
                Err(CliError::usage(format!(
                    "[{section}]: start_hz and stop_hz are required when the section is present"
                )))
            } else {
                Ok(None)
            }
        }
        (Some(start), Some(stop)) => Ok(Some(RawScan {
            leg,
            start: hz_to_angular(start),
            stop: hz_to_angular(stop),
            points: points.unwrap_or(201),
        })),
        _ => Err(CliError::usage(format!(
            "[{section}]: start_hz and stop_hz must be given together"
        ))),
    }
}

/// Extract a scan block whose leg is fixed by its role (eit_scan/tpat_scan).
fn extract_scan_fixed(
    raw: &mut RawConfig,
    section: &str,
    leg: ScannedDetuning,
) -> CliResult<Option<ScanSpec>> {
    let start = raw.f64_field(&format!("{section}.start_hz"))?;
    let stop = raw.f64_field(&format!("{section}.stop_hz"))?;
    let points = raw.usize_field(&format!("{section}.points"))?;
    match (start, stop) {
        (None, None) => {
            if points.is_some() {
                Err(CliError::usage(format!(
                    "[{section}]: start_hz and stop_hz are required when the section is present"
                )))
            } else {
                Ok(None)
            }
        }
        (Some(start), Some(stop)) => {
            let spec = ScanSpec {
                scanned: leg,
                start: hz_to_angular(start),
                stop: hz_to_angular(stop),
                points: points.unwrap_or(201),
            };
            spec.validate()?;
            Ok(Some(spec))
        }
        _ => Err(CliError::usage(format!(
            "[{section}]: start_hz and stop_hz must be given together"
        ))),
    }
}

/// Parse a temperature with a required unit suffix: `89C` or `362.15K`.
fn parse_temperature(text: &str) -> CliResult<f64> {
    let t = text.trim();
    let err = || {
        CliError::usage(format!(
            "environment.temperature: expected a number with a C or K suffix, got `{text}`"
        ))
    };
    let last = t.chars().last().ok_or_else(err)?;
    let number = t[..t.len() - last.len_utf8()].trim();
    let value: f64 = number.parse().map_err(|_| err())?;
    if !value.is_finite() {
        return Err(err());
    }
    let kelvin = match last {
        'C' | 'c' => celsius_to_kelvin(value),
        'K' | 'k' => value,
        _ => return Err(err()),
    };
    if !(kelvin > 0.0) {
        return Err(CliError::usage(format!(
            "environment.temperature: must be above absolute zero, got `{text}`"
        )));
    }
    Ok(kelvin)
}

/// Parse a two-column `x,y` CSV with a one-line header into a data series.
pub fn read_xy_csv(path: &Path) -> CliResult<ladderspec::DataSeries> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read data `{}`: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, _header) = lines
        .next()
        .ok_or_else(|| CliError::usage(format!("{}: empty file", path.display())))?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (xs, ys) = line.split_once(',').ok_or_else(|| {
            CliError::usage(format!(
                "{} line {lineno}: expected two comma-separated columns",
                path.display()
            ))
        })?;
        let parse = |s: &str, col: &str| -> CliResult<f64> {
            s.trim().parse().map_err(|_| {
                CliError::usage(format!(
                    "{} line {lineno}: {col} column is not a number: `{s}`",
                    path.display()
                ))
            })
        };
        x.push(parse(xs, "x")?);
        y.push(parse(ys, "y")?);
    }
    Ok(ladderspec::DataSeries::new(x, y)?)
}
