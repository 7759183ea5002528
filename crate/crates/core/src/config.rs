//! Run configuration: a TOML file with `[pulse]`, `[molecule]`, `[numerics]`,
//! `[macroscopic]` and `[output]` sections.
//!
//! Physical keys carry their unit in the name (`_au`, `_nm`, `_Wcm2`, `_cm`,
//! `_cm3`, `_rad`, `_deg`, `_cycles`). Unknown keys are rejected. A missing
//! `[pulse]` section selects the reference pulse; a missing `[molecule]`
//! section selects CO.
//!
//! Pulse envelope: the field envelope is `cos²(π(t − τ/2)/τ)` over the full
//! duration τ = `duration_cycles`; its intensity FWHM is 0.364 τ, i.e. 0.72 T
//! for the two-cycle pulse.
//!
//! ```toml
//! [pulse]
//! preset = "reference"          # 800 nm, 2 cycles, CEP π/6, 2.0e14 W/cm²
//! peak_intensity_Wcm2 = 2.5e14  # or peak_field_au, not both unless equal
//!
//! [molecule]
//! preset = "CO"
//! theta_deg = 0.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lewenstein::{
    ExtractionSettings, LewensteinSettings, Observable, SpectrumSettings, StarkMode, Window, MIN_SAMPLES_PER_CYCLE,
};
use crate::macroprop::{FilterShape, FilterSpec, FlipIonization, MacroSettings, MediumSpec, SourceMode};
use crate::molecule::StarkParameters;
use crate::pulse::{Envelope, FocusGeometry, LaserPulse, PulseShape, DEFAULT_GRID_POINTS, REFERENCE_CEP_RAD};
use crate::trajectories::TrajectorySettings;
use crate::{units, Error, Result};

/// Relative tolerance for `peak_field_au` and `peak_intensity_Wcm2` given together.
const FIELD_AGREEMENT: f64 = 1e-6;

const REFERENCE_INTENSITY_WCM2: f64 = 2.0e14;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    pulse: Option<RawPulse>,
    molecule: Option<RawMolecule>,
    #[serde(default)]
    numerics: RawNumerics,
    #[serde(default)]
    macroscopic: RawMacro,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulse {
    preset: Option<String>,
    wavelength_nm: Option<f64>,
    #[serde(rename = "peak_intensity_Wcm2")]
    peak_intensity_wcm2: Option<f64>,
    peak_field_au: Option<f64>,
    duration_cycles: Option<f64>,
    cep_rad: Option<f64>,
    envelope: Option<String>,
    ramp_cycles: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMolecule {
    preset: Option<String>,
    #[serde(rename = "E0_au")]
    e0_au: Option<f64>,
    mu_au: Option<f64>,
    alpha_par_au: Option<f64>,
    alpha_perp_au: Option<f64>,
    theta_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    pulse_grid_points: Option<usize>,
    trajectory_samples_per_cycle: Option<usize>,
    later_returns: Option<bool>,
    lewenstein_samples_per_cycle: Option<usize>,
    lewenstein_output_stride: Option<usize>,
    tau_max_cycles: Option<f64>,
    taper_fraction: Option<f64>,
    epsilon_au: Option<f64>,
    window: Option<Window>,
    observable: Option<Observable>,
    padding_factor: Option<usize>,
    reliability_floor: Option<f64>,
    stark_mode: Option<StarkMode>,
    phase_grid_step_orders: Option<f64>,
    max_harmonic_order: Option<f64>,
    radial_nodes: Option<usize>,
    radial_extent_waists: Option<f64>,
    intensity_table_spacing: Option<f64>,
    intensity_floor_fraction: Option<f64>,
    macro_output_stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMacro {
    length_cm: Option<f64>,
    number_density_cm3: Option<f64>,
    slices: Option<usize>,
    confocal_parameter_cm: Option<f64>,
    focus_position_cm: Option<f64>,
    #[serde(rename = "peak_intensity_focus_Wcm2")]
    peak_intensity_focus_wcm2: Option<f64>,
    filter: Option<FilterChoice>,
    filter_cutoff_rad: Option<f64>,
    filter_order: Option<u32>,
    flip_ionization: Option<FlipIonization>,
    aligned: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    format: Option<String>,
}

/// Far-field filter selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterChoice {
    /// Hard edge at the angle enclosing half of the H21 energy.
    Default,
    HardEdge,
    SuperGaussian,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    pub wavelength_nm: f64,
    pub peak_field_au: f64,
    pub duration_cycles: f64,
    pub cep_rad: f64,
    pub envelope: Envelope,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    pub trajectory_samples_per_cycle: usize,
    pub later_returns: bool,
    /// `None`: the pipeline default (1.0 T, 1.5 T for the Stark-phase figure).
    pub tau_max_cycles: Option<f64>,
    pub lewenstein: LewensteinSettings,
    pub spectrum: SpectrumSettings,
    pub extraction: ExtractionSettings,
    /// `None`: the pipeline default.
    pub stark_mode: Option<StarkMode>,
    pub phase_grid_step_orders: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroConfig {
    pub medium: MediumSpec,
    pub focus: FocusGeometry,
    pub settings: MacroSettings,
    pub filter: FilterChoice,
    pub filter_cutoff_rad: Option<f64>,
    pub filter_order: u32,
    pub flip_ionization: FlipIonization,
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
        }
    }
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pulse: PulseConfig,
    pub molecule: StarkParameters,
    pub numerics: NumericsConfig,
    pub macroscopic: MacroConfig,
    /// Not part of the hashed configuration: the same run written elsewhere
    /// produces identical files.
    #[serde(skip)]
    pub output: OutputConfig,
}

fn finite(key: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !x.is_finite() => Err(Error::config(key, "must be finite")),
        other => Ok(other),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, "must be positive and finite"))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, "must be non-negative and finite"))
    }
}

/// Maps module validation errors onto configuration errors.
fn as_config(key: &str, r: Result<()>) -> Result<()> {
    match r {
        Err(Error::Domain(msg)) => Err(Error::config(key, msg)),
        other => other,
    }
}

fn resolve_pulse(raw: Option<RawPulse>) -> Result<PulseConfig> {
    let explicit = raw.is_some();
    let raw = raw.unwrap_or_default();
    let reference = match raw.preset.as_deref() {
        None => !explicit,
        Some("reference") => true,
        Some(other) => return Err(Error::config("pulse.preset", format!("unknown preset `{other}` (known: reference)"))),
    };
    let wavelength_nm = positive("pulse.wavelength_nm", finite("pulse.wavelength_nm", raw.wavelength_nm)?.unwrap_or(800.0))?;
    let intensity = finite("pulse.peak_intensity_Wcm2", raw.peak_intensity_wcm2)?;
    let field = finite("pulse.peak_field_au", raw.peak_field_au)?;
    if let Some(i) = intensity {
        non_negative("pulse.peak_intensity_Wcm2", i)?;
    }
    if let Some(f) = field {
        non_negative("pulse.peak_field_au", f)?;
    }
    let peak_field_au = match (field, intensity) {
        (Some(f), Some(i)) => {
            let fi = units::field_from_intensity(i)?;
            if (f - fi).abs() > FIELD_AGREEMENT * f.max(fi) {
                return Err(Error::config(
                    "pulse.peak_field_au",
                    format!("conflicts with pulse.peak_intensity_Wcm2 ({f} au vs {fi} au); set only one"),
                ));
            }
            f
        }
        (Some(f), None) => f,
        (None, Some(i)) => units::field_from_intensity(i)?,
        (None, None) if reference => units::field_from_intensity(REFERENCE_INTENSITY_WCM2)?,
        (None, None) => {
            return Err(Error::config(
                "pulse.peak_intensity_Wcm2",
                "missing: set peak_intensity_Wcm2 or peak_field_au",
            ))
        }
    };
    let duration_cycles = positive("pulse.duration_cycles", finite("pulse.duration_cycles", raw.duration_cycles)?.unwrap_or(2.0))?;
    let cep_rad = finite("pulse.cep_rad", raw.cep_rad)?.unwrap_or(if reference { REFERENCE_CEP_RAD } else { 0.0 });
    let envelope = match raw.envelope.as_deref().unwrap_or("cos2") {
        "cos2" => {
            if raw.ramp_cycles.is_some() {
                return Err(Error::config("pulse.ramp_cycles", "only valid with envelope = \"flat_top\""));
            }
            Envelope::CosSquared
        }
        "flat_top" => Envelope::FlatTop {
            ramp_cycles: positive("pulse.ramp_cycles", finite("pulse.ramp_cycles", raw.ramp_cycles)?.unwrap_or(1.0))?,
        },
        other => return Err(Error::config("pulse.envelope", format!("unknown envelope `{other}` (cos2 | flat_top)"))),
    };
    Ok(PulseConfig {
        wavelength_nm,
        peak_field_au,
        duration_cycles,
        cep_rad,
        envelope,
        grid_points: DEFAULT_GRID_POINTS,
    })
}

fn resolve_molecule(raw: Option<RawMolecule>) -> Result<StarkParameters> {
    let explicit = raw.is_some();
    let raw = raw.unwrap_or_default();
    let base = match raw.preset.as_deref() {
        Some("CO") => Some(StarkParameters::carbon_monoxide()),
        None if !explicit => Some(StarkParameters::carbon_monoxide()),
        None => None,
        Some(other) => return Err(Error::config("molecule.preset", format!("unknown preset `{other}` (known: CO)"))),
    };
    let pick = |key: &str, v: Option<f64>, preset: Option<f64>| -> Result<f64> {
        finite(key, v)?
            .or(preset)
            .ok_or_else(|| Error::config(key, "missing: required without a molecule preset"))
    };
    let params = StarkParameters {
        e0_au: pick("molecule.E0_au", raw.e0_au, base.as_ref().map(|b| b.e0_au))?,
        mu_au: pick("molecule.mu_au", raw.mu_au, base.as_ref().map(|b| b.mu_au))?,
        alpha_par_au: pick("molecule.alpha_par_au", raw.alpha_par_au, base.as_ref().map(|b| b.alpha_par_au))?,
        alpha_perp_au: pick("molecule.alpha_perp_au", raw.alpha_perp_au, base.as_ref().map(|b| b.alpha_perp_au))?,
        theta_rad: finite("molecule.theta_deg", raw.theta_deg)?.unwrap_or(0.0).to_radians(),
        dipole_direction: [0.0, 0.0, 1.0],
    };
    params.validate()?;
    Ok(params)
}

fn resolve_numerics(raw: RawNumerics) -> Result<(NumericsConfig, usize)> {
    let lw_default = LewensteinSettings::default();
    let spec_default = SpectrumSettings::default();
    let traj_default = TrajectorySettings::default();
    let tau_max_cycles = finite("numerics.tau_max_cycles", raw.tau_max_cycles)?;
    let lewenstein = LewensteinSettings {
        samples_per_cycle: raw.lewenstein_samples_per_cycle.unwrap_or(MIN_SAMPLES_PER_CYCLE),
        tau_max_cycles: tau_max_cycles.unwrap_or(lw_default.tau_max_cycles),
        taper_fraction: finite("numerics.taper_fraction", raw.taper_fraction)?.unwrap_or(lw_default.taper_fraction),
        epsilon_au: finite("numerics.epsilon_au", raw.epsilon_au)?.unwrap_or(lw_default.epsilon_au),
        output_stride: raw.lewenstein_output_stride.unwrap_or(lw_default.output_stride),
    };
    lewenstein.validate()?;
    let spectrum = SpectrumSettings {
        window: raw.window.unwrap_or(spec_default.window),
        observable: raw.observable.unwrap_or(spec_default.observable),
        padding_factor: raw.padding_factor.unwrap_or(spec_default.padding_factor),
    };
    if spectrum.padding_factor == 0 {
        return Err(Error::config("numerics.padding_factor", "must be at least 1"));
    }
    let floor = finite("numerics.reliability_floor", raw.reliability_floor)?.unwrap_or(ExtractionSettings::default().reliability_floor);
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::config("numerics.reliability_floor", "must lie in [0, 1)"));
    }
    let trajectory_samples_per_cycle = raw.trajectory_samples_per_cycle.unwrap_or(traj_default.samples_per_cycle);
    if trajectory_samples_per_cycle < 512 {
        return Err(Error::config("numerics.trajectory_samples_per_cycle", "must be at least 512"));
    }
    let step = positive(
        "numerics.phase_grid_step_orders",
        finite("numerics.phase_grid_step_orders", raw.phase_grid_step_orders)?.unwrap_or(0.1),
    )?;
    let grid_points = raw.pulse_grid_points.unwrap_or(DEFAULT_GRID_POINTS);
    Ok((
        NumericsConfig {
            trajectory_samples_per_cycle,
            later_returns: raw.later_returns.unwrap_or(traj_default.later_returns),
            tau_max_cycles,
            lewenstein,
            spectrum,
            extraction: ExtractionSettings { reliability_floor: floor },
            stark_mode: raw.stark_mode,
            phase_grid_step_orders: step,
        },
        grid_points,
    ))
}

fn resolve_macro(raw: RawMacro, numerics: &RawNumericsMacro, lewenstein: &LewensteinSettings, spectrum: &SpectrumSettings) -> Result<MacroConfig> {
    let medium_default = MediumSpec::default();
    let medium = MediumSpec {
        length_cm: finite("macroscopic.length_cm", raw.length_cm)?.unwrap_or(medium_default.length_cm),
        number_density_cm3: finite("macroscopic.number_density_cm3", raw.number_density_cm3)?
            .unwrap_or(medium_default.number_density_cm3),
        slices: raw.slices.unwrap_or(medium_default.slices),
    };
    medium.validate()?;
    let focus = FocusGeometry {
        confocal_parameter_cm: finite("macroscopic.confocal_parameter_cm", raw.confocal_parameter_cm)?.unwrap_or(2.0),
        focus_position_cm: finite("macroscopic.focus_position_cm", raw.focus_position_cm)?.unwrap_or(-0.70),
        peak_intensity_wcm2: finite("macroscopic.peak_intensity_focus_Wcm2", raw.peak_intensity_focus_wcm2)?.unwrap_or(3.0e14),
    };
    focus.validate()?;
    let settings_default = MacroSettings::default();
    let source = match numerics.table_spacing {
        Some(0.0) => SourceMode::Direct,
        Some(s) => SourceMode::Table {
            spacing: positive("numerics.intensity_table_spacing", s)?,
        },
        None => settings_default.source,
    };
    let settings = MacroSettings {
        radial_nodes: numerics.radial_nodes.unwrap_or(settings_default.radial_nodes),
        radial_extent_waists: numerics.radial_extent_waists.unwrap_or(settings_default.radial_extent_waists),
        source,
        intensity_floor_fraction: numerics.floor_fraction.unwrap_or(settings_default.intensity_floor_fraction),
        max_harmonic_order: numerics.max_harmonic_order.unwrap_or(settings_default.max_harmonic_order),
        lewenstein: LewensteinSettings {
            output_stride: numerics.output_stride.unwrap_or(settings_default.lewenstein.output_stride),
            ..lewenstein.clone()
        },
        spectrum: spectrum.clone(),
    };
    settings.validate()?;
    let filter = raw.filter.unwrap_or(FilterChoice::Default);
    let filter_cutoff_rad = finite("macroscopic.filter_cutoff_rad", raw.filter_cutoff_rad)?;
    match (filter, filter_cutoff_rad) {
        (FilterChoice::HardEdge | FilterChoice::SuperGaussian, None) => {
            return Err(Error::config("macroscopic.filter_cutoff_rad", "missing: required for an explicit filter shape"))
        }
        (FilterChoice::Default | FilterChoice::None, Some(_)) => {
            return Err(Error::config(
                "macroscopic.filter_cutoff_rad",
                "only valid with filter = \"hard_edge\" or \"super_gaussian\"",
            ))
        }
        (_, Some(c)) => {
            positive("macroscopic.filter_cutoff_rad", c)?;
        }
        _ => {}
    }
    let filter_order = raw.filter_order.unwrap_or(4);
    if filter_order == 0 {
        return Err(Error::config("macroscopic.filter_order", "must be at least 1"));
    }
    Ok(MacroConfig {
        medium,
        focus,
        settings,
        filter,
        filter_cutoff_rad,
        filter_order,
        flip_ionization: raw.flip_ionization.unwrap_or(FlipIonization::Computed),
        aligned: raw.aligned.unwrap_or(false),
    })
}

/// Macroscopic knobs that live in `[numerics]`.
struct RawNumericsMacro {
    radial_nodes: Option<usize>,
    radial_extent_waists: Option<f64>,
    table_spacing: Option<f64>,
    floor_fraction: Option<f64>,
    max_harmonic_order: Option<f64>,
    output_stride: Option<usize>,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config(toml_key(&e, text), e.message().to_string()))?;
    let pulse = resolve_pulse(raw.pulse)?;
    let molecule = resolve_molecule(raw.molecule)?;
    let macro_knobs = RawNumericsMacro {
        radial_nodes: raw.numerics.radial_nodes,
        radial_extent_waists: finite("numerics.radial_extent_waists", raw.numerics.radial_extent_waists)?,
        table_spacing: finite("numerics.intensity_table_spacing", raw.numerics.intensity_table_spacing)?,
        floor_fraction: finite("numerics.intensity_floor_fraction", raw.numerics.intensity_floor_fraction)?,
        max_harmonic_order: finite("numerics.max_harmonic_order", raw.numerics.max_harmonic_order)?,
        output_stride: raw.numerics.macro_output_stride,
    };
    let (numerics, grid_points) = resolve_numerics(raw.numerics)?;
    let macroscopic = resolve_macro(raw.macroscopic, &macro_knobs, &numerics.lewenstein, &numerics.spectrum)?;
    if let Some(format) = raw.output.format.as_deref() {
        if format != "csv" {
            return Err(Error::config("output.format", format!("unsupported format `{format}` (csv)")));
        }
    }
    let cfg = RunConfig {
        pulse: PulseConfig { grid_points, ..pulse },
        molecule,
        numerics,
        macroscopic,
        output: raw
            .output
            .directory
            .map(|directory| OutputConfig { directory })
            .unwrap_or_default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Dotted key path named by a TOML deserialization error, found from the
/// section header preceding the error span.
fn toml_key(e: &toml::de::Error, text: &str) -> String {
    let msg = e.message();
    let field = msg
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
        .map(str::to_string);
    let section = e.span().and_then(|span| {
        text[..span.start.min(text.len())]
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| l.starts_with('['))
            .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
    });
    match (section, field) {
        (Some(s), Some(f)) => format!("{s}.{f}"),
        (None, Some(f)) => f,
        (Some(s), None) => s,
        (None, None) => "<toml>".to_string(),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl Default for RunConfig {
    /// Reference pulse, CO, reference jet geometry.
    fn default() -> Self {
        parse_config("").expect("built-in defaults are valid")
    }
}

impl RunConfig {
    /// Re-checks every section; used after command-line overrides.
    pub fn validate(&self) -> Result<()> {
        as_config("pulse", self.pulse_shape().validate())?;
        if self.pulse.grid_points < crate::pulse::MIN_GRID_POINTS {
            return Err(Error::config(
                "numerics.pulse_grid_points",
                format!("must be at least {}", crate::pulse::MIN_GRID_POINTS),
            ));
        }
        self.molecule.validate()?;
        self.numerics.lewenstein.validate()?;
        if let Some(t) = self.numerics.tau_max_cycles {
            self.lewenstein(t).validate()?;
        }
        self.macroscopic.medium.validate()?;
        self.macroscopic.focus.validate()?;
        self.macroscopic.settings.validate()?;
        if let Some(f) = self.filter_spec() {
            as_config("macroscopic.filter_cutoff_rad", f.validate())?;
        }
        Ok(())
    }

    pub fn pulse_shape(&self) -> PulseShape {
        PulseShape {
            peak_field_au: self.pulse.peak_field_au,
            omega_au: units::omega_from_wavelength_nm(self.pulse.wavelength_nm),
            duration_cycles: self.pulse.duration_cycles,
            cep_rad: self.pulse.cep_rad,
            envelope: self.pulse.envelope,
            polarization: [0.0, 0.0, 1.0],
        }
    }

    pub fn laser_pulse(&self) -> Result<LaserPulse> {
        LaserPulse::with_grid(self.pulse_shape(), self.pulse.grid_points)
    }

    /// The configured pulse with the focus intensity of the jet.
    pub fn focus_pulse(&self) -> Result<LaserPulse> {
        let f = units::field_from_intensity(self.macroscopic.focus.peak_intensity_wcm2)?;
        Ok(self.laser_pulse()?.scaled(f))
    }

    pub fn trajectory_settings(&self) -> TrajectorySettings {
        TrajectorySettings {
            samples_per_cycle: self.numerics.trajectory_samples_per_cycle,
            later_returns: self.numerics.later_returns,
            ..Default::default()
        }
    }

    /// Lewenstein settings with `default_tau` unless the configuration fixes τ_max.
    pub fn lewenstein(&self, default_tau: f64) -> LewensteinSettings {
        LewensteinSettings {
            tau_max_cycles: self.numerics.tau_max_cycles.unwrap_or(default_tau),
            ..self.numerics.lewenstein.clone()
        }
    }

    pub fn macro_settings(&self) -> MacroSettings {
        MacroSettings {
            lewenstein: LewensteinSettings {
                tau_max_cycles: self.numerics.tau_max_cycles.unwrap_or(self.macroscopic.settings.lewenstein.tau_max_cycles),
                ..self.macroscopic.settings.lewenstein.clone()
            },
            spectrum: self.numerics.spectrum.clone(),
            ..self.macroscopic.settings.clone()
        }
    }

    /// Explicit filter, or `None` for the default and unfiltered choices.
    pub fn filter_spec(&self) -> Option<FilterSpec> {
        let cutoff = self.macroscopic.filter_cutoff_rad?;
        let shape = match self.macroscopic.filter {
            FilterChoice::HardEdge => FilterShape::HardEdge,
            FilterChoice::SuperGaussian => FilterShape::SuperGaussian,
            _ => return None,
        };
        Some(FilterSpec {
            shape,
            cutoff_rad: cutoff,
            order: self.macroscopic.filter_order,
        })
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of [`RunConfig::canonical_json`].
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a configuration error, got {other}"),
        }
    }

    #[test]
    fn empty_config_gives_reference_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.molecule, StarkParameters::carbon_monoxide());
        assert_eq!(c.pulse.cep_rad, REFERENCE_CEP_RAD);
        assert_eq!(c.pulse_shape(), PulseShape::reference(2.0e14).unwrap());
        assert_eq!(c.macroscopic.medium, MediumSpec::default());
        assert!((c.macroscopic.focus.on_axis_intensity(0.0) / 2.0e14 - 1.0).abs() < 0.03);
    }

    #[test]
    fn molecule_preset_loads_co() {
        let c = parse_config("[molecule]\npreset = \"CO\"\n").unwrap();
        let m = &c.molecule;
        assert_eq!((m.e0_au, m.mu_au, m.alpha_par_au, m.alpha_perp_au), (-0.5150, 1.1, 3.2, 2.8));
        let c = parse_config("[molecule]\npreset = \"CO\"\nmu_au = 0.5\ntheta_deg = 180\n").unwrap();
        assert_eq!(c.molecule.mu_au, 0.5);
        assert!((c.molecule.theta_rad - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn molecule_without_preset_needs_constants() {
        let e = parse_config("[molecule]\nmu_au = 1.0\n").unwrap_err();
        assert_eq!(key_of(e), "molecule.E0_au");
        let c = parse_config("[molecule]\nE0_au = -0.5\nmu_au = 0\nalpha_par_au = 1\nalpha_perp_au = 1\n").unwrap();
        assert_eq!(c.molecule.ip0(), 0.5);
    }

    #[test]
    fn negative_wavelength_names_the_key() {
        let e = parse_config("[pulse]\nwavelength_nm = -800\npeak_intensity_Wcm2 = 1e14\n").unwrap_err();
        assert!(e.is_validation());
        assert_eq!(key_of(e), "pulse.wavelength_nm");
    }

    #[test]
    fn field_and_intensity_must_agree() {
        let e = parse_config("[pulse]\npeak_field_au = 0.075\npeak_intensity_Wcm2 = 3e14\n").unwrap_err();
        assert_eq!(key_of(e), "pulse.peak_field_au");
        let f = units::field_from_intensity(2e14).unwrap();
        let c = parse_config(&format!("[pulse]\npeak_field_au = {f:e}\npeak_intensity_Wcm2 = 2e14\n")).unwrap();
        assert_eq!(c.pulse.peak_field_au, f);
    }

    #[test]
    fn explicit_pulse_needs_strength_and_defaults_cep_to_zero() {
        let e = parse_config("[pulse]\nwavelength_nm = 800\n").unwrap_err();
        assert_eq!(key_of(e), "pulse.peak_intensity_Wcm2");
        let c = parse_config("[pulse]\npeak_field_au = 0.075\n").unwrap();
        assert_eq!(c.pulse.cep_rad, 0.0);
        let c = parse_config("[pulse]\npreset = \"reference\"\npeak_intensity_Wcm2 = 2.5e14\n").unwrap();
        assert_eq!(c.pulse.cep_rad, REFERENCE_CEP_RAD);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_config("[pulse]\npeak_field_au = 0.075\ncolour = 3\n").unwrap_err();
        assert_eq!(key_of(e), "pulse.colour");
        assert!(parse_config("[extra]\n").unwrap_err().is_validation());
    }

    #[test]
    fn non_finite_numbers_are_rejected() {
        let e = parse_config("[pulse]\npeak_field_au = nan\n").unwrap_err();
        assert_eq!(key_of(e), "pulse.peak_field_au");
        let e = parse_config("[macroscopic]\nlength_cm = inf\n").unwrap_err();
        assert_eq!(key_of(e), "macroscopic.length_cm");
    }

    #[test]
    fn numerics_and_macro_knobs() {
        let text = "[numerics]\nwindow = \"hann\"\nobservable = \"acceleration\"\nstark_mode = \"first_and_second\"\n\
                    tau_max_cycles = 1.5\nintensity_table_spacing = 0\nradial_nodes = 64\n\
                    [macroscopic]\nslices = 11\nfilter = \"super_gaussian\"\nfilter_cutoff_rad = 0.004\naligned = true\n\
                    flip_ionization = \"symmetric\"\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.numerics.spectrum.window, Window::Hann);
        assert_eq!(c.numerics.stark_mode, Some(StarkMode::FirstAndSecond));
        assert_eq!(c.lewenstein(1.0).tau_max_cycles, 1.5);
        let m = c.macro_settings();
        assert_eq!(m.source, SourceMode::Direct);
        assert_eq!(m.radial_nodes, 64);
        assert_eq!(m.lewenstein.tau_max_cycles, 1.5);
        assert_eq!(m.spectrum.observable, Observable::Acceleration);
        assert_eq!(c.filter_spec().unwrap().shape, FilterShape::SuperGaussian);
        assert!(c.macroscopic.aligned);
        assert_eq!(c.macroscopic.flip_ionization, FlipIonization::Symmetric);
    }

    #[test]
    fn invalid_knobs_name_their_keys() {
        let cases = [
            ("[numerics]\nlewenstein_samples_per_cycle = 100\n", "numerics.lewenstein_samples_per_cycle"),
            ("[numerics]\ntau_max_cycles = 0\n", "numerics.tau_max_cycles"),
            ("[numerics]\nreliability_floor = 1.5\n", "numerics.reliability_floor"),
            ("[numerics]\npulse_grid_points = 16\n", "numerics.pulse_grid_points"),
            ("[macroscopic]\nslices = 2\n", "macroscopic.slices"),
            ("[macroscopic]\nconfocal_parameter_cm = -1\n", "macroscopic.confocal_parameter_cm"),
            ("[macroscopic]\nfilter = \"hard_edge\"\n", "macroscopic.filter_cutoff_rad"),
            ("[macroscopic]\nfilter_cutoff_rad = 0.01\n", "macroscopic.filter_cutoff_rad"),
            ("[output]\nformat = \"hdf5\"\n", "output.format"),
            ("[pulse]\npreset = \"long\"\n", "pulse.preset"),
            ("[molecule]\npreset = \"NO\"\n", "molecule.preset"),
        ];
        for (text, key) in cases {
            let e = parse_config(text).unwrap_err();
            assert_eq!(key_of(e), key, "{text}");
        }
    }

    #[test]
    fn hash_tracks_resolved_values() {
        let a = parse_config("").unwrap();
        let b = parse_config("[molecule]\npreset = \"CO\"\n").unwrap();
        let c = parse_config("[molecule]\npreset = \"CO\"\ntheta_deg = 10\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
        let back: RunConfig = serde_json::from_str(&a.canonical_json()).unwrap();
        assert_eq!(back, a);
    }
}
