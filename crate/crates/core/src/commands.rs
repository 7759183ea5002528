//! Subcommand pipelines: each turns a resolved configuration into output tables.

use crate::config::{FilterChoice, RunConfig};
use crate::lewenstein::{
    dipole_time_series, extract_stark_phase, local_relative_amplitude, spectrum, wrap_phase, HarmonicSpectrum,
    PhaseCurve, StarkMode,
};
use crate::macroprop::{
    aligned_ensemble, default_filter, extract_macro_phase, propagate_jet_cached, to_far_field, FieldMap,
    MacroExtraction, TableCache,
};
use crate::output::{flag, num, CsvTable};
use crate::starkphase::{frequency_records, trajectory_records, Formulation, StarkPhaseRecord};
use crate::trajectories::TrajectoryTable;
use crate::{Error, Result};

/// Default excursion-time limit, in cycles.
pub const DEFAULT_TAU_MAX_CYCLES: f64 = 1.0;

pub fn trajectory_table(cfg: &RunConfig) -> Result<TrajectoryTable> {
    TrajectoryTable::build(&cfg.laser_pulse()?, &cfg.molecule, &cfg.trajectory_settings())
}

pub fn trajectories(cfg: &RunConfig, name: &str) -> Result<CsvTable> {
    let table = trajectory_table(cfg)?;
    let pulse = table.pulse();
    let axis = pulse.polarization();
    let w0 = pulse.omega();
    let mut out = CsvTable::new(
        name,
        &["t_ion_au", "t_rec_au", "v_ret_au", "omega_au", "omega_harmonic_order", "branch", "half_cycle"],
    );
    for t in &table.trajectories {
        out.push(vec![
            num(t.t_ion),
            num(t.t_return),
            num(t.return_velocity.dot(&axis)),
            num(t.photon_energy),
            num(t.photon_energy / w0),
            t.branch.as_str().to_string(),
            t.half_cycle.to_string(),
        ]);
    }
    if let Some(hc) = table.dominant_half_cycle() {
        out.note("dominant_half_cycle", hc.to_string());
    }
    Ok(out)
}

/// Harmonic-order grid `k·step` up to one order above the highest classical
/// photon energy.
fn classical_grid(cfg: &RunConfig, table: &TrajectoryTable) -> Vec<f64> {
    let w0 = table.pulse().omega();
    let top = table
        .trajectories
        .iter()
        .map(|t| t.photon_energy)
        .fold(cfg.molecule.ip0(), f64::max);
    let step = cfg.numerics.phase_grid_step_orders;
    let n = ((top / w0 + 1.0) / step).ceil() as usize;
    (1..=n).map(|k| k as f64 * step * w0).collect()
}

pub fn stark_phase_records(cfg: &RunConfig, formulation: Formulation) -> Result<(TrajectoryTable, Vec<StarkPhaseRecord>)> {
    let table = trajectory_table(cfg)?;
    let records = match formulation {
        Formulation::TimeIntegral | Formulation::ReturnVelocity => trajectory_records(&table, formulation)?,
        Formulation::FrequencyTimedep | Formulation::FrequencyAnalytic => {
            frequency_records(&table, &classical_grid(cfg, &table), formulation)?
        }
    };
    Ok((table, records))
}

pub fn phase_records_table(name: &str, records: &[StarkPhaseRecord], omega0: f64, wrap: bool) -> CsvTable {
    let mut out = CsvTable::new(name, &["omega_au", "harmonic_order", "phase1_rad", "phase2_rad", "branch"]);
    let w = |x: f64| if wrap { wrap_phase(x) } else { x };
    for r in records {
        out.push(vec![
            num(r.omega),
            num(r.omega / omega0),
            num(w(r.phase_order1)),
            r.phase_order2.map(|p| num(w(p))).unwrap_or_default(),
            r.branch.map(|b| b.as_str().to_string()).unwrap_or_default(),
        ]);
    }
    out
}

pub fn stark_phase(cfg: &RunConfig, formulation: Formulation, wrap: bool, name: &str) -> Result<CsvTable> {
    let (table, records) = stark_phase_records(cfg, formulation)?;
    let mut out = phase_records_table(name, &records, table.pulse().omega(), wrap);
    out.note("formulation", format!("{formulation:?}"));
    Ok(out)
}

/// Single-molecule spectrum of the configured pulse in `mode`.
pub fn single_spectrum(cfg: &RunConfig, mode: StarkMode, default_tau: f64) -> Result<HarmonicSpectrum> {
    let pulse = cfg.laser_pulse()?;
    let d = dipole_time_series(&pulse, &cfg.molecule, mode, &cfg.lewenstein(default_tau))?;
    spectrum(&d, &cfg.numerics.spectrum)
}

fn kept_bins(cfg: &RunConfig, omegas: &[f64], omega0: f64) -> usize {
    let top = cfg.macroscopic.settings.max_harmonic_order * omega0;
    omegas.iter().take_while(|&&w| w <= top).count()
}

pub fn spectrum_table(cfg: &RunConfig, mode: StarkMode, default_tau: f64, name: &str) -> Result<CsvTable> {
    let s = single_spectrum(cfg, mode, default_tau)?;
    let amps: Vec<f64> = s.amplitudes.iter().map(|a| a.norm()).collect();
    let rel = local_relative_amplitude(&amps, (s.omega0 / s.d_omega).round() as usize);
    let mut out = CsvTable::new(name, &["omega_au", "harmonic_order", "abs_amp", "phase_rad", "reliable_flag"]);
    out.note("stark_mode", mode.as_str());
    for m in 0..kept_bins(cfg, &s.omegas(), s.omega0) {
        out.push(vec![
            num(s.omega(m)),
            num(s.omega(m) / s.omega0),
            num(amps[m]),
            num(s.amplitudes[m].arg()),
            flag(rel[m] >= cfg.numerics.extraction.reliability_floor),
        ]);
    }
    Ok(out)
}

/// Extracted phase of the Stark order added by `mode`: first order against
/// the field-free run, second order against the first-order run.
pub fn extracted_phase(cfg: &RunConfig, mode: StarkMode, default_tau: f64) -> Result<(PhaseCurve, HarmonicSpectrum)> {
    let base = match mode {
        StarkMode::FirstOrder => StarkMode::None,
        StarkMode::FirstAndSecond => StarkMode::FirstOrder,
        StarkMode::None => {
            return Err(Error::config(
                "stark_mode",
                "extraction needs first_order or first_and_second",
            ))
        }
    };
    let with = single_spectrum(cfg, mode, default_tau)?;
    let without = single_spectrum(cfg, base, default_tau)?;
    Ok((extract_stark_phase(&with, &without, &cfg.numerics.extraction)?, with))
}

pub fn extract(cfg: &RunConfig, mode: StarkMode, default_tau: f64, name: &str) -> Result<CsvTable> {
    let (curve, with) = extracted_phase(cfg, mode, default_tau)?;
    let mut out = CsvTable::new(name, &["omega_au", "harmonic_order", "abs_amp", "phase_rad", "reliable_flag"]);
    out.note("stark_mode", mode.as_str());
    out.note("stark_order", curve.order.to_string());
    for m in 0..kept_bins(cfg, &curve.omega, curve.omega0) {
        out.push(vec![
            num(curve.omega[m]),
            num(curve.omega[m] / curve.omega0),
            num(with.amplitudes[m].norm()),
            num(curve.phase[m]),
            flag(curve.reliable[m]),
        ]);
    }
    Ok(out)
}

/// Near-field maps with and without the Stark shift plus their extraction.
#[derive(Debug, Clone)]
pub struct MacroRun {
    pub near_with: FieldMap,
    pub near_without: FieldMap,
    pub extraction: MacroExtraction,
}

/// Macroscopic Stark phase of `mode` relative to the field-free run, for the
/// oriented jet or the aligned two-orientation sum.
pub fn macro_run(cfg: &RunConfig, mode: StarkMode, aligned: bool, cache: &TableCache) -> Result<MacroRun> {
    if mode == StarkMode::None {
        return Err(Error::config("stark_mode", "propagation needs first_order or first_and_second"));
    }
    let pulse = cfg.focus_pulse()?;
    let m = &cfg.macroscopic;
    let settings = cfg.macro_settings();
    let run = |mode| {
        if aligned {
            aligned_ensemble(cache, &pulse, &m.focus, &m.medium, &cfg.molecule, mode, &settings, m.flip_ionization)
        } else {
            propagate_jet_cached(cache, &pulse, &m.focus, &m.medium, &cfg.molecule, mode, &settings)
        }
    };
    let near_with = run(mode)?;
    let near_without = run(StarkMode::None)?;
    let filter = match m.filter {
        FilterChoice::None => None,
        FilterChoice::Default => Some(default_filter(&to_far_field(&near_without)?)?),
        FilterChoice::HardEdge | FilterChoice::SuperGaussian => cfg.filter_spec(),
    };
    let extraction = extract_macro_phase(&near_with, &near_without, filter)?;
    Ok(MacroRun {
        near_with,
        near_without,
        extraction,
    })
}

pub fn field_map_table(name: &str, map: &FieldMap) -> CsvTable {
    let radial = if map.plane == crate::macroprop::Plane::Far { "kr_per_cm" } else { "r_cm" };
    let mut out = CsvTable::new(name, &["omega_au", radial, "re", "im"]);
    out.note("plane", map.plane.as_str());
    for (i, &w) in map.omega.iter().enumerate() {
        for (r, v) in map.radial().iter().zip(map.row(i)) {
            out.push(vec![num(w), num(*r), num(v.re), num(v.im)]);
        }
    }
    out
}

pub fn averaged_phase_table(name: &str, curve: &PhaseCurve) -> CsvTable {
    let mut out = CsvTable::new(name, &["omega_au", "harmonic_order", "phase_rad", "defined_flag"]);
    for (m, &w) in curve.omega.iter().enumerate() {
        out.push(vec![num(w), num(w / curve.omega0), num(curve.phase[m]), flag(curve.reliable[m])]);
    }
    out
}

pub fn propagate(cfg: &RunConfig, mode: StarkMode, aligned: bool, cache: &TableCache) -> Result<Vec<CsvTable>> {
    let run = macro_run(cfg, mode, aligned, cache)?;
    let x = &run.extraction;
    let mut averaged = averaged_phase_table("averaged_phase.csv", &x.averaged);
    averaged.note("stark_mode", mode.as_str());
    averaged.note("aligned", aligned.to_string());
    match &x.filter {
        Some(f) => averaged.note("filter", format!("{:?} cutoff_rad={}", f.shape, num(f.cutoff_rad))),
        None => averaged.note("filter", "none"),
    }
    Ok(vec![
        averaged,
        field_map_table("near_with.csv", &run.near_with),
        field_map_table("near_without.csv", &run.near_without),
        field_map_table("far_with.csv", &x.far_with),
        field_map_table("far_without.csv", &x.far_without),
        field_map_table("refocused_with.csv", &x.refocused_with),
        field_map_table("refocused_without.csv", &x.refocused_without),
    ])
}
