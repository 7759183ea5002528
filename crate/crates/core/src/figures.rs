//! Plot-ready data sets for the three figure reproductions.

use crate::commands::{self, averaged_phase_table, phase_records_table};
use crate::config::RunConfig;
use crate::lewenstein::StarkMode;
use crate::macroprop::TableCache;
use crate::output::{flag, num, CsvTable};
use crate::starkphase::{frequency_records, Formulation};
use crate::trajectories::TrajectoryTable;
use crate::Result;

/// Excursion-time limit for the single-molecule phase figure, long enough to
/// admit the long-trajectory interference.
pub const FIG3_TAU_MAX_CYCLES: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Trajectories,
    SingleMolecule,
    Jet,
}

impl Figure {
    pub fn command(self) -> &'static str {
        match self {
            Figure::Trajectories => "reproduce-fig2",
            Figure::SingleMolecule => "reproduce-fig3",
            Figure::Jet => "reproduce-fig4",
        }
    }
}

/// Classical trajectories with their time-integral Stark phases.
pub fn fig2(cfg: &RunConfig) -> Result<Vec<CsvTable>> {
    let traj = commands::trajectories(cfg, "fig2_trajectories.csv")?;
    let (table, records) = commands::stark_phase_records(cfg, Formulation::TimeIntegral)?;
    let phases = phase_records_table("fig2_stark_phase.csv", &records, table.pulse().omega(), false);
    Ok(vec![traj, phases])
}

/// Classical frequency-domain curves of `table` on a harmonic-order grid.
fn classical_tables(cfg: &RunConfig, table: &TrajectoryTable, prefix: &str) -> Result<Vec<CsvTable>> {
    let w0 = table.pulse().omega();
    let top = table.cutoff(table.dominant_half_cycle().unwrap_or(0)).unwrap_or(cfg.molecule.ip0());
    let step = cfg.numerics.phase_grid_step_orders;
    let omegas: Vec<f64> = (1..=((top / w0 + 1.0) / step).ceil() as usize)
        .map(|k| k as f64 * step * w0)
        .collect();
    let timedep = frequency_records(table, &omegas, Formulation::FrequencyTimedep)?;
    let analytic = frequency_records(table, &omegas, Formulation::FrequencyAnalytic)?;
    Ok(vec![
        phase_records_table(&format!("{prefix}_classical.csv"), &timedep, w0, false),
        phase_records_table(&format!("{prefix}_analytic.csv"), &analytic, w0, false),
    ])
}

/// Extracted single-molecule phase of `mode` (first order by default) with
/// the classical curves for comparison.
pub fn fig3(cfg: &RunConfig, mode: Option<StarkMode>) -> Result<Vec<CsvTable>> {
    let mode = mode.or(cfg.numerics.stark_mode).unwrap_or(StarkMode::FirstOrder);
    let mut out = vec![commands::extract(cfg, mode, FIG3_TAU_MAX_CYCLES, "fig3_extracted.csv")?];
    out[0].note("tau_max_cycles", num(cfg.lewenstein(FIG3_TAU_MAX_CYCLES).tau_max_cycles));
    out.extend(classical_tables(cfg, &commands::trajectory_table(cfg)?, "fig3")?);
    Ok(out)
}

/// Jet-averaged phase of `mode` (first plus second order by default) and
/// the classical curves at the mid-jet on-axis intensity.
pub fn fig4(cfg: &RunConfig, mode: Option<StarkMode>, aligned: bool, cache: &TableCache) -> Result<Vec<CsvTable>> {
    let mode = mode.or(cfg.numerics.stark_mode).unwrap_or(StarkMode::FirstAndSecond);
    let run = commands::macro_run(cfg, mode, aligned, cache)?;
    let x = &run.extraction;
    let mut averaged = averaged_phase_table("fig4_averaged_phase.csv", &x.averaged);
    averaged.note("stark_mode", mode.as_str());
    averaged.note("aligned", aligned.to_string());
    averaged.note(
        "filter_cutoff_rad",
        x.filter.map(|f| num(f.cutoff_rad)).unwrap_or_else(|| "none".into()),
    );
    let mut energy = CsvTable::new("fig4_spectrum.csv", &["omega_au", "harmonic_order", "energy_with", "energy_without", "defined_flag"]);
    let (ew, eo) = (x.refocused_with.energy_per_omega(), x.refocused_without.energy_per_omega());
    for (m, &w) in x.averaged.omega.iter().enumerate() {
        energy.push(vec![num(w), num(w / x.averaged.omega0), num(ew[m]), num(eo[m]), flag(x.averaged.reliable[m])]);
    }
    let mid = cfg.macroscopic.focus.on_axis_intensity(0.0);
    let pulse = cfg.laser_pulse()?.scaled(crate::units::field_from_intensity(mid)?);
    let table = TrajectoryTable::build(&pulse, &cfg.molecule, &cfg.trajectory_settings())?;
    let mut out = vec![averaged, energy];
    let mut classical = classical_tables(cfg, &table, "fig4")?;
    for t in &mut classical {
        t.note("intensity_Wcm2", num(mid));
    }
    out.extend(classical);
    Ok(out)
}

/// Runs one figure pipeline; `aligned` applies to the jet figure only.
pub fn reproduce(
    which: Figure,
    cfg: &RunConfig,
    mode: Option<StarkMode>,
    aligned: bool,
    cache: &TableCache,
) -> Result<Vec<CsvTable>> {
    match which {
        Figure::Trajectories => fig2(cfg),
        Figure::SingleMolecule => fig3(cfg, mode),
        Figure::Jet => fig4(cfg, mode, aligned, cache),
    }
}
