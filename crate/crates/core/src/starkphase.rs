//! First- and second-order Stark phases accumulated by the bound state
//! between ionization and recombination.
//!
//! Sign convention: the first-order phase is positive when the return
//! velocity has a positive component along the permanent dipole.

use serde::{Deserialize, Serialize};

use crate::molecule::StarkParameters;
use crate::pulse::LaserPulse;
use crate::quadrature::composite_gl8;
use crate::trajectories::{Branch, Trajectory, TrajectoryTable};
use crate::units;
use crate::{Error, Result};

/// How a Stark phase was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Direct quadrature of the energy shift over `[t′, t]`.
    TimeIntegral,
    /// `μ·ṙ(t, t′)`.
    ReturnVelocity,
    /// Frequency form with the field-dependent I_p at recombination.
    FrequencyTimedep,
    /// Closed form with the field-free I_p.
    FrequencyAnalytic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarkPhaseRecord {
    pub omega: f64,
    pub phase_order1: f64,
    /// Not defined for the analytic formulation.
    pub phase_order2: Option<f64>,
    pub branch: Option<Branch>,
    pub formulation: Formulation,
    /// ω lies below the relevant ionization potential; the phase is set to 0.
    pub below_threshold: bool,
}

fn check_interval(t_ion: f64, t: f64) -> Result<()> {
    if t_ion.is_finite() && t.is_finite() && t > t_ion {
        Ok(())
    } else {
        Err(Error::Domain(format!("need t > t′, got t′ = {t_ion}, t = {t}")))
    }
}

fn panels(pulse: &LaserPulse, t_ion: f64, t: f64) -> usize {
    ((t - t_ion) / (pulse.period() / 64.0)).ceil() as usize
}

/// `−∫ μ·F dt″` over `[t′, t]` by composite Gauss–Legendre quadrature.
pub fn phase1_time_integral(params: &StarkParameters, pulse: &LaserPulse, t_ion: f64, t: f64) -> Result<f64> {
    check_interval(t_ion, t)?;
    let (mu, _) = params.projected(&pulse.polarization());
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok(-mu * composite_gl8(t_ion, t, panels(pulse, t_ion, t), |s| pulse.field(s)))
}

/// `−½ ∫ Fᵀ α F dt″` over `[t′, t]`; never positive.
pub fn phase2_time_integral(params: &StarkParameters, pulse: &LaserPulse, t_ion: f64, t: f64) -> Result<f64> {
    check_interval(t_ion, t)?;
    let (_, alpha) = params.projected(&pulse.polarization());
    if alpha == 0.0 {
        return Ok(0.0);
    }
    Ok(-0.5 * alpha * composite_gl8(t_ion, t, panels(pulse, t_ion, t), |s| pulse.field(s).powi(2)))
}

/// `μ·ṙ(t, t′)`.
pub fn phase1_return_velocity(params: &StarkParameters, trajectory: &Trajectory) -> f64 {
    params.dipole_lab().dot(&trajectory.return_velocity)
}

/// Frequency-domain phase value with its threshold flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPhase {
    pub phase: f64,
    pub below_threshold: bool,
}

/// `sgn(μ·ṙ) |μ·ê| √(2(ω − I_p(F(t))))` on the requested branch of the
/// dominant half-cycle, with `(t′, t)` resolved from the trajectory table.
pub fn phase1_frequency_timedep(table: &TrajectoryTable, omega: f64, branch: Branch) -> Result<FrequencyPhase> {
    let (t_ion, t) = table.frequency_to_pairs(omega, branch)?;
    let pulse = table.pulse();
    let params = table.params();
    let axis = pulse.polarization();
    let (mu, _) = params.projected(&axis);
    let ip = params.ip_of_field(&(axis * pulse.field(t)))?;
    let kinetic = omega - ip;
    if kinetic < 0.0 {
        return Ok(FrequencyPhase {
            phase: 0.0,
            below_threshold: true,
        });
    }
    let sign = (mu * pulse.velocity(t_ion, t)).signum();
    Ok(FrequencyPhase {
        phase: sign * mu.abs() * (2.0 * kinetic).sqrt(),
        below_threshold: false,
    })
}

/// Second-order phase on the trajectory that emits `omega` on a branch.
pub fn phase2_frequency(table: &TrajectoryTable, omega: f64, branch: Branch) -> Result<f64> {
    let (t_ion, t) = table.frequency_to_pairs(omega, branch)?;
    phase2_time_integral(table.params(), table.pulse(), t_ion, t)
}

/// `±μ cos θ √(2(ω − I_p))` with the field-free I_p. `direction` is the sign
/// of the returning electron's velocity along the polarization axis.
pub fn phase1_analytic(params: &StarkParameters, axis: &nalgebra::Vector3<f64>, omega: f64, direction: f64) -> FrequencyPhase {
    let (mu, _) = params.projected(axis);
    let kinetic = omega - params.ip0();
    if kinetic < 0.0 {
        FrequencyPhase {
            phase: 0.0,
            below_threshold: true,
        }
    } else {
        FrequencyPhase {
            phase: direction.signum() * mu * (2.0 * kinetic).sqrt(),
            below_threshold: false,
        }
    }
}

/// Classical cutoff law and the envelope-free second-order cutoff estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffScaling {
    pub ponderomotive: f64,
    pub omega_max: f64,
    pub phase2_cutoff_estimate: f64,
}

/// Fixed excursion, in cycles, of the second-order cutoff estimate.
pub const CUTOFF_EXCURSION_CYCLES: f64 = 2.0 / 3.0;

pub fn cutoff_and_scaling(pulse: &LaserPulse, params: &StarkParameters) -> CutoffScaling {
    let f0 = pulse.peak_field();
    let w0 = pulse.omega();
    let up = units::ponderomotive(f0, w0);
    let (_, alpha) = params.projected(&pulse.polarization());
    // Carrier peak (phase π/2) to 2T/3 later, envelope neglected.
    let phase_span = 2.0 * std::f64::consts::PI * CUTOFF_EXCURSION_CYCLES;
    let mean_sq = composite_gl8(0.5 * std::f64::consts::PI, 0.5 * std::f64::consts::PI + phase_span, 16, |x| {
        x.sin().powi(2)
    });
    CutoffScaling {
        ponderomotive: up,
        omega_max: 3.17 * up + params.ip0(),
        phase2_cutoff_estimate: -0.5 * alpha * f0 * f0 / w0 * mean_sq,
    }
}

/// Phase records for every first-return trajectory of the table.
pub fn trajectory_records(table: &TrajectoryTable, formulation: Formulation) -> Result<Vec<StarkPhaseRecord>> {
    let params = table.params();
    let pulse = table.pulse();
    table
        .trajectories
        .iter()
        .filter(|t| t.return_index == 1)
        .map(|t| {
            let p1 = match formulation {
                Formulation::ReturnVelocity => phase1_return_velocity(params, t),
                _ => phase1_time_integral(params, pulse, t.t_ion, t.t_return)?,
            };
            Ok(StarkPhaseRecord {
                omega: t.photon_energy,
                phase_order1: p1,
                phase_order2: Some(phase2_time_integral(params, pulse, t.t_ion, t.t_return)?),
                branch: Some(t.branch),
                formulation,
                below_threshold: false,
            })
        })
        .collect()
}

/// Frequency-domain records on a frequency grid, per branch of the dominant
/// half-cycle. Frequencies outside a branch's classical range are skipped.
pub fn frequency_records(
    table: &TrajectoryTable,
    omegas: &[f64],
    formulation: Formulation,
) -> Result<Vec<StarkPhaseRecord>> {
    let params = table.params();
    let axis = table.pulse().polarization();
    let direction = table.return_direction().unwrap_or(1.0);
    let mut out = Vec::new();
    match formulation {
        Formulation::FrequencyAnalytic => {
            for &w in omegas {
                let p = phase1_analytic(params, &axis, w, direction);
                out.push(StarkPhaseRecord {
                    omega: w,
                    phase_order1: p.phase,
                    phase_order2: None,
                    branch: None,
                    formulation,
                    below_threshold: p.below_threshold,
                });
            }
        }
        _ => {
            for branch in [Branch::Short, Branch::Long] {
                for &w in omegas {
                    let p = match phase1_frequency_timedep(table, w, branch) {
                        Ok(p) => p,
                        Err(Error::OutOfRange { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    out.push(StarkPhaseRecord {
                        omega: w,
                        phase_order1: p.phase,
                        phase_order2: Some(phase2_frequency(table, w, branch)?),
                        branch: Some(branch),
                        formulation: Formulation::FrequencyTimedep,
                        below_threshold: p.below_threshold,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::PulseShape;
    use crate::trajectories::TrajectorySettings;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn reference_table() -> &'static TrajectoryTable {
        static TABLE: OnceLock<TrajectoryTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let p = LaserPulse::new(PulseShape::reference(2.0e14).unwrap()).unwrap();
            TrajectoryTable::build(&p, &StarkParameters::carbon_monoxide(), &TrajectorySettings::default()).unwrap()
        })
    }

    fn co() -> StarkParameters {
        StarkParameters::carbon_monoxide()
    }

    /// Upper plateau of the dominant half-cycle. Below it the short
    /// trajectories recombine near the field crest and the Stark-shifted I_p
    /// departs from I_p0 by more than 15% of the kinetic energy.
    fn plateau(table: &TrajectoryTable) -> Vec<f64> {
        let ip = table.params().ip0();
        let cut = table.cutoff(table.dominant_half_cycle().unwrap()).unwrap();
        let (lo, hi) = (ip + 0.4 * (cut - ip), cut - 0.05 * (cut - ip));
        (0..=40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect()
    }

    #[test]
    fn phase1_vanishes_without_projection() {
        let t = reference_table();
        let p = t.pulse();
        let no_dipole = StarkParameters { mu_au: 0.0, ..co() };
        assert_eq!(phase1_time_integral(&no_dipole, p, 10.0, 120.0).unwrap(), 0.0);
        let perpendicular = co().with_theta(PI / 2.0);
        assert!(phase1_time_integral(&perpendicular, p, 10.0, 120.0).unwrap().abs() < 1e-15);
        assert!(phase1_time_integral(&co(), p, 120.0, 10.0).is_err());
    }

    #[test]
    fn full_pulse_phase1_is_net_area() {
        let p = reference_table().pulse();
        let full = phase1_time_integral(&co(), p, 0.0, p.duration()).unwrap();
        let area = -p.vector_potential_scalar(p.duration());
        assert!((full + 1.1 * area).abs() < 1e-10);
        assert!(full.abs() < 1.1 * 1e-3 * p.peak_field() / p.omega());
    }

    #[test]
    fn phase2_monochromatic_period() {
        let p = LaserPulse::new(PulseShape::flat_top_800nm(0.075, 6.0)).unwrap();
        let t = p.period();
        let phi = phase2_time_integral(&co(), &p, 2.0 * t, 3.0 * t).unwrap();
        let expect = -0.5 * 3.2 * 0.075f64.powi(2) * t / 2.0;
        assert!((phi / expect - 1.0).abs() < 1e-10, "{phi} vs {expect}");
        let no_alpha = StarkParameters {
            alpha_par_au: 0.0,
            alpha_perp_au: 0.0,
            ..co()
        };
        assert_eq!(phase2_time_integral(&no_alpha, &p, 2.0 * t, 3.0 * t).unwrap(), 0.0);
    }

    #[test]
    fn phase2_grows_with_excursion() {
        let p = reference_table().pulse();
        let t0 = 0.6 * p.period();
        let mut last = 0.0;
        for k in 1..40 {
            let phi = phase2_time_integral(&co(), p, t0, t0 + k as f64 * 3.0).unwrap();
            assert!(phi <= 0.0 && phi <= last);
            last = phi;
        }
    }

    #[test]
    fn return_velocity_form_matches_quadrature() {
        let table = reference_table();
        let params = co().with_theta(0.4);
        let mut worst: f64 = 0.0;
        for tr in &table.trajectories {
            let a = phase1_time_integral(&params, table.pulse(), tr.t_ion, tr.t_return).unwrap();
            worst = worst.max((a - phase1_return_velocity(&params, tr)).abs());
        }
        assert!(worst < 1e-8, "{worst}");
        let mut still = table.trajectories[0].clone();
        still.return_velocity = nalgebra::Vector3::zeros();
        assert_eq!(phase1_return_velocity(&params, &still), 0.0);
    }

    #[test]
    fn cutoff_trajectory_phase_near_half_pi() {
        let table = reference_table();
        let hc = table.dominant_half_cycle().unwrap();
        let tr = table
            .trajectories
            .iter()
            .filter(|t| t.half_cycle == hc && t.return_index == 1)
            .max_by(|a, b| a.photon_energy.total_cmp(&b.photon_energy))
            .unwrap();
        let phi = phase1_return_velocity(&co(), tr).abs();
        let ke = 0.5 * tr.return_velocity.norm_squared();
        assert!((phi - 1.1 * (2.0 * ke).sqrt()).abs() < 1e-12);
        assert!(phi > 0.35 * PI && phi < 0.65 * PI, "{}", phi / PI);
    }

    #[test]
    fn short_and_long_differ_slightly() {
        let table = reference_table();
        for w in plateau(table) {
            let s = phase1_frequency_timedep(table, w, Branch::Short).unwrap().phase;
            let l = phase1_frequency_timedep(table, w, Branch::Long).unwrap().phase;
            assert!(s.signum() == l.signum());
            assert!((s - l).abs() < 0.15 * s.abs(), "ω={w}: {s} vs {l}");
        }
    }

    #[test]
    fn perpendicular_orientation_has_no_first_order_phase() {
        let p = reference_table().pulse().clone();
        let params = co().with_theta(PI / 2.0);
        let table = TrajectoryTable::build(&p, &params, &TrajectorySettings { samples_per_cycle: 512, ..Default::default() }).unwrap();
        for w in plateau(&table) {
            assert!(phase1_frequency_timedep(&table, w, Branch::Short).unwrap().phase.abs() < 1e-15);
            assert!(phase1_analytic(&params, &p.polarization(), w, 1.0).phase.abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_examples() {
        let axis = nalgebra::Vector3::z();
        let w21 = 21.0 * units::omega_from_wavelength_nm(800.0);
        let p = phase1_analytic(&co(), &axis, w21, 1.0);
        let expect = 1.1 * (2.0 * (w21 - 0.5150)).sqrt();
        assert!((p.phase - expect).abs() < 1e-12 && !p.below_threshold);
        assert!((expect - 1.2843).abs() < 1e-3);
        assert_eq!(phase1_analytic(&co(), &axis, 0.5150, 1.0).phase, 0.0);
        let below = phase1_analytic(&co(), &axis, 0.4, -1.0);
        assert!(below.below_threshold && below.phase == 0.0);
        let doubled = StarkParameters { mu_au: 2.2, ..co() };
        assert!((phase1_analytic(&doubled, &axis, w21, -1.0).phase + 2.0 * expect).abs() < 1e-12);
    }

    #[test]
    fn analytic_overestimates_timedep_over_plateau() {
        let table = reference_table();
        let axis = table.pulse().polarization();
        let dir = table.return_direction().unwrap();
        for w in plateau(table) {
            let analytic = phase1_analytic(table.params(), &axis, w, dir).phase;
            let (_, t) = table.frequency_to_pairs(w, Branch::Short).unwrap();
            let raised = table.params().ip_of_field(&(axis * table.pulse().field(t))).unwrap() > table.params().ip0();
            let timedep = phase1_frequency_timedep(table, w, Branch::Short).unwrap().phase;
            if raised {
                assert!(analytic.abs() >= timedep.abs());
            } else {
                assert!(analytic.abs() <= timedep.abs());
            }
            assert!((analytic - timedep).abs() / analytic.abs() < 0.15);
        }
    }

    #[test]
    fn analytic_square_root_slope() {
        let axis = nalgebra::Vector3::z();
        let pts: Vec<(f64, f64)> = (1..=30)
            .map(|k| {
                let w = 0.6 + 0.03 * k as f64;
                ((w - 0.515).ln(), phase1_analytic(&co(), &axis, w, 1.0).phase.ln())
            })
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
        assert!((sxy / sxx - 0.5).abs() < 0.01);
    }

    #[test]
    fn orientation_flip_and_field_reversal() {
        let table = reference_table();
        let p = table.pulse();
        let reversed = LaserPulse::new(PulseShape {
            cep_rad: p.shape().cep_rad + PI,
            ..p.shape().clone()
        })
        .unwrap();
        for tr in table.trajectories.iter().step_by(101) {
            let a = phase1_time_integral(&co(), p, tr.t_ion, tr.t_return).unwrap();
            let b = phase1_time_integral(&co().flipped(), p, tr.t_ion, tr.t_return).unwrap();
            assert!((a + b).abs() < 1e-14);
            let c = phase2_time_integral(&co(), p, tr.t_ion, tr.t_return).unwrap();
            let d = phase2_time_integral(&co(), &reversed, tr.t_ion, tr.t_return).unwrap();
            assert!((c - d).abs() < 1e-12 * c.abs().max(1e-12));
        }
    }

    #[test]
    fn cutoff_scaling_examples() {
        let zero = LaserPulse::new(PulseShape::two_cycle_800nm(0.0)).unwrap();
        let s = cutoff_and_scaling(&zero, &co());
        assert_eq!(s.ponderomotive, 0.0);
        assert_eq!(s.omega_max, 0.515);
        assert_eq!(s.phase2_cutoff_estimate, 0.0);

        let flat = LaserPulse::new(PulseShape::flat_top_800nm(0.075, 8.0)).unwrap();
        let s = cutoff_and_scaling(&flat, &co());
        let table = TrajectoryTable::build(&flat, &co(), &TrajectorySettings { samples_per_cycle: 1024, ..Default::default() }).unwrap();
        let classical = table.max_kinetic_energy() + 0.515;
        assert!((s.omega_max / classical - 1.0).abs() < 0.02);
        assert!(s.phase2_cutoff_estimate < 0.0);
    }

    proptest! {
        #[test]
        fn halving_frequency_at_fixed_up_halves_estimate(f0 in 0.01f64..0.1, w0 in 0.03f64..0.1) {
            let make = |f: f64, w: f64| LaserPulse::with_grid(PulseShape { peak_field_au: f, omega_au: w, ..PulseShape::two_cycle_800nm(f) }, crate::pulse::MIN_GRID_POINTS).unwrap();
            let a = cutoff_and_scaling(&make(f0, w0), &co());
            // U_p = F²/4ω² fixed ⇒ F scales with ω.
            let b = cutoff_and_scaling(&make(f0 / 2.0, w0 / 2.0), &co());
            prop_assert!((a.ponderomotive - b.ponderomotive).abs() <= 1e-14 * a.ponderomotive);
            prop_assert!((b.phase2_cutoff_estimate / a.phase2_cutoff_estimate - 0.5).abs() < 1e-12);
        }
    }
}
