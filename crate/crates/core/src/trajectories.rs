//! Classical three-step trajectories: an electron released at rest from the
//! origin at `t′` moves under `ẍ = −F(t)` (the ionic potential is ignored) and
//! returns when its displacement crosses zero. Energy conservation at the
//! return, `ω = ½ṙ² + I_p(F(t))`, maps `(t, t′)` to a harmonic frequency.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::molecule::StarkParameters;
use crate::pulse::LaserPulse;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Short,
    Long,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Short => "short",
            Branch::Long => "long",
        }
    }
}

/// Which ionization potential enters the energy-conservation map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpMode {
    /// I_p(F(t)) at the return time.
    Stark,
    /// Field-free |E0|.
    FieldFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t_ion: f64,
    pub t_return: f64,
    pub return_velocity: Vector3<f64>,
    pub photon_energy: f64,
    pub branch: Branch,
    pub half_cycle: i64,
    /// 1 for the first return, 2 for the second, ...
    pub return_index: usize,
}

impl Trajectory {
    pub fn excursion_time(&self) -> f64 {
        self.t_return - self.t_ion
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySettings {
    /// Ionization-time samples per optical cycle (at least 512).
    pub samples_per_cycle: usize,
    /// Sign-change scan steps per optical cycle when bracketing returns.
    pub scan_steps_per_cycle: usize,
    /// Displacement tolerance of the refined return (au).
    pub root_tol_au: f64,
    /// Keep second and later returns as well.
    pub later_returns: bool,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self {
            samples_per_cycle: 2048,
            scan_steps_per_cycle: 512,
            root_tol_au: 1e-8,
            later_returns: false,
        }
    }
}

/// All return times `t ∈ (t′, τ]` at which the displacement crosses zero,
/// ascending. Tangential touches are not reported.
pub fn solve_returns(pulse: &LaserPulse, t_ion: f64, settings: &TrajectorySettings) -> Result<Vec<f64>> {
    let limit = if settings.later_returns { usize::MAX } else { 1 };
    returns_up_to(pulse, t_ion, settings, limit)
}

fn returns_up_to(
    pulse: &LaserPulse,
    t_ion: f64,
    settings: &TrajectorySettings,
    limit: usize,
) -> Result<Vec<f64>> {
    if !t_ion.is_finite() || t_ion < 0.0 || t_ion > pulse.duration() {
        return Err(Error::Domain(format!(
            "ionization time {t_ion} outside pulse support [0, {}]",
            pulse.duration()
        )));
    }
    let x_ion = pulse.excursion_integral(t_ion);
    let a_ion = pulse.vector_potential_scalar(t_ion);
    let disp = |t: f64| pulse.excursion_integral(t) - x_ion - a_ion * (t - t_ion);

    let end = pulse.duration();
    let step = pulse.period() / settings.scan_steps_per_cycle as f64;
    let mut roots = Vec::new();
    let mut lo = t_ion;
    let mut r_lo = 0.0;
    let mut first = true;
    while lo < end && roots.len() < limit {
        let hi = (lo + step).min(end);
        let r_hi = disp(hi);
        if first {
            first = false;
        } else if r_lo == 0.0 {
            roots.push(lo);
        } else if r_lo * r_hi < 0.0 {
            roots.push(refine_root(&disp, lo, hi, r_lo, r_hi, settings.root_tol_au));
        }
        if roots.len() < limit && hi == end && r_hi == 0.0 {
            roots.push(hi);
        }
        lo = hi;
        r_lo = r_hi;
    }
    roots.truncate(limit);
    Ok(roots)
}

/// Illinois false position on a sign-changing bracket.
fn refine_root(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc.abs() < tol && (b - a) < 1e-6 || fc == 0.0 || (b - a) < 1e-13 {
            return c;
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if fc.abs() < tol * 1e-3 {
            return c;
        }
        if a > b {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    0.5 * (a + b)
}

/// Photon energy `½|ṙ|² + I_p` of a return pair.
pub fn photon_energy(
    pulse: &LaserPulse,
    params: &StarkParameters,
    t_ion: f64,
    t_return: f64,
    ip_mode: IpMode,
) -> Result<f64> {
    if !(t_ion.is_finite() && t_return.is_finite()) || t_return <= t_ion {
        return Err(Error::Domain(format!(
            "invalid return pair (t′ = {t_ion}, t = {t_return})"
        )));
    }
    let r = pulse.displacement(t_ion, t_return);
    if r.abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "electron released at {t_ion} is {r:.3e} au from the origin at {t_return}"
        )));
    }
    let v = pulse.velocity(t_ion, t_return);
    let ip = match ip_mode {
        IpMode::Stark => params.ip_of_field(&pulse.field_at(t_return)?)?,
        IpMode::FieldFree => params.ip0(),
    };
    Ok(0.5 * v * v + ip)
}

/// Classical trajectories of a pulse, ordered by ionization time.
#[derive(Debug, Clone)]
pub struct TrajectoryTable {
    pub trajectories: Vec<Trajectory>,
    pulse: LaserPulse,
    params: StarkParameters,
    settings: TrajectorySettings,
}

impl TrajectoryTable {
    pub fn build(pulse: &LaserPulse, params: &StarkParameters, settings: &TrajectorySettings) -> Result<Self> {
        if settings.samples_per_cycle < 512 {
            return Err(Error::config(
                "numerics.trajectory_samples_per_cycle",
                "must be at least 512",
            ));
        }
        let dt = pulse.period() / settings.samples_per_cycle as f64;
        let n = (pulse.duration() / dt).floor() as usize;
        let axis = pulse.polarization();

        let per_ion: Vec<Result<Vec<Trajectory>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let t_ion = (i as f64 + 0.5) * dt;
                let returns = solve_returns(pulse, t_ion, settings)?;
                returns
                    .into_iter()
                    .enumerate()
                    .map(|(k, t_ret)| {
                        let v = pulse.velocity(t_ion, t_ret);
                        let ip = params.ip_of_field(&(axis * pulse.field(t_ret)))?;
                        Ok(Trajectory {
                            t_ion,
                            t_return: t_ret,
                            return_velocity: axis * v,
                            photon_energy: 0.5 * v * v + ip,
                            branch: Branch::Short,
                            half_cycle: pulse.half_cycle_index(t_ion),
                            return_index: k + 1,
                        })
                    })
                    .collect()
            })
            .collect();
        let mut trajectories = Vec::new();
        for r in per_ion {
            trajectories.extend(r?);
        }
        classify(&mut trajectories);
        Ok(Self {
            trajectories,
            pulse: pulse.clone(),
            params: params.clone(),
            settings: settings.clone(),
        })
    }

    pub fn pulse(&self) -> &LaserPulse {
        &self.pulse
    }

    pub fn params(&self) -> &StarkParameters {
        &self.params
    }

    fn first_returns(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(|t| t.return_index == 1)
    }

    /// Half-cycle whose first-return trajectories reach the highest photon energy.
    pub fn dominant_half_cycle(&self) -> Option<i64> {
        self.first_returns()
            .max_by(|a, b| a.photon_energy.total_cmp(&b.photon_energy))
            .map(|t| t.half_cycle)
    }

    /// Maximum photon energy of first returns in a half-cycle.
    pub fn cutoff(&self, half_cycle: i64) -> Option<f64> {
        self.first_returns()
            .filter(|t| t.half_cycle == half_cycle)
            .map(|t| t.photon_energy)
            .max_by(f64::total_cmp)
    }

    /// Sign of the return velocity along the polarization axis for the
    /// dominant half-cycle (the direction from which the electron recollides).
    pub fn return_direction(&self) -> Option<f64> {
        let hc = self.dominant_half_cycle()?;
        let axis = self.pulse.polarization();
        self.first_returns()
            .filter(|t| t.half_cycle == hc)
            .max_by(|a, b| a.photon_energy.total_cmp(&b.photon_energy))
            .map(|t| t.return_velocity.dot(&axis).signum())
    }

    /// Maximum of the kinetic return energy `½ṙ²` over all trajectories.
    pub fn max_kinetic_energy(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|t| 0.5 * t.return_velocity.norm_squared())
            .fold(0.0, f64::max)
    }

    /// First-return trajectories of one branch of a half-cycle, ordered from
    /// the cutoff outward (the cutoff trajectory is included in both branches).
    pub fn branch_curve(&self, half_cycle: i64, branch: Branch) -> Vec<&Trajectory> {
        let mut group: Vec<&Trajectory> = self
            .first_returns()
            .filter(|t| t.half_cycle == half_cycle)
            .collect();
        let Some(peak_exc) = group
            .iter()
            .max_by(|a, b| a.photon_energy.total_cmp(&b.photon_energy))
            .map(|t| t.excursion_time())
        else {
            return Vec::new();
        };
        group.sort_by(|a, b| a.excursion_time().total_cmp(&b.excursion_time()));
        let split = group.partition_point(|t| t.excursion_time() < peak_exc);
        match branch {
            Branch::Short => group[..=split].iter().rev().copied().collect(),
            Branch::Long => group[split..].to_vec(),
        }
    }

    /// Return pair `(t′, t)` on the dominant half-cycle that emits frequency
    /// `omega` on the requested branch.
    pub fn frequency_to_pairs(&self, omega: f64, branch: Branch) -> Result<(f64, f64)> {
        let hc = self
            .dominant_half_cycle()
            .ok_or_else(|| Error::Domain("trajectory table is empty".into()))?;
        self.frequency_to_pairs_in(hc, omega, branch)
    }

    pub fn frequency_to_pairs_in(&self, half_cycle: i64, omega: f64, branch: Branch) -> Result<(f64, f64)> {
        let curve = self.branch_curve(half_cycle, branch);
        let cutoff = curve.first().map(|t| t.photon_energy).unwrap_or(f64::NAN);
        let floor = curve
            .iter()
            .map(|t| t.photon_energy)
            .fold(f64::INFINITY, f64::min);
        let out_of_range = || Error::OutOfRange {
            omega_au: omega,
            min_au: floor,
            max_au: cutoff,
        };
        if curve.is_empty() || !(omega >= floor && omega <= cutoff) {
            return Err(out_of_range());
        }
        if omega == cutoff {
            return Ok((curve[0].t_ion, curve[0].t_return));
        }
        for pair in curve.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if (a.photon_energy - omega) * (b.photon_energy - omega) <= 0.0 {
                return self.refine_pair(a, b, omega);
            }
        }
        Err(out_of_range())
    }

    /// Bisect on the ionization time between two tabulated neighbours.
    fn refine_pair(&self, a: &Trajectory, b: &Trajectory, omega: f64) -> Result<(f64, f64)> {
        let energy = |t_ion: f64| -> Result<Option<(f64, f64)>> {
            let returns = returns_up_to(&self.pulse, t_ion, &self.settings, 1)?;
            match returns.first() {
                Some(&t) => {
                    let e = photon_energy(&self.pulse, &self.params, t_ion, t, IpMode::Stark)?;
                    Ok(Some((t, e)))
                }
                None => Ok(None),
            }
        };
        let (mut lo, mut hi) = (a.t_ion, b.t_ion);
        let (mut g_lo, mut g_hi) = (a.photon_energy - omega, b.photon_energy - omega);
        let (mut best_t, mut best_ret, mut best_g) = if g_lo.abs() < g_hi.abs() {
            (lo, a.t_return, g_lo)
        } else {
            (hi, b.t_return, g_hi)
        };
        for _ in 0..60 {
            if best_g.abs() < 1e-13 || (hi - lo).abs() < 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let Some((t_ret, e)) = energy(mid)? else {
                break;
            };
            let g = e - omega;
            if g.abs() < best_g.abs() {
                best_t = mid;
                best_ret = t_ret;
                best_g = g;
            }
            if g * g_lo <= 0.0 {
                hi = mid;
                g_hi = g;
            } else {
                lo = mid;
                g_lo = g;
            }
        }
        let _ = g_hi;
        Ok((best_t, best_ret))
    }

    /// Trajectories grouped by (half-cycle, return index).
    pub fn groups(&self) -> BTreeMap<(i64, usize), Vec<&Trajectory>> {
        let mut map: BTreeMap<(i64, usize), Vec<&Trajectory>> = BTreeMap::new();
        for t in &self.trajectories {
            map.entry((t.half_cycle, t.return_index)).or_default().push(t);
        }
        map
    }
}

/// Label short/long within each (half-cycle, return index) group: short iff the
/// excursion does not exceed that of the group's maximum-energy trajectory.
fn classify(trajectories: &mut [Trajectory]) {
    let mut peaks: BTreeMap<(i64, usize), (f64, f64)> = BTreeMap::new();
    for t in trajectories.iter() {
        let e = peaks
            .entry((t.half_cycle, t.return_index))
            .or_insert((f64::NEG_INFINITY, 0.0));
        if t.photon_energy > e.0 {
            *e = (t.photon_energy, t.excursion_time());
        }
    }
    for t in trajectories.iter_mut() {
        let (_, exc) = peaks[&(t.half_cycle, t.return_index)];
        t.branch = if t.excursion_time() <= exc {
            Branch::Short
        } else {
            Branch::Long
        };
    }
}
