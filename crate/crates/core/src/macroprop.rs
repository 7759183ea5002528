//! Reduced macroscopic propagation through a thin gas jet.
//!
//! The driving beam is an unperturbed Gaussian focus. Each slice of the jet
//! radiates the local single-molecule spectrum, looked up on an intensity
//! table, delayed by the local phase of the fundamental. Slices are diffracted
//! paraxially to the jet exit and summed coherently. The exit field is then
//! transformed to the far field, filtered, transformed back, and the Stark
//! phase is averaged over the refocused spot with `|F|²` weights.
//!
//! Radial transforms use a quasi-discrete Hankel transform on the zeros of
//! `J0`:
//!
//! ```text
//! G(k) = 2π ∫ F(r) J0(k r) r dr,    F(r) = (1/2π) ∫ G(k) J0(k r) k dk
//! ```

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lewenstein::{
    dipole_time_series, spectrum, spectrum_grid, wrap_phase, LewensteinSettings, PhaseCurve, SpectrumSettings,
    StarkMode,
};
use crate::molecule::StarkParameters;
use crate::pulse::{FocusGeometry, LaserPulse};
use crate::units;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    /// Jet length along the propagation axis (cm), centred on z = 0.
    pub length_cm: f64,
    /// Number density (cm⁻³).
    pub number_density_cm3: f64,
    /// Number of z slices (midpoint rule).
    pub slices: usize,
}

impl Default for MediumSpec {
    fn default() -> Self {
        Self {
            length_cm: 0.5,
            number_density_cm3: 5e14,
            slices: 21,
        }
    }
}

impl MediumSpec {
    pub fn validate(&self) -> Result<()> {
        self.validate_physical()?;
        if self.slices < 3 {
            return Err(Error::config("macroscopic.slices", "must be at least 3"));
        }
        Ok(())
    }

    fn validate_physical(&self) -> Result<()> {
        if !(self.length_cm > 0.0 && self.length_cm.is_finite()) {
            return Err(Error::config("macroscopic.length_cm", "must be positive and finite"));
        }
        if !(self.number_density_cm3 >= 0.0 && self.number_density_cm3.is_finite()) {
            return Err(Error::config(
                "macroscopic.number_density_cm3",
                "must be non-negative and finite",
            ));
        }
        if self.slices == 0 {
            return Err(Error::config("macroscopic.slices", "must be positive"));
        }
        Ok(())
    }

    /// Slice centres (cm) and the common slice thickness.
    pub fn slice_positions(&self) -> (Vec<f64>, f64) {
        let dz = self.length_cm / self.slices as f64;
        let z = (0..self.slices)
            .map(|s| -0.5 * self.length_cm + (s as f64 + 0.5) * dz)
            .collect();
        (z, dz)
    }
}

/// First `n` positive zeros of `J0`.
pub fn bessel_j0_zeros(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|s| {
            let beta = (s as f64 - 0.25) * PI;
            let mut x = beta + 1.0 / (8.0 * beta) - 31.0 / (384.0 * beta.powi(3));
            for _ in 0..50 {
                let step = libm::j0(x) / libm::j1(x);
                x += step;
                if step.abs() < 1e-15 * x {
                    break;
                }
            }
            x
        })
        .collect()
}

/// Radial nodes `r_n = j_n R / j_{N+1}` and spatial frequencies `k_m = j_m / R`
/// with the matching quadrature weights of the Fourier–Bessel expansion.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub r_cm: Vec<f64>,
    pub k_per_cm: Vec<f64>,
    /// `∫ f r dr ≈ Σ r_weights[n] f(r_n)`.
    pub r_weights: Vec<f64>,
    /// `∫ g k dk ≈ Σ k_weights[m] g(k_m)`.
    pub k_weights: Vec<f64>,
    pub extent_cm: f64,
    forward: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl RadialGrid {
    pub fn new(nodes: usize, extent_cm: f64) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::config("numerics.radial_nodes", "must be positive"));
        }
        if !(extent_cm > 0.0 && extent_cm.is_finite()) {
            return Err(Error::config("numerics.radial_extent_waists", "must be positive"));
        }
        let zeros = bessel_j0_zeros(nodes + 1);
        let s = zeros[nodes];
        let big_k = s / extent_cm;
        let j = &zeros[..nodes];
        let r_cm: Vec<f64> = j.iter().map(|z| z * extent_cm / s).collect();
        let k_per_cm: Vec<f64> = j.iter().map(|z| z / extent_cm).collect();
        let j1sq: Vec<f64> = j.iter().map(|&z| libm::j1(z).powi(2)).collect();
        let r_weights: Vec<f64> = j1sq.iter().map(|v| 2.0 * extent_cm * extent_cm / (s * s * v)).collect();
        let k_weights: Vec<f64> = j1sq.iter().map(|v| 2.0 * big_k * big_k / (s * s * v)).collect();
        let forward = DMatrix::from_fn(nodes, nodes, |m, n| {
            2.0 * PI * libm::j0(k_per_cm[m] * r_cm[n]) * r_weights[n]
        });
        let inverse = forward
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular Hankel matrix".into()))?;
        Ok(Self {
            r_cm,
            k_per_cm,
            r_weights,
            k_weights,
            extent_cm,
            forward,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.r_cm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_cm.is_empty()
    }

    pub fn forward(&self, f: &[Complex64]) -> Vec<Complex64> {
        apply(&self.forward, f)
    }

    pub fn inverse(&self, g: &[Complex64]) -> Vec<Complex64> {
        apply(&self.inverse, g)
    }
}

fn apply(m: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, x) in v.iter().enumerate() {
                acc += x * m[(i, j)];
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Near,
    Far,
    Refocused,
}

impl Plane {
    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Near => "near",
            Plane::Far => "far",
            Plane::Refocused => "refocused",
        }
    }
}

/// Harmonic field on an `ω × radial` grid, stored ω-major. In the far plane
/// the radial coordinate is the transverse wavenumber (rad/cm), otherwise the
/// radius (cm).
#[derive(Debug, Clone)]
pub struct FieldMap {
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    pub plane: Plane,
    pub grid: Arc<RadialGrid>,
    pub omega0: f64,
    pub ip0: f64,
}

impl FieldMap {
    pub fn radial(&self) -> &[f64] {
        match self.plane {
            Plane::Far => &self.grid.k_per_cm,
            _ => &self.grid.r_cm,
        }
    }

    pub fn radial_weights(&self) -> &[f64] {
        match self.plane {
            Plane::Far => &self.grid.k_weights,
            _ => &self.grid.r_weights,
        }
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// `∫ |F|² r dr` (or `k dk`) at every ω.
    pub fn energy_per_omega(&self) -> Vec<f64> {
        let w = self.radial_weights();
        (0..self.omega.len())
            .map(|i| self.row(i).iter().zip(w).map(|(v, w)| w * v.norm_sqr()).sum())
            .collect()
    }

    fn map_rows(&self, plane: Plane, f: impl Fn(usize, &[Complex64]) -> Vec<Complex64> + Sync) -> FieldMap {
        let rows: Vec<Vec<Complex64>> = (0..self.omega.len()).into_par_iter().map(|i| f(i, self.row(i))).collect();
        FieldMap {
            omega: self.omega.clone(),
            values: rows.concat(),
            plane,
            grid: self.grid.clone(),
            omega0: self.omega0,
            ip0: self.ip0,
        }
    }

    fn same_grid(&self, other: &FieldMap) -> bool {
        self.omega == other.omega && self.grid.r_cm == other.grid.r_cm && self.plane == other.plane
    }

    /// Coherent sum of two maps on the same grid and plane.
    pub fn add(&self, other: &FieldMap) -> Result<FieldMap> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("field maps differ in grid or plane".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(out)
    }
}

/// Near (or refocused) field to far field, per ω.
pub fn to_far_field(map: &FieldMap) -> Result<FieldMap> {
    if map.plane == Plane::Far {
        return Err(Error::WrongPlane {
            expected: "near",
            found: map.plane.as_str(),
        });
    }
    Ok(map.map_rows(Plane::Far, |_, row| map.grid.forward(row)))
}

/// Far field back to the refocused near field.
pub fn to_near_field(map: &FieldMap) -> Result<FieldMap> {
    if map.plane != Plane::Far {
        return Err(Error::WrongPlane {
            expected: "far",
            found: map.plane.as_str(),
        });
    }
    Ok(map.map_rows(Plane::Refocused, |_, row| map.grid.inverse(row)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterShape {
    HardEdge,
    SuperGaussian,
}

/// Far-field spatial filter acting on the divergence angle `θ = k_⊥ / k(ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub shape: FilterShape,
    /// Cutoff divergence half-angle (rad).
    pub cutoff_rad: f64,
    /// Super-Gaussian order n in `exp(−(θ/θ_c)^{2n})`.
    pub order: u32,
}

impl FilterSpec {
    pub fn hard_edge(cutoff_rad: f64) -> Self {
        Self {
            shape: FilterShape::HardEdge,
            cutoff_rad,
            order: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff_rad.is_nan() || self.cutoff_rad <= 0.0 {
            return Err(Error::config("macroscopic.filter_cutoff_rad", "must be positive"));
        }
        if self.shape == FilterShape::SuperGaussian && self.order == 0 {
            return Err(Error::config("macroscopic.filter_order", "must be at least 1"));
        }
        Ok(())
    }

    pub fn transmission(&self, theta: f64) -> f64 {
        match self.shape {
            FilterShape::HardEdge => {
                if theta <= self.cutoff_rad {
                    1.0
                } else {
                    0.0
                }
            }
            FilterShape::SuperGaussian => (-(theta / self.cutoff_rad).powi(2 * self.order as i32)).exp(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            cutoff_rad: self.cutoff_rad * factor,
            ..*self
        }
    }
}

/// Divergence half-angle enclosing `fraction` of the far-field energy in the
/// band `[lo, hi]`.
pub fn enclosed_energy_angle(far: &FieldMap, lo: f64, hi: f64, fraction: f64) -> Result<f64> {
    if far.plane != Plane::Far {
        return Err(Error::WrongPlane {
            expected: "far",
            found: far.plane.as_str(),
        });
    }
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (i, &w) in far.omega.iter().enumerate() {
        if w < lo || w > hi {
            continue;
        }
        let kw = units::wavenumber_per_cm(w);
        for (m, v) in far.row(i).iter().enumerate() {
            samples.push((far.grid.k_per_cm[m] / kw, far.grid.k_weights[m] * v.norm_sqr()));
        }
    }
    let total: f64 = samples.iter().map(|s| s.1).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Domain("no far-field energy in the requested band".into()));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (theta, e) in samples {
        acc += e;
        if acc >= fraction * total {
            return Ok(theta);
        }
    }
    Err(Error::Domain("enclosed-energy fraction not reached".into()))
}

pub fn apply_filter(far: &FieldMap, filter: &FilterSpec) -> Result<FieldMap> {
    if far.plane != Plane::Far {
        return Err(Error::WrongPlane {
            expected: "far",
            found: far.plane.as_str(),
        });
    }
    filter.validate()?;
    Ok(far.map_rows(Plane::Far, |i, row| {
        let kw = units::wavenumber_per_cm(far.omega[i]);
        row.iter()
            .zip(&far.grid.k_per_cm)
            .map(|(v, k)| v * filter.transmission(k / kw))
            .collect()
    }))
}

/// Principal-value phase difference `arg(F_with F_without*)` per (ω, r).
pub fn stark_phase_map(with: &FieldMap, without: &FieldMap) -> Result<Vec<f64>> {
    if !with.same_grid(without) {
        return Err(Error::GridMismatch("field maps differ in grid or plane".into()));
    }
    Ok(with
        .values
        .iter()
        .zip(&without.values)
        .map(|(a, b)| {
            if a.norm() == 0.0 || b.norm() == 0.0 {
                0.0
            } else {
                (a * b.conj()).arg()
            }
        })
        .collect())
}

/// `⟨Φ⟩(ω) = ∫ Φ |F|² r dr / ∫ |F|² r dr` on the radial quadrature of `map`.
/// Before averaging, each Φ(ω, r) is moved by 2π onto the branch nearest to the
/// weighted circular mean at that ω, so that the average does not straddle a
/// branch cut. Bins with zero total weight are marked undefined. The returned
/// curve uses `reliable` for the defined flag and `weight` for `∫|F|² r dr`.
pub fn radial_average_phase(phase: &[f64], map: &FieldMap) -> Result<PhaseCurve> {
    let n = map.grid.len();
    if phase.len() != map.values.len() {
        return Err(Error::GridMismatch("phase map and field map differ in size".into()));
    }
    let w = map.radial_weights();
    let mut out = Vec::with_capacity(map.omega.len());
    let mut defined = Vec::with_capacity(map.omega.len());
    let mut weight = Vec::with_capacity(map.omega.len());
    for i in 0..map.omega.len() {
        let row = map.row(i);
        let ph = &phase[i * n..(i + 1) * n];
        let mut circ = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for m in 0..n {
            let wm = w[m] * row[m].norm_sqr();
            circ += Complex64::from_polar(wm, ph[m]);
            den += wm;
        }
        if den > 0.0 {
            let centre = circ.arg();
            let num: f64 = (0..n)
                .map(|m| w[m] * row[m].norm_sqr() * (centre + wrap_phase(ph[m] - centre)))
                .sum();
            out.push(num / den);
            defined.push(true);
        } else {
            out.push(0.0);
            defined.push(false);
        }
        weight.push(den);
    }
    Ok(PhaseCurve {
        omega: map.omega.clone(),
        phase: out,
        reliable: defined,
        weight,
        order: 0,
        omega0: map.omega0,
        ip0: map.ip0,
    })
}

/// How the flipped orientation is generated in [`aligned_ensemble`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipIonization {
    /// Independent Lewenstein runs for μ → −μ.
    Computed,
    /// Test knob: the flipped molecule radiates the spectrum of the original
    /// with the first-order Stark factor `X_first / X_none` complex-conjugated,
    /// so both orientations ionize and recombine with the same amplitude.
    Symmetric,
}

/// Where the single-molecule spectra of the jet come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// Geometric intensity table with the given relative spacing.
    Table { spacing: f64 },
    /// A Lewenstein run at every distinct local intensity.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSettings {
    pub radial_nodes: usize,
    /// Radial extent in units of the focal waist.
    pub radial_extent_waists: f64,
    pub source: SourceMode,
    /// Local intensities below this fraction of the highest one radiate nothing.
    pub intensity_floor_fraction: f64,
    /// Highest harmonic order kept.
    pub max_harmonic_order: f64,
    pub lewenstein: LewensteinSettings,
    pub spectrum: SpectrumSettings,
}

impl Default for MacroSettings {
    fn default() -> Self {
        Self {
            radial_nodes: 128,
            radial_extent_waists: 4.0,
            source: SourceMode::Table { spacing: 0.01 },
            intensity_floor_fraction: 0.2,
            max_harmonic_order: 45.0,
            lewenstein: LewensteinSettings {
                output_stride: 8,
                ..Default::default()
            },
            spectrum: SpectrumSettings::default(),
        }
    }
}

impl MacroSettings {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes == 0 {
            return Err(Error::config("numerics.radial_nodes", "must be positive"));
        }
        if !(self.radial_extent_waists > 0.0 && self.radial_extent_waists.is_finite()) {
            return Err(Error::config("numerics.radial_extent_waists", "must be positive"));
        }
        if let SourceMode::Table { spacing } = self.source {
            if !(spacing > 0.0 && spacing <= 0.5) {
                return Err(Error::config("numerics.intensity_table_spacing", "must lie in (0, 0.5]"));
            }
        }
        if !(0.0..1.0).contains(&self.intensity_floor_fraction) {
            return Err(Error::config("numerics.intensity_floor_fraction", "must lie in [0, 1)"));
        }
        if !(self.max_harmonic_order > 1.0 && self.max_harmonic_order.is_finite()) {
            return Err(Error::config("numerics.max_harmonic_order", "must exceed 1"));
        }
        self.lewenstein.validate()
    }
}

/// Single-molecule spectra at a set of peak intensities, truncated to the
/// kept frequency range.
#[derive(Debug, Clone)]
pub struct IntensityTable {
    /// Ascending peak intensities (W/cm²).
    pub intensities: Vec<f64>,
    pub omega: Vec<f64>,
    pub spectra: Vec<Vec<Complex64>>,
    pub omega0: f64,
    pub ip0: f64,
}

impl IntensityTable {
    pub fn build(
        pulse: &LaserPulse,
        params: &StarkParameters,
        mode: StarkMode,
        intensities: &[f64],
        settings: &MacroSettings,
    ) -> Result<Self> {
        let axis = pulse.polarization();
        let spectra: Vec<(Vec<f64>, Vec<Complex64>)> = intensities
            .iter()
            .map(|&i| {
                let f = units::field_from_intensity(i)?;
                params.ip_of_field(&(axis * f))?;
                params.ip_of_field(&(axis * -f))?;
                let d = dipole_time_series(&pulse.scaled(f), params, mode, &settings.lewenstein)?;
                let s = spectrum(&d, &settings.spectrum)?;
                let keep = (0..s.amplitudes.len())
                    .take_while(|&m| s.omega(m) <= settings.max_harmonic_order * pulse.omega())
                    .count();
                Ok((s.omegas()[..keep].to_vec(), s.amplitudes[..keep].to_vec()))
            })
            .collect::<Result<_>>()?;
        let omega = spectra.first().map(|s| s.0.clone()).unwrap_or_default();
        Ok(Self {
            intensities: intensities.to_vec(),
            omega,
            spectra: spectra.into_iter().map(|s| s.1).collect(),
            omega0: pulse.omega(),
            ip0: params.ip0(),
        })
    }

    /// Spectrum at `intensity`, linear in amplitude and in the phase unwrapped
    /// between the two bracketing entries. `None` outside the table.
    pub fn interpolate(&self, intensity: f64) -> Option<Vec<Complex64>> {
        let n = self.intensities.len();
        if n == 0 || intensity < self.intensities[0] || intensity > self.intensities[n - 1] {
            return None;
        }
        let i = self.intensities.partition_point(|&v| v <= intensity);
        if i >= n {
            return Some(self.spectra[n - 1].clone());
        }
        if i == 0 {
            return Some(self.spectra[0].clone());
        }
        let (a, b) = (&self.spectra[i - 1], &self.spectra[i]);
        let f = (intensity - self.intensities[i - 1]) / (self.intensities[i] - self.intensities[i - 1]);
        Some(
            a.iter()
                .zip(b)
                .map(|(x, y)| {
                    let amp = x.norm() * (1.0 - f) + y.norm() * f;
                    let phase = x.arg() + f * wrap_phase(y.arg() - x.arg());
                    Complex64::from_polar(amp, phase)
                })
                .collect(),
        )
    }
}

/// Single-molecule spectra shared between runs, keyed by every input of the
/// Lewenstein run.
#[derive(Default)]
pub struct TableCache {
    entries: Mutex<HashMap<String, Arc<Vec<Complex64>>>>,
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(
        &self,
        pulse: &LaserPulse,
        params: &StarkParameters,
        mode: StarkMode,
        intensities: &[f64],
        settings: &MacroSettings,
    ) -> Result<IntensityTable> {
        let base = serde_json::to_string(&(pulse.shape(), params, mode, &settings.lewenstein, &settings.spectrum, settings.max_harmonic_order))?;
        let mut spectra = Vec::with_capacity(intensities.len());
        for &i in intensities {
            let key = format!("{base}|{:e}", i);
            let cached = self.entries.lock().unwrap().get(&key).cloned();
            let entry = match cached {
                Some(e) => e,
                None => {
                    let t = IntensityTable::build(pulse, params, mode, &[i], settings)?;
                    let e = Arc::new(t.spectra.into_iter().next().unwrap_or_default());
                    self.entries.lock().unwrap().insert(key, e.clone());
                    e
                }
            };
            spectra.push(entry.as_ref().clone());
        }
        Ok(IntensityTable {
            intensities: intensities.to_vec(),
            omega: omega_grid(pulse, settings)?,
            spectra,
            omega0: pulse.omega(),
            ip0: params.ip0(),
        })
    }
}

/// Sampling geometry of the jet: slice positions, radial grid, local peak
/// intensity and fundamental phase at every (slice, node).
#[derive(Debug, Clone)]
pub struct JetGeometry {
    pub z_cm: Vec<f64>,
    pub dz_cm: f64,
    pub grid: Arc<RadialGrid>,
    /// Row-major (slice, node).
    pub intensity: Vec<f64>,
    pub fundamental_phase: Vec<f64>,
    pub focus_intensity: f64,
}

impl JetGeometry {
    pub fn new(pulse: &LaserPulse, focus: &FocusGeometry, medium: &MediumSpec, settings: &MacroSettings) -> Result<Self> {
        focus.validate()?;
        medium.validate_physical()?;
        settings.validate()?;
        let w0 = pulse.omega();
        let grid = Arc::new(RadialGrid::new(
            settings.radial_nodes,
            settings.radial_extent_waists * focus.waist_cm(w0),
        )?);
        let (z_cm, dz_cm) = medium.slice_positions();
        let mut intensity = Vec::with_capacity(z_cm.len() * grid.len());
        let mut fundamental_phase = Vec::with_capacity(z_cm.len() * grid.len());
        for &z in &z_cm {
            for &r in &grid.r_cm {
                let u = focus.gaussian_beam_factor(z, r, w0);
                intensity.push(focus.peak_intensity_wcm2 * u.norm_sqr());
                fundamental_phase.push(u.arg());
            }
        }
        Ok(Self {
            z_cm,
            dz_cm,
            grid,
            intensity,
            fundamental_phase,
            focus_intensity: focus.peak_intensity_wcm2,
        })
    }

    /// Table intensities: the ladder `I_focus (1 + spacing)^−k`, from the
    /// last rung at or above the highest local intensity down to the first
    /// rung below the floor. Geometries sharing a focus share rungs.
    pub fn table_intensities(&self, settings: &MacroSettings) -> Vec<f64> {
        let top = self.intensity.iter().cloned().fold(0.0, f64::max);
        if top <= 0.0 {
            return Vec::new();
        }
        let floor = settings.intensity_floor_fraction * top;
        let mut out = match settings.source {
            SourceMode::Table { spacing } => {
                let step = (1.0 + spacing).ln();
                let k0 = ((self.focus_intensity / top).ln() / step).max(0.0).floor() as i32;
                let mut v = Vec::new();
                let mut k = k0;
                loop {
                    let i = self.focus_intensity * (-(k as f64) * step).exp();
                    v.push(i);
                    if i < floor {
                        break;
                    }
                    k += 1;
                }
                v
            }
            SourceMode::Direct => {
                let mut v: Vec<f64> = self.intensity.iter().cloned().filter(|&i| i >= floor && i > 0.0).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
        };
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Near-field harmonic map at the jet exit for one orientation.
pub fn propagate_jet(
    pulse: &LaserPulse,
    focus: &FocusGeometry,
    medium: &MediumSpec,
    params: &StarkParameters,
    mode: StarkMode,
    settings: &MacroSettings,
) -> Result<FieldMap> {
    propagate_jet_cached(&TableCache::new(), pulse, focus, medium, params, mode, settings)
}

pub fn propagate_jet_cached(
    cache: &TableCache,
    pulse: &LaserPulse,
    focus: &FocusGeometry,
    medium: &MediumSpec,
    params: &StarkParameters,
    mode: StarkMode,
    settings: &MacroSettings,
) -> Result<FieldMap> {
    let geometry = JetGeometry::new(pulse, focus, medium, settings)?;
    let levels = geometry.table_intensities(settings);
    let table = cache.get(pulse, params, mode, &levels, settings)?;
    sum_slices(&geometry, medium, settings, pulse, params, |i| table.interpolate(i))
}

/// Coherent slice sum with paraxial diffraction to the exit plane.
fn sum_slices(
    geometry: &JetGeometry,
    medium: &MediumSpec,
    settings: &MacroSettings,
    pulse: &LaserPulse,
    params: &StarkParameters,
    source: impl Fn(f64) -> Option<Vec<Complex64>> + Sync,
) -> Result<FieldMap> {
    let w0 = pulse.omega();
    let grid = geometry.grid.clone();
    let nr = grid.len();
    let top = geometry.intensity.iter().cloned().fold(0.0, f64::max);
    let floor = settings.intensity_floor_fraction * top;
    let omega = omega_grid(pulse, settings)?;
    let nw = omega.len();
    let z_exit = 0.5 * medium.length_cm;

    // Source amplitude per slice, laid out as [slice][ω][node].
    let sources: Vec<Vec<Complex64>> = (0..geometry.z_cm.len())
        .into_par_iter()
        .map(|s| {
            let mut out = vec![Complex64::new(0.0, 0.0); nw * nr];
            for n in 0..nr {
                let idx = s * nr + n;
                let intensity = geometry.intensity[idx];
                if intensity < floor || intensity <= 0.0 {
                    continue;
                }
                let Some(spec) = source(intensity) else { continue };
                let delay = geometry.fundamental_phase[idx] / w0;
                for (i, x) in spec.iter().enumerate().take(nw) {
                    out[i * nr + n] = x * Complex64::from_polar(1.0, omega[i] * delay);
                }
            }
            out
        })
        .collect();

    let rows: Vec<Vec<Complex64>> = (0..nw)
        .into_par_iter()
        .map(|i| {
            let kw = units::wavenumber_per_cm(omega[i]);
            let mut acc = vec![Complex64::new(0.0, 0.0); nr];
            for (s, src) in sources.iter().enumerate() {
                let g = grid.forward(&src[i * nr..(i + 1) * nr]);
                let dist = z_exit - geometry.z_cm[s];
                for m in 0..nr {
                    let k = grid.k_per_cm[m];
                    // The DC row does not diffract.
                    let phase = if kw > 0.0 { -k * k * dist / (2.0 * kw) } else { 0.0 };
                    acc[m] += g[m] * Complex64::from_polar(1.0, phase);
                }
            }
            grid.inverse(&acc)
                .into_iter()
                .map(|v| v * (medium.number_density_cm3 * geometry.dz_cm))
                .collect()
        })
        .collect();

    Ok(FieldMap {
        omega,
        values: rows.concat(),
        plane: Plane::Near,
        grid,
        omega0: w0,
        ip0: params.ip0(),
    })
}

fn omega_grid(pulse: &LaserPulse, settings: &MacroSettings) -> Result<Vec<f64>> {
    Ok(spectrum_grid(pulse, &settings.lewenstein, &settings.spectrum)?
        .into_iter()
        .take_while(|&w| w <= settings.max_harmonic_order * pulse.omega())
        .collect())
}

/// Coherent sum of the near-field maps of both orientations (θ and μ → −μ).
#[allow(clippy::too_many_arguments)]
pub fn aligned_ensemble(
    cache: &TableCache,
    pulse: &LaserPulse,
    focus: &FocusGeometry,
    medium: &MediumSpec,
    params: &StarkParameters,
    mode: StarkMode,
    settings: &MacroSettings,
    flip: FlipIonization,
) -> Result<FieldMap> {
    let oriented = propagate_jet_cached(cache, pulse, focus, medium, params, mode, settings)?;
    let flipped = match flip {
        FlipIonization::Computed => propagate_jet_cached(cache, pulse, focus, medium, &params.flipped(), mode, settings)?,
        FlipIonization::Symmetric => {
            if mode == StarkMode::None {
                oriented.clone()
            } else {
                let geometry = JetGeometry::new(pulse, focus, medium, settings)?;
                let levels = geometry.table_intensities(settings);
                let t_mode = cache.get(pulse, params, mode, &levels, settings)?;
                let t_none = cache.get(pulse, params, StarkMode::None, &levels, settings)?;
                let t_first = cache.get(pulse, params, StarkMode::FirstOrder, &levels, settings)?;
                let source = |i: f64| -> Option<Vec<Complex64>> {
                    let x = t_mode.interpolate(i)?;
                    let none = t_none.interpolate(i)?;
                    let first = t_first.interpolate(i)?;
                    Some(
                        x.iter()
                            .zip(none.iter().zip(&first))
                            .map(|(x, (a, b))| {
                                if a.norm() == 0.0 || b.norm() == 0.0 {
                                    *x
                                } else {
                                    x * Complex64::from_polar(1.0, -2.0 * (b * a.conj()).arg())
                                }
                            })
                            .collect(),
                    )
                };
                sum_slices(&geometry, medium, settings, pulse, params, source)?
            }
        }
    };
    oriented.add(&flipped)
}

/// Far-field filter, refocusing and intensity-weighted radial averaging of a
/// with/without pair.
#[derive(Debug, Clone)]
pub struct MacroExtraction {
    pub far_with: FieldMap,
    pub far_without: FieldMap,
    pub refocused_with: FieldMap,
    pub refocused_without: FieldMap,
    pub filter: Option<FilterSpec>,
    pub averaged: PhaseCurve,
}

/// Default filter: hard edge at the angle enclosing half of the H21 energy of
/// the far field `far` (band `[20.5, 21.5] ω0`).
pub fn default_filter(far: &FieldMap) -> Result<FilterSpec> {
    let w0 = far.omega0;
    Ok(FilterSpec::hard_edge(enclosed_energy_angle(far, 20.5 * w0, 21.5 * w0, 0.5)?))
}

/// `filter = None` skips filtering (identity); the refocused maps then equal
/// the near-field inputs up to round-off.
pub fn extract_macro_phase(with: &FieldMap, without: &FieldMap, filter: Option<FilterSpec>) -> Result<MacroExtraction> {
    let far_with = to_far_field(with)?;
    let far_without = to_far_field(without)?;
    let (fw, fo) = match &filter {
        Some(f) => (apply_filter(&far_with, f)?, apply_filter(&far_without, f)?),
        None => (far_with.clone(), far_without.clone()),
    };
    let refocused_with = to_near_field(&fw)?;
    let refocused_without = to_near_field(&fo)?;
    let phase = stark_phase_map(&refocused_with, &refocused_without)?;
    let mut averaged = radial_average_phase(&phase, &refocused_without)?;
    // Below threshold the phase is defined to be zero.
    for (m, w) in averaged.omega.iter().enumerate() {
        if *w < averaged.ip0 {
            averaged.phase[m] = 0.0;
            averaged.reliable[m] = false;
        }
    }
    Ok(MacroExtraction {
        far_with,
        far_without,
        refocused_with,
        refocused_without,
        filter,
        averaged,
    })
}
