//! Strong-field-approximation (Lewenstein) dipole with a Stark-shifted bound
//! state, harmonic spectra, and Stark-phase extraction by spectral subtraction.
//!
//! The electron is treated along the polarization axis. For each emission time
//! `t` the dipole integrates over excursion times `τ = t − t′`:
//!
//! ```text
//! d(t) = i ∫ dτ (π/(ε + iτ/2))^{3/2} d*(p + A(t)) F(t′) d(p + A(t′)) e^{−iS(t, t′)}
//! ```
//!
//! with the stationary momentum `p = −[X(t) − X(t′)]/τ` and the action
//! `S = ∫ [½(p + A)² + I_p(F)] dt″`. The Stark shift enters through
//! `I_p(F) = I_p0 + μ_p F + ½ α_pp F²`, truncated according to [`StarkMode`].
//! The bound state is a hydrogen-like 1s level with `κ² = 2 I_p0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::molecule::StarkParameters;
use crate::pulse::LaserPulse;
use crate::{Error, Result};

/// Stark orders kept in the bound-state phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarkMode {
    None,
    FirstOrder,
    FirstAndSecond,
}

impl StarkMode {
    /// Highest Stark order included.
    pub fn order(self) -> u8 {
        match self {
            StarkMode::None => 0,
            StarkMode::FirstOrder => 1,
            StarkMode::FirstAndSecond => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StarkMode::None => "none",
            StarkMode::FirstOrder => "first_order",
            StarkMode::FirstAndSecond => "first_and_second",
        }
    }
}

/// Minimum time samples per optical cycle.
pub const MIN_SAMPLES_PER_CYCLE: usize = 4096;

/// Minimum stored samples per optical cycle (Nyquist limit 128 ω0).
pub const MIN_OUTPUT_SAMPLES_PER_CYCLE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LewensteinSettings {
    pub samples_per_cycle: usize,
    /// Longest excursion time kept, in cycles.
    pub tau_max_cycles: f64,
    /// Fraction of `tau_max` over which a cos² taper switches the integrand off.
    pub taper_fraction: f64,
    /// Regularization of the spreading prefactor (au).
    pub epsilon_au: f64,
    /// The dipole is stored on every `output_stride`-th integration node.
    pub output_stride: usize,
}

impl Default for LewensteinSettings {
    fn default() -> Self {
        Self {
            samples_per_cycle: MIN_SAMPLES_PER_CYCLE,
            tau_max_cycles: 1.0,
            taper_fraction: 0.1,
            epsilon_au: 1e-4,
            output_stride: 1,
        }
    }
}

impl LewensteinSettings {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_cycle < MIN_SAMPLES_PER_CYCLE {
            return Err(Error::config(
                "numerics.lewenstein_samples_per_cycle",
                format!("must be at least {MIN_SAMPLES_PER_CYCLE}"),
            ));
        }
        if !(self.tau_max_cycles > 0.0 && self.tau_max_cycles <= 3.0) {
            return Err(Error::config("numerics.tau_max_cycles", "must lie in (0, 3]"));
        }
        if !(0.0..=1.0).contains(&self.taper_fraction) {
            return Err(Error::config("numerics.taper_fraction", "must lie in [0, 1]"));
        }
        if !(self.epsilon_au > 0.0 && self.epsilon_au.is_finite()) {
            return Err(Error::config("numerics.epsilon_au", "must be positive"));
        }
        if self.output_stride == 0 || self.samples_per_cycle / self.output_stride < MIN_OUTPUT_SAMPLES_PER_CYCLE {
            return Err(Error::config(
                "numerics.lewenstein_output_stride",
                format!("must be at least 1 and keep {MIN_OUTPUT_SAMPLES_PER_CYCLE} output samples per cycle"),
            ));
        }
        Ok(())
    }
}

/// Complex dipole along the polarization axis on a uniform grid `t_k = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleSignal {
    pub dt: f64,
    pub samples: Vec<Complex64>,
    pub stark_mode: StarkMode,
    /// Carrier frequency of the driving pulse (au).
    pub omega0: f64,
    /// Field-free ionization potential (au).
    pub ip0: f64,
}

impl DipoleSignal {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }

    /// Multiply every sample by `factor`.
    pub fn scale(&mut self, factor: Complex64) {
        for s in &mut self.samples {
            *s *= factor;
        }
    }
}

/// Node values of the time integrals entering the action.
struct Grid {
    field: Vec<f64>,
    a: Vec<f64>,
    x: Vec<f64>,
    /// `G = ½ ∫A² + I_p0 t − μ_p A + ½ α_pp ∫F²` for the selected mode.
    g: Vec<f64>,
}

fn build_grid(pulse: &LaserPulse, params: &StarkParameters, mode: StarkMode, dt: f64, n: usize) -> Grid {
    let (mu, alpha) = params.projected(&pulse.polarization());
    let (mu, alpha) = match mode {
        StarkMode::None => (0.0, 0.0),
        StarkMode::FirstOrder => (mu, 0.0),
        StarkMode::FirstAndSecond => (mu, alpha),
    };
    let ip0 = params.ip0();
    let t = |k: usize| k as f64 * dt;
    let field: Vec<f64> = (0..n).map(|k| pulse.field(t(k))).collect();
    let a: Vec<f64> = (0..n).map(|k| pulse.vector_potential_scalar(t(k))).collect();
    let x: Vec<f64> = (0..n).map(|k| pulse.excursion_integral(t(k))).collect();
    let mut g = vec![0.0; n];
    let (mut y, mut w) = (0.0, 0.0);
    for k in 1..n {
        let tm = t(k) - 0.5 * dt;
        let am = pulse.vector_potential_scalar(tm);
        let fm = pulse.field(tm);
        y += dt / 6.0 * (a[k - 1].powi(2) + 4.0 * am * am + a[k].powi(2));
        w += dt / 6.0 * (field[k - 1].powi(2) + 4.0 * fm * fm + field[k].powi(2));
        g[k] = 0.5 * y + ip0 * t(k) - mu * a[k] + 0.5 * alpha * w;
    }
    Grid { field, a, x, g }
}

/// Number of integration nodes `k_end + j_max + 1` of a dipole run.
fn node_count(pulse: &LaserPulse, settings: &LewensteinSettings) -> (usize, usize, usize) {
    let dt = pulse.period() / settings.samples_per_cycle as f64;
    let j_max = (settings.tau_max_cycles * settings.samples_per_cycle as f64).round() as usize;
    let k_end = (pulse.duration() / dt).floor() as usize;
    (k_end, j_max, k_end + j_max + 1)
}

/// Frequency grid `m Δω`, `m = 0 … L/2`, of the spectrum of any dipole run
/// with these settings.
pub fn spectrum_grid(pulse: &LaserPulse, lw: &LewensteinSettings, spec: &SpectrumSettings) -> Result<Vec<f64>> {
    lw.validate()?;
    if spec.padding_factor == 0 {
        return Err(Error::config("numerics.padding_factor", "must be at least 1"));
    }
    let (_, _, n) = node_count(pulse, lw);
    let samples = n.div_ceil(lw.output_stride);
    let len = samples.next_power_of_two() * spec.padding_factor;
    let dt = pulse.period() / lw.samples_per_cycle as f64 * lw.output_stride as f64;
    let d_omega = 2.0 * PI / (len as f64 * dt);
    Ok((0..=len / 2).map(|m| m as f64 * d_omega).collect())
}

/// Time-dependent dipole of one molecule.
pub fn dipole_time_series(
    pulse: &LaserPulse,
    params: &StarkParameters,
    mode: StarkMode,
    settings: &LewensteinSettings,
) -> Result<DipoleSignal> {
    settings.validate()?;
    params.validate()?;
    let dt = pulse.period() / settings.samples_per_cycle as f64;
    let (k_end, j_max, n) = node_count(pulse, settings);
    let grid = build_grid(pulse, params, mode, dt, n);

    let ip0 = params.ip0();
    let kappa2 = 2.0 * ip0;
    // 1s matrix element d(v) = i C v/(v² + κ²)³; only the product d*·d enters.
    let c = 2f64.powf(3.5) * kappa2.powf(1.25) / PI;
    let c2 = c * c;

    let taper_start = (1.0 - settings.taper_fraction) * j_max as f64;
    let weights: Vec<Complex64> = (0..=j_max)
        .map(|j| {
            if j == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let tau = j as f64 * dt;
            let spread = (Complex64::new(PI, 0.0) / Complex64::new(settings.epsilon_au, 0.5 * tau)).powf(1.5);
            let taper = if (j as f64) > taper_start && settings.taper_fraction > 0.0 {
                let u = (j as f64 - taper_start) / (j_max as f64 - taper_start);
                (0.5 * PI * u).cos().powi(2)
            } else {
                1.0
            };
            // i dt from the time integral.
            Complex64::new(0.0, dt) * spread * taper
        })
        .collect();

    let stride = settings.output_stride;
    let samples: Vec<Complex64> = (0..n.div_ceil(stride))
        .into_par_iter()
        .map(|m| {
            let k = m * stride;
            let mut acc = Complex64::new(0.0, 0.0);
            let j_lo = k.saturating_sub(k_end).max(1);
            let j_hi = k.min(j_max);
            #[allow(clippy::needless_range_loop)]
            for j in j_lo..=j_hi {
                let i = k - j;
                let f = grid.field[i];
                if f == 0.0 {
                    continue;
                }
                let tau = j as f64 * dt;
                let dx = grid.x[k] - grid.x[i];
                let p = -dx / tau;
                let vt = p + grid.a[k];
                let vi = p + grid.a[i];
                let s = grid.g[k] - grid.g[i] - 0.5 * dx * dx / tau;
                let m = c2 * vt * vi / ((vt * vt + kappa2).powi(3) * (vi * vi + kappa2).powi(3));
                let (sin, cos) = s.sin_cos();
                acc += weights[j] * Complex64::new(cos, -sin) * (m * f);
            }
            acc
        })
        .collect();

    Ok(DipoleSignal {
        dt: dt * stride as f64,
        samples,
        stark_mode: mode,
        omega0: pulse.omega(),
        ip0,
    })
}

pub const COS8_RAMP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Flat top with `sin⁸` ramps over the first and last
    /// [`COS8_RAMP_FRACTION`] of the record.
    Cos8,
    Hann,
    Rectangular,
}

impl Window {
    pub fn weight(self, k: usize, n: usize) -> f64 {
        if n < 2 {
            return 1.0;
        }
        let u = PI * k as f64 / (n - 1) as f64;
        match self {
            Window::Cos8 => {
                let edge = (k.min(n - 1 - k)) as f64 / (n - 1) as f64;
                if edge >= COS8_RAMP_FRACTION {
                    1.0
                } else {
                    (0.5 * PI * edge / COS8_RAMP_FRACTION).sin().powi(8)
                }
            }
            Window::Hann => u.sin().powi(2),
            Window::Rectangular => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Window::Cos8 => "cos8",
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Dipole,
    Acceleration,
}

impl Observable {
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::Dipole => "dipole",
            Observable::Acceleration => "acceleration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    pub window: Window,
    pub observable: Observable,
    /// Zero padding: the transform length is the next power of two of the
    /// signal length times this factor.
    pub padding_factor: usize,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self {
            window: Window::Cos8,
            observable: Observable::Dipole,
            padding_factor: 4,
        }
    }
}

/// Complex emission amplitude on `ω_m = m Δω`, `m = 0 … L/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpectrum {
    pub d_omega: f64,
    pub amplitudes: Vec<Complex64>,
    pub stark_mode: StarkMode,
    pub window: Window,
    pub observable: Observable,
    /// Length of the transformed (padded) record.
    pub transform_len: usize,
    pub omega0: f64,
    pub ip0: f64,
}

impl HarmonicSpectrum {
    pub fn omega(&self, m: usize) -> f64 {
        m as f64 * self.d_omega
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.amplitudes.len()).map(|m| self.omega(m)).collect()
    }

    /// Time span of the padded record; `Δω = 2π / span`.
    pub fn time_span(&self) -> f64 {
        2.0 * PI / self.d_omega
    }

    /// `(1/2π) ∫ |X(ω)|² dω` over positive and negative frequencies.
    pub fn spectral_energy(&self) -> f64 {
        let n = self.amplitudes.len();
        let mut sum = 0.0;
        for (m, a) in self.amplitudes.iter().enumerate() {
            let weight = if m == 0 || (m == n - 1 && self.transform_len.is_multiple_of(2)) { 1.0 } else { 2.0 };
            sum += weight * a.norm_sqr();
        }
        sum * self.d_omega / (2.0 * PI)
    }

    /// Linear interpolation of the complex amplitude at `omega`.
    pub fn amplitude_at(&self, omega: f64) -> Option<Complex64> {
        let u = omega / self.d_omega;
        if u.is_nan() || u < 0.0 || u > (self.amplitudes.len() - 1) as f64 {
            return None;
        }
        let m = (u.floor() as usize).min(self.amplitudes.len() - 2);
        let f = u - m as f64;
        Some(self.amplitudes[m] * (1.0 - f) + self.amplitudes[m + 1] * f)
    }

    /// Index of the bin closest to `omega`.
    pub fn bin(&self, omega: f64) -> usize {
        ((omega / self.d_omega).round().max(0.0) as usize).min(self.amplitudes.len() - 1)
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.d_omega == other.d_omega
            && self.amplitudes.len() == other.amplitudes.len()
            && self.window == other.window
            && self.observable == other.observable
            && self.transform_len == other.transform_len
    }
}

/// Real observable before windowing: `2 Re d` or its second difference.
pub fn observable_series(dipole: &DipoleSignal, observable: Observable) -> Vec<f64> {
    let x: Vec<f64> = dipole.samples.iter().map(|d| 2.0 * d.re).collect();
    match observable {
        Observable::Dipole => x,
        Observable::Acceleration => {
            let n = x.len();
            let h2 = dipole.dt * dipole.dt;
            (0..n)
                .map(|k| {
                    if k == 0 || k + 1 >= n {
                        0.0
                    } else {
                        (x[k + 1] - 2.0 * x[k] + x[k - 1]) / h2
                    }
                })
                .collect()
        }
    }
}

/// Windowed time-domain energy `Σ |x w|² dt`, the counterpart of
/// [`HarmonicSpectrum::spectral_energy`].
pub fn windowed_energy(dipole: &DipoleSignal, settings: &SpectrumSettings) -> f64 {
    let x = observable_series(dipole, settings.observable);
    let n = x.len();
    x.iter()
        .enumerate()
        .map(|(k, v)| (v * settings.window.weight(k, n)).powi(2))
        .sum::<f64>()
        * dipole.dt
}

/// `X(ω) = Σ x(t_k) w_k e^{+iωt_k} dt` on the positive-frequency grid.
pub fn spectrum(dipole: &DipoleSignal, settings: &SpectrumSettings) -> Result<HarmonicSpectrum> {
    if settings.padding_factor == 0 {
        return Err(Error::config("numerics.padding_factor", "must be at least 1"));
    }
    let x = observable_series(dipole, settings.observable);
    let n = x.len();
    if n < 2 {
        return Err(Error::Domain("dipole signal needs at least two samples".into()));
    }
    let len = n.next_power_of_two() * settings.padding_factor;
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); len];
    for (k, v) in x.iter().enumerate() {
        buf[k] = Complex64::new(v * settings.window.weight(k, n), 0.0);
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    let amplitudes = buf[..=len / 2].iter().map(|a| a * dipole.dt).collect();
    Ok(HarmonicSpectrum {
        d_omega: 2.0 * PI / (len as f64 * dipole.dt),
        amplitudes,
        stark_mode: dipole.stark_mode,
        window: settings.window,
        observable: settings.observable,
        transform_len: len,
        omega0: dipole.omega0,
        ip0: dipole.ip0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSettings {
    /// A bin is reliable when its amplitude reaches this fraction of the local
    /// maximum (within ±ω0) in both spectra.
    pub reliability_floor: f64,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        Self {
            reliability_floor: 0.3,
        }
    }
}

/// Extracted phase difference on the spectrum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCurve {
    pub omega: Vec<f64>,
    pub phase: Vec<f64>,
    pub reliable: Vec<bool>,
    /// `|X_with| |X_without|` per bin.
    pub weight: Vec<f64>,
    /// Stark order isolated by the subtraction.
    pub order: u8,
    pub omega0: f64,
    pub ip0: f64,
}

impl PhaseCurve {
    /// Linear interpolation of the phase at `omega`.
    pub fn phase_at(&self, omega: f64) -> Option<f64> {
        interpolate(&self.omega, &self.phase, omega)
    }

    /// Weight-averaged phase over the reliable bins in `[lo, hi]`.
    pub fn band_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for m in 0..self.omega.len() {
            if self.reliable[m] && self.omega[m] >= lo && self.omega[m] <= hi {
                num += self.weight[m] * self.phase[m];
                den += self.weight[m];
            }
        }
        (den > 0.0).then(|| num / den)
    }

    /// Whether both bins bracketing `omega` are reliable.
    pub fn reliable_at(&self, omega: f64) -> bool {
        let i = self.omega.partition_point(|&w| w <= omega);
        i > 0 && i < self.omega.len() && self.reliable[i - 1] && self.reliable[i]
    }
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 || i >= xs.len() {
        return (xs.last() == Some(&x)).then(|| ys[ys.len() - 1]);
    }
    let f = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    Some(ys[i - 1] * (1.0 - f) + ys[i] * f)
}

/// Relative amplitude of each bin to the maximum within ±`half_width` bins.
pub fn local_relative_amplitude(amps: &[f64], half_width: usize) -> Vec<f64> {
    let n = amps.len();
    (0..n)
        .map(|m| {
            let lo = m.saturating_sub(half_width);
            let hi = (m + half_width).min(n - 1);
            let peak = amps[lo..=hi].iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                amps[m] / peak
            } else {
                0.0
            }
        })
        .collect()
}

/// Unwrap `raw` (principal values) inside each run of consecutive reliable
/// bins and shift every run by the multiple of 2π that puts its
/// `weight`-averaged value in (−π, π]. Unreliable bins continue from the last
/// value before them.
pub fn unwrap_segments(raw: &[f64], reliable: &[bool], weight: &[f64]) -> Vec<f64> {
    let n = raw.len();
    let mut out = raw.to_vec();
    let mut i = 0;
    let mut last: Option<f64> = None;
    while i < n {
        if !reliable[i] {
            if let Some(prev) = last {
                out[i] = prev + wrap_phase(raw[i] - prev);
                last = Some(out[i]);
            }
            i += 1;
            continue;
        }
        let start = i;
        out[i] = wrap_phase(raw[i]);
        i += 1;
        while i < n && reliable[i] {
            out[i] = out[i - 1] + wrap_phase(raw[i] - out[i - 1]);
            i += 1;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for m in start..i {
            num += weight[m] * out[m];
            den += weight[m];
        }
        let mean = if den > 0.0 { num / den } else { out[start] };
        let shift = mean - wrap_phase(mean);
        for v in &mut out[start..i] {
            *v -= shift;
        }
        last = Some(out[i - 1]);
    }
    out
}

/// Principal value in (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Stark phase `arg X_with − arg X_without` above I_p0. The difference is
/// unwrapped along ω within runs of reliable bins; across a spectral minimum
/// the 2π branch is not determined by continuity, so each run is placed on the
/// branch whose amplitude-weighted mean lies in (−π, π]. Bins below I_p0 are
/// set to zero and flagged unreliable, and bins between threshold and the
/// first reliable bin take its value.
pub fn extract_stark_phase(
    with: &HarmonicSpectrum,
    without: &HarmonicSpectrum,
    settings: &ExtractionSettings,
) -> Result<PhaseCurve> {
    if !with.same_grid(without) {
        return Err(Error::GridMismatch(
            "spectra differ in frequency grid, window or observable".into(),
        ));
    }
    if with.stark_mode.order() != without.stark_mode.order() + 1 {
        return Err(Error::Domain(format!(
            "Stark modes must differ by exactly one order ({} vs {})",
            with.stark_mode.as_str(),
            without.stark_mode.as_str()
        )));
    }
    let n = with.amplitudes.len();
    let half = (with.omega0 / with.d_omega).round() as usize;
    let rel_a = local_relative_amplitude(&with.amplitudes.iter().map(|a| a.norm()).collect::<Vec<_>>(), half);
    let rel_b = local_relative_amplitude(&without.amplitudes.iter().map(|a| a.norm()).collect::<Vec<_>>(), half);
    let ip0 = with.ip0;
    let mut reliable: Vec<bool> = (0..n)
        .map(|m| with.omega(m) >= ip0 && rel_a[m] >= settings.reliability_floor && rel_b[m] >= settings.reliability_floor)
        .collect();
    let raw: Vec<f64> = with
        .amplitudes
        .iter()
        .zip(&without.amplitudes)
        .map(|(a, b)| {
            if a.norm() == 0.0 || b.norm() == 0.0 {
                0.0
            } else {
                (a * b.conj()).arg()
            }
        })
        .collect();
    let omega = with.omegas();
    let weight: Vec<f64> = with
        .amplitudes
        .iter()
        .zip(&without.amplitudes)
        .map(|(a, b)| a.norm() * b.norm())
        .collect();
    let Some(seed) = (0..n).find(|&m| reliable[m]) else {
        return Ok(PhaseCurve {
            phase: vec![0.0; n],
            reliable: vec![false; n],
            weight,
            omega,
            order: with.stark_mode.order(),
            omega0: with.omega0,
            ip0,
        });
    };
    let mut phase = unwrap_segments(&raw, &reliable, &weight);
    for m in 0..n {
        if omega[m] < ip0 {
            phase[m] = 0.0;
            reliable[m] = false;
        }
    }
    // Bins between threshold and the seed follow the seed value.
    for m in 0..seed {
        if omega[m] >= ip0 {
            phase[m] = phase[seed];
        }
    }
    Ok(PhaseCurve {
        omega,
        phase,
        reliable,
        weight,
        order: with.stark_mode.order(),
        omega0: with.omega0,
        ip0,
    })
}

/// Weighted least-squares slope of `ln|Φ|` against `ln(ω − I_p0)` over the
/// reliable bins in `[lo, hi]`, weights as in [`PhaseCurve::band_mean`].
pub fn power_law_exponent(curve: &PhaseCurve, lo: f64, hi: f64) -> Option<f64> {
    let lo = lo.max(curve.ip0);
    let pts: Vec<(f64, f64, f64)> = (0..curve.omega.len())
        .filter(|&m| {
            curve.reliable[m] && curve.omega[m] > lo && curve.omega[m] <= hi && curve.phase[m] != 0.0
        })
        .map(|m| {
            (
                (curve.omega[m] - curve.ip0).ln(),
                curve.phase[m].abs().ln(),
                curve.weight[m],
            )
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    if pts.len() < 2 || sw <= 0.0 {
        return None;
    }
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// The three spectra needed for first- and second-order extraction.
#[derive(Debug, Clone)]
pub struct StarkSpectra {
    pub none: HarmonicSpectrum,
    pub first: HarmonicSpectrum,
    pub both: HarmonicSpectrum,
}

impl StarkSpectra {
    pub fn compute(
        pulse: &LaserPulse,
        params: &StarkParameters,
        lw: &LewensteinSettings,
        spec: &SpectrumSettings,
    ) -> Result<Self> {
        let run = |mode| -> Result<HarmonicSpectrum> { spectrum(&dipole_time_series(pulse, params, mode, lw)?, spec) };
        Ok(Self {
            none: run(StarkMode::None)?,
            first: run(StarkMode::FirstOrder)?,
            both: run(StarkMode::FirstAndSecond)?,
        })
    }

    pub fn first_order(&self, settings: &ExtractionSettings) -> Result<PhaseCurve> {
        extract_stark_phase(&self.first, &self.none, settings)
    }

    pub fn second_order(&self, settings: &ExtractionSettings) -> Result<PhaseCurve> {
        extract_stark_phase(&self.both, &self.first, settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::PulseShape;
    use crate::trajectories::{TrajectorySettings, TrajectoryTable};
    use std::sync::OnceLock;

    fn co() -> StarkParameters {
        StarkParameters::carbon_monoxide()
    }

    fn reference_pulse() -> LaserPulse {
        LaserPulse::new(PulseShape::reference(2.0e14).unwrap()).unwrap()
    }

    fn fast() -> LewensteinSettings {
        LewensteinSettings {
            output_stride: 8,
            ..Default::default()
        }
    }

    fn reference_spectra() -> &'static StarkSpectra {
        static SPECTRA: OnceLock<StarkSpectra> = OnceLock::new();
        SPECTRA.get_or_init(|| StarkSpectra::compute(&reference_pulse(), &co(), &fast(), &SpectrumSettings::default()).unwrap())
    }

    /// `(I_p0, ω_c)` of the dominant half-cycle.
    fn plateau_limits() -> (f64, f64) {
        static LIMITS: OnceLock<(f64, f64)> = OnceLock::new();
        *LIMITS.get_or_init(|| {
            let t = TrajectoryTable::build(&reference_pulse(), &co(), &TrajectorySettings::default()).unwrap();
            (co().ip0(), t.cutoff(t.dominant_half_cycle().unwrap()).unwrap())
        })
    }

    fn synthetic(omega0: f64, cycles: f64, per_cycle: usize, f: impl Fn(f64) -> f64) -> DipoleSignal {
        let dt = 2.0 * PI / omega0 / per_cycle as f64;
        let n = (cycles * per_cycle as f64) as usize;
        DipoleSignal {
            dt,
            samples: (0..n).map(|k| Complex64::new(0.5 * f(k as f64 * dt), 0.0)).collect(),
            stark_mode: StarkMode::None,
            omega0,
            ip0: 0.515,
        }
    }

    #[test]
    fn settings_validation() {
        assert!(LewensteinSettings::default().validate().is_ok());
        let coarse = LewensteinSettings {
            samples_per_cycle: 2048,
            ..Default::default()
        };
        assert!(matches!(coarse.validate(), Err(Error::Config { key, .. }) if key == "numerics.lewenstein_samples_per_cycle"));
        for tau in [0.0, -1.0, 3.5, f64::NAN] {
            let s = LewensteinSettings {
                tau_max_cycles: tau,
                ..Default::default()
            };
            assert!(s.validate().is_err(), "{tau}");
        }
        for stride in [0, 32] {
            let s = LewensteinSettings {
                output_stride: stride,
                ..Default::default()
            };
            assert!(s.validate().is_err(), "{stride}");
        }
        let s = LewensteinSettings {
            epsilon_au: 0.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let p = reference_pulse();
        assert!(dipole_time_series(&p, &co(), StarkMode::None, &coarse).is_err());
    }

    #[test]
    fn zero_field_gives_zero_dipole() {
        let p = LaserPulse::new(PulseShape::two_cycle_800nm(0.0)).unwrap();
        let d = dipole_time_series(&p, &co(), StarkMode::FirstAndSecond, &fast()).unwrap();
        assert!(!d.samples.is_empty());
        assert!(d.samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn dipole_vanishes_before_the_pulse() {
        let d = dipole_time_series(&reference_pulse(), &co(), StarkMode::FirstOrder, &fast()).unwrap();
        assert_eq!(d.samples[0], Complex64::new(0.0, 0.0));
        assert!(d.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
        assert!(d.samples.iter().any(|s| s.norm() > 0.0));
    }

    #[test]
    fn stark_mode_inert_without_dipole() {
        let p = reference_pulse();
        let params = StarkParameters { mu_au: 0.0, ..co() };
        let a = dipole_time_series(&p, &params, StarkMode::None, &fast()).unwrap();
        let b = dipole_time_series(&p, &params, StarkMode::FirstOrder, &fast()).unwrap();
        let peak = a.samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
        let diff = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-12 * peak, "{diff} vs {peak}");
    }

    #[test]
    fn output_stride_preserves_spectrum() {
        let p = reference_pulse();
        let full = LewensteinSettings::default();
        let s1 = spectrum(&dipole_time_series(&p, &co(), StarkMode::FirstOrder, &full).unwrap(), &SpectrumSettings::default()).unwrap();
        let s8 = spectrum(&dipole_time_series(&p, &co(), StarkMode::FirstOrder, &fast()).unwrap(), &SpectrumSettings::default()).unwrap();
        let w0 = p.omega();
        for q in [11.0, 21.0, 29.0] {
            let a = s1.amplitude_at(q * w0).unwrap();
            let b = s8.amplitude_at(q * w0).unwrap();
            assert!((a - b).norm() < 1e-6 * a.norm(), "H{q}: {a} vs {b}");
        }
    }

    #[test]
    fn cosine_gives_single_harmonic() {
        let w0 = 0.0569542;
        let d = synthetic(w0, 20.0, 256, |t| (17.0 * w0 * t).cos());
        let s = spectrum(&d, &SpectrumSettings::default()).unwrap();
        let mags: Vec<f64> = s.amplitudes.iter().map(|a| a.norm()).collect();
        let peak = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert!((s.omega(peak) / w0 - 17.0).abs() <= 0.5 * s.d_omega / w0);
        for q in [16.0, 18.0] {
            let db = 20.0 * (mags[s.bin(q * w0)] / mags[peak]).log10();
            assert!(db <= -40.0, "H{q}: {db} dB");
        }
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let d = synthetic(0.057, 4.0, 256, |_| 0.0);
        for window in [Window::Cos8, Window::Hann, Window::Rectangular] {
            let settings = SpectrumSettings {
                window,
                ..Default::default()
            };
            let s = spectrum(&d, &settings).unwrap();
            assert!(s.amplitudes.iter().all(|a| a.norm() == 0.0));
        }
    }

    #[test]
    fn spectrum_grid_and_parseval() {
        let w0 = 0.057;
        let d = synthetic(w0, 3.0, 300, |t| (3.1 * w0 * t).sin() * (-(t - 150.0).powi(2) / 900.0).exp() + 0.1 * (11.0 * w0 * t).cos());
        for observable in [Observable::Dipole, Observable::Acceleration] {
            for window in [Window::Cos8, Window::Hann, Window::Rectangular] {
                let settings = SpectrumSettings {
                    window,
                    observable,
                    padding_factor: 3,
                };
                let s = spectrum(&d, &settings).unwrap();
                assert_eq!(s.transform_len, 1024 * 3);
                assert!((s.time_span() - s.transform_len as f64 * d.dt).abs() < 1e-9 * s.time_span());
                let e_t = windowed_energy(&d, &settings);
                let e_w = s.spectral_energy();
                assert!((e_t - e_w).abs() <= 1e-10 * e_t, "{window:?} {observable:?}: {e_t} vs {e_w}");
            }
        }
        let bad = SpectrumSettings {
            padding_factor: 0,
            ..Default::default()
        };
        assert!(spectrum(&d, &bad).is_err());
    }

    #[test]
    fn cos8_window_shape() {
        let n = 1001;
        assert_eq!(Window::Cos8.weight(0, n), 0.0);
        assert_eq!(Window::Cos8.weight(n - 1, n), 0.0);
        assert_eq!(Window::Cos8.weight(500, n), 1.0);
        assert_eq!(Window::Cos8.weight(250, n), 1.0);
        assert!((Window::Cos8.weight(125, n) - (PI / 4.0).sin().powi(8)).abs() < 1e-12);
        for k in 0..n {
            assert!((Window::Cos8.weight(k, n) - Window::Cos8.weight(n - 1 - k, n)).abs() < 1e-15);
            assert!((Window::Hann.weight(k, n) - Window::Hann.weight(n - 1 - k, n)).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_spectra_give_zero_phase() {
        let s = reference_spectra();
        let mut with = s.none.clone();
        with.stark_mode = StarkMode::FirstOrder;
        let c = extract_stark_phase(&with, &s.none, &ExtractionSettings::default()).unwrap();
        assert!(c.phase.iter().all(|&p| p == 0.0));
        assert!(c.reliable.iter().any(|&r| r));
        assert_eq!(c.order, 1);
    }

    #[test]
    fn extraction_rejects_mismatched_inputs() {
        let s = reference_spectra();
        let settings = ExtractionSettings::default();
        assert!(matches!(extract_stark_phase(&s.both, &s.none, &settings), Err(Error::Domain(_))));
        assert!(matches!(extract_stark_phase(&s.none, &s.first, &settings), Err(Error::Domain(_))));
        let mut other = s.first.clone();
        other.window = Window::Hann;
        assert!(matches!(extract_stark_phase(&other, &s.none, &settings), Err(Error::GridMismatch(_))));
        let mut short = s.first.clone();
        short.amplitudes.pop();
        assert!(matches!(extract_stark_phase(&short, &s.none, &settings), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn below_threshold_is_zero_and_flagged() {
        let c = reference_spectra().first_order(&ExtractionSettings::default()).unwrap();
        for m in 0..c.omega.len() {
            if c.omega[m] < c.ip0 {
                assert_eq!(c.phase[m], 0.0);
                assert!(!c.reliable[m]);
            }
        }
        assert!(c.reliable.iter().any(|&r| r));
    }

    #[test]
    fn unwrap_segments_follows_runs() {
        let truth: Vec<f64> = (0..40).map(|i| 0.3 * i as f64).collect();
        let raw: Vec<f64> = truth.iter().map(|&v| wrap_phase(v)).collect();
        let all = vec![true; 40];
        let w = vec![1.0; 40];
        let out = unwrap_segments(&raw, &all, &w);
        let mean_truth = truth.iter().sum::<f64>() / 40.0;
        let shift = mean_truth - wrap_phase(mean_truth);
        for i in 0..40 {
            assert!((out[i] - (truth[i] - shift)).abs() < 1e-12);
        }
        let flat = vec![2.0 * PI + 0.4; 10];
        let mut rel = vec![true; 10];
        rel[4] = false;
        let out = unwrap_segments(&flat, &rel, &[1.0; 10]);
        assert!(out.iter().all(|&v| (v - 0.4).abs() < 1e-12), "{out:?}");
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn band_mean_and_interpolation() {
        let c = PhaseCurve {
            omega: vec![0.0, 1.0, 2.0, 3.0],
            phase: vec![0.0, 1.0, 3.0, 5.0],
            reliable: vec![false, true, true, false],
            weight: vec![1.0, 1.0, 3.0, 1.0],
            order: 1,
            omega0: 1.0,
            ip0: 0.5,
        };
        assert_eq!(c.band_mean(0.0, 3.0), Some(2.5));
        assert_eq!(c.band_mean(2.5, 3.0), None);
        assert_eq!(c.phase_at(1.5), Some(2.0));
        assert_eq!(c.phase_at(3.0), Some(5.0));
        assert_eq!(c.phase_at(3.5), None);
        assert!(c.reliable_at(1.5));
        assert!(!c.reliable_at(0.5));
    }

    #[test]
    fn power_law_exponent_recovers_synthetic_slope() {
        let omega: Vec<f64> = (0..200).map(|i| 0.5 + 0.01 * i as f64).collect();
        let phase: Vec<f64> = omega.iter().map(|w| if *w > 0.5 { -1.3 * (w - 0.5).powf(0.37) } else { 0.0 }).collect();
        let c = PhaseCurve {
            reliable: vec![true; 200],
            weight: omega.iter().map(|w| 1.0 + w).collect(),
            omega,
            phase,
            order: 1,
            omega0: 0.057,
            ip0: 0.5,
        };
        assert!((power_law_exponent(&c, 0.0, 10.0).unwrap() - 0.37).abs() < 1e-12);
        assert!(power_law_exponent(&c, 5.0, 6.0).is_none());
    }

    #[test]
    fn first_order_phase_is_negative_and_grows() {
        let (ip, cut) = plateau_limits();
        let c = reference_spectra().first_order(&ExtractionSettings::default()).unwrap();
        let w0 = c.omega0;
        let lower = c.band_mean(ip + 0.2 * (cut - ip), ip + 0.4 * (cut - ip)).unwrap();
        let upper = c.band_mean(ip + 0.6 * (cut - ip), cut).unwrap();
        assert!(lower < 0.0 && upper < lower, "{lower} {upper}");
        let end = c.band_mean(cut - 0.5 * w0, cut + 0.5 * w0).unwrap().abs();
        assert!(end > 0.35 * PI && end < 0.65 * PI, "{end}");
    }

    #[test]
    fn flipping_the_molecule_flips_the_phase() {
        let (ip, cut) = plateau_limits();
        let p = reference_pulse();
        let flipped = StarkSpectra::compute(&p, &co().flipped(), &fast(), &SpectrumSettings::default()).unwrap();
        let a = reference_spectra().first_order(&ExtractionSettings::default()).unwrap();
        let b = flipped.first_order(&ExtractionSettings::default()).unwrap();
        let (lo, hi) = (ip + 0.4 * (cut - ip), cut);
        let (ma, mb) = (a.band_mean(lo, hi).unwrap(), b.band_mean(lo, hi).unwrap());
        assert!(ma < 0.0 && mb > 0.0);
        assert!(((mb + ma) / ma).abs() < 0.15, "{ma} {mb}");
        // The field-free spectrum does not depend on the orientation.
        assert_eq!(flipped.none.amplitudes, reference_spectra().none.amplitudes);
    }

    #[test]
    fn extraction_robust_to_small_orbital_energy_offset() {
        let (ip, cut) = plateau_limits();
        let shifted = StarkParameters { e0_au: co().e0_au - 1e-3, ..co() };
        let s = StarkSpectra::compute(&reference_pulse(), &shifted, &fast(), &SpectrumSettings::default()).unwrap();
        let a = reference_spectra().first_order(&ExtractionSettings::default()).unwrap();
        let b = s.first_order(&ExtractionSettings::default()).unwrap();
        let w0 = a.omega0;
        let mut q = ((ip + 0.3 * (cut - ip)) / w0).ceil();
        while q * w0 <= cut {
            let (lo, hi) = ((q - 0.5) * w0, (q + 0.5) * w0);
            if let (Some(x), Some(y)) = (a.band_mean(lo, hi), b.band_mean(lo, hi)) {
                assert!((x - y).abs() < 0.03, "H{q}: {x} vs {y}");
            }
            q += 1.0;
        }
    }

    #[test]
    fn second_order_phase_is_negative() {
        let (ip, cut) = plateau_limits();
        let c = reference_spectra().second_order(&ExtractionSettings::default()).unwrap();
        assert_eq!(c.order, 2);
        let w0 = c.omega0;
        let mut q = ((ip + 0.4 * (cut - ip)) / w0).ceil();
        while q * w0 <= cut {
            if let Some(v) = c.band_mean((q - 0.5) * w0, (q + 0.5) * w0) {
                assert!(v < 0.0, "H{q}: {v}");
            }
            q += 1.0;
        }
        let lower = c.band_mean(ip, ip + 0.5 * (cut - ip)).unwrap();
        let upper = c.band_mean(ip + 0.5 * (cut - ip), cut).unwrap();
        assert!(upper < lower, "{lower} {upper}");
    }
}
