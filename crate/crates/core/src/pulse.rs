//! Driving laser pulse, its vector potential, and the focusing geometry.
//!
//! The electric field is linearly polarized,
//! `F(t) = F0 · env(t) · sin(ω0 t + φ_CE) · ê`, and vanishes outside `[0, τ]`.
//! The cos² envelope is `cos²(π(t − τ/2)/τ)`; for `τ = 2T` its intensity
//! FWHM is ≈ 0.727 T.
//!
//! The vector potential `A(t) = −∫₀ᵗ F` and the excursion integral
//! `X(t) = ∫₀ᵗ A` are tabulated once with cumulative Simpson sums on a uniform
//! grid for unit amplitude; between nodes they are completed with an 8-point
//! Gauss–Legendre rule, so `dA/dt = −F` holds to quadrature precision everywhere.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quadrature::gauss_legendre8;
use crate::units;
use crate::{Error, Result};

/// Minimum number of tabulation nodes per pulse.
pub const MIN_GRID_POINTS: usize = 1 << 14;
/// Default number of tabulation nodes per pulse.
pub const DEFAULT_GRID_POINTS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// Field envelope cos²(π(t − τ/2)/τ) over the whole duration.
    CosSquared,
    /// Flat top with sin² ramps of the given length (in cycles) at both ends.
    FlatTop { ramp_cycles: f64 },
}

/// Carrier-envelope phase of the reference two-cycle pulse. With it the field
/// maximum is 0.94 F0 and a single half-cycle produces the plateau.
pub const REFERENCE_CEP_RAD: f64 = PI / 6.0;

/// Serializable description of a pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Envelope amplitude F0 (au).
    pub peak_field_au: f64,
    /// Carrier angular frequency ω0 (au).
    pub omega_au: f64,
    /// Total duration τ in optical cycles.
    pub duration_cycles: f64,
    /// Carrier-envelope phase of the sine carrier, referenced to the envelope start.
    pub cep_rad: f64,
    pub envelope: Envelope,
    /// Unit polarization vector (lab z by default).
    pub polarization: [f64; 3],
}

impl PulseShape {
    /// 800 nm, two-cycle cos² pulse with a sine carrier.
    pub fn two_cycle_800nm(peak_field_au: f64) -> Self {
        Self {
            peak_field_au,
            omega_au: units::omega_from_wavelength_nm(800.0),
            duration_cycles: 2.0,
            cep_rad: 0.0,
            envelope: Envelope::CosSquared,
            polarization: [0.0, 0.0, 1.0],
        }
    }

    /// Two-cycle 800 nm pulse at [`REFERENCE_CEP_RAD`] with the envelope
    /// amplitude set by a peak intensity.
    pub fn reference(peak_intensity_wcm2: f64) -> Result<Self> {
        Ok(Self {
            cep_rad: REFERENCE_CEP_RAD,
            ..Self::two_cycle_800nm(units::field_from_intensity(peak_intensity_wcm2)?)
        })
    }

    /// 800 nm flat-top pulse with one-cycle ramps.
    pub fn flat_top_800nm(peak_field_au: f64, duration_cycles: f64) -> Self {
        Self {
            envelope: Envelope::FlatTop { ramp_cycles: 1.0 },
            duration_cycles,
            ..Self::two_cycle_800nm(peak_field_au)
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega_au
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.peak_field_au, self.omega_au, self.duration_cycles, self.cep_rad];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("pulse parameters must be finite".into()));
        }
        if self.peak_field_au < 0.0 {
            return Err(Error::Domain("peak field must be non-negative".into()));
        }
        if self.omega_au <= 0.0 {
            return Err(Error::Domain("carrier frequency must be positive".into()));
        }
        if self.duration_cycles <= 0.0 {
            return Err(Error::Domain("pulse duration must be positive".into()));
        }
        if let Envelope::FlatTop { ramp_cycles } = self.envelope {
            if !(ramp_cycles > 0.0 && 2.0 * ramp_cycles <= self.duration_cycles) {
                return Err(Error::Domain(
                    "flat-top ramps must be positive and fit inside the pulse".into(),
                ));
            }
        }
        let norm = self.polarization.iter().map(|c| c * c).sum::<f64>().sqrt();
        let err = (norm - 1.0).abs();
        if err.is_nan() || err >= 1e-9 {
            return Err(Error::Domain("polarization must be a unit vector".into()));
        }
        Ok(())
    }

    /// Full width at half maximum of the intensity envelope, in cycles.
    pub fn envelope_fwhm_cycles(&self) -> f64 {
        // Point where sin⁴ reaches one half.
        let half = (0.5f64).powf(0.25).asin() / PI;
        match self.envelope {
            Envelope::CosSquared => self.duration_cycles * (1.0 - 2.0 * half),
            Envelope::FlatTop { ramp_cycles } => self.duration_cycles - 4.0 * ramp_cycles * half,
        }
    }
}

/// Integrals of the unit-amplitude field.
#[derive(Debug)]
struct Tables {
    step: f64,
    /// A(t_k) projected on the polarization axis.
    a: Vec<f64>,
    /// X(t_k) = ∫₀^{t_k} A.
    x: Vec<f64>,
}

/// A pulse with its tabulated time integrals. Cheap to clone.
#[derive(Debug, Clone)]
pub struct LaserPulse {
    shape: PulseShape,
    duration: f64,
    polarization: Vector3<f64>,
    tables: Arc<Tables>,
}

impl LaserPulse {
    pub fn new(shape: PulseShape) -> Result<Self> {
        Self::with_grid(shape, DEFAULT_GRID_POINTS)
    }

    pub fn with_grid(shape: PulseShape, grid_points: usize) -> Result<Self> {
        shape.validate()?;
        if grid_points < MIN_GRID_POINTS {
            return Err(Error::config(
                "numerics.pulse_grid_points",
                format!("must be at least {MIN_GRID_POINTS}"),
            ));
        }
        let duration = shape.duration_cycles * shape.period();
        let polarization = Vector3::from(shape.polarization);
        let mut pulse = Self {
            shape,
            duration,
            polarization,
            tables: Arc::new(Tables {
                step: 0.0,
                a: Vec::new(),
                x: Vec::new(),
            }),
        };
        pulse.tables = Arc::new(pulse.tabulate(grid_points));
        Ok(pulse)
    }

    fn tabulate(&self, nodes: usize) -> Tables {
        let cells = nodes - 1;
        let h = self.duration / cells as f64;
        let mut a = Vec::with_capacity(nodes);
        let mut x = Vec::with_capacity(nodes);
        a.push(0.0);
        x.push(0.0);
        let mut f_lo = self.field_raw(0.0);
        for k in 0..cells {
            let t0 = k as f64 * h;
            let f_mid = self.field_raw(t0 + 0.5 * h);
            let f_hi = self.field_raw(t0 + h);
            let a0 = a[k];
            // ∫F over the cell, and ∫(t_{k+1} − s) F(s) ds, both by Simpson.
            let int_f = h / 6.0 * (f_lo + 4.0 * f_mid + f_hi);
            let int_wf = h * h / 6.0 * (f_lo + 2.0 * f_mid);
            a.push(a0 - int_f);
            x.push(x[k] + a0 * h - int_wf);
            f_lo = f_hi;
        }
        Tables { step: h, a, x }
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    pub fn peak_field(&self) -> f64 {
        self.shape.peak_field_au
    }

    pub fn omega(&self) -> f64 {
        self.shape.omega_au
    }

    pub fn period(&self) -> f64 {
        self.shape.period()
    }

    /// Pulse end time τ (au).
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn polarization(&self) -> Vector3<f64> {
        self.polarization
    }

    /// Same pulse with a different envelope amplitude; reuses the tables.
    pub fn scaled(&self, peak_field_au: f64) -> Self {
        let mut p = self.clone();
        p.shape.peak_field_au = peak_field_au;
        p
    }

    /// Field envelope in [0, 1].
    pub fn envelope(&self, t: f64) -> f64 {
        if !(t > 0.0 && t < self.duration) {
            return 0.0;
        }
        match self.shape.envelope {
            Envelope::CosSquared => {
                let c = (PI * (t - 0.5 * self.duration) / self.duration).cos();
                c * c
            }
            Envelope::FlatTop { ramp_cycles } => {
                let ramp = ramp_cycles * self.period();
                let edge = t.min(self.duration - t);
                if edge >= ramp {
                    1.0
                } else {
                    let s = (0.5 * PI * edge / ramp).sin();
                    s * s
                }
            }
        }
    }

    /// Unit-amplitude field.
    #[inline]
    fn field_raw(&self, t: f64) -> f64 {
        if !(t > 0.0 && t < self.duration) {
            return 0.0;
        }
        self.envelope(t) * (self.shape.omega_au * t + self.shape.cep_rad).sin()
    }

    /// Field projected on the polarization axis (au). Zero outside the support.
    #[inline]
    pub fn field(&self, t: f64) -> f64 {
        self.shape.peak_field_au * self.field_raw(t)
    }

    /// Field vector (au).
    pub fn field_at(&self, t: f64) -> Result<Vector3<f64>> {
        check_time(t)?;
        Ok(self.polarization * self.field(t))
    }

    /// A(t) projected on the polarization axis.
    pub fn vector_potential_scalar(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let tab = &self.tables;
        let last = tab.a.len() - 1;
        if t >= self.duration {
            return self.shape.peak_field_au * tab.a[last];
        }
        let k = ((t / tab.step) as usize).min(last - 1);
        let tk = k as f64 * tab.step;
        let rest = if t > tk {
            gauss_legendre8(tk, t, |s| self.field_raw(s))
        } else {
            0.0
        };
        self.shape.peak_field_au * (tab.a[k] - rest)
    }

    /// A(t) = −∫₀ᵗ F (au).
    pub fn vector_potential(&self, t: f64) -> Result<Vector3<f64>> {
        check_time(t)?;
        Ok(self.polarization * self.vector_potential_scalar(t))
    }

    /// X(t) = ∫₀ᵗ A, projected on the polarization axis.
    pub fn excursion_integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let tab = &self.tables;
        let last = tab.a.len() - 1;
        if t >= self.duration {
            return self.shape.peak_field_au * (tab.x[last] + tab.a[last] * (t - self.duration));
        }
        let k = ((t / tab.step) as usize).min(last - 1);
        let tk = k as f64 * tab.step;
        let rest = if t > tk {
            gauss_legendre8(tk, t, |s| (t - s) * self.field_raw(s))
        } else {
            0.0
        };
        self.shape.peak_field_au * (tab.x[k] + tab.a[k] * (t - tk) - rest)
    }

    /// Electron displacement at `t` for release at rest from the origin at `t_ion`.
    pub fn displacement(&self, t_ion: f64, t: f64) -> f64 {
        self.excursion_integral(t)
            - self.excursion_integral(t_ion)
            - self.vector_potential_scalar(t_ion) * (t - t_ion)
    }

    /// Velocity at `t` for release at rest at `t_ion`: A(t) − A(t_ion).
    pub fn velocity(&self, t_ion: f64, t: f64) -> f64 {
        self.vector_potential_scalar(t) - self.vector_potential_scalar(t_ion)
    }

    /// Half-cycle index of the sine carrier at time `t` (zeros of the carrier
    /// separate half-cycles).
    pub fn half_cycle_index(&self, t: f64) -> i64 {
        ((self.shape.omega_au * t + self.shape.cep_rad) / PI).floor() as i64
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite, got {t}")))
    }
}

/// Gaussian focus of the driving beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusGeometry {
    /// Confocal parameter b = 2 z_R (cm).
    pub confocal_parameter_cm: f64,
    /// Focus position relative to the medium center (cm); negative is upstream.
    pub focus_position_cm: f64,
    /// Peak intensity at the focus (W/cm²).
    pub peak_intensity_wcm2: f64,
}

impl FocusGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.confocal_parameter_cm > 0.0 && self.confocal_parameter_cm.is_finite()) {
            return Err(Error::config(
                "macroscopic.confocal_parameter_cm",
                "must be positive and finite",
            ));
        }
        if !self.focus_position_cm.is_finite() {
            return Err(Error::config("macroscopic.focus_position_cm", "must be finite"));
        }
        if !(self.peak_intensity_wcm2 >= 0.0 && self.peak_intensity_wcm2.is_finite()) {
            return Err(Error::config(
                "macroscopic.peak_intensity_focus_Wcm2",
                "must be non-negative and finite",
            ));
        }
        Ok(())
    }

    /// Beam waist (1/e field radius) at the focus, in cm.
    pub fn waist_cm(&self, omega_au: f64) -> f64 {
        (self.confocal_parameter_cm / units::wavenumber_per_cm(omega_au)).sqrt()
    }

    /// Beam radius at lab position `z_cm`.
    pub fn beam_radius_cm(&self, z_cm: f64, omega_au: f64) -> f64 {
        let xi = 2.0 * (z_cm - self.focus_position_cm) / self.confocal_parameter_cm;
        self.waist_cm(omega_au) * (1.0 + xi * xi).sqrt()
    }

    /// On-axis peak intensity at lab position `z_cm` (W/cm²).
    pub fn on_axis_intensity(&self, z_cm: f64) -> f64 {
        let xi = 2.0 * (z_cm - self.focus_position_cm) / self.confocal_parameter_cm;
        self.peak_intensity_wcm2 / (1.0 + xi * xi)
    }

    /// Complex TEM₀₀ field factor relative to the focus, including the Gouy
    /// phase and the wavefront curvature, at lab position `z_cm` and radius `r_cm`.
    /// Equals 1 at the focus on axis.
    pub fn gaussian_beam_factor(&self, z_cm: f64, r_cm: f64, omega_au: f64) -> Complex64 {
        let zr = 0.5 * self.confocal_parameter_cm;
        let dz = z_cm - self.focus_position_cm;
        let xi = dz / zr;
        let k = units::wavenumber_per_cm(omega_au);
        let w0sq = self.confocal_parameter_cm / k;
        let wsq = w0sq * (1.0 + xi * xi);
        let inv_curvature = dz / (dz * dz + zr * zr);
        let amplitude = (1.0 + xi * xi).sqrt().recip() * (-r_cm * r_cm / wsq).exp();
        let phase = 0.5 * k * r_cm * r_cm * inv_curvature - xi.atan();
        Complex64::from_polar(amplitude, phase)
    }
}
