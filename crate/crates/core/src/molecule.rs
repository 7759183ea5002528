//! Molecular Stark parameters and the field-dependent orbital energy
//! `E(F) = E0 − μ·F − ½ Fᵀ α F`.
//!
//! Frame convention: the laser polarizes along lab z; the molecule is rotated
//! by the orientation angle θ about lab y. In the molecular frame the
//! internuclear axis is z and the permanent dipole points carbon → oxygen.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarkParameters {
    /// Field-free orbital energy E0 (au, negative).
    pub e0_au: f64,
    /// Permanent dipole magnitude |μ| (au).
    pub mu_au: f64,
    /// Dipole direction in the molecular frame (unit vector).
    pub dipole_direction: [f64; 3],
    pub alpha_par_au: f64,
    pub alpha_perp_au: f64,
    /// Angle between internuclear axis and laser polarization (rad).
    pub theta_rad: f64,
}

impl StarkParameters {
    /// HOMO of CO oriented along the polarization axis.
    pub fn carbon_monoxide() -> Self {
        Self {
            e0_au: -0.5150,
            mu_au: 1.1,
            dipole_direction: [0.0, 0.0, 1.0],
            alpha_par_au: 3.2,
            alpha_perp_au: 2.8,
            theta_rad: 0.0,
        }
    }

    pub fn with_theta(mut self, theta_rad: f64) -> Self {
        self.theta_rad = theta_rad;
        self
    }

    /// The oppositely oriented molecule (μ → −μ, α unchanged).
    pub fn flipped(&self) -> Self {
        let mut p = self.clone();
        p.dipole_direction = p.dipole_direction.map(|c| -c);
        p
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.e0_au,
            self.mu_au,
            self.alpha_par_au,
            self.alpha_perp_au,
            self.theta_rad,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("molecular parameters must be finite".into()));
        }
        if self.e0_au >= 0.0 {
            return Err(Error::config("molecule.E0_au", "must be negative (bound orbital)"));
        }
        if self.mu_au < 0.0 {
            return Err(Error::config("molecule.mu_au", "must be non-negative"));
        }
        if self.alpha_par_au < 0.0 {
            return Err(Error::config("molecule.alpha_par_au", "must be non-negative"));
        }
        if self.alpha_perp_au < 0.0 {
            return Err(Error::config("molecule.alpha_perp_au", "must be non-negative"));
        }
        let n = Vector3::from(self.dipole_direction).norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("dipole direction must be a unit vector".into()));
        }
        Ok(())
    }

    /// Field-free ionization potential |E0|.
    pub fn ip0(&self) -> f64 {
        self.e0_au.abs()
    }

    fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::y_axis(), self.theta_rad)
    }

    /// Permanent dipole in the lab frame.
    pub fn dipole_lab(&self) -> Vector3<f64> {
        self.rotation() * (Vector3::from(self.dipole_direction) * self.mu_au)
    }

    /// Polarizability tensor in the lab frame.
    pub fn polarizability_lab(&self) -> Matrix3<f64> {
        let mol = Matrix3::from_diagonal(&Vector3::new(
            self.alpha_perp_au,
            self.alpha_perp_au,
            self.alpha_par_au,
        ));
        let r = self.rotation().into_inner();
        r * mol * r.transpose()
    }

    /// Dipole and polarizability projected on a unit axis: (μ·ê, êᵀαê).
    pub fn projected(&self, axis: &Vector3<f64>) -> (f64, f64) {
        (
            self.dipole_lab().dot(axis),
            axis.dot(&(self.polarizability_lab() * axis)),
        )
    }

    /// Stark-shifted orbital energy for a lab-frame field.
    pub fn stark_energy(&self, field: &Vector3<f64>) -> f64 {
        self.e0_au - self.dipole_lab().dot(field) - 0.5 * field.dot(&(self.polarizability_lab() * field))
    }

    /// Effective ionization potential |E(F)|; fails when the shifted level is unbound.
    pub fn ip_of_field(&self, field: &Vector3<f64>) -> Result<f64> {
        let e = self.stark_energy(field);
        if e < 0.0 {
            Ok(-e)
        } else {
            Err(Error::AdiabaticBreakdown { energy_au: e })
        }
    }
}
