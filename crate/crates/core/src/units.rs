//! Atomic-unit constants and conversions used at the I/O boundary.

use std::f64::consts::PI;

/// Atomic unit of intensity, W/cm².
pub const INTENSITY_AU_WCM2: f64 = 3.50945e16;

/// Speed of light in atomic units.
pub const SPEED_OF_LIGHT_AU: f64 = 137.035_999_084;

/// Bohr radius in cm.
pub const BOHR_CM: f64 = 5.291_772_109_03e-9;

/// Bohr radius in nm.
pub const BOHR_NM: f64 = 5.291_772_109_03e-2;

/// Peak field (au) for a given cycle-averaged intensity (W/cm²).
pub fn field_from_intensity(intensity_wcm2: f64) -> crate::Result<f64> {
    if !intensity_wcm2.is_finite() || intensity_wcm2 < 0.0 {
        return Err(crate::Error::Domain(format!(
            "intensity must be finite and non-negative, got {intensity_wcm2}"
        )));
    }
    Ok((intensity_wcm2 / INTENSITY_AU_WCM2).sqrt())
}

/// Intensity (W/cm²) for a given peak field (au).
pub fn intensity_from_field(field_au: f64) -> crate::Result<f64> {
    if !field_au.is_finite() || field_au < 0.0 {
        return Err(crate::Error::Domain(format!(
            "field amplitude must be finite and non-negative, got {field_au}"
        )));
    }
    Ok(field_au * field_au * INTENSITY_AU_WCM2)
}

/// Angular frequency (au) of light with the given vacuum wavelength.
pub fn omega_from_wavelength_nm(wavelength_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_AU * BOHR_NM / wavelength_nm
}

/// Vacuum wavelength in cm of light with angular frequency `omega_au`.
pub fn wavelength_cm(omega_au: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_AU / omega_au * BOHR_CM
}

/// Vacuum wavenumber in 1/cm.
pub fn wavenumber_per_cm(omega_au: f64) -> f64 {
    2.0 * PI / wavelength_cm(omega_au)
}

/// Ponderomotive potential F²/(4ω²).
pub fn ponderomotive(field_au: f64, omega_au: f64) -> f64 {
    field_au * field_au / (4.0 * omega_au * omega_au)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intensity_is_zero_field() {
        assert_eq!(field_from_intensity(0.0).unwrap(), 0.0);
    }

    #[test]
    fn atomic_intensity_is_unit_field() {
        assert!((field_from_intensity(3.50945e16).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn figure_one_field_matches_quoted_intensity() {
        let i = intensity_from_field(0.075).unwrap();
        assert!((i - 1.974e14).abs() / 1.974e14 < 1e-3);
        assert!((i - 2.0e14).abs() / 2.0e14 < 0.02);
    }

    #[test]
    fn negative_intensity_rejected() {
        assert!(field_from_intensity(-1.0).is_err());
        assert!(field_from_intensity(f64::NAN).is_err());
    }

    #[test]
    fn eight_hundred_nm_carrier() {
        let w = omega_from_wavelength_nm(800.0);
        assert!((w - 0.056954).abs() < 1e-5);
        assert!((wavelength_cm(w) - 8.0e-5).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn conversion_round_trip(i in 0.0f64..1e17) {
            let back = intensity_from_field(field_from_intensity(i).unwrap()).unwrap();
            proptest::prop_assert!((back - i).abs() <= 4.0 * f64::EPSILON * i.max(1e-300));
        }

        #[test]
        fn conversion_is_monotone(a in 0.0f64..1e17, b in 0.0f64..1e17) {
            let (fa, fb) = (field_from_intensity(a).unwrap(), field_from_intensity(b).unwrap());
            if a < b { proptest::prop_assert!(fa < fb); }
            if a > b { proptest::prop_assert!(fa > fb); }
        }
    }
}
