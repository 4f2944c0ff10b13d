//! Physical constants and unit helpers.
//!
//! Every frequency in the crate is an angular frequency in rad/s, positions
//! are in nanometres and magnetic fields in tesla.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EchoError;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Converts an ordinary frequency in kHz to rad/s.
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e3
}

/// Converts an ordinary frequency in MHz to rad/s.
pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e6
}

/// Converts rad/s back to kHz.
pub fn to_khz(w: f64) -> f64 {
    w / TAU / 1e3
}

/// Gauss to tesla.
pub fn gauss(b: f64) -> f64 {
    b * 1e-4
}

/// Nuclear species that appear in the bath or as the host nitrogen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    C13,
    H1,
    N14,
}

impl Species {
    /// Twice the spin quantum number.
    pub fn twice_spin(self) -> usize {
        match self {
            Species::C13 | Species::H1 => 1,
            Species::N14 => 2,
        }
    }

    /// Hilbert-space dimension 2I+1.
    pub fn dim(self) -> usize {
        self.twice_spin() + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            Species::C13 => "13C",
            Species::H1 => "1H",
            Species::N14 => "14N",
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Species {
    type Err = EchoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "13C" | "C13" | "c13" => Ok(Species::C13),
            "1H" | "H1" | "h1" | "H" => Ok(Species::H1),
            "14N" | "N14" | "n14" => Ok(Species::N14),
            other => Err(EchoError::Domain(format!("unknown species '{other}'"))),
        }
    }
}

/// Constants of the NV centre and its nuclear environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// μ0/4π · ħ in SI units (J·m³ per (rad/s/T)² expressed so that
    /// `mu0_over_4pi * γ1 * γ2 / r³` with r in metres gives rad/s).
    pub mu0_over_4pi: f64,
    /// Electron gyromagnetic ratio, rad/s/T (negative).
    pub gamma_e: f64,
    pub gamma_per_species: BTreeMap<Species, f64>,
    /// Zero-field splitting, rad/s.
    pub zero_field_splitting: f64,
    pub nitrogen_a_perp: f64,
    pub nitrogen_a_par: f64,
    pub nitrogen_quadrupole: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let mut gammas = BTreeMap::new();
        // 10.705 MHz/T, 42.577 MHz/T, 0.308 kHz/G
        gammas.insert(Species::C13, TAU * 10.705e6);
        gammas.insert(Species::H1, TAU * 42.577e6);
        gammas.insert(Species::N14, TAU * 3.08e6);
        Self {
            mu0_over_4pi: 1e-7 * HBAR,
            gamma_e: -TAU * 28.0e9,
            gamma_per_species: gammas,
            zero_field_splitting: TAU * 2.87e9,
            nitrogen_a_perp: -TAU * 2.62e6,
            nitrogen_a_par: -TAU * 2.162e6,
            nitrogen_quadrupole: -TAU * 4.945e6,
        }
    }
}

impl PhysicalConstants {
    pub fn gamma(&self, species: Species) -> f64 {
        self.gamma_per_species[&species]
    }

    /// Bare Larmor angular frequency |γ B| of a species.
    pub fn larmor(&self, species: Species, b_z: f64) -> f64 {
        (self.gamma(species) * b_z).abs()
    }

    /// Field that gives the requested bare Larmor frequency.
    pub fn field_for_larmor(&self, species: Species, omega: f64) -> f64 {
        omega / self.gamma(species).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn electron_ratio_is_minus_2p8_mhz_per_gauss() {
        let c = PhysicalConstants::default();
        let per_gauss = c.gamma_e * gauss(1.0);
        assert!((per_gauss / mhz(-2.8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn carbon_larmor_field_cross_check() {
        let c = PhysicalConstants::default();
        let b = c.field_for_larmor(Species::C13, mhz(5.0));
        assert!((b / 0.467 - 1.0).abs() < 0.01, "B = {b}");
        assert!((c.larmor(Species::C13, 0.467) / mhz(5.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn nitrogen_parameters() {
        let c = PhysicalConstants::default();
        assert_eq!(c.nitrogen_a_perp, -TAU * 2.62e6);
        assert_eq!(c.nitrogen_a_par, -TAU * 2.162e6);
        assert_eq!(c.nitrogen_quadrupole, -TAU * 4.945e6);
        // 0.308 kHz/G
        assert!((c.gamma(Species::N14) * gauss(1.0) / khz(0.308) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn species_round_trip() {
        for s in [Species::C13, Species::H1, Species::N14] {
            assert_eq!(s.label().parse::<Species>().unwrap(), s);
        }
        assert!("2H".parse::<Species>().is_err());
    }
}
