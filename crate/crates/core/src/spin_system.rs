//! Hamiltonian ingredients for the electron-nuclear system: coordinate
//! frames, hyperfine fields, nuclear dipolar couplings, precession axes and
//! the virtual flip-flop shifts of the host nitrogen.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, Species};
use crate::error::{domain, EchoError, Result};

pub type Vec3 = Vector3<f64>;

/// Default projection factor cos γ between the bare and the Lee-Goldburg
/// precession axes.
pub const LG_PROJECTION: f64 = 0.577_350_269_189_625_8;

/// NV axis ẑ = [111]/√3 in cubic crystal coordinates.
pub fn nv_axis_z() -> Vec3 {
    Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt()
}

/// x̂ = [1 -1 0]/√2 in cubic crystal coordinates.
pub fn nv_axis_x() -> Vec3 {
    Vec3::new(1.0, -1.0, 0.0) / 2f64.sqrt()
}

/// ŷ = [1 1 -2]/√6 in cubic crystal coordinates.
pub fn nv_axis_y() -> Vec3 {
    Vec3::new(1.0, 1.0, -2.0) / 6f64.sqrt()
}

/// Expresses a vector given in cubic crystal coordinates in the NV frame.
pub fn crystal_to_nv(r: &Vec3) -> Vec3 {
    Vec3::new(r.dot(&nv_axis_x()), r.dot(&nv_axis_y()), r.dot(&nv_axis_z()))
}

/// Inverse of [`crystal_to_nv`].
pub fn nv_to_crystal(r: &Vec3) -> Vec3 {
    nv_axis_x() * r.x + nv_axis_y() * r.y + nv_axis_z() * r.z
}

/// A nuclear spin with its NV-frame position in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearSpin {
    pub position: [f64; 3],
    pub species: Species,
}

impl NuclearSpin {
    pub fn new(position: Vec3, species: Species) -> Self {
        Self { position: [position.x, position.y, position.z], species }
    }

    /// Builds a spin from cubic crystal coordinates (nm).
    pub fn from_crystal(crystal: [f64; 3], species: Species) -> Self {
        Self::new(crystal_to_nv(&Vec3::from(crystal)), species)
    }

    pub fn pos(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn spin_magnitude(&self) -> f64 {
        self.species.twice_spin() as f64 / 2.0
    }
}

/// Hyperfine field of one nucleus split along a precession axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperfineVector {
    /// Full hyperfine vector A (rad/s, NV frame).
    pub a: [f64; 3],
    /// Signed projection on `omega_hat`.
    pub a_parallel: f64,
    /// Magnitude of the perpendicular part, ≥ 0.
    pub a_perp: f64,
    pub omega_hat: [f64; 3],
}

impl HyperfineVector {
    /// Decomposes `a` along the strong-field axis ẑ.
    pub fn from_field(a: Vec3) -> Self {
        Self::along(a, Vec3::z())
    }

    /// Decomposes `a` along an arbitrary axis (normalised internally).
    pub fn along(a: Vec3, axis: Vec3) -> Self {
        let n = axis.normalize();
        let par = a.dot(&n);
        let perp = (a - n * par).norm();
        Self { a: [a.x, a.y, a.z], a_parallel: par, a_perp: perp, omega_hat: [n.x, n.y, n.z] }
    }

    /// Convenience constructor from (A∥, A⊥) with the perpendicular part along x̂.
    pub fn from_components(a_parallel: f64, a_perp: f64) -> Self {
        Self::from_field(Vec3::new(a_perp, 0.0, a_parallel))
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::from(self.a)
    }

    pub fn axis(&self) -> Vec3 {
        Vec3::from(self.omega_hat)
    }

    /// Re-projects onto a new axis.
    pub fn reproject(&self, axis: Vec3) -> Self {
        Self::along(self.vector(), axis)
    }

    /// The rotating-frame components (A^x, A^y, A^z) about the precession axis.
    pub fn rotating_components(&self) -> (Vec3, Vec3, Vec3) {
        let n = self.axis();
        let a = self.vector();
        let az = n * a.dot(&n);
        (a - az, n.cross(&a), az)
    }

    /// Azimuthal angle of the perpendicular part in the NV x-y plane.
    pub fn azimuth(&self) -> f64 {
        let (ax, _, _) = self.rotating_components();
        ax.y.atan2(ax.x)
    }
}

/// Electron qubit manifold: |↑⟩ = |+1⟩ and |↓⟩ = |0⟩ or |−1⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitManifold {
    down_level: i8,
}

impl QubitManifold {
    pub const UP_LEVEL: i8 = 1;

    pub fn new(down_level: i8) -> Result<Self> {
        match down_level {
            0 | -1 => Ok(Self { down_level }),
            other => domain(format!("qubit down level must be 0 or -1, got {other}")),
        }
    }

    /// The {+1, 0} manifold (η = 1/2).
    pub fn zero() -> Self {
        Self { down_level: 0 }
    }

    /// The {+1, −1} manifold (η = 1).
    pub fn minus() -> Self {
        Self { down_level: -1 }
    }

    pub fn up_level(&self) -> i8 {
        Self::UP_LEVEL
    }

    pub fn down_level(&self) -> i8 {
        self.down_level
    }

    pub fn eta(&self) -> f64 {
        if self.down_level == 0 {
            0.5
        } else {
            1.0
        }
    }

    pub fn c_eta(&self) -> f64 {
        if self.down_level == 0 {
            0.5
        } else {
            0.0
        }
    }
}

fn nm(r: &Vec3) -> Vec3 {
    r * 1e-9
}

/// Point-dipole hyperfine field at `r` (nm) for a nucleus with
/// gyromagnetic ratio `gamma_j`, decomposed along ẑ.
pub fn hyperfine_vector(r: &Vec3, gamma_j: f64, consts: &PhysicalConstants) -> Result<HyperfineVector> {
    let dist = r.norm();
    if !(dist > 0.0) || !dist.is_finite() {
        return domain("hyperfine field undefined at zero distance");
    }
    let rm = nm(r);
    let d = rm.norm();
    let rhat = rm / d;
    let z = Vec3::z();
    let pref = consts.mu0_over_4pi * consts.gamma_e * gamma_j / d.powi(3);
    let a = (z - rhat * (3.0 * z.dot(&rhat))) * pref;
    Ok(HyperfineVector::from_field(a))
}

/// Coupling between two nuclei: the secular strength d_jk and the full
/// dipolar tensor T with H = I_j · T · I_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipolarCoupling {
    pub d: f64,
    pub tensor: Matrix3<f64>,
}

pub fn dipolar_coupling(
    r_j: &Vec3,
    r_k: &Vec3,
    gamma_j: f64,
    gamma_k: f64,
    consts: &PhysicalConstants,
) -> Result<DipolarCoupling> {
    let rjk = nm(&(r_j - r_k));
    let dist = rjk.norm();
    if !(dist > 0.0) {
        return Err(EchoError::Domain("coincident nuclear positions".into()));
    }
    let rhat = rjk / dist;
    let pref = consts.mu0_over_4pi * gamma_j * gamma_k / dist.powi(3);
    let cos = rhat.z;
    let d = pref * (1.0 - 3.0 * cos * cos);
    let tensor = (Matrix3::identity() - rhat * rhat.transpose() * 3.0) * pref;
    Ok(DipolarCoupling { d, tensor })
}

/// Precession frequency and axis of a nucleus in the given manifold,
/// from ω ω̂ = γ B ẑ − c_η A.
pub fn precession_frame(
    b_z: f64,
    gamma_j: f64,
    a: &HyperfineVector,
    manifold: QubitManifold,
) -> Result<(f64, Vec3)> {
    if !(b_z > 0.0) {
        return domain("precession frame needs B_z > 0");
    }
    let field = Vec3::z() * (gamma_j * b_z) - a.vector() * manifold.c_eta();
    let omega = field.norm();
    Ok((omega, field / omega))
}

/// Effective parallel coupling under Lee-Goldburg decoupling, A∥ cos γ.
pub fn lg_effective_coupling(a_parallel: f64) -> f64 {
    lg_effective_coupling_with(a_parallel, LG_PROJECTION)
}

pub fn lg_effective_coupling_with(a_parallel: f64, projection: f64) -> f64 {
    a_parallel * projection
}

/// Diagonal nitrogen shift operators h_{m_s}, each listed as entries on
/// (|+1_N⟩, |0_N⟩, |−1_N⟩).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NitrogenShifts {
    pub h_plus: [f64; 3],
    pub h_zero: [f64; 3],
    pub h_minus: [f64; 3],
}

impl NitrogenShifts {
    /// Shift operator for electron level m_s ∈ {+1, 0, −1}.
    pub fn for_level(&self, m_s: i8) -> [f64; 3] {
        match m_s {
            1 => self.h_plus,
            0 => self.h_zero,
            _ => self.h_minus,
        }
    }

    /// Amplitude (A⊥)²/(D − γ_e B) of the |+1⟩ shift.
    pub fn plus_amplitude(&self) -> f64 {
        self.h_plus[1]
    }
}

pub fn nitrogen_virtual_shifts(b_z: f64, consts: &PhysicalConstants) -> Result<NitrogenShifts> {
    if !(b_z > 0.0) {
        return domain("nitrogen shifts need B_z > 0");
    }
    let d = consts.zero_field_splitting;
    let ge_b = consts.gamma_e * b_z;
    let up = d - ge_b;
    let down = d + ge_b;
    let tol = 1e-9 * d.abs();
    if up.abs() < tol || down.abs() < tol {
        return domain("electron level anticrossing: D = ±γ_e B_z");
    }
    let a2 = consts.nitrogen_a_perp.powi(2);
    let p = a2 / up;
    let m = a2 / down;
    Ok(NitrogenShifts {
        h_plus: [0.0, p, p],
        h_zero: [-p, -p - m, -m],
        h_minus: [m, m, 0.0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{khz, mhz};

    fn c13() -> f64 {
        PhysicalConstants::default().gamma(Species::C13)
    }

    #[test]
    fn frame_axes_are_orthonormal_and_right_handed() {
        let (x, y, z) = (nv_axis_x(), nv_axis_y(), nv_axis_z());
        assert!((x.cross(&y) - z).norm() < 1e-15);
        let r = Vec3::new(0.3, -1.1, 2.0);
        assert!((nv_to_crystal(&crystal_to_nv(&r)) - r).norm() < 1e-14);
    }

    #[test]
    fn tabulated_target_spin() {
        let c = PhysicalConstants::default();
        let r = crystal_to_nv(&Vec3::new(0.0, -1.9635, -0.8925));
        let a = hyperfine_vector(&r, c13(), &c).unwrap();
        assert!((a.a_parallel / khz(1.49) - 1.0).abs() < 0.01);
        assert!((a.a_perp / khz(2.93) - 1.0).abs() < 0.01);
    }

    #[test]
    fn tabulated_memory_spin() {
        let c = PhysicalConstants::default();
        let r = crystal_to_nv(&Vec3::new(-0.714, 0.0, 0.357));
        let a = hyperfine_vector(&r, c13(), &c).unwrap();
        assert!((a.a_parallel / khz(-31.26) - 1.0).abs() < 0.01);
        assert!((a.a_perp / khz(29.24) - 1.0).abs() < 0.01);
    }

    #[test]
    fn axial_position_has_no_perpendicular_part() {
        let c = PhysicalConstants::default();
        let d = 1.3;
        let a = hyperfine_vector(&(Vec3::z() * d), c13(), &c).unwrap();
        let expect = -2.0 * c.mu0_over_4pi * c.gamma_e * c13() / (d * 1e-9f64).powi(3);
        assert!((a.a[2] / expect - 1.0).abs() < 1e-12);
        assert!(a.a_perp.abs() < 1e-9 * expect.abs());
    }

    #[test]
    fn zero_position_is_rejected() {
        let c = PhysicalConstants::default();
        assert!(hyperfine_vector(&Vec3::zeros(), c13(), &c).is_err());
        assert!(dipolar_coupling(&Vec3::x(), &Vec3::x(), c13(), c13(), &c).is_err());
    }

    #[test]
    fn cc_bond_coupling() {
        let c = PhysicalConstants::default();
        let rj = crystal_to_nv(&Vec3::new(-1.2495, 0.714, -0.1785));
        let rk = crystal_to_nv(&Vec3::new(-1.33875, 0.80325, -0.26775));
        let d = dipolar_coupling(&rj, &rk, c13(), c13(), &c).unwrap();
        assert!((d.d / khz(1.37) - 1.0).abs() < 0.02, "{}", d.d / khz(1.0));
    }

    #[test]
    fn axial_and_magic_angle_couplings() {
        let c = PhysicalConstants::default();
        let g = c13();
        let r = 0.2;
        let d = dipolar_coupling(&(Vec3::z() * r), &Vec3::zeros(), g, g, &c).unwrap();
        let pref = c.mu0_over_4pi * g * g / (r * 1e-9f64).powi(3);
        assert!((d.d / (-2.0 * pref) - 1.0).abs() < 1e-12);
        let magic = Vec3::new(2f64.sqrt(), 0.0, 1.0).normalize() * r;
        let d = dipolar_coupling(&magic, &Vec3::zeros(), g, g, &c).unwrap();
        assert!(d.d.abs() < 1e-12 * pref);
    }

    #[test]
    fn tensor_is_symmetric_and_traceless() {
        let c = PhysicalConstants::default();
        let d = dipolar_coupling(&Vec3::new(0.1, -0.4, 0.3), &Vec3::new(-0.2, 0.1, 0.05), c13(), c13(), &c)
            .unwrap();
        let scale = d.tensor.abs().max();
        assert!((d.tensor - d.tensor.transpose()).abs().max() < 1e-12 * scale);
        assert!(d.tensor.trace().abs() < 1e-12 * scale);
    }

    #[test]
    fn precession_in_minus_manifold_is_bare_larmor() {
        let a = HyperfineVector::from_components(khz(30.0), khz(20.0));
        let (w, n) = precession_frame(0.467, c13(), &a, QubitManifold::minus()).unwrap();
        assert!((w - c13() * 0.467).abs() < 1e-9);
        assert!((n - Vec3::z()).norm() < 1e-15);
        assert!((w / mhz(5.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn precession_in_zero_manifold() {
        let zero = HyperfineVector::from_components(0.0, 0.0);
        let (w, _) = precession_frame(0.3, c13(), &zero, QubitManifold::zero()).unwrap();
        assert!((w - c13() * 0.3).abs() < 1e-9);
        let a = HyperfineVector::from_components(khz(10.0), 0.0);
        let (w, _) = precession_frame(0.3, c13(), &a, QubitManifold::zero()).unwrap();
        assert!((w - (c13() * 0.3 - khz(5.0))).abs() < 1e-6);
        assert!(precession_frame(0.0, c13(), &a, QubitManifold::zero()).is_err());
    }

    #[test]
    fn manifold_constants() {
        let z = QubitManifold::zero();
        assert_eq!((z.eta(), z.c_eta()), (0.5, 0.5));
        let m = QubitManifold::minus();
        assert_eq!((m.eta(), m.c_eta()), (1.0, 0.0));
        assert!(QubitManifold::new(1).is_err());
    }

    #[test]
    fn lg_projection() {
        assert_eq!(lg_effective_coupling(0.0), 0.0);
        let v = lg_effective_coupling(khz(3.0));
        assert!((v / khz(1.732) - 1.0).abs() < 1e-3);
        assert!(lg_effective_coupling(-khz(3.0)) < 0.0);
    }

    #[test]
    fn nitrogen_shift_structure() {
        let c = PhysicalConstants::default();
        let h = nitrogen_virtual_shifts(0.467, &c).unwrap();
        assert_eq!(h.h_plus[0], 0.0);
        assert_eq!(h.h_minus[2], 0.0);
        // direct arithmetic oracle
        let expect = c.nitrogen_a_perp.powi(2) / (c.zero_field_splitting - c.gamma_e * 0.467);
        assert_eq!(h.plus_amplitude(), expect);
        assert!((h.plus_amplitude() / khz(0.43) - 1.0).abs() < 0.01);
        let mut c0 = c.clone();
        c0.nitrogen_a_perp = 0.0;
        let h0 = nitrogen_virtual_shifts(0.467, &c0).unwrap();
        assert!(h0.h_plus.iter().chain(&h0.h_zero).chain(&h0.h_minus).all(|v| *v == 0.0));
    }

    #[test]
    fn nitrogen_resonance_rejected() {
        let c = PhysicalConstants::default();
        let b = c.zero_field_splitting / c.gamma_e.abs();
        assert!(nitrogen_virtual_shifts(b, &c).is_err());
    }

    #[test]
    fn rotating_components_have_equal_strengths() {
        let a = HyperfineVector::along(Vec3::new(3.0, -2.0, 5.0), Vec3::new(0.1, 0.2, 1.0));
        let (ax, ay, az) = a.rotating_components();
        assert!((ax.norm() - a.a_perp).abs() < 1e-12);
        assert!((ay.norm() - a.a_perp).abs() < 1e-12);
        assert!((az.norm() - a.a_parallel.abs()).abs() < 1e-12);
    }
}
