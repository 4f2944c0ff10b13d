//! Closed-form echo signals and ideal gate constructions.
//!
//! These formulas take the secular, strong-field, instantaneous-pulse limit.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{EchoError, Result};
use crate::linalg::{expm_hermitian, kron, paulis, spin_ops, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    pub a_parallel: f64,
    /// 1/2 for the {+1, 0} qubit, 1 for {+1, −1}.
    pub eta: f64,
    pub tau: f64,
    pub theta_rf: f64,
    /// Number of spins sharing the same precession frequency.
    pub p: u32,
}

impl SignalParams {
    pub fn new(a_parallel: f64, eta: f64, tau: f64, theta_rf: f64) -> Self {
        Self { a_parallel, eta, tau, theta_rf, p: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(EchoError::Domain("tau must be non-negative".into()));
        }
        if self.p < 1 {
            return Err(EchoError::Domain("multiplicity must be at least 1".into()));
        }
        if self.eta != 0.5 && self.eta != 1.0 {
            return Err(EchoError::Domain("eta must be 1/2 or 1".into()));
        }
        Ok(())
    }

    /// Accumulated conditional phase 2ηA∥τ.
    pub fn phase(&self) -> f64 {
        2.0 * self.eta * self.a_parallel * self.tau
    }
}

/// L = ½[(1 − cos θ) cos(2ηA∥τ) + 1 + cos θ].
pub fn single_spin_coherence(p: &SignalParams) -> f64 {
    let c = p.theta_rf.cos();
    0.5 * ((1.0 - c) * p.phase().cos() + 1.0 + c)
}

/// Product of single-spin contributions, each raised to its multiplicity.
pub fn multi_spin_coherence(params: &[SignalParams]) -> f64 {
    params.iter().map(|p| single_spin_coherence(p).powi(p.p as i32)).product()
}

/// Conditional nuclear rotations U_± = exp(∓2iητA∥ I_z).
pub fn entangling_gate_phase(a_parallel: f64, eta: f64, tau: f64) -> (CMat, CMat) {
    let [_, _, z] = spin_ops(1);
    let phi = 2.0 * eta * tau * a_parallel;
    (expm_hermitian(&z, phi), expm_hermitian(&z, -phi))
}

/// Controlled gate |↑⟩⟨↑| ⊗ U_+ + |↓⟩⟨↓| ⊗ U_− with the electron first.
pub fn controlled_gate(a_parallel: f64, eta: f64, tau: f64) -> CMat {
    let (up, dn) = entangling_gate_phase(a_parallel, eta, tau);
    let mut g = CMat::zeros(4, 4);
    g.view_mut((0, 0), (2, 2)).copy_from(&up);
    g.view_mut((2, 2), (2, 2)).copy_from(&dn);
    g
}

/// P = ½ + ¼[1 + cos(2ηA∥τ)] for a flip of one spin of a weakly coupled pair.
pub fn type_h_pair_population(a_parallel: f64, eta: f64, tau: f64) -> f64 {
    0.5 + 0.25 * (1.0 + (2.0 * eta * a_parallel * tau).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeDPrediction {
    /// Triplet transitions |0_n⟩ ↔ |±1_n⟩ at ω_n ± 3d/4.
    pub transitions: (f64, f64),
    pub splitting: f64,
    /// Collective flip time √2 π/(γ B_x).
    pub flip_time: f64,
    /// Single-spin flip time 2π/(γ B_x).
    pub single_flip_time: f64,
    pub population: f64,
}

pub fn type_d_pair_predictions(
    d: f64,
    gamma_n: f64,
    b_x: f64,
    omega_n: f64,
    a_parallel: f64,
    eta: f64,
    tau: f64,
) -> TypeDPrediction {
    let rabi = (gamma_n * b_x).abs();
    TypeDPrediction {
        transitions: (omega_n + 0.75 * d, omega_n - 0.75 * d),
        splitting: 1.5 * d.abs(),
        flip_time: SQRT_2 * PI / rabi,
        single_flip_time: 2.0 * PI / rabi,
        population: 0.5 + 0.25 * ((2.0 * eta * a_parallel * tau).cos() + 1.0),
    }
}

/// Two-qubit gates on electron ⊗ nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealGates {
    pub u_zx: CMat,
    pub u_zy: CMat,
    pub u_zz: CMat,
    pub u_xx: CMat,
    pub u_yy: CMat,
    pub iswap: CMat,
    pub swap: CMat,
}

/// u_αβ = exp(i π/4 σ_α ⊗ σ_β); iSWAP = u_yy u_xx; SWAP = e^{−iπ/4} u_zz iSWAP.
pub fn ideal_two_qubit_gates() -> IdealGates {
    let [x, y, z] = paulis();
    let u = |a: &CMat, b: &CMat| expm_hermitian(&kron(a, b), -FRAC_PI_4);
    let u_xx = u(&x, &x);
    let u_yy = u(&y, &y);
    let u_zz = u(&z, &z);
    let iswap = &u_yy * &u_xx;
    let swap = &u_zz * &iswap * C64::from_polar(1.0, -FRAC_PI_4);
    IdealGates { u_zx: u(&z, &x), u_zy: u(&z, &y), u_zz, u_xx, u_yy, iswap, swap }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DdMode {
    Pulsed,
    Continuous,
}

/// Effective electron-nuclear coupling under resonant decoupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdCoupling {
    pub mode: DdMode,
    /// Pulsed: coefficient of σ_z I_x. Continuous: coefficient of σ_z I_x + σ_y I_y.
    pub strength: f64,
    /// |f_k A⊥|, the scale other spins must be detuned by.
    pub selectivity: f64,
}

impl DdCoupling {
    /// Resonance isolation: |ω_n − ω_j| ≥ margin · |f_k A⊥|.
    pub fn is_isolated(&self, omega_n: f64, omega_j: f64, margin: f64) -> bool {
        (omega_n - omega_j).abs() >= margin * self.selectivity
    }

    /// Interaction time that completes an iSWAP.
    pub fn iswap_time(&self) -> Option<f64> {
        (self.strength != 0.0).then(|| PI / (2.0 * self.strength.abs()))
    }
}

pub fn dd_addressing_hamiltonian(a_perp: f64, f_k: f64, eta: f64, mode: DdMode) -> DdCoupling {
    match mode {
        DdMode::Pulsed => DdCoupling { mode, strength: 0.5 * eta * f_k * a_perp, selectivity: (f_k * a_perp).abs() },
        DdMode::Continuous => DdCoupling { mode, strength: 0.5 * eta * a_perp, selectivity: a_perp.abs() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::khz;
    use crate::linalg::{identity, max_abs, unitarity_defect, ONE};
    use proptest::prelude::*;

    /// Brute-force echo signal: P = ½ + Tr(U₊U₋† + U₋U₊†)/(4N), L = 2P − 1.
    fn brute_force(p: &SignalParams) -> f64 {
        let [x, _, z] = spin_ops(1);
        let ph = p.eta * p.a_parallel * p.tau;
        let rot = expm_hermitian(&x, p.theta_rf);
        let u = |s: f64| expm_hermitian(&z, -s * ph) * &rot * expm_hermitian(&z, s * ph);
        let (up, um) = (u(1.0), u(-1.0));
        let tr = (&up * um.adjoint() + &um * up.adjoint()).trace().re;
        let pnv = 0.5 + tr / 8.0;
        2.0 * pnv - 1.0
    }

    #[test]
    fn documented_values() {
        let p = SignalParams::new(khz(1.49), 1.0, 100e-6, PI);
        let l = single_spin_coherence(&p);
        assert!((l - p.phase().cos()).abs() < 1e-15);
        assert!((l - (-0.296)).abs() < 2e-3);
        assert!((l - brute_force(&p)).abs() < 1e-12);
        assert_eq!(single_spin_coherence(&SignalParams { theta_rf: 0.0, ..p }), 1.0);
    }

    #[test]
    fn multiplicity_floor() {
        let mut p = SignalParams::new(khz(5.0), 0.5, 0.0, PI);
        p.tau = PI / (2.0 * p.eta * p.a_parallel);
        assert!((single_spin_coherence(&p) + 1.0).abs() < 1e-12);
        p.p = 2;
        assert!((multi_spin_coherence(&[p]) - 1.0).abs() < 1e-12);
        let q = SignalParams { p: 1, tau: p.tau / 2.0, ..p };
        assert!(multi_spin_coherence(&[q, q]).abs() < 1e-12);
        let idle = SignalParams { theta_rf: 0.0, ..q };
        assert_eq!(multi_spin_coherence(&[q, idle]), single_spin_coherence(&q));
    }

    #[test]
    fn entangling_gate() {
        let (a, eta) = (khz(10.0), 1.0);
        let (up, um) = entangling_gate_phase(a, eta, 0.0);
        assert!(max_abs(&(up - identity(2))) < 1e-15 && max_abs(&(um - identity(2))) < 1e-15);
        let tau = 3.7e-6;
        let (up, um) = entangling_gate_phase(a, eta, tau);
        let [_, _, z] = spin_ops(1);
        assert!(max_abs(&(&up * um.adjoint() - expm_hermitian(&z, 4.0 * eta * tau * a))) < 1e-13);
        // |+⟩ ⊗ |x⟩ → electron coherence vanishes when 4ηA∥τ = π
        let tau = PI / (4.0 * eta * a);
        let g = controlled_gate(a, eta, tau);
        let h = 0.5;
        let psi = crate::linalg::CVec::from_vec(vec![C64::new(h, 0.0); 4]);
        let out = g * psi;
        let rho = &out * out.adjoint();
        let coh = rho[(2, 0)] + rho[(3, 1)];
        assert!(coh.norm() < 1e-14);
    }

    #[test]
    fn pair_formulas() {
        assert_eq!(type_h_pair_population(khz(3.0), 0.5, 0.0), 1.0);
        let a = khz(3.0);
        assert!((type_h_pair_population(a, 0.5, PI / a) - 0.5).abs() < 1e-15);
        let d = type_d_pair_predictions(khz(4.0), 1.0e7, 1e-4, 3e7, a, 0.5, 1e-5);
        assert!((d.splitting / khz(4.0) - 1.5).abs() < 1e-14);
        assert!((d.transitions.0 - d.transitions.1 - d.splitting).abs() < 1e-6);
        assert!((d.flip_time / d.single_flip_time - 1.0 / SQRT_2).abs() < 1e-14);
        let z = type_d_pair_predictions(0.0, 1.0e7, 1e-4, 3e7, a, 0.5, 1e-5);
        assert_eq!(z.transitions, (3e7, 3e7));
    }

    #[test]
    fn two_qubit_gates() {
        let g = ideal_two_qubit_gates();
        for u in [&g.u_zx, &g.u_zy, &g.u_zz, &g.u_xx, &g.u_yy, &g.iswap, &g.swap] {
            assert!(unitarity_defect(u) < 1e-14);
        }
        let mut perm = CMat::zeros(4, 4);
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            perm[(i, j)] = ONE;
        }
        assert!(max_abs(&(&g.swap - &perm)) < 1e-14);
        assert!((g.iswap[(1, 2)] - C64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((g.iswap[(2, 1)] - C64::new(0.0, 1.0)).norm() < 1e-14);
        assert!(g.iswap[(0, 1)].norm() < 1e-14);
        for (a, b) in [(&g.u_zz, &g.u_xx), (&g.u_zz, &g.u_yy), (&g.u_xx, &g.u_yy)] {
            assert!(max_abs(&(a * b - b * a)) < 1e-14);
        }
    }

    #[test]
    fn dd_coupling() {
        let z = dd_addressing_hamiltonian(0.0, 4.0 / PI, 0.5, DdMode::Pulsed);
        assert_eq!(z.strength, 0.0);
        assert!(z.iswap_time().is_none());
        let a = khz(20.0);
        let c = dd_addressing_hamiltonian(a, 4.0 / PI, 1.0, DdMode::Pulsed);
        assert!((c.strength - 0.5 * (4.0 / PI) * a).abs() < 1e-9);
        let h = dd_addressing_hamiltonian(a, 4.0 / PI, 0.5, DdMode::Pulsed);
        assert!((h.iswap_time().unwrap() - 2.0 * PI / (4.0 / PI * a)).abs() < 1e-15);
        assert!(h.is_isolated(0.0, 10.0 * h.selectivity, 5.0));
        assert!(!h.is_isolated(0.0, h.selectivity, 5.0));
        let cont = dd_addressing_hamiltonian(a, 1.0, 1.0, DdMode::Continuous);
        assert!((cont.strength - 0.5 * a).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn coherence_range_and_symmetry(
            a in -2e5f64..2e5,
            tau in 0.0f64..2e-4,
            theta in -7.0f64..7.0,
            eta_one in any::<bool>(),
        ) {
            let eta = if eta_one { 1.0 } else { 0.5 };
            let p = SignalParams::new(a, eta, tau, theta);
            let l = single_spin_coherence(&p);
            prop_assert!(l <= 1.0 + 1e-15);
            prop_assert!(l >= theta.cos() - 1e-15);
            let neg = SignalParams { theta_rf: -theta, ..p };
            let wrapped = SignalParams { theta_rf: theta + 2.0 * PI, ..p };
            prop_assert!((l - single_spin_coherence(&neg)).abs() < 1e-15);
            prop_assert!((l - single_spin_coherence(&wrapped)).abs() < 1e-12);
            // φ → 2π − φ
            let mirrored = SignalParams { tau: 0.0, ..p };
            let phi = p.phase();
            let l_phi = 0.5 * ((1.0 - theta.cos()) * phi.cos() + 1.0 + theta.cos());
            let l_mirror = 0.5 * ((1.0 - theta.cos()) * (2.0 * PI - phi).cos() + 1.0 + theta.cos());
            prop_assert!((l_phi - l_mirror).abs() < 1e-12);
            prop_assert!((single_spin_coherence(&mirrored) - 1.0).abs() < 1e-15);
            prop_assert!((l - brute_force(&p)).abs() < 1e-10);
        }
    }
}
