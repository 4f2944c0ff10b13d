use std::f64::consts::PI;

use echo_core::constants::khz;
use echo_core::dynamics::{simulate_coherence, EngineOptions, FrameMode, MemorySpec, SystemModel};
use echo_core::oracles::{single_spin_coherence, SignalParams};
use echo_core::schedule::{build_delayed_entanglement_echo, DelaySpec, EchoProtocol, RfTarget, SwapRealization};
use echo_core::spin_system::Vec3;
use echo_core::{PhysicalConstants, Species};

fn memory_protocol(tau: f64, down: i8, freq: f64, theta: f64, t_rf: f64) -> EchoProtocol {
    EchoProtocol {
        tau,
        interaction_down_level: down,
        window_cp_pulses: 0,
        delay: DelaySpec::MemorySwap {
            duration: t_rf,
            memory: 0,
            realization: SwapRealization::Ideal,
            illumination: None,
            nuclear_pi: None,
        },
        rf_targets: vec![RfTarget { frequency: freq, theta, phase: 0.0, species: Species::C13 }],
        final_pi: true,
    }
}

fn single_spin_system(a_par: f64, a_perp: f64, b_z: f64) -> SystemModel {
    let mut s = SystemModel::new(PhysicalConstants::default(), b_z);
    s.set_memory(&MemorySpec::ideal()).unwrap();
    s.push_nucleus(Species::C13, Vec3::new(0.8, 0.3, 0.5), Vec3::new(a_perp, 0.0, a_par));
    s
}

#[test]
fn rotating_frame_single_spin_matches_closed_form() {
    let c = PhysicalConstants::default();
    let b = 0.467;
    for &(eta, down) in &[(0.5, 0i8), (1.0, -1)] {
        for &a in &[khz(-12.0), khz(3.3), khz(21.0)] {
            for &tau in &[7e-6, 23e-6] {
                for &theta in &[0.0, 0.9, PI / 2.0, PI] {
                    let sys = single_spin_system(a, 0.0, b);
                    let freq = c.larmor(Species::C13, b) - a;
                    let sched = build_delayed_entanglement_echo(&memory_protocol(tau, down, freq, theta, 100e-6), &c)
                        .unwrap();
                    let (coh, rep) = simulate_coherence(&sys, &sched, None, &EngineOptions::default()).unwrap();
                    assert!(!rep.failed, "{:?}", rep.messages);
                    let expect = single_spin_coherence(&SignalParams::new(a, eta, tau, theta));
                    assert!(
                        (coh.signed - expect).abs() < 1e-8,
                        "eta={eta} a={a} tau={tau} theta={theta}: {} vs {expect}",
                        coh.signed
                    );
                }
            }
        }
    }
}

#[test]
fn lab_frame_single_spin_tracks_closed_form() {
    let c = PhysicalConstants::default();
    let b = 0.467;
    let opts = EngineOptions { mode: FrameMode::Lab, ..Default::default() };
    for &(eta, down) in &[(0.5, 0i8), (1.0, -1)] {
        for &theta in &[PI / 2.0, PI] {
            let (a, a_perp, tau) = (khz(14.0), khz(2.0), 15e-6);
            let sys = single_spin_system(a, a_perp, b);
            let freq = echo_core::dynamics::lab_precession(&c, Species::C13, &Vec3::new(a_perp, 0.0, a), b, 1);
            let sched =
                build_delayed_entanglement_echo(&memory_protocol(tau, down, freq, theta, 100e-6), &c).unwrap();
            let (coh, rep) = simulate_coherence(&sys, &sched, None, &opts).unwrap();
            assert!(!rep.failed, "{:?}", rep.messages);
            let expect = single_spin_coherence(&SignalParams::new(a, eta, tau, theta));
            assert!((coh.signed - expect).abs() < 1e-2, "eta={eta} theta={theta}: {} vs {expect}", coh.signed);
        }
    }
}
