//! Explicit SWAP between the electron qubit {+1, 0} and the nitrogen qubit
//! {+1_N, 0_N}.
//!
//! The gate is built as e^{−iπ/4} u_zz (P_x u_zz P_x†)(P_y u_zz P_y†). Each
//! u_zz is free evolution under the electron-nitrogen coupling. Each P_α is
//! an electron π/2 microwave pulse together with a two-tone nitrogen π/2 rf
//! pulse, protected by a two-pulse electron echo. The simulation uses the
//! electron frame rotating with the microwave carrier and keeps the nitrogen
//! in the laboratory frame, so every rf tone acts on the nitrogen whatever
//! the electron state.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::constants::{gauss, PhysicalConstants, Species};
use crate::dynamics::gate_fidelity;
use crate::error::{EchoError, Result};
use crate::linalg::{expm_hermitian, identity, real, spin_ops, CMat, C64, ZERO};
use crate::oracles::ideal_two_qubit_gates;
use crate::spin_system::nitrogen_virtual_shifts;

/// Electron levels (+1, 0, −1) and nitrogen levels (+1_N, 0_N, −1_N);
/// index = 3·e + n.
const DIM: usize = 9;
/// Qubit basis |+1,+1_N⟩, |+1,0_N⟩, |0,+1_N⟩, |0,0_N⟩.
const QUBIT: [usize; 4] = [0, 1, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapModel {
    pub b_z: f64,
    /// Microwave π pulse length (s).
    pub mw_pi_duration: f64,
    /// Amplitude of each rf tone (T).
    pub rf_amplitude: f64,
    /// Include the second-order A⊥ shifts h_m.
    pub virtual_shifts: bool,
    /// Include the ac Zeeman shift of the electron levels caused by the rf field.
    pub electron_rf_shift: bool,
    /// Finite microwave pulses; otherwise ideal instantaneous rotations.
    pub finite_mw_pulses: bool,
    /// Sampling step as a fraction of the fastest rf period.
    pub sampling_fraction: f64,
}

impl Default for SwapModel {
    fn default() -> Self {
        Self {
            b_z: 0.467,
            mw_pi_duration: 12.5e-9,
            rf_amplitude: gauss(15.53),
            virtual_shifts: true,
            electron_rf_shift: true,
            finite_mw_pulses: true,
            sampling_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    /// F in the qubit rotating frame without corrections.
    pub raw_fidelity: f64,
    /// F after optimal single-qubit phase corrections before and after the gate.
    pub fidelity: f64,
    /// Population leaving the qubit subspace, averaged over qubit inputs.
    pub leakage: f64,
    pub duration: f64,
    pub mw_pulses: usize,
    pub rf_pulse_duration: f64,
    /// Corrections (electron before, nitrogen before, electron after, nitrogen after).
    pub corrections: [f64; 4],
}

/// Energies and transition frequencies of the static electron-nitrogen Hamiltonian.
#[derive(Debug, Clone)]
struct Levels {
    /// Lab-frame diagonal energies, index 3·e + n.
    lab: [f64; DIM],
    /// Microwave carrier, centred between the two nitrogen-conditioned electron lines.
    omega_mw: f64,
    /// Nitrogen qubit transition E(+1_N) − E(0_N) in electron levels +1 and 0.
    omega_n: [f64; 2],
    /// Conditional splitting ω_n(+1) − ω_n(0).
    delta: f64,
}

fn levels(c: &PhysicalConstants, m: &SwapModel) -> Result<Levels> {
    let ms = [1.0, 0.0, -1.0];
    let mn = [1.0, 0.0, -1.0];
    let g_e = c.gamma_e;
    let g_n = c.gamma(Species::N14);
    let shifts = if m.virtual_shifts { Some(nitrogen_virtual_shifts(m.b_z, c)?) } else { None };
    let mut lab = [0.0; DIM];
    for e in 0..3 {
        for n in 0..3 {
            let s = ms[e];
            let i = mn[n];
            let mut en = c.zero_field_splitting * s * s - g_e * m.b_z * s + c.nitrogen_quadrupole * i * i
                - g_n * m.b_z * i
                + c.nitrogen_a_par * s * i;
            if let Some(h) = &shifts {
                en += h.for_level(s as i8)[n];
            }
            lab[3 * e + n] = en;
        }
    }
    let line = |n: usize| lab[n] - lab[3 + n];
    let omega_mw = 0.5 * (line(0) + line(1));
    let omega_n = [lab[0] - lab[1], lab[3] - lab[4]];
    Ok(Levels { lab, omega_mw, omega_n, delta: omega_n[0] - omega_n[1] })
}

#[derive(Debug, Clone, Copy)]
struct MwPulse {
    centre: f64,
    phase: f64,
    angle: f64,
}

#[derive(Debug, Clone, Copy)]
struct RfWindow {
    start: f64,
    end: f64,
    /// Lab phase of the tone resonant in electron level +1 and in level 0.
    phases: [f64; 2],
}

struct Sequence {
    mw: Vec<MwPulse>,
    rf: Vec<RfWindow>,
    duration: f64,
}

/// Builds the pulse sequence on the 2π/δ grid that keeps the nitrogen
/// rotations unconditional.
fn build_sequence(lv: &Levels, c: &PhysicalConstants, m: &SwapModel) -> Sequence {
    let g_n = c.gamma(Species::N14);
    // ⟨+1|I_x|0⟩ = 1/√2, rotating-wave Rabi frequency γ B_x/√2
    let rabi = g_n * m.rf_amplitude / 2f64.sqrt();
    let t_rf = FRAC_PI_2 / rabi;
    let grid = TAU / lv.delta.abs();
    // ZZ coefficient δ/4: exp(iπ/4 σ_zσ_z) needs −δ t/4 ≡ π/4
    let t_zz = if lv.delta < 0.0 { PI / lv.delta.abs() } else { 3.0 * PI / lv.delta.abs() };
    let mean_n = 0.5 * (lv.omega_n[0] + lv.omega_n[1]);

    // Tone phase giving rotation axis α at time t in the frame rotating at mean_n.
    let tone_phases = |alpha: f64, t: f64| -> [f64; 2] {
        std::array::from_fn(|k| {
            let w = lv.omega_n[k];
            let beta = alpha - (w - mean_n) * t;
            if w > 0.0 {
                beta - PI
            } else {
                PI - beta
            }
        })
    };

    let mut mw = Vec::new();
    let mut rf = Vec::new();
    let mut t = 0.0;
    let ceil_grid = |x: f64| (x / grid).ceil() * grid;
    // (axis, sign) for P_y, P_y†, P_x, P_x†
    let steps = [(FRAC_PI_2, 1.0), (FRAC_PI_2, -1.0), (0.0, 1.0), (0.0, -1.0)];
    for (k, &(axis, sign)) in steps.iter().enumerate() {
        let (phase, angle) = if sign > 0.0 { (axis, FRAC_PI_2) } else { (axis + PI, FRAC_PI_2) };
        mw.push(MwPulse { centre: t, phase, angle });
        rf.push(RfWindow { start: t, end: t + t_rf, phases: tone_phases(phase, t) });
        // Protected window of length 2b refocused by π pulses at a and a + b.
        // The first lies on the grid while the rf is on; the second follows
        // the rf. The window end must land on the grid (or half a ZZ gate
        // before it when a u_zz follows).
        let target = if k % 2 == 0 { (grid - t_zz % grid) % grid } else { 0.0 };
        let b_min = 0.5 * t_rf + grid;
        let half = 0.5 * grid;
        let b = 0.5 * target + ((b_min - 0.5 * target) / half).ceil() * half;
        let window = 2.0 * b;
        let a = ceil_grid(t_rf - b);
        mw.push(MwPulse { centre: t + a, phase: 0.0, angle: PI });
        mw.push(MwPulse { centre: t + a + b, phase: 0.0, angle: PI });
        t += window;
        if k % 2 == 0 {
            t += t_zz;
        }
    }
    t += t_zz;
    Sequence { mw, rf, duration: t }
}

struct Operators {
    /// Electron qubit operators on |+1⟩⟨0| within the 9-dim space.
    sigma_plus: CMat,
    nitrogen_x: CMat,
    diag_electron: [CMat; 3],
}

fn operators() -> Operators {
    let mut sp = CMat::zeros(3, 3);
    sp[(0, 1)] = real(1.0);
    let [ix, _, _] = spin_ops(2);
    let diag = std::array::from_fn(|l| {
        let mut p = CMat::zeros(3, 3);
        p[(l, l)] = real(1.0);
        p.kronecker(&identity(3))
    });
    Operators { sigma_plus: sp.kronecker(&identity(3)), nitrogen_x: identity(3).kronecker(&ix), diag_electron: diag }
}

/// Simulates the explicit SWAP and returns the 9 × 9 propagator in the qubit
/// frame (electron rotating with the carrier, nitrogen rotating at the mean
/// qubit frequency) together with the sequence duration.
fn simulate(c: &PhysicalConstants, m: &SwapModel) -> Result<(CMat, f64, usize, f64)> {
    if !(m.b_z > 0.0 && m.mw_pi_duration > 0.0 && m.rf_amplitude > 0.0) {
        return Err(EchoError::Domain("swap model needs positive field, pulse length and rf amplitude".into()));
    }
    let lv = levels(c, m)?;
    let seq = build_sequence(&lv, c, m);
    let u = run_sequence(c, m, &lv, &seq);
    let rf_len = seq.rf.first().map(|w| w.end - w.start).unwrap_or(0.0);
    Ok((u, seq.duration, seq.mw.len(), rf_len))
}

fn run_sequence(c: &PhysicalConstants, m: &SwapModel, lv: &Levels, seq: &Sequence) -> CMat {
    let ops = operators();
    let g_n = c.gamma(Species::N14);
    let omega_e = PI / m.mw_pi_duration;

    // static part in the simulation frame
    let mut h0 = CMat::zeros(DIM, DIM);
    for i in 0..DIM {
        let mut e = lv.lab[i];
        if i < 3 {
            e -= lv.omega_mw;
        }
        h0[(i, i)] = real(e);
    }
    // ac Zeeman coefficients per electron level, multiplying b(t)²
    let el = |e: usize| lv.lab[3 * e + 1];
    let stark = [0.5 / (el(0) - el(1)), 0.5 / (el(1) - el(0)) + 0.5 / (el(1) - el(2)), 0.5 / (el(2) - el(1))];

    let half = |p: &MwPulse| 0.5 * p.angle.abs() / omega_e;
    let mut marks = vec![0.0, seq.duration];
    for p in &seq.mw {
        if m.finite_mw_pulses {
            marks.push(p.centre - half(p));
            marks.push(p.centre + half(p));
        } else {
            marks.push(p.centre);
        }
    }
    for w in &seq.rf {
        marks.push(w.start);
        marks.push(w.end);
    }
    marks.sort_by(f64::total_cmp);
    marks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let mw_term = |p: &MwPulse| {
        let a = C64::from_polar(0.5 * omega_e, -p.phase);
        &ops.sigma_plus * a + ops.sigma_plus.adjoint() * a.conj()
    };
    let tones = [lv.omega_n[0].abs(), lv.omega_n[1].abs()];
    let dt_max = m.sampling_fraction * TAU / tones[0].max(tones[1]);

    let mut u = identity(DIM);
    let mut applied = vec![false; seq.mw.len()];
    for win in marks.windows(2) {
        let (t0, t1) = (win[0], win[1]);
        if !m.finite_mw_pulses {
            for (i, p) in seq.mw.iter().enumerate() {
                if !applied[i] && (p.centre - t0).abs() < 1e-15 {
                    u = expm_hermitian(&(mw_term(p) * real(1.0 / omega_e)), p.angle.abs()) * u;
                    applied[i] = true;
                }
            }
        }
        if t1 - t0 <= 0.0 {
            continue;
        }
        let mid = 0.5 * (t0 + t1);
        let mut hs = h0.clone();
        if m.finite_mw_pulses {
            for p in &seq.mw {
                if (p.centre - mid).abs() < half(p) {
                    hs += mw_term(p);
                }
            }
        }
        let rf_on: Vec<&RfWindow> = seq.rf.iter().filter(|w| w.start <= mid && mid < w.end).collect();
        if rf_on.is_empty() {
            u = expm_hermitian(&hs, t1 - t0) * u;
            continue;
        }
        let n = ((t1 - t0) / dt_max).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        for s in 0..n {
            let t = t0 + (s as f64 + 0.5) * h;
            let mut b = 0.0;
            for w in &rf_on {
                for k in 0..2 {
                    b += m.rf_amplitude * (tones[k] * t + w.phases[k]).cos();
                }
            }
            let mut ht = hs.clone() - &ops.nitrogen_x * real(g_n * b);
            if m.electron_rf_shift {
                let be = c.gamma_e * b;
                for l in 0..3 {
                    ht += &ops.diag_electron[l] * real(stark[l] * be * be);
                }
            }
            u = expm_hermitian(&ht, h) * u;
        }
    }
    if !m.finite_mw_pulses {
        for (i, p) in seq.mw.iter().enumerate() {
            if !applied[i] {
                u = expm_hermitian(&(mw_term(p) * real(1.0 / omega_e)), p.angle.abs()) * u;
            }
        }
    }
    // simulation frame → qubit frame; the whole sequence runs on [start, duration]
    // simulation frame → qubit frame, referenced to t = 0
    let mean_n = 0.5 * (lv.omega_n[0] + lv.omega_n[1]);
    let mut frame = identity(DIM);
    for e in 0..3 {
        frame[(3 * e, 3 * e)] = C64::from_polar(1.0, mean_n * seq.duration);
    }
    frame * u
}

fn project(u: &CMat) -> CMat {
    CMat::from_fn(4, 4, |i, j| u[(QUBIT[i], QUBIT[j])])
}

/// diag(1, e^{iθ}) on one qubit of the 2-qubit register.
fn local_phase(electron: f64, nitrogen: f64) -> CMat {
    let e = [C64::from_polar(1.0, 0.0), C64::from_polar(1.0, electron)];
    let n = [C64::from_polar(1.0, 0.0), C64::from_polar(1.0, nitrogen)];
    CMat::from_fn(4, 4, |i, j| if i == j { e[i / 2] * n[i % 2] } else { ZERO })
}

/// Coordinate ascent over the four correction phases; each sub-problem
/// |α + β e^{iθ}| has a closed-form maximiser.
fn optimise_corrections(g: &CMat, u: &CMat) -> [f64; 4] {
    let mut x = [0.0; 4];
    let value = |x: &[f64; 4]| {
        let pre = local_phase(x[0], x[1]);
        let post = local_phase(x[2], x[3]);
        (g.adjoint() * post * u * pre).trace()
    };
    for _ in 0..200 {
        let before = value(&x).norm();
        for k in 0..4 {
            let mut a = x;
            a[k] = 0.0;
            let v0 = value(&a);
            a[k] = FRAC_PI_2;
            let v1 = value(&a);
            // value(θ) = α + β e^{iθ}: v0 = α + β, v1 = α + iβ
            let beta = (v0 - v1) / C64::new(1.0, -1.0);
            let alpha = v0 - beta;
            x[k] = if beta.norm() > 0.0 { alpha.arg() - beta.arg() } else { x[k] };
        }
        if (value(&x).norm() - before).abs() < 1e-15 {
            break;
        }
    }
    x
}

fn corrected(u4: &CMat, x: &[f64; 4]) -> CMat {
    local_phase(x[2], x[3]) * u4 * local_phase(x[0], x[1])
}

/// Simulates the explicit SWAP and compares it with the ideal gate.
pub fn swap_fidelity(c: &PhysicalConstants, m: &SwapModel) -> Result<SwapReport> {
    let (u, duration, mw_pulses, rf_len) = simulate(c, m)?;
    let g = ideal_two_qubit_gates().swap;
    let u4 = project(&u);
    let raw = gate_fidelity(&g, &u4)?;
    let x = optimise_corrections(&g, &u4);
    let fidelity = gate_fidelity(&g, &corrected(&u4, &x))?;
    let kept: f64 = (0..4).map(|j| (0..4).map(|i| u4[(i, j)].norm_sqr()).sum::<f64>()).sum::<f64>() / 4.0;
    Ok(SwapReport {
        raw_fidelity: raw,
        fidelity,
        leakage: 1.0 - kept,
        duration,
        mw_pulses,
        rf_pulse_duration: rf_len,
        corrections: x,
    })
}

/// Ideal gate implemented by [`swap_fidelity`], as a 4 × 4 matrix.
pub fn ideal_swap_gate() -> CMat {
    ideal_two_qubit_gates().swap
}

fn cache() -> &'static Mutex<HashMap<u64, CMat>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, CMat>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Corrected 9 × 9 SWAP operator (electron ⊗ nitrogen, engine ordering) for
/// the default pulse parameters at field `b_z`.
pub fn explicit_swap_operator(c: &PhysicalConstants, b_z: f64) -> Result<CMat> {
    let key = b_z.to_bits() ^ c.nitrogen_a_par.to_bits().rotate_left(17) ^ c.nitrogen_a_perp.to_bits().rotate_left(31);
    if let Some(u) = cache().lock().expect("swap cache").get(&key) {
        return Ok(u.clone());
    }
    let m = SwapModel { b_z, ..Default::default() };
    let (u, ..) = simulate(c, &m)?;
    let g = ideal_two_qubit_gates().swap;
    let x = optimise_corrections(&g, &project(&u));
    let embed = |e: f64, n: f64| {
        let mut d = identity(DIM);
        let pe = C64::from_polar(1.0, e);
        let pn = C64::from_polar(1.0, n);
        // qubit |1⟩ ≡ second level (0 for the electron, 0_N for nitrogen)
        for i in 0..3 {
            for j in 0..3 {
                let mut z = real(1.0);
                if i == 1 {
                    z *= pe;
                }
                if j == 1 {
                    z *= pn;
                }
                d[(3 * i + j, 3 * i + j)] = z;
            }
        }
        d
    };
    let out = embed(x[2], x[3]) * u * embed(x[0], x[1]);
    // remove the global phase relative to the ideal gate on the qubit block
    let tr = (g.adjoint() * project(&out)).trace();
    let out = out * C64::from_polar(1.0, -tr.arg());
    cache().lock().expect("swap cache").insert(key, out.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_splitting_is_hyperfine_dominated() {
        let c = PhysicalConstants::default();
        let lv = levels(&c, &SwapModel::default()).unwrap();
        assert!((lv.delta / c.nitrogen_a_par - 1.0).abs() < 0.05);
        // u_zz duration ≈ 0.23 μs
        assert!((PI / lv.delta.abs() - 0.23e-6).abs() < 0.01e-6);
    }

    #[test]
    fn corrections_recover_phased_gate() {
        let g = ideal_swap_gate();
        let u = local_phase(0.3, -1.1) * &g * local_phase(0.7, 0.2) * C64::from_polar(1.0, 0.4);
        let x = optimise_corrections(&g, &u);
        assert!((gate_fidelity(&g, &corrected(&u, &x)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn instantaneous_pulses_without_shifts_give_near_ideal_swap() {
        let c = PhysicalConstants::default();
        let m = SwapModel { finite_mw_pulses: false, electron_rf_shift: false, ..Default::default() };
        let r = swap_fidelity(&c, &m).unwrap();
        assert!(r.fidelity > 0.9999, "{r:?}");
        assert!(r.leakage < 1e-4);
    }

    #[test]
    fn protected_window_is_a_local_rotation_pair() {
        let c = PhysicalConstants::default();
        let m = SwapModel { finite_mw_pulses: false, electron_rf_shift: false, ..Default::default() };
        let lv = levels(&c, &m).unwrap();
        let full = build_sequence(&lv, &c, &m);
        // first P_y window: π/2 pulse, two echo pulses, rf
        let end = full.mw[3].centre - PI / lv.delta.abs();
        let seq = Sequence { mw: full.mw[..3].to_vec(), rf: vec![full.rf[0]], duration: end };
        let u = project(&run_sequence(&c, &m, &lv, &seq));
        let r = expm_hermitian(&crate::linalg::paulis()[1], FRAC_PI_2 / 2.0);
        let g = r.kronecker(&r);
        let x = optimise_corrections(&g, &u);
        assert!(gate_fidelity(&g, &corrected(&u, &x)).unwrap() > 0.9999);
    }
}
