//! Control schedules: instantaneous pulses, continuous drives, frame
//! transfers, memory swaps and illumination windows, with builders for CP,
//! AXY, Lee-Goldburg and the delayed entanglement echo, plus modulation
//! function analysis.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, Species};
use crate::error::{domain, EchoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseTarget {
    Electron,
    /// All non-memory nuclei of one species.
    Nuclear(Species),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapDirection {
    Store,
    Retrieve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapRealization {
    Ideal,
    Explicit,
}

/// Phenomenological optical pumping during an illumination window (rates in 1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationRates {
    /// Pumping from m_s = ±1 into m_s = 0.
    pub pump: f64,
    /// Leakage from m_s = 0 into each of m_s = ±1.
    pub depolarization: f64,
    /// Pure dephasing of the electron.
    pub dephasing: f64,
}

impl IlluminationRates {
    /// Rates whose steady-state |0⟩ population equals `fidelity`.
    pub fn with_fidelity(pump: f64, fidelity: f64, dephasing: f64) -> Result<Self> {
        if !(fidelity > 0.0 && fidelity <= 1.0) || pump < 0.0 || dephasing < 0.0 {
            return domain("illumination fidelity must lie in (0, 1] and rates must be non-negative");
        }
        // P0 = k / (k + 2 k_d)
        let depolarization = pump * (1.0 - fidelity) / (2.0 * fidelity);
        Ok(Self { pump, depolarization, dephasing })
    }

    pub fn steady_state_zero_population(&self) -> f64 {
        self.pump / (self.pump + 2.0 * self.depolarization)
    }
}

impl Default for IlluminationRates {
    fn default() -> Self {
        Self::with_fidelity(1e6, 0.82, 1e7).expect("valid defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlKind {
    InstantPulse { target: PulseTarget, phase: f64, angle: f64 },
    /// Lab-frame field B_x cos(ω t − φ) along x̂ acting on one species.
    RfDrive { frequency: f64, amplitude: f64, phase: f64, species: Species, end: f64 },
    /// Off-resonant drive at ω_L + Δ with Rabi frequency √2 Δ.
    LgField { delta: f64, species: Species, end: f64, always_on: bool },
    /// Continuous resonant drive of the electron qubit with Rabi frequency Ω_e.
    SpinLock { omega_e: f64, end: f64 },
    /// Swaps |0⟩ and |−1⟩ so that the qubit's lower level becomes `down_level`.
    ManifoldTransfer { down_level: i8 },
    SwapGate { memory: usize, direction: SwapDirection, realization: SwapRealization },
    Illumination { rates: IlluminationRates, end: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEvent {
    /// Event time, or window start (s).
    pub time: f64,
    pub kind: ControlKind,
}

impl ControlEvent {
    pub fn new(time: f64, kind: ControlKind) -> Self {
        Self { time, kind }
    }

    pub fn pulse(time: f64, target: PulseTarget, phase: f64, angle: f64) -> Self {
        Self::new(time, ControlKind::InstantPulse { target, phase, angle })
    }

    pub fn electron_pi(time: f64, phase: f64) -> Self {
        Self::pulse(time, PulseTarget::Electron, phase, PI)
    }

    /// End of the window for continuous events.
    pub fn end(&self) -> Option<f64> {
        match self.kind {
            ControlKind::RfDrive { end, .. }
            | ControlKind::LgField { end, .. }
            | ControlKind::SpinLock { end, .. }
            | ControlKind::Illumination { end, .. } => Some(end),
            _ => None,
        }
    }

    pub fn is_instant(&self) -> bool {
        self.end().is_none()
    }

    /// Whether a continuous event is active during (t0, t1).
    pub fn active_over(&self, t0: f64, t1: f64) -> bool {
        match self.end() {
            Some(end) => self.time <= t0 && end >= t1 && end > self.time,
            None => false,
        }
    }

    /// Ordering among coincident events: retrieve swaps, then frame
    /// transfers, pulses, store swaps and finally window edges.
    pub fn priority(&self) -> u8 {
        match self.kind {
            ControlKind::SwapGate { direction: SwapDirection::Retrieve, .. } => 0,
            ControlKind::ManifoldTransfer { .. } => 1,
            ControlKind::InstantPulse { .. } => 2,
            ControlKind::SwapGate { direction: SwapDirection::Store, .. } => 3,
            _ => 4,
        }
    }

    pub fn is_electron_pi(&self) -> bool {
        match self.kind {
            ControlKind::InstantPulse { target: PulseTarget::Electron, angle, .. } => {
                ((angle.rem_euclid(TAU)) - PI).abs() < 1e-9
            }
            _ => false,
        }
    }
}

/// Layout of a delayed entanglement echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoStructure {
    pub windows: [(f64, f64); 2],
    pub delay: (f64, f64),
    pub echo_pulses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub events: Vec<ControlEvent>,
    pub total_duration: f64,
    /// Lower qubit level (0 or −1) of the electron at t = 0.
    pub initial_down_level: i8,
    pub structure: Option<EchoStructure>,
    /// (start, period) of a periodic decoupling sequence.
    pub dd_period: Option<(f64, f64)>,
}

impl ControlSchedule {
    pub fn new(total_duration: f64, initial_down_level: i8) -> Self {
        Self { events: Vec::new(), total_duration, initial_down_level, structure: None, dd_period: None }
    }

    pub fn push(&mut self, event: ControlEvent) {
        self.events.push(event);
        self.sort();
    }

    /// Appends another schedule's events; the duration grows to cover both.
    pub fn merge(&mut self, other: &ControlSchedule) {
        self.events.extend(other.events.iter().cloned());
        self.total_duration = self.total_duration.max(other.total_duration);
        self.sort();
    }

    fn sort(&mut self) {
        self.events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.priority().cmp(&b.priority())));
    }

    pub fn electron_pi_times(&self) -> Vec<f64> {
        self.events.iter().filter(|e| e.is_electron_pi()).map(|e| e.time).collect()
    }

    /// Instants where the generator may change: event times, window edges
    /// and the schedule end.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t: Vec<f64> = vec![0.0, self.total_duration];
        for e in &self.events {
            t.push(e.time);
            if let Some(end) = e.end() {
                t.push(end);
            }
        }
        t.retain(|x| *x >= 0.0 && *x <= self.total_duration);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EchoError::Validation(m));
        if !(self.total_duration >= 0.0 && self.total_duration.is_finite()) {
            return bad("total duration must be finite and non-negative".into());
        }
        if !matches!(self.initial_down_level, 0 | -1) {
            return bad(format!("initial down level {} is not 0 or -1", self.initial_down_level));
        }
        let slack = 1e-12 * self.total_duration.max(1e-9);
        for (i, e) in self.events.iter().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 || e.time > self.total_duration + slack {
                return bad(format!("event {i} at t = {} lies outside [0, {}]", e.time, self.total_duration));
            }
            if let Some(end) = e.end() {
                if !(end >= e.time) || end > self.total_duration + slack {
                    return bad(format!("event {i} has an invalid window [{}, {end}]", e.time));
                }
            }
            if let ControlKind::ManifoldTransfer { down_level } = e.kind {
                if !matches!(down_level, 0 | -1) {
                    return bad(format!("event {i} transfers to level {down_level}"));
                }
            }
            if i > 0 {
                let p = &self.events[i - 1];
                if (p.time, p.priority()) > (e.time, e.priority()) {
                    return bad(format!("events {} and {i} are out of order", i - 1));
                }
            }
        }
        if let Some(s) = &self.structure {
            let [(a0, a1), (b0, b1)] = s.windows;
            let (la, lb) = (a1 - a0, b1 - b0);
            if !(la >= 0.0 && lb >= 0.0) || (la - lb).abs() > 1e-12 * la.max(b1.abs()).max(1e-15) {
                return bad(format!("interaction windows differ: {la} vs {lb}"));
            }
            if !(a1 <= s.delay.0 + slack && s.delay.1 <= b0 + slack) {
                return bad("delay window must sit between the interaction windows".into());
            }
        }
        Ok(())
    }

    /// Event table in a line-oriented text format that parses back to an
    /// identical schedule.
    pub fn to_text(&self) -> String {
        let mut s = String::from("schedule v1\n");
        let _ = writeln!(s, "duration {}", self.total_duration);
        let _ = writeln!(s, "initial_down {}", self.initial_down_level);
        if let Some((a, b)) = self.dd_period {
            let _ = writeln!(s, "period {a} {b}");
        }
        if let Some(st) = &self.structure {
            let [(a, b), (c, d)] = st.windows;
            let _ = write!(s, "structure {a} {b} {c} {d} {} {}", st.delay.0, st.delay.1);
            for t in &st.echo_pulses {
                let _ = write!(s, " {t}");
            }
            s.push('\n');
        }
        for e in &self.events {
            let t = e.time;
            let _ = match &e.kind {
                ControlKind::InstantPulse { target, phase, angle } => {
                    writeln!(s, "pulse {t} {} {phase} {angle}", TargetLabel(*target))
                }
                ControlKind::RfDrive { frequency, amplitude, phase, species, end } => {
                    writeln!(s, "rf {t} {end} {frequency} {amplitude} {phase} {species}")
                }
                ControlKind::LgField { delta, species, end, always_on } => {
                    writeln!(s, "lg {t} {end} {delta} {species} {}", u8::from(*always_on))
                }
                ControlKind::SpinLock { omega_e, end } => writeln!(s, "spinlock {t} {end} {omega_e}"),
                ControlKind::ManifoldTransfer { down_level } => writeln!(s, "transfer {t} {down_level}"),
                ControlKind::SwapGate { memory, direction, realization } => writeln!(
                    s,
                    "swap {t} {memory} {} {}",
                    match direction {
                        SwapDirection::Store => "store",
                        SwapDirection::Retrieve => "retrieve",
                    },
                    match realization {
                        SwapRealization::Ideal => "ideal",
                        SwapRealization::Explicit => "explicit",
                    }
                ),
                ControlKind::Illumination { rates, end } => writeln!(
                    s,
                    "illumination {t} {end} {} {} {}",
                    rates.pump, rates.depolarization, rates.dephasing
                ),
            };
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut out = ControlSchedule::new(0.0, -1);
        let mut seen_header = false;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |m: &str| EchoError::Parse { line: line_no, message: m.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i).ok_or_else(|| perr("missing field"))?.parse::<f64>().map_err(|e| perr(&e.to_string()))
            };
            let need = |k: usize| if f.len() == k { Ok(()) } else { Err(perr(&format!("expected {k} fields"))) };
            if !seen_header {
                if line != "schedule v1" {
                    return Err(perr("missing 'schedule v1' header"));
                }
                seen_header = true;
                continue;
            }
            match f[0] {
                "duration" => {
                    need(2)?;
                    out.total_duration = num(1)?;
                }
                "initial_down" => {
                    need(2)?;
                    out.initial_down_level = f[1].parse().map_err(|_| perr("bad level"))?;
                }
                "period" => {
                    need(3)?;
                    out.dd_period = Some((num(1)?, num(2)?));
                }
                "structure" => {
                    if f.len() < 7 {
                        return Err(perr("structure needs at least 6 times"));
                    }
                    let echo = (7..f.len()).map(num).collect::<Result<Vec<_>>>()?;
                    out.structure = Some(EchoStructure {
                        windows: [(num(1)?, num(2)?), (num(3)?, num(4)?)],
                        delay: (num(5)?, num(6)?),
                        echo_pulses: echo,
                    });
                }
                "pulse" => {
                    need(5)?;
                    let target = f[2].parse::<TargetLabel>().map_err(|e| perr(&e.to_string()))?.0;
                    out.events.push(ControlEvent::pulse(num(1)?, target, num(3)?, num(4)?));
                }
                "rf" => {
                    need(7)?;
                    let species = f[6].parse().map_err(|e: EchoError| perr(&e.to_string()))?;
                    out.events.push(ControlEvent::new(
                        num(1)?,
                        ControlKind::RfDrive {
                            frequency: num(3)?,
                            amplitude: num(4)?,
                            phase: num(5)?,
                            species,
                            end: num(2)?,
                        },
                    ));
                }
                "lg" => {
                    need(6)?;
                    let species = f[4].parse().map_err(|e: EchoError| perr(&e.to_string()))?;
                    let always_on = match f[5] {
                        "1" => true,
                        "0" => false,
                        _ => return Err(perr("always_on flag must be 0 or 1")),
                    };
                    out.events.push(ControlEvent::new(
                        num(1)?,
                        ControlKind::LgField { delta: num(3)?, species, end: num(2)?, always_on },
                    ));
                }
                "spinlock" => {
                    need(4)?;
                    out.events.push(ControlEvent::new(num(1)?, ControlKind::SpinLock { omega_e: num(3)?, end: num(2)? }));
                }
                "transfer" => {
                    need(3)?;
                    let down_level = f[2].parse().map_err(|_| perr("bad level"))?;
                    out.events.push(ControlEvent::new(num(1)?, ControlKind::ManifoldTransfer { down_level }));
                }
                "swap" => {
                    need(5)?;
                    let memory = f[2].parse().map_err(|_| perr("bad memory index"))?;
                    let direction = match f[3] {
                        "store" => SwapDirection::Store,
                        "retrieve" => SwapDirection::Retrieve,
                        _ => return Err(perr("swap direction must be store or retrieve")),
                    };
                    let realization = match f[4] {
                        "ideal" => SwapRealization::Ideal,
                        "explicit" => SwapRealization::Explicit,
                        _ => return Err(perr("swap realization must be ideal or explicit")),
                    };
                    out.events.push(ControlEvent::new(
                        num(1)?,
                        ControlKind::SwapGate { memory, direction, realization },
                    ));
                }
                "illumination" => {
                    need(6)?;
                    let rates = IlluminationRates { pump: num(3)?, depolarization: num(4)?, dephasing: num(5)? };
                    out.events.push(ControlEvent::new(num(1)?, ControlKind::Illumination { rates, end: num(2)? }));
                }
                other => return Err(perr(&format!("unknown record '{other}'"))),
            }
        }
        if !seen_header {
            return Err(EchoError::Parse { line: 0, message: "empty schedule".into() });
        }
        out.sort();
        out.validate()?;
        Ok(out)
    }
}

struct TargetLabel(PulseTarget);

impl fmt::Display for TargetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            PulseTarget::Electron => f.write_str("electron"),
            PulseTarget::Nuclear(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for TargetLabel {
    type Err = EchoError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "electron" {
            Ok(Self(PulseTarget::Electron))
        } else {
            Ok(Self(PulseTarget::Nuclear(s.parse()?)))
        }
    }
}

/// CP fragment: n electron π pulses at start + (k − ½)τ_CP.
pub fn build_cp(n_pulses: usize, tau_cp: f64, start: f64) -> Result<ControlSchedule> {
    if n_pulses == 0 || !(tau_cp > 0.0) {
        return domain("CP needs at least one pulse and a positive spacing");
    }
    let mut s = ControlSchedule::new(start + n_pulses as f64 * tau_cp, -1);
    for k in 1..=n_pulses {
        s.events.push(ControlEvent::electron_pi(start + (k as f64 - 0.5) * tau_cp, 0.0));
    }
    s.dd_period = Some((start, 2.0 * tau_cp));
    Ok(s)
}

/// ω_DD = π/τ_CP.
pub fn cp_omega(tau_cp: f64) -> f64 {
    PI / tau_cp
}

/// (−1)^(number of electron π pulses strictly before t).
pub fn modulation_function(schedule: &ControlSchedule, t: f64) -> f64 {
    let n = schedule.events.iter().filter(|e| e.is_electron_pi() && e.time < t).count();
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Closed-form Fourier coefficients (f_k^s, f_k^a) of the modulation
/// function over one period, with the time origin at the period start.
pub fn fourier_coefficients(schedule: &ControlSchedule, k: u32) -> Result<(f64, f64)> {
    let Some((start, period)) = schedule.dd_period else {
        return domain("schedule has no declared decoupling period");
    };
    if k == 0 {
        return domain("harmonic index must be positive");
    }
    let pulses = schedule.electron_pi_times();
    let one = period_pulses(&pulses, start, period)?;
    let w = TAU / period * k as f64;
    let mut f = 1.0;
    let (mut fs, mut fa) = (0.0, 0.0);
    for t in &one {
        let jump = -2.0 * f;
        fs -= jump * (w * (t - start)).sin();
        fa += jump * (w * (t - start)).cos();
        f = -f;
    }
    let norm = k as f64 * PI;
    Ok((fs / norm, fa / norm))
}

fn period_pulses(pulses: &[f64], start: f64, period: f64) -> Result<Vec<f64>> {
    let tol = 1e-9 * period;
    let first: Vec<f64> = pulses.iter().copied().filter(|t| *t >= start - tol && *t < start + period - tol).collect();
    if first.len() % 2 != 0 {
        return domain("odd number of π pulses per period: modulation function is not periodic");
    }
    let n_periods = pulses.iter().filter(|t| **t >= start - tol).count() / first.len().max(1);
    for p in 1..n_periods {
        let base = start + p as f64 * period;
        let these: Vec<f64> =
            pulses.iter().copied().filter(|t| *t >= base - tol && *t < base + period - tol).collect();
        if these.len() != first.len()
            || these.iter().zip(&first).any(|(a, b)| ((a - base) - (b - start)).abs() > tol)
        {
            return domain("pulse pattern does not repeat with the declared period");
        }
    }
    Ok(first)
}

/// Parameters of an AXY sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxySpec {
    /// Addressed harmonic.
    pub k_dd: u32,
    /// Target coefficient: f_k^s when `symmetric`, else f_k^a.
    pub coefficient: f64,
    pub symmetric: bool,
    pub periods: usize,
    pub period: f64,
    pub start: f64,
}

const AXY_PHASES: [f64; 5] = [PI / 6.0, 0.0, FRAC_PI_2, 0.0, PI / 6.0];

/// Offsets (a, b) of the outer pulses of each composite block that realise
/// `coefficient` at harmonic `k`, in units of the period.
pub fn axy_offsets(k: u32, coefficient: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return domain("harmonic index must be positive");
    }
    let kf = k as f64;
    let s = (kf * FRAC_PI_2).sin();
    let target_g = if s.abs() < 1e-12 {
        if coefficient.abs() > 1e-12 {
            return domain(format!("even harmonic {k} cannot carry a non-zero coefficient"));
        }
        0.0
    } else {
        coefficient * kf * PI / (4.0 * s)
    };
    let tol = 1e-12;
    let (g, hi, doubled): (fn(f64) -> f64, f64, bool) = if k >= 4 {
        (|t: f64| 1.0 - 4.0 * t.cos(), PI, false)
    } else {
        (|t: f64| 1.0 - 2.0 * t.cos() + 2.0 * (2.0 * t).cos(), 0.25f64.acos().min(kf * PI / 4.0 * (1.0 - 1e-9)), true)
    };
    let lo = if doubled { 0.0 } else { 1e-9 };
    let (g_lo, g_hi) = (g(lo), g(hi));
    let (gmin, gmax) = (g_lo.min(g_hi), g_lo.max(g_hi));
    if target_g < gmin - tol || target_g > gmax + tol {
        return domain(format!("coefficient {coefficient} is unreachable at harmonic {k}"));
    }
    let increasing = g_hi > g_lo;
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if (g(m) < target_g) == increasing {
            a = m;
        } else {
            b = m;
        }
    }
    let theta1 = 0.5 * (a + b);
    let theta2 = if doubled { 2.0 * theta1 } else { theta1 + PI };
    let scale = 1.0 / (TAU * kf);
    Ok((theta1 * scale, theta2 * scale))
}

/// AXY sequence of 5-pulse composite blocks centred at T/4 and 3T/4 of every period.
pub fn build_axy(spec: &AxySpec) -> Result<ControlSchedule> {
    if spec.periods == 0 || !(spec.period > 0.0) {
        return domain("AXY needs at least one period of positive length");
    }
    let (a, b) = axy_offsets(spec.k_dd, spec.coefficient)?;
    let t = spec.period;
    let shift = if spec.symmetric { 0.0 } else { t / (4.0 * spec.k_dd as f64) };
    let offsets = [-b * t, -a * t, 0.0, a * t, b * t];
    let mut s = ControlSchedule::new(spec.start + spec.periods as f64 * t, -1);
    for p in 0..spec.periods {
        let base = spec.start + p as f64 * t + shift;
        for (block, centre) in [(0, 0.25), (1, 0.75)] {
            for (o, ph) in offsets.iter().zip(AXY_PHASES) {
                let phase = ph + block as f64 * FRAC_PI_2;
                s.events.push(ControlEvent::electron_pi(base + centre * t + o, phase));
            }
        }
    }
    s.sort();
    s.dd_period = Some((spec.start, t));
    Ok(s)
}

/// θ_rf = (γ B_x / 2) t_rf.
pub fn rf_rotation_angle(amplitude: f64, gamma: f64, t_rf: f64) -> f64 {
    0.5 * gamma * amplitude * t_rf
}

/// Field amplitude giving rotation `theta` in time `t_rf`.
pub fn rf_amplitude_for_angle(theta: f64, gamma: f64, t_rf: f64) -> f64 {
    2.0 * theta / (gamma * t_rf)
}

/// Lee-Goldburg drive event over [t0, t1].
pub fn build_lg(delta: f64, t0: f64, t1: f64, species: Species) -> Result<ControlEvent> {
    if !(delta > 0.0) {
        return domain("LG detuning must be positive");
    }
    if !(t1 >= t0) {
        return domain("LG window must have non-negative length");
    }
    Ok(ControlEvent::new(t0, ControlKind::LgField { delta, species, end: t1, always_on: true }))
}

/// Rabi frequency √2 Δ of an LG drive.
pub fn lg_rabi(delta: f64) -> f64 {
    2f64.sqrt() * delta
}

/// Field amplitude of an LG drive, from Rabi = γ B_x / 2.
pub fn lg_amplitude(delta: f64, gamma: f64) -> f64 {
    2.0 * lg_rabi(delta) / gamma
}

/// √2 Δ ≥ 10 |d|.
pub fn lg_suppression_regime(delta: f64, d: f64) -> bool {
    lg_rabi(delta) >= 10.0 * d.abs()
}

/// A nuclear transition driven during the delay window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfTarget {
    pub frequency: f64,
    pub theta: f64,
    pub phase: f64,
    pub species: Species,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DelaySpec {
    /// Electron stays in {+1, down_level} under CP while the rf drive runs.
    DdProtected { duration: f64, n_pulses: usize, down_level: i8 },
    /// Electron coherence parked in a memory; the electron sits in |+1⟩.
    MemorySwap {
        duration: f64,
        memory: usize,
        realization: SwapRealization,
        illumination: Option<IlluminationRates>,
        /// Two nuclear π pulses at a quarter and three quarters of the delay.
        nuclear_pi: Option<Species>,
    },
}

impl DelaySpec {
    pub fn duration(&self) -> f64 {
        match self {
            DelaySpec::DdProtected { duration, .. } | DelaySpec::MemorySwap { duration, .. } => *duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoProtocol {
    pub tau: f64,
    pub interaction_down_level: i8,
    /// CP pulses inside each interaction window (0 for free evolution).
    pub window_cp_pulses: usize,
    pub delay: DelaySpec,
    pub rf_targets: Vec<RfTarget>,
    pub final_pi: bool,
}

/// Interaction window τ, delay window, echo π, second window τ.
pub fn build_delayed_entanglement_echo(p: &EchoProtocol, constants: &PhysicalConstants) -> Result<ControlSchedule> {
    let invalid = |m: &str| Err(EchoError::Validation(m.to_string()));
    if !(p.tau > 0.0 && p.tau.is_finite()) {
        return invalid("interaction time must be positive");
    }
    if !matches!(p.interaction_down_level, 0 | -1) {
        return invalid("interaction manifold must use m_s = 0 or -1 as its lower level");
    }
    if p.window_cp_pulses % 2 != 0 {
        return invalid("an odd CP count inside the interaction windows leaves the echo unbalanced");
    }
    let t_rf = p.delay.duration();
    if !(t_rf >= 0.0 && t_rf.is_finite()) {
        return invalid("delay duration must be non-negative");
    }
    if !p.rf_targets.is_empty() && !(t_rf > 0.0) {
        return invalid("rf targets need a delay window of positive length");
    }
    let (tau, down) = (p.tau, p.interaction_down_level);
    let (d0, d1) = (tau, tau + t_rf);
    let total = 2.0 * tau + t_rf;
    let mut s = ControlSchedule::new(total, down);

    for w0 in [0.0, d1] {
        if p.window_cp_pulses > 0 {
            s.merge(&build_cp(p.window_cp_pulses, tau / p.window_cp_pulses as f64, w0)?);
        }
    }
    s.dd_period = None;
    s.total_duration = total;

    match &p.delay {
        DelaySpec::DdProtected { n_pulses, down_level, .. } => {
            if !matches!(down_level, 0 | -1) {
                return invalid("delay manifold must use m_s = 0 or -1 as its lower level");
            }
            if n_pulses % 2 != 0 {
                return invalid("an odd CP count in the delay window leaves the electron flipped");
            }
            if *down_level != down {
                s.events.push(ControlEvent::new(d0, ControlKind::ManifoldTransfer { down_level: *down_level }));
                s.events.push(ControlEvent::new(d1, ControlKind::ManifoldTransfer { down_level: down }));
            }
            if *n_pulses > 0 {
                s.merge(&build_cp(*n_pulses, t_rf / *n_pulses as f64, d0)?);
            }
        }
        DelaySpec::MemorySwap { memory, realization, illumination, nuclear_pi, .. } => {
            if down != 0 {
                s.events.push(ControlEvent::new(d0, ControlKind::ManifoldTransfer { down_level: 0 }));
                s.events.push(ControlEvent::new(d1, ControlKind::ManifoldTransfer { down_level: down }));
            }
            let swap = |direction| ControlKind::SwapGate { memory: *memory, direction, realization: *realization };
            s.events.push(ControlEvent::new(d0, swap(SwapDirection::Store)));
            s.events.push(ControlEvent::new(d1, swap(SwapDirection::Retrieve)));
            if let Some(rates) = illumination {
                s.events.push(ControlEvent::new(d0, ControlKind::Illumination { rates: *rates, end: d1 }));
            }
            if let Some(species) = nuclear_pi {
                for frac in [0.25, 0.75] {
                    s.events.push(ControlEvent::pulse(d0 + frac * t_rf, PulseTarget::Nuclear(*species), 0.0, PI));
                }
            }
        }
    }
    for r in &p.rf_targets {
        let amplitude = rf_amplitude_for_angle(r.theta, constants.gamma(r.species), t_rf);
        s.events.push(ControlEvent::new(
            d0,
            ControlKind::RfDrive { frequency: r.frequency, amplitude, phase: r.phase, species: r.species, end: d1 },
        ));
    }
    s.events.push(ControlEvent::electron_pi(d1, 0.0));
    let mut echo = vec![d1];
    if p.final_pi {
        s.events.push(ControlEvent::electron_pi(total, 0.0));
        echo.push(total);
    }
    s.structure = Some(EchoStructure { windows: [(0.0, tau), (d1, total)], delay: (d0, d1), echo_pulses: echo });
    s.sort();
    s.validate()?;
    Ok(s)
}
