//! Time evolution of a three-level NV electron coupled to a nuclear register.
//!
//! The Hamiltonian is written in the rotating frame of the electron
//! Hamiltonian, where it is block diagonal in the electron level m:
//! H = Σ_m |m⟩⟨m| ⊗ H_m. Electron levels are stored in the order
//! (+1, 0, −1) and the electron is the most significant tensor factor.
//! Static segments are propagated with exact exponentials, oscillating
//! drives by midpoint sampling, and open-system segments through the
//! Lindblad superoperator.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::bath::SpinBath;
use crate::constants::{PhysicalConstants, Species};
use crate::error::{EchoError, Result};
use crate::linalg::{
    embed, embed_pair, expm, expm_hermitian, hermiticity_defect, identity, kron, lindbladian, matrix_power,
    min_eigenvalue, real, spin_ops, unitarity_defect, unvec, vec_of, CMat, CVec, HermitianEigen, C64,
    ONE, ZERO,
};
use crate::schedule::{
    lg_amplitude, ControlEvent, ControlKind, ControlSchedule, IlluminationRates, PulseTarget, SwapDirection,
    SwapRealization,
};
use crate::spin_system::{dipolar_coupling, hyperfine_vector, nitrogen_virtual_shifts, NuclearSpin, Vec3};

/// Electron levels in storage order.
pub const LEVELS: [i8; 3] = [1, 0, -1];

pub fn level_index(m: i8) -> usize {
    match m {
        1 => 0,
        0 => 1,
        _ => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameMode {
    /// Secular hyperfine, secular dipolar and rotating-wave drives in a
    /// frame rotating with each species' reference frequency.
    Rotating,
    /// Full vector couplings and sampled cosine drives.
    Lab,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub unitarity: f64,
    pub trace: f64,
    pub hermiticity: f64,
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { unitarity: 1e-10, trace: 1e-8, hermiticity: 1e-10, positivity: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub mode: FrameMode,
    /// Sampling step as a fraction of the fastest drive period.
    pub sampling_fraction: f64,
    /// Include nuclear-nuclear dipolar couplings.
    pub dipolar: bool,
    pub tolerances: Tolerances,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { mode: FrameMode::Rotating, sampling_fraction: 0.01, dipolar: true, tolerances: Tolerances::default() }
    }
}

/// Electron relaxation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladModel {
    /// Electron T1 (s); population exchange between every pair of levels at 1/(3 T1).
    pub t1: Option<f64>,
    /// Suppress T1 while the electron state is parked in a memory.
    pub memory_protected: bool,
}

impl LindbladModel {
    pub fn validate(&self) -> Result<()> {
        if let Some(t1) = self.t1 {
            if !(t1 > 0.0) {
                return Err(EchoError::Domain("T1 must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Memory qubit attached to the register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MemoryKind {
    /// Two-level memory without Hamiltonian.
    Ideal,
    /// A 13C nucleus of the environment.
    Carbon(NuclearSpin),
    /// The host 14N nucleus.
    Nitrogen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySpec {
    pub kind: MemoryKind,
    /// Initial population of the memory |↑⟩ state.
    pub polarization: f64,
}

impl MemorySpec {
    pub fn ideal() -> Self {
        Self { kind: MemoryKind::Ideal, polarization: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    pub species: Species,
    pub position: Vec3,
    /// Hyperfine vector A (rad/s, NV frame).
    pub a: Vec3,
    pub is_memory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Subsystem {
    IdealMemory,
    Nitrogen,
    Nucleus(Nucleus),
}

impl Subsystem {
    pub fn dim(&self) -> usize {
        match self {
            Subsystem::IdealMemory => 2,
            Subsystem::Nitrogen => 3,
            Subsystem::Nucleus(n) => n.species.dim(),
        }
    }

    fn species(&self) -> Option<Species> {
        match self {
            Subsystem::IdealMemory => None,
            Subsystem::Nitrogen => Some(Species::N14),
            Subsystem::Nucleus(n) => Some(n.species),
        }
    }

    fn is_memory(&self) -> bool {
        match self {
            Subsystem::IdealMemory | Subsystem::Nitrogen => true,
            Subsystem::Nucleus(n) => n.is_memory,
        }
    }
}

/// Electron plus nuclear register. The memory, when present, is subsystem 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub constants: PhysicalConstants,
    pub b_z: f64,
    pub register: Vec<Subsystem>,
    pub memory_polarization: f64,
}

impl SystemModel {
    pub fn new(constants: PhysicalConstants, b_z: f64) -> Self {
        Self { constants, b_z, register: Vec::new(), memory_polarization: 1.0 }
    }

    /// Register built from a subset of bath spins and an optional memory.
    pub fn from_bath(bath: &SpinBath, indices: &[usize], memory: Option<&MemorySpec>) -> Result<Self> {
        let mut sys = Self::new(bath.constants.clone(), bath.b_z);
        if let Some(m) = memory {
            sys.set_memory(m)?;
        }
        for &i in indices {
            let s = &bath.spins[i];
            sys.register.push(Subsystem::Nucleus(Nucleus {
                species: s.spin.species,
                position: s.spin.pos(),
                a: s.hyperfine.vector(),
                is_memory: false,
            }));
        }
        Ok(sys)
    }

    pub fn set_memory(&mut self, m: &MemorySpec) -> Result<()> {
        if !(0.0..=1.0).contains(&m.polarization) {
            return Err(EchoError::Domain("memory polarization must lie in [0, 1]".into()));
        }
        let sub = match &m.kind {
            MemoryKind::Ideal => Subsystem::IdealMemory,
            MemoryKind::Nitrogen => Subsystem::Nitrogen,
            MemoryKind::Carbon(spin) => {
                if spin.species.dim() != 2 {
                    return Err(EchoError::Domain("a nuclear memory must be spin-1/2".into()));
                }
                let g = self.constants.gamma(spin.species);
                Subsystem::Nucleus(Nucleus {
                    species: spin.species,
                    position: spin.pos(),
                    a: hyperfine_vector(&spin.pos(), g, &self.constants)?.vector(),
                    is_memory: true,
                })
            }
        };
        if self.has_memory() {
            self.register[0] = sub;
        } else {
            self.register.insert(0, sub);
        }
        self.memory_polarization = m.polarization;
        Ok(())
    }

    /// Adds a nucleus with a prescribed hyperfine vector.
    pub fn push_nucleus(&mut self, species: Species, position: Vec3, a: Vec3) {
        self.register.push(Subsystem::Nucleus(Nucleus { species, position, a, is_memory: false }));
    }

    /// Adds a nucleus whose hyperfine vector follows from its position.
    pub fn push_spin(&mut self, spin: &NuclearSpin) -> Result<()> {
        let g = self.constants.gamma(spin.species);
        let a = hyperfine_vector(&spin.pos(), g, &self.constants)?.vector();
        self.push_nucleus(spin.species, spin.pos(), a);
        Ok(())
    }

    pub fn has_memory(&self) -> bool {
        self.register.first().is_some_and(|s| s.is_memory())
    }

    pub fn nuclear_dims(&self) -> Vec<usize> {
        self.register.iter().map(|s| s.dim()).collect()
    }

    pub fn nuclear_dim(&self) -> usize {
        self.nuclear_dims().iter().product()
    }

    pub fn dim(&self) -> usize {
        3 * self.nuclear_dim()
    }

}

/// Pure state or density matrix over electron ⊗ register.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Pure(CVec),
    Density(CMat),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    /// Subsystem dimensions, electron first.
    pub dims: Vec<usize>,
    pub data: Representation,
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// (|+1⟩ + |down⟩)/√2 ⊗ ρ_register with unpolarised nuclei and the
    /// memory in |↑⟩ with the configured probability.
    pub fn initial(system: &SystemModel, down_level: i8) -> Result<Self> {
        if !matches!(down_level, 0 | -1) {
            return Err(EchoError::Domain("qubit down level must be 0 or -1".into()));
        }
        let mut e = CMat::zeros(3, 3);
        let (u, d) = (0, level_index(down_level));
        for (i, j) in [(u, u), (u, d), (d, u), (d, d)] {
            e[(i, j)] = real(0.5);
        }
        let mut reg = identity(1);
        for (k, s) in system.register.iter().enumerate() {
            let dim = s.dim();
            let r = if k == 0 && s.is_memory() {
                let p = system.memory_polarization;
                let mut m = CMat::zeros(dim, dim);
                m[(0, 0)] = real(p);
                m[(1, 1)] = real(1.0 - p);
                m
            } else {
                identity(dim) * real(1.0 / dim as f64)
            };
            reg = kron(&reg, &r);
        }
        let mut dims = vec![3];
        dims.extend(system.nuclear_dims());
        Ok(Self { dims, data: Representation::Density(kron(&e, &reg)) })
    }

    pub fn density(&self) -> CMat {
        match &self.data {
            Representation::Density(r) => r.clone(),
            Representation::Pure(v) => v * v.adjoint(),
        }
    }

    fn into_density(self) -> Self {
        let r = self.density();
        Self { dims: self.dims, data: Representation::Density(r) }
    }

    /// Checks normalisation, Hermiticity, trace and positivity.
    pub fn check(&self, tol: &Tolerances) -> Result<()> {
        match &self.data {
            Representation::Pure(v) => {
                let n = v.norm();
                if (n - 1.0).abs() > 1e-10 {
                    return Err(EchoError::Propagation(format!("state norm drifted to {n}")));
                }
            }
            Representation::Density(r) => {
                let h = hermiticity_defect(r);
                if h > tol.hermiticity {
                    return Err(EchoError::Propagation(format!("Hermiticity defect {h:e}")));
                }
                let t = (r.trace() - ONE).norm();
                if t > tol.trace {
                    return Err(EchoError::Propagation(format!("trace defect {t:e}")));
                }
                let m = min_eigenvalue(r);
                if m < -tol.positivity {
                    return Err(EchoError::Propagation(format!("negative eigenvalue {m:e}")));
                }
            }
        }
        Ok(())
    }

    /// Reduced electron density matrix (3 × 3).
    pub fn electron_state(&self) -> CMat {
        let n = self.dim() / 3;
        let mut e = CMat::zeros(3, 3);
        match &self.data {
            Representation::Density(r) => {
                for a in 0..3 {
                    for b in 0..3 {
                        e[(a, b)] = r.view((a * n, b * n), (n, n)).trace();
                    }
                }
            }
            Representation::Pure(v) => {
                for a in 0..3 {
                    for b in 0..3 {
                        let va = v.rows(a * n, n);
                        let vb = v.rows(b * n, n);
                        e[(a, b)] = vb.dotc(&va);
                    }
                }
            }
        }
        e
    }
}

/// Electron coherence read-out in a qubit manifold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    /// 2⟨↓|ρ_e|↑⟩.
    pub complex: C64,
    /// 2|⟨↓|ρ_e|↑⟩|.
    pub magnitude: f64,
    /// 2 Re⟨↓|ρ_e|↑⟩.
    pub signed: f64,
    /// Probability of projecting onto (|↑⟩ + |↓⟩)/√2.
    pub population: f64,
}

pub fn coherence(state: &QuantumState, down_level: i8) -> Coherence {
    let e = state.electron_state();
    let (u, d) = (0, level_index(down_level));
    let c = e[(d, u)] * 2.0;
    Coherence {
        complex: c,
        magnitude: c.norm(),
        signed: c.re,
        population: 0.5 * (e[(u, u)].re + e[(d, d)].re) + 0.5 * c.re,
    }
}

/// F = |Tr(G†U)| / Tr(G†G).
pub fn gate_fidelity(g: &CMat, u: &CMat) -> Result<f64> {
    if g.shape() != u.shape() || g.nrows() != g.ncols() {
        return Err(EchoError::Dimension { expected: g.nrows(), found: u.nrows() });
    }
    let num = (g.adjoint() * u).trace().norm();
    let den = (g.adjoint() * g).trace().re;
    Ok(num / den)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub steps: usize,
    pub max_step: f64,
    pub unitarity_defect: f64,
    pub trace_defect: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub failed: bool,
    pub messages: Vec<String>,
}

impl PropagationReport {
    fn merge(&mut self, other: &PropagationReport) {
        self.steps += other.steps;
        self.max_step = self.max_step.max(other.max_step);
        self.unitarity_defect = self.unitarity_defect.max(other.unitarity_defect);
        self.trace_defect = self.trace_defect.max(other.trace_defect);
        self.hermiticity_defect = self.hermiticity_defect.max(other.hermiticity_defect);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.failed |= other.failed;
        self.messages.extend(other.messages.iter().cloned());
    }

    pub fn combine<'a>(reports: impl IntoIterator<Item = &'a PropagationReport>) -> PropagationReport {
        let mut out = PropagationReport::default();
        for r in reports {
            out.merge(r);
        }
        out
    }
}

/// Oscillating term cos(ω t − φ) X + sin(ω t − φ) Y.
#[derive(Debug, Clone)]
struct DriveTerm {
    omega: f64,
    phase: f64,
    x: CMat,
    y: CMat,
}

impl DriveTerm {
    fn at(&self, t: f64) -> CMat {
        let arg = self.omega * t - self.phase;
        &self.x * real(arg.cos()) + &self.y * real(arg.sin())
    }

    /// Average over [t − h/2, t + h/2].
    fn mean(&self, t: f64, h: f64) -> CMat {
        let x = 0.5 * self.omega * h;
        let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
        self.at(t) * real(sinc)
    }
}

/// Precomputed single-spin operators embedded in the register.
struct Operators {
    ops: Vec<[CMat; 3]>,
    n: usize,
}

impl Operators {
    fn new(system: &SystemModel) -> Self {
        let dims = system.nuclear_dims();
        let ops = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let [x, y, z] = spin_ops(d - 1);
                [embed(&x, k, &dims), embed(&y, k, &dims), embed(&z, k, &dims)]
            })
            .collect();
        Self { ops, n: system.nuclear_dim() }
    }
}

/// Reference frequency of each species' rotating frame: the first drive
/// addressing it, else its bare Larmor frequency.
fn frame_references(system: &SystemModel, events: &[ControlEvent]) -> HashMap<Species, f64> {
    let mut refs = HashMap::new();
    for e in events {
        let (species, freq) = match e.kind {
            ControlKind::RfDrive { frequency, species, .. } => (species, frequency),
            ControlKind::LgField { delta, species, .. } => (species, system.constants.larmor(species, system.b_z) + delta),
            _ => continue,
        };
        refs.entry(species).or_insert(freq);
    }
    for s in system.register.iter().filter_map(|s| s.species()) {
        refs.entry(s).or_insert_with(|| system.constants.larmor(s, system.b_z));
    }
    refs
}

struct HamiltonianBuilder<'a> {
    system: &'a SystemModel,
    ops: Operators,
    mode: FrameMode,
    refs: HashMap<Species, f64>,
    /// Level-independent static part (Zeeman, dipolar, quadrupole).
    base: CMat,
    /// Hyperfine operator per unit m, and nitrogen shift per level.
    hyperfine: CMat,
    shifts: [CMat; 3],
}

impl<'a> HamiltonianBuilder<'a> {
    fn new(system: &'a SystemModel, events: &[ControlEvent], mode: FrameMode, dipolar: bool) -> Result<Self> {
        let ops = Operators::new(system);
        let refs = frame_references(system, events);
        let n = ops.n;
        let c = &system.constants;
        let b = system.b_z;
        let mut base = CMat::zeros(n, n);
        let mut hyperfine = CMat::zeros(n, n);
        let mut shifts = [CMat::zeros(n, n), CMat::zeros(n, n), CMat::zeros(n, n)];
        for (k, sub) in system.register.iter().enumerate() {
            let [x, y, z] = &ops.ops[k];
            let offset = |s: Species| match mode {
                FrameMode::Rotating => c.gamma(s).signum() * refs[&s],
                FrameMode::Lab => 0.0,
            };
            match sub {
                Subsystem::IdealMemory => {}
                Subsystem::Nucleus(nu) => {
                    let g = c.gamma(nu.species);
                    base += z * real(-g * b + offset(nu.species));
                    match mode {
                        FrameMode::Rotating => hyperfine += z * real(nu.a.z),
                        FrameMode::Lab => {
                            hyperfine += x * real(nu.a.x) + y * real(nu.a.y) + z * real(nu.a.z);
                        }
                    }
                }
                Subsystem::Nitrogen => {
                    let g = c.gamma(Species::N14);
                    base += z * real(-g * b + offset(Species::N14));
                    base += z * z * real(c.nitrogen_quadrupole);
                    hyperfine += z * real(c.nitrogen_a_par);
                    let h = nitrogen_virtual_shifts(b, c)?;
                    let dims = system.nuclear_dims();
                    for (li, &m) in LEVELS.iter().enumerate() {
                        let diag = h.for_level(m);
                        let mut local = CMat::zeros(3, 3);
                        for i in 0..3 {
                            local[(i, i)] = real(diag[i]);
                        }
                        shifts[li] += embed(&local, k, &dims);
                    }
                }
            }
        }
        if dipolar {
            let dims = system.nuclear_dims();
            let nuclei: Vec<(usize, &Nucleus)> = system
                .register
                .iter()
                .enumerate()
                .filter_map(|(k, s)| match s {
                    Subsystem::Nucleus(n) => Some((k, n)),
                    _ => None,
                })
                .collect();
            for (p, &(j, nj)) in nuclei.iter().enumerate() {
                for &(k, nk) in &nuclei[p + 1..] {
                    let dc = dipolar_coupling(
                        &nj.position,
                        &nk.position,
                        c.gamma(nj.species),
                        c.gamma(nk.species),
                        c,
                    )?;
                    let (sj, sk) = (spin_ops(nj.species.dim() - 1), spin_ops(nk.species.dim() - 1));
                    let pair = |a: usize, bb: usize| embed_pair(&sj[a], j, &sk[bb], k, &dims);
                    match mode {
                        FrameMode::Rotating => {
                            let zz = pair(2, 2);
                            if nj.species == nk.species {
                                let flip = pair(0, 0) + pair(1, 1);
                                base += (zz - flip * real(0.5)) * real(dc.d);
                            } else {
                                base += zz * real(dc.d);
                            }
                        }
                        FrameMode::Lab => {
                            for a in 0..3 {
                                for bb in 0..3 {
                                    let t = dc.tensor[(a, bb)];
                                    if t != 0.0 {
                                        base += pair(a, bb) * real(t);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { system, ops, mode, refs, base, hyperfine, shifts })
    }

    /// Drive terms of the continuous events; static parts are returned
    /// separately as a single operator.
    fn drives(&self, events: &[&ControlEvent]) -> (CMat, Vec<DriveTerm>) {
        let n = self.ops.n;
        let c = &self.system.constants;
        let mut stat = CMat::zeros(n, n);
        let mut terms = Vec::new();
        for e in events {
            let (freq, amplitude, phase, species) = match e.kind {
                ControlKind::RfDrive { frequency, amplitude, phase, species, .. } => {
                    (frequency, amplitude, phase, species)
                }
                ControlKind::LgField { delta, species, .. } => {
                    let g = c.gamma(species);
                    (c.larmor(species, self.system.b_z) + delta, lg_amplitude(delta, g.abs()), 0.0, species)
                }
                _ => continue,
            };
            let mut x = CMat::zeros(n, n);
            let mut y = CMat::zeros(n, n);
            let mut any = false;
            for (k, sub) in self.system.register.iter().enumerate() {
                let Some(sp) = sub.species() else { continue };
                let g = c.gamma(sp);
                match self.mode {
                    FrameMode::Rotating => {
                        if sp != species {
                            continue;
                        }
                        let half = -0.5 * g * amplitude;
                        x += &self.ops.ops[k][0] * real(half);
                        y -= &self.ops.ops[k][1] * real(g.signum() * half);
                    }
                    FrameMode::Lab => x -= &self.ops.ops[k][0] * real(g * amplitude),
                }
                any = true;
            }
            if !any {
                continue;
            }
            let omega = match self.mode {
                FrameMode::Rotating => freq - self.refs[&species],
                FrameMode::Lab => freq,
            };
            let term = DriveTerm { omega, phase, x, y };
            if omega == 0.0 {
                stat += term.at(0.0);
            } else {
                terms.push(term);
            }
        }
        (stat, terms)
    }

    fn static_block(&self, level: usize, extra: &CMat) -> CMat {
        let m = LEVELS[level] as f64;
        &self.base + &self.hyperfine * real(m) + &self.shifts[level] + extra
    }
}

/// Full block-diagonal Hamiltonian H(t) (dimension 3N) for the given active
/// continuous events, including a spin-lock drive of the qubit
/// {+1, `down_level`} when present.
pub fn build_hamiltonian(
    system: &SystemModel,
    active: &[ControlEvent],
    t: f64,
    options: &EngineOptions,
    down_level: i8,
) -> Result<CMat> {
    let b = HamiltonianBuilder::new(system, active, options.mode, options.dipolar)?;
    let refs: Vec<&ControlEvent> = active.iter().collect();
    let (stat, terms) = b.drives(&refs);
    let mut extra = stat;
    for d in &terms {
        extra += d.at(t);
    }
    let blocks: Vec<CMat> = (0..3).map(|l| b.static_block(l, &extra)).collect();
    let mut h = assemble(&blocks, b.ops.n);
    add_spin_lock(&mut h, &refs, b.ops.n, down_level);
    Ok(h)
}

fn assemble(blocks: &[CMat], n: usize) -> CMat {
    let mut h = CMat::zeros(3 * n, 3 * n);
    for (l, blk) in blocks.iter().enumerate() {
        h.view_mut((l * n, l * n), (n, n)).copy_from(blk);
    }
    h
}

fn add_spin_lock(h: &mut CMat, active: &[&ControlEvent], n: usize, down_level: i8) {
    let d = level_index(down_level);
    for e in active {
        if let ControlKind::SpinLock { omega_e, .. } = e.kind {
            for i in 0..n {
                h[(i, d * n + i)] += real(0.5 * omega_e);
                h[(d * n + i, i)] += real(0.5 * omega_e);
            }
        }
    }
}

/// Segment propagator.
enum Prop {
    /// Per-level unitaries; `None` marks levels without population.
    Blocks([Option<CMat>; 3]),
    Full(CMat),
    Super(CMat),
}

impl Prop {
    /// `next` applied after `self`.
    fn then(self, next: Prop) -> Prop {
        match (self, next) {
            (Prop::Blocks(a), Prop::Blocks(b)) => Prop::Blocks(std::array::from_fn(|l| match (&a[l], &b[l]) {
                (Some(x), Some(y)) => Some(y * x),
                _ => None,
            })),
            (Prop::Full(a), Prop::Full(b)) => Prop::Full(b * a),
            (Prop::Super(a), Prop::Super(b)) => Prop::Super(b * a),
            _ => unreachable!("segment propagators share one representation"),
        }
    }

    fn power(&self, n: u64) -> Prop {
        match self {
            Prop::Blocks(a) => Prop::Blocks(std::array::from_fn(|l| a[l].as_ref().map(|u| matrix_power(u, n)))),
            Prop::Full(u) => Prop::Full(matrix_power(u, n)),
            Prop::Super(s) => Prop::Super(matrix_power(s, n)),
        }
    }

    fn unitarity_defect(&self) -> f64 {
        match self {
            Prop::Blocks(a) => a.iter().flatten().map(unitarity_defect).fold(0.0, f64::max),
            Prop::Full(u) => unitarity_defect(u),
            Prop::Super(_) => 0.0,
        }
    }
}

fn occupied_levels(state: &QuantumState) -> [bool; 3] {
    let n = state.dim() / 3;
    std::array::from_fn(|l| match &state.data {
        Representation::Density(r) => r.view((l * n, l * n), (n, n)).iter().any(|z| *z != ZERO),
        Representation::Pure(v) => v.rows(l * n, n).iter().any(|z| *z != ZERO),
    })
}

fn apply_prop(state: &mut QuantumState, p: &Prop) {
    let n = state.dim() / 3;
    match (p, &mut state.data) {
        (Prop::Blocks(us), Representation::Density(r)) => {
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(ua), Some(ub)) = (&us[a], &us[b]) {
                        let blk = ua * r.view((a * n, b * n), (n, n)) * ub.adjoint();
                        r.view_mut((a * n, b * n), (n, n)).copy_from(&blk);
                    }
                }
            }
        }
        (Prop::Blocks(us), Representation::Pure(v)) => {
            for a in 0..3 {
                if let Some(ua) = &us[a] {
                    let seg = ua * v.rows(a * n, n);
                    v.rows_mut(a * n, n).copy_from(&seg);
                }
            }
        }
        (Prop::Full(u), Representation::Density(r)) => *r = u * &*r * u.adjoint(),
        (Prop::Full(u), Representation::Pure(v)) => *v = u * &*v,
        (Prop::Super(s), Representation::Density(r)) => *r = unvec(&(s * vec_of(r)), 3 * n),
        (Prop::Super(_), Representation::Pure(_)) => unreachable!("open-system steps use density matrices"),
    }
}

/// Applies a unitary acting on the electron only.
fn apply_electron_unitary(state: &mut QuantumState, u: &CMat) {
    let n = state.dim() / 3;
    match &mut state.data {
        Representation::Density(r) => {
            let blocks: Vec<Vec<CMat>> =
                (0..3).map(|a| (0..3).map(|b| r.view((a * n, b * n), (n, n)).into_owned()).collect()).collect();
            for a in 0..3 {
                for b in 0..3 {
                    let mut acc = CMat::zeros(n, n);
                    for c in 0..3 {
                        for d in 0..3 {
                            let w = u[(a, c)] * u[(b, d)].conj();
                            if w != ZERO {
                                acc += &blocks[c][d] * w;
                            }
                        }
                    }
                    r.view_mut((a * n, b * n), (n, n)).copy_from(&acc);
                }
            }
        }
        Representation::Pure(v) => {
            let parts: Vec<CVec> = (0..3).map(|a| v.rows(a * n, n).into_owned()).collect();
            for a in 0..3 {
                let mut acc = CVec::zeros(n);
                for c in 0..3 {
                    if u[(a, c)] != ZERO {
                        acc += &parts[c] * u[(a, c)];
                    }
                }
                v.rows_mut(a * n, n).copy_from(&acc);
            }
        }
    }
}

/// Applies a unitary acting on the register only.
fn apply_register_unitary(state: &mut QuantumState, u: &CMat) {
    let blocks = Prop::Blocks([Some(u.clone()), Some(u.clone()), Some(u.clone())]);
    apply_prop(state, &blocks);
}

fn apply_full_unitary(state: &mut QuantumState, u: &CMat) {
    apply_prop(state, &Prop::Full(u.clone()));
}

/// Rotation by `angle` about (cos φ, sin φ, 0) in the qubit {+1, down}.
pub fn electron_rotation(down_level: i8, phase: f64, angle: f64) -> CMat {
    let mut u = identity(3);
    let (a, b) = (0, level_index(down_level));
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let off = C64::new(0.0, -s) * C64::from_polar(1.0, -phase);
    u[(a, a)] = real(c);
    u[(b, b)] = real(c);
    u[(a, b)] = off;
    u[(b, a)] = C64::new(0.0, -s) * C64::from_polar(1.0, phase);
    u
}

/// Swap of |0⟩ and |−1⟩.
pub fn transfer_operator() -> CMat {
    let mut u = CMat::zeros(3, 3);
    u[(0, 0)] = ONE;
    u[(1, 2)] = ONE;
    u[(2, 1)] = ONE;
    u
}

/// Ideal SWAP of the electron qubit {+1, 0} and the memory qubit, acting
/// on electron ⊗ memory: |+1, ↓⟩ ↔ |0, ↑⟩, identity elsewhere.
pub fn ideal_swap(memory_dim: usize) -> CMat {
    let d = 3 * memory_dim;
    let mut u = identity(d);
    // electron index e, memory index k → e·dim + k; ↑ = 0, ↓ = 1
    let a = 1; // |+1, ↓⟩
    let b = memory_dim; // |0, ↑⟩
    u[(a, a)] = ZERO;
    u[(b, b)] = ZERO;
    u[(a, b)] = ONE;
    u[(b, a)] = ONE;
    u
}

fn nuclear_rotation(system: &SystemModel, species: Species, phase: f64, angle: f64) -> CMat {
    let mut u = identity(1);
    for sub in &system.register {
        let d = sub.dim();
        let local = match sub {
            Subsystem::Nucleus(nu) if nu.species == species && !nu.is_memory => {
                let [x, y, _] = spin_ops(d - 1);
                expm_hermitian(&(x * real(phase.cos()) + y * real(phase.sin())), angle)
            }
            _ => identity(d),
        };
        u = kron(&u, &local);
    }
    u
}

/// Electron jump operators for T1 and illumination.
fn jump_operators(n: usize, t1: Option<f64>, illumination: Option<&IlluminationRates>) -> Vec<CMat> {
    let id = identity(n);
    let ket = |a: usize, b: usize, rate: f64| {
        let mut e = CMat::zeros(3, 3);
        e[(a, b)] = real(rate.sqrt());
        kron(&e, &id)
    };
    let mut out = Vec::new();
    if let Some(t1) = t1 {
        let rate = 1.0 / (3.0 * t1);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    out.push(ket(a, b, rate));
                }
            }
        }
    }
    if let Some(r) = illumination {
        for m in [0, 2] {
            if r.pump > 0.0 {
                out.push(ket(1, m, r.pump));
            }
            if r.depolarization > 0.0 {
                out.push(ket(m, 1, r.depolarization));
            }
        }
        if r.dephasing > 0.0 {
            for a in 0..3 {
                out.push(ket(a, a, r.dephasing));
            }
        }
    }
    out
}

struct Evolver<'a> {
    options: &'a EngineOptions,
    builder: HamiltonianBuilder<'a>,
    eigen_cache: HashMap<(Vec<usize>, usize), HermitianEigen>,
    prop_cache: HashMap<(Vec<usize>, usize, u64), CMat>,
    report: PropagationReport,
}

impl<'a> Evolver<'a> {
    fn segment(
        &mut self,
        state: &mut QuantumState,
        t0: f64,
        t1: f64,
        active: &[(usize, &ControlEvent)],
        down_level: i8,
        dissipators: &[CMat],
    ) -> Result<()> {
        let dt = t1 - t0;
        if !(dt > 0.0) {
            return Ok(());
        }
        let key: Vec<usize> = active.iter().map(|(i, _)| *i).collect();
        let events: Vec<&ControlEvent> = active.iter().map(|(_, e)| *e).collect();
        let (stat, terms) = self.builder.drives(&events);
        let spin_lock = events.iter().any(|e| matches!(e.kind, ControlKind::SpinLock { .. }));
        let open = !dissipators.is_empty();
        let n = self.builder.ops.n;
        let occupied = occupied_levels(state);

        if open && matches!(state.data, Representation::Pure(_)) {
            *state = state.clone().into_density();
        }

        let full_h = |b: &HamiltonianBuilder, t: f64, h: f64| -> CMat {
            let mut extra = stat.clone();
            for d in &terms {
                extra += d.mean(t, h);
            }
            let blocks: Vec<CMat> = (0..3).map(|l| b.static_block(l, &extra)).collect();
            let mut h = assemble(&blocks, n);
            add_spin_lock(&mut h, &events, n, down_level);
            h
        };

        // step generator for [s, s + h], drives held at their step average
        let step = |ev: &mut Self, s: f64, h: f64| -> Prop {
            let tm = s + 0.5 * h;
            if open {
                let sup = lindbladian(&full_h(&ev.builder, tm, h), dissipators);
                Prop::Super(expm(&(sup * real(h))))
            } else if spin_lock {
                Prop::Full(expm_hermitian(&full_h(&ev.builder, tm, h), h))
            } else {
                let mut extra = stat.clone();
                for d in &terms {
                    extra += d.mean(tm, h);
                }
                Prop::Blocks(std::array::from_fn(|l| {
                    occupied[l].then(|| expm_hermitian(&ev.builder.static_block(l, &extra), h))
                }))
            }
        };

        let prop = if terms.is_empty() {
            self.report.steps += 1;
            self.report.max_step = self.report.max_step.max(dt);
            if open || spin_lock {
                step(self, t0, dt)
            } else {
                Prop::Blocks(std::array::from_fn(|l| {
                    if !occupied[l] {
                        return None;
                    }
                    let pk = (key.clone(), l, dt.to_bits());
                    if let Some(u) = self.prop_cache.get(&pk) {
                        return Some(u.clone());
                    }
                    let ek = (key.clone(), l);
                    if !self.eigen_cache.contains_key(&ek) {
                        let h = self.builder.static_block(l, &stat);
                        self.eigen_cache.insert(ek.clone(), HermitianEigen::new(&h));
                    }
                    let u = self.eigen_cache[&ek].propagator(dt);
                    self.prop_cache.insert(pk, u.clone());
                    Some(u)
                }))
            }
        } else {
            let fastest = terms.iter().map(|d| d.omega.abs()).fold(0.0, f64::max);
            let period = TAU / fastest;
            let per_period = (1.0 / self.options.sampling_fraction).ceil().max(1.0) as usize;
            let h = period / per_period as f64;
            let single = terms.iter().all(|d| (d.omega.abs() - fastest).abs() <= 1e-12 * fastest);
            let direct = |ev: &mut Self, s0: f64, len: f64| -> Option<Prop> {
                if !(len > 0.0) {
                    return None;
                }
                let k = (len / h).ceil().max(1.0) as usize;
                let hh = len / k as f64;
                ev.report.steps += k;
                ev.report.max_step = ev.report.max_step.max(hh);
                let mut acc: Option<Prop> = None;
                for i in 0..k {
                    let p = step(ev, s0 + i as f64 * hh, hh);
                    acc = Some(match acc {
                        None => p,
                        Some(a) => a.then(p),
                    });
                }
                acc
            };
            let n_periods = (dt / period).floor() as u64;
            if single && n_periods >= 2 {
                let one = direct(self, t0, period).expect("positive period");
                let bulk = one.power(n_periods);
                let rest_start = t0 + n_periods as f64 * period;
                match direct(self, rest_start, t1 - rest_start) {
                    Some(r) => bulk.then(r),
                    None => bulk,
                }
            } else {
                direct(self, t0, dt).expect("positive segment")
            }
        };
        let ud = prop.unitarity_defect();
        self.report.unitarity_defect = self.report.unitarity_defect.max(ud);
        apply_prop(state, &prop);
        Ok(())
    }
}

/// Propagates `state` through `schedule`.
pub fn evolve(
    system: &SystemModel,
    state: QuantumState,
    schedule: &ControlSchedule,
    model: Option<&LindbladModel>,
    options: &EngineOptions,
) -> Result<(QuantumState, PropagationReport)> {
    schedule.validate()?;
    if state.dim() != system.dim() {
        return Err(EchoError::Dimension { expected: system.dim(), found: state.dim() });
    }
    if let Some(m) = model {
        m.validate()?;
    }
    if !(options.sampling_fraction > 0.0 && options.sampling_fraction <= 1.0) {
        return Err(EchoError::Domain("sampling fraction must lie in (0, 1]".into()));
    }
    let mut state = state;
    let builder = HamiltonianBuilder::new(system, &schedule.events, options.mode, options.dipolar)?;
    let mut ev = Evolver {
        options,
        builder,
        eigen_cache: HashMap::new(),
        prop_cache: HashMap::new(),
        report: PropagationReport { min_eigenvalue: f64::INFINITY, ..Default::default() },
    };
    let n = system.nuclear_dim();
    let mut down = schedule.initial_down_level;
    let mut stored = false;
    let breakpoints = schedule.breakpoints();
    let mut next_event = 0;
    for (bi, &t) in breakpoints.iter().enumerate() {
        while next_event < schedule.events.len() && schedule.events[next_event].time <= t {
            let e = &schedule.events[next_event];
            next_event += 1;
            match &e.kind {
                ControlKind::InstantPulse { target: PulseTarget::Electron, phase, angle } => {
                    apply_electron_unitary(&mut state, &electron_rotation(down, *phase, *angle));
                }
                ControlKind::InstantPulse { target: PulseTarget::Nuclear(species), phase, angle } => {
                    apply_register_unitary(&mut state, &nuclear_rotation(system, *species, *phase, *angle));
                }
                ControlKind::ManifoldTransfer { down_level } => {
                    if *down_level != down {
                        apply_electron_unitary(&mut state, &transfer_operator());
                        down = *down_level;
                    }
                }
                ControlKind::SwapGate { direction, realization, .. } => {
                    if !system.has_memory() {
                        return Err(EchoError::Validation("swap gate without a memory in the register".into()));
                    }
                    if down != 0 {
                        return Err(EchoError::Validation("swap gates act on the {+1, 0} qubit".into()));
                    }
                    let mem_dim = system.register[0].dim();
                    let local = match realization {
                        SwapRealization::Ideal => ideal_swap(mem_dim),
                        SwapRealization::Explicit => {
                            if !matches!(system.register[0], Subsystem::Nitrogen) {
                                return Err(EchoError::Validation(
                                    "explicit swap realisation needs the nitrogen memory".into(),
                                ));
                            }
                            crate::swap_gate::explicit_swap_operator(&system.constants, system.b_z)?
                        }
                    };
                    let rest = n / mem_dim;
                    apply_full_unitary(&mut state, &kron(&local, &identity(rest)));
                    stored = *direction == SwapDirection::Store;
                }
                _ => {}
            }
        }
        let Some(&t_next) = breakpoints.get(bi + 1) else { break };
        let active: Vec<(usize, &ControlEvent)> =
            schedule.events.iter().enumerate().filter(|(_, e)| e.active_over(t, t_next)).collect();
        let illum = active.iter().find_map(|(_, e)| match &e.kind {
            ControlKind::Illumination { rates, .. } => Some(*rates),
            _ => None,
        });
        let t1 = model.and_then(|m| if stored && m.memory_protected { None } else { m.t1 });
        let dissipators = if t1.is_some() || illum.is_some() {
            jump_operators(n, t1, illum.as_ref())
        } else {
            Vec::new()
        };
        ev.segment(&mut state, t, t_next, &active, down, &dissipators)?;
    }
    let mut report = ev.report;
    if let Representation::Density(r) = &state.data {
        report.trace_defect = (r.trace() - ONE).norm();
        report.hermiticity_defect = hermiticity_defect(r);
        report.min_eigenvalue = min_eigenvalue(r);
    } else if let Representation::Pure(v) = &state.data {
        report.trace_defect = (v.norm() - 1.0).abs();
        report.min_eigenvalue = 0.0;
    }
    let tol = &options.tolerances;
    if report.unitarity_defect > tol.unitarity {
        report.failed = true;
        report.messages.push(format!("unitarity defect {:e}", report.unitarity_defect));
    }
    if report.trace_defect > tol.trace {
        report.failed = true;
        report.messages.push(format!("trace defect {:e}", report.trace_defect));
    }
    if report.hermiticity_defect > tol.hermiticity {
        report.failed = true;
        report.messages.push(format!("Hermiticity defect {:e}", report.hermiticity_defect));
    }
    if report.min_eigenvalue < -tol.positivity {
        report.failed = true;
        report.messages.push(format!("negative eigenvalue {:e}", report.min_eigenvalue));
    }
    Ok((state, report))
}

/// Final qubit manifold of a schedule.
pub fn final_down_level(schedule: &ControlSchedule) -> i8 {
    schedule
        .events
        .iter()
        .filter_map(|e| match e.kind {
            ControlKind::ManifoldTransfer { down_level } => Some(down_level),
            _ => None,
        })
        .last()
        .unwrap_or(schedule.initial_down_level)
}

/// Evolves the standard initial state through `schedule` and reads out the
/// coherence in the final manifold.
pub fn simulate_coherence(
    system: &SystemModel,
    schedule: &ControlSchedule,
    model: Option<&LindbladModel>,
    options: &EngineOptions,
) -> Result<(Coherence, PropagationReport)> {
    let state = QuantumState::initial(system, schedule.initial_down_level)?;
    let (out, report) = evolve(system, state, schedule, model, options)?;
    Ok((coherence(&out, final_down_level(schedule)), report))
}

/// Nuclear precession frequency |γ B ẑ − m A| for electron level m.
pub fn lab_precession(constants: &PhysicalConstants, species: Species, a: &Vec3, b_z: f64, m: i8) -> f64 {
    (Vec3::z() * (constants.gamma(species) * b_z) - a * m as f64).norm()
}

/// Phase-free π pulse helper used by tests and oracles.
pub fn pi() -> f64 {
    PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::khz;
    use crate::linalg::max_abs;
    use crate::schedule::{ControlEvent, ControlSchedule};

    fn sys_single(a_par: f64, a_perp: f64) -> SystemModel {
        let mut s = SystemModel::new(PhysicalConstants::default(), 0.467);
        s.push_nucleus(Species::C13, Vec3::new(1.0, 0.0, 0.0), Vec3::new(a_perp, 0.0, a_par));
        s
    }

    #[test]
    fn no_nuclei_gives_zero_hamiltonian() {
        let s = SystemModel::new(PhysicalConstants::default(), 0.467);
        let h = build_hamiltonian(&s, &[], 0.0, &EngineOptions::default(), -1).unwrap();
        assert_eq!(h.nrows(), 3);
        assert_eq!(max_abs(&h), 0.0);
    }

    #[test]
    fn eigen_splittings_match_manifold_frequencies() {
        // lab frame, strong field: splittings of the {+1, 0} blocks are ω_j ± ηA∥
        let (a_par, a_perp) = (khz(20.0), khz(10.0));
        let s = sys_single(a_par, a_perp);
        let opts = EngineOptions { mode: FrameMode::Lab, ..Default::default() };
        let h = build_hamiltonian(&s, &[], 0.0, &opts, 0).unwrap();
        // independent 2 × 2 diagonalisations per level
        let splitting = |l: usize| {
            let blk = h.view((2 * l, 2 * l), (2, 2)).into_owned();
            let e = blk.symmetric_eigen().eigenvalues;
            (e[0] - e[1]).abs()
        };
        let c = PhysicalConstants::default();
        let w = c.gamma(Species::C13) * 0.467;
        let a = Vec3::new(a_perp, 0.0, a_par);
        let hf = crate::spin_system::HyperfineVector::from_field(a);
        let (wj, _) = crate::spin_system::precession_frame(
            0.467,
            c.gamma(Species::C13),
            &hf,
            crate::spin_system::QubitManifold::zero(),
        )
        .unwrap();
        let eta = 0.5;
        // agreement up to second order in A⊥/ω
        let tol = a_perp * a_perp / w;
        assert!((splitting(0) - (wj - eta * a_par)).abs() < tol);
        assert!((splitting(1) - (wj + eta * a_par)).abs() < tol);
        assert!((splitting(1) - w).abs() < 1e-9 * w);
    }

    #[test]
    fn static_evolution_is_exact() {
        let s = sys_single(khz(15.0), 0.0);
        let opts = EngineOptions::default();
        let sched = ControlSchedule::new(37e-6, -1);
        let psi0 = {
            let mut v = CVec::zeros(6);
            v[0] = real(0.6);
            v[5] = C64::new(0.0, 0.8);
            QuantumState { dims: vec![3, 2], data: Representation::Pure(v) }
        };
        let (out, rep) = evolve(&s, psi0.clone(), &sched, None, &opts).unwrap();
        let h = build_hamiltonian(&s, &[], 0.0, &opts, -1).unwrap();
        let Representation::Pure(v0) = psi0.data else { unreachable!() };
        let expect = expm_hermitian(&h, 37e-6) * v0;
        let Representation::Pure(v) = out.data else { unreachable!() };
        assert!((v - expect).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
        assert!(!rep.failed);
    }

    #[test]
    fn coherence_of_product_and_entangled_states() {
        let s = sys_single(khz(1.0), 0.0);
        let st = QuantumState::initial(&s, 0).unwrap();
        let c = coherence(&st, 0);
        assert!((c.magnitude - 1.0).abs() < 1e-15 && (c.population - 1.0).abs() < 1e-15);
        // (|+1,↑⟩ + |0,↓⟩)/√2
        let mut v = CVec::zeros(6);
        v[0] = real(0.5f64.sqrt());
        v[3] = real(0.5f64.sqrt());
        let bell = QuantumState { dims: vec![3, 2], data: Representation::Pure(v) };
        assert!(coherence(&bell, 0).magnitude < 1e-15);
    }

    #[test]
    fn fidelity_basics() {
        let [x, y, _] = spin_ops(2);
        let g = expm_hermitian(&(x + y * real(0.3)), 1.1);
        assert!((gate_fidelity(&g, &g).unwrap() - 1.0).abs() < 1e-14);
        let ph = &g * C64::from_polar(1.0, 0.7);
        assert!((gate_fidelity(&g, &ph).unwrap() - 1.0).abs() < 1e-14);
        assert!(gate_fidelity(&g, &identity(2)).is_err());
    }

    #[test]
    fn t1_relaxation_matches_rate_equation() {
        let s = SystemModel::new(PhysicalConstants::default(), 0.467);
        let t1 = 1e-3;
        let model = LindbladModel { t1: Some(t1), memory_protected: false };
        let mut rho = CMat::zeros(3, 3);
        rho[(0, 0)] = real(1.0);
        let st = QuantumState { dims: vec![3], data: Representation::Density(rho) };
        for &t in &[1e-4, 5e-4, 2e-3] {
            let (out, rep) = evolve(&s, st.clone(), &ControlSchedule::new(t, -1), Some(&model), &EngineOptions::default())
                .unwrap();
            assert!(!rep.failed);
            let e = out.electron_state();
            // dP/dt = (1/3T1) Σ_b (P_b − P_a) ⇒ P_a = 1/3 + (P_a(0) − 1/3) e^{−t/T1}
            let p = 1.0 / 3.0 + (2.0 / 3.0) * (-t / t1).exp();
            assert!((e[(0, 0)].re - p).abs() < 1e-10, "t={t}");
            let q = 1.0 / 3.0 - (1.0 / 3.0) * (-t / t1).exp();
            assert!((e[(2, 2)].re - q).abs() < 1e-10);
        }
    }

    #[test]
    fn illumination_reaches_calibrated_polarisation() {
        let s = SystemModel::new(PhysicalConstants::default(), 0.467);
        let rates = IlluminationRates::default();
        let mut sched = ControlSchedule::new(1e-4, -1);
        sched.push(ControlEvent::new(0.0, ControlKind::Illumination { rates, end: 1e-4 }));
        let (out, _) = evolve(&s, QuantumState::initial(&s, -1).unwrap(), &sched, None, &EngineOptions::default())
            .unwrap();
        let e = out.electron_state();
        assert!((e[(1, 1)].re - 0.82).abs() < 1e-6);
        assert!(e[(0, 1)].norm() < 1e-6);
    }

    #[test]
    fn electron_pulses_and_transfers() {
        let u = electron_rotation(-1, 0.0, PI);
        assert!(unitarity_defect(&u) < 1e-15);
        assert!((u[(2, 0)] - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((u[(1, 1)] - ONE).norm() < 1e-15);
        let t = transfer_operator();
        assert!(max_abs(&(&t * &t - identity(3))) < 1e-15);
        let sw = ideal_swap(2);
        assert!(max_abs(&(&sw * &sw - identity(6))) < 1e-15);
        assert_eq!(sw[(1, 2)], ONE);
    }
}
