//! Run configuration: TOML schema, validation and conversion to core types.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use anyhow::{anyhow, bail, ensure, Context, Result};
use echo_core::bath::{BathSpec, SpinBath, DEFAULT_EXCLUSION_RADIUS, NATURAL_ABUNDANCE};
use echo_core::cce::SweepVariable;
use echo_core::constants::khz;
use echo_core::contract::ContractOptions;
use echo_core::dynamics::{EngineOptions, FrameMode, LindbladModel, MemoryKind, MemorySpec, Tolerances};
use echo_core::schedule::{DelaySpec, EchoProtocol, IlluminationRates, RfTarget, SwapRealization};
use echo_core::spin_system::{crystal_to_nv, HyperfineVector, NuclearSpin, QubitManifold, Vec3};
use echo_core::{PhysicalConstants, Species};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub meta: Meta,
    pub bath: BathConfig,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub census: Option<CensusConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub desk_scale: bool,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathSource {
    #[default]
    Generate,
    File,
    Explicit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionFrame {
    #[default]
    Nv,
    Crystal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinEntry {
    pub species: String,
    pub position_nm: [f64; 3],
    #[serde(default)]
    pub frame: PositionFrame,
    /// Optional (A∥, A⊥) override in kHz.
    #[serde(default)]
    pub hyperfine_khz: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    #[serde(default)]
    pub source: BathSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub samples: u64,
    #[serde(default = "default_b_z")]
    pub b_z_tesla: f64,
    #[serde(default = "default_shell")]
    pub shell_radius_nm: f64,
    #[serde(default = "default_abundance")]
    pub abundance: f64,
    #[serde(default = "default_exclusion")]
    pub exclusion_radius_nm: f64,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub spins: Vec<SpinEntry>,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self {
            source: BathSource::Generate,
            seed: 0,
            samples: 1,
            b_z_tesla: default_b_z(),
            shell_radius_nm: default_shell(),
            abundance: default_abundance(),
            exclusion_radius_nm: default_exclusion(),
            path: None,
            spins: Vec::new(),
        }
    }
}

fn one() -> u64 {
    1
}
fn default_b_z() -> f64 {
    0.467
}
fn default_shell() -> f64 {
    1.5
}
fn default_abundance() -> f64 {
    NATURAL_ABUNDANCE
}
fn default_exclusion() -> f64 {
    DEFAULT_EXCLUSION_RADIUS
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Delayed entanglement echo.
    #[default]
    Echo,
    /// Plain CP sequence; the sweep variable is the pulse spacing.
    Cp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayKind {
    #[default]
    Dd,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    #[serde(default)]
    pub kind: DelayKind,
    pub duration_us: f64,
    #[serde(default)]
    pub n_pulses: usize,
    #[serde(default)]
    pub down_level: i8,
    #[serde(default)]
    pub explicit_swap: bool,
    #[serde(default)]
    pub illumination: bool,
    /// Steady-state |0⟩ population under illumination.
    #[serde(default)]
    pub illumination_fidelity: Option<f64>,
    #[serde(default)]
    pub nuclear_pi: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfConfig {
    /// Offset from the bare Larmor frequency of `species`, in kHz.
    pub offset_khz: f64,
    /// Rotation angle in units of π.
    pub theta_pi: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "c13")]
    pub species: String,
}

fn c13() -> String {
    "13C".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default)]
    pub kind: ProtocolKind,
    #[serde(default)]
    pub tau_us: f64,
    #[serde(default)]
    pub down_level: i8,
    #[serde(default)]
    pub window_cp_pulses: usize,
    #[serde(default = "yes")]
    pub final_pi: bool,
    #[serde(default)]
    pub delay: Option<DelayConfig>,
    #[serde(default)]
    pub rf: Vec<RfConfig>,
    /// Pulse count of a plain CP sequence.
    #[serde(default)]
    pub cp_pulses: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Echo,
            tau_us: 0.0,
            down_level: 0,
            window_cp_pulses: 0,
            final_pi: true,
            delay: None,
            rf: Vec::new(),
            cp_pulses: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Offset of the first rf target from its bare Larmor frequency (kHz).
    RfOffset,
    /// Rotation angle of every rf target (units of π).
    Theta,
    /// Phase of every rf target (rad).
    Phase,
    /// Interaction window, or CP spacing for `kind = "cp"` (μs).
    Tau,
    /// Delay window (μs).
    Delay,
}

impl SweepKind {
    pub fn column(&self) -> &'static str {
        match self {
            SweepKind::RfOffset => "rf_offset_khz",
            SweepKind::Theta => "theta_rf_pi",
            SweepKind::Phase => "phase_rad",
            SweepKind::Tau => "tau_us",
            SweepKind::Delay => "delay_us",
        }
    }

    pub fn variable(&self) -> SweepVariable {
        match self {
            SweepKind::RfOffset => SweepVariable::RfFrequency,
            SweepKind::Theta => SweepVariable::Theta,
            SweepKind::Phase => SweepVariable::Phase,
            SweepKind::Tau => SweepVariable::Tau,
            SweepKind::Delay => SweepVariable::Delay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepKind,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl SweepConfig {
    /// Values in configuration units.
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryChoice {
    #[default]
    None,
    Ideal,
    #[serde(rename = "13C")]
    C13,
    #[serde(rename = "14N")]
    N14,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub t1_ms: Option<f64>,
    #[serde(default)]
    pub memory_protected: bool,
    #[serde(default)]
    pub memory: MemoryChoice,
    #[serde(default)]
    pub memory_position_nm: Option<[f64; 3]>,
    #[serde(default)]
    pub memory_frame: PositionFrame,
    /// Initial population of the memory |↑⟩ state.
    #[serde(default = "unit")]
    pub p_up: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            t1_ms: None,
            memory_protected: false,
            memory: MemoryChoice::None,
            memory_position_nm: None,
            memory_frame: PositionFrame::Nv,
            p_up: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameChoice {
    #[default]
    Rotating,
    Lab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub frame: FrameChoice,
    #[serde(default = "default_sampling")]
    pub sampling_fraction: f64,
    #[serde(default = "yes")]
    pub dipolar: bool,
    #[serde(default = "default_cluster")]
    pub max_cluster_size: usize,
    #[serde(default)]
    pub coupling_threshold_khz: f64,
}

fn default_sampling() -> f64 {
    0.01
}
fn default_cluster() -> usize {
    3
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            frame: FrameChoice::Rotating,
            sampling_fraction: default_sampling(),
            dipolar: true,
            max_cluster_size: default_cluster(),
            coupling_threshold_khz: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub stem: Option<String>,
    #[serde(default)]
    pub include_factors: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default)]
    pub unitarity: Option<f64>,
    #[serde(default)]
    pub trace: Option<f64>,
    #[serde(default)]
    pub hermiticity: Option<f64>,
    #[serde(default)]
    pub positivity: Option<f64>,
    /// Contract-row overrides for `oracle-check`.
    #[serde(default)]
    pub contract: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusConfig {
    pub samples: u64,
    pub min_a_parallel_khz: f64,
    pub resolutions_khz: Vec<f64>,
}

/// Parses and validates a configuration.
pub fn parse(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow!("invalid configuration: {e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

fn species(s: &str) -> Result<Species> {
    s.parse::<Species>().map_err(|e| anyhow!("{e}"))
}

fn frame_position(p: [f64; 3], frame: PositionFrame) -> Vec3 {
    let v = Vec3::from(p);
    match frame {
        PositionFrame::Nv => v,
        PositionFrame::Crystal => crystal_to_nv(&v),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bath;
        ensure!(b.b_z_tesla > 0.0, "bath.b_z_tesla must be positive");
        ensure!(b.samples >= 1, "bath.samples must be at least 1");
        match b.source {
            BathSource::Generate => {
                ensure!(b.path.is_none() && b.spins.is_empty(), "bath.path and bath.spins need another bath.source");
            }
            BathSource::File => {
                ensure!(b.path.is_some(), "bath.source = \"file\" needs bath.path");
                ensure!(b.samples == 1, "bath.samples > 1 needs bath.source = \"generate\"");
            }
            BathSource::Explicit => {
                ensure!(b.samples == 1, "bath.samples > 1 needs bath.source = \"generate\"");
                for (i, s) in b.spins.iter().enumerate() {
                    species(&s.species).with_context(|| format!("bath.spins[{i}].species"))?;
                }
            }
        }
        let p = &self.protocol;
        ensure!(matches!(p.down_level, 0 | -1), "protocol.down_level must be 0 or -1");
        match p.kind {
            ProtocolKind::Echo => {
                let d = p.delay.as_ref().ok_or_else(|| anyhow!("protocol.delay is required for an echo"))?;
                ensure!(d.duration_us > 0.0, "protocol.delay.duration_us must be positive");
                ensure!(matches!(d.down_level, 0 | -1), "protocol.delay.down_level must be 0 or -1");
                if d.kind == DelayKind::Memory {
                    ensure!(self.model.memory != MemoryChoice::None, "a memory delay needs model.memory");
                    ensure!(d.n_pulses == 0, "protocol.delay.n_pulses applies to dd delays only");
                } else {
                    ensure!(!d.illumination && !d.explicit_swap, "illumination and explicit_swap need a memory delay");
                }
                if let Some(f) = d.illumination_fidelity {
                    ensure!(d.illumination && f > 0.0 && f <= 1.0, "illumination_fidelity needs illumination and (0, 1]");
                }
                if let Some(s) = &d.nuclear_pi {
                    species(s).context("protocol.delay.nuclear_pi")?;
                }
            }
            ProtocolKind::Cp => {
                ensure!(p.cp_pulses >= 1, "protocol.cp_pulses must be at least 1 for kind = \"cp\"");
                ensure!(p.rf.is_empty() && p.delay.is_none(), "kind = \"cp\" takes no rf or delay");
            }
        }
        for (i, r) in p.rf.iter().enumerate() {
            species(&r.species).with_context(|| format!("protocol.rf[{i}].species"))?;
        }
        if let Some(s) = &self.sweep {
            ensure!(s.points >= 1, "sweep range is empty (sweep.points = 0)");
            ensure!(s.start.is_finite() && s.stop.is_finite(), "sweep bounds must be finite");
            if s.variable == SweepKind::RfOffset {
                ensure!(!p.rf.is_empty(), "an rf-offset sweep needs a protocol.rf entry");
            }
            if p.kind == ProtocolKind::Cp {
                ensure!(s.variable == SweepKind::Tau, "kind = \"cp\" sweeps the pulse spacing (variable = \"tau\")");
                ensure!(s.start > 0.0 && s.stop > 0.0, "CP spacing must be positive");
            }
        }
        let m = &self.model;
        ensure!((0.0..=1.0).contains(&m.p_up), "model.p_up must lie in [0, 1]");
        if let Some(t1) = m.t1_ms {
            ensure!(t1 > 0.0, "model.t1_ms must be positive");
        }
        ensure!(
            (m.memory == MemoryChoice::C13) == m.memory_position_nm.is_some(),
            "model.memory_position_nm is required for, and only for, a 13C memory"
        );
        let e = &self.engine;
        ensure!(e.sampling_fraction > 0.0 && e.sampling_fraction <= 1.0, "engine.sampling_fraction must lie in (0, 1]");
        ensure!(e.max_cluster_size >= 1, "engine.max_cluster_size must be at least 1");
        ensure!(e.coupling_threshold_khz >= 0.0, "engine.coupling_threshold_khz must be non-negative");
        self.contract_options().validate().map_err(|e| anyhow!("tolerances.contract: {e}"))?;
        for (k, v) in [
            ("unitarity", self.tolerances.unitarity),
            ("trace", self.tolerances.trace),
            ("hermiticity", self.tolerances.hermiticity),
            ("positivity", self.tolerances.positivity),
        ] {
            if let Some(v) = v {
                ensure!(v > 0.0, "tolerances.{k} must be positive");
            }
        }
        if let Some(c) = &self.census {
            ensure!(c.samples >= 1, "census.samples must be at least 1");
            ensure!(!c.resolutions_khz.is_empty(), "census.resolutions_khz is empty");
            ensure!(c.resolutions_khz.iter().all(|r| *r > 0.0), "census resolutions must be positive");
        }
        Ok(())
    }

    pub fn constants(&self) -> PhysicalConstants {
        PhysicalConstants::default()
    }

    pub fn manifold(&self) -> QubitManifold {
        if self.protocol.down_level == 0 {
            QubitManifold::zero()
        } else {
            QubitManifold::minus()
        }
    }

    pub fn bath_spec(&self, seed: u64) -> BathSpec {
        BathSpec {
            seed,
            abundance: self.bath.abundance,
            shell_radius: self.bath.shell_radius_nm,
            exclusion_radius: self.bath.exclusion_radius_nm,
            b_z: self.bath.b_z_tesla,
            manifold: self.manifold(),
        }
    }

    /// Bath for a non-generated source.
    pub fn fixed_bath(&self) -> Result<SpinBath> {
        let c = self.constants();
        match self.bath.source {
            BathSource::Generate => bail!("generated baths depend on the seed"),
            BathSource::File => {
                let path = self.bath.path.as_ref().expect("validated");
                let text = std::fs::read_to_string(path).with_context(|| format!("reading bath file {path}"))?;
                let mut bath = SpinBath::from_text(&text, c)?;
                bath.b_z = self.bath.b_z_tesla;
                Ok(bath)
            }
            BathSource::Explicit => {
                let mut bath = SpinBath::empty(self.bath.b_z_tesla, self.manifold(), c);
                bath.seed = self.bath.seed;
                for s in &self.bath.spins {
                    let spin = NuclearSpin::new(frame_position(s.position_nm, s.frame), species(&s.species)?);
                    match s.hyperfine_khz {
                        Some([a, b]) => {
                            bath.add_spin_with_hyperfine(spin, HyperfineVector::from_components(khz(a), khz(b)));
                        }
                        None => {
                            bath.add_spin(spin)?;
                        }
                    }
                }
                Ok(bath)
            }
        }
    }

    fn rf_frequency(&self, offset_khz: f64, species_label: &str) -> Result<f64> {
        let c = self.constants();
        Ok(c.larmor(species(species_label)?, self.bath.b_z_tesla) + khz(offset_khz))
    }

    pub fn protocol(&self) -> Result<EchoProtocol> {
        let p = &self.protocol;
        ensure!(p.kind == ProtocolKind::Echo, "CP runs do not build an echo protocol");
        let d = p.delay.as_ref().expect("validated");
        let delay = match d.kind {
            DelayKind::Dd => {
                DelaySpec::DdProtected { duration: d.duration_us * 1e-6, n_pulses: d.n_pulses, down_level: d.down_level }
            }
            DelayKind::Memory => DelaySpec::MemorySwap {
                duration: d.duration_us * 1e-6,
                memory: 0,
                realization: if d.explicit_swap { SwapRealization::Explicit } else { SwapRealization::Ideal },
                illumination: if d.illumination {
                    Some(match d.illumination_fidelity {
                        Some(f) => {
                            let base = IlluminationRates::default();
                            IlluminationRates::with_fidelity(base.pump, f, base.dephasing)?
                        }
                        None => IlluminationRates::default(),
                    })
                } else {
                    None
                },
                nuclear_pi: d.nuclear_pi.as_deref().map(species).transpose()?,
            },
        };
        let rf_targets = p
            .rf
            .iter()
            .map(|r| {
                Ok(RfTarget {
                    frequency: self.rf_frequency(r.offset_khz, &r.species)?,
                    theta: r.theta_pi * PI,
                    phase: r.phase,
                    species: species(&r.species)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EchoProtocol {
            tau: p.tau_us * 1e-6,
            interaction_down_level: p.down_level,
            window_cp_pulses: p.window_cp_pulses,
            delay,
            rf_targets,
            final_pi: p.final_pi,
        })
    }

    /// Sweep values converted to core units.
    pub fn sweep_values(&self) -> Result<Vec<f64>> {
        let s = self.sweep.as_ref().ok_or_else(|| anyhow!("this command needs a [sweep] section"))?;
        let values = s.values();
        ensure!(!values.is_empty(), "sweep range is empty");
        Ok(match s.variable {
            SweepKind::RfOffset => {
                let r = &self.protocol.rf[0];
                values.iter().map(|v| self.rf_frequency(*v, &r.species)).collect::<Result<_>>()?
            }
            SweepKind::Theta => values.iter().map(|v| v * PI).collect(),
            SweepKind::Phase => values,
            SweepKind::Tau | SweepKind::Delay => values.iter().map(|v| v * 1e-6).collect(),
        })
    }

    pub fn memory(&self) -> Result<Option<MemorySpec>> {
        let m = &self.model;
        let kind = match m.memory {
            MemoryChoice::None => return Ok(None),
            MemoryChoice::Ideal => MemoryKind::Ideal,
            MemoryChoice::N14 => MemoryKind::Nitrogen,
            MemoryChoice::C13 => MemoryKind::Carbon(NuclearSpin::new(
                frame_position(m.memory_position_nm.expect("validated"), m.memory_frame),
                Species::C13,
            )),
        };
        Ok(Some(MemorySpec { kind, polarization: m.p_up }))
    }

    pub fn lindblad(&self) -> Option<LindbladModel> {
        self.model.t1_ms.map(|t1| LindbladModel { t1: Some(t1 * 1e-3), memory_protected: self.model.memory_protected })
    }

    pub fn engine_options(&self) -> EngineOptions {
        let d = Tolerances::default();
        let t = &self.tolerances;
        EngineOptions {
            mode: match self.engine.frame {
                FrameChoice::Rotating => FrameMode::Rotating,
                FrameChoice::Lab => FrameMode::Lab,
            },
            sampling_fraction: self.engine.sampling_fraction,
            dipolar: self.engine.dipolar,
            tolerances: Tolerances {
                unitarity: t.unitarity.unwrap_or(d.unitarity),
                trace: t.trace.unwrap_or(d.trace),
                hermiticity: t.hermiticity.unwrap_or(d.hermiticity),
                positivity: t.positivity.unwrap_or(d.positivity),
            },
        }
    }

    pub fn contract_options(&self) -> ContractOptions {
        ContractOptions { flip_a_parallel_sign: false, tolerances: self.tolerances.contract.clone() }
    }

    /// Seeds of every bath realisation, in reduction order.
    pub fn seeds(&self) -> Vec<u64> {
        if self.bath.samples == 1 {
            vec![self.bath.seed]
        } else {
            (0..self.bath.samples).map(|i| echo_core::bath::derive_seed(self.bath.seed, i)).collect()
        }
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| if self.meta.name.is_empty() { "run".into() } else { self.meta.name.clone() })
    }

    /// Canonical text of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[bath]
source = "explicit"
[[bath.spins]]
species = "13C"
position_nm = [0.8, 0.3, 0.5]
hyperfine_khz = [12.0, 0.0]

[protocol]
tau_us = 10.0
[protocol.delay]
kind = "dd"
duration_us = 200.0
n_pulses = 20
[[protocol.rf]]
offset_khz = -6.0
theta_pi = 1.0

[sweep]
variable = "rf-offset"
start = -8.0
stop = -4.0
points = 5
"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.sweep_values().unwrap().len(), 5);
        assert_eq!(parse(&cfg.canonical()).unwrap(), cfg);
        let p = cfg.protocol().unwrap();
        assert_eq!(p.rf_targets[0].theta, PI);
        assert_eq!(cfg.fixed_bath().unwrap().len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let text = MINIMAL.replace("tau_us = 10.0", "tau_us = 10.0\ntua_us = 3.0");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("tua_us"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let err = parse(&MINIMAL.replace("points = 5", "points = 0")).unwrap_err().to_string();
        assert!(err.contains("empty"), "{err}");
    }

    #[test]
    fn memory_delay_needs_a_memory() {
        let text = MINIMAL.replace("kind = \"dd\"", "kind = \"memory\"").replace("n_pulses = 20", "");
        assert!(parse(&text).is_err());
        let text = format!("{text}\n[model]\nmemory = \"14N\"\n");
        assert!(parse(&text).is_ok());
    }

    #[test]
    fn seeds_are_derived_for_multiple_samples() {
        let mut cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.seeds(), vec![0]);
        cfg.bath.source = BathSource::Generate;
        cfg.bath.spins.clear();
        cfg.bath.samples = 3;
        cfg.bath.seed = 9;
        let s = cfg.seeds();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], echo_core::bath::derive_seed(9, 0));
    }
}
