//! Cluster factorisation of the echo signal and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{partition_clusters, ClusterPartition, SpinBath};
use crate::dynamics::{simulate_coherence, EngineOptions, LindbladModel, MemorySpec, PropagationReport, SystemModel};
use crate::error::{EchoError, Result};
use crate::linalg::C64;
use crate::schedule::{build_delayed_entanglement_echo, ControlSchedule, DelaySpec, EchoProtocol};

#[derive(Debug, Clone, PartialEq)]
pub struct CceResult {
    /// L_empty · Π_c (L_c / L_empty), complex.
    pub total: C64,
    /// Electron plus memory without bath spins.
    pub empty: C64,
    pub factors: Vec<C64>,
    pub largest_cluster: usize,
    pub largest_dropped: f64,
    pub report: PropagationReport,
}

impl CceResult {
    pub fn signed(&self) -> f64 {
        self.total.re
    }

    pub fn magnitude(&self) -> f64 {
        self.total.norm()
    }

    pub fn population(&self) -> f64 {
        0.5 * (1.0 + self.total.re)
    }
}

/// Evolves each cluster together with the electron (and memory) and
/// multiplies the normalised cluster factors.
pub fn cce_signal(
    bath: &SpinBath,
    partition: &ClusterPartition,
    schedule: &ControlSchedule,
    model: Option<&LindbladModel>,
    memory: Option<&MemorySpec>,
    options: &EngineOptions,
) -> Result<CceResult> {
    if !partition.is_partition_of(bath.len()) {
        return Err(EchoError::Validation("cluster partition does not cover the bath".into()));
    }
    let run = |indices: &[usize]| -> Result<(C64, PropagationReport)> {
        let sys = SystemModel::from_bath(bath, indices, memory)?;
        let (c, r) = simulate_coherence(&sys, schedule, model, options)?;
        Ok((c.complex, r))
    };
    let (empty, empty_report) = run(&[])?;
    let results: Vec<Result<(C64, PropagationReport)>> =
        partition.clusters.par_iter().map(|c| run(c)).collect();
    let mut factors = Vec::with_capacity(results.len());
    let mut reports = vec![empty_report];
    for r in results {
        let (f, rep) = r?;
        factors.push(f);
        reports.push(rep);
    }
    let total = if empty.norm() < 1e-14 {
        factors.iter().fold(empty, |acc, f| acc * f)
    } else {
        factors.iter().fold(empty, |acc, f| acc * (f / empty))
    };
    Ok(CceResult {
        total,
        empty,
        factors,
        largest_cluster: partition.clusters.iter().map(Vec::len).max().unwrap_or(0),
        largest_dropped: partition.largest_dropped(),
        report: PropagationReport::combine(&reports),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Frequency of the first rf target.
    RfFrequency,
    /// Rotation angle of every rf target.
    Theta,
    /// Phase of every rf target.
    Phase,
    /// Interaction window length.
    Tau,
    /// Length of the delay window.
    Delay,
}

impl SweepVariable {
    pub fn label(&self) -> &'static str {
        match self {
            SweepVariable::RfFrequency => "rf_frequency",
            SweepVariable::Theta => "theta_rf",
            SweepVariable::Phase => "phase",
            SweepVariable::Tau => "tau",
            SweepVariable::Delay => "delay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn linspace(variable: SweepVariable, start: f64, stop: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(EchoError::Validation("sweep needs at least one point".into()));
        }
        let values = if points == 1 {
            vec![start]
        } else {
            (0..points).map(|i| start + (stop - start) * i as f64 / (points - 1) as f64).collect()
        };
        Ok(Self { variable, values })
    }

    /// Protocol with the sweep variable set to `value`.
    pub fn apply(&self, protocol: &EchoProtocol, value: f64) -> Result<EchoProtocol> {
        let mut p = protocol.clone();
        match self.variable {
            SweepVariable::Tau => p.tau = value,
            SweepVariable::RfFrequency => {
                p.rf_targets
                    .first_mut()
                    .ok_or_else(|| EchoError::Validation("frequency sweep needs an rf target".into()))?
                    .frequency = value;
            }
            SweepVariable::Theta => p.rf_targets.iter_mut().for_each(|t| t.theta = value),
            SweepVariable::Phase => p.rf_targets.iter_mut().for_each(|t| t.phase = value),
            SweepVariable::Delay => match &mut p.delay {
                DelaySpec::DdProtected { duration, .. } | DelaySpec::MemorySwap { duration, .. } => *duration = value,
            },
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRequest<'a> {
    pub bath: &'a SpinBath,
    pub protocol: EchoProtocol,
    pub sweep: SweepSpec,
    pub model: Option<LindbladModel>,
    pub memory: Option<MemorySpec>,
    pub options: EngineOptions,
    pub max_cluster_size: usize,
    pub coupling_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPoint {
    pub value: f64,
    pub coherence: C64,
    pub factors: Vec<C64>,
    pub report: PropagationReport,
    /// Set when the point could not be evaluated or breached a tolerance.
    pub error: Option<String>,
}

impl SpectrumPoint {
    pub fn signed(&self) -> f64 {
        self.coherence.re
    }

    pub fn magnitude(&self) -> f64 {
        self.coherence.norm()
    }

    pub fn population(&self) -> f64 {
        0.5 * (1.0 + self.coherence.re)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub variable: SweepVariable,
    pub points: Vec<SpectrumPoint>,
    pub metadata: BTreeMap<String, String>,
    pub largest_dropped: f64,
}

impl SpectrumResult {
    pub fn failed_points(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    pub fn report(&self) -> PropagationReport {
        PropagationReport::combine(self.points.iter().map(|p| &p.report))
    }

    /// Tab-separated table preceded by `# key: value` metadata lines.
    pub fn to_table(&self, include_factors: bool) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let rep = self.report();
        let _ = writeln!(out, "# steps: {}", rep.steps);
        let _ = writeln!(out, "# max_step: {:e}", rep.max_step);
        let _ = writeln!(out, "# unitarity_defect: {:e}", rep.unitarity_defect);
        let _ = writeln!(out, "# trace_defect: {:e}", rep.trace_defect);
        let _ = writeln!(out, "# largest_dropped_coupling: {:e}", self.largest_dropped);
        let _ = writeln!(out, "# failed_points: {}", self.failed_points());
        let mut header = format!("{}\tL\tL_abs\tP\tstatus", self.variable.label());
        if include_factors {
            header.push_str("\tfactors");
        }
        let _ = writeln!(out, "{header}");
        for p in &self.points {
            let status = if p.error.is_some() { "failed" } else { "ok" };
            let _ = write!(
                out,
                "{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{status}",
                p.value,
                p.signed(),
                p.magnitude(),
                p.population()
            );
            if include_factors {
                let f: Vec<String> = p.factors.iter().map(|z| format!("{:.9e}{:+.9e}i", z.re, z.im)).collect();
                let _ = write!(out, "\t{}", f.join(","));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates the echo signal at every sweep value. Failures are recorded
/// per point and do not abort the sweep.
pub fn run_sweep(req: &SweepRequest) -> Result<SpectrumResult> {
    if req.sweep.values.is_empty() {
        return Err(EchoError::Validation("sweep range is empty".into()));
    }
    req.bath.validate()?;
    let partition = partition_clusters(req.bath, req.max_cluster_size, req.coupling_threshold)?;
    let constants = &req.bath.constants;
    let points: Vec<SpectrumPoint> = req
        .sweep
        .values
        .par_iter()
        .map(|&value| {
            let attempt = || -> Result<CceResult> {
                let protocol = req.sweep.apply(&req.protocol, value)?;
                let schedule = build_delayed_entanglement_echo(&protocol, constants)?;
                cce_signal(req.bath, &partition, &schedule, req.model.as_ref(), req.memory.as_ref(), &req.options)
            };
            match attempt() {
                Ok(r) => {
                    let error = r.report.failed.then(|| r.report.messages.join("; "));
                    SpectrumPoint { value, coherence: r.total, factors: r.factors, report: r.report, error }
                }
                Err(e) => SpectrumPoint {
                    value,
                    coherence: C64::new(f64::NAN, f64::NAN),
                    factors: Vec::new(),
                    report: PropagationReport { failed: true, ..Default::default() },
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    metadata.insert("seed".into(), req.bath.seed.to_string());
    metadata.insert("bath_spins".into(), req.bath.len().to_string());
    metadata.insert("clusters".into(), partition.clusters.len().to_string());
    metadata.insert("max_cluster_size".into(), req.max_cluster_size.to_string());
    metadata.insert("coupling_threshold".into(), format!("{:e}", req.coupling_threshold));
    let t = &req.options.tolerances;
    metadata.insert(
        "tolerances".into(),
        format!("unitarity={:e} trace={:e} hermiticity={:e} positivity={:e}", t.unitarity, t.trace, t.hermiticity, t.positivity),
    );
    metadata.insert("frame".into(), format!("{:?}", req.options.mode));
    metadata.insert("sampling_fraction".into(), req.options.sampling_fraction.to_string());
    Ok(SpectrumResult { variable: req.sweep.variable, points, metadata, largest_dropped: partition.largest_dropped() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{khz, PhysicalConstants, Species};
    use crate::dynamics::{evolve, coherence, QuantumState};
    use crate::schedule::{build_cp, DelaySpec};
    use crate::spin_system::{NuclearSpin, QubitManifold, Vec3};

    fn small_bath() -> SpinBath {
        let c = PhysicalConstants::default();
        let mut b = SpinBath::empty(0.467, QubitManifold::minus(), c);
        for p in [[0.6, 0.2, 0.5], [-0.4, 0.7, -0.3], [0.1, -0.8, 0.6]] {
            b.add_spin(NuclearSpin::new(Vec3::from(p), Species::C13)).unwrap();
        }
        b
    }

    #[test]
    fn single_cluster_equals_direct_evolution() {
        let bath = small_bath();
        let sched = build_cp(2, 30e-6, 0.0).unwrap();
        let opts = EngineOptions::default();
        let part = partition_clusters(&bath, 3, 0.0).unwrap();
        assert_eq!(part.clusters.len(), 1);
        let r = cce_signal(&bath, &part, &sched, None, None, &opts).unwrap();
        let sys = SystemModel::from_bath(&bath, &[0, 1, 2], None).unwrap();
        let (out, _) = evolve(&sys, QuantumState::initial(&sys, -1).unwrap(), &sched, None, &opts).unwrap();
        let direct = coherence(&out, -1).complex;
        assert!((r.total - direct).norm() < 1e-12);
    }

    #[test]
    fn non_interacting_spins_factorise() {
        let bath = small_bath();
        let sched = build_cp(2, 30e-6, 0.0).unwrap();
        let opts = EngineOptions { dipolar: false, ..Default::default() };
        let whole = cce_signal(&bath, &partition_clusters(&bath, 3, 0.0).unwrap(), &sched, None, None, &opts).unwrap();
        let split = cce_signal(&bath, &partition_clusters(&bath, 1, 0.0).unwrap(), &sched, None, None, &opts).unwrap();
        assert!((whole.total - split.total).norm() < 1e-10);
        assert_eq!(split.factors.len(), 3);
    }

    #[test]
    fn sweep_of_one_point_equals_single_run() {
        let bath = small_bath();
        let c = PhysicalConstants::default();
        let protocol = EchoProtocol {
            tau: 12e-6,
            interaction_down_level: -1,
            window_cp_pulses: 0,
            delay: DelaySpec::DdProtected { duration: 40e-6, n_pulses: 4, down_level: 0 },
            rf_targets: vec![crate::schedule::RfTarget {
                frequency: c.larmor(Species::C13, 0.467) - khz(2.0),
                theta: 1.0,
                phase: 0.0,
                species: Species::C13,
            }],
            final_pi: true,
        };
        let sweep = SweepSpec::linspace(SweepVariable::Theta, 2.0, 2.0, 1).unwrap();
        let req = SweepRequest {
            bath: &bath,
            protocol: protocol.clone(),
            sweep,
            model: None,
            memory: None,
            options: EngineOptions::default(),
            max_cluster_size: 3,
            coupling_threshold: 0.0,
        };
        let res = run_sweep(&req).unwrap();
        let mut p = protocol;
        p.rf_targets[0].theta = 2.0;
        let sched = build_delayed_entanglement_echo(&p, &c).unwrap();
        let part = partition_clusters(&bath, 3, 0.0).unwrap();
        let direct = cce_signal(&bath, &part, &sched, None, None, &EngineOptions::default()).unwrap();
        assert_eq!(res.points[0].coherence, direct.total);
        let table = res.to_table(true);
        assert!(table.contains("# seed:"));
        assert!(table.lines().last().unwrap().contains("ok"));
        assert!(SweepSpec::linspace(SweepVariable::Tau, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn delay_sweep_sets_the_delay_window() {
        let protocol = EchoProtocol {
            tau: 12e-6,
            interaction_down_level: 0,
            window_cp_pulses: 0,
            delay: DelaySpec::DdProtected { duration: 40e-6, n_pulses: 4, down_level: 0 },
            rf_targets: vec![],
            final_pi: true,
        };
        let sweep = SweepSpec::linspace(SweepVariable::Delay, 1e-4, 2e-4, 2).unwrap();
        let p = sweep.apply(&protocol, 2e-4).unwrap();
        assert_eq!(p.delay.duration(), 2e-4);
        assert_eq!(p.tau, protocol.tau);
        assert_eq!(SweepVariable::Delay.label(), "delay");
    }

    #[test]
    fn failing_points_are_flagged() {
        let bath = small_bath();
        let protocol = EchoProtocol {
            tau: 12e-6,
            interaction_down_level: -1,
            window_cp_pulses: 0,
            delay: DelaySpec::DdProtected { duration: 40e-6, n_pulses: 4, down_level: 0 },
            rf_targets: vec![],
            final_pi: true,
        };
        let sweep = SweepSpec { variable: SweepVariable::Tau, values: vec![10e-6, -1.0] };
        let req = SweepRequest {
            bath: &bath,
            protocol,
            sweep,
            model: None,
            memory: None,
            options: EngineOptions::default(),
            max_cluster_size: 1,
            coupling_threshold: 0.0,
        };
        let res = run_sweep(&req).unwrap();
        assert!(res.points[0].error.is_none());
        assert!(res.points[1].error.is_some());
        assert_eq!(res.failed_points(), 1);
    }
}
