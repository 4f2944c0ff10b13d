//! Command implementations shared by the binary and the tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use echo_core::bath::{census, generate_bath, partition_clusters, SpinBath};
use echo_core::cce::{cce_signal, run_sweep, SweepRequest, SweepSpec};
use echo_core::constants::{khz, to_khz};
use echo_core::Species;
use echo_core::contract::{run_contract, ContractRow};
use echo_core::dynamics::PropagationReport;
use echo_core::linalg::C64;
use echo_core::schedule::{build_cp, build_delayed_entanglement_echo, ControlSchedule};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{self, BathSource, DelayKind, ProtocolKind, RunConfig, SweepKind};
use crate::output::{write_result, Row, Table};
use crate::presets;

/// Where a configuration comes from.
#[derive(Debug, Clone)]
pub enum ConfigSource {
    Path(PathBuf),
    Preset(String),
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub fn load(source: &ConfigSource, overrides: &Overrides) -> Result<RunConfig> {
    let text = match source {
        ConfigSource::Path(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        ConfigSource::Preset(name) => presets::get(name)?.to_string(),
    };
    let mut cfg = config::parse(&text)?;
    if let Some(s) = overrides.seed {
        cfg.bath.seed = s;
    }
    if let Some(n) = overrides.samples {
        cfg.bath.samples = n;
    }
    if let Some(d) = &overrides.out_dir {
        cfg.output.dir = Some(d.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// SHA-256 of the effective configuration, ignoring the output section.
pub fn config_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = Default::default();
    format!("{:x}", Sha256::digest(format!("{c:?}").as_bytes()))
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| ".".into()))
}

fn bath_for(cfg: &RunConfig, seed: u64) -> Result<SpinBath> {
    match cfg.bath.source {
        BathSource::Generate => Ok(generate_bath(&cfg.bath_spec(seed), &cfg.constants())?),
        _ => cfg.fixed_bath(),
    }
}

/// One bath realisation of a sweep: per-point coherence and diagnostics.
struct Realisation {
    points: Vec<(C64, Vec<C64>, Option<String>, PropagationReport)>,
    metadata: BTreeMap<String, String>,
    largest_dropped: f64,
}

fn echo_realisation(cfg: &RunConfig, bath: &SpinBath) -> Result<Realisation> {
    let sweep = cfg.sweep.as_ref().expect("checked by compute");
    let req = SweepRequest {
        bath,
        protocol: cfg.protocol()?,
        sweep: SweepSpec { variable: sweep.variable.variable(), values: cfg.sweep_values()? },
        model: cfg.lindblad(),
        memory: cfg.memory()?,
        options: cfg.engine_options(),
        max_cluster_size: cfg.engine.max_cluster_size,
        coupling_threshold: khz(cfg.engine.coupling_threshold_khz),
    };
    let r = run_sweep(&req)?;
    Ok(Realisation {
        points: r.points.into_iter().map(|p| (p.coherence, p.factors, p.error, p.report)).collect(),
        metadata: r.metadata,
        largest_dropped: r.largest_dropped,
    })
}

fn cp_schedule(cfg: &RunConfig, tau_cp: f64) -> Result<ControlSchedule> {
    let mut s = build_cp(cfg.protocol.cp_pulses, tau_cp, 0.0)?;
    s.initial_down_level = cfg.protocol.down_level;
    Ok(s)
}

fn cp_realisation(cfg: &RunConfig, bath: &SpinBath) -> Result<Realisation> {
    bath.validate()?;
    let partition = partition_clusters(bath, cfg.engine.max_cluster_size, khz(cfg.engine.coupling_threshold_khz))?;
    let options = cfg.engine_options();
    let model = cfg.lindblad();
    let memory = cfg.memory()?;
    let points = cfg
        .sweep_values()?
        .par_iter()
        .map(|&tau_cp| {
            let attempt = || -> echo_core::Result<_> {
                let s = cp_schedule(cfg, tau_cp).map_err(|e| echo_core::EchoError::Validation(e.to_string()))?;
                cce_signal(bath, &partition, &s, model.as_ref(), memory.as_ref(), &options)
            };
            match attempt() {
                Ok(r) => {
                    let err = r.report.failed.then(|| r.report.messages.join("; "));
                    (r.total, r.factors, err, r.report)
                }
                Err(e) => (
                    C64::new(f64::NAN, f64::NAN),
                    Vec::new(),
                    Some(e.to_string()),
                    PropagationReport { failed: true, ..Default::default() },
                ),
            }
        })
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("bath_spins".into(), bath.len().to_string());
    metadata.insert("clusters".into(), partition.clusters.len().to_string());
    metadata.insert("frame".into(), format!("{:?}", options.mode));
    metadata.insert("sampling_fraction".into(), options.sampling_fraction.to_string());
    Ok(Realisation { points, metadata, largest_dropped: partition.largest_dropped() })
}

/// Offsets ω_j − ω_L (kHz) of the addressed species that fall inside an
/// rf-offset sweep: −A∥/2 under DD in {+1, 0}, −A∥ with the electron
/// parked in |+1⟩ and 0 when illumination pumps it into |0⟩.
fn expected_lines(cfg: &RunConfig, bath: &SpinBath) -> Result<Option<String>> {
    let (Some(sweep), Some(rf)) = (&cfg.sweep, cfg.protocol.rf.first()) else { return Ok(None) };
    if sweep.variable != SweepKind::RfOffset {
        return Ok(None);
    }
    let weight = match cfg.protocol.delay.as_ref().map(|d| (d.kind, d.down_level)) {
        Some((DelayKind::Dd, down)) => 0.5 * (1.0 + down as f64),
        Some((DelayKind::Memory, _)) if cfg.protocol.delay.as_ref().is_some_and(|d| d.illumination) => 0.0,
        Some((DelayKind::Memory, _)) => 1.0,
        None => return Ok(None),
    };
    let species: Species = rf.species.parse()?;
    let (lo, hi) = (sweep.start.min(sweep.stop), sweep.start.max(sweep.stop));
    let mut offsets: Vec<f64> = bath
        .spins
        .iter()
        .filter(|s| s.spin.species == species)
        .map(|s| -weight * to_khz(s.a_parallel()))
        .filter(|w| (lo..=hi).contains(w))
        .collect();
    offsets.sort_by(f64::total_cmp);
    Ok(Some(offsets.iter().map(|w| format!("{:.4}", w + 0.0)).collect::<Vec<_>>().join(",")))
}

/// Evaluates the configured sweep over every bath realisation and
/// averages the complex signal in seed order.
pub fn compute(cfg: &RunConfig) -> Result<Table> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| anyhow!("`run` needs a [sweep] section"))?;
    let values = sweep.values();
    let seeds = cfg.seeds();
    let mut runs = Vec::with_capacity(seeds.len());
    let mut lines = None;
    for &seed in &seeds {
        let bath = bath_for(cfg, seed)?;
        if seeds.len() == 1 {
            lines = expected_lines(cfg, &bath)?;
        }
        runs.push(match cfg.protocol.kind {
            ProtocolKind::Echo => echo_realisation(cfg, &bath)?,
            ProtocolKind::Cp => cp_realisation(cfg, &bath)?,
        });
    }
    let n = runs.len() as f64;
    let rows = values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut sum = C64::new(0.0, 0.0);
            let mut errors = Vec::new();
            for (k, r) in runs.iter().enumerate() {
                let (c, _, e, _) = &r.points[i];
                sum += c;
                if let Some(e) = e {
                    errors.push(if runs.len() > 1 { format!("seed {}: {e}", seeds[k]) } else { e.clone() });
                }
            }
            let factors = if runs.len() == 1 { runs[0].points[i].1.clone() } else { Vec::new() };
            Row { value, coherence: sum / n, factors, error: (!errors.is_empty()).then(|| errors.join("; ")) }
        })
        .collect();

    let mut metadata = BTreeMap::new();
    for r in &runs {
        for (k, v) in &r.metadata {
            metadata
                .entry(k.clone())
                .and_modify(|e: &mut Vec<String>| {
                    if !e.contains(v) {
                        e.push(v.clone())
                    }
                })
                .or_insert_with(|| vec![v.clone()]);
        }
    }
    let mut metadata: BTreeMap<String, String> = metadata.into_iter().map(|(k, v)| (k, v.join(","))).collect();
    metadata.remove("seed");
    let reports: Vec<&PropagationReport> = runs.iter().flat_map(|r| r.points.iter().map(|p| &p.3)).collect();
    let rep = PropagationReport::combine(reports);
    metadata.insert("cli_version".into(), env!("CARGO_PKG_VERSION").into());
    metadata.insert("config_sha256".into(), config_digest(cfg));
    metadata.insert("name".into(), cfg.meta.name.clone());
    metadata.insert("desk_scale".into(), cfg.meta.desk_scale.to_string());
    metadata.insert("protocol".into(), format!("{:?}", cfg.protocol.kind).to_lowercase());
    metadata.insert("seeds".into(), seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
    metadata.insert("samples".into(), seeds.len().to_string());
    metadata.insert("steps".into(), rep.steps.to_string());
    metadata.insert("max_step".into(), format!("{:e}", rep.max_step));
    metadata.insert("unitarity_defect".into(), format!("{:e}", rep.unitarity_defect));
    metadata.insert("trace_defect".into(), format!("{:e}", rep.trace_defect));
    let dropped = runs.iter().map(|r| r.largest_dropped).fold(0.0, f64::max);
    metadata.insert("largest_dropped_coupling".into(), format!("{dropped:e}"));
    if let Some(l) = lines {
        metadata.insert("expected_lines_khz".into(), l);
    }
    Ok(Table { column: sweep.variable.column().into(), metadata, rows })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub path: PathBuf,
    pub failed_points: usize,
}

/// `run`: computes the sweep and writes `<stem>.tsv`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let table = compute(cfg)?;
    let failed = table.failed_points();
    let body = table.render(cfg.output.include_factors);
    let path = write_result(&out_dir(cfg), &cfg.stem(), &body, failed == 0)?;
    Ok(RunOutcome { path, failed_points: failed })
}

/// `census`: addressable-spin statistics per resolution.
pub fn census_table(cfg: &RunConfig) -> Result<String> {
    let c = cfg.census.as_ref().ok_or_else(|| anyhow!("`census` needs a [census] section"))?;
    if cfg.bath.source != BathSource::Generate {
        bail!("`census` needs bath.source = \"generate\"");
    }
    let res: Vec<f64> = c.resolutions_khz.iter().map(|r| khz(*r)).collect();
    let rows = census(&cfg.bath_spec(cfg.bath.seed), &cfg.constants(), c.samples, khz(c.min_a_parallel_khz), &res)?;
    let mut out = String::new();
    let _ = writeln!(out, "# cli_version: {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# config_sha256: {}", config_digest(cfg));
    let _ = writeln!(out, "# name: {}", cfg.meta.name);
    let _ = writeln!(out, "# desk_scale: {}", cfg.meta.desk_scale);
    let _ = writeln!(out, "# base_seed: {}", cfg.bath.seed);
    let _ = writeln!(out, "# samples: {}", c.samples);
    let _ = writeln!(out, "# shell_radius_nm: {}", cfg.bath.shell_radius_nm);
    let _ = writeln!(out, "# min_a_parallel_khz: {}", c.min_a_parallel_khz);
    out.push_str("resolution_khz\tmean\tstd\n");
    for (r, row) in c.resolutions_khz.iter().zip(&rows) {
        let _ = writeln!(out, "{:.6e}\t{:.9e}\t{:.9e}", r, row.mean, row.std);
    }
    Ok(out)
}

pub fn run_census(cfg: &RunConfig) -> Result<PathBuf> {
    let body = census_table(cfg)?;
    write_result(&out_dir(cfg), &format!("{}_census", cfg.stem()), &body, true)
}

/// `oracle-check`: the contract rows and whether all of them passed.
pub fn oracle_check(cfg: Option<&RunConfig>, inject_sign_flip: bool) -> Result<(Vec<ContractRow>, bool)> {
    let mut opts = cfg.map(RunConfig::contract_options).unwrap_or_default();
    opts.flip_a_parallel_sign = inject_sign_flip;
    let constants = cfg.map(RunConfig::constants).unwrap_or_default();
    let rows = run_contract(&constants, &opts)?;
    let ok = rows.iter().all(|r| r.passed);
    Ok((rows, ok))
}

pub fn render_contract(rows: &[ContractRow]) -> String {
    let mut out = String::from("row\terror\ttolerance\tstatus\tnote\n");
    for r in rows {
        let status = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{}\t{:.3e}\t{:.3e}\t{status}\t{}", r.name, r.error, r.tolerance, r.note);
    }
    out
}

/// `export-schedule`: the control schedule of the configured protocol,
/// at the first sweep value when a sweep is present.
pub fn schedule_text(cfg: &RunConfig) -> Result<String> {
    let first = match &cfg.sweep {
        Some(_) => Some(cfg.sweep_values()?[0]),
        None => None,
    };
    let schedule = match cfg.protocol.kind {
        ProtocolKind::Echo => {
            let mut p = cfg.protocol()?;
            if let (Some(s), Some(v)) = (&cfg.sweep, first) {
                p = SweepSpec { variable: s.variable.variable(), values: vec![v] }.apply(&p, v)?;
            }
            build_delayed_entanglement_echo(&p, &cfg.constants())?
        }
        ProtocolKind::Cp => cp_schedule(cfg, first.ok_or_else(|| anyhow!("CP export needs a [sweep]"))?)?,
    };
    Ok(schedule.to_text())
}

pub fn write_schedule(cfg: &RunConfig, path: Option<&Path>) -> Result<String> {
    let text = schedule_text(cfg)?;
    if let Some(p) = path {
        std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(text)
}
