//! Random 13C baths on the diamond lattice around an NV centre, cluster
//! partitioning and the addressable-spin census.
//!
//! Sampling uses ChaCha8 seeded with `seed_from_u64`. Each lattice site
//! inside the shell, visited in ascending order of its integer coordinates,
//! consumes one uniform draw and is occupied when the draw is below the
//! abundance. Sub-seeds for batch runs come from [`derive_seed`].

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, Species};
use crate::error::{domain, EchoError, Result};
use crate::spin_system::{
    crystal_to_nv, dipolar_coupling, hyperfine_vector, HyperfineVector, NuclearSpin, QubitManifold, Vec3,
};

/// Cubic lattice constant of diamond (nm).
pub const LATTICE_CONSTANT: f64 = 0.357;
/// Natural 13C abundance.
pub const NATURAL_ABUNDANCE: f64 = 0.011;
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 0.714;

/// Integer coordinates (units of a/4) of diamond sites with 0 < |r| ≤ radius,
/// sorted lexicographically. The vacancy at the origin is never listed.
pub fn lattice_sites(radius: f64) -> Vec<[i32; 3]> {
    let unit = LATTICE_CONSTANT / 4.0;
    let n = (radius / unit).ceil() as i32 + 1;
    let mut out = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                if !is_diamond_site(i, j, k) || (i, j, k) == (0, 0, 0) {
                    continue;
                }
                let r = unit * ((i * i + j * j + k * k) as f64).sqrt();
                if r <= radius {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

fn is_diamond_site(i: i32, j: i32, k: i32) -> bool {
    let s = (i + j + k).rem_euclid(4);
    let all_even = i % 2 == 0 && j % 2 == 0 && k % 2 == 0;
    let all_odd = i % 2 != 0 && j % 2 != 0 && k % 2 != 0;
    (all_even && s == 0) || (all_odd && s == 3)
}

/// Number of atomic sites strictly inside `radius` (vacancy excluded).
pub fn sites_inside(radius: f64) -> usize {
    lattice_sites(radius).iter().filter(|s| site_radius(s) < radius).count()
}

fn site_radius(s: &[i32; 3]) -> f64 {
    LATTICE_CONSTANT / 4.0 * ((s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) as f64).sqrt()
}

fn site_position(s: &[i32; 3]) -> Vec3 {
    Vec3::new(s[0] as f64, s[1] as f64, s[2] as f64) * (LATTICE_CONSTANT / 4.0)
}

const NITROGEN_SITE: [i32; 3] = [1, 1, 1];

/// Deterministic sub-seed for sample `index` of a batch.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub seed: u64,
    pub abundance: f64,
    pub shell_radius: f64,
    pub exclusion_radius: f64,
    pub b_z: f64,
    pub manifold: QubitManifold,
}

impl Default for BathSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            abundance: NATURAL_ABUNDANCE,
            shell_radius: 1.5,
            exclusion_radius: DEFAULT_EXCLUSION_RADIUS,
            b_z: 0.467,
            manifold: QubitManifold::minus(),
        }
    }
}

/// A nuclear spin together with its hyperfine field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpin {
    pub spin: NuclearSpin,
    pub hyperfine: HyperfineVector,
}

impl BathSpin {
    pub fn a_parallel(&self) -> f64 {
        self.hyperfine.a_parallel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinBath {
    pub spins: Vec<BathSpin>,
    pub manifold: QubitManifold,
    pub b_z: f64,
    pub seed: u64,
    pub abundance: f64,
    pub shell_radius: f64,
    pub exclusion_radius: f64,
    pub constants: PhysicalConstants,
}

impl SpinBath {
    /// An empty bath with explicit parameters, for hand-built configurations.
    pub fn empty(b_z: f64, manifold: QubitManifold, constants: PhysicalConstants) -> Self {
        Self {
            spins: Vec::new(),
            manifold,
            b_z,
            seed: 0,
            abundance: 0.0,
            shell_radius: f64::INFINITY,
            exclusion_radius: 0.0,
            constants,
        }
    }

    /// Adds a spin at an NV-frame position, computing its hyperfine field.
    pub fn add_spin(&mut self, spin: NuclearSpin) -> Result<usize> {
        let p = spin.pos();
        if self.spins.iter().any(|s| (s.spin.pos() - p).norm() < 1e-9) {
            return domain("two spins on the same site");
        }
        let hyperfine = hyperfine_vector(&p, self.constants.gamma(spin.species), &self.constants)?;
        self.spins.push(BathSpin { spin, hyperfine });
        Ok(self.spins.len() - 1)
    }

    /// Adds a spin with a prescribed hyperfine field (e.g. from a table).
    pub fn add_spin_with_hyperfine(&mut self, spin: NuclearSpin, hyperfine: HyperfineVector) -> usize {
        self.spins.push(BathSpin { spin, hyperfine });
        self.spins.len() - 1
    }

    pub fn from_spins(
        spins: Vec<NuclearSpin>,
        b_z: f64,
        manifold: QubitManifold,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        let mut bath = Self::empty(b_z, manifold, constants);
        for s in spins {
            bath.add_spin(s)?;
        }
        Ok(bath)
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn gamma(&self, i: usize) -> f64 {
        self.constants.gamma(self.spins[i].spin.species)
    }

    /// Secular dipolar coupling d_jk between two bath spins.
    pub fn coupling(&self, j: usize, k: usize) -> Result<f64> {
        let (a, b) = (&self.spins[j].spin, &self.spins[k].spin);
        Ok(dipolar_coupling(&a.pos(), &b.pos(), self.gamma(j), self.gamma(k), &self.constants)?.d)
    }

    /// A sub-bath with the listed spins, in the listed order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = self.clone();
        out.spins = indices.iter().map(|&i| self.spins[i].clone()).collect();
        out
    }

    /// Checks the radius and unique-site invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.spins.iter().enumerate() {
            let r = s.spin.pos().norm();
            if !(r > self.exclusion_radius && r <= self.shell_radius * (1.0 + 1e-12)) {
                return domain(format!("spin {i} at |r| = {r} nm lies outside the sampling shell"));
            }
            for t in &self.spins[..i] {
                if (t.spin.pos() - s.spin.pos()).norm() < 1e-9 {
                    return domain(format!("spin {i} shares a lattice site"));
                }
            }
        }
        Ok(())
    }

    /// Serialises to the line-oriented bath format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seed={}", self.seed);
        let _ = writeln!(s, "# b_z={}", self.b_z);
        let _ = writeln!(s, "# manifold_down={}", self.manifold.down_level());
        let _ = writeln!(s, "# abundance={}", self.abundance);
        let _ = writeln!(s, "# shell_radius={}", self.shell_radius);
        let _ = writeln!(s, "# exclusion_radius={}", self.exclusion_radius);
        for b in &self.spins {
            let p = b.spin.position;
            let _ = writeln!(s, "{} {} {} {}", b.spin.species, p[0], p[1], p[2]);
        }
        s
    }

    /// Parses the bath format and validates the result.
    pub fn from_text(text: &str, constants: PhysicalConstants) -> Result<Self> {
        let mut bath = Self::empty(0.0, QubitManifold::minus(), constants);
        let mut have_b = false;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let perr = |m: String| EchoError::Parse { line: line_no, message: m };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let Some((key, value)) = rest.trim().split_once('=') else { continue };
                let value = value.trim();
                let num = || value.parse::<f64>().map_err(|e| perr(format!("{key}: {e}")));
                match key.trim() {
                    "seed" => bath.seed = value.parse().map_err(|e| perr(format!("seed: {e}")))?,
                    "b_z" => {
                        bath.b_z = num()?;
                        have_b = true;
                    }
                    "manifold_down" => {
                        let d: i8 = value.parse().map_err(|e| perr(format!("manifold_down: {e}")))?;
                        bath.manifold = QubitManifold::new(d).map_err(|e| perr(e.to_string()))?;
                    }
                    "abundance" => bath.abundance = num()?,
                    "shell_radius" => bath.shell_radius = num()?,
                    "exclusion_radius" => bath.exclusion_radius = num()?,
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(perr(format!("expected 'species x y z', got {} fields", fields.len())));
            }
            let species: Species = fields[0].parse().map_err(|e: EchoError| perr(e.to_string()))?;
            let mut p = [0.0; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                p[k] = f.parse().map_err(|e| perr(format!("coordinate: {e}")))?;
            }
            bath.add_spin(NuclearSpin::new(Vec3::from(p), species)).map_err(|e| perr(e.to_string()))?;
        }
        if !have_b {
            return Err(EchoError::Parse { line: 0, message: "missing b_z header".into() });
        }
        bath.validate()?;
        Ok(bath)
    }
}

/// Samples a 13C bath on the diamond lattice.
pub fn generate_bath(spec: &BathSpec, constants: &PhysicalConstants) -> Result<SpinBath> {
    if !(0.0..=1.0).contains(&spec.abundance) {
        return domain("abundance must lie in [0, 1]");
    }
    if !(spec.exclusion_radius < spec.shell_radius) || spec.exclusion_radius < 0.0 {
        return domain("exclusion radius must be non-negative and below the shell radius");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut bath = SpinBath {
        spins: Vec::new(),
        manifold: spec.manifold,
        b_z: spec.b_z,
        seed: spec.seed,
        abundance: spec.abundance,
        shell_radius: spec.shell_radius,
        exclusion_radius: spec.exclusion_radius,
        constants: constants.clone(),
    };
    for site in lattice_sites(spec.shell_radius) {
        let u: f64 = rng.random();
        if site == NITROGEN_SITE || u >= spec.abundance || site_radius(&site) <= spec.exclusion_radius {
            continue;
        }
        bath.add_spin(NuclearSpin::new(crystal_to_nv(&site_position(&site)), Species::C13))?;
    }
    Ok(bath)
}

/// Fraction of seeds whose unrestricted sample leaves every site inside
/// `radius` empty (nitrogen site excluded).
pub fn empty_core_fraction(base_seed: u64, samples: u64, abundance: f64, radius: f64) -> f64 {
    let sites: Vec<bool> = lattice_sites(radius)
        .iter()
        .map(|s| *s != NITROGEN_SITE && site_radius(s) < radius)
        .collect();
    let empty = (0..samples)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, i));
            let mut hit = false;
            for inside in &sites {
                let u: f64 = rng.random();
                hit |= *inside && u < abundance;
            }
            !hit
        })
        .count();
    empty as f64 / samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    BelowThreshold,
    SizeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroppedCoupling {
    pub pair: (usize, usize),
    pub strength: f64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub clusters: Vec<Vec<usize>>,
    pub max_cluster_size: usize,
    pub coupling_threshold: f64,
    pub dropped_couplings: Vec<DroppedCoupling>,
}

impl ClusterPartition {
    /// Largest neglected |d|, or 0 when nothing was dropped.
    pub fn largest_dropped(&self) -> f64 {
        self.dropped_couplings.iter().map(|d| d.strength.abs()).fold(0.0, f64::max)
    }

    /// Checks that the clusters form a disjoint cover of `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for c in &self.clusters {
            for &i in c {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Greedy agglomeration over pairs sorted by descending |d_jk|. Two clusters
/// merge when their strongest link exceeds the threshold and the merged size
/// stays within `max_size`.
pub fn partition_clusters(bath: &SpinBath, max_size: usize, coupling_threshold: f64) -> Result<ClusterPartition> {
    if max_size == 0 {
        return domain("max cluster size must be at least 1");
    }
    let n = bath.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j in 0..n {
        for k in j + 1..n {
            pairs.push((j, k, bath.coupling(j, k)?));
        }
    }
    pairs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut uf = UnionFind::new(n);
    for &(j, k, d) in &pairs {
        if d.abs() <= coupling_threshold {
            break;
        }
        let (rj, rk) = (uf.find(j), uf.find(k));
        if rj != rk && uf.size[rj] + uf.size[rk] <= max_size {
            uf.union(j, k);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by_key(|c| c[0]);
    let dropped_couplings = pairs
        .iter()
        .filter(|&&(j, k, _)| uf.find(j) != uf.find(k))
        .map(|&(j, k, d)| DroppedCoupling {
            pair: (j, k),
            strength: d,
            reason: if d.abs() <= coupling_threshold { DropReason::BelowThreshold } else { DropReason::SizeLimit },
        })
        .collect();
    Ok(ClusterPartition { clusters, max_cluster_size: max_size, coupling_threshold, dropped_couplings })
}

/// Spins with |A∥| above `min_a_parallel` whose A∥ is separated from every
/// other spin's A∥ by more than `resolution`.
pub fn count_addressable(bath: &SpinBath, min_a_parallel: f64, resolution: f64) -> Result<usize> {
    if !(resolution > 0.0) {
        return domain("resolution must be positive");
    }
    let a: Vec<f64> = bath.spins.iter().map(|s| s.a_parallel()).collect();
    Ok(count_resolved(&a, min_a_parallel, resolution))
}

fn count_resolved(a: &[f64], min_a: f64, resolution: f64) -> usize {
    let mut sorted: Vec<f64> = a.to_vec();
    sorted.sort_by(f64::total_cmp);
    (0..sorted.len())
        .filter(|&i| {
            let v = sorted[i];
            let left = i == 0 || v - sorted[i - 1] > resolution;
            let right = i + 1 == sorted.len() || sorted[i + 1] - v > resolution;
            v.abs() > min_a && left && right
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub resolution: f64,
    pub mean: f64,
    pub std: f64,
}

/// Mean and standard deviation of the addressable count over `samples`
/// baths with seeds derived from `spec.seed`.
pub fn census(
    spec: &BathSpec,
    constants: &PhysicalConstants,
    samples: u64,
    min_a_parallel: f64,
    resolutions: &[f64],
) -> Result<Vec<CensusRow>> {
    if samples == 0 {
        return domain("census needs at least one sample");
    }
    if resolutions.iter().any(|r| !(*r > 0.0)) {
        return domain("resolution must be positive");
    }
    let per_seed: Vec<Vec<usize>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut s = spec.clone();
            s.seed = if samples == 1 { spec.seed } else { derive_seed(spec.seed, i) };
            let bath = generate_bath(&s, constants)?;
            let a: Vec<f64> = bath.spins.iter().map(|b| b.a_parallel()).collect();
            Ok(resolutions.iter().map(|&r| count_resolved(&a, min_a_parallel, r)).collect())
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    Ok(resolutions
        .iter()
        .enumerate()
        .map(|(k, &resolution)| {
            let mean = per_seed.iter().map(|c| c[k] as f64).sum::<f64>() / n;
            let var = per_seed.iter().map(|c| (c[k] as f64 - mean).powi(2)).sum::<f64>() / n;
            CensusRow { resolution, mean, std: var.sqrt() }
        })
        .collect())
}
