//! Unzipping walks killed at `M`, and their sufficient statistics.
//!
//! A walk starts at site 1 (the first pair is always open), steps up or down
//! until it first reaches `M`, and is summarised by its per-site up-crossings
//! `L+`, down-crossings `L-` and (in continuous time) sojourn times `S`.
//!
//! Ensembles derive one ChaCha stream per replica from the master seed, so
//! replica `i` produces the same walk whatever thread runs it. Aggregation is
//! a left fold in replica order, which keeps floating-point sums bit-identical
//! between the parallel and sequential executors.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy_model::Landscape;
use crate::error::{Error, Result};

/// Default per-replica step cap.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

/// Replicas simulated per block before folding into the running sum.
const BLOCK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Discrete,
    Continuous,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(Mode::Discrete),
            "continuous" => Ok(Mode::Continuous),
            other => Err(Error::Invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// Master seed; replica `i` draws from ChaCha8 stream `i` of this seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
}

impl SeedSpec {
    pub fn new(master: u64) -> Self {
        SeedSpec { master }
    }

    pub fn replica_rng(&self, replica: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(replica);
        rng
    }

    /// A seed for an independent sub-experiment (e.g. one force level).
    pub fn derive(&self, tag: u64) -> SeedSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master ^ 0x9E37_79B9_7F4A_7C15);
        rng.set_stream(tag);
        SeedSpec { master: rng.random() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Statistics of a single walk. Vectors are indexed by site `1..=M-1`
/// (`up[x - 1]` is `L+_x`); `down` at site 1 is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkStats {
    pub up: Vec<u64>,
    pub down: Vec<u64>,
    pub sojourn: Vec<f64>,
    pub steps: u64,
    pub wall_time: f64,
}

impl WalkStats {
    fn empty(m: usize) -> Self {
        WalkStats {
            up: vec![0; m - 1],
            down: vec![0; m - 1],
            sojourn: vec![0.0; m - 1],
            steps: 0,
            wall_time: 0.0,
        }
    }

    pub fn sites(&self) -> usize {
        self.up.len() + 1
    }
}

/// Sums of [`WalkStats`] over `replicas` independent walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mode: Mode,
    pub replicas: u64,
    pub up: Vec<u64>,
    pub down: Vec<u64>,
    pub sojourn: Vec<f64>,
    pub steps: u64,
    pub wall_time: f64,
}

impl AggregateStats {
    /// Zero replicas on a molecule of `m` bases.
    pub fn empty(m: usize, mode: Mode) -> Self {
        AggregateStats {
            mode,
            replicas: 0,
            up: vec![0; m - 1],
            down: vec![0; m - 1],
            sojourn: vec![0.0; m - 1],
            steps: 0,
            wall_time: 0.0,
        }
    }

    pub fn from_walk(walk: &WalkStats, mode: Mode) -> Self {
        let mut agg = AggregateStats::empty(walk.sites(), mode);
        agg.absorb(walk);
        agg
    }

    pub fn sites(&self) -> usize {
        self.up.len() + 1
    }

    pub fn absorb(&mut self, walk: &WalkStats) {
        for (a, b) in self.up.iter_mut().zip(&walk.up) {
            *a += b;
        }
        for (a, b) in self.down.iter_mut().zip(&walk.down) {
            *a += b;
        }
        for (a, b) in self.sojourn.iter_mut().zip(&walk.sojourn) {
            *a += b;
        }
        self.steps += walk.steps;
        self.wall_time += walk.wall_time;
        self.replicas += 1;
    }

    /// `L+_x` as a float.
    #[inline]
    pub fn up_at(&self, x: usize) -> f64 {
        self.up[x - 1] as f64
    }

    #[inline]
    pub fn down_at(&self, x: usize) -> f64 {
        self.down[x - 1] as f64
    }

    #[inline]
    pub fn sojourn_at(&self, x: usize) -> f64 {
        self.sojourn[x - 1]
    }
}

/// One point of a recorded path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub site: usize,
    /// Model time at which the walk entered `site` (0 in discrete mode).
    pub time: f64,
}

/// Precomputed per-site jump law.
struct JumpTable {
    forward: Vec<f64>,
    exit_rate: Vec<f64>,
}

impl JumpTable {
    fn new(land: &Landscape, mode: Mode) -> Self {
        let m = land.sites();
        let mut forward = vec![0.0; m];
        let mut exit_rate = vec![0.0; m];
        for x in 1..m {
            match mode {
                Mode::Discrete => forward[x] = land.forward_probability(x),
                Mode::Continuous => {
                    let (up, down) = land.rates(x);
                    forward[x] = if x == 1 { 1.0 } else { up / (up + down) };
                    exit_rate[x] = up + down;
                }
            }
        }
        JumpTable { forward, exit_rate }
    }
}

fn run_walk<R: Rng>(
    table: &JumpTable,
    m: usize,
    mode: Mode,
    rng: &mut R,
    step_cap: u64,
    replica: u64,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> Result<WalkStats> {
    let mut stats = WalkStats::empty(m);
    let mut x = 1usize;
    let mut steps = 0u64;
    let mut clock = 0.0f64;
    if let Some(t) = trace.as_deref_mut() {
        t.push(TracePoint {
            step: 0,
            site: 1,
            time: 0.0,
        });
    }
    while x < m {
        if steps >= step_cap {
            return Err(Error::StepCap {
                replica,
                cap: step_cap,
                site: x,
            });
        }
        if mode == Mode::Continuous {
            // Exp(rate) sojourn by inversion; 1 - U lies in (0, 1].
            let u: f64 = rng.random();
            let hold = -(1.0 - u).ln() / table.exit_rate[x];
            stats.sojourn[x - 1] += hold;
            clock += hold;
        }
        let u: f64 = rng.random();
        if u < table.forward[x] {
            stats.up[x - 1] += 1;
            x += 1;
        } else {
            stats.down[x - 1] += 1;
            x -= 1;
        }
        steps += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TracePoint {
                step: steps,
                site: x,
                time: clock,
            });
        }
    }
    stats.steps = steps;
    stats.wall_time = clock;
    Ok(stats)
}

/// Walk simulator bound to one landscape and one time model.
pub struct Walker<'a> {
    land: &'a Landscape,
    table: JumpTable,
    mode: Mode,
    step_cap: u64,
}

impl<'a> Walker<'a> {
    pub fn new(land: &'a Landscape, mode: Mode) -> Self {
        Walker {
            land,
            table: JumpTable::new(land, mode),
            mode,
            step_cap: DEFAULT_STEP_CAP,
        }
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn walk(&self, seed: SeedSpec, replica: u64) -> Result<WalkStats> {
        let mut rng = seed.replica_rng(replica);
        run_walk(
            &self.table,
            self.land.sites(),
            self.mode,
            &mut rng,
            self.step_cap,
            replica,
            None,
        )
    }

    /// Same walk as [`Walker::walk`], also returning the visited path.
    pub fn walk_traced(&self, seed: SeedSpec, replica: u64) -> Result<(WalkStats, Vec<TracePoint>)> {
        let mut rng = seed.replica_rng(replica);
        let mut trace = Vec::new();
        let stats = run_walk(
            &self.table,
            self.land.sites(),
            self.mode,
            &mut rng,
            self.step_cap,
            replica,
            Some(&mut trace),
        )?;
        Ok((stats, trace))
    }

    fn block(&self, seed: SeedSpec, range: std::ops::Range<u64>, exec: Execution) -> Result<Vec<WalkStats>> {
        match exec {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                range.into_par_iter().map(|i| self.walk(seed, i)).collect()
            }
            _ => range.map(|i| self.walk(seed, i)).collect(),
        }
    }

    /// Sum of replicas `0..replicas`.
    pub fn ensemble(&self, seed: SeedSpec, replicas: u64, exec: Execution) -> Result<AggregateStats> {
        let mut out = self.ensemble_checkpoints(seed, &[replicas], exec)?;
        Ok(out.pop().expect("one checkpoint"))
    }

    /// Running sums of replicas `0..R` for each `R` in the increasing list
    /// `checkpoints`. Every entry equals `ensemble(seed, R)` bit for bit.
    pub fn ensemble_checkpoints(
        &self,
        seed: SeedSpec,
        checkpoints: &[u64],
        exec: Execution,
    ) -> Result<Vec<AggregateStats>> {
        if checkpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("checkpoints must be non-decreasing".into()));
        }
        let mut acc = AggregateStats::empty(self.land.sites(), self.mode);
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut next = checkpoints.iter().peekable();
        while let Some(&&target) = next.peek() {
            if acc.replicas == target {
                out.push(acc.clone());
                next.next();
                continue;
            }
            let end = (acc.replicas + BLOCK).min(target);
            for walk in self.block(seed, acc.replicas..end, exec)? {
                acc.absorb(&walk);
            }
        }
        Ok(out)
    }
}

/// One discrete-time walk for `replica` of `seed`.
pub fn simulate_discrete_walk(land: &Landscape, seed: SeedSpec, replica: u64) -> Result<WalkStats> {
    Walker::new(land, Mode::Discrete).walk(seed, replica)
}

/// One continuous-time walk for `replica` of `seed`.
pub fn simulate_continuous_walk(land: &Landscape, seed: SeedSpec, replica: u64) -> Result<WalkStats> {
    Walker::new(land, Mode::Continuous).walk(seed, replica)
}

/// Sum of `replicas` independent walks using the default executor.
pub fn simulate_ensemble(land: &Landscape, replicas: u64, mode: Mode, seed: SeedSpec) -> Result<AggregateStats> {
    if replicas == 0 {
        return Err(Error::InvalidParameter {
            name: "R",
            reason: "at least one replica is required".into(),
        });
    }
    Walker::new(land, mode).ensemble(seed, replicas, Execution::default())
}

/// Flow identities every valid set of statistics satisfies. Returns the
/// violated ones, empty on success.
pub fn verify_conservation(stats: &AggregateStats) -> Vec<String> {
    let mut issues = Vec::new();
    let m = stats.sites();
    let r = stats.replicas;
    if stats.down.len() != m - 1 || stats.sojourn.len() != m - 1 {
        issues.push("statistics vectors have inconsistent lengths".to_string());
        return issues;
    }
    if stats.up[m - 2] != r {
        issues.push(format!("L+ at site {} is {} but R = {r}", m - 1, stats.up[m - 2]));
    }
    if stats.down[0] != 0 {
        issues.push(format!("L- at site 1 is {} but site 1 never closes", stats.down[0]));
    }
    for x in 2..m {
        let expected = stats.up[x - 2] as i128 - r as i128;
        if stats.down[x - 1] as i128 != expected {
            issues.push(format!(
                "L- at site {x} is {} but L+ at site {} minus R is {expected}",
                stats.down[x - 1],
                x - 1
            ));
        }
    }
    let total: u64 = stats.up.iter().sum::<u64>() + stats.down.iter().sum::<u64>();
    if total != stats.steps {
        issues.push(format!(
            "step count {} differs from total crossings {total}",
            stats.steps
        ));
    }
    if stats.mode == Mode::Discrete && stats.sojourn.iter().any(|&s| s != 0.0) {
        issues.push("discrete statistics carry sojourn times".to_string());
    }
    if stats.sojourn.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        issues.push("sojourn times must be finite and non-negative".to_string());
    }
    issues
}
