//! Force protocols that go beyond a single constant force: a local window
//! that slows the walk around a region of interest, and a ladder of force
//! levels that reads binding energies directly from the sign of
//! `ln(L-/L+)` at each level.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy_model::{Base, BaseSequence, EnergyTable, ForceField, Landscape, ModelParams};
use crate::error::{Error, Result};
use crate::numeric::sigmoid;
use crate::rate_theory::{gap_value, pbar, GapKind};
use crate::walker::{AggregateStats, Execution, Mode, SeedSpec, Walker, DEFAULT_STEP_CAP};

/// Energies `mu_1 > ... > mu_K` and stretch works `r_1 > ... > r_K > r_{K+1} = 0`
/// interlaced so that level `k` pushes forward exactly on energies below `r_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLadder {
    pub mu: Vec<f64>,
    pub r_levels: Vec<f64>,
}

/// Every ladder condition that fails, in human-readable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub violations: Vec<String>,
}

impl LadderReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check a candidate ladder. Besides strict ordering and `r_{K+1} = 0`, for
/// every level `k` the rule is `mu_k < r_k`, `mu_k > r_{k+1}` and
/// `mu_i < r_{k+1}` for all `i > k`.
pub fn validate_ladder(mu: &[f64], r_levels: &[f64]) -> LadderReport {
    let mut v = Vec::new();
    let k = mu.len();
    if k == 0 {
        v.push("at least one energy level is required".to_string());
        return LadderReport { violations: v };
    }
    if r_levels.len() != k + 1 {
        v.push(format!(
            "expected {} force levels for {k} energies, got {}",
            k + 1,
            r_levels.len()
        ));
        return LadderReport { violations: v };
    }
    if mu.iter().chain(r_levels).any(|x| !x.is_finite()) {
        v.push("all values must be finite".to_string());
        return LadderReport { violations: v };
    }
    for (i, w) in mu.windows(2).enumerate() {
        if w[0] <= w[1] {
            v.push(format!("mu_{} = {} is not above mu_{} = {}", i + 1, w[0], i + 2, w[1]));
        }
    }
    for (i, w) in r_levels.windows(2).enumerate() {
        if w[0] <= w[1] {
            v.push(format!("r_{} = {} is not above r_{} = {}", i + 1, w[0], i + 2, w[1]));
        }
    }
    if r_levels[k] != 0.0 {
        v.push(format!("r_{} must be 0, got {}", k + 1, r_levels[k]));
    }
    for j in 0..k {
        if mu[j] - r_levels[j] >= 0.0 {
            v.push(format!(
                "mu_{0} - r_{0} = {1} is not negative",
                j + 1,
                mu[j] - r_levels[j]
            ));
        }
        if mu[j] - r_levels[j + 1] <= 0.0 {
            v.push(format!(
                "mu_{} - r_{} = {} is not positive",
                j + 1,
                j + 2,
                mu[j] - r_levels[j + 1]
            ));
        }
        for (i, &m) in mu.iter().enumerate().skip(j + 2) {
            if m - r_levels[j + 1] >= 0.0 {
                v.push(format!(
                    "mu_{} - r_{} = {} is not negative",
                    i + 1,
                    j + 2,
                    m - r_levels[j + 1]
                ));
            }
        }
    }
    LadderReport { violations: v }
}

impl LevelLadder {
    pub fn new(mu: Vec<f64>, r_levels: Vec<f64>) -> Result<Self> {
        let report = validate_ladder(&mu, &r_levels);
        if !report.is_valid() {
            return Err(Error::InvalidLadder(report.violations));
        }
        Ok(LevelLadder { mu, r_levels })
    }

    /// Ladder over the given energies with each `r_{k+1}` halfway between
    /// `mu_k` and `mu_{k+1}`, and `r_1` as far above `mu_1` as `r_2` is below
    /// it. A single energy gets `r_1 = 1.5 mu_1`.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut mu = values.to_vec();
        mu.sort_by(|a, b| b.total_cmp(a));
        mu.dedup();
        let k = mu.len();
        let mut r = Vec::with_capacity(k + 1);
        let next = if k > 1 { mu[1] } else { 0.0 };
        r.push(mu.first().copied().unwrap_or(0.0) + (mu.first().copied().unwrap_or(0.0) - next) / 2.0);
        for w in mu.windows(2) {
            r.push((w[0] + w[1]) / 2.0);
        }
        r.push(0.0);
        LevelLadder::new(mu, r)
    }

    /// Default ladder from the distinct energies of a table.
    pub fn from_table(table: &EnergyTable) -> Result<Self> {
        LevelLadder::from_values(&table.distinct_values())
    }

    /// Number of energy levels `K`.
    pub fn levels(&self) -> usize {
        self.mu.len()
    }

    /// `mu_k` for `1 <= k <= K`.
    pub fn mu_at(&self, k: usize) -> f64 {
        self.mu[k - 1]
    }

    /// `r_i` for `1 <= i <= K + 1`.
    pub fn r_at(&self, i: usize) -> f64 {
        self.r_levels[i - 1]
    }

    /// Level whose energy equals `value` within `tol`.
    pub fn level_of(&self, value: f64, tol: f64) -> Option<usize> {
        self.mu.iter().position(|m| (m - value).abs() <= tol).map(|i| i + 1)
    }
}

/// `q^i_m = 1 / (1 + e^{beta (mu_m - r_i)})`: forward probability under level
/// `i` on an energy `mu_m`.
pub fn q_prob(ladder: &LevelLadder, i: usize, m: usize, beta: f64) -> Result<f64> {
    let k = ladder.levels();
    if i == 0 || i > k + 1 {
        return Err(Error::IndexOutOfRange {
            what: "force level",
            index: i,
            lo: 1,
            hi: k + 1,
        });
    }
    if m == 0 || m > k {
        return Err(Error::IndexOutOfRange {
            what: "energy level",
            index: m,
            lo: 1,
            hi: k,
        });
    }
    Ok(sigmoid(-beta * (ladder.mu_at(m) - ladder.r_at(i))))
}

/// Force profile that equals `baseline` except on `[y - a, y + a]`, where
/// `g1(y + s) = c (a - s)` decreases linearly from `2ca` to 0.
pub fn window_schedule(y: usize, a: usize, c: f64, m: usize, baseline: &ForceField) -> Result<ForceField> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "C",
            reason: format!("slope must be positive, got {c}"),
        });
    }
    if baseline.len() + 1 != m {
        return Err(Error::LengthMismatch {
            what: "baseline force",
            expected: m - 1,
            got: baseline.len(),
        });
    }
    if y <= a || y + a > m - 1 {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!(
                "[{}, {}] must lie within sites 1..={}",
                y as i64 - a as i64,
                y + a,
                m - 1
            ),
        });
    }
    let mut out = baseline.clone();
    for site in y - a..=y + a {
        let s = site as f64 - y as f64;
        out.set(site, c * (a as f64 - s));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    /// Levels `k` and `k + 1`, each applied uniformly.
    UniformPair { k: usize },
    /// Every level `1..=K+1`, each applied uniformly.
    Uniform,
    /// Level `i` at site `x`, `r_1` before it and `r_K` after it.
    Focus { x: usize },
    /// Level `i` at site `x`, `r_1` before it and no force after it.
    Absorbing { x: usize },
}

impl Scheme {
    /// Target site of a site-dependent scheme.
    pub fn site(&self) -> Option<usize> {
        match self {
            Scheme::Focus { x } | Scheme::Absorbing { x } => Some(*x),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLevel {
    pub level: usize,
    pub force: ForceField,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub scheme: Scheme,
    pub levels: Vec<PlanLevel>,
}

/// Per-level force profiles for `scheme` on an `m`-base molecule.
pub fn build_protocol(scheme: Scheme, ladder: &LevelLadder, m: usize, replicas: u64) -> Result<ProtocolPlan> {
    if m < 2 {
        return Err(Error::SequenceTooShort(m));
    }
    if replicas == 0 {
        return Err(Error::InvalidParameter {
            name: "R",
            reason: "each level needs at least one replica".into(),
        });
    }
    let k_max = ladder.levels();
    let constant = |i: usize| PlanLevel {
        level: i,
        force: ForceField::constant(m, ladder.r_at(i)),
        replicas,
    };
    let levels = match scheme {
        Scheme::UniformPair { k } => {
            if k == 0 || k > k_max {
                return Err(Error::IndexOutOfRange {
                    what: "ladder level",
                    index: k,
                    lo: 1,
                    hi: k_max,
                });
            }
            vec![constant(k), constant(k + 1)]
        }
        Scheme::Uniform => (1..=k_max + 1).map(constant).collect(),
        Scheme::Focus { x } | Scheme::Absorbing { x } => {
            if x < 2 || x + 1 > m {
                return Err(Error::IndexOutOfRange {
                    what: "target site",
                    index: x,
                    lo: 2,
                    hi: m - 1,
                });
            }
            let tail = if matches!(scheme, Scheme::Focus { .. }) {
                ladder.r_at(k_max)
            } else {
                0.0
            };
            (1..=k_max + 1)
                .map(|i| {
                    let values = (1..m)
                        .map(|z| match z.cmp(&x) {
                            std::cmp::Ordering::Less => ladder.r_at(1),
                            std::cmp::Ordering::Equal => ladder.r_at(i),
                            std::cmp::Ordering::Greater => tail,
                        })
                        .collect();
                    PlanLevel {
                        level: i,
                        force: ForceField::new(values).expect("ladder values are finite"),
                        replicas,
                    }
                })
                .collect()
        }
    };
    Ok(ProtocolPlan { scheme, levels })
}

/// Discrete-time statistics for each force level of a protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub scheme: Scheme,
    pub levels: BTreeMap<usize, AggregateStats>,
}

/// Run every level of `plan` on the per-site energies `g0(1..=M-1)`. Level
/// `i` draws its replicas from `seed.derive(i)`.
pub fn run_protocol(
    energies: &[f64],
    params: ModelParams,
    plan: &ProtocolPlan,
    seed: SeedSpec,
    exec: Execution,
) -> Result<LevelStats> {
    run_protocol_capped(energies, params, plan, seed, exec, DEFAULT_STEP_CAP)
}

pub fn run_protocol_capped(
    energies: &[f64],
    params: ModelParams,
    plan: &ProtocolPlan,
    seed: SeedSpec,
    exec: Execution,
    step_cap: u64,
) -> Result<LevelStats> {
    let mut levels = BTreeMap::new();
    for lvl in &plan.levels {
        let wrap = |e: Error| Error::Level {
            level: lvl.level,
            source: Box::new(e),
        };
        let land = Landscape::new(energies.to_vec(), lvl.force.clone(), params).map_err(wrap)?;
        let stats = Walker::new(&land, Mode::Discrete)
            .with_step_cap(step_cap)
            .ensemble(seed.derive(lvl.level as u64), lvl.replicas, exec)
            .map_err(wrap)?;
        levels.insert(lvl.level, stats);
    }
    Ok(LevelStats {
        scheme: plan.scheme,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub site: usize,
    /// Ladder index `k` of the estimate, absent when undecided.
    pub level: Option<usize>,
    pub value: Option<f64>,
    pub undecided: bool,
}

/// `L- / L+` at site `x` (NaN without forward crossings).
pub fn count_ratio(stats: &AggregateStats, x: usize) -> f64 {
    stats.down_at(x) / stats.up_at(x)
}

/// First level `k` (in increasing order) with `L-/L+ < 1` under level `k`
/// and `L-/L+ > 1` under level `k + 1`; its energy `mu_k` is the estimate.
/// Only consecutive pairs present in `stats` are scanned.
pub fn estimate_energy(stats: &LevelStats, x: usize, ladder: &LevelLadder) -> Result<EnergyEstimate> {
    let k_max = ladder.levels();
    let mut scanned = false;
    for k in 1..=k_max {
        let (Some(lo), Some(hi)) = (stats.levels.get(&k), stats.levels.get(&(k + 1))) else {
            continue;
        };
        let m = lo.sites();
        if x < 1 || x + 1 > m {
            return Err(Error::IndexOutOfRange {
                what: "site",
                index: x,
                lo: 1,
                hi: m - 1,
            });
        }
        scanned = true;
        if count_ratio(lo, x) < 1.0 && count_ratio(hi, x) > 1.0 {
            return Ok(EnergyEstimate {
                site: x,
                level: Some(k),
                value: Some(ladder.mu_at(k)),
                undecided: false,
            });
        }
    }
    if !scanned {
        let missing = (1..=k_max + 1).find(|i| !stats.levels.contains_key(i)).unwrap_or(1);
        return Err(Error::MissingLevel(missing));
    }
    Ok(EnergyEstimate {
        site: x,
        level: None,
        value: None,
        undecided: true,
    })
}

/// Margins of the ladder protocols, all built from `H_a(u) - H_a(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HMargins {
    /// `H^(k)` for `k = 1..=K`.
    pub h_k: Vec<f64>,
    /// `H^(k+1)` for `k = 1..=K`.
    pub h_k_next: Vec<f64>,
    /// `H->`: level `k` against its neighbours, maximised over `k <= K-1`.
    pub h_right: f64,
    /// `H<-`: the same under level `k + 1`.
    pub h_left: f64,
}

fn neighbour_gap(ladder: &LevelLadder, k: usize, r: f64, beta: f64) -> f64 {
    let a = ladder.mu_at(k) - r;
    [k.checked_sub(1), Some(k + 1)]
        .into_iter()
        .flatten()
        .filter(|&l| l >= 1 && l <= ladder.levels())
        .map(|l| gap_value(GapKind::H, a, ladder.mu_at(l) - r, beta) - gap_value(GapKind::H, a, a, beta))
        .fold(f64::INFINITY, f64::min)
}

pub fn h_margins(ladder: &LevelLadder, beta: f64) -> HMargins {
    let k_max = ladder.levels();
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let h_k: Vec<f64> = (1..=k_max)
        .map(|k| finite(neighbour_gap(ladder, k, ladder.r_at(k), beta)))
        .collect();
    let h_k_next: Vec<f64> = (1..=k_max)
        .map(|k| finite(neighbour_gap(ladder, k, ladder.r_at(k + 1), beta)))
        .collect();
    let over = |v: &[f64]| v.iter().take(k_max.saturating_sub(1)).copied().fold(0.0, f64::max);
    HMargins {
        h_right: over(&h_k),
        h_left: over(&h_k_next),
        h_k,
        h_k_next,
    }
}

/// Lower bound on the exponential decay rate of the energy-estimation error
/// at site `x` under `scheme`. The uniform pair needs the true level `k`
/// (it is carried by the scheme); the other schemes use `H->` and `H<-`.
pub fn rc_energy(energies: &[f64], x: usize, ladder: &LevelLadder, params: ModelParams, scheme: Scheme) -> Result<f64> {
    let m = energies.len() + 1;
    if x < 2 || x + 1 > m {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: x,
            lo: 2,
            hi: m - 1,
        });
    }
    let beta = params.beta;
    let margins = h_margins(ladder, beta);
    let pbar_under = |force: ForceField| -> Result<f64> {
        let land = Landscape::new(energies.to_vec(), force, params)?;
        pbar(&land, x)
    };
    match scheme {
        Scheme::UniformPair { k } => {
            if k == 0 || k > ladder.levels() {
                return Err(Error::IndexOutOfRange {
                    what: "ladder level",
                    index: k,
                    lo: 1,
                    hi: ladder.levels(),
                });
            }
            let p_k = pbar_under(ForceField::constant(m, ladder.r_at(k)))?;
            let p_next = pbar_under(ForceField::constant(m, ladder.r_at(k + 1)))?;
            Ok(margins.h_k[k - 1] / p_k + margins.h_k_next[k - 1] / p_next)
        }
        Scheme::Focus { .. } | Scheme::Uniform => {
            let plan = build_protocol(Scheme::Focus { x }, ladder, m, 1)?;
            let p = pbar_under(plan.levels[0].force.clone())?;
            Ok((margins.h_right + margins.h_left) / p)
        }
        Scheme::Absorbing { .. } => {
            let k_max = ladder.levels();
            Ok((margins.h_right + margins.h_left) * (ladder.mu_at(k_max) * beta * (m - x) as f64).exp())
        }
    }
}

/// Mean number of steps per replica spent at sites before `x`, against the
/// `2x` scale quoted for the focus scheme. Diagnostic only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachDiagnostic {
    pub site: usize,
    pub steps_before_site: f64,
    pub reference: f64,
}

pub fn approach_diagnostic(stats: &AggregateStats, x: usize) -> ApproachDiagnostic {
    let steps: f64 = (1..x.min(stats.sites()))
        .map(|y| stats.up_at(y) + stats.down_at(y))
        .sum();
    ApproachDiagnostic {
        site: x,
        steps_before_site: steps / stats.replicas.max(1) as f64,
        reference: 2.0 * x as f64,
    }
}

/// Result of mapping an energy sequence back to bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Reconstruction {
    Unique {
        sequence: BaseSequence,
    },
    /// Several base sequences share the energies; `site` is where they first
    /// diverge and `candidates` lists them (up to a cap).
    Ambiguous {
        site: usize,
        candidates: Vec<BaseSequence>,
    },
}

const RECONSTRUCTION_CAP: usize = 16;
const ENERGY_TOLERANCE: f64 = 1e-9;

/// Bases `b_1..=b_M` with `g0(b_x, b_{x+1}) = energies[x-1]`. Without a
/// known first base every starting base is tried. Every consistent sequence
/// is reported; none at all is an error naming the first site that cannot be
/// matched.
pub fn sequence_from_energies(energies: &[f64], table: &EnergyTable, b1: Option<Base>) -> Result<Reconstruction> {
    if energies.is_empty() {
        return Err(Error::SequenceTooShort(1));
    }
    let starts: Vec<Base> = match b1 {
        Some(b) => vec![b],
        None => Base::ALL.to_vec(),
    };
    let mut found: Vec<Vec<Base>> = Vec::new();
    // Deepest failure seen, for the error report.
    let mut fail: Option<(usize, Base)> = None;
    let mut stack: Vec<Vec<Base>> = starts.iter().rev().map(|&b| vec![b]).collect();
    while let Some(path) = stack.pop() {
        let x = path.len();
        if x == energies.len() + 1 {
            found.push(path);
            if found.len() > RECONSTRUCTION_CAP {
                break;
            }
            continue;
        }
        let a = *path.last().expect("non-empty");
        let next: Vec<Base> = Base::ALL
            .iter()
            .copied()
            .filter(|&c| (table.get(a, c) - energies[x - 1]).abs() <= ENERGY_TOLERANCE)
            .collect();
        if next.is_empty() && fail.is_none_or(|(s, _)| x > s) {
            fail = Some((x, a));
        }
        for &c in next.iter().rev() {
            let mut p = path.clone();
            p.push(c);
            stack.push(p);
        }
    }
    if found.is_empty() {
        let (site, row) = fail.expect("a failure was recorded");
        return Err(Error::EnergyNotInTable {
            site,
            energy: energies[site - 1],
            row: row.as_char(),
        });
    }
    found.truncate(RECONSTRUCTION_CAP);
    let seqs: Vec<BaseSequence> = found
        .into_iter()
        .map(|s| BaseSequence::new(s).expect("M >= 2"))
        .collect();
    if seqs.len() == 1 {
        return Ok(Reconstruction::Unique {
            sequence: seqs.into_iter().next().expect("one sequence"),
        });
    }
    let site = (1..=seqs[0].len())
        .find(|&x| seqs.iter().any(|s| s.at(x) != seqs[0].at(x)))
        .expect("distinct sequences differ somewhere");
    Ok(Reconstruction::Ambiguous { site, candidates: seqs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LevelLadder {
        LevelLadder::new(vec![3.0, 1.0], vec![4.0, 2.0, 0.0]).unwrap()
    }

    #[test]
    fn ladder_validation() {
        assert!(validate_ladder(&[3.0, 1.0], &[4.0, 2.0, 0.0]).is_valid());
        assert!(!validate_ladder(&[3.0, 1.0], &[2.0, 4.0, 0.0]).is_valid());
        assert!(!validate_ladder(&[3.0, 3.0], &[4.0, 2.0, 0.0]).is_valid());
        assert!(!validate_ladder(&[3.0, 1.0], &[4.0, 2.0, 0.5]).is_valid());
        assert!(!validate_ladder(&[3.0, 1.0], &[4.0, 0.5, 0.0]).is_valid());
        assert!(matches!(
            LevelLadder::new(vec![3.0, 1.0], vec![4.0, 0.0]),
            Err(Error::InvalidLadder(_))
        ));
    }

    #[test]
    fn table_ladder_is_midpoints() {
        let l = LevelLadder::from_table(&EnergyTable::standard()).unwrap();
        assert_eq!(l.levels(), 10);
        let expect = [3.925, 3.875, 3.495, 2.84, 2.53, 2.40, 2.25, 2.00, 1.665, 1.305, 0.0];
        for (a, b) in l.r_levels.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{:?}", l.r_levels);
        }
        let single = LevelLadder::from_table(&EnergyTable::constant(2.0)).unwrap();
        assert_eq!(single.r_levels, vec![3.0, 0.0]);
    }

    #[test]
    fn q_probabilities() {
        let l = toy();
        for beta in [0.5, 1.0, 3.0] {
            assert!(q_prob(&l, 1, 1, beta).unwrap() > 0.5);
            for k in 1..=2 {
                assert!(q_prob(&l, k + 1, k, beta).unwrap() < 0.5);
            }
        }
        let at = LevelLadder::new(vec![2.0], vec![3.0, 0.0]).unwrap();
        assert!(q_prob(&at, 3, 1, 1.0).is_err());
        assert!(q_prob(&at, 1, 2, 1.0).is_err());
        let even = LevelLadder {
            mu: vec![2.0],
            r_levels: vec![2.0, 0.0],
        };
        assert_eq!(q_prob(&even, 1, 1, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn window_values() {
        let base = ForceField::constant(12, 2.5);
        let w = window_schedule(6, 3, 0.4, 12, &base).unwrap();
        assert_eq!(w.at(9), 0.0);
        assert!((w.at(6) - 1.2).abs() < 1e-15);
        assert!((w.at(3) - 2.4).abs() < 1e-15);
        assert_eq!(w.at(2), 2.5);
        assert_eq!(w.at(10), 2.5);
        assert!(window_schedule(3, 3, 0.4, 12, &base).is_err());
        assert!(window_schedule(9, 3, 0.4, 12, &base).is_err());
        assert!(window_schedule(6, 3, 0.0, 12, &base).is_err());
    }

    #[test]
    fn plans_by_scheme() {
        let l = LevelLadder::from_table(&EnergyTable::standard()).unwrap();
        let pair = build_protocol(Scheme::UniformPair { k: 4 }, &l, 8, 5).unwrap();
        assert_eq!(pair.levels.len(), 2);
        assert!(pair.levels[0].force.values().iter().all(|&v| v == l.r_at(4)));
        assert!(pair.levels[1].force.values().iter().all(|&v| v == l.r_at(5)));
        let focus = build_protocol(Scheme::Focus { x: 4 }, &l, 8, 5).unwrap();
        assert_eq!(focus.levels.len(), 11);
        for lvl in &focus.levels {
            assert_eq!(lvl.force.at(3), l.r_at(1));
            assert_eq!(lvl.force.at(4), l.r_at(lvl.level));
            assert_eq!(lvl.force.at(5), l.r_at(10));
        }
        let abs = build_protocol(Scheme::Absorbing { x: 4 }, &l, 8, 5).unwrap();
        assert!(abs.levels.iter().all(|lv| (5..8).all(|z| lv.force.at(z) == 0.0)));
        assert!(build_protocol(Scheme::Focus { x: 1 }, &l, 8, 5).is_err());
        assert!(build_protocol(Scheme::Absorbing { x: 8 }, &l, 8, 5).is_err());
        assert!(build_protocol(Scheme::UniformPair { k: 11 }, &l, 8, 5).is_err());
    }

    fn synthetic(ratios: &[(usize, f64)]) -> LevelStats {
        let mut levels = BTreeMap::new();
        for &(k, ratio) in ratios {
            let mut s = AggregateStats::empty(4, Mode::Discrete);
            s.up[1] = 1000;
            s.down[1] = (1000.0 * ratio) as u64;
            levels.insert(k, s);
        }
        LevelStats {
            scheme: Scheme::Uniform,
            levels,
        }
    }

    #[test]
    fn estimator_scans_for_first_flip() {
        let l = toy();
        let e = estimate_energy(&synthetic(&[(1, 0.5), (2, 2.0), (3, 3.0)]), 2, &l).unwrap();
        assert_eq!((e.level, e.value, e.undecided), (Some(1), Some(3.0), false));
        let e = estimate_energy(&synthetic(&[(1, 0.5), (2, 0.5), (3, 3.0)]), 2, &l).unwrap();
        assert_eq!(e.level, Some(2));
        let e = estimate_energy(&synthetic(&[(1, 0.5), (2, 0.4), (3, 0.3)]), 2, &l).unwrap();
        assert!(e.undecided && e.level.is_none());
        assert!(matches!(
            estimate_energy(&synthetic(&[(1, 0.5)]), 2, &l),
            Err(Error::MissingLevel(2))
        ));
    }

    #[test]
    fn margins_match_hand_enumeration() {
        let l = toy();
        let beta = 1.3;
        let h = |a: f64, u: f64| (1.0 + (beta * u).exp()).ln() + (beta * a).exp() * (1.0 + (-beta * u).exp()).ln();
        let m = h_margins(&l, beta);
        // K = 2, so each level has one neighbour.
        let h1 = h(3.0 - 4.0, 1.0 - 4.0) - h(3.0 - 4.0, 3.0 - 4.0);
        let h1n = h(3.0 - 2.0, 1.0 - 2.0) - h(3.0 - 2.0, 3.0 - 2.0);
        let h2 = h(1.0 - 2.0, 3.0 - 2.0) - h(1.0 - 2.0, 1.0 - 2.0);
        let h2n = h(1.0, 3.0) - h(1.0, 1.0);
        for (a, b) in [
            (m.h_k[0], h1),
            (m.h_k_next[0], h1n),
            (m.h_k[1], h2),
            (m.h_k_next[1], h2n),
        ] {
            assert!((a - b).abs() < 1e-12 && a > 0.0);
        }
        assert!((m.h_right - h1).abs() < 1e-12);
        assert!((m.h_left - h1n).abs() < 1e-12);
    }

    #[test]
    fn margin_growth_in_beta() {
        let l = toy();
        // H^(k+1) ~ beta e^{beta (mu_k - r_{k+1})} for k = 1.
        let ratio = |beta: f64| h_margins(&l, beta).h_k_next[0] / (beta * (beta * (3.0 - 2.0)).exp());
        let rs: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|&b| ratio(b)).collect();
        assert!(
            (rs[2] - 1.0).abs() < (rs[1] - 1.0).abs() && (rs[1] - 1.0).abs() < (rs[0] - 1.0).abs(),
            "{rs:?}"
        );
        assert!((rs[2] - 1.0).abs() < 0.01, "{rs:?}");
    }

    #[test]
    fn absorbing_bound_scales_with_distance() {
        let l = LevelLadder::from_table(&EnergyTable::standard()).unwrap();
        let params = ModelParams::new(1.0, 1.0).unwrap();
        let energies = vec![2.0; 9];
        let a = rc_energy(&energies, 5, &l, params, Scheme::Absorbing { x: 5 }).unwrap();
        let b = rc_energy(&energies, 4, &l, params, Scheme::Absorbing { x: 4 }).unwrap();
        assert!(((b / a) - l.mu_at(10).exp()).abs() < 1e-12);
        let mut tail = energies.clone();
        tail[7] = 3.9;
        let c = rc_energy(&tail, 5, &l, params, Scheme::Absorbing { x: 5 }).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn uniform_pair_bound_by_hand() {
        let l = toy();
        let params = ModelParams::new(1.0, 1.0).unwrap();
        let energies = vec![1.0; 5];
        let m = h_margins(&l, 1.0);
        // Flat energies: 1/pbar_x = sum_{j=0}^{M-1-x} e^{j (1 - r)}.
        let inv = |r: f64, x: usize| (0..=(5 - x)).map(|j| (j as f64 * (1.0 - r)).exp()).sum::<f64>();
        for k in 1..=2 {
            let got = rc_energy(&energies, 3, &l, params, Scheme::UniformPair { k }).unwrap();
            let want = m.h_k[k - 1] * inv(l.r_at(k), 3) + m.h_k_next[k - 1] * inv(l.r_at(k + 1), 3);
            assert!((got - want).abs() < 1e-10 * want, "{got} {want}");
            assert!(got > 0.0);
        }
    }

    #[test]
    fn reconstruction_examples() {
        let t = EnergyTable::standard();
        let aaa = sequence_from_energies(&[1.78, 1.78], &t, Some(Base::A)).unwrap();
        assert_eq!(
            aaa,
            Reconstruction::Unique {
                sequence: "AAA".parse().unwrap()
            }
        );
        match sequence_from_energies(&[t.get(Base::C, Base::C); 5], &t, None).unwrap() {
            Reconstruction::Ambiguous { site, candidates } => {
                assert_eq!(site, 1);
                let names: Vec<String> = candidates.iter().map(|s| s.to_string()).collect();
                assert_eq!(names, vec!["CCCCCC", "GGGGGG"]);
            }
            other => panic!("{other:?}"),
        }
        let acac: BaseSequence = "ACACACA".parse().unwrap();
        let energies: Vec<f64> = acac.bases().windows(2).map(|w| t.get(w[0], w[1])).collect();
        assert_eq!(
            sequence_from_energies(&energies, &t, Some(Base::A)).unwrap(),
            Reconstruction::Unique { sequence: acac }
        );
        match sequence_from_energies(&energies, &t, None).unwrap() {
            Reconstruction::Ambiguous { candidates, .. } => {
                let names: Vec<String> = candidates.iter().map(|s| s.to_string()).collect();
                assert_eq!(names, vec!["ACACACA", "GTGTGTG"]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            sequence_from_energies(&[1.78, 3.0], &t, Some(Base::A)),
            Err(Error::EnergyNotInTable { site: 2, .. })
        ));
    }
}
