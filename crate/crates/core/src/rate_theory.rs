//! Closed-form quantities for a walk on a fixed landscape: escape
//! probabilities, crossing-count laws and moments, decision margins, the
//! exponential error rates of site-wise decoding, obstacle heights and the
//! expected unzipping time.

use serde::{Deserialize, Serialize};

use crate::energy_model::{Base, EnergyTable, Environment, Landscape};
use crate::error::{Error, Result};
use crate::numeric::{ln_binomial, log1m_exp, log_add_exp, log_sum_exp, softplus};
use crate::walker::Mode;

fn check_site(land: &Landscape, x: usize, lo: usize) -> Result<()> {
    let hi = land.sites() - 1;
    if x < lo || x > hi {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: x,
            lo,
            hi,
        });
    }
    Ok(())
}

/// `ln(1 / pbar_x)` where `pbar_x` is the probability that a walk started at
/// `x + 1` reaches `M` before returning to `x`:
/// `1 / pbar_x = 1 + sum_{k = x+1}^{M-1} exp(beta (g(k) - g(x)))`.
pub fn ln_inv_pbar(land: &Landscape, x: usize) -> Result<f64> {
    check_site(land, x, 1)?;
    let beta = land.params().beta;
    let m = land.sites();
    let mut terms = Vec::with_capacity(m - x);
    terms.push(0.0);
    let mut climb = 0.0;
    for k in x + 1..m {
        climb += land.delta(k);
        terms.push(beta * climb);
    }
    Ok(log_sum_exp(&terms))
}

pub fn pbar(land: &Landscape, x: usize) -> Result<f64> {
    Ok((-ln_inv_pbar(land, x)?).exp())
}

/// `1 / pbar_x` for every site `x = 1..=M-1` (index `x - 1`), by the backward
/// recursion `1/pbar_{x-1} = 1 + exp(beta dg_x) / pbar_x`.
pub fn inv_pbar_all(land: &Landscape) -> Vec<f64> {
    let m = land.sites();
    let beta = land.params().beta;
    let mut ln = vec![0.0; m - 1];
    for x in (1..m - 1).rev() {
        ln[x - 1] = log_add_exp(0.0, beta * land.delta(x + 1) + ln[x]);
    }
    ln.into_iter().map(f64::exp).collect()
}

/// Mean and variance of the per-walk crossing counts and sojourn time at a site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountMoments {
    pub mean_up: f64,
    pub var_up: f64,
    pub mean_down: f64,
    pub mean_sojourn: f64,
    pub var_sojourn: f64,
}

/// Single-walk moments of `L+_x`, `L-_x` and `S_x`.
///
/// `L+_x` is geometric on `{1, 2, ...}` with success `pbar_x`. The sojourn
/// time is a geometric number of exponential holds and is itself exponential
/// with mean `e^{beta g0}/(r pbar)`, hence the squared mean as variance.
pub fn count_moments(land: &Landscape, x: usize) -> Result<CountMoments> {
    let inv = ln_inv_pbar(land, x)?.exp();
    let beta = land.params().beta;
    let r = land.params().rate_scale;
    let mean_down = if x == 1 {
        0.0
    } else {
        (beta * land.delta(x)).exp() * inv
    };
    let mean_sojourn = (beta * land.energy(x)).exp() * inv / r;
    Ok(CountMoments {
        mean_up: inv,
        var_up: inv * (inv - 1.0),
        mean_down,
        mean_sojourn,
        var_sojourn: mean_sojourn * mean_sojourn,
    })
}

/// `ln P(L+ = k)` for one walk, `k[x - 1] = L+_x` for `x = 1..=M-1`.
/// Every site is crossed upward at least once, so any `k_x = 0` has
/// probability zero; `k_{M-1}` must be 1.
pub fn ln_joint_up_count_pmf(land: &Landscape, k: &[u64]) -> Result<f64> {
    let m = land.sites();
    if k.len() != m - 1 {
        return Err(Error::LengthMismatch {
            what: "k",
            expected: m - 1,
            got: k.len(),
        });
    }
    if k[m - 2] != 1 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("the last site is crossed exactly once, got k = {}", k[m - 2]),
        });
    }
    if k.contains(&0) {
        return Ok(f64::NEG_INFINITY);
    }
    let beta = land.params().beta;
    let mut total = 0.0;
    for x in 2..m {
        let kx = k[x - 1];
        let kprev = k[x - 2];
        let dg = beta * land.delta(x);
        let ln_p = -softplus(dg);
        let ln_q = -softplus(-dg);
        total += ln_binomial(kx + kprev - 2, kx - 1) + kx as f64 * ln_p;
        if kprev > 1 {
            total += (kprev - 1) as f64 * ln_q;
        }
    }
    Ok(total)
}

/// `ln P(L+_x = up, L-_x = down)` for one walk, `2 <= x <= M-1`.
pub fn ln_pair_pmf(land: &Landscape, x: usize, up: u64, down: u64) -> Result<f64> {
    check_site(land, x, 2)?;
    if up == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let dg = land.params().beta * land.delta(x);
    let ln_p = -softplus(dg);
    let ln_q = -softplus(-dg);
    let ln_inv = ln_inv_pbar(land, x)?;
    let ln_pbar = -ln_inv;
    let ln_not_pbar = log1m_exp(ln_pbar);
    let mut v = ln_binomial(up + down - 1, up - 1) + ln_p + ln_pbar;
    if down > 0 {
        v += down as f64 * ln_q;
    }
    if up > 1 {
        v += (up - 1) as f64 * (ln_p + ln_not_pbar);
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapKind {
    /// `G_a(u)`: discrete-time per-edge divergence, zero with zero slope at `u = a`.
    G,
    /// `F(u) = e^{beta u} - 1 - beta u` (`a` ignored).
    F,
    /// `H_a(u) = ln(1 + e^{beta u}) + e^{beta a} ln(1 + e^{-beta u})`, minimal at `u = a`.
    H,
}

pub fn gap_value(kind: GapKind, a: f64, u: f64, beta: f64) -> f64 {
    match kind {
        GapKind::G => {
            let w = (beta * a).exp();
            (softplus(beta * u) - softplus(beta * a)) + w * (softplus(-beta * u) - softplus(-beta * a))
        }
        GapKind::F => {
            let v = beta * u;
            // exp_m1 keeps the O(v^2) value accurate near 0.
            v.exp_m1() - v
        }
        GapKind::H => softplus(beta * u) + (beta * a).exp() * softplus(-beta * u),
    }
}

/// Per-base margins for one time model. `plus[g]` bounds the information
/// against a wrong base whose right neighbour is `g` (a column of the table),
/// `minus[g]` the same for left neighbour `g` (a row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub plus: [f64; 4],
    pub minus: [f64; 4],
    pub plus_min: f64,
    pub minus_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSet {
    /// `Delta G` margins (discrete time), evaluated at the given `g1`.
    pub discrete: Margins,
    /// `Delta F` margins (continuous time); independent of `g1`.
    pub continuous: Margins,
    /// Set when some margin is zero: the table cannot separate two bases.
    pub degenerate: bool,
}

impl MarginSet {
    pub fn for_mode(&self, mode: Mode) -> &Margins {
        match mode {
            Mode::Discrete => &self.discrete,
            Mode::Continuous => &self.continuous,
        }
    }
}

/// Smallest per-edge divergence between a true energy and a competitor
/// sharing the fixed neighbour. `row == true` fixes the left base.
fn edge_margin(table: &EnergyTable, beta: f64, g1: f64, fixed: Base, row: bool, mode: Mode) -> f64 {
    let entry = |free: Base| {
        if row {
            table.get(fixed, free)
        } else {
            table.get(free, fixed)
        }
    };
    let mut best = f64::INFINITY;
    for truth in Base::ALL {
        for alt in Base::ALL {
            if alt == truth {
                continue;
            }
            let v = match mode {
                Mode::Discrete => gap_value(GapKind::G, entry(truth) - g1, entry(alt) - g1, beta),
                Mode::Continuous => gap_value(GapKind::F, 0.0, entry(truth) - entry(alt), beta),
            };
            best = best.min(v.max(0.0));
        }
    }
    best
}

fn margins(table: &EnergyTable, beta: f64, g1: f64, mode: Mode) -> Margins {
    let mut plus = [0.0; 4];
    let mut minus = [0.0; 4];
    for g in Base::ALL {
        plus[g.index()] = edge_margin(table, beta, g1, g, false, mode);
        minus[g.index()] = edge_margin(table, beta, g1, g, true, mode);
    }
    Margins {
        plus,
        minus,
        plus_min: plus.iter().copied().fold(f64::INFINITY, f64::min),
        minus_min: minus.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Decision margins of the table at inverse temperature `beta` and work `g1`,
/// enumerating every (true, competing) base pair in each row and column.
pub fn decision_margins(table: &EnergyTable, beta: f64, g1: f64) -> MarginSet {
    let discrete = margins(table, beta, g1, Mode::Discrete);
    let continuous = margins(table, beta, g1, Mode::Continuous);
    let degenerate = discrete.plus_min <= 0.0
        || discrete.minus_min <= 0.0
        || continuous.plus_min <= 0.0
        || continuous.minus_min <= 0.0;
    MarginSet {
        discrete,
        continuous,
        degenerate,
    }
}

/// Asymptotic rate of information gained per replica against base `alt` at
/// site `x` when the truth is `env.seq`. In discrete time the first edge
/// carries no information because site 1 always opens.
pub fn competitor_rate(env: &Environment, x: usize, alt: Base, mode: Mode) -> Result<f64> {
    let land = env.landscape();
    check_site(&land, x, 2)?;
    let beta = env.params().beta;
    let table = env.table();
    let seq = &env.seq;
    let inv = inv_pbar_all(&land);
    let (left, mid, right) = (seq.at(x - 1), seq.at(x), seq.at(x + 1));
    let edge = |edge: usize, truth: f64, other: f64| -> f64 {
        match mode {
            Mode::Discrete => {
                let g1 = land.force(edge);
                gap_value(GapKind::G, truth - g1, other - g1, beta)
            }
            Mode::Continuous => gap_value(GapKind::F, 0.0, truth - other, beta),
        }
    };
    let mut rate = inv[x - 1] * edge(x, table.get(mid, right), table.get(alt, right));
    if !(mode == Mode::Discrete && x == 2) {
        rate += inv[x - 2] * edge(x - 1, table.get(left, mid), table.get(left, alt));
    }
    Ok(rate.max(0.0))
}

/// `1 / R_c(x)`: exponential decay rate in `R` of the probability that the
/// site-wise estimate at `x` is wrong, i.e. the slowest competitor rate.
pub fn rc_site(env: &Environment, x: usize, mode: Mode) -> Result<f64> {
    let truth = env.seq.at(x);
    let mut best = f64::INFINITY;
    for alt in Base::ALL {
        if alt != truth {
            best = best.min(competitor_rate(env, x, alt, mode)?);
        }
    }
    Ok(best)
}

/// Margin form of the rate: `minus(b_{x-1}) / pbar_{x-1} + plus(b_{x+1}) / pbar_x`
/// with the per-base margins at each edge's own force. Never exceeds [`rc_site`].
pub fn rc_site_margin_bound(env: &Environment, x: usize, mode: Mode) -> Result<f64> {
    let land = env.landscape();
    check_site(&land, x, 2)?;
    let beta = env.params().beta;
    let inv = inv_pbar_all(&land);
    let right = decision_margins(env.table(), beta, land.force(x));
    let mut v = inv[x - 1] * right.for_mode(mode).plus[env.seq.at(x + 1).index()];
    if !(mode == Mode::Discrete && x == 2) {
        let left = decision_margins(env.table(), beta, land.force(x - 1));
        v += inv[x - 2] * left.for_mode(mode).minus[env.seq.at(x - 1).index()];
    }
    Ok(v)
}

/// Obstacle form: `e^{beta M_{x-1}} minus_min + e^{beta M_x} plus_min`, with
/// the global margins at the force of site `x`.
pub fn rc_site_obstacle_bound(env: &Environment, x: usize, mode: Mode) -> Result<f64> {
    let land = env.landscape();
    check_site(&land, x, 2)?;
    let beta = env.params().beta;
    let set = decision_margins(env.table(), beta, land.force(x));
    let set_left = decision_margins(env.table(), beta, land.force(x - 1));
    // 1/pbar_{M-1} = 1, so the last site's obstacle counts as 0.
    let height = |y: usize| {
        if y + 2 > land.sites() {
            Ok(0.0)
        } else {
            obstacle_height(&land, y)
        }
    };
    let mut v = (beta * height(x)?).exp() * set.for_mode(mode).plus_min;
    if !(mode == Mode::Discrete && x == 2) {
        v += (beta * height(x - 1)?).exp() * set_left.for_mode(mode).minus_min;
    }
    Ok(v)
}

/// `1 / L_c >= min(plus, minus) / 2`.
pub fn lc_bound(table: &EnergyTable, beta: f64, g1: f64, mode: Mode) -> f64 {
    let set = decision_margins(table, beta, g1);
    let m = set.for_mode(mode);
    0.5 * m.plus_min.min(m.minus_min)
}

/// `M_x = max_{x+1 <= l <= M-1} (g(l) - g(x))` for `0 <= x <= M-2`.
pub fn obstacle_height(land: &Landscape, x: usize) -> Result<f64> {
    let m = land.sites();
    if x + 2 > m {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: x,
            lo: 0,
            hi: m - 2,
        });
    }
    let mut climb = 0.0;
    let mut best = f64::NEG_INFINITY;
    for l in x + 1..m {
        climb += land.delta(l);
        best = best.max(climb);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnzipTime {
    /// `R e^{beta max_x M_x}`, the displayed order-of-magnitude floor.
    pub lower: f64,
    /// Exact expected total number of steps over `R` walks.
    pub expectation: f64,
    /// `R M e^{beta max_x M_x}`, the displayed order-of-magnitude ceiling.
    pub upper: f64,
}

/// Expected number of steps for `R` complete unzippings,
/// `R sum_{x=1}^{M-1} (1/pbar_{x-1} + 1/pbar_x - 1)` with `1/pbar_0 := 1`.
pub fn expected_unzip_time(land: &Landscape, replicas: u64) -> Result<UnzipTime> {
    if replicas == 0 {
        return Err(Error::InvalidParameter {
            name: "R",
            reason: "at least one replica is required".into(),
        });
    }
    let m = land.sites();
    let inv = inv_pbar_all(land);
    let mut per_walk = 0.0;
    for x in 1..m {
        let prev = if x == 1 { 1.0 } else { inv[x - 2] };
        per_walk += prev + inv[x - 1] - 1.0;
    }
    let mut highest = f64::NEG_INFINITY;
    for x in 0..m - 1 {
        highest = highest.max(obstacle_height(land, x)?);
    }
    let r = replicas as f64;
    let scale = (land.params().beta * highest).exp();
    Ok(UnzipTime {
        lower: r * scale,
        expectation: r * per_walk,
        upper: r * m as f64 * scale,
    })
}

/// One row of a [`RateReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRates {
    pub site: usize,
    pub free_energy: f64,
    pub pbar: f64,
    /// `1 / R_c(x)`, defined for interior sites `2..=M-1`.
    pub rc_discrete: Option<f64>,
    pub rc_continuous: Option<f64>,
    pub obstacle: Option<f64>,
    pub mean_up: f64,
    pub var_up: f64,
    pub mean_down: f64,
    pub mean_sojourn: f64,
    pub var_sojourn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sites: Vec<SiteRates>,
    pub margins: MarginSet,
    pub lc_discrete: f64,
    pub lc_continuous: f64,
    /// Expected steps for one complete unzipping.
    pub unzip_time: UnzipTime,
    pub degenerate_table: bool,
}

/// Per-site analytic summary of an environment. Margins and `L_c` use the
/// force at site 1 (the whole profile for constant forces).
pub fn rate_report(env: &Environment) -> Result<RateReport> {
    let land = env.landscape();
    let m = land.sites();
    let beta = env.params().beta;
    let profile = land.free_energy_profile();
    let inv = inv_pbar_all(&land);
    let mut sites = Vec::with_capacity(m - 1);
    for x in 1..m {
        let mom = count_moments(&land, x)?;
        let interior = x >= 2;
        sites.push(SiteRates {
            site: x,
            free_energy: profile[x],
            pbar: 1.0 / inv[x - 1],
            rc_discrete: if interior {
                Some(rc_site(env, x, Mode::Discrete)?)
            } else {
                None
            },
            rc_continuous: if interior {
                Some(rc_site(env, x, Mode::Continuous)?)
            } else {
                None
            },
            obstacle: if x + 2 <= m {
                Some(obstacle_height(&land, x)?)
            } else {
                None
            },
            mean_up: mom.mean_up,
            var_up: mom.var_up,
            mean_down: mom.mean_down,
            mean_sojourn: mom.mean_sojourn,
            var_sojourn: mom.var_sojourn,
        });
    }
    let g1 = land.force(1);
    let margins = decision_margins(env.table(), beta, g1);
    Ok(RateReport {
        sites,
        lc_discrete: 0.5 * margins.discrete.plus_min.min(margins.discrete.minus_min),
        lc_continuous: 0.5 * margins.continuous.plus_min.min(margins.continuous.minus_min),
        margins,
        unzip_time: expected_unzip_time(&land, 1)?,
        degenerate_table: !env.table().check_injectivity(0.0).satisfied(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy_model::{ForceField, ModelParams};

    fn flat(m: usize, beta: f64) -> Landscape {
        Landscape::new(
            vec![2.0; m - 1],
            ForceField::constant(m, 2.0),
            ModelParams::new(beta, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn env(seq: &str, g1: f64, beta: f64) -> Environment {
        Environment::with_constant_force(seq.parse().unwrap(), g1, beta, 1.0).unwrap()
    }

    /// Neumaier-compensated direct sum of the exponentials.
    fn inv_pbar_direct(land: &Landscape, x: usize) -> f64 {
        let beta = land.params().beta;
        let g = land.free_energy_profile();
        let (mut sum, mut c) = (1.0f64, 0.0f64);
        for k in x + 1..land.sites() {
            let t = (beta * (g[k] - g[x])).exp();
            let s = sum + t;
            c += if sum.abs() >= t.abs() {
                (sum - s) + t
            } else {
                (t - s) + sum
            };
            sum = s;
        }
        sum + c
    }

    #[test]
    fn pbar_edge_cases() {
        let l = flat(7, 1.0);
        assert_eq!(pbar(&l, 6).unwrap(), 1.0);
        for x in 1..7 {
            assert!((ln_inv_pbar(&l, x).unwrap().exp() - (7 - x) as f64).abs() < 1e-12);
        }
        assert!(pbar(&l, 0).is_err());
        assert!(pbar(&l, 7).is_err());
    }

    #[test]
    fn pbar_recursion_matches_direct_sum() {
        let e = env("ATCGGCTAGCTTAGCAGGCCATATCGCGATTAGCATGCAGTCAGTACGAT", 2.4, 1.0);
        let land = e.landscape();
        let all = inv_pbar_all(&land);
        for x in 1..land.sites() {
            let direct = inv_pbar_direct(&land, x);
            let ln = ln_inv_pbar(&land, x).unwrap().exp();
            assert!((ln - direct).abs() <= 1e-12 * direct, "x={x}");
            assert!((all[x - 1] - direct).abs() <= 1e-12 * direct, "x={x}");
        }
    }

    #[test]
    fn raising_an_energy_lowers_pbar() {
        let e = env("ATCGGCTAGC", 2.3, 1.0);
        let land = e.landscape();
        let mut energies = land.energies().to_vec();
        energies[5] += 0.5;
        let higher = Landscape::new(energies, e.model.force.clone(), e.params()).unwrap();
        for x in 1..land.sites() {
            assert!(pbar(&higher, x).unwrap() <= pbar(&land, x).unwrap());
        }
    }

    #[test]
    fn moments_on_flat_landscape() {
        let l = flat(3, 1.0);
        let m2 = count_moments(&l, 2).unwrap();
        assert_eq!(m2.mean_up, 1.0);
        assert_eq!(m2.var_up, 0.0);
        let m1 = count_moments(&l, 1).unwrap();
        assert!((m1.mean_up - 2.0).abs() < 1e-12);
        assert!((m1.var_up - 2.0).abs() < 1e-12);
        assert_eq!(m1.mean_down, 0.0);
        // E L- at x equals E L+ at x-1 minus one.
        let l = flat(6, 1.0);
        for x in 2..6 {
            let a = count_moments(&l, x).unwrap().mean_down;
            let b = count_moments(&l, x - 1).unwrap().mean_up - 1.0;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_path_probability() {
        let e = env("ATCGG", 2.0, 1.0);
        let land = e.landscape();
        let lp = ln_joint_up_count_pmf(&land, &[1, 1, 1, 1]).unwrap();
        let direct: f64 = (2..5).map(|x| land.forward_probability(x).ln()).sum();
        assert!((lp - direct).abs() < 1e-12);
        assert!(ln_joint_up_count_pmf(&land, &[1, 1, 1, 2]).is_err());
        assert!(ln_joint_up_count_pmf(&land, &[1, 1, 1]).is_err());
        assert_eq!(ln_joint_up_count_pmf(&land, &[0, 1, 1, 1]).unwrap(), f64::NEG_INFINITY);
    }

    /// All `k` with `k_{M-1} = 1`, `k_x >= 1` and `sum k <= cap` for `M = 4`.
    fn truncated_mass(land: &Landscape, cap: u64) -> Vec<([u64; 3], f64)> {
        let mut out = Vec::new();
        for k1 in 1..cap {
            for k2 in 1..cap {
                if k1 + k2 + 1 > cap {
                    break;
                }
                let k = [k1, k2, 1];
                out.push((k, ln_joint_up_count_pmf(land, &k).unwrap().exp()));
            }
        }
        out
    }

    #[test]
    fn joint_pmf_normalizes() {
        let l = flat(4, 1.0);
        let mut last = 0.0;
        for cap in [10, 20, 40, 60] {
            let s: f64 = truncated_mass(&l, cap).iter().map(|(_, p)| p).sum();
            assert!(s >= last);
            last = s;
        }
        assert!(last >= 0.999, "{last}");
        assert!(last <= 1.0 + 1e-12);
    }

    #[test]
    fn pair_marginal_matches_joint() {
        let e = env("ACGT", 2.3, 1.0);
        let land = e.landscape();
        let cells = truncated_mass(&land, 200);
        // Site 2: L+_2 = k2, L-_2 = k1 - 1.
        for (up, down) in [(1u64, 0u64), (1, 2), (2, 1), (3, 4)] {
            let marginal: f64 = cells
                .iter()
                .filter(|(k, _)| k[1] == up && k[0] == down + 1)
                .map(|(_, p)| p)
                .sum();
            let closed = ln_pair_pmf(&land, 2, up, down).unwrap().exp();
            assert!(
                (marginal - closed).abs() < 1e-12 * closed.max(1e-300) + 1e-15,
                "{up},{down}"
            );
        }
        // Site 3 is the last: L+_3 = 1 and L-_3 = k2 - 1.
        for down in 0..5u64 {
            let marginal: f64 = cells.iter().filter(|(k, _)| k[1] == down + 1).map(|(_, p)| p).sum();
            let closed = ln_pair_pmf(&land, 3, 1, down).unwrap().exp();
            assert!((marginal - closed).abs() < 1e-10 * closed, "{down}");
        }
    }

    #[test]
    fn moments_match_pmf_summation() {
        let e = env("GCAT", 2.2, 1.0);
        let land = e.landscape();
        let cells = truncated_mass(&land, 400);
        let mass: f64 = cells.iter().map(|(_, p)| p).sum();
        assert!(mass >= 1.0 - 1e-8, "{mass}");
        for x in 1..=2usize {
            let mean: f64 = cells.iter().map(|(k, p)| k[x - 1] as f64 * p).sum();
            let second: f64 = cells.iter().map(|(k, p)| (k[x - 1] as f64).powi(2) * p).sum();
            let mom = count_moments(&land, x).unwrap();
            assert!((mean - mom.mean_up).abs() <= 1e-4 * mom.mean_up);
            let var = second - mean * mean;
            assert!((var - mom.var_up).abs() <= 1e-4 * mom.var_up.max(1e-12));
        }
    }

    #[test]
    fn gap_functions() {
        for &beta in &[0.5, 1.0, 2.0] {
            for i in -10..=10 {
                let a = i as f64 * 0.5;
                assert!(gap_value(GapKind::G, a, a, beta).abs() < 1e-12);
                let ha = gap_value(GapKind::H, a, a, beta);
                for j in -10..=10 {
                    let u = j as f64 * 0.5;
                    if j != i {
                        assert!(gap_value(GapKind::G, a, u, beta) > 0.0);
                        assert!(gap_value(GapKind::H, a, u, beta) - ha > 0.0, "a={a} u={u} beta={beta}");
                    }
                }
            }
            assert_eq!(gap_value(GapKind::F, 0.0, 0.0, beta), 0.0);
            assert!(gap_value(GapKind::F, 0.0, 1e-3, beta) > 0.0);
            assert!(gap_value(GapKind::F, 0.0, -2.0, beta) > 0.0);
        }
    }

    #[test]
    fn margins_of_degenerate_table() {
        let set = decision_margins(&EnergyTable::constant(2.0), 1.0, 1.5);
        assert!(set.degenerate);
        assert_eq!(set.discrete.plus_min, 0.0);
        assert_eq!(set.continuous.minus_min, 0.0);
        assert_eq!(lc_bound(&EnergyTable::constant(2.0), 1.0, 1.5, Mode::Continuous), 0.0);
    }

    #[test]
    fn continuous_margin_by_enumeration() {
        let table = EnergyTable::standard();
        let beta = 1.0;
        let f = |u: f64| (beta * u).exp() - 1.0 - beta * u;
        let mut best = f64::INFINITY;
        for g in Base::ALL {
            for u in Base::ALL {
                for v in Base::ALL {
                    if u != v {
                        best = best.min(f(table.get(g, u) - table.get(g, v)));
                    }
                }
            }
        }
        let set = decision_margins(&table, beta, 0.7);
        assert!((set.continuous.minus_min - best).abs() < 1e-15);
        assert!(!set.degenerate);
        assert_eq!(set.continuous, decision_margins(&table, beta, 2.9).continuous);
        assert_ne!(set.discrete, decision_margins(&table, 2.0 * beta, 0.7).discrete);
        let lc = lc_bound(&table, beta, 0.7, Mode::Continuous);
        assert_eq!(lc, 0.5 * set.continuous.plus_min.min(set.continuous.minus_min));
        assert!(lc_bound(&table, 2.0, 0.7, Mode::Continuous) > lc);
    }

    #[test]
    fn rc_site_bounds_and_degenerate_zero() {
        let e = env("ATCGGCTAGCAT", 2.3, 1.0);
        for mode in [Mode::Discrete, Mode::Continuous] {
            for x in 2..e.sites() {
                let rc = rc_site(&e, x, mode).unwrap();
                let margin = rc_site_margin_bound(&e, x, mode).unwrap();
                let obstacle = rc_site_obstacle_bound(&e, x, mode).unwrap();
                assert!(rc > 0.0);
                assert!(rc >= margin - 1e-12, "{mode:?} x={x}");
                assert!(margin >= obstacle - 1e-12, "{mode:?} x={x}");
            }
        }
        let mut flat_env = e.clone();
        flat_env.model.table = EnergyTable::constant(2.0);
        for x in 2..e.sites() {
            assert_eq!(rc_site(&flat_env, x, Mode::Discrete).unwrap(), 0.0);
            assert_eq!(rc_site(&flat_env, x, Mode::Continuous).unwrap(), 0.0);
        }
        assert!(rc_site(&e, 1, Mode::Discrete).is_err());
    }

    #[test]
    fn obstacle_heights() {
        // Strictly decreasing profile.
        let land = Landscape::new(
            vec![1.0, 0.5, 0.8, 0.2],
            ForceField::constant(5, 1.5),
            ModelParams::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        let g = land.free_energy_profile();
        for x in 0..4 {
            assert!((obstacle_height(&land, x).unwrap() - (g[x + 1] - g[x])).abs() < 1e-12);
        }
        assert!(obstacle_height(&land, 4).is_err());
        assert_eq!(obstacle_height(&flat(6, 1.0), 2).unwrap(), 0.0);
        // Valley of depth 2 then a rebound of 3 above the start.
        let land = Landscape::new(
            vec![0.0, 0.0, 0.0, 5.0, 0.0],
            ForceField::new(vec![0.0, 1.0, 1.0, 0.0, 0.0]).unwrap(),
            ModelParams::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!((obstacle_height(&land, 1).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unzip_time_closed_forms() {
        let l = flat(2, 1.0);
        assert_eq!(expected_unzip_time(&l, 7).unwrap().expectation, 7.0);
        for m in [3usize, 5, 10, 20] {
            let t = expected_unzip_time(&flat(m, 1.0), 3).unwrap();
            let exact = 3.0 * ((m - 1) * (m - 1)) as f64;
            assert!((t.expectation - exact).abs() < 1e-9 * exact, "m={m}");
            assert_eq!(t.lower, 3.0);
            assert_eq!(t.upper, 3.0 * m as f64);
        }
    }
}
