//! Exact Bayesian recovery of the base sequence from replica statistics.
//!
//! The negative log-posterior of a candidate sequence `alpha` (up to a
//! constant) is the *information* `I(alpha)`: a sum over edges of terms that
//! depend only on `(alpha_x, alpha_{x+1})` and the statistics at site `x`,
//! plus the prior. That chain structure makes the MAP sequence a min-sum
//! dynamic program and the partition function a sum-product recursion, both
//! `O(16 M)`. Everything is kept in log space; posteriors for `R` in the
//! millions are tiny differences of huge numbers otherwise.

use serde::{Deserialize, Serialize};

use crate::energy_model::{Base, BaseSequence, Environment, Model};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, softplus};
use crate::walker::{AggregateStats, Mode};

/// Relative tolerance under which two costs count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Co-optimal sequences listed at most this many times in a [`DecodeResult`].
pub const TIE_CAP: usize = 16;

/// Independent per-site prior over bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prior {
    weights: Vec<[f64; 4]>,
}

impl Prior {
    /// `1/4` for every base at each of `m` sites.
    pub fn uniform(m: usize) -> Self {
        Prior {
            weights: vec![[0.25; 4]; m],
        }
    }

    /// Per-site weights for sites `1..=M` in `A, T, C, G` order.
    pub fn new(weights: Vec<[f64; 4]>) -> Result<Self> {
        for (i, w) in weights.iter().enumerate() {
            let total: f64 = w.iter().sum();
            if w.iter().any(|&p| p.is_nan() || p <= 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter {
                    name: "prior",
                    reason: format!("site {} weights {w:?} must be positive and sum to 1", i + 1),
                });
            }
        }
        Ok(Prior { weights })
    }

    pub fn sites(&self) -> usize {
        self.weights.len()
    }

    /// `ln P(b_x = base)`.
    #[inline]
    pub fn ln(&self, x: usize, base: Base) -> f64 {
        self.weights[x - 1][base.index()].ln()
    }
}

fn check_shapes(stats: &AggregateStats, model: &Model) -> Result<()> {
    if stats.sites() != model.sites() {
        return Err(Error::LengthMismatch {
            what: "statistics",
            expected: model.sites() - 1,
            got: stats.up.len(),
        });
    }
    Ok(())
}

/// Information carried by edge `x` (between sites `x` and `x + 1`) against
/// the hypothesis `(u, v)` for those two bases.
#[inline]
pub fn edge_information(stats: &AggregateStats, model: &Model, x: usize, u: Base, v: Base, mode: Mode) -> f64 {
    let beta = model.params.beta;
    match mode {
        Mode::Discrete => {
            if x == 1 {
                // Site 1 always opens: its crossings say nothing about the sequence.
                return 0.0;
            }
            let dg = beta * model.delta_g(x, u, v);
            let up = stats.up_at(x);
            let down = stats.down_at(x);
            let mut cost = 0.0;
            if up > 0.0 {
                cost += up * softplus(dg);
            }
            if down > 0.0 {
                cost += down * softplus(-dg);
            }
            cost
        }
        Mode::Continuous => {
            let g0 = model.table.get(u, v);
            beta * g0 * stats.up_at(x) + stats.sojourn_at(x) * model.params.rate_scale * (-beta * g0).exp()
        }
    }
}

/// Local information `i_x(left, mid, right)` for `2 <= x <= M-1`: the two
/// edges touching site `x`.
pub fn local_information(
    stats: &AggregateStats,
    model: &Model,
    x: usize,
    triple: (Base, Base, Base),
    mode: Mode,
) -> Result<f64> {
    check_shapes(stats, model)?;
    let m = model.sites();
    if x < 2 || x + 1 > m {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: x,
            lo: 2,
            hi: m - 1,
        });
    }
    let (l, c, r) = triple;
    Ok(edge_information(stats, model, x - 1, l, c, mode) + edge_information(stats, model, x, c, r, mode))
}

/// Posterior of the base at one site given every other base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitePosterior {
    pub site: usize,
    pub probs: [f64; 4],
    /// `-I_x(u, b)` for each base `u`.
    pub log_weights: [f64; 4],
    /// Several bases share the maximal posterior.
    pub tie: bool,
}

fn argmax_with_tie(log_weights: &[f64; 4]) -> (Base, bool) {
    let best = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let mut winners = Base::ALL.iter().filter(|b| best - log_weights[b.index()] <= tol);
    let first = *winners.next().expect("at least one maximum");
    (first, winners.next().is_some())
}

impl SitePosterior {
    fn from_log_weights(site: usize, log_weights: [f64; 4]) -> Self {
        let z = log_sum_exp(&log_weights);
        let mut probs = [0.0; 4];
        for (p, w) in probs.iter_mut().zip(&log_weights) {
            *p = (w - z).exp();
        }
        let (_, tie) = argmax_with_tie(&log_weights);
        SitePosterior {
            site,
            probs,
            log_weights,
            tie,
        }
    }
}

/// `P(b_x = u | statistics, b^x)` for each base `u`, with the flanking bases
/// taken from `env.seq`.
pub fn site_posterior(
    stats: &AggregateStats,
    env: &Environment,
    x: usize,
    prior: &Prior,
    mode: Mode,
) -> Result<SitePosterior> {
    let (left, right) = (env.seq.at(x.max(2) - 1), env.seq.at((x + 1).min(env.sites())));
    let mut lw = [0.0; 4];
    for u in Base::ALL {
        let info = local_information(stats, &env.model, x, (left, u, right), mode)?;
        lw[u.index()] = -(info - prior.ln(x, u));
    }
    Ok(SitePosterior::from_log_weights(x, lw))
}

/// Maximum-posterior base; ties go to the first base in `A, T, C, G` order
/// and are flagged.
pub fn site_map_estimate(post: &SitePosterior) -> (Base, bool) {
    argmax_with_tie(&post.log_weights)
}

/// `ln P(b_x != estimate)`, summed over the losing bases so it stays
/// accurate far below `f64::EPSILON`.
pub fn site_error_log_probability(post: &SitePosterior) -> f64 {
    let (best, _) = site_map_estimate(post);
    let others: Vec<f64> = Base::ALL
        .iter()
        .filter(|&&b| b != best)
        .map(|b| post.log_weights[b.index()])
        .collect();
    log_sum_exp(&others) - log_sum_exp(&post.log_weights)
}

pub fn site_error_probability(post: &SitePosterior) -> f64 {
    site_error_log_probability(post).exp()
}

/// Per-edge 4x4 cost tables whose sum along a sequence is `I(alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePotentials {
    pub mode: Mode,
    /// `phi[x - 1][u][v]` for edge `x`.
    pub phi: Vec<[[f64; 4]; 4]>,
}

impl EdgePotentials {
    /// Number of sites `M`.
    pub fn sites(&self) -> usize {
        self.phi.len() + 1
    }

    #[inline]
    pub fn get(&self, x: usize, u: Base, v: Base) -> f64 {
        self.phi[x - 1][u.index()][v.index()]
    }

    /// `sum_x phi_x(alpha_x, alpha_{x+1})`.
    pub fn cost(&self, alpha: &[Base]) -> f64 {
        alpha
            .windows(2)
            .enumerate()
            .map(|(i, w)| self.get(i + 1, w[0], w[1]))
            .sum()
    }

    /// Same potentials with `shift` added to every entry.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.phi {
            for row in t.iter_mut() {
                for v in row.iter_mut() {
                    *v += shift;
                }
            }
        }
        out
    }
}

/// Edge potentials of the information. The prior term of site `x >= 2` sits
/// on edge `x - 1`, and site 1's on edge 1.
pub fn build_edge_potentials(
    stats: &AggregateStats,
    model: &Model,
    prior: &Prior,
    mode: Mode,
) -> Result<EdgePotentials> {
    check_shapes(stats, model)?;
    let m = model.sites();
    if prior.sites() != m {
        return Err(Error::LengthMismatch {
            what: "prior",
            expected: m,
            got: prior.sites(),
        });
    }
    let mut phi = Vec::with_capacity(m - 1);
    for x in 1..m {
        let mut table = [[0.0; 4]; 4];
        for u in Base::ALL {
            for v in Base::ALL {
                let mut c = edge_information(stats, model, x, u, v, mode) - prior.ln(x + 1, v);
                if x == 1 {
                    c -= prior.ln(1, u);
                }
                table[u.index()][v.index()] = c;
            }
        }
        phi.push(table);
    }
    Ok(EdgePotentials { mode, phi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub map_sequence: BaseSequence,
    /// `I` of the MAP sequence.
    pub cost: f64,
    /// `ln sum exp(-I)` over the candidates (same first-base condition).
    pub log_partition: f64,
    /// Every sequence within the tie tolerance of the optimum, MAP first, up to [`TIE_CAP`].
    pub ties: Vec<BaseSequence>,
    /// More co-optimal sequences exist than listed.
    pub ties_truncated: bool,
}

impl DecodeResult {
    pub fn is_unique(&self) -> bool {
        self.ties.len() == 1 && !self.ties_truncated
    }
}

/// `best[x - 1][u]`: least cost of sites `x..=M` given `alpha_x = u`.
fn cost_to_go(pot: &EdgePotentials) -> Vec<[f64; 4]> {
    let m = pot.sites();
    let mut best = vec![[0.0; 4]; m];
    for x in (1..m).rev() {
        for u in Base::ALL {
            best[x - 1][u.index()] = Base::ALL
                .iter()
                .map(|&v| pot.get(x, u, v) + best[x][v.index()])
                .fold(f64::INFINITY, f64::min);
        }
    }
    best
}

struct TieSearch<'a> {
    pot: &'a EdgePotentials,
    best: Vec<[f64; 4]>,
    limit: f64,
    found: Vec<Vec<Base>>,
    truncated: bool,
}

impl TieSearch<'_> {
    fn extend(&mut self, path: &mut Vec<Base>, cost: f64) {
        if self.found.len() > TIE_CAP {
            self.truncated = true;
            return;
        }
        let x = path.len();
        if x == self.pot.sites() {
            self.found.push(path.clone());
            return;
        }
        let u = *path.last().expect("non-empty path");
        for v in Base::ALL {
            let c = cost + self.pot.get(x, u, v);
            if c + self.best[x][v.index()] <= self.limit {
                path.push(v);
                self.extend(path, c);
                path.pop();
            }
        }
    }
}

fn decode_from(pot: &EdgePotentials, starts: &[Base]) -> DecodeResult {
    let best = cost_to_go(pot);
    let optimum = starts.iter().map(|b| best[0][b.index()]).fold(f64::INFINITY, f64::min);
    let limit = optimum + TIE_TOLERANCE * optimum.abs().max(1.0);
    let mut search = TieSearch {
        pot,
        best,
        limit,
        found: Vec::new(),
        truncated: false,
    };
    for &b in starts {
        if search.best[0][b.index()] <= limit {
            search.extend(&mut vec![b], 0.0);
        }
    }
    let mut found = search.found;
    let truncated = search.truncated || found.len() > TIE_CAP;
    found.truncate(TIE_CAP);
    let map = found[0].clone();
    let log_partition = log_sum_exp(&starts.iter().map(|&b| ln_partition_from(pot, b)).collect::<Vec<_>>());
    DecodeResult {
        cost: pot.cost(&map),
        map_sequence: BaseSequence::new(map).expect("M >= 2"),
        log_partition,
        ties: found
            .into_iter()
            .map(|s| BaseSequence::new(s).expect("M >= 2"))
            .collect(),
        ties_truncated: truncated,
    }
}

/// MAP sequence among those starting with `b1`, by min-sum dynamic
/// programming. Near-ties are resolved towards the lexicographically first
/// sequence in base order and listed in `ties`.
pub fn decode_map(pot: &EdgePotentials, b1: Base) -> DecodeResult {
    decode_from(pot, &[b1])
}

/// MAP over all `4^M` sequences, first base free.
pub fn decode_map_unconditioned(pot: &EdgePotentials) -> DecodeResult {
    decode_from(pot, &Base::ALL)
}

/// `ln [ e^{-I(alpha)} ]` summed over sequences starting at `b1`, step by step.
fn forward_messages(pot: &EdgePotentials, b1: Base) -> Vec<[f64; 4]> {
    let m = pot.sites();
    let mut msgs = Vec::with_capacity(m);
    let mut cur = [f64::NEG_INFINITY; 4];
    cur[b1.index()] = 0.0;
    msgs.push(cur);
    for x in 1..m {
        let mut next = [0.0; 4];
        for v in Base::ALL {
            let terms: Vec<f64> = Base::ALL.iter().map(|&u| cur[u.index()] - pot.get(x, u, v)).collect();
            next[v.index()] = log_sum_exp(&terms);
        }
        cur = next;
        msgs.push(cur);
    }
    msgs
}

fn ln_partition_from(pot: &EdgePotentials, b1: Base) -> f64 {
    log_sum_exp(forward_messages(pot, b1).last().expect("M >= 1"))
}

/// `ln sum_{alpha: alpha_1 = b1} e^{-I(alpha)}`.
pub fn log_partition(pot: &EdgePotentials, b1: Base) -> f64 {
    ln_partition_from(pot, b1)
}

/// `ln P(b = alpha | statistics, b_1)`.
pub fn sequence_log_posterior(alpha: &BaseSequence, pot: &EdgePotentials, b1: Base) -> Result<f64> {
    if alpha.len() != pot.sites() {
        return Err(Error::LengthMismatch {
            what: "sequence",
            expected: pot.sites(),
            got: alpha.len(),
        });
    }
    if alpha.at(1) != b1 {
        return Err(Error::Invalid(format!(
            "candidate starts with {} but the first base is known to be {b1}",
            alpha.at(1)
        )));
    }
    Ok(-pot.cost(alpha.bases()) - log_partition(pot, b1))
}

pub fn sequence_posterior(alpha: &BaseSequence, pot: &EdgePotentials, b1: Base) -> Result<f64> {
    Ok(sequence_log_posterior(alpha, pot, b1)?.exp())
}

/// Posterior marginals `P(b_x = u | statistics, b_1)` for `x = 1..=M`.
pub fn marginals(pot: &EdgePotentials, b1: Base) -> Vec<[f64; 4]> {
    let m = pot.sites();
    let fwd = forward_messages(pot, b1);
    let mut bwd = vec![[0.0; 4]; m];
    for x in (1..m).rev() {
        for u in Base::ALL {
            let terms: Vec<f64> = Base::ALL
                .iter()
                .map(|&v| bwd[x][v.index()] - pot.get(x, u, v))
                .collect();
            bwd[x - 1][u.index()] = log_sum_exp(&terms);
        }
    }
    let z = log_sum_exp(&fwd[m - 1]);
    (0..m)
        .map(|i| {
            let mut p = [0.0; 4];
            for u in Base::ALL {
                p[u.index()] = (fwd[i][u.index()] + bwd[i][u.index()] - z).exp();
            }
            p
        })
        .collect()
}

/// `ln sum e^{-I(alpha)}` over sequences starting at `b1` that differ from
/// `reference` in at least `h` separate blocks (maximal runs of consecutive
/// mismatching sites). Forward recursion over (base, blocks so far capped at
/// `h`); a block opens when a mismatch follows a match.
pub fn ln_error_block_mass(pot: &EdgePotentials, b1: Base, reference: &[Base], h: usize) -> f64 {
    let m = pot.sites();
    let levels = h + 1;
    let idx = |v: Base, c: usize| v.index() * levels + c;
    let mut cur = vec![f64::NEG_INFINITY; 4 * levels];
    let open0 = usize::from(b1 != reference[0]);
    cur[idx(b1, open0.min(h))] = 0.0;
    for x in 1..m {
        let mut next = vec![f64::NEG_INFINITY; 4 * levels];
        let mut terms: Vec<Vec<f64>> = vec![Vec::new(); 4 * levels];
        for u in Base::ALL {
            let u_miss = u != reference[x - 1];
            for c in 0..levels {
                let from = cur[idx(u, c)];
                if from == f64::NEG_INFINITY {
                    continue;
                }
                for v in Base::ALL {
                    let v_miss = v != reference[x];
                    let opened = usize::from(v_miss && !u_miss);
                    terms[idx(v, (c + opened).min(h))].push(from - pot.get(x, u, v));
                }
            }
        }
        for (slot, t) in next.iter_mut().zip(&terms) {
            *slot = log_sum_exp(t);
        }
        cur = next;
    }
    let done: Vec<f64> = Base::ALL.iter().map(|&v| cur[idx(v, h)]).collect();
    log_sum_exp(&done)
}

/// `ln P(at least h separate error blocks | statistics, b_1)` for the MAP decode.
pub fn ln_prob_nonsuccessive_errors(pot: &EdgePotentials, b1: Base, h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: "block count must be at least 1".into(),
        });
    }
    let decoded = decode_map(pot, b1);
    Ok(ln_error_block_mass(pot, b1, decoded.map_sequence.bases(), h) - decoded.log_partition)
}

pub fn prob_nonsuccessive_errors(pot: &EdgePotentials, b1: Base, h: usize) -> Result<f64> {
    Ok(ln_prob_nonsuccessive_errors(pot, b1, h)?.exp())
}

/// `ln P(n_e >= 1)`: the posterior mass off the MAP sequence, computed
/// directly rather than as `1 - P(MAP)`.
pub fn ln_prob_any_error(pot: &EdgePotentials, b1: Base) -> f64 {
    ln_prob_nonsuccessive_errors(pot, b1, 1).expect("h = 1 is valid")
}

pub fn prob_any_error(pot: &EdgePotentials, b1: Base) -> f64 {
    ln_prob_any_error(pot, b1).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub p_any_error: f64,
    pub ln_p_any_error: f64,
    /// `P(at least h error blocks)` for `h = 1..=h_max`.
    pub p_h_errors: Vec<f64>,
    /// `1 - P(b_x = decoded_x)` from the posterior marginals, `x = 1..=M`.
    pub site_errors: Vec<f64>,
}

pub fn error_report(pot: &EdgePotentials, b1: Base, h_max: usize) -> ErrorReport {
    let decoded = decode_map(pot, b1);
    let reference = decoded.map_sequence.bases();
    let z = decoded.log_partition;
    let p_h_errors = (1..=h_max)
        .map(|h| (ln_error_block_mass(pot, b1, reference, h) - z).exp())
        .collect();
    let ln_any = ln_error_block_mass(pot, b1, reference, 1) - z;
    let site_errors = marginals(pot, b1)
        .iter()
        .zip(reference)
        .map(|(p, b)| (1.0 - p[b.index()]).max(0.0))
        .collect();
    ErrorReport {
        p_any_error: ln_any.exp(),
        ln_p_any_error: ln_any,
        p_h_errors,
        site_errors,
    }
}

/// Least-squares line through `(R, -ln P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 with two points or a perfect fit).
    pub slope_se: f64,
}

/// Slope of `-ln P` against `R` from `(R, P)` pairs; `P` must lie in `(0, 1)`.
pub fn empirical_rate(values: &[(f64, f64)]) -> Result<RateFit> {
    let mut pts = Vec::with_capacity(values.len());
    for &(r, p) in values {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DegenerateProbability(p));
        }
        pts.push((r, -p.ln()));
    }
    empirical_rate_from_logs(&pts)
}

/// Same fit from `(R, -ln P)` pairs, for probabilities below `f64::MIN_POSITIVE`.
pub fn empirical_rate_from_logs(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: "at least two points are needed".into(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: "all R values are equal".into(),
        });
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if points.len() > 2 {
        let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        intercept,
        slope_se,
    })
}
