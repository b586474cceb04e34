//! Brute-force reference implementations for small molecules.
//!
//! Nothing here is meant to be fast. The information is evaluated straight
//! from the raw counts for each candidate sequence and every quantity the
//! inference module derives by dynamic programming is recomputed by
//! enumerating all `4^{M-1}` candidates.

use crate::energy_model::{Base, Model};
use crate::inference::{Prior, TIE_TOLERANCE};
use crate::numeric::log_sum_exp;
use crate::walker::{AggregateStats, Mode};

/// `I(alpha)` for a full candidate sequence, summed edge by edge from the
/// statistics without going through edge potentials.
pub fn global_information(stats: &AggregateStats, model: &Model, prior: &Prior, mode: Mode, alpha: &[Base]) -> f64 {
    let beta = model.params.beta;
    let r = model.params.rate_scale;
    let mut total = 0.0;
    for x in 1..alpha.len() {
        let g0 = model.table.get(alpha[x - 1], alpha[x]);
        let up = stats.up[x - 1] as f64;
        match mode {
            Mode::Discrete if x >= 2 => {
                let dg = g0 - model.force.at(x);
                let down = stats.down[x - 1] as f64;
                // ln(1 + e^{z}) written out without the shared helper.
                let lp = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
                total += up * lp(beta * dg) + down * lp(-beta * dg);
            }
            Mode::Discrete => {}
            Mode::Continuous => {
                total += beta * g0 * up + r * stats.sojourn[x - 1] * (-beta * g0).exp();
            }
        }
    }
    for (i, &b) in alpha.iter().enumerate() {
        total -= prior.ln(i + 1, b);
    }
    total
}

/// Number of maximal runs of consecutive sites where `alpha` and `reference` differ.
pub fn error_blocks(alpha: &[Base], reference: &[Base]) -> usize {
    let mut blocks = 0;
    let mut inside = false;
    for (a, b) in alpha.iter().zip(reference) {
        let miss = a != b;
        if miss && !inside {
            blocks += 1;
        }
        inside = miss;
    }
    blocks
}

/// Every candidate with its information, in lexicographic base order.
#[derive(Debug, Clone)]
pub struct Exhaustive {
    pub candidates: Vec<(Vec<Base>, f64)>,
}

impl Exhaustive {
    /// Enumerate all sequences of length `M`, restricted to `alpha_1 = b1`
    /// when a first base is given.
    pub fn enumerate(stats: &AggregateStats, model: &Model, prior: &Prior, mode: Mode, b1: Option<Base>) -> Self {
        let m = model.sites();
        let firsts: Vec<Base> = match b1 {
            Some(b) => vec![b],
            None => Base::ALL.to_vec(),
        };
        let tail = 4usize.pow((m - 1) as u32);
        let mut candidates = Vec::with_capacity(firsts.len() * tail);
        for &first in &firsts {
            for code in 0..tail {
                let mut alpha = vec![first; m];
                let mut c = code;
                // Most significant digit first keeps the list in lexicographic order.
                for slot in alpha[1..].iter_mut().rev() {
                    *slot = Base::from_index(c % 4);
                    c /= 4;
                }
                let cost = global_information(stats, model, prior, mode, &alpha);
                candidates.push((alpha, cost));
            }
        }
        Exhaustive { candidates }
    }

    pub fn min_cost(&self) -> f64 {
        self.candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min)
    }

    /// All candidates within the tie tolerance of the minimum, lexicographic.
    pub fn optimal(&self) -> Vec<Vec<Base>> {
        let best = self.min_cost();
        let limit = best + TIE_TOLERANCE * best.abs().max(1.0);
        self.candidates
            .iter()
            .filter(|c| c.1 <= limit)
            .map(|c| c.0.clone())
            .collect()
    }

    pub fn argmin(&self) -> Vec<Base> {
        self.optimal().swap_remove(0)
    }

    pub fn log_partition(&self) -> f64 {
        let terms: Vec<f64> = self.candidates.iter().map(|c| -c.1).collect();
        log_sum_exp(&terms)
    }

    pub fn log_posterior(&self, alpha: &[Base]) -> Option<f64> {
        let cost = self.candidates.iter().find(|c| c.0 == alpha)?.1;
        Some(-cost - self.log_partition())
    }

    /// `ln` of the posterior mass on candidates with at least `h` error
    /// blocks against `reference`.
    pub fn ln_block_mass(&self, reference: &[Base], h: usize) -> f64 {
        let terms: Vec<f64> = self
            .candidates
            .iter()
            .filter(|c| error_blocks(&c.0, reference) >= h)
            .map(|c| -c.1)
            .collect();
        log_sum_exp(&terms) - self.log_partition()
    }

    /// Posterior of site `x` given every other base equal to `context`.
    pub fn site_conditional(&self, context: &[Base], x: usize) -> [f64; 4] {
        let mut lw = [f64::NEG_INFINITY; 4];
        for (alpha, cost) in &self.candidates {
            let same_elsewhere = alpha
                .iter()
                .zip(context)
                .enumerate()
                .all(|(i, (a, b))| i + 1 == x || a == b);
            if same_elsewhere {
                lw[alpha[x - 1].index()] = -cost;
            }
        }
        let z = log_sum_exp(&lw);
        lw.map(|w| (w - z).exp())
    }
}

/// Outcome of checking the dynamic-programming inference against enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub argmin_matches: bool,
    /// Largest relative disagreement over partition, posteriors and error masses.
    pub max_relative_error: f64,
    /// Name of the quantity with the largest disagreement.
    pub worst: &'static str,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Relative error of `e^a` against `e^b`, safe below the subnormal range.
fn rel_from_logs(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs().exp_m1()
    }
}

/// Compare `decode_map`, `log_partition`, `sequence_posterior`,
/// `prob_any_error` and `prob_nonsuccessive_errors` (for `h = 1..=h_max`)
/// with exhaustive enumeration over all sequences starting at `b1`.
pub fn compare_with_exhaustive(
    stats: &AggregateStats,
    model: &Model,
    prior: &Prior,
    mode: Mode,
    b1: Base,
    h_max: usize,
) -> crate::Result<OracleComparison> {
    use crate::inference as inf;
    let pot = inf::build_edge_potentials(stats, model, prior, mode)?;
    let ex = Exhaustive::enumerate(stats, model, prior, mode, Some(b1));
    let decoded = inf::decode_map(&pot, b1);
    let argmin = ex.argmin();
    let mut worst = ("none", 0.0);
    let mut note = |name: &'static str, e: f64| {
        if e > worst.1 || e.is_nan() {
            worst = (name, e);
        }
    };
    note(
        "log_partition",
        rel_from_logs(inf::log_partition(&pot, b1), ex.log_partition()),
    );
    note("map_cost", rel(decoded.cost, ex.min_cost()));
    let ln_z = ex.log_partition();
    for (alpha, cost) in &ex.candidates {
        let seq = crate::BaseSequence::new(alpha.clone())?;
        note(
            "sequence_posterior",
            rel_from_logs(inf::sequence_log_posterior(&seq, &pot, b1)?, -cost - ln_z),
        );
    }
    note(
        "prob_any_error",
        rel_from_logs(inf::ln_prob_any_error(&pot, b1), ex.ln_block_mass(&argmin, 1)),
    );
    for h in 1..=h_max {
        note(
            "prob_nonsuccessive_errors",
            rel_from_logs(
                inf::ln_prob_nonsuccessive_errors(&pot, b1, h)?,
                ex.ln_block_mass(&argmin, h),
            ),
        );
    }
    Ok(OracleComparison {
        argmin_matches: decoded.map_sequence.bases() == argmin.as_slice(),
        max_relative_error: worst.1,
        worst: worst.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_counting() {
        use Base::*;
        let r = [A, A, A, A, A, A];
        assert_eq!(error_blocks(&r, &r), 0);
        assert_eq!(error_blocks(&[A, T, T, A, A, A], &r), 1);
        assert_eq!(error_blocks(&[A, T, A, T, A, C], &r), 3);
        assert_eq!(error_blocks(&[T, T, T, T, T, T], &r), 1);
    }
}
