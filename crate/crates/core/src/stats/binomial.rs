//! Exact binomial asymmetry tests with Clopper-Pearson intervals.

use serde::Serialize;

use super::fdr::bh_fdr;
use super::special::{inv_reg_inc_beta, ln_choose};
use super::StatsError;

/// Probabilities within this relative distance of the observed one count as
/// "as likely" when summing the two-sided tail.
const TIE_TOLERANCE: f64 = 1e-7;

pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinomialTestResult {
    pub entity: String,
    pub positive: u64,
    pub negative: u64,
    pub non_neutral: u64,
    pub p_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_raw: f64,
    pub p_fdr: Option<f64>,
}

pub fn binomial_ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    let ln_p = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let ln_q = if k == n { 0.0 } else { (n - k) as f64 * (1.0 - p).ln() };
    ln_choose(n, k) + ln_p + ln_q
}

/// Exact two-sided p-value: total probability of outcomes no more likely
/// than the observed count under `Binomial(n, p0)`.
pub fn binomial_two_sided_p(x: u64, n: u64, p0: f64) -> f64 {
    let observed = binomial_ln_pmf(x, n, p0).exp();
    let cutoff = observed * (1.0 + TIE_TOLERANCE);
    let total: f64 = (0..=n)
        .map(|k| binomial_ln_pmf(k, n, p0).exp())
        .filter(|&pk| pk <= cutoff)
        .sum();
    total.min(1.0)
}

/// Exact (Clopper-Pearson) interval for a binomial proportion.
pub fn clopper_pearson(x: u64, n: u64, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let (xf, nf) = (x as f64, n as f64);
    let lower = match x {
        0 => 0.0,
        _ if x == n => (alpha / 2.0).powf(1.0 / nf),
        _ => inv_reg_inc_beta(xf, nf - xf + 1.0, alpha / 2.0),
    };
    let upper = match x {
        _ if x == n => 1.0,
        0 => 1.0 - (alpha / 2.0).powf(1.0 / nf),
        _ => inv_reg_inc_beta(xf + 1.0, nf - xf, 1.0 - alpha / 2.0),
    };
    (lower, upper)
}

/// Tests H0: P(positive | non-neutral) = 0.5 for `x` positive and `y` negative mentions.
pub fn binomial_test(x: u64, y: u64) -> Result<BinomialTestResult, StatsError> {
    let n = x + y;
    if n == 0 {
        return Err(StatsError::EmptyNonNeutral);
    }
    let (ci_lower, ci_upper) = clopper_pearson(x, n, CI_LEVEL);
    Ok(BinomialTestResult {
        entity: String::new(),
        positive: x,
        negative: y,
        non_neutral: n,
        p_hat: x as f64 / n as f64,
        ci_lower,
        ci_upper,
        p_raw: binomial_two_sided_p(x, n, 0.5),
        p_fdr: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymmetryBattery {
    /// Sorted by `p_fdr`, then entity name.
    pub tested: Vec<BinomialTestResult>,
    /// Entities without any non-neutral mention.
    pub ineligible: Vec<String>,
}

/// One test per entity with at least one non-neutral mention; the FDR family
/// is every tested entity in this call.
pub fn run_asymmetry_battery<'a, I>(counts: I) -> AsymmetryBattery
where
    I: IntoIterator<Item = (&'a str, u64, u64)>,
{
    let mut tested = Vec::new();
    let mut ineligible = Vec::new();
    for (entity, x, y) in counts {
        match binomial_test(x, y) {
            Ok(mut r) => {
                r.entity = entity.to_owned();
                tested.push(r);
            }
            Err(_) => ineligible.push(entity.to_owned()),
        }
    }
    let raw: Vec<f64> = tested.iter().map(|r| r.p_raw).collect();
    let adjusted = bh_fdr(&raw).expect("binomial p-values lie in [0, 1]");
    for (r, p) in tested.iter_mut().zip(adjusted) {
        r.p_fdr = Some(p);
    }
    tested.sort_by(|a, b| a.p_fdr.partial_cmp(&b.p_fdr).unwrap().then_with(|| a.entity.cmp(&b.entity)));
    ineligible.sort();
    AsymmetryBattery { tested, ineligible }
}
