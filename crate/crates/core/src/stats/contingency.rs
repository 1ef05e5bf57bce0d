//! Pearson chi-square analysis of r x c count tables.

use serde::Serialize;

use super::fdr::bh_fdr;
use super::special::chi2_sf;
use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyResult {
    pub table: Vec<Vec<u64>>,
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub cramers_v: f64,
    pub residuals: Vec<Vec<f64>>,
}

struct Margins {
    rows: Vec<f64>,
    cols: Vec<f64>,
    n: f64,
}

fn margins(table: &[Vec<u64>]) -> Result<Margins, StatsError> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 {
        return Err(StatsError::TableTooSmall { rows: r, cols: c });
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(StatsError::RaggedTable);
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum::<u64>() as f64).collect();
    if let Some(i) = rows.iter().position(|&s| s == 0.0) {
        return Err(StatsError::DegenerateMargin { axis: "row", index: i });
    }
    if let Some(j) = cols.iter().position(|&s| s == 0.0) {
        return Err(StatsError::DegenerateMargin { axis: "column", index: j });
    }
    let n = rows.iter().sum();
    Ok(Margins { rows, cols, n })
}

pub fn chi_square(table: &[Vec<u64>]) -> Result<ChiSquare, StatsError> {
    let m = margins(table)?;
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = m.rows[i] * m.cols[j] / m.n;
            let d = obs as f64 - expected;
            chi2 += d * d / expected;
        }
    }
    let df = (m.rows.len() - 1) * (m.cols.len() - 1);
    Ok(ChiSquare { chi2, df, p: chi2_sf(chi2, df as f64), n: m.n as u64 })
}

/// Cramér's V. Errors when the inputs put V outside [0, 1].
pub fn cramers_v(chi2: f64, n: u64, rows: usize, cols: usize) -> Result<f64, StatsError> {
    let k = rows.min(cols);
    if n == 0 || k < 2 || chi2 < 0.0 {
        return Err(StatsError::InvalidEffectSize { chi2, n, rows, cols });
    }
    let bound = n as f64 * (k - 1) as f64;
    if chi2 > bound * (1.0 + 1e-12) {
        return Err(StatsError::InvalidEffectSize { chi2, n, rows, cols });
    }
    Ok((chi2 / bound).sqrt().min(1.0))
}

/// Adjusted standardized residuals `(O - E) / sqrt(E (1 - row/n) (1 - col/n))`.
pub fn standardized_residuals(table: &[Vec<u64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let m = margins(table)?;
    Ok(table
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &obs)| {
                    let expected = m.rows[i] * m.cols[j] / m.n;
                    let var = expected * (1.0 - m.rows[i] / m.n) * (1.0 - m.cols[j] / m.n);
                    if var <= 0.0 {
                        0.0
                    } else {
                        (obs as f64 - expected) / var.sqrt()
                    }
                })
                .collect()
        })
        .collect())
}

pub fn contingency_analysis(table: &[Vec<u64>]) -> Result<ContingencyResult, StatsError> {
    let test = chi_square(table)?;
    let cramers = cramers_v(test.chi2, test.n, table.len(), table[0].len())?;
    Ok(ContingencyResult {
        table: table.to_vec(),
        chi2: test.chi2,
        df: test.df,
        p: test.p,
        cramers_v: cramers,
        residuals: standardized_residuals(table)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseResult {
    pub row_a: String,
    pub row_b: String,
    pub chi2: Option<f64>,
    pub df: usize,
    pub p_raw: Option<f64>,
    pub p_fdr: Option<f64>,
    /// Set when the subtable had an all-zero margin and was not tested.
    pub untested_reason: Option<String>,
}

/// 2 x c chi-square for every pair of rows, BH-adjusted across the tested pairs.
pub fn pairwise_class_tests(table: &[Vec<u64>], labels: &[String]) -> Result<Vec<PairwiseResult>, StatsError> {
    if table.len() < 2 {
        return Err(StatsError::TableTooSmall { rows: table.len(), cols: table.first().map_or(0, Vec::len) });
    }
    if labels.len() != table.len() {
        return Err(StatsError::LabelMismatch { labels: labels.len(), rows: table.len() });
    }
    let mut results = Vec::new();
    for a in 0..table.len() {
        for b in a + 1..table.len() {
            let sub = vec![table[a].clone(), table[b].clone()];
            let cols = sub[0].len();
            let (chi2, p_raw, reason) = match chi_square(&sub) {
                Ok(t) => (Some(t.chi2), Some(t.p), None),
                Err(e @ StatsError::DegenerateMargin { .. }) => (None, None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            results.push(PairwiseResult {
                row_a: labels[a].clone(),
                row_b: labels[b].clone(),
                chi2,
                df: cols.saturating_sub(1),
                p_raw,
                p_fdr: None,
                untested_reason: reason,
            });
        }
    }
    let family: Vec<usize> = (0..results.len()).filter(|&i| results[i].p_raw.is_some()).collect();
    let raw: Vec<f64> = family.iter().map(|&i| results[i].p_raw.unwrap()).collect();
    for (&i, adj) in family.iter().zip(bh_fdr(&raw)?) {
        results[i].p_fdr = Some(adj);
    }
    Ok(results)
}
