use std::collections::BTreeMap;

use super::AnalysisError;

/// Krippendorff's alpha for nominal data. `ratings[item][rater]` holds each
/// rater's value, `None` when missing. Items with fewer than two values do not
/// pair and are dropped.
///
/// Built on the coincidence matrix: every ordered pair of values within an item
/// with `m` values contributes `1 / (m - 1)`. Then
/// `alpha = 1 - (n - 1) * sum_{c != k} o_ck / sum_{c != k} n_c * n_k`.
pub fn krippendorff_alpha_nominal<T: Ord + Clone>(ratings: &[Vec<Option<T>>]) -> Result<f64, AnalysisError> {
    let mut coincidence: BTreeMap<(T, T), f64> = BTreeMap::new();
    for item in ratings {
        let values: Vec<&T> = item.iter().flatten().collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        let w = 1.0 / (m - 1) as f64;
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry(((*a).clone(), (*b).clone())).or_default() += w;
                }
            }
        }
    }
    if coincidence.is_empty() {
        return Err(AnalysisError::NoPairableValues);
    }
    let mut marginals: BTreeMap<&T, f64> = BTreeMap::new();
    let mut observed = 0.0;
    for ((c, k), o) in &coincidence {
        *marginals.entry(c).or_default() += o;
        if c != k {
            observed += o;
        }
    }
    if observed == 0.0 {
        return Ok(1.0);
    }
    let n: f64 = marginals.values().sum();
    let squares: f64 = marginals.values().map(|v| v * v).sum();
    let expected = n * n - squares;
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Cramér's V of an `r x c` contingency table. All-zero rows and columns are
/// removed first; fewer than two remaining rows or columns is an error.
pub fn cramers_v(table: &[Vec<f64>]) -> Result<f64, AnalysisError> {
    let width = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != width) {
        return Err(AnalysisError::RaggedTable);
    }
    let col_sum = |j: usize| table.iter().map(|r| r[j]).sum::<f64>();
    let cols: Vec<usize> = (0..width).filter(|&j| col_sum(j) > 0.0).collect();
    let rows: Vec<Vec<f64>> = table
        .iter()
        .filter(|r| r.iter().sum::<f64>() > 0.0)
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Err(AnalysisError::DegenerateTable {
            rows: rows.len(),
            cols: cols.len(),
        });
    }
    let row_totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<f64> = (0..cols.len()).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let n: f64 = row_totals.iter().sum();
    let mut chi2 = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, &obs) in r.iter().enumerate() {
            let e = row_totals[i] * col_totals[j] / n;
            chi2 += (obs - e).powi(2) / e;
        }
    }
    let k = rows.len().min(cols.len()) as f64 - 1.0;
    Ok((chi2 / (n * k)).sqrt().clamp(0.0, 1.0))
}
