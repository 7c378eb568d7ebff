use super::special::chi2_sf;
use super::{Direction, Method, StatResult, StatsError};

/// Pearson chi-squared test of a 2×2 table with Yates's continuity
/// correction: `Σ max(|O - E| - 0.5, 0)² / E`, p from one degree of freedom.
/// Direction is positive when the diagonal is over-represented.
pub fn chi2_yates(table: [[u64; 2]; 2]) -> Result<StatResult, StatsError> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(StatsError::Degenerate(format!(
            "zero margin in table {table:?}"
        )));
    }
    let n = (rows[0] + rows[1]) as f64;
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            let dev = ((table[i][j] as f64 - expected).abs() - 0.5).max(0.0);
            stat += dev * dev / expected;
        }
    }
    let cross = table[0][0] as f64 * table[1][1] as f64 - table[0][1] as f64 * table[1][0] as f64;
    Ok(StatResult {
        statistic: stat,
        p_value: chi2_sf(stat, 1.0),
        method: Method::ChiSquaredYates,
        n: vec![n as usize],
        direction: Direction::of(cross),
    })
}

/// Pearson chi-squared test of independence for an r×c table. A 2×2 table
/// gets Yates's correction (same as [`chi2_yates`]); larger tables use the
/// uncorrected statistic on `(r-1)(c-1)` degrees of freedom. Rows or columns
/// that sum to zero are dropped first.
pub fn chi2_independence(table: &[Vec<u64>]) -> Result<StatResult, StatsError> {
    let width = table.first().map_or(0, Vec::len);
    if table.iter().any(|r| r.len() != width) {
        return Err(StatsError::InvalidInput("ragged contingency table".into()));
    }
    let keep_cols: Vec<usize> = (0..width)
        .filter(|&j| table.iter().any(|r| r[j] > 0))
        .collect();
    let t: Vec<Vec<u64>> = table
        .iter()
        .filter(|r| r.iter().any(|&v| v > 0))
        .map(|r| keep_cols.iter().map(|&j| r[j]).collect())
        .collect();
    if t.len() < 2 || keep_cols.len() < 2 {
        return Err(StatsError::Degenerate(
            "contingency table needs two non-empty rows and columns".into(),
        ));
    }
    if t.len() == 2 && keep_cols.len() == 2 {
        return chi2_yates([[t[0][0], t[0][1]], [t[1][0], t[1][1]]]);
    }
    let rows: Vec<f64> = t.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..keep_cols.len())
        .map(|j| t.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let n: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for (i, r) in t.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            let e = rows[i] * cols[j] / n;
            stat += (o as f64 - e).powi(2) / e;
        }
    }
    let df = ((t.len() - 1) * (keep_cols.len() - 1)) as f64;
    Ok(StatResult {
        statistic: stat,
        p_value: chi2_sf(stat, df),
        method: Method::ChiSquaredPearson,
        n: vec![n as usize],
        direction: Direction::Neutral,
    })
}
