use super::ranks::{average_ranks, tie_sum};
use super::special::normal_sf;
use super::{two_sided, Direction, Method, StatResult, StatsError};

/// Largest sample (after dropping zeros) that gets the exact null distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Exact null distribution of W+ over doubled ranks (average ranks are
/// half-integers, so doubling keeps every sum integral). Entry `s` counts the
/// sign patterns whose doubled positive-rank sum equals `s`.
fn exact_counts(doubled_ranks: &[u64]) -> Vec<f64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0.0; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0.0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    counts
}

/// Two-tailed Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped before ranking and `n` is reported after
/// removal. The statistic is W+, the sum of ranks of the positive
/// differences. Exact p by enumerating sign patterns for `n <= 25`,
/// otherwise a normal approximation with tie and continuity correction.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<StatResult, StatsError> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite difference".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(StatsError::Degenerate("all differences are zero".into()));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let direction = Direction::of(w_plus - mean);

    if n <= WILCOXON_EXACT_MAX_N {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let counts = exact_counts(&doubled);
        let w2 = (2.0 * w_plus).round() as usize;
        let total = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / total;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / total;
        return Ok(StatResult {
            statistic: w_plus,
            p_value: two_sided(lower, upper),
            method: Method::WilcoxonExact,
            n: vec![n],
            direction,
        });
    }

    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(StatResult {
        statistic: w_plus,
        p_value: (2.0 * normal_sf(z)).clamp(0.0, 1.0),
        method: Method::WilcoxonNormal,
        n: vec![n],
        direction,
    })
}
