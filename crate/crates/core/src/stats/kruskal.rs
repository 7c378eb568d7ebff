use super::ranks::{average_ranks, tie_sum};
use super::special::chi2_sf;
use super::{Direction, Method, StatResult, StatsError};

/// Kruskal-Wallis H test with tie correction; p from chi-squared with
/// `groups - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<StatResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::InvalidInput("need at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::InvalidInput(
            "every group must be non-empty".into(),
        ));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite observation".into()));
    }
    let (ranks, ties) = average_ranks(&pooled);
    let n = pooled.len() as f64;
    let mut offset = 0;
    let mut sum_sq = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum_sq += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (n * (n + 1.0)) * sum_sq - 3.0 * (n + 1.0);
    let correction = 1.0 - tie_sum(&ties) / (n * n * n - n);
    let h = if correction <= 0.0 {
        0.0
    } else {
        (h_raw / correction).max(0.0)
    };
    let df = (groups.len() - 1) as f64;
    Ok(StatResult {
        statistic: h,
        p_value: if h == 0.0 { 1.0 } else { chi2_sf(h, df) },
        method: Method::KruskalWallis,
        n: groups.iter().map(|g| g.len()).collect(),
        direction: Direction::Neutral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mann_whitney_u;

    #[test]
    fn identical_groups() {
        let g = [1.0, 2.0, 3.0, 4.0];
        let r = kruskal_wallis(&[&g, &g, &g]).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn textbook_value() {
        // Hand computation: ranks 1..9, groups {1,2,3},{4,5,6},{7,8,9}
        // H = 12/(9·10)·(36+225+576)/3 - 30 = 7.2
        let r = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]).unwrap();
        assert!((r.statistic - 7.2).abs() < 1e-12);
        assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn two_groups_agree_with_mann_whitney() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 101) as f64 * 0.7).collect();
        let b: Vec<f64> = (0..50)
            .map(|i| ((i * 53) % 97) as f64 * 0.75 + 4.0)
            .collect();
        let kw = kruskal_wallis(&[&a, &b]).unwrap();
        let mw = mann_whitney_u(&a, &b).unwrap();
        assert!(
            (kw.p_value - mw.p_value).abs() < 0.01,
            "{} vs {}",
            kw.p_value,
            mw.p_value
        );
    }

    #[test]
    fn all_values_tied() {
        let r = kruskal_wallis(&[&[2.0, 2.0], &[2.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kruskal_wallis(&[&[1.0]]).is_err());
        assert!(kruskal_wallis(&[&[1.0], &[]]).is_err());
    }
}
