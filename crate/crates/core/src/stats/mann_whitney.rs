use super::ranks::{average_ranks, tie_sum};
use super::special::normal_sf;
use super::{two_sided, Direction, Method, StatResult, StatsError};

/// Exact p-values are used when the smaller group has at most this many
/// observations and there are no ties.
pub const MW_EXACT_MAX_N: usize = 8;

/// Null distribution of U for group sizes `(m, n)`, as probabilities over
/// `0..=m·n`. Recurrence on the largest pooled observation:
/// `P[m,n](u) = m/(m+n)·P[m-1,n](u-n) + n/(m+n)·P[m,n-1](u)`.
fn exact_u_distribution(m: usize, n: usize) -> Vec<f64> {
    let (m, n) = if m <= n { (m, n) } else { (n, m) };
    // prev[j] holds P[j, k-1], cur[j] is built as P[j, k]
    let mut prev: Vec<Vec<f64>> = (0..=m).map(|_| vec![1.0]).collect();
    for k in 1..=n {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        cur.push(vec![1.0]);
        for j in 1..=m {
            let mut dist = vec![0.0; j * k + 1];
            let a = j as f64 / (j + k) as f64;
            let b = k as f64 / (j + k) as f64;
            for (u, &p) in cur[j - 1].iter().enumerate() {
                dist[u + k] += a * p;
            }
            for (u, &p) in prev[j].iter().enumerate() {
                dist[u] += b * p;
            }
            cur.push(dist);
        }
        prev = cur;
    }
    prev.pop().expect("m + 1 entries")
}

/// Two-tailed Mann-Whitney U test.
///
/// The statistic is `U_a = R_a - n_a(n_a+1)/2` for the first group, with
/// average ranks for ties. Direction is positive when `group_a` tends to be
/// larger.
pub fn mann_whitney_u(group_a: &[f64], group_b: &[f64]) -> Result<StatResult, StatsError> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(StatsError::InvalidInput(
            "both groups must be non-empty".into(),
        ));
    }
    if group_a.iter().chain(group_b).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite observation".into()));
    }
    let na = group_a.len();
    let nb = group_b.len();
    let pooled: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let (naf, nbf) = (na as f64, nb as f64);
    let u_a = rank_sum_a - naf * (naf + 1.0) / 2.0;
    let mean = naf * nbf / 2.0;
    let direction = Direction::of(u_a - mean);

    if na.min(nb) <= MW_EXACT_MAX_N && ties.is_empty() {
        let dist = exact_u_distribution(na, nb);
        let u = u_a.round() as usize;
        let lower: f64 = dist[..=u].iter().sum();
        let upper: f64 = dist[u..].iter().sum();
        return Ok(StatResult {
            statistic: u_a,
            p_value: two_sided(lower, upper),
            method: Method::MannWhitneyExact,
            n: vec![na, nb],
            direction,
        });
    }

    let big_n = naf + nbf;
    let var = naf * nbf / 12.0 * ((big_n + 1.0) - tie_sum(&ties) / (big_n * (big_n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * normal_sf(z)).clamp(0.0, 1.0)
    };
    Ok(StatResult {
        statistic: u_a,
        p_value,
        method: Method::MannWhitneyNormal,
        n: vec![na, nb],
        direction,
    })
}
