use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::special::normal_sf;
use super::StatsError;

pub const IRLS_MAX_ITER: usize = 100;
/// Convergence threshold on the change in log-likelihood.
pub const IRLS_TOL: f64 = 1e-8;
const RIDGE_JITTER: f64 = 1e-8;
const SEPARATION_COEF: f64 = 15.0;
const Z_975: f64 = 1.959_963_984_540_054;

/// Maximum-likelihood logistic regression with Wald inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub odds_ratios: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood after every accepted IRLS step, starting at β = 0.
    pub ll_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when a coefficient exceeds 15 in magnitude while the likelihood is
    /// still rising, the usual symptom of (quasi-)complete separation.
    pub separation_warning: bool,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y.iter())
        .map(|(e, yi)| yi * e - softplus(*e))
        .sum()
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eta = x * beta;
    let p = eta.map(sigmoid);
    let w = p.map(|pi| pi * (1.0 - pi));
    let mut xw = x.clone();
    for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    (x.transpose() * xw, p)
}

/// Fits `P(y = 1) = σ(Xβ)` by iteratively reweighted least squares.
///
/// `design` holds one row per subject and must include the intercept
/// column. Newton steps are halved until the log-likelihood does not
/// decrease, so the recorded history is monotone. Iteration stops when the
/// log-likelihood changes by less than [`IRLS_TOL`]. Standard errors come
/// from the inverse information matrix at the optimum.
pub fn logistic_fit(
    design: &[Vec<f64>],
    outcomes: &[bool],
    names: &[String],
) -> Result<LogisticFit, StatsError> {
    let n = design.len();
    let p = design.first().map_or(0, Vec::len);
    if n != outcomes.len() {
        return Err(StatsError::InvalidInput(format!(
            "{n} rows but {} outcomes",
            outcomes.len()
        )));
    }
    if names.len() != p {
        return Err(StatsError::InvalidInput(format!(
            "{p} columns but {} names",
            names.len()
        )));
    }
    if p == 0 || n <= p {
        return Err(StatsError::InvalidInput(format!(
            "need more rows than predictors (n={n}, p={p})"
        )));
    }
    if design
        .iter()
        .any(|r| r.len() != p || r.iter().any(|v| !v.is_finite()))
    {
        return Err(StatsError::InvalidInput(
            "ragged or non-finite design matrix".into(),
        ));
    }
    if outcomes.iter().all(|&o| o) || outcomes.iter().all(|&o| !o) {
        return Err(StatsError::InvalidInput("outcomes are all equal".into()));
    }
    let x = DMatrix::from_fn(n, p, |i, j| design[i][j]);
    let y = DVector::from_iterator(n, outcomes.iter().map(|&o| if o { 1.0 } else { 0.0 }));
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(&x, &y, &beta);
    let mut history = vec![ll];
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;

    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let (mut info, prob) = information(&x, &beta);
        for d in 0..p {
            info[(d, d)] += RIDGE_JITTER;
        }
        let score = x.transpose() * (&y - prob);
        let chol = info.cholesky().ok_or(StatsError::Singular)?;
        let mut step = chol.solve(&score);
        let mut candidate = &beta + &step;
        let mut ll_new = log_likelihood(&x, &y, &candidate);
        let mut halvings = 0;
        while !(ll_new >= ll) && halvings < 50 {
            step *= 0.5;
            candidate = &beta + &step;
            ll_new = log_likelihood(&x, &y, &candidate);
            halvings += 1;
        }
        if !(ll_new >= ll) {
            // no ascent direction left at machine precision
            converged = true;
            break;
        }
        last_change = ll_new - ll;
        beta = candidate;
        ll = ll_new;
        history.push(ll);
        if beta.amax() > SEPARATION_COEF && last_change > IRLS_TOL {
            separation = true;
        }
        if last_change < IRLS_TOL {
            converged = true;
            break;
        }
    }
    if !converged && !separation {
        return Err(StatsError::NonConvergence {
            iterations,
            last_change,
        });
    }

    let (info, _) = information(&x, &beta);
    let mut info_j = info.clone();
    for d in 0..p {
        info_j[(d, d)] += RIDGE_JITTER;
    }
    let cov = info_j.cholesky().ok_or(StatsError::Singular)?.inverse();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..p).map(|d| cov[(d, d)].max(0.0).sqrt()).collect();
    let z_values: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, s)| b / s)
        .collect();
    let p_values = z_values
        .iter()
        .map(|z| (2.0 * normal_sf(z.abs())).min(1.0))
        .collect();
    Ok(LogisticFit {
        names: names.to_vec(),
        odds_ratios: coefficients.iter().map(|b| b.exp()).collect(),
        ci_lower: coefficients
            .iter()
            .zip(&std_errors)
            .map(|(b, s)| (b - Z_975 * s).exp())
            .collect(),
        ci_upper: coefficients
            .iter()
            .zip(&std_errors)
            .map(|(b, s)| (b + Z_975 * s).exp())
            .collect(),
        coefficients,
        std_errors,
        z_values,
        p_values,
        log_likelihood: ll,
        ll_history: history,
        converged,
        iterations,
        separation_warning: separation,
    })
}

/// `***` for p < 0.001, `**` for p < 0.01, `*` for p < 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioRow {
    pub predictor: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub odds_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
    pub stars: String,
}

/// Report rows for every predictor except the intercept.
pub fn odds_ratio_rows(fit: &LogisticFit) -> Vec<OddsRatioRow> {
    (0..fit.names.len())
        .filter(|&i| fit.names[i] != crate::stats::INTERCEPT)
        .map(|i| OddsRatioRow {
            predictor: fit.names[i].clone(),
            coefficient: fit.coefficients[i],
            std_error: fit.std_errors[i],
            odds_ratio: fit.odds_ratios[i],
            ci_lower: fit.ci_lower[i],
            ci_upper: fit.ci_upper[i],
            p_value: fit.p_values[i],
            stars: significance_stars(fit.p_values[i]).to_string(),
        })
        .collect()
}

/// Centers and scales the flagged columns to unit sample variance. Columns
/// with zero variance are left untouched.
pub fn standardize_columns(design: &[Vec<f64>], continuous: &[bool]) -> Vec<Vec<f64>> {
    let n = design.len() as f64;
    let mut out = design.to_vec();
    for (j, &flag) in continuous.iter().enumerate() {
        if !flag || design.len() < 2 {
            continue;
        }
        let mean = design.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = design.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var <= 0.0 {
            continue;
        }
        let sd = var.sqrt();
        for row in &mut out {
            row[j] = (row[j] - mean) / sd;
        }
    }
    out
}

/// Fits the model (optionally on standardised continuous predictors) and
/// returns its odds-ratio rows. Fails unless the fit converged.
pub fn odds_ratio_table(
    design: &[Vec<f64>],
    outcomes: &[bool],
    names: &[String],
    continuous: &[bool],
    standardize: bool,
) -> Result<(LogisticFit, Vec<OddsRatioRow>), StatsError> {
    let fit = if standardize {
        logistic_fit(&standardize_columns(design, continuous), outcomes, names)?
    } else {
        logistic_fit(design, outcomes, names)?
    };
    if !fit.converged {
        return Err(StatsError::NonConvergence {
            iterations: fit.iterations,
            last_change: f64::NAN,
        });
    }
    let rows = odds_ratio_rows(&fit);
    Ok((fit, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::INTERCEPT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(extra: &[&str]) -> Vec<String> {
        std::iter::once(INTERCEPT)
            .chain(extra.iter().copied())
            .map(String::from)
            .collect()
    }

    /// Builds the saturated 2×2 data set: `a` (x=1,y=1), `b` (x=1,y=0),
    /// `c` (x=0,y=1), `d` (x=0,y=0).
    fn two_by_two(a: usize, b: usize, c: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (count, xv, yv) in [
            (a, 1.0, true),
            (b, 1.0, false),
            (c, 0.0, true),
            (d, 0.0, false),
        ] {
            for _ in 0..count {
                x.push(vec![1.0, xv]);
                y.push(yv);
            }
        }
        (x, y)
    }

    #[test]
    fn saturated_table_log_odds_ratio() {
        let (x, y) = two_by_two(30, 12, 9, 25);
        let fit = logistic_fit(&x, &y, &names(&["x"])).unwrap();
        let expected = ((30.0f64 * 25.0) / (12.0 * 9.0)).ln();
        assert!((fit.coefficients[1] - expected).abs() < 1e-6);
        assert!((fit.coefficients[0] - (9.0f64 / 25.0).ln()).abs() < 1e-6);
        // Woolf standard error of the log odds ratio
        let se = (1.0 / 30.0 + 1.0 / 12.0 + 1.0 / 9.0 + 1.0 / 25.0f64).sqrt();
        assert!((fit.std_errors[1] - se).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![1.0, rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()])
            .collect();
        let y: Vec<bool> = x
            .iter()
            .map(|r| rng.random::<f64>() < sigmoid(0.3 + 1.2 * r[1] - 0.8 * r[2]))
            .collect();
        let fit = logistic_fit(&x, &y, &names(&["a", "b"])).unwrap();
        for w in fit.ll_history.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for i in 0..3 {
            assert!(fit.ci_lower[i] <= fit.odds_ratios[i] && fit.odds_ratios[i] <= fit.ci_upper[i]);
            assert!((fit.odds_ratios[i] - fit.coefficients[i].exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn separation_is_flagged() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let fit = logistic_fit(&x, &y, &names(&["x"])).unwrap();
        assert!(fit.separation_warning);
    }

    #[test]
    fn input_validation() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        assert!(logistic_fit(&x, &[true, true, true], &names(&["x"])).is_err());
        assert!(logistic_fit(&x[..2], &[true, false], &names(&["x"])).is_err());
        assert!(logistic_fit(&x, &[true, false, true], &names(&[])).is_err());
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.0004), "***");
        assert_eq!(significance_stars(0.004), "**");
        assert_eq!(significance_stars(0.04), "*");
        assert_eq!(significance_stars(0.05), "");
    }

    #[test]
    fn rows_from_known_fit() {
        let fit = LogisticFit {
            names: names(&["zero", "doubling"]),
            coefficients: vec![0.1, 0.0, 2f64.ln()],
            std_errors: vec![0.1, 0.2, 0.1],
            z_values: vec![1.0, 0.0, 2f64.ln() / 0.1],
            p_values: vec![0.3, 1.0, 4e-12],
            odds_ratios: vec![0.1f64.exp(), 1.0, 2.0],
            ci_lower: vec![0.0, (-Z_975 * 0.2).exp(), (2f64.ln() - Z_975 * 0.1).exp()],
            ci_upper: vec![0.0, (Z_975 * 0.2).exp(), (2f64.ln() + Z_975 * 0.1).exp()],
            log_likelihood: 0.0,
            ll_history: vec![],
            converged: true,
            iterations: 1,
            separation_warning: false,
        };
        let rows = odds_ratio_rows(&fit);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].odds_ratio, 1.0);
        assert!(rows[0].ci_lower < 1.0 && rows[0].ci_upper > 1.0);
        assert_eq!(rows[0].stars, "");
        assert!((rows[1].odds_ratio - 2.0).abs() < 1e-15);
        assert!(rows[1].ci_lower > 1.0);
        assert_eq!(rows[1].stars, "***");
    }

    #[test]
    fn standardized_odds_ratios_ignore_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                vec![
                    1.0,
                    60.0 + 20.0 * rng.random::<f64>(),
                    if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 },
                ]
            })
            .collect();
        let y: Vec<bool> = x
            .iter()
            .map(|r| rng.random::<f64>() < sigmoid(3.0 - 0.05 * r[1] + 0.6 * r[2]))
            .collect();
        let cont = [false, true, false];
        let nm = names(&["age", "flag"]);
        let (_, base) = odds_ratio_table(&x, &y, &nm, &cont, true).unwrap();
        let scaled: Vec<Vec<f64>> = x
            .iter()
            .map(|r| vec![r[0], r[1] * 12.0 + 5.0, r[2]])
            .collect();
        let (_, rescaled) = odds_ratio_table(&scaled, &y, &nm, &cont, true).unwrap();
        for (a, b) in base.iter().zip(&rescaled) {
            assert!((a.odds_ratio - b.odds_ratio).abs() < 1e-8);
        }
        let (_, raw) = odds_ratio_table(&x, &y, &nm, &cont, false).unwrap();
        assert!((raw[0].odds_ratio - base[0].odds_ratio).abs() > 1e-3);
    }
}
