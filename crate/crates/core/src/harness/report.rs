//! Pipeline stages and the files they write.
//!
//! Layout under `output_dir`:
//!
//! ```text
//! seed_<s>/cohort.csv                               generate-data
//! seed_<s>/<family>/<configuration>/predictions.csv train
//! seed_<s>/<family>/<configuration>/run.json        train
//! seed_<s>/<family>/<configuration>/brainage.csv    evaluate
//! cohort_summary.csv, center_tests.csv              evaluate
//! errors.csv, error_summary.csv, error_comparisons.csv,
//! bias_correction.csv                               evaluate
//! phenotypes.csv, outcomes.csv, odds_ratios.csv,
//! logistic_fits.csv                                 stats
//! summary.md                                        report
//! ```
//!
//! Every table row carries its seed, family and configuration. Nothing
//! time-dependent is written, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::analysis::{
    cohort_summary, compare_error_differences, outcome_analysis, paired_error_differences,
    phenotype_analysis, ErrorComparison, ErrorSummary, GroupComparison, BINARY_VARIABLES,
};
use super::{run_training_protocol, Configuration, ExperimentConfig, ModelFamily, ProtocolRun};
use crate::brainage::{
    correct_brainage_cv, fit_bias_line, read_predictions_csv, write_predictions_csv,
    PredictionRecord,
};
use crate::cohort::write_cohort_csv;
use crate::error::{Error, Result};
use crate::stats::{LogisticFit, OddsRatioRow, StatResult};

type Key = (u64, ModelFamily, Configuration);

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let err = |e: csv::Error| Error::Config(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stat_fields(r: Option<&StatResult>) -> [String; 4] {
    match r {
        Some(r) => [
            r.method.as_str().into(),
            r.statistic.to_string(),
            r.p_value.to_string(),
            r.direction.as_str().into(),
        ],
        None => Default::default(),
    }
}

fn triples(cfg: &ExperimentConfig) -> Vec<Key> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for &f in &cfg.families {
            for &c in &cfg.configurations {
                out.push((seed, f, c));
            }
        }
    }
    out
}

/// Writes the cohort of every seed as CSV.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let cohort = cfg.load_cohort(seed)?;
            let dir = cfg.seed_dir(seed);
            create_dir(&dir)?;
            let path = dir.join("cohort.csv");
            write_cohort_csv(&cohort, &path)?;
            Ok(path)
        })
        .collect()
}

/// Writes `predictions.csv` and `run.json` for one finished run.
pub fn write_run(cfg: &ExperimentConfig, run: &ProtocolRun) -> Result<()> {
    let dir = cfg.run_dir(run.seed, run.family, run.configuration);
    create_dir(&dir)?;
    write_predictions_csv(&dir.join("predictions.csv"), &run.records)?;
    let json = serde_json::to_string_pretty(run).map_err(|e| Error::Json {
        context: "run.json".into(),
        source: e,
    })?;
    write_text(&dir.join("run.json"), &json)
}

/// Trains every selected (seed, family, configuration) triple.
pub fn train(cfg: &ExperimentConfig) -> Result<Vec<ProtocolRun>> {
    let cohorts: BTreeMap<u64, _> = cfg
        .seeds
        .iter()
        .map(|&s| Ok((s, cfg.load_cohort(s)?)))
        .collect::<Result<_>>()?;
    let runs: Vec<ProtocolRun> = triples(cfg)
        .into_par_iter()
        .map(|(seed, family, configuration)| {
            log::info!("training seed {seed} {family} {configuration}");
            let run = run_training_protocol(&cohorts[&seed], cfg, family, configuration, seed)?;
            write_run(cfg, &run)?;
            Ok(run)
        })
        .collect::<Result<_>>()?;
    Ok(runs)
}

/// Corrected predictions of every run found on disk.
fn load_corrected(
    cfg: &ExperimentConfig,
    file: &str,
) -> Result<BTreeMap<Key, Vec<PredictionRecord>>> {
    let mut out = BTreeMap::new();
    for key @ (seed, family, conf) in triples(cfg) {
        let path = cfg.run_dir(seed, family, conf).join(file);
        if path.exists() {
            out.insert(key, read_predictions_csv(&path)?);
        } else {
            log::info!("no {file} for seed {seed} {family} {conf}; skipped");
        }
    }
    Ok(out)
}

fn f(x: f64) -> String {
    x.to_string()
}

/// BrainAGE correction, error tables and paired comparisons, plus the
/// per-center cohort summary.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.output_dir)?;
    let predictions = load_corrected(cfg, "predictions.csv")?;
    if predictions.is_empty() {
        return Err(Error::Config(format!(
            "no predictions under {}; run train first",
            cfg.output_dir.display()
        )));
    }
    let mut corrected = BTreeMap::new();
    let mut bias_rows = Vec::new();
    for (&(seed, family, conf), recs) in &predictions {
        let fixed = correct_brainage_cv(recs, cfg.cv_folds_correction, seed)?;
        write_predictions_csv(
            &cfg.run_dir(seed, family, conf).join("brainage.csv"),
            &fixed,
        )?;
        let ages: Vec<f64> = fixed.iter().map(|r| r.actual_age).collect();
        let pads: Vec<f64> = fixed.iter().map(|r| r.pad).collect();
        let bas: Vec<f64> = fixed
            .iter()
            .map(|r| r.brainage.expect("corrected"))
            .collect();
        let before = fit_bias_line(&pads, &ages)?;
        let after = fit_bias_line(&bas, &ages)?;
        bias_rows.push(vec![
            seed.to_string(),
            family.to_string(),
            conf.to_string(),
            fixed.len().to_string(),
            f(before.slope),
            f(after.slope),
        ]);
        corrected.insert((seed, family, conf), fixed);
    }
    write_table(
        &cfg.output_dir.join("bias_correction.csv"),
        &[
            "seed",
            "family",
            "configuration",
            "n",
            "pad_age_slope",
            "brainage_age_slope",
        ],
        &bias_rows,
    )?;

    let mut error_rows = Vec::new();
    for (&(seed, family, conf), recs) in &corrected {
        for r in recs {
            error_rows.push(vec![
                seed.to_string(),
                family.to_string(),
                conf.to_string(),
                r.subject_id.to_string(),
                f(r.actual_age),
                f(r.predicted_age),
                f(r.abs_error()),
            ]);
        }
    }
    write_table(
        &cfg.output_dir.join("errors.csv"),
        &[
            "seed",
            "family",
            "configuration",
            "subject_id",
            "actual_age",
            "predicted_age",
            "abs_error",
        ],
        &error_rows,
    )?;

    let table = error_table(&corrected);
    let mut summary_rows = Vec::new();
    for ((family, conf, scope), s) in &table {
        summary_rows.push(vec![
            scope.clone(),
            family.to_string(),
            conf.to_string(),
            s.n.to_string(),
            f(s.mean),
            f(s.sd),
        ]);
    }
    write_table(
        &cfg.output_dir.join("error_summary.csv"),
        &[
            "seed",
            "family",
            "configuration",
            "n",
            "mean_abs_error",
            "sd_abs_error",
        ],
        &summary_rows,
    )?;

    let comparisons = error_comparisons(cfg, &corrected)?;
    let rows: Vec<Vec<String>> = comparisons
        .iter()
        .map(|c| {
            let (tested, note) = match &c.result {
                ErrorComparison::Tested(r) => (Some(r), String::new()),
                ErrorComparison::NoDifference { .. } => (None, "no difference".to_string()),
            };
            let [m, s, p, d] = stat_fields(tested);
            vec![
                c.scope.clone(),
                c.family.to_string(),
                c.a.to_string(),
                c.b.to_string(),
                c.n.to_string(),
                f(c.mean_difference),
                m,
                s,
                p,
                d,
                note,
            ]
        })
        .collect();
    write_table(
        &cfg.output_dir.join("error_comparisons.csv"),
        &[
            "seed",
            "family",
            "configuration_a",
            "configuration_b",
            "n",
            "mean_difference",
            "method",
            "statistic",
            "p_value",
            "direction",
            "note",
        ],
        &rows,
    )?;

    let mut center_rows = Vec::new();
    let mut test_rows = Vec::new();
    for &seed in &cfg.seeds {
        let cohort = cfg.load_cohort(seed)?;
        let (centers, tests) = cohort_summary(&cohort);
        for c in centers {
            let mut row = vec![
                seed.to_string(),
                c.center_id.to_string(),
                c.n.to_string(),
                f(c.age_mean),
                f(c.age_sd),
            ];
            row.extend(BINARY_VARIABLES.iter().map(|v| f(c.prevalence[*v])));
            row.extend([f(c.nihss_median), f(c.p2p_median), f(c.good_outcome_rate)]);
            center_rows.push(row);
        }
        for t in tests {
            let [m, s, p, _] = stat_fields(t.result.as_ref());
            test_rows.push(vec![seed.to_string(), t.variable, m, s, p, t.note]);
        }
    }
    let mut header = vec!["seed", "center_id", "n", "age_mean", "age_sd"];
    header.extend(BINARY_VARIABLES);
    header.extend(["nihss_median", "p2p_median", "good_outcome_rate"]);
    write_table(
        &cfg.output_dir.join("cohort_summary.csv"),
        &header,
        &center_rows,
    )?;
    write_table(
        &cfg.output_dir.join("center_tests.csv"),
        &["seed", "variable", "method", "statistic", "p_value", "note"],
        &test_rows,
    )?;
    Ok(())
}

/// Mean ± sd of absolute errors per (family, configuration), per seed and
/// pooled over seeds (scope `all`).
pub fn error_table(
    runs: &BTreeMap<Key, Vec<PredictionRecord>>,
) -> BTreeMap<(ModelFamily, Configuration, String), ErrorSummary> {
    let mut out = BTreeMap::new();
    let mut pooled: BTreeMap<(ModelFamily, Configuration), Vec<PredictionRecord>> = BTreeMap::new();
    for (&(seed, family, conf), recs) in runs {
        out.insert((family, conf, seed.to_string()), ErrorSummary::of(recs));
        pooled
            .entry((family, conf))
            .or_default()
            .extend(recs.iter().cloned());
    }
    for ((family, conf), recs) in pooled {
        out.insert((family, conf, "all".to_string()), ErrorSummary::of(&recs));
    }
    out
}

#[derive(Clone, Debug)]
pub struct ConfigurationComparison {
    pub scope: String,
    pub family: ModelFamily,
    pub a: Configuration,
    pub b: Configuration,
    pub n: usize,
    /// Mean of `|error a| - |error b|`.
    pub mean_difference: f64,
    pub result: ErrorComparison,
}

/// Wilcoxon comparisons between every pair of configurations, per seed and
/// pooled over seeds.
pub fn error_comparisons(
    cfg: &ExperimentConfig,
    runs: &BTreeMap<Key, Vec<PredictionRecord>>,
) -> Result<Vec<ConfigurationComparison>> {
    let mut out = Vec::new();
    let pairs = [
        (Configuration::Centralized, Configuration::Federated),
        (Configuration::Centralized, Configuration::SingleSite),
        (Configuration::Federated, Configuration::SingleSite),
    ];
    for &family in &cfg.families {
        for (a, b) in pairs {
            let mut pooled = Vec::new();
            let mut complete = true;
            for &seed in &cfg.seeds {
                let (Some(ra), Some(rb)) =
                    (runs.get(&(seed, family, a)), runs.get(&(seed, family, b)))
                else {
                    complete = false;
                    continue;
                };
                let diffs = paired_error_differences(ra, rb)?;
                out.push(comparison(seed.to_string(), family, a, b, &diffs)?);
                pooled.extend(diffs);
            }
            if complete && cfg.seeds.len() > 1 {
                out.push(comparison("all".into(), family, a, b, &pooled)?);
            }
        }
    }
    Ok(out)
}

fn comparison(
    scope: String,
    family: ModelFamily,
    a: Configuration,
    b: Configuration,
    diffs: &[f64],
) -> Result<ConfigurationComparison> {
    Ok(ConfigurationComparison {
        scope,
        family,
        a,
        b,
        n: diffs.len(),
        mean_difference: diffs.iter().sum::<f64>() / diffs.len().max(1) as f64,
        result: compare_error_differences(diffs)?,
    })
}

fn group_row(
    seed: u64,
    family: ModelFamily,
    conf: Configuration,
    g: &GroupComparison,
) -> Vec<String> {
    let [m, s, p, d] = stat_fields(g.result.as_ref());
    vec![
        seed.to_string(),
        family.to_string(),
        conf.to_string(),
        g.variable.clone(),
        g.grouping.clone(),
        g.n_present.to_string(),
        g.n_absent.to_string(),
        f(g.median_present),
        f(g.median_absent),
        m,
        s,
        p,
        d,
        g.note.clone(),
    ]
}

const GROUP_HEADER: [&str; 14] = [
    "seed",
    "family",
    "configuration",
    "variable",
    "grouping",
    "n_present",
    "n_absent",
    "median_present",
    "median_absent",
    "method",
    "statistic",
    "p_value",
    "direction",
    "note",
];

/// Phenotype and outcome analyses on the corrected BrainAGE of every run.
pub fn stats(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.output_dir)?;
    let runs = load_corrected(cfg, "brainage.csv")?;
    if runs.is_empty() {
        return Err(Error::Config(format!(
            "no BrainAGE files under {}; run evaluate first",
            cfg.output_dir.display()
        )));
    }
    let mut cohorts = BTreeMap::new();
    let mut pheno_rows = Vec::new();
    let mut outcome_rows = Vec::new();
    let mut or_rows = Vec::new();
    let mut fit_rows = Vec::new();
    for (&(seed, family, conf), recs) in &runs {
        if !cohorts.contains_key(&seed) {
            cohorts.insert(seed, cfg.load_cohort(seed)?);
        }
        let cohort = &cohorts[&seed];
        for g in phenotype_analysis(recs, cohort)? {
            pheno_rows.push(group_row(seed, family, conf, &g));
        }
        let oa = outcome_analysis(recs, cohort)?;
        outcome_rows.push(group_row(seed, family, conf, &oa.brainage_by_outcome));
        for (model, fit, table) in [
            ("raw", &oa.raw_fit, &oa.raw_table),
            ("standardized", &oa.standardized_fit, &oa.standardized_table),
        ] {
            fit_rows.push(fit_row(seed, family, conf, model, fit, recs.len()));
            for r in table {
                or_rows.push(or_row(seed, family, conf, model, r));
            }
        }
    }
    write_table(
        &cfg.output_dir.join("phenotypes.csv"),
        &GROUP_HEADER,
        &pheno_rows,
    )?;
    write_table(
        &cfg.output_dir.join("outcomes.csv"),
        &GROUP_HEADER,
        &outcome_rows,
    )?;
    write_table(
        &cfg.output_dir.join("odds_ratios.csv"),
        &[
            "seed",
            "family",
            "configuration",
            "model",
            "predictor",
            "coefficient",
            "std_error",
            "odds_ratio",
            "ci_lower",
            "ci_upper",
            "p_value",
            "stars",
        ],
        &or_rows,
    )?;
    write_table(
        &cfg.output_dir.join("logistic_fits.csv"),
        &[
            "seed",
            "family",
            "configuration",
            "model",
            "n",
            "log_likelihood",
            "iterations",
            "converged",
            "separation_warning",
        ],
        &fit_rows,
    )?;
    Ok(())
}

fn or_row(
    seed: u64,
    family: ModelFamily,
    conf: Configuration,
    model: &str,
    r: &OddsRatioRow,
) -> Vec<String> {
    vec![
        seed.to_string(),
        family.to_string(),
        conf.to_string(),
        model.to_string(),
        r.predictor.clone(),
        f(r.coefficient),
        f(r.std_error),
        f(r.odds_ratio),
        f(r.ci_lower),
        f(r.ci_upper),
        f(r.p_value),
        r.stars.clone(),
    ]
}

fn fit_row(
    seed: u64,
    family: ModelFamily,
    conf: Configuration,
    model: &str,
    fit: &LogisticFit,
    n: usize,
) -> Vec<String> {
    vec![
        seed.to_string(),
        family.to_string(),
        conf.to_string(),
        model.to_string(),
        n.to_string(),
        f(fit.log_likelihood),
        fit.iterations.to_string(),
        fit.converged.to_string(),
        fit.separation_warning.to_string(),
    ]
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

fn read_table(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let err = |e: csv::Error| Error::Config(format!("reading {}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let header = r.headers().map_err(err)?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(err)?;
            Ok(header
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect())
        })
        .collect()
}

/// Runs evaluate and stats, then writes `summary.md`.
pub fn report(cfg: &ExperimentConfig) -> Result<PathBuf> {
    evaluate(cfg)?;
    stats(cfg)?;
    let out = &cfg.output_dir;
    let mut md = String::new();
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(md, "# BrainAGE experiment summary\n");
    let _ = writeln!(
        md,
        "Seeds: {}. Epochs: {}. Test folds: {}. Correction folds: {}.\n",
        seeds.join(", "),
        cfg.epoch_budget(),
        cfg.cv_folds_test,
        cfg.cv_folds_correction
    );

    let _ = writeln!(
        md,
        "## Absolute age prediction errors in the test set (years, mean ± sd)\n"
    );
    let summary = read_table(&out.join("error_summary.csv"))?;
    let scope = if cfg.seeds.len() > 1 {
        "all".to_string()
    } else {
        seeds[0].clone()
    };
    let _ = writeln!(
        md,
        "| family | {} |",
        cfg.configurations
            .iter()
            .map(|c| c.as_str())
            .collect::<Vec<_>>()
            .join(" | ")
    );
    let _ = writeln!(md, "|---|{}", "---|".repeat(cfg.configurations.len()));
    for family in &cfg.families {
        let cells: Vec<String> = cfg
            .configurations
            .iter()
            .map(|c| {
                summary
                    .iter()
                    .find(|r| {
                        r["seed"] == scope
                            && r["family"] == family.as_str()
                            && r["configuration"] == c.as_str()
                    })
                    .map(|r| {
                        let m: f64 = r["mean_abs_error"].parse().unwrap_or(f64::NAN);
                        let s: f64 = r["sd_abs_error"].parse().unwrap_or(f64::NAN);
                        format!("{m:.2} ± {s:.2}")
                    })
                    .unwrap_or_else(|| "n/a".into())
            })
            .collect();
        let _ = writeln!(md, "| {family} | {} |", cells.join(" | "));
    }

    let _ = writeln!(
        md,
        "\n## Paired comparisons of absolute errors (Wilcoxon signed-rank, seed scope `{scope}`)\n"
    );
    let _ = writeln!(md, "| family | comparison | n | mean difference | p |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for r in read_table(&out.join("error_comparisons.csv"))?
        .iter()
        .filter(|r| r["seed"] == scope)
    {
        let p = if r["note"].is_empty() {
            fmt_p(r["p_value"].parse().unwrap_or(f64::NAN))
        } else {
            r["note"].clone()
        };
        let d: f64 = r["mean_difference"].parse().unwrap_or(f64::NAN);
        let _ = writeln!(
            md,
            "| {} | {} vs {} | {} | {d:.3} | {p} |",
            r["family"], r["configuration_a"], r["configuration_b"], r["n"]
        );
    }

    let first = cfg.seeds[0];
    let _ = writeln!(
        md,
        "\n## BrainAGE by clinical phenotype (Mann-Whitney U, seed {first})\n"
    );
    let _ = writeln!(
        md,
        "| family | configuration | phenotype | median with | median without | p |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|---|");
    for r in read_table(&out.join("phenotypes.csv"))?
        .iter()
        .filter(|r| r["seed"] == first.to_string() && r["variable"] == "brainage")
    {
        let p = if r["note"].is_empty() {
            fmt_p(r["p_value"].parse().unwrap_or(f64::NAN))
        } else {
            r["note"].clone()
        };
        let mp: f64 = r["median_present"].parse().unwrap_or(f64::NAN);
        let ma: f64 = r["median_absent"].parse().unwrap_or(f64::NAN);
        let _ = writeln!(
            md,
            "| {} | {} | {} | {mp:.2} | {ma:.2} | {p} |",
            r["family"], r["configuration"], r["grouping"]
        );
    }

    let _ = writeln!(
        md,
        "\n## BrainAGE by functional outcome (good = mRS ≤ 2, seed {first})\n"
    );
    let _ = writeln!(
        md,
        "| family | configuration | median good | median poor | p |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|");
    for r in read_table(&out.join("outcomes.csv"))?
        .iter()
        .filter(|r| r["seed"] == first.to_string())
    {
        let p = if r["note"].is_empty() {
            fmt_p(r["p_value"].parse().unwrap_or(f64::NAN))
        } else {
            r["note"].clone()
        };
        let mp: f64 = r["median_present"].parse().unwrap_or(f64::NAN);
        let ma: f64 = r["median_absent"].parse().unwrap_or(f64::NAN);
        let _ = writeln!(
            md,
            "| {} | {} | {mp:.2} | {ma:.2} | {p} |",
            r["family"], r["configuration"]
        );
    }

    let _ = writeln!(
        md,
        "\n## Odds ratio of BrainAGE for good outcome (95% Wald CI, seed {first})\n"
    );
    let _ = writeln!(md, "| family | configuration | model | OR | 95% CI | p |");
    let _ = writeln!(md, "|---|---|---|---|---|---|");
    for r in read_table(&out.join("odds_ratios.csv"))?
        .iter()
        .filter(|r| r["seed"] == first.to_string() && r["predictor"] == "brainage")
    {
        let g = |k: &str| r[k].parse::<f64>().unwrap_or(f64::NAN);
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.3}{} | {:.3} to {:.3} | {} |",
            r["family"],
            r["configuration"],
            r["model"],
            g("odds_ratio"),
            r["stars"],
            g("ci_lower"),
            g("ci_upper"),
            fmt_p(g("p_value"))
        );
    }
    let path = out.join("summary.md");
    write_text(&path, &md)?;
    Ok(path)
}
