use std::fs;
use std::path::{Path, PathBuf};

use super::EvalReport;
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.csv";
pub const PER_CLASS_FILE: &str = "per_class.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TABLE_FILE: &str = "report.txt";

/// One parsed row of `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub arm: String,
    pub seed: u64,
    pub config_hash: String,
    pub accuracies: Vec<f64>,
    pub avg: f64,
}

fn target_names(reports: &[EvalReport]) -> Result<Vec<String>> {
    let names: Vec<String> = reports
        .first()
        .map(|r| r.targets.iter().map(|t| t.name.clone()).collect())
        .unwrap_or_default();
    for r in reports {
        if r.targets.iter().map(|t| &t.name).ne(names.iter()) {
            return Err(Error::Eval(format!("arm '{}' was evaluated on different targets", r.arm)));
        }
    }
    Ok(names)
}

fn check_field(s: &str) -> Result<&str> {
    if s.contains([',', '\n', '"']) {
        Err(Error::Eval(format!("'{s}' cannot be written as a CSV field")))
    } else {
        Ok(s)
    }
}

/// `arm,seed,config_hash,<target...>,Avg`, one row per report.
pub fn report_csv(reports: &[EvalReport]) -> Result<String> {
    let names = target_names(reports)?;
    for n in &names {
        check_field(n)?;
    }
    let mut out = format!("arm,seed,config_hash,{},Avg\n", names.join(","));
    for r in reports {
        let accs: Vec<String> = r.targets.iter().map(|t| t.accuracy.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            check_field(&r.arm)?,
            r.seed,
            check_field(&r.config_hash)?,
            accs.join(","),
            r.avg
        ));
    }
    Ok(out)
}

/// Inverse of [`report_csv`]: the target names and the rows.
pub fn parse_report_csv(text: &str) -> Result<(Vec<String>, Vec<ReportRow>)> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Eval("empty report".into()))?.split(',').collect();
    if header.len() < 4 || header[..3] != ["arm", "seed", "config_hash"] || header.last() != Some(&"Avg") {
        return Err(Error::Eval("unexpected report header".into()));
    }
    let names: Vec<String> = header[3..header.len() - 1].iter().map(|s| s.to_string()).collect();
    let bad = |what: &str| Error::Eval(format!("malformed report row: {what}"));
    let rows = lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != header.len() {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
            Ok(ReportRow {
                arm: f[0].to_string(),
                seed: f[1].parse().map_err(|_| bad(f[1]))?,
                config_hash: f[2].to_string(),
                accuracies: f[3..f.len() - 1].iter().map(|s| num(s)).collect::<Result<_>>()?,
                avg: num(f[f.len() - 1])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((names, rows))
}

/// `arm,seed,target,class,accuracy`; absent classes leave accuracy empty.
pub fn per_class_csv(reports: &[EvalReport], class_names: &[String]) -> Result<String> {
    let mut out = String::from("arm,seed,target,class,accuracy\n");
    for r in reports {
        for t in &r.targets {
            for (c, acc) in t.per_class.iter().enumerate() {
                let name = class_names.get(c).map_or_else(|| c.to_string(), Clone::clone);
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    check_field(&r.arm)?,
                    r.seed,
                    check_field(&t.name)?,
                    check_field(&name)?,
                    acc.map_or_else(String::new, |a| a.to_string())
                ));
            }
        }
    }
    Ok(out)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Seed-sweep comparison of a treatment arm against a baseline arm, paired
/// by seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: String,
    pub treatment: String,
    pub seeds: Vec<u64>,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub treatment_mean: f64,
    pub treatment_std: f64,
    /// Mean and sample standard deviation of `treatment − baseline` Avg.
    pub diff_mean: f64,
    pub diff_std: f64,
    /// Seeds where the treatment scored at least the baseline.
    pub wins: usize,
}

pub fn compare(reports: &[EvalReport], baseline: &str, treatment: &str) -> Result<Comparison> {
    let mut seeds = Vec::new();
    let (mut base, mut treat, mut diff) = (Vec::new(), Vec::new(), Vec::new());
    for b in reports.iter().filter(|r| r.arm == baseline) {
        if let Some(t) = reports.iter().find(|r| r.arm == treatment && r.seed == b.seed) {
            seeds.push(b.seed);
            base.push(b.avg);
            treat.push(t.avg);
            diff.push(t.avg - b.avg);
        }
    }
    if seeds.is_empty() {
        return Err(Error::Eval(format!("no seed has both '{baseline}' and '{treatment}'")));
    }
    let (baseline_mean, baseline_std) = mean_std(&base);
    let (treatment_mean, treatment_std) = mean_std(&treat);
    let (diff_mean, diff_std) = mean_std(&diff);
    Ok(Comparison {
        baseline: baseline.into(),
        treatment: treatment.into(),
        wins: diff.iter().filter(|&&d| d >= 0.0).count(),
        seeds,
        baseline_mean,
        baseline_std,
        treatment_mean,
        treatment_std,
        diff_mean,
        diff_std,
    })
}

pub fn summary_csv(comparisons: &[Comparison]) -> String {
    let mut out = String::from("baseline,treatment,seeds,baseline_mean,baseline_std,treatment_mean,treatment_std,diff_mean,diff_std,wins\n");
    for c in comparisons {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.baseline,
            c.treatment,
            c.seeds.len(),
            c.baseline_mean,
            c.baseline_std,
            c.treatment_mean,
            c.treatment_std,
            c.diff_mean,
            c.diff_std,
            c.wins
        ));
    }
    out
}

/// Fixed-width table: one row per (arm, seed), then per-arm means.
pub fn text_table(reports: &[EvalReport], comparisons: &[Comparison]) -> Result<String> {
    let names = target_names(reports)?;
    let arm_w = reports.iter().map(|r| r.arm.len()).chain([3]).max().unwrap_or(3);
    let col_w = names.iter().map(String::len).chain([6]).max().unwrap_or(6) + 2;
    let mut out = format!("{:<arm_w$}  {:>4}", "arm", "seed");
    for n in names.iter().map(String::as_str).chain(["Avg."]) {
        out.push_str(&format!("{n:>col_w$}"));
    }
    out.push('\n');
    let row = |out: &mut String, arm: &str, seed: &str, values: &[f64]| {
        out.push_str(&format!("{arm:<arm_w$}  {seed:>4}"));
        for v in values {
            out.push_str(&format!("{v:>col_w$.2}"));
        }
        out.push('\n');
    };
    for r in reports {
        let mut v: Vec<f64> = r.targets.iter().map(|t| t.accuracy).collect();
        v.push(r.avg);
        row(&mut out, &r.arm, &r.seed.to_string(), &v);
    }
    let mut arms: Vec<&str> = Vec::new();
    for r in reports {
        if !arms.contains(&r.arm.as_str()) {
            arms.push(&r.arm);
        }
    }
    out.push('\n');
    for arm in arms {
        let group: Vec<&EvalReport> = reports.iter().filter(|r| r.arm == arm).collect();
        let mut v: Vec<f64> = (0..names.len())
            .map(|i| group.iter().map(|r| r.targets[i].accuracy).sum::<f64>() / group.len() as f64)
            .collect();
        v.push(group.iter().map(|r| r.avg).sum::<f64>() / group.len() as f64);
        row(&mut out, arm, "mean", &v);
    }
    for c in comparisons {
        out.push_str(&format!(
            "\n{} - {}: {:+.2} ± {:.2} Avg. points over {} seeds ({} of {} seeds not worse)\n",
            c.treatment,
            c.baseline,
            c.diff_mean,
            c.diff_std,
            c.seeds.len(),
            c.wins,
            c.seeds.len()
        ));
    }
    Ok(out)
}

/// Writes the report CSV, per-class CSV, comparison summary and text table
/// into `dir`, returning the written paths.
pub fn emit_report(reports: &[EvalReport], class_names: &[String], comparisons: &[Comparison], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (REPORT_FILE, report_csv(reports)?),
        (PER_CLASS_FILE, per_class_csv(reports, class_names)?),
        (SUMMARY_FILE, summary_csv(comparisons)),
        (TABLE_FILE, text_table(reports, comparisons)?),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
