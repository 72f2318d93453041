//! Per-seed records, aggregates and their JSON/CSV/text renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tuning::EpochLoss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub train_size: usize,
    /// Training examples after conventional DA, before label augmentation.
    pub enlarged_size: usize,
    pub augmented_size: usize,
    /// Label words per class.
    pub verbalizer: Vec<Vec<String>>,
    /// Training accuracy reported by the search, before tuning.
    pub search_train_accuracy: Option<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub selected_epoch: usize,
    pub steps: usize,
    pub loss_trace: Vec<EpochLoss>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
}

/// Mean and sample standard deviation; needs at least two values.
pub fn mean_std(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::Config(format!(
            "standard deviation needs at least 2 seeds, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(Summary {
        mean,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub records: Vec<SeedRecord>,
    pub test_accuracy: Summary,
    pub train_accuracy: Summary,
}

impl RunReport {
    pub fn from_records(name: String, records: Vec<SeedRecord>) -> Result<Self> {
        let test: Vec<f64> = records.iter().map(|r| r.test_accuracy).collect();
        let train: Vec<f64> = records.iter().map(|r| r.train_accuracy).collect();
        Ok(RunReport {
            name,
            test_accuracy: mean_std(&test)?,
            train_accuracy: mean_std(&train)?,
            records,
        })
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn seeds_csv(&self) -> String {
        seeds_csv(std::slice::from_ref(self))
    }
}

/// `mean (std)` in percent with one decimal.
pub fn cell(s: &Summary) -> String {
    format!("{:.1} ({:.1})", 100.0 * s.mean, 100.0 * s.std)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn verbalizer_field(words: &[Vec<String>]) -> String {
    words
        .iter()
        .map(|w| w.join(" "))
        .collect::<Vec<_>>()
        .join(" | ")
}

/// One row per (condition, seed).
pub fn seeds_csv(reports: &[RunReport]) -> String {
    let mut rows = vec![[
        "condition",
        "seed",
        "train_size",
        "augmented_size",
        "train_accuracy",
        "val_accuracy",
        "test_accuracy",
        "verbalizer",
    ]
    .map(String::from)
    .to_vec()];
    for rep in reports {
        for r in &rep.records {
            rows.push(vec![
                rep.name.clone(),
                r.seed.to_string(),
                r.train_size.to_string(),
                r.augmented_size.to_string(),
                r.train_accuracy.to_string(),
                r.val_accuracy.to_string(),
                r.test_accuracy.to_string(),
                verbalizer_field(&r.verbalizer),
            ]);
        }
    }
    csv_string(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTable {
    pub seeds: Vec<u64>,
    pub reports: Vec<RunReport>,
}

impl ConditionTable {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// `condition,mean,std,train_mean,train_std`
    pub fn summary_csv(&self) -> String {
        let mut rows = vec![[
            "condition",
            "test_mean",
            "test_std",
            "train_mean",
            "train_std",
        ]
        .map(String::from)
        .to_vec()];
        for r in &self.reports {
            rows.push(vec![
                r.name.clone(),
                r.test_accuracy.mean.to_string(),
                r.test_accuracy.std.to_string(),
                r.train_accuracy.mean.to_string(),
                r.train_accuracy.std.to_string(),
            ]);
        }
        csv_string(rows)
    }

    pub fn seeds_csv(&self) -> String {
        seeds_csv(&self.reports)
    }

    /// Aligned plain-text table with `mean (std)` cells in percent.
    pub fn to_text(&self) -> String {
        let header = ["condition", "test acc", "train acc"];
        let rows: Vec<[String; 3]> = self
            .reports
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    cell(&r.test_accuracy),
                    cell(&r.train_accuracy),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: [&str; 3]| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}",
                cells[0],
                cells[1],
                cells[2],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2]
            );
        };
        line(header);
        for row in &rows {
            line([&row[0], &row[1], &row[2]]);
        }
        out
    }

    /// Writes `report.json`, `summary.csv`, `seeds.csv` and `table.txt`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_files(
            dir,
            &[
                ("report.json", self.to_json()),
                ("summary.csv", self.summary_csv()),
                ("seeds.csv", self.seeds_csv()),
                ("table.txt", self.to_text()),
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Label words per class.
    KY,
    /// Training examples per class.
    K,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ky" | "k_y" | "KY" => Ok(SweepParam::KY),
            "K" | "k" | "k_shot" => Ok(SweepParam::K),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (expected `ky` or `K`)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::KY => "k_y",
            SweepParam::K => "K",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSeries {
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub reports: Vec<RunReport>,
}

impl ParameterSeries {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// `param,value,train_size,test_mean,test_std` for plotting.
    pub fn series_csv(&self) -> String {
        let mut rows = vec![["param", "value", "train_size", "test_mean", "test_std"]
            .map(String::from)
            .to_vec()];
        for (v, r) in self.values.iter().zip(&self.reports) {
            rows.push(vec![
                self.param.to_string(),
                v.to_string(),
                r.records.first().map_or(0, |s| s.train_size).to_string(),
                r.test_accuracy.mean.to_string(),
                r.test_accuracy.std.to_string(),
            ]);
        }
        csv_string(rows)
    }

    pub fn seeds_csv(&self) -> String {
        seeds_csv(&self.reports)
    }

    /// Writes `report.json`, `series.csv` and `seeds.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_files(
            dir,
            &[
                ("report.json", self.to_json()),
                ("series.csv", self.series_csv()),
                ("seeds.csv", self.seeds_csv()),
            ],
        )
    }
}

pub(crate) fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, acc: f64) -> SeedRecord {
        SeedRecord {
            seed,
            train_size: 16,
            enlarged_size: 16,
            augmented_size: 48,
            verbalizer: vec![vec!["good".into(), "great".into()], vec!["bad".into()]],
            search_train_accuracy: None,
            train_accuracy: 1.0,
            val_accuracy: acc,
            test_accuracy: acc,
            selected_epoch: 10,
            steps: 120,
            loss_trace: vec![],
        }
    }

    #[test]
    fn two_point_sample_std() {
        let s = mean_std(&[0.8, 0.9]).unwrap();
        assert!((s.mean - 0.85).abs() < 1e-12);
        assert!((s.std - 0.005f64.sqrt()).abs() < 1e-12);
        assert!((s.std - 0.0707).abs() < 1e-4);
    }

    #[test]
    fn constant_has_zero_std() {
        assert_eq!(mean_std(&[0.7; 5]).unwrap().std, 0.0);
        assert!(mean_std(&[0.7]).is_err());
    }

    #[test]
    fn table_cells_and_alignment() {
        let rep =
            RunReport::from_records("prompt tuning".into(), vec![record(1, 0.8), record(2, 0.9)])
                .unwrap();
        let table = ConditionTable {
            seeds: vec![1, 2],
            reports: vec![rep],
        };
        let text = table.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("85.0 (7.1)"));
        assert_eq!(lines[0].len(), lines[1].len());
        let csv = table.seeds_csv();
        assert!(csv.starts_with("condition,seed,"));
        assert!(csv.contains("good great | bad"));
    }
}
