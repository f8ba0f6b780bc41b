use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ExampleMetrics;
use crate::error::{Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt(), n: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub examples: usize,
    pub note_mse: Option<Stat>,
    pub miou: Option<Stat>,
    pub chord_accuracy: Option<Stat>,
}

impl SplitMetrics {
    /// Uniform average over examples.
    pub fn from_examples(all: &[ExampleMetrics]) -> Self {
        let mse: Vec<f64> = all.iter().filter_map(|m| m.note_mse.as_ref().map(|x| x.0)).collect();
        let miou: Vec<f64> = all.iter().filter_map(|m| m.miou.as_ref().map(|x| x.0)).collect();
        let acc: Vec<f64> = all.iter().filter_map(|m| m.correct.map(|c| c as u8 as f64)).collect();
        Self {
            examples: all.len(),
            note_mse: Stat::of(&mse),
            miou: Stat::of(&miou),
            chord_accuracy: Stat::of(&acc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub model: String,
    pub dataset_checksum: Option<String>,
    pub seeds: Vec<u64>,
    pub splits: BTreeMap<String, SplitMetrics>,
}

impl MetricsReport {
    pub fn new(model: impl Into<String>, seeds: Vec<u64>) -> Self {
        Self {
            schema_version: METRICS_SCHEMA_VERSION,
            model: model.into(),
            dataset_checksum: None,
            seeds,
            splits: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema_version != METRICS_SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported metrics schema {}", r.schema_version)));
        }
        Ok(r)
    }
}

/// Across-seed mean and std of each per-seed mean.
pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports.first().ok_or_else(|| Error::invalid("no reports to aggregate"))?;
    let mut out = MetricsReport::new(first.model.clone(), reports.iter().flat_map(|r| r.seeds.clone()).collect());
    out.dataset_checksum = first.dataset_checksum.clone();
    for split in first.splits.keys() {
        let per: Vec<&SplitMetrics> = reports
            .iter()
            .map(|r| {
                r.splits
                    .get(split)
                    .ok_or_else(|| Error::invalid(format!("report for {} lacks split {split}", r.model)))
            })
            .collect::<Result<_>>()?;
        let means = |f: fn(&SplitMetrics) -> Option<Stat>| -> Option<Stat> {
            let v: Vec<f64> = per.iter().filter_map(|m| f(m).map(|s| s.mean)).collect();
            if v.len() == per.len() {
                Stat::of(&v)
            } else {
                None
            }
        };
        out.splits.insert(
            split.clone(),
            SplitMetrics {
                examples: per[0].examples,
                note_mse: means(|m| m.note_mse),
                miou: means(|m| m.miou),
                chord_accuracy: means(|m| m.chord_accuracy),
            },
        );
    }
    Ok(out)
}

fn cell(s: Option<Stat>, scale: f64, digits: usize) -> String {
    match s {
        Some(s) => format!("{:.*} ± {:.*}", digits, s.mean * scale, digits, s.std * scale),
        None => "-".into(),
    }
}

/// Aligned text table, one row per `(model, split)`.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut rows = vec![[
        "model".to_string(),
        "split".to_string(),
        "note MSE".to_string(),
        "mIoU".to_string(),
        "accuracy (%)".to_string(),
    ]];
    for r in reports {
        for (split, m) in &r.splits {
            rows.push([
                r.model.clone(),
                split.clone(),
                cell(m.note_mse, 1.0, 2),
                cell(m.miou, 1.0, 2),
                cell(m.chord_accuracy, 100.0, 2),
            ]);
        }
    }
    let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap()).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        for (c, v) in r.iter().enumerate() {
            let pad = widths[c] - v.chars().count();
            let _ = write!(out, "{}{}  ", v, " ".repeat(pad));
        }
        out = out.trim_end().to_string();
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 8));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(model: &str, seed: u64, mse: f64) -> MetricsReport {
        let mut r = MetricsReport::new(model, vec![seed]);
        r.splits.insert(
            "val".into(),
            SplitMetrics {
                examples: 10,
                note_mse: Stat::of(&[mse]),
                miou: Stat::of(&[0.5]),
                chord_accuracy: None,
            },
        );
        r
    }

    #[test]
    fn stat_basics() {
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (2.0, 1.0, 2));
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn aggregates_across_seeds() {
        let agg = aggregate_seeds(&[report("m", 0, 10.0), report("m", 1, 14.0)]).unwrap();
        assert_eq!(agg.seeds, vec![0, 1]);
        let v = &agg.splits["val"];
        assert_eq!(v.note_mse.unwrap().mean, 12.0);
        assert_eq!(v.note_mse.unwrap().std, 2.0);
        assert!(v.chord_accuracy.is_none());
        assert!(aggregate_seeds(&[]).is_err());
    }

    #[test]
    fn json_round_trip_and_table() {
        let r = report("musicslots-none", 3, 13.47);
        let back = MetricsReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let t = render_table(&[r]);
        assert!(t.contains("13.47 ± 0.00"));
        assert!(t.lines().count() == 3);
    }
}
