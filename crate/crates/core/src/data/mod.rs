//! Evaluation records, aggregation into fitting points, prompt-length
//! reconstruction, and the bundled observation grids.
//!
//! ## Wire formats
//!
//! Records CSV (header required, UTF-8, LF, `.` decimal separator):
//! `task,model_id,C,n_ctx,shots,n_pmt,metric` with C in FLOPs (scientific
//! notation accepted), n_ctx/n_pmt in integer tokens, metric in [0, 1].
//!
//! Aggregated CSV: `task,model_id,C,n_pmt,n_ctx,shots,metric,count`.
//!
//! JSON mirrors the same field names (an array of objects).

pub mod fixtures;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three tasks with bundled observation grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinTask {
    Arithmetic,
    Commonsense,
    Translation,
}

impl BuiltinTask {
    pub const ALL: [BuiltinTask; 3] = [
        BuiltinTask::Arithmetic,
        BuiltinTask::Commonsense,
        BuiltinTask::Translation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BuiltinTask::Arithmetic => "arithmetic",
            BuiltinTask::Commonsense => "commonsense",
            BuiltinTask::Translation => "translation",
        }
    }
}

impl fmt::Display for BuiltinTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arithmetic" => Ok(BuiltinTask::Arithmetic),
            "commonsense" => Ok(BuiltinTask::Commonsense),
            "translation" => Ok(BuiltinTask::Translation),
            other => Err(Error::Config(format!(
                "unknown task `{other}` (expected arithmetic, commonsense, or translation)"
            ))),
        }
    }
}

/// One raw downstream observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Task label: `arithmetic`, `commonsense`, `translation`, or any custom
    /// string.
    pub task: String,
    pub model_id: String,
    /// Training compute in FLOPs.
    #[serde(rename = "C")]
    pub compute: f64,
    /// Context limit in tokens.
    pub n_ctx: u64,
    /// In-context demonstration count.
    pub shots: u32,
    /// Prompt length in tokens.
    pub n_pmt: u64,
    /// Task metric in [0, 1].
    pub metric: f64,
}

impl EvalRecord {
    fn check(&self) -> std::result::Result<(), String> {
        if !self.compute.is_finite() || self.compute <= 0.0 {
            return Err(format!("C = {} must be finite and positive", self.compute));
        }
        if self.n_ctx == 0 {
            return Err("n_ctx must be positive".into());
        }
        if !self.metric.is_finite() || !(0.0..=1.0).contains(&self.metric) {
            return Err(format!("metric = {} outside [0, 1]", self.metric));
        }
        Ok(())
    }
}

/// One fitting datum: a group of records averaged over prompt length and
/// metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPoint {
    pub task: String,
    pub model_id: String,
    /// Training compute in FLOPs.
    #[serde(rename = "C")]
    pub compute: f64,
    /// Mean prompt length in tokens.
    pub n_pmt: f64,
    /// Context limit in tokens.
    pub n_ctx: u64,
    /// Grouping key: demonstration count shared by the member records.
    pub shots: u32,
    /// Mean metric in [0, 1].
    pub metric: f64,
    /// Number of records aggregated.
    pub count: u64,
}

impl AggregatedPoint {
    pub(crate) fn check(&self) -> std::result::Result<(), String> {
        if !self.compute.is_finite() || self.compute <= 0.0 {
            return Err(format!("C = {} must be finite and positive", self.compute));
        }
        if self.n_ctx == 0 {
            return Err("n_ctx must be positive".into());
        }
        if !self.n_pmt.is_finite() || self.n_pmt < 0.0 {
            return Err(format!(
                "n_pmt = {} must be finite and nonnegative",
                self.n_pmt
            ));
        }
        if !self.metric.is_finite() || !(0.0..=1.0).contains(&self.metric) {
            return Err(format!("metric = {} outside [0, 1]", self.metric));
        }
        if self.count == 0 {
            return Err("count must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-dataset token-length statistics of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub avg_train_tokens: f64,
    pub avg_test_tokens: f64,
    pub test_count: u64,
}

/// The datasets making up one task, with their length statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub datasets: Vec<DatasetStats>,
}

impl TaskProfile {
    pub fn total_test_count(&self) -> u64 {
        self.datasets.iter().map(|d| d.test_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.datasets {
            let lengths_ok = d.avg_train_tokens.is_finite()
                && d.avg_train_tokens > 0.0
                && d.avg_test_tokens.is_finite()
                && d.avg_test_tokens > 0.0;
            if !lengths_ok || d.test_count == 0 {
                return Err(Error::Config(format!(
                    "dataset `{}` must have positive lengths and test count",
                    d.name
                )));
            }
        }
        Ok(())
    }
}

/// Input encodings accepted by the parsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Json,
}

/// Parses raw evaluation records, in input order. Rows violating the record
/// invariants are rejected with their record number.
pub fn parse_records<R: Read>(reader: R, format: RecordFormat) -> Result<Vec<EvalRecord>> {
    match format {
        RecordFormat::Csv => parse_csv(reader, |r: &EvalRecord| r.check()),
        RecordFormat::Json => parse_json(reader, |r: &EvalRecord| r.check()),
    }
}

/// Parses already-aggregated fitting points.
pub fn parse_points<R: Read>(reader: R, format: RecordFormat) -> Result<Vec<AggregatedPoint>> {
    match format {
        RecordFormat::Csv => parse_csv(reader, |p: &AggregatedPoint| p.check()),
        RecordFormat::Json => parse_json(reader, |p: &AggregatedPoint| p.check()),
    }
}

fn parse_csv<R, T, F>(reader: R, check: F) -> Result<Vec<T>>
where
    R: Read,
    T: serde::de::DeserializeOwned,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (idx, row) in rdr.deserialize::<T>().enumerate() {
        // +2: record 1 sits on line 2, after the header.
        let line = idx + 2;
        let value = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(line),
            msg: trim_csv_error(&e),
        })?;
        check(&value).map_err(|msg| Error::Validation { line, msg })?;
        out.push(value);
    }
    Ok(out)
}

fn parse_json<R, T, F>(reader: R, check: F) -> Result<Vec<T>>
where
    R: Read,
    T: serde::de::DeserializeOwned,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    let values: Vec<T> = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    for (idx, value) in values.iter().enumerate() {
        check(value).map_err(|msg| Error::Validation { line: idx + 1, msg })?;
    }
    Ok(values)
}

fn trim_csv_error(e: &csv::Error) -> String {
    // The csv crate prefixes errors with the full record context; keep them
    // one line for the CLI.
    e.to_string().replace('\n', " ")
}

/// Writes points in the aggregated CSV schema.
pub fn write_points_csv<W: Write>(writer: W, points: &[AggregatedPoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in points {
        wtr.serialize(p)
            .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Groups records by (task, model, shots) and averages prompt length and
/// metric within each group.
///
/// Training compute and context limit must be uniform within a group; the
/// output is sorted by (task, C, n_ctx, shots).
pub fn aggregate(records: &[EvalRecord]) -> Result<Vec<AggregatedPoint>> {
    struct Group {
        compute: f64,
        n_ctx: u64,
        n_pmt_sum: f64,
        metric_sum: f64,
        count: u64,
    }

    let mut groups: BTreeMap<(String, String, u32), Group> = BTreeMap::new();
    for rec in records {
        let key = (rec.task.clone(), rec.model_id.clone(), rec.shots);
        match groups.get_mut(&key) {
            None => {
                groups.insert(
                    key,
                    Group {
                        compute: rec.compute,
                        n_ctx: rec.n_ctx,
                        n_pmt_sum: rec.n_pmt as f64,
                        metric_sum: rec.metric,
                        count: 1,
                    },
                );
            }
            Some(group) => {
                let group_key = || {
                    format!(
                        "task={}, model_id={}, shots={}",
                        rec.task, rec.model_id, rec.shots
                    )
                };
                if group.compute != rec.compute {
                    return Err(Error::Integrity {
                        key: group_key(),
                        msg: format!("inconsistent C: {} vs {}", group.compute, rec.compute),
                    });
                }
                if group.n_ctx != rec.n_ctx {
                    return Err(Error::Integrity {
                        key: group_key(),
                        msg: format!("inconsistent n_ctx: {} vs {}", group.n_ctx, rec.n_ctx),
                    });
                }
                group.n_pmt_sum += rec.n_pmt as f64;
                group.metric_sum += rec.metric;
                group.count += 1;
            }
        }
    }

    let mut points: Vec<AggregatedPoint> = groups
        .into_iter()
        .map(|((task, model_id, shots), g)| AggregatedPoint {
            task,
            model_id,
            compute: g.compute,
            n_pmt: g.n_pmt_sum / g.count as f64,
            n_ctx: g.n_ctx,
            shots,
            metric: g.metric_sum / g.count as f64,
            count: g.count,
        })
        .collect();

    points.sort_by(|a, b| {
        a.task
            .cmp(&b.task)
            .then(a.compute.total_cmp(&b.compute))
            .then(a.n_ctx.cmp(&b.n_ctx))
            .then(a.shots.cmp(&b.shots))
            .then(a.model_id.cmp(&b.model_id))
    });
    Ok(points)
}

/// Reconstructs the average prompt length for a shot count as the
/// test-count-weighted mean over datasets of
/// `shots * avg_train_tokens + avg_test_tokens`.
///
/// This approximates measured per-group prompt lengths from per-dataset
/// statistics; it carries no prompt-template overhead, so reconstructed
/// lengths are a lower bound on real packed prompts.
pub fn reconstruct_prompt_length(profile: &TaskProfile, shots: u32) -> Result<f64> {
    if profile.datasets.is_empty() {
        return Err(Error::EmptyInput("task profile has no datasets"));
    }
    profile.validate()?;
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for d in &profile.datasets {
        let w = d.test_count as f64;
        weighted += w * (shots as f64 * d.avg_train_tokens + d.avg_test_tokens);
        weight += w;
    }
    Ok(weighted / weight)
}

/// The bundled observation grid for a task: 12 checkpoints x 10 shot counts,
/// with compute and context limits from the checkpoint roster, prompt
/// lengths from [`reconstruct_prompt_length`], and counts set to the task's
/// total test-instance count.
pub fn builtin_dataset(task: BuiltinTask) -> Vec<AggregatedPoint> {
    let profile = fixtures::task_profile(task);
    let count = profile.total_test_count();
    let n_pmt: Vec<f64> = fixtures::SHOT_GRID
        .iter()
        .map(|&s| reconstruct_prompt_length(&profile, s).expect("bundled profile is valid"))
        .collect();

    let table = fixtures::observation_table(task);
    let mut lines = table.lines();
    lines.next(); // header: model_id,<shot counts>
    let mut points = Vec::with_capacity(120);
    for line in lines {
        let mut cells = line.split(',');
        let model_id = cells.next().expect("fixture row has a model id");
        let ckpt = fixtures::checkpoint(model_id).expect("fixture model is in the roster");
        for (i, cell) in cells.enumerate() {
            let metric: f64 = cell.parse().expect("fixture metric is a decimal");
            points.push(AggregatedPoint {
                task: task.as_str().to_string(),
                model_id: model_id.to_string(),
                compute: ckpt.compute,
                n_pmt: n_pmt[i],
                n_ctx: ckpt.n_ctx,
                shots: fixtures::SHOT_GRID[i],
                metric,
                count,
            });
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(task: &str, model: &str, shots: u32, n_pmt: u64, metric: f64) -> EvalRecord {
        EvalRecord {
            task: task.into(),
            model_id: model.into(),
            compute: 7.77e22,
            n_ctx: 4096,
            shots,
            n_pmt,
            metric,
        }
    }

    #[test]
    fn parse_csv_roundtrip_order() {
        let csv = "task,model_id,C,n_ctx,shots,n_pmt,metric\n\
                   arithmetic,m1,7.77e22,4096,0,100,0.25\n\
                   arithmetic,m1,7.77e22,4096,1,250,0.35\n\
                   custom,m2,1.5e23,8192,0,90,0.5\n";
        let records = parse_records(csv.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].n_pmt, 100);
        assert_eq!(records[2].task, "custom");
        assert_eq!(records[2].compute, 1.5e23);
    }

    #[test]
    fn parse_csv_rejects_out_of_range_metric() {
        let csv = "task,model_id,C,n_ctx,shots,n_pmt,metric\n\
                   arithmetic,m1,7.77e22,4096,0,100,0.25\n\
                   arithmetic,m1,7.77e22,4096,1,250,1.3\n";
        match parse_records(csv.as_bytes(), RecordFormat::Csv) {
            Err(Error::Validation { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("1.3"), "{msg}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn parse_csv_rejects_malformed_row() {
        let csv = "task,model_id,C,n_ctx,shots,n_pmt,metric\n\
                   arithmetic,m1,not-a-number,4096,0,100,0.25\n";
        match parse_records(csv.as_bytes(), RecordFormat::Csv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_empty_input_is_empty_list() {
        let records = parse_records(&b""[..], RecordFormat::Csv).unwrap();
        assert!(records.is_empty());
        let records = parse_records(&b"[]"[..], RecordFormat::Json).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn parse_json_mirrors_field_names() {
        let json = r#"[{"task":"arithmetic","model_id":"m1","C":7.77e22,"n_ctx":4096,"shots":0,"n_pmt":100,"metric":0.25}]"#;
        let records = parse_records(json.as_bytes(), RecordFormat::Json).unwrap();
        assert_eq!(records[0].compute, 7.77e22);
    }

    #[test]
    fn parse_json_rejects_out_of_range_metric() {
        let json = r#"[
            {"task":"a","model_id":"m1","C":7.77e22,"n_ctx":4096,"shots":0,"n_pmt":100,"metric":0.25},
            {"task":"a","model_id":"m1","C":7.77e22,"n_ctx":4096,"shots":1,"n_pmt":200,"metric":-0.1}
        ]"#;
        match parse_records(json.as_bytes(), RecordFormat::Json) {
            Err(Error::Validation { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("-0.1"), "{msg}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn aggregate_means_two_records() {
        let records = vec![
            record("arithmetic", "m1", 0, 100, 0.2),
            record("arithmetic", "m1", 0, 300, 0.4),
        ];
        let points = aggregate(&records).unwrap();
        assert_eq!(points.len(), 1);
        assert!((points[0].metric - 0.3).abs() < 1e-15);
        assert_eq!(points[0].n_pmt, 200.0);
        assert_eq!(points[0].count, 2);
    }

    #[test]
    fn aggregate_single_record_passes_through() {
        let records = vec![record("arithmetic", "m1", 3, 500, 0.42)];
        let points = aggregate(&records).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].n_pmt, 500.0);
        assert_eq!(points[0].metric, 0.42);
        assert_eq!(points[0].count, 1);
        assert_eq!(points[0].shots, 3);
    }

    #[test]
    fn aggregate_partitions_by_shots() {
        let records = vec![
            record("arithmetic", "m1", 0, 100, 0.2),
            record("arithmetic", "m1", 1, 200, 0.3),
            record("arithmetic", "m1", 0, 120, 0.25),
        ];
        let points = aggregate(&records).unwrap();
        assert_eq!(points.len(), 2);
        let total: u64 = points.iter().map(|p| p.count).sum();
        assert_eq!(total, records.len() as u64);
    }

    #[test]
    fn aggregate_rejects_inconsistent_context_limit() {
        let mut second = record("arithmetic", "m1", 0, 100, 0.2);
        second.n_ctx = 8192;
        let records = vec![record("arithmetic", "m1", 0, 100, 0.2), second];
        match aggregate(&records) {
            Err(Error::Integrity { key, .. }) => assert!(key.contains("m1"), "{key}"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn reconstruct_single_dataset() {
        let profile = TaskProfile {
            datasets: vec![DatasetStats {
                name: "GSM8K".into(),
                avg_train_tokens: 177.64,
                avg_test_tokens: 177.43,
                test_count: 250,
            }],
        };
        let n = reconstruct_prompt_length(&profile, 3).unwrap();
        assert!((n - 710.35).abs() < 1e-9, "got {n}");
    }

    #[test]
    fn reconstruct_zero_shot_is_weighted_test_mean() {
        let profile = fixtures::task_profile(BuiltinTask::Arithmetic);
        let n = reconstruct_prompt_length(&profile, 0).unwrap();
        // (250*177.43 + 250*155.74 + 250*93.09 + 2800*61.05) / 3550
        assert!((n - 78.1704225352).abs() < 1e-9, "got {n}");
    }

    #[test]
    fn reconstruct_full_arithmetic_profile_one_shot() {
        // Frozen from an independent spreadsheet over the bundled statistics.
        let profile = fixtures::task_profile(BuiltinTask::Arithmetic);
        let n = reconstruct_prompt_length(&profile, 1).unwrap();
        assert!((n - 153.9139436620).abs() < 1e-9, "got {n}");
    }

    #[test]
    fn reconstruct_rejects_empty_profile() {
        let profile = TaskProfile { datasets: vec![] };
        assert!(matches!(
            reconstruct_prompt_length(&profile, 1),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn builtin_arithmetic_grid() {
        let points = builtin_dataset(BuiltinTask::Arithmetic);
        assert_eq!(points.len(), 120);
        let p = points
            .iter()
            .find(|p| p.model_id == "Llama-2-7b-hf" && p.shots == 15)
            .unwrap();
        assert_eq!(p.metric, 0.136);
        assert_eq!(p.n_ctx, 4096);
        assert_eq!(p.compute, 7.7719e22);
        assert_eq!(p.count, 3550);
    }

    #[test]
    fn builtin_commonsense_spot_value() {
        let points = builtin_dataset(BuiltinTask::Commonsense);
        let p = points
            .iter()
            .find(|p| p.model_id == "Yarn-Llama-2-13b-128k" && p.shots == 511)
            .unwrap();
        assert_eq!(p.metric, 0.612);
    }

    #[test]
    fn builtin_translation_spot_value() {
        let points = builtin_dataset(BuiltinTask::Translation);
        let p = points
            .iter()
            .find(|p| p.model_id == "Llama-2-7b-hf" && p.shots == 255)
            .unwrap();
        assert_eq!(p.metric, 0.000);
    }

    #[test]
    fn points_csv_roundtrip() {
        let points = builtin_dataset(BuiltinTask::Translation);
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &points).unwrap();
        let parsed = parse_points(&buf[..], RecordFormat::Csv).unwrap();
        assert_eq!(parsed, points);
    }
}
