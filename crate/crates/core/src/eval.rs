//! Detection-error metrics and hyperparameter suggestions.
//!
//! The combined score is
//! `eps = 1 - 1/(2N) * sum(dtheta_i / dtheta_max + dlx2_i / dlx2_max)`,
//! with the maxima supplied by the caller so different methods can share one
//! normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TrialTrace;
use crate::tsm::CropRowDetection;

pub const DEFAULT_SETTLING_BAND_DEG: f64 = 2.0;
/// Largest baseline angle error in the published per-class table (class 42).
pub const APPENDIX_DTHETA_MAX: f64 = 8.23;
/// Largest baseline offset error in the published per-class table (class 6).
pub const APPENDIX_DLX2_MAX: f64 = 126.74;
/// Published per-class error table, one row per data class plus the average.
pub const APPENDIX_A_CSV: &str = include_str!("../fixtures/appendix_a.csv");
pub const APPENDIX_ROW_TOLERANCE_PP: f64 = 0.1;
pub const APPENDIX_AVERAGE_TOLERANCE_PP: f64 = 0.3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric undefined for an empty record set")]
    NoRecords,
    #[error(
        "normalizing maxima must be positive (dtheta_max = {dtheta_max}, dlx2_max = {dlx2_max})"
    )]
    BadMaxima { dtheta_max: f64, dlx2_max: f64 },
    #[error("malformed fixture: {0}")]
    Fixture(String),
    #[error("no column occurs at least {min_freq} times")]
    NoFrequentBin { min_freq: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("malformed records: {0}")]
    Records(String),
}

/// The line parameters both detections and ground truth are compared on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub l_x1: f64,
    pub l_x2: f64,
    pub theta_deg: f64,
}

impl From<&CropRowDetection> for LineParams {
    fn from(d: &CropRowDetection) -> Self {
        Self {
            l_x1: d.l_x1 as f64,
            l_x2: d.l_x2 as f64,
            theta_deg: d.delta_theta,
        }
    }
}

impl From<&crate::sim::CenterlineProjection> for LineParams {
    fn from(p: &crate::sim::CenterlineProjection) -> Self {
        Self {
            l_x1: p.l_x1,
            l_x2: p.l_x2,
            theta_deg: p.theta_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub dtheta_abs: f64,
    pub dlx2_abs: f64,
    pub category: Option<String>,
}

pub fn pair_error(image_id: impl Into<String>, det: &LineParams, truth: &LineParams) -> EvalRecord {
    EvalRecord {
        image_id: image_id.into(),
        dtheta_abs: (det.theta_deg - truth.theta_deg).abs(),
        dlx2_abs: (det.l_x2 - truth.l_x2).abs(),
        category: None,
    }
}

/// One JSON line of detections or ground truth. Integer detection columns
/// read as floats; unknown keys (such as `fallback`) are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub image: String,
    pub lx1: f64,
    pub lx2: f64,
    pub theta_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_ratio: Option<f64>,
}

impl LineRecord {
    pub fn params(&self) -> LineParams {
        LineParams {
            l_x1: self.lx1,
            l_x2: self.lx2,
            theta_deg: self.theta_deg,
        }
    }
}

/// Parses JSON lines, skipping blank lines; errors carry the 1-based line.
pub fn parse_line_records(text: &str) -> Result<Vec<LineRecord>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Records(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Pairs detections with truth by image name. The category comes from the
/// truth record, falling back to the detection's. Returns the joined errors
/// and the names present on only one side, sorted.
pub fn join_records(det: &[LineRecord], truth: &[LineRecord]) -> (Vec<EvalRecord>, Vec<String>) {
    let by_name: BTreeMap<&str, &LineRecord> =
        truth.iter().map(|t| (t.image.as_str(), t)).collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut joined = Vec::new();
    let mut unmatched = Vec::new();
    for d in det {
        match by_name.get(d.image.as_str()) {
            Some(t) => {
                seen.insert(d.image.as_str());
                let mut r = pair_error(&d.image, &d.params(), &t.params());
                r.category = t.category.clone().or_else(|| d.category.clone());
                joined.push(r);
            }
            None => unmatched.push(d.image.clone()),
        }
    }
    unmatched.extend(
        truth
            .iter()
            .filter(|t| !seen.contains(t.image.as_str()))
            .map(|t| t.image.clone()),
    );
    unmatched.sort();
    unmatched.dedup();
    (joined, unmatched)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub n: usize,
    pub dtheta_max: f64,
    pub dlx2_max: f64,
    pub mean_dtheta: f64,
    pub mean_dlx2: f64,
}

pub fn epsilon(
    records: &[EvalRecord],
    dtheta_max: f64,
    dlx2_max: f64,
) -> Result<EpsilonReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    if !(dtheta_max > 0.0 && dlx2_max > 0.0) {
        return Err(EvalError::BadMaxima {
            dtheta_max,
            dlx2_max,
        });
    }
    let n = records.len();
    let penalty: f64 = records
        .iter()
        .map(|r| r.dtheta_abs / dtheta_max + r.dlx2_abs / dlx2_max)
        .sum();
    Ok(EpsilonReport {
        epsilon: 1.0 - penalty / (2.0 * n as f64),
        n,
        dtheta_max,
        dlx2_max,
        mean_dtheta: records.iter().map(|r| r.dtheta_abs).sum::<f64>() / n as f64,
        mean_dlx2: records.iter().map(|r| r.dlx2_abs).sum::<f64>() / n as f64,
    })
}

/// Score per category (records without one are skipped) plus the overall
/// score, keyed `None`.
pub fn epsilon_by_category(
    records: &[EvalRecord],
    dtheta_max: f64,
    dlx2_max: f64,
) -> Result<Vec<(Option<String>, EpsilonReport)>, EvalError> {
    let mut groups: BTreeMap<&str, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        if let Some(c) = &r.category {
            groups.entry(c).or_default().push(r.clone());
        }
    }
    let mut out = Vec::with_capacity(groups.len() + 1);
    for (c, rs) in groups {
        out.push((Some(c.to_string()), epsilon(&rs, dtheta_max, dlx2_max)?));
    }
    out.push((None, epsilon(records, dtheta_max, dlx2_max)?));
    Ok(out)
}

/// One row of the per-class fixture, as printed (percentages for eps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixRow {
    pub class: String,
    pub dtheta_b: f64,
    pub dtheta: f64,
    pub dlx2_b: f64,
    pub dlx2: f64,
    pub eps_b_reported: f64,
    pub eps_reported: f64,
}

impl AppendixRow {
    pub fn is_average(&self) -> bool {
        self.class.eq_ignore_ascii_case("average")
    }
}

pub fn parse_appendix(csv_text: &str) -> Result<Vec<AppendixRow>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let expected = [
        "class",
        "dtheta_b",
        "dtheta",
        "dlx2_b",
        "dlx2",
        "eps_b_reported",
        "eps_reported",
    ];
    let headers = reader
        .headers()
        .map_err(|e| EvalError::Fixture(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(EvalError::Fixture(format!(
            "header must be {}",
            expected.join(",")
        )));
    }
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<AppendixRow>, _>>()
        .map_err(|e| EvalError::Fixture(e.to_string()))?;
    if rows.iter().filter(|r| !r.is_average()).count() == 0 {
        return Err(EvalError::Fixture("no class rows".into()));
    }
    Ok(rows)
}

/// Recomputed scores for one fixture row, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixResult {
    pub class: String,
    pub eps_b: f64,
    pub eps: f64,
    pub eps_b_reported: f64,
    pub eps_reported: f64,
}

impl AppendixResult {
    pub fn is_average(&self) -> bool {
        self.class.eq_ignore_ascii_case("average")
    }

    pub fn tolerance_pp(&self) -> f64 {
        if self.is_average() {
            APPENDIX_AVERAGE_TOLERANCE_PP
        } else {
            APPENDIX_ROW_TOLERANCE_PP
        }
    }

    pub fn eps_b_ok(&self) -> bool {
        (self.eps_b - self.eps_b_reported).abs() <= self.tolerance_pp() + 1e-9
    }

    pub fn eps_ok(&self) -> bool {
        (self.eps - self.eps_reported).abs() <= self.tolerance_pp() + 1e-9
    }
}

/// Scores each class from its mean errors, treated as a single record. The
/// average row is the mean of the per-class scores.
pub fn reproduce_appendix_a(
    rows: &[AppendixRow],
    dtheta_max: f64,
    dlx2_max: f64,
) -> Result<Vec<AppendixResult>, EvalError> {
    let score = |dtheta: f64, dlx2: f64| -> Result<f64, EvalError> {
        let r = EvalRecord {
            image_id: String::new(),
            dtheta_abs: dtheta,
            dlx2_abs: dlx2,
            category: None,
        };
        Ok(100.0 * epsilon(&[r], dtheta_max, dlx2_max)?.epsilon)
    };
    let mut out = Vec::with_capacity(rows.len());
    for row in rows.iter().filter(|r| !r.is_average()) {
        out.push(AppendixResult {
            class: row.class.clone(),
            eps_b: score(row.dtheta_b, row.dlx2_b)?,
            eps: score(row.dtheta, row.dlx2)?,
            eps_b_reported: row.eps_b_reported,
            eps_reported: row.eps_reported,
        });
    }
    let n = out.len() as f64;
    let (sum_b, sum) = out
        .iter()
        .fold((0.0, 0.0), |(a, b), r| (a + r.eps_b, b + r.eps));
    if let Some(avg) = rows.iter().find(|r| r.is_average()) {
        out.push(AppendixResult {
            class: avg.class.clone(),
            eps_b: sum_b / n,
            eps: sum / n,
            eps_b_reported: avg.eps_b_reported,
            eps_reported: avg.eps_reported,
        });
    }
    Ok(out)
}

pub fn appendix_results_csv(results: &[AppendixResult]) -> String {
    let mut out = String::from("class,eps_b,eps,eps_b_reported,eps_reported,eps_b_ok,eps_ok\n");
    for r in results {
        out.push_str(&format!(
            "{},{:.2},{:.2},{:.2},{:.2},{},{}\n",
            r.class,
            r.eps_b,
            r.eps,
            r.eps_b_reported,
            r.eps_reported,
            r.eps_b_ok(),
            r.eps_ok()
        ));
    }
    out
}

/// First frame whose world heading error is within `band_deg`, or
/// `max_frames + 1` when the trace never gets there.
pub fn settling_time(trace: &TrialTrace, band_deg: f64) -> usize {
    trace
        .records
        .iter()
        .position(|r| r.theta_world_deg.abs() <= band_deg)
        .unwrap_or(trace.max_frames + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcSuggestion {
    pub begin: i64,
    pub cease: i64,
    /// (column, count), ascending by column.
    pub histogram: Vec<(i64, usize)>,
    /// Only one column survived the frequency filter.
    pub degenerate: bool,
}

/// B and C as the extreme columns that occur at least `min_freq` times.
pub fn suggest_bc(lx2_values: &[i64], min_freq: usize) -> Result<BcSuggestion, EvalError> {
    if lx2_values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in lx2_values {
        *counts.entry(v).or_default() += 1;
    }
    let mut kept = counts
        .iter()
        .filter(|(_, &c)| c >= min_freq)
        .map(|(&k, _)| k);
    let begin = kept.next().ok_or(EvalError::NoFrequentBin { min_freq })?;
    let cease = kept.next_back().unwrap_or(begin);
    Ok(BcSuggestion {
        begin,
        cease,
        histogram: counts.into_iter().collect(),
        degenerate: begin == cease,
    })
}

/// Smallest anchor peak ratio observed; rounding is left to the caller.
pub fn suggest_threshold(peak_ratios: &[f64]) -> Result<f64, EvalError> {
    peak_ratios
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or(EvalError::EmptyInput)
}

/// Fixed-width histogram of ratios over [0, 1]; returns (bin lower edge, count).
pub fn ratio_histogram(ratios: &[f64], bins: usize) -> Vec<(f64, usize)> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &r in ratios {
        let i = ((r.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 / bins as f64, c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSuggestion {
    pub begin: i64,
    pub cease: i64,
    pub anchor_threshold_ratio: Option<f64>,
    pub lx2_histogram: Vec<(i64, usize)>,
    pub ratio_histogram: Vec<(f64, usize)>,
    pub degenerate: bool,
}

pub fn suggest_hyperparams(
    lx2_values: &[i64],
    peak_ratios: &[f64],
    min_freq: usize,
) -> Result<HyperparamSuggestion, EvalError> {
    let bc = suggest_bc(lx2_values, min_freq)?;
    let threshold = suggest_threshold(peak_ratios).ok();
    Ok(HyperparamSuggestion {
        begin: bc.begin,
        cease: bc.cease,
        anchor_threshold_ratio: threshold,
        lx2_histogram: bc.histogram,
        ratio_histogram: ratio_histogram(peak_ratios, 20),
        degenerate: bc.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{FrameRecord, Termination};

    fn rec(dt: f64, dl: f64) -> EvalRecord {
        EvalRecord {
            image_id: String::new(),
            dtheta_abs: dt,
            dlx2_abs: dl,
            category: None,
        }
    }

    fn line(theta: f64, lx2: f64) -> LineParams {
        LineParams {
            l_x1: 256.0,
            l_x2: lx2,
            theta_deg: theta,
        }
    }

    #[test]
    fn pair_error_examples() {
        let a = line(1.5, 300.0);
        let r = pair_error("x", &a, &a);
        assert_eq!((r.dtheta_abs, r.dlx2_abs), (0.0, 0.0));
        let r = pair_error("x", &a, &line(-0.5, 290.0));
        assert_eq!((r.dtheta_abs, r.dlx2_abs), (2.0, 10.0));
        let back = pair_error("x", &line(-0.5, 290.0), &a);
        assert_eq!((back.dtheta_abs, back.dlx2_abs), (2.0, 10.0));
    }

    #[test]
    fn epsilon_extremes() {
        assert_eq!(
            epsilon(&vec![rec(0.0, 0.0); 3], 8.23, 126.74)
                .unwrap()
                .epsilon,
            1.0
        );
        assert_eq!(
            epsilon(&[rec(8.23, 126.74)], 8.23, 126.74).unwrap().epsilon,
            0.0
        );
    }

    #[test]
    fn epsilon_class_one() {
        let e = epsilon(&[rec(1.67, 9.91)], APPENDIX_DTHETA_MAX, APPENDIX_DLX2_MAX).unwrap();
        let expected = 1.0 - 0.5 * (1.67 / 8.23 + 9.91 / 126.74);
        assert!((e.epsilon - expected).abs() < 1e-15);
        assert!((100.0 * e.epsilon - 85.93).abs() < 0.1);
    }

    #[test]
    fn epsilon_rejects_undefined_inputs() {
        assert!(matches!(epsilon(&[], 1.0, 1.0), Err(EvalError::NoRecords)));
        assert!(matches!(
            epsilon(&[rec(1.0, 1.0)], 0.0, 1.0),
            Err(EvalError::BadMaxima { .. })
        ));
    }

    #[test]
    fn category_breakdown() {
        let mut rs = vec![rec(1.0, 10.0), rec(2.0, 20.0), rec(0.0, 0.0)];
        rs[0].category = Some("b".into());
        rs[1].category = Some("a".into());
        let out = epsilon_by_category(&rs, 4.0, 40.0).unwrap();
        let keys: Vec<_> = out.iter().map(|(k, _)| k.clone()).collect();
        assert_eq!(keys, vec![Some("a".into()), Some("b".into()), None]);
        assert_eq!(out[0].1.epsilon, 0.5);
        assert_eq!(out[2].1.n, 3);
    }

    #[test]
    fn fixture_spot_checks() {
        let rows = parse_appendix(APPENDIX_A_CSV).unwrap();
        assert_eq!(rows.iter().filter(|r| !r.is_average()).count(), 43);
        let res = reproduce_appendix_a(&rows, APPENDIX_DTHETA_MAX, APPENDIX_DLX2_MAX).unwrap();
        let class = |c: &str| res.iter().find(|r| r.class == c).unwrap();
        assert!((class("1").eps_b - 47.0).abs() < 0.1);
        assert!((class("6").eps_b - 27.04).abs() < 0.1);
        assert!((class("21").eps - 95.23).abs() < 0.1);
    }

    #[test]
    fn malformed_fixtures_are_rejected() {
        assert!(parse_appendix("a,b\n1,2\n").is_err());
        let bad = "class,dtheta_b,dtheta,dlx2_b,dlx2,eps_b_reported,eps_reported\n1,x,1,1,1,1,1\n";
        assert!(parse_appendix(bad).is_err());
        let short = "class,dtheta_b,dtheta,dlx2_b,dlx2,eps_b_reported,eps_reported\n1,1,1\n";
        assert!(parse_appendix(short).is_err());
        let empty = "class,dtheta_b,dtheta,dlx2_b,dlx2,eps_b_reported,eps_reported\n";
        assert!(parse_appendix(empty).is_err());
    }

    fn trace(thetas: &[f64]) -> TrialTrace {
        TrialTrace {
            records: thetas
                .iter()
                .enumerate()
                .map(|(frame, &t)| FrameRecord {
                    frame,
                    theta_world_deg: t,
                    lateral_m: 0.0,
                    theta_img_deg: 0.0,
                    dlx2_px: 0.0,
                    omega: 0.0,
                })
                .collect(),
            terminated: Termination::EndOfRow,
            max_frames: 300,
            row_index: 0,
        }
    }

    #[test]
    fn records_parse_and_join() {
        let det = parse_line_records(
            "{\"image\":\"a.pgm\",\"lx1\":256,\"lx2\":260,\"theta_deg\":0.5,\"fallback\":false}\n\n\
             {\"image\":\"b.pgm\",\"lx1\":250,\"lx2\":250,\"theta_deg\":0.0,\"fallback\":true}\n",
        )
        .unwrap();
        let truth = parse_line_records(
            "{\"image\":\"a.pgm\",\"lx1\":255.5,\"lx2\":255.5,\"theta_deg\":0.0,\"category\":\"early\"}\n\
             {\"image\":\"c.pgm\",\"lx1\":1,\"lx2\":1,\"theta_deg\":0.0}\n",
        )
        .unwrap();
        let (joined, unmatched) = join_records(&det, &truth);
        assert_eq!(joined.len(), 1);
        assert_eq!(joined[0].dlx2_abs, 4.5);
        assert_eq!(joined[0].dtheta_abs, 0.5);
        assert_eq!(joined[0].category.as_deref(), Some("early"));
        assert_eq!(unmatched, vec!["b.pgm".to_string(), "c.pgm".to_string()]);
        assert!(matches!(
            parse_line_records("{\"image\":1}\n"),
            Err(EvalError::Records(m)) if m.starts_with("line 1")
        ));
    }

    #[test]
    fn settling_examples() {
        assert_eq!(settling_time(&trace(&[1.0, 5.0]), 2.0), 0);
        // 20 deg falling linearly, reaching exactly 2 deg at frame 23
        let decay: Vec<f64> = (0..60).map(|k| 20.0 - 18.0 * k as f64 / 23.0).collect();
        assert!(decay[22] > 2.0 && (decay[23] - 2.0).abs() < 1e-12);
        assert_eq!(settling_time(&trace(&decay), 2.0), 23);
        assert_eq!(settling_time(&trace(&[5.0; 40]), 2.0), 301);
    }

    #[test]
    fn bc_examples() {
        let s = suggest_bc(&[256; 100], 5).unwrap();
        assert_eq!((s.begin, s.cease, s.degenerate), (256, 256, true));

        let mut v: Vec<i64> = (190..=350)
            .flat_map(|c| std::iter::repeat_n(c, 6))
            .collect();
        v.extend([120, 120, 120]);
        let s = suggest_bc(&v, 5).unwrap();
        assert_eq!((s.begin, s.cease), (190, 350));
        assert!(!s.degenerate);

        assert!(matches!(
            suggest_bc(&[1, 2, 3], 5),
            Err(EvalError::NoFrequentBin { min_freq: 5 })
        ));
        assert!(suggest_bc(&[], 5).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(suggest_threshold(&[0.7, 0.4, 0.9]).unwrap(), 0.4);
        assert_eq!(suggest_threshold(&[0.63]).unwrap(), 0.63);
        assert!(suggest_threshold(&[]).is_err());
    }

    #[test]
    fn ratio_histogram_bins() {
        let h = ratio_histogram(&[0.0, 0.05, 0.4, 1.0], 10);
        assert_eq!(h.len(), 10);
        assert_eq!(h[0].1, 2);
        assert_eq!(h[4].1, 1);
        assert_eq!(h[9].1, 1);
    }
}
