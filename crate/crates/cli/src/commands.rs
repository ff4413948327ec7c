//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use rowtsm_core::config::{detect_config, ConfigFile, SimulationConfig};
use rowtsm_core::eval::{
    appendix_results_csv, epsilon_by_category, join_records, parse_appendix, parse_line_records,
    ratio_histogram, reproduce_appendix_a, suggest_bc, suggest_threshold, AppendixResult,
    EvalError, LineRecord, APPENDIX_A_CSV, APPENDIX_DLX2_MAX, APPENDIX_DTHETA_MAX,
};
use rowtsm_core::mask::{load_mask, save_gray, save_mask, GrayImage};
use rowtsm_core::raster::rasterize_segment;
use rowtsm_core::sim::{
    generate_field, protocol_trials, render_corpus, run_batch, CorpusSpec, TrialTrace,
};
use rowtsm_core::tsm::{anchor_scan, detect_traced, DetectionRecord, TsmConfig};
use rowtsm_core::BinaryMask;

use crate::plot::{average_curve, LineChart, Series, AVERAGE_COLOR, TRIAL_COLOR};
use crate::{Fixture, SEED_ENV};

/// Gray level of the detected line in overlays.
const OVERLAY_LINE: u8 = 128;
/// A trial whose lateral error exceeds this is reported as divergent.
const DIVERGENCE_LATERAL_M: f64 = 0.3;

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ConfigFile::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Files as given plus `.pgm` files inside directories, sorted and deduplicated.
fn expand_masks(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = BTreeSet::new();
    for p in inputs {
        if p.is_dir() {
            for entry in fs::read_dir(p).with_context(|| format!("listing {}", p.display()))? {
                let path = entry?.path();
                let is_pgm = path
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
                if is_pgm && path.is_file() {
                    out.insert(path);
                }
            }
        } else {
            out.insert(p.clone());
        }
    }
    Ok(out.into_iter().collect())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name(path))
}

fn load_mask_file(path: &Path) -> Result<BinaryMask> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_mask(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// The mask at 0/255 with the segment `(lx1, 0) -> (lx2, H-1)` drawn at 128.
pub fn overlay(mask: &BinaryMask, lx1: usize, lx2: usize) -> GrayImage {
    let (w, h) = (mask.width(), mask.height());
    let mut data: Vec<u8> = mask
        .pixels()
        .iter()
        .map(|&p| if p { 255 } else { 0 })
        .collect();
    for (x, y) in rasterize_segment((lx1 as i32, 0), (lx2 as i32, h as i32 - 1)) {
        data[y as usize * w + x as usize] = OVERLAY_LINE;
    }
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

pub fn detect(
    config: Option<&Path>,
    out: &Path,
    curves: bool,
    overlay_images: bool,
    masks: &[PathBuf],
) -> Result<ExitCode> {
    let base = match config {
        Some(p) => Some(detect_config(&read_config(p)?).context("invalid [tsm] config")?),
        None => None,
    };
    let files = expand_masks(masks)?;
    if files.is_empty() {
        bail!("no masks found");
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut lines = String::new();
    let mut failed = 0usize;
    for path in &files {
        let result = load_mask_file(path).and_then(|mask| {
            let cfg = base.unwrap_or_else(|| TsmConfig::for_width(mask.width()));
            let trace = detect_traced(&mask, &cfg)
                .with_context(|| format!("detecting in {}", path.display()))?;
            Ok((mask, trace))
        });
        let (mask, trace) = match result {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
                continue;
            }
        };
        let name = file_name(path);
        let d = trace.detection;
        lines.push_str(&DetectionRecord::new(&name, &d).to_json_line());
        lines.push('\n');
        if curves {
            let stem = file_stem(path);
            write(
                &out.join("curves").join(format!("{stem}.anchor.csv")),
                trace.anchor_curve.to_csv(),
            )?;
            write(
                &out.join("curves").join(format!("{stem}.line.csv")),
                trace.line_curve.to_csv(),
            )?;
        }
        if overlay_images {
            write(
                &out.join("overlay").join(&name),
                save_gray(&overlay(&mask, d.l_x1, d.l_x2)),
            )?;
        }
    }
    write(&out.join("detections.jsonl"), lines)?;
    if failed > 0 {
        eprintln!("{failed} of {} masks failed", files.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn read_records(path: &Path) -> Result<Vec<LineRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_line_records(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_appendix(results: &[AppendixResult]) {
    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>8}  status",
        "class", "eps_b", "eps", "rep_b", "rep"
    );
    for r in results {
        let ok = r.eps_b_ok() && r.eps_ok();
        println!(
            "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}  {}",
            r.class,
            r.eps_b,
            r.eps,
            r.eps_b_reported,
            r.eps_reported,
            if ok { "ok" } else { "MISMATCH" }
        );
    }
}

fn run_appendix(out: Option<&Path>) -> Result<Vec<AppendixResult>> {
    let rows = parse_appendix(APPENDIX_A_CSV)?;
    let results = reproduce_appendix_a(&rows, APPENDIX_DTHETA_MAX, APPENDIX_DLX2_MAX)?;
    print_appendix(&results);
    if let Some(dir) = out {
        write(&dir.join("appendix_a.csv"), appendix_results_csv(&results))?;
    }
    Ok(results)
}

pub fn eval(
    det: Option<&Path>,
    truth: Option<&Path>,
    dtheta_max: f64,
    dlx2_max: f64,
    fixtures: Option<Fixture>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    if let Some(Fixture::AppendixA) = fixtures {
        run_appendix(out)?;
        return Ok(ExitCode::SUCCESS);
    }
    let (Some(det), Some(truth)) = (det, truth) else {
        bail!("--det and --truth are required");
    };
    let det = read_records(det)?;
    let truth = read_records(truth)?;
    let (joined, unmatched) = join_records(&det, &truth);
    for id in &unmatched {
        eprintln!("unmatched: {id}");
    }
    if joined.is_empty() {
        bail!("no detections matched the ground truth");
    }
    let reports = epsilon_by_category(&joined, dtheta_max, dlx2_max)?;
    let mut csv = String::from("category,n,mean_dtheta,mean_dlx2,epsilon\n");
    println!(
        "{:<12} {:>6} {:>12} {:>12} {:>10}",
        "category", "n", "mean_dtheta", "mean_dlx2", "epsilon"
    );
    for (cat, r) in &reports {
        let cat = cat.as_deref().unwrap_or("all");
        csv.push_str(&format!(
            "{cat},{},{:.6},{:.6},{:.6}\n",
            r.n, r.mean_dtheta, r.mean_dlx2, r.epsilon
        ));
        println!(
            "{cat:<12} {:>6} {:>12.4} {:>12.4} {:>9.2}%",
            r.n,
            r.mean_dtheta,
            r.mean_dlx2,
            100.0 * r.epsilon
        );
    }
    if let Some(dir) = out {
        write(&dir.join("report.csv"), csv)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn fixtures(out: Option<&Path>) -> Result<ExitCode> {
    let results = run_appendix(out)?;
    let bad = results
        .iter()
        .filter(|r| !(r.eps_b_ok() && r.eps_ok()))
        .count();
    if bad > 0 {
        eprintln!("{bad} of {} rows differ from the table", results.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

fn chart(title: &str, y_label: &str, traces: &[TrialTrace], f: fn(f64, f64) -> f64) -> String {
    let curves: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            t.records
                .iter()
                .map(|r| f(r.theta_world_deg, r.lateral_m))
                .collect()
        })
        .collect();
    let mut series: Vec<Series> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| Series {
            label: format!("trial {i:02}"),
            values: c.clone(),
            color: TRIAL_COLOR,
            stroke_width: 1.0,
        })
        .collect();
    series.push(Series {
        label: "average".into(),
        values: average_curve(&curves),
        color: AVERAGE_COLOR,
        stroke_width: 2.5,
    });
    LineChart {
        title: title.into(),
        x_label: "frame".into(),
        y_label: y_label.into(),
        series,
    }
    .to_svg()
}

pub fn simulate(
    config: Option<&Path>,
    trials: Option<usize>,
    heading: Option<f64>,
    seed: Option<u64>,
    out: &Path,
) -> Result<ExitCode> {
    let mut sim = match config {
        Some(p) => SimulationConfig::from_config(&read_config(p)?)
            .with_context(|| format!("invalid config {}", p.display()))?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = seed.or(env_seed()?) {
        sim.override_seed(s);
    }
    if let Some(n) = trials {
        sim.trials = n;
    }
    if heading.is_some() {
        sim.fixed_heading = heading;
    }
    if sim.trials == 0 {
        bail!("at least one trial is required");
    }
    let field = generate_field(&sim.field)?;
    sim.resolve_jacobians(&field)?;
    let configs = match sim.fixed_heading {
        Some(h) => (0..sim.trials)
            .map(|_| rowtsm_core::sim::TrialConfig {
                initial_heading_deg: h,
                ..sim.trial
            })
            .collect(),
        None => protocol_trials(&sim.trial, sim.trials, sim.heading_seed),
    };
    let (summary, traces) = run_batch(&configs, &field, sim.parallel)?;

    for (i, t) in traces.iter().enumerate() {
        write(
            &out.join("trials").join(format!("trial_{i:02}.csv")),
            t.to_csv(),
        )?;
    }
    write(
        &out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    write(
        &out.join("theta.svg"),
        chart("Heading error", "heading (deg)", &traces, |th, _| th),
    )?;
    write(
        &out.join("lateral.svg"),
        chart("Lateral offset", "offset (cm)", &traces, |_, lat| {
            100.0 * lat
        }),
    )?;

    let mut text = String::new();
    text.push_str("trial  heading0  frames  settle  mean|theta|  mean|lat|cm  max|lat|cm  end\n");
    let mut divergent = 0;
    for (i, t) in summary.trials.iter().enumerate() {
        let diverged = !t.settled || t.max_abs_lateral_m > DIVERGENCE_LATERAL_M;
        divergent += diverged as usize;
        text.push_str(&format!(
            "{i:>5}  {:>8.2}  {:>6}  {:>6}  {:>11.3}  {:>11.3}  {:>10.3}  {:?}{}\n",
            t.initial_heading_deg,
            t.frames,
            t.settling_frames,
            t.mean_abs_theta_deg,
            100.0 * t.mean_abs_lateral_m,
            100.0 * t.max_abs_lateral_m,
            t.terminated,
            if diverged { "  DIVERGENT" } else { "" }
        ));
    }
    text.push_str(&format!(
        "mean settling {:.2} frames, mean |theta| {:.3} deg, mean |lateral| {:.3} cm, all settled: {}\n",
        summary.mean_settling_frames,
        summary.mean_abs_theta_deg,
        100.0 * summary.mean_abs_lateral_m,
        summary.all_settled
    ));
    if divergent > 0 {
        text.push_str(&format!("{divergent} divergent trial(s)\n"));
    }
    write(&out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

pub fn tune(
    truth: &Path,
    out: &Path,
    masks: &[PathBuf],
    config: Option<&Path>,
    min_freq: usize,
) -> Result<ExitCode> {
    let records = read_records(truth)?;
    if records.is_empty() {
        bail!("{} holds no records", truth.display());
    }
    let lx2: Vec<i64> = records.iter().map(|r| r.lx2.round() as i64).collect();
    let base = match config {
        Some(p) => Some(detect_config(&read_config(p)?).context("invalid [tsm] config")?),
        None => None,
    };
    let mut ratios: Vec<f64> = records.iter().filter_map(|r| r.peak_ratio).collect();
    for path in expand_masks(masks)? {
        let mask = load_mask_file(&path)?;
        let cfg = base.unwrap_or_else(|| TsmConfig::for_width(mask.width()));
        ratios.push(anchor_scan(&mask, &cfg)?.peak_ratio);
    }

    let ratio_hist = ratio_histogram(&ratios, 20);
    let mut ratio_csv = String::from("bin_lower,count\n");
    for (lo, c) in &ratio_hist {
        ratio_csv.push_str(&format!("{lo:.2},{c}\n"));
    }
    write(&out.join("ratio_histogram.csv"), ratio_csv)?;

    let mut counts = std::collections::BTreeMap::<i64, usize>::new();
    for &v in &lx2 {
        *counts.entry(v).or_default() += 1;
    }
    let mut lx2_csv = String::from("lx2,count\n");
    for (v, c) in &counts {
        lx2_csv.push_str(&format!("{v},{c}\n"));
    }
    write(&out.join("lx2_histogram.csv"), lx2_csv)?;

    let threshold = suggest_threshold(&ratios).ok();
    let bc = match suggest_bc(&lx2, min_freq) {
        Ok(bc) => bc,
        Err(e @ EvalError::NoFrequentBin { .. }) => {
            let json = serde_json::json!({
                "begin": null,
                "cease": null,
                "anchor_threshold_ratio": threshold,
                "min_freq": min_freq,
                "error": e.to_string(),
            });
            write(
                &out.join("suggestion.json"),
                serde_json::to_string_pretty(&json)? + "\n",
            )?;
            eprintln!("error: {e}; lower --min-freq or supply more ground truth");
            return Ok(ExitCode::FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    if bc.degenerate {
        eprintln!(
            "warning: only column {} occurs at least {min_freq} times; B equals C",
            bc.begin
        );
    }
    let json = serde_json::json!({
        "begin": bc.begin,
        "cease": bc.cease,
        "anchor_threshold_ratio": threshold,
        "min_freq": min_freq,
        "degenerate": bc.degenerate,
    });
    write(
        &out.join("suggestion.json"),
        serde_json::to_string_pretty(&json)? + "\n",
    )?;
    println!(
        "begin {} cease {} threshold {}",
        bc.begin,
        bc.cease,
        threshold.map_or("n/a".into(), |t| format!("{t:.4}"))
    );
    Ok(ExitCode::SUCCESS)
}

pub fn corpus(
    out: &Path,
    count: usize,
    seed: Option<u64>,
    config: Option<&Path>,
) -> Result<ExitCode> {
    let sim = match config {
        Some(p) => SimulationConfig::from_config(&read_config(p)?)
            .with_context(|| format!("invalid config {}", p.display()))?,
        None => SimulationConfig::default(),
    };
    let spec = CorpusSpec {
        count,
        seed: seed.or(env_seed()?).unwrap_or(0),
        field: sim.field,
        camera: sim.trial.camera,
        ..CorpusSpec::default()
    };
    let items = render_corpus(&spec)?;
    let mut truth = String::new();
    for it in &items {
        write(&out.join(&it.id), save_mask(&it.mask))?;
        let rec = LineRecord {
            image: it.id.clone(),
            lx1: it.truth.l_x1,
            lx2: it.truth.l_x2,
            theta_deg: it.truth.theta_deg,
            category: None,
            peak_ratio: None,
        };
        truth.push_str(&serde_json::to_string(&rec)?);
        truth.push('\n');
    }
    write(&out.join("truth.jsonl"), truth)?;
    println!("wrote {} masks to {}", items.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
