//! One function per subcommand. Each reads its inputs, runs the engine and
//! writes files plus a fixed-width console summary.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mtaf_core::evaluation::{affinity_histograms, histogram_range, id_measures_iou, score_pairs, BoxLabel};
use mtaf_core::metric_train::Scheme;
use mtaf_core::synthgen::{generate_world, scope_pair_iter};
use mtaf_core::{run_tracker, Affinity, CameraId, Detection, Frame, IdReport, ScopeErrorReport, ScopeSpec};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::io::{self, BoxRow, CalibrationRecord, Checkpoint, SeedRecord, S};
use crate::pipeline::{self, LevelReport, SweepSpec};

/// Fixed-width console table: first column left-aligned, the rest right-aligned.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                let _ = write!(s, "{:<w$}", cell, w = widths[c]);
            } else {
                let _ = write!(s, "  {:>w$}", cell, w = widths[c]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect());
    for r in rows {
        out += &line(r.iter().map(|s| s.as_str()).collect());
    }
    out
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

// ---------------------------------------------------------------------- gen

pub fn gen(settings: &Settings, out: &Path, split: Option<u64>) -> CliResult<String> {
    let mut world = settings.world.clone();
    if let Some(s) = split {
        world.split = s;
    }
    let data = generate_world::<S>(&world)?;
    let m = io::write_dataset(out, &data)?;
    let rows = vec![
        vec!["cameras".into(), m.cameras.len().to_string()],
        vec!["identities".into(), m.identity_count.to_string()],
        vec!["detections".into(), m.detection_count.to_string()],
        vec!["feature_dim".into(), m.feature_dim.to_string()],
        vec![
            "frames".into(),
            m.frame_range.map_or("-".into(), |(a, b)| format!("{a}..{b}")),
        ],
        vec!["seed".into(), m.seed.to_string()],
        vec!["split".into(), m.split.to_string()],
    ];
    Ok(table(&["dataset", "value"], &rows))
}

// ---------------------------------------------------------------- calibrate

pub fn calibrate(settings: &Settings, data: &Path, out: &Path) -> CliResult<String> {
    let ds = io::read_dataset(data)?;
    let c = settings.calibration;
    let summary = pipeline::calibrate(&ds.detections, c.max_pairs, c.seed)?;
    let cal = summary.calibration;
    let rec = CalibrationRecord {
        mu_p: cal.mu_p,
        mu_n: cal.mu_n,
        thres: cal.thres,
        pairs_used: summary.pairs_used,
        pair_population: summary.pair_population,
        capped: summary.capped,
        seed: c.seed,
    };
    io::write_json(out, &rec)?;
    let mut s = table(
        &["calibration", "value"],
        &[
            vec!["mu_p".into(), f6(cal.mu_p as f64)],
            vec!["mu_n".into(), f6(cal.mu_n as f64)],
            vec!["thres".into(), f6(cal.thres as f64)],
            vec!["pairs_used".into(), summary.pairs_used.to_string()],
            vec!["pair_population".into(), summary.pair_population.to_string()],
        ],
    );
    if summary.capped {
        let _ = writeln!(s, "note: pair population capped at a seeded sample of {}", c.max_pairs);
    }
    if cal.inverted() {
        s += "warning: negatives are closer than positives on average\n";
    }
    Ok(s)
}

// -------------------------------------------------------------------- train

pub fn parse_scheme(s: &str) -> CliResult<Scheme> {
    Scheme::parse(s).ok_or_else(|| CliError::config(format!("unknown scheme `{s}` (expected intra, inter or global)")))
}

fn scheme_tau(settings: &Settings, scheme: Scheme) -> Frame {
    match scheme {
        Scheme::Intra => settings.sampler.tau_s,
        Scheme::Inter => settings.sampler.tau_m,
        Scheme::Global => 0,
    }
}

pub fn train(settings: &Settings, data: &Path, scheme: Scheme, tau: Option<Frame>, out: &Path) -> CliResult<String> {
    let ds = io::read_dataset(data)?;
    let tau = tau.unwrap_or_else(|| scheme_tau(settings, scheme));
    if scheme != Scheme::Global && tau <= 0 {
        return Err(CliError::config("tau: must be positive"));
    }
    let sp = &settings.sampler;
    let tc = &settings.train.config;
    let outcome = pipeline::train_scheme(&ds.detections, scheme, tau, sp.pair_count, sp.seed, tc, tc.seed)?;
    let mut model = outcome.model;
    model.set_temperature(settings.train.temperature as S);
    let seeds = SeedRecord {
        init: tc.seed,
        sampler: sp.seed,
        shuffle: tc.seed,
    };
    let ckpt = Checkpoint::from_model(
        &model,
        seeds,
        sp.pair_count,
        tc.epochs,
        outcome.final_loss as f64,
        outcome.final_accuracy,
    );
    io::write_checkpoint(out, &ckpt)?;
    Ok(table(
        &["training", "value"],
        &[
            vec!["scheme".into(), scheme.name().into()],
            vec!["tau".into(), model.provenance().tau().map_or("-".into(), |t| t.to_string())],
            vec!["pairs".into(), sp.pair_count.to_string()],
            vec!["steps".into(), outcome.steps.to_string()],
            vec!["final_loss".into(), f6(outcome.final_loss as f64)],
            vec!["final_accuracy".into(), f4(outcome.final_accuracy)],
        ],
    ))
}

// -------------------------------------------------------------------- track

/// Affinity source named on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum AffinitySpec {
    /// Distance rule calibrated on the dataset being processed.
    Eq1,
    /// Distance rule with a stored calibration.
    Eq1File(PathBuf),
    Oracle,
    Checkpoint(PathBuf),
}

impl AffinitySpec {
    pub fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "" => return Err(CliError::config("empty affinity spec")),
            "eq1" => AffinitySpec::Eq1,
            "oracle" => AffinitySpec::Oracle,
            _ => match s.strip_prefix("eq1:") {
                Some("") => return Err(CliError::config("eq1: needs a calibration file")),
                Some(p) => AffinitySpec::Eq1File(PathBuf::from(p)),
                None => AffinitySpec::Checkpoint(PathBuf::from(s)),
            },
        })
    }

    /// Short label used in file names and tables.
    pub fn label(&self) -> String {
        match self {
            AffinitySpec::Eq1 | AffinitySpec::Eq1File(_) => "eq1".into(),
            AffinitySpec::Oracle => "oracle".into(),
            AffinitySpec::Checkpoint(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "metric".into()),
        }
    }

    /// Checkpoints are checked against the feature dimension up front.
    pub fn resolve(&self, settings: &Settings, dets: &[Detection<S>], dim: usize) -> CliResult<Affinity<S>> {
        Ok(match self {
            AffinitySpec::Eq1 => {
                let c = settings.calibration;
                Affinity::ReidDistance(pipeline::calibrate(dets, c.max_pairs, c.seed)?.calibration)
            }
            AffinitySpec::Eq1File(p) => Affinity::ReidDistance(io::read_json::<CalibrationRecord>(p)?.calibration(p)?),
            AffinitySpec::Oracle => Affinity::Oracle,
            AffinitySpec::Checkpoint(p) => {
                let (_, model) = io::read_checkpoint(p)?;
                if model.input_dim() != dim {
                    return Err(CliError::Dimension(mtaf_core::Error::DimensionMismatch {
                        expected: model.input_dim(),
                        found: dim,
                    }));
                }
                Affinity::Siamese(model)
            }
        })
    }
}

pub fn track(settings: &Settings, data: &Path, sct: &AffinitySpec, mct: &AffinitySpec, out: &Path) -> CliResult<String> {
    let ds = io::read_dataset(data)?;
    let a_sct = sct.resolve(settings, &ds.detections, ds.feature_dim)?;
    let a_mct = if mct == sct { a_sct.clone() } else { mct.resolve(settings, &ds.detections, ds.feature_dim)? };
    let cfg = pipeline::tracker_config(&settings.tracker, a_sct, a_mct);
    let hyp = run_tracker(&ds.detections, &cfg)?;
    io::write_hypothesis(out, &ds.detections, &hyp.identities)?;
    Ok(table(
        &["tracking", "value"],
        &[
            vec!["sct_affinity".into(), sct.label()],
            vec!["mct_affinity".into(), mct.label()],
            vec!["detections".into(), ds.detections.len().to_string()],
            vec!["tracklets".into(), hyp.tracklet_count.to_string()],
            vec!["sct_trajectories".into(), hyp.sct_trajectory_count.to_string()],
            vec!["identities".into(), hyp.identity_count().to_string()],
        ],
    ))
}

// --------------------------------------------------------------------- eval

pub const EVAL_HEADER: [&str; 8] = ["level", "camera", "idf1", "idp", "idr", "idtp", "idfp", "idfn"];

fn eval_row(level: &str, camera: &str, r: &IdReport) -> Vec<String> {
    vec![
        level.into(),
        camera.into(),
        f6(r.idf1),
        f6(r.idp),
        f6(r.idr),
        r.idtp.to_string(),
        r.idfp.to_string(),
        r.idfn.to_string(),
    ]
}

fn keyed(path: &Path, rows: &[BoxRow]) -> CliResult<HashMap<(CameraId, Frame, [u64; 4]), (CameraId, i64)>> {
    let mut m = HashMap::with_capacity(rows.len());
    for r in rows {
        if m.insert(r.key(), (r.camera, r.identity)).is_some() {
            return Err(CliError::format(
                path,
                format!("duplicate box in camera {} frame {}", r.camera, r.frame),
            ));
        }
    }
    Ok(m)
}

fn labels(rows: &[BoxRow], camera: Option<CameraId>) -> Vec<BoxLabel> {
    rows.iter()
        .filter(|r| camera.map_or(true, |c| r.camera == c))
        .map(|r| BoxLabel {
            camera: r.camera,
            frame: r.frame,
            bbox: r.bbox,
            identity: r.identity,
        })
        .collect()
}

fn iou_levels(gt: &[BoxRow], hyp: &[BoxRow], thr: f64) -> LevelReport {
    let cameras: BTreeSet<CameraId> = gt.iter().chain(hyp).map(|r| r.camera).collect();
    let mut per_camera = Vec::new();
    let (mut tp, mut fp, mut fnn) = (0, 0, 0);
    for c in cameras {
        let r = id_measures_iou(&labels(gt, Some(c)), &labels(hyp, Some(c)), thr);
        tp += r.idtp;
        fp += r.idfp;
        fnn += r.idfn;
        per_camera.push((c, r));
    }
    LevelReport {
        per_camera,
        sct: IdReport::from_counts(tp, fp, fnn),
        mct: id_measures_iou(&labels(gt, None), &labels(hyp, None), thr),
    }
}

/// Exact box matching unless `iou` is given.
pub fn eval(gt_path: &Path, hyp_path: &Path, iou: Option<f64>, out: Option<&Path>) -> CliResult<String> {
    let gt = io::read_boxes(gt_path)?;
    let hyp = io::read_boxes(hyp_path)?;
    let report = match iou {
        Some(t) if !(t > 0.0 && t <= 1.0) => return Err(CliError::config("iou: must lie in (0, 1]")),
        Some(t) => iou_levels(&gt, &hyp, t),
        None => pipeline::level_reports(&keyed(gt_path, &gt)?, &keyed(hyp_path, &hyp)?)?,
    };
    let mut rows: Vec<Vec<String>> = report
        .per_camera
        .iter()
        .map(|(c, r)| eval_row("sct", &c.to_string(), r))
        .collect();
    rows.push(eval_row("sct", "all", &report.sct));
    rows.push(eval_row("mct", "all", &report.mct));
    if let Some(p) = out {
        io::write_table(p, &EVAL_HEADER, &rows)?;
    }
    Ok(table(&EVAL_HEADER, &rows))
}

// ------------------------------------------------------------------- scopes

pub const SCOPE_HEADER: [&str; 13] = [
    "scope", "scorer", "pairs", "positives", "negatives", "true_pos", "true_neg", "false_pos", "false_neg", "tp_pct",
    "tn_pct", "fp_pct", "fn_pct",
];

fn scope_row(scope: &str, scorer: &str, r: &ScopeErrorReport) -> Vec<String> {
    vec![
        scope.into(),
        scorer.into(),
        r.total().to_string(),
        r.positives().to_string(),
        r.negatives().to_string(),
        r.true_pos.to_string(),
        r.true_neg.to_string(),
        r.false_pos.to_string(),
        r.false_neg.to_string(),
        f6(r.tp_pct()),
        f6(r.tn_pct()),
        f6(r.fp_pct()),
        f6(r.fn_pct()),
    ]
}

/// Distinct labels: repeated ones get `_2`, `_3`, ... suffixes.
fn unique_labels(specs: &[AffinitySpec]) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    specs
        .iter()
        .map(|s| {
            let base = s.label();
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base
            } else {
                format!("{base}_{n}")
            }
        })
        .collect()
}

pub fn scopes(settings: &Settings, data: &Path, scorers: &[AffinitySpec], out: &Path) -> CliResult<String> {
    if scorers.is_empty() {
        return Err(CliError::config("at least one --scorer is required"));
    }
    let ds = io::read_dataset(data)?;
    let dets = &ds.detections;
    let names = unique_labels(scorers);
    let affinities = scorers
        .iter()
        .map(|s| s.resolve(settings, dets, ds.feature_dim))
        .collect::<CliResult<Vec<_>>>()?;
    io::ensure_dir(out)?;
    let t = &settings.tracker;
    let scope_list = [ScopeSpec::reid(), ScopeSpec::mct(t.mct_window), ScopeSpec::sct(t.sct_window)];
    let mut summary = Vec::new();
    let mut comparison = Vec::new();
    for scope in &scope_list {
        let pairs = scope_pair_iter(dets, scope, settings.scopes.seed, Some(settings.scopes.max_pairs));
        let truth: Vec<bool> = pairs.iter().map(|p| p.same_identity).collect();
        let mut base: Option<ScopeErrorReport> = None;
        for (name, aff) in names.iter().zip(&affinities) {
            let scores = score_pairs(dets, &pairs, aff)?;
            let scored = || scores.iter().copied().zip(truth.iter().copied());
            let report = ScopeErrorReport::tally(scored());
            let row = scope_row(scope.name(), name, &report);
            io::write_table(&out.join(format!("{}_{name}.csv", scope.name())), &SCOPE_HEADER, &[row.clone()])?;
            let hist = affinity_histograms(scored(), settings.bins, histogram_range(aff))?;
            let hist_rows: Vec<Vec<String>> = (0..hist.bins())
                .map(|b| {
                    vec![
                        format!("{}", hist.edges[b]),
                        format!("{}", hist.edges[b + 1]),
                        format!("{}", hist.positive[b]),
                        format!("{}", hist.negative[b]),
                    ]
                })
                .collect();
            io::write_table(
                &out.join(format!("{}_{name}_hist.csv", scope.name())),
                &["bin_lo", "bin_hi", "pos_density", "neg_density"],
                &hist_rows,
            )?;
            let b = *base.get_or_insert(report);
            comparison.push(vec![
                scope.name().to_string(),
                name.clone(),
                f6(report.fp_pct()),
                f6(report.fn_pct()),
                f6(report.fp_pct() - b.fp_pct()),
                f6(report.fn_pct() - b.fn_pct()),
            ]);
            summary.push(vec![
                scope.name().to_string(),
                name.clone(),
                report.total().to_string(),
                format!("{:.2}", report.fp_pct()),
                format!("{:.2}", report.fn_pct()),
            ]);
        }
    }
    let header = ["scope", "scorer", "fp_pct", "fn_pct", "delta_fp", "delta_fn"];
    if scorers.len() >= 2 {
        io::write_table(&out.join("comparison.csv"), &header, &comparison)?;
    }
    Ok(table(&["scope", "scorer", "pairs", "fp_pct", "fn_pct"], &summary))
}

// -------------------------------------------------------------------- sweep

/// Comma-separated positive multipliers; each is a decimal or a fraction `a/b`.
pub fn parse_multipliers(s: &str) -> CliResult<Vec<f64>> {
    let bad = |t: &str| CliError::config(format!("multipliers: `{t}` is not a positive number or fraction"));
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let v = match tok.split_once('/') {
            Some((a, b)) => {
                let a: f64 = a.trim().parse().map_err(|_| bad(tok))?;
                let b: f64 = b.trim().parse().map_err(|_| bad(tok))?;
                a / b
            }
            None => tok.parse().map_err(|_| bad(tok))?,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad(tok));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::config("multipliers: list is empty"));
    }
    Ok(out)
}

pub const SWEEP_HEADER: [&str; 8] = ["multiplier", "tau", "sct_idf1", "sct_idp", "sct_idr", "mct_idf1", "mct_idp", "mct_idr"];

pub fn sweep(
    settings: &Settings,
    data: &Path,
    eval_data: Option<&Path>,
    scheme: Scheme,
    multipliers: &[f64],
    out: &Path,
) -> CliResult<String> {
    if multipliers.is_empty() {
        return Err(CliError::config("multipliers: list is empty"));
    }
    if scheme == Scheme::Global {
        return Err(CliError::config("scheme: global has no sampling window to sweep"));
    }
    let train = io::read_dataset(data)?;
    let eval = match eval_data {
        Some(p) => io::read_dataset(p)?,
        None => train.clone(),
    };
    if eval.feature_dim != train.feature_dim {
        return Err(CliError::Dimension(mtaf_core::Error::DimensionMismatch {
            expected: train.feature_dim,
            found: eval.feature_dim,
        }));
    }
    let spec = SweepSpec {
        scheme,
        multipliers: multipliers.to_vec(),
        pair_count: settings.sampler.pair_count,
        sampler_seed: settings.sampler.seed,
        train: settings.train.config.clone(),
        temperature: settings.train.temperature,
    };
    let rows = pipeline::window_sweep(&train.detections, &eval.detections, &settings.tracker, &spec)?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.multiplier),
                r.tau.to_string(),
                f6(r.sct.idf1),
                f6(r.sct.idp),
                f6(r.sct.idr),
                f6(r.mct.idf1),
                f6(r.mct.idp),
                f6(r.mct.idr),
            ]
        })
        .collect();
    io::write_table(out, &SWEEP_HEADER, &cells)?;
    Ok(table(&SWEEP_HEADER, &cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multipliers_accept_fractions() {
        assert_eq!(parse_multipliers("1/8, 1,8").unwrap(), vec![0.125, 1.0, 8.0]);
        assert_eq!(parse_multipliers("").unwrap_err().exit_code(), 2);
        assert_eq!(parse_multipliers(" , ").unwrap_err().exit_code(), 2);
        assert!(parse_multipliers("0").is_err());
        assert!(parse_multipliers("-1").is_err());
        assert!(parse_multipliers("1/0").is_err());
        assert!(parse_multipliers("x").is_err());
    }

    #[test]
    fn affinity_specs() {
        assert_eq!(AffinitySpec::parse("eq1").unwrap(), AffinitySpec::Eq1);
        assert_eq!(AffinitySpec::parse("oracle").unwrap(), AffinitySpec::Oracle);
        assert_eq!(AffinitySpec::parse("eq1:cal.json").unwrap(), AffinitySpec::Eq1File("cal.json".into()));
        assert_eq!(AffinitySpec::parse("m/intra.json").unwrap().label(), "intra");
        assert!(AffinitySpec::parse("eq1:").is_err());
        let specs = [AffinitySpec::Eq1, AffinitySpec::Eq1File("c".into()), AffinitySpec::Oracle];
        assert_eq!(unique_labels(&specs), vec!["eq1", "eq1_2", "oracle"]);
    }

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxyz   1\n");
    }
}
