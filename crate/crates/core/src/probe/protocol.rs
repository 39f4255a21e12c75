use super::kmeans::{kcluster_points, CenterUpdate, ClusterModel, KConfig};
use super::label::{avg_center_distance, grouping_success, label_clusters, pause_fraction, Weighting};
use super::{normalize, Scaling, Tap};
use crate::neural::{FeatureTrace, Model};
use crate::scene::{load_entry, DatasetManifest, FrameLabel, ManifestEntry, Snr};
use crate::spectral::stft;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Independently seeded repetitions that are averaged.
    pub trials: usize,
    /// Clustering attempts per trial; the lowest-cost one is kept.
    pub attempts: usize,
    pub max_iter: usize,
    pub update: CenterUpdate,
    pub weighting: Weighting,
    pub scaling: Scaling,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            trials: 5,
            attempts: 5,
            max_iter: 100,
            update: CenterUpdate::Median,
            weighting: Weighting::Unweighted,
            scaling: Scaling::Joint,
            seed: 0,
        }
    }
}

/// Everything the probe needs from one sequence.
#[derive(Debug, Clone)]
pub struct SequenceFeatures {
    pub sequence: usize,
    pub snr: Snr,
    pub num_sources: usize,
    pub activity: Vec<FrameLabel>,
    pub target_energy: Vec<f64>,
    pub trace: FeatureTrace,
}

/// Runs the model on one manifest entry and collects its features and labels.
pub fn sequence_features(model: &Model, dir: &Path, entry: &ManifestEntry) -> Result<SequenceFeatures> {
    let loaded = load_entry(dir, entry)?;
    let frame_len = model.config.frame_len();
    if loaded.labels.frame_len != frame_len {
        return Err(Error::Config(format!(
            "dataset framing ({} samples) does not match the model ({frame_len} samples)",
            loaded.labels.frame_len
        )));
    }
    let hop = frame_len / 2;
    let x = stft(&loaded.mixture, frame_len, hop)?;
    let target = stft(&loaded.target, frame_len, hop)?;
    let trace = model.forward(&x)?.1.with_sequence(format!("{:04}", entry.sequence));
    if loaded.labels.activity.len() != trace.num_frames() {
        return Err(Error::Shape(format!(
            "{} activity labels for {} frames",
            loaded.labels.activity.len(),
            trace.num_frames()
        )));
    }
    Ok(SequenceFeatures {
        sequence: entry.sequence,
        snr: entry.snr,
        num_sources: loaded.scenario.sources.len(),
        activity: loaded.labels.activity,
        target_energy: target.frame_energies(),
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub sequence: usize,
    pub snr: Snr,
    pub tap: Tap,
    pub trial: usize,
    pub grouping: Option<f64>,
    pub per_source: Vec<Option<f64>>,
    pub excluded_sources: Vec<usize>,
    pub pause_frames: usize,
    pub frames: usize,
    pub pause_fraction: f64,
    pub total_cost: f64,
    pub empty_clusters: usize,
    /// Cluster index of every frame, with the pause cluster mapped to 0 and
    /// the cluster of source q to q + 1.
    pub frame_labels: Vec<FrameLabel>,
}

fn trial_rng(seed: u64, sequence: usize, tap: Tap, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tap_bit = match tap {
        Tap::Input => 0,
        Tap::Output => 1,
    };
    rng.set_stream(((sequence as u64) << 20) | ((trial as u64) << 1) | tap_bit);
    rng
}

/// Clusters and scores one tap of one sequence for one trial.
pub fn evaluate_sequence(
    f: &SequenceFeatures,
    tap: Tap,
    cfg: &ProtocolConfig,
    trial: usize,
) -> Result<(SequenceScore, ClusterModel)> {
    let norm = normalize(&f.trace, tap, cfg.scaling)?;
    let kcfg = KConfig {
        k: f.num_sources + 1,
        attempts: cfg.attempts,
        max_iter: cfg.max_iter,
        update: cfg.update,
    };
    let mut rng = trial_rng(cfg.seed, f.sequence, tap, trial);
    let model = kcluster_points(&norm.data, norm.dim(), &kcfg, &mut rng)?;
    let labeled = label_clusters(&model, &f.activity, &f.target_energy, f.num_sources)?;
    let grouping = grouping_success(&labeled, &f.activity, cfg.weighting)?;
    let pause_frames = labeled
        .assignments
        .iter()
        .filter(|&&a| a == labeled.pause_cluster)
        .count();
    let score = SequenceScore {
        sequence: f.sequence,
        snr: f.snr,
        tap,
        trial,
        grouping: grouping.percent,
        per_source: grouping.per_source,
        excluded_sources: grouping.excluded_sources,
        pause_frames,
        frames: labeled.assignments.len(),
        pause_fraction: pause_fraction(&labeled),
        total_cost: model.total_cost,
        empty_clusters: labeled.empty_clusters.len(),
        frame_labels: labeled.assignments.iter().map(|&a| labeled.labels[a]).collect(),
    };
    Ok((score, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub grouping_success: Option<f64>,
    pub d_bar: f64,
    pub pause_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapMetrics {
    /// Mean over trials, in percent.
    pub grouping_success: Option<f64>,
    pub grouping_std: Option<f64>,
    pub d_bar: f64,
    pub pause_fraction: f64,
    pub trials: Vec<TrialMetrics>,
    pub sequences: usize,
    /// Sequence-trial pairs that had no scorable source frame.
    pub ungraded: usize,
    pub empty_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub snr: Snr,
    pub input: Option<TapMetrics>,
    pub output: Option<TapMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub dataset: String,
    pub model_checksum: String,
    pub config: ProtocolConfig,
    pub rows: Vec<ReportRow>,
    pub sequences: Vec<SequenceScore>,
    /// Set when some sequences failed and were left out.
    pub incomplete: bool,
    pub failures: Vec<String>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn aggregate(scores: &[(&SequenceScore, &ClusterModel)], trials: usize) -> Result<TapMetrics> {
    let mut per_trial = Vec::with_capacity(trials);
    for t in 0..trials {
        let group: Vec<_> = scores.iter().filter(|(s, _)| s.trial == t).collect();
        let grouping: Vec<f64> = group.iter().filter_map(|(s, _)| s.grouping).collect();
        let models: Vec<&ClusterModel> = group.iter().map(|(_, m)| *m).collect();
        let (d_bar, _) = avg_center_distance(&models)?;
        let pause: usize = group.iter().map(|(s, _)| s.pause_frames).sum();
        let frames: usize = group.iter().map(|(s, _)| s.frames).sum();
        per_trial.push(TrialMetrics {
            grouping_success: mean(&grouping),
            d_bar,
            pause_fraction: 100.0 * pause as f64 / frames.max(1) as f64,
        });
    }
    let g: Vec<f64> = per_trial.iter().filter_map(|t| t.grouping_success).collect();
    let g_mean = mean(&g);
    let g_std = g_mean.map(|m| (g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / g.len() as f64).sqrt());
    let d: Vec<f64> = per_trial.iter().map(|t| t.d_bar).collect();
    let p: Vec<f64> = per_trial.iter().map(|t| t.pause_fraction).collect();
    Ok(TapMetrics {
        grouping_success: g_mean,
        grouping_std: g_std,
        d_bar: mean(&d).unwrap_or(0.0),
        pause_fraction: mean(&p).unwrap_or(0.0),
        trials: per_trial,
        sequences: scores.len() / trials.max(1),
        ungraded: scores.iter().filter(|(s, _)| s.grouping.is_none()).count(),
        empty_clusters: scores.iter().map(|(s, _)| s.empty_clusters).sum(),
    })
}

/// Scores precomputed sequence features; the building block of
/// [`run_protocol`].
pub fn score_features(
    features: &[SequenceFeatures],
    taps: &[Tap],
    cfg: &ProtocolConfig,
) -> Result<Vec<(SequenceScore, ClusterModel)>> {
    let jobs: Vec<(usize, Tap, usize)> = (0..features.len())
        .flat_map(|i| taps.iter().flat_map(move |&tap| (0..cfg.trials).map(move |t| (i, tap, t))))
        .collect();
    jobs.par_iter()
        .map(|&(i, tap, t)| evaluate_sequence(&features[i], tap, cfg, t))
        .collect()
}

/// Builds report rows (one per SNR, in order of first appearance).
pub fn build_rows(scored: &[(SequenceScore, ClusterModel)], taps: &[Tap], trials: usize) -> Result<Vec<ReportRow>> {
    let mut snrs: Vec<Snr> = Vec::new();
    for (s, _) in scored {
        if !snrs.contains(&s.snr) {
            snrs.push(s.snr);
        }
    }
    snrs.into_iter()
        .map(|snr| {
            let for_tap = |tap: Tap| -> Result<Option<TapMetrics>> {
                if !taps.contains(&tap) {
                    return Ok(None);
                }
                let sel: Vec<(&SequenceScore, &ClusterModel)> = scored
                    .iter()
                    .filter(|(s, _)| s.snr == snr && s.tap == tap)
                    .map(|(s, m)| (s, m))
                    .collect();
                if sel.is_empty() {
                    return Ok(None);
                }
                aggregate(&sel, trials).map(Some)
            };
            Ok(ReportRow {
                snr,
                input: for_tap(Tap::Input)?,
                output: for_tap(Tap::Output)?,
            })
        })
        .collect()
}

/// Full probing protocol over every manifest entry.
pub fn run_protocol(
    manifest: &DatasetManifest,
    dir: &Path,
    model: &Model,
    taps: &[Tap],
    cfg: &ProtocolConfig,
) -> Result<ClusterReport> {
    if cfg.trials == 0 || cfg.attempts == 0 {
        return Err(Error::Config("trials and attempts must be positive".into()));
    }
    if taps.is_empty() {
        return Err(Error::Config("no tap selected".into()));
    }
    let loaded: Vec<Result<SequenceFeatures>> = manifest
        .entries
        .par_iter()
        .map(|e| sequence_features(model, dir, e))
        .collect();
    let mut features = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (entry, r) in manifest.entries.iter().zip(loaded) {
        match r {
            Ok(f) => features.push(f),
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                failures.push(format!("sequence {} ({:?}): {e}", entry.sequence, entry.snr));
                first_err.get_or_insert(e);
            }
        }
    }
    if features.is_empty() {
        return Err(first_err.unwrap_or_else(|| Error::Config("manifest has no entries".into())));
    }
    let scored = score_features(&features, taps, cfg)?;
    let rows = build_rows(&scored, taps, cfg.trials)?;
    Ok(ClusterReport {
        dataset: manifest.kind.name().to_string(),
        model_checksum: model.params.checksum(),
        config: cfg.clone(),
        rows,
        sequences: scored.into_iter().map(|(s, _)| s).collect(),
        incomplete: !failures.is_empty(),
        failures,
    })
}

fn snr_text(snr: Snr) -> String {
    match snr {
        Snr::Clean => "clean".into(),
        Snr::Db(v) => format!("{v}"),
    }
}

impl ClusterReport {
    pub const CSV_HEADER: &'static str = "dataset,SNR,grouping_in,grouping_out,dbar_in,dbar_out,pause_in,pause_out";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let g = |m: &Option<TapMetrics>| {
                m.as_ref()
                    .and_then(|m| m.grouping_success)
                    .map(|v| format!("{v:.2}"))
                    .unwrap_or_default()
            };
            let d = |m: &Option<TapMetrics>| m.as_ref().map(|m| format!("{:.4}", m.d_bar)).unwrap_or_default();
            let p = |m: &Option<TapMetrics>| {
                m.as_ref()
                    .map(|m| format!("{:.2}", m.pause_fraction))
                    .unwrap_or_default()
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.dataset,
                snr_text(row.snr),
                g(&row.input),
                g(&row.output),
                d(&row.input),
                d(&row.output),
                p(&row.input),
                p(&row.output)
            ));
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(json_path, e))?;
        std::fs::write(json_path, json).map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))
    }

    pub fn read(json_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(json_path, e))
    }
}
