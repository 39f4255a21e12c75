//! Dependency-free SVG figures for a single sequence.

use crate::neural::{ComplexMask, Model};
use crate::probe::{evaluate_sequence, normalize, ProtocolConfig, SequenceFeatures, Tap};
use crate::scene::{load_entry, FrameLabel, ManifestEntry};
use crate::spectral::stft;
use crate::{Error, Result};
use std::f64::consts::PI;
use std::fmt::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    /// Phase of the second channel's mask over frames and bins.
    PhaseMask,
    /// Normalized GRU input and output features.
    Features,
    /// Ground truth and cluster labels per frame for both taps.
    Clusters,
    /// Target waveform.
    Target,
}

impl Artifact {
    pub const ALL: [Artifact; 4] = [Artifact::PhaseMask, Artifact::Features, Artifact::Clusters, Artifact::Target];

    pub fn name(self) -> &'static str {
        match self {
            Artifact::PhaseMask => "phase-mask",
            Artifact::Features => "features",
            Artifact::Clusters => "clusters",
            Artifact::Target => "target",
        }
    }
}

impl std::str::FromStr for Artifact {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Artifact::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown plot artifact {s:?} (expected phase-mask, features, clusters or target)"
                ))
            })
    }
}

/// Everything the figures of one sequence are drawn from.
pub struct SequenceData {
    pub sequence: usize,
    /// Mask phase, `frames × bins`.
    pub phase: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub hop: usize,
    pub switch_frames: Vec<f64>,
    /// Stacked normalized features, `frames × 2U`.
    pub h_in: Vec<Vec<f64>>,
    pub h_out: Vec<Vec<f64>>,
    pub truth: Vec<FrameLabel>,
    pub clusters_in: Vec<FrameLabel>,
    pub clusters_out: Vec<FrameLabel>,
    pub target: Vec<f64>,
}

fn rows(data: &[f64], dim: usize) -> Vec<Vec<f64>> {
    data.chunks(dim).map(<[f64]>::to_vec).collect()
}

impl SequenceData {
    pub fn compute(model: &Model, dir: &Path, entry: &ManifestEntry, protocol: &ProtocolConfig) -> Result<Self> {
        let loaded = load_entry(dir, entry)?;
        let frame_len = model.config.frame_len();
        let hop = frame_len / 2;
        let x = stft(&loaded.mixture, frame_len, hop)?;
        let target = stft(&loaded.target, frame_len, hop)?;
        let (mask, trace) = model.forward(&x)?;
        let channel = 1.min(mask.num_channels() - 1);
        let phase = phase_rows(&mask, channel);
        let features = SequenceFeatures {
            sequence: entry.sequence,
            snr: entry.snr,
            num_sources: loaded.scenario.sources.len(),
            activity: loaded.labels.activity.clone(),
            target_energy: target.frame_energies(),
            trace,
        };
        let (score_in, _) = evaluate_sequence(&features, Tap::Input, protocol, 0)?;
        let (score_out, _) = evaluate_sequence(&features, Tap::Output, protocol, 0)?;
        let n_in = normalize(&features.trace, Tap::Input, protocol.scaling)?;
        let n_out = normalize(&features.trace, Tap::Output, protocol.scaling)?;
        let fs = loaded.mixture.sample_rate();
        Ok(Self {
            sequence: entry.sequence,
            phase,
            sample_rate: fs,
            hop,
            // Frame τ is centred on sample τ·hop.
            switch_frames: loaded
                .scenario
                .switch_times
                .iter()
                .map(|t| t * fs as f64 / hop as f64)
                .collect(),
            h_in: rows(&n_in.data, n_in.dim()),
            h_out: rows(&n_out.data, n_out.dim()),
            truth: loaded.labels.activity,
            clusters_in: score_in.frame_labels,
            clusters_out: score_out.frame_labels,
            target: loaded.target.channel(0).to_vec(),
        })
    }
}

fn phase_rows(mask: &ComplexMask, channel: usize) -> Vec<Vec<f64>> {
    (0..mask.num_frames())
        .map(|t| mask.frame(channel, t).iter().map(|v| v.arg()).collect())
        .collect()
}

type Rgb = (u8, u8, u8);

fn hex((r, g, b): Rgb) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let m = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (m(a.0, b.0), m(a.1, b.1), m(a.2, b.2))
}

/// Color levels per map; neighbouring cells of equal color merge into one
/// rectangle.
const LEVELS: f64 = 16.0;

fn quantize(t: f64) -> f64 {
    (t * LEVELS).round() / LEVELS
}

/// Blue, white, red over `[−1, 1]`.
fn diverging(v: f64) -> Rgb {
    let v = quantize(v.clamp(-1.0, 1.0));
    if v < 0.0 {
        lerp((255, 255, 255), (33, 102, 172), -v)
    } else {
        lerp((255, 255, 255), (178, 24, 43), v)
    }
}

/// Cyclic hue wheel over `[−π, π]`.
fn cyclic(phase: f64) -> Rgb {
    let h = quantize(((phase + PI) / (2.0 * PI)).rem_euclid(1.0) * 2.0).rem_euclid(2.0) * 3.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let s = |c: f64| (40.0 + 200.0 * c).round() as u8;
    (s(r), s(g), s(b))
}

fn label_color(l: FrameLabel) -> Rgb {
    const PALETTE: [Rgb; 6] = [
        (31, 119, 180),
        (255, 127, 14),
        (44, 160, 44),
        (148, 103, 189),
        (140, 86, 75),
        (227, 119, 194),
    ];
    match l {
        FrameLabel::Pause => (200, 200, 200),
        FrameLabel::Source(q) => PALETTE[q % PALETTE.len()],
    }
}

const WIDTH: f64 = 900.0;
const MARGIN: f64 = 60.0;

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(height: f64) -> Self {
        Self {
            body: String::new(),
            width: WIDTH + 2.0 * MARGIN,
            height,
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{s}</text>"#
        );
    }

    fn vline(&mut self, x: f64, y0: f64, y1: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x:.2}" y1="{y0:.1}" x2="{x:.2}" y2="{y1:.1}" stroke="black" stroke-width="1.5" stroke-dasharray="4 3"/>"#
        );
    }

    /// Draws `values[col][row]` with row 0 at the bottom, one user unit per
    /// cell; horizontal runs of identical color are merged.
    fn heatmap(&mut self, y0: f64, height: f64, values: &[Vec<f64>], color: impl Fn(f64) -> Rgb) {
        let cols = values.len();
        if cols == 0 {
            return;
        }
        let nrows = values[0].len();
        let _ = writeln!(
            self.body,
            r#"<svg x="{MARGIN}" y="{y0:.1}" width="{WIDTH}" height="{height:.1}" viewBox="0 0 {cols} {nrows}" preserveAspectRatio="none" shape-rendering="crispEdges">"#
        );
        for r in 0..nrows {
            let y = nrows - 1 - r;
            let mut start = 0;
            let mut current = color(values[0][r]);
            for c in 1..=cols {
                let next = (c < cols).then(|| color(values[c][r]));
                if next != Some(current) {
                    let _ = writeln!(
                        self.body,
                        r#"<rect x="{start}" y="{y}" width="{}" height="1" fill="{}"/>"#,
                        c - start,
                        hex(current)
                    );
                    if let Some(n) = next {
                        current = n;
                        start = c;
                    }
                }
            }
        }
        self.body.push_str("</svg>\n");
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

fn frame_x(frame: f64, frames: usize) -> f64 {
    MARGIN + WIDTH * frame / frames.max(1) as f64
}

fn markers(svg: &mut Svg, d: &SequenceData, frames: usize, y0: f64, y1: f64) {
    for &f in &d.switch_frames {
        svg.vline(frame_x(f, frames), y0, y1);
    }
}

fn time_axis(svg: &mut Svg, d: &SequenceData, frames: usize, y: f64) {
    let secs = frames as f64 * d.hop as f64 / d.sample_rate as f64;
    let mut t = 0.0;
    while t <= secs + 1e-9 {
        let x = frame_x(t * d.sample_rate as f64 / d.hop as f64, frames);
        svg.text(x, y, &format!("{t:.0}"), "middle");
        t += 1.0;
    }
    svg.text(MARGIN + WIDTH / 2.0, y + 16.0, "time / s", "middle");
}

fn phase_mask(d: &SequenceData) -> String {
    let frames = d.phase.len();
    let h = 320.0;
    let mut svg = Svg::new(h + 90.0);
    svg.text(MARGIN, 20.0, "mask phase, channel 2 (frequency bins upward)", "start");
    svg.heatmap(30.0, h, &d.phase, cyclic);
    markers(&mut svg, d, frames, 30.0, 30.0 + h);
    time_axis(&mut svg, d, frames, 30.0 + h + 16.0);
    svg.finish()
}

fn features(d: &SequenceData) -> String {
    let frames = d.h_in.len();
    let h = 220.0;
    let mut svg = Svg::new(2.0 * h + 110.0);
    svg.text(MARGIN, 20.0, "GRU input features (real parts below imaginary parts)", "start");
    svg.heatmap(30.0, h, &d.h_in, diverging);
    markers(&mut svg, d, frames, 30.0, 30.0 + h);
    let y1 = 30.0 + h + 30.0;
    svg.text(MARGIN, y1 - 8.0, "GRU output features", "start");
    svg.heatmap(y1, h, &d.h_out, diverging);
    markers(&mut svg, d, frames, y1, y1 + h);
    time_axis(&mut svg, d, frames, y1 + h + 16.0);
    svg.finish()
}

fn strip(svg: &mut Svg, y: f64, h: f64, labels: &[FrameLabel], name: &str) {
    let n = labels.len();
    let cw = WIDTH / n.max(1) as f64;
    let mut start = 0;
    for i in 1..=n {
        if i == n || labels[i] != labels[start] {
            svg.rect(MARGIN + start as f64 * cw, y, (i - start) as f64 * cw, h, &hex(label_color(labels[start])));
            start = i;
        }
    }
    svg.text(MARGIN - 6.0, y + h / 2.0 + 4.0, name, "end");
}

fn clusters(d: &SequenceData) -> String {
    let frames = d.truth.len();
    let h = 40.0;
    let mut svg = Svg::new(4.0 * h + 120.0);
    svg.text(MARGIN, 20.0, "frame labels: pause (grey), positions (colors)", "start");
    strip(&mut svg, 35.0, h, &d.truth, "truth");
    strip(&mut svg, 35.0 + 1.5 * h, h, &d.clusters_in, "h_in");
    strip(&mut svg, 35.0 + 3.0 * h, h, &d.clusters_out, "h_out");
    markers(&mut svg, d, frames, 30.0, 35.0 + 4.0 * h);
    time_axis(&mut svg, d, frames, 35.0 + 4.0 * h + 20.0);
    svg.finish()
}

fn target(d: &SequenceData) -> String {
    let h = 200.0;
    let mut svg = Svg::new(h + 90.0);
    svg.text(MARGIN, 20.0, "target signal", "start");
    let n = d.target.len();
    let peak = d.target.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let cols = WIDTH as usize;
    let mid = 30.0 + h / 2.0;
    let mut path = format!("M{MARGIN:.1} {mid:.2}H{:.1}", MARGIN + WIDTH);
    for c in 0..cols {
        let a = c * n / cols;
        let b = ((c + 1) * n / cols).max(a + 1).min(n);
        if a >= n {
            break;
        }
        let (lo, hi) = d.target[a..b]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
        let x = MARGIN + c as f64 + 0.5;
        let _ = write!(
            path,
            "M{x:.1} {:.2}V{:.2}",
            mid - hi / peak * h / 2.0,
            mid - lo / peak * h / 2.0
        );
    }
    let _ = writeln!(svg.body, r#"<path d="{path}" stroke="{}" stroke-width="1" fill="none"/>"#, hex((31, 119, 180)));
    let frames = n.div_ceil(d.hop.max(1));
    for &f in &d.switch_frames {
        svg.vline(MARGIN + WIDTH * f * d.hop as f64 / n.max(1) as f64, 30.0, 30.0 + h);
    }
    time_axis(&mut svg, d, frames, 30.0 + h + 16.0);
    svg.finish()
}

pub fn render(artifact: Artifact, d: &SequenceData) -> String {
    match artifact {
        Artifact::PhaseMask => phase_mask(d),
        Artifact::Features => features(d),
        Artifact::Clusters => clusters(d),
        Artifact::Target => target(d),
    }
}

/// Cluster timeline for explicit label sequences.
pub fn cluster_timeline(truth: &[FrameLabel], h_in: &[FrameLabel], h_out: &[FrameLabel], hop: usize, fs: u32) -> String {
    let d = SequenceData {
        sequence: 0,
        phase: Vec::new(),
        sample_rate: fs,
        hop,
        switch_frames: Vec::new(),
        h_in: Vec::new(),
        h_out: Vec::new(),
        truth: truth.to_vec(),
        clusters_in: h_in.to_vec(),
        clusters_out: h_out.to_vec(),
        target: Vec::new(),
    };
    clusters(&d)
}
