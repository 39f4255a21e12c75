//! Acoustic scene simulation: scenario sampling, image-source room impulse
//! responses, multichannel rendering, additive noise and dataset assembly.

mod dataset;
mod render;
mod rir;
mod speech;

pub use dataset::{
    build_dataset, load_entry, DatasetManifest, DatasetOptions, LoadedEntry, ManifestEntry, SequenceLabels, MANIFEST_FILE,
    MANIFEST_VERSION,
};
pub use render::{frame_activity, mix_noise, render_scene, FrameLabel, RenderedScene};
pub use rir::{schroeder_rt60, synth_rir, SINC_TAPS};
pub use speech::{
    synth_speechlike, synth_speechlike_parts, DirectoryCorpus, SpeakerProfile, SpeechCorpus,
    SpeechParts, SyntheticCorpus,
};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Lengths along x, y, z in meters.
    pub dimensions: [f64; 3],
    /// Reverberation time in seconds.
    pub rt60: f64,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
}

fn default_speed_of_sound() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl RoomSpec {
    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Smallest distance from `p` to any wall; negative when outside.
    pub fn wall_distance(&self, p: &[f64; 3]) -> f64 {
        (0..3)
            .map(|i| p[i].min(self.dimensions[i] - p[i]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains_strictly(&self, p: &[f64; 3]) -> bool {
        self.wall_distance(p) > 0.0
    }

    pub(crate) fn check_inside(&self, p: &[f64; 3]) -> Result<()> {
        if self.contains_strictly(p) {
            Ok(())
        } else {
            Err(Error::Geometry {
                position: *p,
                room: self.dimensions,
            })
        }
    }
}

/// Uniform linear array in the horizontal plane. Microphone 1 sits at the
/// end of the array that faces the 0° endfire direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub num_mics: usize,
    pub spacing: f64,
    pub center: [f64; 3],
    /// Unit vector (x, y) along the array axis, pointing from microphone 1
    /// toward microphone M.
    pub orientation: [f64; 2],
}

impl ArraySpec {
    pub fn new(num_mics: usize, spacing: f64, center: [f64; 3], azimuth_rad: f64) -> Self {
        Self {
            num_mics,
            spacing,
            center,
            orientation: [azimuth_rad.cos(), azimuth_rad.sin()],
        }
    }

    pub fn mic_positions(&self) -> Vec<[f64; 3]> {
        let [ux, uy] = self.orientation;
        let mid = (self.num_mics as f64 - 1.0) / 2.0;
        (0..self.num_mics)
            .map(|m| {
                let off = (m as f64 - mid) * self.spacing;
                [
                    self.center[0] + off * ux,
                    self.center[1] + off * uy,
                    self.center[2],
                ]
            })
            .collect()
    }

    /// DoA of a point in degrees: 0° on the microphone-1 side of the axis,
    /// 180° on the microphone-M side.
    pub fn doa_deg(&self, p: &[f64; 3]) -> f64 {
        let d = [
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ];
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if norm == 0.0 {
            return 90.0;
        }
        let cos = -(d[0] * self.orientation[0] + d[1] * self.orientation[1]) / norm;
        cos.clamp(-1.0, 1.0).acos().to_degrees()
    }

    pub fn distance_to(&self, p: &[f64; 3]) -> f64 {
        self.mic_positions()
            .iter()
            .map(|m| distance(m, p))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub position: [f64; 3],
    pub doa_deg: f64,
    pub speaker_id: String,
    /// Seed selecting the utterance drawn from the speaker's corpus entry.
    pub utterance: u64,
}

/// Half-open activity interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub source: usize,
    pub start: f64,
    pub end: f64,
}

/// Noise condition of a rendered mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Clean,
    Db(f64),
}

impl Snr {
    pub fn db(&self) -> Option<f64> {
        match self {
            Snr::Clean => None,
            Snr::Db(v) => Some(*v),
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Clean => write!(f, "clean"),
            Snr::Db(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Snr::Clean => s.serialize_str("clean"),
            Snr::Db(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Snr::Db(v)),
            Raw::Str(s) if s == "clean" => Ok(Snr::Clean),
            Raw::Str(s) => s
                .parse::<f64>()
                .map(Snr::Db)
                .map_err(|_| serde::de::Error::custom(format!("invalid SNR {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "DS-clean")]
    DsClean,
    #[serde(rename = "DS-WGN")]
    DsWgn,
    #[serde(rename = "DST-clean")]
    DstClean,
    #[serde(rename = "DST-WGN")]
    DstWgn,
    #[serde(rename = "DST-1Pos")]
    Dst1Pos,
    #[serde(rename = "DST-1Spk")]
    Dst1Spk,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 6] = [
        DatasetKind::DsClean,
        DatasetKind::DsWgn,
        DatasetKind::DstClean,
        DatasetKind::DstWgn,
        DatasetKind::Dst1Pos,
        DatasetKind::Dst1Spk,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::DsClean => "DS-clean",
            DatasetKind::DsWgn => "DS-WGN",
            DatasetKind::DstClean => "DST-clean",
            DatasetKind::DstWgn => "DST-WGN",
            DatasetKind::Dst1Pos => "DST-1Pos",
            DatasetKind::Dst1Spk => "DST-1Spk",
        }
    }

    pub fn is_training(&self) -> bool {
        matches!(self, DatasetKind::DsClean | DatasetKind::DsWgn)
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self, DatasetKind::DsWgn | DatasetKind::DstWgn)
    }

    /// Number of distinct speaker ids a sequence of this kind needs.
    pub fn speakers_needed(&self) -> usize {
        match self {
            DatasetKind::Dst1Spk => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::Config(format!("unknown dataset kind {s:?}")))
    }
}

/// Ranges used by [`sample_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub room_x: (f64, f64),
    pub room_y: (f64, f64),
    pub room_z: (f64, f64),
    pub rt60: (f64, f64),
    pub num_mics: usize,
    pub mic_spacing: f64,
    pub min_doa_separation_deg: f64,
    pub min_wall_distance: f64,
    pub min_array_distance: f64,
    /// First speaker change for three-segment kinds, seconds.
    pub switch_1: (f64, f64),
    /// Second speaker change for three-segment kinds, seconds.
    pub switch_2: (f64, f64),
    /// Single position change of the one-speaker kind, seconds.
    pub single_switch: (f64, f64),
    pub duration: f64,
    pub sample_rate: u32,
    pub speed_of_sound: f64,
    pub max_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            room_x: (4.0, 8.0),
            room_y: (4.0, 8.0),
            room_z: (1.0, 4.0),
            rt60: (0.2, 0.5),
            num_mics: 3,
            mic_spacing: 0.04,
            min_doa_separation_deg: 20.0,
            min_wall_distance: 0.3,
            min_array_distance: 0.3,
            switch_1: (1.0, 3.0),
            switch_2: (5.0, 6.0),
            single_switch: (2.0, 5.0),
            duration: 7.0,
            sample_rate: 16000,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            max_attempts: 1000,
        }
    }
}

impl SamplerConfig {
    /// Same geometry, with every switch-time range rescaled from the 7 s
    /// reference layout to `duration`.
    pub fn with_duration(mut self, duration: f64) -> Self {
        let scale = duration / self.duration;
        let sc = |r: (f64, f64)| (r.0 * scale, r.1 * scale);
        self.switch_1 = sc(self.switch_1);
        self.switch_2 = sc(self.switch_2);
        self.single_switch = sc(self.single_switch);
        self.duration = duration;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("room_x", self.room_x),
            ("room_y", self.room_y),
            ("room_z", self.room_z),
            ("rt60", self.rt60),
            ("switch_1", self.switch_1),
            ("switch_2", self.switch_2),
            ("single_switch", self.single_switch),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("range {name} = [{lo}, {hi}] is degenerate")));
            }
        }
        if self.rt60.0 <= 0.0 || self.room_z.0 <= 0.0 {
            return Err(Error::Config("rt60 and room dimensions must be positive".into()));
        }
        if !(0.0 < self.switch_1.0 && self.switch_1.1 < self.switch_2.0 && self.switch_2.1 < self.duration)
        {
            return Err(Error::Config("switch times must be ordered inside the sequence".into()));
        }
        if !(0.0 < self.single_switch.0 && self.single_switch.1 < self.duration) {
            return Err(Error::Config("single switch must lie inside the sequence".into()));
        }
        if self.num_mics < 2 || self.mic_spacing <= 0.0 || self.max_attempts == 0 {
            return Err(Error::Config("array needs ≥ 2 mics with positive spacing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: DatasetKind,
    pub room: RoomSpec,
    pub array: ArraySpec,
    pub sources: Vec<SourceRecord>,
    pub schedule: Vec<Segment>,
    pub switch_times: Vec<f64>,
    pub snr_db: Snr,
    pub seed: u64,
    pub duration: f64,
    pub sample_rate: u32,
}

impl ScenarioSpec {
    pub fn num_samples(&self) -> usize {
        (self.duration * f64::from(self.sample_rate)).round() as usize
    }

    /// Sample range `[start, end)` of a schedule segment.
    pub fn segment_samples(&self, seg: &Segment) -> (usize, usize) {
        let fs = f64::from(self.sample_rate);
        let n = self.num_samples();
        let a = ((seg.start * fs).round() as usize).min(n);
        let b = ((seg.end * fs).round() as usize).min(n);
        (a, b)
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn check_invariants(&self, cfg: &SamplerConfig) -> std::result::Result<(), String> {
        let [x, y, z] = self.room.dimensions;
        if !(in_range(x, cfg.room_x) && in_range(y, cfg.room_y) && in_range(z, cfg.room_z)) {
            return Err(format!("room {:?} outside sampling ranges", self.room.dimensions));
        }
        if !in_range(self.room.rt60, cfg.rt60) {
            return Err(format!("rt60 {} outside range", self.room.rt60));
        }
        for mic in self.array.mic_positions() {
            if !self.room.contains_strictly(&mic) {
                return Err(format!("microphone {mic:?} outside room"));
            }
        }
        for (q, s) in self.sources.iter().enumerate() {
            if self.room.wall_distance(&s.position) < cfg.min_wall_distance {
                return Err(format!("source {q} too close to a wall"));
            }
            if self.array.distance_to(&s.position) < cfg.min_array_distance {
                return Err(format!("source {q} too close to the array"));
            }
            if !(0.0..=180.0).contains(&s.doa_deg) {
                return Err(format!("source {q} DoA {} outside [0, 180]", s.doa_deg));
            }
            if (self.array.doa_deg(&s.position) - s.doa_deg).abs() > 1e-9 {
                return Err(format!("source {q} DoA disagrees with its position"));
            }
        }
        match self.kind {
            DatasetKind::Dst1Pos => {
                if self.sources.len() != 2 || self.sources[0].position != self.sources[1].position {
                    return Err("same-position kind needs two sources at one position".into());
                }
                if self.sources[0].speaker_id == self.sources[1].speaker_id {
                    return Err("same-position kind needs two speakers".into());
                }
            }
            DatasetKind::Dst1Spk => {
                if self.sources.len() != 2 || self.sources[0].speaker_id != self.sources[1].speaker_id {
                    return Err("single-speaker kind needs one speaker at two positions".into());
                }
                if (self.sources[0].doa_deg - self.sources[1].doa_deg).abs() < cfg.min_doa_separation_deg {
                    return Err("DoA separation below minimum".into());
                }
            }
            _ => {
                if self.sources.len() != 2 {
                    return Err("two-source kind needs two sources".into());
                }
                if (self.sources[0].doa_deg - self.sources[1].doa_deg).abs() < cfg.min_doa_separation_deg {
                    return Err("DoA separation below minimum".into());
                }
                if self.sources[0].speaker_id == self.sources[1].speaker_id {
                    return Err("two-source kind needs two speakers".into());
                }
            }
        }
        // schedule tiles [0, duration]
        let mut t = 0.0;
        for seg in &self.schedule {
            if (seg.start - t).abs() > 1e-12 || seg.end <= seg.start || seg.source >= self.sources.len() {
                return Err(format!("schedule does not tile the sequence at {t}"));
            }
            t = seg.end;
        }
        if (t - self.duration).abs() > 1e-12 {
            return Err("schedule does not reach the end of the sequence".into());
        }
        let expected: &[usize] = if self.kind == DatasetKind::Dst1Spk {
            &[0, 1]
        } else {
            &[0, 1, 0]
        };
        if self.schedule.iter().map(|s| s.source).collect::<Vec<_>>() != expected {
            return Err("unexpected segment layout".into());
        }
        if self.kind.is_noisy() == matches!(self.snr_db, Snr::Clean) {
            return Err("noise condition inconsistent with dataset kind".into());
        }
        Ok(())
    }
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws one scenario of the given kind. Speaker ids are supplied by the
/// caller; `speakers[1]` is ignored for the one-speaker kind.
pub fn sample_scenario<R: Rng + ?Sized>(
    kind: DatasetKind,
    rng: &mut R,
    cfg: &SamplerConfig,
    speakers: &[String],
    snr_db: Snr,
) -> Result<ScenarioSpec> {
    cfg.validate()?;
    if speakers.len() < kind.speakers_needed() {
        return Err(Error::CorpusExhausted(format!(
            "{kind} needs {} speakers, got {}",
            kind.speakers_needed(),
            speakers.len()
        )));
    }
    if kind.is_noisy() != snr_db.db().is_some() {
        return Err(Error::Config(format!("{kind} cannot use SNR condition {snr_db}")));
    }
    let seed: u64 = rng.gen();

    let mut last_violation = String::new();
    for _ in 0..cfg.max_attempts {
        let room = RoomSpec {
            dimensions: [
                uniform(rng, cfg.room_x),
                uniform(rng, cfg.room_y),
                uniform(rng, cfg.room_z),
            ],
            rt60: uniform(rng, cfg.rt60),
            speed_of_sound: cfg.speed_of_sound,
        };
        let half = (cfg.num_mics as f64 - 1.0) / 2.0 * cfg.mic_spacing;
        let margin = half + 1e-3;
        let center = [
            uniform(rng, (margin, room.dimensions[0] - margin)),
            uniform(rng, (margin, room.dimensions[1] - margin)),
            uniform(rng, (1e-3, room.dimensions[2] - 1e-3)),
        ];
        let array = ArraySpec::new(
            cfg.num_mics,
            cfg.mic_spacing,
            center,
            rng.gen_range(0.0..2.0 * PI),
        );
        if let Some(bad) = array.mic_positions().iter().find(|p| !room.contains_strictly(p)) {
            last_violation = format!("microphone {bad:?} inside room");
            continue;
        }
        let num_positions = if kind == DatasetKind::Dst1Pos { 1 } else { 2 };
        let mut positions = Vec::with_capacity(num_positions);
        let mut tries = 0;
        while positions.len() < num_positions && tries < 64 {
            tries += 1;
            let w = cfg.min_wall_distance;
            let p = [
                uniform(rng, (w, room.dimensions[0] - w)),
                uniform(rng, (w, room.dimensions[1] - w)),
                uniform(rng, (w, room.dimensions[2] - w)),
            ];
            if array.distance_to(&p) < cfg.min_array_distance {
                last_violation = "source distance to array ≥ min_array_distance".into();
                continue;
            }
            if let Some(first) = positions.first() {
                let sep = (array.doa_deg(first) - array.doa_deg(&p)).abs();
                if sep < cfg.min_doa_separation_deg {
                    last_violation = format!("DoA separation ≥ {}°", cfg.min_doa_separation_deg);
                    continue;
                }
            }
            positions.push(p);
        }
        if positions.len() < num_positions {
            if room.dimensions.iter().any(|&d| d < 2.0 * cfg.min_wall_distance) {
                last_violation = format!("source wall distance ≥ {}", cfg.min_wall_distance);
            }
            continue;
        }
        if num_positions == 1 {
            positions.push(positions[0]);
        }
        let speaker_ids: [String; 2] = match kind {
            DatasetKind::Dst1Spk => [speakers[0].clone(), speakers[0].clone()],
            _ => [speakers[0].clone(), speakers[1].clone()],
        };
        // one continuous utterance for the single-speaker kind
        let utt: [u64; 2] = if kind == DatasetKind::Dst1Spk {
            let u = rng.gen();
            [u, u]
        } else {
            [rng.gen(), rng.gen()]
        };
        let sources = positions
            .iter()
            .zip(speaker_ids)
            .zip(utt)
            .map(|((p, id), u)| SourceRecord {
                position: *p,
                doa_deg: array.doa_deg(p),
                speaker_id: id,
                utterance: u,
            })
            .collect();
        let (schedule, switch_times) = if kind == DatasetKind::Dst1Spk {
            let s = uniform(rng, cfg.single_switch);
            (
                vec![
                    Segment { source: 0, start: 0.0, end: s },
                    Segment { source: 1, start: s, end: cfg.duration },
                ],
                vec![s],
            )
        } else {
            let s1 = uniform(rng, cfg.switch_1);
            let s2 = uniform(rng, cfg.switch_2);
            (
                vec![
                    Segment { source: 0, start: 0.0, end: s1 },
                    Segment { source: 1, start: s1, end: s2 },
                    Segment { source: 0, start: s2, end: cfg.duration },
                ],
                vec![s1, s2],
            )
        };
        let spec = ScenarioSpec {
            kind,
            room,
            array,
            sources,
            schedule,
            switch_times,
            snr_db,
            seed,
            duration: cfg.duration,
            sample_rate: cfg.sample_rate,
        };
        match spec.check_invariants(cfg) {
            Ok(()) => return Ok(spec),
            Err(v) => last_violation = v,
        }
    }
    Err(Error::ConstraintInfeasible {
        constraint: last_violation,
        attempts: cfg.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn dst_clean_has_two_separated_sources_and_three_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SamplerConfig::default();
        let s = sample_scenario(DatasetKind::DstClean, &mut rng, &cfg, &ids(), Snr::Clean).unwrap();
        assert_eq!(s.sources.len(), 2);
        assert!((s.sources[0].doa_deg - s.sources[1].doa_deg).abs() >= 20.0);
        assert_eq!(s.schedule.len(), 3);
        assert_eq!(s.switch_times.len(), 2);
    }

    #[test]
    fn one_position_kind_shares_position() {
        let cfg = SamplerConfig::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_scenario(DatasetKind::Dst1Pos, &mut rng, &cfg, &ids(), Snr::Clean).unwrap();
            assert_eq!(s.sources[0].position, s.sources[1].position);
            assert_eq!(s.sources[0].doa_deg - s.sources[1].doa_deg, 0.0);
            assert_ne!(s.sources[0].speaker_id, s.sources[1].speaker_id);
        }
    }

    #[test]
    fn one_speaker_kind_has_two_positions_and_two_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_scenario(DatasetKind::Dst1Spk, &mut rng, &SamplerConfig::default(), &ids(), Snr::Clean)
            .unwrap();
        assert_eq!(s.sources[0].speaker_id, s.sources[1].speaker_id);
        assert_ne!(s.sources[0].position, s.sources[1].position);
        assert_eq!(s.schedule.len(), 2);
    }

    #[test]
    fn monte_carlo_bounds_hold() {
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for i in 0..10_000 {
            let kind = DatasetKind::ALL[i % 6];
            let snr = if kind.is_noisy() { Snr::Db(0.0) } else { Snr::Clean };
            let s = sample_scenario(kind, &mut rng, &cfg, &ids(), snr).unwrap();
            s.check_invariants(&cfg).unwrap();
            let v = [s.room.dimensions[0], s.room.dimensions[1], s.room.dimensions[2], s.switch_times[0]];
            for j in 0..4 {
                if j == 3 && kind == DatasetKind::Dst1Spk {
                    continue;
                }
                lo[j] = lo[j].min(v[j]);
                hi[j] = hi[j].max(v[j]);
            }
            if kind != DatasetKind::Dst1Spk {
                assert!((5.0..=6.0).contains(&s.switch_times[1]));
            }
        }
        assert!(lo[0] >= 4.0 && hi[0] <= 8.0);
        assert!(lo[1] >= 4.0 && hi[1] <= 8.0);
        assert!(lo[2] >= 1.0 && hi[2] <= 4.0);
        assert!(lo[3] >= 1.0 && hi[3] <= 3.0);
        // the ranges are actually explored
        assert!(lo[0] < 4.1 && hi[0] > 7.9 && lo[2] < 1.1 && hi[2] > 3.9);
    }

    #[test]
    fn impossible_geometry_reports_constraint() {
        let cfg = SamplerConfig {
            room_x: (0.5, 0.5),
            room_y: (0.5, 0.5),
            room_z: (0.5, 0.5),
            max_attempts: 20,
            ..SamplerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_scenario(DatasetKind::DstClean, &mut rng, &cfg, &ids(), Snr::Clean).unwrap_err();
        match err {
            Error::ConstraintInfeasible { constraint, attempts } => {
                assert_eq!(attempts, 20);
                assert!(constraint.contains("wall"), "{constraint}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn doa_convention_endfire_and_broadside() {
        let a = ArraySpec::new(3, 0.04, [2.0, 2.0, 1.0], 0.0);
        let mics = a.mic_positions();
        assert!(mics[0][0] < mics[2][0]);
        assert!((a.doa_deg(&[1.0, 2.0, 1.0]) - 0.0).abs() < 1e-9);
        assert!((a.doa_deg(&[3.0, 2.0, 1.0]) - 180.0).abs() < 1e-9);
        assert!((a.doa_deg(&[2.0, 3.0, 1.0]) - 90.0).abs() < 1e-9);
    }

    #[test]
    fn snr_serde_accepts_clean_and_numbers() {
        let v: Vec<Snr> = serde_json::from_str(r#"["clean", -5, 10.5]"#).unwrap();
        assert_eq!(v, vec![Snr::Clean, Snr::Db(-5.0), Snr::Db(10.5)]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"["clean",-5.0,10.5]"#);
    }

    #[test]
    fn kind_parses_cli_spelling() {
        assert_eq!("dst-1spk".parse::<DatasetKind>().unwrap(), DatasetKind::Dst1Spk);
        assert_eq!("DS_WGN".parse::<DatasetKind>().unwrap(), DatasetKind::DsWgn);
        assert!("dst-2pos".parse::<DatasetKind>().is_err());
    }
}
