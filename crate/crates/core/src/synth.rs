//! Seeded synthetic fall and ADL recordings with known impact intervals,
//! and brute-force oracles for checking the learners on small inputs.
//!
//! A trace is built from a clean magnitude profile `m(t)` and an orientation
//! `u(t)` (a unit vector); the waist accelerometer reads `m(t) u(t)` plus
//! per-axis Gaussian noise, so with zero noise its SMV equals `m(t)`.
//!
//! Fall profile: 1 g at rest, a free-fall dip to 0.3 g, then a half-sine
//! spike `1 + (peak - 1) sin(pi s / width)` and 1 g again while lying. The
//! spike is placed so that the clean SMV crosses 2 g upwards exactly at the
//! configured impact time; the ground-truth interval is the span where the
//! clean SMV stays above 2 g.

use std::f64::consts::PI;
use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    annotate_segments, synchronize, CanonicalDataset, RawSample, RawSensorStream, Segment,
    DEFAULT_SYNC_TOLERANCE_MS,
};
use crate::error::{Error, Result};
use crate::signal::{
    derive_smv_features, label_impacts, smv, smv_series, AccelSample, DetectorConfig, SmvSeries,
    DEFAULT_BETA_G,
};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 18.0;
pub const SPIKE_WIDTH_MS: f64 = 150.0;
pub const DIP_LEVEL_G: f64 = 0.3;
pub const WAIST_DEVICE: &str = "waist";
pub const WRIST_DEVICE: &str = "wrist";
pub const AUX_DEVICE: &str = "aux";
pub const AXES: [&str; 3] = ["ax", "ay", "az"];
/// Waist axis columns after synchronization.
pub const SMV_AXES: [&str; 3] = ["waist_ax", "waist_ay", "waist_az"];
/// Wrist readings are the waist motion scaled by this.
pub const WRIST_GAIN: f64 = 0.8;
pub const WRIST_OFFSET_MS: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Walk,
    Sit,
    Lie,
    FallForward,
    FallBackward,
    FallLateral,
}

impl ActivityKind {
    pub const ALL: [ActivityKind; 6] = [
        ActivityKind::Walk,
        ActivityKind::Sit,
        ActivityKind::Lie,
        ActivityKind::FallForward,
        ActivityKind::FallBackward,
        ActivityKind::FallLateral,
    ];

    pub fn is_fall(self) -> bool {
        matches!(
            self,
            ActivityKind::FallForward | ActivityKind::FallBackward | ActivityKind::FallLateral
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityKind::Walk => "walk",
            ActivityKind::Sit => "sit",
            ActivityKind::Lie => "lie",
            ActivityKind::FallForward => "fall_forward",
            ActivityKind::FallBackward => "fall_backward",
            ActivityKind::FallLateral => "fall_lateral",
        }
    }

    /// Final lying direction of a fall.
    fn lying(self) -> [f64; 3] {
        match self {
            ActivityKind::FallForward => [1.0, 0.0, 0.05],
            ActivityKind::FallBackward => [-1.0, 0.0, 0.05],
            _ => [0.0, 1.0, 0.05],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceProfile {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub activity: ActivityKind,
    /// Clean 2 g up-crossing, seconds from the trace start. Falls only.
    pub impact_time_s: Option<f64>,
    pub impact_peak_g: f64,
    pub noise_std_g: f64,
    /// Free-fall dip length before the spike.
    pub dip_ms: f64,
    /// Timestamp of the first sample.
    pub start_ms: i64,
    pub seed: u64,
}

impl TraceProfile {
    pub fn adl(activity: ActivityKind, duration_s: f64, noise_std_g: f64, seed: u64) -> Self {
        Self {
            duration_s,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            activity,
            impact_time_s: None,
            impact_peak_g: 0.0,
            noise_std_g,
            dip_ms: 300.0,
            start_ms: 0,
            seed,
        }
    }

    pub fn fall(
        activity: ActivityKind,
        duration_s: f64,
        impact_time_s: f64,
        impact_peak_g: f64,
        noise_std_g: f64,
        seed: u64,
    ) -> Self {
        Self {
            impact_time_s: Some(impact_time_s),
            impact_peak_g,
            activity,
            ..Self::adl(activity, duration_s, noise_std_g, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        if !(self.noise_std_g >= 0.0 && self.noise_std_g.is_finite()) {
            return bad(format!("noise std must be non-negative, got {}", self.noise_std_g));
        }
        match (self.activity.is_fall(), self.impact_time_s) {
            (true, None) => return bad("fall profiles need an impact time".into()),
            (false, Some(_)) => return bad("ADL profiles take no impact time".into()),
            (true, Some(t)) => {
                if !(self.impact_peak_g > 2.0 && self.impact_peak_g <= 16.0) {
                    return bad(format!(
                        "impact peak must lie in (2, 16] g, got {}",
                        self.impact_peak_g
                    ));
                }
                if self.dip_ms.is_nan() || self.dip_ms <= 0.0 {
                    return bad(format!("dip must be positive, got {} ms", self.dip_ms));
                }
                let g = self.geometry(t);
                if g.dip_start_ms < 0.0 || g.spike_start_ms + SPIKE_WIDTH_MS > self.duration_s * 1e3 {
                    return bad(format!(
                        "impact at {t} s does not leave room for the dip and spike"
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn geometry(&self, impact_s: f64) -> FallGeometry {
        let p = self.impact_peak_g;
        let lead = SPIKE_WIDTH_MS / PI * (1.0 / (p - 1.0)).asin();
        let spike_start_ms = impact_s * 1e3 - lead;
        FallGeometry {
            dip_start_ms: spike_start_ms - self.dip_ms,
            spike_start_ms,
            above_ms: (spike_start_ms + lead, spike_start_ms + SPIKE_WIDTH_MS - lead),
        }
    }
}

/// Times in milliseconds from the trace start.
struct FallGeometry {
    dip_start_ms: f64,
    spike_start_ms: f64,
    above_ms: (f64, f64),
}

/// Where the clean SMV of a fall stays above 2 g.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub trace_id: u32,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    /// Waist accelerometer, channels `ax, ay, az` in g.
    pub stream: RawSensorStream,
    /// Clean magnitude per sample.
    pub clean_smv: Vec<f64>,
    /// Clean 2 g up-crossing, absolute milliseconds. Falls only.
    pub impact_ms: Option<f64>,
    /// Absolute `(start, end)` of the clean above-2 g span. Falls only.
    pub impact_interval_ms: Option<(f64, f64)>,
}

impl SyntheticTrace {
    pub fn smv_series(&self) -> SmvSeries {
        let samples = self.stream.samples();
        SmvSeries {
            timestamps: samples.iter().map(|s| s.timestamp_ms).collect(),
            values: samples
                .iter()
                .map(|s| {
                    let v: Vec<f64> = s.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
                    smv(&AccelSample::new(v[0], v[1], v[2])).unwrap_or(f64::NAN)
                })
                .collect(),
        }
    }

    pub fn sample_period_ms(&self) -> f64 {
        let s = self.stream.samples();
        match s.len() {
            0 | 1 => 0.0,
            n => (s[n - 1].timestamp_ms - s[0].timestamp_ms) as f64 / (n - 1) as f64,
        }
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn lerp_dir(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    normalize([
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ])
}

const UPRIGHT: [f64; 3] = [0.0, 0.0, 1.0];

/// Clean magnitude and orientation at `ms` from the trace start.
fn clean_state(profile: &TraceProfile, ms: f64) -> (f64, [f64; 3]) {
    let tau = ms / 1e3;
    match (profile.activity, profile.impact_time_s) {
        (ActivityKind::Walk, _) => (
            1.0,
            normalize([
                0.15 * (2.0 * PI * 1.8 * tau).sin(),
                0.10 * (2.0 * PI * 0.9 * tau).sin(),
                1.0,
            ]),
        ),
        (ActivityKind::Sit, _) => {
            // Sits down over the first second.
            (1.0, lerp_dir(UPRIGHT, [0.35, 0.0, 1.0], tau - 0.5))
        }
        (ActivityKind::Lie, _) => (1.0, lerp_dir(UPRIGHT, [0.9, 0.1, 0.2], (tau - 0.5) / 2.0)),
        (kind, Some(t)) => {
            let g = profile.geometry(t);
            let lying = kind.lying();
            let turn = (ms - g.dip_start_ms) / (g.spike_start_ms + SPIKE_WIDTH_MS - g.dip_start_ms);
            let dir = lerp_dir(UPRIGHT, lying, turn);
            let m = if ms < g.dip_start_ms || ms >= g.spike_start_ms + SPIKE_WIDTH_MS {
                1.0
            } else if ms < g.spike_start_ms {
                DIP_LEVEL_G
            } else {
                let s = (ms - g.spike_start_ms) / SPIKE_WIDTH_MS;
                1.0 + (profile.impact_peak_g - 1.0) * (PI * s).sin()
            };
            (m, dir)
        }
        (_, None) => unreachable!("validated fall profiles carry an impact time"),
    }
}

/// Generates one waist recording. Sample `i` is at
/// `start_ms + round(i * 1000 / rate)`.
pub fn gen_trace(profile: &TraceProfile) -> Result<SyntheticTrace> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let noise = Normal::new(0.0, profile.noise_std_g).expect("validated std");
    let n = (profile.duration_s * profile.sample_rate_hz).floor() as usize;
    let mut samples = Vec::with_capacity(n);
    let mut clean_smv = Vec::with_capacity(n);
    for i in 0..n {
        let offset = (i as f64 * 1e3 / profile.sample_rate_hz).round();
        let (m, u) = clean_state(profile, offset);
        let values = u
            .iter()
            .map(|c| Some(m * c + noise.sample(&mut rng)))
            .collect();
        samples.push(RawSample {
            timestamp_ms: profile.start_ms + offset as i64,
            values,
        });
        clean_smv.push(m);
    }
    let start = profile.start_ms as f64;
    let (impact_ms, impact_interval_ms) = match profile.impact_time_s {
        Some(t) => {
            let g = profile.geometry(t);
            (
                Some(start + t * 1e3),
                Some((start + g.above_ms.0, start + g.above_ms.1)),
            )
        }
        None => (None, None),
    };
    Ok(SyntheticTrace {
        stream: RawSensorStream::new(
            WAIST_DEVICE,
            AXES.iter().map(|s| s.to_string()).collect(),
            samples,
        )?,
        clean_smv,
        impact_ms,
        impact_interval_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_subjects: u32,
    pub trials_per_activity: u32,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub noise_std_g: f64,
    /// Pure-noise distractor channels on the auxiliary device.
    pub n_noise_channels: usize,
    /// Silence between consecutive traces.
    pub gap_ms: i64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_subjects: 2,
            trials_per_activity: 3,
            seed: 0,
            duration_s: 5.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            noise_std_g: 0.05,
            n_noise_channels: 28,
            gap_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// Waist, wrist and auxiliary device recordings.
    pub streams: Vec<RawSensorStream>,
    pub segments: Vec<Segment>,
    pub ground_truth: Vec<GroundTruth>,
    /// Synchronized, annotated, with SMV features and labels at 2 g.
    pub dataset: CanonicalDataset,
}

/// Noise channel names `noise_01`, `noise_02`, ...
pub fn noise_channel_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("noise_{i:02}")).collect()
}

/// Every subject performs every activity `trials_per_activity` times; traces
/// are laid end to end on one clock, separated by `gap_ms`.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<SyntheticDataset> {
    if spec.n_subjects == 0 || spec.trials_per_activity == 0 {
        return Err(Error::InvalidParameter(
            "need at least one subject and one trial".into(),
        ));
    }
    if spec.gap_ms < 0 {
        return Err(Error::InvalidParameter("gap must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let wrist_noise = Normal::new(0.0, spec.noise_std_g)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let noise_names = noise_channel_names(spec.n_noise_channels);
    let (mut waist, mut wrist, mut aux) = (Vec::new(), Vec::new(), Vec::new());
    let mut segments = Vec::new();
    let mut ground_truth = Vec::new();
    let mut start_ms = 0i64;
    let mut trace_id = 0u32;
    for subject in 1..=spec.n_subjects {
        for activity in ActivityKind::ALL {
            for trial in 1..=spec.trials_per_activity {
                let seed = rng.random::<u64>();
                let mut profile = TraceProfile::adl(activity, spec.duration_s, spec.noise_std_g, seed);
                profile.sample_rate_hz = spec.sample_rate_hz;
                profile.start_ms = start_ms;
                if activity.is_fall() {
                    let margin = 1.0_f64.min(spec.duration_s / 4.0);
                    profile.impact_time_s =
                        Some(rng.random_range(margin + 0.5..spec.duration_s - margin));
                    profile.impact_peak_g = rng.random_range(2.5..6.0);
                    profile.dip_ms = rng.random_range(250.0..350.0);
                }
                let trace = gen_trace(&profile)?;
                let samples = trace.stream.samples();
                for s in samples {
                    waist.push(s.clone());
                    wrist.push(RawSample {
                        timestamp_ms: s.timestamp_ms + WRIST_OFFSET_MS,
                        values: s
                            .values
                            .iter()
                            .map(|v| v.map(|v| WRIST_GAIN * v + wrist_noise.sample(&mut rng)))
                            .collect(),
                    });
                    aux.push(RawSample {
                        timestamp_ms: s.timestamp_ms,
                        values: (0..spec.n_noise_channels)
                            .map(|_| Some(unit.sample(&mut rng)))
                            .collect(),
                    });
                }
                let end_ms = samples.last().map_or(start_ms, |s| s.timestamp_ms);
                segments.push(Segment {
                    trace_id,
                    subject,
                    activity: activity.name().to_string(),
                    trial,
                    start_ms,
                    end_ms,
                });
                if let Some((a, b)) = trace.impact_interval_ms {
                    ground_truth.push(GroundTruth {
                        trace_id,
                        start_ms: a.round() as i64,
                        end_ms: b.round() as i64,
                    });
                }
                trace_id += 1;
                start_ms = end_ms + spec.gap_ms.max(1);
            }
        }
    }
    let axes: Vec<String> = AXES.iter().map(|s| s.to_string()).collect();
    let streams = vec![
        RawSensorStream::new(WAIST_DEVICE, axes.clone(), waist)?,
        RawSensorStream::new(WRIST_DEVICE, axes, wrist)?,
        RawSensorStream::new(AUX_DEVICE, noise_names, aux)?,
    ];
    let dataset = build_dataset(&streams, &segments, DEFAULT_SYNC_TOLERANCE_MS, DEFAULT_BETA_G)?;
    Ok(SyntheticDataset {
        streams,
        segments,
        ground_truth,
        dataset,
    })
}

/// Synchronizes on the waist clock, annotates segments, appends SMV features
/// and labels rows at `beta`.
pub fn build_dataset(
    streams: &[RawSensorStream],
    segments: &[Segment],
    tolerance_ms: i64,
    beta: f64,
) -> Result<CanonicalDataset> {
    let synced = synchronize(streams, WAIST_DEVICE, tolerance_ms)?;
    let annotated = annotate_segments(&synced, segments);
    let series = smv_series(&annotated, SMV_AXES)?;
    let featured = derive_smv_features(&annotated, &series)?;
    label_impacts(&featured, &series, &DetectorConfig::with_beta(beta))
}

/// `trace_id,start_ms,end_ms`
pub fn write_ground_truth(path: impl AsRef<Path>, rows: &[GroundTruth]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["trace_id", "start_ms", "end_ms"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Slow reference implementations sharing no code with the learners.
pub mod oracle {
    /// Ties within this are treated as equal by [`oracle_greedy_tree`].
    pub const TIE_TOLERANCE: f64 = 1e-12;

    /// Majority label of the `k` nearest rows after a full stable sort by
    /// Euclidean distance.
    pub fn oracle_knn(train_x: &[Vec<f64>], train_y: &[u8], query: &[f64], k: usize) -> u8 {
        let mut d: Vec<(f64, u8)> = train_x
            .iter()
            .zip(train_y)
            .map(|(r, &l)| {
                let s: f64 = r.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum();
                (s.sqrt(), l)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances"));
        let pos = d.iter().take(k).filter(|p| p.1 == 1).count();
        u8::from(2 * pos > k)
    }

    /// Fraction of (positive, negative) pairs ordered correctly, ties
    /// counting one half.
    pub fn oracle_auc(y: &[u8], scores: &[f64]) -> f64 {
        let mut good = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        good += 1.0;
                    } else if scores[i] == scores[j] {
                        good += 0.5;
                    }
                }
            }
        }
        good / pairs
    }

    fn gini(labels: &[u8]) -> f64 {
        let n = labels.len() as f64;
        let p = labels.iter().filter(|&&l| l == 1).count() as f64 / n;
        1.0 - p * p - (1.0 - p) * (1.0 - p)
    }

    enum Tree {
        Leaf(f64),
        Split(usize, f64, Box<Tree>, Box<Tree>),
    }

    fn build(x: &[Vec<f64>], y: &[u8]) -> Tree {
        let parent = gini(y);
        let n = y.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            vals.dedup();
            for w in vals.windows(2) {
                let t = w[0] + (w[1] - w[0]) / 2.0;
                let left: Vec<u8> = x.iter().zip(y).filter(|(r, _)| r[f] <= t).map(|p| *p.1).collect();
                let right: Vec<u8> = x.iter().zip(y).filter(|(r, _)| r[f] > t).map(|p| *p.1).collect();
                let child = (left.len() as f64 * gini(&left) + right.len() as f64 * gini(&right)) / n;
                let gain = parent - child;
                let better = match best {
                    None => true,
                    Some((g, ..)) => gain > g + TIE_TOLERANCE,
                };
                if gain > TIE_TOLERANCE && better {
                    best = Some((gain, f, t));
                }
            }
        }
        match best {
            None => Tree::Leaf(y.iter().filter(|&&l| l == 1).count() as f64 / n),
            Some((_, f, t)) => {
                let (mut lx, mut ly, mut rx, mut ry) = (vec![], vec![], vec![], vec![]);
                for (r, &l) in x.iter().zip(y) {
                    if r[f] <= t {
                        lx.push(r.clone());
                        ly.push(l);
                    } else {
                        rx.push(r.clone());
                        ry.push(l);
                    }
                }
                Tree::Split(f, t, Box::new(build(&lx, &ly)), Box::new(build(&rx, &ry)))
            }
        }
    }

    /// Grows an unlimited-depth Gini tree by exhaustive enumeration of every
    /// feature and midpoint (first best wins), then labels `queries`.
    pub fn oracle_greedy_tree(x: &[Vec<f64>], y: &[u8], queries: &[Vec<f64>]) -> Vec<u8> {
        let tree = build(x, y);
        queries
            .iter()
            .map(|q| {
                let mut node = &tree;
                loop {
                    match node {
                        Tree::Leaf(p) => return u8::from(*p > 0.5),
                        Tree::Split(f, t, l, r) => node = if q[*f] <= *t { l } else { r },
                    }
                }
            })
            .collect()
    }

    /// Out-of-bag error recounted from per-tree votes: `votes[t][i]` is tree
    /// `t`'s label for row `i`, `in_bag[t][i]` whether row `i` trained it.
    /// Majority ties count as label 0. `None` if no row is ever out of bag.
    pub fn oracle_oob_error(votes: &[Vec<u8>], in_bag: &[Vec<bool>], y: &[u8]) -> Option<f64> {
        let mut wrong = 0usize;
        let mut counted = 0usize;
        for (i, &label) in y.iter().enumerate() {
            let mut pos = 0;
            let mut total = 0;
            for (t, v) in votes.iter().enumerate() {
                if !in_bag[t][i] {
                    total += 1;
                    pos += usize::from(v[i] == 1);
                }
            }
            if total > 0 {
                counted += 1;
                let pred = u8::from(2 * pos > total);
                wrong += usize::from(pred != label);
            }
        }
        (counted > 0).then(|| wrong as f64 / counted as f64)
    }
}
