//! Training-free feature maps on epochs and the z-score transform.

mod io;

pub use io::{read_epochs, read_feature_csv, write_feature_csv};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};

/// Stimulus class of an epoch or feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NonTarget,
    Target,
}

impl Label {
    /// File encoding: 0, 1, or −1 for unknown.
    pub fn encode(label: Option<Label>) -> i8 {
        match label {
            Some(Label::NonTarget) => 0,
            Some(Label::Target) => 1,
            None => -1,
        }
    }

    pub fn decode(code: i64) -> Result<Option<Label>> {
        match code {
            0 => Ok(Some(Label::NonTarget)),
            1 => Ok(Some(Label::Target)),
            -1 => Ok(None),
            other => Err(Error::InvalidData(format!("label must be 0, 1 or -1, got {other}"))),
        }
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }
}

/// One stimulus-locked window of multichannel signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub id: String,
    /// Channel-major samples: `samples[channel][time]`.
    samples: Vec<Vec<f64>>,
    sample_rate: f64,
    pub label: Option<Label>,
}

impl Epoch {
    pub fn new(
        id: impl Into<String>,
        samples: Vec<Vec<f64>>,
        sample_rate: f64,
        label: Option<Label>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidData("epoch needs at least one channel".into()));
        }
        let n = samples[0].len();
        if n < 2 {
            return Err(Error::InvalidData("epoch needs at least two time samples".into()));
        }
        if samples.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidData("channels have different lengths".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("epoch contains non-finite samples".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidData(format!("invalid sample rate {sample_rate}")));
        }
        Ok(Epoch {
            id: id.into(),
            samples,
            sample_rate,
            label,
        })
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn duration_ms(&self) -> f64 {
        (self.len() - 1) as f64 / self.sample_rate * 1000.0
    }
}

/// How channels collapse into one signal before a feature is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelReduction {
    #[default]
    Average,
    Channel(usize),
}

/// Time window in milliseconds after onset; `None` means the whole epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub window_ms: Option<(f64, f64)>,
    pub channels: ChannelReduction,
}

// slack for window edges that fall on sample times
const EDGE_SLACK_MS: f64 = 1e-9;

fn reduced_window(e: &Epoch, opts: &FeatureOptions) -> Result<Vec<f64>> {
    let (start, end) = opts.window_ms.unwrap_or((0.0, e.duration_ms()));
    if !(start <= end) || start < -EDGE_SLACK_MS || end > e.duration_ms() + EDGE_SLACK_MS {
        return Err(invalid(format!(
            "window [{start}, {end}] ms is outside the {:.3} ms epoch",
            e.duration_ms()
        )));
    }
    let ms_per_sample = 1000.0 / e.sample_rate;
    let signal: Box<dyn Fn(usize) -> f64> = match opts.channels {
        ChannelReduction::Average => {
            let m = e.channels() as f64;
            Box::new(move |t| e.samples.iter().map(|c| c[t]).sum::<f64>() / m)
        }
        ChannelReduction::Channel(c) => {
            let ch = e
                .samples
                .get(c)
                .ok_or_else(|| invalid(format!("channel {c} out of range")))?;
            Box::new(move |t| ch[t])
        }
    };
    let out: Vec<f64> = (0..e.len())
        .filter(|&t| {
            let ms = t as f64 * ms_per_sample;
            ms >= start - EDGE_SLACK_MS && ms <= end + EDGE_SLACK_MS
        })
        .map(signal)
        .collect();
    if out.is_empty() {
        return Err(invalid(format!("window [{start}, {end}] ms contains no samples")));
    }
    Ok(out)
}

/// Maximum of the reduced signal inside the window.
pub fn peak_amplitude(e: &Epoch, opts: &FeatureOptions) -> Result<f64> {
    Ok(reduced_window(e, opts)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Trapezoidal integral of `|signal|` over the window, in value·seconds.
pub fn auc(e: &Epoch, opts: &FeatureOptions) -> Result<f64> {
    let s = reduced_window(e, opts)?;
    if s.len() < 2 {
        return Err(invalid("AUC window needs at least two samples"));
    }
    let dt = 1.0 / e.sample_rate;
    Ok(s.windows(2)
        .map(|w| 0.5 * (w[0].abs() + w[1].abs()) * dt)
        .sum())
}

/// The training-free feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    PeakAmplitude,
    Auc,
}

impl FeatureMap {
    pub fn apply(self, e: &Epoch, opts: &FeatureOptions) -> Result<f64> {
        match self {
            FeatureMap::PeakAmplitude => peak_amplitude(e, opts),
            FeatureMap::Auc => auc(e, opts),
        }
    }
}

impl std::str::FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak" | "peak_amplitude" => Ok(FeatureMap::PeakAmplitude),
            "auc" => Ok(FeatureMap::Auc),
            other => Err(invalid(format!("unknown feature map '{other}'"))),
        }
    }
}

/// A feature vector extracted from one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub epoch_id: String,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}

pub fn extract(e: &Epoch, maps: &[FeatureMap], opts: &FeatureOptions) -> Result<FeatureRecord> {
    let values = maps
        .iter()
        .map(|m| m.apply(e, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureRecord {
        epoch_id: e.id.clone(),
        values,
        label: e.label,
    })
}

/// Standard normal quantile `φ⁻¹(p)` for `0 < p < 1`.
///
/// Acklam's rational approximation followed by one Halley step against the
/// complementary error function. The upper half is mapped onto the lower
/// half through `1 − p`, which is exact for `p ≥ 0.5`.
pub fn zscore_transform(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("z-score is undefined for p = {p}")));
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

/// Like [`zscore_transform`] but clamps `p` into `[eps, 1 − eps]` first.
pub fn zscore_transform_clamped(p: f64, eps: f64) -> Result<f64> {
    if p.is_nan() {
        return Err(invalid("z-score of NaN"));
    }
    zscore_transform(p.clamp(eps, 1.0 - eps))
}

fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    // Halley refinement
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    if u.is_finite() {
        x - u / (1.0 + 0.5 * x * u)
    } else {
        x
    }
}
