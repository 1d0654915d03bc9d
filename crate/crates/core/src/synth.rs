//! Ground-truth CSI from a multipath channel model.
//!
//! Each path contributes `alpha * exp(-j (phi + 2 pi f tau))` to the channel
//! frequency response. On top of the static response the generator applies,
//! in order: a per-sample gain jitter `(1 + eps_t)`, circular complex
//! Gaussian noise, and the hardware phase artifacts `cfo_offset + sfo_slope * k`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttackRecord, CsiMatrix, Dataset, Hand, SubjectLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    /// Linear gain, > 0.
    pub gain: f64,
    /// Radians.
    pub phase: f64,
    /// Seconds, >= 0.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub paths: Vec<PathComponent>,
    /// Standard deviation of each of the real and imaginary noise components.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Constant phase offset, radians.
    #[serde(default)]
    pub cfo_offset: f64,
    /// Linear phase slope, radians per subcarrier index.
    #[serde(default)]
    pub sfo_slope: f64,
    /// Relative gain jitter per time sample.
    #[serde(default)]
    pub temporal_jitter_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelSpec {
    /// A noiseless, artifact-free channel.
    pub fn from_paths(paths: Vec<PathComponent>) -> Self {
        Self {
            paths,
            noise_sigma: 0.0,
            cfo_offset: 0.0,
            sfo_slope: 0.0,
            temporal_jitter_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::InvalidSpec("a channel needs at least one path".into()));
        }
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.gain > 0.0 && p.gain.is_finite()) {
                return Err(Error::InvalidSpec(format!("path {i}: gain must be positive and finite")));
            }
            if !(p.delay >= 0.0 && p.delay.is_finite()) || !p.phase.is_finite() {
                return Err(Error::InvalidSpec(format!("path {i}: delay must be >= 0 and phase finite")));
            }
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("temporal_jitter_sigma", self.temporal_jitter_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be >= 0")));
            }
        }
        if !self.cfo_offset.is_finite() || !self.sfo_slope.is_finite() {
            return Err(Error::InvalidSpec("cfo_offset and sfo_slope must be finite".into()));
        }
        Ok(())
    }

    /// Noiseless frequency response at one frequency.
    pub fn response(&self, freq: f64) -> Complex64 {
        self.paths
            .iter()
            .map(|p| Complex64::from_polar(p.gain, -(p.phase + 2.0 * PI * freq * p.delay)))
            .sum()
    }
}

/// SplitMix64 finalizer, used to derive independent per-stream seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Renders one `K x T` acquisition of `spec`. Deterministic in `spec.seed`.
pub fn synthesize_matrix(spec: &ChannelSpec, subcarriers: usize, samples: usize, freqs: &[f64]) -> Result<CsiMatrix> {
    spec.validate()?;
    if subcarriers < 2 || samples < 2 {
        return Err(Error::InvalidSpec(format!(
            "need K >= 2 and T >= 2, got {subcarriers}x{samples}"
        )));
    }
    if freqs.len() != subcarriers {
        return Err(Error::InvalidSpec(format!(
            "{} frequencies for {subcarriers} subcarriers",
            freqs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter: Vec<f64> = if spec.temporal_jitter_sigma > 0.0 {
        let n = Normal::new(0.0, spec.temporal_jitter_sigma).expect("sigma validated");
        (0..samples).map(|_| 1.0 + n.sample(&mut rng)).collect()
    } else {
        vec![1.0; samples]
    };
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));
    let static_response: Vec<Complex64> = freqs.iter().map(|&f| spec.response(f)).collect();
    let has_artifacts = spec.cfo_offset != 0.0 || spec.sfo_slope != 0.0;

    let mut values = Vec::with_capacity(subcarriers * samples);
    for (k, h) in static_response.iter().enumerate() {
        let rot = Complex64::from_polar(1.0, spec.cfo_offset + spec.sfo_slope * k as f64);
        for &g in &jitter {
            let mut v = h * g;
            if let Some(n) = &noise {
                v += Complex64::new(n.sample(&mut rng), n.sample(&mut rng));
            }
            if has_artifacts {
                v *= rot;
            }
            values.push(v);
        }
    }
    CsiMatrix::new(subcarriers, samples, freqs.to_vec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attack {
    #[default]
    None,
    /// Re-renders a victim acquisition and applies extra gain jitter.
    Replay { jitter_sigma: f64 },
    /// Impersonates the victim with path parameters perturbed by `fraction`.
    Mimicry { fraction: f64 },
    /// Victim channel with a gain ramp `1 + slope * t`.
    Drift { slope_per_sample: f64 },
}

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::Replay { .. } => "replay",
            Attack::Mimicry { .. } => "mimicry",
            Attack::Drift { .. } => "drift",
        }
    }

    fn parameter(&self) -> f64 {
        match *self {
            Attack::None => 0.0,
            Attack::Replay { jitter_sigma } => jitter_sigma,
            Attack::Mimicry { fraction } => fraction,
            Attack::Drift { slope_per_sample } => slope_per_sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub subject_id: String,
    pub channel: ChannelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub subjects: Vec<SubjectSpec>,
    pub samples_per_subject: usize,
    /// Time samples per acquisition.
    pub samples: usize,
    pub subcarriers: usize,
    pub freq_start: f64,
    pub freq_step: f64,
    #[serde(default = "default_hand")]
    pub hand: Hand,
    #[serde(default)]
    pub attack: Attack,
    /// Defaults to the first subject.
    #[serde(default)]
    pub attack_victim: Option<String>,
    /// Number of attack acquisitions; defaults to `samples_per_subject`.
    #[serde(default)]
    pub attack_samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_hand() -> Hand {
    Hand::Right
}

const REPLAY_STREAM: u64 = 1 << 32;
const MIMICRY_STREAM: u64 = 2 << 32;
const DRIFT_STREAM: u64 = 3 << 32;

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects.len() < 2 {
            return Err(Error::InvalidSpec("a scenario needs at least 2 subjects".into()));
        }
        if self.samples_per_subject < 1 {
            return Err(Error::InvalidSpec("samples_per_subject must be >= 1".into()));
        }
        if self.samples < 2 || self.subcarriers < 2 {
            return Err(Error::InvalidSpec("need at least 2 samples and 2 subcarriers".into()));
        }
        if !(self.freq_step > 0.0) || !self.freq_start.is_finite() {
            return Err(Error::InvalidSpec("freq_step must be positive".into()));
        }
        let mut ids: Vec<&str> = self.subjects.iter().map(|s| s.subject_id.as_str()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidSpec("subject ids must be unique and non-empty".into()));
        }
        for s in &self.subjects {
            s.channel
                .validate()
                .map_err(|e| Error::InvalidSpec(format!("subject {}: {e}", s.subject_id)))?;
        }
        let p = self.attack.parameter();
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidSpec("attack parameters must be >= 0".into()));
        }
        if let Attack::Mimicry { fraction } = self.attack {
            if fraction >= 1.0 {
                return Err(Error::InvalidSpec("mimicry fraction must be < 1".into()));
            }
        }
        if let Some(v) = &self.attack_victim {
            if !self.subjects.iter().any(|s| &s.subject_id == v) {
                return Err(Error::InvalidSpec(format!("attack victim '{v}' is not a subject")));
            }
        }
        Ok(())
    }

    pub fn freqs(&self) -> Vec<f64> {
        CsiMatrix::uniform_freqs(self.freq_start, self.freq_step, self.subcarriers)
    }

    fn victim(&self) -> &SubjectSpec {
        match &self.attack_victim {
            Some(v) => self.subjects.iter().find(|s| &s.subject_id == v).expect("validated"),
            None => &self.subjects[0],
        }
    }

    fn acquisition(&self, channel: &ChannelSpec, stream: u64) -> Result<CsiMatrix> {
        let mut spec = channel.clone();
        spec.seed = derive_seed(channel.seed, stream);
        synthesize_matrix(&spec, self.subcarriers, self.samples, &self.freqs())
    }
}

/// Applies per-path relative perturbations drawn from `rng`, scaled by `fraction`.
fn perturb_channel(channel: &ChannelSpec, fraction: f64, rng: &mut ChaCha8Rng) -> ChannelSpec {
    let mut out = channel.clone();
    for p in &mut out.paths {
        let (a, b, c): (f64, f64, f64) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        p.gain *= 1.0 + fraction * a;
        p.phase += fraction * b * PI;
        p.delay *= 1.0 + fraction * c;
    }
    out
}

/// Renders every subject's acquisitions, then the configured attack stream.
pub fn generate_dataset(s: &ScenarioSpec) -> Result<Dataset> {
    s.validate()?;
    let mut records = Vec::with_capacity(s.subjects.len() * s.samples_per_subject);
    for subj in &s.subjects {
        for i in 0..s.samples_per_subject {
            let m = s.acquisition(&subj.channel, i as u64)?;
            let label = SubjectLabel::new(subj.subject_id.clone(), i as u32, s.hand)?;
            records.push((m, label));
        }
    }
    let mut d = Dataset::new(records);

    let victim = s.victim();
    let n_attack = s.attack_samples.unwrap_or(s.samples_per_subject);
    for i in 0..n_attack {
        let i64_ = i as u64;
        let matrix = match s.attack {
            Attack::None => break,
            Attack::Replay { jitter_sigma } => {
                let mut m = s.acquisition(&victim.channel, i64_)?;
                if jitter_sigma > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, REPLAY_STREAM + i64_));
                    let n = Normal::new(0.0, jitter_sigma).expect("validated");
                    let gains: Vec<f64> = (0..s.samples).map(|_| 1.0 + n.sample(&mut rng)).collect();
                    for k in 0..m.subcarriers() {
                        for (v, g) in m.row_mut(k).iter_mut().zip(&gains) {
                            *v *= g;
                        }
                    }
                }
                m
            }
            Attack::Mimicry { fraction } => {
                // Same perturbation direction for every fraction, so smaller
                // fractions move the impostor monotonically toward the victim.
                let mut dir_rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, MIMICRY_STREAM));
                let spec = perturb_channel(&victim.channel, fraction, &mut dir_rng);
                s.acquisition(&spec, MIMICRY_STREAM + i64_)?
            }
            Attack::Drift { slope_per_sample } => {
                let mut m = s.acquisition(&victim.channel, DRIFT_STREAM + i64_)?;
                for k in 0..m.subcarriers() {
                    for (t, v) in m.row_mut(k).iter_mut().enumerate() {
                        *v *= 1.0 + slope_per_sample * t as f64;
                    }
                }
                m
            }
        };
        d.attacks.push(AttackRecord {
            matrix,
            victim: victim.subject_id.clone(),
            kind: s.attack.name().to_string(),
            sample_index: i as u32,
        });
    }
    Ok(d)
}

/// Random subject population used by config files instead of listing every path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectGenerator {
    pub count: usize,
    pub paths: usize,
    pub gain_range: [f64; 2],
    /// Nanoseconds.
    pub delay_range_ns: [f64; 2],
    pub noise_sigma: f64,
    pub temporal_jitter_sigma: f64,
    pub cfo_range: [f64; 2],
    pub sfo_range: [f64; 2],
    pub id_prefix: String,
}

impl Default for SubjectGenerator {
    fn default() -> Self {
        Self {
            count: 20,
            paths: 3,
            gain_range: [0.3, 1.0],
            delay_range_ns: [5.0, 150.0],
            noise_sigma: 0.05,
            temporal_jitter_sigma: 0.02,
            cfo_range: [-PI, PI],
            sfo_range: [-0.05, 0.05],
            id_prefix: "S".into(),
        }
    }
}

impl SubjectGenerator {
    /// `count = 0` generates nobody, which lets a config file that lists its
    /// subjects switch the generator off.
    pub fn generate(&self, seed: u64) -> Result<Vec<SubjectSpec>> {
        if self.count == 0 {
            return Ok(Vec::new());
        }
        if self.paths < 1 {
            return Err(Error::InvalidSpec("generator needs paths >= 1".into()));
        }
        for (name, r) in [
            ("gain_range", self.gain_range),
            ("delay_range_ns", self.delay_range_ns),
            ("cfo_range", self.cfo_range),
            ("sfo_range", self.sfo_range),
        ] {
            if !(r[0] <= r[1]) {
                return Err(Error::InvalidSpec(format!("{name} must be [lo, hi] with lo <= hi")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5b1ec7));
        let uniform = |rng: &mut ChaCha8Rng, r: [f64; 2]| {
            if r[0] == r[1] {
                r[0]
            } else {
                rng.random_range(r[0]..r[1])
            }
        };
        let width = (self.count - 1).to_string().len().max(2);
        (0..self.count)
            .map(|i| {
                let paths = (0..self.paths)
                    .map(|_| PathComponent {
                        gain: uniform(&mut rng, self.gain_range),
                        phase: rng.random_range(-PI..PI),
                        delay: uniform(&mut rng, self.delay_range_ns) * 1e-9,
                    })
                    .collect();
                let channel = ChannelSpec {
                    paths,
                    noise_sigma: self.noise_sigma,
                    cfo_offset: uniform(&mut rng, self.cfo_range),
                    sfo_slope: uniform(&mut rng, self.sfo_range),
                    temporal_jitter_sigma: self.temporal_jitter_sigma,
                    seed: derive_seed(seed, i as u64 + 1),
                };
                channel.validate()?;
                Ok(SubjectSpec {
                    subject_id: format!("{}{:0width$}", self.id_prefix, i),
                    channel,
                })
            })
            .collect()
    }
}

/// File form of a scenario: explicit subjects, a generator, or both
/// (explicit subjects come first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub samples_per_subject: usize,
    pub samples: usize,
    pub subcarriers: usize,
    pub freq_start: f64,
    pub freq_step: f64,
    pub hand: Hand,
    pub subjects: Vec<SubjectSpec>,
    pub generate: Option<SubjectGenerator>,
    pub attack: Attack,
    pub attack_victim: Option<String>,
    pub attack_samples: Option<usize>,
}

impl Default for ScenarioConfig {
    /// The bundled 20-subject scenario: 3-path channels, 128 subcarriers on a
    /// 40 MHz channel centred at 5180 MHz, five 500-sample acquisitions each.
    fn default() -> Self {
        Self {
            seed: 2024,
            samples_per_subject: 5,
            samples: 500,
            subcarriers: 128,
            freq_start: 5.18e9 - 64.0 * 312_500.0,
            freq_step: 312_500.0,
            hand: Hand::Right,
            subjects: Vec::new(),
            generate: Some(SubjectGenerator::default()),
            attack: Attack::None,
            attack_victim: None,
            attack_samples: None,
        }
    }
}

impl ScenarioConfig {
    pub fn bundled() -> Self {
        Self::default()
    }

    pub fn into_spec(self) -> Result<ScenarioSpec> {
        let mut subjects = self.subjects;
        if let Some(g) = &self.generate {
            subjects.extend(g.generate(self.seed)?);
        }
        let spec = ScenarioSpec {
            subjects,
            samples_per_subject: self.samples_per_subject,
            samples: self.samples,
            subcarriers: self.subcarriers,
            freq_start: self.freq_start,
            freq_step: self.freq_step,
            hand: self.hand,
            attack: self.attack,
            attack_victim: self.attack_victim,
            attack_samples: self.attack_samples,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}
