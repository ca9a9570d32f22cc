//! Anchor-view guided sampling: noise schedules, latent replacement and the
//! sampling loop, written against an abstract denoiser.
//!
//! During the first `replace_steps` iterations the latent cells marked by
//! the downsampled observation mask are overwritten with a noised copy of
//! the guidance latent before the denoiser runs:
//!
//! ```text
//! z_t <- m * zbar_t + (1 - m) * z_t
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Image, Plane};
use crate::par;
use crate::rng::NormalStream;

/// Tag range reserved for sampling noise, disjoint from per-frame noise tags.
pub const SAMPLING_TAG_BASE: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `z_t = (1 - tau) z_0 + tau eps`
    #[default]
    RectifiedFlow,
    /// `z_t = sqrt(1 - tau^2) z_0 + tau eps`
    VariancePreserving,
}

/// Noise levels `tau_t = t / T` for `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    levels: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let levels = (0..=steps).map(|t| t as f64 / steps as f64).collect();
        Ok(Self { kind, levels })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// `T`.
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn tau(&self, t: usize) -> Result<f64> {
        self.levels
            .get(t)
            .copied()
            .ok_or_else(|| Error::Index(format!("timestep {t} outside 0..={}", self.steps())))
    }

    /// Signal coefficient at `t`.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        let tau = self.tau(t)?;
        Ok(match self.kind {
            ScheduleKind::RectifiedFlow => 1.0 - tau,
            ScheduleKind::VariancePreserving => (1.0 - tau * tau).sqrt(),
        })
    }

    /// Noise coefficient at `t`.
    pub fn sigma(&self, t: usize) -> Result<f64> {
        self.tau(t)
    }
}

/// Latent values `height x width x channels` at a schedule level.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub level: usize,
}

impl LatentGrid {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>, level: usize) -> Result<Self> {
        if values.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "latent {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("latent value {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
            level,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            values: vec![0.0; width * height * channels],
            level: 0,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            values: vec![value; width * height * channels],
            ..Self::zeros(width, height, channels)
        }
    }

    /// Seeded standard normal latent.
    pub fn gaussian(width: usize, height: usize, channels: usize, seed: u64, tag: u64) -> Self {
        let stream = NormalStream::new(seed, tag);
        let values = par::flat_map_rows(height, |y| {
            let mut row = Vec::with_capacity(width * channels);
            for x in 0..width {
                let index = (y * width + x) as u32;
                for lane in 0..channels.div_ceil(2) {
                    let (a, b) = stream.pair(index, lane as u32);
                    row.push(a);
                    if 2 * lane + 1 < channels {
                        row.push(b);
                    }
                }
            }
            row
        });
        Self {
            values,
            ..Self::zeros(width, height, channels)
        }
    }

    pub fn same_dims(&self, other: &LatentGrid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    fn check_dims(&self, other: &LatentGrid) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "latent {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    #[inline]
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let c = self.channels;
        &self.values[(y * self.width + x) * c..][..c]
    }

    /// Largest absolute difference, restricted to `mask` cells if given.
    pub fn max_abs_diff(&self, other: &LatentGrid, mask: Option<&Plane<bool>>) -> f64 {
        let c = self.channels;
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(i, _)| mask.map(|m| m.data[i / c]).unwrap_or(true))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Observation mask at latent resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMask {
    pub mask: Plane<bool>,
    pub factor: usize,
    pub threshold: f64,
    pub source_width: usize,
    pub source_height: usize,
}

impl LatentMask {
    pub fn full(width: usize, height: usize) -> Self {
        Self::from_plane(Plane::filled(width, height, true))
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_plane(Plane::filled(width, height, false))
    }

    /// Mask given directly at latent resolution.
    pub fn from_plane(mask: Plane<bool>) -> Self {
        Self {
            source_width: mask.width,
            source_height: mask.height,
            mask,
            factor: 1,
            threshold: 1.0,
        }
    }

    pub fn fraction(&self) -> f64 {
        self.mask.count() as f64 / self.mask.data.len().max(1) as f64
    }
}

/// A cell is set when at least `threshold` of its `factor x factor` block
/// is observed.
pub fn downsample_mask(mask: &Plane<bool>, factor: usize, threshold: f64) -> Result<LatentMask> {
    if factor == 0 {
        return Err(Error::Config("mask factor must be at least 1".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("mask threshold {threshold} outside (0, 1]")));
    }
    if !mask.width.is_multiple_of(factor) || !mask.height.is_multiple_of(factor) {
        return Err(Error::Shape(format!(
            "mask {}x{} is not divisible by {factor}",
            mask.width, mask.height
        )));
    }
    let (lw, lh) = (mask.width / factor, mask.height / factor);
    let area = (factor * factor) as f64;
    let data = par::flat_map_rows(lh, |by| {
        (0..lw)
            .map(|bx| {
                let mut n = 0usize;
                for y in by * factor..(by + 1) * factor {
                    for x in bx * factor..(bx + 1) * factor {
                        n += *mask.get(x, y) as usize;
                    }
                }
                n as f64 / area >= threshold
            })
            .collect()
    });
    Ok(LatentMask {
        mask: Plane::from_vec(lw, lh, data)?,
        factor,
        threshold,
        source_width: mask.width,
        source_height: mask.height,
    })
}

/// Stand-in for an image autoencoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Codec {
    Identity,
    /// Block mean; decoding broadcasts each mean over its block.
    BlockMean { block: usize },
}

impl Codec {
    pub fn factor(&self) -> usize {
        match *self {
            Codec::Identity => 1,
            Codec::BlockMean { block } => block,
        }
    }

    pub fn encode(&self, image: &Image) -> Result<LatentGrid> {
        let s = self.factor();
        if s == 0 {
            return Err(Error::Config("codec block must be at least 1".into()));
        }
        if !image.width.is_multiple_of(s) || !image.height.is_multiple_of(s) {
            return Err(Error::Shape(format!(
                "image {}x{} is not divisible by block {s}",
                image.width, image.height
            )));
        }
        let (lw, lh, c) = (image.width / s, image.height / s, image.channels);
        if s == 1 {
            let values = image.data.iter().map(|&v| v as f64).collect();
            return LatentGrid::new(lw, lh, c, values, 0);
        }
        let area = (s * s) as f64;
        let values = par::flat_map_rows(lh, |by| {
            let mut row = vec![0.0f64; lw * c];
            for y in by * s..(by + 1) * s {
                for bx in 0..lw {
                    for x in bx * s..(bx + 1) * s {
                        for (a, v) in row[bx * c..(bx + 1) * c].iter_mut().zip(image.pixel(x, y)) {
                            *a += *v as f64;
                        }
                    }
                }
            }
            row.iter_mut().for_each(|a| *a /= area);
            row
        });
        LatentGrid::new(lw, lh, c, values, 0)
    }

    pub fn decode(&self, latent: &LatentGrid) -> Result<Image> {
        let s = self.factor();
        if s == 0 {
            return Err(Error::Config("codec block must be at least 1".into()));
        }
        let (w, h, c) = (latent.width * s, latent.height * s, latent.channels);
        Ok(Image::from_fn(w, h, c, |x, y, ch| {
            latent.cell(x / s, y / s)[ch] as f32
        }))
    }
}

/// Noises a clean latent to level `t`.
pub fn forward_noise(
    z0: &LatentGrid,
    t: usize,
    eps: &LatentGrid,
    schedule: &NoiseSchedule,
) -> Result<LatentGrid> {
    z0.check_dims(eps)?;
    let (a, s) = (schedule.alpha(t)?, schedule.sigma(t)?);
    let values = z0
        .values
        .iter()
        .zip(&eps.values)
        .map(|(x, e)| a * x + s * e)
        .collect();
    Ok(LatentGrid {
        values,
        level: t,
        ..z0.clone()
    })
}

/// `m * zbar + (1 - m) * z`, evaluated literally per element.
pub fn replace_latent(z: &LatentGrid, zbar: &LatentGrid, mask: &LatentMask) -> Result<LatentGrid> {
    z.check_dims(zbar)?;
    if mask.mask.width != z.width || mask.mask.height != z.height {
        return Err(Error::Shape(format!(
            "mask {}x{} vs latent {}x{}",
            mask.mask.width, mask.mask.height, z.width, z.height
        )));
    }
    let c = z.channels;
    let values = z
        .values
        .iter()
        .zip(&zbar.values)
        .enumerate()
        .map(|(i, (&zt, &zb))| {
            let m = if mask.mask.data[i / c] { 1.0 } else { 0.0 };
            m * zb + (1.0 - m) * zt
        })
        .collect();
    Ok(LatentGrid {
        values,
        ..z.clone()
    })
}

/// One reverse step `z_t -> z_{t-1}`.
pub trait Denoiser {
    fn step(&mut self, z: &LatentGrid, t: usize, schedule: &NoiseSchedule) -> Result<LatentGrid>;
}

fn check_step(z: &LatentGrid, t: usize, schedule: &NoiseSchedule) -> Result<()> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::Index(format!("denoise step t={t} outside 1..={}", schedule.steps())));
    }
    if z.level != t {
        return Err(Error::Schema(format!("latent at level {} stepped as t={t}", z.level)));
    }
    Ok(())
}

/// Analytic denoiser that follows the schedule path toward `target`.
///
/// The noise is read off the pure-noise input at `t = T` and kept. At later
/// steps the clean estimate is recovered from the input under that noise, so
/// inputs lying on a schedule path with the same noise are stepped exactly
/// along their own path. At `t = T` the clean estimate is `target`.
#[derive(Clone, Debug)]
pub struct OracleDenoiser {
    target: LatentGrid,
    noise: Option<Vec<f64>>,
}

impl OracleDenoiser {
    pub fn new(target: LatentGrid) -> Self {
        Self { target, noise: None }
    }

    pub fn target(&self) -> &LatentGrid {
        &self.target
    }
}

impl Denoiser for OracleDenoiser {
    fn step(&mut self, z: &LatentGrid, t: usize, schedule: &NoiseSchedule) -> Result<LatentGrid> {
        check_step(z, t, schedule)?;
        z.check_dims(&self.target)?;
        let (a_prev, s_prev) = (schedule.alpha(t - 1)?, schedule.sigma(t - 1)?);
        let values: Vec<f64> = if t == schedule.steps() {
            self.noise = Some(z.values.clone());
            z.values
                .iter()
                .zip(&self.target.values)
                .map(|(e, x)| a_prev * x + s_prev * e)
                .collect()
        } else {
            let noise = self.noise.as_ref().ok_or_else(|| {
                Error::Schema("oracle denoiser must start from pure noise".into())
            })?;
            let (a, s) = (schedule.alpha(t)?, schedule.sigma(t)?);
            z.values
                .iter()
                .zip(noise)
                .map(|(zt, e)| {
                    let x = (zt - s * e) / a;
                    a_prev * x + s_prev * e
                })
                .collect()
        };
        LatentGrid::new(z.width, z.height, z.channels, values, t - 1)
    }
}

/// Deterministic sampler that always predicts `target` as the clean latent
/// and re-derives the noise from the current input.
#[derive(Clone, Debug)]
pub struct TargetDenoiser {
    target: LatentGrid,
}

impl TargetDenoiser {
    pub fn new(target: LatentGrid) -> Self {
        Self { target }
    }
}

impl Denoiser for TargetDenoiser {
    fn step(&mut self, z: &LatentGrid, t: usize, schedule: &NoiseSchedule) -> Result<LatentGrid> {
        check_step(z, t, schedule)?;
        z.check_dims(&self.target)?;
        let (a, s) = (schedule.alpha(t)?, schedule.sigma(t)?);
        let (a_prev, s_prev) = (schedule.alpha(t - 1)?, schedule.sigma(t - 1)?);
        let values = z
            .values
            .iter()
            .zip(&self.target.values)
            .map(|(zt, x)| {
                let e = (zt - a * x) / s;
                a_prev * x + s_prev * e
            })
            .collect();
        LatentGrid::new(z.width, z.height, z.channels, values, t - 1)
    }
}

/// Which noise re-noises the guidance latent at a replacement step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementNoise {
    /// One noise draw shared with the initial latent.
    #[default]
    Shared,
    /// An independent seeded draw for every step.
    FreshPerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub steps: usize,
    pub replace_steps: usize,
    pub mask_threshold: f64,
    pub schedule: ScheduleKind,
    pub replacement_noise: ReplacementNoise,
    /// Taken from the manifest seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            steps: 25,
            replace_steps: 12,
            mask_threshold: 1.0,
            schedule: ScheduleKind::RectifiedFlow,
            replacement_noise: ReplacementNoise::Shared,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if self.replace_steps > self.steps {
            return Err(Error::Config(format!(
                "replace_steps {} exceeds steps {}",
                self.replace_steps, self.steps
            )));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "mask_threshold {} outside (0, 1]",
                self.mask_threshold
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule, self.steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementEvent {
    pub step: usize,
    pub t: usize,
    pub tau: f64,
    /// Fraction of latent cells overwritten.
    pub fraction: f64,
}

#[derive(Clone, Debug)]
pub struct SagOutput {
    pub latent: LatentGrid,
    pub events: Vec<ReplacementEvent>,
}

/// State after sampler iteration `step`, handed to observers.
pub struct StepSnapshot<'a> {
    pub step: usize,
    pub t: usize,
    pub replaced: bool,
    pub latent: &'a LatentGrid,
}

/// Runs the guided sampling loop from seeded noise at level `T` to level 0.
pub fn sag_sample(
    denoiser: &mut dyn Denoiser,
    schedule: &NoiseSchedule,
    guide: &LatentGrid,
    mask: &LatentMask,
    config: &SamplingConfig,
) -> Result<SagOutput> {
    sag_sample_observed(denoiser, schedule, guide, mask, config, &mut |_| {})
}

pub fn sag_sample_observed(
    denoiser: &mut dyn Denoiser,
    schedule: &NoiseSchedule,
    guide: &LatentGrid,
    mask: &LatentMask,
    config: &SamplingConfig,
    observer: &mut dyn FnMut(&StepSnapshot),
) -> Result<SagOutput> {
    config.validate()?;
    if schedule.steps() != config.steps {
        return Err(Error::Config(format!(
            "schedule has {} steps, config {}",
            schedule.steps(),
            config.steps
        )));
    }
    if guide.level != 0 {
        return Err(Error::Schema("guidance latent must be clean (level 0)".into()));
    }
    if mask.mask.width != guide.width || mask.mask.height != guide.height {
        return Err(Error::Shape(format!(
            "mask {}x{} vs latent {}x{}",
            mask.mask.width, mask.mask.height, guide.width, guide.height
        )));
    }
    let big_t = schedule.steps();
    let (w, h, c) = (guide.width, guide.height, guide.channels);
    let initial = LatentGrid::gaussian(w, h, c, config.seed, SAMPLING_TAG_BASE);
    let mut z = LatentGrid {
        level: big_t,
        ..initial.clone()
    };
    let mut events = Vec::with_capacity(config.replace_steps);
    for step in 1..=config.steps {
        let t = big_t - step + 1;
        let replaced = step <= config.replace_steps;
        if replaced {
            let eps = match config.replacement_noise {
                ReplacementNoise::Shared => initial.clone(),
                ReplacementNoise::FreshPerStep => {
                    LatentGrid::gaussian(w, h, c, config.seed, SAMPLING_TAG_BASE + t as u64)
                }
            };
            let zbar = forward_noise(guide, t, &eps, schedule)?;
            z = replace_latent(&z, &zbar, mask)?;
            events.push(ReplacementEvent {
                step,
                t,
                tau: schedule.tau(t)?,
                fraction: mask.fraction(),
            });
        }
        let next = denoiser.step(&z, t, schedule)?;
        if !z.same_dims(&next) {
            return Err(Error::Shape("denoiser changed latent dimensions".into()));
        }
        z = next;
        observer(&StepSnapshot {
            step,
            t,
            replaced,
            latent: &z,
        });
    }
    Ok(SagOutput { latent: z, events })
}
