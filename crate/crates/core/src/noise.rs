//! Flow-warped Gaussian noise.
//!
//! Frame 0 is drawn from the counter-based generator. Each later frame is
//! obtained by forward-scattering the previous frame along the consecutive
//! flow to the nearest destination pixel: a destination that receives `k`
//! sources takes their sum divided by `sqrt(k)`, and a destination that
//! receives none is refilled with fresh deviates keyed to the frame.

use serde::{Deserialize, Serialize};

use crate::container::Tensor;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::ggi::{latent_frame_count, latent_group};
use crate::grid::Image;
use crate::par;
use crate::rng::NormalStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub channels: usize,
    pub spatial_factor: usize,
    pub temporal_factor: usize,
    /// Relative depth tolerance of the flow visibility test.
    pub occlusion_tolerance: f64,
    /// Taken from the manifest seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            spatial_factor: 8,
            temporal_factor: 4,
            occlusion_tolerance: crate::flow::DEFAULT_OCCLUSION_TOLERANCE,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("noise channels must be positive".into()));
        }
        if self.spatial_factor == 0 || self.temporal_factor == 0 {
            return Err(Error::Config("latent factors must be at least 1".into()));
        }
        if !(self.occlusion_tolerance.is_finite() && self.occlusion_tolerance > 0.0) {
            return Err(Error::Config("occlusion tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Stream tag used for the fresh deviates of frame `index`.
#[inline]
pub fn frame_tag(index: usize) -> u64 {
    index as u64
}

/// I.i.d. standard normal `height x width x channels` frame.
pub fn init_noise(height: usize, width: usize, channels: usize, seed: u64, tag: u64) -> Image {
    let stream = NormalStream::new(seed, tag);
    let mut frame = Image::zeros(width, height, channels);
    par::for_each_chunk_mut(&mut frame.data, width * channels, |y, row| {
        for x in 0..width {
            stream.fill_pixel((y * width + x) as u32, &mut row[x * channels..(x + 1) * channels]);
        }
    });
    frame
}

/// Where a pixel value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Provenance {
    /// No source landed here; fresh noise.
    Reinjected = 0,
    /// Exactly one source, copied unchanged.
    Warped = 1,
    /// Several sources, summed and renormalized.
    Merged = 2,
}

/// Gather lists of a forward scatter, in compressed row form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transport {
    pub width: usize,
    pub height: usize,
    offsets: Vec<u32>,
    sources: Vec<u32>,
}

impl Transport {
    /// Builds the gather lists for `flow`. Sources of a destination are
    /// listed in increasing pixel order.
    pub fn from_flow(flow: &FlowField) -> Self {
        let (w, h) = (flow.width, flow.height);
        let n = w * h;
        let targets: Vec<u32> = par::flat_map_rows(h, |y| {
            (0..w)
                .map(|x| {
                    let i = y * w + x;
                    if !flow.valid[i] {
                        return u32::MAX;
                    }
                    let [du, dv] = flow.flow[i];
                    // Destination pixel containing the displaced center.
                    let dx = (x as f64 + 0.5 + du).floor();
                    let dy = (y as f64 + 0.5 + dv).floor();
                    if dx < 0.0 || dy < 0.0 || dx >= w as f64 || dy >= h as f64 {
                        u32::MAX
                    } else {
                        (dy as usize * w + dx as usize) as u32
                    }
                })
                .collect()
        });
        let mut offsets = vec![0u32; n + 1];
        for &t in &targets {
            if t != u32::MAX {
                offsets[t as usize + 1] += 1;
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut sources = vec![0u32; offsets[n] as usize];
        for (src, &t) in targets.iter().enumerate() {
            if t != u32::MAX {
                let slot = &mut cursor[t as usize];
                sources[*slot as usize] = src as u32;
                *slot += 1;
            }
        }
        Self {
            width: w,
            height: h,
            offsets,
            sources,
        }
    }

    #[inline]
    pub fn sources_of(&self, dst: usize) -> &[u32] {
        &self.sources[self.offsets[dst] as usize..self.offsets[dst + 1] as usize]
    }

    #[inline]
    pub fn fan_in(&self, dst: usize) -> usize {
        (self.offsets[dst + 1] - self.offsets[dst]) as usize
    }

    pub fn provenance(&self) -> Vec<Provenance> {
        (0..self.width * self.height)
            .map(|d| match self.fan_in(d) {
                0 => Provenance::Reinjected,
                1 => Provenance::Warped,
                _ => Provenance::Merged,
            })
            .collect()
    }
}

/// Applies a transport to `prev`; unreached pixels get deviates from
/// `NormalStream(seed, tag)`.
pub fn apply_transport(prev: &Image, transport: &Transport, seed: u64, tag: u64) -> Result<Image> {
    if prev.width != transport.width || prev.height != transport.height {
        return Err(Error::Shape(format!(
            "noise {}x{} vs flow {}x{}",
            prev.width, prev.height, transport.width, transport.height
        )));
    }
    let (w, c) = (prev.width, prev.channels);
    let stream = NormalStream::new(seed, tag);
    let mut out = Image::zeros(w, prev.height, c);
    par::for_each_chunk_mut(&mut out.data, w * c, |y, row| {
        let mut acc = vec![0.0f64; c];
        for x in 0..w {
            let d = y * w + x;
            let px = &mut row[x * c..(x + 1) * c];
            let sources = transport.sources_of(d);
            match sources.len() {
                0 => stream.fill_pixel(d as u32, px),
                1 => px.copy_from_slice(&prev.data[sources[0] as usize * c..][..c]),
                k => {
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    for &s in sources {
                        for (a, v) in acc.iter_mut().zip(&prev.data[s as usize * c..][..c]) {
                            *a += *v as f64;
                        }
                    }
                    let norm = (k as f64).sqrt();
                    for (p, a) in px.iter_mut().zip(&acc) {
                        *p = (*a / norm) as f32;
                    }
                }
            }
        }
    });
    Ok(out)
}

/// One warp step with its transport, for callers that need both.
#[derive(Clone, Debug)]
pub struct WarpStep {
    pub frame: Image,
    pub provenance: Vec<Provenance>,
    pub transport: Transport,
}

pub fn warp_noise_step_traced(prev: &Image, flow: &FlowField, seed: u64, tag: u64) -> Result<WarpStep> {
    let transport = Transport::from_flow(flow);
    let frame = apply_transport(prev, &transport, seed, tag)?;
    Ok(WarpStep {
        provenance: transport.provenance(),
        frame,
        transport,
    })
}

/// Warps noise frame `i` to frame `i + 1` along `f_{i -> i+1}`.
pub fn warp_noise_step(
    prev: &Image,
    flow: &FlowField,
    seed: u64,
    tag: u64,
) -> Result<(Image, Vec<Provenance>)> {
    let step = warp_noise_step_traced(prev, flow, seed, tag)?;
    Ok((step.frame, step.provenance))
}

/// In-memory warped noise sequence.
#[derive(Clone, Debug)]
pub struct NoiseVolume {
    pub frames: Vec<Image>,
    pub provenance: Vec<Vec<Provenance>>,
    pub seed: u64,
}

impl NoiseVolume {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn reinjected_fraction(&self, frame: usize) -> f64 {
        reinjected_fraction(&self.provenance[frame])
    }

    /// `F x H x W x C` tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let first = self.frames.first().ok_or_else(|| Error::Empty("noise volume".into()))?;
        let mut data = Vec::with_capacity(first.data.len() * self.frames.len());
        for f in &self.frames {
            data.extend_from_slice(&f.data);
        }
        Tensor::new(
            vec![self.frames.len(), first.height, first.width, first.channels],
            "FHWC",
            data,
        )
    }
}

pub fn reinjected_fraction(provenance: &[Provenance]) -> f64 {
    if provenance.is_empty() {
        return 0.0;
    }
    let n = provenance.iter().filter(|&&p| p == Provenance::Reinjected).count();
    n as f64 / provenance.len() as f64
}

/// Frame-by-frame warper that holds only the current frame.
pub struct NoiseWarper {
    seed: u64,
    index: usize,
    current: Image,
}

impl NoiseWarper {
    pub fn new(width: usize, height: usize, config: &NoiseConfig) -> Result<Self> {
        config.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::Shape("noise frame must be non-empty".into()));
        }
        Ok(Self {
            seed: config.seed,
            index: 0,
            current: init_noise(height, width, config.channels, config.seed, frame_tag(0)),
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn current(&self) -> &Image {
        &self.current
    }

    /// Advances by `f_{i -> i+1}` and returns the provenance and transport
    /// of the new frame. The previous frame is returned alongside.
    pub fn advance(&mut self, flow: &FlowField) -> Result<(Image, WarpStep)> {
        if flow.width != self.current.width || flow.height != self.current.height {
            return Err(Error::Shape(format!(
                "flow {}x{} does not match noise {}x{}",
                flow.width, flow.height, self.current.width, self.current.height
            )));
        }
        let mut step =
            warp_noise_step_traced(&self.current, flow, self.seed, frame_tag(self.index + 1))?;
        self.index += 1;
        std::mem::swap(&mut self.current, &mut step.frame);
        let prev = std::mem::replace(&mut step.frame, self.current.clone());
        Ok((prev, step))
    }
}

/// Warps a full sequence in memory. Frame count is `flows.len() + 1`.
pub fn warp_noise_sequence(
    flows: &[FlowField],
    width: usize,
    height: usize,
    config: &NoiseConfig,
) -> Result<NoiseVolume> {
    let mut warper = NoiseWarper::new(width, height, config)?;
    let mut frames = vec![warper.current().clone()];
    let mut provenance = vec![vec![Provenance::Reinjected; width * height]];
    for flow in flows {
        let (_, step) = warper.advance(flow)?;
        frames.push(step.frame);
        provenance.push(step.provenance);
    }
    Ok(NoiseVolume {
        frames,
        provenance,
        seed: config.seed,
    })
}

/// Streaming variance-preserving downsampler to latent resolution.
///
/// Frame 0 forms its own latent frame; later frames are grouped by
/// `temporal_factor`. Each cell is the block sum divided by the square root
/// of the number of real values in the block, so a short final group keeps
/// unit variance.
pub struct LatentAccumulator {
    frames: usize,
    width: usize,
    height: usize,
    channels: usize,
    cs: usize,
    ct: usize,
    next: usize,
    sums: Vec<f64>,
}

impl LatentAccumulator {
    pub fn new(
        frames: usize,
        width: usize,
        height: usize,
        channels: usize,
        cs: usize,
        ct: usize,
    ) -> Result<Self> {
        if cs == 0 || ct == 0 {
            return Err(Error::Config("latent factors must be at least 1".into()));
        }
        if frames == 0 {
            return Err(Error::Empty("noise volume".into()));
        }
        if !width.is_multiple_of(cs) || !height.is_multiple_of(cs) {
            return Err(Error::Shape(format!(
                "{width}x{height} is not divisible by spatial factor {cs}"
            )));
        }
        let lf = latent_frame_count(frames, ct);
        Ok(Self {
            frames,
            width,
            height,
            channels,
            cs,
            ct,
            next: 0,
            sums: vec![0.0; lf * (height / cs) * (width / cs) * channels],
        })
    }

    pub fn push(&mut self, frame: &Image) -> Result<()> {
        if self.next >= self.frames {
            return Err(Error::Index(format!("expected {} frames", self.frames)));
        }
        if frame.width != self.width || frame.height != self.height || frame.channels != self.channels {
            return Err(Error::Shape(format!(
                "frame {}x{}x{} vs {}x{}x{}",
                frame.width, frame.height, frame.channels, self.width, self.height, self.channels
            )));
        }
        let (lw, lh, c, cs) = (self.width / self.cs, self.height / self.cs, self.channels, self.cs);
        let width = self.width;
        let block_sums = par::flat_map_rows(lh, |by| {
            let mut row = vec![0.0f64; lw * c];
            for y in by * cs..(by + 1) * cs {
                for bx in 0..lw {
                    let cell = &mut row[bx * c..(bx + 1) * c];
                    for x in bx * cs..(bx + 1) * cs {
                        let px = &frame.data[(y * width + x) * c..][..c];
                        for (a, v) in cell.iter_mut().zip(px) {
                            *a += *v as f64;
                        }
                    }
                }
            }
            row
        });
        let group = latent_group(self.next, self.ct);
        let base = group * lh * lw * c;
        for (a, s) in self.sums[base..base + block_sums.len()].iter_mut().zip(&block_sums) {
            *a += s;
        }
        self.next += 1;
        Ok(())
    }

    /// `F' x H' x W' x C` tensor.
    pub fn finish(self) -> Result<Tensor> {
        if self.next != self.frames {
            return Err(Error::Shape(format!(
                "received {} of {} frames",
                self.next, self.frames
            )));
        }
        let (lw, lh) = (self.width / self.cs, self.height / self.cs);
        let lf = latent_frame_count(self.frames, self.ct);
        let per_frame = lh * lw * self.channels;
        let mut real = vec![0usize; lf];
        for f in 0..self.frames {
            real[latent_group(f, self.ct)] += 1;
        }
        let area = (self.cs * self.cs) as f64;
        let data = self
            .sums
            .iter()
            .enumerate()
            .map(|(i, s)| (s / (area * real[i / per_frame] as f64).sqrt()) as f32)
            .collect();
        Tensor::new(vec![lf, lh, lw, self.channels], "FHWC", data)
    }
}

pub fn downsample_noise(volume: &NoiseVolume, cs: usize, ct: usize) -> Result<Tensor> {
    let first = volume.frames.first().ok_or_else(|| Error::Empty("noise volume".into()))?;
    let mut acc = LatentAccumulator::new(
        volume.frames.len(),
        first.width,
        first.height,
        first.channels,
        cs,
        ct,
    )?;
    for f in &volume.frames {
        acc.push(f)?;
    }
    acc.finish()
}

/// Moments and goodness of fit of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frame: usize,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub excess_kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub reinjected_fraction: f64,
}

impl FrameStats {
    pub fn ks_pass(&self) -> bool {
        self.ks_statistic < self.ks_critical
    }
}

/// Correlation between frame `i` and frame `i + 1` along single-source
/// (warped) transport.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionStats {
    pub from: usize,
    pub pairs: usize,
    pub correlation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub frames: Vec<FrameStats>,
    pub transitions: Vec<TransitionStats>,
    pub mean_trajectory_correlation: Option<f64>,
}

/// Kolmogorov-Smirnov critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample KS statistic of `values` against N(0, 1).
pub fn ks_statistic(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    par::sort_f64(&mut sorted);
    let n = sorted.len() as f64;
    const CHUNK: usize = 1 << 16;
    let partial = par::map_range(sorted.len().div_ceil(CHUNK), |c| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(sorted.len());
        let mut d = 0.0f64;
        for (i, &x) in sorted[start..end].iter().enumerate() {
            let i = (start + i) as f64;
            let cdf = normal_cdf(x);
            d = d.max((i + 1.0) / n - cdf).max(cdf - i / n);
        }
        d
    });
    partial.into_iter().fold(0.0, f64::max)
}

/// Mean, population variance and excess kurtosis.
pub fn moments(values: &[f32]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    const CHUNK: usize = 1 << 16;
    let chunks = values.len().div_ceil(CHUNK);
    let chunk = |c: usize| &values[c * CHUNK..((c + 1) * CHUNK).min(values.len())];
    let n = values.len() as f64;
    let sum: f64 = par::map_range(chunks, |c| chunk(c).iter().map(|&v| v as f64).sum::<f64>())
        .into_iter()
        .sum();
    let mean = sum / n;
    let (m2, m4) = par::map_range(chunks, |c| {
        chunk(c).iter().fold((0.0, 0.0), |(a, b), &v| {
            let d = v as f64 - mean;
            let d2 = d * d;
            (a + d2, b + d2 * d2)
        })
    })
    .into_iter()
    .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let var = m2 / n;
    let kurt = if var > 0.0 { (m4 / n) / (var * var) - 3.0 } else { 0.0 };
    (mean, var, kurt)
}

pub fn frame_stats(index: usize, frame: &Image, provenance: &[Provenance]) -> FrameStats {
    let (mean, variance, excess_kurtosis) = moments(&frame.data);
    FrameStats {
        frame: index,
        count: frame.data.len(),
        mean,
        variance,
        excess_kurtosis,
        ks_statistic: ks_statistic(&frame.data),
        ks_critical: ks_critical_001(frame.data.len()),
        reinjected_fraction: reinjected_fraction(provenance),
    }
}

/// Pearson correlation over all channels of warped destinations and their
/// single source.
pub fn transition_stats(from: usize, prev: &Image, next: &Image, transport: &Transport) -> TransitionStats {
    let c = prev.channels;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for d in 0..transport.width * transport.height {
        let src = transport.sources_of(d);
        if src.len() == 1 {
            xs.extend_from_slice(&prev.data[src[0] as usize * c..][..c]);
            ys.extend_from_slice(&next.data[d * c..][..c]);
        }
    }
    TransitionStats {
        from,
        pairs: xs.len(),
        correlation: pearson(&xs, &ys),
    }
}

/// Sample correlation; `None` when either side has no spread.
pub fn pearson(xs: &[f32], ys: &[f32]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = ys.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Builds a report incrementally while frames stream past.
#[derive(Default)]
pub struct GaussianityAccumulator {
    frames: Vec<FrameStats>,
    transitions: Vec<TransitionStats>,
}

impl GaussianityAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records frame statistics; `link` is the previous frame and the
    /// transport that produced this one.
    pub fn push(&mut self, frame: &Image, provenance: &[Provenance], link: Option<(&Image, &Transport)>) {
        let index = self.frames.len();
        self.frames.push(frame_stats(index, frame, provenance));
        if let Some((prev, transport)) = link {
            self.transitions
                .push(transition_stats(index - 1, prev, frame, transport));
        }
    }

    pub fn finish(self) -> GaussianityReport {
        let corr: Vec<f64> = self.transitions.iter().filter_map(|t| t.correlation).collect();
        let mean_trajectory_correlation =
            (!corr.is_empty()).then(|| corr.iter().sum::<f64>() / corr.len() as f64);
        GaussianityReport {
            frames: self.frames,
            transitions: self.transitions,
            mean_trajectory_correlation,
        }
    }
}

/// Report for an in-memory volume; `flows` enables trajectory correlation.
pub fn gaussianity_report(volume: &NoiseVolume, flows: Option<&[FlowField]>) -> Result<GaussianityReport> {
    let mut acc = GaussianityAccumulator::new();
    for (i, frame) in volume.frames.iter().enumerate() {
        let link = match (i, flows) {
            (0, _) | (_, None) => None,
            (_, Some(flows)) => {
                let flow = flows.get(i - 1).ok_or_else(|| {
                    Error::Shape(format!("{} flows for {} frames", flows.len(), volume.len()))
                })?;
                Some((&volume.frames[i - 1], Transport::from_flow(flow)))
            }
        };
        acc.push(frame, &volume.provenance[i], link.as_ref().map(|(p, t)| (*p, t)));
    }
    Ok(acc.finish())
}
