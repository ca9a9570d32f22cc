//! Conditioning volumes and training samples for geometry-guided
//! inbetweening.
//!
//! Everything lives at latent resolution: `c_s` times smaller spatially and
//! grouped `c_t` frames at a time, with frame 0 encoded on its own. Tensors
//! use `FHWC` order and the model input concatenates, along channels,
//! `[noise | endpoint condition | edges]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::Tensor;
use crate::edges::dilate;
use crate::error::{Error, Result};
use crate::flow::{compute_flow, FlowField};
use crate::grid::{Image, Plane};
use crate::noise::{LatentAccumulator, NoiseConfig, NoiseWarper};
use crate::par;
use crate::raster::rasterize;
use crate::scene::{Mesh, Trajectory};

/// Latent frames for `frames` video frames: the first alone, the rest in
/// groups of `ct`, a trailing partial group counting as one.
pub fn latent_frame_count(frames: usize, ct: usize) -> usize {
    if frames == 0 {
        return 0;
    }
    1 + (frames - 1).div_ceil(ct.max(1))
}

/// Latent frame that video frame `frame` falls into.
#[inline]
pub fn latent_group(frame: usize, ct: usize) -> usize {
    if frame == 0 {
        0
    } else {
        1 + (frame - 1) / ct.max(1)
    }
}

pub const CHANNEL_ORDER: [&str; 3] = ["noise", "condition", "edges"];

/// Describes how video frames map to latent tensors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub axes: String,
    pub frames: usize,
    pub latent_frames: usize,
    /// Frames the last temporal group is short of `temporal_factor`.
    pub padded_frames: usize,
    /// Short groups are averaged over their real frames only.
    pub padding: String,
    pub width: usize,
    pub height: usize,
    pub latent_width: usize,
    pub latent_height: usize,
    pub channels: usize,
    pub spatial_factor: usize,
    pub temporal_factor: usize,
    pub channel_order: Vec<String>,
}

impl Layout {
    pub fn new(frames: usize, width: usize, height: usize, channels: usize, cs: usize, ct: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Empty("layout needs at least one frame".into()));
        }
        if cs == 0 || ct == 0 || channels == 0 {
            return Err(Error::Config("layout factors and channels must be positive".into()));
        }
        if !width.is_multiple_of(cs) || !height.is_multiple_of(cs) {
            return Err(Error::Shape(format!(
                "{width}x{height} is not divisible by spatial factor {cs}"
            )));
        }
        let latent_frames = latent_frame_count(frames, ct);
        Ok(Self {
            axes: "FHWC".into(),
            frames,
            latent_frames,
            padded_frames: 1 + (latent_frames - 1) * ct - frames,
            padding: "real_frame_mean".into(),
            width,
            height,
            latent_width: width / cs,
            latent_height: height / cs,
            channels,
            spatial_factor: cs,
            temporal_factor: ct,
            channel_order: CHANNEL_ORDER.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn from_noise_config(frames: usize, width: usize, height: usize, config: &NoiseConfig) -> Result<Self> {
        Self::new(
            frames,
            width,
            height,
            config.channels,
            config.spatial_factor,
            config.temporal_factor,
        )
    }

    /// Shape of one block: `[F', h, w, c]`.
    pub fn block_shape(&self) -> Vec<usize> {
        vec![self.latent_frames, self.latent_height, self.latent_width, self.channels]
    }

    /// Shape of the stacked model input.
    pub fn input_shape(&self) -> Vec<usize> {
        vec![
            self.latent_frames,
            self.latent_height,
            self.latent_width,
            self.channels * CHANNEL_ORDER.len(),
        ]
    }

    pub fn check_block(&self, name: &str, t: &Tensor) -> Result<()> {
        if t.shape != self.block_shape() || t.layout != self.axes {
            return Err(Error::Shape(format!(
                "{name} is {:?} {}, layout expects {:?} {}",
                t.shape,
                t.layout,
                self.block_shape(),
                self.axes
            )));
        }
        Ok(())
    }
}

/// Block-mean stand-in for the video autoencoder.
///
/// Spatially each `c_s x c_s` block is averaged; temporally the frames of a
/// group are averaged. Input channels are tiled cyclically to fill the
/// latent channel count.
#[derive(Clone, Debug)]
pub struct VideoEncoder {
    layout: Layout,
}

impl VideoEncoder {
    pub fn new(layout: Layout) -> Self {
        Self { layout }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Encodes a single image into an `h x w x c` latent slice.
    pub fn encode_image(&self, image: &Image) -> Result<Vec<f64>> {
        let l = &self.layout;
        if image.width != l.width || image.height != l.height || image.channels == 0 {
            return Err(Error::Shape(format!(
                "image {}x{}x{} vs layout {}x{}",
                image.width, image.height, image.channels, l.width, l.height
            )));
        }
        let (s, c, cin) = (l.spatial_factor, l.channels, image.channels);
        let (lw, lh) = (l.latent_width, l.latent_height);
        let area = (s * s) as f64;
        Ok(par::flat_map_rows(lh, |by| {
            let mut sums = vec![0.0f64; lw * cin];
            for y in by * s..(by + 1) * s {
                for bx in 0..lw {
                    for x in bx * s..(bx + 1) * s {
                        for (a, v) in sums[bx * cin..(bx + 1) * cin].iter_mut().zip(image.pixel(x, y)) {
                            *a += *v as f64;
                        }
                    }
                }
            }
            let mut row = Vec::with_capacity(lw * c);
            for bx in 0..lw {
                for k in 0..c {
                    row.push(sums[bx * cin + k % cin] / area);
                }
            }
            row
        }))
    }

    /// Single latent frame as an `h x w x c` tensor.
    pub fn encode_frame(&self, image: &Image) -> Result<Tensor> {
        let l = &self.layout;
        let data = self.encode_image(image)?.into_iter().map(|v| v as f32).collect();
        Tensor::new(vec![l.latent_height, l.latent_width, l.channels], "HWC", data)
    }

    /// Encodes a whole video into an `F' x h x w x c` tensor.
    pub fn encode_video<'a, I>(&self, frames: I) -> Result<Tensor>
    where
        I: IntoIterator<Item = &'a Image>,
    {
        let l = &self.layout;
        let per = l.latent_height * l.latent_width * l.channels;
        let mut sums = vec![0.0f64; l.latent_frames * per];
        let mut real = vec![0usize; l.latent_frames];
        let mut count = 0;
        for image in frames {
            if count >= l.frames {
                return Err(Error::Shape(format!("more than {} frames", l.frames)));
            }
            let g = latent_group(count, l.temporal_factor);
            for (a, v) in sums[g * per..(g + 1) * per].iter_mut().zip(self.encode_image(image)?) {
                *a += v;
            }
            real[g] += 1;
            count += 1;
        }
        if count != l.frames {
            return Err(Error::Shape(format!("{count} frames, layout has {}", l.frames)));
        }
        let data = sums
            .iter()
            .enumerate()
            .map(|(i, s)| (s / real[i / per] as f64) as f32)
            .collect();
        Tensor::new(l.block_shape(), &l.axes, data)
    }
}

/// `[E(v0), 0, ..., 0, E(vN)]`.
pub fn assemble_condition_volume(v0: &Tensor, vn: &Tensor, layout: &Layout) -> Result<Tensor> {
    let slice = vec![layout.latent_height, layout.latent_width, layout.channels];
    if v0.shape != slice || vn.shape != slice {
        return Err(Error::Shape(format!(
            "endpoint latents {:?} and {:?}, expected {slice:?}",
            v0.shape, vn.shape
        )));
    }
    if layout.latent_frames < 2 {
        return Err(Error::Shape("condition volume needs two latent frames".into()));
    }
    let per = v0.data.len();
    let mut data = vec![0.0f32; layout.latent_frames * per];
    data[..per].copy_from_slice(&v0.data);
    data[(layout.latent_frames - 1) * per..].copy_from_slice(&vn.data);
    Tensor::new(layout.block_shape(), &layout.axes, data)
}

/// Channel-wise concatenation of blocks sharing `F', h, w`.
pub fn concat_channels(blocks: &[&Tensor]) -> Result<Tensor> {
    let first = blocks.first().ok_or_else(|| Error::Empty("no blocks".into()))?;
    if first.shape.len() != 4 {
        return Err(Error::Shape(format!("expected FHWC, got {:?}", first.shape)));
    }
    for b in blocks {
        if b.shape.len() != 4 || b.shape[..3] != first.shape[..3] || b.layout != first.layout {
            return Err(Error::Shape(format!(
                "block {:?} {} does not match {:?} {}",
                b.shape, b.layout, first.shape, first.layout
            )));
        }
    }
    let cells = first.shape[..3].iter().product::<usize>();
    let total: usize = blocks.iter().map(|b| b.shape[3]).sum();
    let mut data = Vec::with_capacity(cells * total);
    for i in 0..cells {
        for b in blocks {
            let c = b.shape[3];
            data.extend_from_slice(&b.data[i * c..(i + 1) * c]);
        }
    }
    let mut shape = first.shape[..3].to_vec();
    shape.push(total);
    Tensor::new(shape, &first.layout, data)
}

/// Inverse of [`concat_channels`] for blocks of `widths` channels.
pub fn split_channels(stack: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    if stack.shape.len() != 4 || stack.shape[3] != widths.iter().sum::<usize>() {
        return Err(Error::Shape(format!(
            "cannot split {:?} into {widths:?}",
            stack.shape
        )));
    }
    let cells = stack.shape[..3].iter().product::<usize>();
    let total = stack.shape[3];
    let mut out = Vec::with_capacity(widths.len());
    let mut offset = 0;
    for &w in widths {
        let mut data = Vec::with_capacity(cells * w);
        for i in 0..cells {
            data.extend_from_slice(&stack.data[i * total + offset..i * total + offset + w]);
        }
        let mut shape = stack.shape[..3].to_vec();
        shape.push(w);
        out.push(Tensor::new(shape, &stack.layout, data)?);
        offset += w;
    }
    Ok(out)
}

/// `[Z_t | V | H]` checked against `layout`.
pub fn assemble_model_input(z: &Tensor, v: &Tensor, h: &Tensor, layout: &Layout) -> Result<Tensor> {
    layout.check_block("noise", z)?;
    layout.check_block("condition", v)?;
    layout.check_block("edges", h)?;
    concat_channels(&[z, v, h])
}

/// Recovers `[Z_t, V, H]` from a stacked input.
pub fn split_model_input(stack: &Tensor, layout: &Layout) -> Result<[Tensor; 3]> {
    if stack.shape != layout.input_shape() {
        return Err(Error::Shape(format!(
            "input {:?}, layout expects {:?}",
            stack.shape,
            layout.input_shape()
        )));
    }
    let c = layout.channels;
    let [z, v, h]: [Tensor; 3] = split_channels(stack, &[c, c, c])?
        .try_into()
        .expect("three blocks");
    Ok([z, v, h])
}

/// The loss compares prediction and target elementwise, so their shapes
/// and axis orders must agree.
pub fn check_prediction_shape(target: &Tensor, prediction: &Tensor) -> Result<()> {
    if target.shape != prediction.shape || target.layout != prediction.layout {
        return Err(Error::Shape(format!(
            "prediction {:?} {} vs target {:?} {}",
            prediction.shape, prediction.layout, target.shape, target.layout
        )));
    }
    Ok(())
}

/// Per-frame depth from an image.
pub trait DepthEstimator: Send + Sync {
    fn depth(&self, index: usize, frame: &Image) -> Result<Plane<f32>>;
}

/// Binary edges from a depth map.
pub trait EdgeEstimator: Send + Sync {
    fn edges(&self, depth: &Plane<f32>) -> Result<Plane<bool>>;
}

/// Flow between two frames of a video.
pub trait FlowEstimator: Send + Sync {
    fn flow(&self, i: usize, j: usize, a: &Image, b: &Image) -> Result<FlowField>;
}

/// Rendered depth for synthetic scenes; zero marks background.
pub struct GBufferDepth {
    depths: Vec<Plane<f32>>,
}

impl GBufferDepth {
    pub fn new(depths: Vec<Plane<f32>>) -> Self {
        Self { depths }
    }

    pub fn render(mesh: &Mesh, trajectory: &Trajectory) -> Self {
        Self::new(
            trajectory
                .poses()
                .iter()
                .map(|p| rasterize(mesh, p).depth_plane())
                .collect(),
        )
    }
}

impl DepthEstimator for GBufferDepth {
    fn depth(&self, index: usize, frame: &Image) -> Result<Plane<f32>> {
        let d = self
            .depths
            .get(index)
            .ok_or_else(|| Error::Index(format!("no depth for frame {index}")))?;
        if d.width != frame.width || d.height != frame.height {
            return Err(Error::Shape(format!(
                "depth {}x{} vs frame {}x{}",
                d.width, d.height, frame.width, frame.height
            )));
        }
        Ok(d.clone())
    }
}

/// Flow from the mesh for synthetic scenes.
pub struct GeometricFlow<'a> {
    pub mesh: &'a Mesh,
    pub trajectory: &'a Trajectory,
    pub tolerance: f64,
}

impl FlowEstimator for GeometricFlow<'_> {
    fn flow(&self, i: usize, j: usize, a: &Image, b: &Image) -> Result<FlowField> {
        let (pi, pj) = (self.trajectory.pose(i)?, self.trajectory.pose(j)?);
        let (gi, gj) = (rasterize(self.mesh, pi), rasterize(self.mesh, pj));
        if a.width != gi.width || a.height != gi.height || !a.same_dims(b) {
            return Err(Error::Shape("frames do not match the trajectory resolution".into()));
        }
        Ok(compute_flow(self.mesh, self.trajectory, i, j, &gi, &gj, self.tolerance)?.0)
    }
}

/// Gradient edge detector on depth: Sobel magnitude, non-maximum
/// suppression, hysteresis, dilation.
///
/// Depth is divided by a far value 1.5 times the largest valid depth, which
/// also fills the background, so thresholds are scale-free.
#[derive(Clone, Debug)]
pub struct SobelEdgeEstimator {
    pub high: f32,
    pub low: f32,
    pub dilation: usize,
}

impl Default for SobelEdgeEstimator {
    fn default() -> Self {
        Self {
            high: 0.05,
            low: 0.02,
            dilation: 1,
        }
    }
}

impl SobelEdgeEstimator {
    /// Sobel magnitude and direction sector (0: horizontal gradient,
    /// 1: diagonal, 2: vertical, 3: anti-diagonal).
    fn gradient(depth: &Plane<f32>) -> (Vec<f32>, Vec<u8>) {
        let (w, h) = (depth.width, depth.height);
        let far = depth.data.iter().copied().filter(|d| *d > 0.0).fold(0.0f32, f32::max) * 1.5;
        let norm: Vec<f32> = if far > 0.0 {
            depth.data.iter().map(|&d| if d > 0.0 { d / far } else { 1.0 }).collect()
        } else {
            vec![0.0; w * h]
        };
        let at = |x: isize, y: isize| {
            let x = x.clamp(0, w as isize - 1) as usize;
            let y = y.clamp(0, h as isize - 1) as usize;
            norm[y * w + x]
        };
        let cells = par::flat_map_rows(h, |y| {
            let y = y as isize;
            (0..w as isize)
                .map(|x| {
                    let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                        - at(x - 1, y - 1)
                        - 2.0 * at(x - 1, y)
                        - at(x - 1, y + 1))
                        / 8.0;
                    let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                        - at(x - 1, y - 1)
                        - 2.0 * at(x, y - 1)
                        - at(x + 1, y - 1))
                        / 8.0;
                    let mag = (gx * gx + gy * gy).sqrt();
                    let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
                    let sector = (((angle + 22.5) / 45.0) as u8) % 4;
                    (mag, sector)
                })
                .collect()
        });
        cells.into_iter().unzip()
    }
}

impl EdgeEstimator for SobelEdgeEstimator {
    fn edges(&self, depth: &Plane<f32>) -> Result<Plane<bool>> {
        let (w, h) = (depth.width, depth.height);
        if w == 0 || h == 0 {
            return Err(Error::Shape("empty depth map".into()));
        }
        let (mag, sector) = Self::gradient(depth);
        let m = |x: isize, y: isize| {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                mag[y as usize * w + x as usize]
            }
        };
        // Keep a pixel that is >= its neighbor on the negative side and > the
        // one on the positive side, so a two-pixel plateau thins to one.
        let thin: Vec<f32> = par::flat_map_rows(h, |y| {
            (0..w)
                .map(|x| {
                    let i = y * w + x;
                    let v = mag[i];
                    if v < self.low {
                        return 0.0;
                    }
                    let (dx, dy) = match sector[i] {
                        0 => (1, 0),
                        1 => (1, 1),
                        2 => (0, 1),
                        _ => (-1, 1),
                    };
                    let (xi, yi) = (x as isize, y as isize);
                    if v >= m(xi - dx, yi - dy) && v > m(xi + dx, yi + dy) {
                        v
                    } else {
                        0.0
                    }
                })
                .collect()
        });
        let mut out = vec![false; w * h];
        let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= self.high).collect();
        for &i in &stack {
            out[i] = true;
        }
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !out[j] && thin[j] >= self.low {
                        out[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        Ok(dilate(&Plane::from_vec(w, h, out)?, self.dilation))
    }
}

/// Estimators used to simulate structural guidance from plain video.
#[derive(Default)]
pub struct GuidanceEstimators {
    pub depth: Option<Box<dyn DepthEstimator>>,
    pub edges: Option<Box<dyn EdgeEstimator>>,
}

impl GuidanceEstimators {
    pub fn new(depth: Box<dyn DepthEstimator>, edges: Box<dyn EdgeEstimator>) -> Self {
        Self {
            depth: Some(depth),
            edges: Some(edges),
        }
    }
}

/// Edge map from estimated depth; values are 0 or 255.
pub fn simulate_structural_guidance(
    index: usize,
    frame: &Image,
    estimators: &GuidanceEstimators,
) -> Result<Plane<u8>> {
    let depth_est = estimators.depth.as_ref().ok_or(Error::Unbound("depth estimator"))?;
    let edge_est = estimators.edges.as_ref().ok_or(Error::Unbound("edge estimator"))?;
    let depth = depth_est.depth(index, frame)?;
    guidance_from_depth(&depth, edge_est.as_ref())
}

pub fn guidance_from_depth(depth: &Plane<f32>, edges: &dyn EdgeEstimator) -> Result<Plane<u8>> {
    let e = edges.edges(depth)?;
    if !e.same_dims(depth) {
        return Err(Error::Shape("edge estimator changed resolution".into()));
    }
    Ok(e.map(|&b| if b { 255 } else { 0 }))
}

/// Converts an 8-bit edge map into a one-channel image in [0, 1].
pub fn edge_image(edges: &Plane<u8>) -> Image {
    Image::from_plane(&edges.map(|&v| v as f32 / 255.0))
}

/// Regression target and conditioning for one training video.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub video_id: String,
    pub layout: Layout,
    pub noise: Tensor,
    pub condition: Tensor,
    pub edges: Tensor,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleMeta {
    video_id: String,
    layout: Layout,
    files: SampleFiles,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleFiles {
    noise: String,
    condition: String,
    edges: String,
}

impl TrainingSample {
    pub fn validate(&self) -> Result<()> {
        self.layout.check_block("noise", &self.noise)?;
        self.layout.check_block("condition", &self.condition)?;
        self.layout.check_block("edges", &self.edges)
    }

    /// Model input with the warped noise standing in for `Z_t`.
    pub fn model_input(&self) -> Result<Tensor> {
        assemble_model_input(&self.noise, &self.condition, &self.edges, &self.layout)
    }

    /// Writes `noise.ggt`, `condition.ggt`, `edges.ggt` and `layout.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.noise.save(dir.join("noise.ggt"))?;
        self.condition.save(dir.join("condition.ggt"))?;
        self.edges.save(dir.join("edges.ggt"))?;
        let meta = SampleMeta {
            video_id: self.video_id.clone(),
            layout: self.layout.clone(),
            files: SampleFiles {
                noise: "noise.ggt".into(),
                condition: "condition.ggt".into(),
                edges: "edges.ggt".into(),
            },
        };
        let path = dir.join("layout.json");
        let text = serde_json::to_string_pretty(&meta).expect("layout serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("layout.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: SampleMeta =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let sample = Self {
            video_id: meta.video_id,
            layout: meta.layout,
            noise: Tensor::load(dir.join(meta.files.noise))?,
            condition: Tensor::load(dir.join(meta.files.condition))?,
            edges: Tensor::load(dir.join(meta.files.edges))?,
        };
        sample.validate()?;
        Ok(sample)
    }
}

/// Builds a training sample from `F` frames and their `F - 1` consecutive
/// flows.
pub fn make_training_sample(
    video_id: &str,
    frames: &[Image],
    flows: &[FlowField],
    estimators: &GuidanceEstimators,
    config: &NoiseConfig,
) -> Result<TrainingSample> {
    let first = frames.first().ok_or_else(|| Error::Empty("training video".into()))?;
    if flows.len() + 1 != frames.len() {
        return Err(Error::Shape(format!(
            "{} frames need {} flows, got {}",
            frames.len(),
            frames.len() - 1,
            flows.len()
        )));
    }
    let layout = Layout::from_noise_config(frames.len(), first.width, first.height, config)?;

    let mut warper = NoiseWarper::new(first.width, first.height, config)?;
    let mut acc = LatentAccumulator::new(
        frames.len(),
        first.width,
        first.height,
        config.channels,
        config.spatial_factor,
        config.temporal_factor,
    )?;
    acc.push(warper.current())?;
    for flow in flows {
        let (_, step) = warper.advance(flow)?;
        acc.push(&step.frame)?;
    }
    let noise = acc.finish()?;

    let encoder = VideoEncoder::new(layout.clone());
    let v0 = encoder.encode_frame(first)?;
    let vn = encoder.encode_frame(frames.last().expect("non-empty"))?;
    let condition = assemble_condition_volume(&v0, &vn, &layout)?;

    let guidance = frames
        .iter()
        .enumerate()
        .map(|(i, f)| simulate_structural_guidance(i, f, estimators).map(|e| edge_image(&e)))
        .collect::<Result<Vec<_>>>()?;
    let edges = encoder.encode_video(&guidance)?;

    let sample = TrainingSample {
        video_id: video_id.into(),
        layout,
        noise,
        condition,
        edges,
    };
    sample.validate()?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_arithmetic() {
        assert_eq!(latent_frame_count(1, 4), 1);
        assert_eq!(latent_frame_count(49, 4), 13);
        assert_eq!(latent_frame_count(46, 4), 13);
        assert_eq!(latent_frame_count(9, 4), 3);
        for f in 1..200 {
            assert_eq!(latent_frame_count(f + 4, 4), latent_frame_count(f, 4) + 1);
            assert_eq!(latent_group(f - 1, 4) + 1, latent_frame_count(f, 4));
        }
        let l = Layout::new(46, 720, 480, 16, 8, 4).unwrap();
        assert_eq!(l.padded_frames, 3);
        assert_eq!(l.input_shape(), vec![13, 60, 90, 48]);
        assert_eq!(Layout::new(49, 720, 480, 16, 8, 4).unwrap().padded_frames, 0);
        assert!(Layout::new(46, 721, 480, 16, 8, 4).is_err());
    }

    #[test]
    fn condition_volume_zero_interior() {
        let l = Layout::new(46, 16, 8, 2, 8, 4).unwrap();
        let v0 = Tensor::new(vec![1, 2, 2], "HWC", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let vn = Tensor::new(vec![1, 2, 2], "HWC", vec![-1.0; 4]).unwrap();
        let v = assemble_condition_volume(&v0, &vn, &l).unwrap();
        assert_eq!(v.shape, vec![13, 1, 2, 2]);
        let zero_slices = v.data.chunks(4).filter(|s| s.iter().all(|&x| x == 0.0)).count();
        assert_eq!(zero_slices, 11);
        let two = Layout::new(2, 16, 8, 2, 8, 4).unwrap();
        let v = assemble_condition_volume(&v0, &vn, &two).unwrap();
        assert_eq!(v.data, [v0.data.clone(), vn.data.clone()].concat());
        let one = Layout::new(1, 16, 8, 2, 8, 4).unwrap();
        assert!(assemble_condition_volume(&v0, &vn, &one).is_err());
    }

    #[test]
    fn stacking_round_trips() {
        let l = Layout::new(9, 16, 16, 3, 8, 4).unwrap();
        let block = |seed: f32| {
            let n = l.block_shape().iter().product::<usize>();
            Tensor::new(l.block_shape(), "FHWC", (0..n).map(|i| i as f32 * seed).collect()).unwrap()
        };
        let (z, v, h) = (block(1.0), block(-0.5), block(0.25));
        let stack = assemble_model_input(&z, &v, &h, &l).unwrap();
        assert_eq!(stack.shape, vec![3, 2, 2, 9]);
        assert_eq!(split_model_input(&stack, &l).unwrap(), [z.clone(), v.clone(), h]);
        let wrong = Tensor::zeros(vec![2, 2, 2, 3], "FHWC");
        assert!(assemble_model_input(&z, &v, &wrong, &l).is_err());
    }

    #[test]
    fn encoder_tiles_channels_and_averages_groups() {
        let l = Layout::new(3, 2, 2, 4, 2, 4).unwrap();
        let enc = VideoEncoder::new(l);
        let frames: Vec<Image> = (0..3)
            .map(|f| Image::from_fn(2, 2, 2, |_, _, c| (f * 10 + c) as f32))
            .collect();
        let t = enc.encode_video(&frames).unwrap();
        assert_eq!(t.shape, vec![2, 1, 1, 4]);
        assert_eq!(t.data, vec![0.0, 1.0, 0.0, 1.0, 15.0, 16.0, 15.0, 16.0]);
    }

    #[test]
    fn sobel_constant_and_step() {
        let est = SobelEdgeEstimator {
            dilation: 0,
            ..Default::default()
        };
        let flat = Plane::filled(20, 12, 3.0f32);
        assert_eq!(est.edges(&flat).unwrap().count(), 0);
        let step = Plane::from_vec(
            20,
            12,
            (0..240).map(|i| if i % 20 < 9 { 2.0 } else { 4.0 }).collect(),
        )
        .unwrap();
        let e = est.edges(&step).unwrap();
        for y in 0..12 {
            let xs: Vec<usize> = (0..20).filter(|&x| *e.get(x, y)).collect();
            assert_eq!(xs.len(), 1, "row {y}: {xs:?}");
            assert!((8..=9).contains(&xs[0]));
        }
    }

    #[test]
    fn unbound_estimators_error() {
        let frame = Image::zeros(4, 4, 3);
        let none = GuidanceEstimators::default();
        assert!(matches!(
            simulate_structural_guidance(0, &frame, &none),
            Err(Error::Unbound(_))
        ));
    }

    #[test]
    fn prediction_shape_check() {
        let a = Tensor::zeros(vec![2, 3], "HW");
        assert!(check_prediction_shape(&a, &a.clone()).is_ok());
        assert!(check_prediction_shape(&a, &Tensor::zeros(vec![3, 2], "HW")).is_err());
    }
}
