//! Convolutional feature extraction: a VGG-16-style convolutional base
//! (13 conv layers in 5 blocks, each block followed by 2x2 max pooling)
//! implemented from first principles, inference only.
//!
//! Weights come either from a binary weight file (for externally converted
//! pretrained bases) or from a deterministic, seeded random initialization.
//! The flattened activation after the final pool is the per-image feature
//! vector used by the classifiers; flattening order is channel, then row,
//! then column.

mod cache;

pub use cache::FeatureMatrix;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Tensor3;

/// Conv-layer counts and output channels per block: the fixed
/// [2, 2, 3, 3, 3] x [64, 128, 256, 512, 512] layout.
pub const BLOCKS: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];

/// Number of conv layers in the base.
pub const N_LAYERS: usize = 13;

/// Smallest input edge the full base accepts (one pixel left after 5 pools).
pub const MIN_INPUT_DIM: usize = 32;

/// `(in_ch, out_ch)` for each of the 13 conv layers in order.
pub fn channel_plan() -> Vec<(usize, usize)> {
    let mut plan = Vec::with_capacity(N_LAYERS);
    let mut prev = 3;
    for (n_convs, ch) in BLOCKS {
        for _ in 0..n_convs {
            plan.push((prev, ch));
            prev = ch;
        }
    }
    plan
}

/// One 3x3 convolution layer (padding 1, stride 1).
/// Weight storage: `weights[((oc * in_ch) + ic) * 9 + ky * 3 + kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    weights: Vec<f32>,
    biases: Vec<f32>,
}

impl ConvLayer {
    pub fn new(out_ch: usize, in_ch: usize, weights: Vec<f32>, biases: Vec<f32>) -> Result<Self> {
        if weights.len() != out_ch * in_ch * 9 {
            return Err(Error::ShapeMismatch(format!(
                "conv weights length {} != {out_ch}x{in_ch}x9",
                weights.len()
            )));
        }
        if biases.len() != out_ch {
            return Err(Error::ShapeMismatch(format!(
                "conv biases length {} != {out_ch}",
                biases.len()
            )));
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("conv layer has non-finite weights".into()));
        }
        Ok(ConvLayer {
            in_ch,
            out_ch,
            weights,
            biases,
        })
    }

    pub fn in_ch(&self) -> usize {
        self.in_ch
    }

    pub fn out_ch(&self) -> usize {
        self.out_ch
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn biases(&self) -> &[f32] {
        &self.biases
    }
}

/// How to populate a [`ConvBase`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseInit {
    Random { seed: u64 },
    Load { path: PathBuf },
}

/// The 13-layer convolutional base. Immutable once built; safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBase {
    layers: Vec<ConvLayer>,
}

impl ConvBase {
    pub fn build(init: &BaseInit) -> Result<Self> {
        match init {
            BaseInit::Random { seed } => Ok(Self::random(*seed)),
            BaseInit::Load { path } => Self::load(path),
        }
    }

    /// Deterministic He-style initialization: weights drawn from
    /// `N(0, sqrt(2 / (in_ch * 9)))` in storage order, layer by layer, from a
    /// ChaCha8 stream seeded with `seed`; biases zero.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = channel_plan()
            .into_iter()
            .map(|(in_ch, out_ch)| {
                let std = (2.0 / (in_ch as f64 * 9.0)).sqrt();
                let weights: Vec<f32> = (0..out_ch * in_ch * 9)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (z * std) as f32
                    })
                    .collect();
                ConvLayer::new(out_ch, in_ch, weights, vec![0.0; out_ch]).expect("valid shapes")
            })
            .collect();
        ConvBase { layers }
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    const MAGIC: &'static [u8; 4] = b"VGGW";
    const VERSION: u32 = 1;

    /// Writes the weight container: magic `VGGW`, version, layer count, then
    /// per layer `out_ch`, `in_ch`, weights, biases; little-endian throughout.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&Self::VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            buf.extend_from_slice(&(layer.out_ch as u32).to_le_bytes());
            buf.extend_from_slice(&(layer.in_ch as u32).to_le_bytes());
            for v in &layer.weights {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for v in &layer.biases {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io_path(path, "create", e))?;
        f.write_all(&buf)
            .map_err(|e| Error::io_path(path, "write", e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io_path(path, "read", e))?;
        let mut cur = Cursor::new(&bytes);
        let magic = cur.take_bytes(4, "magic")?;
        if magic != Self::MAGIC {
            return Err(Error::bad_format("weight", "magic mismatch"));
        }
        let version = cur.read_u32("version")?;
        if version != Self::VERSION {
            return Err(Error::bad_format(
                "weight",
                format!("unsupported version {version}"),
            ));
        }
        let n_layers = cur.read_u32("layer count")? as usize;
        if n_layers != N_LAYERS {
            return Err(Error::bad_format(
                "weight",
                format!("layer count {n_layers}, expected {N_LAYERS}"),
            ));
        }
        let plan = channel_plan();
        let mut layers = Vec::with_capacity(N_LAYERS);
        for (idx, (want_in, want_out)) in plan.into_iter().enumerate() {
            let out_ch = cur.read_u32(&format!("layer {idx} out_ch"))? as usize;
            let in_ch = cur.read_u32(&format!("layer {idx} in_ch"))? as usize;
            if (in_ch, out_ch) != (want_in, want_out) {
                return Err(Error::bad_format(
                    "weight",
                    format!(
                        "layer {idx} has shape {out_ch}x{in_ch}, expected {want_out}x{want_in}"
                    ),
                ));
            }
            let weights = cur.read_f32s(out_ch * in_ch * 9, &format!("layer {idx} weights"))?;
            let biases = cur.read_f32s(out_ch, &format!("layer {idx} biases"))?;
            layers.push(ConvLayer::new(out_ch, in_ch, weights, biases)?);
        }
        Ok(ConvBase { layers })
    }
}

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub fn take_bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::bad_format("binary", format!("truncated at {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take_bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn read_f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take_bytes(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn read_u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take_bytes(1, what)?[0])
    }

    pub fn read_f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take_bytes(n * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Reads bytes up to (and consuming) the next NUL.
    pub fn read_cstring(&mut self, what: &str) -> Result<String> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| Error::bad_format("binary", format!("unterminated {what}")))?;
        let s = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::bad_format("binary", format!("non-UTF-8 {what}")))?
            .to_string();
        self.pos += end + 1;
        Ok(s)
    }
}

// ---------------------------------------------------------------------------
// Core ops
// ---------------------------------------------------------------------------

/// 3x3 convolution, padding 1, stride 1: output spatial dims equal input.
/// `out[c][y][x] = bias_c + sum w[c][ic][ky][kx] * in[ic][y+ky-1][x+kx-1]`
/// with zero-padded borders.
pub fn conv2d(input: &Tensor3, layer: &ConvLayer) -> Result<Tensor3> {
    if input.channels() != layer.in_ch {
        return Err(Error::ShapeMismatch(format!(
            "conv input has {} channels, layer expects {}",
            input.channels(),
            layer.in_ch
        )));
    }
    let (h, w) = (input.height(), input.width());
    let (pw, ph) = (w + 2, h + 2);
    let pplane = pw * ph;
    // Zero-pad each input plane once; every output channel reuses them.
    let mut padded = vec![0f32; layer.in_ch * pplane];
    for c in 0..layer.in_ch {
        let src = input.plane(c);
        for y in 0..h {
            padded[c * pplane + (y + 1) * pw + 1..][..w].copy_from_slice(&src[y * w..][..w]);
        }
    }

    let use_wide = wide_kernel_available();
    let mut out = Tensor3::zeros(h, w, layer.out_ch);
    let plane = h * w;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(oc, out_plane)| {
            let wts = &layer.weights[oc * layer.in_ch * 9..][..layer.in_ch * 9];
            let bias = layer.biases[oc];
            if use_wide {
                // SAFETY: presence of avx2+fma was verified at runtime.
                unsafe { conv_plane_avx2(&padded, pw, h, w, layer.in_ch, wts, bias, out_plane) };
            } else {
                conv_plane(&padded, pw, h, w, layer.in_ch, wts, bias, out_plane);
            }
        });
    Ok(out)
}

fn wide_kernel_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn conv_plane_impl(
    padded: &[f32],
    pw: usize,
    h: usize,
    w: usize,
    in_ch: usize,
    wts: &[f32],
    bias: f32,
    out_plane: &mut [f32],
) {
    let pplane = pw * (h + 2);
    out_plane.fill(bias);
    for ic in 0..in_ch {
        let p = &padded[ic * pplane..][..pplane];
        let k = &wts[ic * 9..][..9];
        let (k0, k1, k2) = (k[0], k[1], k[2]);
        let (k3, k4, k5) = (k[3], k[4], k[5]);
        let (k6, k7, k8) = (k[6], k[7], k[8]);
        for y in 0..h {
            let r0 = &p[y * pw..][..w + 2];
            let r1 = &p[(y + 1) * pw..][..w + 2];
            let r2 = &p[(y + 2) * pw..][..w + 2];
            let orow = &mut out_plane[y * w..][..w];
            for x in 0..w {
                let acc = k0 * r0[x]
                    + k1 * r0[x + 1]
                    + k2 * r0[x + 2]
                    + k3 * r1[x]
                    + k4 * r1[x + 1]
                    + k5 * r1[x + 2]
                    + k6 * r2[x]
                    + k7 * r2[x + 1]
                    + k8 * r2[x + 2];
                orow[x] += acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_plane(
    padded: &[f32],
    pw: usize,
    h: usize,
    w: usize,
    in_ch: usize,
    wts: &[f32],
    bias: f32,
    out_plane: &mut [f32],
) {
    conv_plane_impl(padded, pw, h, w, in_ch, wts, bias, out_plane);
}

/// Same arithmetic as [`conv_plane`], recompiled for AVX2 vector width.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
#[allow(clippy::too_many_arguments)]
unsafe fn conv_plane_avx2(
    padded: &[f32],
    pw: usize,
    h: usize,
    w: usize,
    in_ch: usize,
    wts: &[f32],
    bias: f32,
    out_plane: &mut [f32],
) {
    conv_plane_impl(padded, pw, h, w, in_ch, wts, bias, out_plane);
}

#[cfg(not(target_arch = "x86_64"))]
#[allow(clippy::too_many_arguments)]
unsafe fn conv_plane_avx2(
    _padded: &[f32],
    _pw: usize,
    _h: usize,
    _w: usize,
    _in_ch: usize,
    _wts: &[f32],
    _bias: f32,
    _out_plane: &mut [f32],
) {
    unreachable!("wide kernel is never selected off x86_64")
}

/// Elementwise `max(0, v)`.
pub fn relu(mut t: Tensor3) -> Tensor3 {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
    t
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn maxpool2x2(t: &Tensor3) -> Result<Tensor3> {
    let (h, w, c) = (t.height(), t.width(), t.channels());
    if h < 2 || w < 2 {
        return Err(Error::ShapeMismatch(format!(
            "maxpool needs at least 2x2 input, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor3::zeros(oh, ow, c);
    for ch in 0..c {
        let src = t.plane(ch);
        let dst = &mut out.data_mut()[ch * oh * ow..][..oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let i = 2 * y * w + 2 * x;
                let m = src[i].max(src[i + 1]).max(src[i + w]).max(src[i + w + 1]);
                dst[y * ow + x] = m;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Full base
// ---------------------------------------------------------------------------

fn run_blocks(base: &ConvBase, input: &Tensor3, upto_block: usize) -> Result<Tensor3> {
    if input.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "base expects 3-channel input, got {}",
            input.channels()
        )));
    }
    let mut t = input.clone();
    let mut layer_idx = 0;
    for (block, (n_convs, _)) in BLOCKS.iter().enumerate().take(upto_block) {
        for _ in 0..*n_convs {
            t = relu(conv2d(&t, &base.layers[layer_idx])?);
            layer_idx += 1;
        }
        t = maxpool2x2(&t).map_err(|_| {
            Error::ShapeMismatch(format!(
                "input too small for block {}: {}x{} left before its pool",
                block + 1,
                t.height(),
                t.width()
            ))
        })?;
    }
    Ok(t)
}

/// Runs the full base and flattens the final activation in
/// (channel, row, column) order. Output length is
/// `floor(w/32) * floor(h/32) * 512`.
pub fn extract_features(base: &ConvBase, input: &Tensor3) -> Result<Vec<f32>> {
    if input.width() < MIN_INPUT_DIM || input.height() < MIN_INPUT_DIM {
        return Err(Error::ShapeMismatch(format!(
            "input {}x{} below network minimum {MIN_INPUT_DIM}x{MIN_INPUT_DIM}",
            input.width(),
            input.height()
        )));
    }
    Ok(run_blocks(base, input, 5)?.into_data())
}

/// Number of features the base produces for a given input size.
pub fn feature_len(width: usize, height: usize) -> usize {
    (width / 32) * (height / 32) * 512
}

/// Activation tensor immediately after the pool of block `block_index`
/// (1-based); spatial scale factor is `2^block_index`.
pub fn feature_map_at(base: &ConvBase, input: &Tensor3, block_index: usize) -> Result<Tensor3> {
    if !(1..=5).contains(&block_index) {
        return Err(Error::InvalidConfig(format!(
            "block index {block_index} outside 1..=5"
        )));
    }
    run_blocks(base, input, block_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_tensor(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor3 {
        let data: Vec<f32> = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor3::new(h, w, c, data).unwrap()
    }

    fn random_layer(out_ch: usize, in_ch: usize, rng: &mut ChaCha8Rng) -> ConvLayer {
        let weights: Vec<f32> = (0..out_ch * in_ch * 9)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let biases: Vec<f32> = (0..out_ch).map(|_| rng.gen_range(-0.5..0.5)).collect();
        ConvLayer::new(out_ch, in_ch, weights, biases).unwrap()
    }

    /// Direct six-nested-loop reference convolution.
    fn conv_reference(input: &Tensor3, layer: &ConvLayer) -> Tensor3 {
        let (h, w) = (input.height(), input.width());
        let mut out = Tensor3::zeros(h, w, layer.out_ch());
        for oc in 0..layer.out_ch() {
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let mut acc = layer.biases()[oc];
                    for ic in 0..layer.in_ch() {
                        for ky in 0..3i64 {
                            for kx in 0..3i64 {
                                let sy = y + ky - 1;
                                let sx = x + kx - 1;
                                if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                    continue;
                                }
                                let wgt = layer.weights()
                                    [((oc * layer.in_ch()) + ic) * 9 + (ky * 3 + kx) as usize];
                                acc += wgt * input.get(ic, sy as usize, sx as usize);
                            }
                        }
                    }
                    let idx = oc * h * w + (y as usize) * w + x as usize;
                    out.data_mut()[idx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut r = rng(1);
        let input = random_tensor(5, 7, 1, &mut r);
        let mut weights = vec![0f32; 9];
        weights[4] = 1.0;
        let layer = ConvLayer::new(1, 1, weights, vec![0.0]).unwrap();
        let out = conv2d(&input, &layer).unwrap();
        for (a, b) in out.data().iter().zip(input.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn ones_kernel_on_constant_interior_is_9v() {
        let input = Tensor3::new(4, 4, 1, vec![2.5; 16]).unwrap();
        let layer = ConvLayer::new(1, 1, vec![1.0; 9], vec![0.0]).unwrap();
        let out = conv2d(&input, &layer).unwrap();
        assert!((out.get(0, 1, 1) - 22.5).abs() < 1e-5);
        assert!((out.get(0, 2, 2) - 22.5).abs() < 1e-5);
        // corner only sees 4 contributors
        assert!((out.get(0, 0, 0) - 10.0).abs() < 1e-5);
    }

    #[test]
    fn conv_matches_reference_on_random_tensors() {
        let mut r = rng(7);
        for _ in 0..25 {
            let h = r.gen_range(1..=8);
            let w = r.gen_range(1..=8);
            let ic = r.gen_range(1..=4);
            let oc = r.gen_range(1..=4);
            let input = random_tensor(h, w, ic, &mut r);
            let layer = random_layer(oc, ic, &mut r);
            let got = conv2d(&input, &layer).unwrap();
            let want = conv_reference(&input, &layer);
            let max_diff = got
                .data()
                .iter()
                .zip(want.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(max_diff < 1e-6, "max diff {max_diff}");
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut r = rng(2);
        let input = random_tensor(4, 4, 2, &mut r);
        let layer = random_layer(1, 3, &mut r);
        assert!(matches!(
            conv2d(&input, &layer),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn conv_is_linear_in_input_with_zero_bias() {
        let mut r = rng(5);
        let input = random_tensor(6, 6, 2, &mut r);
        let mut layer = random_layer(3, 2, &mut r);
        layer.biases.iter_mut().for_each(|b| *b = 0.0);
        let scaled = Tensor3::new(6, 6, 2, input.data().iter().map(|v| v * 3.0).collect()).unwrap();
        let a = conv2d(&scaled, &layer).unwrap();
        let b = conv2d(&input, &layer).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y * 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn relu_clamps_and_is_idempotent() {
        let t = Tensor3::new(1, 3, 1, vec![-1.0, 0.0, 2.0]).unwrap();
        let r1 = relu(t);
        assert_eq!(r1.data(), &[0.0, 0.0, 2.0]);
        let r2 = relu(r1.clone());
        assert_eq!(r1, r2);
    }

    #[test]
    fn maxpool_basics() {
        let t = Tensor3::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(maxpool2x2(&t).unwrap().data(), &[4.0]);

        let t = Tensor3::new(5, 5, 1, vec![1.0; 25]).unwrap();
        let out = maxpool2x2(&t).unwrap();
        assert_eq!((out.height(), out.width()), (2, 2));
        assert!(out.data().iter().all(|&v| v == 1.0));

        let t = Tensor3::new(1, 4, 1, vec![0.0; 4]).unwrap();
        assert!(maxpool2x2(&t).is_err());
    }

    #[test]
    fn random_base_is_seed_deterministic() {
        let a = ConvBase::random(11);
        let b = ConvBase::random(11);
        assert_eq!(a, b);
        let c = ConvBase::random(12);
        assert_ne!(a, c);
    }

    #[test]
    fn weight_file_roundtrips_bit_exactly() {
        let base = ConvBase::random(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.vggw");
        base.save(&path).unwrap();
        let loaded = ConvBase::load(&path).unwrap();
        assert_eq!(base, loaded);
    }

    #[test]
    fn weight_file_errors_are_specific() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vggw");

        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            ConvBase::load(&path),
            Err(Error::BadFormat { .. })
        ));

        // Right magic/version, wrong layer count.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"VGGW");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        std::fs::write(&path, buf).unwrap();
        match ConvBase::load(&path) {
            Err(Error::BadFormat { detail, .. }) => assert!(detail.contains("layer count")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extract_feature_counts_for_small_inputs() {
        let base = ConvBase::random(1);
        let mut r = rng(9);
        let t64 = random_tensor(64, 64, 3, &mut r);
        assert_eq!(extract_features(&base, &t64).unwrap().len(), 2048);
        let t32 = random_tensor(32, 32, 3, &mut r);
        assert_eq!(extract_features(&base, &t32).unwrap().len(), 512);
        let t31 = random_tensor(31, 32, 3, &mut r);
        assert!(extract_features(&base, &t31).is_err());
    }

    #[test]
    fn feature_map_block_shapes() {
        let base = ConvBase::random(2);
        let mut r = rng(10);
        let t = random_tensor(64, 64, 3, &mut r);
        let b1 = feature_map_at(&base, &t, 1).unwrap();
        assert_eq!((b1.height(), b1.width(), b1.channels()), (32, 32, 64));
        let b2 = feature_map_at(&base, &t, 2).unwrap();
        assert_eq!((b2.height(), b2.width(), b2.channels()), (16, 16, 128));
        let b5 = feature_map_at(&base, &t, 5).unwrap();
        assert_eq!(b5.into_data(), extract_features(&base, &t).unwrap());
        assert!(feature_map_at(&base, &t, 0).is_err());
        assert!(feature_map_at(&base, &t, 6).is_err());
    }

    #[test]
    fn extraction_is_deterministic() {
        let base = ConvBase::random(4);
        let mut r = rng(13);
        let t = random_tensor(32, 32, 3, &mut r);
        let a = extract_features(&base, &t).unwrap();
        let b = extract_features(&base, &t).unwrap();
        assert_eq!(a, b);
    }
}
