//! Counter-based normal deviates.
//!
//! Every value is a pure function of `(seed, tag, index, lane)`, computed by
//! Philox4x32-10 followed by a Box–Muller transform. Generation order and
//! thread count therefore never affect the output.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// Uniform in the open interval (0, 1) from 53 random bits.
#[inline]
fn open_unit(hi: u32, lo: u32) -> f64 {
    let bits = ((hi as u64) << 32 | lo as u64) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Keyed source of standard normal deviates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormalStream {
    key: [u32; 2],
    tag: u64,
}

impl NormalStream {
    pub fn new(seed: u64, tag: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            tag,
        }
    }

    /// Two independent N(0, 1) deviates for counter `(index, lane)`.
    #[inline]
    pub fn pair(&self, index: u32, lane: u32) -> (f64, f64) {
        let r = philox4x32_10(
            [index, lane, self.tag as u32, (self.tag >> 32) as u32],
            self.key,
        );
        let u1 = open_unit(r[0], r[1]);
        let u2 = open_unit(r[2], r[3]);
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (radius * c, radius * s)
    }

    /// Fills `out` with the deviates for pixel `index`, one per channel.
    /// Channel `2k` and `2k + 1` share one Philox block.
    #[inline]
    pub fn fill_pixel(&self, index: u32, out: &mut [f32]) {
        let mut ch = 0;
        while ch < out.len() {
            let (a, b) = self.pair(index, (ch / 2) as u32);
            out[ch] = a as f32;
            if ch + 1 < out.len() {
                out[ch + 1] = b as f32;
            }
            ch += 2;
        }
    }

    /// Single deviate for `(index, channel)`, identical to what
    /// [`fill_pixel`](Self::fill_pixel) produces at that channel.
    #[inline]
    pub fn value(&self, index: u32, channel: u32) -> f32 {
        let (a, b) = self.pair(index, channel / 2);
        if channel.is_multiple_of(2) {
            a as f32
        } else {
            b as f32
        }
    }
}
