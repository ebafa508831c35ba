//! Counter-based random streams.
//!
//! Every variate is a pure function of `(seed, stream id, step id, draw slot)`,
//! computed with the Philox4x32-10 block cipher. Two consumers that read the
//! same slots of the same stream see identical numbers regardless of thread
//! scheduling, which is what the pathwise comparisons in [`crate::ess`] rely on.

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32 block with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible stream of random variates.
///
/// The Philox key is derived from the seed and a chain of stream ids; the
/// 128-bit counter holds the step id (high half) and the draw slot (low half).
/// Each Philox block yields two `u64` slots.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    step: u64,
    slot: u64,
    buffered: Option<u64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
            step: 0,
            slot: 0,
            buffered: None,
        }
    }

    /// Independent child stream, e.g. one per chain or per test.
    pub fn substream(&self, id: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(id.wrapping_add(0x5851_F42D_4C95_7F2D))),
            step: 0,
            slot: 0,
            buffered: None,
        }
    }

    /// The same stream positioned at slot 0 of `step`.
    pub fn at_step(&self, step: u64) -> Self {
        Self {
            key: self.key,
            step,
            slot: 0,
            buffered: None,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Number of 64-bit slots consumed so far in the current step.
    pub fn slots_consumed(&self) -> u64 {
        if self.buffered.is_some() {
            self.slot * 2 - 1
        } else {
            self.slot * 2
        }
    }

    fn block(&self, block_index: u64) -> [u32; 4] {
        let counter = [
            block_index as u32,
            (block_index >> 32) as u32,
            self.step as u32,
            (self.step >> 32) as u32,
        ];
        philox4x32_10(counter, [self.key as u32, (self.key >> 32) as u32])
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        if let Some(w) = self.buffered.take() {
            return w;
        }
        let b = self.block(self.slot);
        self.slot += 1;
        self.buffered = Some(u64::from(b[2]) | (u64::from(b[3]) << 32));
        u64::from(b[0]) | (u64::from(b[1]) << 32)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_word() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.next_word() as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors from the Random123 distribution.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn slots_are_addressable() {
        let base = RngStream::new(7).substream(3);
        let mut a = base.at_step(11);
        let seq: Vec<u64> = (0..9).map(|_| a.next_word()).collect();
        let mut b = base.at_step(11);
        for w in &seq {
            assert_eq!(*w, b.next_word());
        }
        assert_eq!(a.slots_consumed(), 9);
        let mut other = base.at_step(12);
        assert_ne!(seq[0], other.next_word());
        let mut sibling = RngStream::new(7).substream(4).at_step(11);
        assert_ne!(seq[0], sibling.next_word());
    }

    #[test]
    fn uniform_ranges() {
        let mut s = RngStream::new(1);
        let mut sum = 0.0;
        let n = 200_000;
        for _ in 0..n {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = s.uniform_open();
            assert!(v > 0.0 && v < 1.0);
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / n as f64).sqrt());
    }
}
