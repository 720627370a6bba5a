//! Sign-random-projection LSH: footprints, Hamming distance and the
//! cosine estimate derived from it.
//!
//! Hyperplanes are drawn from ChaCha20 (a counter-based generator) keyed by the
//! little-endian bytes of the 64-bit seed, zero-padded to 32 bytes. Entries are
//! standard normal via the ziggurat sampler in `rand_distr`, drawn plane-major:
//! all `p` coordinates of plane 0, then plane 1, and so on. Both algorithms
//! are platform independent, so `(seed, b, p)` fully determines every
//! footprint and only those three numbers are persisted.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const WORD_BITS: usize = 64;

/// Deterministic ChaCha20 generator for a 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// `b` random hyperplanes in `p` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneSet {
    seed: u64,
    bits: usize,
    dim: usize,
    planes: Vec<f32>,
}

impl HyperplaneSet {
    pub fn sample(seed: u64, bits: usize, dim: usize) -> Result<Self> {
        validate_bits(bits)?;
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let planes = (0..bits * dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
            .collect();
        Ok(Self {
            seed,
            bits,
            dim,
            planes,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn plane(&self, i: usize) -> &[f32] {
        &self.planes[i * self.dim..(i + 1) * self.dim]
    }

    /// Bit `i` is set iff `plane_i · v > 0`; exact zeros map to 0.
    pub fn footprint(&self, v: &[f32]) -> Result<LshFootprint> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        let mut words = vec![0u64; self.bits / WORD_BITS];
        for (i, plane) in self.planes.chunks_exact(self.dim).enumerate() {
            let d: f64 = plane.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum();
            if d > 0.0 {
                words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
            }
        }
        Ok(LshFootprint { words })
    }
}

pub fn validate_bits(bits: usize) -> Result<()> {
    if bits == 0 || bits % WORD_BITS != 0 {
        return Err(Error::Config(format!(
            "LSH bit count must be a positive multiple of {WORD_BITS}, got {bits}"
        )));
    }
    Ok(())
}

/// Packed `b`-bit signature. Bit `i` lives in word `i / 64` at position `i % 64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LshFootprint {
    words: Vec<u64>,
}

impl LshFootprint {
    pub fn from_words(words: Vec<u64>) -> Self {
        Self { words }
    }

    pub fn zeros(bits: usize) -> Result<Self> {
        validate_bits(bits)?;
        Ok(Self {
            words: vec![0; bits / WORD_BITS],
        })
    }

    pub fn bits(&self) -> usize {
        self.words.len() * WORD_BITS
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize) {
        self.words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn complement(&self) -> Self {
        Self {
            words: self.words.iter().map(|w| !w).collect(),
        }
    }
}

/// Hamming distance over packed words of equal length.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Hamming distances from each footprint packed in `many` to `one`; `one`
/// sets the footprint width. Uses the hardware popcount when available.
pub fn hamming_many(many: &[u64], one: &[u64], out: &mut [u32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { hamming_many_popcnt(many, one, out) };
            return;
        }
    }
    hamming_many_portable(many, one, out);
}

#[inline(always)]
fn hamming_many_portable(many: &[u64], one: &[u64], out: &mut [u32]) {
    for (slot, chunk) in out.iter_mut().zip(many.chunks_exact(one.len())) {
        *slot = hamming_words(chunk, one);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn hamming_many_popcnt(many: &[u64], one: &[u64], out: &mut [u32]) {
    hamming_many_portable(many, one, out);
}

pub fn hamming(a: &LshFootprint, b: &LshFootprint) -> Result<u32> {
    if a.words.len() != b.words.len() {
        return Err(Error::FootprintMismatch(a.bits(), b.bits()));
    }
    Ok(hamming_words(&a.words, &b.words))
}

/// SimHash cosine estimate `cos(π·h/b)`.
pub fn cosine_estimate(a: &LshFootprint, b: &LshFootprint) -> Result<f64> {
    let h = hamming(a, b)?;
    Ok(cosine_from_hamming(h, a.bits()))
}

#[inline]
pub fn cosine_from_hamming(h: u32, bits: usize) -> f64 {
    (PI * h as f64 / bits as f64).cos()
}

/// Lookup table of `cos(π·h/b)` for every `h` in `0..=b`.
#[derive(Debug, Clone)]
pub struct CosineTable {
    bits: usize,
    values: Vec<f64>,
}

impl CosineTable {
    pub fn new(bits: usize) -> Self {
        let values = (0..=bits as u32).map(|h| cosine_from_hamming(h, bits)).collect();
        Self { bits, values }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    #[inline]
    pub fn get(&self, h: u32) -> f64 {
        self.values[h as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
        (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
    }

    #[test]
    fn hamming_many_matches_pairwise() {
        let mut rng = seeded_rng(8);
        let one: Vec<u64> = (0..4).map(|_| rng.random()).collect();
        let many: Vec<u64> = (0..12).map(|_| rng.random()).collect();
        let mut out = [0u32; 3];
        hamming_many(&many, &one, &mut out);
        for (i, h) in out.iter().enumerate() {
            assert_eq!(*h, hamming_words(&many[i * 4..i * 4 + 4], &one));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = HyperplaneSet::sample(7, 64, 8).unwrap();
        let b = HyperplaneSet::sample(7, 64, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_changes_planes() {
        let a = HyperplaneSet::sample(7, 64, 8).unwrap();
        let b = HyperplaneSet::sample(8, 64, 8).unwrap();
        assert_ne!(a.planes, b.planes);
    }

    #[test]
    fn unaligned_bits_rejected() {
        assert!(matches!(HyperplaneSet::sample(7, 63, 8), Err(Error::Config(_))));
        assert!(matches!(HyperplaneSet::sample(7, 0, 8), Err(Error::Config(_))));
        assert!(matches!(HyperplaneSet::sample(7, 64, 0), Err(Error::Config(_))));
    }

    #[test]
    fn footprint_dimension_checked() {
        let planes = HyperplaneSet::sample(1, 64, 4).unwrap();
        assert!(matches!(
            planes.footprint(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 4, actual: 2 })
        ));
    }

    #[test]
    fn negation_complements_footprint() {
        let planes = HyperplaneSet::sample(3, 128, 16).unwrap();
        let mut rng = seeded_rng(99);
        let v = random_vec(&mut rng, 16);
        let neg: Vec<f32> = v.iter().map(|x| -x).collect();
        let f = planes.footprint(&v).unwrap();
        assert_eq!(planes.footprint(&neg).unwrap(), f.complement());
    }

    #[test]
    fn hamming_basics() {
        let f = LshFootprint::from_words(vec![0xdead_beef, 0x1234]);
        assert_eq!(hamming(&f, &f).unwrap(), 0);
        assert_eq!(hamming(&f, &f.complement()).unwrap(), 128);
        let zero = LshFootprint::zeros(128).unwrap();
        let mut one = zero.clone();
        one.set_bit(77);
        assert_eq!(hamming(&zero, &one).unwrap(), 1);
        assert!(one.bit(77) && !one.bit(76));
    }

    #[test]
    fn hamming_length_mismatch() {
        let a = LshFootprint::zeros(64).unwrap();
        let b = LshFootprint::zeros(128).unwrap();
        assert!(matches!(hamming(&a, &b), Err(Error::FootprintMismatch(64, 128))));
        assert!(cosine_estimate(&a, &b).is_err());
    }

    #[test]
    fn cosine_estimate_endpoints() {
        let zero = LshFootprint::zeros(256).unwrap();
        assert_eq!(cosine_estimate(&zero, &zero).unwrap(), 1.0);
        let mut half = zero.clone();
        for i in 0..128 {
            half.set_bit(i);
        }
        assert!(cosine_estimate(&zero, &half).unwrap().abs() < 1e-15);
        assert_eq!(cosine_estimate(&zero, &zero.complement()).unwrap(), -1.0);
    }

    #[test]
    fn table_matches_direct_formula() {
        let t = CosineTable::new(256);
        for h in [0u32, 1, 64, 128, 200, 256] {
            assert_eq!(t.get(h), cosine_from_hamming(h, 256));
        }
    }

    #[test]
    fn popcount_of_random_vectors_is_binomial() {
        // Monte Carlo: Binomial(256, 0.5) has mean 128 and sd 8; the mean over
        // 10k vectors has sd 0.08, so the ±5 window is very loose.
        let dim = 32;
        let planes = HyperplaneSet::sample(11, 256, dim).unwrap();
        let mut rng = seeded_rng(12);
        let n = 10_000;
        let total: u64 = (0..n)
            .map(|_| planes.footprint(&random_vec(&mut rng, dim)).unwrap().popcount() as u64)
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 128.0).abs() <= 5.0, "mean popcount {mean}");
    }

    proptest! {
        #[test]
        fn positive_scale_invariance(
            v in proptest::collection::vec(-10.0f32..10.0, 24),
            c in 0.01f32..100.0,
        ) {
            let planes = HyperplaneSet::sample(5, 128, 24).unwrap();
            let scaled: Vec<f32> = v.iter().map(|x| x * c).collect();
            prop_assert_eq!(planes.footprint(&v).unwrap(), planes.footprint(&scaled).unwrap());
        }

        #[test]
        fn estimate_symmetric_and_bounded(a in proptest::collection::vec(any::<u64>(), 4),
                                          b in proptest::collection::vec(any::<u64>(), 4)) {
            let (fa, fb) = (LshFootprint::from_words(a), LshFootprint::from_words(b));
            let ab = cosine_estimate(&fa, &fb).unwrap();
            prop_assert_eq!(ab, cosine_estimate(&fb, &fa).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            let h = hamming(&fa, &fb).unwrap();
            prop_assert!(h as usize <= fa.bits());
        }
    }
}
