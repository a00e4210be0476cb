//! Exact counting, ranking and sampling over k-combinations and k-multisets.
//!
//! Tuples are enumerated in lexicographic order: strictly increasing index
//! tuples when repetition is disallowed, non-decreasing tuples otherwise.
//! Nothing here materializes a combination space; a tuple is produced from its
//! rank on demand, so spaces of several hundred million elements are handled
//! by sampling ranks and unranking only the ones that are needed.
//!
//! All arithmetic is checked. Counts that do not fit the count type surface
//! as [`Error::Overflow`] rather than wrapping.

use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::CountInt;

/// `C(n, k)`; zero when `k > n`.
pub fn binomial<C: CountInt>(n: u64, k: u64) -> Result<C> {
    if k > n {
        return Ok(C::zero());
    }
    let k = k.min(n - k);
    let overflow = || Error::Overflow { what: format!("C({n}, {k})"), bits: C::BITS };
    let mut acc = C::one();
    // acc = C(n, i) after step i, so intermediates never exceed the result.
    for i in 0..k {
        let num = C::from_u64(n - i).ok_or_else(overflow)?;
        let den = C::from_u64(i + 1).ok_or_else(overflow)?;
        let g = gcd(acc, den);
        let reduced_den = den / g;
        debug_assert!((num % reduced_den).is_zero());
        acc = (acc / g).checked_mul(&(num / reduced_den)).ok_or_else(overflow)?;
    }
    Ok(acc)
}

/// Number of size-`k` multisets over `n` symbols, `C(n + k - 1, k)`.
pub fn multiset_binomial<C: CountInt>(n: u64, k: u64) -> Result<C> {
    if n == 0 {
        return if k == 0 { Ok(C::one()) } else { Ok(C::zero()) };
    }
    let top = n.checked_add(k - k.min(1)).ok_or_else(|| Error::Overflow {
        what: format!("multiset({n}, {k})"),
        bits: 64,
    })?;
    binomial(top, k)
}

fn gcd<C: CountInt>(mut a: C, mut b: C) -> C {
    while !b.is_zero() {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// The space of k-tuples over a population of `n` class-local indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinationSpace<C = crate::Count> {
    pub n: usize,
    pub k: usize,
    pub with_repetition: bool,
    size: C,
}

impl<C: CountInt> CombinationSpace<C> {
    pub fn new(n: usize, k: usize, with_repetition: bool) -> Result<Self> {
        let size = count_tuples(n, k, with_repetition)?;
        Ok(Self { n, k, with_repetition, size })
    }

    pub fn size(&self) -> C {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size.is_zero()
    }

    /// Tuples whose first free slot holds `value`, with `remaining` slots after it.
    fn completions(&self, value: usize, remaining: usize) -> Result<C> {
        if self.with_repetition {
            // Remaining values drawn from [value, n).
            multiset_binomial((self.n - value) as u64, remaining as u64)
        } else {
            // Remaining values drawn from (value, n).
            binomial((self.n - value - 1) as u64, remaining as u64)
        }
    }

    /// The `rank`-th tuple in lexicographic order.
    pub fn unrank(&self, rank: C) -> Result<Vec<usize>> {
        if rank >= self.size {
            return Err(Error::RankOutOfRange { rank: rank.to_string(), size: self.size.to_string() });
        }
        let mut rank = rank;
        let mut tuple = Vec::with_capacity(self.k);
        let mut lo = 0usize;
        for slot in 0..self.k {
            let remaining = self.k - slot - 1;
            let mut value = lo;
            loop {
                let block = self.completions(value, remaining)?;
                if rank < block {
                    break;
                }
                rank = rank - block;
                value += 1;
            }
            tuple.push(value);
            lo = if self.with_repetition { value } else { value + 1 };
        }
        Ok(tuple)
    }

    /// Inverse of [`unrank`](Self::unrank).
    pub fn rank(&self, tuple: &[usize]) -> Result<C> {
        self.check_tuple(tuple)?;
        let mut rank = C::zero();
        let mut lo = 0usize;
        for (slot, &value) in tuple.iter().enumerate() {
            let remaining = self.k - slot - 1;
            for skipped in lo..value {
                let block = self.completions(skipped, remaining)?;
                rank = rank.checked_add(&block).ok_or_else(|| Error::Overflow {
                    what: "combination rank".into(),
                    bits: C::BITS,
                })?;
            }
            lo = if self.with_repetition { value } else { value + 1 };
        }
        Ok(rank)
    }

    fn check_tuple(&self, tuple: &[usize]) -> Result<()> {
        if tuple.len() != self.k {
            return Err(Error::MalformedTuple(format!("length {} != k {}", tuple.len(), self.k)));
        }
        if let Some(&bad) = tuple.iter().find(|&&v| v >= self.n) {
            return Err(Error::MalformedTuple(format!("index {bad} out of range for n = {}", self.n)));
        }
        let ordered = tuple
            .windows(2)
            .all(|w| if self.with_repetition { w[0] <= w[1] } else { w[0] < w[1] });
        if !ordered {
            let need = if self.with_repetition { "non-decreasing" } else { "strictly increasing" };
            return Err(Error::MalformedTuple(format!("{tuple:?} is not {need}")));
        }
        Ok(())
    }
}

fn count_tuples<C: CountInt>(n: usize, k: usize, with_repetition: bool) -> Result<C> {
    if with_repetition {
        multiset_binomial(n as u64, k as u64)
    } else {
        binomial(n as u64, k as u64)
    }
}

/// Convenience wrapper over [`CombinationSpace::unrank`].
pub fn unrank_combination<C: CountInt>(space: &CombinationSpace<C>, rank: C) -> Result<Vec<usize>> {
    space.unrank(rank)
}

/// Convenience wrapper over [`CombinationSpace::rank`].
pub fn rank_combination<C: CountInt>(space: &CombinationSpace<C>, tuple: &[usize]) -> Result<C> {
    space.rank(tuple)
}

/// Draw `count` distinct ranks uniformly from `[0, space_size)`, sorted ascending.
///
/// Rejection against a hash set of chosen ranks; when more than half the
/// space is requested the complement is sampled instead. The stream is a
/// ChaCha8 generator seeded with `seed`, so results are identical across
/// platforms and thread counts.
pub fn sample_distinct_ranks<C: CountInt>(space_size: C, count: C, seed: u64) -> Result<Vec<C>> {
    if count > space_size {
        return Err(Error::CountExceedsSpace { count: count.to_string(), size: space_size.to_string() });
    }
    let size = space_size.to_u128().expect("count types fit in u128");
    let want = count.to_u128().expect("count types fit in u128");
    let to_c = |v: u128| C::from_u128(v).expect("sampled rank is below a C-typed bound");

    if want == size {
        return Ok((0..size).map(to_c).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complement = want > size / 2;
    let draws = if complement { size - want } else { want };
    let draws = usize::try_from(draws).map_err(|_| Error::CountExceedsSpace {
        count: count.to_string(),
        size: space_size.to_string(),
    })?;

    let mut chosen = HashSet::with_capacity(draws);
    while chosen.len() < draws {
        chosen.insert(uniform_below(&mut rng, size));
    }

    let mut out: Vec<u128> = if complement {
        // size <= 2 * want here, so walking the whole space is bounded by the output.
        (0..size).filter(|r| !chosen.contains(r)).collect()
    } else {
        chosen.into_iter().collect()
    };
    out.sort_unstable();
    Ok(out.into_iter().map(to_c).collect())
}

/// Uniform value in `[0, bound)` by masked rejection over raw 64-bit words.
fn uniform_below<R: RngCore>(rng: &mut R, bound: u128) -> u128 {
    debug_assert!(bound > 0);
    let max = bound - 1;
    let mask = if max == 0 { 0 } else { u128::MAX >> max.leading_zeros() };
    loop {
        let hi = if mask >> 64 == 0 { 0 } else { rng.next_u64() as u128 };
        let v = ((hi << 64) | rng.next_u64() as u128) & mask;
        if v <= max {
            return v;
        }
    }
}

/// One splitmix64 step (wrapping arithmetic):
///
/// ```text
/// z = z + 0x9e3779b97f4a7c15
/// z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
/// z = (z ^ (z >> 27)) * 0x94d049bb133111eb
/// z ^ (z >> 31)
/// ```
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over the UTF-8 bytes of `s` (offset `0xcbf29ce484222325`, prime `0x100000001b3`).
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Per-class seed: `splitmix64(global_seed ^ splitmix64(fnv1a64(class_name)))`.
///
/// Depends only on the global seed and the class's own name, so adding or
/// removing classes never changes another class's samples.
pub fn class_seed(global_seed: u64, class_name: &str) -> u64 {
    splitmix64(global_seed ^ splitmix64(stable_hash(class_name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_table_values() {
        assert_eq!(binomial::<u128>(1231, 3).unwrap(), 310_144_295);
        assert_eq!(binomial::<u128>(22, 3).unwrap(), 1_540);
        assert_eq!(binomial::<u128>(101, 3).unwrap(), 166_650);
        assert_eq!(binomial::<u128>(17, 0).unwrap(), 1);
        assert_eq!(binomial::<u128>(0, 0).unwrap(), 1);
        assert_eq!(binomial::<u128>(2, 3).unwrap(), 0);
    }

    #[test]
    fn binomial_overflow_is_loud() {
        assert!(matches!(binomial::<u32>(40, 20), Err(Error::Overflow { bits: 32, .. })));
        // C(130, 65) ~ 9.5e37 fits u128; C(140, 70) ~ 9.4e40 does not.
        assert!(binomial::<u128>(130, 65).is_ok());
        assert!(matches!(binomial::<u128>(140, 70), Err(Error::Overflow { bits: 128, .. })));
        // The largest u64 binomial row entry that still fits.
        assert_eq!(binomial::<u64>(67, 33).unwrap(), 14_226_520_737_620_288_370);
        assert!(binomial::<u64>(68, 34).is_err());
    }

    #[test]
    fn multiset_values() {
        assert_eq!(multiset_binomial::<u128>(3, 2).unwrap(), 6);
        assert_eq!(multiset_binomial::<u128>(1, 5).unwrap(), 1);
        assert_eq!(multiset_binomial::<u128>(22, 3).unwrap(), 2_024);
        assert_eq!(multiset_binomial::<u128>(5, 0).unwrap(), 1);
    }

    #[test]
    fn unrank_examples() {
        let s = CombinationSpace::<u128>::new(4, 2, false).unwrap();
        assert_eq!(s.unrank(0).unwrap(), vec![0, 1]);
        assert_eq!(s.unrank(5).unwrap(), vec![2, 3]);
        assert!(matches!(s.unrank(6), Err(Error::RankOutOfRange { .. })));

        let r = CombinationSpace::<u128>::new(3, 2, true).unwrap();
        assert_eq!(r.unrank(2).unwrap(), vec![0, 2]);
        assert_eq!(r.rank(&[2, 2]).unwrap(), 5);
    }

    #[test]
    fn rank_rejects_malformed() {
        let s = CombinationSpace::<u128>::new(4, 2, false).unwrap();
        assert!(matches!(s.rank(&[1, 1]), Err(Error::MalformedTuple(_))));
        assert!(matches!(s.rank(&[2, 1]), Err(Error::MalformedTuple(_))));
        assert!(matches!(s.rank(&[0, 4]), Err(Error::MalformedTuple(_))));
        assert!(matches!(s.rank(&[0]), Err(Error::MalformedTuple(_))));
        let r = CombinationSpace::<u128>::new(4, 2, true).unwrap();
        assert_eq!(r.rank(&[1, 1]).unwrap(), 4);
    }

    #[test]
    fn unrank_large_space_endpoints() {
        let s = CombinationSpace::<u128>::new(1231, 3, false).unwrap();
        assert_eq!(s.unrank(0).unwrap(), vec![0, 1, 2]);
        assert_eq!(s.unrank(s.size() - 1).unwrap(), vec![1228, 1229, 1230]);
        let mid = s.unrank(155_072_147).unwrap();
        assert_eq!(s.rank(&mid).unwrap(), 155_072_147);
    }

    #[test]
    fn sampling_edges() {
        assert_eq!(sample_distinct_ranks::<u128>(10, 10, 99).unwrap(), (0..10).collect::<Vec<_>>());
        assert!(sample_distinct_ranks::<u128>(0, 0, 1).unwrap().is_empty());
        assert!(matches!(sample_distinct_ranks::<u128>(3, 4, 1), Err(Error::CountExceedsSpace { .. })));
        // complement path
        let v = sample_distinct_ranks::<u128>(10, 8, 7).unwrap();
        assert_eq!(v.len(), 8);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn class_seed_is_name_local() {
        assert_eq!(class_seed(42, "AMD"), class_seed(42, "AMD"));
        assert_ne!(class_seed(42, "AMD"), class_seed(42, "DME"));
        assert_ne!(class_seed(42, "AMD"), class_seed(43, "AMD"));
        // FNV-1a reference value for the empty string is the offset basis.
        assert_eq!(stable_hash(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(stable_hash("a"), 0xaf63_dc4c_8601_ec8c);
    }
}
