//! SplitMix64, the only source of randomness in the crate.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stateless SplitMix64 finalizer applied to `state + GOLDEN_GAMMA`; the first
/// output of an [`Rng`] seeded with `x` equals `splitmix64(x)`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the clip at `index` in a sorted batch.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ splitmix64(index)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = splitmix64(self.state);
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        out
    }

    /// Uniform draw from `[0, n)` by rejection sampling.
    ///
    /// Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        // Outputs below `2^64 mod n` are rejected so the accepted range is a multiple of n.
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform integer in `[lo, hi]`. A single-value range consumes no output.
    pub fn range_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        if lo == hi {
            return lo;
        }
        let span = (hi - lo) as u64 + 1;
        lo + self.below(span) as i64
    }

    /// Fisher-Yates, walking from the last index down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices drawn uniformly from `[0, n)`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below_usize(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_vectors() {
        // Published SplitMix64 outputs for seed 1234567.
        let mut rng = Rng::new(1_234_567);
        let expected = [
            6_457_827_717_110_365_317u64,
            3_203_168_211_198_807_973,
            9_817_491_932_198_370_423,
            4_593_380_528_125_082_431,
            16_408_922_859_458_223_821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn first_output_is_stateless_mix() {
        assert_eq!(Rng::new(42).next_u64(), splitmix64(42));
        assert_eq!(derive_seed(7, 0), 7 ^ splitmix64(0));
    }

    #[test]
    fn below_stays_in_range_and_covers() {
        let mut rng = Rng::new(9);
        let mut seen = [0u32; 7];
        for _ in 0..7000 {
            seen[rng.below_usize(7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 850 && c < 1150), "{seen:?}");
    }

    #[test]
    fn range_and_sample() {
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            let v = rng.range_inclusive(-2, 2);
            assert!((-2..=2).contains(&v));
        }
        let before = rng.clone();
        assert_eq!(rng.range_inclusive(5, 5), 5);
        assert_eq!(rng, before);

        let mut s = rng.sample_indices(20, 20);
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
        let s = rng.sample_indices(100, 10);
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 10);
    }
}
