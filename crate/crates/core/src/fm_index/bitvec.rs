/// Words per rank superblock (512 bits).
pub(crate) const SUPERBLOCK_WORDS: usize = 8;

/// A plain bitvector with O(1) rank: one cumulative count per 512-bit
/// superblock plus popcounts inside the block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankBitVec {
    len: usize,
    words: Vec<u64>,
    supers: Vec<u64>,
}

impl RankBitVec {
    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % 64 == 0 {
                words.push(0u64);
            }
            if bit {
                *words.last_mut().expect("pushed above") |= 1 << (len % 64);
            }
            len += 1;
        }
        Self::from_words(len, words)
    }

    pub fn from_words(len: usize, words: Vec<u64>) -> Self {
        let supers = superblocks(&words);
        Self { len, words, supers }
    }

    /// Rebuild from serialized parts, verifying the stored superblocks.
    pub fn from_parts(len: usize, words: Vec<u64>, supers: Vec<u64>) -> Option<Self> {
        if words.len() != len.div_ceil(64) || supers != superblocks(&words) {
            return None;
        }
        Some(Self { len, words, supers })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn superblock_counts(&self) -> &[u64] {
        &self.supers
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Number of set bits in `[0, i)`.
    #[inline]
    pub fn rank1(&self, i: usize) -> usize {
        debug_assert!(i <= self.len);
        let word = i / 64;
        let sb = word / SUPERBLOCK_WORDS;
        let mut r = self.supers[sb] as usize;
        for w in &self.words[sb * SUPERBLOCK_WORDS..word] {
            r += w.count_ones() as usize;
        }
        let bit = i % 64;
        if bit != 0 {
            r += (self.words[word] & ((1u64 << bit) - 1)).count_ones() as usize;
        }
        r
    }

    #[inline]
    pub fn rank0(&self, i: usize) -> usize {
        i - self.rank1(i)
    }

    pub fn count_ones(&self) -> usize {
        self.rank1(self.len)
    }
}

fn superblocks(words: &[u64]) -> Vec<u64> {
    // one entry per superblock start, plus a trailing total so rank1(len) never
    // indexes past the end
    let mut supers = Vec::with_capacity(words.len() / SUPERBLOCK_WORDS + 2);
    let mut acc = 0u64;
    for (i, w) in words.iter().enumerate() {
        if i % SUPERBLOCK_WORDS == 0 {
            supers.push(acc);
        }
        acc += w.count_ones() as u64;
    }
    if words.len().is_multiple_of(SUPERBLOCK_WORDS) {
        supers.push(acc);
    }
    supers
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn rank_matches_prefix_popcount(bits in proptest::collection::vec(any::<bool>(), 0..2000)) {
            let bv = RankBitVec::from_bits(bits.iter().copied());
            let mut ones = 0;
            for (i, &b) in bits.iter().enumerate() {
                prop_assert_eq!(bv.rank1(i), ones);
                prop_assert_eq!(bv.get(i), b);
                ones += b as usize;
            }
            prop_assert_eq!(bv.rank1(bits.len()), ones);
        }
    }

    #[test]
    fn empty_and_word_aligned_lengths() {
        let bv = RankBitVec::from_bits(std::iter::empty());
        assert_eq!(bv.rank1(0), 0);
        let bv = RankBitVec::from_bits(std::iter::repeat_n(true, 512));
        assert_eq!(bv.rank1(512), 512);
        assert_eq!(bv.rank0(512), 0);
    }
}
