use super::bitvec::RankBitVec;

/// Wavelet matrix over 32-bit symbols: `rank(c, i)` in O(log σ) and
/// enumeration of the distinct symbols of a range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WaveletMatrix {
    len: usize,
    levels: Vec<RankBitVec>,
    zeros: Vec<usize>,
}

impl WaveletMatrix {
    pub fn new(seq: &[u32]) -> Self {
        let max = seq.iter().copied().max().unwrap_or(0);
        let bits = (32 - max.leading_zeros()).max(1) as usize;
        let mut cur = seq.to_vec();
        let mut levels = Vec::with_capacity(bits);
        let mut zeros = Vec::with_capacity(bits);
        let mut next = Vec::with_capacity(seq.len());
        for level in 0..bits {
            let shift = bits - 1 - level;
            let bv = RankBitVec::from_bits(cur.iter().map(|&v| (v >> shift) & 1 == 1));
            next.clear();
            next.extend(cur.iter().filter(|&&v| (v >> shift) & 1 == 0));
            zeros.push(next.len());
            next.extend(cur.iter().filter(|&&v| (v >> shift) & 1 == 1));
            std::mem::swap(&mut cur, &mut next);
            levels.push(bv);
        }
        Self {
            len: seq.len(),
            levels,
            zeros,
        }
    }

    pub(crate) fn from_levels(len: usize, levels: Vec<RankBitVec>) -> Option<Self> {
        if levels.is_empty() || levels.len() > 32 || levels.iter().any(|l| l.len() != len) {
            return None;
        }
        let zeros = levels.iter().map(|l| l.rank0(len)).collect();
        Some(Self { len, levels, zeros })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn levels(&self) -> &[RankBitVec] {
        &self.levels
    }

    fn bits(&self) -> usize {
        self.levels.len()
    }

    pub fn access(&self, mut i: usize) -> u32 {
        let mut value = 0u32;
        for (l, bv) in self.levels.iter().enumerate() {
            let bit = bv.get(i);
            value = (value << 1) | bit as u32;
            i = if bit { self.zeros[l] + bv.rank1(i) } else { bv.rank0(i) };
        }
        value
    }

    /// Occurrences of `c` in `[0, i)`.
    pub fn rank(&self, c: u32, i: usize) -> usize {
        self.rank_pair(c, i, i).0
    }

    /// `(rank(c, lo), rank(c, hi))` sharing one descent.
    pub fn rank_pair(&self, c: u32, mut lo: usize, mut hi: usize) -> (usize, usize) {
        if self.bits() < 32 && (c >> self.bits()) != 0 {
            return (0, 0);
        }
        let mut p = 0;
        for (l, bv) in self.levels.iter().enumerate() {
            let shift = self.bits() - 1 - l;
            if (c >> shift) & 1 == 1 {
                let z = self.zeros[l];
                lo = z + bv.rank1(lo);
                hi = z + bv.rank1(hi);
                p = z + bv.rank1(p);
            } else {
                lo = bv.rank0(lo);
                hi = bv.rank0(hi);
                p = bv.rank0(p);
            }
        }
        (lo - p, hi - p)
    }

    /// Call `f(symbol, rank(symbol, lo), rank(symbol, hi))` for every symbol
    /// occurring in `[lo, hi)`, in ascending symbol order.
    pub fn distinct_in_range<F: FnMut(u32, usize, usize)>(&self, lo: usize, hi: usize, mut f: F) {
        if lo < hi {
            self.descend(0, lo, hi, 0, 0, &mut f);
        }
    }

    fn descend<F: FnMut(u32, usize, usize)>(
        &self,
        level: usize,
        lo: usize,
        hi: usize,
        p: usize,
        value: u32,
        f: &mut F,
    ) {
        if level == self.bits() {
            f(value, lo - p, hi - p);
            return;
        }
        let bv = &self.levels[level];
        let (lo0, hi0, p0) = (bv.rank0(lo), bv.rank0(hi), bv.rank0(p));
        if lo0 < hi0 {
            self.descend(level + 1, lo0, hi0, p0, value << 1, f);
        }
        let z = self.zeros[level];
        let (lo1, hi1) = (z + (lo - lo0), z + (hi - hi0));
        if lo1 < hi1 {
            self.descend(level + 1, lo1, hi1, z + (p - p0), (value << 1) | 1, f);
        }
    }
}
