//! Binary index format.
//!
//! ```text
//! "RFMI" | version u8 | N u64 | fingerprint u64 | sample_rate u32
//! counts:   len u64, u64 * len
//! bwt:      levels u8, per level: words u64, u64 * words
//! rank:     per level: supers u64, u64 * supers
//! samples:  words u64, u64 * words, supers u64, u64 * supers, count u64, u64 * count
//! keys:     count u64, u64 * count
//! ```
//!
//! All integers little-endian. Loading re-derives every redundant structure
//! and rejects anything inconsistent.

use std::path::Path;

use super::{FmIndex, IndexError, RankBitVec, WaveletMatrix, FORMAT_VERSION, MAGIC};

impl FmIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        put_u64(&mut out, self.len as u64);
        put_u64(&mut out, self.fingerprint);
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        put_vec(&mut out, &self.counts);
        let levels = self.bwt.levels();
        out.push(levels.len() as u8);
        for level in levels {
            put_vec(&mut out, level.words());
        }
        for level in levels {
            put_vec(&mut out, level.superblock_counts());
        }
        put_vec(&mut out, self.sampled.words());
        put_vec(&mut out, self.sampled.superblock_counts());
        put_vec(&mut out, &self.samples);
        put_vec(&mut out, &self.key_starts);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = r.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(version));
        }
        let len = r.u64()? as usize;
        let fingerprint = r.u64()?;
        let sample_rate = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if sample_rate == 0 {
            return Err(IndexError::BadSampleRate);
        }
        if len < 2 {
            return Err(corrupt("text shorter than one key"));
        }
        let counts = r.vec()?;
        if counts.len() < 2
            || counts[0] != 0
            || counts.last() != Some(&(len as u64))
            || counts.windows(2).any(|w| w[0] > w[1])
        {
            return Err(corrupt("symbol counts"));
        }
        let nlevels = r.take(1)?[0] as usize;
        let words: Vec<Vec<u64>> = (0..nlevels).map(|_| r.vec()).collect::<Result<_, _>>()?;
        let mut levels = Vec::with_capacity(nlevels);
        for w in words {
            let supers = r.vec()?;
            levels.push(RankBitVec::from_parts(len, w, supers).ok_or_else(|| corrupt("bwt level"))?);
        }
        let bwt = WaveletMatrix::from_levels(len, levels).ok_or_else(|| corrupt("bwt levels"))?;
        let sampled_words = r.vec()?;
        let sampled_supers = r.vec()?;
        let sampled =
            RankBitVec::from_parts(len, sampled_words, sampled_supers).ok_or_else(|| corrupt("sample marks"))?;
        let samples = r.vec()?;
        if samples.len() != sampled.count_ones() || samples.iter().any(|&s| s >= len as u64) {
            return Err(corrupt("suffix-array samples"));
        }
        let key_starts = r.vec()?;
        if key_starts.first() != Some(&0)
            || key_starts.windows(2).any(|w| w[0] >= w[1])
            || key_starts.last().is_some_and(|&s| s + 3 > len as u64)
        {
            return Err(corrupt("key start table"));
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self::assemble(
            len,
            counts,
            bwt,
            sampled,
            samples,
            sample_rate,
            key_starts,
            fingerprint,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn corrupt(what: &str) -> IndexError {
    IndexError::Corrupt(what.to_string())
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_vec(out: &mut Vec<u8>, values: &[u64]) {
    put_u64(out, values.len() as u64);
    for &v in values {
        put_u64(out, v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).ok_or(IndexError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(IndexError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn vec(&mut self) -> Result<Vec<u64>, IndexError> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(IndexError::Truncated);
        }
        (0..n).map(|_| self.u64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FmIndex {
        FmIndex::build([&[7u32, 8, 9][..], &[9, 8, 7, 7]], 0xfeed, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let idx = sample();
        let bytes = idx.to_bytes();
        let back = FmIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(&bytes[..4], b"RFMI");
    }

    #[test]
    fn every_truncation_is_reported() {
        let bytes = sample().to_bytes();
        for cut in 0..bytes.len() {
            let err = FmIndex::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, IndexError::Truncated | IndexError::BadMagic),
                "cut {cut}: {err}"
            );
        }
    }

    #[test]
    fn version_bump_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4] += 1;
        let err = FmIndex::from_bytes(&bytes).unwrap_err();
        assert_eq!(err.to_string(), "unsupported version 2");
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert!(matches!(FmIndex::from_bytes(&bytes), Err(IndexError::Corrupt(_))));
    }
}
