/// Suffix array by prefix doubling: O(N log² N) worst case, usually a handful
/// of rounds on natural text. Requires `text.len() < u32::MAX`.
pub fn suffix_array(text: &[u32]) -> Vec<u32> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sa: Vec<u32> = (0..n as u32).collect();
    let mut rank: Vec<u32> = text.to_vec();
    let mut tmp = vec![0u32; n];
    let mut k = 1usize;
    loop {
        let key = |i: u32| {
            let i = i as usize;
            let second = if i + k < n { rank[i + k] as u64 + 1 } else { 0 };
            ((rank[i] as u64) << 32) | second
        };
        sa.sort_unstable_by_key(|&i| key(i));
        tmp[sa[0] as usize] = 0;
        for w in 1..n {
            let bump = (key(sa[w]) != key(sa[w - 1])) as u32;
            tmp[sa[w] as usize] = tmp[sa[w - 1] as usize] + bump;
        }
        std::mem::swap(&mut rank, &mut tmp);
        if rank[sa[n - 1] as usize] as usize == n - 1 || k >= n {
            break;
        }
        k *= 2;
    }
    sa
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(text: &[u32]) -> Vec<u32> {
        let mut sa: Vec<u32> = (0..text.len() as u32).collect();
        sa.sort_by(|&a, &b| text[a as usize..].cmp(&text[b as usize..]));
        sa
    }

    #[test]
    fn banana() {
        let text: Vec<u32> = b"banana".iter().map(|&b| b as u32).collect();
        assert_eq!(suffix_array(&text), vec![5, 3, 1, 0, 4, 2]);
    }

    proptest! {
        #[test]
        fn matches_naive_sort(text in proptest::collection::vec(0u32..4, 0..300)) {
            prop_assert_eq!(suffix_array(&text), naive(&text));
        }
    }
}
