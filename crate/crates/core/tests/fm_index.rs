//! FM-index behaviour against brute-force scans of the raw key list.

mod common;

use common::{fixture, ids, naive_continuations, naive_locate, naive_text_len};
use keyweave::corpus::KeyStrategy;
use keyweave::fm_index::{FmIndex, IndexError, KeyHit};
use keyweave::tokenizer::{Scheme, TokenId, KEY_END, RESERVED, SEP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_keys() -> common::Fixture {
    fixture(
        &["the cat sat", "the cat ran", "a dog ran"],
        KeyStrategy::Sentence,
        Scheme::Word,
    )
}

fn bodies(f: &common::Fixture) -> Vec<Vec<TokenId>> {
    f.keys.token_forms().map(<[TokenId]>::to_vec).collect()
}

fn random_keys(rng: &mut ChaCha8Rng, total: usize, alphabet: u32) -> Vec<Vec<TokenId>> {
    let mut keys = Vec::new();
    let mut n = 0;
    while n < total {
        let len = rng.random_range(1..=12);
        keys.push(
            (0..len)
                .map(|_| RESERVED + rng.random_range(0..alphabet))
                .collect::<Vec<_>>(),
        );
        n += len + 1;
    }
    keys
}

#[test]
fn single_byte_key_layout() {
    let f = fixture(&["ab"], KeyStrategy::Sentence, Scheme::Byte);
    assert_eq!(f.fm.text_len(), 4);
    assert_eq!(f.fm.count(f.fm.find(&ids(&f.vocab, "a"))), 1);
}

#[test]
fn duplicate_keys_merge_before_indexing() {
    let f = fixture(&["aa", "aa"], KeyStrategy::Sentence, Scheme::Byte);
    assert_eq!(f.keys.len(), 1);
    assert_eq!(f.fm.text_len(), 4);
}

#[test]
fn reconstruction_matches_concatenation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let keys = random_keys(&mut rng, 10_000, 40);
    let fm = FmIndex::build(keys.iter().map(Vec::as_slice), 1, 32).unwrap();
    let mut expected = Vec::new();
    for k in &keys {
        expected.extend_from_slice(k);
        expected.push(KEY_END);
    }
    expected.push(SEP);
    assert_eq!(fm.reconstruct_text(), expected);
}

#[test]
fn root_semantics() {
    let f = three_keys();
    let root = f.fm.root();
    assert_eq!((root.lo, root.hi, root.depth), (0, f.fm.text_len(), 0));
    assert_eq!(f.fm.count(root), naive_text_len(&bodies(&f)));
    let absent = f.vocab.len() as TokenId + 3;
    assert!(f.fm.extend(root, absent).is_empty());
    assert_eq!(f.fm.count(f.fm.extend(root, SEP)), 1);
}

#[test]
fn extend_counts_two_token_prefix() {
    let f = fixture(&["the cat sat", "the cat ran"], KeyStrategy::Sentence, Scheme::Word);
    let p = ids(&f.vocab, "the cat");
    assert_eq!(f.fm.count(f.fm.find(&p)), naive_locate(&bodies(&f), &p).len());
    assert_eq!(f.fm.count(f.fm.find(&p)), 2);
    let empty = f.fm.extend(f.fm.find(&ids(&f.vocab, "sat cat")), p[0]);
    assert!(empty.is_empty());
}

#[test]
fn continuations_after_prefix_and_at_root() {
    let f = three_keys();
    let keys = bodies(&f);
    let p = ids(&f.vocab, "the cat");
    let got: Vec<TokenId> = f.fm.continuations(f.fm.find(&p)).into_iter().map(|(t, _)| t).collect();
    let want: Vec<TokenId> = naive_continuations(&keys, &p).into_keys().collect();
    assert_eq!(got, want);
    let mut sat_ran = ids(&f.vocab, "sat ran");
    sat_ran.sort_unstable();
    assert_eq!(got, sat_ran);

    let root: Vec<(TokenId, usize)> =
        f.fm.continuations(f.fm.root())
            .into_iter()
            .map(|(t, r)| (t, r.len()))
            .collect();
    let want: Vec<(TokenId, usize)> = naive_continuations(&keys, &[]).into_iter().collect();
    assert_eq!(root, want);

    let full = ids(&f.vocab, "a dog ran");
    let after: Vec<TokenId> =
        f.fm.continuations(f.fm.find(&full))
            .into_iter()
            .map(|(t, _)| t)
            .collect();
    assert_eq!(after, [KEY_END]);
}

#[test]
fn count_and_locate_ran() {
    let f = three_keys();
    let ran = ids(&f.vocab, "ran");
    let range = f.fm.find(&ran);
    assert_eq!(f.fm.count(range), 2);
    let mut hits: Vec<(u32, u32)> =
        f.fm.locate(range, 10)
            .unwrap()
            .into_iter()
            .map(|h| (h.key_id, h.offset))
            .collect();
    hits.sort_unstable();
    assert_eq!(hits, naive_locate(&bodies(&f), &ran));
    assert_ne!(hits[0].0, hits[1].0);
}

#[test]
fn locate_unique_key_and_limits() {
    let f = three_keys();
    let full = ids(&f.vocab, "a dog ran");
    assert_eq!(
        f.fm.locate(f.fm.find(&full), 8).unwrap(),
        [KeyHit { key_id: 2, offset: 0 }]
    );

    let five = fixture(&["x y", "y x", "y", "z y y"], KeyStrategy::Sentence, Scheme::Word);
    let y = five.fm.find(&ids(&five.vocab, "y"));
    assert_eq!(five.fm.count(y), 5);
    assert_eq!(five.fm.locate(y, 1).unwrap().len(), 1);
    assert!(matches!(five.fm.locate(y, 0), Err(IndexError::InvalidLimit)));
}

#[test]
fn serialization_round_trips_and_rejects_damage() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for total in [50, 700, 3000] {
        let keys = random_keys(&mut rng, total, 9);
        let fm = FmIndex::build(keys.iter().map(Vec::as_slice), 42, 8).unwrap();
        let bytes = fm.to_bytes();
        let back = FmIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.reconstruct_text(), fm.reconstruct_text());
        let p = &keys[0][..keys[0].len().min(2)];
        assert_eq!(
            back.locate(back.find(p), 100).unwrap(),
            fm.locate(fm.find(p), 100).unwrap()
        );

        assert!(FmIndex::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bumped = bytes.clone();
        bumped[4] += 1;
        let err = FmIndex::from_bytes(&bumped).unwrap_err();
        assert!(err.to_string().contains("unsupported version"), "{err}");
    }
}

#[test]
fn empty_key_set_is_rejected() {
    let err = FmIndex::build(std::iter::empty::<&[TokenId]>(), 0, 32).unwrap_err();
    assert_eq!(err.to_string(), "empty key set");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queries_agree_with_naive_scan(
        keys in prop::collection::vec(prop::collection::vec(RESERVED..RESERVED + 5, 1..10), 1..40),
        pattern in prop::collection::vec(RESERVED..RESERVED + 5, 0..5),
        rate in 1u32..9,
    ) {
        let fm = FmIndex::build(keys.iter().map(Vec::as_slice), 0, rate).unwrap();
        let range = fm.find(&pattern);
        let expected_count = if pattern.is_empty() { naive_text_len(&keys) } else { naive_locate(&keys, &pattern).len() };
        prop_assert_eq!(fm.count(range), expected_count);

        let cont: Vec<(TokenId, usize)> = fm.continuations(range).into_iter().map(|(t, r)| (t, r.len())).collect();
        let want: Vec<(TokenId, usize)> = naive_continuations(&keys, &pattern).into_iter().collect();
        prop_assert_eq!(&cont, &want);
        let distinct: Vec<(TokenId, usize)> = fm.continuations_distinct(range).into_iter().map(|(t, r)| (t, r.len())).collect();
        prop_assert_eq!(&distinct, &want);

        if !pattern.is_empty() {
            let mut hits: Vec<(u32, u32)> = fm.locate(range, usize::MAX).unwrap().into_iter().map(|h| (h.key_id, h.offset)).collect();
            hits.sort_unstable();
            prop_assert_eq!(hits, naive_locate(&keys, &pattern));
        }
    }

    #[test]
    fn extension_never_widens(
        keys in prop::collection::vec(prop::collection::vec(RESERVED..RESERVED + 4, 1..8), 1..20),
        pattern in prop::collection::vec(RESERVED..RESERVED + 4, 1..6),
    ) {
        let fm = FmIndex::build(keys.iter().map(Vec::as_slice), 0, 4).unwrap();
        let mut range = fm.root();
        for &t in &pattern {
            let next = fm.extend(range, t);
            prop_assert!(next.len() <= range.len());
            range = next;
        }
    }
}
