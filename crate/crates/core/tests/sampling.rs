mod common;

use common::*;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tagmetric::dataset::{RetrievalDataset, SongRecord};
use tagmetric::net::MlpBranch;
use tagmetric::triplet::{
    dw_weights, sample_balanced, sample_balanced_weighted, sample_batch, sample_random, SamplerConfig, SamplingView,
    Strategy, TripletBatch,
};
use tagmetric::{Mat, Rng};

fn dataset_from_tags(tags: Vec<Vec<usize>>, n_tags: usize, inputs: Mat) -> RetrievalDataset {
    let songs = tags
        .into_iter()
        .enumerate()
        .map(|(i, t)| SongRecord {
            song_id: format!("s{i:04}"),
            artist_id: format!("a{i}"),
            tags: t,
        })
        .collect();
    let vocab = (0..n_tags).map(|t| format!("t{t}")).collect();
    RetrievalDataset::new(songs, inputs, vocab).unwrap()
}

fn zeros(n: usize) -> Mat {
    Mat::from_vec(n, 3, (0..n).flat_map(|i| [1.0, i as f64, 0.0]).collect()).unwrap()
}

fn chi_square_uniform_p(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expect = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

/// Densities on the unit sphere computed without logs; the normalizer comes
/// from Simpson integration of the unnormalized density over [0, 2].
fn dw_oracle(distances: &[f64], n: usize, lambda: f64, cutoff: f64) -> Vec<f64> {
    let n = n as f64;
    let raw = |d: f64| d.powf(n - 2.0) * (1.0 - d * d / 4.0).max(0.0).powf((n - 3.0) / 2.0);
    let steps = 200_000;
    let h = 2.0 / steps as f64;
    let mut z = raw(0.0) + raw(2.0);
    for i in 1..steps {
        z += raw(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    z *= h / 3.0;
    let w: Vec<f64> = distances
        .iter()
        .map(|&dc| {
            let d = (2.0 * dc).sqrt().clamp(cutoff, 2.0);
            (z / raw(d)).min(lambda)
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn check_invariants(view: &SamplingView, batch: &TripletBatch) {
    let ds = view.dataset();
    for t in &batch.triplets {
        assert!(ds.has_tag(t.positive_song, t.anchor_tag));
        assert!(!ds.has_tag(t.negative_song, t.anchor_tag));
        assert!(view.songs().contains(&t.positive_song) && view.songs().contains(&t.negative_song));
    }
}

#[test]
fn balanced_anchor_tags_are_uniform() {
    // 50 tags with very unequal song counts, one tag per song
    let mut tags = Vec::new();
    for t in 0..50 {
        for _ in 0..(1 + t % 7) {
            tags.push(vec![t]);
        }
    }
    let n = tags.len();
    let ds = dataset_from_tags(tags, 50, zeros(n));
    let all: Vec<usize> = (0..n).collect();
    let view = SamplingView::new(&ds, &all);
    let mut rng = Rng::new(1);
    let mut counts = vec![0usize; 50];
    for _ in 0..1000 {
        let b = sample_balanced(&view, 100, &mut rng).unwrap();
        check_invariants(&view, &b);
        for t in &b.triplets {
            counts[t.anchor_tag] += 1;
        }
    }
    let p = chi_square_uniform_p(&counts);
    assert!(p > 0.01, "chi-square p = {p}");
}

#[test]
fn random_anchor_distribution_matches_enumeration() {
    // Zipf-like masses with some multi-tag songs
    let mut rng = Rng::new(2);
    let mut tags = Vec::new();
    for s in 0..120 {
        let mut t = vec![(s * s) % 11 % 5];
        if s % 4 == 0 {
            t.push(4);
        }
        t.sort_unstable();
        t.dedup();
        tags.push(t);
    }
    let ds = dataset_from_tags(tags.clone(), 5, zeros(120));
    let all: Vec<usize> = (0..120).collect();
    let view = SamplingView::new(&ds, &all);
    let mut exact = vec![0.0; 5];
    for t in &tags {
        for &a in t {
            exact[a] += 1.0 / (120.0 * t.len() as f64);
        }
    }
    let mut counts = vec![0.0; 5];
    for _ in 0..1000 {
        let b = sample_random(&view, 100, &mut rng).unwrap();
        check_invariants(&view, &b);
        for t in &b.triplets {
            counts[t.anchor_tag] += 1e-5;
        }
    }
    let tv = total_variation(&counts, &exact);
    assert!(tv < 0.02, "TV = {tv}");
    assert!(exact.iter().any(|&p| (p - 0.2).abs() > 0.05), "masses should be far from uniform");
}

#[test]
fn random_two_tag_split_matches_song_mass() {
    let tags: Vec<Vec<usize>> = (0..40).map(|s| vec![usize::from(s >= 20)]).collect();
    let ds = dataset_from_tags(tags, 2, zeros(40));
    let all: Vec<usize> = (0..40).collect();
    let view = SamplingView::new(&ds, &all);
    let mut rng = Rng::new(3);
    let mut c = [0.0; 2];
    for _ in 0..1000 {
        for t in sample_random(&view, 100, &mut rng).unwrap().triplets {
            c[t.anchor_tag] += 1e-5;
        }
    }
    assert!(total_variation(&c, &[0.5, 0.5]) < 0.02);
}

/// One anchor-0 song at the anchor direction; tag-1 songs at the given
/// cosine distances from it.
fn planted(distances: &[f64]) -> (RetrievalDataset, MlpBranch) {
    let dim = 8;
    let mut rows = vec![{
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v
    }];
    let mut tags = vec![vec![0]];
    for &d in distances {
        let c: f64 = 1.0 - d;
        let mut v = vec![0.0; dim];
        v[0] = c;
        v[1] = (1.0 - c * c).sqrt();
        rows.push(v);
        tags.push(vec![1]);
    }
    let n = rows.len();
    let inputs = Mat::from_rows(&rows, dim).unwrap();
    let mut tv = Mat::zeros(2, dim);
    tv.set(0, 0, 1.0);
    tv.set(1, 2, 1.0);
    let ds = dataset_from_tags(tags, 2, inputs).with_tag_vectors(tv).unwrap();
    assert_eq!(ds.n_songs(), n);
    (ds, identity_branch(dim))
}

#[test]
fn weighted_picks_follow_dw_weights() {
    let distances = [0.02, 0.95, 1.0, 1.05, 1.1];
    let (ds, id) = planted(&distances);
    let all: Vec<usize> = (0..ds.n_songs()).collect();
    let view = SamplingView::new(&ds, &all);
    let config = SamplerConfig::default();
    let expected = dw_weights(&distances, 8, &config).unwrap();
    let mut rng = Rng::new(4);
    let mut counts = vec![0.0; distances.len()];
    let mut draws = 0usize;
    while draws < 100_000 {
        let b = sample_balanced_weighted(&view, 64, &id, &id, &config, &mut rng).unwrap();
        check_invariants(&view, &b);
        let mut present: Vec<usize> = b.triplets.iter().map(|t| t.positive_song).collect();
        present.sort_unstable();
        present.dedup();
        if present.len() != ds.n_songs() {
            continue;
        }
        for t in b.triplets.iter().filter(|t| t.anchor_tag == 0) {
            counts[t.negative_song - 1] += 1.0;
            draws += 1;
        }
    }
    counts.iter_mut().for_each(|c| *c /= draws as f64);
    let tv = total_variation(&counts, &expected);
    assert!(tv < 0.05, "TV = {tv}, freq {counts:?} vs {expected:?}");
}

#[test]
fn dw_weights_agree_with_direct_evaluation() {
    let cfg = SamplerConfig::default();
    let distances = [0.0, 0.05, 0.125, 0.3, 0.7, 1.0, 1.4, 1.9];
    for n in [4, 8, 16, 32] {
        let got = dw_weights(&distances, n, &cfg).unwrap();
        let want = dw_oracle(&distances, n, cfg.lambda_clip, cfg.cutoff_d_min);
        assert!(rel_err(&got, &want) < 1e-6, "n = {n}: {got:?} vs {want:?}");
        // below the clip point every weight equals the clip-point weight
        assert!((got[0] - got[2]).abs() < 1e-15 && (got[1] - got[2]).abs() < 1e-15);
    }
    let capped = SamplerConfig { lambda_clip: 5.0, ..cfg };
    let got = dw_weights(&distances, 8, &capped).unwrap();
    let want = dw_oracle(&distances, 8, 5.0, cfg.cutoff_d_min);
    assert!(rel_err(&got, &want) < 1e-6);
}

#[test]
fn dw_weights_finite_at_full_dimension() {
    let d: Vec<f64> = (0..64).map(|i| i as f64 / 32.0).collect();
    let w = dw_weights(&d, 256, &SamplerConfig::default()).unwrap();
    assert!(w.iter().all(|x| x.is_finite() && *x > 0.0));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn pool_of_one_is_always_picked() {
    let (ds, id) = planted(&[0.5]);
    let all = vec![0, 1];
    let view = SamplingView::new(&ds, &all);
    let mut rng = Rng::new(9);
    for _ in 0..50 {
        let b = sample_balanced_weighted(&view, 8, &id, &id, &SamplerConfig::default(), &mut rng).unwrap();
        for t in b.triplets {
            assert_eq!(t.negative_song, 1 - t.positive_song);
        }
    }
}

#[test]
fn identical_embeddings_give_uniform_negatives() {
    let (ds, _) = planted(&[0.3, 0.6, 0.9]);
    // every song embeds to the same point under a constant branch
    let constant = MlpBranch::from_parts(Mat::zeros(8, 4), vec![0.0; 4], Mat::zeros(4, 3), vec![1.0, 0.0, 0.0]).unwrap();
    let tag = identity_branch(8);
    let tag = MlpBranch::from_parts(
        tag.w1.clone(),
        tag.b1.clone(),
        Mat::from_vec(16, 3, (0..48).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect()).unwrap(),
        vec![0.1, 0.2, 0.3],
    )
    .unwrap();
    let all: Vec<usize> = (0..4).collect();
    let view = SamplingView::new(&ds, &all);
    let mut rng = Rng::new(10);
    let mut counts = [0.0; 3];
    let mut draws = 0usize;
    while draws < 30_000 {
        let b = sample_balanced_weighted(&view, 64, &tag, &constant, &SamplerConfig::default(), &mut rng).unwrap();
        let mut present: Vec<usize> = b.triplets.iter().map(|t| t.positive_song).collect();
        present.sort_unstable();
        present.dedup();
        if present.len() != 4 {
            continue;
        }
        for t in b.triplets.iter().filter(|t| t.anchor_tag == 0) {
            counts[t.negative_song - 1] += 1.0;
            draws += 1;
        }
    }
    counts.iter_mut().for_each(|c| *c /= draws as f64);
    assert!(total_variation(&counts, &[1.0 / 3.0; 3]) < 0.02);
}

#[test]
fn membership_invariants_hold_for_every_strategy() {
    let mut rng = Rng::new(12);
    let ds = random_dataset(80, 6, 5, 4, &mut rng);
    let subset: Vec<usize> = (0..80).filter(|s| s % 3 != 0).collect();
    let view = SamplingView::new(&ds, &subset);
    let tag = MlpBranch::with_shape(4, 16, 8, &mut rng);
    let song = MlpBranch::with_shape(5, 16, 8, &mut rng);
    for strategy in Strategy::ALL {
        let cfg = SamplerConfig { strategy, ..Default::default() };
        let mut n = 0;
        while n < 100_000 {
            let b = sample_batch(&view, 128, &tag, &song, &cfg, &mut rng).unwrap();
            assert_eq!(b.len(), 128);
            check_invariants(&view, &b);
            n += b.len();
        }
    }
}

#[test]
fn same_seed_same_batch() {
    let mut rng = Rng::new(13);
    let ds = random_dataset(40, 4, 5, 4, &mut rng);
    let all: Vec<usize> = (0..40).collect();
    let view = SamplingView::new(&ds, &all);
    let tag = MlpBranch::with_shape(4, 8, 4, &mut rng);
    let song = MlpBranch::with_shape(5, 8, 4, &mut rng);
    for strategy in Strategy::ALL {
        let cfg = SamplerConfig { strategy, ..Default::default() };
        let a = sample_batch(&view, 32, &tag, &song, &cfg, &mut Rng::new(99)).unwrap();
        let b = sample_batch(&view, 32, &tag, &song, &cfg, &mut Rng::new(99)).unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dw_output_is_a_distribution(ds in proptest::collection::vec(0.0f64..=2.0, 1..40), n in 3usize..300) {
        let w = dw_weights(&ds, n, &SamplerConfig::default()).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn dw_monotone_below_the_mode(a in 0.0f64..0.5, b in 0.0f64..0.5, n in 4usize..300) {
        // chord distances below sqrt 2 lie under the density's mode for n > 3
        let w = dw_weights(&[a, b], n, &SamplerConfig::default()).unwrap();
        if a <= b {
            prop_assert!(w[0] >= w[1] * (1.0 - 1e-12));
        } else {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
    }
}
