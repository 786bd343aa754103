//! Independent reference implementations shared by the integration tests
//! and the acceptance harness. Nothing here calls the code under test
//! except to build inputs.

#![allow(dead_code)]

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use tagmetric::dataset::{RetrievalDataset, SongRecord};
use tagmetric::net::MlpBranch;
use tagmetric::triplet::{triplet_loss, triplet_loss_grad};
use tagmetric::wmf::RowEntry;
use tagmetric::{Mat, Rng};

/// Worst absolute difference divided by the largest magnitude in either
/// vector. The denominator is floored at `1e-4` so that identically-zero
/// gradients are judged by finite-difference round-off alone.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().chain(analytic).fold(1e-4f64, |m, v| m.max(v.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / scale
}

fn plain_cos_dist(u: &[f64], v: &[f64]) -> f64 {
    let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    1.0 - d / (nu * nv)
}

/// Forward pass written out loop by loop.
pub fn naive_forward(b: &MlpBranch, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = (0..b.hidden())
        .map(|j| {
            let s: f64 = (0..b.d_in()).map(|i| x[i] * b.w1.get(i, j)).sum::<f64>() + b.b1[j];
            s.max(0.0)
        })
        .collect();
    let z: Vec<f64> = (0..b.out_dim())
        .map(|k| (0..b.hidden()).map(|j| h[j] * b.w2.get(j, k)).sum::<f64>() + b.b2[k])
        .collect();
    let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.into_iter().map(|v| v / n).collect()
}

/// Smallest |pre-activation| of the hidden layer; finite differences are
/// unreliable when this is near zero.
pub fn relu_margin(b: &MlpBranch, x: &[f64]) -> f64 {
    (0..b.hidden())
        .map(|j| ((0..b.d_in()).map(|i| x[i] * b.w1.get(i, j)).sum::<f64>() + b.b1[j]).abs())
        .fold(f64::INFINITY, f64::min)
}

fn param_mut(b: &mut MlpBranch, which: usize, i: usize) -> &mut f64 {
    match which {
        0 => &mut b.w1.as_mut_slice()[i],
        1 => &mut b.b1[i],
        2 => &mut b.w2.as_mut_slice()[i],
        _ => &mut b.b2[i],
    }
}

/// Central differences of `forward(x) · upstream` with respect to every
/// parameter (W1, b1, W2, b2 order, row-major) and to the input.
pub fn fd_branch(b: &MlpBranch, x: &[f64], upstream: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let f = |b: &MlpBranch, x: &[f64]| -> f64 {
        naive_forward(b, x).iter().zip(upstream).map(|(a, g)| a * g).sum()
    };
    let mut params = Vec::new();
    let mut probe = b.clone();
    let lens = [b.w1.rows() * b.w1.cols(), b.b1.len(), b.w2.rows() * b.w2.cols(), b.b2.len()];
    for (which, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let orig = *param_mut(&mut probe, which, i);
            *param_mut(&mut probe, which, i) = orig + h;
            let up = f(&probe, x);
            *param_mut(&mut probe, which, i) = orig - h;
            let down = f(&probe, x);
            *param_mut(&mut probe, which, i) = orig;
            params.push((up - down) / (2.0 * h));
        }
    }
    let mut xs = x.to_vec();
    let mut input = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let up = f(b, &xs);
        xs[i] = orig - h;
        let down = f(b, &xs);
        xs[i] = orig;
        input.push((up - down) / (2.0 * h));
    }
    (params, input)
}

/// Central differences of the triplet loss in each argument.
pub fn fd_triplet(a: &[f64], p: &[f64], n: &[f64], margin: f64, h: f64) -> [Vec<f64>; 3] {
    let loss = |a: &[f64], p: &[f64], n: &[f64]| -> f64 {
        (plain_cos_dist(a, p) - plain_cos_dist(a, n) + margin).max(0.0)
    };
    let mut out: [Vec<f64>; 3] = Default::default();
    for arg in 0..3 {
        let mut v = [a.to_vec(), p.to_vec(), n.to_vec()];
        for i in 0..v[arg].len() {
            let orig = v[arg][i];
            v[arg][i] = orig + h;
            let up = loss(&v[0], &v[1], &v[2]);
            v[arg][i] = orig - h;
            let down = loss(&v[0], &v[1], &v[2]);
            v[arg][i] = orig;
            out[arg].push((up - down) / (2.0 * h));
        }
    }
    out
}

pub fn random_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Worst relative error of backward against central differences for one
/// random miniature branch.
pub fn branch_gradient_error(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (d_in, hidden, out) = (2 + rng.below(4), 3 + rng.below(6), 3 + rng.below(4));
    loop {
        let b = MlpBranch::with_shape(d_in, hidden, out, &mut rng);
        let x = random_vec(d_in, &mut rng);
        if relu_margin(&b, &x) < 1e-3 || b.forward(&x).is_err() {
            continue;
        }
        let up = random_vec(out, &mut rng);
        let (g, gx) = b.backward(&x, &up).unwrap();
        let analytic: Vec<f64> = g.slices().concat();
        let (numeric, numeric_x) = fd_branch(&b, &x, &up, 1e-6);
        return rel_err(&analytic, &numeric).max(rel_err(&gx, &numeric_x));
    }
}

/// Worst relative error of the triplet loss gradients, with the hinge
/// active and away from its kink.
pub fn triplet_gradient_error(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let dim = 3 + rng.below(6);
    loop {
        let (a, p, n) = (random_vec(dim, &mut rng), random_vec(dim, &mut rng), random_vec(dim, &mut rng));
        let margin = 0.5;
        let raw = plain_cos_dist(&a, &p) - plain_cos_dist(&a, &n) + margin;
        if raw < 1e-3 {
            continue;
        }
        let g = triplet_loss_grad(&a, &p, &n, margin).unwrap();
        assert!((g.loss - triplet_loss(&a, &p, &n, margin).unwrap()).abs() < 1e-12);
        let [fa, fp, fn_] = fd_triplet(&a, &p, &n, margin, 1e-6);
        return rel_err(&g.anchor, &fa).max(rel_err(&g.positive, &fp)).max(rel_err(&g.negative, &fn_));
    }
}

/// Dense row solve with every cell materialized: unobserved cells get
/// confidence 1 and preference 0. Solved by LU.
pub fn dense_row_oracle(fixed: &Mat, entries: &[RowEntry], reg: f64) -> Vec<f64> {
    let (n, k) = (fixed.rows(), fixed.cols());
    let mut c = vec![1.0; n];
    let mut p = vec![0.0; n];
    for e in entries {
        c[e.index] = e.confidence;
        p[e.index] = e.preference;
    }
    let y = DMatrix::from_row_slice(n, k, fixed.as_slice());
    let cm = DMatrix::from_diagonal(&DVector::from_vec(c));
    let a = y.transpose() * &cm * &y + DMatrix::identity(k, k) * reg;
    let b = y.transpose() * &cm * DVector::from_vec(p);
    a.lu().solve(&b).expect("oracle system solvable").iter().copied().collect()
}

/// Brute-force MAP and P@10 straight from the definitions.
pub fn brute_force_metrics(
    tag_branch: &MlpBranch,
    song_branch: &MlpBranch,
    ds: &RetrievalDataset,
    subset: &[usize],
) -> (f64, f64) {
    let tv = ds.tag_vectors.as_ref().expect("tag vectors");
    let song_emb: Vec<Vec<f64>> = subset.iter().map(|&s| naive_forward(song_branch, ds.input(s))).collect();
    let mut aps = Vec::new();
    let mut p10s = Vec::new();
    for t in 0..ds.n_tags() {
        let q = naive_forward(tag_branch, tv.row(t));
        let mut order: Vec<usize> = (0..subset.len()).collect();
        order.sort_by(|&i, &j| {
            let (di, dj) = (plain_cos_dist(&q, &song_emb[i]), plain_cos_dist(&q, &song_emb[j]));
            di.partial_cmp(&dj)
                .unwrap_or(Ordering::Equal)
                .then_with(|| ds.songs[subset[i]].song_id.cmp(&ds.songs[subset[j]].song_id))
        });
        let relevant: Vec<bool> = order.iter().map(|&i| ds.songs[subset[i]].tags.contains(&t)).collect();
        let total = relevant.iter().filter(|&&r| r).count();
        if total == 0 {
            continue;
        }
        let mut ap = 0.0;
        for r in 0..relevant.len() {
            if relevant[r] {
                let hits_in_top = relevant[..=r].iter().filter(|&&x| x).count();
                ap += hits_in_top as f64 / (r + 1) as f64;
            }
        }
        aps.push(ap / total as f64);
        p10s.push(relevant.iter().take(10).filter(|&&x| x).count() as f64 / 10.0);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&aps), mean(&p10s))
}

/// Random dataset with Gaussian inputs and tag vectors; every tag is
/// carried by at least one song.
pub fn random_dataset(n_songs: usize, n_tags: usize, d_in: usize, d_tag: usize, rng: &mut Rng) -> RetrievalDataset {
    let songs: Vec<SongRecord> = (0..n_songs)
        .map(|s| {
            let mut tags = vec![s % n_tags];
            for t in 0..n_tags {
                if rng.uniform() < 0.15 {
                    tags.push(t);
                }
            }
            tags.sort_unstable();
            tags.dedup();
            SongRecord {
                song_id: format!("s{s:04}"),
                artist_id: format!("a{}", s / 3),
                tags,
            }
        })
        .collect();
    let inputs = Mat::from_vec(n_songs, d_in, random_vec(n_songs * d_in, rng)).unwrap();
    let vocab = (0..n_tags).map(|t| format!("t{t}")).collect();
    let tv = Mat::from_vec(n_tags, d_tag, random_vec(n_tags * d_tag, rng)).unwrap();
    RetrievalDataset::new(songs, inputs, vocab).unwrap().with_tag_vectors(tv).unwrap()
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Branch computing `normalize(x)` exactly: `relu(x) - relu(-x) = x`.
pub fn identity_branch(dim: usize) -> MlpBranch {
    let mut w1 = Mat::zeros(dim, 2 * dim);
    let mut w2 = Mat::zeros(2 * dim, dim);
    for i in 0..dim {
        w1.set(i, i, 1.0);
        w1.set(i, dim + i, -1.0);
        w2.set(i, i, 1.0);
        w2.set(dim + i, i, -1.0);
    }
    MlpBranch::from_parts(w1, vec![0.0; 2 * dim], w2, vec![0.0; dim]).unwrap()
}

/// Sorted top-`k` (token, cosine) pairs by exhaustive comparison.
pub fn nearest_oracle(tokens: &[(String, Vec<f64>)], query: &[f64], exclude: &str, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = tokens
        .iter()
        .filter(|(t, v)| t != exclude && v.iter().any(|x| *x != 0.0))
        .map(|(t, v)| (t.clone(), 1.0 - plain_cos_dist(query, v)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
