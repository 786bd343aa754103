//! Triplet hinge loss over cosine distances and the triplet samplers.
//!
//! `L = max(0, D(a, p) - D(a, n) + margin)` where `a` is an anchor-tag
//! embedding, `p` a song carrying the tag and `n` a song without it.
//!
//! Three samplers produce batches of triplets:
//!
//! * **random**: pick a song, then one of its tags as anchor; the negative
//!   is uniform over songs lacking the anchor. Popular tags dominate.
//! * **balanced**: pick the anchor tag uniformly, then a positive song
//!   carrying it; negatives come from the other positives in the batch.
//! * **balanced-weighted**: as balanced, but the in-batch negative is drawn
//!   with distance-weighted probabilities computed from the current model.

use std::fmt;
use std::str::FromStr;

use statrs::function::beta::ln_beta;

use crate::dataset::RetrievalDataset;
use crate::error::{Error, Result};
use crate::linalg::{cosine_distance, dot, norm, Mat};
use crate::net::MlpBranch;
use crate::rng::Rng;

/// Attempts per batch slot before a sampler gives up.
pub const MAX_RESAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor_tag: usize,
    pub positive_song: usize,
    pub negative_song: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    Balanced,
    BalancedWeighted,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Balanced, Strategy::BalancedWeighted];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Balanced => "balanced",
            Strategy::BalancedWeighted => "balanced_weighted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sampler {s:?} (random, balanced, balanced_weighted)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    /// Cap on the inverse-density weight.
    pub lambda_clip: f64,
    /// Lower clip on unit-sphere Euclidean distances.
    pub cutoff_d_min: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            strategy: Strategy::BalancedWeighted,
            lambda_clip: 1e6,
            cutoff_d_min: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_clip > 0.0) || !self.lambda_clip.is_finite() {
            return Err(Error::Config(format!("lambda_clip must be finite and > 0, got {}", self.lambda_clip)));
        }
        if !(self.cutoff_d_min > 0.0 && self.cutoff_d_min < std::f64::consts::SQRT_2) {
            return Err(Error::Config(format!(
                "cutoff_d_min must lie in (0, sqrt 2), got {}",
                self.cutoff_d_min
            )));
        }
        Ok(())
    }
}

pub fn triplet_loss(e_a: &[f64], e_p: &[f64], e_n: &[f64], margin: f64) -> Result<f64> {
    let d_ap = cosine_distance(e_a, e_p)?;
    let d_an = cosine_distance(e_a, e_n)?;
    Ok((d_ap - d_an + margin).max(0.0))
}

/// Cosine distance and its gradients with respect to both arguments.
pub fn cosine_distance_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let d = cosine_distance(u, v)?;
    let (nu, nv) = (norm(u), norm(v));
    let cos = dot(u, v) / (nu * nv);
    // ∂D/∂u = -(v̂ - cos·û)/‖u‖
    let gu = u.iter().zip(v).map(|(a, b)| -(b / nv - cos * a / nu) / nu).collect();
    let gv = u.iter().zip(v).map(|(a, b)| -(a / nu - cos * b / nv) / nv).collect();
    Ok((d, gu, gv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Loss and gradients with respect to each embedding. Gradients vanish
/// when the hinge is strictly inactive.
pub fn triplet_loss_grad(e_a: &[f64], e_p: &[f64], e_n: &[f64], margin: f64) -> Result<TripletGrad> {
    let (d_ap, ga_p, gp) = cosine_distance_grad(e_a, e_p)?;
    let (d_an, ga_n, gn) = cosine_distance_grad(e_a, e_n)?;
    let raw = d_ap - d_an + margin;
    if raw < 0.0 {
        let z = vec![0.0; e_a.len()];
        return Ok(TripletGrad {
            loss: 0.0,
            anchor: z.clone(),
            positive: z.clone(),
            negative: z,
        });
    }
    Ok(TripletGrad {
        loss: raw,
        anchor: ga_p.iter().zip(&ga_n).map(|(a, b)| a - b).collect(),
        positive: gp,
        negative: gn.into_iter().map(|g| -g).collect(),
    })
}

/// Distance-weighted sampling probabilities.
///
/// Each cosine distance becomes a unit-sphere chord `d = sqrt(2 D)`, clipped
/// below at `cutoff_d_min`. The weight is `min(lambda_clip, 1 / q(d))` where
///
/// ```text
/// q(d) = d^(n-2) (1 - d²/4)^((n-3)/2) / (2^(n-2) B((n-1)/2, (n-1)/2))
/// ```
///
/// is the density of pairwise distances between uniform points on the unit
/// sphere in `n` dimensions. Evaluated in log space; the result sums to 1.
pub fn dw_weights(distances: &[f64], embed_dim: usize, config: &SamplerConfig) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::Domain("no distances to weight".into()));
    }
    if embed_dim < 3 {
        return Err(Error::Domain(format!("embedding dimension must be >= 3, got {embed_dim}")));
    }
    config.validate()?;
    let n = embed_dim as f64;
    let half = (n - 1.0) / 2.0;
    let log_z = (n - 2.0) * std::f64::consts::LN_2 + ln_beta(half, half);
    let log_cap = config.lambda_clip.ln();

    let mut log_w = Vec::with_capacity(distances.len());
    for &dc in distances {
        if !(-1e-9..=2.0 + 1e-9).contains(&dc) {
            return Err(Error::Domain(format!("cosine distance {dc} outside [0, 2]")));
        }
        let d = (2.0 * dc.clamp(0.0, 2.0)).sqrt().clamp(config.cutoff_d_min, 2.0);
        let tail = 1.0 - d * d / 4.0;
        let tail_term = if embed_dim == 3 {
            0.0
        } else if tail <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (n - 3.0) / 2.0 * tail.ln()
        };
        let log_q = (n - 2.0) * d.ln() + tail_term - log_z;
        log_w.push((-log_q).min(log_cap));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// The songs of a split together with per-tag positive lists.
#[derive(Debug, Clone)]
pub struct SamplingView<'a> {
    dataset: &'a RetrievalDataset,
    songs: Vec<usize>,
    positives: Vec<Vec<usize>>,
}

impl<'a> SamplingView<'a> {
    pub fn new(dataset: &'a RetrievalDataset, subset: &[usize]) -> Self {
        let mut positives = vec![Vec::new(); dataset.n_tags()];
        for &s in subset {
            for &t in &dataset.songs[s].tags {
                positives[t].push(s);
            }
        }
        SamplingView {
            dataset,
            songs: subset.to_vec(),
            positives,
        }
    }

    pub fn dataset(&self) -> &RetrievalDataset {
        self.dataset
    }

    pub fn songs(&self) -> &[usize] {
        &self.songs
    }

    pub fn positives(&self, tag: usize) -> &[usize] {
        &self.positives[tag]
    }

    fn tag_name(&self, tag: usize) -> &str {
        &self.dataset.tag_vocab[tag]
    }

    fn require_positives(&self) -> Result<()> {
        match self.positives.iter().position(Vec::is_empty) {
            Some(t) => Err(Error::Sampling(format!(
                "tag {:?} has no positive songs in the sampled split",
                self.tag_name(t)
            ))),
            None => Ok(()),
        }
    }
}

fn random_negative(view: &SamplingView, tag: usize, rng: &mut Rng) -> Result<usize> {
    let ds = view.dataset;
    if view.positives[tag].len() >= view.songs.len() {
        return Err(Error::Sampling(format!(
            "tag {:?} is carried by every song, no negative exists",
            view.tag_name(tag)
        )));
    }
    for _ in 0..MAX_RESAMPLE {
        let s = view.songs[rng.below(view.songs.len())];
        if !ds.has_tag(s, tag) {
            return Ok(s);
        }
    }
    let pool: Vec<usize> = view.songs.iter().copied().filter(|&s| !ds.has_tag(s, tag)).collect();
    Ok(pool[rng.below(pool.len())])
}

/// Song uniform over the view, anchor uniform over its tags, negative
/// uniform over songs lacking the anchor.
pub fn sample_random(view: &SamplingView, batch_size: usize, rng: &mut Rng) -> Result<TripletBatch> {
    if view.songs.is_empty() {
        return Err(Error::Sampling("no songs to sample from".into()));
    }
    let ds = view.dataset;
    let mut triplets = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let pos = view.songs[rng.below(view.songs.len())];
        let tags = &ds.songs[pos].tags;
        let anchor = tags[rng.below(tags.len())];
        let neg = random_negative(view, anchor, rng)?;
        triplets.push(Triplet {
            anchor_tag: anchor,
            positive_song: pos,
            negative_song: neg,
        });
    }
    Ok(TripletBatch { triplets })
}

/// Anchor/positive pairs where every anchor has at least one in-batch
/// positive lacking it, and the distinct positives in first-seen order.
fn balanced_pairs(view: &SamplingView, batch_size: usize, rng: &mut Rng) -> Result<(Vec<(usize, usize)>, Vec<usize>)> {
    view.require_positives()?;
    let n_tags = view.positives.len();
    if n_tags == 0 {
        return Err(Error::Sampling("empty tag vocabulary".into()));
    }
    let draw = |rng: &mut Rng| {
        let t = rng.below(n_tags);
        let p = &view.positives[t];
        (t, p[rng.below(p.len())])
    };
    let mut pairs: Vec<(usize, usize)> = (0..batch_size).map(|_| draw(rng)).collect();
    let ds = view.dataset;
    let mut attempts = vec![0usize; batch_size];
    loop {
        let mut repaired = false;
        for i in 0..batch_size {
            let tag = pairs[i].0;
            if pairs.iter().any(|&(_, s)| !ds.has_tag(s, tag)) {
                continue;
            }
            attempts[i] += 1;
            if attempts[i] > MAX_RESAMPLE {
                return Err(Error::Sampling(format!(
                    "no in-batch negative for tag {:?} after {MAX_RESAMPLE} resamples",
                    view.tag_name(tag)
                )));
            }
            pairs[i] = draw(rng);
            repaired = true;
        }
        if !repaired {
            break;
        }
    }
    let mut distinct = Vec::new();
    for &(_, s) in &pairs {
        if !distinct.contains(&s) {
            distinct.push(s);
        }
    }
    Ok((pairs, distinct))
}

/// Anchor tag uniform over the vocabulary, positive uniform among its
/// songs, negative uniform over the batch's positive songs lacking the
/// anchor.
pub fn sample_balanced(view: &SamplingView, batch_size: usize, rng: &mut Rng) -> Result<TripletBatch> {
    let (pairs, distinct) = balanced_pairs(view, batch_size, rng)?;
    let ds = view.dataset;
    let triplets = pairs
        .iter()
        .map(|&(tag, pos)| {
            let pool: Vec<usize> = distinct.iter().copied().filter(|&s| !ds.has_tag(s, tag)).collect();
            Triplet {
                anchor_tag: tag,
                positive_song: pos,
                negative_song: pool[rng.below(pool.len())],
            }
        })
        .collect();
    Ok(TripletBatch { triplets })
}

/// Balanced anchors and positives; each negative is drawn from the in-batch
/// pool with [`dw_weights`] over current-model distances to the anchor.
pub fn sample_balanced_weighted(
    view: &SamplingView,
    batch_size: usize,
    tag_branch: &MlpBranch,
    song_branch: &MlpBranch,
    config: &SamplerConfig,
    rng: &mut Rng,
) -> Result<TripletBatch> {
    config.validate()?;
    let (pairs, distinct) = balanced_pairs(view, batch_size, rng)?;
    let ds = view.dataset;
    let tag_vectors = ds.tag_vectors()?;

    let mut anchors: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    anchors.sort_unstable();
    anchors.dedup();
    let tag_rows: Vec<&[f64]> = anchors.iter().map(|&t| tag_vectors.row(t)).collect();
    let tag_emb = tag_branch.embed_rows(&Mat::from_rows(&tag_rows, tag_vectors.cols())?)?;
    let song_rows: Vec<&[f64]> = distinct.iter().map(|&s| ds.input(s)).collect();
    let song_emb = song_branch.embed_rows(&Mat::from_rows(&song_rows, ds.input_dim())?)?;
    let embed_dim = song_branch.out_dim();

    let mut triplets = Vec::with_capacity(batch_size);
    for &(tag, pos) in &pairs {
        let a = tag_emb.row(anchors.binary_search(&tag).expect("anchor embedded"));
        let mut pool = Vec::new();
        let mut dists = Vec::new();
        for (j, &s) in distinct.iter().enumerate() {
            if !ds.has_tag(s, tag) {
                pool.push(s);
                dists.push(cosine_distance(a, song_emb.row(j))?);
            }
        }
        let probs = dw_weights(&dists, embed_dim, config)?;
        triplets.push(Triplet {
            anchor_tag: tag,
            positive_song: pos,
            negative_song: pool[rng.categorical(&probs)],
        });
    }
    Ok(TripletBatch { triplets })
}

/// Dispatches on `config.strategy`.
pub fn sample_batch(
    view: &SamplingView,
    batch_size: usize,
    tag_branch: &MlpBranch,
    song_branch: &MlpBranch,
    config: &SamplerConfig,
    rng: &mut Rng,
) -> Result<TripletBatch> {
    match config.strategy {
        Strategy::Random => sample_random(view, batch_size, rng),
        Strategy::Balanced => sample_balanced(view, batch_size, rng),
        Strategy::BalancedWeighted => sample_balanced_weighted(view, batch_size, tag_branch, song_branch, config, rng),
    }
}
