//! Planted-structure synthetic data.
//!
//! Every tag owns a latent vector in `latent_dim` dimensions. Tags are
//! assigned to songs with Zipf-distributed popularity; a song's latent is
//! the mean of its tags' latents plus Gaussian noise, and its acoustic
//! feature is that latent under a fixed random projection. Each tag's word
//! vector is its latent under a second projection plus noise, and users
//! play songs whose latents align with their own taste vector.

use std::path::{Path, PathBuf};

use crate::dataset::{
    bind_inputs, topk_tag_filter, write_annotations, write_lines, AnnotationRecord, InputSource, InputVectors,
    RetrievalDataset,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::rng::Rng;
use crate::wordvec::WordVectorTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub songs: usize,
    pub tags: usize,
    pub latent_dim: usize,
    /// Song latent noise (standard deviation).
    pub noise: f64,
    pub feature_dim: usize,
    pub word_dim: usize,
    pub word_noise: f64,
    pub zipf_exponent: f64,
    pub max_tags_per_song: usize,
    pub songs_per_artist: usize,
    pub users: usize,
    pub plays_per_user: usize,
    /// Extra tokens in the word table that are not tags.
    pub distractor_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            songs: 2000,
            tags: 50,
            latent_dim: 16,
            noise: 0.3,
            feature_dim: 64,
            word_dim: 300,
            word_noise: 0.1,
            zipf_exponent: 1.2,
            max_tags_per_song: 3,
            songs_per_artist: 4,
            users: 500,
            plays_per_user: 20,
            distractor_words: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub annotations: Vec<AnnotationRecord>,
    pub features: InputVectors,
    /// `(user_id, song_id, count)`
    pub plays: Vec<(String, String, u32)>,
    pub words: WordVectorTable,
}

pub fn tag_name(i: usize) -> String {
    format!("tag{i:02}")
}

/// Word-table token for the plural form of a tag.
pub fn plural_name(i: usize) -> String {
    format!("{}s", tag_name(i))
}

fn gaussian_mat(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Mat {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    Mat::from_vec(rows, cols, data).expect("sized")
}

/// `v` (length `p.rows()`) times `p`.
fn project(v: &[f64], p: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; p.cols()];
    for (i, &x) in v.iter().enumerate() {
        crate::linalg::axpy(x, p.row(i), &mut out);
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.tags < 2 {
        return Err(Error::Config("retrieval needs at least 2 tags".into()));
    }
    if cfg.songs < 3 || cfg.latent_dim == 0 || cfg.feature_dim == 0 || cfg.word_dim == 0 {
        return Err(Error::Config("need >= 3 songs and positive dimensions".into()));
    }
    if cfg.max_tags_per_song == 0 || cfg.songs_per_artist == 0 {
        return Err(Error::Config("tags per song and songs per artist must be >= 1".into()));
    }
    let root = Rng::new(cfg.seed);
    let mut rng = root.split(0);
    let l = cfg.latent_dim;
    let tag_latent = gaussian_mat(cfg.tags, l, 1.0, &mut rng);
    let feature_proj = gaussian_mat(l, cfg.feature_dim, 1.0 / (l as f64).sqrt(), &mut rng);
    let word_proj = gaussian_mat(l, cfg.word_dim, 1.0 / (l as f64).sqrt(), &mut rng);

    let zipf: Vec<f64> = (0..cfg.tags).map(|i| ((i + 1) as f64).powf(-cfg.zipf_exponent)).collect();
    let total: f64 = zipf.iter().sum();
    let zipf: Vec<f64> = zipf.into_iter().map(|w| w / total).collect();

    let n_artists = (cfg.songs / cfg.songs_per_artist).max(3);
    let mut rng = root.split(1);
    let mut annotations = Vec::with_capacity(cfg.songs);
    let mut features = InputVectors::new(cfg.feature_dim);
    let mut song_latent = Vec::with_capacity(cfg.songs);
    for s in 0..cfg.songs {
        let n_tags = 1 + rng.below(cfg.max_tags_per_song.min(cfg.tags));
        let mut tags: Vec<usize> = Vec::with_capacity(n_tags);
        while tags.len() < n_tags {
            let t = rng.categorical(&zipf);
            if !tags.contains(&t) {
                tags.push(t);
            }
        }
        tags.sort_unstable();
        let mut z = vec![0.0; l];
        for &t in &tags {
            crate::linalg::axpy(1.0 / tags.len() as f64, tag_latent.row(t), &mut z);
        }
        z.iter_mut().for_each(|v| *v += cfg.noise * rng.normal());
        let song_id = format!("S{s:06}");
        features.insert(&song_id, &project(&z, &feature_proj))?;
        song_latent.push(z);
        annotations.push(AnnotationRecord {
            song_id,
            artist_id: format!("A{:05}", rng.below(n_artists)),
            tags: tags.iter().map(|&t| tag_name(t)).collect(),
        });
    }

    let mut rng = root.split(2);
    let mut words = WordVectorTable::new(cfg.word_dim);
    let noisy = |v: Vec<f64>, rng: &mut Rng| -> Vec<f64> {
        v.into_iter().map(|x| x + cfg.word_noise * rng.normal()).collect()
    };
    for t in 0..cfg.tags {
        let base = project(tag_latent.row(t), &word_proj);
        words.insert(&tag_name(t), &noisy(base.clone(), &mut rng))?;
        words.insert(&plural_name(t), &noisy(base, &mut rng))?;
    }
    for w in 0..cfg.distractor_words {
        let latent: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
        words.insert(&format!("word{w:03}"), &noisy(project(&latent, &word_proj), &mut rng))?;
    }

    let mut rng = root.split(3);
    let mut plays = Vec::new();
    let mut played = vec![false; cfg.songs];
    let per_user = cfg.plays_per_user.min(cfg.songs);
    for u in 0..cfg.users {
        let taste: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
        // Gumbel top-k: distinct songs drawn by softmax of affinity
        let mut keys: Vec<(f64, usize)> = song_latent
            .iter()
            .enumerate()
            .map(|(s, z)| {
                let g = -(-rng.uniform().max(f64::MIN_POSITIVE).ln()).ln();
                (dot(&taste, z) + g, s)
            })
            .collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = keys.iter().take(per_user).map(|k| k.1).collect();
        chosen.sort_unstable();
        for s in chosen {
            let mut count = 1u32;
            while rng.uniform() < 0.5 && count < 50 {
                count += 1;
            }
            plays.push((format!("U{u:05}"), annotations[s].song_id.clone(), count));
            played[s] = true;
        }
    }
    // every song gets at least one listener so that factors exist for all
    if cfg.users > 0 {
        for s in (0..cfg.songs).filter(|&s| !played[s]) {
            let u = rng.below(cfg.users);
            plays.push((format!("U{u:05}"), annotations[s].song_id.clone(), 1));
        }
    }

    Ok(SynthData {
        annotations,
        features,
        plays,
        words,
    })
}

/// Paths of the files written by [`SynthData::write_to_dir`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub annotations: PathBuf,
    pub features: PathBuf,
    pub plays: PathBuf,
    pub vectors: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        SynthPaths {
            annotations: dir.join("annotations.tsv"),
            features: dir.join("features.tsv"),
            plays: dir.join("plays.tsv"),
            vectors: dir.join("vectors.txt"),
        }
    }
}

impl SynthData {
    pub fn write_to_dir(&self, dir: &Path) -> Result<SynthPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths::in_dir(dir);
        write_annotations(&paths.annotations, &self.annotations)?;
        self.features.write(&paths.features)?;
        write_lines(
            &paths.plays,
            self.plays.iter().map(|(u, s, c)| format!("{u}\t{s}\t{c}")),
        )?;
        self.words.save(&paths.vectors)?;
        Ok(paths)
    }

    /// Acoustic-source dataset over every tag, with tag vectors attached.
    pub fn dataset(&self) -> Result<RetrievalDataset> {
        let n_tags = {
            let mut all: Vec<&String> = self.annotations.iter().flat_map(|r| &r.tags).collect();
            all.sort_unstable();
            all.dedup();
            all.len()
        };
        let filtered = topk_tag_filter(&self.annotations, n_tags)?;
        let mut ds = bind_inputs(filtered, InputSource::Acoustic, None, Some(&self.features))?;
        ds.attach_tag_vectors(&self.words)?;
        Ok(ds)
    }
}
