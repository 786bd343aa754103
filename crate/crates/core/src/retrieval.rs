//! Exhaustive nearest-neighbour retrieval of songs for a tag query, and
//! MAP / P@10 evaluation macro-averaged over tags.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{write_lines, Category, RetrievalDataset};
use crate::error::{Error, Result};
use crate::linalg::{cosine_distance, fmt_sig9, norm, Mat};
use crate::net::MlpBranch;
use crate::wordvec::WordVectorTable;

/// Number of top results scored by the precision metric.
pub const PRECISION_CUTOFF: usize = 10;

/// Unit-norm song embeddings with their ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SongIndex {
    embeddings: Mat,
    song_ids: Vec<String>,
}

impl SongIndex {
    pub fn new(song_ids: Vec<String>, embeddings: Mat) -> Result<Self> {
        if song_ids.len() != embeddings.rows() {
            return Err(Error::Shape(format!(
                "{} ids for {} embeddings",
                song_ids.len(),
                embeddings.rows()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = song_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Domain(format!("duplicate song id {dup} in index")));
        }
        for r in 0..embeddings.rows() {
            if (norm(embeddings.row(r)) - 1.0).abs() > 1e-8 {
                return Err(Error::Domain(format!("index row {r} is not unit norm")));
            }
        }
        Ok(SongIndex { embeddings, song_ids })
    }

    pub fn len(&self) -> usize {
        self.song_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.song_ids.is_empty()
    }

    pub fn song_ids(&self) -> &[String] {
        &self.song_ids
    }

    pub fn embeddings(&self) -> &Mat {
        &self.embeddings
    }

    /// Songs by ascending cosine distance to `query`, ties by song id.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<(String, f64)>> {
        let mut ranked = self.rank(query)?;
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(i, d)| (self.song_ids[i].clone(), d))
            .collect())
    }

    fn rank(&self, query: &[f64]) -> Result<Vec<(usize, f64)>> {
        let mut scored = (0..self.len())
            .map(|i| Ok((i, cosine_distance(query, self.embeddings.row(i))?)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| self.song_ids[a.0].cmp(&self.song_ids[b.0]))
        });
        Ok(scored)
    }
}

/// Embeds `subset` songs (in subset order) with the song branch.
pub fn build_song_index(song_branch: &MlpBranch, dataset: &RetrievalDataset, subset: &[usize]) -> Result<SongIndex> {
    if song_branch.d_in() != dataset.input_dim() {
        return Err(Error::Shape(format!(
            "song branch takes {}-d inputs, dataset has {}-d",
            song_branch.d_in(),
            dataset.input_dim()
        )));
    }
    let rows: Vec<&[f64]> = subset.iter().map(|&s| dataset.input(s)).collect();
    let x = Mat::from_rows(&rows, dataset.input_dim())?;
    let emb = song_branch.embed_rows(&x)?;
    let ids = subset.iter().map(|&s| dataset.songs[s].song_id.clone()).collect();
    SongIndex::new(ids, emb)
}

/// Ranks the index for a free-text tag resolved through the word table.
pub fn retrieve(
    tag: &str,
    tag_branch: &MlpBranch,
    table: &WordVectorTable,
    index: &SongIndex,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let v = table.tag_to_vector(tag)?;
    let q = tag_branch.forward(&v)?;
    index.search(&q, k)
}

/// Mean of precision@i over the ranks `i` holding a relevant item, divided
/// by the total number of relevant items.
pub fn average_precision(ranked_relevance: &[bool], n_relevant_total: usize) -> Result<f64> {
    if n_relevant_total == 0 {
        return Err(Error::Domain("average precision needs at least one relevant item".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in ranked_relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits > n_relevant_total {
        return Err(Error::Domain(format!(
            "{hits} hits exceed the {n_relevant_total} relevant items"
        )));
    }
    Ok(sum / n_relevant_total as f64)
}

/// Hits in the first `k` positions divided by `k`.
pub fn precision_at(ranked_relevance: &[bool], k: usize) -> f64 {
    ranked_relevance.iter().take(k).filter(|&&r| r).count() as f64 / k as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagScore {
    pub tag: String,
    pub ap: f64,
    pub p_at_10: f64,
    pub n_relevant: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub p_at_10: f64,
    pub per_tag: Vec<TagScore>,
    pub per_category: Option<Vec<(Category, f64)>>,
    /// Vocabulary tags with no relevant song in the evaluated subset.
    pub skipped: Vec<String>,
}

impl EvalReport {
    /// `summary<TAB>map<TAB>p10`, then `tag<TAB>name<TAB>ap<TAB>p10<TAB>n_relevant`
    /// and `category<TAB>name<TAB>mean_ap` lines.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut lines = vec![format!("summary\t{}\t{}", fmt_sig9(self.map), fmt_sig9(self.p_at_10))];
        for t in &self.per_tag {
            lines.push(format!(
                "tag\t{}\t{}\t{}\t{}",
                t.tag,
                fmt_sig9(t.ap),
                fmt_sig9(t.p_at_10),
                t.n_relevant
            ));
        }
        for (c, m) in self.per_category.iter().flatten() {
            lines.push(format!("category\t{c}\t{}", fmt_sig9(*m)));
        }
        write_lines(path, lines.into_iter())
    }
}

/// Scores every vocabulary tag against `subset`, ranking all subset songs.
pub fn evaluate(
    tag_branch: &MlpBranch,
    song_branch: &MlpBranch,
    dataset: &RetrievalDataset,
    subset: &[usize],
) -> Result<EvalReport> {
    if subset.is_empty() {
        return Err(Error::Domain("cannot evaluate an empty song subset".into()));
    }
    let index = build_song_index(song_branch, dataset, subset)?;
    let tag_emb = tag_branch.embed_rows(dataset.tag_vectors()?)?;
    if tag_emb.cols() != index.embeddings().cols() {
        return Err(Error::Shape("tag and song branches embed into different dimensions".into()));
    }

    let scores: Vec<Option<TagScore>> = (0..dataset.n_tags())
        .into_par_iter()
        .map(|t| {
            let n_rel = subset.iter().filter(|&&s| dataset.has_tag(s, t)).count();
            if n_rel == 0 {
                return Ok(None);
            }
            let relevance: Vec<bool> = index
                .rank(tag_emb.row(t))?
                .into_iter()
                .map(|(i, _)| dataset.has_tag(subset[i], t))
                .collect();
            Ok(Some(TagScore {
                tag: dataset.tag_vocab[t].clone(),
                ap: average_precision(&relevance, n_rel)?,
                p_at_10: precision_at(&relevance, PRECISION_CUTOFF),
                n_relevant: n_rel,
            }))
        })
        .collect::<Result<_>>()?;

    let mut per_tag = Vec::new();
    let mut skipped = Vec::new();
    let mut by_cat: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for (t, s) in scores.into_iter().enumerate() {
        match s {
            Some(s) => {
                if let Some(Some(c)) = dataset.tag_categories.as_ref().map(|cats| cats[t]) {
                    by_cat.entry(c).or_default().push(s.ap);
                }
                per_tag.push(s);
            }
            None => skipped.push(dataset.tag_vocab[t].clone()),
        }
    }
    if !skipped.is_empty() {
        log::warn!("{} tag(s) have no relevant song in the evaluated subset and were skipped", skipped.len());
    }
    if per_tag.is_empty() {
        return Err(Error::Domain("no tag has a relevant song in the subset".into()));
    }
    let n = per_tag.len() as f64;
    let map = per_tag.iter().map(|s| s.ap).sum::<f64>() / n;
    let p_at_10 = per_tag.iter().map(|s| s.p_at_10).sum::<f64>() / n;
    let per_category = dataset.tag_categories.as_ref().map(|_| {
        by_cat
            .into_iter()
            .map(|(c, aps)| (c, aps.iter().sum::<f64>() / aps.len() as f64))
            .collect()
    });
    Ok(EvalReport {
        map,
        p_at_10,
        per_tag,
        per_category,
        skipped,
    })
}
