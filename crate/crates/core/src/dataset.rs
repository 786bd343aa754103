//! Annotation, interaction and feature files; top-K tag filtering;
//! artist-level splits; binding of per-song input vectors.
//!
//! File formats (tab-separated, UTF-8):
//!
//! * `annotations.tsv`: `song_id<TAB>artist_id<TAB>tag1,tag2,...`
//! * `plays.tsv`: `user_id<TAB>song_id<TAB>count`
//! * `categories.tsv`: `tag<TAB>category`
//! * `features.tsv`: `song_id<TAB>v1 v2 ... vD`
//!
//! Factor files written by [`crate::wmf::write_song_factors`] load through
//! the same vector reader.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{fmt_sig9, Mat};
use crate::rng::Rng;
use crate::wmf::SparseInteractions;
use crate::wordvec::WordVectorTable;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub song_id: String,
    pub artist_id: String,
    pub tags: Vec<String>,
}

pub fn parse_annotations(text: &str, source: &str) -> Result<Vec<AnnotationRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                source,
                n,
                format!("expected song_id, artist_id and tags columns, found {} field(s)", fields.len()),
            ));
        }
        let (song, artist) = (fields[0].trim(), fields[1].trim());
        if song.is_empty() || artist.is_empty() {
            return Err(Error::parse(source, n, "empty song or artist id"));
        }
        let mut tags: Vec<String> = Vec::new();
        for t in fields[2].split(',') {
            let t = t.trim().to_lowercase();
            if !t.is_empty() && !tags.contains(&t) {
                tags.push(t);
            }
        }
        if tags.is_empty() {
            return Err(Error::parse(source, n, format!("song {song} has no tags")));
        }
        if !seen.insert(song.to_string()) {
            return Err(Error::parse(source, n, format!("duplicate song id {song}")));
        }
        out.push(AnnotationRecord {
            song_id: song.to_string(),
            artist_id: artist.to_string(),
            tags,
        });
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    parse_annotations(&read_text(path)?, &path.display().to_string())
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    write_lines(path, records.iter().map(|r| {
        format!("{}\t{}\t{}", r.song_id, r.artist_id, r.tags.join(","))
    }))
}

pub(crate) fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A song whose tags are indices into a tag vocabulary (sorted, unique).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SongRecord {
    pub song_id: String,
    pub artist_id: String,
    pub tags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredRecords {
    pub songs: Vec<SongRecord>,
    /// Most frequent first.
    pub vocab: Vec<String>,
}

/// Keeps the `k` most frequent tags (ties broken lexicographically) and
/// drops songs left without any of them.
pub fn topk_tag_filter(records: &[AnnotationRecord], k: usize) -> Result<FilteredRecords> {
    if k == 0 {
        return Err(Error::Domain("K must be >= 1".into()));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for r in records {
        for t in &r.tags {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    if freq.len() < k {
        return Err(Error::Domain(format!(
            "only {} distinct tags, cannot keep the top {k}",
            freq.len()
        )));
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(k);
    let vocab: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let index: HashMap<&str, usize> = ranked.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();

    let songs = records
        .iter()
        .filter_map(|r| {
            let mut tags: Vec<usize> = r.tags.iter().filter_map(|t| index.get(t.as_str()).copied()).collect();
            tags.sort_unstable();
            tags.dedup();
            (!tags.is_empty()).then(|| SongRecord {
                song_id: r.song_id.clone(),
                artist_id: r.artist_id.clone(),
                tags,
            })
        })
        .collect();
    Ok(FilteredRecords { songs, vocab })
}

/// Disjoint song-index sets; no artist appears in two of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Valid,
    Test,
}

impl SplitPart {
    pub fn name(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Valid => "valid",
            SplitPart::Test => "test",
        }
    }
}

impl FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "valid" => Ok(SplitPart::Valid),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl SplitAssignment {
    pub fn part(&self, p: SplitPart) -> &[usize] {
        match p {
            SplitPart::Train => &self.train,
            SplitPart::Valid => &self.valid,
            SplitPart::Test => &self.test,
        }
    }

    /// `song_id<TAB>split` lines, in song order.
    pub fn write(&self, path: &Path, song_ids: &[String]) -> Result<()> {
        let mut label = vec![""; song_ids.len()];
        for p in [SplitPart::Train, SplitPart::Valid, SplitPart::Test] {
            for &s in self.part(p) {
                label[s] = p.name();
            }
        }
        write_lines(path, song_ids.iter().zip(label).map(|(id, l)| format!("{id}\t{l}")))
    }

    /// Reads a file written by [`SplitAssignment::write`], resolving ids
    /// against `song_ids`. Songs missing from the file are left out.
    pub fn read(path: &Path, song_ids: &[String]) -> Result<Self> {
        let text = read_text(path)?;
        let index: HashMap<&str, usize> = song_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut split = SplitAssignment {
            train: vec![],
            valid: vec![],
            test: vec![],
            ratios: [0.0; 3],
            seed: 0,
        };
        for (n, line) in lines(&text) {
            let (id, part) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path.display().to_string(), n, "expected song_id<TAB>split"))?;
            let part: SplitPart = part
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse(path.display().to_string(), n, e.to_string()))?;
            if let Some(&s) = index.get(id) {
                match part {
                    SplitPart::Train => split.train.push(s),
                    SplitPart::Valid => split.valid.push(s),
                    SplitPart::Test => split.test.push(s),
                }
            }
        }
        let total = (split.train.len() + split.valid.len() + split.test.len()).max(1) as f64;
        split.ratios = [
            split.train.len() as f64 / total,
            split.valid.len() as f64 / total,
            split.test.len() as f64 / total,
        ];
        Ok(split)
    }
}

/// Shuffles artists with a seeded generator and fills train, valid and test
/// in that order, moving to the next split once the cumulative song count
/// reaches its quota.
pub fn artist_level_split<S: AsRef<str>>(artist_ids: &[S], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let mut by_artist: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, a) in artist_ids.iter().enumerate() {
        by_artist.entry(a.as_ref()).or_default().push(i);
    }
    let mut artists: Vec<&str> = by_artist.keys().copied().collect();
    Rng::new(seed).shuffle(&mut artists);

    let n = artist_ids.len() as f64;
    let b1 = ratios[0] * n;
    let b2 = (ratios[0] + ratios[1]) * n;
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut assigned = 0usize;
    for a in artists {
        let songs = &by_artist[a];
        let at = assigned as f64;
        let p = if at < b1 - 1e-9 {
            0
        } else if at < b2 - 1e-9 {
            1
        } else {
            2
        };
        parts[p].extend_from_slice(songs);
        assigned += songs.len();
    }
    for (p, name) in parts.iter_mut().zip(["train", "valid", "test"]) {
        if p.is_empty() {
            return Err(Error::Split(format!(
                "the {name} split is empty; try a different seed or ratios"
            )));
        }
        p.sort_unstable();
    }
    let [train, valid, test] = parts;
    Ok(SplitAssignment {
        train,
        valid,
        test,
        ratios,
        seed,
    })
}

/// Per-song vectors keyed by song id.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVectors {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl InputVectors {
    pub fn new(dim: usize) -> Self {
        InputVectors {
            dim,
            ids: vec![],
            index: HashMap::new(),
            data: vec![],
        }
    }

    pub fn insert(&mut self, id: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {id} has {} entries, expected {}",
                v.len(),
                self.dim
            )));
        }
        if self.index.contains_key(id) {
            return Err(Error::Domain(format!("duplicate id {id}")));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// `id<TAB>v1 v2 ... vD` lines.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_lines(
            path,
            self.ids.iter().enumerate().map(|(i, id)| {
                let vals: Vec<String> = self.data[i * self.dim..(i + 1) * self.dim].iter().map(|v| fmt_sig9(*v)).collect();
                format!("{id}\t{}", vals.join(" "))
            }),
        )
    }
}

/// Reads `features.tsv` (`id<TAB>values`) or a factor file (`#` header,
/// `id values` separated by spaces). The first line fixes the dimension.
pub fn parse_vector_file(text: &str, source: &str) -> Result<InputVectors> {
    let mut out: Option<InputVectors> = None;
    for (n, line) in lines(text) {
        if line.starts_with('#') {
            continue;
        }
        let (id, rest) = match line.split_once('\t') {
            Some(p) => p,
            None => line
                .split_once(' ')
                .ok_or_else(|| Error::parse(source, n, "expected an id followed by values"))?,
        };
        let vals = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(source, n, format!("bad number: {e}")))?;
        if vals.is_empty() || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(source, n, "missing or non-finite values"));
        }
        let table = out.get_or_insert_with(|| InputVectors::new(vals.len()));
        table
            .insert(id.trim(), &vals)
            .map_err(|e| Error::parse(source, n, e.to_string()))?;
    }
    out.ok_or_else(|| Error::parse(source, 0, "no vectors in file"))
}

pub fn load_vector_file(path: &Path) -> Result<InputVectors> {
    parse_vector_file(&read_text(path)?, &path.display().to_string())
}

/// User–song play counts keyed by their file ids.
#[derive(Debug, Clone)]
pub struct PlayLog {
    pub user_ids: Vec<String>,
    pub song_ids: Vec<String>,
    pub interactions: SparseInteractions,
}

pub fn parse_plays(text: &str, source: &str) -> Result<PlayLog> {
    let mut users: HashMap<String, usize> = HashMap::new();
    let mut songs: HashMap<String, usize> = HashMap::new();
    let (mut user_ids, mut song_ids) = (vec![], vec![]);
    let mut seen = HashSet::new();
    let mut triplets = vec![];
    let intern = |map: &mut HashMap<String, usize>, ids: &mut Vec<String>, key: &str| -> usize {
        *map.entry(key.to_string()).or_insert_with(|| {
            ids.push(key.to_string());
            ids.len() - 1
        })
    };
    for (n, line) in lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(source, n, "expected user_id<TAB>song_id<TAB>count"));
        }
        let count: u32 = f[2]
            .trim()
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| Error::parse(source, n, format!("play count {:?} is not a positive integer", f[2])))?;
        let u = intern(&mut users, &mut user_ids, f[0].trim());
        let s = intern(&mut songs, &mut song_ids, f[1].trim());
        if !seen.insert((u, s)) {
            return Err(Error::parse(source, n, format!("duplicate pair ({}, {})", f[0], f[1])));
        }
        triplets.push((u, s, count));
    }
    let interactions = SparseInteractions::new(user_ids.len(), song_ids.len(), triplets)?;
    Ok(PlayLog {
        user_ids,
        song_ids,
        interactions,
    })
}

pub fn load_plays(path: &Path) -> Result<PlayLog> {
    parse_plays(&read_text(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Genre,
    Mood,
    Location,
    Language,
    Instrument,
    Activity,
    Decade,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Genre,
        Category::Mood,
        Category::Location,
        Category::Language,
        Category::Instrument,
        Category::Activity,
        Category::Decade,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Genre => "genre",
            Category::Mood => "mood",
            Category::Location => "location",
            Category::Language => "language",
            Category::Instrument => "instrument",
            Category::Activity => "activity",
            Category::Decade => "decade",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown tag category {s:?}")))
    }
}

pub fn load_categories(path: &Path) -> Result<HashMap<String, Category>> {
    let source = path.display().to_string();
    let mut out = HashMap::new();
    for (n, line) in lines(&read_text(path)?) {
        let (tag, cat) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&source, n, "expected tag<TAB>category"))?;
        let cat: Category = cat.trim().parse().map_err(|e: Error| Error::parse(&source, n, e.to_string()))?;
        out.insert(tag.trim().to_lowercase(), cat);
    }
    Ok(out)
}

/// Where per-song input vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputSource {
    Cultural,
    Acoustic,
    /// Cultural vector followed by acoustic vector.
    Concat,
}

impl FromStr for InputSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cultural" => Ok(InputSource::Cultural),
            "acoustic" => Ok(InputSource::Acoustic),
            "concat" => Ok(InputSource::Concat),
            other => Err(Error::Config(format!("unknown input source {other:?}"))),
        }
    }
}

/// Songs with tags and input vectors, plus the tag vocabulary and the
/// word vectors that feed the tag branch.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalDataset {
    pub songs: Vec<SongRecord>,
    pub inputs: Mat,
    pub tag_vocab: Vec<String>,
    pub tag_vectors: Option<Mat>,
    pub tag_categories: Option<Vec<Option<Category>>>,
}

impl RetrievalDataset {
    pub fn new(songs: Vec<SongRecord>, inputs: Mat, tag_vocab: Vec<String>) -> Result<Self> {
        if inputs.rows() != songs.len() {
            return Err(Error::Shape(format!(
                "{} input rows for {} songs",
                inputs.rows(),
                songs.len()
            )));
        }
        let mut uniq = HashSet::new();
        if let Some(t) = tag_vocab.iter().find(|t| !uniq.insert(t.as_str())) {
            return Err(Error::Domain(format!("duplicate tag {t:?} in vocabulary")));
        }
        for s in &songs {
            if s.tags.is_empty() {
                return Err(Error::Domain(format!("song {} has no tags", s.song_id)));
            }
            if s.tags.iter().any(|&t| t >= tag_vocab.len()) || s.tags.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Domain(format!(
                    "song {} has out-of-range or unsorted tag indices",
                    s.song_id
                )));
            }
        }
        Ok(RetrievalDataset {
            songs,
            inputs,
            tag_vocab,
            tag_vectors: None,
            tag_categories: None,
        })
    }

    pub fn n_songs(&self) -> usize {
        self.songs.len()
    }

    pub fn n_tags(&self) -> usize {
        self.tag_vocab.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn input(&self, song: usize) -> &[f64] {
        self.inputs.row(song)
    }

    pub fn song_ids(&self) -> Vec<String> {
        self.songs.iter().map(|s| s.song_id.clone()).collect()
    }

    #[inline]
    pub fn has_tag(&self, song: usize, tag: usize) -> bool {
        self.songs[song].tags.binary_search(&tag).is_ok()
    }

    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.tag_vocab.iter().position(|t| t == tag)
    }

    /// Resolves every vocabulary tag through the word-vector table.
    pub fn attach_tag_vectors(&mut self, table: &WordVectorTable) -> Result<()> {
        let rows = self
            .tag_vocab
            .iter()
            .map(|t| table.tag_to_vector(t))
            .collect::<Result<Vec<_>>>()?;
        self.tag_vectors = Some(Mat::from_rows(&rows, table.dim())?);
        Ok(())
    }

    pub fn with_tag_vectors(mut self, vectors: Mat) -> Result<Self> {
        if vectors.rows() != self.n_tags() {
            return Err(Error::Shape(format!(
                "{} tag vectors for {} tags",
                vectors.rows(),
                self.n_tags()
            )));
        }
        self.tag_vectors = Some(vectors);
        Ok(self)
    }

    pub fn attach_categories(&mut self, categories: &HashMap<String, Category>) {
        self.tag_categories = Some(self.tag_vocab.iter().map(|t| categories.get(t).copied()).collect());
    }

    pub fn tag_vectors(&self) -> Result<&Mat> {
        self.tag_vectors
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no tag vectors attached".into()))
    }

    /// Songs that carry `tag`, restricted to `subset`.
    pub fn positives_in(&self, tag: usize, subset: &[usize]) -> Vec<usize> {
        subset.iter().copied().filter(|&s| self.has_tag(s, tag)).collect()
    }
}

/// Attaches input vectors to filtered records.
pub fn bind_inputs(
    filtered: FilteredRecords,
    source: InputSource,
    cultural: Option<&InputVectors>,
    acoustic: Option<&InputVectors>,
) -> Result<RetrievalDataset> {
    fn need<'v>(v: Option<&'v InputVectors>, source: InputSource, what: &str) -> Result<&'v InputVectors> {
        v.ok_or_else(|| Error::Config(format!("{source:?} input requires {what} vectors")))
    }
    let parts: Vec<&InputVectors> = match source {
        InputSource::Cultural => vec![need(cultural, source, "cultural")?],
        InputSource::Acoustic => vec![need(acoustic, source, "acoustic")?],
        InputSource::Concat => vec![need(cultural, source, "cultural")?, need(acoustic, source, "acoustic")?],
    };
    let dim: usize = parts.iter().map(|p| p.dim()).sum();
    let mut missing = vec![];
    let mut data = Vec::with_capacity(filtered.songs.len() * dim);
    for s in &filtered.songs {
        for p in &parts {
            match p.get(&s.song_id) {
                Some(v) => data.extend_from_slice(v),
                None => {
                    missing.push(s.song_id.clone());
                    break;
                }
            }
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        return Err(Error::Binding(format!(
            "{} song(s) have no input vector: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > 10 { ", ..." } else { "" }
        )));
    }
    let inputs = Mat::from_vec(filtered.songs.len(), dim, data)?;
    RetrievalDataset::new(filtered.songs, inputs, filtered.vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(song: &str, artist: &str, tags: &[&str]) -> AnnotationRecord {
        AnnotationRecord {
            song_id: song.into(),
            artist_id: artist.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn parses_annotation_line() {
        let r = parse_annotations("s1\ta1\tJazz , piano\n", "t").unwrap();
        assert_eq!(r, vec![rec("s1", "a1", &["jazz", "piano"])]);
    }

    #[test]
    fn annotation_errors() {
        let e = parse_annotations("s1\tjazz\n", "t").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_annotations("s1\ta\tjazz\ns1\tb\trock\n", "t").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(parse_annotations("s1\ta\t , \n", "t").is_err());
    }

    #[test]
    fn topk_keeps_most_frequent() {
        let mut recs = vec![];
        for i in 0..5 {
            recs.push(rec(&format!("a{i}"), "x", &["a"]));
        }
        for i in 0..3 {
            recs.push(rec(&format!("b{i}"), "x", &["b"]));
        }
        recs.push(rec("c0", "x", &["c"]));
        let f = topk_tag_filter(&recs, 2).unwrap();
        assert_eq!(f.vocab, vec!["a", "b"]);
        assert_eq!(f.songs.len(), 8);
        assert!(f.songs.iter().all(|s| s.song_id != "c0"));

        let all = topk_tag_filter(&recs, 3).unwrap();
        assert_eq!(all.songs.len(), recs.len());
        assert!(matches!(topk_tag_filter(&recs, 4), Err(Error::Domain(_))));
        assert!(matches!(topk_tag_filter(&recs, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn distinct_artists_split_eight_one_one() {
        let artists: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
        let s = artist_level_split(&artists, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn single_artist_cannot_split() {
        let artists = vec!["a"; 10];
        assert!(matches!(artist_level_split(&artists, [0.8, 0.1, 0.1], 0), Err(Error::Split(_))));
    }

    #[test]
    fn bad_ratios() {
        let artists = vec!["a", "b", "c"];
        assert!(artist_level_split(&artists, [0.5, 0.5, 0.1], 0).is_err());
        assert!(artist_level_split(&artists, [1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn binds_and_concatenates() {
        let f = FilteredRecords {
            songs: vec![SongRecord { song_id: "s1".into(), artist_id: "a".into(), tags: vec![0] }],
            vocab: vec!["jazz".into()],
        };
        let mut cul = InputVectors::new(200);
        cul.insert("s1", &[0.5; 200]).unwrap();
        let mut ac = InputVectors::new(64);
        ac.insert("s1", &[1.5; 64]).unwrap();
        let d = bind_inputs(f.clone(), InputSource::Cultural, Some(&cul), None).unwrap();
        assert_eq!(d.input_dim(), 200);
        let d = bind_inputs(f.clone(), InputSource::Concat, Some(&cul), Some(&ac)).unwrap();
        assert_eq!(d.input_dim(), 264);
        assert_eq!(d.input(0)[199], 0.5);
        assert_eq!(d.input(0)[200], 1.5);
        assert!(matches!(bind_inputs(f.clone(), InputSource::Concat, Some(&cul), None), Err(Error::Config(_))));
        let empty = InputVectors::new(3);
        assert!(matches!(bind_inputs(f, InputSource::Acoustic, None, Some(&empty)), Err(Error::Binding(_))));
    }

    #[test]
    fn vector_file_formats() {
        let t = parse_vector_file("#wmf k=2 reg=0.01 alpha=40\ns1 1.0 2.0\ns2 3 4\n", "f").unwrap();
        assert_eq!(t.get("s2").unwrap(), &[3.0, 4.0]);
        let t = parse_vector_file("s1\t1 2 3\n", "f").unwrap();
        assert_eq!(t.dim(), 3);
        assert!(parse_vector_file("s1\t1 2\ns2\t1\n", "f").is_err());
        assert!(parse_vector_file("s1\t1 2\ns1\t1 3\n", "f").is_err());
    }

    #[test]
    fn plays_parse() {
        let p = parse_plays("u1\ts1\t3\nu2\ts1\t1\nu1\ts2\t2\n", "p").unwrap();
        assert_eq!(p.interactions.nnz(), 3);
        assert_eq!(p.user_ids, vec!["u1", "u2"]);
        assert!(parse_plays("u1\ts1\t0\n", "p").is_err());
        assert!(parse_plays("u1\ts1\t2\nu1\ts1\t3\n", "p").is_err());
    }

    #[test]
    fn categories_parse() {
        assert_eq!("mood".parse::<Category>().unwrap(), Category::Mood);
        assert!("tempo".parse::<Category>().is_err());
    }
}
