//! Pretrained word-vector tables in the plain text format
//! (`<count> <dim>` header, then `<token> <v1> ... <v_dim>` per line).
//!
//! Tags resolve to vectors by n-gram lookup first (`"deep house"` is looked
//! up as `deep_house`), then by the mean of whichever of its tokens are
//! present.

use std::collections::HashMap;
use std::path::Path;

use crate::dataset::{read_text, write_lines};
use crate::error::{Error, Result};
use crate::linalg::{dot, fmt_sig9, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

/// Lowercases and joins words with underscores.
pub fn normalize_tag(tag: &str) -> String {
    tag.trim()
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        WordVectorTable {
            dim,
            tokens: vec![],
            index: HashMap::new(),
            data: vec![],
        }
    }

    pub fn insert(&mut self, token: &str, v: &[f64]) -> Result<()> {
        if token.is_empty() || token.contains(char::is_whitespace) {
            return Err(Error::Domain(format!("invalid token {token:?}")));
        }
        if v.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {token:?} has {} entries, expected {}",
                v.len(),
                self.dim
            )));
        }
        if self.index.contains_key(token) {
            return Err(Error::Domain(format!("duplicate token {token:?}")));
        }
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.data.extend_from_slice(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(source, 1, "empty file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let parse_count = |s: &str| s.parse::<usize>().ok();
        let (count, dim) = match h.as_slice() {
            [c, d] => match (parse_count(c), parse_count(d)) {
                (Some(c), Some(d)) if d > 0 => (c, d),
                _ => return Err(Error::parse(source, 1, format!("bad header {header:?}"))),
            },
            _ => return Err(Error::parse(source, 1, "header must be `<vocab_count> <dim>`")),
        };
        let mut table = WordVectorTable::new(dim);
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line");
            let vals = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(source, n, format!("bad number: {e}")))?;
            if vals.len() != dim {
                return Err(Error::parse(
                    source,
                    n,
                    format!("token {token:?} has {} values, header says {dim}", vals.len()),
                ));
            }
            table.insert(token, &vals).map_err(|e| Error::parse(source, n, e.to_string()))?;
        }
        if table.len() != count {
            return Err(Error::parse(
                source,
                1,
                format!("header announces {count} entries, file has {}", table.len()),
            ));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = std::iter::once(format!("{} {}", self.len(), self.dim));
        let body = self.tokens.iter().enumerate().map(|(i, t)| {
            let vals: Vec<String> = self.row(i).iter().map(|v| fmt_sig9(*v)).collect();
            format!("{t} {}", vals.join(" "))
        });
        write_lines(path, header.chain(body))
    }

    /// Vector for a free-text tag: the joined n-gram if present, else the
    /// mean of the tag's known tokens.
    pub fn tag_to_vector(&self, tag: &str) -> Result<Vec<f64>> {
        self.resolve(tag).map(|(_, v)| v)
    }

    /// Like [`Self::tag_to_vector`], also returning the n-gram key when it
    /// was a direct hit.
    fn resolve(&self, tag: &str) -> Result<(Option<String>, Vec<f64>)> {
        let key = normalize_tag(tag);
        if key.is_empty() {
            return Err(Error::Domain("empty tag".into()));
        }
        if let Some(v) = self.get(&key) {
            return Ok((Some(key), v.to_vec()));
        }
        let mut sum = vec![0.0; self.dim];
        let mut hits = 0usize;
        for w in key.split('_') {
            if let Some(v) = self.get(w) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                hits += 1;
            }
        }
        if hits == 0 {
            return Err(Error::OutOfVocabulary(tag.to_string()));
        }
        sum.iter_mut().for_each(|s| *s /= hits as f64);
        Ok((None, sum))
    }

    /// Top-`k` tokens by cosine similarity to the resolved query, the query
    /// token itself excluded; ties ordered lexicographically.
    pub fn nearest_words(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let (hit, q) = self.resolve(query)?;
        let exclude = hit.unwrap_or_else(|| normalize_tag(query));
        let qn = norm(&q);
        if qn == 0.0 {
            return Err(Error::Domain(format!("query {query:?} resolves to a zero vector")));
        }
        let mut scored: Vec<(&str, f64)> = self
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| **t != exclude)
            .filter_map(|(i, t)| {
                let v = self.row(i);
                let n = norm(v);
                (n > 0.0).then(|| (t.as_str(), dot(&q, v) / (qn * n)))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(t, s)| (t.to_string(), s)).collect())
    }
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectorTable> {
    WordVectorTable::parse(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_small_file() {
        let t = WordVectorTable::parse("2 3\njazz 1 0 0\nrock 0 1 0.5\n", "v").unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        assert_eq!(t.get("rock").unwrap(), &[0.0, 1.0, 0.5]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = WordVectorTable::parse("2 3\njazz 1 0 0\nrock 0 1\n", "v").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = WordVectorTable::parse("2 2\njazz 1 0\njazz 0 1\n", "v").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(WordVectorTable::parse("x 3\n", "v").is_err());
        assert!(WordVectorTable::parse("3 2\na 1 0\n", "v").is_err());
    }

    fn table() -> WordVectorTable {
        let mut t = WordVectorTable::new(2);
        t.insert("deep", &[1.0, 0.0]).unwrap();
        t.insert("house", &[0.0, 3.0]).unwrap();
        t.insert("jazz", &[2.0, 2.0]).unwrap();
        t
    }

    #[test]
    fn direct_hit_and_token_mean() {
        let mut t = table();
        assert_eq!(t.tag_to_vector("jazz").unwrap(), vec![2.0, 2.0]);
        assert_eq!(t.tag_to_vector("deep house").unwrap(), vec![0.5, 1.5]);
        t.insert("deep_house", &[-1.0, 4.0]).unwrap();
        assert_eq!(t.tag_to_vector("deep house").unwrap(), vec![-1.0, 4.0]);
        assert_eq!(t.tag_to_vector("Deep House").unwrap(), t.tag_to_vector("deep_house").unwrap());
    }

    #[test]
    fn missing_tokens_are_skipped_or_oov() {
        let t = table();
        assert_eq!(t.tag_to_vector("deep techno").unwrap(), vec![1.0, 0.0]);
        assert!(matches!(t.tag_to_vector("polka"), Err(Error::OutOfVocabulary(_))));
    }

    #[test]
    fn orthogonal_ties_are_lexicographic() {
        let mut t = WordVectorTable::new(3);
        t.insert("c", &[1.0, 0.0, 0.0]).unwrap();
        t.insert("b", &[0.0, 1.0, 0.0]).unwrap();
        t.insert("a", &[0.0, 0.0, 1.0]).unwrap();
        let nn = t.nearest_words("c", 2).unwrap();
        assert_eq!(nn, vec![("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
    }

    #[test]
    fn near_duplicate_ranks_first() {
        let mut t = table();
        t.insert("jazzy", &[2.0, 2.1]).unwrap();
        assert_eq!(t.nearest_words("jazz", 1).unwrap()[0].0, "jazzy");
    }
}
