//! Plain-text checkpoints of named branches and their optimizer state.
//!
//! ```text
//! [branch tag d_in=300]
//! W1 300 512
//! <one line per row, 9 significant digits>
//! b1 512
//! <values>
//! W2 512 256
//! ...
//! b2 256
//! ...
//! [adam t=2000]
//! m.W1 300 512
//! ...
//! v.b2 256
//! ...
//! ```
//!
//! An `[adam]` section belongs to the branch section right before it.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::read_text;
use crate::error::{Error, Result};
use crate::linalg::{fmt_sig9, Mat};
use crate::net::{AdamHyper, AdamState, GradientSet, MlpBranch};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedBranch {
    pub name: String,
    pub branch: MlpBranch,
    pub adam: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub branches: Vec<NamedBranch>,
}

fn push_mat(out: &mut String, label: &str, m: &Mat) {
    let _ = writeln!(out, "{label} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| fmt_sig9(*v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn push_vec(out: &mut String, label: &str, v: &[f64]) {
    let _ = writeln!(out, "{label} {}", v.len());
    let row: Vec<String> = v.iter().map(|x| fmt_sig9(*x)).collect();
    let _ = writeln!(out, "{}", row.join(" "));
}

fn push_params(out: &mut String, prefix: &str, w1: &Mat, b1: &[f64], w2: &Mat, b2: &[f64]) {
    push_mat(out, &format!("{prefix}W1"), w1);
    push_vec(out, &format!("{prefix}b1"), b1);
    push_mat(out, &format!("{prefix}W2"), w2);
    push_vec(out, &format!("{prefix}b2"), b2);
}

impl Checkpoint {
    pub fn push(&mut self, name: &str, branch: &MlpBranch, adam: Option<&AdamState>) {
        self.branches.push(NamedBranch {
            name: name.to_string(),
            branch: branch.clone(),
            adam: adam.cloned(),
        });
    }

    pub fn branch(&self, name: &str) -> Option<&MlpBranch> {
        self.branches.iter().find(|b| b.name == name).map(|b| &b.branch)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for nb in &self.branches {
            let b = &nb.branch;
            let _ = writeln!(out, "[branch {} d_in={}]", nb.name, b.d_in());
            push_params(&mut out, "", &b.w1, &b.b1, &b.w2, &b.b2);
            if let Some(st) = &nb.adam {
                let _ = writeln!(out, "[adam t={}]", st.t);
                push_params(&mut out, "m.", &st.m.w1, &st.m.b1, &st.m.w2, &st.m.b2);
                push_params(&mut out, "v.", &st.v.w1, &st.v.b1, &st.v.w2, &st.v.b2);
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut p = Parser {
            lines: text.lines().enumerate().peekable(),
            source,
        };
        let mut ck = Checkpoint::default();
        while let Some((n, line)) = p.next_nonblank() {
            if let Some(rest) = line.strip_prefix("[branch ").and_then(|r| r.strip_suffix(']')) {
                let (name, d_in) = rest
                    .split_once(" d_in=")
                    .and_then(|(n, d)| Some((n.to_string(), d.parse::<usize>().ok()?)))
                    .ok_or_else(|| Error::parse(source, n, format!("bad branch header {line:?}")))?;
                let (w1, b1, w2, b2) = p.params("")?;
                if w1.rows() != d_in {
                    return Err(Error::parse(source, n, format!("W1 has {} rows, header says d_in={d_in}", w1.rows())));
                }
                let branch = MlpBranch::from_parts(w1, b1, w2, b2).map_err(|e| Error::parse(source, n, e.to_string()))?;
                ck.branches.push(NamedBranch { name, branch, adam: None });
            } else if let Some(rest) = line.strip_prefix("[adam t=").and_then(|r| r.strip_suffix(']')) {
                let t: u64 = rest.parse().map_err(|_| Error::parse(source, n, format!("bad adam header {line:?}")))?;
                let owner = ck
                    .branches
                    .last_mut()
                    .ok_or_else(|| Error::parse(source, n, "adam section before any branch"))?;
                let (w1, b1, w2, b2) = p.params("m.")?;
                let m = GradientSet { w1, b1, w2, b2 };
                let (w1, b1, w2, b2) = p.params("v.")?;
                let v = GradientSet { w1, b1, w2, b2 };
                let shapes_ok = [&m, &v].iter().all(|g| {
                    g.w1.rows() == owner.branch.d_in()
                        && g.w1.cols() == owner.branch.hidden()
                        && g.w2.cols() == owner.branch.out_dim()
                        && g.b1.len() == owner.branch.hidden()
                        && g.b2.len() == owner.branch.out_dim()
                });
                if !shapes_ok {
                    return Err(Error::parse(source, n, "adam moments do not match their branch"));
                }
                owner.adam = Some(AdamState { m, v, t, hyper: AdamHyper::default() });
            } else {
                return Err(Error::parse(source, n, format!("unexpected line {line:?}")));
            }
        }
        Ok(ck)
    }
}

struct Parser<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: std::iter::Peekable<I>,
    source: &'a str,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Parser<'a, I> {
    fn next_nonblank(&mut self) -> Option<(usize, &'a str)> {
        self.lines
            .by_ref()
            .map(|(i, l)| (i + 1, l.trim()))
            .find(|(_, l)| !l.is_empty())
    }

    fn expect(&mut self) -> Result<(usize, &'a str)> {
        self.next_nonblank()
            .ok_or_else(|| Error::parse(self.source, 0, "unexpected end of checkpoint"))
    }

    fn numbers(&mut self, want: usize) -> Result<Vec<f64>> {
        let (n, line) = self.expect()?;
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(self.source, n, format!("bad number: {e}")))?;
        if vals.len() != want {
            return Err(Error::parse(self.source, n, format!("expected {want} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn header(&mut self, label: &str) -> Result<Vec<usize>> {
        let (n, line) = self.expect()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(label) {
            return Err(Error::parse(self.source, n, format!("expected {label} block, found {line:?}")));
        }
        parts
            .map(|p| p.parse::<usize>().map_err(|_| Error::parse(self.source, n, format!("bad size in {line:?}"))))
            .collect()
    }

    fn mat(&mut self, label: &str) -> Result<Mat> {
        let dims = self.header(label)?;
        let [rows, cols] = dims[..] else {
            return Err(Error::parse(self.source, 0, format!("{label} needs rows and cols")));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.numbers(cols)?);
        }
        Mat::from_vec(rows, cols, data)
    }

    fn vec(&mut self, label: &str) -> Result<Vec<f64>> {
        let dims = self.header(label)?;
        let [len] = dims[..] else {
            return Err(Error::parse(self.source, 0, format!("{label} needs a length")));
        };
        self.numbers(len)
    }

    fn params(&mut self, prefix: &str) -> Result<(Mat, Vec<f64>, Mat, Vec<f64>)> {
        Ok((
            self.mat(&format!("{prefix}W1"))?,
            self.vec(&format!("{prefix}b1"))?,
            self.mat(&format!("{prefix}W2"))?,
            self.vec(&format!("{prefix}b2"))?,
        ))
    }
}
