//! Weighted matrix factorization of implicit play counts, solved by
//! alternating least squares.
//!
//! The objective over every (user, song) cell is
//!
//! ```text
//! Σ c_ui (p_ui - x_u·y_i)² + reg (Σ‖x_u‖² + Σ‖y_i‖²)
//! p_ui = 1 if r_ui > 0 else 0,   c_ui = 1 + alpha · r_ui
//! ```
//!
//! Only observed cells carry extra confidence, so each row solve uses the
//! shared Gram matrix of the fixed side plus a low-rank correction from the
//! row's observations.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, fmt_sig9, gemm, Mat, Op};
use crate::rng::Rng;

/// User × song play counts, row-compressed with a transposed copy.
#[derive(Debug, Clone)]
pub struct SparseInteractions {
    n_users: usize,
    n_songs: usize,
    row_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    row_count: Vec<u32>,
    col_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    col_count: Vec<u32>,
}

fn compress(n: usize, mut entries: Vec<(usize, usize, u32)>) -> (Vec<usize>, Vec<usize>, Vec<u32>) {
    entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
    let mut ptr = vec![0usize; n + 1];
    for &(r, _, _) in &entries {
        ptr[r + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    let idx = entries.iter().map(|e| e.1).collect();
    let counts = entries.iter().map(|e| e.2).collect();
    (ptr, idx, counts)
}

impl SparseInteractions {
    pub fn new(n_users: usize, n_songs: usize, triplets: Vec<(usize, usize, u32)>) -> Result<Self> {
        for &(u, s, c) in &triplets {
            if u >= n_users || s >= n_songs {
                return Err(Error::Shape(format!(
                    "interaction ({u}, {s}) outside {n_users}x{n_songs}"
                )));
            }
            if c == 0 {
                return Err(Error::Domain(format!("play count of ({u}, {s}) must be >= 1")));
            }
        }
        let transposed: Vec<_> = triplets.iter().map(|&(u, s, c)| (s, u, c)).collect();
        let (row_ptr, row_idx, row_count) = compress(n_users, triplets);
        for u in 0..n_users {
            let cols = &row_idx[row_ptr[u]..row_ptr[u + 1]];
            if let Some(w) = cols.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::Domain(format!(
                    "duplicate interaction for user {u}, song {}",
                    w[0]
                )));
            }
        }
        let (col_ptr, col_idx, col_count) = compress(n_songs, transposed);
        Ok(SparseInteractions {
            n_users,
            n_songs,
            row_ptr,
            row_idx,
            row_count,
            col_ptr,
            col_idx,
            col_count,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_songs(&self) -> usize {
        self.n_songs
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Songs and play counts of one user.
    pub fn user_row(&self, u: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let r = self.row_ptr[u]..self.row_ptr[u + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.row_count[r].iter().copied())
    }

    /// Users and play counts of one song.
    pub fn song_col(&self, s: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let r = self.col_ptr[s]..self.col_ptr[s + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.col_count[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.n_users).flat_map(move |u| self.user_row(u).map(move |(s, c)| (u, s, c)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmfConfig {
    pub k: usize,
    pub reg: f64,
    pub alpha: f64,
    pub sweeps: usize,
}

impl Default for WmfConfig {
    fn default() -> Self {
        WmfConfig {
            k: 200,
            reg: 0.01,
            alpha: 40.0,
            sweeps: 15,
        }
    }
}

/// User and song latent factors. Only `songs` feeds the retrieval model;
/// `users` is kept for diagnostics and may be dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub users: Mat,
    pub songs: Mat,
    pub reg: f64,
    pub alpha: f64,
}

impl FactorModel {
    pub fn k(&self) -> usize {
        self.songs.cols()
    }

    pub fn confidence(&self, count: u32) -> f64 {
        1.0 + self.alpha * f64::from(count)
    }
}

fn gram(m: &Mat) -> Mat {
    let mut g = Mat::zeros(m.cols(), m.cols());
    gemm(1.0, m, Op::T, m, Op::N, 0.0, &mut g).expect("gram shapes");
    g
}

pub fn wmf_objective(r: &SparseInteractions, m: &FactorModel) -> Result<f64> {
    let k = m.users.cols();
    if m.songs.cols() != k || m.users.rows() != r.n_users() || m.songs.rows() != r.n_songs() {
        return Err(Error::Shape(format!(
            "factors {}x{} / {}x{} do not match {} users x {} songs",
            m.users.rows(),
            m.users.cols(),
            m.songs.rows(),
            m.songs.cols(),
            r.n_users(),
            r.n_songs()
        )));
    }
    // Σ over all cells of (x·y)² = <UᵀU, VᵀV>
    let (gu, gv) = (gram(&m.users), gram(&m.songs));
    let mut total = dot(gu.as_slice(), gv.as_slice());
    for (u, s, count) in r.iter() {
        let score = dot(m.users.row(u), m.songs.row(s));
        let c = m.confidence(count);
        total += c * (1.0 - score) * (1.0 - score) - score * score;
    }
    let sq = |x: &Mat| dot(x.as_slice(), x.as_slice());
    total += m.reg * (sq(&m.users) + sq(&m.songs));
    Ok(total.max(0.0))
}

/// One observed cell of the row being solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowEntry {
    pub index: usize,
    pub confidence: f64,
    pub preference: f64,
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// into its lower triangle.
fn cholesky(a: &mut Mat) -> Result<()> {
    let n = a.rows();
    for j in 0..n {
        let mut d = a.get(j, j);
        for p in 0..j {
            d -= a.get(j, p) * a.get(j, p);
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "normal matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        a.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for p in 0..j {
                s -= a.get(i, p) * a.get(j, p);
            }
            a.set(i, j, s / d);
        }
    }
    Ok(())
}

fn cholesky_solve(l: &Mat, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let s: f64 = (0..i).map(|p| l.get(i, p) * b[p]).sum();
        b[i] = (b[i] - s) / l.get(i, i);
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|p| l.get(p, i) * b[p]).sum();
        b[i] = (b[i] - s) / l.get(i, i);
    }
}

fn solve_row_with_gram(fixed: &Mat, gram: &Mat, entries: &[RowEntry], reg: f64) -> Result<Vec<f64>> {
    let k = fixed.cols();
    let mut a = gram.clone();
    let mut b = vec![0.0; k];
    for e in entries {
        let y = fixed.row(e.index);
        let extra = e.confidence - 1.0;
        for i in 0..k {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            let row = a.row_mut(i);
            for j in 0..k {
                row[j] += extra * yi * y[j];
            }
            b[i] += e.confidence * e.preference * yi;
        }
    }
    for i in 0..k {
        a.set(i, i, a.get(i, i) + reg);
    }
    cholesky(&mut a)?;
    cholesky_solve(&a, &mut b);
    Ok(b)
}

/// Closed-form least-squares update of one row given the opposite factor:
/// `x = (YᵀC Y + reg·I)⁻¹ YᵀC p`, touching only the observed entries.
pub fn als_solve_row(fixed: &Mat, entries: &[RowEntry], reg: f64) -> Result<Vec<f64>> {
    if let Some(e) = entries.iter().find(|e| e.index >= fixed.rows()) {
        return Err(Error::Shape(format!(
            "entry index {} outside fixed factor with {} rows",
            e.index,
            fixed.rows()
        )));
    }
    solve_row_with_gram(fixed, &gram(fixed), entries, reg)
}

/// Which factor a half-sweep re-solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Users,
    Songs,
}

/// Re-solves every row of one side with the other side held fixed.
pub fn half_sweep(r: &SparseInteractions, m: &mut FactorModel, side: Side) -> Result<()> {
    let (alpha, reg) = (m.alpha, m.reg);
    let entries_of = |row: usize| -> Vec<RowEntry> {
        let conf = |c: u32| 1.0 + alpha * f64::from(c);
        match side {
            Side::Users => r
                .user_row(row)
                .map(|(s, c)| RowEntry { index: s, confidence: conf(c), preference: 1.0 })
                .collect(),
            Side::Songs => r
                .song_col(row)
                .map(|(u, c)| RowEntry { index: u, confidence: conf(c), preference: 1.0 })
                .collect(),
        }
    };
    let (target, fixed) = match side {
        Side::Users => (&mut m.users, &m.songs),
        Side::Songs => (&mut m.songs, &m.users),
    };
    let g = gram(fixed);
    let solved: Vec<Vec<f64>> = (0..target.rows())
        .into_par_iter()
        .map(|row| solve_row_with_gram(fixed, &g, &entries_of(row), reg))
        .collect::<Result<_>>()?;
    for (row, x) in solved.into_iter().enumerate() {
        target.row_mut(row).copy_from_slice(&x);
    }
    Ok(())
}

pub fn init_factors(r: &SparseInteractions, cfg: &WmfConfig, rng: &mut Rng) -> FactorModel {
    let mut fill = |rows: usize| {
        let data = (0..rows * cfg.k).map(|_| rng.uniform_in(-0.01, 0.01)).collect();
        Mat::from_vec(rows, cfg.k, data).expect("sized")
    };
    let users = fill(r.n_users());
    let songs = fill(r.n_songs());
    FactorModel {
        users,
        songs,
        reg: cfg.reg,
        alpha: cfg.alpha,
    }
}

fn validate(cfg: &WmfConfig) -> Result<()> {
    if cfg.k == 0 {
        return Err(Error::Config("latent dimension k must be >= 1".into()));
    }
    if cfg.sweeps == 0 {
        return Err(Error::Config("sweep count must be >= 1".into()));
    }
    if !(cfg.reg >= 0.0) || !cfg.reg.is_finite() {
        return Err(Error::Config(format!("reg must be finite and >= 0, got {}", cfg.reg)));
    }
    if !(cfg.alpha > 0.0) || !cfg.alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be finite and > 0, got {}", cfg.alpha)));
    }
    Ok(())
}

/// Alternating least squares; `observe` sees the model after every
/// half-sweep (user side first).
pub fn als_factorize_observed(
    r: &SparseInteractions,
    cfg: &WmfConfig,
    rng: &mut Rng,
    mut observe: impl FnMut(Side, &FactorModel),
) -> Result<FactorModel> {
    validate(cfg)?;
    let mut model = init_factors(r, cfg, rng);
    for _ in 0..cfg.sweeps {
        for side in [Side::Users, Side::Songs] {
            half_sweep(r, &mut model, side)?;
            observe(side, &model);
        }
    }
    Ok(model)
}

pub fn als_factorize(r: &SparseInteractions, cfg: &WmfConfig, rng: &mut Rng) -> Result<FactorModel> {
    als_factorize_observed(r, cfg, rng, |_, _| {})
}

/// Writes song factors as `song_id v1 ... vk` under a `#wmf` header line.
pub fn write_song_factors(path: &Path, song_ids: &[String], m: &FactorModel) -> Result<()> {
    if song_ids.len() != m.songs.rows() {
        return Err(Error::Shape(format!(
            "{} song ids for {} factor rows",
            song_ids.len(),
            m.songs.rows()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "#wmf k={} reg={} alpha={}", m.k(), m.reg, m.alpha)?;
        for (i, id) in song_ids.iter().enumerate() {
            write!(w, "{id}")?;
            for v in m.songs.row(i) {
                write!(w, " {}", fmt_sig9(*v))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}
