//! The training loop: sample a batch from the train split, embed the
//! distinct tags and songs it touches, average triplet-loss gradients over
//! the batch, and take one Adam step per branch.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::dataset::{write_lines, RetrievalDataset, SplitAssignment};
use crate::error::{Error, Result};
use crate::linalg::{fmt_sig9, Mat};
use crate::net::{adam_step, AdamState, GradientSet, MlpBranch};
use crate::retrieval::evaluate;
use crate::rng::Rng;
use crate::triplet::{sample_batch, triplet_loss_grad, SamplerConfig, SamplingView, TripletBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub triplets_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub margin: f64,
    pub sampler: SamplerConfig,
    pub seed: u64,
    /// Epochs between validation reports; the last epoch always reports.
    pub validation_every: usize,
    /// Checkpoints go here at every report when set.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            triplets_per_epoch: 10_000,
            batch_size: 128,
            lr: 1e-4,
            weight_decay: 1e-4,
            margin: 0.2,
            sampler: SamplerConfig::default(),
            seed: 0,
            validation_every: 10,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.triplets_per_epoch == 0 || self.batch_size == 0 || self.validation_every == 0 {
            return Err(Error::Config("triplet, batch and validation counts must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !(self.margin > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "need lr > 0, margin > 0, weight_decay >= 0 (got {}, {}, {})",
                self.lr, self.margin, self.weight_decay
            )));
        }
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub epoch: usize,
    pub loss: f64,
    pub map: Option<f64>,
    pub p_at_10: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub rows: Vec<ReportRow>,
    /// Report epoch with the highest validation MAP.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    /// `epoch<TAB>loss<TAB>map<TAB>p10<TAB>seconds`; missing metrics are `nan`.
    pub fn write_tsv(&self, path: &std::path::Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt_sig9);
        write_lines(
            path,
            self.rows.iter().map(|r| {
                format!(
                    "{}\t{}\t{}\t{}\t{:.3}",
                    r.epoch,
                    fmt_sig9(r.loss),
                    opt(r.map),
                    opt(r.p_at_10),
                    r.seconds
                )
            }),
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tag_branch: MlpBranch,
    pub song_branch: MlpBranch,
    pub tag_adam: AdamState,
    pub song_adam: AdamState,
    pub report: TrainReport,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push("tag", &self.tag_branch, Some(&self.tag_adam));
        ck.push("song", &self.song_branch, Some(&self.song_adam));
        ck
    }
}

/// Freshly initialized tag and song branches for a seed.
pub fn init_branches(dataset: &RetrievalDataset, seed: u64) -> Result<(MlpBranch, MlpBranch)> {
    let root = Rng::new(seed);
    let tag_dim = dataset.tag_vectors()?.cols();
    let tag = MlpBranch::new(tag_dim, &mut root.split(0));
    let song = MlpBranch::new(dataset.input_dim(), &mut root.split(1));
    Ok((tag, song))
}

/// Result of one optimization step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub tag_grads: GradientSet,
    pub song_grads: GradientSet,
}

fn distinct(items: impl Iterator<Item = usize>) -> (Vec<usize>, HashMap<usize, usize>) {
    let mut order = Vec::new();
    let mut pos = HashMap::new();
    for it in items {
        pos.entry(it).or_insert_with(|| {
            order.push(it);
            order.len() - 1
        });
    }
    (order, pos)
}

/// Mean triplet loss of a batch and its batch-averaged gradients.
///
/// Each distinct tag and song is embedded once; per-triplet upstream
/// gradients are summed per distinct input before a single backward pass,
/// which is exact because the parameter gradient is linear in the upstream
/// gradient.
pub fn batch_gradients(
    dataset: &RetrievalDataset,
    batch: &TripletBatch,
    tag_branch: &MlpBranch,
    song_branch: &MlpBranch,
    margin: f64,
) -> Result<StepOutput> {
    let tag_vectors = dataset.tag_vectors()?;
    let (tags, tag_pos) = distinct(batch.triplets.iter().map(|t| t.anchor_tag));
    let (songs, song_pos) = distinct(batch.triplets.iter().flat_map(|t| [t.positive_song, t.negative_song]));

    let tag_x = Mat::from_rows(&tags.iter().map(|&t| tag_vectors.row(t)).collect::<Vec<_>>(), tag_vectors.cols())?;
    let song_x = Mat::from_rows(&songs.iter().map(|&s| dataset.input(s)).collect::<Vec<_>>(), dataset.input_dim())?;
    let tag_fwd = tag_branch.forward_batch(&tag_x)?;
    let song_fwd = song_branch.forward_batch(&song_x)?;

    let scale = 1.0 / batch.len().max(1) as f64;
    let mut tag_up = Mat::zeros(tags.len(), tag_branch.out_dim());
    let mut song_up = Mat::zeros(songs.len(), song_branch.out_dim());
    let mut loss = 0.0;
    for t in &batch.triplets {
        let (a, p, n) = (tag_pos[&t.anchor_tag], song_pos[&t.positive_song], song_pos[&t.negative_song]);
        let g = triplet_loss_grad(
            tag_fwd.output().row(a),
            song_fwd.output().row(p),
            song_fwd.output().row(n),
            margin,
        )?;
        loss += g.loss;
        crate::linalg::axpy(scale, &g.anchor, tag_up.row_mut(a));
        crate::linalg::axpy(scale, &g.positive, song_up.row_mut(p));
        crate::linalg::axpy(scale, &g.negative, song_up.row_mut(n));
    }
    let mut tag_grads = GradientSet::zeros_like(tag_branch);
    let mut song_grads = GradientSet::zeros_like(song_branch);
    tag_branch.backward_batch(&tag_fwd, &tag_up, &mut tag_grads, false)?;
    song_branch.backward_batch(&song_fwd, &song_up, &mut song_grads, false)?;
    Ok(StepOutput {
        loss: loss * scale,
        tag_grads,
        song_grads,
    })
}

pub fn train(dataset: &RetrievalDataset, split: &SplitAssignment, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (mut tag_branch, mut song_branch) = init_branches(dataset, config.seed)?;
    let mut tag_adam = AdamState::new(&tag_branch);
    let mut song_adam = AdamState::new(&song_branch);
    let mut sampler_rng = Rng::new(config.seed).split(2);
    let view = SamplingView::new(dataset, &split.train);
    let mut report = TrainReport::default();
    let mut best_map = f64::NEG_INFINITY;
    let started = Instant::now();

    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let save = |name: &str, tag: &MlpBranch, song: &MlpBranch, ta: &AdamState, sa: &AdamState| -> Result<()> {
        if let Some(dir) = &config.checkpoint_dir {
            let mut ck = Checkpoint::default();
            ck.push("tag", tag, Some(ta));
            ck.push("song", song, Some(sa));
            ck.write(&dir.join(name))?;
        }
        Ok(())
    };

    for epoch in 1..=config.epochs {
        let mut remaining = config.triplets_per_epoch;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        while remaining > 0 {
            let size = remaining.min(config.batch_size);
            remaining -= size;
            let batch = sample_batch(&view, size, &tag_branch, &song_branch, &config.sampler, &mut sampler_rng)?;
            let step = batch_gradients(dataset, &batch, &tag_branch, &song_branch, config.margin)?;
            if !step.loss.is_finite() {
                save("diverged.ckpt", &tag_branch, &song_branch, &tag_adam, &song_adam)?;
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}, batch {batches}")));
            }
            adam_step(&mut tag_branch, &step.tag_grads, &mut tag_adam, config.lr, config.weight_decay)?;
            adam_step(&mut song_branch, &step.song_grads, &mut song_adam, config.lr, config.weight_decay)?;
            loss_sum += step.loss;
            batches += 1;
        }
        let mean_loss = loss_sum / batches as f64;

        if epoch % config.validation_every == 0 || epoch == config.epochs {
            let (map, p10) = if split.valid.is_empty() {
                (None, None)
            } else {
                let r = evaluate(&tag_branch, &song_branch, dataset, &split.valid)?;
                (Some(r.map), Some(r.p_at_10))
            };
            let seconds = started.elapsed().as_secs_f64();
            log::info!(
                "epoch {epoch}: loss {mean_loss:.5} map {} p@10 {} ({seconds:.1}s)",
                map.map_or("-".into(), |m| format!("{m:.4}")),
                p10.map_or("-".into(), |m| format!("{m:.4}")),
            );
            report.rows.push(ReportRow {
                epoch,
                loss: mean_loss,
                map,
                p_at_10: p10,
                seconds,
            });
            save(&format!("epoch{epoch:04}.ckpt"), &tag_branch, &song_branch, &tag_adam, &song_adam)?;
            if let Some(m) = map {
                if m > best_map {
                    best_map = m;
                    report.best_epoch = Some(epoch);
                    save("best.ckpt", &tag_branch, &song_branch, &tag_adam, &song_adam)?;
                }
            }
        }
    }
    save("final.ckpt", &tag_branch, &song_branch, &tag_adam, &song_adam)?;
    Ok(TrainOutcome {
        tag_branch,
        song_branch,
        tag_adam,
        song_adam,
        report,
    })
}
