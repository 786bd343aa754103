use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tagmetric::checkpoint::Checkpoint;
use tagmetric::dataset::{
    artist_level_split, bind_inputs, load_annotations, load_categories, load_plays, load_vector_file,
    topk_tag_filter, FilteredRecords, InputSource, InputVectors, RetrievalDataset, SplitAssignment, SplitPart,
};
use tagmetric::linalg::fmt_sig9;
use tagmetric::retrieval::{evaluate, retrieve, SongIndex};
use tagmetric::synth::{generate, SynthConfig};
use tagmetric::trainer::{train, TrainConfig};
use tagmetric::triplet::{SamplerConfig, Strategy};
use tagmetric::wmf::{als_factorize, write_song_factors, WmfConfig};
use tagmetric::wordvec::{load_word_vectors, WordVectorTable};
use tagmetric::net::MlpBranch;
use tagmetric::{Error, Mat, Rng};

/// Tag-based music retrieval with a shared tag/song embedding space.
///
/// Where a flag mirrors a setting of the original training protocol its
/// help says "paper default"; values the protocol leaves open are marked
/// "artifact default".
#[derive(Parser, Debug)]
#[command(name = "tagmetric", version)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Factorize a play-count log into song factors (weighted ALS).
    Factorize(FactorizeArgs),
    /// Train the tag and song branches with the triplet loss.
    Train(TrainArgs),
    /// Score a checkpoint on one split: MAP and P@10 over tags.
    Evaluate(EvaluateArgs),
    /// Rank songs for a free-text tag.
    Query(QueryArgs),
    /// List the words closest to a query in a word-vector file.
    NearestWords(NearestArgs),
    /// Write a planted-structure synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct FactorizeArgs {
    /// Play log, `user_id<TAB>song_id<TAB>count`.
    #[arg(long)]
    plays: PathBuf,
    /// Latent dimension (paper default 200).
    #[arg(long, default_value_t = 200)]
    k: usize,
    /// L2 regularization (artifact default).
    #[arg(long, default_value_t = 0.01)]
    reg: f64,
    /// Confidence scale in c = 1 + alpha * count (artifact default).
    #[arg(long, default_value_t = 40.0)]
    alpha: f64,
    /// Full ALS sweeps (artifact default).
    #[arg(long, default_value_t = 15)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output factor file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Annotations, `song_id<TAB>artist_id<TAB>tag1,tag2,...`.
    #[arg(long)]
    annotations: PathBuf,
    /// Keep only the K most frequent tags (artifact default: all tags).
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Word-vector file feeding the tag branch.
    #[arg(long)]
    vectors: PathBuf,
    /// Song input: cultural (factors), acoustic (features) or concat.
    #[arg(long, default_value = "cultural", value_parser = ["cultural", "acoustic", "concat"])]
    source: String,
    /// Song factor file (cultural and concat sources).
    #[arg(long)]
    factors: Option<PathBuf>,
    /// Song feature file (acoustic and concat sources).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Triplet sampler.
    #[arg(long, default_value = "balanced_weighted", value_parser = ["random", "balanced", "balanced_weighted"])]
    sampler: String,
    /// Triplet margin (artifact default).
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    /// Epochs (paper default 200).
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Triplets per epoch (paper default 10000).
    #[arg(long, default_value_t = 10_000)]
    triplets_per_epoch: usize,
    /// Triplets per batch (artifact default).
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Adam learning rate (paper default 1e-4).
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Weight decay (paper default 1e-4).
    #[arg(long, default_value_t = 1e-4)]
    wd: f64,
    /// Weight cap of distance-weighted sampling (artifact default).
    #[arg(long, default_value_t = 1e6)]
    lambda_clip: f64,
    /// Lower clip on unit-sphere distances in weighted sampling (artifact default).
    #[arg(long, default_value_t = 0.5)]
    cutoff: f64,
    /// Epochs between validation reports (artifact default).
    #[arg(long, default_value_t = 10)]
    validation_every: usize,
    /// Seed for initialization, sampling and the artist-level split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives checkpoints, report.tsv, split.tsv and inputs.tsv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint holding `tag` and `song` branches.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    /// Per-song input vectors, e.g. the inputs.tsv written by train.
    #[arg(long)]
    inputs: PathBuf,
    /// Split file written by train.
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "valid", "test"])]
    part: String,
    /// Optional `tag<TAB>category` file for per-category MAP.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Write the full report here as TSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    /// Song input vectors to index, e.g. the inputs.tsv written by train.
    #[arg(long)]
    index_from: PathBuf,
    #[arg(long)]
    tag: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args, Debug)]
struct NearestArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    word: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    songs: usize,
    #[arg(long, default_value_t = 50)]
    tags: usize,
    #[arg(long, default_value_t = 16)]
    latent_dim: usize,
    /// Standard deviation of song latent noise.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    #[arg(long, default_value_t = 300)]
    word_dim: usize,
    #[arg(long, default_value_t = 500)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn filtered(data: &DataArgs) -> tagmetric::Result<FilteredRecords> {
    let records = load_annotations(&data.annotations)?;
    let k = match data.top_k {
        Some(k) => k,
        None => {
            let mut tags: Vec<&String> = records.iter().flat_map(|r| &r.tags).collect();
            tags.sort_unstable();
            tags.dedup();
            tags.len()
        }
    };
    topk_tag_filter(&records, k)
}

fn load_branches(path: &Path) -> tagmetric::Result<(MlpBranch, MlpBranch)> {
    let ck = Checkpoint::read(path)?;
    let get = |name: &str| {
        ck.branch(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("checkpoint {} has no {name:?} branch", path.display())))
    };
    Ok((get("tag")?, get("song")?))
}

fn inputs_of(ds: &RetrievalDataset) -> tagmetric::Result<InputVectors> {
    let mut v = InputVectors::new(ds.input_dim());
    for (s, rec) in ds.songs.iter().enumerate() {
        v.insert(&rec.song_id, ds.input(s))?;
    }
    Ok(v)
}

fn cmd_factorize(a: FactorizeArgs) -> tagmetric::Result<()> {
    let log = load_plays(&a.plays)?;
    let cfg = WmfConfig { k: a.k, reg: a.reg, alpha: a.alpha, sweeps: a.sweeps };
    let model = als_factorize(&log.interactions, &cfg, &mut Rng::new(a.seed))?;
    write_song_factors(&a.out, &log.song_ids, &model)?;
    log::info!("{} song factors of dimension {} written to {}", log.song_ids.len(), a.k, a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> tagmetric::Result<()> {
    let source: InputSource = a.source.parse()?;
    let strategy: Strategy = a.sampler.parse()?;
    let config = TrainConfig {
        epochs: a.epochs,
        triplets_per_epoch: a.triplets_per_epoch,
        batch_size: a.batch,
        lr: a.lr,
        weight_decay: a.wd,
        margin: a.margin,
        sampler: SamplerConfig { strategy, lambda_clip: a.lambda_clip, cutoff_d_min: a.cutoff },
        seed: a.seed,
        validation_every: a.validation_every,
        checkpoint_dir: Some(a.out_dir.clone()),
    };
    config.validate()?;
    let needs_factors = matches!(source, InputSource::Cultural | InputSource::Concat);
    let needs_features = matches!(source, InputSource::Acoustic | InputSource::Concat);
    if needs_factors && a.factors.is_none() {
        return Err(Error::Config(format!("--source {} requires --factors", a.source)));
    }
    if needs_features && a.features.is_none() {
        return Err(Error::Config(format!("--source {} requires --features", a.source)));
    }
    let factors = a.factors.as_deref().map(load_vector_file).transpose()?;
    let features = a.features.as_deref().map(load_vector_file).transpose()?;
    let words = load_word_vectors(&a.vectors)?;

    let mut ds = bind_inputs(filtered(&a.data)?, source, factors.as_ref(), features.as_ref())?;
    ds.attach_tag_vectors(&words)?;
    let artists: Vec<&str> = ds.songs.iter().map(|s| s.artist_id.as_str()).collect();
    let split = artist_level_split(&artists, [0.8, 0.1, 0.1], a.seed)?;
    log::info!(
        "{} songs, {} tags, input dim {}; split {}/{}/{}",
        ds.n_songs(),
        ds.n_tags(),
        ds.input_dim(),
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io { path: a.out_dir.clone(), source: e })?;
    split.write(&a.out_dir.join("split.tsv"), &ds.song_ids())?;
    inputs_of(&ds)?.write(&a.out_dir.join("inputs.tsv"))?;
    let outcome = train(&ds, &split, &config)?;
    outcome.report.write_tsv(&a.out_dir.join("report.tsv"))?;
    if let Some(best) = outcome.report.best_epoch {
        log::info!("best validation MAP at epoch {best}");
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> tagmetric::Result<()> {
    let (tag, song) = load_branches(&a.checkpoint)?;
    let words = load_word_vectors(&a.vectors)?;
    let inputs = load_vector_file(&a.inputs)?;
    let mut ds = bind_inputs(filtered(&a.data)?, InputSource::Acoustic, None, Some(&inputs))?;
    ds.attach_tag_vectors(&words)?;
    if let Some(path) = &a.categories {
        ds.attach_categories(&load_categories(path)?);
    }
    let split = SplitAssignment::read(&a.split, &ds.song_ids())?;
    let part: SplitPart = a.part.parse()?;
    let report = evaluate(&tag, &song, &ds, split.part(part))?;
    println!("map\t{}", fmt_sig9(report.map));
    println!("p@10\t{}", fmt_sig9(report.p_at_10));
    if let Some(cats) = &report.per_category {
        for (c, m) in cats {
            println!("map[{c}]\t{}", fmt_sig9(*m));
        }
    }
    if let Some(out) = &a.out {
        report.write_tsv(out)?;
    }
    Ok(())
}

fn cmd_query(a: QueryArgs) -> tagmetric::Result<()> {
    let (tag, song) = load_branches(&a.checkpoint)?;
    let words = load_word_vectors(&a.vectors)?;
    let songs = load_vector_file(&a.index_from)?;
    let rows: Vec<&[f64]> = songs.ids().iter().map(|id| songs.get(id).expect("listed id")).collect();
    let emb = song.embed_rows(&Mat::from_rows(&rows, songs.dim())?)?;
    let index = SongIndex::new(songs.ids().to_vec(), emb)?;
    for (rank, (id, dist)) in retrieve(&a.tag, &tag, &words, &index, a.k)?.into_iter().enumerate() {
        println!("{}\t{id}\t{}", rank + 1, fmt_sig9(dist));
    }
    Ok(())
}

fn cmd_nearest(a: NearestArgs) -> tagmetric::Result<()> {
    let table: WordVectorTable = load_word_vectors(&a.vectors)?;
    for (word, sim) in table.nearest_words(&a.word, a.k)? {
        println!("{word}\t{}", fmt_sig9(sim));
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> tagmetric::Result<()> {
    let cfg = SynthConfig {
        songs: a.songs,
        tags: a.tags,
        latent_dim: a.latent_dim,
        noise: a.noise,
        feature_dim: a.feature_dim,
        word_dim: a.word_dim,
        users: a.users,
        seed: a.seed,
        ..Default::default()
    };
    let paths = generate(&cfg)?.write_to_dir(&a.out_dir)?;
    for p in [&paths.annotations, &paths.features, &paths.plays, &paths.vectors] {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Factorize(a) => cmd_factorize(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Query(a) => cmd_query(a),
        Command::NearestWords(a) => cmd_nearest(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
