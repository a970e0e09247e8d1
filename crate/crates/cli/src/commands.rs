//! Subcommand implementations. Each writes its outputs and one manifest into
//! the `--out` directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cmert::eval::{evaluate_streams, leakage_audit, per_position_diagnostic, random_sample, EvalOptions};
use cmert::experiment::Benchmark;
use cmert::infer::{read_dump, run_stream, write_dump, PredictionRecord, StreamOptions};
use cmert::partition::{FeatureStream, Preset};
use cmert::train::{train, GrammarSpec, SyntheticGrammar};
use cmert::{Error, Model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{config_hash, overlay, read_json, RunConfig};
use crate::error::{input_err, CliError, CliResult};
use crate::manifest::RunManifest;

pub const STREAM_EXT: &str = "cmstream";
pub const DUMP_EXT: &str = "jsonl";

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

/// Files with extension `ext` under `path` (sorted), or `path` itself.
fn list_files(path: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| input_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == ext))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(input_err(path, format!("no .{ext} files")));
        }
        Ok(files)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(input_err(path, "no such file or directory"))
    }
}

fn load_stream(path: &Path) -> CliResult<FeatureStream> {
    FeatureStream::load(path).map_err(|e| input_err(path, e))
}

fn load_model(path: &Path) -> CliResult<Model> {
    Model::load(path).map_err(|e| input_err(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

/// Rejects a stream whose geometry differs from the checkpoint's.
fn check_compatible(model: &Model, stream: &FeatureStream, path: &Path) -> CliResult<()> {
    let p = &model.partition;
    if stream.dim() != p.feature_dim {
        return Err(input_err(
            path,
            format!("stream feature dim {} does not match checkpoint feature dim {}", stream.dim(), p.feature_dim),
        ));
    }
    if stream.num_classes != p.num_classes {
        return Err(input_err(
            path,
            format!(
                "stream has {} classes but checkpoint has {}",
                stream.num_classes, p.num_classes
            ),
        ));
    }
    Ok(())
}

pub struct GenArgs {
    pub grammar: Option<PathBuf>,
    pub length: usize,
    pub streams: usize,
    pub holdout: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Samples one grammar from `seed`, then `streams` training and `holdout`
/// held-out streams from it, into `out/train` and `out/test`.
pub fn gen(a: GenArgs) -> CliResult<()> {
    if a.length == 0 {
        return Err(CliError::Input("--length must be >= 1".into()));
    }
    if a.streams == 0 {
        return Err(CliError::Input("--streams must be >= 1".into()));
    }
    let base = Benchmark::default().grammar;
    let spec: GrammarSpec = match &a.grammar {
        Some(p) => overlay(&base, &read_json(p)?)?,
        None => base,
    };
    spec.validate()?;
    let resolved = json!({"grammar": spec, "length": a.length, "streams": a.streams, "holdout": a.holdout});
    let mut manifest = RunManifest::new("gen", config_hash(&resolved)?, Some(a.seed));
    manifest.inputs.extend(a.grammar.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let grammar = SyntheticGrammar::random(&spec, &mut rng)?;
    create_out(&a.out)?;
    for (sub, n) in [("train", a.streams), ("test", a.holdout)] {
        if n == 0 {
            continue;
        }
        let dir = a.out.join(sub);
        create_out(&dir)?;
        for i in 0..n {
            let stream = grammar.generate_stream(a.length, &mut rng)?;
            let path = dir.join(format!("stream_{i:03}.{STREAM_EXT}"));
            stream.save(&path)?;
            manifest.outputs.push(path);
        }
    }
    let spec_path = a.out.join("grammar.json");
    fs::write(&spec_path, serde_json::to_vec_pretty(&resolved)?)?;
    manifest.outputs.push(spec_path);
    eprintln!("wrote {} streams of {} frames to {}", a.streams + a.holdout, a.length, a.out.display());
    manifest.write(&a.out)
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
}

fn user_sets(user: &Value, section: &str, field: &str) -> bool {
    user.get(section).and_then(|s| s.get(field)).is_some()
}

/// Trains from the preset (or desk defaults) overlaid with `--config`.
/// Stream geometry fills any partition field the config leaves unset.
pub fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let paths = list_files(&a.data, STREAM_EXT)?;
    let streams: Vec<FeatureStream> = paths.iter().map(|p| load_stream(p)).collect::<CliResult<_>>()?;
    let user = match &a.config {
        Some(p) => read_json(p)?,
        None => json!({}),
    };
    let mut cfg: RunConfig = overlay(&RunConfig::base(a.preset), &user)?;
    let first = &streams[0];
    if !user_sets(&user, "partition", "feature_dim") {
        cfg.partition.feature_dim = first.dim();
    }
    if !user_sets(&user, "partition", "num_classes") {
        cfg.partition.num_classes = first.num_classes;
    }
    if !user_sets(&user, "partition", "fps") {
        cfg.partition.fps = first.fps;
    }
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if let Some(steps) = a.steps {
        cfg.train.steps = steps;
        cfg.train.epochs = None;
        cfg.train.warmup_epochs = None;
    }
    cfg.validate()?;
    for (s, p) in streams.iter().zip(&paths) {
        if s.dim() != cfg.partition.feature_dim {
            return Err(input_err(
                p,
                format!("stream feature dim {} does not match config feature dim {}", s.dim(), cfg.partition.feature_dim),
            ));
        }
        if s.num_classes != cfg.partition.num_classes {
            return Err(input_err(
                p,
                format!("stream has {} classes but config has {}", s.num_classes, cfg.partition.num_classes),
            ));
        }
    }

    let mut manifest = RunManifest::new("train", config_hash(&cfg)?, Some(cfg.train.seed));
    manifest.inputs.extend(a.config.clone());
    manifest.inputs.extend(paths.iter().cloned());
    create_out(&a.out)?;
    let config_path = a.out.join("config.json");
    fs::write(&config_path, serde_json::to_vec_pretty(&cfg)?)?;
    let log_path = a.out.join("train_log.jsonl");
    let ckpt_path = a.out.join("model.ckpt");

    let mut model = Model::new(cfg.partition.clone(), cfg.model.clone(), cfg.train.seed)?;
    let mut log = BufWriter::new(File::create(&log_path)?);
    let mut write_err: Option<std::io::Error> = None;
    let total = cfg.train.steps;
    let result = train(&mut model, &streams, &cfg.train, |r| {
        if write_err.is_some() {
            return;
        }
        let line = serde_json::to_string(r).expect("log records serialize");
        if let Err(e) = writeln!(log, "{line}") {
            write_err = Some(e);
        }
        if r.step % 100 == 0 || r.step == 1 {
            eprintln!("step {:>6}/{total} loss {:.4} lr {:.2e}", r.step, r.total, r.lr);
        }
    });
    log.flush()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    model.save(&ckpt_path)?;
    manifest.outputs = vec![config_path, log_path, ckpt_path];
    match result {
        Ok(records) => {
            if let Some(last) = records.last() {
                eprintln!("trained {} steps, final loss {:.4}", last.step, last.total);
            }
            manifest.write(&a.out)
        }
        Err(e @ (Error::Diverged { .. } | Error::NonFiniteGrad(_))) => {
            manifest.status = format!("failed: {e}");
            manifest.write(&a.out)?;
            Err(CliError::Runtime(format!("{e}; last good weights saved")))
        }
        Err(e) => Err(e.into()),
    }
}

pub struct InferArgs {
    pub ckpt: PathBuf,
    pub stream: PathBuf,
    pub delta: Option<usize>,
    pub cache: bool,
    pub out: PathBuf,
}

/// Streams every input through the checkpoint; one dump per stream.
pub fn infer(a: InferArgs) -> CliResult<()> {
    let mut model = load_model(&a.ckpt)?;
    if let Some(d) = a.delta {
        model.partition.delta = d;
        model.partition.validate()?;
    }
    let paths = list_files(&a.stream, STREAM_EXT)?;
    let resolved = json!({"partition": model.partition, "model": model.config, "cache": a.cache});
    let mut manifest = RunManifest::new("infer", config_hash(&resolved)?, None);
    manifest.inputs.push(a.ckpt.clone());
    manifest.inputs.extend(paths.iter().cloned());
    create_out(&a.out)?;
    for path in &paths {
        let stream = load_stream(path)?;
        check_compatible(&model, &stream, path)?;
        let records = run_stream(&model, &stream, StreamOptions { cache: a.cache })?;
        let out = a.out.join(format!("{}.{DUMP_EXT}", stem(path)));
        let mut w = BufWriter::new(File::create(&out)?);
        write_dump(&records, &mut w)?;
        w.flush()?;
        manifest.outputs.push(out);
    }
    eprintln!("wrote {} prediction dumps to {}", paths.len(), a.out.display());
    manifest.write(&a.out)
}

pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub out: PathBuf,
    pub options: EvalOptions,
}

fn load_dump(path: &Path) -> CliResult<Vec<PredictionRecord>> {
    let f = File::open(path).map_err(|e| input_err(path, e))?;
    read_dump(BufReader::new(f)).map_err(|e| input_err(path, e))
}

/// Scores dumps against streams. Directories are paired by file stem.
pub fn eval(a: EvalArgs) -> CliResult<()> {
    let pairs: Vec<(PathBuf, PathBuf)> = if a.pred.is_dir() {
        let gt_dir = if a.gt.is_dir() {
            a.gt.clone()
        } else {
            return Err(input_err(&a.gt, "must be a directory when --pred is"));
        };
        list_files(&a.pred, DUMP_EXT)?
            .into_iter()
            .map(|p| {
                let g = gt_dir.join(format!("{}.{STREAM_EXT}", stem(&p)));
                (p, g)
            })
            .collect()
    } else {
        vec![(a.pred.clone(), a.gt.clone())]
    };
    let mut dumps = Vec::new();
    let mut streams = Vec::new();
    for (p, g) in &pairs {
        dumps.push(load_dump(p)?);
        streams.push(load_stream(g)?);
    }
    let fps = streams[0].fps;
    let refs: Vec<_> = dumps.iter().zip(&streams).map(|(d, s)| (d.as_slice(), s.labels.as_slice())).collect();
    let report = evaluate_streams(&refs, fps, a.options)?;
    let mut manifest = RunManifest::new("eval", config_hash(&a.options)?, None);
    for (p, g) in pairs {
        manifest.inputs.push(p);
        manifest.inputs.push(g);
    }
    create_out(&a.out)?;
    let out = a.out.join("metrics.json");
    fs::write(&out, serde_json::to_vec_pretty(&report)?)?;
    manifest.outputs.push(out);
    println!(
        "mAP {:.2} acc {:.2} P-F1 {:.2} S-F1 {:.2} Edit {:.2}",
        report.per_frame_map, report.accuracy, report.pf1, report.sf1, report.edit
    );
    manifest.write(&a.out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DiagnoseMode {
    /// Held-out loss and accuracy per short-term position.
    PerPosition,
    /// Gradient sensitivity of each position to each short-term frame.
    Leakage,
}

pub struct DiagnoseArgs {
    pub ckpt: PathBuf,
    pub data: Option<PathBuf>,
    pub mode: DiagnoseMode,
    pub seed: u64,
    pub stride: usize,
    pub out: PathBuf,
}

pub fn diagnose(a: DiagnoseArgs) -> CliResult<()> {
    let model = load_model(&a.ckpt)?;
    let resolved = json!({"partition": model.partition, "model": model.config, "stride": a.stride});
    let mut manifest = RunManifest::new("diagnose", config_hash(&resolved)?, Some(a.seed));
    manifest.inputs.push(a.ckpt.clone());
    create_out(&a.out)?;
    let out = match a.mode {
        DiagnoseMode::PerPosition => {
            let data = a
                .data
                .as_ref()
                .ok_or_else(|| CliError::Input("--data is required for per-position".into()))?;
            let paths = list_files(data, STREAM_EXT)?;
            let mut streams = Vec::new();
            for p in &paths {
                let s = load_stream(p)?;
                check_compatible(&model, &s, p)?;
                streams.push(s);
            }
            manifest.inputs.extend(paths);
            let report = per_position_diagnostic(&model, &streams, a.stride)?;
            let out = a.out.join("per_position.csv");
            let mut w = BufWriter::new(File::create(&out)?);
            report.write_csv(&mut w)?;
            w.flush()?;
            println!("{} windows over {} positions", report.windows, report.loss.len());
            out
        }
        DiagnoseMode::Leakage => {
            let report = leakage_audit(&model, &random_sample(&model, a.seed)?)?;
            let out = a.out.join("leakage.csv");
            let mut w = BufWriter::new(File::create(&out)?);
            report.write_csv(&mut w)?;
            w.flush()?;
            println!("delta {} max non-causal sensitivity {:.3e}", report.delta, report.max_noncausal);
            out
        }
    };
    manifest.outputs.push(out);
    manifest.write(&a.out)
}
