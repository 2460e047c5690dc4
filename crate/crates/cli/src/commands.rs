use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use quatnet::compress::{compress, mean_downsample, read_csv, write_compressed_bin, write_compressed_csv, write_downsampled_csv};
use quatnet::backprop::Fault;
use quatnet::gradcheck::{self, GradCheckConfig};
use quatnet::layers::checkpoint;
use quatnet::train::{build_model, evaluate, train, Engine};
use serde_json::Value;

use crate::config::{resolve_seed, RunConfig};
use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InjectedFault {
    HiddenWeightSign,
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn compress_cmd(
    input: &Path,
    chunk_len: usize,
    out: &Path,
    format: OutputFormat,
    baseline: Option<Baseline>,
) -> Result<(), Failure> {
    let file = File::open(input).map_err(|e| Failure::io(input, e))?;
    let series = read_csv(file).map_err(|e| Failure::from(e).context(input))?;
    let mut w = create(out)?;
    match baseline {
        Some(Baseline::Mean) => {
            if format == OutputFormat::Bin {
                return Err(Failure::format("the mean baseline is written as CSV only"));
            }
            let paa = mean_downsample(&series, chunk_len)?;
            write_downsampled_csv(&paa, &mut w)?;
            finish(w, out)?;
            println!(
                "{} channels x {} samples -> {} chunk means per channel: {}",
                series.channels(),
                series.samples(),
                paa.samples(),
                out.display()
            );
        }
        None => {
            let c = compress(&series, chunk_len)?;
            match format {
                OutputFormat::Csv => write_compressed_csv(&c, &mut w)?,
                OutputFormat::Bin => write_compressed_bin(&c, &mut w)?,
            }
            finish(w, out)?;
            println!(
                "{} channels x {} samples -> {} quaternions per channel: {}",
                series.channels(),
                series.samples(),
                c.chunks(),
                out.display()
            );
        }
    }
    Ok(())
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub engine: Option<Engine>,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

pub fn train_cmd(args: TrainArgs) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&args.config, args.seed)?;
    if let Some(engine) = args.engine {
        cfg.train.engine = engine;
    }
    let data = cfg.dataset()?;
    let mut model = build_model(&cfg.model, &mut cfg.init_rng())?;
    println!(
        "{} {:?} {:?}: {} trainable parameters, {} train / {} test samples, seed {}",
        cfg.model.arch.name(),
        cfg.model.width,
        cfg.model.numeric,
        model.param_count(),
        data.train.len(),
        data.test.len(),
        cfg.seed
    );
    let spec = cfg.train_spec();
    let history = train(&mut model, &data, &spec)?;
    for e in &history.epochs {
        println!(
            "epoch {:>3}  loss {:.6}  train {:.4}  test {:.4}",
            e.epoch + 1,
            e.loss,
            e.train_acc,
            e.test_acc
        );
    }
    let ckpt = args.checkpoint.unwrap_or_else(|| cfg.resolve(&cfg.output.checkpoint));
    let hist = args.history.unwrap_or_else(|| cfg.resolve(&cfg.output.history));
    let mut w = create(&ckpt)?;
    checkpoint::save(&model, &mut w)?;
    finish(w, &ckpt)?;
    let mut w = create(&hist)?;
    history.write_csv(&mut w)?;
    finish(w, &hist)?;
    println!("checkpoint: {}\nhistory: {}", ckpt.display(), hist.display());
    Ok(())
}

pub fn eval_cmd(ckpt: &Path, config: &Path, seed: Option<u64>, split: Split) -> Result<(), Failure> {
    let mut file = File::open(ckpt).map_err(|e| Failure::io(ckpt, e))?;
    let model = checkpoint::load(&mut file).map_err(|e| Failure::from(e).context(ckpt))?;
    let cfg = RunConfig::load(config, seed)?;
    let data = cfg.dataset()?;
    let (name, samples) = match split {
        Split::Train => ("train", &data.train),
        Split::Test => ("test", &data.test),
    };
    if samples.is_empty() {
        return Err(Failure::format(format!("the {name} split is empty")));
    }
    let acc = evaluate(&model, samples)?;
    let correct = (acc * samples.len() as f64).round() as usize;
    println!("accuracy {acc:.4} ({correct}/{}) on the {name} split", samples.len());
    Ok(())
}

pub struct GradCheckArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub tolerance: Option<f64>,
    pub abs_tolerance: Option<f64>,
    pub relation_tolerance: Option<f64>,
    pub fault: Option<InjectedFault>,
}

pub fn gradcheck_cmd(args: GradCheckArgs) -> Result<(), Failure> {
    let (mut cfg, config_seed) = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| Failure::format(format!("{}: {e}", path.display())))?;
            let seed = value.get("seed").and_then(Value::as_u64);
            let cfg: GradCheckConfig =
                serde_json::from_value(value).map_err(|e| Failure::format(format!("{}: {e}", path.display())))?;
            (cfg, seed)
        }
        None => (GradCheckConfig::default(), None),
    };
    cfg.seed = resolve_seed(args.seed, config_seed)?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(t) = args.tolerance {
        cfg.rel_tol = t;
    }
    if let Some(t) = args.abs_tolerance {
        cfg.abs_tol = t;
    }
    if let Some(t) = args.relation_tolerance {
        cfg.relation_tol = t;
    }
    let fault = args.fault.map(|f| match f {
        InjectedFault::HiddenWeightSign => Fault::HiddenWeightSign,
    });
    println!(
        "seed {}, rel tol {:.1e}, abs tol {:.1e}, relation tol {:.1e}",
        cfg.seed, cfg.rel_tol, cfg.abs_tol, cfg.relation_tol
    );
    let report = gradcheck::run(&cfg, fault)?;
    println!("{report}");
    if report.passed() {
        return Ok(());
    }
    let first = report
        .mismatches
        .first()
        .map(|m| format!("trial {} {}", m.trial, m.path))
        .or_else(|| report.relation_failures.first().cloned())
        .unwrap_or_default();
    Err(Failure::verification(format!(
        "{} gradient mismatches, {} relation failures; first: {first}",
        report.mismatches.len(),
        report.relation_failures.len()
    )))
}
