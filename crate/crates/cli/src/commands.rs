use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mpe::baselines::{fit_counts, read_counts, write_counts, BayesRanker, MarkovRanker};
use mpe::evaluation::{
    format_table, run_experiment, write_report_tsv, write_runs_tsv, ExperimentConfig, ModelSpec,
};
use mpe::model::{
    read_model, write_embeddings_tsv, write_model, write_params_sidecar, EmbeddingKind,
    Hyperparams, MpeModel, TimeContext, TrainOptions, MODEL_MAGIC,
};
use mpe::predictor::{predict_batch, read_queries, MpePredictor, NextLocationRanker, Support};
use mpe::synthgen::{generate_graph, RoadGraph, SynthConfig, TrajectoryStream};
use mpe::trajectory::{
    build_quadruples, drop_self_loops, filter_by_transition_frequency, parse_records, parse_window,
    read_quadruples, resolve_gps, split, write_quadruples, GridSpec, InputFormat, ParsedRecords,
    TimeSlotting, TokenQuadruple,
};
use mpe::MpeError;
use serde::{Deserialize, Serialize};

use crate::args::{
    EvaluateCmd, ExportArgs, IngestArgs, PredictArgs, SynthArgs, TrainArgs, TrainCmd,
};

/// Randomness streams derived from `--seed`, listed in every config sidecar.
const SEED_STREAMS: [&str; 5] = ["split", "init", "shuffle", "negatives", "objective"];

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    MpeError::Config(msg.into()).into()
}

fn format_name(f: InputFormat) -> &'static str {
    match f {
        InputFormat::TripleCsv => "triple-csv",
        InputFormat::GpsCsv => "gps-csv",
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestCounts {
    pub records: usize,
    pub skipped_points: usize,
    pub quadruples_built: usize,
    pub quadruples_written: usize,
    pub objects: usize,
    pub slots: usize,
    pub current_locations: usize,
    pub next_locations: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestSidecar {
    pub command: String,
    pub input: String,
    pub format: String,
    pub slotting: TimeSlotting,
    pub tz_offset_minutes: i32,
    pub grid: Option<GridSpec>,
    pub max_gap_seconds: Option<i64>,
    pub threshold: usize,
    pub drop_self_loops: bool,
    pub counts: IngestCounts,
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let gps = a.format == InputFormat::GpsCsv;
    let slot_minutes = a.slot_minutes.unwrap_or(if gps { 15 } else { 30 });
    let slotting = match &a.window {
        Some(w) => {
            let (start, end) = parse_window(w)?;
            TimeSlotting::new(slot_minutes, start, end)?
        }
        None => TimeSlotting::full_day(slot_minutes)?,
    };
    let max_gap = match a.max_gap {
        Some(0) => None,
        Some(g) if g < 0 => return Err(usage("--max-gap must be non-negative")),
        Some(g) => Some(g),
        None if gps => Some(300),
        None => None,
    };
    let grid: Option<GridSpec> = a.grid.as_deref().map(str::parse).transpose()?;
    if gps && grid.is_none() {
        return Err(usage("gps-csv input needs --grid"));
    }
    if a.threshold == 0 {
        return Err(usage("--threshold must be at least 1"));
    }

    let (records, skipped_points) = match parse_records(open(&a.input)?, a.format)? {
        ParsedRecords::Triples(r) => (r, 0),
        ParsedRecords::Gps(points) => resolve_gps(&points, grid.as_ref().expect("checked above")),
    };
    let built = build_quadruples(&records, &slotting, a.tz_offset, max_gap);
    let quadruples_built = built.len();
    let mut quads = if a.drop_self_loops {
        drop_self_loops(built)
    } else {
        built
    };
    quads = filter_by_transition_frequency(quads, a.threshold);

    let distinct = |f: fn(&TokenQuadruple) -> String| {
        quads
            .iter()
            .map(f)
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    };
    let counts = IngestCounts {
        records: records.len(),
        skipped_points,
        quadruples_built,
        quadruples_written: quads.len(),
        objects: distinct(|q| q.object.clone()),
        slots: distinct(|q| q.slot.to_string()),
        current_locations: distinct(|q| q.current.clone()),
        next_locations: distinct(|q| q.next.clone()),
    };

    let mut w = create(&a.out)?;
    write_quadruples(&mut w, &quads)?;
    w.flush()?;
    println!(
        "records {}  skipped points {}  quadruples {} (built {})  objects {}  slots {}  current locations {}  next locations {}",
        counts.records,
        counts.skipped_points,
        counts.quadruples_written,
        counts.quadruples_built,
        counts.objects,
        counts.slots,
        counts.current_locations,
        counts.next_locations
    );
    let sidecar = IngestSidecar {
        command: "ingest".into(),
        input: a.input.display().to_string(),
        format: format_name(a.format).into(),
        slotting,
        tz_offset_minutes: a.tz_offset,
        grid,
        max_gap_seconds: max_gap,
        threshold: a.threshold,
        drop_self_loops: a.drop_self_loops,
        counts,
    };
    write_json(&sidecar_path(&a.out), &sidecar)
}

#[derive(Serialize)]
struct SynthSidecar<'a> {
    command: &'static str,
    config: &'a SynthConfig,
    /// Flags under which `ingest` recovers the generating slots.
    ingest_flags: String,
    records: usize,
    graph: &'a RoadGraph,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_locations: a.n_locations,
        out_degree: a.out_degree,
        n_objects: a.objects,
        n_slots: a.slots,
        slot_minutes: a.slot_minutes,
        records_per_slot: a.records_per_slot,
        records_per_object: a.records_per_object,
        seed: a.seed,
        object_signal: a.object_signal,
        time_signal: a.time_signal,
    };
    let graph = generate_graph(&config)?;
    let mut w = create(&a.out)?;
    writeln!(w, "object_id,timestamp,location_id")?;
    let mut records = 0usize;
    for r in TrajectoryStream::new(&graph, &config)? {
        writeln!(w, "{},{},{}", r.object_id, r.timestamp, r.location_id)?;
        records += 1;
    }
    w.flush()?;
    let end = config.n_slots * config.slot_minutes;
    let ingest_flags = format!(
        "--slot-minutes {} --window 00:00-{:02}:{:02}",
        config.slot_minutes,
        end / 60,
        end % 60
    );
    println!(
        "records {records}  locations {}  objects {}",
        config.n_locations, config.n_objects
    );
    write_json(
        &sidecar_path(&a.out),
        &SynthSidecar {
            command: "synth",
            config: &config,
            ingest_flags,
            records,
            graph: &graph,
        },
    )
}

fn load_quads(path: &Path) -> Result<Vec<TokenQuadruple>> {
    read_quadruples(open(path)?).with_context(|| format!("reading {}", path.display()))
}

/// Time slotting recorded by `ingest`, if the sidecar is present.
fn load_time_context(quads: &Path) -> Result<Option<TimeContext>> {
    let path = sidecar_path(quads);
    if !path.exists() {
        return Ok(None);
    }
    let sidecar: IngestSidecar = serde_json::from_reader(open(&path)?)
        .map_err(|e| MpeError::Data(format!("{}: {e}", path.display())))?;
    Ok(Some(TimeContext {
        slotting: sidecar.slotting,
        tz_offset_minutes: sidecar.tz_offset_minutes,
    }))
}

fn hyperparams(t: &TrainArgs) -> Result<Hyperparams> {
    let hp = Hyperparams {
        dim: t.dim,
        negatives: t.negatives,
        learning_rate: t.lr,
        regularization: t.reg,
        epochs: t.epochs,
        seed: t.seed,
        early_stop_rel_tol: t.early_stop,
    };
    hp.validate()?;
    if !(t.alpha.is_finite() && t.alpha >= 0.0) {
        return Err(usage("--alpha must be non-negative"));
    }
    Ok(hp)
}

fn parse_models(names: &[String], shared: bool) -> Result<Vec<ModelSpec>> {
    if names.is_empty() {
        return Err(usage("no models selected"));
    }
    names
        .iter()
        .map(|n| {
            let spec: ModelSpec = n.trim().parse()?;
            Ok(match spec {
                ModelSpec::Mpe {
                    mask,
                    shared_locations,
                } => ModelSpec::Mpe {
                    mask,
                    shared_locations: shared_locations || shared,
                },
                other => other,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct TrainSettings<'a> {
    split: String,
    hyperparams: Hyperparams,
    negative_mode: &'static str,
    negative_pool: &'static str,
    shared_locations: bool,
    alpha: f64,
    seed_streams: &'a [&'a str],
}

impl<'a> TrainSettings<'a> {
    fn new(t: &TrainArgs, hp: Hyperparams) -> Self {
        Self {
            split: t.split.to_string(),
            hyperparams: hp,
            negative_mode: t.negative_mode.name(),
            negative_pool: t.negative_pool.name(),
            shared_locations: t.shared_locations,
            alpha: t.alpha,
            seed_streams: &SEED_STREAMS,
        }
    }
}

#[derive(Serialize)]
struct TrainSidecar<'a> {
    command: &'static str,
    input: String,
    models: Vec<String>,
    settings: TrainSettings<'a>,
    time: Option<TimeContext>,
    train: usize,
    validation: usize,
    test: usize,
    outputs: Vec<String>,
}

fn train_options(
    t: &TrainArgs,
    mask: mpe::model::ComponentMask,
    shared_locations: bool,
) -> TrainOptions {
    TrainOptions {
        mask,
        shared_locations,
        exclusion: t.negative_mode,
        negative_pool: t.negative_pool,
    }
}

pub fn train(a: &TrainCmd) -> Result<()> {
    let hp = hyperparams(&a.train)?;
    let specs = match (&a.models, a.mask) {
        (Some(names), _) => parse_models(names, a.train.shared_locations)?,
        (None, mask) => vec![ModelSpec::Mpe {
            mask: mask.unwrap_or_default(),
            shared_locations: a.train.shared_locations,
        }],
    };
    let quads = load_quads(&a.input)?;
    let time = load_time_context(&a.input)?;
    let parts = split(quads, a.train.split, a.train.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;

    let mut outputs = Vec::new();
    for (name, part) in [
        ("train.csv", &parts.train),
        ("validation.csv", &parts.validation),
        ("test.csv", &parts.test),
    ] {
        let mut w = create(&a.out.join(name))?;
        write_quadruples(&mut w, part)?;
        w.flush()?;
        outputs.push(name.to_string());
    }

    let mut counts_written = false;
    for spec in &specs {
        let name = spec.name();
        match *spec {
            ModelSpec::Mpe {
                mask,
                shared_locations,
            } => {
                let opts = train_options(&a.train, mask, shared_locations);
                let mut loss = String::from("epoch\tobjective\tseconds\n");
                let (model, epochs, steps) = MpeModel::fit(&parts.train, &hp, opts, time, |s| {
                    loss.push_str(&format!("{}\t{}\t{:.6}\n", s.epoch, s.objective, s.seconds));
                    eprintln!(
                        "{name}: epoch {} objective {:.6} ({:.2}s)",
                        s.epoch, s.objective, s.seconds
                    );
                })?;
                let mut w = create(&a.out.join(format!("{name}.bin")))?;
                write_model(&mut w, &model)?;
                w.flush()?;
                let mut w = create(&a.out.join(format!("{name}.params.txt")))?;
                write_params_sidecar(&mut w, &hp, &opts)?;
                w.flush()?;
                fs::write(a.out.join(format!("{name}.loss.tsv")), loss)?;
                outputs.extend([
                    format!("{name}.bin"),
                    format!("{name}.params.txt"),
                    format!("{name}.loss.tsv"),
                ]);
                let last = epochs.last().map_or(f64::NAN, |s| s.objective);
                println!(
                    "{name}: {} epochs, {steps} sgd steps, final objective {last:.6}",
                    epochs.len()
                );
            }
            ModelSpec::Markov | ModelSpec::Bayes => {
                if !counts_written {
                    let counts = fit_counts(&parts.train, a.train.alpha)?;
                    let mut w = create(&a.out.join("counts.tsv"))?;
                    write_counts(&mut w, &counts)?;
                    w.flush()?;
                    outputs.push("counts.tsv".into());
                    counts_written = true;
                }
                println!("{name}: counts.tsv");
            }
        }
    }
    let sidecar = TrainSidecar {
        command: "train",
        input: a.input.display().to_string(),
        models: specs.iter().map(ModelSpec::name).collect(),
        settings: TrainSettings::new(&a.train, hp),
        time,
        train: parts.train.len(),
        validation: parts.validation.len(),
        test: parts.test.len(),
        outputs,
    };
    write_json(&a.out.join("config.json"), &sidecar)
}

#[derive(Serialize)]
struct EvaluateSidecar<'a> {
    command: &'static str,
    input: String,
    models: Vec<String>,
    runs: usize,
    max_k: usize,
    support: &'static str,
    settings: TrainSettings<'a>,
    outputs: [&'static str; 2],
}

pub fn evaluate(a: &EvaluateCmd) -> Result<()> {
    let hp = hyperparams(&a.train)?;
    let models = parse_models(&a.models, a.train.shared_locations)?;
    if a.runs == 0 || a.k == 0 {
        return Err(usage("--runs and --k must be positive"));
    }
    let quads = load_quads(&a.input)?;
    let support = if a.full_vocab {
        Support::FullVocabulary
    } else {
        Support::Candidates
    };
    let config = ExperimentConfig {
        split: a.train.split,
        split_seed: a.train.seed,
        hyperparams: hp,
        models: models.clone(),
        runs: a.runs,
        base_seed: a.train.seed,
        max_k: a.k,
        exclusion: a.train.negative_mode,
        negative_pool: a.train.negative_pool,
        support,
        alpha: a.train.alpha,
    };
    let reports = run_experiment(quads, &config)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut w = create(&a.out.join("report.tsv"))?;
    write_report_tsv(&mut w, &reports)?;
    w.flush()?;
    let mut w = create(&a.out.join("runs.tsv"))?;
    write_runs_tsv(&mut w, &reports)?;
    w.flush()?;
    print!("{}", format_table(&reports));
    let sidecar = EvaluateSidecar {
        command: "evaluate",
        input: a.input.display().to_string(),
        models: models.iter().map(ModelSpec::name).collect(),
        runs: a.runs,
        max_k: a.k,
        support: if a.full_vocab {
            "full-vocabulary"
        } else {
            "candidates"
        },
        settings: TrainSettings::new(&a.train, hp),
        outputs: ["report.tsv", "runs.tsv"],
    };
    write_json(&a.out.join("config.json"), &sidecar)
}

enum LoadedModel {
    Mpe(Box<MpeModel>),
    Counts(mpe::baselines::CountsModel),
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(MODEL_MAGIC) {
        Ok(LoadedModel::Mpe(Box::new(read_model(&bytes[..])?)))
    } else {
        Ok(LoadedModel::Counts(read_counts(&bytes[..])?))
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    if a.k == 0 {
        return Err(usage("--k must be positive"));
    }
    let model = load_model(&a.model)?;
    let queries = read_queries(open(&a.input)?, a.timestamps)?;
    let support = if a.full_vocab {
        Support::FullVocabulary
    } else {
        Support::Candidates
    };
    let ranker: Box<dyn NextLocationRanker + '_> = match (&model, a.baseline.as_deref()) {
        (LoadedModel::Mpe(m), None) => {
            if a.timestamps && m.time.is_none() {
                return Err(usage(
                    "--timestamps needs a model trained on an ingested file with a time sidecar",
                ));
            }
            Box::new(MpePredictor { model: m, support })
        }
        (LoadedModel::Mpe(_), Some(_)) => {
            return Err(usage("--baseline applies to counts files only"))
        }
        (LoadedModel::Counts(_), _) if a.timestamps => {
            return Err(usage(
                "counts files have no time slotting; pass slot indices",
            ))
        }
        (LoadedModel::Counts(c), Some("mm" | "markov")) => Box::new(MarkovRanker(c)),
        (LoadedModel::Counts(c), Some("bayes")) => Box::new(BayesRanker(c)),
        (LoadedModel::Counts(_), Some(other)) => {
            return Err(usage(format!("unknown baseline '{other}'")))
        }
        (LoadedModel::Counts(_), None) => {
            return Err(usage("counts file given; choose --baseline mm or bayes"))
        }
    };
    let predictions = predict_batch(ranker.as_ref(), &queries, a.k)?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "query\trank\ttoken\tscore\tbackoff")?;
    for (i, p) in predictions.iter().enumerate() {
        for (r, (token, score)) in p.entries.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{token}\t{score}\t{}",
                i + 1,
                r + 1,
                p.backoff.name()
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_embeddings(a: &ExportArgs) -> Result<()> {
    let kinds: Vec<EmbeddingKind> = match a.kind.as_str() {
        "all" => EmbeddingKind::ALL.to_vec(),
        k => vec![k.parse()?],
    };
    let model = match load_model(&a.model)? {
        LoadedModel::Mpe(m) => *m,
        LoadedModel::Counts(_) => bail!(MpeError::Config(
            "count baselines have no embeddings".into()
        )),
    };
    let mut w = output(a.out.as_deref())?;
    write_embeddings_tsv(&mut w, &model, &kinds)?;
    w.flush()?;
    Ok(())
}
