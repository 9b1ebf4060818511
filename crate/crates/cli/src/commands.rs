use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dsner::corpus::{
    compute_noise_rates, inject_noise_with_stats, load_conll, match_gazetteer, synthetic,
    write_conll, Gazetteer, Layer, NoiseSpec, Sentence,
};
use dsner::knn::DataStore;
use dsner::model::{Checkpoint, SpanModel};
use dsner::trainer::{decode, evaluate, train, Profile, RunConfig, ScoredSpan};
use dsner::{Error, Result};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Command, InputFormat, RunArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Label {
            corpus,
            format,
            gazetteer,
            out,
        } => label(&corpus, format, &gazetteer, &out),
        Command::AnalyzeNoise { gold, distant, out } => {
            analyze_noise(&gold, &distant, out.as_deref())
        }
        Command::InjectNoise {
            gold,
            out,
            flip_rate,
            drop_rate,
            drop_multipliers,
            seed,
        } => {
            let mut spec = NoiseSpec::new(flip_rate, drop_rate);
            for (ty, factor) in &drop_multipliers {
                spec = spec.with_multiplier(ty, *factor);
            }
            inject(&gold, &out, &spec, seed)
        }
        Command::MakeSynthetic { out, count, seed } => {
            let sentences = synthetic::generate(count, seed);
            write_corpus(&out, &sentences, Layer::Gold)?;
            write_meta(
                &out,
                "make-synthetic",
                json!({ "count": count, "seed": seed }),
            )
        }
        Command::Train {
            train,
            dev,
            out_dir,
            run,
        } => train_command(train, dev, out_dir, &run),
        Command::BuildDatastore { model, train, out } => build_datastore(&model, &train, &out),
        Command::Eval {
            model,
            data,
            datastore,
            out,
            run,
        } => eval_command(&model, &data, datastore.as_deref(), out.as_deref(), &run),
        Command::Predict {
            model,
            input,
            format,
            datastore,
            out,
            run,
        } => predict(
            &model,
            &input,
            format,
            datastore.as_deref(),
            out.as_deref(),
            &run,
        ),
    }
}

fn read_text(path: &Path) -> Result<Vec<Sentence>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !tokens.is_empty() {
            out.push(Sentence::new(tokens));
        }
    }
    Ok(out)
}

fn read_input(path: &Path, format: InputFormat) -> Result<Vec<Sentence>> {
    match format {
        InputFormat::Conll => load_conll(path),
        InputFormat::Text => read_text(path),
    }
}

/// A CoNLL file whose tags are distant labels.
fn load_distant(path: &Path) -> Result<Vec<Sentence>> {
    let mut sentences = load_conll(path)?;
    for s in &mut sentences {
        s.distant = s.gold.take();
    }
    Ok(sentences)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_corpus(path: &Path, sentences: &[Sentence], layer: Layer) -> Result<()> {
    let mut w = create(path)?;
    write_conll(&mut w, sentences, layer).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

/// Sidecar describing how an artifact was made.
fn write_meta(artifact: &Path, command: &str, config: Value) -> Result<()> {
    write_json(
        &meta_path(artifact),
        &json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "config": config }),
    )
}

fn label(corpus: &Path, format: InputFormat, gazetteer: &Path, out: &Path) -> Result<()> {
    let gaz = Gazetteer::load(gazetteer)?;
    let mut sentences = read_input(corpus, format)?;
    let mut entities = 0;
    for s in &mut sentences {
        let spans = match_gazetteer(s, &gaz);
        entities += spans.len();
        s.distant = Some(spans);
    }
    write_corpus(out, &sentences, Layer::Distant)?;
    info!(
        "labeled {entities} entities in {} sentences",
        sentences.len()
    );
    write_meta(
        out,
        "label",
        json!({ "corpus": corpus, "gazetteer": gazetteer, "entries": gaz.len(), "entities": entities }),
    )
}

fn analyze_noise(gold: &Path, distant: &Path, out: Option<&Path>) -> Result<()> {
    let gold_sents = load_conll(gold)?;
    let distant_sents = load_distant(distant)?;
    let report = compute_noise_rates(&gold_sents, &distant_sents)?;
    match out {
        Some(path) => {
            write_json(path, &report)?;
            write_meta(
                path,
                "analyze-noise",
                json!({ "gold": gold, "distant": distant }),
            )
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn inject(gold: &Path, out: &Path, spec: &NoiseSpec, seed: u64) -> Result<()> {
    let sentences = load_conll(gold)?;
    let (noisy, stats) = inject_noise_with_stats(&sentences, spec, seed)?;
    write_corpus(out, &noisy, Layer::Distant)?;
    let stats = json!({
        "entities": stats.entities,
        "dropped": stats.dropped,
        "flipped": stats.flipped,
        "unflippable": stats.unflippable,
    });
    println!("{stats}");
    write_meta(
        out,
        "inject-noise",
        json!({
            "gold": gold,
            "flip_rate": spec.flip_rate,
            "drop_rate": spec.drop_rate,
            "drop_multipliers": spec.drop_multipliers,
            "seed": seed,
            "stats": stats,
        }),
    )
}

/// Precedence: built-in profile defaults, then the config file (or the
/// config stored in a checkpoint), then flags.
fn resolve_config(run: &RunArgs, stored: Option<&Value>) -> Result<RunConfig> {
    let mut cfg = match (&run.config, stored) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(value)) => serde_json::from_value(value.clone())
            .map_err(|e| Error::Config(format!("checkpoint run config: {e}")))?,
        (None, None) => RunConfig::default(),
    };
    if let Some(name) = &run.profile {
        let profile = Profile::parse(name)?;
        if run.config.is_none() && stored.is_none() {
            cfg = RunConfig::for_profile(profile);
        } else if cfg.profile != profile {
            return Err(Error::Config(format!(
                "--profile {name} conflicts with the configured profile {}",
                cfg.profile.name()
            )));
        }
    }
    run.apply(&mut cfg)?;
    Ok(cfg)
}

fn config_value(cfg: &RunConfig) -> Result<Value> {
    Ok(serde_json::to_value(cfg)?)
}

fn train_command(
    train_path: Option<PathBuf>,
    dev_path: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    run: &RunArgs,
) -> Result<()> {
    let mut cfg = resolve_config(run, None)?;
    if train_path.is_some() {
        cfg.paths.train = train_path;
    }
    if dev_path.is_some() {
        cfg.paths.dev = dev_path;
    }
    if out_dir.is_some() {
        cfg.paths.output = out_dir;
    }
    let train_path = cfg.paths.train.clone().ok_or_else(|| {
        Error::Config("no training corpus: pass --train or set paths.train".into())
    })?;
    let out_dir = cfg.paths.output.clone().ok_or_else(|| {
        Error::Config("no output directory: pass --out-dir or set paths.output".into())
    })?;

    let train_sents = load_distant(&train_path)?;
    let dev_sents = cfg.paths.dev.as_deref().map(load_conll).transpose()?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics = create(&metrics_path)?;
    let mut write_err = None;
    let outcome = train(&cfg, &train_sents, dev_sents.as_deref(), |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(metrics, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&metrics_path, e));
    }
    metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;

    let cfg_value = config_value(&cfg)?;
    let model_path = out_dir.join("model.json");
    Checkpoint::from_model(&outcome.model, Some(cfg_value.clone())).save(&model_path)?;
    let cfg_path = out_dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml_string()?).map_err(|e| Error::io(&cfg_path, e))?;
    for artifact in [&model_path, &metrics_path] {
        write_meta(artifact, "train", cfg_value.clone())?;
    }

    let summary = json!({
        "model": model_path,
        "model_hash": outcome.model.fingerprint(),
        "best_epoch": outcome.best_epoch,
        "dev": outcome.metrics.get(outcome.best_epoch.saturating_sub(1)).and_then(|m| m.dev),
        "config": cfg_value,
    });
    write_json(&out_dir.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(SpanModel, Option<Value>)> {
    let ckpt = Checkpoint::load(path)?;
    let run_config = ckpt.run_config.clone();
    Ok((ckpt.into_model()?, run_config))
}

fn build_datastore(model_path: &Path, train_path: &Path, out: &Path) -> Result<()> {
    let (model, _) = load_checkpoint(model_path)?;
    let sentences = load_distant(train_path)?;
    let store = DataStore::build(&model, &sentences)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    store.save(out)?;
    let info = json!({
        "entries": store.len(),
        "dim": store.dim(),
        "checkpoint_hash": store.checkpoint_hash(),
        "model": model_path,
        "train": train_path,
    });
    println!("{info}");
    write_meta(out, "build-datastore", info)
}

fn load_store(path: Option<&Path>, model: &SpanModel) -> Result<Option<DataStore>> {
    path.map(|p| {
        let store = DataStore::load(p)?;
        store.check_model(model)?;
        Ok(store)
    })
    .transpose()
}

fn eval_command(
    model_path: &Path,
    data: &Path,
    datastore: Option<&Path>,
    out: Option<&Path>,
    run: &RunArgs,
) -> Result<()> {
    let (model, stored) = load_checkpoint(model_path)?;
    let cfg = resolve_config(run, stored.as_ref())?;
    let sentences = load_conll(data)?;
    let store = load_store(datastore, &model)?;
    let knn = store.as_ref().map(|s| (s, &cfg.knn));
    let result = evaluate(&model, &sentences, knn, cfg.train.max_span_len)?;
    println!("{}", serde_json::to_string(&result)?);
    if let Some(path) = out {
        write_json(path, &result)?;
        write_meta(
            path,
            "eval",
            json!({ "model": model_path, "data": data, "datastore": datastore, "run": config_value(&cfg)? }),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    tokens: &'a [String],
    entities: Vec<ScoredSpan>,
}

fn predict(
    model_path: &Path,
    input: &Path,
    format: InputFormat,
    datastore: Option<&Path>,
    out: Option<&Path>,
    run: &RunArgs,
) -> Result<()> {
    let (model, stored) = load_checkpoint(model_path)?;
    let cfg = resolve_config(run, stored.as_ref())?;
    let sentences = read_input(input, format)?;
    let store = load_store(datastore, &model)?;
    let knn = store.as_ref().map(|s| (s, &cfg.knn));
    let mut lines = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let entities = decode(&model, &s.tokens, knn, cfg.train.max_span_len)?;
        lines.push(serde_json::to_string(&Prediction {
            tokens: &s.tokens,
            entities,
        })?);
    }
    match out {
        Some(path) => {
            let mut w = create(path)?;
            for line in &lines {
                writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
            write_meta(
                path,
                "predict",
                json!({ "model": model_path, "input": input, "datastore": datastore, "run": config_value(&cfg)? }),
            )
        }
        None => {
            for line in &lines {
                println!("{line}");
            }
            Ok(())
        }
    }
}
