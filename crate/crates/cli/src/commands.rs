use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

use labelaug::augment::prompt_da_augment;
use labelaug::corpus::{
    build_vocab_with_reserved, generate_synthetic, kshot_sample, parse_records, records_to_split,
    DataFormat, DatasetSplit, SyntheticSpec, Vocab, TEMPLATE_WORDS,
};
use labelaug::harness::{
    run_conditions, sweep_parameter, Condition, ConditionsFile, ExperimentConfig, SweepParam,
};
use labelaug::inference::{predict_split, predictions_csv};
use labelaug::model::{
    load_checkpoint, pretrain as run_pretrain, save_checkpoint, MicroMlm, ModelConfig,
    PretrainConfig,
};
use labelaug::template::{Template, TemplateMode};
use labelaug::tuning::{loss_trace_csv, tune as run_tune, TuneConfig};
use labelaug::verbalizer::{load_manual_verbalizer, select_verbalizer, SearchConfig};

use crate::{
    CheckpointArgs, DataArgs, EvalArgs, ExperimentArgs, GenDataArgs, ModelArgs, OverrideArgs,
    PretrainArgs, SearchArgs, SweepArgs, TuneArgs,
};

/// A command-line value that does not parse.
#[derive(Debug)]
pub struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parses a kebab/lowercase enum name through its serde form.
fn parse_name<T: DeserializeOwned>(value: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| UsageError(format!("invalid {what} `{value}`")).into())
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => SyntheticSpec::from_json(&read(p)?)?,
        None => SyntheticSpec::default(),
    };
    let data = generate_synthetic(&spec, a.seed)?;
    data.write_to(&a.out)?;
    write(
        &a.out.join("spec.json"),
        serde_json::to_string_pretty(&spec)? + "\n",
    )?;
    println!(
        "wrote {} corpus lines, {} pool and {} test examples, {} tokens to {}",
        data.pretrain_lines.len(),
        data.task.len(),
        data.test.len(),
        data.vocab.len(),
        a.out.display()
    );
    Ok(())
}

fn model_config(a: &ModelArgs, vocab_size: usize) -> Result<ModelConfig> {
    let mut cfg: ModelConfig = match &a.model_config {
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(|e| labelaug::Error::Config(format!("model config: {e}")))?,
        None => ModelConfig::default(),
    };
    cfg.vocab_size = vocab_size;
    let dims = [
        (&mut cfg.d_model, a.d_model),
        (&mut cfg.n_layers, a.n_layers),
        (&mut cfg.n_heads, a.n_heads),
        (&mut cfg.d_ff, a.d_ff),
        (&mut cfg.max_len, a.max_len),
    ];
    for (field, value) in dims {
        if let Some(v) = value {
            *field = v;
        }
    }
    cfg.tie_output_to_embeddings |= a.tie_output;
    cfg.validate()?;
    Ok(cfg)
}

pub fn pretrain(a: PretrainArgs) -> Result<()> {
    let text = read(&a.corpus)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let vocab = match &a.vocab {
        Some(p) => Vocab::load(p)?,
        None => {
            let v = build_vocab_with_reserved(&lines, a.min_freq, &TEMPLATE_WORDS)?;
            let out = a
                .vocab_out
                .clone()
                .unwrap_or_else(|| with_suffix(&a.out, ".vocab.txt"));
            write(&out, v.to_text())?;
            v
        }
    };
    let config = model_config(&a.model, vocab.len())?;
    let mut pcfg = PretrainConfig {
        seed: a.seed,
        ..PretrainConfig::default()
    };
    if let Some(v) = a.epochs {
        pcfg.epochs = v;
    }
    if let Some(v) = a.mask_fraction {
        pcfg.mask_fraction = v;
    }
    if let Some(v) = a.batch_size {
        pcfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        pcfg.adam.lr = v;
    }
    let model = MicroMlm::initialize(config, a.seed)?;
    let (model, trace) = run_pretrain(model, &lines, &vocab, &pcfg)?;
    save_checkpoint(&model, &a.out)?;
    let mut csv = String::from("epoch,items,mean_loss\n");
    for e in &trace {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.items, e.mean_loss));
        eprintln!(
            "epoch {:>3}  items {:>6}  loss {:.4}",
            e.epoch, e.items, e.mean_loss
        );
    }
    if let Some(p) = &a.trace {
        write(p, csv)?;
    }
    println!("saved {}", a.out.display());
    Ok(())
}

fn load_model(a: &CheckpointArgs) -> Result<(MicroMlm, Vocab, Template)> {
    let model = load_checkpoint(&a.checkpoint)?;
    let vocab = Vocab::load(&a.vocab)?;
    if vocab.len() != model.config.vocab_size {
        return Err(labelaug::Error::Config(format!(
            "vocabulary has {} tokens, checkpoint expects {}",
            vocab.len(),
            model.config.vocab_size
        ))
        .into());
    }
    let mode: TemplateMode = a.template.parse()?;
    let template = Template::new(mode, &vocab, model.config.max_len)?;
    Ok((model, vocab, template))
}

fn load_split(path: &Path, d: &DataArgs, vocab: &Vocab) -> Result<DatasetSplit> {
    let format = match &d.format {
        Some(f) => f.parse()?,
        None => DataFormat::from_path(path)?,
    };
    let records = parse_records(&read(path)?, format)?;
    let split = records_to_split(&records, vocab, &d.labels)?;
    if !d.labels.is_empty() && split.class_count != d.labels.len() {
        return Err(labelaug::Error::Config(format!(
            "{} has labels outside --labels: {:?}",
            path.display(),
            &split.label_names[d.labels.len()..]
        ))
        .into());
    }
    Ok(split)
}

pub fn search(a: SearchArgs) -> Result<()> {
    let (model, vocab, template) = load_model(&a.model)?;
    let mut train = load_split(&a.train, &a.data, &vocab)?;
    if let Some(k) = a.k_shot {
        train = kshot_sample(&train, k, a.sample_seed)?.0;
    }
    let cfg = SearchConfig {
        m: a.m,
        n: a.n,
        k_y: a.k_y,
        seed: a.seed,
        budget: u128::from(a.budget),
        score_space: parse_name(&a.score_space, "score space")?,
        strict: a.strict,
    };
    let out = select_verbalizer(&model, &train, &template, &cfg)?;
    write(&a.out, out.verbalizer.to_text(&vocab))?;
    let report = out.report(&vocab, &train.label_names, &cfg);
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".json"));
    write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "train accuracy {:.4} over {} candidates ({} tied)",
        out.train_accuracy, out.evaluated, out.tied
    );
    print!("{}", out.verbalizer.to_text(&vocab));
    Ok(())
}

pub fn tune(a: TuneArgs) -> Result<()> {
    let (model, vocab, template) = load_model(&a.model)?;
    let train = load_split(&a.train, &a.data, &vocab)?;
    let verbalizer = load_manual_verbalizer(&a.verbalizer, &vocab)?;
    let cfg = TuneConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        shuffle_seed: a.shuffle_seed,
        loss_scaling: parse_name(&a.loss_scaling, "loss scaling")?,
    };
    let augmented = prompt_da_augment(&train, &verbalizer)?;
    let outcome = run_tune(&model, &augmented, &template, &cfg)?;
    save_checkpoint(&outcome.model, &a.out)?;
    if let Some(p) = &a.loss_trace {
        write(p, loss_trace_csv(&outcome.trace))?;
    }
    let last = outcome.trace.last().expect("at least one epoch");
    println!(
        "{} pairs, {} steps, final mean loss {:.4}; saved {}",
        augmented.len(),
        outcome.steps,
        last.mean_loss,
        a.out.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (model, vocab, template) = load_model(&a.model)?;
    let test = load_split(&a.test, &a.data, &vocab)?;
    let verbalizer = load_manual_verbalizer(&a.verbalizer, &vocab)?;
    if test.is_empty() {
        return Err(labelaug::Error::Empty("evaluation split").into());
    }
    let aggregation = parse_name(&a.aggregation, "aggregation")?;
    let preds = predict_split(&model, &test, &template, &verbalizer, aggregation)?;
    let correct = preds.iter().filter(|p| p.predicted == p.gold).count();
    let accuracy = correct as f64 / preds.len() as f64;
    if let Some(p) = &a.predictions {
        write(p, predictions_csv(&preds, &test.label_names))?;
    }
    if let Some(p) = &a.json {
        let summary = serde_json::json!({
            "accuracy": accuracy,
            "correct": correct,
            "total": preds.len(),
        });
        write(p, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    println!("accuracy {accuracy:.4} ({correct}/{})", preds.len());
    Ok(())
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn resolve_config(a: &OverrideArgs) -> Result<ExperimentConfig> {
    let base = match &a.config {
        Some(p) => ExperimentConfig::from_json(&read(p)?)?,
        None => ExperimentConfig::default(),
    };
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
    if let Some(seeds) = &a.seed_list {
        push("seeds", serde_json::to_string(seeds)?);
    }
    if let Some(v) = &a.name {
        push("name", json_string(v));
    }
    if let Some(v) = a.k_shot {
        push("k_shot", v.to_string());
    }
    if let Some(v) = a.k_y {
        push("k_y", v.to_string());
    }
    if let Some(v) = &a.template {
        push("template", json_string(v));
    }
    if let Some(v) = &a.verbalizer {
        push("verbalizer", serde_json::json!({ "mode": v }).to_string());
    }
    if let Some(v) = a.m {
        push("search.m", v.to_string());
    }
    if let Some(v) = a.n {
        push("search.n", v.to_string());
    }
    if let Some(v) = a.epochs {
        push("tune.epochs", v.to_string());
    }
    if let Some(v) = a.lr {
        push("tune.lr", serde_json::to_string(&v)?);
    }
    if let Some(v) = a.batch_size {
        push("tune.batch_size", v.to_string());
    }
    if let (Some(c), Some(v)) = (&a.checkpoint, &a.vocab) {
        let model = serde_json::json!({ "kind": "checkpoint", "checkpoint": c, "vocab": v });
        push("model", model.to_string());
    }
    for item in &a.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got `{item}`")))?;
        push(k.trim(), v.to_string());
    }
    let cfg = base.with_overrides(&pairs)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = resolve_config(&a.config)?;
    if a.config.print_config {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    let conditions = match &a.conditions {
        Some(p) => ConditionsFile::from_json(&read(p)?)?.conditions,
        None => vec![Condition {
            name: cfg.name.clone(),
            set: Default::default(),
        }],
    };
    let table = run_conditions(&cfg, &conditions)?;
    table.write_to(&a.out)?;
    write(&a.out.join("config.json"), cfg.to_json())?;
    print!("{}", table.to_text());
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = resolve_config(&a.config)?;
    if a.config.print_config {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    let param: SweepParam = a.param.parse()?;
    let series = sweep_parameter(&cfg, param, &a.values)?;
    series.write_to(&a.out)?;
    write(&a.out.join("config.json"), cfg.to_json())?;
    print!("{}", series.series_csv());
    Ok(())
}
