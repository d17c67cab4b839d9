use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hcar::attacks::{
    addany_attack, apply_perturbation, common_words, lexsub_attack, load_outcomes, modified_fraction, post_accuracy,
    pre_accuracy, run_attack, save_outcomes, sentence_removal_attack, transfer_eval, whitebox_word_attack, AddMode,
    AttackOutcome, AttackTarget,
};
use hcar::corpus::{encode_instance, gen_synthetic, load_rules, QAInstance, Split};
use hcar::model::{forward, save_checkpoint, Aggregator, Conditioning, ModelParams};
use hcar::numeric::{derive_seed, rng_from_seed};
use hcar::report::{export_attention, make_report, relevance_rank_metric, AttentionExport, ReportRow};
use hcar::train::{ensemble_evaluate, evaluate, model_id, select_top, train_model, train_pool, EvalRecord, Examples};
use serde::{Deserialize, Serialize};

use crate::settings::{embeddings_path, load_data, load_model, Data, FileConfig};
use crate::{AttackArgs, AttackCommand, Cli, Command, Global, ModeArg};

const COMMON_WORDS: usize = 1000;

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let file = FileConfig::load(g.config.as_deref())?;
    match cli.command {
        Command::Synth => synth(g, &file),
        Command::Train => train(g, &file),
        Command::Eval { checkpoint, split } => eval(g, &checkpoint, split.into()),
        Command::Pool => pool(g, &file),
        Command::EnsembleEval { pool, split } => ensemble_eval(g, &pool, split.into()),
        Command::Attack { kind } => attack(g, kind),
        Command::Transfer { outcomes, checkpoint } => transfer(g, &outcomes, &checkpoint),
        Command::Relevance {
            checkpoint,
            pool,
            split,
        } => relevance(g, &checkpoint, pool.as_deref(), split.into()),
        Command::ExportAttention {
            checkpoint,
            qid,
            outcomes,
            no_image,
        } => attention(g, &checkpoint, &qid, outcomes.as_deref(), !no_image),
        Command::Mcnemar { a, b } => mcnemar(g, &a, &b),
    }
}

fn out_dir(g: &Global) -> Result<PathBuf> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn data(g: &Global) -> Result<Data> {
    load_data(g.data.as_deref(), g.embeddings.as_deref())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn checkpoint_id(params: &ModelParams) -> String {
    model_id(&params.config, params.config.seed)
}

fn synth(g: &Global, file: &FileConfig) -> Result<()> {
    let mut cfg = file.synthetic_config()?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let path = g.out.clone().unwrap_or_else(|| PathBuf::from("synthetic.json"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let data = gen_synthetic(&cfg)?;
    data.file.write(&path)?;
    let emb = embeddings_path(&path, g.embeddings.as_deref());
    data.embeddings.write_file(&emb)?;
    println!("wrote {} questions to {} and embeddings to {}", data.file.qa.len(), path.display(), emb.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model_id: &'a str,
    seed: u64,
    best_epoch: usize,
    val_accuracy: f64,
    history: Vec<f64>,
}

fn train(g: &Global, file: &FileConfig) -> Result<()> {
    let d = data(g)?;
    let agg = file.aggregator(g.aggregator.map(Into::into))?;
    let seed = g.seed.unwrap_or(1);
    let model_cfg = file.model_config(agg, d.table.dim(), seed, g.precision.map(Into::into))?;
    let train_cfg = file.train_config(agg)?;
    let train_set = Examples::from_split(&d.dataset, Split::Train, &d.table)?;
    let val_set = Examples::from_split(&d.dataset, Split::Val, &d.table)?;
    let mut trained = train_model(&model_cfg, &train_cfg, &train_set, &val_set, seed)?;
    trained.params.embedding_fingerprint = d.table.fingerprint();

    let dir = out_dir(g)?;
    let id = checkpoint_id(&trained.params);
    let ckpt = dir.join(format!("{id}.ckpt"));
    save_checkpoint(&trained.params, &ckpt)?;
    write_json(
        &dir.join(format!("{id}.history.json")),
        &TrainSummary {
            model_id: &id,
            seed,
            best_epoch: trained.best_epoch,
            val_accuracy: trained.val_accuracy(),
            history: trained.history.iter().map(|h| h.accuracy).collect(),
        },
    )?;
    println!(
        "{id}: best epoch {} val accuracy {:.2}, saved {}",
        trained.best_epoch,
        trained.val_accuracy(),
        ckpt.display()
    );
    Ok(())
}

fn print_record(record: &EvalRecord, condition: &str) -> Result<()> {
    let report = make_report(
        vec![ReportRow {
            condition: condition.into(),
            record: record.clone(),
            relevance: None,
        }],
        &[],
    )?;
    print!("{}", report.render_table());
    println!("accuracy: {:.2}", record.accuracy);
    Ok(())
}

fn eval(g: &Global, checkpoint: &Path, split: Split) -> Result<()> {
    let d = data(g)?;
    let params = load_model(checkpoint, &d.table)?;
    let examples = Examples::from_split(&d.dataset, split, &d.table)?;
    if examples.is_empty() {
        bail!("split {} has no questions", split.as_str());
    }
    let id = checkpoint_id(&params);
    let record = evaluate(&params, &examples, &id, split.as_str())?;
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        record.write(&dir.join(format!("{id}.{}.eval.json", split.as_str())))?;
    }
    print_record(&record, "clean")
}

#[derive(Serialize, Deserialize)]
struct PoolMember {
    model_id: String,
    seed: u64,
    /// Relative to the manifest's directory.
    checkpoint: String,
    best_epoch: usize,
    val_accuracy: f64,
}

#[derive(Serialize, Deserialize)]
struct PoolManifest {
    aggregator: Aggregator,
    members: Vec<PoolMember>,
    /// Indices of the ensemble members, best first.
    selected: Vec<usize>,
}

impl PoolManifest {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn checkpoints(&self, manifest: &Path, indices: &[usize]) -> Vec<PathBuf> {
        let base = manifest.parent().unwrap_or(Path::new("."));
        indices.iter().map(|&i| base.join(&self.members[i].checkpoint)).collect()
    }
}

fn pool(g: &Global, file: &FileConfig) -> Result<()> {
    let d = data(g)?;
    let agg = file.aggregator(g.aggregator.map(Into::into))?;
    let model_cfg = file.model_config(agg, d.table.dim(), g.seed.unwrap_or(1), g.precision.map(Into::into))?;
    let train_cfg = file.train_config(agg)?;
    let train_set = Examples::from_split(&d.dataset, Split::Train, &d.table)?;
    let val_set = Examples::from_split(&d.dataset, Split::Val, &d.table)?;
    let mut models = train_pool(&model_cfg, &train_cfg, &train_set, &val_set)?;

    let dir = out_dir(g)?;
    let mut members = Vec::with_capacity(models.len());
    for m in &mut models {
        m.params.embedding_fingerprint = d.table.fingerprint();
        let id = checkpoint_id(&m.params);
        let name = format!("{id}.ckpt");
        save_checkpoint(&m.params, &dir.join(&name))?;
        println!("{id}: val accuracy {:.2} (epoch {})", m.val_accuracy(), m.best_epoch);
        members.push(PoolMember {
            model_id: id,
            seed: m.seed,
            checkpoint: name,
            best_epoch: m.best_epoch,
            val_accuracy: m.val_accuracy(),
        });
    }
    let selected = select_top(&models, train_cfg.ensemble_size);
    write_json(
        &dir.join("pool.json"),
        &PoolManifest {
            aggregator: agg,
            members,
            selected: selected.clone(),
        },
    )?;
    println!("ensemble members: {}", selected.iter().map(|&i| models[i].seed.to_string()).collect::<Vec<_>>().join(", "));
    Ok(())
}

fn ensemble_eval(g: &Global, pool_path: &Path, split: Split) -> Result<()> {
    let d = data(g)?;
    let manifest = PoolManifest::load(pool_path)?;
    let models = manifest
        .checkpoints(pool_path, &manifest.selected)
        .iter()
        .map(|p| load_model(p, &d.table))
        .collect::<Result<Vec<_>>>()?;
    let Some(best) = models.first() else {
        bail!("{} selects no members", pool_path.display());
    };
    let examples = Examples::from_split(&d.dataset, split, &d.table)?;
    if examples.is_empty() {
        bail!("split {} has no questions", split.as_str());
    }
    let refs: Vec<&ModelParams> = models.iter().collect();
    let id = format!("{}-ensemble{}", manifest.aggregator.label().to_ascii_lowercase(), refs.len());
    let ens = ensemble_evaluate(&refs, &examples, &id, split.as_str())?;
    let single = evaluate(best, &examples, &checkpoint_id(best), split.as_str())?;
    let rows = [&ens, &single]
        .into_iter()
        .map(|r| ReportRow {
            condition: "clean".into(),
            record: r.clone(),
            relevance: None,
        })
        .collect();
    let report = make_report(rows, &[(0, 1)])?;
    print!("{}", report.render_table());
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        ens.write(&dir.join(format!("{id}.{}.eval.json", split.as_str())))?;
    }
    println!("accuracy: {:.2}", ens.accuracy);
    Ok(())
}

/// `n` questions drawn without replacement, kept in dataset order.
fn sample_questions(instances: &[QAInstance], n: usize, seed: u64) -> Vec<QAInstance> {
    if n >= instances.len() {
        return instances.to_vec();
    }
    let mut rng = rng_from_seed(derive_seed(seed, "questions"));
    let mut idx = rand::seq::index::sample(&mut rng, instances.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| instances[i].clone()).collect()
}

fn attack(g: &Global, cmd: AttackCommand) -> Result<()> {
    let common = match &cmd {
        AttackCommand::Lexsub { common, .. }
        | AttackCommand::Wordwb { common, .. }
        | AttackCommand::Addany { common, .. }
        | AttackCommand::Sentrm { common } => common.clone(),
    };
    let AttackArgs {
        checkpoint,
        split,
        questions,
    } = common;
    let split: Split = split.into();
    let d = data(g)?;
    let params = load_model(&checkpoint, &d.table)?;
    let id = checkpoint_id(&params);
    let seed = g.seed.unwrap_or(1);
    let instances = sample_questions(d.dataset.split(split), questions, seed);
    if instances.is_empty() {
        bail!("split {} has no questions", split.as_str());
    }
    let unlabelled: Vec<&str> = instances.iter().filter(|q| q.correct_index.is_none()).map(|q| q.qid.as_str()).collect();
    if !unlabelled.is_empty() {
        bail!(
            "attacks need gold answers, but {} of the selected {} questions have none (first: {}); \
             use a split with correct_index labels",
            unlabelled.len(),
            split.as_str(),
            unlabelled[0]
        );
    }
    let target = AttackTarget {
        dataset: &d.dataset,
        table: &d.table,
        params: &params,
        model_id: &id,
    };

    let (label, outcomes): (String, Vec<AttackOutcome>) = match cmd {
        AttackCommand::Lexsub { rules, .. } => {
            let set = load_rules(&rules, &d.table)?;
            for (rule, reason) in &set.dropped {
                log::warn!("dropping rule {rule:?}: {reason}");
            }
            let out = run_attack(&instances, |q| lexsub_attack(&target, q, &set.rules))?;
            println!("questions modified: {:.2}%", modified_fraction(&out));
            ("lexsub".into(), out)
        }
        AttackCommand::Wordwb { k, .. } => {
            let vocab: Vec<String> = d.table.vocabulary().into_iter().map(String::from).collect();
            let out = run_attack(&instances, |q| whitebox_word_attack(&target, q, k, &vocab, seed))?;
            (format!("wordwb-k{k}"), out)
        }
        AttackCommand::Addany { mode, epochs, .. } => {
            let mode = match mode {
                ModeArg::Addc => AddMode::AddC,
                ModeArg::Addq => AddMode::AddQ,
                ModeArg::Addqa => AddMode::AddQA,
            };
            let common = common_words(&d.dataset, &d.table, COMMON_WORDS);
            let out = run_attack(&instances, |q| addany_attack(&target, q, mode, epochs, &common, seed))?;
            (format!("{}-e{epochs}", mode.kind().as_str()), out)
        }
        AttackCommand::Sentrm { .. } => {
            let out = run_attack(&instances, |q| sentence_removal_attack(&target, q))?;
            ("sentrm".into(), out)
        }
    };
    let path = out_dir(g)?.join(format!("{id}.{label}.jsonl"));
    save_outcomes(&outcomes, &path)?;
    println!(
        "{id} {label}: clean {:.2} -> attacked {:.2} on {} questions, outcomes in {}",
        pre_accuracy(&outcomes),
        post_accuracy(&outcomes),
        outcomes.len(),
        path.display()
    );
    Ok(())
}

fn transfer(g: &Global, outcome_paths: &[PathBuf], checkpoints: &[PathBuf]) -> Result<()> {
    let d = data(g)?;
    let sets = outcome_paths
        .iter()
        .map(|p| load_outcomes(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let models = checkpoints
        .iter()
        .map(|p| load_model(p, &d.table))
        .collect::<Result<Vec<_>>>()?;
    let named: Vec<(String, &ModelParams)> = models.iter().map(|m| (checkpoint_id(m), m)).collect();
    for (path, set) in outcome_paths.iter().zip(&sets) {
        for pair in &named {
            let acc = transfer_eval(std::slice::from_ref(set), std::slice::from_ref(pair), &d.dataset, &d.table)?;
            println!("{} on {}: {acc:.2}", pair.0, path.display());
        }
    }
    let overall = transfer_eval(&sets, &named, &d.dataset, &d.table)?;
    println!("mean post-attack accuracy: {overall:.2}");
    Ok(())
}

fn relevance(g: &Global, checkpoints: &[PathBuf], pool: Option<&Path>, split: Split) -> Result<()> {
    let d = data(g)?;
    let paths = match pool {
        Some(p) => {
            let manifest = PoolManifest::load(p)?;
            manifest.checkpoints(p, &manifest.selected)
        }
        None if checkpoints.is_empty() => bail!("give --checkpoint or --pool"),
        None => checkpoints.to_vec(),
    };
    let models = paths.iter().map(|p| load_model(p, &d.table)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ModelParams> = models.iter().collect();
    let stats = relevance_rank_metric(&refs, &d.dataset, d.dataset.split(split), &d.table)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
    println!(
        "evidence ranked first: all {:.2}, correct {}, incorrect {} ({} questions, {} models)",
        stats.all,
        fmt(stats.correct),
        fmt(stats.incorrect),
        stats.questions,
        stats.models
    );
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(format!("relevance.{}.json", split.as_str())), &stats)?;
    }
    Ok(())
}

fn attention(g: &Global, checkpoint: &Path, qid: &str, outcomes: Option<&Path>, image: bool) -> Result<()> {
    let d = data(g)?;
    let params = load_model(checkpoint, &d.table)?;
    let ds = &d.dataset;
    let Some(inst) = ds.train.iter().chain(&ds.val).chain(&ds.test).find(|q| q.qid == qid) else {
        bail!("question {qid} is not in the dataset");
    };
    let plot = ds.plot_for(inst)?;
    let (inst, plot) = match outcomes {
        Some(path) => {
            let all = load_outcomes(path).with_context(|| format!("loading {}", path.display()))?;
            let Some(o) = all.iter().find(|o| o.qid == qid) else {
                bail!("{} has no outcome for {qid}", path.display());
            };
            apply_perturbation(inst, plot, &o.perturbation)?
        }
        None => (inst.clone(), plot.clone()),
    };
    let trace = forward(&params, &encode_instance(&inst, &plot, &d.table), Conditioning::Selected)?;
    let export = AttentionExport::from_trace(&trace, qid, Some(&plot.sentences));
    let stem: String = qid.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    let dir = out_dir(g)?;
    let json = dir.join(format!("{stem}.attention.json"));
    let ppm = image.then(|| dir.join(format!("{stem}.attention.ppm")));
    export_attention(&export, &json, ppm.as_deref())?;
    println!(
        "{qid}: selected {} over {} sentences, wrote {}",
        trace.selected,
        trace.num_sentences(),
        json.display()
    );
    Ok(())
}

fn mcnemar(g: &Global, a: &Path, b: &Path) -> Result<()> {
    let rows = [a, b]
        .into_iter()
        .map(|p| {
            let record = EvalRecord::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ReportRow {
                condition: record.split.clone(),
                record,
                relevance: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = make_report(rows, &[(0, 1)])?;
    print!("{}", report.render_table());
    let t = &report.rows[0].comparisons[0].test;
    println!("b={} c={} statistic={:.6} p={:.6}", t.b, t.c, t.statistic, t.p_value);
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("mcnemar.json"), report.to_json()?)?;
    }
    Ok(())
}
