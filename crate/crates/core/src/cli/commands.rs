//! Subcommand implementations. Each returns the text to print on stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use log::info;

use super::checkpoint::Checkpoint;
use super::config::{DataSource, RunConfig};
use crate::diagnostics::{
    complexity_report, counterexample_suite, run_identity_experiment, verify_bound,
    verify_necessary_condition,
};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EVAL_HEADER};
use crate::kg_store::{
    augment_reciprocal, build_filter_index, generate_synthetic, inject_identity, load_dataset_dir,
    relation_stats, relation_stats_csv, write_output, Dataset, Split,
};
use crate::model::{init_state, ModelConfig, ModelKind};
use crate::trainer::{fit, TrainHooks};

pub const TRACE_FILE: &str = "train_trace.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const COMPLEXITY_FILE: &str = "complexity.csv";
pub const IDENTITY_SUMMARY_FILE: &str = "identity_summary.csv";
pub const IDENTITY_SUMMARY_HEADER: &str =
    "run,final_delta_identity,final_error_to_identity,initial_error_between_runs,final_error_between_runs";
pub const VERIFY_HEADER: &str = "check,setting,samples,worst,status";

/// Entity and relation counts over all splits, before augmentation.
pub const STATS_HEADER: &str = "key,value";

fn load_raw(cfg: &RunConfig) -> Result<Dataset> {
    match cfg.data()? {
        DataSource::Dir(dir) => load_dataset_dir(dir),
        DataSource::Synthetic(spec) => generate_synthetic(spec, cfg.seed),
    }
}

/// Raw data plus reciprocal relations and, when requested, the identity
/// relation. Deterministic in the config, so eval sees the training vocab.
pub fn prepare_dataset(cfg: &RunConfig, identity_fraction: Option<f64>) -> Result<Dataset> {
    let ds = augment_reciprocal(&load_raw(cfg)?)?;
    match identity_fraction {
        Some(f) => inject_identity(&ds, f, cfg.seed.wrapping_add(1)),
        None => Ok(ds),
    }
}

/// Refuse to start if any output already exists and `--force` is absent.
fn claim_outputs(cfg: &RunConfig, paths: &[PathBuf]) -> Result<()> {
    if !cfg.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::io(
                p,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "output exists; pass --force to overwrite",
                ),
            ));
        }
    }
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))
}

fn eval_csv(state: &crate::model::ModelState, ds: &Dataset, splits: &[Split]) -> Result<String> {
    let filter = build_filter_index(ds);
    let mut out = format!("{EVAL_HEADER}\n");
    for &split in splits {
        let triples = ds.split(split);
        if triples.is_empty() {
            continue;
        }
        let r = evaluate(state, triples, &filter)
            .map_err(|e| e.context(format!("{} split", split.name())))?;
        out.push_str(&r.csv_row(split.name()));
        out.push('\n');
    }
    Ok(out)
}

pub fn train(cfg: &RunConfig) -> Result<String> {
    let ckpt_path = cfg.checkpoint_path();
    let trace_path = cfg.out.join(TRACE_FILE);
    let ds = prepare_dataset(cfg, cfg.identity_fraction)?;
    claim_outputs(cfg, &[ckpt_path.clone(), trace_path.clone()])?;
    info!(
        "training {} (n={}) on {} entities, {} relations, {} train triples",
        cfg.model.kind,
        cfg.model.dim,
        ds.vocab.n_entities(),
        ds.vocab.n_relations(),
        ds.train.len()
    );
    let state = init_state(
        cfg.model,
        ds.vocab.n_entities(),
        ds.vocab.n_relations(),
        cfg.seed,
    )?;
    let tracked = ds.identity_relation.into_iter().collect();
    let (best, trace) = fit(state, &ds, &cfg.train, TrainHooks::tracking(tracked))?;

    let mut metrics = BTreeMap::new();
    if let Some(m) = trace.best_valid_mrr {
        metrics.insert("valid_mrr".to_string(), m);
    }
    if let Some(rec) = trace.records.last() {
        metrics.insert("final_loss".to_string(), rec.loss);
    }
    let epoch = trace.best_epoch.or(trace.records.last().map(|r| r.epoch));
    let ckpt = Checkpoint::new(best, &ds.vocab, epoch, metrics);
    ckpt.save(&ckpt_path, cfg.force)?;
    write_output(&trace_path, trace.to_csv().as_bytes(), cfg.force)?;

    let mut out = format!("checkpoint,{}\n", ckpt_path.display());
    if ds.valid.is_empty() {
        out.push_str("no validation split; nothing to report\n");
    } else {
        out.push_str(&eval_csv(&ckpt.state, &ds, &[Split::Valid])?);
    }
    Ok(out)
}

fn load_matching(cfg: &RunConfig, ds: &Dataset) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(&cfg.checkpoint_path())?;
    ckpt.check_vocab(&ds.vocab)?;
    Ok(ckpt)
}

pub fn eval(cfg: &RunConfig) -> Result<String> {
    let ds = prepare_dataset(cfg, cfg.identity_fraction)?;
    let ckpt = load_matching(cfg, &ds)?;
    let path = cfg.out.join(EVAL_FILE);
    claim_outputs(cfg, &[path.clone()])?;
    let csv = eval_csv(&ckpt.state, &ds, &[Split::Train, Split::Valid, Split::Test])?;
    write_output(&path, csv.as_bytes(), cfg.force)?;
    Ok(csv)
}

pub fn complexity(cfg: &RunConfig) -> Result<String> {
    let ds = prepare_dataset(cfg, cfg.identity_fraction)?;
    let ckpt = load_matching(cfg, &ds)?;
    let path = cfg.out.join(COMPLEXITY_FILE);
    claim_outputs(cfg, &[path.clone()])?;
    let csv = complexity_report(&ckpt.state, &ds)?.to_csv();
    write_output(&path, csv.as_bytes(), cfg.force)?;
    Ok(csv)
}

/// Constraint settings compared by the identity experiment.
pub fn identity_settings(base: &ModelConfig, ablations: bool) -> Result<Vec<ModelConfig>> {
    if !base.kind.is_unibi() {
        return Err(Error::Config(
            "the identity experiment trains a UniBi model".into(),
        ));
    }
    let mut out = vec![
        base.with_constraints(true, true),
        base.with_constraints(false, false),
    ];
    if ablations {
        out.push(base.with_constraints(true, false));
        out.push(base.with_constraints(false, true));
        out.push(ModelConfig::new(ModelKind::Rescal, base.dim)?.with_constraints(false, false));
    }
    Ok(out)
}

pub fn identity_exp(cfg: &RunConfig) -> Result<String> {
    let ds = prepare_dataset(cfg, Some(cfg.identity_fraction.unwrap_or(1.0)))?;
    let settings = identity_settings(&cfg.model, cfg.ablations)?;
    let mut configs = Vec::with_capacity(settings.len());
    for mc in settings {
        let mut tc = cfg.train_for(&mc)?;
        // Δ is read off the final state, so validation never picks an earlier one.
        tc.eval_every = tc.max_epochs;
        configs.push((mc, tc));
    }
    let label_path = |mc: &ModelConfig| {
        let flag = |b: bool| if b { "on" } else { "off" };
        cfg.out.join(format!(
            "identity_{}-ec-{}-rc-{}.csv",
            mc.kind,
            flag(mc.entity_constraint),
            flag(mc.relation_constraint)
        ))
    };
    let summary_path = cfg.out.join(IDENTITY_SUMMARY_FILE);
    let mut paths: Vec<PathBuf> = configs.iter().map(|(mc, _)| label_path(mc)).collect();
    paths.push(summary_path.clone());
    claim_outputs(cfg, &paths)?;

    let runs = run_identity_experiment(&ds, &configs, cfg.identity_copies, cfg.seed)?;
    let mut summary = format!("{IDENTITY_SUMMARY_HEADER}\n");
    for run in &runs {
        write_output(&label_path(&run.config), run.to_csv().as_bytes(), cfg.force)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let last = run.final_row();
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            run.label(),
            last.delta_identity,
            run.final_error_to_identity,
            opt(run.rows[0].error_between_runs),
            opt(last.error_between_runs)
        );
    }
    write_output(&summary_path, summary.as_bytes(), cfg.force)?;
    Ok(summary)
}

/// Orders whose bound is checked when no checkpoint is given.
pub const VERIFY_DIMS: [usize; 3] = [4, 8, 16];

/// Bound, necessary condition and counterexample checks; any violation is an
/// error, so the exit status reflects the outcome.
pub fn verify(cfg: &RunConfig) -> Result<String> {
    let mut out = format!("{VERIFY_HEADER}\n");
    let mut states = Vec::new();
    for &n in &VERIFY_DIMS {
        for kind in [ModelKind::UniBiO2, ModelKind::UniBiO3] {
            let mc = ModelConfig::new(kind, n)?;
            states.push((
                format!("{kind}-n{n}"),
                init_state(mc, 64, 8, cfg.seed.wrapping_add(n as u64))?,
            ));
        }
    }
    if let Some(path) = &cfg.checkpoint {
        let ck = Checkpoint::load(path)?;
        states.push((format!("checkpoint-{}", ck.header.config.kind), ck.state));
    }
    for (i, (name, state)) in states.iter().enumerate() {
        let c = state.config();
        if c.entity_constraint && c.relation_constraint {
            let rep = verify_bound(state, cfg.bound_samples, cfg.seed.wrapping_add(i as u64))?;
            let _ = writeln!(out, "bound,{name},{},{},ok", rep.samples, rep.worst);
        }
        if c.relation_constraint {
            let samples = 200;
            let worst =
                verify_necessary_condition(state, samples, cfg.seed.wrapping_add(i as u64))?;
            let _ = writeln!(out, "necessary_condition,{name},{samples},{worst},ok");
        }
    }
    let suite = counterexample_suite(cfg.matrix_samples, cfg.seed)?;
    let _ = writeln!(
        out,
        "counterexample,orders-2-6,{},{},ok",
        suite.matrices,
        suite.witnesses + suite.identities
    );
    Ok(out)
}

pub fn stats(cfg: &RunConfig) -> Result<String> {
    let raw = load_raw(cfg)?;
    let mut out = format!("{STATS_HEADER}\n");
    let _ = writeln!(out, "entities,{}", raw.vocab.n_entities());
    let _ = writeln!(out, "relations,{}", raw.vocab.n_relations());
    for split in [Split::Train, Split::Valid, Split::Test] {
        let _ = writeln!(out, "{},{}", split.name(), raw.split(split).len());
    }
    let aug = augment_reciprocal(&raw)?;
    let _ = writeln!(out, "reciprocal_relations,{}", aug.vocab.n_relations());
    let _ = writeln!(out, "reciprocal_train,{}", aug.train.len());
    out.push('\n');
    out.push_str(&relation_stats_csv(
        &relation_stats(&raw.train, &raw.vocab),
        &raw.vocab,
    ));
    Ok(out)
}
