//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use braid::data::{generate::generate_topology, read_dataset, write_dataset, DatasetStore, Topology};
use braid::error::{Error, Result};
use braid::eval::{
    dump_embeddings, fusion_eval, one_shot_eval, retrieval_eval, HeadProtocol, OneShotTask,
};
use braid::growth::{
    assemble_model, load_checkpoint, resolve_plan, run_phase, save_checkpoint, DatasetSummary,
    GrowthPlan, OrderHeuristic, PhasePolicy, PhaseRecord, StepLogLine,
};
use braid::model::AlignmentModel;

use crate::config::RunConfig;
use crate::{Command, CommonOpts};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { common, topology } => generate_cmd(&common, &topology),
        Command::Plan {
            common,
            datasets,
            modalities,
        } => plan_cmd(&common, &datasets, &modalities),
        Command::Train {
            common,
            datasets,
            topology,
            plan,
        } => train_cmd(&common, &datasets, &topology, &plan),
        Command::Grow {
            common,
            datasets,
            plan,
            checkpoint,
            phases,
        } => grow_cmd(&common, &datasets, &plan, &checkpoint, phases),
        Command::Eval {
            common,
            datasets,
            checkpoint,
            fusions,
        } => eval_cmd(&common, &datasets, &checkpoint, &fusions),
        Command::Retrieve {
            common,
            datasets,
            checkpoint,
            dataset,
            query,
            gallery,
        } => retrieve_cmd(&common, &datasets, &checkpoint, &dataset, &query, &gallery),
        Command::Dump {
            common,
            datasets,
            checkpoint,
            dataset,
        } => dump_cmd(&common, &datasets, &checkpoint, &dataset),
        Command::Report { common, run } => report_cmd(&common, &run),
    }
}

// ---- run-directory plumbing -------------------------------------------------

/// Load config, apply flag overrides (flags win), validate.
fn resolve_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_json(&read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(h) = &common.plan_heuristic {
        cfg.plan_heuristic = h.parse::<OrderHeuristic>()?;
    }
    for a in &common.ablations {
        if !cfg.ablations.contains(a) {
            cfg.ablations.push(a.clone());
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A fresh run directory under the output root, removed on failure.
struct RunDir {
    path: PathBuf,
    keep: bool,
}

impl RunDir {
    fn create(root: &Path, kind: &str, seed: u64) -> Result<Self> {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let path = root.join(format!("{kind}-{ts}-seed{seed}"));
        fs::create_dir_all(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(RunDir { path, keep: false })
    }

    fn finish(mut self) -> PathBuf {
        self.keep = true;
        self.path.clone()
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.keep {
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// The resolved-config echo every run writes next to its outputs.
fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_json(&dir.join("config.json"), cfg)
}

fn load_store(dir: &Path) -> Result<DatasetStore> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "brds"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no .brds datasets found in {}",
            dir.display()
        )));
    }
    let datasets = entries
        .iter()
        .map(|p| read_dataset(p))
        .collect::<Result<Vec<_>>>()?;
    DatasetStore::new(datasets)
}

fn load_topology(spec: &str) -> Result<Topology> {
    match spec {
        "desk-default" => Ok(Topology::desk_default(512, 128)),
        "desk-small" => Ok(Topology::desk_small(1024, 128)),
        path => Topology::from_json(&read_to_string(Path::new(path))?),
    }
}

fn load_plan(path: &Path) -> Result<GrowthPlan> {
    GrowthPlan::from_json(&read_to_string(path)?)
}

// ---- commands -----------------------------------------------------------------

fn generate_cmd(common: &CommonOpts, topology: &str) -> Result<()> {
    let cfg = resolve_config(common)?;
    let topo = load_topology(topology)?;
    let run = RunDir::create(&common.out, "generate", cfg.seed)?;
    echo_config(&run.path, &cfg)?;
    write_json(&run.path.join("topology.json"), &topo)?;
    let data_dir = run.path.join("datasets");
    fs::create_dir_all(&data_dir).map_err(|e| Error::io(data_dir.display().to_string(), e))?;
    let datasets = generate_topology(&topo, cfg.seed)?;
    for ds in &datasets {
        write_dataset(ds, &data_dir.join(format!("{}.brds", ds.id)))?;
        println!(
            "dataset {}: {} <-> {} ({} train, {} test pairs)",
            ds.id,
            ds.modality_a,
            ds.modality_b,
            ds.n_train(),
            ds.n_test()
        );
    }
    let path = run.finish();
    println!("wrote {} datasets under {}", datasets.len(), path.display());
    Ok(())
}

fn plan_cmd(common: &CommonOpts, datasets: &Path, modalities: &[String]) -> Result<()> {
    let cfg = resolve_config(common)?;
    let store = load_store(datasets)?;
    let mods: Vec<String> = if !modalities.is_empty() {
        modalities.to_vec()
    } else if !cfg.modalities.is_empty() {
        cfg.modalities.clone()
    } else {
        // Every modality seen in the datasets, in first-appearance order.
        let mut seen = Vec::new();
        for ds in store.iter() {
            for m in [&ds.modality_a, &ds.modality_b] {
                if !seen.contains(m) {
                    seen.push(m.clone());
                }
            }
        }
        seen
    };
    let summaries: Vec<DatasetSummary> = store.iter().map(DatasetSummary::from).collect();
    let plan = resolve_plan(&mods, &summaries, cfg.plan_heuristic)?;
    for (i, phase) in plan.phases.iter().enumerate() {
        let (a, b) = phase.modalities();
        match i {
            0 => println!("phase {i}: initial alignment of {a} and {b} on '{}'", phase.dataset_id),
            _ => println!("phase {i}: grow {b} through junction {a} on '{}'", phase.dataset_id),
        }
    }
    let run = RunDir::create(&common.out, "plan", cfg.seed)?;
    echo_config(&run.path, &cfg)?;
    write_file(&run.path.join("plan.json"), plan.to_json()?.as_bytes())?;
    let path = run.finish();
    println!("{} phases -> {}", plan.phases.len(), path.join("plan.json").display());
    Ok(())
}

/// Run phases [start, end) of a plan, logging steps and checkpointing after
/// every phase.
fn run_phases(
    dir: &Path,
    model: &mut AlignmentModel,
    history: &mut Vec<PhaseRecord>,
    plan: &GrowthPlan,
    cfg: &RunConfig,
    store: &DatasetStore,
    end: usize,
) -> Result<()> {
    plan.validate()?;
    let train = cfg.resolved_train();
    let start = history.len();
    for (i, phase) in plan.phases.iter().enumerate().take(end).skip(start) {
        let policy = PhasePolicy::for_phase(phase, i, &train, model)?;
        let log_path = dir.join(format!("phase_{i:04}.log.jsonl"));
        let mut log = fs::File::create(&log_path)
            .map_err(|e| Error::io(log_path.display().to_string(), e))?;
        let record = run_phase(model, phase, i, &policy, store, Some(&mut log))?;
        log.flush().map_err(|e| Error::io(log_path.display().to_string(), e))?;
        println!(
            "phase {i}: {} epochs, {} steps, final loss {}{}",
            record.epochs_run,
            record.steps_run,
            record
                .final_epoch_loss
                .map(|l| format!("{l:.4}"))
                .unwrap_or_else(|| "n/a".into()),
            if record.converged_early { " (plateau)" } else { "" }
        );
        history.push(record);
        let ck = dir.join(format!("ck_phase{:04}.brcp", i));
        let hash = save_checkpoint(model, history, cfg.seed, &ck)?;
        println!("checkpoint {} (fnv64 {hash:016x})", ck.display());
    }
    Ok(())
}

fn train_cmd(common: &CommonOpts, datasets: &Path, topology: &Path, plan: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    let store = load_store(datasets)?;
    let topo = Topology::from_json(&read_to_string(topology)?)?;
    let plan = load_plan(plan)?;
    let run = RunDir::create(&common.out, "train", cfg.seed)?;
    echo_config(&run.path, &cfg)?;
    let mut model = assemble_model(&topo, &cfg.dims, cfg.seed)?;
    let mut history = Vec::new();
    run_phases(&run.path, &mut model, &mut history, &plan, &cfg, &store, 1)?;
    let path = run.finish();
    println!("initial phase complete under {}", path.display());
    Ok(())
}

fn grow_cmd(
    common: &CommonOpts,
    datasets: &Path,
    plan: &Path,
    checkpoint: &Path,
    phases: Option<usize>,
) -> Result<()> {
    let cfg = resolve_config(common)?;
    let store = load_store(datasets)?;
    let plan = load_plan(plan)?;
    let loaded = load_checkpoint(checkpoint)?;
    let mut model = loaded.model;
    let mut history = loaded.history;
    if history.is_empty() {
        return Err(Error::InvalidConfig(
            "grow needs a checkpoint with at least the initial phase completed".into(),
        ));
    }
    let end = match phases {
        Some(n) => (history.len() + n).min(plan.phases.len()),
        None => plan.phases.len(),
    };
    let run = RunDir::create(&common.out, "grow", cfg.seed)?;
    echo_config(&run.path, &cfg)?;
    run_phases(&run.path, &mut model, &mut history, &plan, &cfg, &store, end)?;
    let path = run.finish();
    println!(
        "grown to {} aligned modalities under {}",
        model.aligned.len(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport {
    seed: u64,
    checkpoint_fnv64: String,
    protocol: HeadProtocol,
    tasks: Vec<TaskMetrics>,
}

#[derive(Serialize)]
struct TaskMetrics {
    task_id: String,
    dataset: String,
    modalities: Vec<String>,
    accuracy_mean: f64,
    accuracy_sd: f64,
    per_draw: Vec<f64>,
}

fn infer_num_classes(store: &DatasetStore) -> usize {
    store
        .iter()
        .flat_map(|d| d.test_labels.iter().chain(d.train_labels.iter()))
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
}

fn eval_cmd(
    common: &CommonOpts,
    datasets: &Path,
    checkpoint: &Path,
    fusions: &[String],
) -> Result<()> {
    let cfg = resolve_config(common)?;
    let store = load_store(datasets)?;
    let ck_bytes = fs::read(checkpoint).map_err(|e| Error::io(checkpoint.display().to_string(), e))?;
    let ck_hash = braid::hash::fnv64(&ck_bytes);
    let loaded = braid::growth::checkpoint_from_bytes(&ck_bytes, &checkpoint.display().to_string())?;
    let model = loaded.model;
    let num_classes = infer_num_classes(&store);
    let protocol = HeadProtocol::default();
    let mut tasks = Vec::new();

    // Singular tasks: every aligned modality on every dataset with a test
    // split that carries it.
    for ds in store.iter() {
        if ds.n_test() == 0 {
            continue;
        }
        for modality in [&ds.modality_a, &ds.modality_b] {
            if !model.is_aligned(modality) {
                continue;
            }
            let task = OneShotTask::from_dataset(ds, &[modality], num_classes)?;
            let outcome = one_shot_eval(&model, &task, cfg.seed, &protocol)?;
            tasks.push(TaskMetrics {
                task_id: format!("{}@{}", modality, ds.id),
                dataset: ds.id.clone(),
                modalities: vec![modality.clone()],
                accuracy_mean: outcome.mean,
                accuracy_sd: outcome.sd,
                per_draw: outcome.per_draw,
            });
        }
    }

    // Requested fusions: "a,b@dataset".
    for spec in fusions {
        let (mods_part, ds_id) = spec.split_once('@').ok_or_else(|| {
            Error::InvalidConfig(format!("fusion '{spec}' is not of the form a,b@dataset"))
        })?;
        let mods: Vec<&str> = mods_part.split(',').collect();
        let ds = store.get(ds_id)?;
        let task = OneShotTask::from_dataset(ds, &mods, num_classes)?;
        let outcome = fusion_eval(&model, &task, cfg.seed, &protocol)?;
        tasks.push(TaskMetrics {
            task_id: format!("{}@{}", mods.join("+"), ds.id),
            dataset: ds.id.clone(),
            modalities: mods.iter().map(|s| s.to_string()).collect(),
            accuracy_mean: outcome.mean,
            accuracy_sd: outcome.sd,
            per_draw: outcome.per_draw,
        });
    }

    for t in &tasks {
        println!("{}: {:.4} ± {:.4}", t.task_id, t.accuracy_mean, t.accuracy_sd);
    }
    let report = MetricsReport {
        seed: cfg.seed,
        checkpoint_fnv64: format!("{ck_hash:016x}"),
        protocol,
        tasks,
    };
    let run = RunDir::create(&common.out, "eval", cfg.seed)?;
    echo_config(&run.path, &cfg)?;
    write_json(&run.path.join("metrics.json"), &report)?;
    let path = run.finish();
    println!("metrics -> {}", path.join("metrics.json").display());
    Ok(())
}

fn retrieve_cmd(
    common: &CommonOpts,
    datasets: &Path,
    checkpoint: &Path,
    dataset: &str,
    query: &str,
    gallery: &str,
) -> Result<()> {
    let cfg = resolve_config(common)?;
    let store = load_store(datasets)?;
    let loaded = load_checkpoint(checkpoint)?;
    let ds = store.get(dataset)?;
    let report = retrieval_eval(&loaded.model, query, gallery, ds)?;
    println!(
        "{} -> {} (gallery {}): recall@1 {:.4}, recall@5 {}",
        report.query_modality,
        report.gallery_modality,
        report.gallery_size,
        report.recall_at_1,
        report
            .recall_at_5
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    let run = RunDir::create(&common.out, "retrieve", cfg.seed)?;
    echo_config(&run.path, &cfg)?;
    write_json(&run.path.join("retrieval.json"), &report)?;
    run.finish();
    Ok(())
}

fn dump_cmd(common: &CommonOpts, datasets: &Path, checkpoint: &Path, dataset: &str) -> Result<()> {
    let cfg = resolve_config(common)?;
    let store = load_store(datasets)?;
    let loaded = load_checkpoint(checkpoint)?;
    let ds = store.get(dataset)?;
    let run = RunDir::create(&common.out, "dump", cfg.seed)?;
    echo_config(&run.path, &cfg)?;
    let out = run.path.join("embeddings.jsonl");
    let n = dump_embeddings(&loaded.model, ds, &out)?;
    let path = run.finish();
    println!("{n} records -> {}", path.join("embeddings.jsonl").display());
    Ok(())
}

fn report_cmd(common: &CommonOpts, run_dir: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    let run = RunDir::create(&common.out, "report", cfg.seed)?;
    echo_config(&run.path, &cfg)?;

    // Per-step weight curves from phase logs: plot-ready columns.
    let mut log_files: Vec<PathBuf> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".log.jsonl")))
        .collect();
    log_files.sort();
    let mut weights = String::from("phase\tepoch\tstep\tloss_total\tw_a_from_b\tw_b_from_a\tgrad_norm_a_from_b\tgrad_norm_b_from_a\n");
    let mut per_epoch: BTreeMap<(usize, usize), (f64, f64, usize)> = BTreeMap::new();
    for file in &log_files {
        for line in read_to_string(file)?.lines() {
            let entry: StepLogLine = serde_json::from_str(line)?;
            weights.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                entry.phase,
                entry.epoch,
                entry.step,
                entry.report.loss_total,
                entry.report.w_a_from_b,
                entry.report.w_b_from_a,
                entry.report.grad_norm_a_from_b.map(|v| v.to_string()).unwrap_or_default(),
                entry.report.grad_norm_b_from_a.map(|v| v.to_string()).unwrap_or_default(),
            ));
            let slot = per_epoch.entry((entry.phase, entry.epoch)).or_insert((0.0, 0.0, 0));
            slot.0 += entry.report.w_a_from_b;
            slot.1 += entry.report.loss_total;
            slot.2 += 1;
        }
    }
    write_file(&run.path.join("weights.tsv"), weights.as_bytes())?;
    let mut epochs = String::from("phase\tepoch\tmean_w_a_from_b\tmean_loss\n");
    for ((phase, epoch), (w, l, n)) in &per_epoch {
        epochs.push_str(&format!(
            "{phase}\t{epoch}\t{}\t{}\n",
            w / *n as f64,
            l / *n as f64
        ));
    }
    write_file(&run.path.join("weights_epoch.tsv"), epochs.as_bytes())?;

    // Accuracy table from metrics files.
    let mut accuracy = String::from("task\tdataset\taccuracy_mean\taccuracy_sd\n");
    let mut metric_files: Vec<PathBuf> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("metrics")))
        .collect();
    metric_files.sort();
    for file in &metric_files {
        let v: serde_json::Value = serde_json::from_str(&read_to_string(file)?)?;
        if let Some(tasks) = v["tasks"].as_array() {
            for t in tasks {
                accuracy.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    t["task_id"].as_str().unwrap_or("?"),
                    t["dataset"].as_str().unwrap_or("?"),
                    t["accuracy_mean"],
                    t["accuracy_sd"],
                ));
            }
        }
    }
    write_file(&run.path.join("accuracy.tsv"), accuracy.as_bytes())?;

    // Forgetting drops from the newest checkpoint's history.
    let mut checkpoints: Vec<PathBuf> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "brcp"))
        .collect();
    checkpoints.sort();
    let mut forgetting = String::from("phase\tdataset\tpre_recall1\tpost_recall1\tdrop\n");
    if let Some(last) = checkpoints.last() {
        let loaded = load_checkpoint(last)?;
        for record in &loaded.history {
            for (ds, pre) in &record.pre_retrieval {
                let post = record.post_retrieval.get(ds).copied().unwrap_or(f64::NAN);
                forgetting.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    record.index,
                    ds,
                    pre,
                    post,
                    pre - post
                ));
            }
        }
    }
    write_file(&run.path.join("forgetting.tsv"), forgetting.as_bytes())?;

    let path = run.finish();
    println!(
        "report tables (weights, weights_epoch, accuracy, forgetting) -> {}",
        path.display()
    );
    Ok(())
}
