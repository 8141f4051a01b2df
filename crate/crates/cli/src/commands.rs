use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use socialrec_core::data::{
    write_file, Dataset, Split, DEFAULT_RATIOS, INTERACTIONS_FILE, ITEMS_MAP, META_FILE,
    SOCIAL_FILE, USERS_MAP,
};
use socialrec_core::error::{Error, Result};
use socialrec_core::graph::{build_correlative_graph, CorrelativeGraph, CORR_GRAPH_FILE};
use socialrec_core::model::{
    export_attention, forward, Checkpoint, CheckpointMeta, Graphs, Target,
};
use socialrec_core::tensor::Tape;
use socialrec_core::train::{
    self, evaluate, stream_rng, LOSS_CURVE_FILE, REPORT_FILE, TIMING_FILE,
};

use crate::run_config::RunConfig;

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.tsv";
const LOCK_FILE: &str = ".lock";

/// Exclusive use of a workdir for the lifetime of the guard.
pub struct WorkdirLock(PathBuf);

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self> {
        let path = workdir.join(LOCK_FILE);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::Validation(format!(
                    "{} is locked by another command (delete {} if no command is running)",
                    workdir.display(),
                    path.display()
                )),
                _ => Error::io(format!("creating {}", path.display()), e),
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(WorkdirLock(path))
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn require_prepared(workdir: &Path) -> Result<()> {
    if workdir.join(META_FILE).is_file() && workdir.join(CORR_GRAPH_FILE).is_file() {
        return Ok(());
    }
    Err(Error::Validation(format!(
        "{} holds no prepared data; run `socialrec prepare` with this workdir first",
        workdir.display()
    )))
}

fn load_prepared(rc: &RunConfig) -> Result<(Dataset, CorrelativeGraph)> {
    require_prepared(&rc.workdir)?;
    let dataset = Dataset::load(&rc.workdir)?;
    let mut corr = CorrelativeGraph::load(&rc.workdir.join(CORR_GRAPH_FILE), dataset.n_items)?;
    if corr.k != rc.train.corr_k {
        eprintln!(
            "note: prepared graph has k={}, rebuilding in memory with corr_k={}",
            corr.k, rc.train.corr_k
        );
        corr = build_correlative_graph(&dataset.rating_matrix(), rc.train.corr_k)?;
    }
    Ok((dataset, corr))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

pub fn prepare(rc: &RunConfig, force: bool) -> Result<()> {
    rc.train.validate()?;
    let missing = |what: &str, flag: &str| {
        Error::Validation(format!(
            "prepare needs the {what} file (--{flag} or {what}_path)"
        ))
    };
    let interactions = rc
        .interactions_path
        .as_deref()
        .ok_or_else(|| missing("interactions", "interactions"))?;
    let social = rc
        .social_path
        .as_deref()
        .ok_or_else(|| missing("social", "social"))?;

    let workdir = &rc.workdir;
    let outputs = [
        META_FILE,
        INTERACTIONS_FILE,
        SOCIAL_FILE,
        USERS_MAP,
        ITEMS_MAP,
        CORR_GRAPH_FILE,
        EFFECTIVE_CONFIG_FILE,
    ];
    for out in outputs {
        let target = workdir.join(out);
        if same_file(&target, interactions) || same_file(&target, social) {
            return Err(Error::Validation(format!(
                "raw input {} would be overwritten; choose another workdir",
                target.display()
            )));
        }
    }
    if workdir.exists() {
        let mut entries = fs::read_dir(workdir)
            .map_err(|e| Error::io(format!("reading {}", workdir.display()), e))?;
        if entries.next().is_some() && !force {
            return Err(Error::Validation(format!(
                "workdir {} is not empty; pass --force to overwrite",
                workdir.display()
            )));
        }
    }
    fs::create_dir_all(workdir)
        .map_err(|e| Error::io(format!("creating {}", workdir.display()), e))?;
    let _lock = WorkdirLock::acquire(workdir)?;
    for stale in [CHECKPOINT_FILE, REPORT_FILE, LOSS_CURVE_FILE, TIMING_FILE] {
        let _ = fs::remove_file(workdir.join(stale));
    }

    let dataset = Dataset::from_files(interactions, social, rc.scale(), DEFAULT_RATIOS)?;
    dataset.export(workdir)?;
    let corr = build_correlative_graph(&dataset.rating_matrix(), rc.train.corr_k)?;
    corr.export(&workdir.join(CORR_GRAPH_FILE))?;
    write_file(&workdir.join(EFFECTIVE_CONFIG_FILE), rc.to_kv().as_bytes())?;

    let st = dataset.stats();
    let [tr, va, te] = dataset.split_sizes();
    println!("users\t{}", st.users);
    println!("items\t{}", st.items);
    println!("events\t{}", st.events);
    println!("social_links\t{}", st.social_links);
    println!("train/val/test\t{tr}/{va}/{te}");
    println!("corr_edges\t{}", corr.num_edges());
    Ok(())
}

pub fn train(rc: &RunConfig) -> Result<()> {
    let cfg = &rc.train;
    cfg.validate()?;
    require_prepared(&rc.workdir)?;
    let _lock = WorkdirLock::acquire(&rc.workdir)?;
    let (dataset, corr) = load_prepared(rc)?;
    write_file(
        &rc.workdir.join(EFFECTIVE_CONFIG_FILE),
        rc.to_kv().as_bytes(),
    )?;

    let out = train::train_with(&dataset, &corr, cfg, |r| {
        eprintln!(
            "epoch {}\tloss {:.6}\tval {:.6}",
            r.epoch, r.train_loss, r.val_metric
        )
    })?;
    let ckpt = Checkpoint {
        meta: CheckpointMeta {
            dims: out.params.dims,
            rating_scale: dataset.rating_scale.clone(),
            mode: cfg.mode,
            ablation: cfg.ablation,
            seed: cfg.seed,
        },
        params: out.params,
    };
    ckpt.save(&rc.workdir.join(CHECKPOINT_FILE))?;

    let mut report = evaluate(&ckpt.params, &dataset, &corr, cfg, Split::Test)?;
    report.loss_curve = out.loss_curve;
    report.epoch_seconds = out.epoch_seconds;
    report.write_all(&rc.workdir)?;
    println!("best_epoch\t{}", out.best_epoch);
    for (name, v) in &report.metrics {
        println!("{name}\t{v}");
    }
    Ok(())
}

fn check_matches(rc: &RunConfig, meta: &CheckpointMeta) -> Result<()> {
    let cfg = &rc.train;
    let mismatch = |what: &str, ckpt: String, conf: String| {
        Err(Error::Validation(format!(
            "{what} mismatch: checkpoint has {ckpt}, config has {conf}"
        )))
    };
    if meta.mode != cfg.mode {
        return mismatch("mode", meta.mode.to_string(), cfg.mode.to_string());
    }
    if meta.ablation != cfg.ablation {
        return mismatch(
            "ablation",
            format!("{:?}", meta.ablation),
            format!("{:?}", cfg.ablation),
        );
    }
    if meta.dims.dim != cfg.dim || meta.dims.lstm_layers != cfg.lstm_layers {
        return mismatch(
            "d/lstm_layers",
            format!("{}/{}", meta.dims.dim, meta.dims.lstm_layers),
            format!("{}/{}", cfg.dim, cfg.lstm_layers),
        );
    }
    Ok(())
}

fn load_checkpoint(rc: &RunConfig, path: Option<&Path>) -> Result<Checkpoint> {
    let path = path.map_or_else(|| rc.workdir.join(CHECKPOINT_FILE), Path::to_path_buf);
    if !path.is_file() {
        return Err(Error::Validation(format!(
            "no checkpoint at {}; run `socialrec train` first",
            path.display()
        )));
    }
    Checkpoint::load(&path)
}

pub fn evaluate_cmd(rc: &RunConfig, checkpoint: Option<&Path>, split: Split) -> Result<()> {
    rc.train.validate()?;
    require_prepared(&rc.workdir)?;
    let ckpt = load_checkpoint(rc, checkpoint)?;
    check_matches(rc, &ckpt.meta)?;
    let _lock = WorkdirLock::acquire(&rc.workdir)?;
    let (dataset, corr) = load_prepared(rc)?;
    let report = evaluate(&ckpt.params, &dataset, &corr, &rc.train, split)?;
    report.write_report(&rc.workdir.join(format!("report_{split}.tsv")))?;
    if report.skipped > 0 {
        eprintln!(
            "warning: skipped {} events with no candidate negatives",
            report.skipped
        );
    }
    for (name, v) in &report.metrics {
        println!("{name}\t{v}");
    }
    Ok(())
}

pub fn export_attention_cmd(
    rc: &RunConfig,
    checkpoint: Option<&Path>,
    user: usize,
    item: usize,
    out: Option<&Path>,
) -> Result<PathBuf> {
    require_prepared(&rc.workdir)?;
    let ckpt = load_checkpoint(rc, checkpoint)?;
    let _lock = WorkdirLock::acquire(&rc.workdir)?;
    let (dataset, corr) = load_prepared(rc)?;
    if user >= dataset.n_users || item >= dataset.n_items {
        return Err(Error::Lookup(format!(
            "pair ({user}, {item}) is unknown; valid users are 0..={}, valid items are 0..={}",
            dataset.n_users - 1,
            dataset.n_items - 1
        )));
    }
    let mut cfg = rc.train.clone();
    cfg.mode = ckpt.meta.mode;
    cfg.ablation = ckpt.meta.ablation;
    let mut fc = cfg.forward_config(false);
    fc.record_trace = true;
    let target = Target {
        user,
        item,
        time: i64::MAX,
    };
    let mut tape = Tape::new();
    let mut rng = stream_rng(cfg.seed, &[]);
    let res = forward(
        &mut tape,
        &ckpt.params,
        &Graphs::new(&dataset, &corr),
        &[target],
        &fc,
        &mut rng,
    )?;
    let path = out.map_or_else(
        || rc.workdir.join(format!("attention_u{user}_i{item}.tsv")),
        Path::to_path_buf,
    );
    export_attention(&res.trace, &path)?;
    println!("prediction\t{}", tape.value(res.predictions).data()[0]);
    println!("trace\t{}", path.display());
    Ok(path)
}
