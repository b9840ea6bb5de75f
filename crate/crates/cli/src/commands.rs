//! The five subcommands. Each validates its inputs before writing anything.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;
use watchdog_core::data::{
    make_train_split, normalize, parse_idx_images, read_maybe_gzip, Dataset, Provenance, RawImages, Role,
};
use watchdog_core::evaluation::{roc_svg, threshold_grid, unrecognized_svg, RocCurve, UnrecognizedTable};
use watchdog_core::experiment::{average_seeds, evaluate_seed, train_autoencoder, train_classifier, ExperimentData};
use watchdog_core::models::{encode_model, load_model_as, ModelKind};
use watchdog_core::watchdog::{
    calibrate_threshold, predictions, records_to_csv, Classifier, ScoreSummary, ThresholdPolicy, WatchdogModel,
};
use watchdog_core::{Network32, Tensor32};

use crate::config::Resolved;
use crate::failure::{Context, Failure, EXIT_OK, EXIT_REJECT};
use crate::manifest::{sha256_hex, Manifest, Outputs, WatchdogFile};

pub const AUTOENCODER_FILE: &str = "autoencoder.wdnn";
pub const CLASSIFIER_FILE: &str = "classifier.wdnn";
pub const WATCHDOG_FILE: &str = "watchdog.json";

/// Shared state of one invocation.
pub struct Run {
    pub resolved: Resolved,
    /// Seeds processed concurrently by `train` and `evaluate`.
    pub parallel_seeds: usize,
    started: Instant,
}

impl Run {
    pub fn new(resolved: Resolved, parallel_seeds: usize) -> Self {
        Self { resolved, parallel_seeds: parallel_seeds.max(1), started: Instant::now() }
    }

    fn seeds(&self) -> &[u64] {
        &self.resolved.config.seeds
    }

    /// The seed used by single-model commands: the first configured one.
    fn primary_seed(&self) -> u64 {
        self.seeds()[0]
    }

    fn seed_rel(seed: u64, file: &str) -> PathBuf {
        PathBuf::from(format!("seed-{seed}")).join(file)
    }

    fn model_path(&self, seed: u64, file: &str) -> PathBuf {
        self.resolved.out_dir.join(Self::seed_rel(seed, file))
    }

    fn finish(&self, command: &str, outputs: Outputs, seed_seconds: Vec<(u64, f64)>) -> Result<(), Failure> {
        let manifest = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seeds: self.seeds().to_vec(),
            config: self.resolved.config.to_toml(),
            config_file_sha256: (!self.resolved.source.is_empty()).then(|| sha256_hex(self.resolved.source.as_bytes())),
            seconds: self.started.elapsed().as_secs_f64(),
            seed_seconds,
            files: outputs.into_files(),
        };
        let path = manifest.write(&self.resolved.out_dir)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    /// τ from `--tau` or the config, else from the seed's `watchdog.json`.
    fn known_tau(&self, seed: u64) -> Result<Option<f64>, Failure> {
        if let Some(tau) = self.resolved.config.watchdog.tau {
            return Ok(Some(tau));
        }
        let path = self.model_path(seed, WATCHDOG_FILE);
        if path.exists() {
            return Ok(Some(WatchdogFile::read(&path)?.tau));
        }
        Ok(None)
    }

    fn load_experiment(&self) -> Result<ExperimentData<f32>, Failure> {
        self.resolved.require_data()?;
        eprintln!("loading data");
        ExperimentData::load(&self.resolved.paths, self.resolved.config.data.split_seed).context("loading data")
    }

    fn load_validation(&self) -> Result<Dataset<f32>, Failure> {
        let p = &self.resolved.paths;
        require_files(&[&p.digit_train_images, &p.digit_train_labels])?;
        let full =
            Dataset::load(&p.digit_train_images, Some(&p.digit_train_labels), Provenance::InDistribution, Role::Train)
                .context("loading digit training set")?;
        Ok(make_train_split(&full, self.resolved.config.data.split_seed)?.1)
    }

    fn load_model(&self, seed: u64, file: &str, kind: ModelKind) -> Result<Network32, Failure> {
        let path = self.model_path(seed, file);
        require_files(&[&path])?;
        load_model_as(&path, kind).context(format!("loading {}", path.display()))
    }
}

fn require_files(paths: &[&Path]) -> Result<(), Failure> {
    let missing: Vec<String> = paths.iter().filter(|p| !p.exists()).map(|p| p.display().to_string()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Failure::usage(format!("missing files: {}", missing.join(", "))))
    }
}

/// Runs `job` for every seed on up to `workers` threads; results come back in seed
/// order, and the first failing seed's error wins.
fn for_each_seed<R: Send>(
    seeds: &[u64],
    workers: usize,
    job: impl Fn(u64) -> Result<R, Failure> + Sync,
) -> Result<Vec<R>, Failure> {
    let workers = workers.clamp(1, seeds.len().max(1));
    if workers == 1 {
        return seeds.iter().map(|&s| job(s)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R, Failure>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let result = job(seed);
                slots.lock().expect("no worker panicked holding the lock")[i] = Some(result);
            });
        }
    });
    slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every seed ran")).collect()
}

fn calibrate_on(
    autoencoder: Network32,
    validation: &Dataset<f32>,
    run: &Run,
    seed: u64,
) -> Result<(WatchdogModel<f32>, WatchdogFile), Failure> {
    let settings = &run.resolved.settings;
    let open = WatchdogModel::new(autoencoder, settings.score_definition, 0.0)?;
    let scores = open.score_dataset(validation)?.scores();
    let tau = calibrate_threshold(&scores, settings.policy)?;
    let model = open.with_threshold(tau)?;
    let accepted = scores.iter().filter(|&&s| model.accepts(s)).count();
    let file = WatchdogFile {
        seed,
        score_definition: settings.score_definition.as_str().into(),
        tau,
        max_score: model.max_score(),
        policy: match settings.policy {
            ThresholdPolicy::TargetTpr(_) => "target_tpr",
            ThresholdPolicy::Fixed(_) => "fixed",
        }
        .into(),
        target_tpr: match settings.policy {
            ThresholdPolicy::TargetTpr(t) => Some(t),
            ThresholdPolicy::Fixed(_) => None,
        },
        validation_count: scores.len(),
        validation_acceptance: accepted as f64 / scores.len() as f64,
    };
    Ok((model, file))
}

/// Trains an autoencoder and a classifier per seed, then calibrates τ.
pub fn train(run: &Run) -> Result<u8, Failure> {
    let data = run.load_experiment()?;
    let settings = &run.resolved.settings;
    let out_dir = run.resolved.out_dir.clone();
    let results = for_each_seed(run.seeds(), run.parallel_seeds, |seed| {
        let started = Instant::now();
        let mut out = Outputs::new(&out_dir);
        let log = |what: &'static str| {
            move |e: &watchdog_core::models::EpochStats| {
                let acc = e.val_accuracy.map(|a| format!(", val accuracy {a:.4}")).unwrap_or_default();
                eprintln!(
                    "  {what} seed {seed} epoch {}: train {:.5}, val {:.5}{acc} ({:.0} s)",
                    e.epoch, e.train_loss, e.val_loss, e.seconds
                );
            }
        };
        eprintln!("training autoencoder, seed {seed}");
        let ae = train_autoencoder(&data, settings, seed, log("autoencoder")).context(format!("seed {seed}"))?;
        out.write(Run::seed_rel(seed, AUTOENCODER_FILE), &encode_model(&ae.network, ModelKind::Autoencoder))?;
        out.write(Run::seed_rel(seed, "autoencoder_report.csv"), ae.report.to_csv().as_bytes())?;
        eprintln!("training classifier, seed {seed}");
        let clf = train_classifier(&data, settings, seed, log("classifier")).context(format!("seed {seed}"))?;
        out.write(Run::seed_rel(seed, CLASSIFIER_FILE), &encode_model(&clf.network, ModelKind::Classifier))?;
        out.write(Run::seed_rel(seed, "classifier_report.csv"), clf.report.to_csv().as_bytes())?;
        let (_, wd) = calibrate_on(ae.network, &data.validation, run, seed)?;
        out.write(Run::seed_rel(seed, WATCHDOG_FILE), wd.to_json().as_bytes())?;
        println!("seed {seed}: trained in {:.0} s, tau {:.4} ({})", started.elapsed().as_secs_f64(), wd.tau, wd.policy);
        Ok((seed, out, started.elapsed().as_secs_f64()))
    })?;
    let mut all = Outputs::new(&out_dir);
    let mut timings = Vec::new();
    for (seed, out, secs) in results {
        all.merge(out);
        timings.push((seed, secs));
    }
    run.finish("train", all, timings)?;
    Ok(EXIT_OK)
}

/// Recomputes τ for every seed from its saved autoencoder.
pub fn calibrate(run: &Run) -> Result<u8, Failure> {
    for &seed in run.seeds() {
        require_files(&[&run.model_path(seed, AUTOENCODER_FILE)])?;
    }
    let validation = run.load_validation()?;
    let mut out = Outputs::new(&run.resolved.out_dir);
    let mut timings = Vec::new();
    for &seed in run.seeds() {
        let started = Instant::now();
        let ae = run.load_model(seed, AUTOENCODER_FILE, ModelKind::Autoencoder)?;
        let (_, wd) = calibrate_on(ae, &validation, run, seed)?;
        out.write(Run::seed_rel(seed, WATCHDOG_FILE), wd.to_json().as_bytes())?;
        println!(
            "seed {seed}: tau {:.4} ({}), accepts {:.2}% of {} validation digits",
            wd.tau,
            wd.policy,
            100.0 * wd.validation_acceptance,
            wd.validation_count
        );
        timings.push((seed, started.elapsed().as_secs_f64()));
    }
    run.finish("calibrate", out, timings)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NamedSet {
    DigitTest,
    FashionTest,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProvenanceArg {
    In,
    Out,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Autoencoder file [default: <out>/seed-<seed>/autoencoder.wdnn]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// One of the configured datasets
    #[arg(long, value_enum, conflicts_with = "images")]
    pub dataset: Option<NamedSet>,
    /// IDX image file (optionally gzipped) to score instead of a named dataset
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file matching --images
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// Provenance recorded for --images
    #[arg(long, value_enum, default_value = "in", requires = "images")]
    pub provenance: ProvenanceArg,
    /// Scores CSV [default: <out>/seed-<seed>/scores-<name>.csv]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Scores a dataset with an autoencoder and writes one CSV row per image.
pub fn score(run: &Run, args: &ScoreArgs) -> Result<u8, Failure> {
    let seed = run.primary_seed();
    let model_path = args.model.clone().unwrap_or_else(|| run.model_path(seed, AUTOENCODER_FILE));
    require_files(&[&model_path])?;
    let p = &run.resolved.paths;
    let (name, data) = match (args.dataset, &args.images) {
        (Some(NamedSet::DigitTest), None) => {
            require_files(&[&p.digit_test_images, &p.digit_test_labels])?;
            let d = Dataset::load(
                &p.digit_test_images,
                Some(&p.digit_test_labels),
                Provenance::InDistribution,
                Role::Evaluation,
            );
            ("digit-test".to_string(), d.context("loading digit test set")?)
        }
        (Some(NamedSet::FashionTest), None) => {
            require_files(&[&p.fashion_test_images, &p.fashion_test_labels])?;
            let d = Dataset::load(
                &p.fashion_test_images,
                Some(&p.fashion_test_labels),
                Provenance::OutOfDistribution,
                Role::Evaluation,
            );
            ("fashion-test".to_string(), d.context("loading fashion test set")?)
        }
        (Some(NamedSet::Validation), None) => ("validation".to_string(), run.load_validation()?),
        (None, Some(images)) => {
            let mut files = vec![images.as_path()];
            files.extend(args.labels.as_deref());
            require_files(&files)?;
            let provenance = match args.provenance {
                ProvenanceArg::In => Provenance::InDistribution,
                ProvenanceArg::Out => Provenance::OutOfDistribution,
            };
            let d = Dataset::load(images, args.labels.as_deref(), provenance, Role::Evaluation)
                .context(format!("loading {}", images.display()))?;
            let stem = images.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (stem.trim_end_matches(".gz").to_string(), d)
        }
        _ => return Err(Failure::usage("score needs exactly one of --dataset or --images")),
    };
    if data.is_empty() {
        return Err(Failure::usage(format!("dataset {name} is empty")));
    }
    let ae = load_model_as::<f32>(&model_path, ModelKind::Autoencoder)
        .context(format!("loading {}", model_path.display()))?;
    let tau = run.known_tau(seed)?;
    let model = WatchdogModel::new(ae, run.resolved.settings.score_definition, 0.0)?;
    let model = match tau {
        Some(t) => model.with_threshold(t)?,
        None => model,
    };
    let scored = model.score_dataset(&data)?;
    let mut csv = String::from(if tau.is_some() {
        "index,score,provenance,label,accepted\n"
    } else {
        "index,score,provenance,label\n"
    });
    for r in &scored.records {
        let label = r.label.map(|l| l.to_string()).unwrap_or_default();
        let _ = write!(csv, "{},{},{},{}", r.index, r.score, r.provenance.as_str(), label);
        if tau.is_some() {
            let _ = write!(csv, ",{}", model.accepts(r.score));
        }
        csv.push('\n');
    }
    let mut out = Outputs::new(&run.resolved.out_dir);
    let path = match &args.output {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).context(format!("creating {}", parent.display()))?;
            }
            watchdog_core::models::write_atomic(path, csv.as_bytes()).context(format!("writing {}", path.display()))?;
            out.record(path, csv.as_bytes());
            path.clone()
        }
        None => out.write(Run::seed_rel(seed, &format!("scores-{name}.csv")), csv.as_bytes())?,
    };
    let s = scored.summary.expect("non-empty dataset has a summary");
    println!("{name}: {}", describe(&s));
    if let Some(t) = tau {
        let accepted = scored.records.iter().filter(|r| model.accepts(r.score)).count();
        println!("tau {t:.4}: {accepted} of {} accepted", s.count);
    }
    eprintln!("wrote {}", path.display());
    run.finish("score", out, Vec::new())?;
    Ok(EXIT_OK)
}

fn describe(s: &ScoreSummary) -> String {
    format!(
        "n {} mean {:.4} min {:.4} p05 {:.4} median {:.4} p95 {:.4} max {:.4}",
        s.count, s.mean, s.min, s.p05, s.median, s.p95, s.max
    )
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    tau: f64,
    digit_mean_score: f64,
    fashion_mean_score: f64,
    digit_acceptance: f64,
    fashion_acceptance: f64,
    auc_watchdog: f64,
    auc_unguarded_digits: f64,
    auc_unguarded_mixed: f64,
    auc_guarded_mixed: f64,
}

#[derive(Debug, Serialize)]
struct EvaluationSummary {
    seeds: Vec<SeedSummary>,
    grid: usize,
    averaged_auc_watchdog: f64,
    averaged_auc_unguarded_digits: f64,
    averaged_auc_unguarded_mixed: f64,
    averaged_auc_guarded_mixed: f64,
}

const CURVES: [(&str, &str); 4] = [
    ("watchdog", "roc_watchdog_digits-vs-fashion"),
    ("unguarded_in", "roc_classifier_digits_unguarded"),
    ("unguarded_mixed", "roc_classifier_mixed_unguarded"),
    ("guarded_mixed", "roc_classifier_mixed_guarded"),
];

/// Evaluates every seed's saved pair, averages curves across seeds and draws figures.
pub fn evaluate(run: &Run) -> Result<u8, Failure> {
    for &seed in run.seeds() {
        require_files(&[&run.model_path(seed, AUTOENCODER_FILE), &run.model_path(seed, CLASSIFIER_FILE)])?;
    }
    let data = run.load_experiment()?;
    let settings = &run.resolved.settings;
    let out_dir = run.resolved.out_dir.clone();
    let results = for_each_seed(run.seeds(), run.parallel_seeds, |seed| {
        let started = Instant::now();
        let ae = run.load_model(seed, AUTOENCODER_FILE, ModelKind::Autoencoder)?;
        let clf = run.load_model(seed, CLASSIFIER_FILE, ModelKind::Classifier)?;
        eprintln!("evaluating seed {seed}");
        let (model, eval) = evaluate_seed(&data, &ae, &clf, settings, seed).context(format!("seed {seed}"))?;
        let mut out = Outputs::new(&out_dir);
        let curves = [&eval.watchdog, &eval.unguarded_in, &eval.unguarded_mixed, &eval.guarded_mixed];
        for ((_, stem), curve) in CURVES.iter().zip(curves) {
            out.write(Run::seed_rel(seed, &format!("{stem}_seed-{seed}.csv")), curve.to_csv().as_bytes())?;
        }
        out.write(Run::seed_rel(seed, &format!("unrecognized_seed-{seed}.csv")), eval.table.to_csv().as_bytes())?;
        out.write(
            Run::seed_rel(seed, &format!("records_mixed_seed-{seed}.csv")),
            records_to_csv(&eval.records).as_bytes(),
        )?;
        let secs = started.elapsed().as_secs_f64();
        Ok((model, eval, out, secs))
    })?;

    let mut all = Outputs::new(&out_dir);
    let mut timings = Vec::new();
    let mut evals = Vec::new();
    let mut max_score = 0.0f64;
    for (model, eval, out, secs) in results {
        all.merge(out);
        timings.push((eval.seed, secs));
        max_score = max_score.max(model.max_score());
        evals.push(eval);
    }
    let avg = average_seeds(&evals, settings.grid)?;
    let averaged = [&avg.watchdog, &avg.unguarded_in, &avg.unguarded_mixed, &avg.guarded_mixed];
    for ((_, stem), curve) in CURVES.iter().zip(averaged) {
        all.write(format!("averaged/{stem}_averaged.csv"), curve.to_csv().as_bytes())?;
    }
    // pooling equal-sized per-seed score sets makes each ratio the mean over seeds
    let pooled = |f: fn(&watchdog_core::experiment::SeedEvaluation) -> &Vec<f64>| {
        evals.iter().flat_map(|e| f(e).iter().copied()).collect::<Vec<f64>>()
    };
    let table = UnrecognizedTable::from_scores(
        &pooled(|e| &e.digit_scores),
        &pooled(|e| &e.fashion_scores),
        &threshold_grid(max_score, settings.table_points),
    )?;
    all.write("averaged/unrecognized_averaged.csv", table.to_csv().as_bytes())?;

    let n = evals.len();
    let figures: [(&str, String); 4] = [
        (
            "fig_watchdog_roc.svg",
            roc_svg(&format!("Watchdog ROC, digits vs fashion ({n} seeds)"), &[("watchdog", &avg.watchdog)]),
        ),
        (
            "fig_classifier_digits_roc.svg",
            roc_svg(&format!("Classifier ROC on digits, unguarded ({n} seeds)"), &[("unguarded", &avg.unguarded_in)]),
        ),
        (
            "fig_classifier_mixed_roc.svg",
            roc_svg(
                &format!("Classifier ROC on digits + fashion ({n} seeds)"),
                &[("unguarded", &avg.unguarded_mixed), ("guarded", &avg.guarded_mixed)],
            ),
        ),
        ("fig_unrecognized.svg", unrecognized_svg("Images rejected by the watchdog", &table, "digits", "fashion")),
    ];
    for (name, svg) in &figures {
        all.write(format!("averaged/{name}"), svg.as_bytes())?;
    }

    let summary = EvaluationSummary {
        seeds: evals
            .iter()
            .map(|e| SeedSummary {
                seed: e.seed,
                tau: e.tau,
                digit_mean_score: e.digit_summary.mean,
                fashion_mean_score: e.fashion_summary.mean,
                digit_acceptance: e.digit_acceptance,
                fashion_acceptance: e.fashion_acceptance,
                auc_watchdog: e.watchdog.auc,
                auc_unguarded_digits: e.unguarded_in.auc,
                auc_unguarded_mixed: e.unguarded_mixed.auc,
                auc_guarded_mixed: e.guarded_mixed.auc,
            })
            .collect(),
        grid: settings.grid,
        averaged_auc_watchdog: avg.watchdog.auc,
        averaged_auc_unguarded_digits: avg.unguarded_in.auc,
        averaged_auc_unguarded_mixed: avg.unguarded_mixed.auc,
        averaged_auc_guarded_mixed: avg.guarded_mixed.auc,
    };
    all.write("averaged/summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes").as_bytes())?;

    println!("seed      tau  digit mean  fashion mean  AUC watchdog  AUC digits  AUC mixed  AUC guarded");
    for s in &summary.seeds {
        println!(
            "{:>4} {:>8.4} {:>11.4} {:>13.4} {:>13.4} {:>11.4} {:>10.4} {:>12.4}",
            s.seed,
            s.tau,
            s.digit_mean_score,
            s.fashion_mean_score,
            s.auc_watchdog,
            s.auc_unguarded_digits,
            s.auc_unguarded_mixed,
            s.auc_guarded_mixed
        );
    }
    println!(
        "mean {:>8} {:>11} {:>13} {:>13.4} {:>11.4} {:>10.4} {:>12.4}",
        "", "", "", avg.watchdog.auc, avg.unguarded_in.auc, avg.unguarded_mixed.auc, avg.guarded_mixed.auc
    );
    for (label, guarded, unguarded) in regressions(&evals, &avg.guarded_mixed, &avg.unguarded_mixed) {
        println!("REGRESSION: {label}: guarded AUC {guarded:.4} < unguarded AUC {unguarded:.4}");
    }
    run.finish("evaluate", all, timings)?;
    Ok(EXIT_OK)
}

/// Seeds (and the average) where gating lowered the mixed-set AUC.
fn regressions(
    evals: &[watchdog_core::experiment::SeedEvaluation],
    avg_guarded: &RocCurve,
    avg_unguarded: &RocCurve,
) -> Vec<(String, f64, f64)> {
    let mut found: Vec<(String, f64, f64)> = evals
        .iter()
        .filter(|e| e.guarded_mixed.auc < e.unguarded_mixed.auc)
        .map(|e| (format!("seed {}", e.seed), e.guarded_mixed.auc, e.unguarded_mixed.auc))
        .collect();
    if avg_guarded.auc < avg_unguarded.auc {
        found.push(("averaged".into(), avg_guarded.auc, avg_unguarded.auc));
    }
    found
}

#[derive(Debug, Clone, Args)]
pub struct GuardArgs {
    /// 784 raw bytes, or an IDX image file (optionally gzipped) holding one 28x28 image
    #[arg(long)]
    pub image: PathBuf,
    /// Autoencoder file [default: <out>/seed-<seed>/autoencoder.wdnn]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Classifier file [default: <out>/seed-<seed>/classifier.wdnn]
    #[arg(long)]
    pub classifier: Option<PathBuf>,
}

const SIDE: usize = 28;

/// Reads a single 28x28 image from raw bytes or IDX.
pub fn read_single_image(path: &Path) -> Result<Tensor32, Failure> {
    let bytes = read_maybe_gzip(path).context(format!("reading {}", path.display()))?;
    let raw = if bytes.len() == SIDE * SIDE {
        RawImages { count: 1, rows: SIDE, cols: SIDE, pixels: bytes }
    } else {
        parse_idx_images(&bytes)
            .context(format!("{} is neither 784 raw bytes nor an IDX image file", path.display()))?
    };
    if (raw.count, raw.rows, raw.cols) != (1, SIDE, SIDE) {
        return Err(Failure::usage(format!(
            "{} holds {} image(s) of {}x{}; guard takes exactly one 28x28 image",
            path.display(),
            raw.count,
            raw.rows,
            raw.cols
        )));
    }
    Ok(normalize::<f32>(&raw).reshape(vec![SIDE, SIDE, 1])?)
}

/// Screens one image; classifies it only if the watchdog accepts it.
pub fn guard(run: &Run, args: &GuardArgs) -> Result<u8, Failure> {
    let seed = run.primary_seed();
    let ae_path = args.model.clone().unwrap_or_else(|| run.model_path(seed, AUTOENCODER_FILE));
    let clf_path = args.classifier.clone().unwrap_or_else(|| run.model_path(seed, CLASSIFIER_FILE));
    require_files(&[&args.image, &ae_path, &clf_path])?;
    let tau = run.known_tau(seed)?.ok_or_else(|| {
        Failure::usage(format!(
            "no threshold: pass --tau, set watchdog.tau in the config, or run calibrate to write {}",
            run.model_path(seed, WATCHDOG_FILE).display()
        ))
    })?;
    let image = read_single_image(&args.image)?;
    let ae =
        load_model_as::<f32>(&ae_path, ModelKind::Autoencoder).context(format!("loading {}", ae_path.display()))?;
    let clf =
        load_model_as::<f32>(&clf_path, ModelKind::Classifier).context(format!("loading {}", clf_path.display()))?;
    let model = WatchdogModel::new(ae, run.resolved.settings.score_definition, tau)?;
    let decision = model.guard(&image)?;
    if !decision.accepted {
        println!("REJECT score={:.6} tau={tau}", decision.score);
        return Ok(EXIT_REJECT);
    }
    let batch = image.reshape(vec![1, SIDE, SIDE, 1])?;
    let probs = clf.probabilities(&batch)?;
    if !probs.all_finite() {
        return Err(Failure::numeric("classifier produced non-finite probabilities"));
    }
    let p = predictions(&probs)[0];
    println!("ACCEPT label={} confidence={:.6} score={:.6}", p.label, p.confidence, decision.score);
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_run_in_order_whatever_the_worker_count() {
        let seeds = [4, 1, 3, 0, 2];
        for workers in [1, 2, 8] {
            let got = for_each_seed(&seeds, workers, |s| Ok(s * 10)).unwrap();
            assert_eq!(got, vec![40, 10, 30, 0, 20]);
        }
    }

    #[test]
    fn first_failing_seed_reports_its_error() {
        let e =
            for_each_seed(&[0, 1, 2], 3, |s| if s >= 1 { Err(Failure::numeric(format!("seed {s}"))) } else { Ok(s) })
                .unwrap_err();
        assert_eq!(e.message, "seed 1");
        assert_eq!(e.code, 3);
    }

    #[test]
    fn single_images_come_from_raw_bytes_or_idx() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.bin");
        std::fs::write(&raw, vec![255u8; 784]).unwrap();
        let t = read_single_image(&raw).unwrap();
        assert_eq!(t.shape(), &[28, 28, 1]);
        assert!(t.data().iter().all(|&v| v == 1.0));

        let idx = dir.path().join("one.idx");
        let pixels: Vec<u8> = (0..784).map(|i| (i % 256) as u8).collect();
        std::fs::write(
            &idx,
            watchdog_core::data::encode_idx_images(&RawImages { count: 1, rows: 28, cols: 28, pixels }),
        )
        .unwrap();
        assert_eq!(read_single_image(&idx).unwrap().data()[255], 1.0);

        let two = dir.path().join("two.idx");
        let raw2 = RawImages { count: 2, rows: 28, cols: 28, pixels: vec![0; 2 * 784] };
        std::fs::write(&two, watchdog_core::data::encode_idx_images(&raw2)).unwrap();
        assert_eq!(read_single_image(&two).unwrap_err().code, 2);
    }
}
