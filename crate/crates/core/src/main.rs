//! Command-line front end: dataset generation, training with experiment
//! presets, evaluation of the four metrics (with optional SVM rescoring
//! and context features), and report merging.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use detkit::dataset::{load_dataset, save_dataset};
use detkit::error::Error;
use detkit::eval::{
    evaluate_action_classification, Interpolation, DEFAULT_APK_ALPHA, DEFAULT_DET_IOU,
    DEFAULT_NMS_IOU,
};
use detkit::network::{
    load_checkpoint, save_checkpoint, train, ActionScoreMode, Network, NetworkConfig, TrainConfig,
};
use detkit::pipeline::{
    action_scores_on_gt, action_svm_scores_on_gt, build_gt_context_features,
    build_object_training_set, build_training_set, detect_objects, evaluate_action_det,
    evaluate_detection, evaluate_pose, gt_action_features, gt_actions_for_rows, instance_gts,
    object_scorer_config, train_action_svms, train_context_svms, AugmentConfig, ExperimentPreset,
};
use detkit::report::{config_hash, merge_reports, Report};
use detkit::rescore::{rescore_actions, DEFAULT_SVM_C};
use detkit::synthdata::{generate_dataset, SceneSpec, ACTION_NAMES, NUM_ACTIONS};

#[derive(Parser)]
#[command(
    name = "detkit",
    about = "Multitask person detection, pose and action recognition on synthetic scenes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic dataset (train and val splits).
    Generate(GenerateArgs),
    /// Train a multitask network on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a trained network on a dataset split.
    Evaluate(EvaluateArgs),
    /// Merge evaluation reports into a side-by-side table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory; train/ and val/ subdirectories are created.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    train_scenes: usize,
    #[arg(long, default_value_t = 32)]
    val_scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Canvas side length in pixels.
    #[arg(long, default_value_t = 64)]
    canvas: usize,
    #[arg(long, default_value_t = 0.05)]
    occlusion: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Draw persons identically regardless of action, leaving the action
    /// signal to the co-occurring objects only.
    #[arg(long, default_value_t = false)]
    uninformative_appearance: bool,
    #[arg(long, default_value_t = 8)]
    proposals_per_instance: usize,
    #[arg(long, default_value_t = 4)]
    background_proposals: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset split directory (as produced by `generate`).
    #[arg(long)]
    data: PathBuf,
    /// Experiment preset: pose, action, detection, detection-action,
    /// detection-pose-action.
    #[arg(long, default_value = "detection-pose-action")]
    preset: String,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Target fraction of detection-positive regions per minibatch.
    #[arg(long, default_value_t = 0.25)]
    positive_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the DETKIT_THREADS environment
    /// variable, then 1.
    #[arg(long)]
    threads: Option<usize>,
    /// Jittered copies of each ground-truth box added to the training set.
    #[arg(long, default_value_t = 0)]
    jitter: usize,
    /// Restrict jitter-augmented regions to the pose and action heads.
    #[arg(long, default_value_t = false)]
    restrict_augmented: bool,
    /// Optional JSON file for the loss trace.
    #[arg(long)]
    trace_file: Option<PathBuf>,
    /// Resume from an existing checkpoint instead of fresh
    /// initialization. Zero iterations make this a pure copy.
    #[arg(long)]
    init_from: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Detection,
    Apk,
    ActionCls,
    ActionDet,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScoreModeArg {
    Product,
    ActionOnly,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Evaluation split directory.
    #[arg(long)]
    data: PathBuf,
    /// Training split directory (required for SVM-based scoring paths).
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Score ground-truth boxes with per-action SVMs over fc6 features
    /// instead of the softmax head (action-cls only).
    #[arg(long, default_value_t = false)]
    rescore: bool,
    /// Apply context rescoring on top (action-cls only; implies an
    /// object scorer trained on the training split).
    #[arg(long, default_value_t = false)]
    context: bool,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    nms_threshold: f64,
    #[arg(long, value_enum, default_value_t = ScoreModeArg::Product)]
    score_mode: ScoreModeArg,
    #[arg(long, default_value_t = DEFAULT_APK_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SVM_C)]
    svm_c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label recorded in the report (defaults to the task name).
    #[arg(long)]
    label: Option<String>,
    /// Report output path (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Evaluate externally supplied predictions (JSON, same layout as
    /// --dump-predictions emits) instead of running the network.
    #[arg(long)]
    predictions_file: Option<PathBuf>,
    /// JSON dump of the raw predictions this evaluation produced.
    #[arg(long)]
    dump_predictions: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files to merge.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Optional output file for the merged table (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidBox { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> detkit::Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> detkit::Result<()> {
    if args.train_scenes == 0 || args.val_scenes == 0 {
        return Err(Error::Config("both splits need at least one scene".into()));
    }
    let base = SceneSpec {
        canvas_size: (args.canvas, args.canvas),
        occlusion_rate: args.occlusion,
        noise_level: args.noise,
        appearance_encodes_action: !args.uninformative_appearance,
        proposals_per_instance: args.proposals_per_instance,
        background_proposals: args.background_proposals,
        seed: args.seed,
        ..SceneSpec::default()
    };
    let val_spec = SceneSpec {
        seed: args.seed.wrapping_add(0x5EED_0FF5),
        ..base.clone()
    };

    let train_scenes = generate_dataset(&base, args.train_scenes);
    let val_scenes = generate_dataset(&val_spec, args.val_scenes);
    let m_train = save_dataset(&args.out.join("train"), &base, &train_scenes)?;
    let m_val = save_dataset(&args.out.join("val"), &val_spec, &val_scenes)?;
    println!(
        "wrote {} train scenes ({}) and {} val scenes ({}) under {}",
        m_train.n_scenes,
        &m_train.content_hash[..12],
        m_val.n_scenes,
        &m_val.content_hash[..12],
        args.out.display()
    );
    Ok(())
}

fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("DETKIT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
    .max(1)
}

fn cmd_train(args: TrainArgs) -> detkit::Result<()> {
    let preset = ExperimentPreset::from_name(&args.preset)?;
    let (scenes, manifest) = load_dataset(&args.data)?;
    let config = NetworkConfig::default();
    let augment = AugmentConfig {
        jitter_per_instance: args.jitter,
        restrict_to_pose_action: args.restrict_augmented,
        ..AugmentConfig::default()
    };
    let mut net = match &args.init_from {
        Some(path) => load_checkpoint(path)?,
        None => Network::new(config, args.seed)?,
    };
    let set = build_training_set(&scenes, net.config.input_shape, &augment)?;
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        batch_size: args.batch_size,
        iterations: args.iterations,
        weights: preset.weights(),
        seed: args.seed,
        positive_fraction: args.positive_fraction,
        threads: resolve_threads(args.threads),
        ..TrainConfig::default()
    };
    let trace = if args.iterations > 0 {
        train(&mut net, &set, &cfg)?
    } else {
        Vec::new()
    };
    save_checkpoint(&net, &args.out)?;
    if let Some(path) = &args.trace_file {
        std::fs::write(path, serde_json::to_string_pretty(&trace)? + "\n")?;
    }
    let final_loss = trace.last().map_or(f64::NAN, |row| row.total);
    println!(
        "trained preset '{}' on {} regions from dataset {} ({} iterations, final loss {:.6}) -> {}",
        preset.name(),
        set.num_entries(),
        &manifest.content_hash[..12],
        args.iterations,
        final_loss,
        args.out.display()
    );
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> detkit::Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> detkit::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> detkit::Result<()> {
    let net = load_checkpoint(&args.model)?;
    let (scenes, manifest) = load_dataset(&args.data)?;
    let cfg_hash = config_hash(&net.config)?;
    let label = args.label.clone().unwrap_or_else(|| task_name(args.task).to_string());

    let injected = args.predictions_file.is_some();
    let needs_train = !injected && (args.task == TaskArg::Apk || args.rescore || args.context);
    let train_scenes = match (&args.train_data, needs_train) {
        (Some(dir), _) => Some(load_dataset(dir)?.0),
        (None, true) => {
            return Err(Error::Config(
                "--train-data is required for APK and SVM rescoring paths".into(),
            ))
        }
        (None, false) => None,
    };

    let report = match args.task {
        TaskArg::Detection => {
            let (detections, curve, ap) = if let Some(path) = &args.predictions_file {
                let preds: Vec<detkit::eval::ScoredBox> = read_json(path)?;
                let curve = detkit::eval::match_detections(
                    &preds,
                    &detkit::pipeline::detection_gts(&scenes),
                    DEFAULT_DET_IOU,
                );
                let ap = detkit::eval::average_precision(
                    &curve,
                    Interpolation::ContinuousEnvelope,
                );
                (preds, curve, ap)
            } else {
                let eval = evaluate_detection(
                    &net,
                    &scenes,
                    args.nms_threshold,
                    Interpolation::ContinuousEnvelope,
                )?;
                (eval.detections, eval.curve, eval.ap)
            };
            if let Some(path) = &args.dump_predictions {
                write_json(path, &detections)?;
            }
            let mut report = Report {
                version: detkit::report::REPORT_VERSION,
                task: "detection".into(),
                label,
                dataset_hash: manifest.content_hash.clone(),
                config_hash: cfg_hash,
                seed: args.seed,
                class_names: vec!["person".into()],
                per_class_ap: vec![ap],
                mean_ap: ap,
                zero_positive_classes: 0,
                excluded_instances: 0,
                pr_points: curve.points.clone(),
            };
            report.pr_points.truncate(512);
            report
        }
        TaskArg::Apk => {
            let result = if let Some(path) = &args.predictions_file {
                let preds: Vec<Vec<detkit::eval::ScoredKeypoint>> = read_json(path)?;
                detkit::eval::evaluate_apk(&preds, &instance_gts(&scenes), args.alpha)
            } else {
                let train_scenes = train_scenes.as_ref().expect("checked above");
                evaluate_pose(
                    &net,
                    train_scenes,
                    &scenes,
                    args.alpha,
                    args.svm_c,
                    args.seed,
                )?
            };
            Report::from_ap_result(
                "apk",
                &label,
                &manifest.content_hash,
                &cfg_hash,
                args.seed,
                detkit::geometry::KEYPOINT_NAMES
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                &result,
            )
        }
        TaskArg::ActionCls => {
            let gts = instance_gts(&scenes);
            let rows = if let Some(path) = &args.predictions_file {
                read_json::<detkit::pipeline::GtActionScores>(path)?
            } else {
                let mut rows = if args.rescore {
                    let train_scenes = train_scenes.as_ref().expect("checked above");
                    let (features, actions) = gt_action_features(&net, train_scenes, 4)?;
                    let svms = train_action_svms(
                        &features,
                        &actions,
                        NUM_ACTIONS,
                        args.svm_c,
                        args.seed,
                    )?;
                    action_svm_scores_on_gt(&net, &scenes, &svms)?
                } else {
                    action_scores_on_gt(&net, &scenes)?
                };
                if args.context {
                    let train_scenes = train_scenes.as_ref().expect("checked above");
                    rows = apply_context_rescoring(&net, train_scenes, &scenes, rows, &args)?;
                }
                rows
            };
            if let Some(path) = &args.dump_predictions {
                write_json(path, &rows)?;
            }
            let gt_actions = gt_actions_for_rows(&rows, &gts);
            let scores: Vec<Vec<f64>> = rows.iter().map(|(_, _, s)| s.clone()).collect();
            let result = evaluate_action_classification(&gt_actions, &scores, NUM_ACTIONS);
            Report::from_ap_result(
                "action-classification",
                &label,
                &manifest.content_hash,
                &cfg_hash,
                args.seed,
                ACTION_NAMES.iter().map(|s| s.to_string()).collect(),
                &result,
            )
        }
        TaskArg::ActionDet => {
            let result = if let Some(path) = &args.predictions_file {
                let preds: Vec<detkit::eval::ActionDetPrediction> = read_json(path)?;
                detkit::eval::evaluate_action_detection(
                    &preds,
                    &instance_gts(&scenes),
                    NUM_ACTIONS,
                    DEFAULT_DET_IOU,
                )
            } else if args.rescore {
                let train_scenes = train_scenes.as_ref().expect("checked above");
                detkit::pipeline::evaluate_action_det_svm(
                    &net,
                    train_scenes,
                    &scenes,
                    4,
                    args.svm_c,
                    args.seed,
                    args.nms_threshold,
                    DEFAULT_DET_IOU,
                )?
            } else {
                let mode = match args.score_mode {
                    ScoreModeArg::Product => ActionScoreMode::ProductWithPerson,
                    ScoreModeArg::ActionOnly => ActionScoreMode::ActionOnly,
                };
                evaluate_action_det(&net, &scenes, mode, args.nms_threshold, DEFAULT_DET_IOU)?
            };
            Report::from_ap_result(
                "action-detection",
                &label,
                &manifest.content_hash,
                &cfg_hash,
                args.seed,
                ACTION_NAMES.iter().map(|s| s.to_string()).collect(),
                &result,
            )
        }
    };

    print!("{}", report.table());
    if let Some(path) = &args.report {
        report.save(path)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

/// Full context-rescoring path: train an object scorer and the per-action
/// context SVMs on the training split, then rescore the evaluation rows.
fn apply_context_rescoring(
    net: &Network,
    train_scenes: &[detkit::synthdata::Scene],
    eval_scenes: &[detkit::synthdata::Scene],
    eval_rows: detkit::pipeline::GtActionScores,
    args: &EvaluateArgs,
) -> detkit::Result<detkit::pipeline::GtActionScores> {
    let obj_cfg = object_scorer_config(net.config.input_shape);
    let obj_set = build_object_training_set(train_scenes, obj_cfg.input_shape, 4)?;
    let mut obj_net = Network::new(obj_cfg, args.seed.wrapping_add(101))?;
    let obj_train_cfg = TrainConfig {
        iterations: 600,
        batch_size: 24,
        weights: ExperimentPreset::DetectionAction.weights(),
        seed: args.seed.wrapping_add(101),
        ..TrainConfig::default()
    };
    train(&mut obj_net, &obj_set, &obj_train_cfg)?;

    let train_rows = if args.rescore {
        let (features, actions) = gt_action_features(net, train_scenes, 4)?;
        let svms = train_action_svms(&features, &actions, NUM_ACTIONS, args.svm_c, args.seed)?;
        action_svm_scores_on_gt(net, train_scenes, &svms)?
    } else {
        action_scores_on_gt(net, train_scenes)?
    };
    let train_gts = instance_gts(train_scenes);
    let train_objects = detect_objects(&obj_net, train_scenes, args.nms_threshold)?;
    let train_features =
        build_gt_context_features(&train_rows, &train_gts, &train_objects, NUM_ACTIONS);
    let train_actions = gt_actions_for_rows(&train_rows, &train_gts);
    let context_svms = train_context_svms(
        &train_features,
        &train_actions,
        NUM_ACTIONS,
        args.svm_c,
        args.seed,
    )?;

    let eval_gts = instance_gts(eval_scenes);
    let eval_objects = detect_objects(&obj_net, eval_scenes, args.nms_threshold)?;
    let eval_features =
        build_gt_context_features(&eval_rows, &eval_gts, &eval_objects, NUM_ACTIONS);
    let rescored = rescore_actions(&eval_features, &context_svms)?;
    Ok(eval_rows
        .into_iter()
        .zip(rescored)
        .map(|((img, ii, _), scores)| (img, ii, scores))
        .collect())
}

fn task_name(task: TaskArg) -> &'static str {
    match task {
        TaskArg::Detection => "detection",
        TaskArg::Apk => "apk",
        TaskArg::ActionCls => "action-classification",
        TaskArg::ActionDet => "action-detection",
    }
}

fn cmd_report(args: ReportArgs) -> detkit::Result<()> {
    let reports: detkit::Result<Vec<Report>> =
        args.reports.iter().map(|p| Report::load(p)).collect();
    let table = merge_reports(&reports?)?;
    match &args.out {
        Some(path) => std::fs::write(path, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}
