//! `ptal` — generate synthetic corpora, cluster point annotations into
//! pseudo labels, train the proposal network, run inference, and score
//! predictions with tIoU/mAP.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ptal_core::apn::{ApnModel, InterpMode};
use ptal_core::io;
use ptal_core::nn::{load_checkpoint, save_checkpoint};
use ptal_core::pipeline::{
    corpus_config_from_kv, evaluate, infer, load_corpus, save_train_config, train,
    write_metrics_csv, InferOptions, TrainConfig, ANET_GRID, THUMOS_GRID,
};
use ptal_core::pseudo::{cluster_video, mine_background, DEFAULT_KAPPA, DEFAULT_MAX_ITERS};
use ptal_core::synth::generate_corpus;

#[derive(Parser)]
#[command(
    name = "ptal",
    about = "Point-supervised temporal action localization, desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Grid {
    Anet,
    Thumos,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: features/<id>.csv plus annotations.json.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster one video's point annotations into pseudo labels.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Video id to pick from the annotations file (defaults to the
        /// single record).
        #[arg(long)]
        video_id: Option<String>,
        /// Background-mining threshold multiplier.
        #[arg(long, default_value_t = DEFAULT_KAPPA)]
        kappa: f64,
    },
    /// Train on a gen-data directory; writes checkpoint.json, metrics.csv,
    /// pseudo_final.json, and train_config.txt.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Precomputed class embeddings (M rows x D_e columns CSV, row
        /// order = class id); bypasses the prompt-derived seeds.
        #[arg(long)]
        class_embeddings: Option<PathBuf>,
    },
    /// Localize actions with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training config echo (defaults to train_config.txt next to the
        /// checkpoint, then to built-in defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Emit one prediction per class instead of only the argmax class.
        #[arg(long)]
        emit_all_classes: bool,
        /// Suppress across classes instead of per class.
        #[arg(long)]
        cross_class_nms: bool,
        /// Sample proposal features by nearest-neighbor instead of linear
        /// interpolation.
        #[arg(long)]
        nearest_interp: bool,
    },
    /// Score predictions against ground truth over a tIoU grid.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = Grid::Anet)]
        grid: Grid,
        /// Optional per-threshold CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData { config, out } => gen_data_cmd(&config, &out),
        Command::Cluster {
            features,
            annotations,
            out,
            video_id,
            kappa,
        } => cluster_cmd(&features, &annotations, &out, video_id.as_deref(), kappa),
        Command::Train {
            config,
            data,
            out,
            class_embeddings,
        } => train_cmd(&config, &data, &out, class_embeddings.as_deref()),
        Command::Infer {
            checkpoint,
            data,
            out,
            config,
            emit_all_classes,
            cross_class_nms,
            nearest_interp,
        } => infer_cmd(
            &checkpoint,
            &data,
            &out,
            config.as_deref(),
            emit_all_classes,
            cross_class_nms,
            nearest_interp,
        ),
        Command::Eval {
            pred,
            gt,
            grid,
            csv,
        } => eval_cmd(&pred, &gt, grid, csv.as_deref()),
    }
}

fn gen_data_cmd(config: &Path, out: &Path) -> Result<()> {
    let cfg = corpus_config_from_kv(config)?;
    let corpus = generate_corpus(&cfg)?;
    let features_dir = out.join("features");
    fs::create_dir_all(&features_dir)
        .with_context(|| format!("creating {}", features_dir.display()))?;
    let mut annotations = Vec::with_capacity(corpus.len());
    for v in &corpus {
        io::save_features(&features_dir.join(format!("{}.csv", v.id)), &v.features)?;
        annotations.push(io::VideoAnnotations {
            video_id: v.id.clone(),
            t: v.features.len(),
            gt: v
                .gt
                .iter()
                .map(|g| io::GtRecord {
                    t_s: g.t_s,
                    t_e: g.t_e,
                    class_id: g.class_id.expect("generated instances carry a class"),
                })
                .collect(),
            points: v
                .points
                .iter()
                .map(|p| io::PointRecord {
                    t_p: p.t_p,
                    class_id: p.class_id,
                })
                .collect(),
        });
    }
    io::save_annotations(&out.join("annotations.json"), &annotations)?;
    println!("wrote {} videos to {}", corpus.len(), out.display());
    Ok(())
}

fn cluster_cmd(
    features_path: &Path,
    annotations_path: &Path,
    out: &Path,
    video_id: Option<&str>,
    kappa: f64,
) -> Result<()> {
    let features = io::load_features(features_path)?;
    let records = io::load_annotations(annotations_path)?;
    let record = match video_id {
        Some(id) => records
            .iter()
            .find(|r| r.video_id == id)
            .with_context(|| format!("video '{id}' not found in {}", annotations_path.display()))?,
        None => {
            if records.len() != 1 {
                bail!(
                    "{} holds {} videos; pass --video-id to pick one",
                    annotations_path.display(),
                    records.len()
                );
            }
            &records[0]
        }
    };
    if record.t != features.len() {
        bail!(
            "annotations say T={} but {} has {} rows",
            record.t,
            features_path.display(),
            features.len()
        );
    }
    let points = record.point_annotations();
    let state = cluster_video(&features, &points, DEFAULT_MAX_ITERS)?;
    let set = mine_background(&features, &state, &points, kappa);
    let pseudo = io::PseudoVideoRecord {
        video_id: record.video_id.clone(),
        t: record.t,
        gt: set
            .actions
            .iter()
            .map(|a| io::GtRecord {
                t_s: a.t_s,
                t_e: a.t_e,
                class_id: a.class_id.expect("pseudo actions carry a class"),
            })
            .collect(),
        points: record.points.clone(),
        backgrounds: set
            .backgrounds
            .iter()
            .map(|b| io::SpanRecord {
                t_s: b.t_s,
                t_e: b.t_e,
            })
            .collect(),
        epoch_tag: 0,
    };
    io::save_pseudo_records(out, &[pseudo])?;
    println!(
        "clustered '{}' into {} actions / {} backgrounds (objective {:.6})",
        record.video_id,
        set.actions.len(),
        set.backgrounds.len(),
        state.objective
    );
    Ok(())
}

fn train_cmd(
    config_path: &Path,
    data: &Path,
    out: &Path,
    class_embeddings: Option<&Path>,
) -> Result<()> {
    let config = TrainConfig::from_kv_file(config_path)?;
    let corpus = load_corpus(data)?;
    let embeddings: Option<Vec<Vec<f64>>> = match class_embeddings {
        Some(path) => {
            let table = io::load_features(path)?;
            Some((0..table.len()).map(|r| table.row(r).to_vec()).collect())
        }
        None => None,
    };
    let outcome = train(&corpus, &config, embeddings.as_deref())?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_checkpoint(&out.join("checkpoint.json"), &outcome.model.params())?;
    write_metrics_csv(&out.join("metrics.csv"), &outcome.metrics)?;
    save_train_config(&out.join("train_config.txt"), &config)?;
    let pseudo_records: Vec<io::PseudoVideoRecord> = outcome
        .pseudo
        .iter()
        .zip(&corpus)
        .map(|((vid, set), video)| io::PseudoVideoRecord {
            video_id: vid.clone(),
            t: video.features.len(),
            gt: set
                .actions
                .iter()
                .map(|a| io::GtRecord {
                    t_s: a.t_s,
                    t_e: a.t_e,
                    class_id: a.class_id.expect("pseudo actions carry a class"),
                })
                .collect(),
            points: video
                .points
                .iter()
                .map(|p| io::PointRecord {
                    t_p: p.t_p,
                    class_id: p.class_id,
                })
                .collect(),
            backgrounds: set
                .backgrounds
                .iter()
                .map(|b| io::SpanRecord {
                    t_s: b.t_s,
                    t_e: b.t_e,
                })
                .collect(),
            epoch_tag: set.epoch_tag,
        })
        .collect();
    io::save_pseudo_records(&out.join("pseudo_final.json"), &pseudo_records)?;
    match (outcome.initial_pseudo_map50, outcome.final_pseudo_map50) {
        (Some(init), Some(fin)) => {
            println!("pseudo-label mAP@0.5: {init:.4} initial -> {fin:.4} final")
        }
        _ => println!("no ground truth available; pseudo-label quality not tracked"),
    }
    println!("wrote checkpoint and logs to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn infer_cmd(
    checkpoint: &Path,
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    emit_all_classes: bool,
    cross_class_nms: bool,
    nearest_interp: bool,
) -> Result<()> {
    let params = load_checkpoint(checkpoint)?;
    let model = ApnModel::from_parameters(params)?;
    let config = match config {
        Some(path) => TrainConfig::from_kv_file(path)?,
        None => {
            let sibling = checkpoint.parent().map(|d| d.join("train_config.txt"));
            match sibling {
                Some(path) if path.exists() => TrainConfig::from_kv_file(&path)?,
                _ => TrainConfig::default(),
            }
        }
    };
    let mut opts = InferOptions::from(&config);
    opts.emit_all_classes = emit_all_classes;
    opts.cross_class_nms = cross_class_nms;
    if nearest_interp {
        opts.interp = InterpMode::Nearest;
    }
    let corpus = load_corpus(data)?;
    let mut records = Vec::new();
    for video in &corpus {
        for p in infer(&video.features, &model, &opts) {
            records.push(io::PredictionRecord::new(&video.id, &p));
        }
    }
    io::save_predictions(out, &records)?;
    println!(
        "wrote {} predictions for {} videos to {}",
        records.len(),
        corpus.len(),
        out.display()
    );
    Ok(())
}

fn eval_cmd(pred: &Path, gt: &Path, grid: Grid, csv: Option<&Path>) -> Result<()> {
    let predictions = io::load_predictions(pred)?;
    let annotations = io::load_annotations(gt)?;
    let thresholds: &[f64] = match grid {
        Grid::Anet => &ANET_GRID,
        Grid::Thumos => &THUMOS_GRID,
    };
    let report = evaluate(&predictions, &annotations, thresholds)?;
    println!("tIoU     mAP");
    for (th, map) in report.thresholds.iter().zip(&report.map_per_threshold) {
        println!("{th:.2}    {map:.4}");
    }
    println!("average mAP: {:.4}", report.average_map);
    if !report.skipped_classes.is_empty() {
        eprintln!(
            "note: classes {:?} have predictions but no ground truth; excluded from the mean",
            report.skipped_classes
        );
    }
    if let Some(csv_path) = csv {
        let mut outtext = String::from("tiou,map\n");
        for (th, map) in report.thresholds.iter().zip(&report.map_per_threshold) {
            outtext.push_str(&format!("{th},{map}\n"));
        }
        fs::write(csv_path, outtext).with_context(|| format!("writing {}", csv_path.display()))?;
    }
    Ok(())
}
