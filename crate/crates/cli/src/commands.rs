//! Command-line surface: argument parsing and the command implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use viewscore::decoder::{init_params, DecoderParams, FeatureTensor};
use viewscore::features::PatchStats;
use viewscore::io_formats::{
    load_sphere_manifest, load_triplet_manifest, read_container, read_json, read_tensor,
    write_atomic, write_container, write_json, write_pnm, write_tensor,
};
use viewscore::metrics::{
    cost_report, frame_cosine_similarity, frame_overlap, mean_average_precision,
    trajectory_metrics, CostReport, CostSettings, GridKind, GroundTruth, OverlapEstimator,
    SpotHighlight, VideoHighlights,
};
use viewscore::planner::{
    greedy_trajectory, select_highlights, stitch_trajectory, trajectory_entries, HighlightEntry,
    SegmentCandidates,
};
use viewscore::ranking::{train, LossKind, SynthConfig, Triplet};
use viewscore::scoremap::{render_heatmap, SphereScoreMap};
use viewscore::sphere_geom::{ErpFrame, Glimpse, Viewpoint, DEFAULT_ASPECT};

use crate::config::{PipelineConfig, Workspace, WORKSPACE_ENV};
use crate::pipeline::{Scorer, StageTimes};
use crate::synth::{write_synth_triplets, write_synth_video, SynthScene, SynthVideoSpec};

#[derive(Debug, Parser)]
#[command(name = "viewscore", version, about = "Score, plan and evaluate views of 360-degree video")]
pub struct Cli {
    /// Root that every relative path is resolved against.
    #[arg(long, env = WORKSPACE_ENV, default_value = ".", global = true)]
    pub workspace: PathBuf,
    /// Pipeline config JSON; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub h: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub lr_halve_every: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// triplet or pairwise
    #[arg(long, global = true)]
    pub loss: Option<String>,
    #[arg(long, global = true)]
    pub cross_pair: Option<bool>,
    #[arg(long, global = true)]
    pub init_seed: Option<u64>,
    #[arg(long, global = true)]
    pub train_seed: Option<u64>,
    #[arg(long, global = true)]
    pub synth_seed: Option<u64>,
    #[arg(long, global = true)]
    pub overlap_seed: Option<u64>,
    #[arg(long, global = true)]
    pub overlap_samples: Option<usize>,
    /// desk, full or tiny
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub motion_limit: Option<f64>,
    #[arg(long, global = true)]
    pub top_m: Option<usize>,
    #[arg(long, global = true)]
    pub highlights: Option<usize>,
    #[arg(long, global = true)]
    pub match_threshold: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, c: &mut PipelineConfig) -> Result<()> {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &self.$f { c.$f = v.clone(); } )*};
        }
        set!(
            k, h, scales, alpha, lambda, lr, lr_halve_every, batch_size, epochs, cross_pair,
            init_seed, train_seed, synth_seed, overlap_seed, overlap_samples, preset,
            motion_limit, highlights, match_threshold
        );
        if let Some(m) = self.top_m {
            c.top_m = Some(m);
        }
        if let Some(l) = &self.loss {
            c.loss = match l.as_str() {
                "triplet" => LossKind::Triplet,
                "pairwise" => LossKind::Pairwise,
                other => bail!("unknown loss `{other}` (expected triplet or pairwise)"),
            };
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode every segment's glimpse features into a stitched sphere score map.
    Score(ScoreArgs),
    /// Search each sphere map, stitch a smooth trajectory and pick highlights.
    Plan(PlanArgs),
    /// Train decoder parameters on a triplet manifest.
    Train(TrainArgs),
    /// Compare a plan against annotator ground truth.
    Eval(EvalArgs),
    /// Projection counts, projected areas and measured per-segment time.
    Cost(CostArgs),
    /// Render the pooled score of a sphere map over the ERP grid as PGM.
    Heatmap(HeatmapArgs),
    /// Generate synthetic inputs.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Parameter container; freshly initialized parameters when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output directory for the sphere maps and their index.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Index written by `score`.
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of highlights; defaults to the config value.
    #[arg(long)]
    pub n: Option<usize>,
    /// Per-segment argmax without the motion bound.
    #[arg(long)]
    pub greedy: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// cvs, dense or both
    #[arg(long, default_value = "both")]
    pub grid: String,
    /// Synthetic segments to time each pipeline on; 0 skips timing.
    #[arg(long, default_value_t = 0)]
    pub timing_segments: usize,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 360)]
    pub width: usize,
    #[arg(long, default_value_t = 180)]
    pub height: usize,
    /// Window scale (horizontal field of view) to pool at.
    #[arg(long, default_value_t = 90.0)]
    pub scale: f64,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// ERP key frames, glimpse features and a manifest.
    Video {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        segments: usize,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long)]
        no_frames: bool,
    },
    /// Feature-tensor triplets with planted quality ordering.
    Triplets {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        n: usize,
    },
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let ws = Workspace::new(&cli.workspace);
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(&ws.path(p))?,
        None => PipelineConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    cfg.validate().context("invalid pipeline config")?;
    match cli.command {
        Command::Score(a) => cmd_score(&ws, &cfg, &a),
        Command::Plan(a) => cmd_plan(&ws, &cfg, &a),
        Command::Train(a) => cmd_train(&ws, &cfg, &a),
        Command::Eval(a) => cmd_eval(&ws, &cfg, &a),
        Command::Cost(a) => cmd_cost(&ws, &cfg, &a),
        Command::Heatmap(a) => cmd_heatmap(&ws, &cfg, &a),
        Command::Synth(s) => cmd_synth(&ws, &cfg, s),
    }
}

pub fn load_params(path: &Path) -> Result<DecoderParams> {
    let entries = read_container(path)?;
    DecoderParams::from_entries(&entries).with_context(|| format!("loading {}", path.display()))
}

fn params_or_init(ws: &Workspace, cfg: &PipelineConfig, path: Option<&PathBuf>) -> Result<DecoderParams> {
    let p = match path {
        Some(p) => load_params(&ws.path(p))?,
        None => init_params(cfg.init_seed, &cfg.decoder_config()?)?,
    };
    ensure!(
        p.k() == cfg.k,
        "parameters produce k = {} maps but the config asks for k = {}",
        p.k(),
        cfg.k
    );
    Ok(p)
}

/// Index of the sphere maps written by `score`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapIndex {
    pub video_id: String,
    pub k: usize,
    pub segments: Vec<MapIndexEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapIndexEntry {
    pub segment: usize,
    pub path: PathBuf,
}

fn print_times(label: &str, t: &StageTimes, segments: usize) {
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    eprintln!(
        "{label}: {segments} segments, decode {:.1} ms, stitch {:.1} ms, total {:.1} ms ({:.2} ms/segment)",
        ms(t.decode),
        ms(t.stitch),
        ms(t.total()),
        ms(t.total()) / segments.max(1) as f64
    );
}

pub fn cmd_score(ws: &Workspace, cfg: &PipelineConfig, a: &ScoreArgs) -> Result<()> {
    let manifest_path = ws.path(&a.manifest);
    let manifest = load_sphere_manifest(&manifest_path)?;
    let params = params_or_init(ws, cfg, a.params.as_ref())?;
    let scorer = Scorer::new(params, &cfg.scales, cfg.h)?;
    let out = ws.path(&a.out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let t0 = Instant::now();
    let results: Vec<Result<(MapIndexEntry, StageTimes)>> = (0..manifest.segment_count())
        .into_par_iter()
        .map(|t| {
            let run = || -> Result<(MapIndexEntry, StageTimes)> {
                let load = Instant::now();
                let features = manifest
                    .sphere_glimpse_paths(t, &manifest_path)?
                    .iter()
                    .map(|p| Ok(FeatureTensor::from_tensor(&read_tensor(p)?)?))
                    .collect::<Result<Vec<_>>>()?;
                let mut times = StageTimes {
                    features: load.elapsed(),
                    ..StageTimes::default()
                };
                let d = Instant::now();
                let s = scorer.sphere_map(&features)?;
                times.decode = d.elapsed();
                let rel = PathBuf::from(format!("segment_{t:04}.cvst"));
                write_tensor(&sphere_tensor(&s), &out.join(&rel))?;
                Ok((MapIndexEntry { segment: t, path: rel }, times))
            };
            run().with_context(|| format!("segment {t}"))
        })
        .collect();
    let mut segments = Vec::with_capacity(results.len());
    let mut times = StageTimes::default();
    for r in results {
        let (e, t) = r?;
        times.add(&t);
        segments.push(e);
    }
    write_json(
        &MapIndex {
            video_id: manifest.video_id.clone(),
            k: cfg.k,
            segments,
        },
        &out.join("index.json"),
    )?;
    print_times("score", &times, manifest.segment_count());
    eprintln!("score: wall {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);
    Ok(())
}

fn sphere_tensor(s: &SphereScoreMap) -> viewscore::io_formats::Tensor {
    viewscore::io_formats::Tensor::from_f64(s.dims().to_vec(), s.cells().to_vec())
        .expect("sphere map dims match its cells")
}

pub fn read_sphere_map(path: &Path) -> Result<SphereScoreMap> {
    let t = read_tensor(path)?;
    SphereScoreMap::from_shape(t.dims(), t.to_f64()).with_context(|| format!("reading {}", path.display()))
}

/// Plan output: the full trajectory and its top-N highlights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub video_id: String,
    pub motion_limit: Option<f64>,
    pub total: f64,
    pub trajectory: Vec<HighlightEntry>,
    pub highlights: Vec<HighlightEntry>,
}

pub fn cmd_plan(ws: &Workspace, cfg: &PipelineConfig, a: &PlanArgs) -> Result<()> {
    let index_path = ws.path(&a.maps);
    let index: MapIndex = read_json(&index_path)?;
    ensure!(!index.segments.is_empty(), "map index lists no segments");
    let base = index_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let params_k = index.k;
    ensure!(params_k == cfg.k, "maps have k = {params_k} but the config asks for k = {}", cfg.k);
    let scanner = viewscore::scoremap::WindowScanner::new(cfg.k, &cfg.scales, cfg.h)?;
    let segments = index
        .segments
        .par_iter()
        .map(|e| {
            let run = || -> Result<SegmentCandidates> {
                let s = read_sphere_map(&base.join(&e.path))?;
                let c = SegmentCandidates::new(e.segment, scanner.scan(&s)?)?;
                Ok(match cfg.top_m {
                    Some(m) => c.top(m),
                    None => c,
                })
            };
            run().with_context(|| format!("segment {}", e.segment))
        })
        .collect::<Result<Vec<_>>>()?;
    let trajectory = if a.greedy {
        greedy_trajectory(&segments)?
    } else {
        stitch_trajectory(&segments, cfg.motion_limit)?
    };
    let n = a.n.unwrap_or(cfg.highlights);
    let highlights = select_highlights(&trajectory, n)?;
    let report = PlanReport {
        video_id: index.video_id,
        motion_limit: (!a.greedy).then_some(cfg.motion_limit),
        total: trajectory.total,
        trajectory: trajectory_entries(&trajectory, &highlights),
        highlights,
    };
    write_json(&report, &ws.path(&a.out))?;
    Ok(())
}

fn load_triplets(path: &Path) -> Result<Vec<Triplet>> {
    let m = load_triplet_manifest(path)?;
    m.triplets
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let load = |p: &PathBuf| -> Result<FeatureTensor> {
                Ok(FeatureTensor::from_tensor(&read_tensor(p)?)?)
            };
            let t = Triplet::new(load(&e.professional)?, load(&e.casual)?, load(&e.random)?)
                .with_context(|| format!("triplet {i}"))?;
            Ok(t)
        })
        .collect()
}

pub fn cmd_train(ws: &Workspace, cfg: &PipelineConfig, a: &TrainArgs) -> Result<()> {
    let data = load_triplets(&ws.path(&a.triplets))?;
    let init = params_or_init(ws, cfg, a.init.as_ref())?;
    let outcome = train(&data, &cfg.train_config(), init)?;
    write_container(&outcome.params.to_entries(), &ws.path(&a.out))?;
    let mut csv = String::from("epoch,mean_loss,lr\n");
    for r in &outcome.history {
        writeln!(csv, "{},{},{}", r.epoch, r.mean_loss, r.lr)?;
    }
    write_atomic(&ws.path(&a.history), csv.as_bytes())?;
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        eprintln!(
            "train: {} epochs, mean loss {:.4} -> {:.4}",
            outcome.history.len(),
            first.mean_loss,
            last.mean_loss
        );
    }
    Ok(())
}

/// Annotator ground truth for one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub annotators: Vec<AnnotatorTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorTruth {
    pub trajectory: Vec<Viewpoint>,
    #[serde(default)]
    pub highlights: Vec<SpotHighlight>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frame_cosine: f64,
    pub frame_overlap: f64,
    pub trajectory_cosine: f64,
    pub trajectory_overlap: f64,
    /// absent when no annotator lists highlights
    pub map: Option<f64>,
    pub match_threshold: f64,
    pub overlap_samples: usize,
    pub definitions: String,
}

pub const METRIC_DEFINITIONS: &str = "cosine: dot product of unit principal axes; overlap: \
Monte Carlo IoU of spherical window footprints; frame-level values average over all \
annotators, trajectory-level values take the best annotator";

pub fn evaluate(plan: &PlanReport, gt: &GroundTruthFile, cfg: &PipelineConfig) -> Result<EvalReport> {
    ensure!(!plan.trajectory.is_empty(), "prediction is empty");
    ensure!(!gt.annotators.is_empty(), "ground truth lists no annotators");
    let pred = plan
        .trajectory
        .iter()
        .map(|e| {
            let v = Viewpoint::new(e.theta, e.phi)?;
            Ok(Glimpse::new(v, e.scale, DEFAULT_ASPECT, e.segment)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = GroundTruth {
        annotators: gt
            .annotators
            .iter()
            .map(|a| {
                a.trajectory
                    .iter()
                    .enumerate()
                    .map(|(t, v)| Glimpse::standard(*v).with_segment(t))
                    .collect()
            })
            .collect(),
    };
    let est = OverlapEstimator::new(cfg.overlap_samples, cfg.overlap_seed)?;
    let tm = trajectory_metrics(&pred, &truth, &est)?;
    let with_highlights: Vec<Vec<SpotHighlight>> = gt
        .annotators
        .iter()
        .filter(|a| !a.highlights.is_empty())
        .map(|a| a.highlights.clone())
        .collect();
    let map = if with_highlights.is_empty() || plan.highlights.is_empty() {
        None
    } else {
        let predictions = plan
            .highlights
            .iter()
            .map(|e| {
                Ok(SpotHighlight {
                    segment: e.segment,
                    view: Viewpoint::new(e.theta, e.phi)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(mean_average_precision(
            &[VideoHighlights {
                predictions,
                annotators: with_highlights,
            }],
            cfg.match_threshold,
        )?)
    };
    Ok(EvalReport {
        frame_cosine: frame_cosine_similarity(&pred, &truth)?,
        frame_overlap: frame_overlap(&pred, &truth, &est)?,
        trajectory_cosine: tm.cosine,
        trajectory_overlap: tm.overlap,
        map,
        match_threshold: cfg.match_threshold,
        overlap_samples: cfg.overlap_samples,
        definitions: METRIC_DEFINITIONS.into(),
    })
}

pub fn cmd_eval(ws: &Workspace, cfg: &PipelineConfig, a: &EvalArgs) -> Result<()> {
    let plan: PlanReport = read_json(&ws.path(&a.pred))?;
    let gt: GroundTruthFile = read_json(&ws.path(&a.gt))?;
    let report = evaluate(&plan, &gt, cfg)?;
    write_json(&report, &ws.path(&a.out))?;
    if let Some(csv_path) = &a.csv {
        let mut csv = String::from("metric,value\n");
        for (name, v) in [
            ("frame_cosine", Some(report.frame_cosine)),
            ("frame_overlap", Some(report.frame_overlap)),
            ("trajectory_cosine", Some(report.trajectory_cosine)),
            ("trajectory_overlap", Some(report.trajectory_overlap)),
            ("map", report.map),
        ] {
            if let Some(v) = v {
                writeln!(csv, "{name},{v}")?;
            }
        }
        write_atomic(&ws.path(csv_path), csv.as_bytes())?;
    }
    Ok(())
}

/// Median per-segment wall time of both scoring paths, measured on the same
/// frames with the runs interleaved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PipelineTiming {
    pub segments: usize,
    pub cvs: Duration,
    pub dense: Duration,
}

impl PipelineTiming {
    pub fn speedup(&self) -> f64 {
        self.dense.as_secs_f64() / self.cvs.as_secs_f64()
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

pub fn time_pipelines(scorer: &Scorer, frames: &[ErpFrame]) -> Result<PipelineTiming> {
    ensure!(!frames.is_empty(), "no frames to time");
    let extractor = PatchStats;
    let mut cvs = Vec::with_capacity(frames.len());
    let mut dense = Vec::with_capacity(frames.len());
    for f in frames {
        let (_, t) = scorer.frame_candidates(f, &extractor)?;
        cvs.push(t.total());
        let (_, t) = scorer.dense_frame_candidates(f, &extractor)?;
        dense.push(t.total());
    }
    Ok(PipelineTiming {
        segments: frames.len(),
        cvs: median(cvs),
        dense: median(dense),
    })
}

pub fn synth_frames(seed: u64, segments: usize, width: usize, height: usize) -> Result<Vec<ErpFrame>> {
    let scene = SynthScene::new(seed, width, height);
    (0..segments)
        .map(|t| Ok(ErpFrame::new(scene.frame(t))?))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CostOutput {
    pub grids: Vec<CostReport>,
    pub reference_ratio: f64,
    pub timing: Option<PipelineTiming>,
}

/// Projected-area multiple reported for the sphere grid in the original
/// comparison.
pub const REFERENCE_CVS_RATIO: f64 = 1.96;

pub fn format_cost_table(out: &CostOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:>11} {:>8} {:>16} {:>11} {:>14} {:>12}",
        "grid", "projections", "enlarge", "solid-angle", "erp-pixels", "tangent-plane", "ms/segment"
    );
    for r in &out.grids {
        let ms = out.timing.map(|t| match r.grid {
            GridKind::Cvs => t.cvs,
            GridKind::Dense => t.dense,
        });
        let _ = writeln!(
            s,
            "{:<6} {:>11} {:>8.3} {:>9.3} ±{:.3} {:>10.3}x {:>13.3}x {:>12}",
            r.grid.name(),
            r.projections,
            r.enlarge,
            r.solid_angle.value,
            r.solid_angle.std_error,
            r.erp_pixels,
            r.tangent_plane,
            ms.map_or("-".to_string(), |d| format!("{:.2}", d.as_secs_f64() * 1e3)),
        );
    }
    let _ = writeln!(s, "reference sphere-grid area ratio: x{REFERENCE_CVS_RATIO}");
    if let Some(t) = out.timing {
        let _ = writeln!(s, "dense / sphere-grid time per segment: {:.1}x over {} segments", t.speedup(), t.segments);
    }
    s
}

pub fn cmd_cost(ws: &Workspace, cfg: &PipelineConfig, a: &CostArgs) -> Result<()> {
    let grids = match a.grid.as_str() {
        "both" => vec![GridKind::Cvs, GridKind::Dense],
        g => vec![g.parse::<GridKind>()?],
    };
    let settings = CostSettings {
        k: cfg.k,
        ..CostSettings::default()
    };
    let reports = grids
        .iter()
        .map(|g| Ok(cost_report(*g, &settings)?))
        .collect::<Result<Vec<_>>>()?;
    let timing = if a.timing_segments > 0 {
        let params = params_or_init(ws, cfg, a.params.as_ref())?;
        let scorer = Scorer::new(params, &cfg.scales, cfg.h)?;
        let frames = synth_frames(cfg.synth_seed, a.timing_segments, 512, 256)?;
        Some(time_pipelines(&scorer, &frames)?)
    } else {
        None
    };
    let out = CostOutput {
        grids: reports,
        reference_ratio: REFERENCE_CVS_RATIO,
        timing,
    };
    print!("{}", format_cost_table(&out));
    if let Some(p) = &a.out {
        write_json(&out, &ws.path(p))?;
    }
    Ok(())
}

pub fn cmd_heatmap(ws: &Workspace, cfg: &PipelineConfig, a: &HeatmapArgs) -> Result<()> {
    ensure!(a.width > 0 && a.height > 0, "heatmap size must be positive");
    let s = read_sphere_map(&ws.path(&a.map))?;
    let img = render_heatmap(&s, a.width, a.height, a.scale, cfg.h)?;
    write_pnm(&img, &ws.path(&a.out))?;
    Ok(())
}

pub fn cmd_synth(ws: &Workspace, cfg: &PipelineConfig, s: SynthCommand) -> Result<()> {
    match s {
        SynthCommand::Video {
            out,
            segments,
            width,
            height,
            no_frames,
        } => {
            ensure!(segments > 0, "segments must be positive");
            let spec = SynthVideoSpec {
                segments,
                width,
                height,
                seed: cfg.synth_seed,
                k: cfg.k,
                frames: !no_frames,
                ..SynthVideoSpec::default()
            };
            let m = write_synth_video(&ws.path(out), &spec)?;
            eprintln!("synth: wrote {}", m.display());
        }
        SynthCommand::Triplets { out, n } => {
            ensure!(n > 0, "n must be positive");
            let m = write_synth_triplets(&ws.path(out), n, cfg.synth_seed, &SynthConfig::default())?;
            eprintln!("synth: wrote {}", m.display());
        }
    }
    Ok(())
}
