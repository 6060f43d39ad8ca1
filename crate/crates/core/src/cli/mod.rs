//! Command-line pipeline: generation, degradation, training, reconstruction,
//! map matching, evaluation and reporting.

pub mod config;
pub mod svg;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::degrade::{resolution_edge_len, Degradation};
use crate::error::{Error, Result};
use crate::geo::{BBox, GeoPoint};
use crate::mapmatch::map_match;
use crate::metrics::{evaluate, summary_table, EvalReport};
use crate::model::{reconstruct_batch, train_with_observer, Checkpoint};
use crate::roadnet::{grid_graph, RoadGraph};
use crate::trajectory::{read_jsonl_path, write_jsonl_path, Trajectory};
use crate::trajgen::{generate_dataset, split_dataset};

pub use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "trajsr",
    version,
    about = "Trajectory super-resolution pipeline"
)]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic grid road network as graph JSON.
    Grid {
        #[arg(long, default_value_t = 20)]
        rows: usize,
        #[arg(long, default_value_t = 20)]
        cols: usize,
        #[arg(long, default_value_t = 200.0)]
        spacing_m: f64,
        #[arg(long, default_value_t = 39.9)]
        lat: f64,
        #[arg(long, default_value_t = 116.4)]
        lon: f64,
        /// Defaults to `<out>/graph.json`.
        output: Option<PathBuf>,
    },
    /// Generate shortest-path trajectories plus a train/val/test split.
    Gen {
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Apply the configured degradation to a trajectory file.
    Degrade {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Train a model on original trajectories and their degraded copies.
    Train {
        /// Original (ground truth) trajectories.
        original: PathBuf,
        /// Degraded inputs paired by trajectory id; the configured
        /// degradation is applied when omitted.
        #[arg(long)]
        degraded: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Defaults to `paths.checkpoint`, then `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Refine degraded trajectories with a trained checkpoint.
    Reconstruct {
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// HMM map-matching baseline.
    Mapmatch {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Fréchet evaluation of candidate files against a reference file.
    Eval {
        reference: PathBuf,
        #[arg(required = true)]
        candidates: Vec<PathBuf>,
        /// One label per candidate; defaults to the file stem.
        #[arg(long = "label")]
        labels: Vec<String>,
    },
    /// Summary table, error histogram and trajectory overlay.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        original: Option<PathBuf>,
        #[arg(long)]
        degraded: Option<PathBuf>,
        #[arg(long)]
        matched: Option<PathBuf>,
        #[arg(long)]
        reconstructed: Option<PathBuf>,
        /// Trajectory drawn in the overlay; the first original by default.
        #[arg(long)]
        traj_id: Option<String>,
    },
}

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Ctx {
    fn graph(&self, flag: &Option<PathBuf>) -> Result<RoadGraph> {
        match flag {
            Some(p) => RoadGraph::load_path(p),
            None => RoadGraph::load_path(self.cfg.graph_path()?),
        }
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(self.out.join(name))
    }

    fn hex_edge_m(&self) -> Option<f64> {
        match self.cfg.degrade.kind {
            config::DegradeKind::Hex => self
                .cfg
                .degrade
                .edge_len_m
                .or_else(|| resolution_edge_len(self.cfg.degrade.level).ok()),
            _ => None,
        }
    }
}

/// Parse-free entry point used by the binary and by tests.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_seed(cli.seed);
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { cfg, out };
    match cli.command {
        Command::Grid {
            rows,
            cols,
            spacing_m,
            lat,
            lon,
            output,
        } => cmd_grid(
            &ctx,
            rows,
            cols,
            spacing_m,
            GeoPoint::new(lat, lon)?,
            output,
        ),
        Command::Gen { graph } => cmd_gen(&ctx, &graph),
        Command::Degrade {
            input,
            output,
            graph,
        } => cmd_degrade(&ctx, &input, &output, &graph),
        Command::Train {
            original,
            degraded,
            graph,
            checkpoint,
        } => cmd_train(&ctx, &original, degraded.as_deref(), &graph, checkpoint),
        Command::Reconstruct {
            checkpoint,
            input,
            output,
            graph,
        } => cmd_reconstruct(&ctx, &checkpoint, &input, &output, &graph),
        Command::Mapmatch {
            input,
            output,
            graph,
        } => cmd_mapmatch(&ctx, &input, &output, &graph),
        Command::Eval {
            reference,
            candidates,
            labels,
        } => cmd_eval(&ctx, &reference, &candidates, &labels),
        Command::Report {
            reports,
            original,
            degraded,
            matched,
            reconstructed,
            traj_id,
        } => {
            let layers = [
                ("original", original),
                ("degraded", degraded),
                ("matched", matched),
                ("reconstructed", reconstructed),
            ];
            cmd_report(&ctx, &reports, &layers, traj_id.as_deref())
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_trajs(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_jsonl_path(path, trajs)
}

fn cmd_grid(
    ctx: &Ctx,
    rows: usize,
    cols: usize,
    spacing_m: f64,
    center: GeoPoint,
    output: Option<PathBuf>,
) -> Result<()> {
    let g = grid_graph(center, rows, cols, spacing_m)?;
    let path = match output {
        Some(p) => p,
        None => ctx.out_path("graph.json")?,
    };
    write_file(&path, g.to_json())?;
    println!(
        "wrote {} nodes and {} edges to {}",
        g.node_count(),
        g.edge_count(),
        path.display()
    );
    Ok(())
}

fn bbox_summary(trajs: &[Trajectory]) -> String {
    match BBox::enclosing(trajs.iter().flat_map(|t| t.positions().collect::<Vec<_>>())) {
        Some(b) => format!(
            "lat [{:.6}, {:.6}] lon [{:.6}, {:.6}]",
            b.min.lat, b.max.lat, b.min.lon, b.max.lon
        ),
        None => "empty".into(),
    }
}

fn cmd_gen(ctx: &Ctx, graph: &Option<PathBuf>) -> Result<()> {
    let g = ctx.graph(graph)?;
    let trajs = generate_dataset(&g, &ctx.cfg.gen)?;
    let (r0, r1, r2) = (ctx.cfg.split[0], ctx.cfg.split[1], ctx.cfg.split[2]);
    let (train, val, test) = split_dataset(&trajs, (r0, r1, r2), ctx.cfg.seed())?;
    write_trajs(&ctx.out_path("trajectories.jsonl")?, &trajs)?;
    write_trajs(&ctx.out_path("train.jsonl")?, &train)?;
    write_trajs(&ctx.out_path("val.jsonl")?, &val)?;
    write_trajs(&ctx.out_path("test.jsonl")?, &test)?;
    println!(
        "generated {} trajectories; bbox {}",
        trajs.len(),
        bbox_summary(&trajs)
    );
    println!(
        "split train {} / val {} / test {}",
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}

fn degradation(ctx: &Ctx, graph: &Option<PathBuf>) -> Result<Degradation> {
    let needs_graph =
        ctx.cfg.degrade.kind == config::DegradeKind::Hex && ctx.cfg.degrade.origin.is_none();
    let g = if needs_graph {
        Some(ctx.graph(graph)?)
    } else {
        None
    };
    ctx.cfg.degradation(g.as_ref())
}

fn cmd_degrade(ctx: &Ctx, input: &Path, output: &Path, graph: &Option<PathBuf>) -> Result<()> {
    let trajs = read_jsonl_path(input)?;
    let op = degradation(ctx, graph)?;
    let out: Vec<Trajectory> = trajs.iter().map(|t| op.apply(t)).collect::<Result<_>>()?;
    write_trajs(output, &out)?;
    println!(
        "degraded {} trajectories into {}",
        out.len(),
        output.display()
    );
    Ok(())
}

/// Pair `degraded` with `original` by trajectory id, in `original` order.
fn pair_by_id(
    original: &[Trajectory],
    degraded: Vec<Trajectory>,
) -> Result<Vec<(Trajectory, Trajectory)>> {
    let mut by_id: HashMap<String, Trajectory> =
        degraded.into_iter().map(|t| (t.id.clone(), t)).collect();
    original
        .iter()
        .map(|o| {
            let d = by_id.remove(&o.id).ok_or_else(|| {
                Error::invalid(format!("no degraded trajectory with id {}", o.id))
            })?;
            Ok((d, o.clone()))
        })
        .collect()
}

fn cmd_train(
    ctx: &Ctx,
    original: &Path,
    degraded: Option<&Path>,
    graph: &Option<PathBuf>,
    checkpoint: Option<PathBuf>,
) -> Result<()> {
    let g = ctx.graph(graph)?;
    let originals = read_jsonl_path(original)?;
    let degraded = match degraded {
        Some(p) => read_jsonl_path(p)?,
        None => {
            let op = ctx.cfg.degradation(Some(&g))?;
            originals
                .iter()
                .map(|t| op.apply(t))
                .collect::<Result<_>>()?
        }
    };
    let pairs = pair_by_id(&originals, degraded)?;
    let hexgrid = match ctx.cfg.degrade.kind {
        config::DegradeKind::Hex => Some(ctx.cfg.hex_grid(Some(&g))?),
        _ => None,
    };
    let ckpt = train_with_observer(&g, &pairs, &ctx.cfg.model, hexgrid, &mut |s| {
        log::info!("epoch {} mean loss {:.6}", s.epoch, s.mean_loss)
    })?;
    let path = match checkpoint.or_else(|| ctx.cfg.paths.checkpoint.clone()) {
        Some(p) => p,
        None => ctx.out_path("model.ckpt")?,
    };
    write_file(&path, ckpt.to_bytes())?;
    let first = ckpt.training_log.first().copied().unwrap_or(f64::NAN);
    let last = ckpt.training_log.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {} pairs for {} epochs; loss {first:.6} -> {last:.6}; checkpoint {}",
        pairs.len(),
        ckpt.training_log.len(),
        path.display()
    );
    Ok(())
}

fn cmd_reconstruct(
    ctx: &Ctx,
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    graph: &Option<PathBuf>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let g = ctx.graph(graph)?;
    let trajs = read_jsonl_path(input)?;
    let out = reconstruct_batch(&ckpt, &g, &trajs)?;
    write_trajs(output, &out)?;
    println!(
        "reconstructed {} trajectories into {}",
        out.len(),
        output.display()
    );
    Ok(())
}

fn cmd_mapmatch(ctx: &Ctx, input: &Path, output: &Path, graph: &Option<PathBuf>) -> Result<()> {
    let g = ctx.graph(graph)?;
    let params = ctx.cfg.hmm_params(ctx.hex_edge_m())?;
    let trajs = read_jsonl_path(input)?;
    let out: Vec<Trajectory> = trajs
        .par_iter()
        .map(|t| {
            map_match(&g, t, &params).map_err(|e| match e {
                Error::UnmatchedPoint { .. } | Error::BrokenChain { .. } => {
                    Error::invalid(format!("trajectory {}: {e}", t.id))
                }
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    write_trajs(output, &out)?;
    println!(
        "map-matched {} trajectories into {}",
        out.len(),
        output.display()
    );
    Ok(())
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "candidate".into())
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_eval(ctx: &Ctx, reference: &Path, candidates: &[PathBuf], labels: &[String]) -> Result<()> {
    if !labels.is_empty() && labels.len() != candidates.len() {
        return Err(Error::invalid(format!(
            "{} labels given for {} candidate files",
            labels.len(),
            candidates.len()
        )));
    }
    let refs = read_jsonl_path(reference)?;
    let by_id: HashMap<&str, &Trajectory> = refs.iter().map(|t| (t.id.as_str(), t)).collect();
    let bins = ctx.cfg.bins();
    let mut csv = format!("{}\n", EvalReport::CSV_HEADER);
    let mut reports = Vec::new();
    for (i, path) in candidates.iter().enumerate() {
        let label = labels.get(i).cloned().unwrap_or_else(|| file_label(path));
        let cands = read_jsonl_path(path)?;
        let pairs: Vec<(Trajectory, Trajectory)> = cands
            .into_iter()
            .map(|c| {
                let r = by_id.get(c.id.as_str()).ok_or_else(|| {
                    Error::invalid(format!(
                        "{}: trajectory {} missing from reference",
                        path.display(),
                        c.id
                    ))
                })?;
                Ok((c, (*r).clone()))
            })
            .collect::<Result<_>>()?;
        let report = evaluate(&pairs, &bins, &label)?;
        write_file(
            &ctx.out_path(&format!("eval_{}.json", slug(&label)))?,
            report.to_json(),
        )?;
        csv.push_str(&report.csv_row());
        csv.push('\n');
        reports.push(report);
    }
    write_file(&ctx.out_path("eval.csv")?, &csv)?;
    print!("{}", summary_table(&reports));
    Ok(())
}

fn cmd_report(
    ctx: &Ctx,
    reports: &[PathBuf],
    layers: &[(&str, Option<PathBuf>)],
    traj_id: Option<&str>,
) -> Result<()> {
    let reports: Vec<EvalReport> = reports
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            EvalReport::from_json(&text)
        })
        .collect::<Result<_>>()?;
    let mut md = String::from("# Reconstruction report\n\n");
    md.push_str(&summary_table(&reports));
    md.push_str(
        "\n| Method | Mean (km) | Median (km) | P85 (km) | Trajectories |\n|---|---|---|---|---|\n",
    );
    for r in &reports {
        md.push_str(&format!(
            "| {} | {:.3} | {:.3} | {:.3} | {} |\n",
            r.label,
            r.mean_km,
            r.median_km,
            r.p85_km,
            r.per_trajectory.len()
        ));
    }
    md.push_str("\n![Error histogram](histogram.svg)\n");
    write_file(&ctx.out_path("histogram.svg")?, svg::histogram(&reports))?;

    let mut loaded: Vec<(&str, Vec<Trajectory>)> = Vec::new();
    for (label, path) in layers {
        if let Some(p) = path {
            loaded.push((label, read_jsonl_path(p)?));
        }
    }
    if !loaded.is_empty() {
        let id = match traj_id {
            Some(id) => id.to_string(),
            None => loaded[0]
                .1
                .first()
                .map(|t| t.id.clone())
                .ok_or_else(|| Error::invalid("overlay input file is empty"))?,
        };
        let picked: Vec<(&str, &Trajectory)> = loaded
            .iter()
            .filter_map(|(label, ts)| ts.iter().find(|t| t.id == id).map(|t| (*label, t)))
            .collect();
        if picked.is_empty() {
            return Err(Error::invalid(format!(
                "trajectory {id} not found in overlay inputs"
            )));
        }
        write_file(&ctx.out_path("overlay.svg")?, svg::overlay(&picked))?;
        md.push_str(&format!("\n![Trajectory {id}](overlay.svg)\n"));
    }
    let path = ctx.out_path("report.md")?;
    write_file(&path, &md)?;
    print!("{}", summary_table(&reports));
    Ok(())
}

/// One-line error message for stderr.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("trajsr: error: {}: {msg}", e.kind())
}

/// Cap rayon's global pool from `TRAJSR_THREADS`.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("TRAJSR_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Config(format!(
            "TRAJSR_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}
