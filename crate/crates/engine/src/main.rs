use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use kis_core::corpus::load_manifest;
use kis_core::service::harness::{run_harness, TimedOp};
use kis_core::sketch::ColorIndex;
use kis_engine::{default_cache_path, load_config, load_engine, load_tasks, router, write_cache, AppState};

#[derive(Parser)]
#[command(name = "engine", about = "Known-item search over shot-segmented video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the color sketch index and write it next to the manifest.
    Index {
        manifest: PathBuf,
        /// Centroids per signature.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        no_recommend: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cache file (default: color_index.kisc beside the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        manifest: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON list of tasks sessions may attach to.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Directory for per-session JSON-lines logs.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Run a scripted agent over a task file on a simulated clock.
    Harness {
        manifest: PathBuf,
        tasks: PathBuf,
        agent: PathBuf,
        /// Seed for color signature extraction.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the full report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Index {
            manifest,
            k,
            no_recommend,
            config,
            out,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(k) = k {
                config.color.extract.k = k;
            }
            if no_recommend {
                config.color.recommend = false;
            }
            let corpus = load_manifest(&manifest).with_context(|| format!("loading {}", manifest.display()))?;
            let idx = ColorIndex::build(&corpus, &config.color)?;
            let out = out.unwrap_or_else(|| default_cache_path(&manifest));
            write_cache(&idx, &out)?;
            println!(
                "indexed {} shots ({} centroids) into {}",
                idx.signatures().len(),
                idx.signatures().iter().map(|s| s.centroids.len()).sum::<usize>(),
                out.display()
            );
        }
        Command::Serve {
            manifest,
            port,
            host,
            config,
            tasks,
            log_dir,
        } => {
            let config = load_config(config.as_deref())?;
            let cache = default_cache_path(&manifest);
            let engine = load_engine(&manifest, config, Some(&cache))?;
            let tasks = match tasks {
                Some(p) => load_tasks(&p)?,
                None => Vec::new(),
            };
            let state = Arc::new(AppState::new(engine, tasks, log_dir)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state)).await?;
                anyhow::Ok(())
            })?;
        }
        Command::Harness {
            manifest,
            tasks,
            agent,
            seed,
            config,
            out,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                config.color.extract.seed = seed;
            }
            let cache = default_cache_path(&manifest);
            let engine = load_engine(&manifest, config, Some(&cache))?;
            let tasks = load_tasks(&tasks)?;
            let text = std::fs::read_to_string(&agent).with_context(|| format!("reading {}", agent.display()))?;
            let ops: Vec<TimedOp> =
                serde_json::from_str(&text).with_context(|| format!("parsing agent script {}", agent.display()))?;
            let report = run_harness(&engine, &tasks, &ops)?;
            for t in &report.tasks {
                println!(
                    "{}\t{}\tscore={:.3}\ttime={}\twrong={}\terrors={}",
                    t.task_id,
                    if t.solved { "solved" } else { "unsolved" },
                    t.score,
                    t.time_s.map_or("-".to_string(), |v| format!("{v:.3}")),
                    t.wrong,
                    t.errors.len()
                );
            }
            println!(
                "solved {}/{}\ttotal={:.3}\tmean={:.3}",
                report.solved,
                report.tasks.len(),
                report.total_score,
                report.mean_score
            );
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_vec_pretty(&report)?)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
        }
    }
    Ok(())
}
