mod args;
mod report;

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::Parser;
use mfswarm::analysis::{self, TransitionConfig};
use mfswarm::archive::sha256_hex;
use mfswarm::evolution::{Evolution, SwarmEvaluator};
use mfswarm::{Bin, ExperimentConfig, InputMask, Repertoire};
use mfswarm_steer::server::UncertaintyEntry;
use mfswarm_steer::{AppState, ServerOptions, SessionOptions};

use args::{Cli, Cmd, EvolutionArgs, GlobalArgs, WorldArgs};

/// Exit status after an interrupt that left a valid snapshot.
const INTERRUPTED: u8 = 130;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Flags > config file > defaults. The result is validated and echoed to
/// stderr.
fn effective_config(global: &GlobalArgs, world: Option<&WorldArgs>, evo: Option<&EvolutionArgs>) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(w) = global.workers {
        cfg.workers = Some(w);
    }
    if let Some(w) = world {
        w.apply(&mut cfg);
    }
    if let Some(e) = evo {
        e.apply(&mut cfg);
    }
    cfg.validate()?;
    eprintln!("# effective configuration");
    eprint!("{}", cfg.to_toml_string());
    eprintln!("# config_hash = \"{}\"", cfg.config_hash());
    Ok(cfg)
}

fn init_workers(cfg: &ExperimentConfig) -> Result<()> {
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting the worker pool")?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<Repertoire> {
    Repertoire::load(path).with_context(|| format!("loading archive {}", path.display()))
}

/// The archive's bins must match what the configured world would produce.
fn check_binning(rep: &Repertoire, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    if rep.binning() != &cfg.binning() {
        bail!(
            "archive {} was binned as {:?} but the configured world bins as {:?}",
            path.display(),
            rep.binning(),
            cfg.binning()
        );
    }
    Ok(())
}

fn save(rep: &Repertoire, path: &Path) -> Result<String> {
    rep.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn genome_at(rep: &Repertoire, bin: Bin) -> Result<mfswarm::Genome> {
    Ok(rep.cell(bin)?.genome.clone())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Cmd::Config { world, evolution } => {
            let cfg = effective_config(g, Some(world), Some(evolution))?;
            print!("{}", cfg.to_toml_string());
        }
        Cmd::Evolve { out, world, evolution } => {
            let cfg = effective_config(g, Some(world), Some(evolution))?;
            init_workers(&cfg)?;
            return evolve(&cfg, out);
        }
        Cmd::Reevaluate { archive, out, report: report_path, evals, world } => {
            let cfg = effective_config(g, Some(world), None)?;
            init_workers(&cfg)?;
            let rep = load(archive)?;
            check_binning(&rep, &cfg, archive)?;
            let evaluator = SwarmEvaluator::new(cfg.world.clone())?;
            let evals = evals.unwrap_or(cfg.analysis.reeval_evals);
            let (summary, fresh) = analysis::reevaluate(&rep, &evaluator, evals, cfg.seed)?;
            report::reeval(&summary, report_path)?;
            let hash = save(&fresh, out)?;
            println!(
                "retained {}/{} ({:.4}); re-binned archive {} cells, sha256 {hash}",
                summary.retained_size, summary.original_size, summary.retention, summary.reevaluated_size
            );
        }
        Cmd::Ablate { out_dir, runs, masks, world, evolution } => {
            let cfg = effective_config(g, Some(world), Some(evolution))?;
            init_workers(&cfg)?;
            let masks: Vec<InputMask> = if masks.is_empty() { InputMask::ablation_set() } else { masks.clone() };
            let runs = runs.unwrap_or(cfg.analysis.ablation_runs);
            let evaluator = SwarmEvaluator::new(cfg.world.clone())?;
            let rep = analysis::ablation_study(&evaluator, &cfg.evolution, cfg.binning(), &masks, runs, cfg.seed)?;
            create_dir(out_dir)?;
            report::ablation(&rep, out_dir)?;
            for m in &rep.masks {
                let p = m.p_corrected.map_or("reference".to_string(), |p| format!("p_corrected {p:.4}"));
                println!("{} median {} {p}", m.mask, m.median_size);
            }
        }
        Cmd::Transition { archive, from, to, out_dir, repetitions, window, world } => {
            let cfg = effective_config(g, Some(world), None)?;
            init_workers(&cfg)?;
            let rep = load(archive)?;
            let (a, b) = (genome_at(&rep, *from)?, genome_at(&rep, *to)?);
            let tc = TransitionConfig {
                repetitions: repetitions.unwrap_or(cfg.analysis.transition_repetitions),
                final_window: window.unwrap_or(cfg.analysis.final_window),
                master_seed: cfg.seed,
            };
            let rec = analysis::run_transition(&a, &b, &cfg.world, &tc)?;
            create_dir(out_dir)?;
            report::transition(&rec, out_dir)?;
            let (mean, band, within) = (rec.transition_mean(), rec.baseline_band(), rec.within_band());
            for m in 0..3 {
                println!(
                    "{}: transition {:.6} baseline band [{:.6}, {:.6}] {}",
                    analysis::WindowMetrics::NAMES[m],
                    mean[m],
                    band[m].0,
                    band[m].1,
                    if within[m] { "inside" } else { "outside" }
                );
            }
        }
        Cmd::Ellipse { archive, bin, out_dir, repetitions, sidecar, world } => {
            let cfg = effective_config(g, Some(world), None)?;
            init_workers(&cfg)?;
            let rep = load(archive)?;
            let genome = genome_at(&rep, *bin)?;
            let evaluator = SwarmEvaluator::new(cfg.world.clone())?;
            let reps = repetitions.unwrap_or(cfg.analysis.ellipse_repetitions);
            let report = analysis::uncertainty_ellipse(&genome, &evaluator, reps, cfg.seed)?;
            create_dir(out_dir)?;
            report::ellipse(&report, out_dir)?;
            if let Some(path) = sidecar {
                update_sidecar(path, *bin, &report)?;
            }
            println!("mean {:?}", report.mean);
        }
        Cmd::Heatmap { archive, axis, out } => {
            let rep = load(archive)?;
            let h = analysis::parameter_heatmap(&rep, axis.index())?;
            report::heatmap(&h, out)?;
            println!("{} slices, {} filled", h.slices.len(), h.slices.iter().filter(|s| s.is_some()).count());
        }
        Cmd::Merge { archives, out } => {
            let parts = archives.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            let merged = Repertoire::merge(&parts)?;
            let hash = save(&merged, out)?;
            println!("{} cells, sha256 {hash}", merged.len());
        }
        Cmd::Replay { archive, bin, out, every, world } => {
            let cfg = effective_config(g, Some(world), None)?;
            let rep = load(archive)?;
            let genome = genome_at(&rep, *bin)?;
            let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
            let n = mfswarm::trace::write_trace(&cfg.world, &genome, cfg.seed, *every, BufWriter::new(file))?;
            println!("{n} records");
        }
        Cmd::Serve { archives, addr, decimation, full_rate, rate, world } => {
            let cfg = effective_config(g, Some(world), None)?;
            let mut defaults = SessionOptions::default();
            if *full_rate {
                defaults.decimation = 1;
            }
            if let Some(d) = decimation {
                defaults.decimation = *d;
            }
            if let Some(r) = rate {
                defaults.rate = *r;
            }
            let options = ServerOptions { world: cfg.world.clone(), defaults, ..Default::default() };
            let state = AppState::load(archives, options)?;
            serve(state, *addr)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn evolve(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let evaluator = SwarmEvaluator::new(cfg.world.clone())?;
    let mut run = Evolution::new(&evaluator, cfg.evolution.clone(), cfg.binning(), cfg.seed, cfg.config_hash())?;
    // last completed generation; the lock also serializes writes to `out`
    let latest: Arc<Mutex<Option<Repertoire>>> = Arc::new(Mutex::new(None));
    {
        let latest = latest.clone();
        let out: PathBuf = out.to_owned();
        ctrlc::set_handler(move || {
            let guard = latest.lock().unwrap_or_else(|p| p.into_inner());
            match guard.as_ref() {
                Some(rep) => match rep.save(&out) {
                    Ok(()) => eprintln!("interrupted: snapshot of {} cells in {}", rep.len(), out.display()),
                    Err(e) => eprintln!("interrupted: could not write snapshot: {e}"),
                },
                None => eprintln!("interrupted before the first generation finished; nothing written"),
            }
            std::process::exit(INTERRUPTED.into());
        })
        .context("installing the interrupt handler")?;
    }
    while !run.is_done() {
        let stats = run.step_generation()?;
        eprintln!("generation {}: {} inserted, {} cells", stats.generation, stats.inserted, stats.archive_size);
        let mut guard = latest.lock().unwrap_or_else(|p| p.into_inner());
        *guard = Some(run.repertoire().clone());
        if run.at_snapshot() && !run.is_done() {
            run.repertoire().save(out)?;
        }
    }
    let guard = latest.lock().unwrap_or_else(|p| p.into_inner());
    let hash = save(run.repertoire(), out)?;
    drop(guard);
    println!("{} cells, sha256 {hash}", run.repertoire().len());
    Ok(ExitCode::SUCCESS)
}

/// Replaces the sidecar entry for `bin`, keeping the others, sorted by bin.
fn update_sidecar(path: &Path, bin: Bin, report: &analysis::UncertaintyReport) -> Result<()> {
    let mut entries = std::collections::BTreeMap::new();
    if path.exists() {
        let file = std::fs::File::open(path)?;
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: UncertaintyEntry =
                serde_json::from_str(&line).with_context(|| format!("reading sidecar {}", path.display()))?;
            entries.insert(e.bins, e.report);
        }
    }
    entries.insert(bin, report.clone());
    let mut buf = Vec::new();
    for (bins, report) in entries {
        serde_json::to_writer(&mut buf, &UncertaintyEntry { bins, report })?;
        buf.write_all(b"\n")?;
    }
    report::write_atomic(path, &buf)
}

fn serve(state: AppState, addr: std::net::SocketAddr) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("serving {} archive(s) on http://{}", state.archive_names().len(), listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        mfswarm_steer::serve_until(listener, state, shutdown).await?;
        Ok(())
    })
}
