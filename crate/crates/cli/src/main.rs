use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use vi_init::eval::report::{read_fragments_csv, write_config_outputs, write_summary};
use vi_init::eval::{ablation_sweep, load_fragments, run_benchmark, simulated_scene, BenchmarkSummary};
use vi_init::io::{write_euroc, write_tracks, BenchmarkConfig, FragmentConfig};
use vi_init::matching::{track_sequence, MatchStrategy};
use vi_init::sim::{simulate_sequence, synth_frontends};

#[derive(Parser)]
#[command(name = "vi-init", version, about = "Visual-inertial initialization benchmark")]
struct Cli {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// EuRoC root with one directory per sequence. Simulated data otherwise.
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
    /// Keyframes per fragment.
    #[arg(long, global = true, value_parser = ["4", "5", "10"])]
    kf: Option<String>,
    /// Base seed for the simulator and the synthetic front-end.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the fragment protocol with the configured pipeline.
    Bench {
        /// Configuration label used in file names.
        #[arg(long, default_value = "full")]
        label: String,
    },
    /// Run every ablation variant over the same fragments.
    Ablate,
    /// Write simulated sequences in EuRoC layout with a track CSV each.
    Sim {
        #[arg(long, value_enum, default_value_t = TrackSource::Oracle)]
        tracks: TrackSource,
    },
    /// Recompute summaries and CDFs from fragment CSVs.
    Metrics {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrackSource {
    /// Noisy projections of the simulator's landmarks.
    Oracle,
    Hybrid,
    Descriptor,
    Flow,
}

fn load_config(cli: &Cli) -> Result<BenchmarkConfig> {
    let mut cfg = match &cli.config {
        Some(p) => BenchmarkConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => BenchmarkConfig::default(),
    };
    if let Some(d) = &cli.dataset_dir {
        if !d.is_dir() {
            bail!("dataset directory {} does not exist", d.display());
        }
        cfg.dataset_dir = Some(d.clone());
    }
    if let Some(kf) = &cli.kf {
        cfg.fragments = FragmentConfig::for_keyframes(kf.parse()?);
    }
    if let Some(s) = cli.seed {
        cfg.simulation.seed = s;
        cfg.matching.seed = s;
        cfg.front_end.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(s: &BenchmarkSummary) {
    let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
    println!(
        "{:<12} fragments {:>5}  success {:>6.2}%  scale {:>7}%  ATE {:>7} m  gravity {:>6} deg",
        s.label,
        s.fragments,
        s.success_rate_pct,
        f(s.mean_scale_error_pct, 2),
        f(s.mean_ate_m, 3),
        f(s.gravity_rmse_deg, 2)
    );
}

fn bench(cfg: &BenchmarkConfig, out: &Path, label: &str) -> Result<()> {
    let fragments = load_fragments(cfg)?;
    info!("{} fragments", fragments.len());
    let results = run_benchmark(&fragments, &cfg.pipeline, cfg.jobs);
    let summary = BenchmarkSummary::from_results(label, &results);
    write_config_outputs(out, &results, &summary)?;
    write_summary(out, std::slice::from_ref(&summary))?;
    print_summary(&summary);
    Ok(())
}

fn ablate(cfg: &BenchmarkConfig, out: &Path) -> Result<()> {
    let fragments = load_fragments(cfg)?;
    info!("{} fragments", fragments.len());
    let mut summaries = Vec::new();
    for (_, results, summary) in ablation_sweep(&fragments, &cfg.pipeline, cfg.jobs) {
        write_config_outputs(out, &results, &summary)?;
        print_summary(&summary);
        summaries.push(summary);
    }
    write_summary(out, &summaries)?;
    Ok(())
}

fn sim(cfg: &BenchmarkConfig, out: &Path, source: TrackSource) -> Result<()> {
    for i in 0..cfg.simulation.sequences {
        let (scene, noise, name) = simulated_scene(cfg, i);
        let (seq, oracle) = simulate_sequence(&scene, &noise, cfg.simulation.camera_rate, &name);
        let strategy = match source {
            TrackSource::Oracle => None,
            TrackSource::Hybrid => Some(MatchStrategy::Hybrid),
            TrackSource::Descriptor => Some(MatchStrategy::DescriptorOnly),
            TrackSource::Flow => Some(MatchStrategy::FlowOnly),
        };
        let tracks = match strategy {
            None => oracle,
            Some(s) => {
                let mut fe = synth_frontends(&scene, &seq.camera_timestamps, &cfg.front_end);
                let poses = fe.poses().to_vec();
                let camera = *fe.camera();
                let (table, _) = track_sequence(&mut fe, camera, poses.len(), Some(&poses), s, &cfg.matching);
                table.into_tracks()
            }
        };
        let dir = out.join(&name);
        write_euroc(&seq, &dir)?;
        write_tracks(&dir.join("tracks.csv"), &seq, &tracks)?;
        println!("{} ({} tracks)", dir.display(), tracks.len());
    }
    Ok(())
}

fn metrics(files: &[PathBuf], out: &Path) -> Result<()> {
    let mut summaries = Vec::new();
    for f in files {
        let results = read_fragments_csv(f)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        let label = stem.strip_prefix("fragments_").unwrap_or(stem);
        let summary = BenchmarkSummary::from_results(label, &results);
        print_summary(&summary);
        summaries.push(summary);
    }
    write_summary(out, &summaries)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Bench { label } => bench(&cfg, &cli.out_dir, label),
        Command::Ablate => ablate(&cfg, &cli.out_dir),
        Command::Sim { tracks } => sim(&cfg, &cli.out_dir, *tracks),
        Command::Metrics { files } => metrics(files, &cli.out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
