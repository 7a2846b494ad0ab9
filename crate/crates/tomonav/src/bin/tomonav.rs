//! Command-line pipeline: world generation, demonstration collection,
//! featurization, training, evaluation, closed-loop rollout and
//! benchmarking.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 assertion-threshold failure (`eval --assert`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tomonav::config::RunConfig;
use tomonav::dataio::{build_dataset, FeatureCache};
use tomonav::error::{Error, Result};
use tomonav::image::Image;
use tomonav::nn::{build_network, load_weights};
use tomonav::pipeline;
use tomonav::simworld::{find_route, RoadMap};
use tomonav::tomography::{fbp, radon, Sinogram, TomoConfig};

#[derive(Parser)]
#[command(
    name = "tomonav",
    version,
    about = "Road-following imitation learning on tomographic image features"
)]
struct Cli {
    /// Cap worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic road world and write it as JSON.
    GenWorld {
        #[command(flatten)]
        config: ConfigArgs,
        /// World seed; overrides the config's seeds.world.
        #[arg(long)]
        seed: Option<u64>,
        /// Junction count target; overrides the config.
        #[arg(long)]
        junctions: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect expert demonstration episodes on a world.
    Demo {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        world: PathBuf,
        /// Output corpus directory (episodes land in ep_NNN/).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build or refresh the feature cache for one episode.
    Featurize {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        episode: PathBuf,
    },
    /// Train a network preset on a demonstration corpus.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Corpus directory containing episode subdirectories.
        #[arg(long)]
        data: PathBuf,
        /// Run directory for weights, checkpoint and reports.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate trained weights on the held-out split of a corpus.
    Eval {
        /// Run directory written by `train` (config.json + weights.mavw).
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report JSON output path (default: <run>/report.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the throughput benchmark in the report.
        #[arg(long)]
        bench: bool,
        /// Exit 3 unless the thresholds below are met.
        #[arg(long)]
        assert: bool,
        #[arg(long, default_value_t = 0.0)]
        min_junction_f: f64,
        #[arg(long, default_value_t = 0.0)]
        min_accuracy: f64,
    },
    /// Closed-loop rollout of trained weights on a world.
    Rollout {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        route_seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_frames: Option<usize>,
    },
    /// Per-frame featurize+forward latency, reported in the
    /// evaluation-table column format.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        /// Weights to benchmark; a freshly initialized preset is used
        /// when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 80)]
        frames: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Radon-transform a PGM image into a sinogram (.csv or .sino).
    Radon {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 90)]
        angles: usize,
    },
    /// Reconstruct a sinogram back into a PGM image.
    Reconstruct {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        size: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_world(path: &Path) -> Result<RoadMap> {
    RoadMap::from_json(&std::fs::read_to_string(path)?)
}

fn run(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::GenWorld { config, seed, junctions, out } => {
            let mut cfg = config.load()?;
            if let Some(s) = seed {
                cfg.seeds.world = s;
            }
            if let Some(j) = junctions {
                cfg.world.target_junctions = j;
            }
            cfg.validate()?;
            let map = pipeline::generate_world(&cfg)?;
            std::fs::write(&out, map.to_json())?;
            cfg.save(&out.with_extension("config.json"))?;
            println!(
                "world seed {}: {} segments, {} junctions -> {}",
                cfg.seeds.world,
                map.segments.len(),
                map.junction_nodes.len(),
                out.display()
            );
            Ok(0)
        }
        Cmd::Demo { config, world, out, episodes, frames, seed } => {
            let mut cfg = config.load()?;
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            if let Some(n) = frames {
                cfg.frames_per_episode = n;
            }
            if let Some(s) = seed {
                cfg.seeds.demo = s;
                cfg.seeds.route = s;
            }
            cfg.validate()?;
            let map = load_world(&world)?;
            let dirs = pipeline::demo_corpus(&cfg, &map, &out)?;
            cfg.save(&out.join("config.json"))?;
            let mut total = 0usize;
            for dir in &dirs {
                total += tomonav::dataio::load_episode_meta(dir)?.len();
            }
            println!("collected {} episodes / {total} frames under {}", dirs.len(), out.display());
            Ok(0)
        }
        Cmd::Featurize { config, episode } => {
            let cfg = config.load()?;
            let cache = FeatureCache::open(&episode, &cfg.tomo)?;
            let log = tomonav::dataio::load_episode_meta(&episode)?;
            for record in &log.records {
                cache.get_or_compute(&episode, record)?;
            }
            let (hits, misses) = cache.stats();
            println!("featurized {}: {hits} cache hits, {misses} computed", episode.display());
            Ok(0)
        }
        Cmd::Train { config, data, out, preset, epochs, seed, resume } => {
            let mut cfg = config.load()?;
            if let Some(p) = preset {
                cfg.preset = p;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.seeds.network = s;
            }
            cfg.validate()?;
            let episodes = pipeline::discover_episodes(&data)?;
            let outcome = pipeline::train_run(&cfg, &episodes, &out, resume.as_deref())?;
            let last = outcome.report.epochs.last();
            println!(
                "trained {} on {} frames: final loss {:.4}, exact-match {:.1}% -> {}",
                cfg.preset,
                outcome.report.samples,
                outcome.report.final_loss,
                last.map(|e| e.exact_match_accuracy * 100.0).unwrap_or(0.0),
                out.display()
            );
            Ok(0)
        }
        Cmd::Eval { run, data, out, bench, assert, min_junction_f, min_accuracy } => {
            let cfg = RunConfig::load(&run.join("config.json"))?;
            let spec = cfg.network_spec()?;
            let net = load_weights(&run.join("weights.mavw"), &spec)?;
            let episodes = pipeline::discover_episodes(&data)?;
            let (train_ds, _val, test_ds) = build_dataset(&episodes, &cfg.split, &cfg.tomo)?;
            check_split_disjoint(&train_ds.episodes, &test_ds.episodes)?;
            let latency =
                if bench { Some(pipeline::bench_run(&cfg, &net, 60, 10)?) } else { None };
            let report = pipeline::evaluate(&net, &test_ds, latency)?;
            let out_path = out.unwrap_or_else(|| run.join("report.json"));
            std::fs::write(&out_path, report.to_json())?;
            println!("{}", report.table());
            println!("report -> {}", out_path.display());
            if assert && (report.f_measure < min_junction_f || report.accuracy < min_accuracy) {
                eprintln!(
                    "assertion failed: junction F {:.3} (min {min_junction_f}), accuracy {:.3} (min {min_accuracy})",
                    report.f_measure, report.accuracy
                );
                return Ok(3);
            }
            Ok(0)
        }
        Cmd::Rollout { run, world, route_seed, out, max_frames } => {
            let mut cfg = RunConfig::load(&run.join("config.json"))?;
            if let Some(s) = route_seed {
                cfg.seeds.route = s;
            }
            if let Some(m) = max_frames {
                cfg.max_rollout_frames = m;
            }
            let spec = cfg.network_spec()?;
            let net = load_weights(&run.join("weights.mavw"), &spec)?;
            let map = load_world(&world)?;
            let route = find_route(
                &map,
                cfg.route_min_junctions,
                cfg.route_min_length_m,
                cfg.route_max_length_m,
                cfg.seeds.route,
            )?;
            let report = pipeline::rollout_run(&cfg, &map, &route, &net)?;
            println!(
                "rollout: {:.0} m in {} frames, {} / {} turns, off-road {}, completed: {}",
                report.distance_m,
                report.frames,
                report.turns_executed.len(),
                report.directives_total,
                report.offroad_frames,
                report.completed
            );
            if let Some(path) = out {
                std::fs::write(&path, report.to_json())?;
                println!("report -> {}", path.display());
            }
            Ok(0)
        }
        Cmd::Bench { config, weights, preset, frames, warmup, out } => {
            let mut cfg = config.load()?;
            if let Some(p) = preset {
                cfg.preset = p;
            }
            // The benchmark featurizes at the network's input size.
            let spec = cfg.network_spec()?;
            cfg.tomo.output_size = spec.input_size;
            cfg.validate()?;
            let net = match weights {
                Some(path) => load_weights(&path, &spec)?,
                None => build_network(&spec, cfg.seeds.network)?,
            };
            let stats = pipeline::bench_run(&cfg, &net, frames, warmup)?;
            let report = tomonav::metrics::MetricsReport {
                f_measure: f64::NAN,
                accuracy: f64::NAN,
                exact_match_accuracy: f64::NAN,
                rmse: f64::NAN,
                eva_paper: f64::NAN,
                eva_standard: f64::NAN,
                pearson_r: vec![],
                latency: Some(stats.clone()),
                layers: spec.weight_layer_count(),
                parameters: net.count_params(),
            };
            println!("{}", report.table());
            println!(
                "mean {:.2} ms  p50 {:.2} ms  p95 {:.2} ms  ({} frames measured)",
                stats.mean_ms, stats.p50_ms, stats.p95_ms, stats.frames
            );
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&stats)?)?;
            }
            Ok(0)
        }
        Cmd::Radon { input, out, angles } => {
            let img = Image::load_pgm(&input)?;
            let cfg = TomoConfig { num_angles: angles, ..Default::default() };
            let sino = radon(&img, &cfg)?;
            sino.save(&out)?;
            println!(
                "{} -> {} ({} angles x {} offsets)",
                input.display(),
                out.display(),
                sino.num_angles(),
                sino.num_offsets()
            );
            Ok(0)
        }
        Cmd::Reconstruct { input, out, size } => {
            let sino = Sinogram::load(&input)?;
            let img = fbp(&sino, size)?;
            img.save_pgm(&out)?;
            println!("{} -> {} ({size}x{size})", input.display(), out.display());
            Ok(0)
        }
    }
}

fn check_split_disjoint(
    train: &[tomonav::dataio::EpisodeRef],
    test: &[tomonav::dataio::EpisodeRef],
) -> Result<()> {
    let train_dirs: std::collections::HashSet<_> = train.iter().map(|e| &e.dir).collect();
    for e in test {
        if train_dirs.contains(&e.dir) {
            return Err(Error::InvalidSplit(format!(
                "episode {} appears in both train and test splits",
                e.dir.display()
            )));
        }
    }
    Ok(())
}
