//! End-to-end workflow stages shared by the command-line interface and
//! the acceptance experiments: world generation, demonstration
//! corpora, training runs, evaluation and benchmarking.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::dataio::{build_dataset, save_episode, Dataset};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{
    accuracy, confusion, eva, f_measure, fps_benchmark, pearson_r, rmse, EvaForm, LatencyStats,
    MetricsReport,
};
use crate::nn::{
    build_network, load_checkpoint, save_checkpoint, save_weights, train_epochs, Network,
    SgdOptimizer, Tensor, TrainReport,
};
use crate::simworld::{
    collect_demonstrations, find_route, generate_map, render_view, rollout, DronePose, RoadMap,
    RolloutPolicy, RolloutReport, RoutePath,
};
use crate::tomography::featurize;

pub fn generate_world(cfg: &RunConfig) -> Result<RoadMap> {
    generate_map(cfg.seeds.world, &cfg.world)
}

/// Per-episode route/demo seeds derived from the run seeds.
fn episode_seeds(cfg: &RunConfig, index: usize) -> (u64, u64) {
    let salt = (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (cfg.seeds.route ^ salt, cfg.seeds.demo.wrapping_add(index as u64))
}

/// Collect `cfg.episodes` demonstration episodes on `map` into
/// `out_dir/ep_NNN`, each on its own seeded route. Returns the episode
/// directories in index order.
pub fn demo_corpus(cfg: &RunConfig, map: &RoadMap, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut dirs = Vec::with_capacity(cfg.episodes);
    for i in 0..cfg.episodes {
        let (route_seed, demo_seed) = episode_seeds(cfg, i);
        let route = find_route(
            map,
            cfg.route_min_junctions,
            cfg.route_min_length_m,
            cfg.route_max_length_m,
            route_seed,
        )?;
        let log = collect_demonstrations(
            map,
            &route,
            None,
            cfg.frames_per_episode,
            demo_seed,
            &cfg.camera,
            &cfg.nav,
            &cfg.oracle,
            &cfg.demo,
        )?;
        let dir = out_dir.join(format!("ep_{i:03}"));
        save_episode(&log, &dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Episode subdirectories of a corpus directory, sorted by name.
pub fn discover_episodes(data_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(data_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("log.jsonl").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no episode directories under {}",
            data_dir.display()
        )));
    }
    Ok(dirs)
}

pub struct TrainOutcome {
    pub net: Network,
    pub report: TrainReport,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Train per the config: split the corpus, featurize through the
/// cache, run (or resume) SGD, and leave weights + checkpoint +
/// resolved config in `run_dir`.
pub fn train_run(
    cfg: &RunConfig,
    episode_dirs: &[PathBuf],
    run_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.network_spec()?;
    if spec.input_size != cfg.tomo.output_size {
        return Err(Error::InvalidShape(format!(
            "preset '{}' expects {} px inputs but the featurizer produces {} px",
            cfg.preset, spec.input_size, cfg.tomo.output_size
        )));
    }
    std::fs::create_dir_all(run_dir)?;
    let (train_ds, val_ds, test_ds) = build_dataset(episode_dirs, &cfg.split, &cfg.tomo)?;
    let data = train_ds.to_train_set();

    let (mut net, mut opt, start_epoch) = match resume {
        Some(ckpt) => {
            let (net, velocity, next_epoch) = load_checkpoint(ckpt, &spec)?;
            let opt = SgdOptimizer {
                lr: cfg.train.learning_rate,
                momentum: cfg.train.momentum,
                velocity,
            };
            (net, opt, next_epoch)
        }
        None => {
            let net = build_network(&spec, cfg.seeds.network)?;
            let opt = SgdOptimizer::new(&net, cfg.train.learning_rate, cfg.train.momentum)?;
            (net, opt, 0)
        }
    };

    let report =
        train_epochs(&mut net, &mut opt, &data, &cfg.train, start_epoch, Some(run_dir), None)?;
    save_weights(&net, &run_dir.join("weights.mavw"))?;
    save_checkpoint(&net, &opt.velocity, cfg.train.epochs, &run_dir.join("checkpoint.mavc"))?;
    cfg.save(&run_dir.join("config.json"))?;
    std::fs::write(run_dir.join("train_report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(TrainOutcome { net, report, train: train_ds, val: val_ds, test: test_ds })
}

/// Forward a whole dataset in batches; returns per-frame predictions.
pub fn predict_dataset(net: &Network, ds: &Dataset) -> Result<Vec<[f64; 5]>> {
    let set = ds.to_train_set();
    let mut preds = Vec::with_capacity(set.len());
    let batch = 64;
    let mut start = 0;
    while start < set.len() {
        let indices: Vec<usize> = (start..set.len().min(start + batch)).collect();
        let (x, _) = set.batch_tensors(&indices);
        for av in net.forward(&x)? {
            preds.push(av.as_array());
        }
        start += batch;
    }
    Ok(preds)
}

/// Evaluation protocol: junction-head confusion (the headline
/// classification task), per-head threshold agreement, RMSE and
/// explained variance on the command heads, and per-head correlation
/// of the predicted vs expert series.
pub fn evaluate(net: &Network, ds: &Dataset, latency: Option<LatencyStats>) -> Result<MetricsReport> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("evaluation dataset is empty".into()));
    }
    let preds = predict_dataset(net, ds)?;
    let junction_pred: Vec<bool> = preds.iter().map(|p| p[4] >= 0.5).collect();
    let junction_true: Vec<bool> = ds.targets.iter().map(|t| t[4] >= 0.5).collect();
    let counts = confusion(&junction_pred, &junction_true)?;

    let mut exact = 0usize;
    for (p, t) in preds.iter().zip(&ds.targets) {
        if (0..5).all(|h| (p[h] >= 0.5) == (t[h] >= 0.5)) {
            exact += 1;
        }
    }

    // Command heads (all but the junction flag) as flat series.
    let mut cmd_pred = Vec::with_capacity(preds.len() * 4);
    let mut cmd_true = Vec::with_capacity(preds.len() * 4);
    for (p, t) in preds.iter().zip(&ds.targets) {
        cmd_pred.extend_from_slice(&p[..4]);
        cmd_true.extend_from_slice(&t[..4]);
    }

    let pearson: Vec<Option<f64>> = (0..5)
        .map(|h| {
            let xs: Vec<f64> = preds.iter().map(|p| p[h]).collect();
            let ys: Vec<f64> = ds.targets.iter().map(|t| t[h]).collect();
            pearson_r(&xs, &ys).ok()
        })
        .collect();

    Ok(MetricsReport {
        f_measure: f_measure(&counts, 0.9)?,
        accuracy: accuracy(&counts)?,
        exact_match_accuracy: exact as f64 / preds.len() as f64,
        rmse: rmse(&cmd_true, &cmd_pred)?,
        eva_paper: eva(&cmd_true, &cmd_pred, EvaForm::Paper)?,
        eva_standard: eva(&cmd_true, &cmd_pred, EvaForm::Standard)?,
        pearson_r: pearson,
        latency,
        layers: net.spec().weight_layer_count(),
        parameters: net.count_params(),
    })
}

/// Frames for the throughput benchmark: rendered views along a route
/// through a seeded world.
pub fn bench_frames(cfg: &RunConfig, count: usize) -> Result<Vec<Image>> {
    let map = generate_world(cfg)?;
    let route = find_route(&map, 1, 50.0, 10_000.0, cfg.seeds.route)?;
    let mut frames = Vec::with_capacity(count);
    let step = route.length / count as f64;
    for i in 0..count {
        let u = step * i as f64;
        let p = route.point_at(u);
        let q = route.point_at((u + 1.0).min(route.length));
        let heading = (q[1] - p[1]).atan2(q[0] - p[0]);
        frames.push(render_view(&map, &DronePose::new(p[0], p[1], heading), &cfg.camera)?);
    }
    Ok(frames)
}

/// Wall-clock featurize+forward latency over rendered frames.
pub fn bench_run(cfg: &RunConfig, net: &Network, count: usize, warmup: usize) -> Result<LatencyStats> {
    let frames = bench_frames(cfg, count)?;
    let tomo = cfg.tomo.clone();
    let mut pipeline = |frame: &Image| -> Result<()> {
        let feature = featurize(frame, &tomo)?;
        let x = Tensor::new(&[1, 1, feature.height(), feature.width()], feature.data().to_vec())?;
        let out = net.forward(&x)?;
        std::hint::black_box(out);
        Ok(())
    };
    fps_benchmark(&mut pipeline, &frames, warmup)
}

/// Closed-loop rollout of a trained network on a fresh route.
pub fn rollout_run(
    cfg: &RunConfig,
    map: &RoadMap,
    route: &RoutePath,
    net: &Network,
) -> Result<RolloutReport> {
    rollout(
        map,
        route,
        RolloutPolicy::Network { net, tomo: &cfg.tomo },
        &cfg.camera,
        &cfg.nav,
        &cfg.oracle,
        cfg.max_rollout_frames,
    )
}
