//! Command-line entry point: pretraining, trajectory logging, corpus
//! collection, style training, adaptation, evaluation, ablation, and
//! report printing. Exit codes: 0 success, 2 config error, 3 divergence,
//! 1 any other failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mapadapt::adapt::write_loss_csv;
use mapadapt::harness::{
    baseline_gt_upper_bound, build_clean_corpora, dump_scenario_pngs, log_trajectories, logs_hash,
    pointnav_eval, replay_evaluate, run_ablation, save_logs, ExperimentConfig, MetricsReport,
    MetricsRow, Scenario, POINTNAV_SALT,
};
use mapadapt::maptrans::{collect_noisy_maps, train_style, CollectConfig, MapDataset};
use mapadapt::perception::{pretrain, PretrainConfig, Pretrained};
use mapadapt::world::{generate_floorplan, random_navigable_pose, Deployment};
use mapadapt::{Error, Result};

#[derive(Parser)]
#[command(name = "mapadapt", about = "Map-based navigation agent adaptation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment config (TOML); defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario override: clean | speckle | low_light | large_scale.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pretrain the mapper and localizer on clean scenes.
    Pretrain,
    /// Log un-adapted-agent trajectories on the eval scenes.
    Log,
    /// Collect clean and deployment map corpora for style training.
    Collect,
    /// Train the ego and global style networks on collected corpora.
    TrainStyle,
    /// Run the three-stage adaptation curriculum on the adapt scenes.
    Adapt,
    /// Evaluate pretrained and adapted checkpoints on fresh logs.
    Eval,
    /// Run the five cumulative loss variants.
    Ablate,
    /// Print a saved report as an aligned text table.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::ConfigInvalid(_) | Error::SchemaMismatch(_) => 2,
                Error::Diverged(_) | Error::StageDiverged(_) | Error::Collapsed(_) => 3,
                _ => 1,
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(name) = &cli.scenario {
        cfg.scenario = Scenario::parse(name)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_pretrained(out: &Path) -> Result<Pretrained> {
    let dir = out.join("pretrained");
    Pretrained::load(&dir).map_err(|_| {
        Error::ConfigInvalid(format!(
            "no pretrained checkpoint under {} (run `pretrain` first)",
            dir.display()
        ))
    })
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    std::fs::create_dir_all(out)?;
    match cli.cmd {
        Cmd::Pretrain => {
            let mut pre = PretrainConfig::default();
            pre.floorplan_seeds = cfg.clean_seeds.clone();
            pretrain(&pre, cfg.master_seed, &out.join("pretrained"))?;
            println!("pretrained checkpoint written to {}", out.join("pretrained").display());
        }
        Cmd::Log => {
            let agent = load_pretrained(out)?;
            let logs = log_trajectories(&agent, &cfg)?;
            save_logs(&logs, &out.join("logs"))?;
            println!("{} episodes logged, hash {:016x}", logs.len(), logs_hash(&logs));
        }
        Cmd::Collect => {
            let agent = load_pretrained(out)?;
            let (clean_ego, clean_global) = build_clean_corpora(&cfg)?;
            clean_ego.save(&out.join("corpora/clean_ego"))?;
            clean_global.save(&out.join("corpora/clean_global"))?;

            let collect = CollectConfig {
                episodes: cfg.episodes_per_scene,
                steps_per_episode: cfg.episode_steps,
                ego_stride: cfg.curriculum.ego_stride,
            };
            let scene = cfg.adapt_seeds[0];
            let plan = generate_floorplan(scene, cfg.scale_factor())?;
            let mut rng = mapadapt::harness::episode_rng(cfg.master_seed, scene, 0);
            let start = random_navigable_pose(&plan, &mut rng);
            let mut env = Deployment::new(
                plan,
                cfg.corruption(),
                cfg.act_noise.clone(),
                cfg.sen_noise.clone(),
                start,
            )?;
            let (noisy_ego, noisy_global) =
                collect_noisy_maps(&agent, &mut env, &collect, cfg.master_seed ^ scene)?;
            noisy_ego.save(&out.join("corpora/noisy_ego"))?;
            noisy_global.save(&out.join("corpora/noisy_global"))?;
            println!(
                "corpora: {} clean ego, {} clean global, {} noisy ego, {} noisy global",
                clean_ego.len(),
                clean_global.len(),
                noisy_ego.len(),
                noisy_global.len()
            );
        }
        Cmd::TrainStyle => {
            let dir = out.join("corpora");
            let clean_ego = MapDataset::load(&dir.join("clean_ego"))?;
            let clean_global = MapDataset::load(&dir.join("clean_global"))?;
            let noisy_ego = MapDataset::load(&dir.join("noisy_ego"))?;
            let noisy_global = MapDataset::load(&dir.join("noisy_global"))?;
            let (s_ego, ego_stats) =
                train_style(&clean_ego, &noisy_ego, &cfg.curriculum.style, cfg.master_seed)?;
            let (s_global, global_stats) = train_style(
                &clean_global,
                &noisy_global,
                &cfg.curriculum.style,
                cfg.master_seed ^ 1,
            )?;
            s_ego.save(&out.join("s_ego.ckpt"))?;
            s_global.save(&out.join("s_global.ckpt"))?;
            let last = |s: &[mapadapt::maptrans::CycleTrainStats]| {
                s.last().map(|t| (t.loss_g, t.loss_d)).unwrap_or((0.0, 0.0))
            };
            let (eg, ed) = last(&ego_stats);
            let (gg, gd) = last(&global_stats);
            println!("ego style: loss_g {eg:.4} loss_d {ed:.4}");
            println!("global style: loss_g {gg:.4} loss_d {gd:.4}");
        }
        Cmd::Adapt => {
            let agent = load_pretrained(out)?;
            let (clean_ego, clean_global) = build_clean_corpora(&cfg)?;
            let (adapted, runs) = mapadapt::harness::adapt_agent(
                &agent,
                &cfg,
                &cfg.weights,
                &clean_ego,
                &clean_global,
                0,
            )?;
            adapted.save(&out.join("adapted"))?;
            for (scene, run) in cfg.adapt_seeds.iter().zip(&runs) {
                write_loss_csv(&run.records, &out.join(format!("loss_scene_{scene}.csv")))?;
                if !run.audit.holds() {
                    return Err(Error::SchemaMismatch(format!(
                        "stage audit failed on scene {scene}"
                    )));
                }
            }
            println!("adapted checkpoint written to {}", out.join("adapted").display());
        }
        Cmd::Eval => {
            let agent = load_pretrained(out)?;
            let logs = log_trajectories(&agent, &cfg)?;
            save_logs(&logs, &out.join("logs"))?;
            let hash = logs_hash(&logs);
            let scenario = cfg.scenario.name();

            let mut report = MetricsReport::default();
            let na_replay = replay_evaluate(&agent, &logs)?;
            let (s, p) = pointnav_eval(&agent, &cfg, POINTNAV_SALT)?;
            report
                .rows
                .push(MetricsRow::from_replay("na", scenario, &na_replay, s, p, hash));

            let adapted_dir = out.join("adapted");
            if adapted_dir.is_dir() {
                let adapted = Pretrained::load(&adapted_dir)?;
                let replay = replay_evaluate(&adapted, &logs)?;
                let (s, p) = pointnav_eval(&adapted, &cfg, POINTNAV_SALT)?;
                report
                    .rows
                    .push(MetricsRow::from_replay("moda", scenario, &replay, s, p, hash));
                dump_scenario_pngs(&out.join("figs"), &agent, &adapted, &logs[0])?;
                report.rows.push(baseline_gt_upper_bound(&cfg, &agent, &logs)?);
            }
            report.save(out)?;
            print!("{}", report.to_text());
        }
        Cmd::Ablate => {
            let agent = load_pretrained(out)?;
            let art = run_ablation(&cfg, &agent)?;
            let dir = out.join("ablation");
            art.report.save(&dir)?;
            std::fs::write(
                dir.join("pooled_std.txt"),
                format!("{:.6}\n", art.pooled_std()),
            )?;
            print!("{}", art.report.to_text());
        }
        Cmd::Report => {
            let report = MetricsReport::load(out)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}
