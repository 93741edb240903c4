use std::time::Instant;
use mapadapt::harness::*;
use mapadapt::perception::{PretrainConfig, Pretrained};
use mapadapt::adapt::{CurriculumSchedule, CurriculumOptions};
use mapadapt::maptrans::CycleTrainConfig;
use mapadapt::world::*;

fn main() {
    let t0 = Instant::now();
    let agent = Pretrained::load(std::path::Path::new("/tmp/pilot_pre")).unwrap();

    // criterion-5 style check: clean scenario, zero-mean pretraining noise
    let pre = PretrainConfig::default();
    let mut c5 = ExperimentConfig::default();
    c5.scenario = Scenario::Clean;
    c5.act_noise = pre.act_noise.clone();
    c5.sen_noise = pre.sen_noise.clone();
    c5.eval_seeds = vec![301, 302];
    c5.episodes_per_scene = 2;
    c5.episode_steps = 250;
    let t1 = Instant::now();
    let clean_logs = log_trajectories(&agent, &c5).unwrap();
    let clean = replay_evaluate(&agent, &clean_logs).unwrap();
    println!("clean zero-mean NA: trans {:.4} rot {:.3} ego_mse {:.4} global_mse {:.4} ({:.0}s)",
        clean.pose.translation, clean.pose.rotation, clean.ego_mse, clean.global_mse, t1.elapsed().as_secs_f64());

    // speckle adaptation
    let mut cfg = ExperimentConfig::default();
    cfg.scenario = Scenario::Speckle;
    cfg.adapt_seeds = vec![201];
    cfg.eval_seeds = vec![301, 302];
    cfg.episodes_per_scene = 2;
    cfg.episode_steps = 250;
    cfg.clean_episodes_per_scene = 2;
    cfg.schedule = CurriculumSchedule { t_c: 400, t_v: 800, t_d: 1400 };
    cfg.curriculum = CurriculumOptions {
        episode_len: 100,
        ego_stride: 8,
        style: CycleTrainConfig { iterations: 150, batch: 4, min_items: 2, buffer: 16, ..Default::default() },
    };
    let t2 = Instant::now();
    let logs = log_trajectories(&agent, &cfg).unwrap();
    let na = replay_evaluate(&agent, &logs).unwrap();
    println!("speckle NA: trans {:.4} rot {:.3} ego_mse {:.4} global_mse {:.4} ({:.0}s)",
        na.pose.translation, na.pose.rotation, na.ego_mse, na.global_mse, t2.elapsed().as_secs_f64());
    let (ce, cg) = build_clean_corpora(&cfg).unwrap();
    println!("corpora: ego {} global {}", ce.len(), cg.len());
    let t3 = Instant::now();
    match adapt_agent(&agent, &cfg, &cfg.weights, &ce, &cg, 0) {
        Ok((adapted, runs)) => {
            println!("adapt: {:.0}s audit {}", t3.elapsed().as_secs_f64(), runs[0].audit.holds());
            let moda = replay_evaluate(&adapted, &logs).unwrap();
            println!("speckle MoDA: trans {:.4} rot {:.3} ego_mse {:.4} global_mse {:.4}",
                moda.pose.translation, moda.pose.rotation, moda.ego_mse, moda.global_mse);
            let t4 = Instant::now();
            let (s_na, p_na) = pointnav_eval(&agent, &cfg, POINTNAV_SALT).unwrap();
            let (s_mo, p_mo) = pointnav_eval(&adapted, &cfg, POINTNAV_SALT).unwrap();
            println!("pointnav NA {:.2}/{:.2} MoDA {:.2}/{:.2} ({:.0}s)", s_na, p_na, s_mo, p_mo, t4.elapsed().as_secs_f64());
        }
        Err(e) => println!("adapt FAILED after {:.0}s: {e}", t3.elapsed().as_secs_f64()),
    }
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
