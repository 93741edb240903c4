//! Experiment orchestration: configuration, trajectory logging and replay,
//! the generalization/specialization/ablation protocols, and reporting.

mod config;
mod protocol;
mod replay;
mod report;
mod trajlog;

pub use config::{ExperimentConfig, Scenario, SplitMode};
pub use protocol::{
    adapt_agent, baseline_gt_upper_bound, build_clean_corpora, dump_scenario_pngs, mean,
    median_of, pointnav_eval, run_ablation, run_generalization, run_specialization,
    AblationArtifacts, LossVariant, ScenarioArtifacts, POINTNAV_SALT,
};
pub use replay::{replay_evaluate, replay_maps, replay_pose_error, replay_pose_track, ReplayOutcome};
pub use report::{dump_map_png, MetricsReport, MetricsRow, REPORT_COLUMNS};
pub use trajlog::{
    episode_rng, load_logs, log_episode, log_trajectories, logs_hash, observe_logged,
    plan_geometry, save_logs, StepRecord, TrajectoryLog, LOG_SCHEMA_VERSION,
};
