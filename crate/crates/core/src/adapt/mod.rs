//! Self-supervised adaptation: the four style/consistency losses, the
//! combined visual and dynamics objectives, and the three-stage curriculum.

mod curriculum;
mod losses;

pub use curriculum::{
    run_curriculum, write_loss_csv, CurriculumOptions, CurriculumRun, CurriculumSchedule,
    LossRecord, StageAudit,
};
pub use losses::{
    loss_dynamics, loss_ego_st, loss_fc, loss_global_st, loss_tc, loss_visual, AdaptConfig,
    IdentityStyle, Style,
};
