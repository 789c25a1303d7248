//! Data-free enhancement after distillation: hinge reward optimisation,
//! distribution matching against a fake score, and an adversarial loss on
//! forward-diffused samples.

mod dm;
mod gan;
mod mps;
mod reward;
mod run;

pub use self::{
    dm::{dfdm_grad, dfdm_surrogate, dm_direction, fake_score_step, ScorePair},
    gan::{gan_losses, Discriminator, GanOutput, CLAMP},
    mps::{mps_loss, mps_student_loss},
    reward::RewardModel,
    run::{enhance_loop, held_out_reward, train_fake_score, EnhanceConfig, EnhanceOutcome, Stage},
};
