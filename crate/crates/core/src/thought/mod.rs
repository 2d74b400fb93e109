//! Toy thought-level RL: a trap-step chain task, a tabular softmax policy,
//! reset-based rollout buffers and the prefix-masked group-relative loss.

pub mod audit;
pub mod buffer;
pub mod localizer;
pub mod loss;
pub mod policy;
pub mod task;
pub mod train;

pub use audit::{localization_audit, AuditRecord, AuditReport, AuditSummary};
pub use buffer::{build_buffer, group_advantages, BufferConfig, BufferVariant, GroupKind, Rollout, RolloutBuffer, RolloutGroup, Split};
pub use localizer::Localizer;
pub use loss::{group_mean_signal, masked_loss, masked_loss_and_grad, per_token_signal, LossGrad, TokenGrad};
pub use policy::ThoughtPolicy;
pub use task::{TrapPrompt, TrapTask};
pub use train::{train, TrainConfig, TrainTrace, UpdateRecord};
