//! Windowed dynamic body: motion-driven window partitioning, a hexplane
//! spatio-temporal encoder, a tunable deformation MLP and overlap-frame
//! consistency fine-tuning.

mod consistency;
mod hexplane;
mod motion;
mod partition;
mod tunable;
mod window;

pub use consistency::{consistency_loss, finetune_window, step_kind, Finetune, FinetuneConfig, ReconTarget, StepKind};
pub use hexplane::{Hexplane, HexplaneConfig, PLANES};
pub use motion::motion_from_frames;
pub use partition::{partition_windows, MotionSignal, WindowPlan, DEFAULT_WINDOW_CAP};
pub use tunable::{leaky_relu, softmax, tunable_layer, TunableLayer, TunableMlp};
pub use window::{decode_body, encode_body, BodyModel, WindowConfig, WindowModel, DEFORM_OUTPUTS};
