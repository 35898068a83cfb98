//! Gaussian-splat primitives, SE(3) utilities, tiled rendering with an
//! exhaustive oracle, analytic gradients, the bundle container and metrics.

pub mod bundle;
pub mod camera;
pub mod codec;
pub mod error;
pub mod gaussians;
pub mod image;
pub mod math;
pub mod metrics;
pub mod ply;
pub mod render;
pub mod se3;
pub mod sh;
pub mod synth;

pub use bundle::{load_bundle, save_bundle, Bundle};
pub use camera::CameraModel;
pub use error::{BundleError, Error, Result};
pub use gaussians::{GaussianSet, Splat, SplatLabel, Violation};
pub use image::Image;
pub use metrics::{metrics, Metrics};
pub use render::{render_oracle, render_tiled, RenderedFrame, TileRenderer};
pub use se3::{interpolate_pose, Pose, Twist};
