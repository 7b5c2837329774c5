//! Differentiable Gaussian splatting on the CPU with opacity-gradient driven
//! adaptive density control.

pub mod adc;
pub mod camera;
pub mod error;
pub mod gaussian;
pub mod image;
pub mod io;
pub mod loss;
pub mod optim;
pub mod render;
pub mod trainer;

pub use adc::{AdcConfig, AdcMode, AdcState};
pub use camera::Camera;
pub use error::{Error, Result};
pub use gaussian::{GaussianCloud, GradientBuffer};
pub use image::Image;
pub use loss::LossWeights;
pub use optim::{LearningRates, OptimizerState};
pub use render::{RenderOutput, RenderSettings};
pub use trainer::{Scene, TrainConfig, View};
