//! Dual-branch ConvLSTM attention network for joint hyperspectral and LiDAR
//! pixel classification, built on a small f64 tensor library with a tape
//! autodiff.

pub mod attention;
pub mod autodiff;
pub mod convlstm;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod network;
pub mod tensor;

pub use autodiff::{Adam, AdamConfig, Gradients, Graph, ParamId, ParamStore, Var};
pub use data::{MetricsReport, PatchSet, Sample, SceneCube};
pub use error::{Error, FormatError, Result};
pub use network::{Network, NetworkConfig, Route, Toggles};
pub use tensor::{ConvSpec, Mode, Tensor};
