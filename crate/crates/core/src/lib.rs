//! Attention-guided region mixing for a toy vision transformer.
//!
//! The crate bundles a small reverse-mode autodiff engine, a patch-based
//! transformer, top-down attention readout, window selection over attention
//! grids, label mixing, training objectives, an experiment harness, and the
//! file formats used by the command-line tool.

pub mod autodiff;
pub mod error;
pub mod grid;
pub mod harness;
pub mod image;
pub mod io;
pub mod label_mix;
pub mod losses;
pub mod region_mix;
pub mod td_attention;
pub mod tensor;
pub mod vit;

pub use error::{Error, Result};
pub use grid::{AttentionGrid, Grid};
pub use image::Image;
pub use label_mix::{MixRatio, ProbVector};
pub use losses::{LossBundle, LossMode};
pub use region_mix::{MixPlan, PatchMask};
pub use td_attention::{BalanceFactor, GridReduction, TdAttentionConfig};
pub use tensor::Tensor;
pub use vit::{VitConfig, VitModel};
