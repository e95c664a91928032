//! Motion-guided masking for masked video pretraining.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! - [`clipio`]: raw clip containers (RVC, Y4M luma), luma conversion, PPM/PGM export.
//! - [`motionfield`]: 8×8 block-matching motion estimation, MVF files, nearest upsampling.
//! - [`tokengrid`]: the `t×h×w` token lattice, pixel/token coordinate maps, and [`Mask3D`].
//! - [`maskgen`]: random, tube, block, simulated-motion and motion-guided mask generators.
//! - [`saliency`]: motion saliency scores, mask/motion coverage, temporal-copy reconstruction.
//!
//! Everything is a pure function of its inputs; all randomness flows through the
//! portable [`Rng`].

pub mod clipio;
pub mod maskgen;
pub mod motionfield;
pub mod rng;
pub mod saliency;
pub mod tokengrid;

pub use clipio::{Clip, ClipError};
pub use maskgen::{BoxTrack, Generator, MaskOutput, MaskParams, SlabBox};
pub use motionfield::{MotionError, MotionField, UpsampledField, BLOCK_SIZE};
pub use rng::Rng;
pub use saliency::{BoxAnnotation, SaliencyError};
pub use tokengrid::{GridError, GridSpec, Mask3D, Occupancy};

/// Round-half-up of a non-negative real, as used for every count derived from a ratio.
pub fn round_half_up(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    (x + 0.5).floor() as usize
}
