//! Motion saliency against annotated boxes, mask/motion coverage, and a
//! non-learned temporal-copy reconstructor used to gauge how hard a mask makes
//! reconstruction.

use crate::clipio::Clip;
use crate::maskgen::{MaskError, SlabSaliency};
use crate::motionfield::{MotionField, BLOCK_SIZE};
use crate::tokengrid::{GridSpec, Mask3D};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SaliencyError {
    #[error("no block center falls inside any box")]
    NoInsideBlocks,
    #[error("every block center falls inside a box")]
    NoOutsideBlocks,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("box {rect:?} in frame {frame} is empty or exceeds the {height}x{width} frame")]
    InvalidBox {
        frame: usize,
        rect: [usize; 4],
        height: usize,
        width: usize,
    },
    #[error("invalid annotation json: {0}")]
    Json(String),
}

impl From<MaskError> for SaliencyError {
    fn from(e: MaskError) -> Self {
        SaliencyError::DimMismatch(e.to_string())
    }
}

/// Per-frame lists of half-open pixel rectangles `[r0, c0, r1, c1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub frames: Vec<Vec<[usize; 4]>>,
}

impl BoxAnnotation {
    pub fn from_json(text: &str) -> Result<Self, SaliencyError> {
        serde_json::from_str(text).map_err(|e| SaliencyError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("annotations serialize")
    }

    /// Checks every rectangle against `height × width` frames.
    pub fn validate(&self, height: usize, width: usize) -> Result<(), SaliencyError> {
        for (frame, rects) in self.frames.iter().enumerate() {
            for &rect in rects {
                let [r0, c0, r1, c1] = rect;
                if r1 <= r0 || c1 <= c0 || r1 > height || c1 > width {
                    return Err(SaliencyError::InvalidBox {
                        frame,
                        rect,
                        height,
                        width,
                    });
                }
            }
        }
        Ok(())
    }

    fn contains(&self, frame: usize, row: usize, col: usize) -> bool {
        self.frames[frame]
            .iter()
            .any(|&[r0, c0, r1, c1]| (r0..r1).contains(&row) && (c0..c1).contains(&col))
    }
}

/// Mean motion magnitude of blocks whose center lies inside a box, divided by
/// the mean magnitude of the remaining blocks, over frames `1..T`.
///
/// The center of block `(br, bc)` is taken as pixel `(8 br + 4, 8 bc + 4)`.
pub fn saliency_score(motion: &MotionField, boxes: &BoxAnnotation) -> Result<f64, SaliencyError> {
    if boxes.frames.len() != motion.frames() {
        return Err(SaliencyError::DimMismatch(format!(
            "{} annotated frames for a {}-frame field",
            boxes.frames.len(),
            motion.frames()
        )));
    }
    boxes.validate(motion.height(), motion.width())?;
    let half = BLOCK_SIZE / 2;
    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for t in 1..motion.frames() {
        for br in 0..motion.block_rows() {
            for bc in 0..motion.block_cols() {
                let m = motion.get(t, br, bc).magnitude();
                let acc = if boxes.contains(t, br * BLOCK_SIZE + half, bc * BLOCK_SIZE + half) {
                    &mut inside
                } else {
                    &mut outside
                };
                acc.0 += m;
                acc.1 += 1;
            }
        }
    }
    if inside.1 == 0 {
        return Err(SaliencyError::NoInsideBlocks);
    }
    if outside.1 == 0 {
        return Err(SaliencyError::NoOutsideBlocks);
    }
    Ok((inside.0 / inside.1 as f64) / (outside.0 / outside.1 as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Masked fraction of the high-motion cells over all slabs.
    pub overall: f64,
    /// The same fraction per slab.
    pub per_slab: Vec<f64>,
}

/// Fraction of high-motion token cells that are masked.
///
/// Within each slab, a cell is high-motion when its mean magnitude is at least
/// the `k`-th largest value, `k = max(1, ceil((1 - q) * rows * cols))`; ties at
/// the threshold are included.
pub fn mask_motion_coverage(
    mask: &Mask3D,
    motion: &MotionField,
    spec: &GridSpec,
    q: f64,
) -> Result<Coverage, SaliencyError> {
    if !spec.same_shape(mask.spec()) {
        return Err(SaliencyError::DimMismatch("mask grid differs from token grid".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(SaliencyError::DimMismatch(format!("quantile {q} outside [0, 1]")));
    }
    let saliency = SlabSaliency::new(spec, motion)?;
    let n = spec.cells_per_slab();
    let k = (((1.0 - q) * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let (mut hit, mut total) = (0usize, 0usize);
    let mut per_slab = Vec::with_capacity(spec.slabs);
    for slab in 0..spec.slabs {
        let values = saliency.token_sums(slab);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let threshold = sorted[k - 1];
        // Still cells never count as high-motion while anything in the slab moves.
        let still_excluded = threshold == 0.0 && sorted[0] > 0.0;
        let (mut h, mut t) = (0usize, 0usize);
        for (i, &v) in values.iter().enumerate() {
            if v >= threshold && !(still_excluded && v == 0.0) {
                t += 1;
                if mask.is_masked(slab, i / spec.cols, i % spec.cols) {
                    h += 1;
                }
            }
        }
        per_slab.push(h as f64 / t as f64);
        hit += h;
        total += t;
    }
    Ok(Coverage {
        overall: hit as f64 / total as f64,
        per_slab,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub clip: Clip,
    /// Mean squared error over masked samples, in squared 8-bit units.
    pub mse: f64,
    /// Every token was masked, so masked cells were filled with 128.
    pub fallback_fill: bool,
    /// Masked cells with no visible slab, filled with the visible mean.
    pub mean_filled_cells: usize,
}

/// Fills each masked token from the same cell of the nearest slab where it is
/// visible (ties toward the earlier slab). Cells masked in every slab take the
/// rounded per-channel mean of all visible samples.
pub fn temporal_copy_reconstruct(
    clip: &Clip,
    mask: &Mask3D,
    spec: &GridSpec,
) -> Result<Reconstruction, SaliencyError> {
    let (t, h, w) = spec.clip_dims();
    if (clip.frames(), clip.height(), clip.width()) != (t, h, w) {
        return Err(SaliencyError::DimMismatch(format!(
            "clip {}x{}x{} vs grid {t}x{h}x{w}",
            clip.frames(),
            clip.height(),
            clip.width()
        )));
    }
    if !spec.same_shape(mask.spec()) {
        return Err(SaliencyError::DimMismatch("mask grid differs from token grid".into()));
    }
    let channels = clip.channels();
    let patch = spec.patch;

    let mut sums = vec![0u64; channels];
    let mut visible_pixels = 0u64;
    for index in 0..spec.total() {
        if mask.is_masked_index(index) {
            continue;
        }
        let tok = spec.coord(index);
        let b = spec.token_to_pixel_box(tok.slab, tok.row, tok.col).unwrap();
        for f in b.frames.clone() {
            for r in b.rows.clone() {
                for c in b.cols.clone() {
                    for (ch, s) in sums.iter_mut().enumerate() {
                        *s += u64::from(clip.sample(f, r, c, ch));
                    }
                }
            }
        }
        visible_pixels += (patch.frames * patch.height * patch.width) as u64;
    }
    let fallback_fill = visible_pixels == 0;
    let fill: Vec<u8> = sums
        .iter()
        .map(|&s| {
            if fallback_fill {
                128
            } else {
                ((2 * s + visible_pixels) / (2 * visible_pixels)) as u8
            }
        })
        .collect();

    let mut out = clip.clone();
    let mut sq_err = 0u64;
    let mut masked_samples = 0u64;
    let mut mean_filled_cells = 0;
    for index in 0..spec.total() {
        if !mask.is_masked_index(index) {
            continue;
        }
        let tok = spec.coord(index);
        let source = nearest_visible(mask, tok.slab, tok.row, tok.col);
        if source.is_none() {
            mean_filled_cells += 1;
        }
        let b = spec.token_to_pixel_box(tok.slab, tok.row, tok.col).unwrap();
        for (k, f) in b.frames.clone().enumerate() {
            for r in b.rows.clone() {
                for c in b.cols.clone() {
                    for (ch, &mean) in fill.iter().enumerate() {
                        let value = match source {
                            Some(s) => clip.sample(s * patch.frames + k, r, c, ch),
                            None => mean,
                        };
                        let d = i64::from(value) - i64::from(clip.sample(f, r, c, ch));
                        sq_err += (d * d) as u64;
                        let at = out.offset(f, r, c, ch);
                        out.data_mut()[at] = value;
                    }
                }
            }
        }
        masked_samples += (patch.frames * patch.height * patch.width * channels) as u64;
    }
    let mse = if masked_samples == 0 {
        0.0
    } else {
        sq_err as f64 / masked_samples as f64
    };
    Ok(Reconstruction {
        clip: out,
        mse,
        fallback_fill,
        mean_filled_cells,
    })
}

/// Nearest slab (by `|Δ|`, earlier first) where cell `(row, col)` is visible.
fn nearest_visible(mask: &Mask3D, slab: usize, row: usize, col: usize) -> Option<usize> {
    let slabs = mask.spec().slabs;
    (1..slabs).find_map(|d| {
        let earlier = slab.checked_sub(d).filter(|&s| !mask.is_masked(s, row, col));
        let later = Some(slab + d).filter(|&s| s < slabs && !mask.is_masked(s, row, col));
        earlier.or(later)
    })
}
