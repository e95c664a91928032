//! Mask generators.
//!
//! Six strategies share one contract: the returned [`Mask3D`] holds exactly
//! `round(gamma * N)` masked tokens. Generators first build an approximate
//! occupancy (per-slab quota `round(gamma * rows * cols)`) and then call
//! [`correct_count`] to fix the rounding residue.
//!
//! | generator    | initial position | temporal propagation | spatial continuity |
//! |--------------|------------------|----------------------|--------------------|
//! | `random`     | random           | none                 | sparse             |
//! | `tube`       | random           | static               | sparse             |
//! | `block`      | random           | static               | dense              |
//! | `smm-sparse` | random           | random velocity      | sparse             |
//! | `smm-dense`  | random           | random velocity      | dense              |
//! | `mgm-sparse` | motion           | motion               | sparse             |
//! | `mgm-dense`  | random           | motion argmax        | dense              |

use crate::motionfield::{MotionField, MotionVector, BLOCK_SIZE};
use crate::rng::Rng;
use crate::tokengrid::{GridError, GridSpec, Mask3D, Occupancy};
use crate::round_half_up;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_GAMMA: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask ratio {0} outside (0, 1]")]
    InvalidGamma(String),
    #[error("generator {0} needs a motion field")]
    MissingMotion(Generator),
    #[error("motion field {motion:?} (T,H,W) does not match clip {clip:?}")]
    MotionDimsMismatch {
        motion: (usize, usize, usize),
        clip: (usize, usize, usize),
    },
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Random,
    Tube,
    Block,
    SmmSparse,
    SmmDense,
    MgmSparse,
    MgmDense,
}

impl Generator {
    pub const ALL: [Generator; 7] = [
        Generator::Random,
        Generator::Tube,
        Generator::Block,
        Generator::SmmSparse,
        Generator::SmmDense,
        Generator::MgmSparse,
        Generator::MgmDense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Random => "random",
            Generator::Tube => "tube",
            Generator::Block => "block",
            Generator::SmmSparse => "smm-sparse",
            Generator::SmmDense => "smm-dense",
            Generator::MgmSparse => "mgm-sparse",
            Generator::MgmDense => "mgm-dense",
        }
    }

    pub fn needs_motion(self) -> bool {
        matches!(self, Generator::MgmSparse | Generator::MgmDense)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| MaskError::UnknownGenerator(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub gamma: f64,
    /// Largest per-axis box velocity in tokens per slab.
    pub velocity_cap: u32,
    /// Largest box size jitter in tokens per slab.
    pub jitter_cap: u32,
    pub seed: u64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            velocity_cap: 1,
            jitter_cap: 1,
            seed: 0,
        }
    }
}

impl MaskParams {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        if self.gamma > 0.0 && self.gamma <= 1.0 {
            Ok(())
        } else {
            Err(MaskError::InvalidGamma(self.gamma.to_string()))
        }
    }
}

/// One slab's rectangle in token units plus the cells the count correction
/// added to or removed from it, as `[x, y]` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabBox {
    pub slab: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub added: Vec<[usize; 2]>,
    pub removed: Vec<[usize; 2]>,
    /// Cell that must stay masked (the MGM argmax token), as `[x, y]`.
    #[serde(skip)]
    pub pinned: Option<[usize; 2]>,
}

impl SlabBox {
    fn new(slab: usize, x: usize, y: usize, w: usize, h: usize) -> Self {
        Self {
            slab,
            x,
            y,
            w,
            h,
            added: Vec::new(),
            removed: Vec::new(),
            pinned: None,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x..self.x + self.w).contains(&x) && (self.y..self.y + self.h).contains(&y)
    }
}

/// The per-slab rectangle trajectory of a box-driven mask.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoxTrack {
    pub slabs: Vec<SlabBox>,
    /// Width jitter `s_x` for slabs `1..T'`.
    pub jitter_x: Vec<i64>,
    /// Height jitter `s_y` for slabs `1..T'`.
    pub jitter_y: Vec<i64>,
    /// Velocity `(v_x, v_y)` for slabs `1..T'`; empty for MGM.
    pub velocity: Vec<(i64, i64)>,
}

impl BoxTrack {
    /// JSON array of `{slab, x, y, w, h, added, removed}` records.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.slabs).expect("box records serialize")
    }
}

/// Bookkeeping reported next to a generated mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub generator: Generator,
    pub gamma: f64,
    pub target_masked: usize,
    pub slab_quota: usize,
    /// `target_masked - slabs * slab_quota`.
    pub residue: i64,
    pub cells_added: usize,
    pub cells_removed: usize,
    /// The initial square did not fit the grid and was clamped.
    pub box_clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskOutput {
    pub mask: Mask3D,
    pub track: Option<BoxTrack>,
    pub stats: GenStats,
}

/// Anchors count correction to a box trajectory.
pub struct Anchor<'a> {
    pub track: &'a mut BoxTrack,
    pub slab_quota: usize,
}

/// Correction counts returned by [`correct_count`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Correction {
    pub added: usize,
    pub removed: usize,
}

/// Brings `occ` to exactly `target` masked tokens.
///
/// With an anchor, each slab is first moved to the anchor's quota and the
/// remaining global residue is spread one cell at a time over slabs
/// `0, 1, 2, ...` cyclically. Cells are taken from the rings around the slab's
/// box: additions from outside rings, removals from the border inward, both
/// clockwise from the top-left. Without an anchor, cells are drawn uniformly
/// from all eligible positions.
pub fn correct_count(
    occ: Occupancy,
    target: usize,
    anchor: Option<Anchor<'_>>,
    rng: &mut Rng,
) -> Result<(Mask3D, Correction), GridError> {
    let total = occ.spec().total();
    if target > total {
        return Err(GridError::TargetExceedsGrid { target, total });
    }
    let mut occ = occ;
    let mut fix = Correction::default();
    match anchor {
        None => {
            let count = occ.count();
            if count < target {
                let eligible: Vec<usize> = (0..total).filter(|&i| !occ.get_index(i)).collect();
                for k in rng.sample_indices(eligible.len(), target - count) {
                    occ.set_index(eligible[k], true);
                }
                fix.added = target - count;
            } else if count > target {
                let eligible: Vec<usize> = occ.iter_ones().collect();
                for k in rng.sample_indices(eligible.len(), count - target) {
                    occ.set_index(eligible[k], false);
                }
                fix.removed = count - target;
            }
        }
        Some(Anchor { track, slab_quota }) => {
            let spec = *occ.spec();
            let quota = slab_quota.min(spec.cells_per_slab());
            for slab in 0..spec.slabs {
                let boxed = &mut track.slabs[slab];
                while occ.slab_count(slab) < quota {
                    add_near_box(&mut occ, boxed);
                    fix.added += 1;
                }
                while occ.slab_count(slab) > quota {
                    remove_from_box(&mut occ, boxed);
                    fix.removed += 1;
                }
            }
            let mut slab = 0;
            while occ.count() != target {
                let boxed = &mut track.slabs[slab];
                if occ.count() < target {
                    if occ.slab_count(slab) < spec.cells_per_slab() {
                        add_near_box(&mut occ, boxed);
                        fix.added += 1;
                    }
                } else if occ.slab_count(slab) > 0 {
                    remove_from_box(&mut occ, boxed);
                    fix.removed += 1;
                }
                slab = (slab + 1) % spec.slabs;
            }
        }
    }
    let mask = occ.into_mask(target)?;
    Ok((mask, fix))
}

/// Cells of the boundary of rectangle `(x, y, w, h)` clockwise from its
/// top-left corner. Coordinates may lie outside the grid.
fn ring(x: i64, y: i64, w: i64, h: i64) -> Vec<(i64, i64)> {
    let mut cells = Vec::new();
    if w <= 0 || h <= 0 {
        return cells;
    }
    cells.extend((x..x + w).map(|cx| (cx, y)));
    cells.extend((y + 1..y + h).map(|cy| (x + w - 1, cy)));
    if h > 1 {
        cells.extend((x..x + w - 1).rev().map(|cx| (cx, y + h - 1)));
    }
    if w > 1 {
        cells.extend((y + 1..y + h - 1).rev().map(|cy| (x, cy)));
    }
    cells
}

fn in_grid(spec: &GridSpec, (x, y): (i64, i64)) -> Option<(usize, usize)> {
    (x >= 0 && y >= 0 && (x as usize) < spec.cols && (y as usize) < spec.rows)
        .then_some((x as usize, y as usize))
}

fn add_near_box(occ: &mut Occupancy, b: &mut SlabBox) {
    let spec = *occ.spec();
    let (x, y, w, h) = (b.x as i64, b.y as i64, b.w as i64, b.h as i64);
    let reach = (spec.rows.max(spec.cols) + 1) as i64;
    for k in 0..=reach {
        let mut cells = ring(x - k, y - k, w + 2 * k, h + 2 * k);
        if k > 0 {
            // Start beside the corner so the first added cell touches the box.
            cells.rotate_left(1);
        }
        for cell in cells {
            if let Some((cx, cy)) = in_grid(&spec, cell) {
                if !occ.get(b.slab, cy, cx) {
                    occ.set(b.slab, cy, cx, true);
                    b.added.push([cx, cy]);
                    return;
                }
            }
        }
    }
    // Cells inside the box the rings never reach (only after earlier removals).
    let free = (0..spec.cells_per_slab()).find(|&i| !occ.get(b.slab, i / spec.cols, i % spec.cols));
    if let Some(i) = free {
        let (cx, cy) = (i % spec.cols, i / spec.cols);
        occ.set(b.slab, cy, cx, true);
        b.added.push([cx, cy]);
    }
}

fn remove_from_box(occ: &mut Occupancy, b: &mut SlabBox) {
    let spec = *occ.spec();
    let (x, y, w, h) = (b.x as i64, b.y as i64, b.w as i64, b.h as i64);
    let pinned = b.pinned;
    let take = |occ: &mut Occupancy, cx: usize, cy: usize, b: &mut SlabBox| {
        occ.set(b.slab, cy, cx, false);
        b.removed.push([cx, cy]);
    };
    for k in 0..=(w.max(h) / 2) {
        for cell in ring(x + k, y + k, w - 2 * k, h - 2 * k) {
            if let Some((cx, cy)) = in_grid(&spec, cell) {
                if occ.get(b.slab, cy, cx) && pinned != Some([cx, cy]) {
                    take(occ, cx, cy, b);
                    return;
                }
            }
        }
    }
    // Outside the box (earlier additions), then the pinned cell as a last resort.
    let candidates = (0..spec.cells_per_slab()).map(|i| (i % spec.cols, i / spec.cols));
    let unpinned = candidates
        .clone()
        .find(|&(cx, cy)| occ.get(b.slab, cy, cx) && pinned != Some([cx, cy]));
    if let Some((cx, cy)) = unpinned.or_else(|| candidates.into_iter().find(|&(cx, cy)| occ.get(b.slab, cy, cx))) {
        take(occ, cx, cy, b);
    }
}

/// A shuffled sequence of length `len` summing to exactly zero, with values in
/// `[-cap, cap]`.
pub fn zero_sum_jitter(len: usize, cap: u32, rng: &mut Rng) -> Vec<i64> {
    let mut seq = Vec::with_capacity(len);
    if cap > 0 {
        for i in 0..len / 2 {
            let k = 1 + (i as i64 % i64::from(cap));
            seq.push(k);
            seq.push(-k);
        }
    }
    seq.resize(len, 0);
    rng.shuffle(&mut seq);
    seq
}

/// Side length of the initial square, `round(sqrt(gamma * rows * cols))`,
/// clamped per axis to the grid. Returns `(w0, h0, clamped)`.
fn initial_square(spec: &GridSpec, gamma: f64) -> (usize, usize, bool) {
    let side = round_half_up((gamma * spec.cells_per_slab() as f64).sqrt()).max(1);
    let (w0, h0) = (side.min(spec.cols), side.min(spec.rows));
    (w0, h0, w0 != side || h0 != side)
}

fn draw_origin(spec: &GridSpec, w: usize, h: usize, rng: &mut Rng) -> (usize, usize) {
    let x0 = rng.range_inclusive(0, (spec.cols - w) as i64) as usize;
    let y0 = rng.range_inclusive(0, (spec.rows - h) as i64) as usize;
    (x0, y0)
}

fn clamp_size(nominal: i64, extent: usize) -> usize {
    nominal.clamp(1, extent as i64) as usize
}

fn clamp_pos(pos: i64, size: usize, extent: usize) -> usize {
    pos.clamp(0, (extent - size) as i64) as usize
}

fn stats_for(generator: Generator, spec: &GridSpec, params: &MaskParams) -> GenStats {
    let target = spec.target_for(params.gamma);
    let quota = spec.slab_quota(params.gamma);
    GenStats {
        generator,
        gamma: params.gamma,
        target_masked: target,
        slab_quota: quota,
        residue: target as i64 - (quota * spec.slabs) as i64,
        cells_added: 0,
        cells_removed: 0,
        box_clamped: false,
    }
}

fn finish(
    occ: Occupancy,
    spec: &GridSpec,
    mut stats: GenStats,
    mut track: Option<BoxTrack>,
    rng: &mut Rng,
) -> Result<MaskOutput, MaskError> {
    let anchor = track.as_mut().map(|track| Anchor {
        track,
        slab_quota: stats.slab_quota,
    });
    let (mask, fix) = correct_count(occ, spec.target_for(stats.gamma), anchor, rng)?;
    stats.cells_added = fix.added;
    stats.cells_removed = fix.removed;
    Ok(MaskOutput { mask, track, stats })
}

fn render_track(spec: &GridSpec, track: &BoxTrack) -> Occupancy {
    let mut occ = Occupancy::empty(*spec);
    for b in &track.slabs {
        occ.fill_rect(b.slab, b.x, b.y, b.w, b.h);
    }
    occ
}

/// Independent uniform cells per slab.
pub fn gen_random(spec: &GridSpec, params: &MaskParams) -> Result<MaskOutput, MaskError> {
    params.validate()?;
    let mut rng = Rng::new(params.seed);
    let stats = stats_for(Generator::Random, spec, params);
    let mut occ = Occupancy::empty(*spec);
    for slab in 0..spec.slabs {
        for i in rng.sample_indices(spec.cells_per_slab(), stats.slab_quota) {
            occ.set(slab, i / spec.cols, i % spec.cols, true);
        }
    }
    finish(occ, spec, stats, None, &mut rng)
}

/// One 2D cell set replicated over every slab.
pub fn gen_tube(spec: &GridSpec, params: &MaskParams) -> Result<MaskOutput, MaskError> {
    params.validate()?;
    let mut rng = Rng::new(params.seed);
    let stats = stats_for(Generator::Tube, spec, params);
    let cells = rng.sample_indices(spec.cells_per_slab(), stats.slab_quota);
    let mut occ = Occupancy::empty(*spec);
    for slab in 0..spec.slabs {
        for &i in &cells {
            occ.set(slab, i / spec.cols, i % spec.cols, true);
        }
    }
    finish(occ, spec, stats, None, &mut rng)
}

/// One static rectangle shared by every slab.
pub fn gen_block(spec: &GridSpec, params: &MaskParams) -> Result<MaskOutput, MaskError> {
    params.validate()?;
    let mut rng = Rng::new(params.seed);
    let mut stats = stats_for(Generator::Block, spec, params);
    let (w0, h0, clamped) = initial_square(spec, params.gamma);
    stats.box_clamped = clamped;
    let (x0, y0) = draw_origin(spec, w0, h0, &mut rng);
    let track = BoxTrack {
        slabs: (0..spec.slabs)
            .map(|s| SlabBox::new(s, x0, y0, w0, h0))
            .collect(),
        ..BoxTrack::default()
    };
    let occ = render_track(spec, &track);
    finish(occ, spec, stats, Some(track), &mut rng)
}

/// Simulated-motion masking: a box that drifts with random velocity and
/// breathes with zero-sum size jitter.
///
/// The dense variant masks the box itself. The sparse variant masks a fixed
/// random cell set that moves with the box's cumulative velocity, wrapping
/// around the grid edges.
pub fn gen_smm(spec: &GridSpec, params: &MaskParams, dense: bool) -> Result<MaskOutput, MaskError> {
    params.validate()?;
    let mut rng = Rng::new(params.seed);
    let generator = if dense {
        Generator::SmmDense
    } else {
        Generator::SmmSparse
    };
    let mut stats = stats_for(generator, spec, params);
    let (w0, h0, clamped) = initial_square(spec, params.gamma);
    stats.box_clamped = clamped;
    let (x0, y0) = draw_origin(spec, w0, h0, &mut rng);
    let jitter = zero_sum_jitter(spec.slabs.saturating_sub(1), params.jitter_cap, &mut rng);
    let vcap = i64::from(params.velocity_cap);
    let velocity: Vec<(i64, i64)> = (1..spec.slabs)
        .map(|_| {
            let vx = rng.range_inclusive(-vcap, vcap);
            let vy = rng.range_inclusive(-vcap, vcap);
            (vx, vy)
        })
        .collect();

    let mut slabs = vec![SlabBox::new(0, x0, y0, w0, h0)];
    let (mut nominal_w, mut nominal_h) = (w0 as i64, h0 as i64);
    for (i, (&s, &(vx, vy))) in jitter.iter().zip(&velocity).enumerate() {
        let prev = &slabs[i];
        nominal_w += s;
        nominal_h += s;
        let w = clamp_size(nominal_w, spec.cols);
        let h = clamp_size(nominal_h, spec.rows);
        let x = clamp_pos(prev.x as i64 + vx, w, spec.cols);
        let y = clamp_pos(prev.y as i64 + vy, h, spec.rows);
        slabs.push(SlabBox::new(i + 1, x, y, w, h));
    }
    let track = BoxTrack {
        slabs,
        jitter_x: jitter.clone(),
        jitter_y: jitter,
        velocity,
    };

    if dense {
        let occ = render_track(spec, &track);
        return finish(occ, spec, stats, Some(track), &mut rng);
    }

    let base = rng.sample_indices(spec.cells_per_slab(), stats.slab_quota);
    let mut occ = Occupancy::empty(*spec);
    let (mut shift_x, mut shift_y) = (0i64, 0i64);
    for slab in 0..spec.slabs {
        if slab > 0 {
            shift_x += track.velocity[slab - 1].0;
            shift_y += track.velocity[slab - 1].1;
        }
        for &i in &base {
            let row = (i / spec.cols) as i64 + shift_y;
            let col = (i % spec.cols) as i64 + shift_x;
            occ.set(
                slab,
                row.rem_euclid(spec.rows as i64) as usize,
                col.rem_euclid(spec.cols as i64) as usize,
                true,
            );
        }
    }
    // The sparse mask does not follow the box, so correction is unanchored.
    let mut out = finish(occ, spec, stats, None, &mut rng)?;
    out.track = Some(track);
    Ok(out)
}

/// Per-slab motion saliency at block resolution.
///
/// `sums[slab][block]` is the sum over the slab's frames of the block's motion
/// magnitude; dividing by the patch frame count gives the per-slab mean.
#[derive(Debug, Clone)]
pub struct SlabSaliency {
    spec: GridSpec,
    block_rows: usize,
    block_cols: usize,
    sums: Vec<Vec<f64>>,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Divides every component by the gcd of all components, leaving direction
/// and relative magnitude unchanged.
pub fn normalize_motion(motion: &MotionField) -> MotionField {
    let g = motion.vectors().iter().fold(0u32, |g, v| {
        gcd(gcd(g, v.dx.unsigned_abs().into()), v.dy.unsigned_abs().into())
    });
    if g <= 1 {
        return motion.clone();
    }
    let g = g as i32;
    motion.map(|v| MotionVector::new((i32::from(v.dx) / g) as i16, (i32::from(v.dy) / g) as i16))
}

pub fn check_motion_dims(spec: &GridSpec, motion: &MotionField) -> Result<(), MaskError> {
    let clip = spec.clip_dims();
    let field = (motion.frames(), motion.height(), motion.width());
    if clip != field {
        return Err(MaskError::MotionDimsMismatch {
            motion: field,
            clip,
        });
    }
    Ok(())
}

impl SlabSaliency {
    pub fn new(spec: &GridSpec, motion: &MotionField) -> Result<Self, MaskError> {
        check_motion_dims(spec, motion)?;
        let (rows, cols) = (motion.block_rows(), motion.block_cols());
        let per_frame = rows * cols;
        let mags = motion.magnitude();
        let sums = (0..spec.slabs)
            .map(|slab| {
                let mut acc = vec![0.0; per_frame];
                for f in slab * spec.patch.frames..(slab + 1) * spec.patch.frames {
                    for (a, m) in acc.iter_mut().zip(&mags[f * per_frame..(f + 1) * per_frame]) {
                        *a += m;
                    }
                }
                acc
            })
            .collect();
        Ok(Self {
            spec: *spec,
            block_rows: rows,
            block_cols: cols,
            sums,
        })
    }

    pub fn block_sums(&self, slab: usize) -> &[f64] {
        &self.sums[slab]
    }

    /// Raster-first pixel of maximal saliency in `slab`, as `(row, col)`.
    ///
    /// The pixel map is constant on each block, so the first maximal pixel in
    /// raster order is the top-left pixel of the first maximal block.
    pub fn argmax_pixel(&self, slab: usize) -> (usize, usize) {
        let sums = &self.sums[slab];
        let mut best = 0;
        for (i, &v) in sums.iter().enumerate() {
            if v > sums[best] {
                best = i;
            }
        }
        (
            (best / self.block_cols) * BLOCK_SIZE,
            (best % self.block_cols) * BLOCK_SIZE,
        )
    }

    /// Token cell `(row, col)` holding the saliency argmax of `slab`.
    pub fn argmax_token(&self, slab: usize) -> (usize, usize) {
        let (r, c) = self.argmax_pixel(slab);
        let tok = self
            .spec
            .pixel_to_token(slab * self.spec.patch.frames, r, c)
            .expect("argmax pixel lies inside the clip");
        (tok.row, tok.col)
    }

    /// Sum of pixel saliency over each token of `slab`, row-major. Proportional
    /// to the token's mean magnitude.
    pub fn token_sums(&self, slab: usize) -> Vec<f64> {
        let spec = &self.spec;
        let (ph, pw) = (spec.patch.height, spec.patch.width);
        let sums = &self.sums[slab];
        let overlap = |lo: usize, hi: usize, b: usize| {
            let (blo, bhi) = (b * BLOCK_SIZE, (b + 1) * BLOCK_SIZE);
            hi.min(bhi).saturating_sub(lo.max(blo))
        };
        let mut out = Vec::with_capacity(spec.cells_per_slab());
        for row in 0..spec.rows {
            let (r0, r1) = (row * ph, (row + 1) * ph);
            for col in 0..spec.cols {
                let (c0, c1) = (col * pw, (col + 1) * pw);
                let mut acc = 0.0;
                for br in r0 / BLOCK_SIZE..r1.div_ceil(BLOCK_SIZE).min(self.block_rows) {
                    let oh = overlap(r0, r1, br);
                    for bc in c0 / BLOCK_SIZE..c1.div_ceil(BLOCK_SIZE).min(self.block_cols) {
                        let ow = overlap(c0, c1, bc);
                        acc += (oh * ow) as f64 * sums[br * self.block_cols + bc];
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    /// Mean per-pixel, per-frame magnitude of every token, in token order.
    pub fn token_means(&self) -> Vec<f64> {
        let p = self.spec.patch;
        let denom = (p.frames * p.height * p.width) as f64;
        (0..self.spec.slabs)
            .flat_map(|s| self.token_sums(s))
            .map(|v| v / denom)
            .collect()
    }
}

/// Token indices of `slab` ordered by descending saliency, ties in raster order.
fn ranked_cells(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Motion-guided masking.
///
/// Dense: slab 0 gets a randomly placed square; every later slab's box is
/// centred on the token holding that slab's motion-magnitude argmax, with
/// independent zero-sum width and height jitter, and slid back inside the
/// grid without shrinking. Sparse: each slab masks its highest-motion tokens.
pub fn gen_mgm(
    spec: &GridSpec,
    params: &MaskParams,
    motion: &MotionField,
    dense: bool,
) -> Result<MaskOutput, MaskError> {
    params.validate()?;
    let saliency = SlabSaliency::new(spec, &normalize_motion(motion))?;
    let mut rng = Rng::new(params.seed);

    if !dense {
        let stats = stats_for(Generator::MgmSparse, spec, params);
        let mut occ = Occupancy::empty(*spec);
        let (quota, residue) = (stats.slab_quota as i64, stats.residue);
        let slabs = spec.slabs as i64;
        for slab in 0..spec.slabs {
            // Spread the residue cyclically from slab 0.
            let s = slab as i64;
            let extra = residue.div_euclid(slabs)
                + i64::from(s < residue.rem_euclid(slabs));
            let k = (quota + extra).clamp(0, spec.cells_per_slab() as i64) as usize;
            for &i in ranked_cells(&saliency.token_sums(slab)).iter().take(k) {
                occ.set(slab, i / spec.cols, i % spec.cols, true);
            }
        }
        return finish(occ, spec, stats, None, &mut rng);
    }

    let mut stats = stats_for(Generator::MgmDense, spec, params);
    let (w0, h0, clamped) = initial_square(spec, params.gamma);
    stats.box_clamped = clamped;
    let (x0, y0) = draw_origin(spec, w0, h0, &mut rng);
    let len = spec.slabs.saturating_sub(1);
    let jitter_x = zero_sum_jitter(len, params.jitter_cap, &mut rng);
    let jitter_y = zero_sum_jitter(len, params.jitter_cap, &mut rng);

    let mut slabs = vec![SlabBox::new(0, x0, y0, w0, h0)];
    let (mut nominal_w, mut nominal_h) = (w0 as i64, h0 as i64);
    for slab in 1..spec.slabs {
        nominal_w += jitter_x[slab - 1];
        nominal_h += jitter_y[slab - 1];
        let w = clamp_size(nominal_w, spec.cols);
        let h = clamp_size(nominal_h, spec.rows);
        let (cy, cx) = saliency.argmax_token(slab);
        let x = clamp_pos(cx as i64 - (w / 2) as i64, w, spec.cols);
        let y = clamp_pos(cy as i64 - (h / 2) as i64, h, spec.rows);
        let mut b = SlabBox::new(slab, x, y, w, h);
        b.pinned = Some([cx, cy]);
        slabs.push(b);
    }
    let track = BoxTrack {
        slabs,
        jitter_x,
        jitter_y,
        velocity: Vec::new(),
    };
    let occ = render_track(spec, &track);
    finish(occ, spec, stats, Some(track), &mut rng)
}

/// Dispatches to the named generator. `motion` is required for MGM.
pub fn generate(
    generator: Generator,
    spec: &GridSpec,
    params: &MaskParams,
    motion: Option<&MotionField>,
) -> Result<MaskOutput, MaskError> {
    match generator {
        Generator::Random => gen_random(spec, params),
        Generator::Tube => gen_tube(spec, params),
        Generator::Block => gen_block(spec, params),
        Generator::SmmSparse => gen_smm(spec, params, false),
        Generator::SmmDense => gen_smm(spec, params, true),
        Generator::MgmSparse => gen_mgm(spec, params, motion.ok_or(MaskError::MissingMotion(generator))?, false),
        Generator::MgmDense => gen_mgm(spec, params, motion.ok_or(MaskError::MissingMotion(generator))?, true),
    }
}
