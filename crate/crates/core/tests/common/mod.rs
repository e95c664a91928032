//! Test-only oracles and fixtures. Nothing here calls the code paths it checks.
#![allow(dead_code)]

use mgmask::motionfield::MotionVector;
use mgmask::{Clip, GridSpec, MotionField, Rng};

pub fn random_texture(frames: usize, height: usize, width: usize, rng: &mut Rng) -> Vec<u8> {
    (0..frames * height * width).map(|_| rng.next_u64() as u8).collect()
}

/// Two-frame clip whose second frame is the first circularly shifted by
/// `(dx, dy)`: `frame1[r][c] = frame0[r - dy][c - dx]`.
pub fn shifted_pair(height: usize, width: usize, dx: i64, dy: i64, rng: &mut Rng) -> Clip {
    let f0 = random_texture(1, height, width, rng);
    let mut data = f0.clone();
    for r in 0..height {
        for c in 0..width {
            let sr = (r as i64 - dy).rem_euclid(height as i64) as usize;
            let sc = (c as i64 - dx).rem_euclid(width as i64) as usize;
            data.push(f0[sr * width + sc]);
        }
    }
    Clip::new(2, height, width, 1, data).unwrap()
}

/// All in-bounds candidates of one block with their full SAD, picked by the
/// lexicographic key `(sad, |dx|+|dy|, dy, dx)`. Returns the winner and
/// whether its SAD is strictly below every other candidate's.
pub fn brute_force_block(
    clip: &Clip,
    t: usize,
    br: usize,
    bc: usize,
    radius: i64,
) -> ((i64, i64), bool) {
    let (h, w) = (clip.height() as i64, clip.width() as i64);
    let (y0, x0) = (br as i64 * 8, bc as i64 * 8);
    let mut cands = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (sy, sx) = (y0 - dy, x0 - dx);
            if sy < 0 || sx < 0 || sy + 8 > h || sx + 8 > w {
                continue;
            }
            let mut sad = 0i64;
            for i in 0..8 {
                for j in 0..8 {
                    let a = clip.sample(t, (y0 + i) as usize, (x0 + j) as usize, 0) as i64;
                    let b = clip.sample(t - 1, (sy + i) as usize, (sx + j) as usize, 0) as i64;
                    sad += (a - b).abs();
                }
            }
            cands.push((sad, dx.abs() + dy.abs(), dy, dx));
        }
    }
    cands.sort();
    let unique = cands.len() < 2 || cands[1].0 > cands[0].0;
    ((cands[0].3, cands[0].2), unique)
}

pub fn brute_force_field(clip: &Clip, radius: i64) -> MotionField {
    let (rows, cols) = (clip.height() / 8, clip.width() / 8);
    let mut mf = MotionField::zeros(clip.frames(), rows, cols);
    for t in 1..clip.frames() {
        for br in 0..rows {
            for bc in 0..cols {
                let ((dx, dy), _) = brute_force_block(clip, t, br, bc, radius);
                mf.set(t, br, bc, MotionVector::new(dx as i16, dy as i16));
            }
        }
    }
    mf
}

/// Pixel-level scan of the slab-averaged motion magnitude; returns the token
/// `(row, col)` holding the raster-first maximum of each slab.
pub fn pixel_argmax_tokens(spec: &GridSpec, motion: &MotionField) -> Vec<(usize, usize)> {
    let (_, h, w) = spec.clip_dims();
    let t = spec.patch.frames;
    (0..spec.slabs)
        .map(|slab| {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for r in 0..h {
                for c in 0..w {
                    let v: f64 = (slab * t..(slab + 1) * t)
                        .map(|f| {
                            let mv = motion.get(f, r / 8, c / 8);
                            ((mv.dx as f64).powi(2) + (mv.dy as f64).powi(2)).sqrt()
                        })
                        .sum::<f64>()
                        / t as f64;
                    // Relative tolerance absorbs summation-order differences.
                    if v > best.0 * (1.0 + 1e-12) && v > best.0 + 1e-12 {
                        best = (v, r, c);
                    }
                }
            }
            (best.1 / spec.patch.height, best.2 / spec.patch.width)
        })
        .collect()
}

/// Per-slab token mean magnitudes by direct pixel summation.
pub fn token_mean_magnitudes(spec: &GridSpec, motion: &MotionField) -> Vec<Vec<f64>> {
    let p = spec.patch;
    (0..spec.slabs)
        .map(|slab| {
            let mut out = Vec::new();
            for row in 0..spec.rows {
                for col in 0..spec.cols {
                    let mut acc = 0.0;
                    for f in slab * p.frames..(slab + 1) * p.frames {
                        for r in row * p.height..(row + 1) * p.height {
                            for c in col * p.width..(col + 1) * p.width {
                                let mv = motion.get(f, r / 8, c / 8);
                                acc += ((mv.dx as f64).powi(2) + (mv.dy as f64).powi(2)).sqrt();
                            }
                        }
                    }
                    out.push(acc / (p.frames * p.height * p.width) as f64);
                }
            }
            out
        })
        .collect()
}

/// Motion field with independent uniform vectors in `[-range, range]²` on
/// frames `1..T`, frame 0 zero.
pub fn random_motion(frames: usize, rows: usize, cols: usize, range: i64, rng: &mut Rng) -> MotionField {
    let mut mf = MotionField::zeros(frames, rows, cols);
    for t in 1..frames {
        for r in 0..rows {
            for c in 0..cols {
                let dx = rng.range_inclusive(-range, range) as i16;
                let dy = rng.range_inclusive(-range, range) as i16;
                mf.set(t, r, c, MotionVector::new(dx, dy));
            }
        }
    }
    mf
}

/// A textured square sprite moving at constant velocity over a static textured
/// background, bouncing off the frame edges.
pub fn sprite_clip(frames: usize, height: usize, width: usize, sprite: usize, seed: u64) -> Clip {
    let mut rng = Rng::new(seed);
    let background = random_texture(1, height, width, &mut rng);
    let texture = random_texture(1, sprite, sprite, &mut rng);
    let mut vx = 0;
    let mut vy = 0;
    while vx * vx + vy * vy < 9 {
        vx = rng.range_inclusive(-6, 6);
        vy = rng.range_inclusive(-6, 6);
    }
    let mut x = rng.range_inclusive(0, (width - sprite) as i64);
    let mut y = rng.range_inclusive(0, (height - sprite) as i64);
    let mut data = Vec::with_capacity(frames * height * width);
    for _ in 0..frames {
        let mut frame = background.clone();
        for r in 0..sprite {
            let row = (y as usize + r) * width + x as usize;
            frame[row..row + sprite].copy_from_slice(&texture[r * sprite..(r + 1) * sprite]);
        }
        data.extend_from_slice(&frame);
        let (max_x, max_y) = ((width - sprite) as i64, (height - sprite) as i64);
        if !(0..=max_x).contains(&(x + vx)) {
            vx = -vx;
        }
        if !(0..=max_y).contains(&(y + vy)) {
            vy = -vy;
        }
        x += vx;
        y += vy;
    }
    Clip::new(frames, height, width, 1, data).unwrap()
}
