//! Block-granularity motion vector maps.
//!
//! A [`MotionField`] holds one `(dx, dy)` pair per 8×8 block per frame. The
//! vector says the block's content at frame `t` came from offset `(-dx, -dy)`
//! in frame `t-1`; frame 0 has no predecessor and is always zero.

use crate::clipio::Clip;
use thiserror::Error;

pub const BLOCK_SIZE: usize = 8;
pub const DEFAULT_SEARCH_RADIUS: usize = 7;
pub const MVF_MAGIC: &[u8; 4] = b"MVF1";
pub const MVF_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MotionError {
    #[error("clip dimensions {height}x{width} are not multiples of the {block}-pixel block")]
    DimsNotBlockAligned {
        height: usize,
        width: usize,
        block: usize,
    },
    #[error("motion estimation needs a single-channel clip, got {0} channels")]
    NotSingleChannel(usize),
    #[error("upsample target {height}x{width} does not match a {rows}x{cols} block field")]
    DimMismatch {
        height: usize,
        width: usize,
        rows: usize,
        cols: usize,
    },
    #[error("bad magic: not an MVF stream")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("invalid field dimensions T={frames} Hb={rows} Wb={cols}")]
    InvalidDims {
        frames: usize,
        rows: usize,
        cols: usize,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dx: i16,
    pub dy: i16,
}

impl MotionVector {
    pub const ZERO: Self = Self { dx: 0, dy: 0 };

    pub const fn new(dx: i16, dy: i16) -> Self {
        Self { dx, dy }
    }

    pub fn magnitude(self) -> f64 {
        f64::from(self.dx).hypot(f64::from(self.dy))
    }

    /// `dx² + dy²`, exact.
    pub fn squared_magnitude(self) -> i64 {
        let (dx, dy) = (i64::from(self.dx), i64::from(self.dy));
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionField {
    frames: usize,
    block_rows: usize,
    block_cols: usize,
    vectors: Vec<MotionVector>,
}

impl MotionField {
    pub fn zeros(frames: usize, block_rows: usize, block_cols: usize) -> Self {
        Self {
            frames,
            block_rows,
            block_cols,
            vectors: vec![MotionVector::ZERO; frames * block_rows * block_cols],
        }
    }

    pub fn from_vectors(
        frames: usize,
        block_rows: usize,
        block_cols: usize,
        vectors: Vec<MotionVector>,
    ) -> Result<Self, MotionError> {
        if frames == 0 || block_rows == 0 || block_cols == 0 {
            return Err(MotionError::InvalidDims {
                frames,
                rows: block_rows,
                cols: block_cols,
            });
        }
        let expected = frames * block_rows * block_cols;
        if vectors.len() != expected {
            return Err(MotionError::TruncatedPayload {
                expected: expected * 4,
                actual: vectors.len() * 4,
            });
        }
        Ok(Self {
            frames,
            block_rows,
            block_cols,
            vectors,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    /// Pixel height covered by the field.
    pub fn height(&self) -> usize {
        self.block_rows * BLOCK_SIZE
    }

    pub fn width(&self) -> usize {
        self.block_cols * BLOCK_SIZE
    }

    pub fn vectors(&self) -> &[MotionVector] {
        &self.vectors
    }

    fn index(&self, frame: usize, row: usize, col: usize) -> usize {
        (frame * self.block_rows + row) * self.block_cols + col
    }

    pub fn get(&self, frame: usize, row: usize, col: usize) -> MotionVector {
        self.vectors[self.index(frame, row, col)]
    }

    pub fn set(&mut self, frame: usize, row: usize, col: usize, mv: MotionVector) {
        let i = self.index(frame, row, col);
        self.vectors[i] = mv;
    }

    /// Per-block `sqrt(dx² + dy²)`, same layout as the vectors.
    pub fn magnitude(&self) -> Vec<f64> {
        self.vectors.iter().map(|v| v.magnitude()).collect()
    }

    /// Mean magnitude over every block of every frame.
    pub fn mean_magnitude(&self) -> f64 {
        self.magnitude().iter().sum::<f64>() / self.vectors.len() as f64
    }

    /// Applies `f` to every vector.
    pub fn map(&self, f: impl Fn(MotionVector) -> MotionVector) -> Self {
        Self {
            vectors: self.vectors.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

/// Pixel-resolution motion obtained by nearest-neighbour upsampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpsampledField {
    frames: usize,
    height: usize,
    width: usize,
    vectors: Vec<MotionVector>,
}

impl UpsampledField {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, frame: usize, row: usize, col: usize) -> MotionVector {
        self.vectors[(frame * self.height + row) * self.width + col]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.vectors.iter().map(|v| v.magnitude()).collect()
    }
}

/// Nearest-neighbour upsampling: pixel `(r, c)` takes block `(r / 8, c / 8)`.
pub fn upsample_nearest(
    mf: &MotionField,
    height: usize,
    width: usize,
) -> Result<UpsampledField, MotionError> {
    if height != mf.height() || width != mf.width() {
        return Err(MotionError::DimMismatch {
            height,
            width,
            rows: mf.block_rows,
            cols: mf.block_cols,
        });
    }
    let mut vectors = Vec::with_capacity(mf.frames * height * width);
    for t in 0..mf.frames {
        for r in 0..height {
            let row = &mf.vectors[mf.index(t, r / BLOCK_SIZE, 0)..][..mf.block_cols];
            for c in 0..width {
                vectors.push(row[c / BLOCK_SIZE]);
            }
        }
    }
    Ok(UpsampledField {
        frames: mf.frames,
        height,
        width,
        vectors,
    })
}

/// Search order for a square window: ascending `|dx|+|dy|`, then `dy`, then `dx`.
/// Scanning in this order and accepting only strict SAD improvements realises
/// the tie-break rule.
pub fn search_order(radius: usize) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let mut order: Vec<(i32, i32)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .collect();
    order.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    order
}

#[inline]
fn block_sad_bounded(
    cur: &[u8],
    prev: &[u8],
    width: usize,
    cur_origin: usize,
    prev_origin: usize,
    bound: u32,
) -> Option<u32> {
    let mut sad = 0u32;
    for row in 0..BLOCK_SIZE {
        let a = &cur[cur_origin + row * width..][..BLOCK_SIZE];
        let b = &prev[prev_origin + row * width..][..BLOCK_SIZE];
        sad += a
            .iter()
            .zip(b)
            .map(|(&x, &y)| u32::from(x.abs_diff(y)))
            .sum::<u32>();
        if sad >= bound {
            return None;
        }
    }
    Some(sad)
}

/// Exhaustive-window SAD block matching on a single-channel clip.
pub fn estimate_mv(clip: &Clip, search_radius: usize) -> Result<MotionField, MotionError> {
    if clip.channels() != 1 {
        return Err(MotionError::NotSingleChannel(clip.channels()));
    }
    let (height, width) = (clip.height(), clip.width());
    if height % BLOCK_SIZE != 0 || width % BLOCK_SIZE != 0 {
        return Err(MotionError::DimsNotBlockAligned {
            height,
            width,
            block: BLOCK_SIZE,
        });
    }
    let (rows, cols) = (height / BLOCK_SIZE, width / BLOCK_SIZE);
    let mut field = MotionField::zeros(clip.frames(), rows, cols);
    let order = search_order(search_radius);
    for t in 1..clip.frames() {
        let cur = clip.frame(t);
        let prev = clip.frame(t - 1);
        for br in 0..rows {
            for bc in 0..cols {
                let (y0, x0) = ((br * BLOCK_SIZE) as i32, (bc * BLOCK_SIZE) as i32);
                let cur_origin = (br * BLOCK_SIZE) * width + bc * BLOCK_SIZE;
                let mut best: Option<(u32, (i32, i32))> = None;
                for &(dx, dy) in &order {
                    let (sy, sx) = (y0 - dy, x0 - dx);
                    if sy < 0
                        || sx < 0
                        || sy as usize + BLOCK_SIZE > height
                        || sx as usize + BLOCK_SIZE > width
                    {
                        continue;
                    }
                    let bound = best.map_or(u32::MAX, |(s, _)| s);
                    let prev_origin = sy as usize * width + sx as usize;
                    if let Some(sad) =
                        block_sad_bounded(cur, prev, width, cur_origin, prev_origin, bound)
                    {
                        best = Some((sad, (dx, dy)));
                        if sad == 0 {
                            break;
                        }
                    }
                }
                // (0, 0) is always in bounds, so `best` is set.
                let (_, (dx, dy)) = best.expect("zero displacement is always a candidate");
                field.set(t, br, bc, MotionVector::new(dx as i16, dy as i16));
            }
        }
    }
    Ok(field)
}

pub fn write_mvf(mf: &MotionField) -> Vec<u8> {
    let mut out = Vec::with_capacity(MVF_HEADER_LEN + mf.vectors.len() * 4);
    out.extend_from_slice(MVF_MAGIC);
    for dim in [mf.frames, mf.block_rows, mf.block_cols] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in &mf.vectors {
        out.extend_from_slice(&v.dx.to_le_bytes());
        out.extend_from_slice(&v.dy.to_le_bytes());
    }
    out
}

pub fn read_mvf(bytes: &[u8]) -> Result<MotionField, MotionError> {
    if bytes.len() < 4 || &bytes[..4] != MVF_MAGIC {
        return Err(MotionError::BadMagic);
    }
    if bytes.len() < MVF_HEADER_LEN {
        return Err(MotionError::TruncatedPayload {
            expected: MVF_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let dim = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    let (frames, rows, cols) = (dim(0), dim(1), dim(2));
    if frames == 0 || rows == 0 || cols == 0 {
        return Err(MotionError::InvalidDims { frames, rows, cols });
    }
    let payload = &bytes[MVF_HEADER_LEN..];
    let expected = frames * rows * cols * 4;
    if payload.len() != expected {
        return Err(MotionError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    let vectors = payload
        .chunks_exact(4)
        .map(|c| MotionVector::new(i16::from_le_bytes([c[0], c[1]]), i16::from_le_bytes([c[2], c[3]])))
        .collect();
    MotionField::from_vectors(frames, rows, cols, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magnitude_examples() {
        assert_eq!(MotionVector::new(3, 4).magnitude(), 5.0);
        assert_eq!(MotionVector::new(0, 0).magnitude(), 0.0);
        assert_eq!(MotionVector::new(-3, 4).magnitude(), 5.0);
    }

    #[test]
    fn upsample_single_block() {
        let mf = MotionField::from_vectors(1, 1, 1, vec![MotionVector::new(2, -1)]).unwrap();
        let up = upsample_nearest(&mf, 8, 8).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(up.get(0, r, c), MotionVector::new(2, -1));
            }
        }
    }

    #[test]
    fn upsample_block_lookup() {
        let vectors = (0..4).map(|i| MotionVector::new(i, -i)).collect();
        let mf = MotionField::from_vectors(1, 2, 2, vectors).unwrap();
        let up = upsample_nearest(&mf, 16, 16).unwrap();
        assert_eq!(up.get(0, 9, 3), mf.get(0, 1, 0));
        assert_eq!(
            upsample_nearest(&mf, 16, 24).unwrap_err(),
            MotionError::DimMismatch {
                height: 16,
                width: 24,
                rows: 2,
                cols: 2
            }
        );
    }

    #[test]
    fn identical_frames_give_zero_motion() {
        let data: Vec<u8> = (0..2 * 32 * 32).map(|i| ((i % 1024) * 7 % 256) as u8).collect();
        let clip = Clip::new(2, 32, 32, 1, data).unwrap();
        let mf = estimate_mv(&clip, 4).unwrap();
        assert!(mf.vectors().iter().all(|&v| v == MotionVector::ZERO));
    }

    #[test]
    fn single_frame_is_all_zero() {
        let clip = Clip::filled(1, 16, 24, 1, 77).unwrap();
        let mf = estimate_mv(&clip, 7).unwrap();
        assert_eq!((mf.frames(), mf.block_rows(), mf.block_cols()), (1, 2, 3));
        assert!(mf.vectors().iter().all(|&v| v == MotionVector::ZERO));
    }

    #[test]
    fn estimate_rejects_bad_inputs() {
        let clip = Clip::filled(2, 12, 16, 1, 0).unwrap();
        assert!(matches!(
            estimate_mv(&clip, 2),
            Err(MotionError::DimsNotBlockAligned { .. })
        ));
        let rgb = Clip::filled(2, 16, 16, 3, 0).unwrap();
        assert_eq!(estimate_mv(&rgb, 2).unwrap_err(), MotionError::NotSingleChannel(3));
    }

    #[test]
    fn search_order_starts_at_zero() {
        let order = search_order(1);
        assert_eq!(order[0], (0, 0));
        assert_eq!(&order[1..5], &[(0, -1), (-1, 0), (1, 0), (0, 1)]);
        assert_eq!(order.len(), 9);
    }

    #[test]
    fn mvf_layout_and_errors() {
        let mf = MotionField::zeros(1, 1, 1);
        let bytes = write_mvf(&mf);
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], b"MVF1");
        assert!(bytes[16..].iter().all(|&b| b == 0));
        assert_eq!(read_mvf(&bytes).unwrap(), mf);

        let mut big = write_mvf(&MotionField::zeros(2, 2, 2));
        big.truncate(big.len() - 2);
        assert!(matches!(read_mvf(&big), Err(MotionError::TruncatedPayload { .. })));
        assert_eq!(read_mvf(b"RVC1").unwrap_err(), MotionError::BadMagic);
    }

    #[test]
    fn negative_components_round_trip() {
        let mf = MotionField::from_vectors(
            1,
            1,
            2,
            vec![MotionVector::new(-7, 3), MotionVector::new(i16::MIN, i16::MAX)],
        )
        .unwrap();
        assert_eq!(read_mvf(&write_mvf(&mf)).unwrap(), mf);
    }
}
