//! Token lattice geometry and 3D masks.
//!
//! A clip of `T×H×W` pixels patchified with `t×h×w` patches yields a lattice
//! of `T/t` slabs, each `H/h × W/w` cells. Tokens are indexed slab-major, then
//! row-major, and that order is also the bit order of [`Mask3D`] files.

use crate::round_half_up;
use bitvec::prelude::*;
use std::fmt;
use std::ops::Range;
use thiserror::Error;

pub const DEFAULT_PATCH: Patch = Patch {
    frames: 2,
    height: 16,
    width: 16,
};
pub const MSK_MAGIC: &[u8; 4] = b"MSK1";
pub const MSK_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Height,
    Width,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Time => "time",
            Axis::Height => "height",
            Axis::Width => "width",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("{axis} extent {extent} is not divisible by patch size {patch}")]
    NotDivisible {
        axis: Axis,
        extent: usize,
        patch: usize,
    },
    #[error("zero-sized {0} dimension")]
    ZeroDim(Axis),
    #[error("mask grid does not match the token grid")]
    SpecMismatch,
    #[error("token or pixel coordinate out of range")]
    IndexOutOfRange,
    #[error("target of {target} masked tokens exceeds the {total}-token grid")]
    TargetExceedsGrid { target: usize, total: usize },
    #[error("mask holds {actual} set bits but declares {declared}")]
    CountMismatch { declared: usize, actual: usize },
    #[error("bad magic: not an MSK stream")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
}

/// Patch extent `t×h×w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Patch {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for Patch {
    fn default() -> Self {
        DEFAULT_PATCH
    }
}

/// The token lattice induced by a patch size over a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub slabs: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch: Patch,
}

/// A token position on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenCoord {
    pub slab: usize,
    pub row: usize,
    pub col: usize,
}

/// Half-open pixel ranges covered by one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBox {
    pub frames: Range<usize>,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl GridSpec {
    pub fn from_clip(
        frames: usize,
        height: usize,
        width: usize,
        patch: Patch,
    ) -> Result<Self, GridError> {
        for (axis, extent, p) in [
            (Axis::Time, frames, patch.frames),
            (Axis::Height, height, patch.height),
            (Axis::Width, width, patch.width),
        ] {
            if extent == 0 || p == 0 {
                return Err(GridError::ZeroDim(axis));
            }
            if extent % p != 0 {
                return Err(GridError::NotDivisible {
                    axis,
                    extent,
                    patch: p,
                });
            }
        }
        Ok(Self {
            slabs: frames / patch.frames,
            rows: height / patch.height,
            cols: width / patch.width,
            patch,
        })
    }

    /// A lattice of the given shape with unit patches, for callers that only
    /// need token geometry (e.g. mask files).
    pub fn with_shape(slabs: usize, rows: usize, cols: usize, patch: Patch) -> Self {
        Self {
            slabs,
            rows,
            cols,
            patch,
        }
    }

    pub fn cells_per_slab(&self) -> usize {
        self.rows * self.cols
    }

    pub fn total(&self) -> usize {
        self.slabs * self.rows * self.cols
    }

    /// Source clip dimensions `(T, H, W)`.
    pub fn clip_dims(&self) -> (usize, usize, usize) {
        (
            self.slabs * self.patch.frames,
            self.rows * self.patch.height,
            self.cols * self.patch.width,
        )
    }

    /// Whether two specs describe the same lattice shape (patch size ignored).
    pub fn same_shape(&self, other: &GridSpec) -> bool {
        (self.slabs, self.rows, self.cols) == (other.slabs, other.rows, other.cols)
    }

    #[inline]
    pub fn index(&self, slab: usize, row: usize, col: usize) -> usize {
        (slab * self.rows + row) * self.cols + col
    }

    pub fn coord(&self, index: usize) -> TokenCoord {
        let per_slab = self.cells_per_slab();
        TokenCoord {
            slab: index / per_slab,
            row: index % per_slab / self.cols,
            col: index % self.cols,
        }
    }

    pub fn token_to_pixel_box(
        &self,
        slab: usize,
        row: usize,
        col: usize,
    ) -> Result<PixelBox, GridError> {
        if slab >= self.slabs || row >= self.rows || col >= self.cols {
            return Err(GridError::IndexOutOfRange);
        }
        let Patch {
            frames: t,
            height: h,
            width: w,
        } = self.patch;
        Ok(PixelBox {
            frames: slab * t..(slab + 1) * t,
            rows: row * h..(row + 1) * h,
            cols: col * w..(col + 1) * w,
        })
    }

    pub fn pixel_to_token(
        &self,
        frame: usize,
        row: usize,
        col: usize,
    ) -> Result<TokenCoord, GridError> {
        let (t, h, w) = self.clip_dims();
        if frame >= t || row >= h || col >= w {
            return Err(GridError::IndexOutOfRange);
        }
        Ok(TokenCoord {
            slab: frame / self.patch.frames,
            row: row / self.patch.height,
            col: col / self.patch.width,
        })
    }

    /// Masked-token count for ratio `gamma` on the whole lattice, rounded half up.
    pub fn target_for(&self, gamma: f64) -> usize {
        round_half_up(gamma * self.total() as f64)
    }

    /// Per-slab quota for ratio `gamma`, rounded half up.
    pub fn slab_quota(&self, gamma: f64) -> usize {
        round_half_up(gamma * self.cells_per_slab() as f64)
    }
}

/// Working bit set over a lattice without a count contract; generators build
/// one of these and seal it into a [`Mask3D`].
#[derive(Clone, PartialEq, Eq)]
pub struct Occupancy {
    spec: GridSpec,
    bits: BitVec<u8, Lsb0>,
}

impl fmt::Debug for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Occupancy")
            .field("spec", &self.spec)
            .field("count", &self.count())
            .finish()
    }
}

impl Occupancy {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            spec,
            bits: bitvec![u8, Lsb0; 0; spec.total()],
        }
    }

    pub fn full(spec: GridSpec) -> Self {
        Self {
            spec,
            bits: bitvec![u8, Lsb0; 1; spec.total()],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn get(&self, slab: usize, row: usize, col: usize) -> bool {
        self.bits[self.spec.index(slab, row, col)]
    }

    pub fn set(&mut self, slab: usize, row: usize, col: usize, value: bool) {
        let i = self.spec.index(slab, row, col);
        self.bits.set(i, value);
    }

    pub fn get_index(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set_index(&mut self, index: usize, value: bool) {
        self.bits.set(index, value);
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn slab_count(&self, slab: usize) -> usize {
        let n = self.spec.cells_per_slab();
        self.bits[slab * n..(slab + 1) * n].count_ones()
    }

    /// Marks every cell of the rectangle `[x, x+w) × [y, y+h)` in `slab`.
    pub fn fill_rect(&mut self, slab: usize, x: usize, y: usize, w: usize, h: usize) {
        for row in y..y + h {
            for col in x..x + w {
                self.set(slab, row, col, true);
            }
        }
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn raw_bytes(&self) -> &[u8] {
        self.bits.as_raw_slice()
    }

    /// Seals the occupancy, checking that exactly `target` bits are set.
    pub fn into_mask(self, target: usize) -> Result<Mask3D, GridError> {
        let actual = self.count();
        if actual != target {
            return Err(GridError::CountMismatch {
                declared: target,
                actual,
            });
        }
        Ok(Mask3D {
            occupancy: self,
            target_masked: target,
        })
    }
}

/// A token mask whose popcount equals `target_masked` by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    occupancy: Occupancy,
    target_masked: usize,
}

impl Mask3D {
    pub fn spec(&self) -> &GridSpec {
        &self.occupancy.spec
    }

    pub fn target_masked(&self) -> usize {
        self.target_masked
    }

    pub fn is_masked(&self, slab: usize, row: usize, col: usize) -> bool {
        self.occupancy.get(slab, row, col)
    }

    pub fn is_masked_index(&self, index: usize) -> bool {
        self.occupancy.get_index(index)
    }

    pub fn occupancy(&self) -> &Occupancy {
        &self.occupancy
    }

    pub fn into_occupancy(self) -> Occupancy {
        self.occupancy
    }

    pub fn slab_count(&self, slab: usize) -> usize {
        self.occupancy.slab_count(slab)
    }

    /// The `rows × cols` bit-plane of one slab, row-major.
    pub fn slab_plane(&self, slab: usize) -> Vec<bool> {
        let n = self.spec().cells_per_slab();
        (slab * n..(slab + 1) * n)
            .map(|i| self.occupancy.get_index(i))
            .collect()
    }

    /// Visible and masked token indices; both ascending, together a partition
    /// of `0..total`.
    pub fn split(&self, grid: &GridSpec) -> Result<(Vec<usize>, Vec<usize>), GridError> {
        if !grid.same_shape(self.spec()) {
            return Err(GridError::SpecMismatch);
        }
        let (masked, visible): (Vec<usize>, Vec<usize>) =
            (0..grid.total()).partition(|&i| self.occupancy.get_index(i));
        Ok((visible, masked))
    }
}

/// MSK1: magic, LE u32 `slabs, rows, cols, target_masked`, then the bits
/// LSB-first in token order.
pub fn write_msk(mask: &Mask3D) -> Vec<u8> {
    let spec = mask.spec();
    let mut out = Vec::with_capacity(MSK_HEADER_LEN + spec.total().div_ceil(8));
    out.extend_from_slice(MSK_MAGIC);
    for v in [spec.slabs, spec.rows, spec.cols, mask.target_masked] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(mask.occupancy.raw_bytes());
    out
}

/// Reads an MSK1 stream. The patch size is not stored; `patch` is attached to
/// the recovered grid.
pub fn read_msk(bytes: &[u8], patch: Patch) -> Result<Mask3D, GridError> {
    if bytes.len() < 4 || &bytes[..4] != MSK_MAGIC {
        return Err(GridError::BadMagic);
    }
    if bytes.len() < MSK_HEADER_LEN {
        return Err(GridError::TruncatedPayload {
            expected: MSK_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let field = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    let spec = GridSpec::with_shape(field(0), field(1), field(2), patch);
    let target = field(3);
    let total = spec.total();
    let payload = &bytes[MSK_HEADER_LEN..];
    let expected = total.div_ceil(8);
    if payload.len() != expected {
        return Err(GridError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    if target > total {
        return Err(GridError::TargetExceedsGrid { target, total });
    }
    let mut bits = BitVec::<u8, Lsb0>::from_slice(payload);
    // Padding bits past the last token must be clear.
    if bits[total..].any() {
        return Err(GridError::CountMismatch {
            declared: target,
            actual: bits.count_ones(),
        });
    }
    bits.truncate(total);
    Occupancy { spec, bits }.into_mask(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard_grid() -> GridSpec {
        GridSpec::from_clip(16, 224, 224, DEFAULT_PATCH).unwrap()
    }

    #[test]
    fn standard_lattice() {
        let g = standard_grid();
        assert_eq!((g.slabs, g.rows, g.cols, g.total()), (8, 14, 14, 1568));
    }

    #[test]
    fn not_divisible_names_axis() {
        let p = Patch {
            frames: 2,
            height: 16,
            width: 15,
        };
        assert_eq!(
            GridSpec::from_clip(16, 224, 224, p).unwrap_err(),
            GridError::NotDivisible {
                axis: Axis::Width,
                extent: 224,
                patch: 15
            }
        );
        let single = GridSpec::from_clip(2, 16, 16, DEFAULT_PATCH).unwrap();
        assert_eq!(single.total(), 1);
    }

    #[test]
    fn split_edges() {
        let g = standard_grid();
        let empty = Occupancy::empty(g).into_mask(0).unwrap();
        let (vis, masked) = empty.split(&g).unwrap();
        assert_eq!(vis.len(), 1568);
        assert!(masked.is_empty());

        let full = Occupancy::full(g).into_mask(1568).unwrap();
        let (vis, masked) = full.split(&g).unwrap();
        assert!(vis.is_empty());
        assert_eq!(masked, (0..1568).collect::<Vec<_>>());

        let other = GridSpec::with_shape(4, 14, 14, DEFAULT_PATCH);
        assert_eq!(full.split(&other).unwrap_err(), GridError::SpecMismatch);
        assert_eq!(g.target_for(0.75), 1176);
    }

    #[test]
    fn token_boxes() {
        let g = standard_grid();
        let b = g.token_to_pixel_box(0, 0, 0).unwrap();
        assert_eq!((b.frames, b.rows, b.cols), (0..2, 0..16, 0..16));
        let b = g.token_to_pixel_box(7, 13, 13).unwrap();
        assert_eq!((b.frames, b.rows, b.cols), (14..16, 208..224, 208..224));
        assert_eq!(g.token_to_pixel_box(8, 0, 0).unwrap_err(), GridError::IndexOutOfRange);
    }

    #[test]
    fn pixel_lookup() {
        let g = standard_grid();
        let tc = |s, r, c| TokenCoord {
            slab: s,
            row: r,
            col: c,
        };
        assert_eq!(g.pixel_to_token(3, 17, 0).unwrap(), tc(1, 1, 0));
        assert_eq!(g.pixel_to_token(15, 223, 223).unwrap(), tc(7, 13, 13));
        assert_eq!(g.pixel_to_token(16, 0, 0).unwrap_err(), GridError::IndexOutOfRange);
    }

    #[test]
    fn pixel_token_round_trip_exhaustive() {
        let p = Patch {
            frames: 2,
            height: 3,
            width: 4,
        };
        let g = GridSpec::from_clip(6, 9, 8, p).unwrap();
        let mut volume = 0;
        for s in 0..g.slabs {
            for r in 0..g.rows {
                for c in 0..g.cols {
                    let b = g.token_to_pixel_box(s, r, c).unwrap();
                    volume += b.frames.len() * b.rows.len() * b.cols.len();
                }
            }
        }
        assert_eq!(volume, 6 * 9 * 8);
        for f in 0..6 {
            for r in 0..9 {
                for c in 0..8 {
                    let t = g.pixel_to_token(f, r, c).unwrap();
                    let b = g.token_to_pixel_box(t.slab, t.row, t.col).unwrap();
                    assert!(b.frames.contains(&f) && b.rows.contains(&r) && b.cols.contains(&c));
                }
            }
        }
    }

    #[test]
    fn msk_layout() {
        let g = GridSpec::with_shape(1, 3, 3, DEFAULT_PATCH);
        let mut occ = Occupancy::empty(g);
        occ.set(0, 0, 0, true);
        occ.set(0, 2, 2, true);
        let mask = occ.into_mask(2).unwrap();
        let bytes = write_msk(&mask);
        assert_eq!(&bytes[..4], b"MSK1");
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        // token 0 -> bit 0 of byte 0, token 8 -> bit 0 of byte 1
        assert_eq!(&bytes[20..], &[0b0000_0001, 0b0000_0001]);
        assert_eq!(read_msk(&bytes, DEFAULT_PATCH).unwrap(), mask);
    }

    #[test]
    fn msk_rejects_bad_streams() {
        let g = GridSpec::with_shape(1, 3, 3, DEFAULT_PATCH);
        let mask = Occupancy::empty(g).into_mask(0).unwrap();
        let mut bytes = write_msk(&mask);
        bytes[16] = 1;
        assert!(matches!(
            read_msk(&bytes, DEFAULT_PATCH),
            Err(GridError::CountMismatch { .. })
        ));
        bytes[16] = 0;
        bytes[21] = 0b10;
        assert!(matches!(
            read_msk(&bytes, DEFAULT_PATCH),
            Err(GridError::CountMismatch { .. })
        ));
        bytes.pop();
        assert!(matches!(
            read_msk(&bytes, DEFAULT_PATCH),
            Err(GridError::TruncatedPayload { .. })
        ));
        assert_eq!(read_msk(b"MVF1", DEFAULT_PATCH).unwrap_err(), GridError::BadMagic);
    }

    #[test]
    fn into_mask_checks_count() {
        let g = GridSpec::with_shape(1, 2, 2, DEFAULT_PATCH);
        assert_eq!(
            Occupancy::full(g).into_mask(3).unwrap_err(),
            GridError::CountMismatch {
                declared: 3,
                actual: 4
            }
        );
    }
}
