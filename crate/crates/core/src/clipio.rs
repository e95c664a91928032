//! Raw video clip containers.
//!
//! Two input formats are understood: the RVC container (`"RVC1"` magic, four
//! little-endian `u32` dimensions `T,H,W,C`, then the raw payload) and the
//! luma plane of YUV4MPEG2 streams. Frames can be exported as binary PGM/PPM.

use thiserror::Error;

pub const RVC_MAGIC: &[u8; 4] = b"RVC1";
pub const RVC_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClipError {
    #[error("bad magic: not an {0} stream")]
    BadMagic(&'static str),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("invalid dimensions T={frames} H={height} W={width} C={channels}")]
    InvalidDims {
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("unsupported color space {0:?} (only C420* and Cmono are accepted)")]
    UnsupportedColorSpace(String),
    #[error("malformed frame header at byte {0}")]
    MalformedFrameHeader(usize),
    #[error("truncated frame {index}: needed {needed} bytes, {available} available")]
    TruncatedFrame {
        index: usize,
        needed: usize,
        available: usize,
    },
    #[error("malformed stream header: {0}")]
    MalformedHeader(String),
    #[error("frame index {index} out of range (clip has {frames} frames)")]
    IndexOutOfRange { index: usize, frames: usize },
}

/// A decoded clip: `frames × height × width × channels` unsigned 8-bit samples,
/// frame-major, row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Clip {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, ClipError> {
        if frames == 0 || height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(ClipError::InvalidDims {
                frames,
                height,
                width,
                channels,
            });
        }
        let expected = frames
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .and_then(|n| n.checked_mul(channels))
            .ok_or(ClipError::InvalidDims {
                frames,
                height,
                width,
                channels,
            })?;
        if data.len() != expected {
            return Err(ClipError::TruncatedPayload {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    /// A clip with every sample set to `value`.
    pub fn filled(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, ClipError> {
        let len = frames * height * width * channels;
        Self::new(frames, height, width, channels, vec![value; len])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, index: usize) -> &[u8] {
        let len = self.frame_len();
        &self.data[index * len..(index + 1) * len]
    }

    pub fn sample(&self, frame: usize, row: usize, col: usize, channel: usize) -> u8 {
        self.data[self.offset(frame, row, col, channel)]
    }

    #[inline]
    pub fn offset(&self, frame: usize, row: usize, col: usize, channel: usize) -> usize {
        ((frame * self.height + row) * self.width + col) * self.channels + channel
    }
}

fn read_u32_le(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

pub fn parse_rvc(bytes: &[u8]) -> Result<Clip, ClipError> {
    if bytes.len() < 4 || &bytes[..4] != RVC_MAGIC {
        return Err(ClipError::BadMagic("RVC"));
    }
    if bytes.len() < RVC_HEADER_LEN {
        return Err(ClipError::TruncatedPayload {
            expected: RVC_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..4)
        .map(|i| read_u32_le(bytes, 4 + 4 * i) as usize)
        .collect();
    let (frames, height, width, channels) = (dims[0], dims[1], dims[2], dims[3]);
    let payload = &bytes[RVC_HEADER_LEN..];
    // Dimension errors take precedence over length errors.
    if frames == 0 || height == 0 || width == 0 || !(channels == 1 || channels == 3) {
        return Err(ClipError::InvalidDims {
            frames,
            height,
            width,
            channels,
        });
    }
    Clip::new(frames, height, width, channels, payload.to_vec())
}

/// Parses only the RVC header, returning `(T, H, W, C)`.
pub fn peek_rvc_header(bytes: &[u8]) -> Result<(usize, usize, usize, usize), ClipError> {
    if bytes.len() < 4 || &bytes[..4] != RVC_MAGIC {
        return Err(ClipError::BadMagic("RVC"));
    }
    if bytes.len() < RVC_HEADER_LEN {
        return Err(ClipError::TruncatedPayload {
            expected: RVC_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    Ok((
        read_u32_le(bytes, 4) as usize,
        read_u32_le(bytes, 8) as usize,
        read_u32_le(bytes, 12) as usize,
        read_u32_le(bytes, 16) as usize,
    ))
}

pub fn write_rvc(clip: &Clip) -> Vec<u8> {
    let mut out = Vec::with_capacity(RVC_HEADER_LEN + clip.data.len());
    out.extend_from_slice(RVC_MAGIC);
    for dim in [clip.frames, clip.height, clip.width, clip.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&clip.data);
    out
}

/// Header fields of a YUV4MPEG2 stream that matter for luma extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub colorspace: String,
}

impl Y4mHeader {
    /// Bytes occupied by chroma planes following each luma plane.
    fn chroma_len(&self) -> usize {
        if self.colorspace == "mono" {
            0
        } else {
            let cw = self.width.div_ceil(2);
            let ch = self.height.div_ceil(2);
            2 * cw * ch
        }
    }
}

fn split_line(bytes: &[u8], start: usize) -> Option<(&[u8], usize)> {
    let rest = &bytes[start..];
    let nl = rest.iter().position(|&b| b == b'\n')?;
    Some((&rest[..nl], start + nl + 1))
}

pub fn parse_y4m_header(bytes: &[u8]) -> Result<(Y4mHeader, usize), ClipError> {
    if !bytes.starts_with(b"YUV4MPEG2") {
        return Err(ClipError::BadMagic("YUV4MPEG2"));
    }
    let (line, next) = split_line(bytes, 0)
        .ok_or_else(|| ClipError::MalformedHeader("missing newline".into()))?;
    let line = std::str::from_utf8(line)
        .map_err(|_| ClipError::MalformedHeader("header is not ASCII".into()))?;
    let mut width = None;
    let mut height = None;
    // The Y4M default when no C tag is present is 4:2:0.
    let mut colorspace = "420jpeg".to_string();
    for token in line.split_ascii_whitespace().skip(1) {
        let (tag, value) = token.split_at(1);
        match tag {
            "W" => width = value.parse::<usize>().ok(),
            "H" => height = value.parse::<usize>().ok(),
            "C" => colorspace = value.to_string(),
            _ => {}
        }
    }
    let (width, height) = match (width, height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
        _ => return Err(ClipError::MalformedHeader("missing or invalid W/H".into())),
    };
    if !(colorspace.starts_with("420") || colorspace == "mono") {
        return Err(ClipError::UnsupportedColorSpace(colorspace));
    }
    Ok((
        Y4mHeader {
            width,
            height,
            colorspace,
        },
        next,
    ))
}

/// Parses a YUV4MPEG2 stream into a single-channel clip holding the Y planes.
pub fn parse_y4m(bytes: &[u8]) -> Result<Clip, ClipError> {
    let (header, mut pos) = parse_y4m_header(bytes)?;
    let luma_len = header.width * header.height;
    let frame_payload = luma_len + header.chroma_len();
    let mut data = Vec::new();
    let mut frames = 0;
    while pos < bytes.len() {
        let (line, next) = split_line(bytes, pos).ok_or(ClipError::MalformedFrameHeader(pos))?;
        if !line.starts_with(b"FRAME") || line.get(5).is_some_and(|&b| b != b' ') {
            return Err(ClipError::MalformedFrameHeader(pos));
        }
        let available = bytes.len() - next;
        if available < frame_payload {
            return Err(ClipError::TruncatedFrame {
                index: frames,
                needed: frame_payload,
                available,
            });
        }
        data.extend_from_slice(&bytes[next..next + luma_len]);
        pos = next + frame_payload;
        frames += 1;
    }
    if frames == 0 {
        return Err(ClipError::InvalidDims {
            frames: 0,
            height: header.height,
            width: header.width,
            channels: 1,
        });
    }
    Clip::new(frames, header.height, header.width, 1, data)
}

/// BT.601 luma: `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_luma(clip: &Clip) -> Clip {
    if clip.channels == 1 {
        return clip.clone();
    }
    let data = clip
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
            (y + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect();
    Clip {
        frames: clip.frames,
        height: clip.height,
        width: clip.width,
        channels: 1,
        data,
    }
}

/// Binary PGM (`P5`) for single-channel clips, PPM (`P6`) for RGB.
pub fn write_ppm_frame(clip: &Clip, frame_index: usize) -> Result<Vec<u8>, ClipError> {
    if frame_index >= clip.frames {
        return Err(ClipError::IndexOutOfRange {
            index: frame_index,
            frames: clip.frames,
        });
    }
    let magic = if clip.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", clip.width, clip.height).into_bytes();
    out.extend_from_slice(clip.frame(frame_index));
    Ok(out)
}
