//! The VVOL clip container and the JSON label sidecar.
//!
//! Layout (little-endian): `b"VVOL"`, version `0x01`, dtype code
//! (`0` = u8, `1` = f32), `u32` T, H, W, C, then raw frame data in
//! `t`, `h`, `w`, `c` order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, VolaugError};
use crate::volume::{ClipVolume, Dtype, FrameData, LabelTrack};

pub const MAGIC: &[u8; 4] = b"VVOL";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VvolHeader {
    pub version: u8,
    pub dtype: Dtype,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl VvolHeader {
    pub fn payload_len(&self) -> usize {
        self.frames * self.height * self.width * self.channels * self.dtype.size()
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<VvolHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(VolaugError::Format(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(VolaugError::Format("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(VolaugError::Format(format!("unsupported version {}", bytes[4])));
    }
    let dtype =
        Dtype::from_code(bytes[5]).ok_or_else(|| VolaugError::Format(format!("unknown dtype code {}", bytes[5])))?;
    let field = |i: usize| {
        let at = 6 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    Ok(VvolHeader {
        version: bytes[4],
        dtype,
        frames: field(0),
        height: field(1),
        width: field(2),
        channels: field(3),
    })
}

pub fn encode(clip: &ClipVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + clip.data().len() * clip.dtype().size());
    write_to(&mut out, clip).expect("writing to a Vec cannot fail");
    out
}

pub fn write_to<W: Write>(w: &mut W, clip: &ClipVolume) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(MAGIC);
    header[4] = VERSION;
    header[5] = clip.dtype().code();
    for (i, dim) in [clip.len(), clip.height(), clip.width(), clip.channels()]
        .into_iter()
        .enumerate()
    {
        let dim = u32::try_from(dim).map_err(|_| VolaugError::Format(format!("dimension {dim} exceeds u32")))?;
        header[6 + 4 * i..10 + 4 * i].copy_from_slice(&dim.to_le_bytes());
    }
    w.write_all(&header)?;
    match clip.data() {
        FrameData::U8(v) => w.write_all(v)?,
        FrameData::F32(v) => {
            let mut buf = Vec::with_capacity(v.len() * 4);
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn decode(id: impl Into<String>, bytes: &[u8]) -> Result<ClipVolume> {
    let header = parse_header(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != header.payload_len() {
        return Err(VolaugError::Format(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            header.payload_len()
        )));
    }
    let data = match header.dtype {
        Dtype::U8 => FrameData::U8(payload.to_vec()),
        Dtype::F32 => FrameData::F32(
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
    };
    ClipVolume::new(id, header.frames, header.height, header.width, header.channels, data)
        .map_err(|e| VolaugError::Format(e.to_string()))
}

/// Reads a clip; its id is the file stem.
pub fn read_file(path: impl AsRef<Path>) -> Result<ClipVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode(id, &bytes)
}

pub fn write_file(path: impl AsRef<Path>, clip: &ClipVolume) -> Result<()> {
    fs::write(path, encode(clip))?;
    Ok(())
}

pub fn read_header_file(path: impl AsRef<Path>) -> Result<VvolHeader> {
    let mut f = fs::File::open(path)?;
    let mut buf = [0u8; HEADER_LEN];
    std::io::Read::read_exact(&mut f, &mut buf).map_err(|_| VolaugError::Format("truncated header".into()))?;
    parse_header(&buf)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelTrack> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelTrack) -> Result<()> {
    fs::write(path, serde_json::to_vec(labels)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let clip = ClipVolume::new("x", 2, 1, 3, 1, FrameData::U8(vec![1, 2, 3, 4, 5, 6])).unwrap();
        let bytes = encode(&clip);
        assert_eq!(
            bytes,
            [b'V', b'V', b'O', b'L', 1, 0, 2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 1, 2, 3, 4, 5, 6]
        );
        let f = ClipVolume::new("y", 1, 1, 1, 1, FrameData::F32(vec![0.5])).unwrap();
        let bytes = encode(&f);
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[HEADER_LEN..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_input() {
        let clip = ClipVolume::new("x", 2, 1, 1, 1, FrameData::U8(vec![1, 2])).unwrap();
        let good = encode(&clip);
        assert!(decode("x", &good[..10]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode("x", &bad).is_err());
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(decode("x", &bad).is_err());
        let mut bad = good.clone();
        bad[5] = 9;
        assert!(decode("x", &bad).is_err());
        let mut bad = good.clone();
        bad.push(0);
        assert!(decode("x", &bad).is_err());
        let mut bad = good;
        bad[10] = 3; // C = 3 but payload too short
        assert!(decode("x", &bad).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(t in 1usize..4, h in 1usize..4, w in 1usize..4, rgb in any::<bool>(), seed in any::<u64>(), f in any::<bool>()) {
            let c = if rgb { 3 } else { 1 };
            let n = t * h * w * c;
            let data = if f {
                FrameData::F32((0..n).map(|i| ((seed as usize + i * 37) % 101) as f32 / 100.0).collect())
            } else {
                FrameData::U8((0..n).map(|i| (seed as usize).wrapping_add(i * 31) as u8).collect())
            };
            let clip = ClipVolume::new("c", t, h, w, c, data).unwrap();
            let back = decode("c", &encode(&clip)).unwrap();
            prop_assert_eq!(back, clip);
        }
    }
}
