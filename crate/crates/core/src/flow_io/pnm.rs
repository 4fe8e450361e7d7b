//! Binary netpbm images: PPM (P6) frames and PGM (P5) masks, 8-bit only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit image with 1 (PGM) or 3 (PPM) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image8 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image8> {
    read_pnm(path.as_ref(), b"P6", 3)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image8> {
    read_pnm(path.as_ref(), b"P5", 1)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Image8) -> Result<()> {
    write_pnm(path.as_ref(), "P6", 3, img)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image8) -> Result<()> {
    write_pnm(path.as_ref(), "P5", 1, img)
}

fn write_pnm(path: &Path, magic: &str, channels: usize, img: &Image8) -> Result<()> {
    if img.channels != channels || img.data.len() != img.height * img.width * channels {
        return Err(Error::DimensionMismatch {
            what: "netpbm image",
            expected: img.height * img.width * channels,
            found: img.data.len(),
        });
    }
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    crate::fsutil::write_atomic(path, &out)
}

fn read_pnm(path: &Path, magic: &[u8; 2], channels: usize) -> Result<Image8> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = if channels == 3 { "PPM (P6)" } else { "PGM (P5)" };
    if bytes.len() < 2 || &bytes[0..2] != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            format,
        });
    }
    let malformed = |reason: &str| Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("missing header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("bad header number"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(malformed("only 8-bit maxval is supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed("missing whitespace after header"));
    }
    pos += 1;
    let expected = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    let mut data = payload[..expected].to_vec();
    if maxval != 255 {
        for v in &mut data {
            *v = ((*v as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8;
        }
    }
    Ok(Image8 {
        height,
        width,
        channels,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ppm");
        let img = Image8 {
            height: 2,
            width: 3,
            channels: 3,
            data: (0..18).map(|v| v as u8 * 10).collect(),
        };
        write_ppm(&path, &img).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    #[test]
    fn pgm_with_comment_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!((img.height, img.width), (1, 2));
        assert_eq!(img.data, vec![0, 255]);
    }

    #[test]
    fn wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P6\n1 1\n255\n\0\0\0").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::BadMagic { .. })));
    }
}
