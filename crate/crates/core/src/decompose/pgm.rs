//! Binary PGM (P5, maxval 255) masks.

use std::path::Path;

use super::{DecomposeError, PixelMask, Result};

fn malformed(msg: impl Into<String>) -> DecomposeError {
    DecomposeError::MalformedMask(msg.into())
}

/// Header tokens are separated by whitespace; `#` starts a comment that
/// runs to end of line. Exactly one whitespace byte follows maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<PixelMask> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(malformed("not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
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
            return Err(malformed("truncated PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header value out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(malformed(format!("maxval {maxval}, expected 255")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed("missing whitespace after PGM header"));
    }
    pos += 1;
    let pixels = &bytes[pos..];
    if pixels.len() != width * height {
        return Err(malformed(format!(
            "{} pixel bytes for a {width}x{height} image",
            pixels.len()
        )));
    }
    PixelMask::new(width, height, pixels.to_vec())
}

pub fn read_pgm(path: &Path) -> Result<PixelMask> {
    let bytes = std::fs::read(path).map_err(|source| DecomposeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pgm(&bytes)
}

pub fn write_pgm(path: &Path, mask: &PixelMask) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    bytes.extend_from_slice(mask.data());
    std::fs::write(path, bytes).map_err(|source| DecomposeError::Io {
        path: path.to_path_buf(),
        source,
    })
}
