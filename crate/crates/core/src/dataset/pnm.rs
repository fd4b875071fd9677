//! Binary netpbm codecs: PGM ("P5", 8-bit grayscale) and PPM ("P6", 8-bit
//! RGB), maxval 255 only. Round trips are bit-exact, which makes these the
//! mandatory on-disk formats for datasets.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imgproc::ImageU8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmFormat {
    /// "P5", one byte per pixel.
    Pgm,
    /// "P6", three bytes per pixel.
    Ppm,
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("non-ASCII netpbm header".into()))
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse().map_err(|_| Error::Format(format!("bad netpbm header number {tok:?}")))
    }
}

/// Decodes a P5 or P6 file. Errors on unknown magic, maxval other than 255,
/// or a pixel payload shorter than the header promises.
pub fn decode_image(bytes: &[u8]) -> Result<ImageU8> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur.token()?;
    let channels = match magic {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported netpbm magic {other:?}"))),
    };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}, only 255")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::Format("missing separator before netpbm raster".into()));
    }
    cur.pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("netpbm dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        return Err(Error::Format(format!(
            "netpbm raster truncated: need {need} bytes, have {}",
            raster.len()
        )));
    }
    ImageU8::from_pixels(width, height, channels, raster[..need].to_vec())
}

/// Encodes to the requested format; the channel count must match.
pub fn encode_image(img: &ImageU8, format: PnmFormat) -> Result<Vec<u8>> {
    let (magic, channels) = match format {
        PnmFormat::Pgm => ("P5", 1),
        PnmFormat::Ppm => ("P6", 3),
    };
    if img.channels() != channels {
        return Err(Error::Format(format!(
            "{magic} needs {channels} channel(s), image has {}",
            img.channels()
        )));
    }
    let header = format!("{magic}\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.pixels());
    Ok(out)
}

/// Reads and decodes a `.pgm`/`.ppm` file.
pub fn load_image(path: &Path) -> Result<ImageU8> {
    decode_image(&std::fs::read(path)?)
}

/// Encodes by the image's channel count and writes to `path`.
pub fn save_image(img: &ImageU8, path: &Path) -> Result<()> {
    let format = if img.channels() == 1 { PnmFormat::Pgm } else { PnmFormat::Ppm };
    std::fs::write(path, encode_image(img, format)?)?;
    Ok(())
}
