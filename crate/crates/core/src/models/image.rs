//! Netpbm (PGM/PPM) images as `channels x height x width` tensors in [0, 1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::invalid("truncated netpbm header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::invalid("netpbm header is not ASCII"))
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| Error::invalid(format!("bad netpbm number {t:?}")))
    }
}

/// Decodes P2/P3/P5/P6 data.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.token()?.to_string();
    let (channels, binary) = match magic.as_str() {
        "P2" => (1, false),
        "P5" => (1, true),
        "P3" => (3, false),
        "P6" => (3, true),
        other => return Err(Error::invalid(format!("unsupported netpbm magic {other:?}"))),
    };
    let width = c.number()?;
    let height = c.number()?;
    let maxval = c.number()?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::invalid("netpbm dimensions and maxval must be positive (maxval <= 65535)"));
    }
    let count = channels * width * height;
    let mut hwc = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates header and raster
        c.pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(c.pos..c.pos + need)
            .ok_or_else(|| Error::invalid("truncated netpbm raster"))?;
        if wide {
            for pair in raster.chunks(2) {
                hwc.push(u16::from_be_bytes([pair[0], pair[1]]) as f64 / maxval as f64);
            }
        } else {
            hwc.extend(raster.iter().map(|&b| b as f64 / maxval as f64));
        }
    } else {
        for _ in 0..count {
            hwc.push(c.number()? as f64 / maxval as f64);
        }
    }
    if hwc.iter().any(|&v| v > 1.0) {
        return Err(Error::invalid("netpbm sample exceeds maxval"));
    }
    let mut chw = vec![0.0; count];
    for y in 0..height {
        for x in 0..width {
            for ch in 0..channels {
                chw[(ch * height + y) * width + x] = hwc[(y * width + x) * channels + ch];
            }
        }
    }
    Tensor::new(vec![channels, height, width], chw)
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pnm(&std::fs::read(path)?)
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Raw 8-bit PGM of a `height x width` grid with values in [0, 1].
pub fn encode_pgm(grid: &Tensor) -> Result<Vec<u8>> {
    if grid.rank() != 2 {
        return Err(Error::invalid("pgm output needs a 2-D grid"));
    }
    let (h, w) = (grid.dims()[0], grid.dims()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(grid.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

/// Raw 8-bit PPM of a `3 x height x width` image.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    if image.rank() != 3 || image.dims()[0] != 3 {
        return Err(Error::invalid("ppm output needs a 3-channel image"));
    }
    let (h, w) = (image.dims()[1], image.dims()[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                out.push(to_byte(image.get(&[ch, y, x])));
            }
        }
    }
    Ok(out)
}

/// Blue-to-red ramp for a heat value in [0, 1].
fn heat_color(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [
        (1.5 - (4.0 * v - 3.0).abs()).clamp(0.0, 1.0),
        (1.5 - (4.0 * v - 2.0).abs()).clamp(0.0, 1.0),
        (1.5 - (4.0 * v - 1.0).abs()).clamp(0.0, 1.0),
    ]
}

/// Half image, half colored heatmap. `heat` must already have the image's
/// spatial size. Grayscale images are expanded to three channels.
pub fn overlay(image: &Tensor, heat: &Tensor) -> Result<Tensor> {
    if image.rank() != 3 || heat.rank() != 2 || image.dims()[1..] != heat.dims()[..] {
        return Err(Error::invalid(format!(
            "overlay needs image c x h x w and heat h x w, got {:?} and {:?}",
            image.dims(),
            heat.dims()
        )));
    }
    let (c, h, w) = (image.dims()[0], image.dims()[1], image.dims()[2]);
    let mut out = Tensor::zeros(&[3, h, w]);
    for y in 0..h {
        for x in 0..w {
            let color = heat_color(heat.get(&[y, x]));
            for (ch, col) in color.iter().enumerate() {
                let base = image.get(&[if c == 3 { ch } else { 0 }, y, x]);
                out.set(&[ch, y, x], 0.5 * base + 0.5 * col);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let grid = Tensor::new(vec![2, 3], vec![0.0, 1.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
        let bytes = encode_pgm(&grid).unwrap();
        let back = decode_pnm(&bytes).unwrap();
        assert_eq!(back.dims(), &[1, 2, 3]);
        for (a, b) in back.data().iter().zip(grid.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn ascii_ppm_with_comment() {
        let text = b"P3\n# tiny\n2 1\n255\n255 0 0  0 0 255\n";
        let t = decode_pnm(text).unwrap();
        assert_eq!(t.dims(), &[3, 1, 2]);
        assert_eq!(t.get(&[0, 0, 0]), 1.0);
        assert_eq!(t.get(&[2, 0, 1]), 1.0);
    }
}
