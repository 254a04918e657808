use std::path::Path;

use super::RenderError;
use crate::container;

/// Row-major RGB image, row 0 on top.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn black(width: usize, height: usize) -> Self {
        Image::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image { width, height, pixels }
    }

    pub fn resolution(&self) -> [usize; 2] {
        [self.width, self.height]
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn same_resolution(&self, other: &Image) -> Result<(), RenderError> {
        if self.resolution() == other.resolution() {
            Ok(())
        } else {
            Err(RenderError::ResolutionMismatch(self.resolution(), other.resolution()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            pixels: self.pixels.iter().map(|p| p.map(&f)).collect(),
            ..*self
        }
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p[c]).collect()
    }

    /// Binary 8-bit PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend(p.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Image, RenderError> {
        let err = |m: &str| RenderError::Image(m.to_string());
        // header: magic, width, height, maxval separated by whitespace, then one whitespace byte
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(err("truncated PPM header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("bad header"))?);
        }
        if fields[0] != "P6" {
            return Err(err("not a binary PPM"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad header number"));
        let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if max != 255 {
            return Err(err("only 8-bit PPM is supported"));
        }
        let body = &bytes[pos + 1..];
        if body.len() != w * h * 3 {
            return Err(err("PPM payload length mismatch"));
        }
        Ok(Image {
            width: w,
            height: h,
            pixels: body
                .chunks_exact(3)
                .map(|c| [0, 1, 2].map(|i| c[i] as f64 / 255.0))
                .collect(),
        })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<(), RenderError> {
        Ok(container::write_file(path, &self.to_ppm())?)
    }

    pub fn read_ppm(path: &Path) -> Result<Image, RenderError> {
        Image::from_ppm(&container::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_quantizes() {
        let img = Image::from_fn(5, 3, |x, y| [x as f64 / 4.0, y as f64 / 2.0, 0.3]);
        let back = Image::from_ppm(&img.to_ppm()).unwrap();
        assert_eq!(back.resolution(), [5, 3]);
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
        assert!(Image::from_ppm(b"P3\n1 1\n255\n000").is_err());
        assert!(Image::from_ppm(b"P6\n# c\n2 1\n255\n\x01\x02\x03").is_err());
    }
}
