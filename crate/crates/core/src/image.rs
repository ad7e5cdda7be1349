//! Raster images with binary PGM (P5) / PPM (P6) I/O, maxval 255.
//!
//! Pixels are stored as f64 in [0,1], row-major, channels interleaved —
//! the same order as the file payload.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::config(format!("images must have 1 or 3 channels, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::dim(format!(
                "image {}x{}x{} needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Image::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    /// Clamp every value into [0,1].
    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Mean squared error against another image of the same extents.
    pub fn mse(&self, other: &Image) -> Result<f64> {
        if (self.height, self.width, self.channels)
            != (other.height, other.width, other.channels)
        {
            return Err(Error::dim("mse: image extents differ"));
        }
        let n = self.data.len() as f64;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.data.len() + 32);
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(&mut buf, "{}\n{} {}\n255\n", magic, self.width, self.height)?;
        for &v in &self.data {
            buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_pnm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path)?;
        parse_pnm(&bytes).map_err(|msg| Error::format(path.display().to_string(), msg))
    }
}

/// Next header token, skipping whitespace and '#' comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> std::result::Result<String, String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err("truncated header".into());
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format!("unsupported magic {:?}", other)),
    };
    let width: usize = next_token(bytes, &mut pos)?.parse().map_err(|_| "bad width")?;
    let height: usize = next_token(bytes, &mut pos)?.parse().map_err(|_| "bad height")?;
    let maxval: usize = next_token(bytes, &mut pos)?.parse().map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("only maxval 255 supported, got {}", maxval));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing separator before payload".into());
    }
    pos += 1;
    let need = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(format!("payload has {} bytes, need {}", payload.len(), need));
    }
    let data = payload[..need].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(height, width, channels, data).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quantized_random(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * c)
            .map(|_| rng.random_range(0..=255u32) as f64 / 255.0)
            .collect();
        Image::new(h, w, c, data).unwrap()
    }

    #[test]
    fn pgm_roundtrip_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let img = quantized_random(6, 4, 1, 1);
        let path = dir.path().join("x.pgm");
        img.write_pnm(&path).unwrap();
        let back = Image::read_pnm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn ppm_roundtrip_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let img = quantized_random(3, 5, 3, 2);
        let path = dir.path().join("x.ppm");
        img.write_pnm(&path).unwrap();
        let back = Image::read_pnm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0u8, 255u8]);
        std::fs::write(&path, bytes).unwrap();
        let img = Image::read_pnm(&path).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\nxy").unwrap();
        assert!(matches!(Image::read_pnm(&path), Err(Error::Format { .. })));
    }
}
