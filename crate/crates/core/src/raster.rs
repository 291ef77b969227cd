//! Floating-point images and their 8-bit file encodings.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// `height x width x channels` pixels in `[0, 1]`, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(Error::dim(format!(
                "{height}x{width}x{channels} image needs {} pixels, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::domain(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Image {
            height,
            width,
            channels,
            pixels: vec![value.clamp(0.0, 1.0); height * width * channels],
        }
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

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Exact bit pattern of every pixel, for reproducibility checks.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.to_le_bytes()).collect()
    }

    /// Round-to-nearest 8-bit quantization of channel 0.
    pub fn quantize(&self) -> Vec<u8> {
        self.pixels
            .chunks(self.channels)
            .map(|px| (px[0] * 255.0).round() as u8)
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let buf = ::image::GrayImage::from_raw(self.width as u32, self.height as u32, self.quantize())
            .ok_or_else(|| Error::dim("image buffer size"))?;
        buf.save_with_format(path, ::image::ImageFormat::Png)
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }

    /// Plain-text PGM (P2), readable without any image library.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "P2\n{} {}\n255", self.width, self.height)?;
        for row in self.quantize().chunks(self.width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn pgm_and_png_roundtrip() {
        let img = Image::new(2, 3, 1, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("a.pgm");
        img.write_pgm(&pgm).unwrap();
        let text = std::fs::read_to_string(&pgm).unwrap();
        assert_eq!(text, "P2\n3 2\n255\n0 128 255\n64 191 26\n");

        let png = dir.path().join("a.png");
        img.write_png(&png).unwrap();
        let back = ::image::open(&png).unwrap().to_luma8();
        assert_eq!(back.into_raw(), img.quantize());
    }
}
