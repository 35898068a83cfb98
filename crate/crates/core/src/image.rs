//! Float images plus PNG / PFM export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Row-major, interleaved float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let mut data = Vec::with_capacity(width * height * value.len());
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self { width, height, channels: value.len(), data }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(invalid(format!(
                "image {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Rows `y0..y1` as a new image.
    pub fn crop_rows(&self, y0: usize, y1: usize) -> Image {
        let row = self.width * self.channels;
        Image {
            width: self.width,
            height: y1 - y0,
            channels: self.channels,
            data: self.data[y0 * row..y1 * row].to_vec(),
        }
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Quantizes to 8 bits per channel (clamped, rounded).
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for p in self.data.chunks(self.channels) {
            for c in 0..3 {
                let v = p[c.min(self.channels - 1)];
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    /// RGB image holding exactly the values an 8-bit export stores.
    pub fn quantized(&self) -> Image {
        let data = self.to_rgb8().into_iter().map(|v| v as f64 / 255.0).collect();
        Image { width: self.width, height: self.height, channels: 3, data }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(png_err)?;
            w.write_image_data(&self.to_rgb8()).map_err(png_err)?;
        }
        Ok(buf)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Portable float map, bottom-to-top rows, little-endian.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let tag = if self.channels == 1 { "Pf" } else { "PF" };
        write!(w, "{tag}\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let p = self.pixel(x, y);
                let n = if self.channels == 1 { 1 } else { 3 };
                for c in 0..n {
                    w.write_all(&(p[c.min(self.channels - 1)] as f32).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an 8-bit PNG as a float image with values in [0,1].
    pub fn read_png(path: &Path) -> Result<Image> {
        let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        let mut reader = decoder.read_info().map_err(png_err)?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| invalid("png too large"))?];
        let info = reader.next_frame(&mut buf).map_err(png_err)?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(invalid("only 8-bit PNG is supported"));
        }
        let channels = info.color_type.samples();
        let (w, h) = (info.width as usize, info.height as usize);
        let data = buf[..w * h * channels].iter().map(|v| *v as f64 / 255.0).collect();
        let img = Image { width: w, height: h, channels, data };
        Ok(match channels {
            3 => img,
            4 => img.select_channels(&[0, 1, 2]),
            1 => img.select_channels(&[0, 0, 0]),
            2 => img.select_channels(&[0, 0, 0]),
            _ => return Err(invalid("unsupported PNG colour type")),
        })
    }

    pub fn select_channels(&self, which: &[usize]) -> Image {
        let mut data = Vec::with_capacity(self.width * self.height * which.len());
        for p in self.data.chunks(self.channels) {
            data.extend(which.iter().map(|c| p[*c]));
        }
        Image { width: self.width, height: self.height, channels: which.len(), data }
    }
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("png: {e}"))
}
