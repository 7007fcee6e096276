//! Grayscale rasters: decoding, luma conversion, bilinear resize and PGM output.

use image::DynamicImage;

use super::VisionError;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, VisionError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(VisionError::UndecodableImage(format!(
                "{width}x{height} raster with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Decodes PGM/PPM (any PNM variant) or PNG bytes. RGB input is converted
    /// with the 0.299/0.587/0.114 luma weights.
    pub fn decode(bytes: &[u8]) -> Result<Self, VisionError> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| VisionError::UndecodableImage(e.to_string()))?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let pixels: Vec<f64> = match img {
            DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
            DynamicImage::ImageLuma16(buf) => {
                buf.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()
            }
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    (LUMA_WEIGHTS[0] * f64::from(r) + LUMA_WEIGHTS[1] * f64::from(g) + LUMA_WEIGHTS[2] * f64::from(b))
                        / 255.0
                })
                .collect(),
        };
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel with coordinates clamped to the border.
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear resize with pixel-center alignment. Resizing to the same
    /// dimensions returns an identical image.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        GrayImage::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
            let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
            let top = self.get(x0, y0) * (1.0 - ax) + self.get(x1, y0) * ax;
            let bottom = self.get(x0, y1) * (1.0 - ax) + self.get(x1, y1) * ax;
            top * (1.0 - ay) + bottom * ay
        })
    }

    /// Rotation by 180 degrees.
    pub fn rotate180(&self) -> GrayImage {
        let mut pixels = self.pixels.clone();
        pixels.reverse();
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Binary (P5) PGM encoding, 8 bits per sample.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.pixels
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}
