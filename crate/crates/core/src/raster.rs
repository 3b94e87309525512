//! Minimal RGB canvas with an 8x8 bitmap font, PNG encoding and digests.

use std::io::Cursor;

use font8x8::UnicodeFonts;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, ImageReader};

use crate::digest::DigestBuilder;
use crate::geometry::{BBox, ScreenGeometry};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
#[error("image codec: {0}")]
pub struct CodecError(String);

impl Canvas {
    pub fn new(geom: ScreenGeometry, fill: Rgb) -> Self {
        let n = geom.width as usize * geom.height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&fill);
        }
        Self {
            width: geom.width,
            height: geom.height,
            pixels,
        }
    }

    pub fn geometry(&self) -> ScreenGeometry {
        ScreenGeometry::new(self.width, self.height)
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, b: BBox, c: Rgb) {
        let clipped = b.clip_to(self.geometry());
        if clipped.is_empty() {
            return;
        }
        for y in clipped.y..clipped.y + clipped.h {
            let row = y as usize * self.width as usize;
            for x in clipped.x..clipped.x + clipped.w {
                let i = (row + x as usize) * 3;
                self.pixels[i..i + 3].copy_from_slice(&c);
            }
        }
    }

    /// One-pixel outline along the inside edge of `b`.
    pub fn outline(&mut self, b: BBox, c: Rgb) {
        if b.is_empty() {
            return;
        }
        let (x0, y0) = (b.x as i64, b.y as i64);
        let (x1, y1) = (b.right() - 1, b.bottom() - 1);
        for x in x0..=x1 {
            self.set(x, y0, c);
            self.set(x, y1, c);
        }
        for y in y0..=y1 {
            self.set(x0, y, c);
            self.set(x1, y, c);
        }
    }

    /// Draws one 8x8 glyph with its top-left at `(x, y)`. Unknown characters
    /// render as `?`.
    pub fn glyph(&mut self, x: i64, y: i64, ch: char, c: Rgb) {
        let rows = font8x8::BASIC_FONTS
            .get(ch)
            .or_else(|| font8x8::BASIC_FONTS.get('?'))
            .unwrap_or([0; 8]);
        for (dy, row) in rows.iter().enumerate() {
            for dx in 0..8 {
                if row & (1 << dx) != 0 {
                    self.set(x + dx as i64, y + dy as i64, c);
                }
            }
        }
    }

    /// Draws `text` on an 8-pixel cell grid, at most `max_cells` characters.
    pub fn text(&mut self, x: i64, y: i64, text: &str, c: Rgb, max_cells: usize) {
        for (i, ch) in text.chars().take(max_cells).enumerate() {
            if ch != ' ' {
                self.glyph(x + 8 * i as i64, y, ch, c);
            }
        }
    }

    /// Digest of geometry plus raw pixels; equal canvases give equal digests.
    pub fn digest(&self) -> String {
        DigestBuilder::new()
            .part(&self.width.to_be_bytes())
            .part(&self.height.to_be_bytes())
            .part(&self.pixels)
            .finish()
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
            .write_image(
                &self.pixels,
                self.width,
                self.height,
                image::ExtendedColorType::Rgb8,
            )
            .expect("encoding an in-memory RGB buffer cannot fail");
        out
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, CodecError> {
        let img = ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| CodecError(e.to_string()))?
            .decode()
            .map_err(|e| CodecError(e.to_string()))?
            .to_rgb8();
        Ok(Self {
            width: img.width(),
            height: img.height(),
            pixels: img.into_raw(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let mut c = Canvas::new(ScreenGeometry::new(40, 20), [10, 20, 30]);
        c.fill_rect(BBox::new(2, 2, 5, 5), [200, 0, 0]);
        c.text(10, 4, "Hi!", [255, 255, 255], 10);
        let back = Canvas::from_png(&c.to_png()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn drawing_clips() {
        let mut c = Canvas::new(ScreenGeometry::new(4, 4), [0, 0, 0]);
        c.fill_rect(BBox::new(-10, -10, 100, 100), [1, 1, 1]);
        c.outline(BBox::new(2, 2, 10, 10), [2, 2, 2]);
        c.glyph(3, 3, 'A', [3, 3, 3]);
        assert_eq!(c.pixel(0, 0), [1, 1, 1]);
        assert_eq!(c.pixel(2, 2), [2, 2, 2]);
    }

    #[test]
    fn glyphs_differ() {
        let g = ScreenGeometry::new(8, 8);
        let mut a = Canvas::new(g, [0; 3]);
        let mut b = Canvas::new(g, [0; 3]);
        a.glyph(0, 0, 'a', [255; 3]);
        b.glyph(0, 0, 'b', [255; 3]);
        assert_ne!(a.digest(), b.digest());
    }
}
