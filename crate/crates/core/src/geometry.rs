//! Screen geometry and pixel-space bounding boxes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub width: u32,
    pub height: u32,
}

impl ScreenGeometry {
    pub const DEFAULT: ScreenGeometry = ScreenGeometry {
        width: 1280,
        height: 720,
    };

    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn is_positive(&self) -> bool {
        self.width > 0 && self.height > 0
    }

    /// Inside the half-open screen rectangle `[0, width) x [0, height)`.
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn bounds(&self) -> BBox {
        BBox::new(0, 0, self.width as i32, self.height as i32)
    }
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Axis-aligned pixel box `(x, y, w, h)`. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl From<[i32; 4]> for BBox {
    fn from(v: [i32; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_empty(&self) -> bool {
        self.w <= 0 || self.h <= 0
    }

    pub fn right(&self) -> i64 {
        self.x as i64 + self.w as i64
    }

    pub fn bottom(&self) -> i64 {
        self.y as i64 + self.h as i64
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        !self.is_empty()
            && x >= self.x as i64
            && y >= self.y as i64
            && x < self.right()
            && y < self.bottom()
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.is_empty()
            || (other.x >= self.x
                && other.y >= self.y
                && other.right() <= self.right()
                && other.bottom() <= self.bottom())
    }

    /// Center point `(x + floor(w/2), y + floor(h/2))`.
    pub fn center(&self) -> (i64, i64) {
        (
            self.x as i64 + (self.w as i64).div_euclid(2),
            self.y as i64 + (self.h as i64).div_euclid(2),
        )
    }

    pub fn intersect(&self, other: &BBox) -> BBox {
        let x0 = (self.x as i64).max(other.x as i64);
        let y0 = (self.y as i64).max(other.y as i64);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 || y1 <= y0 {
            return BBox::new(x0 as i32, y0 as i32, 0, 0);
        }
        BBox::new(x0 as i32, y0 as i32, (x1 - x0) as i32, (y1 - y0) as i32)
    }

    pub fn clip_to(&self, geom: ScreenGeometry) -> BBox {
        self.intersect(&geom.bounds())
    }

    /// Grow by `by` pixels on every side.
    pub fn inflate(&self, by: i32) -> BBox {
        BBox::new(self.x - by, self.y - by, self.w + 2 * by, self.h + 2 * by)
    }

    pub fn union(&self, other: &BBox) -> BBox {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        BBox::new(x0, y0, (x1 - x0 as i64) as i32, (y1 - y0 as i64) as i32)
    }
}
