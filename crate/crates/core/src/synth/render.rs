//! Procedural imagery: land-cover colored background with value noise, and
//! simple sprites for arrays, turbines and confusers.

use crate::temporal::landcover::PALETTE;

use super::{Confuser, ConfuserKind, FeatureKind, PixelRect, PlantedFeature, World};
use crate::geo::Quarter;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn hash3(seed: u64, a: i64, b: i64) -> u64 {
    mix64(mix64(seed ^ (a as u64).wrapping_mul(0x1656_67B1_9E37_79F9)) ^ (b as u64))
}

#[inline]
fn unit(h: u64) -> f32 {
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// Smooth lattice noise in [0, 1) with lattice spacing `scale` pixels.
pub(crate) fn value_noise(seed: u64, x: f64, y: f64, scale: f64) -> f32 {
    let (fx, fy) = (x / scale, y / scale);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = ((fx - x0) as f32, (fy - y0) as f32);
    let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v = |dx: i64, dy: i64| unit(hash3(seed, ix + dx, iy + dy));
    let top = v(0, 0) + (v(1, 0) - v(0, 0)) * sx;
    let bottom = v(0, 1) + (v(1, 1) - v(0, 1)) * sx;
    top + (bottom - top) * sy
}

const PANEL: [f32; 3] = [30.0, 40.0, 82.0];
const PANEL_GAP: [f32; 3] = [92.0, 98.0, 108.0];
const TURBINE: [f32; 3] = [232.0, 234.0, 236.0];
const SHADOW: [f32; 3] = [38.0, 38.0, 44.0];
const TOWER: [f32; 3] = [205.0, 205.0, 210.0];
const BRIGHT_ROOF: [f32; 3] = [226.0, 221.0, 214.0];
const DARK_ROOF: [f32; 3] = [56.0, 60.0, 70.0];
const GRADED: [f32; 3] = [166.0, 156.0, 140.0];
const GLAZING: [f32; 3] = [58.0, 66.0, 96.0];
const GLAZING_FRAME: [f32; 3] = [196.0, 198.0, 196.0];

/// Pixel-interleaved RGB buffer for a window of world pixels.
pub(crate) struct Canvas {
    pub x0: i64,
    pub y0: i64,
    pub w: usize,
    pub h: usize,
    pub rgb: Vec<u8>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, color: [f32; 3], jitter: f32) {
        let (c, r) = (x - self.x0, y - self.y0);
        if c < 0 || r < 0 || c >= self.w as i64 || r >= self.h as i64 {
            return;
        }
        let i = (r as usize * self.w + c as usize) * 3;
        for k in 0..3 {
            self.rgb[i + k] = (color[k] + jitter).round().clamp(0.0, 255.0) as u8;
        }
    }

    fn intersects(&self, rect: &PixelRect) -> bool {
        rect.x < self.x0 + self.w as i64 && rect.x + rect.w > self.x0 && rect.y < self.y0 + self.h as i64 && rect.y + rect.h > self.y0
    }
}

impl World {
    pub(crate) fn render_canvas(&self, quarter: Quarter, x0: i64, y0: i64, w: usize, h: usize) -> Canvas {
        let mut canvas = Canvas { x0, y0, w, h, rgb: vec![0; w * h * 3] };
        self.paint_background(&mut canvas);
        for c in &self.confusers {
            if canvas.intersects(&c.footprint()) {
                self.paint_confuser(&mut canvas, c);
            }
        }
        let lead = self.spec.construction_quarters;
        for f in &self.features {
            if !canvas.intersects(&f.footprint()) {
                continue;
            }
            if f.present_at(quarter) {
                self.paint_feature(&mut canvas, f);
            } else if f.under_construction(quarter, lead) {
                self.paint_graded(&mut canvas, &f.footprint(), u64::from(f.id));
            }
        }
        canvas
    }

    fn paint_background(&self, canvas: &mut Canvas) {
        let seed = self.spec.seed;
        let lc = &self.landcover;
        let ratio = self.transform.pixel_size / lc.transform.pixel_size;
        let cell = |v: i64, n: usize| ((v as f64 + 0.5) * ratio).floor().clamp(0.0, n as f64 - 1.0) as usize;
        let cols: Vec<usize> = (0..canvas.w as i64).map(|c| cell(canvas.x0 + c, lc.transform.width)).collect();
        for r in 0..canvas.h {
            let y = canvas.y0 + r as i64;
            let lc_row = cell(y, lc.transform.height);
            for c in 0..canvas.w {
                let x = canvas.x0 + c as i64;
                let base = PALETTE[usize::from(lc.class_at_cell(cols[c], lc_row))];
                let broad = value_noise(seed ^ 0xB0, x as f64, y as f64, 48.0) - 0.5;
                let fine = value_noise(seed ^ 0xF1, x as f64, y as f64, 6.0) - 0.5;
                let grain = unit(hash3(seed ^ 0x6A, x, y)) - 0.5;
                let shade = 36.0 * broad + 16.0 * fine;
                let i = (r * canvas.w + c) * 3;
                for k in 0..3 {
                    let tint = 8.0 * (unit(hash3(seed ^ (0x70 + k as u64), x, y)) - 0.5);
                    canvas.rgb[i + k] = (f32::from(base[k]) + shade + 10.0 * grain + tint).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    fn paint_feature(&self, canvas: &mut Canvas, f: &PlantedFeature) {
        let seed = self.spec.seed ^ u64::from(f.id).wrapping_mul(0xA24B_AED4_963E_E407);
        match f.kind {
            FeatureKind::Solar => {
                if f.apron > 0 {
                    self.paint_graded(canvas, &f.footprint(), u64::from(f.id));
                }
                let r = f.rect;
                let vertical = f.orientation % 2 == 1;
                for y in r.y.max(canvas.y0)..(r.y + r.h).min(canvas.y0 + canvas.h as i64) {
                    for x in r.x.max(canvas.x0)..(r.x + r.w).min(canvas.x0 + canvas.w as i64) {
                        let along = if vertical { x - r.x } else { y - r.y };
                        let color = if along % 4 == 3 { PANEL_GAP } else { PANEL };
                        let j = 10.0 * (unit(hash3(seed, x, y)) - 0.5);
                        canvas.put(x, y, color, j);
                    }
                }
            }
            FeatureKind::Wind => {
                let (cx, cy) = f.center();
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        canvas.put(cx + dx, cy + dy, TURBINE, 0.0);
                    }
                }
                for k in 2..=5 {
                    canvas.put(cx + k, cy + k, SHADOW, 0.0);
                }
            }
        }
    }

    /// Cleared, compacted ground: facility aprons, construction sites, lots.
    fn paint_graded(&self, canvas: &mut Canvas, r: &PixelRect, salt: u64) {
        let seed = self.spec.seed ^ 0x6D ^ salt.wrapping_mul(0x9E37_79B9);
        for y in r.y.max(canvas.y0)..(r.y + r.h).min(canvas.y0 + canvas.h as i64) {
            for x in r.x.max(canvas.x0)..(r.x + r.w).min(canvas.x0 + canvas.w as i64) {
                let j = 8.0 * (value_noise(seed, x as f64, y as f64, 10.0) - 0.5) + 6.0 * (unit(hash3(seed, x, y)) - 0.5);
                canvas.put(x, y, GRADED, j);
            }
        }
    }

    fn paint_confuser(&self, canvas: &mut Canvas, c: &Confuser) {
        let r = c.rect;
        match c.kind {
            ConfuserKind::BrightRoof | ConfuserKind::DarkRoof => {
                let color = if c.kind == ConfuserKind::BrightRoof { BRIGHT_ROOF } else { DARK_ROOF };
                for y in r.y..r.y + r.h {
                    for x in r.x..r.x + r.w {
                        let j = 6.0 * (unit(hash3(self.spec.seed ^ 0xC0, x, y)) - 0.5);
                        canvas.put(x, y, color, j);
                    }
                }
            }
            ConfuserKind::BareLot => self.paint_graded(canvas, &r, 0x10),
            ConfuserKind::Greenhouse => {
                let vertical = (r.x ^ r.y) & 1 == 1;
                for y in r.y..r.y + r.h {
                    for x in r.x..r.x + r.w {
                        let along = if vertical { x - r.x } else { y - r.y };
                        let color = if along % 3 == 2 { GLAZING_FRAME } else { GLAZING };
                        let j = 10.0 * (unit(hash3(self.spec.seed ^ 0x9C, x, y)) - 0.5);
                        canvas.put(x, y, color, j);
                    }
                }
            }
            ConfuserKind::Tower => {
                let (cx, cy) = (r.x + 2, r.y + 2);
                for k in -2..=2 {
                    canvas.put(cx + k, cy, TOWER, 0.0);
                    canvas.put(cx, cy + k, TOWER, 0.0);
                }
            }
        }
    }
}
