//! Packed one-bit-per-pixel masks.

use serde::{Deserialize, Serialize};

use super::GeoError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, words: vec![0; n.div_ceil(64)] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let mut m = Self::new(width, height);
        for i in 0..width * height {
            m.set_index(i, true);
        }
        m
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for row in 0..height {
            for col in 0..width {
                if f(col, row) {
                    m.set(col, row, true);
                }
            }
        }
        m
    }

    /// Mask with the pixels listed as (col, row) set.
    pub fn from_pixels(width: usize, height: usize, pixels: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::new(width, height);
        for (c, r) in pixels {
            m.set(c, r, true);
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        debug_assert!(col < self.width && row < self.height);
        self.get_index(row * self.width + col)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    /// Bounds-checked read; out-of-range coordinates read as unset.
    pub fn get_checked(&self, col: i64, row: i64) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width
            && (row as usize) < self.height
            && self.get(col as usize, row as usize)
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        assert!(col < self.width && row < self.height, "pixel ({col},{row}) outside mask");
        self.set_index(row * self.width + col, value);
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, value: bool) {
        let bit = 1u64 << (i & 63);
        if value {
            self.words[i >> 6] |= bit;
        } else {
            self.words[i >> 6] &= !bit;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Linear indices of set pixels in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + t)
            })
            .take_while(move |&i| i < n)
        })
    }

    /// (col, row) of every set pixel.
    pub fn iter_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.iter_ones().map(move |i| (i % w, i / w))
    }

    pub fn check_same_dims(&self, other: &BitMask) -> Result<(), GeoError> {
        if self.width != other.width || self.height != other.height {
            return Err(GeoError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BitMask) -> Result<usize, GeoError> {
        self.check_same_dims(other)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum())
    }

    pub fn union_count(&self, other: &BitMask) -> Result<usize, GeoError> {
        self.check_same_dims(other)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a | b).count_ones() as usize).sum())
    }

    pub fn union(&self, other: &BitMask) -> Result<BitMask, GeoError> {
        self.check_same_dims(other)?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        Ok(BitMask { width: self.width, height: self.height, words })
    }

    pub fn intersection(&self, other: &BitMask) -> Result<BitMask, GeoError> {
        self.check_same_dims(other)?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect();
        Ok(BitMask { width: self.width, height: self.height, words })
    }

    pub fn difference(&self, other: &BitMask) -> Result<BitMask, GeoError> {
        self.check_same_dims(other)?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect();
        Ok(BitMask { width: self.width, height: self.height, words })
    }

    /// Pixel-center centroid (col, row) of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0f64, 0f64);
        for (c, r) in self.iter_pixels() {
            n += 1;
            sx += c as f64 + 0.5;
            sy += r as f64 + 0.5;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Copy of the window starting at (`col`, `row`); pixels outside self read as unset.
    pub fn crop(&self, col: i64, row: i64, width: usize, height: usize) -> BitMask {
        BitMask::from_fn(width, height, |c, r| self.get_checked(col + c as i64, row + r as i64))
    }

    /// Copy under a quarter-turn/flip transform.
    pub fn transformed(&self, t: super::Dihedral) -> BitMask {
        let (w, h) = t.output_dims(self.width, self.height);
        BitMask::from_fn(w, h, |c, r| {
            let (sc, sr) = t.source_pixel(c, r, self.width, self.height);
            self.get(sc, sr)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_count() {
        let mut m = BitMask::new(70, 3);
        m.set(69, 2, true);
        m.set(0, 0, true);
        m.set(5, 1, true);
        assert_eq!(m.count_ones(), 3);
        assert!(m.get(69, 2) && !m.get(68, 2));
        assert_eq!(m.iter_pixels().collect::<Vec<_>>(), vec![(0, 0), (5, 1), (69, 2)]);
        m.set(5, 1, false);
        assert_eq!(m.count_ones(), 2);
    }

    #[test]
    fn full_mask_has_no_stray_bits() {
        let m = BitMask::full(13, 7);
        assert_eq!(m.count_ones(), 91);
        assert_eq!(m.iter_ones().count(), 91);
    }

    #[test]
    fn set_algebra() {
        let a = BitMask::from_fn(8, 8, |c, _| c < 4);
        let b = BitMask::from_fn(8, 8, |_, r| r < 2);
        assert_eq!(a.intersection_count(&b).unwrap(), 8);
        assert_eq!(a.union_count(&b).unwrap(), 32 + 8);
        assert_eq!(a.difference(&b).unwrap().count_ones(), 24);
        assert!(a.intersection_count(&BitMask::new(4, 4)).is_err());
    }

    #[test]
    fn crop_reads_outside_as_unset() {
        let a = BitMask::full(4, 4);
        let c = a.crop(-2, -2, 4, 4);
        assert_eq!(c.count_ones(), 4);
        assert!(c.get(3, 3) && !c.get(0, 0));
    }
}
