use std::collections::VecDeque;

use image::{Rgb, RgbImage};

use super::{Mask, PerceptionError};

/// Produces a region selection from a seed pixel.
pub trait SegmenterBackend: Send + Sync {
    fn segment(&self, image: &RgbImage, seed: (u32, u32)) -> Result<Mask, PerceptionError>;
}

/// Color-tolerance flood fill over 4-connected pixels.
#[derive(Debug, Clone, Copy)]
pub struct FloodFillSegmenter {
    pub tolerance: f64,
}

impl Default for FloodFillSegmenter {
    fn default() -> Self {
        Self { tolerance: 32.0 }
    }
}

impl SegmenterBackend for FloodFillSegmenter {
    fn segment(&self, image: &RgbImage, seed: (u32, u32)) -> Result<Mask, PerceptionError> {
        segment_at(image, seed, self.tolerance)
    }
}

#[inline]
pub(crate) fn color_distance_sq(a: &Rgb<u8>, b: &Rgb<u8>) -> f64 {
    a.0.iter()
        .zip(b.0.iter())
        .map(|(p, q)| {
            let d = *p as f64 - *q as f64;
            d * d
        })
        .sum()
}

/// The 4-connected component of pixels within `tolerance` (Euclidean RGB) of
/// the seed pixel's color.
pub fn segment_at(image: &RgbImage, seed: (u32, u32), tolerance: f64) -> Result<Mask, PerceptionError> {
    let (w, h) = image.dimensions();
    let (sx, sy) = seed;
    if sx >= w || sy >= h {
        return Err(PerceptionError::SeedOutOfBounds { seed, width: w, height: h });
    }
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(PerceptionError::InvalidTolerance(tolerance));
    }
    let tol_sq = tolerance * tolerance;
    let reference = *image.get_pixel(sx, sy);

    let mut mask = Mask::empty(w, h);
    mask.seed = seed;
    mask.set(sx, sy, true);
    let mut queue = VecDeque::from([seed]);
    while let Some((x, y)) = queue.pop_front() {
        let neighbors = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for (nx, ny) in neighbors {
            if nx >= w || ny >= h || mask.get(nx, ny) {
                continue;
            }
            if color_distance_sq(image.get_pixel(nx, ny), &reference) <= tol_sq {
                mask.set(nx, ny, true);
                queue.push_back((nx, ny));
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Labels every component of the color predicate by repeated relaxation
    /// and returns the one containing the seed. Shares no code with the
    /// queue-based fill.
    fn brute_force_component(image: &RgbImage, seed: (u32, u32), tolerance: f64) -> Vec<bool> {
        let (w, h) = image.dimensions();
        let reference = image.get_pixel(seed.0, seed.1).0;
        let ok = |x: u32, y: u32| {
            let p = image.get_pixel(x, y).0;
            let d: f64 = (0..3).map(|c| (p[c] as f64 - reference[c] as f64).powi(2)).sum();
            d.sqrt() <= tolerance
        };
        let mut label: Vec<usize> = (0..(w * h) as usize).collect();
        loop {
            let mut changed = false;
            for y in 0..h {
                for x in 0..w {
                    if !ok(x, y) {
                        continue;
                    }
                    let i = (y * w + x) as usize;
                    for (dx, dy) in [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)] {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        if !ok(nx as u32, ny as u32) {
                            continue;
                        }
                        let j = (ny as u32 * w + nx as u32) as usize;
                        if label[j] < label[i] {
                            label[i] = label[j];
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let seed_label = label[(seed.1 * w + seed.0) as usize];
        (0..(w * h) as usize)
            .map(|i| {
                let (x, y) = ((i as u32) % w, (i as u32) / w);
                ok(x, y) && label[i] == seed_label
            })
            .collect()
    }

    fn halves() -> RgbImage {
        RgbImage::from_fn(10, 10, |x, _| if x < 5 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) })
    }

    #[test]
    fn uniform_image_is_one_component() {
        let img = RgbImage::from_pixel(10, 10, Rgb([255, 0, 0]));
        let m = segment_at(&img, (5, 5), 32.0).unwrap();
        assert_eq!(m.count(), 100);
    }

    #[test]
    fn two_halves_select_left() {
        let img = halves();
        let m = segment_at(&img, (2, 2), 32.0).unwrap();
        let oracle = brute_force_component(&img, (2, 2), 32.0);
        assert_eq!(m.bits, oracle);
        assert_eq!(m.count(), 50);
        assert!(m.pixels().all(|(x, _)| x < 5));
    }

    #[test]
    fn seed_out_of_bounds() {
        let img = halves();
        assert!(matches!(
            segment_at(&img, (99, 99), 32.0),
            Err(PerceptionError::SeedOutOfBounds { .. })
        ));
        assert!(matches!(
            segment_at(&img, (1, 1), -1.0),
            Err(PerceptionError::InvalidTolerance(_))
        ));
    }

    fn region_image() -> impl Strategy<Value = (RgbImage, (u32, u32), f64)> {
        (1u32..=32, 1u32..=32, prop::collection::vec(any::<[u8; 3]>(), 2..=5), any::<u64>(), 0.0f64..80.0)
            .prop_flat_map(|(w, h, palette, salt, tol)| {
                (Just((w, h, palette, salt, tol)), 0..w, 0..h)
            })
            .prop_map(|((w, h, palette, salt, tol), sx, sy)| {
                let img = RgbImage::from_fn(w, h, |x, y| {
                    let v = (x as u64 / 3).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        ^ (y as u64 / 2).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
                        ^ salt;
                    Rgb(palette[(v % palette.len() as u64) as usize])
                });
                (img, (sx, sy), tol)
            })
    }

    proptest! {
        #[test]
        fn matches_connected_component_oracle((img, seed, tol) in region_image()) {
            let m = segment_at(&img, seed, tol).unwrap();
            prop_assert_eq!(&m.bits, &brute_force_component(&img, seed, tol));
            prop_assert!(m.get(seed.0, seed.1));
        }

        #[test]
        fn soundness_and_completeness((img, seed, tol) in region_image()) {
            let m = segment_at(&img, seed, tol).unwrap();
            let reference = *img.get_pixel(seed.0, seed.1);
            for (x, y, p) in img.enumerate_pixels() {
                let within = color_distance_sq(p, &reference) <= tol * tol;
                if m.get(x, y) {
                    prop_assert!(within);
                } else if within {
                    let touching = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)]
                        .iter()
                        .any(|&(nx, ny)| m.get(nx, ny));
                    prop_assert!(!touching);
                }
            }
        }
    }
}
