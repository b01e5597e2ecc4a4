//! Onion-peel inpainting: the masked hole is filled from its boundary inward,
//! one layer at a time. Each pixel of a layer takes the rounded mean of its
//! already-known 4-neighbors; a layer is committed all at once.

use image::RgbImage;

use super::ToolError;
use crate::perception::Mask;

pub fn onion_peel(image: &RgbImage, mask: &Mask) -> Result<RgbImage, ToolError> {
    let (w, h) = image.dimensions();
    if mask.dimensions() != (w, h) {
        return Err(ToolError::DimensionMismatch {
            image: (w, h),
            mask: mask.dimensions(),
        });
    }
    let masked = mask.count();
    if masked == 0 {
        return Err(ToolError::EmptyMask);
    }
    if masked == w as usize * h as usize {
        return Err(ToolError::EmptyComplement);
    }

    let (wu, hu) = (w as usize, h as usize);
    let mut out = image.clone();
    let mut known: Vec<bool> = mask.bits.iter().map(|b| !b).collect();
    let mut queued = vec![false; known.len()];

    let neighbors = |i: usize| {
        let (x, y) = (i % wu, i / wu);
        [
            (x > 0).then(|| i - 1),
            (x + 1 < wu).then(|| i + 1),
            (y > 0).then(|| i - wu),
            (y + 1 < hu).then(|| i + wu),
        ]
        .into_iter()
        .flatten()
    };

    let mut layer: Vec<usize> = (0..known.len())
        .filter(|&i| !known[i] && neighbors(i).any(|j| known[j]))
        .collect();
    for &i in &layer {
        queued[i] = true;
    }

    let mut fill = Vec::new();
    while !layer.is_empty() {
        fill.clear();
        for &i in &layer {
            let mut sum = [0u32; 3];
            let mut n = 0u32;
            for j in neighbors(i).filter(|&j| known[j]) {
                let p = out.get_pixel((j % wu) as u32, (j / wu) as u32).0;
                for c in 0..3 {
                    sum[c] += p[c] as u32;
                }
                n += 1;
            }
            fill.push(sum.map(|s| ((s + n / 2) / n) as u8));
        }
        for (&i, rgb) in layer.iter().zip(&fill) {
            out.put_pixel((i % wu) as u32, (i / wu) as u32, image::Rgb(*rgb));
            known[i] = true;
        }
        let mut next = Vec::new();
        for &i in &layer {
            for j in neighbors(i) {
                if !known[j] && !queued[j] {
                    queued[j] = true;
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        layer = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    /// Full-raster rescans until nothing changes.
    fn naive(image: &RgbImage, mask: &Mask) -> RgbImage {
        let (w, h) = image.dimensions();
        let mut out = image.clone();
        let mut known: Vec<Vec<bool>> = (0..h).map(|y| (0..w).map(|x| !mask.get(x, y)).collect()).collect();
        loop {
            let mut updates = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if known[y as usize][x as usize] {
                        continue;
                    }
                    let mut vals = Vec::new();
                    for (dx, dy) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
                        let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                        if nx >= 0 && ny >= 0 && nx < w as i32 && ny < h as i32 && known[ny as usize][nx as usize] {
                            vals.push(out.get_pixel(nx as u32, ny as u32).0);
                        }
                    }
                    if !vals.is_empty() {
                        let n = vals.len() as f64;
                        let avg: [u8; 3] = std::array::from_fn(|c| {
                            (vals.iter().map(|v| v[c] as f64).sum::<f64>() / n + 0.5).floor() as u8
                        });
                        updates.push((x, y, avg));
                    }
                }
            }
            if updates.is_empty() {
                break;
            }
            for (x, y, v) in updates {
                out.put_pixel(x, y, Rgb(v));
                known[y as usize][x as usize] = true;
            }
        }
        out
    }

    #[test]
    fn one_by_three() {
        let img = RgbImage::from_fn(3, 1, |x, _| match x {
            0 => Rgb([0, 0, 0]),
            1 => Rgb([90, 10, 200]),
            _ => Rgb([255, 255, 255]),
        });
        let mut mask = Mask::empty(3, 1);
        mask.set(1, 0, true);
        let out = onion_peel(&img, &mask).unwrap();
        assert_eq!(out.get_pixel(1, 0).0, [128, 128, 128]);
        assert_eq!(out.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(out.get_pixel(2, 0).0, [255, 255, 255]);
    }

    #[test]
    fn constant_field_is_fixed() {
        let img = RgbImage::from_pixel(9, 7, Rgb([12, 34, 56]));
        let mut mask = Mask::empty(9, 7);
        for y in 1..6 {
            for x in 2..8 {
                mask.set(x, y, true);
            }
        }
        assert_eq!(onion_peel(&img, &mask).unwrap(), img);
    }

    #[test]
    fn checkerboard_block() {
        let img = RgbImage::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        let mut mask = Mask::empty(8, 8);
        for (x, y) in [(3, 3), (4, 3), (3, 4), (4, 4)] {
            mask.set(x, y, true);
        }
        let out = onion_peel(&img, &mask).unwrap();
        assert_eq!(out, naive(&img, &mask));
        for (x, y, p) in img.enumerate_pixels() {
            if !mask.get(x, y) {
                assert_eq!(out.get_pixel(x, y), p);
            }
        }
    }

    #[test]
    fn error_cases() {
        let img = RgbImage::new(4, 4);
        assert!(matches!(onion_peel(&img, &Mask::empty(3, 4)), Err(ToolError::DimensionMismatch { .. })));
        assert_eq!(onion_peel(&img, &Mask::empty(4, 4)), Err(ToolError::EmptyMask));
        let mut full = Mask::empty(4, 4);
        full.bits.iter_mut().for_each(|b| *b = true);
        assert_eq!(onion_peel(&img, &full), Err(ToolError::EmptyComplement));
    }

    fn case() -> impl Strategy<Value = (RgbImage, Mask)> {
        (1u32..=16, 1u32..=16).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (
                prop::collection::vec(any::<[u8; 3]>(), n),
                prop::collection::vec(prop::bool::weighted(0.4), n),
            )
                .prop_map(move |(px, bits)| {
                    let img = RgbImage::from_fn(w, h, |x, y| Rgb(px[(y * w + x) as usize]));
                    let mut mask = Mask::empty(w, h);
                    mask.bits = bits;
                    (img, mask)
                })
        })
    }

    proptest! {
        #[test]
        fn locality_totality_and_oracle((img, mask) in case()) {
            let n = mask.count();
            prop_assume!(n > 0 && n < mask.bits.len());
            let out = onion_peel(&img, &mask).unwrap();
            for (x, y, p) in img.enumerate_pixels() {
                if !mask.get(x, y) {
                    prop_assert_eq!(out.get_pixel(x, y), p);
                }
            }
            prop_assert_eq!(&out, &naive(&img, &mask));
        }
    }
}
