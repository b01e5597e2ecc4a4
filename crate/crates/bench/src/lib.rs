//! Synthetic inputs shared by the benchmarks.

use image::{Rgb, RgbImage};
use pointchat_core::perception::Mask;

/// A `size`×`size` image: a centered red square on blue covering half the
/// side length.
pub fn square_scene(size: u32) -> RgbImage {
    let (lo, hi) = (size / 4, size - size / 4);
    RgbImage::from_fn(size, size, |x, y| {
        if (lo..hi).contains(&x) && (lo..hi).contains(&y) {
            Rgb([255, 0, 0])
        } else {
            Rgb([0, 0, 255])
        }
    })
}

/// Mask of the red square in [`square_scene`].
pub fn square_mask(size: u32) -> Mask {
    let (lo, hi) = (size / 4, size - size / 4);
    let mut m = Mask::empty(size, size);
    for y in lo..hi {
        for x in lo..hi {
            m.set(x, y, true);
        }
    }
    m
}

pub const UTTERANCES: [&str; 6] = [
    "caption this photo",
    "remove the masked object",
    "what is the background color in the masked region",
    "replace the masked object with a green apple",
    "cut this video to a TikTok video",
    "remove the black dog near the table in the image",
];
