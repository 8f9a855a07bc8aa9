use crate::imaging::{GrayImage, Grid, Pixel};

/// `size×size` window whose top-left corner is `center − ⌊size/2⌋`;
/// pixels outside the image are zero.
pub fn crop_patch(image: &GrayImage, center: Pixel, size: usize) -> GrayImage {
    let half = (size / 2) as i64;
    let top = center.0 as i64 - half;
    let left = center.1 as i64 - half;
    let mut out = Grid::filled(size, size, 0u8);
    for r in 0..size {
        for c in 0..size {
            if let Some(v) = image.get_signed(top + r as i64, left + c as i64) {
                out.set(r, c, *v);
            }
        }
    }
    out
}
