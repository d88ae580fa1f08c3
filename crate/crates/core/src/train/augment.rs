use rand::{Rng, RngCore};

pub const PAD: usize = 4;

/// Crops an `h × w` window at offset `(dy, dx)` from the image zero-padded by
/// [`PAD`] on every side, optionally mirrored left to right.
pub fn crop_flip<T: Copy + Default>(image: &[T], shape: [usize; 3], dy: usize, dx: usize, flip: bool) -> Vec<T> {
    let [c, h, w] = shape;
    assert!(dy <= 2 * PAD && dx <= 2 * PAD, "offset outside the padded image");
    let mut out = vec![T::default(); image.len()];
    for ch in 0..c {
        for y in 0..h {
            let sy = (y + dy).wrapping_sub(PAD);
            if sy >= h {
                continue;
            }
            for x in 0..w {
                let sx = (x + dx).wrapping_sub(PAD);
                if sx >= w {
                    continue;
                }
                let tx = if flip { w - 1 - x } else { x };
                out[(ch * h + y) * w + tx] = image[(ch * h + sy) * w + sx];
            }
        }
    }
    out
}

/// Random translation by up to [`PAD`] pixels and a horizontal flip with probability 0.5.
pub fn augment<T: Copy + Default>(image: &[T], shape: [usize; 3], rng: &mut dyn RngCore) -> Vec<T> {
    let dy = rng.random_range(0..=2 * PAD);
    let dx = rng.random_range(0..=2 * PAD);
    let flip = rng.random_bool(0.5);
    crop_flip(image, shape, dy, dx, flip)
}
