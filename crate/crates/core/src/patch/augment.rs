//! The eight symmetries of a square patch.
//!
//! Variant `v` is `v % 4` counter-clockwise quarter turns, followed by a
//! vertical flip (top row <-> bottom row) when `v >= 4`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const VARIANTS: u8 = 8;

fn square_side<T>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [h, w, c] if h == w => Ok((h, c)),
        _ => Err(Error::InvalidShape {
            shape: t.shape().to_vec(),
            reason: "augmentation needs a square HxWxC patch".into(),
        }),
    }
}

/// Quarter turn counter-clockwise: `out[r][c] = in[c][n-1-r]`.
pub fn rotate90<T: Copy>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ch) = square_side(t)?;
    let src = t.data();
    let mut data = Vec::with_capacity(src.len());
    for r in 0..n {
        for c in 0..n {
            let o = (c * n + (n - 1 - r)) * ch;
            data.extend_from_slice(&src[o..o + ch]);
        }
    }
    Tensor::new(t.shape().to_vec(), data)
}

pub fn flip_vertical<T: Copy>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ch) = square_side(t)?;
    let row = n * ch;
    let data = t
        .data()
        .chunks_exact(row)
        .rev()
        .flatten()
        .copied()
        .collect();
    Tensor::new(t.shape().to_vec(), data)
}

pub fn apply_variant<T: Copy>(t: &Tensor<T>, variant: u8) -> Result<Tensor<T>> {
    if variant >= VARIANTS {
        return Err(Error::InvalidConfig(format!(
            "variant {variant} outside 0..8"
        )));
    }
    let mut out = t.clone();
    square_side(&out)?;
    for _ in 0..variant % 4 {
        out = rotate90(&out)?;
    }
    if variant >= 4 {
        out = flip_vertical(&out)?;
    }
    Ok(out)
}

/// All eight variants, indexed by variant id; index 0 is the input itself.
pub fn augment8<T: Copy>(t: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    square_side(t)?;
    let mut out = Vec::with_capacity(8);
    let mut cur = t.clone();
    for _ in 0..4 {
        let next = rotate90(&cur)?;
        out.push(cur);
        cur = next;
    }
    for i in 0..4 {
        let flipped = flip_vertical(&out[i])?;
        out.push(flipped);
    }
    Ok(out)
}

/// Variant id of "apply `first`, then `second`".
pub fn compose(first: u8, second: u8) -> u8 {
    let (r1, f1) = (first % 4, first / 4);
    let (r2, f2) = (second % 4, second / 4);
    // A flip conjugates rotations to their inverse.
    let r2 = if f1 == 1 { (4 - r2) % 4 } else { r2 };
    ((r1 + r2) % 4) + 4 * (f1 ^ f2)
}
