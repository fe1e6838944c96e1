//! Two-channel (real, imaginary) views of complex grids and mask planes.

use nmrrecon_core::{Complex64, ComplexGrid, Domain, NusMask};

use crate::tensor::Tensor;

/// `[1, 2, H, W]` tensor holding the real and imaginary planes.
pub fn grid_to_tensor(grid: &ComplexGrid) -> Tensor<f32> {
    let (h, w) = grid.shape();
    let mut data = Vec::with_capacity(2 * h * w);
    data.extend(grid.data().iter().map(|z| z.re as f32));
    data.extend(grid.data().iter().map(|z| z.im as f32));
    Tensor::from_vec(&[1, 2, h, w], data)
}

/// Inverse of [`grid_to_tensor`] for a single item, multiplied by `scale`.
pub fn tensor_to_grid(tensor: &Tensor<f32>, domain: Domain, scale: f64) -> ComplexGrid {
    let (b, c, h, w) = tensor.dims4();
    assert_eq!((b, c), (1, 2), "expected a single two-channel item");
    let (re, im) = tensor.data().split_at(h * w);
    let data = re
        .iter()
        .zip(im)
        .map(|(&r, &i)| Complex64::new(r as f64, i as f64) * scale)
        .collect();
    ComplexGrid::from_vec(h, w, data, domain).expect("shape is consistent")
}

/// `[1, 1, H, W]` plane with 1.0 on kept rows and 0.0 elsewhere.
pub fn mask_plane(mask: &NusMask, width: usize) -> Tensor<f32> {
    let flags = mask.row_flags();
    let data = flags
        .iter()
        .flat_map(|&kept| std::iter::repeat_n(if kept { 1.0 } else { 0.0 }, width))
        .collect();
    Tensor::from_vec(&[1, 1, flags.len(), width], data)
}

/// Zeroes every skipped row of a `[1, C, H, W]` tensor in place.
pub fn zero_skipped_rows(tensor: &mut Tensor<f32>, flags: &[bool]) {
    let (_, _, h, w) = tensor.dims4();
    assert_eq!(flags.len(), h);
    for plane in tensor.data_mut().chunks_mut(h * w) {
        for (row, &kept) in plane.chunks_mut(w).zip(flags) {
            if !kept {
                row.fill(0.0);
            }
        }
    }
}

/// Copies kept rows of `source` into `target`; both `[1, C, H, W]`.
pub fn copy_kept_rows(target: &mut [f32], source: &[f32], flags: &[bool], width: usize) {
    let h = flags.len();
    for (dst, src) in target.chunks_mut(h * width).zip(source.chunks(h * width)) {
        for (i, &kept) in flags.iter().enumerate() {
            if kept {
                dst[i * width..(i + 1) * width].copy_from_slice(&src[i * width..(i + 1) * width]);
            }
        }
    }
}

/// Stacks single items `[1, C_k, H, W]` along channels into `[1, sum C_k, H, W]`.
pub fn stack_channels(parts: &[&Tensor<f32>]) -> Tensor<f32> {
    let (_, _, h, w) = parts[0].dims4();
    let mut data = Vec::new();
    let mut channels = 0;
    for p in parts {
        let (b, c, ph, pw) = p.dims4();
        assert_eq!((b, ph, pw), (1, h, w));
        channels += c;
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[1, channels, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_mask_plane() {
        let g = ComplexGrid::from_fn(4, 3, Domain::TF, |i, j| Complex64::new(i as f64, -(j as f64)));
        let t = grid_to_tensor(&g);
        assert_eq!(t.shape(), &[1, 2, 4, 3]);
        assert_eq!(tensor_to_grid(&t, Domain::TF, 1.0), g);

        let mask = NusMask { n_rows: 4, ratio: 0.5, seed: 0, kept: vec![0, 2] };
        let m = mask_plane(&mask, 3);
        assert_eq!(m.data(), &[1., 1., 1., 0., 0., 0., 1., 1., 1., 0., 0., 0.]);

        let mut z = t.clone();
        zero_skipped_rows(&mut z, &mask.row_flags());
        assert_eq!(&z.data()[3..6], &[0.0, 0.0, 0.0]);
        assert_eq!(&z.data()[6..9], &t.data()[6..9]);
    }
}
