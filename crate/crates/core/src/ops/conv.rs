//! 2-D cross-correlation with zero padding, grouped channels, and stride.
//!
//! `conv2d_direct` is the textbook seven-loop reference; `conv2d_im2col`
//! lowers each group to a matrix product and is what the tape uses.

use crate::error::{Error, Result};
use crate::ops::matmul::gemm;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec {
            stride: 1,
            pad: 0,
            groups: 1,
        }
    }
}

impl ConvSpec {
    /// Stride 1 with `pad = (k − 1) / 2`; only odd kernels keep `H × W`.
    pub fn same(kernel: usize, groups: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::config(format!(
                "\"same\" padding needs an odd kernel, got {kernel}"
            )));
        }
        Ok(ConvSpec {
            stride: 1,
            pad: (kernel - 1) / 2,
            groups,
        })
    }
}

/// Resolved extents of one convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub cin_g: usize,
    pub cout_g: usize,
    pub spec: ConvSpec,
}

impl ConvGeom {
    pub fn new(x: Dims, wt: Dims, spec: ConvSpec) -> Result<Self> {
        let g = spec.groups;
        if g == 0 || spec.stride == 0 {
            return Err(Error::config("groups and stride must be positive"));
        }
        if x.c % g != 0 || wt.b % g != 0 {
            return Err(Error::shape(format!(
                "channels {} -> {} not divisible by groups {g}",
                x.c, wt.b
            )));
        }
        if wt.c != x.c / g {
            return Err(Error::shape(format!(
                "weight {wt:?} expects {} input channels per group, input {x:?} has {}",
                wt.c,
                x.c / g
            )));
        }
        let (ph, pw) = (x.h + 2 * spec.pad, x.w + 2 * spec.pad);
        if ph < wt.h || pw < wt.w {
            return Err(Error::shape(format!("kernel {wt:?} larger than padded input {x:?}")));
        }
        Ok(ConvGeom {
            batch: x.b,
            c_in: x.c,
            h: x.h,
            w: x.w,
            c_out: wt.b,
            kh: wt.h,
            kw: wt.w,
            h_out: (ph - wt.h) / spec.stride + 1,
            w_out: (pw - wt.w) / spec.stride + 1,
            cin_g: x.c / g,
            cout_g: wt.b / g,
            spec,
        })
    }

    pub fn out_dims(&self) -> Dims {
        Dims::new(self.batch, self.c_out, self.h_out, self.w_out)
    }

    fn patch(&self) -> usize {
        self.cin_g * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.spec.stride == 1 && self.spec.pad == 0
    }

    /// Lowers the channels of group `grp` in image `img` to a
    /// `(cin_g·kh·kw) × (h_out·w_out)` column matrix.
    fn im2col<T: Scalar>(&self, x: &[T], img: usize, grp: usize, col: &mut [T]) {
        let (s, p) = (self.spec.stride as isize, self.spec.pad as isize);
        let npos = self.positions();
        for ci in 0..self.cin_g {
            let plane = (img * self.c_in + grp * self.cin_g + ci) * self.h * self.w;
            let src = &x[plane..plane + self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((ci * self.kh + ky) * self.kw + kx) * npos;
                    for oy in 0..self.h_out {
                        let iy = oy as isize * s - p + ky as isize;
                        let dst = &mut col[row + oy * self.w_out..row + (oy + 1) * self.w_out];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let srow = &src[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = ox as isize * s - p + kx as isize;
                            *d = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a column matrix back onto image `img`, group `grp`.
    fn col2im<T: Scalar>(&self, col: &[T], img: usize, grp: usize, dx: &mut [T]) {
        let (s, p) = (self.spec.stride as isize, self.spec.pad as isize);
        let npos = self.positions();
        for ci in 0..self.cin_g {
            let plane = (img * self.c_in + grp * self.cin_g + ci) * self.h * self.w;
            let dst = &mut dx[plane..plane + self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((ci * self.kh + ky) * self.kw + kx) * npos;
                    for oy in 0..self.h_out {
                        let iy = oy as isize * s - p + ky as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &col[row + oy * self.w_out..row + (oy + 1) * self.w_out];
                        let drow = &mut dst[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = ox as isize * s - p + kx as isize;
                            if ix >= 0 && ix < self.w as isize {
                                drow[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Scalar>(bias: Option<&Tensor4<T>>, c_out: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::shape(format!(
                "bias {:?} does not match {c_out} output channels",
                b.dims()
            )));
        }
    }
    Ok(())
}

/// Reference convolution: explicit loops over every output and tap.
pub fn conv2d_direct<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: Option<&Tensor4<T>>,
    spec: ConvSpec,
) -> Result<Tensor4<T>> {
    let g = ConvGeom::new(x.dims(), weight.dims(), spec)?;
    check_bias(bias, g.c_out)?;
    let mut out = Tensor4::zeros(g.out_dims());
    for n in 0..g.batch {
        for co in 0..g.c_out {
            let grp = co / g.cout_g;
            let b0 = bias.map_or(T::zero(), |b| b.data()[co]);
            for oy in 0..g.h_out {
                for ox in 0..g.w_out {
                    let mut acc = b0;
                    for ci in 0..g.cin_g {
                        let cx = grp * g.cin_g + ci;
                        for ky in 0..g.kh {
                            let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                acc += weight.get(co, ci, ky, kx) * x.get(n, cx, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.set(n, co, oy, ox, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Convolution lowered to one matrix product per image and group.
pub fn conv2d_im2col<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: Option<&Tensor4<T>>,
    spec: ConvSpec,
) -> Result<Tensor4<T>> {
    let g = ConvGeom::new(x.dims(), weight.dims(), spec)?;
    check_bias(bias, g.c_out)?;
    let mut out = Tensor4::zeros(g.out_dims());
    let (patch, npos) = (g.patch(), g.positions());
    let mut col = vec![T::zero(); if g.is_pointwise() { 0 } else { patch * npos }];
    let (xd, wd) = (x.data(), weight.data());
    let od = out.data_mut();
    for n in 0..g.batch {
        for grp in 0..spec.groups {
            let cols: &[T] = if g.is_pointwise() {
                let start = (n * g.c_in + grp * g.cin_g) * npos;
                &xd[start..start + g.cin_g * npos]
            } else {
                g.im2col(xd, n, grp, &mut col);
                &col
            };
            let wstart = grp * g.cout_g * patch;
            let ostart = (n * g.c_out + grp * g.cout_g) * npos;
            gemm(
                false,
                false,
                g.cout_g,
                npos,
                patch,
                &wd[wstart..wstart + g.cout_g * patch],
                cols,
                &mut od[ostart..ostart + g.cout_g * npos],
            );
        }
        if let Some(b) = bias {
            for co in 0..g.c_out {
                let bv = b.data()[co];
                let start = (n * g.c_out + co) * npos;
                for v in &mut od[start..start + npos] {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution given the upstream gradient `grad_out`.
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    /// Shape `(1, c_out, 1, 1)`.
    pub bias: Tensor4<T>,
}

/// Input gradient by transposed convolution (col2im of `Wᵀ·ḡ`), weight
/// gradient by correlating the input with `ḡ`, bias gradient by summing
/// `ḡ` over batch and space.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    spec: ConvSpec,
) -> Result<ConvGrads<T>> {
    let g = ConvGeom::new(x.dims(), weight.dims(), spec)?;
    grad_out.expect_dims(g.out_dims(), "conv2d_backward")?;
    let (patch, npos) = (g.patch(), g.positions());
    let mut dx = Tensor4::zeros(x.dims());
    let mut dw = Tensor4::zeros(weight.dims());
    let mut db = Tensor4::zeros(Dims::new(1, g.c_out, 1, 1));
    let mut col = vec![T::zero(); patch * npos];
    let mut dcol = vec![T::zero(); patch * npos];
    let (xd, wd, gd) = (x.data(), weight.data(), grad_out.data());
    for n in 0..g.batch {
        for grp in 0..spec.groups {
            let gstart = (n * g.c_out + grp * g.cout_g) * npos;
            let gslice = &gd[gstart..gstart + g.cout_g * npos];
            let wstart = grp * g.cout_g * patch;
            let cols: &[T] = if g.is_pointwise() {
                let start = (n * g.c_in + grp * g.cin_g) * npos;
                &xd[start..start + g.cin_g * npos]
            } else {
                g.im2col(xd, n, grp, &mut col);
                &col
            };
            gemm(
                false,
                true,
                g.cout_g,
                patch,
                npos,
                gslice,
                cols,
                &mut dw.data_mut()[wstart..wstart + g.cout_g * patch],
            );
            if g.is_pointwise() {
                let start = (n * g.c_in + grp * g.cin_g) * npos;
                gemm(
                    true,
                    false,
                    patch,
                    npos,
                    g.cout_g,
                    &wd[wstart..wstart + g.cout_g * patch],
                    gslice,
                    &mut dx.data_mut()[start..start + g.cin_g * npos],
                );
            } else {
                dcol.fill(T::zero());
                gemm(
                    true,
                    false,
                    patch,
                    npos,
                    g.cout_g,
                    &wd[wstart..wstart + g.cout_g * patch],
                    gslice,
                    &mut dcol,
                );
                g.col2im(&dcol, n, grp, dx.data_mut());
            }
        }
        for co in 0..g.c_out {
            let start = (n * g.c_out + co) * npos;
            let s: T = gd[start..start + npos].iter().copied().sum();
            db.data_mut()[co] += s;
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn identity_pointwise_kernel() {
        let x = Tensor4::<f32>::from_fn((2, 1, 3, 4), |i, _, k, l| (i * 12 + k * 4 + l) as f32);
        let w = Tensor4::full((1, 1, 1, 1), 1.0);
        let b = Tensor4::zeros((1, 1, 1, 1));
        for f in [conv2d_direct::<f32>, conv2d_im2col::<f32>] {
            assert_eq!(f(&x, &w, Some(&b), ConvSpec::default()).unwrap(), x);
        }
    }

    #[test]
    fn all_ones_counts_overlap() {
        let x = Tensor4::<f32>::full((1, 1, 3, 3), 1.0);
        let w = Tensor4::full((1, 1, 3, 3), 1.0);
        let spec = ConvSpec::same(3, 1).unwrap();
        for f in [conv2d_direct::<f32>, conv2d_im2col::<f32>] {
            let y = f(&x, &w, None, spec).unwrap();
            assert_eq!(y.get(0, 0, 1, 1), 9.0);
            for (k, l) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
                assert_eq!(y.get(0, 0, k, l), 4.0);
            }
            assert_eq!(y.get(0, 0, 0, 1), 6.0);
        }
    }

    #[test]
    fn zero_weights_give_bias() {
        let x = Tensor4::<f64>::from_fn((1, 2, 4, 4), |_, j, k, l| (j + k * l) as f64);
        let w = Tensor4::zeros((3, 2, 3, 3));
        let b = Tensor4::from_vec((1, 3, 1, 1), vec![0.5, -1.0, 2.0]).unwrap();
        let y = conv2d_im2col(&x, &w, Some(&b), ConvSpec::same(3, 1).unwrap()).unwrap();
        for c in 0..3 {
            for k in 0..4 {
                for l in 0..4 {
                    assert_eq!(y.get(0, c, k, l), b.data()[c]);
                }
            }
        }
    }

    #[test]
    fn depthwise_matches_per_channel_loops() {
        let mut rng = Rng::seeded(17);
        let x = Tensor4::<f64>::from_fn((2, 3, 6, 5), |_, _, _, _| rng.normal(0.0, 1.0));
        let w = Tensor4::<f64>::from_fn((3, 1, 5, 5), |_, _, _, _| rng.normal(0.0, 1.0));
        let spec = ConvSpec::same(5, 3).unwrap();
        let y = conv2d_direct(&x, &w, None, spec).unwrap();
        // independent 2-D correlation per channel
        for n in 0..2 {
            for c in 0..3 {
                for oy in 0..6i64 {
                    for ox in 0..5i64 {
                        let mut acc = 0.0;
                        for ky in 0..5i64 {
                            for kx in 0..5i64 {
                                let (iy, ix) = (oy + ky - 2, ox + kx - 2);
                                if (0..6).contains(&iy) && (0..5).contains(&ix) {
                                    acc += w.get(c, 0, ky as usize, kx as usize) * x.get(n, c, iy as usize, ix as usize);
                                }
                            }
                        }
                        assert!((y.get(n, c, oy as usize, ox as usize) - acc).abs() < 1e-12);
                    }
                }
            }
        }
        let fast = conv2d_im2col(&x, &w, None, spec).unwrap();
        assert!(fast.max_abs_diff(&y) < 1e-12);
    }

    #[test]
    fn strided_output_size() {
        let x = Tensor4::<f32>::zeros((1, 1, 7, 8));
        let w = Tensor4::zeros((2, 1, 3, 3));
        let spec = ConvSpec { stride: 2, pad: 1, groups: 1 };
        let y = conv2d_im2col(&x, &w, None, spec).unwrap();
        assert_eq!(y.dims(), Dims::new(1, 2, 4, 4));
    }

    #[test]
    fn even_kernel_same_padding_is_config_error() {
        assert!(matches!(ConvSpec::same(4, 1), Err(Error::Config(_))));
    }

    #[test]
    fn group_mismatch_is_shape_error() {
        let x = Tensor4::<f32>::zeros((1, 3, 4, 4));
        let w = Tensor4::zeros((4, 1, 3, 3));
        let spec = ConvSpec { stride: 1, pad: 1, groups: 2 };
        assert!(matches!(conv2d_direct(&x, &w, None, spec), Err(Error::Shape(_))));
    }
}
