use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

/// Source taps `(i0, i1, frac)` of each destination index for a 1-D
/// half-pixel (align-corners = false) linear resize from `src` to `dst`.
pub(crate) fn linear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

fn check<T: Scalar>(t: &Tensor4<T>, h: usize, w: usize) -> Result<()> {
    let d = t.dims();
    if h == 0 || w == 0 || d.h == 0 || d.w == 0 {
        return Err(Error::shape(format!("cannot resize {d:?} to {h}x{w}")));
    }
    Ok(())
}

/// Bilinear interpolation of every `(b, c)` plane to `h × w`.
pub fn bilinear_resize<T: Scalar>(t: &Tensor4<T>, h: usize, w: usize) -> Result<Tensor4<T>> {
    check(t, h, w)?;
    let d = t.dims();
    if (d.h, d.w) == (h, w) {
        return Ok(t.clone());
    }
    let ty = linear_taps(d.h, h);
    let tx = linear_taps(d.w, w);
    let mut out = Tensor4::zeros(Dims::new(d.b, d.c, h, w));
    let src = t.data();
    let dst = out.data_mut();
    for p in 0..d.b * d.c {
        let s = &src[p * d.h * d.w..(p + 1) * d.h * d.w];
        let o = &mut dst[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::from_f64(fx);
                let top = s[y0 * d.w + x0] * (T::one() - fx) + s[y0 * d.w + x1] * fx;
                let bot = s[y1 * d.w + x0] * (T::one() - fx) + s[y1 * d.w + x1] * fx;
                o[oy * w + ox] = top * (T::one() - fy) + bot * fy;
            }
        }
    }
    Ok(out)
}

/// Transpose of [`bilinear_resize`]: spreads `grad` (at the resized
/// size) back onto the `in_h × in_w` source grid.
pub fn bilinear_resize_backward<T: Scalar>(grad: &Tensor4<T>, in_h: usize, in_w: usize) -> Result<Tensor4<T>> {
    let d = grad.dims();
    if (d.h, d.w) == (in_h, in_w) {
        return Ok(grad.clone());
    }
    check(grad, in_h, in_w)?;
    let ty = linear_taps(in_h, d.h);
    let tx = linear_taps(in_w, d.w);
    let mut out = Tensor4::zeros(Dims::new(d.b, d.c, in_h, in_w));
    let g = grad.data();
    let dst = out.data_mut();
    for p in 0..d.b * d.c {
        let gs = &g[p * d.h * d.w..(p + 1) * d.h * d.w];
        let o = &mut dst[p * in_h * in_w..(p + 1) * in_h * in_w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::from_f64(fx);
                let v = gs[oy * d.w + ox];
                let (top, bot) = (v * (T::one() - fy), v * fy);
                o[y0 * in_w + x0] += top * (T::one() - fx);
                o[y0 * in_w + x1] += top * fx;
                o[y1 * in_w + x0] += bot * (T::one() - fx);
                o[y1 * in_w + x1] += bot * fx;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let t = Tensor4::<f32>::from_fn((2, 3, 4, 5), |i, j, k, l| (i + j * 7 + k * 3) as f32 - l as f32 * 0.1);
        assert!(bilinear_resize(&t, 4, 5).unwrap().bit_eq(&t));
    }

    #[test]
    fn constants_stay_constant() {
        let t = Tensor4::<f64>::full((1, 2, 3, 5), 2.5);
        for (h, w) in [(1, 1), (7, 2), (9, 11), (3, 5)] {
            let r = bilinear_resize(&t, h, w).unwrap();
            assert!(r.data().iter().all(|&v| (v - 2.5).abs() < 1e-15));
        }
    }

    #[test]
    fn two_by_two_to_four_by_four_by_hand() {
        // src positions for dst 0..4 at scale 1/2: -0.25→0, 0.25, 0.75, 1.25→clamped row 1
        // so row weights are (1,0), (.75,.25), (.25,.75), (0,1); likewise columns.
        let t = Tensor4::<f64>::from_vec((1, 1, 2, 2), vec![1., 2., 3., 4.]).unwrap();
        let r = bilinear_resize(&t, 4, 4).unwrap();
        let expected = [
            1.0, 1.25, 1.75, 2.0, //
            1.5, 1.75, 2.25, 2.5, //
            2.5, 2.75, 3.25, 3.5, //
            3.0, 3.25, 3.75, 4.0,
        ];
        for (got, want) in r.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn backward_is_the_adjoint() {
        // <resize(x), g> == <x, resize_backward(g)>
        let x = Tensor4::<f64>::from_fn((1, 2, 5, 3), |_, j, k, l| ((j * 31 + k * 7 + l * 3) % 11) as f64 - 5.0);
        let g = Tensor4::<f64>::from_fn((1, 2, 4, 7), |_, j, k, l| ((j * 13 + k * 5 + l * 2) % 9) as f64 - 4.0);
        let lhs: f64 = bilinear_resize(&x, 4, 7).unwrap().data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(bilinear_resize_backward(&g, 5, 3).unwrap().data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn zero_target_is_rejected() {
        assert!(bilinear_resize(&Tensor4::<f32>::zeros((1, 1, 2, 2)), 0, 3).is_err());
    }
}
