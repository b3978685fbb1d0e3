use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

/// 2×2 max pooling with stride 2. Also returns, per output element, the
/// flat index of the winning input element (first maximum on ties).
pub fn maxpool2x2<T: Scalar>(t: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>)> {
    let d = t.dims();
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return Err(Error::shape(format!("maxpool2x2 needs even extents, got {d:?}")));
    }
    let (ho, wo) = (d.h / 2, d.w / 2);
    let mut out = Tensor4::zeros(Dims::new(d.b, d.c, ho, wo));
    let mut argmax = vec![0usize; out.len()];
    let src = t.data();
    let dst = out.data_mut();
    for p in 0..d.b * d.c {
        let base = p * d.h * d.w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + 2 * oy * d.w + 2 * ox;
                for idx in [
                    base + 2 * oy * d.w + 2 * ox + 1,
                    base + (2 * oy + 1) * d.w + 2 * ox,
                    base + (2 * oy + 1) * d.w + 2 * ox + 1,
                ] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = p * ho * wo + oy * wo + ox;
                dst[o] = src[best];
                argmax[o] = best;
            }
        }
    }
    Ok((out, argmax))
}

/// Mean over the listed axes, which are kept with extent 1.
pub fn reduce_mean<T: Scalar>(t: &Tensor4<T>, axes: &[usize]) -> Result<Tensor4<T>> {
    let d = t.dims().to_array();
    let mut keep = [true; 4];
    for &a in axes {
        if a > 3 {
            return Err(Error::shape(format!("axis {a} out of range")));
        }
        keep[a] = false;
    }
    let od: [usize; 4] = std::array::from_fn(|i| if keep[i] { d[i] } else { 1 });
    let count: usize = (0..4).filter(|&i| !keep[i]).map(|i| d[i]).product();
    if count == 0 {
        return Err(Error::shape("mean over an empty extent"));
    }
    let out_dims = Dims::from_array(od);
    let mut out = Tensor4::zeros(out_dims);
    let src = t.data();
    let mut idx = 0;
    for i in 0..d[0] {
        for j in 0..d[1] {
            for k in 0..d[2] {
                for l in 0..d[3] {
                    let o = out_dims.offset(
                        if keep[0] { i } else { 0 },
                        if keep[1] { j } else { 0 },
                        if keep[2] { k } else { 0 },
                        if keep[3] { l } else { 0 },
                    );
                    out.data_mut()[o] += src[idx];
                    idx += 1;
                }
            }
        }
    }
    let inv = T::one() / T::from_f64(count as f64);
    for v in out.data_mut() {
        *v *= inv;
    }
    Ok(out)
}

/// Spatial mean, `(b, c, h, w) → (b, c, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(t: &Tensor4<T>) -> Result<Tensor4<T>> {
    let d = t.dims();
    let plane = d.plane();
    if plane == 0 {
        return Err(Error::shape("global_avg_pool of an empty plane"));
    }
    let inv = T::one() / T::from_f64(plane as f64);
    let data = t
        .data()
        .chunks_exact(plane)
        .map(|c| c.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor4::from_vec(Dims::new(d.b, d.c, 1, 1), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxpool_hand_case() {
        let t = Tensor4::<f32>::from_vec((1, 1, 2, 2), vec![1., 2., 3., 4.]).unwrap();
        let (m, arg) = maxpool2x2(&t).unwrap();
        assert_eq!(m.data(), &[4.]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn maxpool_rejects_odd() {
        assert!(matches!(maxpool2x2(&Tensor4::<f32>::zeros((1, 1, 3, 2))), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_of_constant() {
        let t = Tensor4::<f64>::full((2, 3, 4, 5), 1.75);
        for axes in [&[0usize][..], &[1, 2], &[0, 1, 2, 3], &[3]] {
            let m = reduce_mean(&t, axes).unwrap();
            assert!(m.data().iter().all(|&v| (v - 1.75).abs() < 1e-15));
        }
        assert_eq!(reduce_mean(&t, &[1, 3]).unwrap().dims(), Dims::new(2, 1, 4, 1));
    }

    #[test]
    fn gap_of_arange() {
        let t = Tensor4::<f64>::from_vec((2, 3, 4, 5), (0..120).map(|v| v as f64).collect()).unwrap();
        let g = global_avg_pool(&t).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    for l in 0..5 {
                        s += t.get(i, j, k, l);
                    }
                }
                assert!((g.get(i, j, 0, 0) - s / 20.0).abs() < 1e-12);
            }
        }
        assert!(g.max_abs_diff(&reduce_mean(&t, &[2, 3]).unwrap()) < 1e-12);
    }
}
