use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// `(outer, extent, inner)` strides of `axis`.
pub(crate) fn axis_layout(dims: [usize; 4], axis: usize) -> (usize, usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

fn check_axis<T: Scalar>(t: &Tensor4<T>, axis: usize) -> Result<()> {
    if axis > 3 {
        return Err(Error::shape(format!("softmax axis {axis} out of range")));
    }
    if t.dims().extent(axis) == 0 {
        return Err(Error::shape(format!("softmax over empty axis of {:?}", t.dims())));
    }
    Ok(())
}

/// Max-subtracted exponential normalization along `axis`.
pub fn softmax_axis<T: Scalar>(t: &Tensor4<T>, axis: usize) -> Result<Tensor4<T>> {
    check_axis(t, axis)?;
    let (outer, n, inner) = axis_layout(t.dims().to_array(), axis);
    let mut out = t.clone();
    let d = out.data_mut();
    if inner == 1 {
        for o in 0..outer {
            let row = &mut d[o * n..(o + 1) * n];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            let inv = T::one() / sum;
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        return Ok(out);
    }
    for o in 0..outer {
        for r in 0..inner {
            let idx = |i: usize| (o * n + i) * inner + r;
            let mut max = T::neg_infinity();
            for i in 0..n {
                max = max.max(d[idx(i)]);
            }
            let mut sum = T::zero();
            for i in 0..n {
                let e = (d[idx(i)] - max).exp();
                d[idx(i)] = e;
                sum += e;
            }
            let inv = T::one() / sum;
            for i in 0..n {
                d[idx(i)] *= inv;
            }
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of softmax: `s ⊙ (g − Σ(g ⊙ s))` along `axis`.
pub fn softmax_backward<T: Scalar>(s: &Tensor4<T>, g: &Tensor4<T>, axis: usize) -> Result<Tensor4<T>> {
    g.expect_dims(s.dims(), "softmax_backward")?;
    let (outer, n, inner) = axis_layout(s.dims().to_array(), axis);
    let mut out = Tensor4::zeros(s.dims());
    let (sd, gd) = (s.data(), g.data());
    let od = out.data_mut();
    for o in 0..outer {
        for r in 0..inner {
            let idx = |i: usize| (o * n + i) * inner + r;
            let mut dotp = T::zero();
            for i in 0..n {
                dotp += gd[idx(i)] * sd[idx(i)];
            }
            for i in 0..n {
                od[idx(i)] = sd[idx(i)] * (gd[idx(i)] - dotp);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_input() {
        let t = Tensor4::<f64>::zeros((1, 1, 1, 3));
        let s = softmax_axis(&t, 3).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_values() {
        let t = Tensor4::<f64>::from_vec((1, 1, 1, 3), vec![1., 2., 3.]).unwrap();
        let s = softmax_axis(&t, 3).unwrap();
        // exp(k) / (e + e² + e³), evaluated independently at f64
        let z: f64 = (1..=3).map(|k| (k as f64).exp()).sum();
        let expected: Vec<f64> = (1..=3).map(|k| (k as f64).exp() / z).collect();
        for (got, want) in s.data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in s.data().iter().zip([0.09003057, 0.24472847, 0.66524096]) {
            assert!((got - want).abs() < 5e-9);
        }
    }

    #[test]
    fn shift_invariance() {
        let x = 0.7;
        let c = 1.3;
        let a = Tensor4::<f64>::from_vec((1, 1, 1, 3), vec![x, x + c, x + 2.0 * c]).unwrap();
        let b = Tensor4::<f64>::from_vec((1, 1, 1, 3), vec![0.0, c, 2.0 * c]).unwrap();
        let diff = softmax_axis(&a, 3).unwrap().max_abs_diff(&softmax_axis(&b, 3).unwrap());
        assert!(diff < 1e-15);
    }

    #[test]
    fn channel_axis_sums_to_one() {
        let t = Tensor4::<f32>::from_fn((2, 3, 2, 2), |i, j, k, l| (i + 2 * j) as f32 - (k * l) as f32 * 0.3);
        let s = softmax_axis(&t, 1).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let sum: f32 = (0..3).map(|j| s.get(i, j, k, l)).sum();
                    assert!((sum - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn large_values_stay_finite() {
        let t = Tensor4::<f32>::from_vec((1, 1, 1, 3), vec![1000., 0., -1000.]).unwrap();
        let s = softmax_axis(&t, 3).unwrap();
        assert!(s.all_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_axis_is_rejected() {
        assert!(softmax_axis(&Tensor4::<f32>::zeros((1, 1, 2, 0)), 3).is_err());
        assert!(softmax_axis(&Tensor4::<f32>::zeros((1, 1, 2, 2)), 4).is_err());
    }
}
