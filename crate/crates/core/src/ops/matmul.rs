use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// `C += op(A) · op(B)` for one `m × n` output block.
///
/// `A` is stored `m × k` (or `k × m` when `ta`), `B` is stored `k × n`
/// (or `n × k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    ta: bool,
    tb: bool,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                let crow = &mut c[i * n..(i + 1) * n];
                for t in 0..k {
                    let av = a[i * k + t];
                    if av != T::zero() {
                        axpy(av, &b[t * n..(t + 1) * n], crow);
                    }
                }
            }
        }
        (true, false) => {
            for t in 0..k {
                let brow = &b[t * n..(t + 1) * n];
                for i in 0..m {
                    let av = a[t * m + i];
                    if av != T::zero() {
                        axpy(av, brow, &mut c[i * n..(i + 1) * n]);
                    }
                }
            }
        }
        (false, true) => {
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                for j in 0..n {
                    c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
                }
            }
        }
        (true, true) => {
            for i in 0..m {
                for j in 0..n {
                    let mut s = T::zero();
                    for t in 0..k {
                        s += a[t * m + i] * b[j * k + t];
                    }
                    c[i * n + j] += s;
                }
            }
        }
    }
}

/// Batched matrix product over the last two axes.
///
/// Both operands are viewed as `(g0·g1)` matrices stored in their `(h, w)`
/// axes; the leading two extents must agree. With `ta`/`tb` the stored
/// matrix is used transposed, so `matmul_batched(q, k, true, false)` is
/// `Qᵀ·K` per group.
pub fn matmul_batched<T: Scalar>(
    a: &Tensor4<T>,
    b: &Tensor4<T>,
    ta: bool,
    tb: bool,
) -> Result<Tensor4<T>> {
    let (da, db) = (a.dims(), b.dims());
    if (da.b, da.c) != (db.b, db.c) {
        return Err(Error::shape(format!("matmul groups differ: {da:?} vs {db:?}")));
    }
    let (m, ka) = if ta { (da.w, da.h) } else { (da.h, da.w) };
    let (kb, n) = if tb { (db.w, db.h) } else { (db.h, db.w) };
    if ka != kb {
        return Err(Error::shape(format!(
            "matmul inner dims differ: {da:?}{} vs {db:?}{}",
            if ta { "ᵀ" } else { "" },
            if tb { "ᵀ" } else { "" }
        )));
    }
    let groups = da.b * da.c;
    let mut out = Tensor4::zeros(Dims::new(da.b, da.c, m, n));
    let (sa, sb, sc) = (m * ka, ka * n, m * n);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for g in 0..groups {
        gemm(
            ta,
            tb,
            m,
            n,
            ka,
            &ad[g * sa..(g + 1) * sa],
            &bd[g * sb..(g + 1) * sb],
            &mut od[g * sc..(g + 1) * sc],
        );
    }
    Ok(out)
}

/// Swaps the last two axes.
pub fn transpose_last2<T: Scalar>(t: &Tensor4<T>) -> Tensor4<T> {
    let d = t.dims();
    let (rows, cols) = (d.h, d.w);
    let mut out = Tensor4::zeros(Dims::new(d.b, d.c, cols, rows));
    let src = t.data();
    let dst = out.data_mut();
    for g in 0..d.b * d.c {
        let base = g * rows * cols;
        for i in 0..rows {
            for j in 0..cols {
                dst[base + j * rows + i] = src[base + i * cols + j];
            }
        }
    }
    out
}
