/// Strided matrix layout: (row stride, column stride).
pub(crate) type Layout = (usize, usize);

fn max_index(rows: usize, cols: usize, (rs, cs): Layout) -> usize {
    (rows - 1) * rs + (cols - 1) * cs
}

/// `c = a · b + beta · c` for an `m×k` by `k×n` product with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
    lc: Layout,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(max_index(m, n, lc) < c.len());
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(max_index(m, k, la) < a.len());
    assert!(max_index(k, n, lb) < b.len());
    // SAFETY: all accessed offsets are bounded by the asserts above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            la.0 as isize,
            la.1 as isize,
            b.as_ptr(),
            lb.0 as isize,
            lb.1 as isize,
            beta,
            c.as_mut_ptr(),
            lc.0 as isize,
            lc.1 as isize,
        );
    }
}
