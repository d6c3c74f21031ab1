/// `C = A B + beta C` on strided row/column-major views.
#[allow(clippy::too_many_arguments)]
#[rustfmt::skip]
pub(crate) fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], rsa: isize, csa: isize,
    b: &[f64], rsb: isize, csb: isize,
    c: &mut [f64], rsc: isize, csc: isize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows as isize - 1) * rs + (cols as isize - 1) * cs
    };
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len() as isize);
        assert!(last(k, n, rsb, csb) < b.len() as isize);
    }
    assert!(last(m, n, rsc, csc) < c.len() as isize);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            beta, c.as_mut_ptr(), rsc, csc,
        );
    }
}

/// Row-major `C (m x n) = A (m x k) * B (k x n) + beta C`.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm(m, k, n, a, k as isize, 1, b, n as isize, 1, c, n as isize, 1, beta);
}

/// Row-major `C (m x n) = A^T B + beta C` with `A` stored `k x m`.
pub(crate) fn matmul_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm(m, k, n, a, 1, m as isize, b, n as isize, 1, c, n as isize, 1, beta);
}

/// Row-major `C (m x n) = A B^T + beta C` with `B` stored `n x k`.
pub(crate) fn matmul_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    gemm(m, k, n, a, k as isize, 1, b, 1, k as isize, c, n as isize, 1, beta);
}
