// Row-major dense kernels shared by the tape and the tape-free forward paths.

use super::Element;

pub(crate) fn transpose<F: Element>(a: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// `a (m×k) · b (k×n)`.
pub(crate) fn matmul_nn<F: Element>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + aip * bv;
            }
        }
    }
    out
}

/// `a (m×k) · bᵀ` where `b` is `n×k`.
pub(crate) fn matmul_nt<F: Element>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let bt = transpose(b, n, k);
    matmul_nn(a, &bt, m, k, n)
}

/// `aᵀ · b` where `a` is `k×m` and `b` is `k×n`.
pub(crate) fn matmul_tn<F: Element>(a: &[F], b: &[F], k: usize, m: usize, n: usize) -> Vec<F> {
    let at = transpose(a, k, m);
    matmul_nn(&at, b, m, k, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_naive_sums() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.5).collect(); // 2×3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 1.0).collect(); // 3×4
        let nn = matmul_nn(&a, &b, 2, 3, 4);
        for i in 0..2 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert!((nn[i * 4 + j] - s).abs() < 1e-12);
            }
        }
        let bt = transpose(&b, 3, 4); // 4×3
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 4), nn);
        let at = transpose(&a, 2, 3); // 3×2
        assert_eq!(matmul_tn(&at, &b, 3, 2, 4), nn);
    }
}
