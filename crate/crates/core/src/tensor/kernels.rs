// Row-major matrix kernels. All of them accumulate into `out`.
//
// Output row `i` of every kernel reads only row `i` of the left operand, so
// results for one row are bit-identical no matter what the other rows hold.
//
// Zero entries of the left operand are skipped: inputs are mostly one-hot or
// post-relu, and a skipped term contributes exactly zero for finite values.

/// `out[m x n] += a[m x k] * b[k x n]`
pub fn matmul_into(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let full = n - n % 8;
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        // Eight output columns stay in registers across the whole row of `a`;
        // each element still accumulates in order of `p`.
        for j0 in (0..full).step_by(8) {
            let mut acc = [0.0f32; 8];
            acc.copy_from_slice(&out_row[j0..j0 + 8]);
            for (p, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b8 = &b[p * n + j0..p * n + j0 + 8];
                for l in 0..8 {
                    acc[l] += av * b8[l];
                }
            }
            out_row[j0..j0 + 8].copy_from_slice(&acc);
        }
        if full < n {
            let out_tail = &mut out_row[full..];
            for (p, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b_tail = &b[p * n + full..(p + 1) * n];
                for (o, &bv) in out_tail.iter_mut().zip(b_tail) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// `out[m x n] += a[m x k] * b[n x k]^T`
pub fn matmul_nt_into(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] += dot(a_row, b_row);
        }
    }
}

/// Dot product with eight fixed accumulation lanes, so the summation order
/// depends only on the length.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let s = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
    s + tail
}

/// `out[k x n] += a[m x k]^T * b[m x n]`
pub fn matmul_tn_into(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    fn transpose(x: &[f32], rows: usize, cols: usize) -> Vec<f32> {
        let mut t = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn transposed_variants_agree_with_naive_product() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f32> = (0..m * k).map(|i| i as f32 * 0.5 - 2.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| 1.0 - i as f32 * 0.25).collect();
        let expected = naive(&a, &b, m, k, n);

        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, &a, &b, m, k, n);
        assert_eq!(out, expected);

        let mut out = vec![0.0; m * n];
        matmul_nt_into(&mut out, &a, &transpose(&b, k, n), m, k, n);
        assert_eq!(out, expected);

        let mut out = vec![0.0; m * n];
        matmul_tn_into(&mut out, &transpose(&a, m, k), &b, k, m, n);
        assert_eq!(out, expected);
    }
}
