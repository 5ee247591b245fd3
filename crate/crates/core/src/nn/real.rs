use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

/// Floating-point element type of tensors. Production training uses `f32`;
/// gradient checks run the same code in `f64`.
pub trait Real: Float + Default + Debug + Send + Sync + Sum + AddAssign + MulAssign + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a * b + (c if accumulate else 0)` for an `m x k` by `k x n`
    /// product with explicit (non-negative) row and column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        c_strides: (usize, usize),
        accumulate: bool,
    );
}

fn extent(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

fn check(m: usize, k: usize, n: usize, a: usize, sa: (usize, usize), b: usize, sb: (usize, usize), c: usize, sc: (usize, usize)) {
    assert!(extent(m, k, sa) <= a, "gemm: lhs buffer too small");
    assert!(extent(k, n, sb) <= b, "gemm: rhs buffer too small");
    assert!(extent(m, n, sc) <= c, "gemm: output buffer too small");
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                sa: (usize, usize),
                b: &[Self],
                sb: (usize, usize),
                c: &mut [Self],
                sc: (usize, usize),
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                check(m, k, n, a.len(), sa, b.len(), sb, c.len(), sc);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the extents of all three operands were checked
                // against the slice lengths above, strides are non-negative,
                // and `c` is uniquely borrowed.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        sa.0 as isize,
                        sa.1 as isize,
                        b.as_ptr(),
                        sb.0 as isize,
                        sb.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        sc.0 as isize,
                        sc.1 as isize,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
