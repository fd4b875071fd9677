//! Dense rank-N tensor of `f32`, row-major.
//!
//! This is the unit of all numeric computation in the crate. There is no
//! broadcasting beyond tensor-scalar and no autodiff; layer gradients are
//! hand-written in [`crate::nn`].

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Below this many multiply-adds the rayon dispatch overhead dominates and
/// matmul runs single-threaded.
const PAR_MATMUL_THRESHOLD: usize = 1 << 16;

/// Dense tensor of 32-bit floats, row-major. `data.len()` always equals the
/// product of `shape`; every constructor and `reshape` enforce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("shape must have at least one dimension".into()));
    }
    let mut n: usize = 1;
    for &d in shape {
        if d == 0 {
            return Err(Error::InvalidShape(format!("zero dimension in shape {shape:?}")));
        }
        n = n
            .checked_mul(d)
            .ok_or_else(|| Error::InvalidShape(format!("shape {shape:?} overflows element count")))?;
    }
    Ok(n)
}

impl Tensor {
    /// Tensor of the given shape with every element set to `fill`.
    pub fn new(shape: &[usize], fill: f32) -> Result<Self> {
        let n = checked_len(shape)?;
        Ok(Self { shape: shape.to_vec(), data: vec![fill; n] })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    /// Wraps an existing buffer; `data.len()` must match the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} implies {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable view of the flat buffer. Length is fixed, so the shape/data
    /// invariant cannot be broken through it.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Same data, new shape. Element counts must agree; the buffer is reused
    /// bit-for-bit.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != self.data.len() {
            return Err(Error::InvalidShape(format!(
                "cannot reshape {} elements into {shape:?}",
                self.data.len()
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Element at a full multi-index. Convenience for tests and small code
    /// paths; hot loops index `data()` directly.
    pub fn at(&self, index: &[usize]) -> f32 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of range for dim {i} (size {dim})");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    /// Matrix product of two rank-2 tensors `[m,k] x [k,n] -> [m,n]`.
    /// Accumulation is f32, per output element in ascending-k order.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0f32; m * n];
        matmul_into(&self.data, &other.data, m, k, n, &mut out);
        Tensor::from_vec(&[m, n], out)
    }

    fn zip_map(&self, other: &Tensor, op: impl Fn(f32, f32) -> f32 + Sync) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| op(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        let data = self.data.iter().map(|&a| a * factor).collect();
        Self { shape: self.shape.clone(), data }
    }

    /// Index of the maximum element of a rank-1 tensor; ties go to the
    /// lowest index.
    pub fn argmax(&self) -> Result<usize> {
        if self.rank() != 1 {
            return Err(Error::InvalidShape(format!("argmax needs rank 1, got {:?}", self.shape)));
        }
        let mut best = 0;
        let mut best_val = self.data[0];
        for (i, &v) in self.data.iter().enumerate().skip(1) {
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        Ok(best)
    }
}

/// `out[m,n] = a[m,k] * b[k,n]` over flat row-major slices.
///
/// The inner loop walks rows of `b`, so each output element accumulates in
/// ascending-k order no matter how rows are scheduled; results are
/// bit-identical whether the row loop runs serially or on the rayon pool.
pub fn matmul_into(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);

    let row = |i: usize, c_row: &mut [f32]| {
        c_row.fill(0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (c, &bv) in c_row.iter_mut().zip(b_row) {
                *c += a_ik * bv;
            }
        }
    };

    if m * k * n >= PAR_MATMUL_THRESHOLD && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(i, c_row)| row(i, c_row));
    } else {
        for (i, c_row) in out.chunks_mut(n).enumerate() {
            row(i, c_row);
        }
    }
}

/// `out[m,k] = a[m,n] * b[k,n]^T`: rows of `a` dotted with rows of `b`.
/// Ascending-n accumulation per element, parallel over output rows.
pub(crate) fn matmul_bt_into(a: &[f32], b: &[f32], m: usize, n: usize, k: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    let row = |i: usize, c_row: &mut [f32]| {
        let a_row = &a[i * n..(i + 1) * n];
        for (j, c) in c_row.iter_mut().enumerate() {
            let b_row = &b[j * n..(j + 1) * n];
            let mut acc = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *c = acc;
        }
    };
    if m * n * k >= PAR_MATMUL_THRESHOLD && m > 1 {
        out.par_chunks_mut(k).enumerate().for_each(|(i, c_row)| row(i, c_row));
    } else {
        for (i, c_row) in out.chunks_mut(k).enumerate() {
            row(i, c_row);
        }
    }
}

/// `out[k,n] = a[m,k]^T * b[m,n]`: column `i` of `a` against rows of `b`.
/// Ascending-m accumulation per element, parallel over output rows.
pub(crate) fn matmul_at_into(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let row = |i: usize, c_row: &mut [f32]| {
        c_row.fill(0.0);
        for mm in 0..m {
            let a_mi = a[mm * k + i];
            if a_mi == 0.0 {
                continue;
            }
            let b_row = &b[mm * n..(mm + 1) * n];
            for (c, &bv) in c_row.iter_mut().zip(b_row) {
                *c += a_mi * bv;
            }
        }
    };
    if m * n * k >= PAR_MATMUL_THRESHOLD && k > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(i, c_row)| row(i, c_row));
    } else {
        for (i, c_row) in out.chunks_mut(n).enumerate() {
            row(i, c_row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn new_fills() {
        let t = Tensor::new(&[2, 2], 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = Tensor::new(&[3], 1.5).unwrap();
        assert_eq!(t.data(), &[1.5, 1.5, 1.5]);
    }

    #[test]
    fn new_rejects_bad_shapes() {
        assert!(matches!(Tensor::new(&[2, 0], 1.0), Err(Error::InvalidShape(_))));
        assert!(matches!(Tensor::new(&[], 1.0), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn matmul_identity() {
        let x = Tensor::from_vec(&[2, 2], vec![3.0, -1.0, 2.5, 4.0]).unwrap();
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(eye.matmul(&x).unwrap(), x);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_mismatch_errors() {
        let a = Tensor::zeros(&[2, 3]).unwrap();
        let b = Tensor::zeros(&[2, 3]).unwrap();
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch(_))));
    }

    /// Independent oracle: plain triple loop, no slicing tricks.
    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Vec<f32> {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f32;
                for kk in 0..k {
                    acc += a.data()[i * k + kk] * b.data()[kk * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = Rng::new(7);
        let a = random_tensor(&mut rng, &[4, 5]);
        let b = random_tensor(&mut rng, &[5, 3]);
        let c = a.matmul(&b).unwrap();
        let expect = matmul_oracle(&a, &b);
        for (x, y) in c.data().iter().zip(&expect) {
            assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_associative_within_tolerance() {
        let mut rng = Rng::new(11);
        for _ in 0..10 {
            let a = random_tensor(&mut rng, &[4, 4]);
            let b = random_tensor(&mut rng, &[4, 4]);
            let c = random_tensor(&mut rng, &[4, 4]);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                assert!((x - y).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn elementwise_identities() {
        let mut rng = Rng::new(3);
        let x = random_tensor(&mut rng, &[3, 4]);
        let zeros = Tensor::zeros(&[3, 4]).unwrap();
        let ones = Tensor::new(&[3, 4], 1.0).unwrap();
        assert_eq!(x.add(&zeros).unwrap(), x);
        assert_eq!(x.mul(&ones).unwrap(), x);
        assert_eq!(x.sub(&zeros).unwrap(), x);
    }

    #[test]
    fn scale_by_scalar() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(x.scale(2.0).data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = Tensor::zeros(&[2, 2]).unwrap();
        let b = Tensor::zeros(&[4]).unwrap();
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn argmax_basic_and_ties() {
        let v = Tensor::from_vec(&[3], vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(v.argmax().unwrap(), 1);
        let tie = Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap();
        assert_eq!(tie.argmax().unwrap(), 0);
    }

    #[test]
    fn argmax_matches_linear_scan() {
        let mut rng = Rng::new(17);
        let v = random_tensor(&mut rng, &[36]);
        let mut best = 0;
        for i in 1..36 {
            if v.data()[i] > v.data()[best] {
                best = i;
            }
        }
        assert_eq!(v.argmax().unwrap(), best);
    }

    #[test]
    fn argmax_rejects_wrong_rank() {
        let m = Tensor::zeros(&[2, 2]).unwrap();
        assert!(matches!(m.argmax(), Err(Error::InvalidShape(_))));
    }

    proptest! {
        #[test]
        fn reshape_roundtrip_is_bitwise(seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let x = random_tensor(&mut rng, &[3, 8]);
            let back = x.clone().reshape(&[4, 6]).unwrap().reshape(&[3, 8]).unwrap();
            prop_assert_eq!(
                x.data().iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
                back.data().iter().map(|f| f.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn argmax_invariant_under_shift_and_positive_scale(
            seed in 0u64..1000,
            shift in -5.0f32..5.0,
            scale in 0.1f32..10.0,
        ) {
            let mut rng = Rng::new(seed);
            let x = random_tensor(&mut rng, &[12]);
            let shifted = x.data().iter().map(|&v| v * scale + shift).collect::<Vec<_>>();
            let y = Tensor::from_vec(&[12], shifted).unwrap();
            prop_assert_eq!(x.argmax().unwrap(), y.argmax().unwrap());
        }
    }

    #[test]
    fn reshape_rejects_count_mismatch() {
        let x = Tensor::zeros(&[2, 3]).unwrap();
        assert!(matches!(x.reshape(&[4, 2]), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn transposed_matmuls_match_plain_matmul() {
        let mut rng = Rng::new(23);
        let a = random_tensor(&mut rng, &[4, 6]);
        let b = random_tensor(&mut rng, &[5, 6]);
        // a * b^T
        let mut got = vec![0.0; 4 * 5];
        matmul_bt_into(a.data(), b.data(), 4, 6, 5, &mut got);
        for i in 0..4 {
            for j in 0..5 {
                let mut want = 0.0f32;
                for p in 0..6 {
                    want += a.data()[i * 6 + p] * b.data()[j * 6 + p];
                }
                assert!((got[i * 5 + j] - want).abs() < 1e-5);
            }
        }
        // a^T * c
        let c = random_tensor(&mut rng, &[4, 3]);
        let mut got = vec![0.0; 6 * 3];
        matmul_at_into(a.data(), c.data(), 4, 6, 3, &mut got);
        for i in 0..6 {
            for j in 0..3 {
                let mut want = 0.0f32;
                for p in 0..4 {
                    want += a.data()[p * 6 + i] * c.data()[p * 3 + j];
                }
                assert!((got[i * 3 + j] - want).abs() < 1e-5);
            }
        }
    }
}
