//! Dense row-major f64 tensors and the pure math kernels used both by the
//! tape (autodiff) and by the inference-only decode paths.
//!
//! Everything here is 64-bit: gradient checks against central differences
//! need the precision headroom, and the models are desk-scale anyway.

use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Dense multi-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![1.0; numel] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn randn(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let numel = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a rank-0 or one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!("item() on tensor of shape {:?}", self.shape)))
        }
    }

    /// Interpret as a matrix, returning (rows, cols).
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::dim(format!("expected 2-d tensor, got shape {:?}", other))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.shape.len() {
            return Err(Error::dim(format!(
                "softmax axis {} out of range for shape {:?}",
                axis, self.shape
            )));
        }
        if self.data.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = vec![0.0; self.data.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| o * len * inner + a * inner + i;
                let mut max = f64::NEG_INFINITY;
                for a in 0..len {
                    max = max.max(self.data[idx(a)]);
                }
                let mut sum = 0.0;
                for a in 0..len {
                    let e = (self.data[idx(a)] - max).exp();
                    out[idx(a)] = e;
                    sum += e;
                }
                for a in 0..len {
                    out[idx(a)] /= sum;
                }
            }
        }
        Ok(Tensor { shape: self.shape.clone(), data: out })
    }
}

// ── Pure 2-d kernels (shared by tape forward passes and inference) ──

/// `a (m×k) · b (k×n)`. The inner product runs through ndarray's gemm.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::dim(format!("matmul: inner extents {} vs {}", k, k2)));
    }
    let av = ArrayView2::from_shape((m, k), a.data()).expect("checked shape");
    let bv = ArrayView2::from_shape((k2, n), b.data()).expect("checked shape");
    let c = av.dot(&bv);
    let (data, _) = c.into_raw_vec_and_offset();
    Tensor::new(vec![m, n], data)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("add: shapes {:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("mul: shapes {:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    a.map(|v| v * c)
}

/// Add a length-`c` row vector to every row of an `r×c` matrix.
pub fn add_row(a: &Tensor, row: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if row.numel() != c {
        return Err(Error::dim(format!("add_row: {} cols vs row of {}", c, row.numel())));
    }
    let mut data = a.data().to_vec();
    for i in 0..r {
        for j in 0..c {
            data[i * c + j] += row.data()[j];
        }
    }
    Tensor::new(vec![r, c], data)
}

/// Multiply every row of an `r×c` matrix elementwise by a length-`c` vector.
pub fn mul_row(a: &Tensor, row: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if row.numel() != c {
        return Err(Error::dim(format!("mul_row: {} cols vs row of {}", c, row.numel())));
    }
    let mut data = a.data().to_vec();
    for i in 0..r {
        for j in 0..c {
            data[i * c + j] *= row.data()[j];
        }
    }
    Tensor::new(vec![r, c], data)
}

pub fn slice_cols(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if start + len > c {
        return Err(Error::dim(format!("slice_cols: {}..{} out of {} cols", start, start + len, c)));
    }
    let mut out = Vec::with_capacity(r * len);
    for i in 0..r {
        out.extend_from_slice(&a.data()[i * c + start..i * c + start + len]);
    }
    Tensor::new(vec![r, len], out)
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::dim("concat_cols of zero tensors"));
    }
    let (r, _) = parts[0].dims2()?;
    let mut total = 0;
    for p in parts {
        let (pr, pc) = p.dims2()?;
        if pr != r {
            return Err(Error::dim(format!("concat_cols: row counts {} vs {}", r, pr)));
        }
        total += pc;
    }
    let mut out = Vec::with_capacity(r * total);
    for i in 0..r {
        for p in parts {
            let (_, pc) = p.dims2()?;
            out.extend_from_slice(&p.data()[i * pc..(i + 1) * pc]);
        }
    }
    Tensor::new(vec![r, total], out)
}

pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    a.dims2()?;
    a.softmax(1)
}

pub fn log_softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if a.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("log_softmax input contains NaN".into()));
    }
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &a.data()[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        for j in 0..c {
            out[i * c + j] = row[j] - lse;
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Per-row layer normalization (population variance), no affine part.
pub fn layer_norm_rows(a: &Tensor, eps: f64) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &a.data()[i * c..(i + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..c {
            out[i * c + j] = (row[j] - mean) * inv;
        }
    }
    Tensor::new(vec![r, c], out)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn gelu(a: &Tensor) -> Tensor {
    a.map(gelu_scalar)
}

/// Rows of `table` selected by `indices` (embedding lookup).
pub fn gather_rows(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let (k, w) = table.dims2()?;
    let mut out = Vec::with_capacity(indices.len() * w);
    for &ix in indices {
        if ix >= k {
            return Err(Error::Index(format!("gather_rows: index {} >= {}", ix, k)));
        }
        out.extend_from_slice(&table.data()[ix * w..(ix + 1) * w]);
    }
    Tensor::new(vec![indices.len(), w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_hand_example() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![5.0, 6.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_identity_and_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::randn(&[3, 3], 1.0, &mut rng);
        let mut id = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            id.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(matmul(&id, &a).unwrap().data(), a.data());
        let z = Tensor::zeros(&[3, 2]);
        assert!(matmul(&a, &z).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(Error::Dim(_))));
    }

    #[test]
    fn softmax_symmetry_and_known_values() {
        let t = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        let s = t.softmax(0).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let t = Tensor::new(vec![2], vec![0.0, (2.0f64).ln()]).unwrap();
        let s = t.softmax(0).unwrap();
        assert!((s.data()[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.data()[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_large_inputs_stable() {
        let t = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let s = t.softmax(0).unwrap();
        assert!(s.data()[0] > 1.0 - 1e-12);
        assert!(s.data()[1] < 1e-12);
        assert!(s.all_finite());
    }

    #[test]
    fn softmax_nan_rejected() {
        let t = Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(t.softmax(0), Err(Error::Numeric(_))));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Tensor::randn(&[5, 9], 3.0, &mut rng);
        let s = t.softmax(1).unwrap();
        for i in 0..5 {
            let sum: f64 = s.data()[i * 9..(i + 1) * 9].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {} sums to {}", i, sum);
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::randn(&[4, 7], 1.0, &mut rng);
        let back = transpose(&transpose(&a).unwrap()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn slice_concat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Tensor::randn(&[3, 8], 1.0, &mut rng);
        let p1 = slice_cols(&a, 0, 3).unwrap();
        let p2 = slice_cols(&a, 3, 5).unwrap();
        let back = concat_cols(&[&p1, &p2]).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn layer_norm_rows_zero_mean_unit_var() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::randn(&[2, 16], 2.0, &mut rng);
        let y = layer_norm_rows(&a, 1e-6).unwrap();
        for i in 0..2 {
            let row = &y.data()[i * 16..(i + 1) * 16];
            let mean: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| v * v).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
