//! Dense real three-way tensors and the contractions used by the estimators.
//!
//! Storage is layer-major and column-major within each slice: entry
//! `(i1, i2, i3)` lives at `i1 * d2 * d3 + i3 * d2 + i2`. Slice `i1` is therefore
//! a contiguous column-major `d2 x d3` block, and row `i1` of the mode-1
//! matricization is that block read in order, i.e. `vec` of the slice with
//! columns stacked. The transposed unfolding is available as a zero-copy view.
//!
//! Mode-1 products follow the row-action convention: for `a` of shape
//! `m x d1`, `x.mode1_product(&a)` has mode-1 matricization `a * M1(x)`.
//! Contracting layers against a loading matrix `w` (shape `d1 x m`) is
//! therefore `x.mode1_product(&w.transpose())`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Self {
            dims: [d1, d2, d3],
            data: vec![0.0; d1 * d2 * d3],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "tensor {:?} needs {} entries, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dims[0], dims[1], dims[2]);
        for i1 in 0..dims[0] {
            for i3 in 0..dims[2] {
                for i2 in 0..dims[1] {
                    t.data[i1 * dims[1] * dims[2] + i3 * dims[1] + i2] = f(i1, i2, i3);
                }
            }
        }
        t
    }

    /// Stacks equally sized matrices as the slices of a tensor.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::DimensionMismatch("no slices".into()))?;
        let (d2, d3) = first.shape();
        let mut data = Vec::with_capacity(slices.len() * d2 * d3);
        for (i, s) in slices.iter().enumerate() {
            if s.shape() != (d2, d3) {
                return Err(Error::DimensionMismatch(format!(
                    "slice {i} has shape {:?}, expected {:?}",
                    s.shape(),
                    (d2, d3)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            dims: [slices.len(), d2, d3],
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        debug_assert!(i1 < self.dims[0] && i2 < self.dims[1] && i3 < self.dims[2]);
        i1 * self.dims[1] * self.dims[2] + i3 * self.dims[1] + i2
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.data[self.offset(i1, i2, i3)]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, value: f64) {
        let o = self.offset(i1, i2, i3);
        self.data[o] = value;
    }

    fn slice_len(&self) -> usize {
        self.dims[1] * self.dims[2]
    }

    /// View of `X(i1, :, :)` as a `d2 x d3` matrix.
    pub fn slice(&self, i1: usize) -> DMatrixView<'_, f64> {
        let len = self.slice_len();
        DMatrixView::from_slice(
            &self.data[i1 * len..(i1 + 1) * len],
            self.dims[1],
            self.dims[2],
        )
    }

    pub fn slice_mut(&mut self, i1: usize) -> DMatrixViewMut<'_, f64> {
        let len = self.slice_len();
        let (d2, d3) = (self.dims[1], self.dims[2]);
        DMatrixViewMut::from_slice(&mut self.data[i1 * len..(i1 + 1) * len], d2, d3)
    }

    pub fn slices(&self) -> Vec<Matrix> {
        (0..self.dims[0]).map(|i| self.slice(i).into_owned()).collect()
    }

    /// Transposed mode-1 unfolding (`d2*d3 x d1`), borrowed from the storage.
    pub fn unfolding_t(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.slice_len(), self.dims[0])
    }

    pub fn mode1_matricize(&self) -> Matrix {
        self.unfolding_t().transpose()
    }

    /// Inverse of [`Tensor3::mode1_matricize`].
    pub fn de_matricize(m: &Matrix, dims: [usize; 3]) -> Result<Self> {
        if m.nrows() != dims[0] || m.ncols() != dims[1] * dims[2] {
            return Err(Error::DimensionMismatch(format!(
                "matrix {:?} cannot fold into {:?}",
                m.shape(),
                dims
            )));
        }
        let t = m.transpose();
        Self::from_vec(dims, t.as_slice().to_vec())
    }

    /// `x ×₁ a` with `M1(result) = a · M1(x)`.
    pub fn mode1_product(&self, a: &Matrix) -> Result<Tensor3> {
        if a.ncols() != self.dims[0] {
            return Err(Error::DimensionMismatch(format!(
                "mode-1 product: matrix has {} columns, tensor has {} layers",
                a.ncols(),
                self.dims[0]
            )));
        }
        // M1(result)^T = M1(x)^T a^T, which is already in storage order.
        let out = self.unfolding_t() * a.transpose();
        Ok(Tensor3 {
            dims: [a.nrows(), self.dims[1], self.dims[2]],
            data: out.as_slice().to_vec(),
        })
    }

    /// `x ×₂,₃ y`: the matrix of slice inner products `Tr[x(i) y(j)^T]`.
    pub fn mode23_product(&self, y: &Tensor3) -> Result<Matrix> {
        if self.dims[1] != y.dims[1] || self.dims[2] != y.dims[2] {
            return Err(Error::DimensionMismatch(format!(
                "mode-(2,3) product of {:?} and {:?}",
                self.dims, y.dims
            )));
        }
        Ok(self.unfolding_t().tr_mul(&y.unfolding_t()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} - {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Tensor3 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Elementwise sum of all slices.
    pub fn sum_slices(&self) -> Matrix {
        let mut acc = Matrix::zeros(self.dims[1], self.dims[2]);
        for i in 0..self.dims[0] {
            acc += self.slice(i);
        }
        acc
    }

    /// `x ×₁ u1` for a vector `u1`: the weighted slice sum.
    fn contract_layers(&self, u1: &DVector<f64>) -> Matrix {
        let mut acc = Matrix::zeros(self.dims[1], self.dims[2]);
        for i in 0..self.dims[0] {
            acc += self.slice(i) * u1[i];
        }
        acc
    }
}

/// Result of [`tensor_spectral_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub converged: bool,
}

pub const SPECTRAL_NORM_RESTARTS: usize = 5;

/// Largest tensor singular value `max X ×₁ u1 ×₂ u2 ×₃ u3` over unit vectors,
/// estimated by alternating rank-1 power updates from seeded random starts.
///
/// The returned value is attained by unit vectors, so it is a lower bound on
/// the true value and never exceeds the Frobenius norm.
pub fn tensor_spectral_norm(x: &Tensor3, iters: usize, tol: f64, seed: u64) -> SpectralNorm {
    tensor_spectral_norm_with_restarts(x, iters, tol, seed, SPECTRAL_NORM_RESTARTS)
}

pub fn tensor_spectral_norm_with_restarts(
    x: &Tensor3,
    iters: usize,
    tol: f64,
    seed: u64,
    restarts: usize,
) -> SpectralNorm {
    let iters = iters.max(1);
    if x.frobenius_norm() == 0.0 {
        return SpectralNorm {
            value: 0.0,
            converged: true,
        };
    }
    let [d1, d2, d3] = x.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = SpectralNorm {
        value: 0.0,
        converged: false,
    };
    for _ in 0..restarts.max(1) {
        let mut u2 = random_unit(d2, &mut rng);
        let mut u3 = random_unit(d3, &mut rng);
        let mut u1 = DVector::zeros(d1);
        let mut value = 0.0;
        let mut converged = false;
        for _ in 0..iters {
            for i in 0..d1 {
                u1[i] = (u2.transpose() * x.slice(i) * &u3)[0];
            }
            if !normalize(&mut u1) {
                break;
            }
            let s = x.contract_layers(&u1);
            u2 = &s * &u3;
            if !normalize(&mut u2) {
                break;
            }
            u3 = s.tr_mul(&u2);
            let next = u3.norm();
            if next == 0.0 {
                break;
            }
            u3 /= next;
            let done = (next - value).abs() <= tol * next.max(f64::MIN_POSITIVE);
            value = next;
            if done {
                converged = true;
                break;
            }
        }
        if value > best.value || (value == best.value && converged && !best.converged) {
            best = SpectralNorm { value, converged };
        }
    }
    best.value = best.value.min(x.frobenius_norm());
    best
}

fn random_unit(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        if normalize(&mut v) {
            return v;
        }
    }
}

fn normalize(v: &mut DVector<f64>) -> bool {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    *v /= n;
    true
}

const MAGIC_F64: [u8; 4] = *b"MLT3";
/// Same magic with the high bit of the last byte set: entries are `u8`.
const MAGIC_U8: [u8; 4] = [b'M', b'L', b'T', b'3' | 0x80];

/// Entry encoding of the binary tensor format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryFormat {
    F64,
    U8,
}

/// Writes the binary tensor format: 4-byte magic, `u32` d1, d2, d3
/// (little-endian), then entries in storage order.
pub fn write_tensor<W: Write>(w: &mut W, x: &Tensor3, format: EntryFormat) -> Result<()> {
    let magic = match format {
        EntryFormat::F64 => MAGIC_F64,
        EntryFormat::U8 => MAGIC_U8,
    };
    w.write_all(&magic)?;
    for d in x.dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    match format {
        EntryFormat::F64 => {
            for v in &x.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        EntryFormat::U8 => {
            let mut bytes = Vec::with_capacity(x.data.len());
            for &v in &x.data {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Format(format!("entry {v} is not binary")));
                }
                bytes.push(v as u8);
            }
            w.write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor3> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    let format = match [header[0], header[1], header[2], header[3]] {
        MAGIC_F64 => EntryFormat::F64,
        MAGIC_U8 => EntryFormat::U8,
        other => return Err(Error::Format(format!("bad magic {other:?}"))),
    };
    let dim = |k: usize| u32::from_le_bytes(header[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let dims = [dim(0), dim(1), dim(2)];
    let count = dims[0] * dims[1] * dims[2];
    let data = match format {
        EntryFormat::F64 => {
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf)?;
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        EntryFormat::U8 => {
            let mut buf = vec![0u8; count];
            r.read_exact(&mut buf)?;
            buf.into_iter().map(f64::from).collect()
        }
    };
    Tensor3::from_vec(dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_tensor(dims: [usize; 3], rng: &mut impl Rng) -> Tensor3 {
        Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_matrix(r: usize, c: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matricize_degenerate() {
        let x = Tensor3::from_vec([1, 1, 1], vec![2.5]).unwrap();
        assert_eq!(x.mode1_matricize(), Matrix::from_element(1, 1, 2.5));
    }

    #[test]
    fn matricize_stacks_columns() {
        // X(0,:,:) = [[1,2],[3,4]] -> vec = (1,3,2,4)
        let mut x = Tensor3::zeros(2, 2, 2);
        x.set(0, 0, 0, 1.0);
        x.set(0, 0, 1, 2.0);
        x.set(0, 1, 0, 3.0);
        x.set(0, 1, 1, 4.0);
        let m = x.mode1_matricize();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(x.slice(0)[(0, 1)], 2.0);
    }

    #[test]
    fn matricize_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor([3, 4, 5], &mut rng);
        let back = Tensor3::de_matricize(&x.mode1_matricize(), x.dims()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn mode1_identity_and_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor([3, 2, 4], &mut rng);
        assert_eq!(x.mode1_product(&Matrix::identity(3, 3)).unwrap(), x);

        let ones = Tensor3::from_vec([2, 2, 2], vec![1.0; 8]).unwrap();
        let y = ones.mode1_product(&Matrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(y.dims(), [1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn mode1_dimension_mismatch() {
        let x = Tensor3::zeros(3, 2, 2);
        assert!(matches!(
            x.mode1_product(&Matrix::zeros(2, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn mode1_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let dims = [
                rng.random_range(1..=6),
                rng.random_range(1..=6),
                rng.random_range(1..=6),
            ];
            let x = random_tensor(dims, &mut rng);
            let a = random_matrix(rng.random_range(1..=6), dims[0], &mut rng);
            let lhs = x.mode1_product(&a).unwrap().mode1_matricize();
            let rhs = &a * x.mode1_matricize();
            assert!((lhs - rhs).amax() <= 1e-12);
        }
    }

    #[test]
    fn mode23_examples() {
        let eye = Tensor3::from_slices(&[Matrix::identity(2, 2)]).unwrap();
        assert_eq!(eye.mode23_product(&eye).unwrap()[(0, 0)], 2.0);

        let y = Tensor3::from_slices(&[Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])]).unwrap();
        assert_eq!(eye.mode23_product(&y).unwrap()[(0, 0)], 5.0);
        assert!(eye.mode23_product(&Tensor3::zeros(1, 3, 2)).is_err());
    }

    #[test]
    fn mode23_transfers_mode1_factor() {
        // With the row-action convention, (X ×₁ Aᵀ) ×₂,₃ Y = Aᵀ (X ×₂,₃ Y).
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = random_tensor([4, 3, 5], &mut rng);
            let y = random_tensor([2, 3, 5], &mut rng);
            let a = random_matrix(4, 3, &mut rng);
            let lhs = x.mode1_product(&a.transpose()).unwrap().mode23_product(&y).unwrap();
            let rhs = a.transpose() * x.mode23_product(&y).unwrap();
            assert!((lhs - rhs).amax() <= 1e-12);
        }
    }

    #[test]
    fn mode23_self_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = random_tensor([5, 3, 3], &mut rng);
            let g = x.mode23_product(&x).unwrap();
            assert!((&g - g.transpose()).amax() <= 1e-12);
            let min = g.clone().symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-10 * g.trace());
        }
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(Tensor3::zeros(2, 3, 4).frobenius_norm(), 0.0);
        let ones = Tensor3::from_vec([2, 2, 2], vec![1.0; 8]).unwrap();
        assert_relative_eq!(ones.frobenius_norm(), 8f64.sqrt());
    }

    #[test]
    fn frobenius_invariant_under_orthonormal_loading() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let q = random_tensor([3, 4, 4], &mut rng);
            let w = random_matrix(7, 3, &mut rng).qr().q();
            let p = q.mode1_product(&w).unwrap();
            assert!((p.frobenius_norm() - q.frobenius_norm()).abs() <= 1e-10);
        }
    }

    #[test]
    fn spectral_norm_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let unit = |d, rng: &mut ChaCha8Rng| random_unit(d, rng);
        let (u, v, w) = (unit(4, &mut rng), unit(5, &mut rng), unit(3, &mut rng));
        let x = Tensor3::from_fn([4, 5, 3], |i, j, k| 3.0 * u[i] * v[j] * w[k]);
        let s = tensor_spectral_norm(&x, 200, 1e-14, 11);
        assert!((s.value - 3.0).abs() <= 1e-8, "{}", s.value);
        assert!(s.converged);
    }

    #[test]
    fn spectral_norm_zero_and_single_slice() {
        assert_eq!(tensor_spectral_norm(&Tensor3::zeros(2, 2, 2), 10, 1e-12, 0).value, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(6, 6, &mut rng);
        let s = &a + a.transpose();
        let oracle = s.clone().symmetric_eigen().eigenvalues.amax();
        let x = Tensor3::from_slices(&[s]).unwrap();
        let got = tensor_spectral_norm(&x, 2000, 1e-15, 3);
        assert!((got.value - oracle).abs() <= 1e-8 * oracle);
        assert!(got.value <= x.frobenius_norm());
    }

    #[test]
    fn binary_round_trip_both_flavors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor([2, 3, 3], &mut rng);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &x, EntryFormat::F64).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 18);
        assert_eq!(&buf[..4], b"MLT3");
        assert_eq!(read_tensor(&mut buf.as_slice()).unwrap(), x);

        let b = Tensor3::from_fn([2, 3, 3], |l, i, j| ((l + i + j) % 2) as f64);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &b, EntryFormat::U8).unwrap();
        assert_eq!(buf.len(), 16 + 18);
        assert_eq!(buf[3], b'3' | 0x80);
        assert_eq!(read_tensor(&mut buf.as_slice()).unwrap(), b);
        assert!(write_tensor(&mut Vec::new(), &x, EntryFormat::U8).is_err());
    }
}
