//! Dense row-major `f64` matrices.
//!
//! Every public constructor and operation rejects non-finite results, so a
//! `Tensor` in hand always holds finite entries. Vectors are `1 x n` rows and
//! batches stack one instance per row.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{OcanError, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{}, {:?})", self.rows, self.cols, self.data)
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OcanError::NonFinite { op })
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::from_vec(rows, cols, vec![value; rows * cols])
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(OcanError::InvalidArgument(format!(
                "tensor data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        check_finite("from_vec", &data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(OcanError::InvalidArgument(format!(
                    "row {i} has width {} but row 0 has width {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Self::from_vec(1, values.len(), values.to_vec())
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::from_vec(1, 1, vec![value])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mutable access for parameter updates. Callers are responsible for
    /// keeping the entries finite.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.shape() != (1, 1) {
            return Err(OcanError::NotScalar(self.shape()));
        }
        Ok(self.data[0])
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(OcanError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.same_shape(other, op)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        check_finite(op, &data)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let data: Vec<f64> = self.data.iter().map(|&a| f(a)).collect();
        check_finite(op, &data)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "div", |a, b| a / b)
    }

    pub fn scale(&self, k: f64) -> Result<Tensor> {
        self.map("scale", |a| a * k)
    }

    pub fn add_scalar(&self, k: f64) -> Result<Tensor> {
        self.map("add_scalar", |a| a + k)
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(OcanError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(),
                rhs: bias.shape(),
            });
        }
        let mut data = self.data.clone();
        if self.cols > 0 {
            for row in data.chunks_exact_mut(self.cols) {
                for (x, b) in row.iter_mut().zip(&bias.data) {
                    *x += b;
                }
            }
        }
        check_finite("add_row", &data)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Multiplies row `i` by entry `i` of a `rows x 1` column.
    pub fn mul_col(&self, col: &Tensor) -> Result<Tensor> {
        if col.cols != 1 || col.rows != self.rows {
            return Err(OcanError::ShapeMismatch {
                op: "mul_col",
                lhs: self.shape(),
                rhs: col.shape(),
            });
        }
        let mut data = self.data.clone();
        if self.cols > 0 {
            for (row, &k) in data.chunks_exact_mut(self.cols).zip(&col.data) {
                row.iter_mut().for_each(|x| *x *= k);
            }
        }
        check_finite("mul_col", &data)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(OcanError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let a = Strided {
            data: &self.data,
            rs: k,
            cs: 1,
        };
        let b = Strided {
            data: &other.data,
            rs: n,
            cs: 1,
        };
        gemm("matmul", m, k, n, a, b)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(OcanError::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let a = Strided {
            data: &self.data,
            rs: k,
            cs: 1,
        };
        let b = Strided {
            data: &other.data,
            rs: 1,
            cs: k,
        };
        gemm("matmul_nt", m, k, n, a, b)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        if self.rows != other.rows {
            return Err(OcanError::ShapeMismatch {
                op: "matmul_tn",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let a = Strided {
            data: &self.data,
            rs: 1,
            cs: m,
        };
        let b = Strided {
            data: &other.data,
            rs: n,
            cs: 1,
        };
        gemm("matmul_tn", m, k, n, a, b)
    }

    pub fn transpose(&self) -> Tensor {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.map("sigmoid", sigmoid)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.map("tanh", f64::tanh)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.map("relu", |a| a.max(0.0))
    }

    pub fn square(&self) -> Result<Tensor> {
        self.map("square", |a| a * a)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        self.map("clamp", |a| a.clamp(lo, hi))
    }

    pub fn ln(&self) -> Result<Tensor> {
        if let Some((index, &value)) = self.data.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(OcanError::LogDomain { value, index });
        }
        self.map("log", f64::ln)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(OcanError::Empty("mean of empty tensor"));
        }
        Ok(self.sum() / self.data.len() as f64)
    }

    /// Column means as a `1 x cols` row.
    pub fn mean_rows(&self) -> Result<Tensor> {
        if self.rows == 0 {
            return Err(OcanError::Empty("mean_rows of zero-row tensor"));
        }
        let mut out = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let n = self.rows as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Tensor::from_vec(1, self.cols, out)
    }

    /// Row sums as a `rows x 1` column.
    pub fn sum_cols(&self) -> Tensor {
        let data = self.row_iter().map(|r| r.iter().sum()).collect();
        Tensor {
            rows: self.rows,
            cols: 1,
            data,
        }
    }

    /// Euclidean norm of each row as a `rows x 1` column.
    pub fn row_norms(&self) -> Tensor {
        let data = self
            .row_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Tensor {
            rows: self.rows,
            cols: 1,
            data,
        }
    }

    pub fn row_softmax(&self) -> Result<Tensor> {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.row_iter() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.into_iter().map(|e| e / z));
        }
        check_finite("row_softmax", &data)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn concat_cols(&self, other: &Tensor) -> Result<Tensor> {
        if self.rows != other.rows {
            return Err(OcanError::ShapeMismatch {
                op: "concat_cols",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Tensor {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn concat_rows(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(OcanError::ShapeMismatch {
                op: "concat_rows",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.rows {
            return Err(OcanError::InvalidArgument(format!(
                "row slice {start}..{end} out of range for {} rows",
                self.rows
            )));
        }
        Ok(Tensor {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }

    /// Column `c` as a `rows x 1` tensor.
    pub fn column(&self, c: usize) -> Result<Tensor> {
        if c >= self.cols {
            return Err(OcanError::InvalidArgument(format!(
                "column {c} out of range for {} columns",
                self.cols
            )));
        }
        let data = self.row_iter().map(|r| r[c]).collect();
        Ok(Tensor {
            rows: self.rows,
            cols: 1,
            data,
        })
    }

    /// Selects the given rows, in order.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(OcanError::InvalidArgument(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor {
            rows: idx.len(),
            cols: self.cols,
            data,
        })
    }
}

struct Strided<'a> {
    data: &'a [f64],
    rs: usize,
    cs: usize,
}

fn gemm(
    op: &'static str,
    m: usize,
    k: usize,
    n: usize,
    a: Strided<'_>,
    b: Strided<'_>,
) -> Result<Tensor> {
    let mut out = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        let st = |v: usize| v as isize;
        // SAFETY: the strides describe row-major or transposed views that
        // stay inside the slices, whose lengths were checked by the callers'
        // shape validation; `out` holds exactly m x n elements.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                st(a.rs),
                st(a.cs),
                b.data.as_ptr(),
                st(b.rs),
                st(b.cs),
                0.0,
                out.as_mut_ptr(),
                st(n),
                1,
            );
        }
    }
    check_finite(op, &out)?;
    Ok(Tensor {
        rows: m,
        cols: n,
        data: out,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let t = Tensor::scalar(0.0).unwrap().sigmoid().unwrap();
        assert_eq!(t.item().unwrap(), 0.5);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let t = Tensor::row_vector(&[0.0, 0.0])
            .unwrap()
            .row_softmax()
            .unwrap();
        assert_eq!(t.data(), &[0.5, 0.5]);
    }

    #[test]
    fn matmul_shapes() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(3, 4);
        assert_eq!(a.matmul(&b).unwrap().shape(), (2, 4));
        let err = a.matmul(&a).unwrap_err();
        assert!(err.to_string().contains("(2, 3)"), "{err}");
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]).unwrap();
        let b = Tensor::from_vec(3, 2, vec![2.0, 1.0, 0.0, -3.0, 1.5, 2.5]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[6.5, 14.5, -0.5, -14.0]);
        assert_eq!(a.matmul_nt(&b.transpose()).unwrap(), ab);
        assert_eq!(a.transpose().matmul_tn(&b).unwrap(), ab);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::from_vec(1, 1, vec![f64::NAN]).is_err());
        let big = Tensor::scalar(1e308).unwrap();
        assert!(matches!(big.scale(10.0), Err(OcanError::NonFinite { .. })));
    }

    #[test]
    fn log_of_non_positive_is_an_error() {
        let t = Tensor::row_vector(&[1.0, 0.0]).unwrap();
        assert!(matches!(t.ln(), Err(OcanError::LogDomain { index: 1, .. })));
    }

    #[test]
    fn reductions() {
        let t = Tensor::from_vec(2, 2, vec![3.0, 4.0, 0.0, 1.0]).unwrap();
        assert_eq!(t.row_norms().data(), &[5.0, 1.0]);
        assert_eq!(t.mean_rows().unwrap().data(), &[1.5, 2.5]);
        assert_eq!(t.sum_cols().data(), &[7.0, 1.0]);
        assert_eq!(t.mean().unwrap(), 2.0);
    }
}
