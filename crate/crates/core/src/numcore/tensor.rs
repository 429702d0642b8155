use crate::error::{Error, Result};

/// Dense row-major tensor of `f64` values.
///
/// Graph operations work on rank-2 tensors; a vector is a `[1, d]` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::TensorSize {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    /// Builds a `[rows, cols]` matrix. Panics if the length does not match.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    /// A `[1, d]` row vector.
    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, data.len()],
            data,
        }
    }

    /// A `[d, 1]` column vector.
    pub fn column(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len(), 1],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), cols, data)
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }
}

/// `a[n,k] · b[k,m]`, with optional transposition of either operand.
pub(crate) fn matmul(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (n, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, m) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "matmul inner dimension");
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = if ta { ad[p * ac + i] } else { ad[i * ac + p] };
            if av == 0.0 {
                continue;
            }
            if tb {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * bd[j * bc + p];
                }
            } else {
                let brow = &bd[p * bc..(p + 1) * bc];
                for (o, bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::matrix(n, m, out)
}
