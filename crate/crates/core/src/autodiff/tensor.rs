//! Dense row-major f64 tensors (rank 1 and 2) with the handful of kernels
//! the models need. Vectors are tensors with a single row.

/// Row-major dense matrix/vector of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length mismatch");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(vec![v])
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// In-place `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Tensor) {
        assert!(self.same_shape(other), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// C = A · B for A: m×k, B: k×n.
    pub fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.cols, b.rows, "matmul_nn inner dim mismatch");
        let mut out = Tensor::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for p in 0..a.cols {
                let av = a.data[i * a.cols + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &b.data[p * b.cols..(p + 1) * b.cols];
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += av * bv;
                }
            }
        }
        out
    }

    /// C = A · Bᵀ for A: m×k, B: n×k.
    pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.cols, b.cols, "matmul_nt inner dim mismatch");
        let mut out = Tensor::zeros(a.rows, b.rows);
        for i in 0..a.rows {
            let arow = a.row(i);
            for j in 0..b.rows {
                let brow = b.row(j);
                let mut acc = 0.0;
                for (av, bv) in arow.iter().zip(brow.iter()) {
                    acc += av * bv;
                }
                out.data[i * b.rows + j] = acc;
            }
        }
        out
    }

    /// C = Aᵀ · B for A: k×m, B: k×n.
    pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.rows, b.rows, "matmul_tn inner dim mismatch");
        let mut out = Tensor::zeros(a.cols, b.cols);
        for p in 0..a.rows {
            let arow = a.row(p);
            let brow = b.row(p);
            for i in 0..a.cols {
                let av = arow[i];
                if av == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += av * bv;
                }
            }
        }
        out
    }
}
