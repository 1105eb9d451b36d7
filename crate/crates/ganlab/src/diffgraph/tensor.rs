//! Dense row-major matrices of `f64`.
//!
//! Everything in the graph is rank 2: scalars are `[1,1]`, row vectors
//! `[1,c]`, column vectors `[r,1]`. Keeping a single concrete layout makes
//! the evaluation kernels and the adjoint rules short and predictable.

/// A dense `rows x cols` matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from raw row-major data. Panics if `data.len()`
    /// does not equal `rows * cols` — that is a programming error, not a
    /// recoverable condition.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor data length {} does not match shape [{rows},{cols}]",
            data.len()
        );
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Tensor::new(rows, cols, vec![v; rows * cols])
    }

    /// A `[1,1]` tensor holding `v`.
    pub fn scalar(v: f64) -> Self {
        Tensor::new(1, 1, vec![v])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single element of a `[1,1]` tensor. Panics on any other shape.
    pub fn scalar_value(&self) -> f64 {
        assert!(
            self.is_scalar(),
            "scalar_value on shape [{},{}]",
            self.rows,
            self.cols
        );
        self.data[0]
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    // ---- elementwise kernels -------------------------------------------

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combine with an identically shaped tensor. Panics on a
    /// shape mismatch; the graph builders validate shapes before this runs.
    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(
            self.shape(),
            other.shape(),
            "zip of mismatched shapes [{},{}] and [{},{}]",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    // ---- linear algebra and reductions ---------------------------------

    /// Matrix product `self * other` for `[m,k] x [k,n]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.rows,
            "matmul of [{},{}] with [{},{}]",
            self.rows, self.cols, other.rows, other.cols
        );
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Tensor::new(m, n, out)
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Per-row sums as a `[rows,1]` column.
    pub fn row_sums(&self) -> Tensor {
        Tensor::from_fn(self.rows, 1, |i, _| self.row(i).iter().sum())
    }

    /// Per-column sums as a `[1,cols]` row.
    pub fn col_sums(&self) -> Tensor {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.get(i, j);
            }
        }
        Tensor::new(1, self.cols, out)
    }

    /// Expands a `[1,1]`, `[r,1]`, or `[1,c]` tensor to `[rows,cols]` by
    /// repetition. Panics if the source shape cannot expand to the target.
    pub fn broadcast_to(&self, rows: usize, cols: usize) -> Tensor {
        match self.shape() {
            (1, 1) => Tensor::filled(rows, cols, self.data[0]),
            (r, 1) if r == rows => Tensor::from_fn(rows, cols, |i, _| self.data[i]),
            (1, c) if c == cols => Tensor::from_fn(rows, cols, |_, j| self.data[j]),
            (r, c) => panic!("cannot broadcast [{r},{c}] to [{rows},{cols}]"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_computation() {
        let a = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::new(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.shape(), (2, 2));
        // [1 2 3; 4 5 6] * [7 8; 9 10; 11 12] = [58 64; 139 154]
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_roundtrips() {
        let a = Tensor::from_fn(3, 4, |i, j| (i * 10 + j) as f64);
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(a.transpose().get(2, 1), a.get(1, 2));
    }

    #[test]
    fn reductions_and_broadcast_agree_on_shapes() {
        let a = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.row_sums().data(), &[6.0, 15.0]);
        assert_eq!(a.col_sums().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(a.sum(), 21.0);
        assert_eq!(a.mean(), 3.5);

        let col = Tensor::new(2, 1, vec![1.0, 2.0]);
        assert_eq!(
            col.broadcast_to(2, 3).data(),
            &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
        );
        let row = Tensor::new(1, 3, vec![1.0, 2.0, 3.0]);
        assert_eq!(
            row.broadcast_to(2, 3).data(),
            &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]
        );
        assert_eq!(Tensor::scalar(5.0).broadcast_to(2, 2).data(), &[5.0; 4]);
    }

    #[test]
    #[should_panic(expected = "cannot broadcast")]
    fn broadcast_rejects_incompatible_shape() {
        Tensor::new(2, 2, vec![0.0; 4]).broadcast_to(3, 3);
    }
}
