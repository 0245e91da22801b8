//! Compressed sparse rows for one-hot heavy feature matrices.

use ndarray::ArrayView2;

pub(crate) struct SparseRows {
    pub starts: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub fn from_view(x: ArrayView2<'_, f64>) -> Self {
        let mut starts = Vec::with_capacity(x.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        starts.push(0);
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j as u32);
                    vals.push(v);
                }
            }
            starts.push(vals.len());
        }
        SparseRows { starts, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.starts[i], self.starts[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&j, &v)| v * w[j as usize]).sum()
    }
}
