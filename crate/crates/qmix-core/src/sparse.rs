//! Sparse complex matrices in compressed-row form, assembled from
//! coordinate triplets so the result is independent of insertion order.

use ndarray::{Array2, ArrayView2};

use crate::Complex;

/// Compressed sparse rows; duplicate triplets are summed at build time.
#[derive(Clone, Debug)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Complex>,
}

impl Csr {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, Complex)>,
    ) -> Csr {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            if indptr[r + 1] > 0 && *cols.last().unwrap() == c && indptr[r + 1] == cols.len() {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
            }
            indptr[r + 1] = cols.len();
        }
        // Prefix-max turns per-row end marks into cumulative offsets.
        for i in 1..=nrows {
            indptr[i] = indptr[i].max(indptr[i - 1]);
        }
        Csr {
            nrows,
            ncols,
            indptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[Complex]) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn to_dense(&self) -> Array2<Complex> {
        let mut a = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                a[(r, c)] += v;
            }
        }
        a
    }

    /// Dense real part, provided every entry is real to 1e-14.
    pub fn to_dense_real(&self) -> Option<Array2<f64>> {
        if self.vals.iter().any(|v| v.im.abs() > 1e-14) {
            return None;
        }
        let mut a = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                a[(r, c)] += v.re;
            }
        }
        Some(a)
    }

    /// Largest entrywise deviation |A − A†|; zero for Hermitian matrices.
    pub fn hermitian_defect(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let dense = self.to_dense();
        let mut defect: f64 = 0.0;
        for i in 0..self.nrows {
            for j in 0..=i {
                let d = (dense[(i, j)] - dense[(j, i)].conj()).norm();
                defect = defect.max(d);
            }
        }
        defect
    }

    pub fn matvec(&self, x: &[Complex]) -> Vec<Complex> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![Complex::new(0.0, 0.0); self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = Complex::new(0.0, 0.0);
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// Entrywise scalar multiple.
    pub fn scaled(&self, coeff: Complex) -> Csr {
        let mut out = self.clone();
        for v in out.vals.iter_mut() {
            *v *= coeff;
        }
        out
    }

    /// The r×r block at point pair (x, y) when rows/cols are indexed
    /// (i, x) → i·n + x.
    pub fn block(&self, r: usize, n: usize, x: usize, y: usize) -> Array2<Complex> {
        let mut b = Array2::zeros((r, r));
        for i in 0..r {
            let (cols, vals) = self.row(i * n + x);
            for (&c, &v) in cols.iter().zip(vals) {
                if c % n == y {
                    b[(i, c / n)] += v;
                }
            }
        }
        b
    }

    /// Applies the matrix to every column of a real block.
    pub fn apply_columns_real(&self, block: &ArrayView2<f64>) -> Array2<Complex> {
        assert_eq!(self.ncols, block.nrows());
        let w = block.ncols();
        let mut out = Array2::zeros((self.nrows, w));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for c in 0..w {
                    out[(i, c)] += v * block[(j, c)];
                }
            }
        }
        out
    }

    /// Applies the matrix to every column of a complex block.
    pub fn apply_columns_complex(&self, block: &ArrayView2<Complex>) -> Array2<Complex> {
        assert_eq!(self.ncols, block.nrows());
        let w = block.ncols();
        let mut out = Array2::zeros((self.nrows, w));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for c in 0..w {
                    out[(i, c)] += v * block[(j, c)];
                }
            }
        }
        out
    }
}

/// Entrywise sum of two same-shape sparse matrices.
pub fn add(a: &Csr, b: &Csr) -> Csr {
    assert_eq!((a.nrows, a.ncols), (b.nrows, b.ncols), "shape mismatch");
    let mut trips = Vec::with_capacity(a.nnz() + b.nnz());
    for m in [a, b] {
        for r in 0..m.nrows {
            let (cols, vals) = m.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                trips.push((r, c, v));
            }
        }
    }
    Csr::from_triplets(a.nrows, a.ncols, trips)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn assembly_matches_dense() {
        let t1 = vec![
            (0, 1, c(1.0, 0.0)),
            (1, 0, c(1.0, 0.0)),
            (0, 1, c(0.5, 0.5)),
            (2, 2, c(-1.0, 0.0)),
        ];
        let mut t2 = t1.clone();
        t2.reverse();
        let a = Csr::from_triplets(3, 3, t1);
        let b = Csr::from_triplets(3, 3, t2);
        assert_eq!(a.nnz(), 3);
        let da = a.to_dense();
        let db = b.to_dense();
        assert_eq!(da, db);
        assert_eq!(da[(0, 1)], c(1.5, 0.5));
        assert_eq!(da[(2, 2)], c(-1.0, 0.0));
        assert_eq!(da[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn hermitian_defect_detects_asymmetry() {
        let h = Csr::from_triplets(
            2,
            2,
            vec![(0, 1, c(0.0, 1.0)), (1, 0, c(0.0, -1.0))],
        );
        assert_eq!(h.hermitian_defect(), 0.0);
        let g = Csr::from_triplets(2, 2, vec![(0, 1, c(1.0, 0.0))]);
        assert!(g.hermitian_defect() > 0.9);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = Csr::from_triplets(
            2,
            3,
            vec![(0, 0, c(1.0, 0.0)), (0, 2, c(0.0, 1.0)), (1, 1, c(2.0, 0.0))],
        );
        let x = vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)];
        let y = a.matvec(&x);
        assert_eq!(y[0], c(1.0, 0.0) + c(0.0, 1.0) * c(1.0, 1.0));
        assert_eq!(y[1], c(0.0, 2.0));
    }

    #[test]
    fn real_extraction() {
        let a = Csr::from_triplets(1, 1, vec![(0, 0, c(2.0, 0.0))]);
        assert!(a.to_dense_real().is_some());
        let b = Csr::from_triplets(1, 1, vec![(0, 0, c(2.0, 1.0))]);
        assert!(b.to_dense_real().is_none());
    }

    #[test]
    fn column_application_matches_dense_product() {
        let a = Csr::from_triplets(
            3,
            3,
            vec![
                (0, 0, c(1.0, 0.5)),
                (0, 2, c(0.0, 1.0)),
                (1, 1, c(2.0, 0.0)),
                (2, 0, c(-1.0, 0.0)),
            ],
        );
        let block = ndarray::array![[1.0, 0.0], [0.5, 2.0], [0.0, -1.0]];
        let got = a.apply_columns_real(&block.view());
        let dense = a.to_dense();
        let promoted = block.mapv(|v| c(v, 0.0));
        let want = dense.dot(&promoted);
        for i in 0..3 {
            for j in 0..2 {
                assert!((got[(i, j)] - want[(i, j)]).norm() < 1e-14);
            }
        }
        let got2 = a.apply_columns_complex(&promoted.view());
        for i in 0..3 {
            for j in 0..2 {
                assert!((got2[(i, j)] - want[(i, j)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn sum_and_scale() {
        let a = Csr::from_triplets(2, 2, vec![(0, 0, c(1.0, 0.0)), (0, 1, c(2.0, 0.0))]);
        let b = Csr::from_triplets(2, 2, vec![(0, 0, c(0.5, 1.0)), (1, 1, c(3.0, 0.0))]);
        let s = add(&a, &b.scaled(c(-1.0, 0.0)));
        let d = s.to_dense();
        assert_eq!(d[(0, 0)], c(0.5, -1.0));
        assert_eq!(d[(0, 1)], c(2.0, 0.0));
        assert_eq!(d[(1, 1)], c(-3.0, 0.0));
    }

    #[test]
    fn block_extraction_with_tensor_layout() {
        // r = 2 blocks over n = 3 points: entry ((i,x),(j,y)) = i·3+x row.
        let trips = vec![
            (0 * 3 + 1, 0 * 3 + 2, c(1.0, 0.0)),
            (0 * 3 + 1, 1 * 3 + 2, c(2.0, 0.0)),
            (1 * 3 + 1, 1 * 3 + 2, c(0.0, 1.0)),
            (0 * 3 + 0, 0 * 3 + 0, c(9.0, 0.0)),
        ];
        let a = Csr::from_triplets(6, 6, trips);
        let b = a.block(2, 3, 1, 2);
        assert_eq!(b[(0, 0)], c(1.0, 0.0));
        assert_eq!(b[(0, 1)], c(2.0, 0.0));
        assert_eq!(b[(1, 1)], c(0.0, 1.0));
        assert_eq!(b[(1, 0)], c(0.0, 0.0));
    }
}
