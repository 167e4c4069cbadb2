//! Compressed sparse row matrices over Complex64, sized for truncated
//! Fock-space operators (ladder operators and their Kronecker products).

use ndarray::Array2;
use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    n: usize,
    indptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn zeros(n: usize) -> Csr {
        Csr { n, indptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(n: usize) -> Csr {
        Csr {
            n,
            indptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![C64::new(1.0, 0.0); n],
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, C64)>) -> Csr {
        let zero = C64::new(0.0, 0.0);
        trips.retain(|t| t.2 != zero);
        trips.sort_unstable_by_key(|t| (t.0, t.1));
        let mut cols: Vec<usize> = Vec::with_capacity(trips.len());
        let mut vals: Vec<C64> = Vec::with_capacity(trips.len());
        let mut row_counts = vec![0usize; n];
        let mut iter = trips.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            debug_assert!(r < n && c < n);
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != zero {
                cols.push(c);
                vals.push(v);
                row_counts[r] += 1;
            }
        }
        let mut indptr = vec![0usize; n + 1];
        for i in 0..n {
            indptr[i + 1] = indptr[i] + row_counts[i];
        }
        Csr { n, indptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    pub fn scale(&self, c: C64) -> Csr {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= c;
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Csr {
        let mut trips = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                trips.push((j, i, v.conj()));
            }
        }
        Csr::from_triplets(self.n, trips)
    }

    /// Sum of scaled matrices.
    pub fn linear_combination(terms: &[(C64, &Csr)]) -> Csr {
        assert!(!terms.is_empty());
        let n = terms[0].1.n;
        let mut trips = Vec::new();
        for (c, m) in terms {
            assert_eq!(m.n, n);
            for i in 0..n {
                for (j, v) in m.row(i) {
                    trips.push((i, j, *c * v));
                }
            }
        }
        Csr::from_triplets(n, trips)
    }

    /// Kronecker product, first factor slowest.
    pub fn kron(a: &Csr, b: &Csr) -> Csr {
        let n = a.n * b.n;
        let mut trips = Vec::with_capacity(a.nnz() * b.nnz());
        for ia in 0..a.n {
            for (ja, va) in a.row(ia) {
                for ib in 0..b.n {
                    for (jb, vb) in b.row(ib) {
                        trips.push((ia * b.n + ib, ja * b.n + jb, va * vb));
                    }
                }
            }
        }
        Csr::from_triplets(n, trips)
    }

    /// Sparse-sparse product.
    pub fn matmul(a: &Csr, b: &Csr) -> Csr {
        assert_eq!(a.n, b.n);
        let mut trips = Vec::new();
        for i in 0..a.n {
            for (k, va) in a.row(i) {
                for (j, vb) in b.row(k) {
                    trips.push((i, j, va * vb));
                }
            }
        }
        Csr::from_triplets(a.n, trips)
    }

    /// out = self * x  (sparse times dense)
    pub fn mul_dense(&self, x: &Array2<C64>, out: &mut Array2<C64>) {
        out.fill(C64::new(0.0, 0.0));
        for i in 0..self.n {
            for (k, v) in self.row(i) {
                let xrow = x.row(k);
                let mut orow = out.row_mut(i);
                for (o, xv) in orow.iter_mut().zip(xrow.iter()) {
                    *o += v * xv;
                }
            }
        }
    }

    /// out += c * (x * self)  (dense times sparse, accumulated)
    pub fn dense_mul_acc(&self, x: &Array2<C64>, c: C64, out: &mut Array2<C64>) {
        for k in 0..self.n {
            for (j, v) in self.row(k) {
                let cv = c * v;
                let xcol = x.column(k);
                let mut ocol = out.column_mut(j);
                for (o, xv) in ocol.iter_mut().zip(xcol.iter()) {
                    *o += cv * xv;
                }
            }
        }
    }

    /// tr(self * x)
    pub fn trace_mul(&self, x: &Array2<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                acc += v * x[(j, i)];
            }
        }
        acc
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[(i, j)] += v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_merge_duplicates() {
        let m = Csr::from_triplets(
            2,
            vec![(0, 1, c(1.0, 0.0)), (0, 1, c(0.5, 1.0)), (1, 0, c(2.0, 0.0))],
        );
        assert_eq!(m.nnz(), 2);
        let d = m.to_dense();
        assert_eq!(d[(0, 1)], c(1.5, 1.0));
        assert_eq!(d[(1, 0)], c(2.0, 0.0));
    }

    #[test]
    fn kron_matches_dense() {
        let a = Csr::from_triplets(2, vec![(0, 1, c(1.0, 0.0)), (1, 0, c(0.0, -1.0))]);
        let b = Csr::identity(3).scale(c(2.0, 0.0));
        let k = Csr::kron(&a, &b);
        assert_eq!(k.dim(), 6);
        let d = k.to_dense();
        assert_eq!(d[(0, 4)], c(2.0, 0.0));
        assert_eq!(d[(3, 0)], c(0.0, -2.0));
    }

    #[test]
    fn adjoint_and_matmul() {
        let a = Csr::from_triplets(2, vec![(0, 1, c(0.0, 1.0))]);
        let ad = a.adjoint();
        assert_eq!(ad.to_dense()[(1, 0)], c(0.0, -1.0));
        let p = Csr::matmul(&ad, &a); // = |1><1|
        let d = p.to_dense();
        assert_eq!(d[(1, 1)], c(1.0, 0.0));
        assert_eq!(d[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn dense_products_agree() {
        let a = Csr::from_triplets(
            3,
            vec![(0, 1, c(1.0, 2.0)), (1, 2, c(-0.5, 0.0)), (2, 0, c(0.0, 1.0)), (2, 2, c(3.0, 0.0))],
        );
        let mut x = Array2::<C64>::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                x[(i, j)] = c((i + 1) as f64, j as f64 - 1.0);
            }
        }
        let ad = a.to_dense();
        let mut out = Array2::<C64>::zeros((3, 3));
        a.mul_dense(&x, &mut out);
        assert_eq!(out, ad.dot(&x));

        let mut out2 = Array2::<C64>::zeros((3, 3));
        a.dense_mul_acc(&x, c(1.0, 0.0), &mut out2);
        assert_eq!(out2, x.dot(&ad));

        let tr_direct: C64 = ad.dot(&x).diag().iter().sum();
        let tr = a.trace_mul(&x);
        assert!((tr - tr_direct).norm() < 1e-12);
    }
}
