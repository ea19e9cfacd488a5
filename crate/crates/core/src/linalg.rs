//! Small dense helpers shared by the frame and family code.

use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Singular values (descending) and right singular vectors of a tall real matrix.
///
/// The matrix is first reduced to its triangular QR factor, so only a square
/// SVD of the column dimension is performed.
pub(crate) fn right_svd(a: &Mat<f64>) -> (Vec<f64>, Mat<f64>) {
    let cols = a.ncols();
    let square = if a.nrows() > cols {
        let qr = a.qr();
        qr.thin_R().to_owned()
    } else {
        a.clone()
    };
    let svd = square.svd().expect("svd of a finite matrix converges");
    let s = svd.S().column_vector();
    let values: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    (values, svd.V().to_owned())
}

/// Singular values of a small complex matrix, descending.
pub fn complex_singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Singular values of a small real matrix, descending.
pub fn real_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Columns of `G` stacked as real vectors `(Re g, Im g)` of length `2N`.
pub fn realify(g: &DMatrix<C64>) -> DMatrix<f64> {
    let n = g.nrows();
    DMatrix::from_fn(2 * n, g.ncols(), |r, c| {
        if r < n {
            g[(r, c)].re
        } else {
            g[(r - n, c)].im
        }
    })
}

/// Orthonormal basis of the orthogonal complement of `v` in `ℝ^d`, as columns.
pub fn real_complement(v: &[f64]) -> DMatrix<f64> {
    let d = v.len();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(d);
    let v0 = nalgebra::DVector::from_column_slice(v);
    let nv = v0.norm();
    if nv > 0.0 {
        basis.push(v0 / nv);
    }
    let first = basis.len();
    for e in 0..d {
        let mut w = nalgebra::DVector::<f64>::zeros(d);
        w[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&w);
                w.axpy(-p, b, 1.0);
            }
        }
        let nw = w.norm();
        if nw > 1e-8 && basis.len() < d {
            basis.push(w / nw);
        }
    }
    DMatrix::from_columns(&basis[first..])
}

/// Orthonormal bases of the real span of the columns of `G` and of its
/// orthogonal complement in `ℝ^{2N}`, by Gram–Schmidt with reorthogonalization.
pub fn split_span(g: &DMatrix<C64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let r = realify(g);
    let dim = r.nrows();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(dim);
    let push = |basis: &mut Vec<nalgebra::DVector<f64>>, mut v: nalgebra::DVector<f64>| -> f64 {
        for _ in 0..2 {
            for b in basis.iter() {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 0.0 {
            basis.push(v / nv);
        }
        nv
    };
    for c in 0..r.ncols() {
        let col = r.column(c).into_owned();
        let scale = col.norm().max(f64::MIN_POSITIVE);
        push(&mut basis, col / scale);
    }
    let span = basis.len();
    // extend with the coordinate vectors that keep the most residual
    while basis.len() < dim {
        let mut best: Option<(f64, nalgebra::DVector<f64>)> = None;
        for e in 0..dim {
            let mut v = nalgebra::DVector::<f64>::zeros(dim);
            v[e] = 1.0;
            for b in &basis {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
            let nv = v.norm();
            if best.as_ref().is_none_or(|(bn, _)| nv > *bn) {
                best = Some((nv, v));
            }
        }
        let (_, v) = best.expect("dimension is positive");
        push(&mut basis, v);
    }
    let q = DMatrix::from_columns(&basis[..span]);
    let perp = DMatrix::from_columns(&basis[span..]);
    (q, perp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_orthonormal_and_complementary() {
        let g = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.3), C64::new(0.0, 1.0), C64::new(0.2, -0.1), C64::new(2.0, 0.5)],
        );
        let (q, p) = split_span(&g);
        assert_eq!((q.ncols(), p.ncols()), (2, 2));
        let full = DMatrix::from_columns(&[q.column(0), q.column(1), p.column(0), p.column(1)]);
        let gram = full.transpose() * &full;
        assert!((gram - DMatrix::identity(4, 4)).norm() < 1e-14);
        let r = realify(&g);
        assert!((p.transpose() * r).norm() < 1e-14);
    }

    #[test]
    fn complement_is_orthogonal() {
        let v = [0.3, -1.0, 2.0, 0.5];
        let c = real_complement(&v);
        assert_eq!(c.ncols(), 3);
        let vv = nalgebra::DVector::from_column_slice(&v);
        assert!((c.transpose() * vv).norm() < 1e-14);
        assert!((c.transpose() * &c - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn right_svd_finds_nullspace() {
        let a = Mat::from_fn(10, 3, |i, j| if j == 2 { (i as f64) * 2.0 } else if j == 1 { i as f64 } else { 1.0 });
        let (s, v) = right_svd(&a);
        assert!(s[2] < 1e-12 * s[0]);
        // null vector (0, 2, −1) up to sign
        let x = [v[(0, 2)], v[(1, 2)], v[(2, 2)]];
        assert!(x[0].abs() < 1e-12);
        assert!((x[1] + 2.0 * x[2]).abs() < 1e-12);
    }
}
