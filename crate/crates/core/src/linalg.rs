//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit QL with Wilkinson-style shifts (EISPACK `tql2`).

use nalgebra::{DMatrix, DVector, SymmetricTridiagonal};

/// Eigenpairs sorted by ascending eigenvalue; column `k` of `eigenvectors`
/// belongs to `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Full eigendecomposition of a real symmetric matrix.
pub fn symmetric_eigen(m: DMatrix<f64>) -> SymmetricEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix must be square");
    match n {
        0 => SymmetricEigen {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        },
        1 => SymmetricEigen {
            eigenvalues: DVector::from_element(1, m[(0, 0)]),
            eigenvectors: DMatrix::identity(1, 1),
        },
        _ => {
            let (q, diag, off) = SymmetricTridiagonal::new(m).unpack();
            ql_implicit(diag.as_slice().to_vec(), off.as_slice(), Some(q))
        }
    }
}

/// Eigenvalues only, ascending. Skips the vector accumulation.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix must be square");
    if n <= 1 {
        return m.iter().copied().collect();
    }
    let (diag, off) = SymmetricTridiagonal::new(m).unpack_tridiagonal();
    ql_implicit(diag.as_slice().to_vec(), off.as_slice(), None).eigenvalues.as_slice().to_vec()
}

/// Eigendecomposition of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> SymmetricEigen {
    let n = diag.len();
    assert!(off.len() + 1 >= n, "off-diagonal too short");
    ql_implicit(diag.to_vec(), &off[..n.saturating_sub(1)], Some(DMatrix::identity(n, n)))
}

/// With `z == None` only eigenvalues are computed and `eigenvectors` is empty.
fn ql_implicit(mut d: Vec<f64>, off: &[f64], mut z: Option<DMatrix<f64>>) -> SymmetricEigen {
    let n = d.len();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(off);
    let eps = f64::EPSILON;
    let mut zs = z.as_mut().map(|z| z.as_mut_slice());

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(zs) = zs.as_deref_mut() {
                        let (left, right) = zs.split_at_mut((i + 1) * n);
                        let col_i = &mut left[i * n..];
                        let col_next = &mut right[..n];
                        for (zi, zn) in col_i.iter_mut().zip(col_next.iter_mut()) {
                            let hk = *zn;
                            *zn = s * *zi + c * hk;
                            *zi = c * *zi - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || sweeps > 200 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| d[k]));
    let eigenvectors = match z {
        Some(z) => DMatrix::from_fn(n, n, |i, j| z[(i, order[j])]),
        None => DMatrix::zeros(0, 0),
    };
    SymmetricEigen {
        eigenvalues,
        eigenvectors,
    }
}
