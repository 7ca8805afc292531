//! Dense row-major matrices and the handful of factorizations the models need:
//! symmetric eigendecomposition (Householder tridiagonalization followed by
//! implicit QL), principal axes of centered data, and Householder QR least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns `idx` in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            let src = self.row(i);
            for (o, &j) in out.row_mut(i).iter_mut().zip(idx) {
                *o = src[j];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == T::zero() {
                    continue;
                }
                axpy(aik, rhs.row(k), o);
            }
        }
        Ok(out)
    }

    /// `self * rhsᵀ` without materializing the transpose.
    pub fn matmul_transposed(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(a, rhs.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ * self`, exploiting symmetry.
    pub fn gram(&self) -> Self {
        let p = self.cols;
        let mut out = Self::zeros(p, p);
        for r in self.iter_rows() {
            for (i, &ri) in r.iter().enumerate() {
                if ri == T::zero() {
                    continue;
                }
                axpy(ri, &r[i..], &mut out.data[i * p + i..(i + 1) * p]);
            }
        }
        for i in 0..p {
            for j in 0..i {
                out.data[i * p + j] = out.data[j * p + i];
            }
        }
        out
    }

    /// Per-column arithmetic mean.
    pub fn column_means(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.cols];
        for r in self.iter_rows() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a = *a + v;
            }
        }
        let n = T::from_usize(self.rows.max(1)).unwrap();
        acc.iter_mut().for_each(|a| *a = *a / n);
        acc
    }

    /// Subtracts `v` from every row.
    pub fn sub_row_broadcast(&mut self, v: &[T]) {
        assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for (x, &m) in self.row_mut(i).iter_mut().zip(v) {
                *x = *x - m;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Flips the sign of `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn canonicalize_sign<T: Real>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign_negative = false;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign_negative = x < T::zero();
        }
    }
    if sign_negative {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Eigenvalues are sorted nonincreasing. When requested, `vectors` holds the
/// unit-norm eigenvectors as rows, in the same order, sign-canonicalized.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Option<Matrix<T>>,
}

impl<T: Real> SymmetricEigen<T> {
    pub fn new(a: &Matrix<T>, want_vectors: bool) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::Shape(format!(
                "eigendecomposition needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidArgument(
                "matrix contains non-finite entries".into(),
            ));
        }
        if n == 0 {
            return Ok(Self {
                values: vec![],
                vectors: want_vectors.then(|| Matrix::zeros(0, 0)),
            });
        }
        // Working storage holds the transpose of the classic column layout so
        // that every inner loop below walks contiguous memory: vt[j*n + k] is
        // component k of vector j.
        let mut vt = a.transpose().into_vec();
        let mut d = vec![T::zero(); n];
        let mut e = vec![T::zero(); n];
        tridiagonalize(n, &mut vt, &mut d, &mut e);
        ql_implicit(n, &mut d, &mut e, want_vectors.then_some(&mut vt[..]))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
        let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
        let vectors = want_vectors.then(|| {
            let mut out = Matrix::zeros(n, n);
            for (r, &i) in order.iter().enumerate() {
                let row = out.row_mut(r);
                row.copy_from_slice(&vt[i * n..(i + 1) * n]);
                canonicalize_sign(row);
            }
            out
        });
        Ok(Self { values, vectors })
    }
}

/// Householder reduction to tridiagonal form. On exit `d` is the diagonal,
/// `e[1..]` the subdiagonal, and `vt` the accumulated orthogonal transform.
fn tridiagonalize<T: Real>(n: usize, vt: &mut [T], d: &mut [T], e: &mut [T]) {
    // v(r, c) == vt[c * n + r]
    macro_rules! v {
        ($r:expr, $c:expr) => {
            vt[($c) * n + ($r)]
        };
    }
    for j in 0..n {
        d[j] = v!(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale = scale + d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v!(i - 1, j);
                v!(i, j) = T::zero();
                v!(j, i) = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v!(j, i) = f;
                g = e[j] + v!(j, j) * f;
                for k in j + 1..i {
                    g = g + v!(k, j) * d[k];
                    e[k] = e[k] + v!(k, j) * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v!(k, j) = v!(k, j) - (f * e[k] + g * d[k]);
                }
                d[j] = v!(i - 1, j);
                v!(i, j) = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v!(n - 1, i) = v!(i, i);
        v!(i, i) = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v!(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v!(k, i + 1) * v!(k, j);
                }
                for k in 0..=i {
                    v!(k, j) = v!(k, j) - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v!(k, i + 1) = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v!(n - 1, j);
        v!(n - 1, j) = T::zero();
    }
    v!(n - 1, n - 1) = T::one();
    e[0] = T::zero();
}

/// Implicit QL iterations on the symmetric tridiagonal matrix (d, e).
/// Eigenvectors are accumulated into `vt` when provided.
fn ql_implicit<T: Real>(
    n: usize,
    d: &mut [T],
    e: &mut [T],
    mut vt: Option<&mut [T]>,
) -> Result<()> {
    const MAX_SWEEPS: usize = 60;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    let two = T::lit(2.0);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(Error::Singular(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
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
                    if let Some(vt) = vt.as_deref_mut() {
                        let (lo, hi) = vt.split_at_mut((i + 1) * n);
                        let vi = &mut lo[i * n..];
                        let vi1 = &mut hi[..n];
                        for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                            let hk = *b;
                            *b = s * *a + c * hk;
                            *a = c * *a - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Leading principal axes of row-centered data.
///
/// `values` has one entry per column (nonincreasing, tiny negatives clamped
/// to zero) and is the spectrum of `XᵀX` (no division by the row count).
/// `axes` holds the first `k` unit-norm axes as rows.
#[derive(Clone, Debug)]
pub struct PrincipalAxes<T> {
    pub values: Vec<T>,
    pub axes: Matrix<T>,
}

/// Route used to obtain principal axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxesRoute {
    /// Eigendecomposition of the `p x p` scatter matrix `XᵀX`.
    Covariance,
    /// Eigendecomposition of the `n x n` Gram matrix `XXᵀ`, mapped back through `Xᵀ`.
    Gram,
    /// Whichever of the two is smaller.
    Auto,
}

pub fn principal_axes<T: Real>(
    centered: &Matrix<T>,
    k: usize,
    route: AxesRoute,
) -> Result<PrincipalAxes<T>> {
    let (n, p) = (centered.rows(), centered.cols());
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!(
            "component count {k} outside 1..={p}"
        )));
    }
    let use_gram = match route {
        AxesRoute::Covariance => false,
        AxesRoute::Gram => true,
        AxesRoute::Auto => n < p,
    };
    let (mut values, axes) = if use_gram {
        let g = centered.matmul_transposed(centered)?;
        let eig = SymmetricEigen::new(&g, true)?;
        let u = eig.vectors.expect("vectors requested");
        let scale = eig.values.first().copied().unwrap_or(T::zero()).max(T::zero());
        let tol = scale * T::from_usize(n.max(p)).unwrap() * T::epsilon() * T::lit(16.0);
        let mut axes = Matrix::zeros(k, p);
        let mut filled = 0;
        for (q, &lambda) in eig.values.iter().enumerate().take(k.min(n)) {
            if lambda <= tol {
                break;
            }
            let row = axes.row_mut(q);
            for (i, &ui) in u.row(q).iter().enumerate() {
                if ui != T::zero() {
                    axpy(ui, centered.row(i), row);
                }
            }
            let inv = T::one() / lambda.sqrt();
            row.iter_mut().for_each(|x| *x = *x * inv);
            canonicalize_sign(row);
            filled += 1;
        }
        complete_orthonormal(&mut axes, filled);
        let mut values = eig.values;
        values.resize(p, T::zero());
        (values, axes)
    } else {
        let r = centered.gram();
        let eig = SymmetricEigen::new(&r, true)?;
        let v = eig.vectors.expect("vectors requested");
        let axes = v.select_rows(&(0..k).collect::<Vec<_>>());
        (eig.values, axes)
    };
    clamp_negative_roundoff(&mut values);
    Ok(PrincipalAxes { values, axes })
}

/// Zeroes eigenvalues that are negative only through symmetric round-off.
pub fn clamp_negative_roundoff<T: Real>(values: &mut [T]) {
    let top = values.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let tol = T::lit(1e-9).max(top * T::from_usize(values.len().max(1)).unwrap() * T::epsilon());
    for x in values.iter_mut() {
        if *x < T::zero() && *x > -tol {
            *x = T::zero();
        }
    }
}

/// Fills rows `filled..` of `basis` with unit vectors orthogonal to all previous rows
/// (Gram-Schmidt against the standard basis).
fn complete_orthonormal<T: Real>(basis: &mut Matrix<T>, filled: usize) {
    let p = basis.cols();
    let mut next = filled;
    let mut candidate = 0;
    while next < basis.rows() && candidate < p {
        let mut v = vec![T::zero(); p];
        v[candidate] = T::one();
        candidate += 1;
        for _ in 0..2 {
            for r in 0..next {
                let proj = dot(basis.row(r), &v);
                axpy(-proj, basis.row(r), &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < T::lit(1e-6) {
            continue;
        }
        v.iter_mut().for_each(|x| *x = *x / norm);
        canonicalize_sign(&mut v);
        basis.row_mut(next).copy_from_slice(&v);
        next += 1;
    }
}

/// Householder QR factorization of a tall matrix (rows ≥ cols).
#[derive(Clone, Debug)]
pub struct Qr<T> {
    /// Householder vectors below the diagonal, R on and above it.
    packed: Matrix<T>,
    r_diag: Vec<T>,
}

impl<T: Real> Qr<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        if m < n {
            return Err(Error::Shape(format!(
                "QR least squares needs rows >= cols, got {m}x{n}"
            )));
        }
        let mut qr = a.clone();
        let mut r_diag = vec![T::zero(); n];
        for k in 0..n {
            let mut nrm = T::zero();
            for i in k..m {
                nrm = nrm.hypot(qr[(i, k)]);
            }
            if nrm != T::zero() {
                if qr[(k, k)] < T::zero() {
                    nrm = -nrm;
                }
                for i in k..m {
                    qr[(i, k)] = qr[(i, k)] / nrm;
                }
                qr[(k, k)] = qr[(k, k)] + T::one();
                for j in k + 1..n {
                    let mut s = T::zero();
                    for i in k..m {
                        s = s + qr[(i, k)] * qr[(i, j)];
                    }
                    s = -s / qr[(k, k)];
                    for i in k..m {
                        qr[(i, j)] = qr[(i, j)] + s * qr[(i, k)];
                    }
                }
            }
            r_diag[k] = -nrm;
        }
        Ok(Self { packed: qr, r_diag })
    }

    /// True when every |R_kk| exceeds a relative tolerance.
    pub fn is_full_rank(&self) -> bool {
        let top = self.r_diag.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        let tol = top * T::from_usize(self.packed.rows()).unwrap() * T::epsilon() * T::lit(100.0);
        top > T::zero() && self.r_diag.iter().all(|x| x.abs() > tol)
    }

    /// Least-squares solution of `A x = b` for each column of `b`.
    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let (m, n) = (self.packed.rows(), self.packed.cols());
        if b.rows() != m {
            return Err(Error::Shape(format!(
                "right-hand side has {} rows, expected {m}",
                b.rows()
            )));
        }
        if !self.is_full_rank() {
            return Err(Error::Singular("design matrix is rank deficient".into()));
        }
        let nx = b.cols();
        let mut x = b.clone();
        for k in 0..n {
            for j in 0..nx {
                let mut s = T::zero();
                for i in k..m {
                    s = s + self.packed[(i, k)] * x[(i, j)];
                }
                s = -s / self.packed[(k, k)];
                for i in k..m {
                    x[(i, j)] = x[(i, j)] + s * self.packed[(i, k)];
                }
            }
        }
        for k in (0..n).rev() {
            for j in 0..nx {
                x[(k, j)] = x[(k, j)] / self.r_diag[k];
            }
            for i in 0..k {
                for j in 0..nx {
                    x[(i, j)] = x[(i, j)] - x[(k, j)] * self.packed[(i, k)];
                }
            }
        }
        Ok(x.select_rows(&(0..n).collect::<Vec<_>>()))
    }

    /// Diagonal of `(AᵀA)⁻¹ = R⁻¹R⁻ᵀ`.
    pub fn inverse_gram_diagonal(&self) -> Result<Vec<T>> {
        let n = self.packed.cols();
        if !self.is_full_rank() {
            return Err(Error::Singular("design matrix is rank deficient".into()));
        }
        let r = |i: usize, j: usize| -> T {
            if i == j {
                self.r_diag[i]
            } else {
                self.packed[(i, j)]
            }
        };
        // Rinv is upper triangular; diag((AᵀA)⁻¹)_i = Σ_j Rinv[i][j]².
        let mut rinv = Matrix::<T>::zeros(n, n);
        for j in 0..n {
            rinv[(j, j)] = T::one() / r(j, j);
            for i in (0..j).rev() {
                let mut s = T::zero();
                for k in i + 1..=j {
                    s = s + r(i, k) * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / r(i, i);
            }
        }
        Ok((0..n).map(|i| dot(rinv.row(i), rinv.row(i))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let x = random(12, 7, 1);
        let a = x.gram();
        let eig = SymmetricEigen::new(&a, true).unwrap();
        let v = eig.vectors.unwrap();
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // V diag(λ) Vᵀ == A
        let mut rebuilt = Matrix::zeros(7, 7);
        for q in 0..7 {
            for i in 0..7 {
                for j in 0..7 {
                    rebuilt[(i, j)] += eig.values[q] * v[(q, i)] * v[(q, j)];
                }
            }
        }
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        let vvt = v.matmul_transposed(&v).unwrap();
        assert!(vvt.max_abs_diff(&Matrix::identity(7)) < 1e-12);
    }

    #[test]
    fn eigen_values_only_match_full() {
        let a = random(20, 9, 2).gram();
        let full = SymmetricEigen::new(&a, true).unwrap();
        let vals = SymmetricEigen::new(&a, false).unwrap();
        assert!(vals.vectors.is_none());
        for (x, y) in full.values.iter().zip(&vals.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_of_diagonal_and_trivial_sizes() {
        let mut a = Matrix::<f64>::zeros(3, 3);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 3.0;
        a[(2, 2)] = 2.0;
        let eig = SymmetricEigen::new(&a, true).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        let one = Matrix::from_vec(1, 1, vec![5.0]).unwrap();
        assert_eq!(SymmetricEigen::new(&one, true).unwrap().values, vec![5.0]);
        assert!(SymmetricEigen::new(&Matrix::<f64>::zeros(2, 3), false).is_err());
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        let mut x = random(5, 9, 3);
        let m = x.column_means();
        x.sub_row_broadcast(&m);
        let a = principal_axes(&x, 3, AxesRoute::Covariance).unwrap();
        let b = principal_axes(&x, 3, AxesRoute::Gram).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
        assert!(a.axes.max_abs_diff(&b.axes) < 1e-9);
    }

    #[test]
    fn gram_route_completes_rank_deficient_basis() {
        // Three identical rows: centered data is all zero.
        let x = Matrix::<f64>::zeros(3, 4);
        let pa = principal_axes(&x, 2, AxesRoute::Gram).unwrap();
        let g = pa.axes.matmul_transposed(&pa.axes).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(2)) < 1e-12);
        assert!(pa.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn qr_solves_overdetermined_system() {
        let a = random(10, 3, 4);
        let truth = Matrix::from_vec(3, 1, vec![1.5, -2.0, 0.25]).unwrap();
        let b = a.matmul(&truth).unwrap();
        let qr = Qr::new(&a).unwrap();
        let x = qr.solve(&b).unwrap();
        assert!(x.max_abs_diff(&truth) < 1e-12);
    }

    #[test]
    fn qr_rejects_rank_deficiency() {
        let mut a = random(6, 3, 5);
        for i in 0..6 {
            a[(i, 2)] = 2.0 * a[(i, 0)];
        }
        let qr = Qr::new(&a).unwrap();
        assert!(!qr.is_full_rank());
        assert!(matches!(
            qr.solve(&Matrix::zeros(6, 1)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn canonical_sign_makes_largest_entry_positive() {
        let mut v = vec![0.1, -0.9, 0.3];
        canonicalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }
}
