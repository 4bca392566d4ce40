//! Numerical linear algebra helpers: rank/kernel with a relative singular
//! value cutoff, subspace geometry, indefinite inner products, and Gaussian
//! elimination generic over a scalar type (so systems can be solved over
//! jets as well as over `f64`).

use crate::jet::Jet3;
use nalgebra::{DMatrix, DVector};

/// Singular-value cutoff shared by all rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Effective cutoff: relative to the largest singular value but never below
/// `tol` itself, so matrices that are zero to machine precision do not get
/// spurious full rank.
fn sv_cutoff(smax: f64, tol: f64) -> f64 {
    tol * smax.max(1.0)
}

/// Thin singular value decomposition `m = u * diag(sigma) * v^T` with
/// `k = min(nrows, ncols)` columns in `u` and `v` and `sigma` sorted in
/// decreasing order. Both factors always have orthonormal columns: columns
/// belonging to (numerically) zero singular values are completed
/// orthonormally rather than left as noise.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi singular value decomposition. Slower than a bidiagonal
/// QR iteration but unconditionally backward stable, which matters here:
/// rank decisions, kernels, and least-squares solves all route through this.
pub fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    if m.nrows() < m.ncols() {
        let t = thin_svd(&m.transpose());
        return ThinSvd { u: t.v, sigma: t.sigma, v: t.u };
    }
    let (r, c) = (m.nrows(), m.ncols());
    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(c, c);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..c {
            for j in (i + 1)..c {
                let wi = w.column(i).into_owned();
                let wj = w.column(j).into_owned();
                let alpha = wi.dot(&wi);
                let beta = wj.dot(&wj);
                let gamma = wi.dot(&wj);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for row in 0..r {
                    let a = w[(row, i)];
                    let b = w[(row, j)];
                    w[(row, i)] = cs * a - sn * b;
                    w[(row, j)] = sn * a + cs * b;
                }
                for row in 0..c {
                    let a = v[(row, i)];
                    let b = v[(row, j)];
                    v[(row, i)] = cs * a - sn * b;
                    v[(row, j)] = sn * a + cs * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..c).collect();
    let norms: Vec<f64> = (0..c).map(|i| w.column(i).norm()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap());
    let mut u = DMatrix::zeros(r, c);
    let mut vv = DMatrix::zeros(c, c);
    let mut sigma = DVector::zeros(c);
    for (slot, &i) in order.iter().enumerate() {
        sigma[slot] = norms[i];
        vv.set_column(slot, &v.column(i));
        if norms[i] > 0.0 {
            u.set_column(slot, &(w.column(i) / norms[i]));
        }
    }
    // Left columns for vanishing singular values are dominated by rounding
    // noise after normalization; replace them with an orthonormal completion
    // so every column of `u` can be trusted.
    let reliable = sigma.iter().filter(|&&s| s > 1e-14 * sigma.max()).count();
    if reliable < c {
        let q = u.columns(0, reliable).into_owned();
        let comp = gs_complement(&q, r, c - reliable);
        for slot in reliable..c {
            u.set_column(slot, &comp.column(slot - reliable));
        }
    }
    ThinSvd { u, sigma, v: vv }
}

/// Minimum-norm least-squares solution of `a x = b`, truncating singular
/// values below `tol` relative to the largest.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> DVector<f64> {
    let svd = thin_svd(a);
    let cut = tol * svd.sigma.max();
    let mut x = DVector::zeros(a.ncols());
    for k in 0..svd.sigma.len() {
        if svd.sigma[k] > cut {
            let coeff = svd.u.column(k).dot(b) / svd.sigma[k];
            x += coeff * svd.v.column(k);
        }
    }
    x
}

/// Rank of `m` with singular values below the cutoff treated as zero.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = thin_svd(m).sigma;
    let cut = sv_cutoff(sv.max(), tol);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Greedy orthonormal completion: extend the orthonormal columns of `q`
/// (possibly none) to a basis of `R^dim` and return only the new vectors.
fn gs_complement(q: &DMatrix<f64>, dim: usize, count: usize) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let start = basis.len();
    let wanted = count.min(dim.saturating_sub(start));
    while basis.len() < start + wanted {
        // Pick the coordinate direction with the largest residual so the new
        // vector is never nearly dependent on the current basis. Against an
        // orthonormal basis the residual norm of `e_seed` is
        // sqrt(1 - sum_k basis[k][seed]^2), which avoids forming every
        // candidate explicitly.
        let seed = (0..dim)
            .map(|s| {
                let proj: f64 = basis.iter().map(|b| b[s] * b[s]).sum();
                (s, 1.0 - proj)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        let mut v: DVector<f64> = DVector::zeros(dim);
        v[seed] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v -= d * b;
            }
        }
        let nrm = v.norm();
        basis.push(v / nrm);
    }
    if basis.len() == start {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&basis[start..])
    }
}

/// Orthonormal basis of the (right) null space of `m`, as matrix columns.
pub fn kernel(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let ncols = m.ncols();
    if m.nrows() == 0 || ncols == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    let svd = thin_svd(m);
    let cut = sv_cutoff(svd.sigma.max(), tol);
    let r = svd.sigma.iter().filter(|&&s| s > cut).count();
    // Right-singular vectors past the rank span the kernel; when nrows <
    // ncols the thin factor has fewer than ncols columns and is completed to
    // a full orthonormal basis.
    let mut cols: Vec<DVector<f64>> =
        (r..svd.v.ncols()).map(|i| svd.v.column(i).into_owned()).collect();
    if svd.v.ncols() < ncols {
        cols.extend(
            gs_complement(&svd.v, ncols, ncols - svd.v.ncols())
                .column_iter()
                .map(|c| c.into_owned()),
        );
    }
    if cols.is_empty() {
        DMatrix::zeros(ncols, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column span of `m`.
pub fn column_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = thin_svd(m);
    let cut = sv_cutoff(svd.sigma.max(), tol);
    let r = svd.sigma.iter().filter(|&&s| s > cut).count();
    svd.u.columns(0, r).into_owned()
}

/// Orthonormal basis of the orthogonal complement of the column span of `m`.
pub fn orthonormal_complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let q = column_space(m, RANK_TOL);
    gs_complement(&q, m.nrows(), m.nrows() - q.ncols())
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
/// Returns `None` when the spans have different dimensions.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Option<f64> {
    let qa = column_space(a, tol);
    let qb = column_space(b, tol);
    if qa.ncols() != qb.ncols() {
        return None;
    }
    if qa.ncols() == 0 {
        return Some(0.0);
    }
    let sv = thin_svd(&(qa.transpose() * qb)).sigma;
    let c = sv.min().clamp(-1.0, 1.0);
    Some(c.acos())
}

/// Diagonal of an indefinite ambient inner product: `signs[i]` multiplies the
/// `i`-th coordinate in `<u, v> = sum_i signs[i] u_i v_i`.
#[derive(Debug, Clone)]
pub struct Signature(pub Vec<f64>);

impl Signature {
    pub fn euclidean(dim: usize) -> Signature {
        Signature(vec![1.0; dim])
    }

    /// `neg` leading timelike coordinates, rest spacelike.
    pub fn with_timelike(dim: usize, neg: usize) -> Signature {
        let mut s = vec![1.0; dim];
        for v in s.iter_mut().take(neg) {
            *v = -1.0;
        }
        Signature(s)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.iter().zip(v.iter()).zip(&self.0).map(|((a, b), s)| s * a * b).sum()
    }

    /// Gram matrix of the columns of `m` in this inner product.
    pub fn gram(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = m.clone();
        for (mut row, s) in scaled.row_iter_mut().zip(&self.0) {
            row *= *s;
        }
        m.transpose() * scaled
    }
}

/// Orthonormal basis of `S ∩ S^⊥` where `S` is the column span of `basis`
/// and orthogonality is with respect to the symmetric bilinear form whose
/// Gram matrix on that basis is `gram`. Computed as `basis * ker(gram)`.
pub fn isotropic_intersection(basis: &DMatrix<f64>, gram: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let k = kernel(gram, tol);
    column_space(&(basis * k), tol)
}

/// Scalar abstraction letting Gaussian elimination run either over plain
/// floats or over truncated Taylor jets (pivoting always on the value part).
pub trait Scalar: Clone {
    fn s_zero(&self) -> Self;
    fn s_one(&self) -> Self;
    fn s_add(&self, o: &Self) -> Self;
    fn s_sub(&self, o: &Self) -> Self;
    fn s_mul(&self, o: &Self) -> Self;
    fn s_div(&self, o: &Self) -> Self;
    fn s_neg(&self) -> Self;
    fn s_sqrt(&self) -> Self;
    fn val(&self) -> f64;
}

impl Scalar for f64 {
    fn s_zero(&self) -> f64 {
        0.0
    }
    fn s_one(&self) -> f64 {
        1.0
    }
    fn s_add(&self, o: &f64) -> f64 {
        self + o
    }
    fn s_sub(&self, o: &f64) -> f64 {
        self - o
    }
    fn s_mul(&self, o: &f64) -> f64 {
        self * o
    }
    fn s_div(&self, o: &f64) -> f64 {
        self / o
    }
    fn s_neg(&self) -> f64 {
        -self
    }
    fn s_sqrt(&self) -> f64 {
        self.sqrt()
    }
    fn val(&self) -> f64 {
        *self
    }
}

impl Scalar for Jet3 {
    fn s_zero(&self) -> Jet3 {
        Jet3::constant(self.n, self.order, 0.0)
    }
    fn s_one(&self) -> Jet3 {
        Jet3::constant(self.n, self.order, 1.0)
    }
    fn s_add(&self, o: &Jet3) -> Jet3 {
        self.add(o)
    }
    fn s_sub(&self, o: &Jet3) -> Jet3 {
        self.sub(o)
    }
    fn s_mul(&self, o: &Jet3) -> Jet3 {
        self.mul(o)
    }
    fn s_div(&self, o: &Jet3) -> Jet3 {
        self.div(o)
    }
    fn s_neg(&self) -> Jet3 {
        self.neg()
    }
    fn s_sqrt(&self) -> Jet3 {
        self.sqrt_jet()
    }
    fn val(&self) -> f64 {
        self.value
    }
}

/// Dense square matrix over a generic scalar, row-major.
#[derive(Debug, Clone)]
pub struct GMatrix<S> {
    pub n: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> GMatrix<S> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> S) -> GMatrix<S> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        GMatrix { n, data }
    }

    pub fn at(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.n + j]
    }

    /// Inverse via Gauss–Jordan elimination with partial pivoting on value
    /// parts. Panics if the value-part matrix is singular to working
    /// precision.
    pub fn inverse(&self) -> GMatrix<S> {
        let n = self.n;
        let zero = self.data[0].s_zero();
        let one = self.data[0].s_one();
        let mut a = self.data.clone();
        let mut inv: Vec<S> = (0..n * n)
            .map(|k| if k / n == k % n { one.clone() } else { zero.clone() })
            .collect();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r, &s| {
                    a[r * n + col]
                        .val()
                        .abs()
                        .partial_cmp(&a[s * n + col].val().abs())
                        .unwrap()
                })
                .unwrap();
            assert!(
                a[pivot_row * n + col].val().abs() > 1e-13,
                "singular matrix in generic inversion"
            );
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                    inv.swap(col * n + j, pivot_row * n + j);
                }
            }
            let piv = a[col * n + col].clone();
            for j in 0..n {
                a[col * n + j] = a[col * n + j].s_div(&piv);
                inv[col * n + j] = inv[col * n + j].s_div(&piv);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a[r * n + col].clone();
                if factor.val() == 0.0 && factor.val().abs() == 0.0 {
                    // Still eliminate: jets can have zero value but nonzero
                    // derivatives.
                }
                for j in 0..n {
                    let t = factor.s_mul(&a[col * n + j]);
                    a[r * n + j] = a[r * n + j].s_sub(&t);
                    let t = factor.s_mul(&inv[col * n + j]);
                    inv[r * n + j] = inv[r * n + j].s_sub(&t);
                }
            }
        }
        GMatrix { n, data: inv }
    }
}
