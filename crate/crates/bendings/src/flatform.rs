//! Bilinear forms with values in an indefinite inner-product space:
//! flatness, regular elements, the containment lemma for kernels of regular
//! elements, the isotropic/complement decomposition of symmetric flat forms,
//! and the forms `theta` / `theta-hat` / isotropic normal pairs built from a
//! bending frame.

use crate::bending::BendingFrame;
use crate::geometry::Frame;
use crate::linalg::{
    column_space, isotropic_intersection, kernel, lstsq, rank, Signature, RANK_TOL,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bilinear form `V x U -> W` tabulated on bases, where `W` carries the
/// diagonal (possibly indefinite) inner product `signature`.
#[derive(Debug, Clone)]
pub struct FormTable {
    pub v_dim: usize,
    pub u_dim: usize,
    pub signature: Signature,
    /// Entry `(i, j)` at index `i * u_dim + j`.
    pub entries: Vec<DVector<f64>>,
    pub symmetric: bool,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum FlatFormError {
    #[error("form is not flat: residual {0:.3e}")]
    NotFlat(f64),
    #[error("nullity {nullity} exceeds the decomposition hypothesis bound {bound}")]
    NullityTooLarge { nullity: usize, bound: usize },
    #[error("flat form with nullity within bounds has no isotropic direction; this contradicts the decomposition guarantee")]
    NoIsotropicDirection,
}

impl FormTable {
    pub fn new(
        v_dim: usize,
        u_dim: usize,
        signature: Signature,
        entries: Vec<DVector<f64>>,
        symmetric: bool,
    ) -> FormTable {
        assert_eq!(entries.len(), v_dim * u_dim);
        if symmetric {
            assert_eq!(v_dim, u_dim);
        }
        FormTable { v_dim, u_dim, signature, entries, symmetric }
    }

    pub fn w_dim(&self) -> usize {
        self.signature.dim()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.entries[i * self.u_dim + j]
    }

    /// Value on arbitrary coefficient vectors.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.w_dim());
        for i in 0..self.v_dim {
            for j in 0..self.u_dim {
                out += x[i] * y[j] * self.at(i, j);
            }
        }
        out
    }

    /// Matrix of the partial map `B_x : U -> W` with columns `B(x, e_j)`.
    pub fn partial_map(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.w_dim(), self.u_dim);
        for j in 0..self.u_dim {
            let mut col = DVector::zeros(self.w_dim());
            for i in 0..self.v_dim {
                col += x[i] * self.at(i, j);
            }
            m.set_column(j, &col);
        }
        m
    }

    /// Max over basis quadruples of `|<B(X,Z),B(Y,W)> - <B(X,W),B(Y,Z)>|`.
    pub fn flatness_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.v_dim {
            for y in 0..self.v_dim {
                for z in 0..self.u_dim {
                    for w in 0..self.u_dim {
                        let v = self.signature.inner(self.at(x, z), self.at(y, w))
                            - self.signature.inner(self.at(x, w), self.at(y, z));
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
        worst
    }

    /// Left nullity: orthonormal basis of `{X in V : B(X, .) = 0}`.
    pub fn left_nullity_basis(&self, tol: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.u_dim * self.w_dim(), self.v_dim);
        for i in 0..self.v_dim {
            for j in 0..self.u_dim {
                for a in 0..self.w_dim() {
                    m[(j * self.w_dim() + a, i)] = self.at(i, j)[a];
                }
            }
        }
        kernel(&m, tol)
    }

    /// Orthonormal basis of the span of all values `B(e_i, e_j)` in `W`.
    pub fn value_span(&self, tol: f64) -> DMatrix<f64> {
        if self.entries.is_empty() {
            return DMatrix::zeros(self.w_dim(), 0);
        }
        let m = DMatrix::from_columns(&self.entries);
        column_space(&m, tol)
    }
}

/// Outcome of the randomized search for a regular element.
#[derive(Debug, Clone)]
pub struct RegularElement {
    pub y: DVector<f64>,
    pub rank: usize,
    /// Orthonormal basis of `ker B_Y` in `U` coordinates.
    pub kernel: DMatrix<f64>,
}

/// Search for a left regular element: rank of `B_Y` is maximized over all
/// basis vectors of `V` plus `trials` seeded pseudo-random unit directions.
pub fn regular_element_search(form: &FormTable, trials: usize, seed: u64) -> RegularElement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<DVector<f64>> = (0..form.v_dim)
        .map(|i| DVector::from_fn(form.v_dim, |k, _| if k == i { 1.0 } else { 0.0 }))
        .collect();
    for _ in 0..trials {
        let mut v = DVector::from_fn(form.v_dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-12 {
            v /= n;
        }
        candidates.push(v);
    }
    let mut best: Option<RegularElement> = None;
    for y in candidates {
        let m = form.partial_map(&y);
        let r = rank(&m, RANK_TOL);
        if best.as_ref().map_or(true, |b| r > b.rank) {
            let k = kernel(&m, RANK_TOL);
            best = Some(RegularElement { y, rank: r, kernel: k });
        }
    }
    best.unwrap()
}

/// Residual of the containment `B(V, ker B_Y) ⊂ B_Y(U) ∩ B_Y(U)^⊥` for a
/// flat form and a regular element: max Euclidean distance of the tested
/// values to the subspace.
pub fn moore_containment_check(
    form: &FormTable,
    reg: &RegularElement,
    tol: f64,
) -> Result<f64, FlatFormError> {
    let flat = form.flatness_residual();
    if flat > tol {
        return Err(FlatFormError::NotFlat(flat));
    }
    let image = column_space(&form.partial_map(&reg.y), RANK_TOL);
    let gram = form.signature.gram(&image);
    let target = isotropic_intersection(&image, &gram, RANK_TOL);
    let mut worst: f64 = 0.0;
    for i in 0..form.v_dim {
        let x = DVector::from_fn(form.v_dim, |k, _| if k == i { 1.0 } else { 0.0 });
        for kcol in 0..reg.kernel.ncols() {
            let v = form.eval(&x, &reg.kernel.column(kcol).into_owned());
            // Euclidean distance to the span of `target` (orthonormal cols).
            let res = &v - &target * (target.transpose() * &v);
            worst = worst.max(res.norm());
        }
    }
    Ok(worst)
}

/// Decomposition of a symmetric flat form into an isotropic-valued part and
/// a flat remainder with large nullity.
#[derive(Debug, Clone)]
pub struct MainDecomposition {
    pub ell: usize,
    /// Isotropic directions `s_1..s_ell` spanning `S(B) ∩ S(B)^⊥`.
    pub w1_s: Vec<DVector<f64>>,
    /// Dual isotropic partners `u_1..u_ell` with `<u_i, s_j> = delta_ij`,
    /// `<u_i, u_j> = 0`.
    pub w1_u: Vec<DVector<f64>>,
    /// Orthonormal basis of the orthogonal complement `W_2` of `W_1`.
    pub w2: DMatrix<f64>,
    pub b1: FormTable,
    pub b2: FormTable,
    pub isotropy_residual: f64,
    pub b2_flatness_residual: f64,
    pub reassembly_residual: f64,
    pub b2_nullity: usize,
    pub nullity_bound: usize,
    /// True when the ambient signature is outside the range for which the
    /// decomposition is guaranteed to exist (positive index >= 6).
    pub outside_guarantee: bool,
}

/// Decompose a symmetric flat form `B : V x V -> W^{p,q}` as `B1 + B2` where
/// `B1` takes values in a totally isotropic pairing subspace `W_1` built over
/// `S(B) ∩ S(B)^⊥` and `B2` is flat with nullity at least `n - p - q + 2l`.
pub fn main_decomposition(
    form: &FormTable,
    flat_tol: f64,
) -> Result<MainDecomposition, FlatFormError> {
    assert!(form.symmetric, "decomposition requires a symmetric form");
    let n = form.v_dim;
    let sig = &form.signature;
    let (p, q) = (
        sig.0.iter().filter(|&&s| s > 0.0).count(),
        sig.0.iter().filter(|&&s| s < 0.0).count(),
    );
    let flat = form.flatness_residual();
    if flat > flat_tol {
        return Err(FlatFormError::NotFlat(flat));
    }
    let nullity = form.left_nullity_basis(RANK_TOL).ncols();
    if p + q + 1 > n || nullity > n - p - q - 1 {
        return Err(FlatFormError::NullityTooLarge {
            nullity,
            bound: n.saturating_sub(p + q + 1),
        });
    }
    let span = form.value_span(RANK_TOL);
    let gram = sig.gram(&span);
    let iso = isotropic_intersection(&span, &gram, RANK_TOL);
    let ell = iso.ncols();
    if ell == 0 {
        return Err(FlatFormError::NoIsotropicDirection);
    }
    let s: Vec<DVector<f64>> = iso.column_iter().map(|c| c.into_owned()).collect();

    // Dual isotropic partners: first any v_i with <v_i, s_j> = delta_ij,
    // then correct with multiples of the s_j (which changes no pairing with
    // the s's) so that all mutual products among the u's vanish.
    let w = form.w_dim();
    let mut srows = DMatrix::zeros(ell, w);
    for (i, si) in s.iter().enumerate() {
        for a in 0..w {
            srows[(i, a)] = sig.0[a] * si[a];
        }
    }
    let mut u: Vec<DVector<f64>> = Vec::with_capacity(ell);
    for i in 0..ell {
        let e = DVector::from_fn(ell, |k, _| if k == i { 1.0 } else { 0.0 });
        let mut ui = lstsq(&srows, &e, 1e-12);
        for (k, uk) in u.iter().enumerate() {
            let c = sig.inner(&ui, uk);
            ui -= c * &s[k];
            let _ = k;
        }
        let self_prod = sig.inner(&ui, &ui);
        ui -= 0.5 * self_prod * &s[i];
        u.push(ui);
    }

    // Projection onto W_1 adapted to the signed product:
    // P(v) = sum_i <v, u_i> s_i + <v, s_i> u_i.
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(w);
        for i in 0..ell {
            out += sig.inner(v, &u[i]) * &s[i] + sig.inner(v, &s[i]) * &u[i];
        }
        out
    };

    let b1_entries: Vec<DVector<f64>> = form.entries.iter().map(|v| project(v)).collect();
    let b2_entries: Vec<DVector<f64>> = form
        .entries
        .iter()
        .zip(&b1_entries)
        .map(|(v, v1)| v - v1)
        .collect();
    let b1 = FormTable::new(n, n, sig.clone(), b1_entries, true);
    let b2 = FormTable::new(n, n, sig.clone(), b2_entries, true);

    // W_2: signed-orthogonal complement of W_1.
    let mut w1rows = DMatrix::zeros(2 * ell, w);
    for i in 0..ell {
        for a in 0..w {
            w1rows[(i, a)] = sig.0[a] * s[i][a];
            w1rows[(ell + i, a)] = sig.0[a] * u[i][a];
        }
    }
    let w2 = kernel(&w1rows, RANK_TOL);

    let mut isotropy_residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    isotropy_residual = isotropy_residual
                        .max(sig.inner(b1.at(i, j), b1.at(k, l)).abs());
                }
            }
        }
    }
    let mut reassembly_residual: f64 = 0.0;
    for idx in 0..n * n {
        reassembly_residual = reassembly_residual
            .max((&form.entries[idx] - &b1.entries[idx] - &b2.entries[idx]).amax());
    }
    let b2_flatness_residual = b2.flatness_residual();
    let b2_nullity = b2.left_nullity_basis(RANK_TOL).ncols();
    let nullity_bound = (n + 2 * ell).saturating_sub(p + q);

    Ok(MainDecomposition {
        ell,
        w1_s: s,
        w1_u: u,
        w2,
        b1,
        b2,
        isotropy_residual,
        b2_flatness_residual,
        reassembly_residual,
        b2_nullity,
        nullity_bound,
        outside_guarantee: p >= 6,
    })
}

/// Pointwise data of the form `theta(X,Y) = (alpha+beta, alpha-beta)` with
/// values in two copies of the normal space carrying the split product.
#[derive(Debug, Clone)]
pub struct ThetaData {
    pub form: FormTable,
    /// Orthonormal chart-coordinate basis of the nullity of theta.
    pub delta_star: DMatrix<f64>,
    pub nu_star: usize,
    /// Orthonormal basis of the span of the values.
    pub s_theta: DMatrix<f64>,
    /// Dimension of `S(theta) ∩ S(theta)^⊥`.
    pub iso_dim: usize,
}

fn theta_like(
    p: usize,
    normal_signs: &[f64],
    n: usize,
    alpha: impl Fn(usize, usize) -> DVector<f64>,
    beta: impl Fn(usize, usize) -> DVector<f64>,
) -> ThetaData {
    let mut signs = Vec::with_capacity(2 * p);
    signs.extend(normal_signs.iter().copied());
    signs.extend(normal_signs.iter().map(|s| -s));
    let signature = Signature(signs);
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let a = alpha(i, j);
            let b = beta(i, j);
            let mut v = DVector::zeros(2 * p);
            for k in 0..p {
                v[k] = a[k] + b[k];
                v[p + k] = a[k] - b[k];
            }
            entries.push(v);
        }
    }
    let form = FormTable::new(n, n, signature, entries, true);
    let delta_star = form.left_nullity_basis(RANK_TOL);
    let nu_star = delta_star.ncols();
    let s_theta = form.value_span(RANK_TOL);
    let gram = form.signature.gram(&s_theta);
    let iso_dim = isotropic_intersection(&s_theta, &gram, RANK_TOL).ncols();
    ThetaData { form, delta_star, nu_star, s_theta, iso_dim }
}

/// `theta` over the full normal space.
pub fn build_theta(frame: &Frame, bf: &BendingFrame) -> ThetaData {
    theta_like(
        frame.p,
        &frame.normal_signs,
        frame.n,
        |i, j| frame.alpha_vec(i, j),
        |i, j| bf.beta_vec(i, j),
    )
}

/// `theta` restricted to the first normal space `N_1 = span alpha(.,.)`,
/// using the component of `beta` in `N_1`. Requires a positive-definite
/// normal metric so the Euclidean projection agrees with the metric one.
pub fn build_theta_hat(frame: &Frame, bf: &BendingFrame) -> ThetaData {
    assert!(
        frame.normal_signs.iter().all(|&s| s > 0.0),
        "first normal space projection requires a definite normal metric"
    );
    let n = frame.n;
    let alphas: Vec<DVector<f64>> = (0..n * n).map(|ij| frame.alpha_vec(ij / n, ij % n)).collect();
    let n1 = column_space(&DMatrix::from_columns(&alphas), RANK_TOL);
    let p1 = n1.ncols();
    theta_like(
        p1,
        &vec![1.0; p1],
        n,
        |i, j| n1.transpose() * frame.alpha_vec(i, j),
        |i, j| n1.transpose() * bf.beta_vec(i, j),
    )
}

/// Search for unit vectors `z1, z2` in the normal space with `(z1, z2)`
/// orthogonal (under the split product) to every value of `theta`. Returns
/// `None` when every solution forces one component to vanish.
pub fn isotropic_normal_pair(theta: &ThetaData) -> Option<(DVector<f64>, DVector<f64>)> {
    let p = theta.form.w_dim() / 2;
    // <<(z1,z2), (u,v)>> = <z1,u> - <z2,v>; rows of the constraint matrix.
    let rows = theta.form.entries.len();
    let mut m = DMatrix::zeros(rows, 2 * p);
    for (r, val) in theta.form.entries.iter().enumerate() {
        for k in 0..p {
            m[(r, k)] = theta.form.signature.0[k] * val[k];
            m[(r, p + k)] = theta.form.signature.0[k] * val[p + k];
        }
    }
    let k = kernel(&m, RANK_TOL);
    if k.ncols() == 0 {
        return None;
    }
    // Want v in ker with |v_1| = |v_2| and both nonzero. The difference of
    // squared component norms is a quadratic form on the kernel; mix
    // eigenvectors of opposite (or zero) eigenvalue to cancel it.
    let d = DMatrix::from_fn(2 * p, 2 * p, |i, j| {
        if i != j {
            0.0
        } else if i < p {
            1.0
        } else {
            -1.0
        }
    });
    let qk = k.transpose() * d * &k;
    let eig = nalgebra::SymmetricEigen::new(qk);
    let dim = k.ncols();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    for i in 0..dim {
        let li = eig.eigenvalues[i];
        if li.abs() <= 1e-10 * scale {
            candidates.push(k.clone() * eig.eigenvectors.column(i).into_owned());
            for j in (i + 1)..dim {
                if eig.eigenvalues[j].abs() <= 1e-10 * scale {
                    let v = eig.eigenvectors.column(i) + eig.eigenvectors.column(j);
                    candidates.push(k.clone() * v);
                }
            }
        }
        for j in 0..dim {
            let lj = eig.eigenvalues[j];
            if li > 1e-10 * scale && lj < -1e-10 * scale {
                for sgn in [1.0, -1.0] {
                    let v = eig.eigenvectors.column(i) * (-lj).sqrt()
                        + eig.eigenvectors.column(j) * sgn * li.sqrt();
                    candidates.push(k.clone() * v);
                }
            }
        }
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for c in candidates {
        let n1 = c.rows(0, p).norm();
        let n2 = c.rows(p, p).norm();
        if (n1 - n2).abs() > 1e-7 * n1.max(n2).max(1e-30) {
            continue;
        }
        let quality = n1.min(n2) / c.norm().max(1e-30);
        if best.as_ref().map_or(true, |(qb, _)| quality > *qb) {
            best = Some((quality, c));
        }
    }
    let (quality, v) = best?;
    if quality < 1e-6 {
        return None;
    }
    let z1 = v.rows(0, p).into_owned();
    let z2 = v.rows(p, p).into_owned();
    let s = z1.norm();
    Some((z1 / s, z2 / s))
}

/// Random symmetric flat form generator for tests: a sum of quadratic forms
/// with mutually orthogonal value directions, arbitrary along null
/// directions and rank-one along non-null ones — flat by construction.
pub fn random_flat_symmetric(
    n: usize,
    signature: &Signature,
    directions: &[DVector<f64>],
    rng: &mut ChaCha8Rng,
) -> FormTable {
    let w = signature.dim();
    let mut entries = vec![DVector::zeros(w); n * n];
    for dir in directions {
        let null = signature.inner(dir, dir).abs() < 1e-12;
        let q: DMatrix<f64> = if null {
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            &m + m.transpose()
        } else {
            let phi = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let sgn: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sgn * &phi * phi.transpose()
        };
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] += q[(i, j)] * dir;
            }
        }
    }
    FormTable::new(n, n, signature.clone(), entries, true)
}
