//! Singular extensions and their supporting machinery: detection of the
//! pointwise compatibility condition pairing a unit normal `eta` with a
//! normal field `xi`, the extended tensor `L-bar`, the flat form `varphi`,
//! the one-parameter extension `F = f + t lambda` with its bending
//! identities, ruled-distribution checks, the Riccati equation for the
//! splitting tensor along nullity geodesics, and cone lifts.

use crate::bending::BendingFrame;
use crate::expr::{build, Expr};
use crate::flatform::FormTable;
use crate::geometry::{jet_inner, Frame, GeometryError, ImmersionChart};
use crate::jet::{eval_jet, Jet3};
use crate::linalg::{
    kernel, lstsq, max_principal_angle, orthonormal_complement, rank, GMatrix, Scalar,
    Signature, RANK_TOL,
};
use nalgebra::{DMatrix, DVector};

/// Pointwise solution of `B_eta + A_xi = 0`: a unit normal direction whose
/// `beta`-shape operator is cancelled by the shape operator of an orthogonal
/// normal vector.
#[derive(Debug, Clone)]
pub struct StarSolution {
    /// Unit coefficients of `eta` in the unit normal frame.
    pub eta: DVector<f64>,
    /// Coefficients of `xi`, orthogonal to `eta`.
    pub xi: DVector<f64>,
    /// Max residual entry of `B_eta + A_xi` as lowered symmetric forms.
    pub residual: f64,
}

/// Search the kernel of `(mu, zeta) -> B_mu + A_zeta` for an element with
/// nonzero normal-direction part, then re-solve the orthogonal component.
pub fn solve_condition_star(frame: &Frame, bf: &BendingFrame) -> Option<StarSolution> {
    let n = frame.n;
    let p = frame.p;
    let rows = n * (n + 1) / 2;
    let mut m = DMatrix::zeros(rows, 2 * p);
    let mut r = 0;
    for i in 0..n {
        for j in i..n {
            for a in 0..p {
                m[(r, a)] = frame.normal_signs[a] * bf.beta_at(i, j, a);
                m[(r, p + a)] = frame.normal_signs[a] * frame.alpha_at(i, j, a).value;
            }
            r += 1;
        }
    }
    let k = kernel(&m, RANK_TOL);
    if k.ncols() == 0 {
        return None;
    }
    // Maximize the mu-part over unit kernel elements.
    let top = k.rows(0, p).into_owned();
    let q = top.transpose() * &top;
    let eig = nalgebra::SymmetricEigen::new(q);
    let (imax, lmax) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, l)| (i, *l))?;
    if lmax < 1e-12 {
        return None;
    }
    let v = &k * eig.eigenvectors.column(imax).into_owned();
    let mu = v.rows(0, p).into_owned();
    let eta = &mu / mu.norm();
    // Re-solve A_zeta = -B_eta with zeta orthogonal to eta.
    let eta_mat = DMatrix::from_column_slice(p, 1, eta.as_slice());
    let perp = orthonormal_complement(&eta_mat);
    let mut a = DMatrix::zeros(rows, perp.ncols());
    let mut rhs = DVector::zeros(rows);
    let mut r = 0;
    for i in 0..n {
        for j in i..n {
            for c in 0..perp.ncols() {
                a[(r, c)] = (0..p)
                    .map(|b| frame.normal_signs[b] * perp[(b, c)] * frame.alpha_at(i, j, b).value)
                    .sum();
            }
            rhs[r] = -(0..p)
                .map(|b| frame.normal_signs[b] * eta[b] * bf.beta_at(i, j, b))
                .sum::<f64>();
            r += 1;
        }
    }
    let coef = lstsq(&a, &rhs, 1e-12);
    let xi = &perp * coef;
    let residual = (a * &(perp.transpose() * &xi) - rhs).amax();
    Some(StarSolution { eta, xi, residual })
}

/// Declared analytic fields realizing the compatibility condition: ambient
/// component expressions for `eta` (unit normal) and `xi` (normal,
/// orthogonal to `eta`).
#[derive(Debug, Clone)]
pub struct StarFields {
    pub eta: Vec<Expr>,
    pub xi: Vec<Expr>,
}

/// A tangent-plus-`eta` section `lambda = f_* Z + phi eta` given by chart
/// coefficient expressions.
#[derive(Debug, Clone)]
pub struct LambdaSection {
    pub z: Vec<Expr>,
    pub phi: Expr,
}

/// Jets of the star fields and the extended tensor at one point.
pub struct StarPoint<'a> {
    pub frame: &'a Frame,
    pub bf: &'a BendingFrame<'a>,
    /// Ambient components of `eta` and `xi`, order-2 jets.
    pub eta: Vec<Jet3>,
    pub xi: Vec<Jet3>,
    /// Tangent chart coefficients of `Y` with `<Y,X> = -<LX, eta>`.
    pub y: Vec<Jet3>,
    /// Ambient components of `L-bar eta = f_* Y + xi`, order-1 jets.
    pub lbar_eta: Vec<Jet3>,
    /// Coefficients of `eta` in the unit normal frame and an orthonormal
    /// basis of its complement there (the `R` subbundle).
    pub eta_coef: DVector<f64>,
    pub r_basis: DMatrix<f64>,
}

fn jet_values(v: &[Jet3]) -> DVector<f64> {
    DVector::from_fn(v.len(), |a, _| v[a].value)
}

fn values_inner(sig: &Signature, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    sig.inner(u, v)
}

impl<'a> StarPoint<'a> {
    pub fn new(
        frame: &'a Frame,
        bf: &'a BendingFrame<'a>,
        fields: &StarFields,
    ) -> Result<StarPoint<'a>, GeometryError> {
        assert!(
            frame.normal_signs.iter().all(|&s| s > 0.0),
            "the extension machinery assumes a definite normal metric"
        );
        let x = &frame.point;
        let eta: Vec<Jet3> = fields
            .eta
            .iter()
            .map(|e| eval_jet(e, x, 2))
            .collect::<Result<_, _>>()?;
        let xi: Vec<Jet3> = fields
            .xi
            .iter()
            .map(|e| eval_jet(e, x, 2))
            .collect::<Result<_, _>>()?;
        // Y from g Y = -(<L d_k, eta>)_k, solved over jets.
        let n = frame.n;
        let rhs: Vec<Jet3> = (0..n)
            .map(|k| jet_inner(&frame.signature, &bf.ltan[k], &eta).neg())
            .collect();
        let g_inv = &frame.g_inv;
        let y: Vec<Jet3> = (0..n)
            .map(|l| {
                let mut acc = rhs[0].s_zero();
                for k in 0..n {
                    acc = acc.s_add(&g_inv.at(l, k).s_mul(&rhs[k]));
                }
                acc
            })
            .collect();
        let lbar_eta: Vec<Jet3> = (0..frame.m)
            .map(|a| {
                let mut acc = xi[a].clone();
                for l in 0..n {
                    acc = acc.s_add(&y[l].s_mul(&frame.tangent[l][a]));
                }
                acc
            })
            .collect();
        let p = frame.p;
        let eta_coef = DVector::from_fn(p, |a, _| {
            frame.normal_signs[a] * jet_inner(&frame.signature, &eta, &frame.normal[a]).value
        });
        let eta_mat = DMatrix::from_column_slice(p, 1, eta_coef.as_slice());
        let r_basis = orthonormal_complement(&eta_mat);
        Ok(StarPoint { frame, bf, eta, xi, y, lbar_eta, eta_coef, r_basis })
    }

    /// Normal-frame coefficients of an ambient value vector.
    pub fn normal_coef(&self, v: &DVector<f64>) -> DVector<f64> {
        let fr = self.frame;
        DVector::from_fn(fr.p, |a, _| {
            fr.normal_signs[a]
                * v.iter()
                    .zip(fr.normal[a].iter())
                    .zip(&fr.signature.0)
                    .map(|((x, y), s)| s * x * y.value)
                    .sum::<f64>()
        })
    }

    /// Coordinates in the `R` basis of the `R`-component of an ambient vector.
    pub fn r_project(&self, v: &DVector<f64>) -> DVector<f64> {
        self.r_basis.transpose() * self.normal_coef(v)
    }

    /// `| |eta| - 1 |` plus tangency defects of `eta` and `xi` and `<xi,eta>`.
    pub fn field_residual(&self) -> f64 {
        let fr = self.frame;
        let mut worst =
            (jet_inner(&fr.signature, &self.eta, &self.eta).value - 1.0).abs();
        worst = worst.max(jet_inner(&fr.signature, &self.xi, &self.eta).value.abs());
        for i in 0..fr.n {
            worst = worst
                .max(jet_inner(&fr.signature, &self.eta, &fr.tangent[i]).value.abs())
                .max(jet_inner(&fr.signature, &self.xi, &fr.tangent[i]).value.abs());
        }
        worst
    }

    /// Residual of `<beta(X,Y), eta> + <alpha(X,Y), xi> = 0`.
    pub fn condition_residual(&self) -> f64 {
        let fr = self.frame;
        let xi_coef = self.normal_coef(&jet_values(&self.xi));
        let mut worst: f64 = 0.0;
        for i in 0..fr.n {
            for j in 0..fr.n {
                let v = fr.normal_inner(&self.bf.beta_vec(i, j), &self.eta_coef)
                    + fr.normal_inner(&fr.alpha_vec(i, j), &xi_coef);
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// Residual of the skew relation `<L X, eta> + <f_* X, L-bar eta> = 0`.
    pub fn lbar_skew_residual(&self) -> f64 {
        let fr = self.frame;
        let mut worst: f64 = 0.0;
        for i in 0..fr.n {
            let v = jet_inner(&fr.signature, &self.bf.ltan[i], &self.eta).value
                + jet_inner(&fr.signature, &fr.tangent[i], &self.lbar_eta).value;
            worst = worst.max(v.abs());
        }
        worst
    }

    /// Jets of `lambda = f_* Z + phi eta` and of `L-bar lambda = L Z + phi L-bar eta`.
    pub fn lambda_jets(
        &self,
        section: &LambdaSection,
    ) -> Result<(Vec<Jet3>, Vec<Jet3>), GeometryError> {
        let fr = self.frame;
        let x = &fr.point;
        let z: Vec<Jet3> = section
            .z
            .iter()
            .map(|e| eval_jet(e, x, 2))
            .collect::<Result<_, _>>()?;
        let phi = eval_jet(&section.phi, x, 2)?;
        let mut lam = Vec::with_capacity(fr.m);
        let mut lbar_lam = Vec::with_capacity(fr.m);
        for a in 0..fr.m {
            let mut la = phi.s_mul(&self.eta[a]);
            let mut lb = phi.s_mul(&self.lbar_eta[a]);
            for l in 0..fr.n {
                la = la.s_add(&z[l].s_mul(&fr.tangent[l][a]));
                lb = lb.s_add(&z[l].s_mul(&self.bf.ltan[l][a]));
            }
            lam.push(la);
            lbar_lam.push(lb);
        }
        Ok((lam, lbar_lam))
    }

    /// Ambient value of `(tilde nabla_i L-bar) lambda
    ///   = d_i (L-bar lambda) - L-bar (nabla'_i lambda)`.
    pub fn nabla_lbar(&self, lam: &[Jet3], lbar_lam: &[Jet3], i: usize) -> DVector<f64> {
        let fr = self.frame;
        let n = fr.n;
        let dlam: Vec<Jet3> = lam.iter().map(|c| c.partial(i)).collect();
        // Tangential chart coefficients of d_i lambda.
        let rhs = DVector::from_fn(n, |k, _| {
            jet_inner(&fr.signature, &dlam, &fr.tangent[k]).value
        });
        let gvals = DMatrix::from_fn(n, n, |a, b| fr.g.at(a, b).value);
        let tan_coef = gvals.lu().solve(&rhs).expect("metric is invertible");
        // P-component coefficient <d_i lambda, eta>.
        let p_coef = jet_inner(&fr.signature, &dlam, &self.eta).value;
        let mut lbar_conn = DVector::zeros(fr.m);
        for l in 0..n {
            for a in 0..fr.m {
                lbar_conn[a] += tan_coef[l] * self.bf.ltan[l][a].value;
            }
        }
        for a in 0..fr.m {
            lbar_conn[a] += p_coef * self.lbar_eta[a].value;
        }
        DVector::from_fn(fr.m, |a, _| lbar_lam[a].grad[i]) - lbar_conn
    }

    /// The flat form `varphi(X, lambda)` tabulated over the coordinate basis
    /// of `TM` and the basis `{f_* d_1, ..., f_* d_n, eta}` of `TM + P`,
    /// with values in two copies of `R`.
    pub fn varphi_table(&self) -> FormTable {
        let fr = self.frame;
        let n = fr.n;
        let pr = fr.p - 1;
        let mut signs = vec![1.0; pr];
        signs.extend(std::iter::repeat(-1.0).take(pr));
        let signature = Signature(signs);
        // Basis sections of TM + P as (lambda, L-bar lambda) jet pairs.
        let mut sections: Vec<(Vec<Jet3>, Vec<Jet3>)> = (0..n)
            .map(|l| (fr.tangent[l].clone(), self.bf.ltan[l].clone()))
            .collect();
        sections.push((self.eta.clone(), self.lbar_eta.clone()));
        let mut entries = Vec::with_capacity(n * (n + 1));
        for i in 0..n {
            for (lam, lbar_lam) in &sections {
                let dlam = DVector::from_fn(fr.m, |a, _| lam[a].grad[i]);
                let nl = self.nabla_lbar(lam, lbar_lam, i);
                let u = self.r_project(&dlam);
                let v = self.r_project(&nl);
                let mut e = DVector::zeros(2 * pr);
                for k in 0..pr {
                    e[k] = u[k] + v[k];
                    e[pr + k] = u[k] - v[k];
                }
                entries.push(e);
            }
        }
        FormTable::new(n, n + 1, signature, entries, false)
    }

    /// Residual of the reduction identity
    /// `<f_*X + d_X lambda, LX + d_X(L-bar lambda)>
    ///    = <(d_X lambda)_R, (tilde nabla_X L-bar) lambda>`,
    /// checked over coordinate directions and their pairwise sums.
    pub fn impext_residual(&self, lam: &[Jet3], lbar_lam: &[Jet3]) -> f64 {
        let fr = self.frame;
        let n = fr.n;
        let side = |xs: &[usize]| -> f64 {
            let m = fr.m;
            let mut fx = DVector::zeros(m);
            let mut lx = DVector::zeros(m);
            let mut dlam = DVector::zeros(m);
            let mut dlbar = DVector::zeros(m);
            let mut nl = DVector::zeros(m);
            for &i in xs {
                for a in 0..m {
                    fx[a] += fr.tangent[i][a].value;
                    lx[a] += self.bf.ltan[i][a].value;
                    dlam[a] += lam[a].grad[i];
                    dlbar[a] += lbar_lam[a].grad[i];
                }
                nl += self.nabla_lbar(lam, lbar_lam, i);
            }
            let lhs = values_inner(&fr.signature, &(&fx + &dlam), &(&lx + &dlbar));
            let r_dlam = self.r_project(&dlam);
            // <(d_X lambda)_R, w> with w's R-coordinates.
            let rhs = r_dlam.dot(&self.r_project(&nl));
            lhs - rhs
        };
        let mut worst: f64 = 0.0;
        for i in 0..n {
            worst = worst.max(side(&[i]).abs());
            for j in (i + 1)..n {
                worst = worst.max(side(&[i, j]).abs());
            }
        }
        worst
    }

    /// Residual of `<(d_X lambda)_R, (tilde nabla_X L-bar) lambda> = 0` over
    /// coordinate directions and pairwise sums.
    pub fn requisito_residual(&self, lam: &[Jet3], lbar_lam: &[Jet3]) -> f64 {
        let fr = self.frame;
        let n = fr.n;
        let term = |xs: &[usize]| -> f64 {
            let mut dlam = DVector::zeros(fr.m);
            let mut nl = DVector::zeros(fr.m);
            for &i in xs {
                for a in 0..fr.m {
                    dlam[a] += lam[a].grad[i];
                }
                nl += self.nabla_lbar(lam, lbar_lam, i);
            }
            self.r_project(&dlam).dot(&self.r_project(&nl))
        };
        let mut worst: f64 = 0.0;
        for i in 0..n {
            worst = worst.max(term(&[i]).abs());
            for j in (i + 1)..n {
                worst = worst.max(term(&[i, j]).abs());
            }
        }
        worst
    }
}

/// Per-(x,t) verification record of the extension `F = f + t lambda`,
/// `tau-ext = tau + t L-bar lambda`.
#[derive(Debug, Clone)]
pub struct ExtensionPointCheck {
    pub t: f64,
    pub immersed: bool,
    /// `<F_* d_t, d_t tau-ext>`.
    pub id_t: f64,
    /// Mixed identity residual (max over coordinate directions).
    pub id_mixed: f64,
    /// Tangential identity residual (max over polarized pairs).
    pub id_tangent: f64,
}

/// Evaluate the three bending identities of the extension at fixed base
/// point for each requested `t`, flagging whether `F` is an immersion there.
pub fn extension_checks(
    star: &StarPoint,
    lam: &[Jet3],
    lbar_lam: &[Jet3],
    ts: &[f64],
    rank_tol: f64,
) -> Vec<ExtensionPointCheck> {
    let fr = star.frame;
    let n = fr.n;
    let m = fr.m;
    let lam_v = jet_values(lam);
    let lbar_v = jet_values(lbar_lam);
    let jf = DMatrix::from_fn(m, n, |a, i| fr.tangent[i][a].value);
    let jtau = DMatrix::from_fn(m, n, |a, i| star.bf.ltan[i][a].value);
    let jlam = DMatrix::from_fn(m, n, |a, i| lam[a].grad[i]);
    let jlbar = DMatrix::from_fn(m, n, |a, i| lbar_lam[a].grad[i]);
    let id_t = values_inner(&fr.signature, &lam_v, &lbar_v).abs();
    ts.iter()
        .map(|&t| {
            let jft = &jf + t * &jlam;
            let jtt = &jtau + t * &jlbar;
            // Immersion of F: Jacobian [J_f + t J_lam | lam] has rank n+1.
            let mut full = DMatrix::zeros(m, n + 1);
            full.view_mut((0, 0), (m, n)).copy_from(&jft);
            full.set_column(n, &lam_v);
            let immersed = rank(&full, rank_tol) == n + 1;
            let mut id_mixed: f64 = 0.0;
            let mut id_tangent: f64 = 0.0;
            for i in 0..n {
                let fxi = jft.column(i).into_owned();
                let txi = jtt.column(i).into_owned();
                id_mixed = id_mixed.max(
                    (values_inner(&fr.signature, &lbar_v, &fxi)
                        + values_inner(&fr.signature, &txi, &lam_v))
                    .abs(),
                );
                for j in 0..n {
                    let fxj = jft.column(j).into_owned();
                    let txj = jtt.column(j).into_owned();
                    id_tangent = id_tangent.max(
                        (values_inner(&fr.signature, &fxi, &txj)
                            + values_inner(&fr.signature, &fxj, &txi))
                        .abs(),
                    );
                }
            }
            ExtensionPointCheck { t, immersed, id_t, id_mixed, id_tangent }
        })
        .collect()
}

/// Residuals of the claim that the span of `d_basis` (constant chart
/// coefficients) is totally geodesic with vanishing second fundamental form.
pub fn ruling_check(frame: &Frame, d_basis: &DMatrix<f64>) -> (f64, f64) {
    let n = frame.n;
    let r = d_basis.ncols();
    let gvals = DMatrix::from_fn(n, n, |a, b| frame.g.at(a, b).value);
    // g-orthogonal projector complement: coefficients of the component of a
    // vector outside span(d_basis).
    let gram = d_basis.transpose() * &gvals * d_basis;
    let gram_inv = gram.try_inverse().expect("ruling basis is degenerate");
    let mut geo: f64 = 0.0;
    let mut alpha_res: f64 = 0.0;
    for a in 0..r {
        let v = d_basis.column(a).into_owned();
        for b in 0..r {
            let w = d_basis.column(b).into_owned();
            // nabla_v w coefficients for constant-coefficient fields.
            let conn = DVector::from_fn(n, |l, _| {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += v[i] * w[j] * frame.gamma_at(l, i, j).value;
                    }
                }
                acc
            });
            let coef = &gram_inv * (d_basis.transpose() * &gvals * &conn);
            let ortho = &conn - d_basis * coef;
            geo = geo.max((ortho.transpose() * &gvals * &ortho)[(0, 0)].abs().sqrt());
            let mut al = DVector::zeros(frame.p);
            for i in 0..n {
                for j in 0..n {
                    al += v[i] * w[j] * frame.alpha_vec(i, j);
                }
            }
            alpha_res = alpha_res.max(al.amax());
        }
    }
    (geo, alpha_res)
}

/// Christoffel symbol values only (flattened `(k*n+i)*n+j`), cheaper than a
/// full frame: second-order jets suffice.
pub fn christoffels_at(chart: &ImmersionChart, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let n = chart.n;
    let f: Vec<Jet3> = chart
        .components
        .iter()
        .map(|e| eval_jet(e, x, 2))
        .collect::<Result<Vec<_>, _>>()?;
    let tangent: Vec<Vec<Jet3>> =
        (0..n).map(|i| f.iter().map(|c| c.partial(i)).collect()).collect();
    let g = GMatrix::from_fn(n, |i, j| jet_inner(&chart.signature, &tangent[i], &tangent[j]));
    let g_inv = g.inverse();
    let mut gamma = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    let t = g.at(m, j).grad[i] + g.at(m, i).grad[j] - g.at(i, j).grad[m];
                    acc += g_inv.at(k, m).value * t;
                }
                gamma.push(0.5 * acc);
            }
        }
    }
    Ok(gamma)
}

/// Result of integrating a nullity geodesic and differentiating the
/// splitting tensor along it.
#[derive(Debug, Clone)]
pub struct SplittingData {
    /// Sampled times (spacing 0.01).
    pub times: Vec<f64>,
    /// Base points along the geodesic.
    pub points: Vec<Vec<f64>>,
    /// Splitting tensor matrices in the parallel-transported complement frame.
    pub c_matrices: Vec<DMatrix<f64>>,
    /// Max `|dC/dt - C^2|` over interior samples.
    pub riccati_residual: f64,
    /// Max principal angle between the transported nullity space and the
    /// recomputed one.
    pub transport_angle: f64,
    /// Max defect of unit speed along the integration.
    pub speed_drift: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SplittingError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("geodesic left the chart box at t = {0}")]
    LeftChart(f64),
    #[error("nullity dimension changed from {expected} to {found} at t = {at}")]
    NullityJump { expected: usize, found: usize, at: f64 },
}

/// Integrate the geodesic from `x0` with initial direction `v` (normalized
/// to unit g-speed), parallel-transport the nullity space and its
/// g-orthogonal complement, evaluate the splitting tensor against the
/// transported frame, and differentiate it to test the Riccati equation.
///
/// `delta_star` recomputes the nullity space at an arbitrary chart point so
/// the transported one can be cross-checked.
pub fn splitting_tensor_check(
    chart: &ImmersionChart,
    x0: &[f64],
    v: &[f64],
    t_max: f64,
    in_box: &dyn Fn(&[f64]) -> bool,
    delta_star: &dyn Fn(&[f64]) -> Result<DMatrix<f64>, GeometryError>,
) -> Result<SplittingData, SplittingError> {
    let n = chart.n;
    let h = 1e-3;
    let sample_every = 10; // 0.01 spacing
    let frame0 = chart.frame_at(x0)?;
    let gvals0 = DMatrix::from_fn(n, n, |a, b| frame0.g.at(a, b).value);
    let d0 = delta_star(x0)?;
    let nu = d0.ncols();
    assert!(nu >= 1, "initial point has no nullity direction");
    let mut vel = DVector::from_column_slice(v);
    let speed0 = (vel.transpose() * &gvals0 * &vel)[(0, 0)].sqrt();
    vel /= speed0;
    // g-orthogonal complement of the nullity at the start.
    let e0 = {
        let proj = &gvals0 * &d0;
        kernel(&proj.transpose(), RANK_TOL)
    };

    // State: position, velocity, transported nullity basis, transported
    // complement basis; all transported by v' = -Gamma(v, v),
    // w' = -Gamma(v, w).
    let mut pos = x0.to_vec();
    let mut d_frame = d0.clone();
    let mut e_frame = e0.clone();
    let deriv = |pos: &[f64],
                 vel: &DVector<f64>,
                 cols: &DMatrix<f64>|
     -> Result<(DVector<f64>, DMatrix<f64>), GeometryError> {
        let gamma = christoffels_at(chart, pos)?;
        let gam = |k: usize, i: usize, j: usize| gamma[(k * n + i) * n + j];
        let acc = DVector::from_fn(n, |k, _| {
            let mut a = 0.0;
            for i in 0..n {
                for j in 0..n {
                    a -= gam(k, i, j) * vel[i] * vel[j];
                }
            }
            a
        });
        let dcols = DMatrix::from_fn(n, cols.ncols(), |k, c| {
            let mut a = 0.0;
            for i in 0..n {
                for j in 0..n {
                    a -= gam(k, i, j) * vel[i] * cols[(j, c)];
                }
            }
            a
        });
        Ok((acc, dcols))
    };

    let steps = (t_max / h).round() as usize;
    let mut times = Vec::new();
    let mut points = Vec::new();
    let mut c_matrices = Vec::new();
    let mut transport_angle: f64 = 0.0;
    let mut speed_drift: f64 = 0.0;

    let e_dim = e_frame.ncols();
    let mut record = |t: f64,
                      pos: &[f64],
                      vel: &DVector<f64>,
                      d_frame: &DMatrix<f64>,
                      e_frame: &DMatrix<f64>|
     -> Result<(), SplittingError> {
        let fr = chart.frame_at(pos)?;
        let gv = DMatrix::from_fn(n, n, |a, b| fr.g.at(a, b).value);
        let sp = (vel.transpose() * &gv * vel)[(0, 0)].sqrt();
        speed_drift = speed_drift.max((sp - 1.0).abs());
        let d_here = delta_star(pos)?;
        if d_here.ncols() != nu {
            return Err(SplittingError::NullityJump { expected: nu, found: d_here.ncols(), at: t });
        }
        if let Some(angle) = max_principal_angle(&d_here, d_frame, RANK_TOL) {
            transport_angle = transport_angle.max(angle);
        } else {
            return Err(SplittingError::NullityJump { expected: nu, found: d_frame.ncols(), at: t });
        }
        // Splitting tensor of T = vel (constant-coefficient extension):
        // C X = -(nabla_X T)_E, expressed on the transported complement frame.
        let mut c = DMatrix::zeros(e_dim, e_dim);
        // Coefficient solve helper: coords of a vector in the e_frame basis
        // after removing the nullity component (g-orthogonal split).
        let mut basis = DMatrix::zeros(n, nu + e_dim);
        basis.view_mut((0, 0), (n, nu)).copy_from(d_frame);
        basis.view_mut((0, nu), (n, e_dim)).copy_from(e_frame);
        let gram = basis.transpose() * &gv * &basis;
        let gram_lu = gram.lu();
        for b in 0..e_dim {
            let xcol = e_frame.column(b).into_owned();
            let nab = DVector::from_fn(n, |l, _| {
                let mut a = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        a += xcol[i] * vel[j] * fr.gamma_at(l, i, j).value;
                    }
                }
                a
            });
            let rhs = basis.transpose() * &gv * &nab;
            let coef = gram_lu.solve(&rhs).expect("transported frame degenerated");
            for a in 0..e_dim {
                c[(a, b)] = -coef[nu + a];
            }
        }
        times.push(t);
        points.push(pos.to_vec());
        c_matrices.push(c);
        Ok(())
    };

    record(0.0, &pos, &vel, &d_frame, &e_frame)?;
    for step in 0..steps {
        // One RK4 step on (pos, vel, d_frame, e_frame) jointly.
        let pack = |p: &[f64], v: &DVector<f64>, d: &DMatrix<f64>, e: &DMatrix<f64>| {
            (p.to_vec(), v.clone(), d.clone(), e.clone())
        };
        let eval = |s: &(Vec<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>)| -> Result<
            (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>),
            GeometryError,
        > {
            let (acc, dd) = deriv(&s.0, &s.1, &s.2)?;
            let (_, de) = deriv(&s.0, &s.1, &s.3)?;
            Ok((s.1.clone(), acc, dd, de))
        };
        let s0 = pack(&pos, &vel, &d_frame, &e_frame);
        let k1 = eval(&s0)?;
        let advance = |s: &(Vec<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>),
                       k: &(DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>),
                       dt: f64| {
            let mut p = s.0.clone();
            for i in 0..n {
                p[i] += dt * k.0[i];
            }
            (p, &s.1 + dt * &k.1, &s.2 + dt * &k.2, &s.3 + dt * &k.3)
        };
        let k2 = eval(&advance(&s0, &k1, h / 2.0))?;
        let k3 = eval(&advance(&s0, &k2, h / 2.0))?;
        let k4 = eval(&advance(&s0, &k3, h))?;
        for i in 0..n {
            pos[i] += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
        }
        vel += h / 6.0 * (&k1.1 + 2.0 * &k2.1 + 2.0 * &k3.1 + &k4.1);
        d_frame += h / 6.0 * (&k1.2 + 2.0 * &k2.2 + 2.0 * &k3.2 + &k4.2);
        e_frame += h / 6.0 * (&k1.3 + 2.0 * &k2.3 + 2.0 * &k3.3 + &k4.3);
        let t = (step + 1) as f64 * h;
        if !in_box(&pos) {
            return Err(SplittingError::LeftChart(t));
        }
        if (step + 1) % sample_every == 0 {
            record(t, &pos, &vel, &d_frame, &e_frame)?;
        }
    }

    // Riccati: dC/dt via central differences at spacing 0.01 with one
    // Richardson step (using the 0.02-spaced difference).
    let dt = 0.01;
    let mut riccati_residual: f64 = 0.0;
    for k in 2..c_matrices.len().saturating_sub(2) {
        let d1 = (&c_matrices[k + 1] - &c_matrices[k - 1]) / (2.0 * dt);
        let d2 = (&c_matrices[k + 2] - &c_matrices[k - 2]) / (4.0 * dt);
        let dc = (4.0 * d1 - d2) / 3.0;
        let c2 = &c_matrices[k] * &c_matrices[k];
        riccati_residual = riccati_residual.max((dc - c2).amax());
    }

    Ok(SplittingData {
        times,
        points,
        c_matrices,
        riccati_residual,
        transport_angle,
        speed_drift,
    })
}

/// Lift an immersion into the unit sphere or hyperboloid to its cone
/// `(s, x) -> s g(x)`, with the bending lifted as `s tau(x)`. The new first
/// chart variable is the cone parameter `s`.
pub fn cone_lift(
    base: &ImmersionChart,
    tau: &[Expr],
) -> (ImmersionChart, Vec<Expr>) {
    let lift = |e: &Expr| build::prod(vec![build::var(0), e.shift_vars(1)]);
    let chart = ImmersionChart {
        n: base.n + 1,
        ambient_dim: base.ambient_dim,
        signature: base.signature.clone(),
        components: base.components.iter().map(&lift).collect(),
    };
    let tau_hat: Vec<Expr> = tau.iter().map(&lift).collect();
    (chart, tau_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bending::BendingFrame;
    use crate::expr::parse_expression;

    fn exprs(list: &[&str], n: usize) -> Vec<Expr> {
        list.iter().map(|s| parse_expression(s, n).unwrap()).collect()
    }

    /// Cylinder in R^4 = R^3 x R (one padding coordinate), curve bending,
    /// with the padding direction as a degenerate star solution.
    fn padded_cylinder() -> (ImmersionChart, Vec<Expr>, StarFields) {
        let n = 2;
        let chart = ImmersionChart {
            n,
            ambient_dim: 4,
            signature: Signature::euclidean(4),
            components: exprs(&["(cos x1)", "(sin x1)", "x2", "0"], n),
        };
        let tau = exprs(
            &[
                "(+ (* (cos (* 2 x1)) (cos x1)) (* 0.5 (sin (* 2 x1)) (sin x1)))",
                "(- (* (cos (* 2 x1)) (sin x1)) (* 0.5 (sin (* 2 x1)) (cos x1)))",
                "0",
                "0",
            ],
            n,
        );
        let star = StarFields {
            eta: exprs(&["0", "0", "0", "1"], n),
            xi: exprs(&["0", "0", "0", "0"], n),
        };
        (chart, tau, star)
    }

    #[test]
    fn padded_direction_is_found_as_star_solution() {
        let (chart, tau, _) = padded_cylinder();
        let fr = chart.frame_at(&[0.4, 0.7]).unwrap();
        let bf = BendingFrame::new(&fr, &tau).unwrap();
        let sol = solve_condition_star(&fr, &bf).expect("kernel must contain the padding");
        assert!(sol.residual < 1e-9);
        assert!((sol.eta.norm() - 1.0).abs() < 1e-12);
        assert!(sol.xi.dot(&sol.eta).abs() < 1e-10);
        // The combined operator B_eta + A_xi vanishes entrywise.
        let mut worst: f64 = 0.0;
        for i in 0..fr.n {
            for j in 0..fr.n {
                let v = fr.normal_inner(&bf.beta_vec(i, j), &sol.eta)
                    + fr.normal_inner(&fr.alpha_vec(i, j), &sol.xi);
                worst = worst.max(v.abs());
            }
        }
        assert!(worst < 1e-8, "B_eta + A_xi = {worst}");
    }

    #[test]
    fn star_point_identities_hold() {
        let (chart, tau, star) = padded_cylinder();
        let fr = chart.frame_at(&[0.4, 0.7]).unwrap();
        let bf = BendingFrame::new(&fr, &tau).unwrap();
        let sp = StarPoint::new(&fr, &bf, &star).unwrap();
        assert!(sp.field_residual() < 1e-12);
        assert!(sp.condition_residual() < 1e-10);
        assert!(sp.lbar_skew_residual() < 1e-10);
        let phi = sp.varphi_table();
        assert!(phi.flatness_residual() < 1e-9, "varphi {}", phi.flatness_residual());
    }

    #[test]
    fn impext_holds_for_generic_sections() {
        let (chart, tau, star) = padded_cylinder();
        let fr = chart.frame_at(&[0.8, -0.3]).unwrap();
        let bf = BendingFrame::new(&fr, &tau).unwrap();
        let sp = StarPoint::new(&fr, &bf, &star).unwrap();
        for section in [
            LambdaSection { z: exprs(&["x2", "(sin x1)"], 2), phi: parse_expression("1", 2).unwrap() },
            LambdaSection { z: exprs(&["0", "1"], 2), phi: parse_expression("(cos x2)", 2).unwrap() },
            LambdaSection { z: exprs(&["0", "0"], 2), phi: parse_expression("0", 2).unwrap() },
        ] {
            let (lam, lbar) = sp.lambda_jets(&section).unwrap();
            assert!(
                sp.impext_residual(&lam, &lbar) < 1e-9,
                "impext {}",
                sp.impext_residual(&lam, &lbar)
            );
        }
    }

    #[test]
    fn pure_eta_section_extends_with_all_identities() {
        let (chart, tau, star) = padded_cylinder();
        let fr = chart.frame_at(&[0.5, 0.2]).unwrap();
        let bf = BendingFrame::new(&fr, &tau).unwrap();
        let sp = StarPoint::new(&fr, &bf, &star).unwrap();
        let section =
            LambdaSection { z: exprs(&["0", "0"], 2), phi: parse_expression("1", 2).unwrap() };
        let (lam, lbar) = sp.lambda_jets(&section).unwrap();
        assert!(sp.requisito_residual(&lam, &lbar) < 1e-10);
        let checks = extension_checks(&sp, &lam, &lbar, &[-0.5, -0.1, 0.0, 0.1, 0.5], RANK_TOL);
        for c in &checks {
            assert!(c.immersed, "t = {}", c.t);
            assert!(c.id_t < 1e-10);
            assert!(c.id_mixed < 1e-10);
            assert!(c.id_tangent < 1e-9, "tangent {}", c.id_tangent);
        }
    }

    #[test]
    fn cylinder_ruling_direction_passes() {
        let (chart, _, _) = padded_cylinder();
        let fr = chart.frame_at(&[1.1, 0.4]).unwrap();
        let d = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let (geo, al) = ruling_check(&fr, &d);
        assert!(geo < 1e-12);
        assert!(al < 1e-12);
        // Negative control: the curved direction is not a ruling.
        let d_bad = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let (_, al_bad) = ruling_check(&fr, &d_bad);
        assert!(al_bad > 0.5);
    }

    #[test]
    fn cone_over_clifford_torus_riccati() {
        // g: flat torus in the unit 3-sphere; cone over it in R^4.
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let g = ImmersionChart {
            n: 2,
            ambient_dim: 4,
            signature: Signature::euclidean(4),
            components: exprs(
                &[
                    "(* 0.7071067811865476 (cos (* 1.4142135623730951 x1)))",
                    "(* 0.7071067811865476 (sin (* 1.4142135623730951 x1)))",
                    "(* 0.7071067811865476 (cos (* 1.4142135623730951 x2)))",
                    "(* 0.7071067811865476 (sin (* 1.4142135623730951 x2)))",
                ],
                2,
            ),
        };
        let _ = a;
        let tau = exprs(&["0", "0", "0", "0"], 2);
        let (cone, _tau_hat) = cone_lift(&g, &tau);
        assert_eq!(cone.n, 3);
        // Nullity of the cone is the radial direction.
        let x0 = [1.0, 0.3, 0.2];
        let fr = cone.frame_at(&x0).unwrap();
        assert_eq!(fr.nullity_dim(RANK_TOL), 1);
        let delta = |x: &[f64]| -> Result<DMatrix<f64>, GeometryError> {
            Ok(cone.frame_at(x)?.nullity_basis(RANK_TOL))
        };
        let data = splitting_tensor_check(
            &cone,
            &x0,
            &[1.0, 0.0, 0.0],
            0.5,
            &|x| x[0] > 0.2 && x[0] < 2.5,
            &delta,
        )
        .unwrap();
        // Along the radial geodesic s -> s + t the splitting tensor is
        // -1/s times the identity, so the Riccati equation holds.
        assert!(data.riccati_residual < 1e-4, "riccati {}", data.riccati_residual);
        assert!(data.transport_angle < 1e-4, "angle {}", data.transport_angle);
        assert!(data.speed_drift < 1e-6);
        let c0 = &data.c_matrices[0];
        let s0 = x0[0];
        assert!((c0 - DMatrix::identity(2, 2) * (-1.0 / s0)).amax() < 1e-6, "C(0) = {c0}");
    }
}
