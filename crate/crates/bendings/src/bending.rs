//! Variation tensors of an infinitesimal bending. Given an immersion chart
//! and a variational field `tau`, this module evaluates `L X = d_X tau`, the
//! second-order tensor `B`, its tangential and normal parts `Y` and `beta`,
//! and the residuals of the identities they must satisfy.

use crate::expr::Expr;
use crate::geometry::{jet_inner, Frame, GeometryError, ImmersionChart};
use crate::jet::{eval_jet, Jet3};
use crate::linalg::Scalar;
use nalgebra::{DMatrix, DVector};

/// Jets of the bending field and of all derived tensors at one chart point,
/// expressed against a [`Frame`] of the underlying immersion.
pub struct BendingFrame<'a> {
    pub frame: &'a Frame,
    /// Ambient components of `tau`, order-3 jets.
    pub tau: Vec<Jet3>,
    /// `ltan[i]`: ambient components of `L d_i = d_i tau`, order-2 jets.
    pub ltan: Vec<Vec<Jet3>>,
    /// `b[i*n+j]`: ambient components of `B(d_i, d_j)`, order-1 jets.
    pub b: Vec<Vec<Jet3>>,
    /// `y[(i*n+j)*n + l]`: tangential coefficients of `B`, order-1 jets.
    pub y: Vec<Jet3>,
    /// `beta[i*n+j]`: ambient components of the normal part of `B`.
    pub beta: Vec<Vec<Jet3>>,
    /// `beta_coef[(i*n+j)*p + a]`: coefficients of `beta` in the unit normal
    /// frame, order-1 jets.
    pub beta_coef: Vec<Jet3>,
}

impl<'a> BendingFrame<'a> {
    pub fn new(frame: &'a Frame, tau_exprs: &[Expr]) -> Result<BendingFrame<'a>, GeometryError> {
        let n = frame.n;
        let p = frame.p;
        let sig = &frame.signature;
        let x = &frame.point;
        let tau: Vec<Jet3> = tau_exprs
            .iter()
            .map(|e| eval_jet(e, x, 3))
            .collect::<Result<_, _>>()?;
        let ltan: Vec<Vec<Jet3>> =
            (0..n).map(|i| tau.iter().map(|c| c.partial(i)).collect()).collect();

        let mut b = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut bij: Vec<Jet3> = tau.iter().map(|c| c.partial(i).partial(j)).collect();
                for l in 0..n {
                    let gam = frame.gamma_at(l, i, j);
                    for (comp, t) in bij.iter_mut().zip(&ltan[l]) {
                        *comp = comp.s_sub(&gam.s_mul(t));
                    }
                }
                b.push(bij);
            }
        }

        let mut y = Vec::with_capacity(n * n * n);
        for ij in 0..n * n {
            for l in 0..n {
                let mut acc = b[ij][0].s_zero();
                for m in 0..n {
                    let dot = jet_inner(sig, &b[ij], &frame.tangent[m]);
                    acc = acc.s_add(&frame.g_inv.at(l, m).s_mul(&dot));
                }
                y.push(acc);
            }
        }

        let mut beta = Vec::with_capacity(n * n);
        for ij in 0..n * n {
            let mut v = b[ij].clone();
            for l in 0..n {
                let c = &y[ij * n + l];
                for (comp, t) in v.iter_mut().zip(&frame.tangent[l]) {
                    *comp = comp.s_sub(&c.s_mul(t));
                }
            }
            beta.push(v);
        }

        let mut beta_coef = Vec::with_capacity(n * n * p);
        for ij in 0..n * n {
            for a in 0..p {
                beta_coef
                    .push(jet_inner(sig, &beta[ij], &frame.normal[a]).scale(frame.normal_signs[a]));
            }
        }

        Ok(BendingFrame { frame, tau, ltan, b, y, beta, beta_coef })
    }

    fn n(&self) -> usize {
        self.frame.n
    }

    #[inline]
    pub fn y_at(&self, i: usize, j: usize, l: usize) -> f64 {
        self.y[(i * self.n() + j) * self.n() + l].value
    }

    /// Value of the coefficient of `beta(d_i, d_j)` on the a-th unit normal.
    #[inline]
    pub fn beta_at(&self, i: usize, j: usize, a: usize) -> f64 {
        self.beta_coef[(i * self.n() + j) * self.frame.p + a].value
    }

    pub fn beta_vec(&self, i: usize, j: usize) -> DVector<f64> {
        DVector::from_fn(self.frame.p, |a, _| self.beta_at(i, j, a))
    }

    /// Ambient value of `L d_i`.
    pub fn l_column(&self, i: usize) -> DVector<f64> {
        DVector::from_fn(self.frame.m, |a, _| self.ltan[i][a].value)
    }

    /// Value of `tau` as an ambient vector.
    pub fn tau_value(&self) -> DVector<f64> {
        DVector::from_fn(self.frame.m, |a, _| self.tau[a].value)
    }

    /// Ambient value of `L R(d_i, d_j) d_k`.
    pub fn l_curvature(&self, i: usize, j: usize, k: usize) -> DVector<f64> {
        let n = self.n();
        let fr = self.frame;
        let mut out = DVector::zeros(fr.m);
        for l in 0..n {
            let mut r = fr.gamma_at(l, j, k).grad[i] - fr.gamma_at(l, i, k).grad[j];
            for s in 0..n {
                r += fr.gamma_at(s, j, k).value * fr.gamma_at(l, i, s).value
                    - fr.gamma_at(s, i, k).value * fr.gamma_at(l, j, s).value;
            }
            out += r * self.l_column(l);
        }
        out
    }

    /// First-order isometry residual `max_ij |<d_i tau, d_j f> + <d_j tau, d_i f>|`.
    pub fn skew_residual(&self) -> f64 {
        let n = self.n();
        let fr = self.frame;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = jet_inner(&fr.signature, &self.ltan[i], &fr.tangent[j]).value
                    + jet_inner(&fr.signature, &self.ltan[j], &fr.tangent[i]).value;
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// Residual of `<alpha(X,Y), LZ> + <Y(X,Y), Z> = 0` over coordinate fields.
    pub fn tangential_part_residual(&self) -> f64 {
        let n = self.n();
        let fr = self.frame;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                // alpha(d_i,d_j) as an ambient vector.
                let mut alpha_amb: DVector<f64> = DVector::zeros(fr.m);
                for a in 0..fr.p {
                    let c = fr.alpha_at(i, j, a).value;
                    for aa in 0..fr.m {
                        alpha_amb[aa] += c * fr.normal[a][aa].value;
                    }
                }
                for k in 0..n {
                    let lk = self.l_column(k);
                    let dot: f64 = alpha_amb
                        .iter()
                        .zip(lk.iter())
                        .zip(&fr.signature.0)
                        .map(|((u, v), s)| s * u * v)
                        .sum();
                    let ytan: f64 =
                        (0..n).map(|l| self.y_at(i, j, l) * fr.g.at(l, k).value).sum();
                    worst = worst.max((dot + ytan).abs());
                }
            }
        }
        worst
    }

    /// Residual of the symmetric exchange identity between `alpha` and `beta`:
    /// `<beta(X,W),alpha(Y,Z)> + <alpha(X,W),beta(Y,Z)>
    ///   = <beta(X,Z),alpha(Y,W)> + <alpha(X,Z),beta(Y,W)>`.
    pub fn exchange_residual(&self) -> f64 {
        let n = self.n();
        let fr = self.frame;
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    for w in 0..n {
                        let v = fr.normal_inner(&self.beta_vec(x, w), &fr.alpha_vec(y, z))
                            + fr.normal_inner(&fr.alpha_vec(x, w), &self.beta_vec(y, z))
                            - fr.normal_inner(&self.beta_vec(x, z), &fr.alpha_vec(y, w))
                            - fr.normal_inner(&fr.alpha_vec(x, z), &self.beta_vec(y, w));
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
        worst
    }

    /// Coefficients of `(nabla^perp_i beta)(j,k)` in the unit normal frame.
    fn beta_covariant(&self, i: usize, j: usize, k: usize) -> DVector<f64> {
        let n = self.n();
        let fr = self.frame;
        DVector::from_fn(fr.p, |a, _| {
            let mut v = self.beta_coef[(j * n + k) * fr.p + a].grad[i];
            for bb in 0..fr.p {
                v += fr.normal_connection(i, bb, a) * self.beta_at(j, k, bb);
            }
            for l in 0..n {
                v -= fr.gamma_at(l, i, j).value * self.beta_at(l, k, a);
                v -= fr.gamma_at(l, i, k).value * self.beta_at(j, l, a);
            }
            v
        })
    }

    /// Residual of the Codazzi-type identity for `beta`:
    /// `(nabla^perp_X beta)(Y,Z) - (nabla^perp_Y beta)(X,Z)
    ///   = alpha(Y, Y(X,Z)) - alpha(X, Y(Y,Z)) - (L R(X,Y)Z)_N`.
    pub fn beta_codazzi_residual(&self) -> f64 {
        let n = self.n();
        let fr = self.frame;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lhs = self.beta_covariant(i, j, k) - self.beta_covariant(j, i, k);
                    let mut rhs = DVector::zeros(fr.p);
                    for l in 0..n {
                        rhs += self.y_at(i, k, l) * fr.alpha_vec(j, l)
                            - self.y_at(j, k, l) * fr.alpha_vec(i, l);
                    }
                    let lr = self.l_curvature(i, j, k);
                    for a in 0..fr.p {
                        let mut c = 0.0;
                        for aa in 0..fr.m {
                            c += fr.signature.0[aa] * lr[aa] * fr.normal[a][aa].value;
                        }
                        rhs[a] -= fr.normal_signs[a] * c;
                    }
                    worst = worst.max((lhs - rhs).amax());
                }
            }
        }
        worst
    }

    /// Ambient components of `(tilde nabla_i B)(j,k)`.
    fn b_covariant(&self, i: usize, j: usize, k: usize) -> DVector<f64> {
        let n = self.n();
        let fr = self.frame;
        DVector::from_fn(fr.m, |aa, _| {
            let mut v = self.b[j * n + k][aa].grad[i];
            for l in 0..n {
                v -= fr.gamma_at(l, i, j).value * self.b[l * n + k][aa].value;
                v -= fr.gamma_at(l, i, k).value * self.b[j * n + l][aa].value;
            }
            v
        })
    }

    /// Residual of `(tilde nabla_X B)(Y,Z) - (tilde nabla_Y B)(X,Z) = -L R(X,Y)Z`.
    pub fn b_cyclic_residual(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lhs = self.b_covariant(i, j, k) - self.b_covariant(j, i, k);
                    let rhs = -self.l_curvature(i, j, k);
                    worst = worst.max((lhs - rhs).amax());
                }
            }
        }
        worst
    }

    /// Cross-check of `B` against the t-derivative at 0 of the second
    /// fundamental form of the variation `f + t tau`, by central differences
    /// with one Richardson extrapolation step.
    pub fn b_variation_residual(&self) -> f64 {
        let fr = self.frame;
        let n = self.n();
        let m = fr.m;
        let e = DVector::from_column_slice(&fr.signature.0);
        let jf = DMatrix::from_fn(m, n, |a, i| fr.tangent[i][a].value);
        let jt = DMatrix::from_fn(m, n, |a, i| self.ltan[i][a].value);
        let hf: Vec<DVector<f64>> = (0..n * n)
            .map(|ij| {
                DVector::from_fn(m, |a, _| fr.f[a].partial(ij / n).partial(ij % n).value)
            })
            .collect();
        let ht: Vec<DVector<f64>> = (0..n * n)
            .map(|ij| {
                DVector::from_fn(m, |a, _| self.tau[a].partial(ij / n).partial(ij % n).value)
            })
            .collect();
        let alpha_t = |t: f64, ij: usize| -> DVector<f64> {
            let j = &jf + t * &jt;
            let mut je = j.clone();
            for (mut row, s) in je.row_iter_mut().zip(e.iter()) {
                row *= *s;
            }
            let g = j.transpose() * &je;
            let h = &hf[ij] + t * &ht[ij];
            let coef = g.clone().lu().solve(&(je.transpose() * &h)).unwrap();
            &h - j * coef
        };
        let step = 1e-4;
        let mut worst: f64 = 0.0;
        for ij in 0..n * n {
            let d = |h: f64| (alpha_t(h, ij) - alpha_t(-h, ij)) / (2.0 * h);
            let fd = (d(step / 2.0) * 4.0 - d(step)) / 3.0;
            let b = DVector::from_fn(m, |a, _| self.b[ij][a].value);
            worst = worst.max((fd - b).amax());
        }
        worst
    }
}

/// Best-fit residual of the ansatz `tau = D f + w` with `D` skew-adapted to
/// the ambient inner product and `w` constant, over a set of sampled values.
/// Each sample contributes the value equation and all first-derivative
/// equations. A residual at noise level means the bending is trivial.
pub fn trivial_motion_residual(
    signs: &[f64],
    samples: &[(DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>)],
) -> f64 {
    let m = signs.len();
    // D = K E with K skew-symmetric ensures <Dv, w> + <v, Dw> = 0 for the
    // signed inner product; unknowns are the strict upper triangle of K
    // followed by w.
    let nk = m * (m - 1) / 2;
    let unknowns = nk + m;
    let n = samples[0].2.ncols();
    let rows_per = m * (1 + n);
    let mut a = DMatrix::zeros(rows_per * samples.len(), unknowns);
    let mut rhs = DVector::zeros(rows_per * samples.len());
    let kidx = |i: usize, j: usize| -> (usize, f64) {
        // Flattened strict upper triangle with antisymmetry sign.
        assert!(i != j);
        let (r, c, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        (r * m - r * (r + 1) / 2 + (c - r - 1), s)
    };
    for (si, (fpos, tau, jf, jtau)) in samples.iter().enumerate() {
        let base = si * rows_per;
        // tau = K E f + w
        for r in 0..m {
            for c in 0..m {
                if r == c {
                    continue;
                }
                let (k, s) = kidx(r, c);
                a[(base + r, k)] += s * signs[c] * fpos[c];
            }
            a[(base + r, nk + r)] = 1.0;
            rhs[base + r] = tau[r];
        }
        // d_i tau = K E d_i f
        for i in 0..n {
            for r in 0..m {
                let row = base + m * (1 + i) + r;
                for c in 0..m {
                    if r == c {
                        continue;
                    }
                    let (k, s) = kidx(r, c);
                    a[(row, k)] += s * signs[c] * jf[(c, i)];
                }
                rhs[row] = jtau[(r, i)];
            }
        }
    }
    let sol = crate::linalg::lstsq(&a, &rhs, 1e-12);
    (a * sol - rhs).amax()
}

/// Convenience: frame + bending frame at one point.
pub fn bending_at<'a>(
    frame: &'a Frame,
    tau_exprs: &[Expr],
) -> Result<BendingFrame<'a>, GeometryError> {
    BendingFrame::new(frame, tau_exprs)
}

/// Sample data needed by [`trivial_motion_residual`] at one point.
pub fn trivial_motion_sample(
    chart: &ImmersionChart,
    bf: &BendingFrame,
) -> (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let fr = bf.frame;
    let m = fr.m;
    let n = fr.n;
    let _ = chart;
    let fpos = DVector::from_fn(m, |a, _| fr.f[a].value);
    let tau = bf.tau_value();
    let jf = DMatrix::from_fn(m, n, |a, i| fr.tangent[i][a].value);
    let jtau = DMatrix::from_fn(m, n, |a, i| bf.ltan[i][a].value);
    (fpos, tau, jf, jtau)
}
