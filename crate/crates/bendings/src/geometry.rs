//! Chart-based submanifold geometry. An immersion is given by closed-form
//! ambient components; everything here is evaluated through truncated Taylor
//! jets at a point, so covariant derivatives of the computed tensors come
//! from jet gradients rather than from finite differences.

use crate::expr::Expr;
use crate::jet::{eval_jet, DomainError, Jet3};
use crate::linalg::{rank, GMatrix, Scalar, Signature};
use nalgebra::{DMatrix, DVector};

/// An immersion of an `n`-dimensional chart into a flat ambient space,
/// possibly with timelike coordinates.
#[derive(Debug, Clone)]
pub struct ImmersionChart {
    pub n: usize,
    pub ambient_dim: usize,
    pub signature: Signature,
    pub components: Vec<Expr>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GeometryError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("degenerate frame at {point:?}: {msg}")]
    Degenerate { point: Vec<f64>, msg: String },
}

impl ImmersionChart {
    pub fn codim(&self) -> usize {
        self.ambient_dim - self.n
    }

    /// Ambient position at a chart point.
    pub fn position(&self, x: &[f64]) -> Result<DVector<f64>, DomainError> {
        let mut out = DVector::zeros(self.ambient_dim);
        for (a, e) in self.components.iter().enumerate() {
            out[a] = eval_jet(e, x, 1)?.value;
        }
        Ok(out)
    }

    /// Ambient Jacobian (columns are coordinate tangent vectors).
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, DomainError> {
        let mut out = DMatrix::zeros(self.ambient_dim, self.n);
        for (a, e) in self.components.iter().enumerate() {
            let j = eval_jet(e, x, 1)?;
            for i in 0..self.n {
                out[(a, i)] = j.grad[i];
            }
        }
        Ok(out)
    }

    pub fn is_immersion_at(&self, x: &[f64], tol: f64) -> Result<bool, DomainError> {
        Ok(rank(&self.jacobian(x)?, tol) == self.n)
    }

    /// Full jet frame at a chart point.
    pub fn frame_at(&self, x: &[f64]) -> Result<Frame, GeometryError> {
        Frame::new(self, x)
    }
}

/// Inner product of two ambient jet vectors under the given signature.
pub fn jet_inner(sig: &Signature, u: &[Jet3], v: &[Jet3]) -> Jet3 {
    let mut acc = u[0].s_zero();
    for ((a, b), s) in u.iter().zip(v).zip(&sig.0) {
        acc = acc.s_add(&a.s_mul(b).scale(*s));
    }
    acc
}

/// All first-, second- and third-order data of an immersion at one chart
/// point: tangent frame, induced metric and its inverse, Christoffel symbols,
/// an orthonormal (in the indefinite sense) normal frame and the second
/// fundamental form coefficients — each entry a jet, so its chart partials
/// are available.
pub struct Frame {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub point: Vec<f64>,
    pub signature: Signature,
    /// Ambient components of `f`, order-3 jets.
    pub f: Vec<Jet3>,
    /// `tangent[i][a]`: ambient components of the i-th coordinate field,
    /// order-2 jets.
    pub tangent: Vec<Vec<Jet3>>,
    /// Induced metric and inverse, order-2 jets.
    pub g: GMatrix<Jet3>,
    pub g_inv: GMatrix<Jet3>,
    /// Christoffel symbols `gamma[k][i][j]` flattened as `(k*n+i)*n+j`,
    /// order-1 jets.
    pub gamma: Vec<Jet3>,
    /// Unit normal frame `normal[a][A]`, order-2 jets; `normal_signs[a]` is
    /// the self inner product (±1).
    pub normal: Vec<Vec<Jet3>>,
    pub normal_signs: Vec<f64>,
    /// Second fundamental form coefficients `alpha[(i*n+j)*p + a]` in the
    /// unit normal frame, order-1 jets.
    pub alpha: Vec<Jet3>,
}

impl Frame {
    fn new(chart: &ImmersionChart, x: &[f64]) -> Result<Frame, GeometryError> {
        let n = chart.n;
        let m = chart.ambient_dim;
        let p = m - n;
        let sig = chart.signature.clone();
        let degenerate = |msg: &str| GeometryError::Degenerate {
            point: x.to_vec(),
            msg: msg.to_owned(),
        };

        let f: Vec<Jet3> = chart
            .components
            .iter()
            .map(|e| eval_jet(e, x, 3))
            .collect::<Result<_, _>>()?;
        let tangent: Vec<Vec<Jet3>> =
            (0..n).map(|i| f.iter().map(|c| c.partial(i)).collect()).collect();

        let g = GMatrix::from_fn(n, |i, j| jet_inner(&sig, &tangent[i], &tangent[j]));
        let det_scale: f64 = (0..n).map(|i| g.at(i, i).value.abs().max(1.0)).product();
        let gram_vals = DMatrix::from_fn(n, n, |i, j| g.at(i, j).value);
        if gram_vals.determinant().abs() < 1e-10 * det_scale {
            return Err(degenerate("induced metric is numerically degenerate"));
        }
        let g_inv = g.inverse();

        // gamma^k_ij = 1/2 g^{km} (d_i g_mj + d_j g_mi - d_m g_ij)
        let mut gamma = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = g.at(0, 0).partial(0).s_zero();
                    for mm in 0..n {
                        let t = g
                            .at(mm, j)
                            .partial(i)
                            .s_add(&g.at(mm, i).partial(j))
                            .s_sub(&g.at(i, j).partial(mm));
                        acc = acc.s_add(&g_inv.at(k, mm).s_mul(&t));
                    }
                    gamma.push(acc.scale(0.5));
                }
            }
        }

        // Indefinite Gram-Schmidt over jets. First an orthogonal (not
        // normalized) tangent set for projection, then unit normals out of
        // the ambient basis, always pivoting on the largest value-part
        // self inner product.
        let mut ortho: Vec<(Vec<Jet3>, Jet3)> = Vec::new();
        let project = |v: &[Jet3], ortho: &[(Vec<Jet3>, Jet3)]| -> Vec<Jet3> {
            let mut res = v.to_vec();
            for (w, w2) in ortho {
                let c = jet_inner(&sig, &res, w).s_div(w2);
                for (r, wa) in res.iter_mut().zip(w) {
                    *r = r.s_sub(&c.s_mul(wa));
                }
            }
            res
        };
        let mut remaining: Vec<Vec<Jet3>> = tangent.clone();
        while !remaining.is_empty() {
            let (best, res) = remaining
                .iter()
                .map(|v| project(v, &ortho))
                .enumerate()
                .max_by(|(_, a), (_, b)| {
                    let na = jet_inner(&sig, a, a).value.abs();
                    let nb = jet_inner(&sig, b, b).value.abs();
                    na.partial_cmp(&nb).unwrap()
                })
                .map(|(i, r)| (i, r))
                .unwrap();
            let n2 = jet_inner(&sig, &res, &res);
            if n2.value.abs() < 1e-12 {
                return Err(degenerate("tangent frame orthogonalization broke down"));
            }
            ortho.push((res, n2));
            remaining.remove(best);
        }
        let mut normal = Vec::with_capacity(p);
        let mut normal_signs = Vec::with_capacity(p);
        let mut candidates: Vec<Vec<Jet3>> = (0..m)
            .map(|a| {
                (0..m)
                    .map(|b| Jet3::constant(n, 2, if a == b { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        for _ in 0..p {
            let (best, res, n2v) = candidates
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let r = project(v, &ortho);
                    let n2 = jet_inner(&sig, &r, &r).value.abs();
                    (i, r, n2)
                })
                .max_by(|a, b| a.2.partial_cmp(&b.2).unwrap())
                .unwrap();
            if n2v < 1e-12 {
                return Err(degenerate("normal frame construction broke down"));
            }
            let n2 = jet_inner(&sig, &res, &res);
            let sign = n2.value.signum();
            let norm = n2.scale(sign).s_sqrt();
            let unit: Vec<Jet3> = res.iter().map(|c| c.s_div(&norm)).collect();
            ortho.push((res, n2));
            normal.push(unit);
            normal_signs.push(sign);
            candidates.remove(best);
        }

        // alpha(i,j) = sum_a eps_a <f_ij, xi_a> xi_a, stored by coefficient.
        let mut alpha = Vec::with_capacity(n * n * p);
        for i in 0..n {
            for j in 0..n {
                let fij: Vec<Jet3> = f.iter().map(|c| c.partial(i).partial(j)).collect();
                for a in 0..p {
                    let coef = jet_inner(&sig, &fij, &normal[a]).scale(normal_signs[a]);
                    alpha.push(coef);
                }
            }
        }

        Ok(Frame {
            n,
            m,
            p,
            point: x.to_vec(),
            signature: sig,
            f,
            tangent,
            g,
            g_inv,
            gamma,
            normal,
            normal_signs,
            alpha,
        })
    }

    #[inline]
    pub fn gamma_at(&self, k: usize, i: usize, j: usize) -> &Jet3 {
        &self.gamma[(k * self.n + i) * self.n + j]
    }

    #[inline]
    pub fn alpha_at(&self, i: usize, j: usize, a: usize) -> &Jet3 {
        &self.alpha[(i * self.n + j) * self.p + a]
    }

    /// Value-part second fundamental form vector `alpha(d_i, d_j)` in normal
    /// coordinates.
    pub fn alpha_vec(&self, i: usize, j: usize) -> DVector<f64> {
        DVector::from_fn(self.p, |a, _| self.alpha_at(i, j, a).value)
    }

    /// Inner product of two normal-coordinate vectors (indefinite when the
    /// normal bundle has timelike directions).
    pub fn normal_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.iter().zip(v.iter()).zip(&self.normal_signs).map(|((a, b), s)| s * a * b).sum()
    }

    /// Normal connection coefficient `omega[i](a,b) = eps_b <d_i xi_a, xi_b>`
    /// so that `(nabla^perp_i xi_a) = sum_b omega[i](a,b) xi_b`.
    pub fn normal_connection(&self, i: usize, a: usize, b: usize) -> f64 {
        let da: Vec<Jet3> = self.normal[a].iter().map(|c| c.partial(i)).collect();
        self.normal_signs[b] * jet_inner(&self.signature, &da, &self.normal[b]).value
    }

    /// Lowered intrinsic curvature `R(d_i, d_j, d_k, d_l) = <R(d_i,d_j)d_k, d_l>`
    /// from the Christoffel jets.
    pub fn curvature_lowered(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        let mut r_up = vec![0.0; n];
        for m in 0..n {
            let mut v = self.gamma_at(m, j, k).grad[i] - self.gamma_at(m, i, k).grad[j];
            for s in 0..n {
                v += self.gamma_at(s, j, k).value * self.gamma_at(m, i, s).value
                    - self.gamma_at(s, i, k).value * self.gamma_at(m, j, s).value;
            }
            r_up[m] = v;
        }
        (0..n).map(|m| self.g.at(l, m).value * r_up[m]).sum()
    }

    /// Gauss equation residual `R_ijkl - (<a_il, a_jk> - <a_ik, a_jl>)`,
    /// maximized over all index combinations.
    pub fn gauss_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let extr = self.normal_inner(&self.alpha_vec(i, l), &self.alpha_vec(j, k))
                            - self.normal_inner(&self.alpha_vec(i, k), &self.alpha_vec(j, l));
                        worst = worst.max((self.curvature_lowered(i, j, k, l) - extr).abs());
                    }
                }
            }
        }
        worst
    }

    /// Coefficients of `(nabla^perp_i alpha)(j,k)` in the unit normal frame.
    pub fn codazzi_term(&self, i: usize, j: usize, k: usize) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(self.p, |a, _| {
            let mut v = self.alpha_at(j, k, a).grad[i];
            for b in 0..self.p {
                v += self.normal_connection(i, b, a) * self.alpha_at(j, k, b).value;
            }
            for l in 0..n {
                v -= self.gamma_at(l, i, j).value * self.alpha_at(l, k, a).value;
                v -= self.gamma_at(l, i, k).value * self.alpha_at(j, l, a).value;
            }
            v
        })
    }

    /// Codazzi residual `|(nabla^perp_i alpha)(j,k) - (nabla^perp_j alpha)(i,k)|`,
    /// maximized over indices (the ambient space is flat).
    pub fn codazzi_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max((self.codazzi_term(i, j, k) - self.codazzi_term(j, i, k)).amax());
                }
            }
        }
        worst
    }

    /// Shape operator `A_mu` (index-raised) for a normal vector with
    /// coefficients `mu` in the unit normal frame.
    pub fn shape_operator(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let lowered = DMatrix::from_fn(n, n, |i, j| {
            (0..self.p).map(|a| self.normal_signs[a] * mu[a] * self.alpha_at(i, j, a).value).sum()
        });
        let ginv = DMatrix::from_fn(n, n, |i, j| self.g_inv.at(i, j).value);
        ginv * lowered
    }

    /// Orthonormal chart-coordinate basis of the relative nullity subspace
    /// `{X : alpha(X, .) = 0}`.
    pub fn nullity_basis(&self, tol: f64) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n * self.p, n);
        for j in 0..n {
            for a in 0..self.p {
                for i in 0..n {
                    m[(j * self.p + a, i)] = self.alpha_at(i, j, a).value;
                }
            }
        }
        crate::linalg::kernel(&m, tol)
    }

    pub fn nullity_dim(&self, tol: f64) -> usize {
        self.nullity_basis(tol).ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::linalg::RANK_TOL;

    fn chart(n: usize, m: usize, comps: &[&str]) -> ImmersionChart {
        ImmersionChart {
            n,
            ambient_dim: m,
            signature: Signature::euclidean(m),
            components: comps.iter().map(|s| parse_expression(s, n).unwrap()).collect(),
        }
    }

    #[test]
    fn flat_plane_has_no_second_fundamental_form() {
        let c = chart(2, 4, &["x1", "x2", "(+ (* 2 x1) x2)", "0"]);
        let fr = c.frame_at(&[0.3, -0.8]).unwrap();
        for v in &fr.alpha {
            assert!(v.value.abs() < 1e-13);
        }
        assert_eq!(fr.nullity_dim(RANK_TOL), 2);
        assert!(fr.gauss_residual() < 1e-12);
        assert!(fr.codazzi_residual() < 1e-12);
    }

    #[test]
    fn cylinder_second_fundamental_form_matches_hand_computation() {
        let c = chart(2, 3, &["(cos x1)", "(sin x1)", "x2"]);
        let fr = c.frame_at(&[0.7, 0.2]).unwrap();
        // g = id, alpha(d1,d1) = -position-direction normal, others zero.
        assert!((fr.g.at(0, 0).value - 1.0).abs() < 1e-14);
        assert!((fr.g.at(1, 1).value - 1.0).abs() < 1e-14);
        assert!(fr.g.at(0, 1).value.abs() < 1e-14);
        let a11 = fr.alpha_vec(0, 0);
        assert!((a11.norm() - 1.0).abs() < 1e-12);
        assert!(fr.alpha_vec(0, 1).norm() < 1e-13);
        assert!(fr.alpha_vec(1, 1).norm() < 1e-13);
        assert_eq!(fr.nullity_dim(RANK_TOL), 1);
        assert!(fr.gauss_residual() < 1e-11);
        assert!(fr.codazzi_residual() < 1e-11);
    }

    #[test]
    fn unit_sphere_has_sectional_curvature_one() {
        let c = chart(
            2,
            3,
            &["(* (sin x1) (cos x2))", "(* (sin x1) (sin x2))", "(cos x1)"],
        );
        let fr = c.frame_at(&[0.9, 0.4]).unwrap();
        assert!(fr.gauss_residual() < 1e-9, "gauss residual {}", fr.gauss_residual());
        assert!(fr.codazzi_residual() < 1e-9);
        let r1221 = fr.curvature_lowered(0, 1, 1, 0);
        let denom = fr.g.at(0, 0).value * fr.g.at(1, 1).value - fr.g.at(0, 1).value.powi(2);
        assert!((r1221 / denom - 1.0).abs() < 1e-9, "K = {}", r1221 / denom);
    }

    #[test]
    fn shape_operator_is_linear_in_the_normal_direction() {
        let c = chart(
            2,
            4,
            &["(cos x1)", "(sin x1)", "(* 0.3 (sin (* 2 x2)))", "x2"],
        );
        let fr = c.frame_at(&[0.5, -0.3]).unwrap();
        let u = DVector::from_vec(vec![0.7, -0.2]);
        let v = DVector::from_vec(vec![0.1, 0.9]);
        let lhs = fr.shape_operator(&(2.0 * &u + 3.0 * &v));
        let rhs = fr.shape_operator(&u) * 2.0 + fr.shape_operator(&v) * 3.0;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn lorentzian_hyperbola_cylinder_frame() {
        // Surface in (-,+,+): (cosh x1, sinh x1, x2). Tangent d1 is spacelike,
        // normal is timelike-ish: <f11, f11> with f11 = (cosh, sinh, 0),
        // <f11,f11> = -cosh^2 + sinh^2 = -1.
        let c = ImmersionChart {
            n: 2,
            ambient_dim: 3,
            signature: Signature::with_timelike(3, 1),
            components: vec![
                parse_expression("(* 0.5 (+ (exp x1) (exp (neg x1))))", 2).unwrap(),
                parse_expression("(* 0.5 (- (exp x1) (exp (neg x1))))", 2).unwrap(),
                parse_expression("x2", 2).unwrap(),
            ],
        };
        let fr = c.frame_at(&[0.4, 1.0]).unwrap();
        assert_eq!(fr.p, 1);
        assert!((fr.normal_signs[0] - (-1.0)).abs() < 1e-12);
        assert!(fr.gauss_residual() < 1e-10);
        assert!(fr.codazzi_residual() < 1e-10);
    }
}
