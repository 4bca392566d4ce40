//! JSON scene format: a chart, a variational field, optional extension
//! data, sampling/tolerance configuration, the list of checks to run, and
//! the expected outcome per check.

use crate::expr::{parse_expression, Expr, ParseError};
use crate::extension::{LambdaSection, StarFields};
use crate::geometry::ImmersionChart;
use crate::linalg::Signature;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Expected outcome of one check. `passed` defaults to true; `value` is the
/// reference quantity for value-type checks (dimensions, counts);
/// `tolerance` overrides the scene-wide pointwise tolerance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Expectation {
    #[serde(default = "default_true")]
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for Expectation {
    fn default() -> Self {
        Expectation { passed: true, value: None, tolerance: None }
    }
}

/// Section `lambda = f_* Z + phi eta`, as chart-coefficient expressions for
/// `Z` (length n) and a scalar expression for `phi`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LambdaSpec {
    pub z: Vec<String>,
    pub phi: String,
}

/// Declared normal fields for the compatibility condition: ambient
/// components of the unit normal `eta` and of `xi` orthogonal to it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StarSpec {
    pub eta: Vec<String>,
    pub xi: Vec<String>,
}

/// Geodesic integration request for the splitting-tensor checks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplittingSpec {
    pub x0: Vec<f64>,
    pub v: Vec<f64>,
    pub t_max: f64,
    /// When true, the splitting tensor at the start point is compared to
    /// `-(1/s) id` with `s` the first chart coordinate of `x0`.
    #[serde(default)]
    pub cone_initial: bool,
}

/// Constant-coefficient tangent directions claimed to span a totally
/// geodesic, ambient-flat distribution.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RulingSpec {
    pub directions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplingSpec {
    pub points: usize,
    pub seed: u64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec { points: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ToleranceSpec {
    /// Tolerance for pointwise identity residuals.
    pub pointwise: f64,
    /// Looser tolerance for checks involving numerical integration or
    /// finite differencing.
    pub integration: f64,
    /// Relative singular-value cutoff for rank decisions.
    pub rank: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec { pointwise: 1e-7, integration: 1e-4, rank: 1e-8 }
    }
}

/// One verification scene, serializable to/from JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SceneFile {
    pub name: String,
    pub n: usize,
    pub ambient_dim: usize,
    /// One `+1.0` or `-1.0` per ambient coordinate.
    pub ambient_signature: Vec<f64>,
    /// Closed interval `[lo, hi]` per chart variable.
    pub chart_box: Vec<[f64; 2]>,
    /// Ambient components of the immersion, s-expression strings in `x1..xn`.
    pub f: Vec<String>,
    /// Ambient components of the variational field.
    pub tau: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star: Option<StarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting: Option<SplittingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruling: Option<RulingSpec>,
    /// Chart coefficients of a tangent field to test for the Killing
    /// property, when the `killing_residual` check is requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killing_z: Option<Vec<String>>,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    pub checks: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expected: BTreeMap<String, Expectation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

/// Validation failure with a JSON-pointer-style location.
#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid scene at {location}: {message}")]
pub struct SceneError {
    pub location: String,
    pub message: String,
}

impl SceneError {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> SceneError {
        SceneError { location: location.into(), message: message.into() }
    }
}

/// Every check name the runner implements.
pub const KNOWN_CHECKS: &[&str] = &[
    "immersion_regularity",
    "gauss_equation",
    "codazzi_equation",
    "first_order_isometry",
    "identity_tangent_coupling",
    "identity_curvature_exchange",
    "identity_beta_codazzi",
    "identity_second_derivative",
    "b_derivative_crosscheck",
    "triviality",
    "theta_flatness",
    "theta_hat_flatness",
    "moore_containment",
    "nullity",
    "normal_metric_definite",
    "condition_star",
    "star_fields",
    "l_bar_skew",
    "varphi_flatness",
    "varphi_kernel_bound",
    "impext_identity",
    "requisito_identity",
    "singular_extension",
    "killing_residual",
    "ruling",
    "splitting_riccati",
    "splitting_initial_value",
];

/// Checks that need the declared `star` normal fields.
pub const STAR_CHECKS: &[&str] =
    &["star_fields", "l_bar_skew", "varphi_flatness", "varphi_kernel_bound"];
/// Checks that additionally need the `lambda` section.
pub const LAMBDA_CHECKS: &[&str] =
    &["impext_identity", "requisito_identity", "singular_extension"];

/// Scene compiled to expression trees, ready for evaluation.
#[derive(Debug, Clone)]
pub struct CompiledScene {
    pub chart: ImmersionChart,
    pub tau: Vec<Expr>,
    pub lambda: Option<LambdaSection>,
    pub star: Option<StarFields>,
    pub killing_z: Option<Vec<Expr>>,
}

fn parse_list(
    texts: &[String],
    n: usize,
    location: &str,
) -> Result<Vec<Expr>, SceneError> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            parse_expression(t, n)
                .map_err(|e: ParseError| SceneError::new(format!("{location}/{i}"), e.to_string()))
        })
        .collect()
}

impl SceneFile {
    pub fn from_json_str(text: &str) -> Result<SceneFile, SceneError> {
        serde_json::from_str(text).map_err(|e| SceneError::new("/", e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    /// Structural validation plus expression compilation.
    pub fn compile(&self) -> Result<CompiledScene, SceneError> {
        let n = self.n;
        let m = self.ambient_dim;
        if n == 0 {
            return Err(SceneError::new("/n", "chart dimension must be positive"));
        }
        if m <= n {
            return Err(SceneError::new(
                "/ambient_dim",
                format!("ambient dimension {m} must exceed chart dimension {n}"),
            ));
        }
        if self.ambient_signature.len() != m {
            return Err(SceneError::new(
                "/ambient_signature",
                format!("expected {m} entries, found {}", self.ambient_signature.len()),
            ));
        }
        if self.ambient_signature.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(SceneError::new("/ambient_signature", "entries must be +1 or -1"));
        }
        if self.chart_box.len() != n {
            return Err(SceneError::new(
                "/chart_box",
                format!("expected {n} intervals, found {}", self.chart_box.len()),
            ));
        }
        for (i, iv) in self.chart_box.iter().enumerate() {
            if !(iv[0] < iv[1]) {
                return Err(SceneError::new(
                    format!("/chart_box/{i}"),
                    "interval must satisfy lo < hi",
                ));
            }
        }
        if self.f.len() != m {
            return Err(SceneError::new(
                "/f",
                format!("expected {m} components, found {}", self.f.len()),
            ));
        }
        if self.tau.len() != m {
            return Err(SceneError::new(
                "/tau",
                format!("expected {m} components, found {}", self.tau.len()),
            ));
        }
        for (i, c) in self.checks.iter().enumerate() {
            if !KNOWN_CHECKS.contains(&c.as_str()) {
                return Err(SceneError::new(format!("/checks/{i}"), format!("unknown check {c:?}")));
            }
        }
        for name in self.expected.keys() {
            if !self.checks.iter().any(|c| c == name) {
                return Err(SceneError::new(
                    format!("/expected/{name}"),
                    "expectation for a check that is not requested",
                ));
            }
        }
        let needs_star = self.checks.iter().any(|c| {
            STAR_CHECKS.contains(&c.as_str()) || LAMBDA_CHECKS.contains(&c.as_str())
        });
        if needs_star && self.star.is_none() {
            return Err(SceneError::new("/star", "requested checks need the star fields"));
        }
        let needs_lambda = self.checks.iter().any(|c| LAMBDA_CHECKS.contains(&c.as_str()));
        if needs_lambda && self.lambda.is_none() {
            return Err(SceneError::new("/lambda", "requested checks need the lambda section"));
        }
        if self.checks.iter().any(|c| c == "killing_residual") && self.killing_z.is_none() {
            return Err(SceneError::new("/killing_z", "killing_residual needs a declared field"));
        }
        if self.checks.iter().any(|c| c == "ruling") && self.ruling.is_none() {
            return Err(SceneError::new("/ruling", "ruling check needs declared directions"));
        }
        let needs_split = self
            .checks
            .iter()
            .any(|c| c == "splitting_riccati" || c == "splitting_initial_value");
        if needs_split && self.splitting.is_none() {
            return Err(SceneError::new("/splitting", "splitting checks need integration data"));
        }

        let chart = ImmersionChart {
            n,
            ambient_dim: m,
            signature: Signature(self.ambient_signature.clone()),
            components: parse_list(&self.f, n, "/f")?,
        };
        let tau = parse_list(&self.tau, n, "/tau")?;
        let star = match &self.star {
            None => None,
            Some(s) => {
                if s.eta.len() != m || s.xi.len() != m {
                    return Err(SceneError::new(
                        "/star",
                        format!("eta and xi need {m} ambient components"),
                    ));
                }
                Some(StarFields {
                    eta: parse_list(&s.eta, n, "/star/eta")?,
                    xi: parse_list(&s.xi, n, "/star/xi")?,
                })
            }
        };
        let lambda = match &self.lambda {
            None => None,
            Some(l) => {
                if l.z.len() != n {
                    return Err(SceneError::new(
                        "/lambda/z",
                        format!("expected {n} chart coefficients, found {}", l.z.len()),
                    ));
                }
                Some(LambdaSection {
                    z: parse_list(&l.z, n, "/lambda/z")?,
                    phi: parse_expression(&l.phi, n)
                        .map_err(|e| SceneError::new("/lambda/phi", e.to_string()))?,
                })
            }
        };
        let killing_z = match &self.killing_z {
            None => None,
            Some(z) => {
                if z.len() != n {
                    return Err(SceneError::new(
                        "/killing_z",
                        format!("expected {n} chart coefficients, found {}", z.len()),
                    ));
                }
                Some(parse_list(z, n, "/killing_z")?)
            }
        };
        if let Some(sp) = &self.splitting {
            if sp.x0.len() != n || sp.v.len() != n {
                return Err(SceneError::new("/splitting", format!("x0 and v need {n} entries")));
            }
            if !(sp.t_max > 0.0) {
                return Err(SceneError::new("/splitting/t_max", "must be positive"));
            }
        }
        if let Some(r) = &self.ruling {
            if r.directions.is_empty() || r.directions.iter().any(|d| d.len() != n) {
                return Err(SceneError::new(
                    "/ruling/directions",
                    format!("need at least one direction with {n} entries"),
                ));
            }
        }
        Ok(CompiledScene { chart, tau, lambda, star, killing_z })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> SceneFile {
        SceneFile {
            name: "plane".into(),
            n: 2,
            ambient_dim: 3,
            ambient_signature: vec![1.0, 1.0, 1.0],
            chart_box: vec![[0.0, 1.0], [0.0, 1.0]],
            f: vec!["x1".into(), "x2".into(), "0".into()],
            tau: vec!["0".into(), "0".into(), "1".into()],
            lambda: None,
            star: None,
            splitting: None,
            ruling: None,
            killing_z: None,
            sampling: SamplingSpec::default(),
            tolerances: ToleranceSpec::default(),
            checks: vec!["first_order_isometry".into()],
            expected: BTreeMap::new(),
            tags: vec![],
        }
    }

    #[test]
    fn json_round_trip_preserves_the_scene() {
        let s = minimal();
        let text = s.to_json_string();
        let back = SceneFile::from_json_str(&text).unwrap();
        assert_eq!(s, back);
        back.compile().unwrap();
    }

    #[test]
    fn component_count_mismatch_is_located() {
        let mut s = minimal();
        s.tau.pop();
        let err = s.compile().unwrap_err();
        assert_eq!(err.location, "/tau");
    }

    #[test]
    fn unknown_check_is_rejected() {
        let mut s = minimal();
        s.checks.push("no_such_check".into());
        let err = s.compile().unwrap_err();
        assert_eq!(err.location, "/checks/1");
    }

    #[test]
    fn parse_error_points_into_the_component_list() {
        let mut s = minimal();
        s.f[1] = "(sin".into();
        let err = s.compile().unwrap_err();
        assert_eq!(err.location, "/f/1");
    }

    #[test]
    fn star_checks_require_star_fields() {
        let mut s = minimal();
        s.checks.push("varphi_flatness".into());
        let err = s.compile().unwrap_err();
        assert_eq!(err.location, "/star");
    }
}
