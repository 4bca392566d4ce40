//! Built-in verification scenes: flat plane, cylinders with curve bendings
//! (plain, trivial, padded with extension data), a normal-field variation
//! over a Killing direction, two cones, and corrupted negative controls.

use crate::scene::{
    Expectation, LambdaSpec, RulingSpec, SamplingSpec, SceneFile, SplittingSpec, StarSpec,
    ToleranceSpec,
};
use std::collections::BTreeMap;

fn s(v: &str) -> String {
    v.to_string()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|t| t.to_string()).collect()
}

fn expect_all_pass(checks: &[String]) -> BTreeMap<String, Expectation> {
    checks.iter().map(|c| (c.clone(), Expectation::default())).collect()
}

fn expect_fail() -> Expectation {
    Expectation { passed: false, value: None, tolerance: None }
}

fn expect_value(v: f64) -> Expectation {
    Expectation { passed: true, value: Some(v), tolerance: None }
}

/// The identity suite shared by every scene carrying a variational field.
const BENDING_CHECKS: &[&str] = &[
    "immersion_regularity",
    "gauss_equation",
    "codazzi_equation",
    "first_order_isometry",
    "identity_tangent_coupling",
    "identity_curvature_exchange",
    "identity_beta_codazzi",
    "identity_second_derivative",
    "b_derivative_crosscheck",
    "theta_flatness",
    "moore_containment",
    "triviality",
    "nullity",
    "normal_metric_definite",
];

fn base_scene(name: &str, n: usize, ambient_dim: usize) -> SceneFile {
    SceneFile {
        name: name.to_string(),
        n,
        ambient_dim,
        ambient_signature: vec![1.0; ambient_dim],
        chart_box: vec![],
        f: vec![],
        tau: vec![],
        lambda: None,
        star: None,
        splitting: None,
        ruling: None,
        killing_z: None,
        sampling: SamplingSpec::default(),
        tolerances: ToleranceSpec::default(),
        checks: BENDING_CHECKS.iter().map(|c| c.to_string()).collect(),
        expected: BTreeMap::new(),
        tags: vec![],
    }
}

/// Totally geodesic plane in codimension two; rotation-plus-translation
/// field. Every residual vanishes identically.
pub fn flat_plane() -> SceneFile {
    let mut sc = base_scene("flat_plane", 5, 7);
    sc.chart_box = vec![[-1.0, 1.0]; 5];
    sc.f = strings(&["x1", "x2", "x3", "x4", "x5", "0", "0"]);
    sc.tau = strings(&["(- 0 x2)", "x1", "0", "0", "0", "1", "0"]);
    sc.checks.push(s("theta_hat_flatness"));
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("nullity"), expect_value(5.0));
    sc.tags = vec![s("trivial")];
    sc
}

const CURVE_BENDING_1: &str =
    "(+ (* (cos (* 2 x1)) (cos x1)) (* 0.5 (sin (* 2 x1)) (sin x1)))";
const CURVE_BENDING_2: &str =
    "(- (* (cos (* 2 x1)) (sin x1)) (* 0.5 (sin (* 2 x1)) (cos x1)))";

fn cylinder_chart(sc: &mut SceneFile) {
    sc.chart_box = vec![[0.0, 6.28], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]];
    sc.f = strings(&["(cos x1)", "(sin x1)", "x2", "x3", "x4", "x5"]);
}

/// Cylinder over the unit circle with the arclength-preserving curve
/// variation; not the restriction of any ambient rigid motion.
pub fn cylinder_bending() -> SceneFile {
    let mut sc = base_scene("cylinder_bending", 5, 6);
    cylinder_chart(&mut sc);
    sc.tau = vec![s(CURVE_BENDING_1), s(CURVE_BENDING_2), s("0"), s("0"), s("0"), s("0")];
    sc.checks.push(s("theta_hat_flatness"));
    sc.checks.push(s("ruling"));
    sc.ruling = Some(RulingSpec {
        directions: vec![
            vec![0.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 1.0],
        ],
    });
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("triviality"), expect_fail());
    sc.expected.insert(s("nullity"), expect_value(4.0));
    sc.expected.insert(s("ruling"), expect_value(4.0));
    sc.tags = vec![s("genuine-candidate")];
    sc
}

/// Same cylinder with a rotation-plus-translation field: trivial by
/// construction.
pub fn cylinder_trivial() -> SceneFile {
    let mut sc = base_scene("cylinder_trivial", 5, 6);
    cylinder_chart(&mut sc);
    sc.tau = strings(&["(- 0 (sin x1))", "(cos x1)", "0", "0", "1", "0"]);
    sc.checks.push(s("theta_hat_flatness"));
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("nullity"), expect_value(4.0));
    sc.tags = vec![s("trivial")];
    sc
}

fn padded_cylinder_chart(sc: &mut SceneFile) {
    sc.chart_box = vec![[0.0, 6.28], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]];
    sc.f = strings(&["(cos x1)", "(sin x1)", "x2", "x3", "x4", "x5", "0"]);
}

const ZERO_7: &[&str] = &["0", "0", "0", "0", "0", "0", "0"];

fn padded_star() -> StarSpec {
    StarSpec {
        eta: strings(&["0", "0", "0", "0", "0", "0", "1"]),
        xi: strings(ZERO_7),
    }
}

const STAR_SUITE: &[&str] = &[
    "condition_star",
    "star_fields",
    "l_bar_skew",
    "varphi_flatness",
    "varphi_kernel_bound",
    "impext_identity",
    "requisito_identity",
    "singular_extension",
];

/// Cylinder padded into codimension two; the padding direction solves the
/// compatibility condition and the constant section along it extends both
/// the immersion and the field.
pub fn cylinder_padded_star() -> SceneFile {
    let mut sc = base_scene("cylinder_padded_star", 5, 7);
    padded_cylinder_chart(&mut sc);
    sc.tau =
        vec![s(CURVE_BENDING_1), s(CURVE_BENDING_2), s("0"), s("0"), s("0"), s("0"), s("0")];
    sc.star = Some(padded_star());
    sc.lambda = Some(LambdaSpec { z: strings(&["0", "0", "0", "0", "0"]), phi: s("1") });
    sc.checks.extend(STAR_SUITE.iter().map(|c| c.to_string()));
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("triviality"), expect_fail());
    sc.expected.insert(s("nullity"), expect_value(4.0));
    sc.expected.insert(s("varphi_kernel_bound"), expect_value(4.0));
    sc.tags = vec![s("genuine-candidate")];
    sc
}

/// Padded cylinder with a rotation field and the tangent section along the
/// circle direction: the extended map degenerates exactly at deformation
/// offset zero and immerses for every other offset.
pub fn cylinder_padded_trivial_ext() -> SceneFile {
    let mut sc = base_scene("cylinder_padded_trivial_ext", 5, 7);
    padded_cylinder_chart(&mut sc);
    sc.tau = strings(&["(- 0 (sin x1))", "(cos x1)", "0", "0", "0", "0", "0"]);
    sc.star = Some(padded_star());
    sc.lambda = Some(LambdaSpec { z: strings(&["1", "0", "0", "0", "0"]), phi: s("0") });
    sc.checks.extend(STAR_SUITE.iter().map(|c| c.to_string()));
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("nullity"), expect_value(4.0));
    sc.expected.insert(s("varphi_kernel_bound"), expect_value(4.0));
    sc.tags = vec![s("trivial")];
    sc
}

/// Padded cylinder bent by a Killing direction plus a normal field along the
/// padding coordinate: a bending that is not a rigid motion.
pub fn killing_normal() -> SceneFile {
    let mut sc = base_scene("killing_normal", 5, 7);
    padded_cylinder_chart(&mut sc);
    sc.tau = strings(&["0", "0", "1", "0", "0", "0", "(sin x2)"]);
    sc.killing_z = Some(strings(&["0", "1", "0", "0", "0"]));
    sc.checks.push(s("killing_residual"));
    sc.checks.push(s("condition_star"));
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("triviality"), expect_fail());
    sc.expected.insert(s("nullity"), expect_value(4.0));
    sc.tags = vec![s("genuine-candidate")];
    sc
}

/// Cone over the square torus in the unit three-sphere, with a lifted
/// rotation field. The radial direction spans the nullity; the splitting
/// tensor starts at `-(1/s) id` and satisfies its Riccati equation along
/// radial geodesics.
pub fn cone_torus() -> SceneFile {
    let a = "0.7071067811865476"; // 1/sqrt(2)
    let b = "1.4142135623730951"; // sqrt(2)
    let mut sc = base_scene("cone_torus", 3, 4);
    sc.chart_box = vec![[0.5, 2.2], [0.0, 2.0], [0.0, 2.0]];
    sc.f = vec![
        format!("(* {a} x1 (cos (* {b} x2)))"),
        format!("(* {a} x1 (sin (* {b} x2)))"),
        format!("(* {a} x1 (cos (* {b} x3)))"),
        format!("(* {a} x1 (sin (* {b} x3)))"),
    ];
    sc.tau = vec![
        format!("(- 0 (* {a} x1 (sin (* {b} x2))))"),
        format!("(* {a} x1 (cos (* {b} x2)))"),
        s("0"),
        s("0"),
    ];
    sc.splitting = Some(SplittingSpec {
        x0: vec![1.0, 0.3, 0.2],
        v: vec![1.0, 0.0, 0.0],
        t_max: 1.0,
        cone_initial: true,
    });
    sc.checks.push(s("theta_hat_flatness"));
    sc.checks.push(s("splitting_riccati"));
    sc.checks.push(s("splitting_initial_value"));
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("nullity"), expect_value(1.0));
    sc.expected.insert(
        s("splitting_initial_value"),
        Expectation { passed: true, value: None, tolerance: Some(1e-6) },
    );
    sc.tags = vec![s("trivial"), s("cone")];
    sc
}

/// Hyperbola cylinder in a Lorentzian ambient with a curve variation normal
/// to the hyperbola; the unit normal is timelike, so the definite-normal
/// check is expected to fail while all bending identities hold.
pub fn hyperbolic_cylinder_bending() -> SceneFile {
    let mut sc = base_scene("hyperbolic_cylinder_bending", 2, 3);
    sc.ambient_signature = vec![-1.0, 1.0, 1.0];
    sc.chart_box = vec![[-1.2, 1.2], [-1.0, 1.0]];
    sc.f = strings(&[
        "(* 0.5 (+ (exp x1) (exp (- 0 x1))))",
        "(* 0.5 (- (exp x1) (exp (- 0 x1))))",
        "x2",
    ]);
    sc.tau = strings(&[
        "(+ (* 0.5 x1) (* 0.125 (- (exp (* 2 x1)) (exp (* -2 x1)))))",
        "(* 0.125 (+ (exp (* 2 x1)) (exp (* -2 x1))))",
        "0",
    ]);
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("triviality"), expect_fail());
    sc.expected.insert(s("normal_metric_definite"), expect_fail());
    sc.expected.insert(s("nullity"), expect_value(1.0));
    sc.tags = vec![s("genuine-candidate"), s("lorentzian")];
    sc
}

/// Cylinder field corrupted by a non-isometric perturbation: the first-order
/// isometry and flatness checks must fail well above tolerance.
pub fn cylinder_corrupted() -> SceneFile {
    let mut sc = base_scene("cylinder_corrupted", 5, 6);
    cylinder_chart(&mut sc);
    sc.tau = vec![
        format!("(+ {CURVE_BENDING_1} (* 0.01 (sin x2) (cos x1)))"),
        s(CURVE_BENDING_2),
        s("0"),
        s("0"),
        s("0"),
        s("0"),
    ];
    sc.checks = strings(&["immersion_regularity", "first_order_isometry", "theta_flatness"]);
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("first_order_isometry"), expect_fail());
    sc.expected.insert(s("theta_flatness"), expect_fail());
    sc.tags = vec![s("negative-control")];
    sc
}

/// Padded-cylinder variant of the corrupted control.
pub fn cylinder_padded_corrupted() -> SceneFile {
    let mut sc = base_scene("cylinder_padded_corrupted", 5, 7);
    padded_cylinder_chart(&mut sc);
    sc.tau = vec![
        format!("(+ {CURVE_BENDING_1} (* 0.01 (sin x2) (cos x1)))"),
        s(CURVE_BENDING_2),
        s("0"),
        s("0"),
        s("0"),
        s("0"),
        s("0"),
    ];
    sc.checks = strings(&["immersion_regularity", "first_order_isometry", "theta_flatness"]);
    sc.expected = expect_all_pass(&sc.checks);
    sc.expected.insert(s("first_order_isometry"), expect_fail());
    sc.expected.insert(s("theta_flatness"), expect_fail());
    sc.tags = vec![s("negative-control")];
    sc
}

/// Every built-in scene, stable order.
pub fn all_scenes() -> Vec<SceneFile> {
    vec![
        flat_plane(),
        cylinder_bending(),
        cylinder_trivial(),
        cylinder_padded_star(),
        cylinder_padded_trivial_ext(),
        killing_normal(),
        cone_torus(),
        hyperbolic_cylinder_bending(),
        cylinder_corrupted(),
        cylinder_padded_corrupted(),
    ]
}

pub fn scene_by_name(name: &str) -> Option<SceneFile> {
    all_scenes().into_iter().find(|sc| sc.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scene_compiles_and_round_trips() {
        for sc in all_scenes() {
            sc.compile().unwrap_or_else(|e| panic!("{}: {e}", sc.name));
            let back = SceneFile::from_json_str(&sc.to_json_string()).unwrap();
            assert_eq!(sc, back, "{}", sc.name);
        }
    }

    #[test]
    fn expectations_only_name_requested_checks() {
        for sc in all_scenes() {
            for name in sc.expected.keys() {
                assert!(sc.checks.contains(name), "{}: stray expectation {name}", sc.name);
            }
        }
    }

    #[test]
    fn catalog_has_bending_scenes_and_negative_controls() {
        let scenes = all_scenes();
        let bending = scenes
            .iter()
            .filter(|sc| !sc.tags.iter().any(|t| t == "negative-control"))
            .count();
        let controls = scenes
            .iter()
            .filter(|sc| sc.tags.iter().any(|t| t == "negative-control"))
            .count();
        assert!(bending >= 6);
        assert_eq!(controls, 2);
    }
}
