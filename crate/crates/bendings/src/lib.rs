//! Numerical machinery for infinitesimal bendings of Euclidean (and
//! Lorentzian-flat) submanifolds given by analytic charts.
//!
//! The pipeline: closed-form expressions for an immersion `f` and a
//! variational field `tau` are evaluated as truncated Taylor jets; from the
//! jets come frames, metric, Christoffel symbols and the second fundamental
//! form; on top of those the associated bending tensors `L`, `B`, `Y`, `beta`
//! and their identities; the flat bilinear forms `theta` and `varphi` in
//! indefinite inner-product spaces; and the singular-extension, ruling and
//! splitting-tensor checks. A scene catalog and a JSON-driven CLI tie the
//! checks into machine-readable reports.

pub mod bending;
pub mod catalog;
pub mod expr;
pub mod extension;
pub mod flatform;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod report;
pub mod runner;
pub mod sampling;
pub mod scene;
