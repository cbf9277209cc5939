//! Čech basic cocycles, Weyl U(1)-bundles and canonical flows for Pfaffian
//! structures presented in canonical charts on box-quotient manifolds.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`symcore`]: exact rational polynomials, the coefficient ring of every form;
//! - [`exterior`]: chart-local forms and vector fields with `d`, `∧`, `⌟`, `L`;
//! - [`atlas`]: the covering by canonical charts and the cocycle `c_UVW`;
//! - [`weyl`]: the U(1)-bundle, its canonical objects and identity suite;
//! - [`flows`]: RK4 flows, period detection and foliation classification;
//! - [`cli`]: configuration, orchestration and JSON reports.

pub mod atlas;
pub mod cli;
pub mod exterior;
pub mod flows;
pub mod symcore;
pub mod weyl;
