//! Bayesian machine games: strategies are metered programs and utilities
//! may charge for the computation they perform.
//!
//! The numeric core is generic over [`scalar::Scalar`]; exact verdicts use
//! [`Rational`], approximate paths use `f64`.

pub mod cases;
pub mod complexity;
pub mod equilibrium;
pub mod expr;
pub mod game;
pub mod machines;
pub mod mediation;
pub mod rational;
pub mod scalar;
pub mod solver;
pub mod vm;

pub use num_rational::BigRational;

/// Exact rational used for probabilities, utilities and gaps.
pub type Rational = BigRational;

pub type ExactFiniteGame = solver::FiniteBayesianGame<Rational>;
pub type FloatFiniteGame = solver::FiniteBayesianGame<f64>;
pub type ExactEquilibrium = solver::MixedEquilibrium<Rational>;
pub type FloatEquilibrium = solver::MixedEquilibrium<f64>;
