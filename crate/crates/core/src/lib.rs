pub mod convergence;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod nonlinearity;
pub mod par;
pub mod pohozaev;
pub mod quadrature;
pub mod solver;
pub mod variation;
