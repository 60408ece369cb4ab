pub mod error;
pub mod geometry;
pub mod ode;
pub mod comparison;
pub mod fermi;
pub mod quadrature;
pub mod extension;
pub mod heat;
pub mod cli;
