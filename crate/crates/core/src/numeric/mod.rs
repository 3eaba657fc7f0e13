//! Small numerical kernels: quadrature, bracketing root search, isotonic fits, interpolation.

pub mod interp;
pub mod isotonic;
pub mod quadrature;
pub mod roots;

pub use quadrature::{adaptive_gauss_legendre, gauss_legendre, GaussLegendre};
pub use isotonic::isotonic_fit;
pub use roots::{bisect_decreasing, bisect_increasing, golden_max, illinois_decreasing};
