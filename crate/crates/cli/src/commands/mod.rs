pub mod analyze;
pub mod eval;
pub mod fit;
pub mod perturb;
