pub mod discretization;
pub mod linalg;
pub mod material;
pub mod permeability;
pub mod ade_solver;
pub mod conv_oracle;
pub mod harness;
