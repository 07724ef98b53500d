//! IR, dialects and passes of a small stencil compiler: global stencil
//! programs are decomposed over a rank grid, halo exchanges are expressed
//! declaratively and then lowered to message passing and external calls.

pub mod dialects;
pub mod dmp;
pub mod ir;
pub mod mpi;
pub mod passes;
pub mod stencil;
