pub mod attention;
pub mod cli;
pub mod detect;
pub mod exposure;
pub mod geom;
pub mod pipeline;
pub mod pnm;
pub mod scenegen;
pub mod session;
pub mod tracker;
pub mod world3d;
