pub mod assemble;
pub mod eval;
pub mod inspect;
pub mod preprocess;
pub mod sag;
pub mod warp;
