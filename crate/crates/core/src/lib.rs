pub mod adaptive;
pub mod calibrate;
pub mod error;
pub mod gof;
pub mod hom;
pub mod ind;
pub mod kernel;
pub mod normal;
mod par;
pub mod perturb;
pub mod quad;
pub mod sample;
pub mod ustat;

pub use error::{Error, Result};
