//! Dense tensor arithmetic, special functions, and seeded randomness.
//!
//! Everything downstream of this module works in `f64`; the gradient
//! checks and Monte-Carlo oracles in the test suites need the headroom.

mod rng;
mod special;
mod tensor;

pub use rng::Rng;
pub use special::{digamma, log_gamma, softmax, softmax_in_place, trigamma};
pub(crate) use special::{digamma_raw, log_gamma_raw, trigamma_raw};
pub use tensor::Tensor;
