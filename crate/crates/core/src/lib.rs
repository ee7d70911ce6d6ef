//! Three-party replicated secret sharing for private diffusion sampling.
//!
//! The crate is layered bottom-up: [`fixed`] ring arithmetic, [`rss`] shares
//! and the interactive core protocols, [`transport`] message passing,
//! [`primitives`] comparison/selection/reciprocal, [`nonlinear`] polynomial
//! activations and softmax, and [`diffusion`] with the sampler and toy
//! denoiser. [`oracle`] holds the double-precision references.

pub mod bench;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod fit;
pub mod fixed;
pub mod image;
pub mod nonlinear;
pub mod oracle;
pub mod primitives;
pub mod rss;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result, TransportError};
pub use fixed::{FixedEncoding, RingElement};
pub use rss::{Party, PartyId, ShareTensor};
pub use tensor::{RealTensor, Tensor};
