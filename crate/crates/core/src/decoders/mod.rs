//! Model-based decoders: maximum count and symbol-by-symbol maximum
//! likelihood, plus channel coefficient estimation.

pub mod channel;
pub mod mcd;
pub mod mle;

pub use channel::{estimate_channel, ChannelCoefficients};
pub use mcd::{argmax, mcd_decode};
pub use mle::{
    default_s_factor, mle_decode, mle_decode_observations, mle_decode_window, mle_log_likelihoods, mle_past,
    argmax_with_ties, MleState, TIE_TOLERANCE, VARIANCE_FLOOR,
};
