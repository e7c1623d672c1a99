//! Black-76 pricing on the forward, normal distribution functions and
//! implied-volatility inversion.

mod black;
mod normal;

pub use black::{black_call, black_put, black_vega, implied_vol, ForwardContext, OptionQuote};
pub use normal::{norm_cdf, norm_cdf_inv, norm_pdf};
