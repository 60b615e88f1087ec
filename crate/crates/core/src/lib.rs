//! Day-ahead market clearing engine with a uniform purchase price and
//! curtailable profile block orders.
//!
//! The pipeline is: load or generate an order book ([`orderbook`]), build the
//! single-level mixed-integer clearing model ([`model`]), solve it through a
//! pluggable backend and decode the solution ([`solver`]), then re-verify the
//! outcome against every market rule ([`validator`]). For desk-scale
//! instances, [`oracle`] computes the welfare-maximal rule-satisfying
//! clearing by exhaustive enumeration, which serves as independent ground
//! truth for the optimization path.

pub mod model;
pub mod oracle;
pub mod orderbook;
pub mod quantity;
pub mod solver;
pub mod validator;
