//! Separately continuous functions of several variables with a prescribed
//! diagonal or a prescribed restriction to a subset of a product space.
//!
//! The crate is organized bottom-up:
//!
//! * [`func`]: continuous functions as analyzable expression trees, metric
//!   models and partitions of unity;
//! * [`tower`]: Baire-class functions as towers of iterated limits;
//! * [`diagonal`]: the annulus-blending construction of a separately
//!   continuous function with a given diagonal;
//! * [`restrict`]: extension from functionally closed sets and from
//!   projectively injective subsets of products;
//! * [`verify`]: numerical probes of diagonal agreement and section
//!   continuity, plus the inverse approximation of a separately continuous
//!   function by a tower;
//! * [`cli`]: batch jobs behind the `sepcont` binary.

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod diagonal;
pub mod error;
pub mod func;
pub mod par;
pub mod restrict;
pub mod tower;
pub mod verify;

pub use error::{Error, Result};
