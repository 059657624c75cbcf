//! Multimodal vector search and recommendation engine.
//!
//! Queries are composed on the unit sphere: weighted natural-language terms
//! are linearly interpolated, prompt templates restyle the terms before they
//! are embedded, indexed documents can be blended in as context, and item
//! histories are ensembled with hierarchical slerp. Recommendations can also
//! be explored as random walks over the nearest-neighbour graph.
//!
//! The crate is split into:
//!
//! - [`vecmath`]: unit vectors, lerp, pairwise and hierarchical slerp
//! - [`embedder`]: text/image embedding (mock or remote) and expansion-term providers
//! - [`index`]: document store with exact k-NN search and JSONL ingestion
//! - [`query`]: query specs, prompt templates and the query compiler
//! - [`recommender`]: ensembling, recommendations and random recommendation walks
//! - [`api`]: request/response types shared by the HTTP service, CLI and FFI
//! - [`service`]: the axum HTTP facade
//! - [`cli`]: the `vl` operator tool
//!
//! ```
//! use vl_core::vecmath::{slerp2, UnitVector};
//!
//! let a = UnitVector::basis(2, 0);
//! let b = UnitVector::basis(2, 1);
//! let mid = slerp2(&a, &b, 0.5).unwrap();
//! assert!((mid[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
//! ```

pub mod api;
pub mod cli;
pub mod config;
pub mod embedder;
pub mod engine;
pub mod error;
pub mod index;
pub mod query;
pub mod recommender;
pub mod service;
pub mod vecmath;

pub use engine::Engine;
pub use error::{Error, ErrorCode, Result};
