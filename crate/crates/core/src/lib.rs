//! Triplet metric learning of a shared tag/song embedding space for
//! tag-based music retrieval.
//!
//! Tags enter through pretrained word vectors ([`wordvec`]), songs through
//! collaborative-filtering factors ([`wmf`]) or precomputed acoustic
//! features. Two small networks ([`net`]) map both into one unit-sphere
//! space, trained with a cosine-distance triplet loss under one of three
//! samplers ([`triplet`], [`trainer`]). Retrieval is exhaustive
//! nearest-neighbour search scored by MAP and P@10 ([`retrieval`]).

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod net;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod trainer;
pub mod triplet;
pub mod wmf;
pub mod wordvec;

pub use error::{Error, Result};
pub use linalg::{cosine_distance, l2_normalize, Mat};
pub use rng::Rng;
