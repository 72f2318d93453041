//! Label-guided data augmentation for prompt-based few-shot text
//! classification, over a from-scratch micro masked language model.
//!
//! The pipeline: sample a K-shot split ([`corpus`]), search or load a
//! multiple-to-one verbalizer ([`verbalizer`]), pair every training input
//! with each label word of its class ([`augment`]), tune the masked LM on
//! those pairs ([`tuning`]), and predict by taking the most probable label
//! word per class ([`inference`]). [`harness`] runs the whole thing across
//! seeds and conditions.

pub mod augment;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod inference;
pub mod model;
pub mod rng;
pub mod template;
pub mod tuning;
pub mod verbalizer;

pub use error::{Error, Result};
