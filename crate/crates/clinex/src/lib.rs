//! Batch pipeline and evaluation harness for binary clinical feature
//! extraction from call transcripts via translation-augmented few-shot
//! prompting, with imbalance-aware scoring against ground truth.

pub mod backend;
pub mod cli;
pub mod corpus;
pub mod fixtures;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod promptkit;
pub mod report;
