//! Lattice to confusion-network toolkit for prompting language models with
//! ASR ambiguity, plus the evaluation harness around it.

pub mod config;
pub mod confnet;
pub mod harness;
pub mod lattice;
pub mod llm;
pub mod metrics;
pub mod prompting;
