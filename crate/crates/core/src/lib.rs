//! Corpus-analysis toolkit for threaded-discussion data: discovers
//! co-occurrence-based argument patterns, measures their persuasive
//! efficacy, and characterizes per-user preferences.

pub mod analytics;
pub mod communities;
pub mod corpus;
pub mod linkage;
pub mod phrases;
pub mod pipeline;
pub mod synth;
pub mod tagging;
pub mod topics;
