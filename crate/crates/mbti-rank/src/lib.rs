//! File formats, evaluation, scoring service and command-line plumbing
//! around [`mbti_rank_core`].

pub mod config;
pub mod eval;
pub mod io;
pub mod prepare;
pub mod scoring;
pub mod service;
pub mod train;
