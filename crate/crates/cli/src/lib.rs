//! Experiment drivers: run configuration, model checkpoints, and the
//! command verbs (train, eval, sweep, analyze, transfer, synth) behind the
//! `conan` binary. Every verb is a plain function over paths and configs,
//! so the binary stays a thin argument parser.

pub mod checkpoint;
pub mod commands;
pub mod run_config;
