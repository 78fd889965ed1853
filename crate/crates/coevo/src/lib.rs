//! Co-evolution training engine for self-designing multi-agent systems.
//!
//! The engine instantiates task-conditioned agent workflows from a declarative
//! design grammar, collects bi-level designer/executor rollout trees, scores
//! executions with verifier-based rewards, computes role-wise group-relative
//! advantages and the clipped policy objective, applies a stagewise
//! co-evolution schedule, and exports role-labeled training batches for an
//! external trainer.
//!
//! No model weights are updated here: the engine owns rollout collection,
//! credit assignment, scheduling, and persistence, and hands gradient work to
//! whatever trainer consumes the exported batches. A deterministic scripted
//! policy backend and a synthetic co-evolution lab make the whole pipeline
//! testable at desk scale without any language model.
//!
//! Module map:
//!
//! - [`workflow`] — declarative workflow specs, design grammar, template bank
//! - [`policy`] — policy gateway (scripted + HTTP backends), role routing
//! - [`runtime`] — workflow execution: turn loops, tool dispatch, transcripts
//! - [`reward`] — verifier rewards: math/code correctness plus format score
//! - [`rollout`] — bi-level rollout trees and trajectory flattening
//! - [`credit`] — decomposed advantages and the clipped group objective
//! - [`schedule`] — stagewise activation masks and batch gating
//! - [`simlab`] — synthetic designer/executor co-evolution environment
//! - [`store`] — append-only trajectory store and batch export
//! - [`config`] — run configuration
//! - [`commands`] — library entry points behind the CLI subcommands

pub mod commands;
pub mod config;
pub mod credit;
pub mod policy;
pub mod reward;
pub mod rollout;
pub mod runtime;
pub mod schedule;
pub mod simlab;
pub mod store;
pub mod workflow;
