//! IO, CLI and service around the planning core: model providers, the
//! session store, policy-server runtime, evaluation reports, fixture
//! scenarios and the HTTP service.

pub mod cli;
pub mod config;
pub mod eval;
pub mod fanout;
pub mod providers;
pub mod runner;
pub mod scenario;
pub mod service;
pub mod store;
