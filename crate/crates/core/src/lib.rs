#![no_std]
extern crate alloc;

pub mod bt;
pub mod embed;
pub mod exec;
pub mod metrics;
pub mod moa;
pub mod planner;
pub mod provider;
pub mod template;
pub mod xml;
