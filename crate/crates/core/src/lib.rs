//! Deterministic simulation of request-response exchanges over TDMA and CSMA
//! links, with just-in-time packet generation and slot allocation.

pub mod allocator;
pub mod analyzer;
pub mod cli;
pub mod clock;
pub mod controller;
pub mod csma;
pub mod manifest;
pub mod stats;
pub mod tdma;
pub mod time;
