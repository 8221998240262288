//! Fixtures and checks shared by the core tests and the workspace acceptance suite.
#![allow(dead_code)]

pub mod corpus;
pub mod oracle;
pub mod play;
