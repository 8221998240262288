pub mod backends;
pub mod cos;
pub mod error;
pub mod extractor;
pub mod harness;
pub mod map;
pub mod metrics;
pub mod opponent;
pub mod record;
pub mod sim;
pub mod techtree;
pub mod textualizer;
