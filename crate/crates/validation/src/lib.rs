//! Holds the benchmark acceptance target, `tests/acceptance.rs`:
//!
//! ```text
//! cargo test --release -p zifqr-validation --test acceptance
//! ```
