//! Error classification shared by every module.
//!
//! Callers (notably the CLI) need to distinguish "the input is wrong" from
//! "the computation failed" without matching on each module's error enum, so
//! every error type reports which class it belongs to.

/// Coarse classification of any pipeline error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input: bad CSV, unknown variant name,
    /// mismatched schema, out-of-range parameter. The caller can fix these.
    Validation,
    /// The inputs were fine but the work failed: I/O, tensor backend errors,
    /// resource exhaustion.
    Runtime,
}

/// Implemented by every error enum in this crate.
pub trait Fallible {
    fn class(&self) -> ErrorClass;
}
