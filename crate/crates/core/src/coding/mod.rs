//! Coding primitives: the uniformizer extension, the square partition and
//! the receiver's test set, convex-split sampling, position-based decoding
//! and the one-dimensional tail lemma.

pub mod convex;
pub mod extended;
pub mod lemma1;
pub mod partition;
pub mod posdecode;
pub mod testset;

pub use extended::{ExtendOptions, ExtendedSource};
pub use partition::{Cell, SquarePartition};
pub use testset::{verify_test_set, TestSetA, TestSetParams, TestSetReport};
