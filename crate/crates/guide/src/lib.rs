//! Book chapters compiled as doctests, so every listing in `book/` is checked
//! by `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/cells.md")]
pub mod cells {}
#[doc = include_str!("../../../book/src/optimizers.md")]
pub mod optimizers {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/benchmark.md")]
pub mod benchmark {}
