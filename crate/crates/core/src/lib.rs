//! Recurrent forecasters and first-order optimizers, written from scratch,
//! plus a harness for benchmarking LSTM/GRU × Adam/NAG on daily closing prices.
//!
//! Module map:
//!
//! * [`linalg`]: dense vectors, matrices, activations, seeded PRNG
//! * [`cells`]: LSTM and GRU forward passes, backpropagation through time, gradient checking
//! * [`optim`]: momentum, Nesterov accelerated gradient, Adam
//! * [`data`]: CSV ingestion, gap repair, min-max scaling, windows, chronological split
//! * [`train`]: batch-size-one training loop and per-epoch metrics
//! * [`eval`]: RMSE, benchmark report assembly, CSV/JSON export
//! * [`cli`]: the `seqopt` command line

pub mod cells;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod optim;
pub mod train;

pub use error::{Error, Result};
