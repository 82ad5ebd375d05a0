//! A small-RNN time-series laboratory.
//!
//! The crate trains single-layer recurrent networks (basic, gated and LSTM
//! cells, 1-20 neurons) on noisy periodic signals and extrapolates the
//! series with two algorithms:
//!
//! * the classical *moving-window* predictor, which shifts the input window
//!   one step per predicted point and re-runs the full recurrence (`m * p`
//!   cell steps for `p` points from an `m`-point window), and
//! * the *reduced-map* fast predictor, which runs the recurrence once over
//!   the input and then iterates an input-free map on the final state
//!   (`m + p - 1` cell steps).
//!
//! The [`dynamics`] module measures why the reduced map works: the shifted
//! differences between consecutive prediction rounds decay exponentially,
//! the next-to-last/last state gap shrinks with window length, and the
//! step-to-step Jacobian chain of the basic cell is contracting for most
//! steps. The [`experiments`] module scripts the quality, speedup and
//! robustness studies; [`cli`] wires everything to a command line.

pub mod cells;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod predict;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
