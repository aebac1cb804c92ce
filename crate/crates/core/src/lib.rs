//! Tail-risk portfolio construction on VaR-ΔCoVaR networks.
//!
//! The pipeline runs:
//!
//! 1. [`quantreg`]: linear quantile regressions fitted by exact linear programming.
//! 2. [`riskmatrix`]: one-step-ahead VaR⁺ and ΔCoVaR forecasts assembled into the
//!    asymmetric risk matrix Γ and its symmetrized counterpart Γ̃.
//! 3. [`netgraph`]: the adjacency matrix Ω = Γ̃ − diag(Γ̃), eigenvector centrality, and
//!    the transformed matrix Ω̃ = I − Γ̃.
//! 4. [`portfolio`]: minimum-risk weights, risk decompositions, the Δ node-exclusion
//!    criterion and the sequential pruning algorithm.
//! 5. [`backtest`]: rolling-window out-of-sample evaluation and Sharpe-ratio tests.
//!
//! [`simulate`] generates synthetic panels for end-to-end runs and [`io`] reads and
//! writes the CSV formats used by the command-line tool.

pub mod backtest;
pub mod error;
pub mod io;
pub mod linalg;
pub mod netgraph;
pub mod panel;
pub mod portfolio;
pub mod quantreg;
pub mod riskmatrix;
pub mod simulate;

pub use error::{Error, Result};
pub use panel::ReturnPanel;
