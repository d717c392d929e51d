//! Functional multidimensional scaling (FMDS).
//!
//! Each object `i` is represented by a smooth trajectory `x_i(t) = C_i β(t)`,
//! where `β(t)` is a clamped cubic B-spline basis and `C_i` is a `p × q`
//! coefficient matrix. The coefficients are fitted to time-varying
//! dissimilarities `d_ij(t_k)` with a pairwise Adam scheme, and fitted
//! solutions can be aligned to a reference by optimizing over the orthogonal
//! group.
//!
//! Module map:
//!
//! - [`basis`]: B-spline basis construction and evaluation.
//! - [`dissim`]: dissimilarity series (Euclidean or price-correlation based).
//! - [`cmds`]: classical MDS and coefficient initialization.
//! - [`optimizer`]: target function, pairwise gradients, and the Adam fit.
//! - [`align`]: curvilinear search for the best orthogonal alignment.
//! - [`sim`]: synthetic scenarios, error metrics, and replication studies.
//! - [`report`]: snapshots, clustering, Shepard data, and residual summaries.
//! - [`io`]: CSV / JSON readers and writers for all of the above.

pub mod align;
pub mod basis;
pub mod cmds;
pub mod coeffs;
pub mod dissim;
mod error;
pub mod io;
pub mod linalg;
pub mod optimizer;
pub mod report;
pub mod sim;

pub use align::{align, AlignmentResult, CurvilinearConfig};
pub use basis::{BasisSpec, GridBasis};
pub use cmds::{classical_mds, init_coeffs, InitStrategy};
pub use coeffs::CoeffSet;
pub use dissim::{DissimilaritySeries, PricePanel, SuperMatrix};
pub use error::{FmdsError, Result};
pub use optimizer::{fit, FitConfig, FitResult};
pub use sim::{ScenarioConfig, StudyReport};

pub use nalgebra;
