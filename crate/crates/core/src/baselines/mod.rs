//! Classical comparison methods: scattered-data interpolators, per-pair
//! affine heads, a stand-alone MLP head and histogram matching.

mod affine;
mod histmatch;
mod interp;
mod mlp;

pub use affine::{fit_affine, AffineHead};
pub use histmatch::{build_histmatch, histogram_l1, HistMatchLut};
pub use interp::{interpolate, InterpMethod, Interpolated, DISTANCE_FLOOR};
pub use mlp::{fit_mlp_head, head_arch, HeadObjective, HeadPair, MlpHead};
