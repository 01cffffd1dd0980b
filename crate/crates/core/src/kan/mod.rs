//! Kolmogorov-Arnold layers: every input-output edge carries a learnable
//! univariate function, a silu base term plus a scaled B-spline.

mod bspline;
mod layer;
mod network;

pub use bspline::{bspline_basis, knot_avoiding_tensor, BSplineConfig, SparseBasis, MAX_ORDER};
pub use layer::{KanLayer, KanLayerCache};
pub use network::{build_kan, kan_param_count, KanCache, KanNetwork, KAN_OUTPUTS, KNOT_MARGIN};
