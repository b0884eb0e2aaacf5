//! Chart-based Riemannian geometry: jets, curvature, endomorphism analysis,
//! bundle constructions and geodesics.

// Index loops mirror the tensor formulas; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod analysis;
pub mod chart;
pub mod constructions;
pub mod curvature;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod jet;
pub mod oracle;
pub mod tensor;

pub use chart::{Axis, ChartPatch, MetricData, TangentVector};
pub use error::{GeometryError, Result};
pub use field::{EndoField, OneFormField, TensorField, TwoFormField, VectorField};
pub use jet::Jet;
pub use tensor::{JetTensor, Slot, Tensor};
