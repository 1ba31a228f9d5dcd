//! Network design, construction and persistence.

pub mod model_io;
pub mod network;
pub mod receptive;
pub mod spec;

pub use model_io::{load_model, save_model};
pub use network::{BnStats, Layer, Network, RunMode, Trace};
pub use receptive::{enumerate_first_layer, receptive_field, FirstLayerPlan, ReceptiveField};
pub use spec::{build_dnn, build_mskacnn, build_wdcnn, ArchitectureSpec, LayerSpec, ModelKind, Shape, MSKACNN_WIDTHS};

/// Trained parameters at storage precision.
pub type ModelParameters = Network<f32>;
