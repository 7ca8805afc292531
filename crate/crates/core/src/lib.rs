//! Individualized HRTF modeling: spatial PCA of a measured database,
//! anthropometry-driven neural predictors, minimum-phase HRIR synthesis and
//! objective evaluation.
//!
//! Numeric types are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar.

pub mod anthro;
pub mod bundle;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod mlp;
pub mod pca_baseline;
pub mod predictors;
pub mod scalar;
pub mod spca;
pub mod synthesis;
pub mod synthetic;

pub use anthro::{pearson_matrix, regress_weights_on_anthro, selected_parameters, selection_report, SelectionReport};
pub use bundle::{GenericHrirs, PredictorBundle};
pub use dataset::{
    load_dataset, make_split, save_dataset, AnthroParams, DirectionGrid, Ear, Hemisphere, HrtfDataset, SplitPlan,
};
pub use dsp::{apply_itd, extract_itd, hrir_to_log_spectrum, min_phase_hrir, LogSpectrum, MagnitudeSpectrum, SpectralPlan};
pub use error::{Error, Result};
pub use evaluation::{error_summary, sd_report, sfrs, spectral_distortion, variance_table, ErrorSummary, SdReport, SfrsMap};
pub use linalg::Matrix;
pub use mlp::{MlpNetwork, TrainConfig};
pub use pca_baseline::{fit_direction_pca, DirectionPcaModel, PcaBaseline};
pub use predictors::{Family, PipelineConfig};
pub use scalar::Real;
pub use spca::{fit_hemispheres, LogHrtfTensor, SpcaModel};
pub use synthesis::{export_hrir, synthesize, ExportFormat, Method, SynthRequest, SynthResult};
pub use synthetic::{synthetic_dataset, SyntheticConfig};

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type SpcaModelF64 = SpcaModel<f64>;
pub type SpcaModelF32 = SpcaModel<f32>;
pub type LogHrtfTensorF64 = LogHrtfTensor<f64>;
pub type LogHrtfTensorF32 = LogHrtfTensor<f32>;
pub type MlpF64 = MlpNetwork<f64>;
pub type MlpF32 = MlpNetwork<f32>;
pub type BundleF64 = PredictorBundle<f64>;
pub type BundleF32 = PredictorBundle<f32>;
pub type PcaBaselineF64 = PcaBaseline<f64>;
pub type PcaBaselineF32 = PcaBaseline<f32>;
pub type SynthResultF64 = SynthResult<f64>;
pub type SynthResultF32 = SynthResult<f32>;
