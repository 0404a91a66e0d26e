//! Machine unlearning for semantic communication codecs.

pub mod channel;
pub mod codec;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod losses;
pub mod report;
pub mod tensor;
pub mod unlearn;

pub use channel::{Channel, ChannelConfig, ChannelKind, IdealChannel, ReplayChannel, Transmit};
pub use codec::{ClassifierConfig, CodecConfig, DownstreamClassifier, GaussianLatent, SemanticCodec};
pub use config::ExperimentConfig;
pub use data::{BackdoorSpec, LabeledDataset, SplitDataset};
pub use error::{Error, Result};
pub use eval::{Headline, MetricsReport, PreparedCell};
pub use losses::UnlearnConfig;
pub use report::{emit_report, ReportFormat};
pub use tensor::{no_grad, Parameter, Tensor};
pub use unlearn::{Method, TrainConfig, TrainReport};
