//! Classifier and segmenter assembly, training, evaluation and checkpoints.

mod ablation;
mod bench;
mod checkpoint;
mod graph;
mod loss;
mod metrics;
mod model;
mod optim;
mod resblock;
mod segmenter;
mod spec;
mod train;

pub use ablation::{ablation_run, AblationReport, AblationRow};
pub use bench::{benchmark_inference, BenchReport};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::LayerGraph;
pub use loss::{class_weights_from_frequencies, cross_entropy, ClassWeights};
pub use metrics::{argmax_classes, evaluate, metrics_from_predictions, predict, MetricReport};
pub use model::{build_classifier, build_segmenter, Model};
pub use optim::{lr_schedule, Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use resblock::ResBlock;
pub use segmenter::Segmenter;
pub use spec::{ArchitectureSpec, ResBlockSpec, Task};
pub use train::{latest_checkpoint, train, ClassWeightMode, EpochReport, TrainConfig, TrainReport, Trainer};
