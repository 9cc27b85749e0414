//! Deterministic linear algebra, the small trainable network, optimizers,
//! schedules, and k-means shared by the rest of the crate.

pub mod classifier;
pub mod kmeans;
pub mod linalg;
pub mod net;
pub mod optim;
pub mod rng;
pub mod schedule;

pub use classifier::CosineClassifier;
pub use kmeans::{kmeans, KMeansResult};
pub use linalg::{
    argmax, dot, l2_normalize, norm, normalize_in_place, softmax_temp, softmax_temp_backward, DenseVector, Matrix,
};
pub use net::{Parameters, SmallNet, Trainable};
pub use optim::{ema_params, SgdMomentum};
pub use schedule::{schedule_value, CosineSchedule};
