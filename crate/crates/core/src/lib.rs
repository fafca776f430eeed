//! Socially aware trajectory generation for crowd navigation: data
//! ingestion, the force-decomposed generator and its baseline, adversarial
//! training, closed-loop playback and evaluation.

pub mod batch;
pub mod bundle;
pub mod discriminator;
pub mod error;
pub mod generators;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod playback;
pub mod poolnet;
pub mod scene;
pub mod shard;
pub mod tape;
pub mod toy;
pub mod training;

pub use bundle::{ModelBundle, Variant};
pub use error::{Error, Result};
pub use geometry::Point;
pub use scene::{FrameConfig, Observation, Scene, SceneContext, TrainingSample};
