//! Document binarization engine: data pipeline, classical baselines,
//! DIBCO metrics, and the adversarially trained augmentation/binarization
//! network pair.

pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod extractor;
pub mod image;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod pipeline;
pub mod pnm;
pub mod trainer;

pub use error::{CoreError, Result};
pub use image::{load_image, save_binary, save_gray, BinaryImage, GrayImage};
