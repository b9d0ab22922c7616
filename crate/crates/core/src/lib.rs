pub mod dataset;
pub mod image_ops;
pub mod meta;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod tensor;
