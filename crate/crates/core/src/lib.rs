pub mod api;
pub mod asr;
pub mod audio;
pub mod batch;
pub mod bioacoustics;
pub mod config;
pub mod content;
pub mod pipeline;
pub mod queue;
pub mod record;
pub mod scaling;
pub mod service;
pub mod store;
pub mod stub;
pub mod surge;
pub mod synth;
