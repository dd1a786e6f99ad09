pub mod bench;
pub mod cache;
pub mod clustering;
pub mod columnar;
pub mod encoder;
pub mod fingerprint;
pub mod ingest;
pub mod pipeline;
pub mod projection;
pub mod series;
pub mod service;
pub mod store;
pub mod synthetic;
