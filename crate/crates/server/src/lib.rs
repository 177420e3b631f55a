//! HTTP service, benchmark runner and on-disk session store.

pub mod api;
pub mod bench;
pub mod store;

pub use api::{router, serve, AppState, ServerConfig};
