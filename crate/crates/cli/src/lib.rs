//! Experiment runner for akq-core: strict run configurations, a
//! content-addressed spectra cache, suite execution and CSV/JSON reports.

pub mod cache;
pub mod config;
pub mod engine;
pub mod report;
pub mod suites;

pub use cache::{CacheEntry, CacheError, SpectraCache};
pub use config::{RunConfig, SuiteEntry, SuiteKind};
pub use engine::Engine;
pub use report::{RunReport, SuiteReport};
