//! Engine for evaluating machine-translation system outputs: runs and
//! instances, native BLEU and a diff-based annotator, external scorer
//! adapters, clause-chain search over error annotations, dashboards and
//! consent-gated ranking feedback, all persisted in one SQLite file.

pub mod analytics;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod ingestion;
pub mod metrics;
pub mod model;
pub mod page;
pub mod search;
pub mod store;

pub use engine::{Canvas, CanvasConfig};
pub use error::{Error, ErrorKind, Result};
pub use page::{Page, PageRequest};
