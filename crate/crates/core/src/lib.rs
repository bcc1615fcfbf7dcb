//! Geographically diverse micro-blog timelines.
//!
//! The crate covers the whole offline pipeline: corpus validation and
//! ingestion, timeline selection (popularity, entropy-greedy, and the
//! location-sidelining variant), squarified treemap layout, random-walk
//! betweenness over location interaction graphs, the publication bot's
//! composition logic, and the regression toolkit used on interaction logs.

pub mod analytics;
pub mod bot;
pub mod centrality;
pub mod diversity;
pub mod error;
pub mod events;
pub mod ingestion;
pub mod issue;
pub mod layout;
pub mod model;

pub use error::{BotError, CentralityError, ConfigError, EventError, FilterError, FitError, LayoutError, ValidationError};
pub use model::{Author, Gazetteer, LocationId, LocationRegistry, Method, MicroPost, PopulationTable, TimeWindow, Timeline};
