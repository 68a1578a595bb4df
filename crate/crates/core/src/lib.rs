//! Cohort exploration engine over nested patient records.
//!
//! * [`datamodel`]: the patient → child event → field hierarchy.
//! * [`ingest`]: JSON-lines/CSV/letter ingestion into a two-tier store.
//! * [`index`]: immutable nested-document index with block-local children.
//! * [`query`]: removable restrictions, facet reports and free-text search.
//! * [`extract`]: dictionary/rule annotation with negation scope.
//! * [`timeline`]: episode, focus-range and significance filters.

pub mod datamodel;
pub mod demo;
pub mod extract;
pub mod ingest;
pub mod index;
pub mod par;
pub mod query;
pub mod text;
pub mod timeline;
