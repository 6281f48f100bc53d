//! Local evidence sources for the efficacy agent: a drug-description store
//! and a typed biomedical graph with bounded path search.

mod drugbank;
mod graph;

use serde::Serialize;

pub use crate::error::StoreError;
pub use drugbank::{DrugEntry, DrugMatch, DrugStore, DRUGBANK_COLUMNS};
pub use graph::{
    find_paths_default, render_path, Direction, HetioGraph, HetioPath, NodeKind, NodeRef, PathBounds, PathStep,
    HETIONET_COLUMNS,
};

/// Fuzzy threshold for resolving drug and graph entity names. Looser than
/// the risk-table threshold since graph and catalogue names are noisier.
pub const ENTITY_RESOLUTION_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Fuzzy,
}

/// A loaded value plus the non-fatal issues seen while loading it.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}
