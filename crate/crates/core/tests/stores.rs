use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;
use trialagent_core::gateway::ToolCallRequest;
use trialagent_core::knowledge::{find_paths_default, DrugStore, HetioGraph, MatchKind, PathBounds};
use trialagent_core::risk::{EntityKind, OutcomeTable};
use trialagent_core::tools::{drug_statistics_tool, hetionet_tool, ToolRegistry};
use trialagent_core::{normalize_name, parse_trial_dataset, IngestMode, Label, Phase, TrialRecord};

fn data(name: &str) -> File {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", "data", name].iter().collect();
    File::open(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn fixture_graph_links_aggrenox_to_stroke_twice() {
    let graph = HetioGraph::load(data("hetionet.tsv"), IngestMode::Strict).unwrap().value;
    let paths = find_paths_default(&graph, "Aggrenox capsule", "cerebrovascular accident").unwrap();
    assert_eq!(paths.len(), 2);
    assert!(paths.iter().all(|p| p.is_well_formed() && p.len() <= 4));
    assert!(paths.windows(2).all(|w| w[0].len() <= w[1].len()));
    // a tighter bound can only drop paths
    let short = graph.find_paths("Aggrenox capsule", "cerebrovascular accident", PathBounds { max_len: 2, max_paths: 25 }).unwrap();
    assert!(short.iter().all(|p| paths.contains(p)));
}

#[test]
fn minimal_graph_has_the_single_direct_edge() {
    let graph = HetioGraph::load(data("minimal_hetionet.tsv"), IngestMode::Strict).unwrap().value;
    let paths = find_paths_default(&graph, "aspirin", "stroke").unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(paths[0].len(), 1);
}

#[test]
fn drugbank_fixture_resolves_exact_and_fuzzy_names() {
    let store = DrugStore::load(data("drugbank.tsv")).unwrap().value;
    assert_eq!(store.len(), 6);
    let exact = store.lookup("ASPIRIN").unwrap();
    assert_eq!(exact.kind, MatchKind::Exact);
    let fuzzy = store.lookup("aggrenox capsules").unwrap();
    assert_eq!(fuzzy.kind, MatchKind::Fuzzy);
    assert!(fuzzy.similarity >= 0.6 && fuzzy.similarity < 1.0);
    assert!(store.lookup("zzzzzzzz").is_none());
}

#[test]
fn history_fixture_drives_the_statistics_tool() {
    let history = parse_trial_dataset(data("history.csv"), IngestMode::Strict).unwrap().records;
    let table = Arc::new(OutcomeTable::build(&history, EntityKind::Drug).unwrap());
    let registry = ToolRegistry::new().with(drug_statistics_tool(table)).unwrap();
    let call = ToolCallRequest::new("c", "drug_historical_statistics", r#"{"drug_name":"Aggrenox Capsule"}"#);
    let result = registry.dispatch(&call);
    assert!(!result.is_error);
    assert!(result.content.starts_with("Historical failure rate 1.0 for drug \"aggrenox capsule\" over 2 past trial(s)"));
}

#[test]
fn hetionet_tool_reports_unresolvable_entities_as_errors() {
    let graph = Arc::new(HetioGraph::load(data("hetionet.tsv"), IngestMode::Strict).unwrap().value);
    let registry = ToolRegistry::new().with(hetionet_tool(graph, PathBounds::default())).unwrap();
    let call = ToolCallRequest::new("c", "retrieval_hetionet", r#"{"drug_name":"qqqqqq","disease_name":"stroke"}"#);
    assert!(registry.dispatch(&call).is_error);
}

fn labeled(i: usize, drugs: Vec<String>, success: bool) -> TrialRecord {
    TrialRecord::new(format!("T{i}"), Phase::Three, drugs, vec!["x".into()], "")
        .unwrap()
        .with_label(Label::from_int(i64::from(success)).unwrap())
}

proptest! {
    #[test]
    fn outcome_table_matches_a_recount(
        rows in prop::collection::vec((prop::collection::vec(0usize..6, 1..4), any::<bool>()), 1..60)
    ) {
        let names = ["Alpha", "ALPHA ", "beta", "Gamma", "delta", "epsilon"];
        let records: Vec<TrialRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (picks, ok))| labeled(i, picks.iter().map(|&p| names[p].to_string()).collect(), *ok))
            .collect();
        let table = OutcomeTable::build(&records, EntityKind::Drug).unwrap();

        let mut recount: BTreeMap<String, (u32, u32)> = BTreeMap::new();
        for record in &records {
            let mut distinct: Vec<String> = record.drugs.iter().map(|d| normalize_name(d)).collect();
            distinct.sort();
            distinct.dedup();
            for name in distinct {
                let entry = recount.entry(name).or_default();
                entry.1 += 1;
                entry.0 += u32::from(record.label.unwrap().is_success());
            }
        }
        prop_assert_eq!(table.len(), recount.len());
        for (name, (success, total)) in recount {
            let counts = table.counts(&name).unwrap();
            prop_assert_eq!((counts.success, counts.total), (success, total));
            let score = table.failure_rate(&name).unwrap();
            prop_assert!((score.failure_rate - (1.0 - f64::from(success) / f64::from(total))).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&score.failure_rate));
        }
    }
}
