use std::sync::Arc;

use serde_json::{json, Value};

use super::{Arguments, ToolDefinition};
use crate::knowledge::{render_path, DrugStore, HetioGraph, MatchKind, PathBounds};
use crate::risk::{EnrollmentPredictor, OutcomeTable, RiskScore};
use crate::trial::{normalize_name, TrialRecord};

pub const DRUGBANK_RETRIEVAL: &str = "retrieval_drugbank";
pub const HETIONET_RETRIEVAL: &str = "retrieval_hetionet";
pub const DRUG_STATISTICS: &str = "drug_historical_statistics";
pub const DISEASE_STATISTICS: &str = "disease_historical_statistics";
pub const ENROLLMENT_MODEL: &str = "enrollment_prediction_model";

const DRUGBANK_DESCRIPTION: &str =
    "Retrieves information about a drug from the DrugBank database using the drug's name as input.";

const HETIONET_DESCRIPTION: &str = "Given the names of a drug and a disease, the model retrieves the path \
connecting the drug to the disease from the Hetionet Knowledge Graph. Hetionet is a comprehensive knowledge \
graph that integrates diverse biological information by connecting genes, diseases, compounds, and more into \
an interoperable framework. It structures real-world biomedical data into a network, facilitating advanced \
analysis and discovery of new insights into disease mechanisms, drug repurposing, and the genetic underpinnings \
of health and disease.";

/// Four decimals with trailing zeros removed, keeping at least one: `1.0`, `0.3597`.
pub fn format_rate(value: f64) -> String {
    let text = format!("{value:.4}");
    let trimmed = text.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

fn text_arg<'a>(args: &'a Arguments, key: &str) -> Result<&'a str, String> {
    match args.get(key).and_then(Value::as_str).map(str::trim) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(format!("argument \"{key}\" must be a non-empty string")),
    }
}

fn similarity_note(query: &str, matched: &str, similarity: f64) -> String {
    if normalize_name(query) == matched {
        String::new()
    } else {
        format!(" (closest match to \"{query}\", similarity {})", format_rate(similarity))
    }
}

pub fn drugbank_tool(store: Arc<DrugStore>) -> ToolDefinition {
    let parameters = json!({
        "type": "object",
        "properties": {
            "drug_name": {"type": "string", "description": "The name of the drug."}
        },
        "required": ["drug_name"]
    });
    ToolDefinition::new(DRUGBANK_RETRIEVAL, DRUGBANK_DESCRIPTION, parameters, move |args: &Arguments| {
        let query = text_arg(args, "drug_name")?;
        let found = store.lookup(query).ok_or_else(|| format!("drug \"{query}\" was not found in DrugBank"))?;
        let entry = found.entry;
        let mut out = format!("Drug: {}", entry.name);
        if found.kind == MatchKind::Fuzzy {
            out.push_str(&format!(" (closest match to \"{query}\", similarity {})", format_rate(found.similarity)));
        }
        for (label, value) in [
            ("Description", &entry.description),
            ("Indication", &entry.indication),
            ("Mechanism of action", &entry.mechanism),
            ("SMILES", &entry.smiles),
        ] {
            if !value.is_empty() {
                out.push_str(&format!("\n{label}: {value}"));
            }
        }
        Ok(out)
    })
}

pub fn hetionet_tool(graph: Arc<HetioGraph>, bounds: PathBounds) -> ToolDefinition {
    let parameters = json!({
        "type": "object",
        "properties": {
            "drug_name": {"type": "string", "description": "The drug name"},
            "disease_name": {"type": "string", "description": "The disease name"}
        },
        "required": ["drug_name", "disease_name"]
    });
    ToolDefinition::new(HETIONET_RETRIEVAL, HETIONET_DESCRIPTION, parameters, move |args: &Arguments| {
        let drug = text_arg(args, "drug_name")?;
        let disease = text_arg(args, "disease_name")?;
        let paths = graph.find_paths(drug, disease, bounds).map_err(|e| e.to_string())?;
        if paths.is_empty() {
            return Ok(format!(
                "No path connects \"{drug}\" to \"{disease}\" within {} edges in Hetionet.",
                bounds.max_len
            ));
        }
        let mut out = format!("Found {} path(s) connecting \"{drug}\" to \"{disease}\" in Hetionet:", paths.len());
        for (i, path) in paths.iter().enumerate() {
            out.push_str(&format!("\n{}. {}", i + 1, render_path(path)));
        }
        Ok(out)
    })
}

fn statistics_tool(name: &str, entity: &'static str, table: Arc<OutcomeTable>) -> ToolDefinition {
    let parameter = format!("{entity}_name");
    let parameters = json!({
        "type": "object",
        "properties": {
            parameter.clone(): {"type": "string", "description": format!("The name of the {entity}.")}
        },
        "required": [parameter.clone()]
    });
    let description = format!(
        "Retrieves the historical failure rate of a {entity} in past clinical trials, computed as one minus the \
mean of its trial outcomes, using the {entity}'s name as input."
    );
    ToolDefinition::new(name, description, parameters, move |args: &Arguments| {
        let query = text_arg(args, &parameter)?;
        Ok(match table.failure_rate(query) {
            Some(RiskScore { failure_rate, matched_name, match_similarity, support }) => format!(
                "Historical failure rate {} for {entity} \"{matched_name}\" over {support} past trial(s){}.",
                format_rate(failure_rate),
                similarity_note(query, &matched_name, match_similarity)
            ),
            None => format!("no historical data for {entity} \"{query}\""),
        })
    })
}

pub fn drug_statistics_tool(table: Arc<OutcomeTable>) -> ToolDefinition {
    statistics_tool(DRUG_STATISTICS, "drug", table)
}

pub fn disease_statistics_tool(table: Arc<OutcomeTable>) -> ToolDefinition {
    statistics_tool(DISEASE_STATISTICS, "disease", table)
}

/// Bound to the trial under evaluation; the `trial_id` argument is informational.
/// Without a predictor every call reports an error observation.
pub fn enrollment_tool(predictor: Option<Arc<dyn EnrollmentPredictor>>, record: TrialRecord) -> ToolDefinition {
    let parameters = json!({
        "type": "object",
        "properties": {
            "trial_id": {"type": "string", "description": "The identifier of the clinical trial."}
        },
        "required": []
    });
    let description = "Predicts the enrollment failure rate of the clinical trial under consideration from its \
inclusion and exclusion criteria, drugs and diseases.";
    ToolDefinition::new(ENROLLMENT_MODEL, description, parameters, move |_: &Arguments| {
        let predictor = predictor.as_ref().ok_or("no enrollment prediction model is configured")?;
        let success = predictor.success_probability(&record).map_err(|e| e.to_string())?;
        Ok(format!("Predicted enrollment failure rate: {}", format_rate(1.0 - success)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ToolCallRequest;
    use crate::knowledge::{DrugEntry, NodeKind};
    use crate::risk::{EntityKind, RiskError};
    use crate::tools::{canonical_json, ToolRegistry};
    use crate::trial::Phase;

    fn run(tool: ToolDefinition, arguments: Value) -> (bool, String) {
        let registry = ToolRegistry::new().with(tool).unwrap();
        let name = registry.names()[0].to_string();
        let result = registry.dispatch(&ToolCallRequest::new("c", name, arguments.to_string()));
        (result.is_error, result.content)
    }

    fn aggrenox_table(kind: EntityKind, name: &str) -> Arc<OutcomeTable> {
        Arc::new(OutcomeTable::from_counts(kind, [(name, crate::risk::OutcomeCounts { success: 0, total: 2 })]).unwrap())
    }

    #[test]
    fn rates_format_compactly() {
        assert_eq!(format_rate(1.0), "1.0");
        assert_eq!(format_rate(0.0), "0.0");
        assert_eq!(format_rate(0.35970000001), "0.3597");
        assert_eq!(format_rate(0.25), "0.25");
    }

    #[test]
    fn drug_statistics_reports_rate() {
        let (err, text) = run(drug_statistics_tool(aggrenox_table(EntityKind::Drug, "Aggrenox capsule")), json!({"drug_name": "Aggrenox capsule"}));
        assert!(!err);
        assert!(text.contains("failure rate 1.0"), "{text}");
    }

    #[test]
    fn unknown_entity_has_no_data() {
        let (err, text) = run(disease_statistics_tool(aggrenox_table(EntityKind::Disease, "stroke")), json!({"disease_name": "zzzz"}));
        assert!(!err);
        assert!(text.starts_with("no historical data"), "{text}");
    }

    #[test]
    fn fuzzy_statistics_mention_the_match() {
        let (_, text) = run(drug_statistics_tool(aggrenox_table(EntityKind::Drug, "Aggrenox capsule")), json!({"drug_name": "Aggrenox capsules"}));
        assert!(text.contains("closest match") && text.contains("0.9412"), "{text}");
    }

    #[test]
    fn drugbank_renders_entry() {
        let store = DrugStore::from_entries([DrugEntry {
            name: "Aggrenox capsule".into(),
            description: "Aspirin plus extended-release dipyridamole".into(),
            indication: "secondary stroke prevention".into(),
            mechanism: "antiplatelet".into(),
            smiles: String::new(),
        }]);
        let (err, text) = run(drugbank_tool(Arc::new(store)), json!({"drug_name": "aggrenox CAPSULE"}));
        assert!(!err);
        assert!(text.starts_with("Drug: Aggrenox capsule\nDescription: Aspirin"), "{text}");
        assert!(!text.contains("SMILES"));
    }

    #[test]
    fn hetionet_paths_and_failures() {
        let mut graph = HetioGraph::default();
        graph.add_node("C1", NodeKind::Compound, "Aspirin");
        graph.add_node("D1", NodeKind::Disease, "stroke");
        graph.add_node("D2", NodeKind::Disease, "gout");
        graph.add_edge("C1", "treats", "D1").unwrap();
        let tool = || hetionet_tool(Arc::new(graph.clone()), PathBounds::default());
        let (err, text) = run(tool(), json!({"drug_name": "aspirin", "disease_name": "stroke"}));
        assert!(!err);
        assert!(text.ends_with("1. Aspirin(Compound) -[treats>]- stroke(Disease)"), "{text}");
        let (err, text) = run(tool(), json!({"drug_name": "aspirin", "disease_name": "gout"}));
        assert!(!err && text.starts_with("No path"), "{text}");
        let (err, text) = run(tool(), json!({"drug_name": "qqqqqq", "disease_name": "stroke"}));
        assert!(err && text.contains("qqqqqq"), "{text}");
        let (err, text) = run(tool(), json!({"drug_name": "aspirin"}));
        assert!(err && text.contains("disease_name"), "{text}");
    }

    struct Fixed(f64);
    impl EnrollmentPredictor for Fixed {
        fn success_probability(&self, _: &TrialRecord) -> Result<f64, RiskError> {
            Ok(self.0)
        }
    }

    #[test]
    fn enrollment_reports_failure_rate() {
        let record = TrialRecord::new("T", Phase::Two, vec!["x".into()], vec!["y".into()], "").unwrap();
        let (err, text) = run(enrollment_tool(Some(Arc::new(Fixed(0.6403))), record.clone()), json!({}));
        assert!(!err);
        assert_eq!(text, "Predicted enrollment failure rate: 0.3597");
        let (err, _) = run(enrollment_tool(None, record), json!({"trial_id": "T"}));
        assert!(err);
    }

    #[test]
    fn retrieval_schemas_are_well_formed() {
        let drugbank = drugbank_tool(Arc::new(DrugStore::default())).schema();
        assert!(canonical_json(&drugbank).starts_with(r#"{"function":{"description":"Retrieves information"#));
        let hetionet = hetionet_tool(Arc::new(HetioGraph::default()), PathBounds::default()).schema();
        assert_eq!(hetionet["function"]["parameters"]["required"], json!(["drug_name", "disease_name"]));
        assert!(!HETIONET_DESCRIPTION.contains("  "));
    }
}
