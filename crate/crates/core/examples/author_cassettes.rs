//! Regenerates the replay cassettes under `fixtures/`.
//!
//! The model side of every exchange is scripted here; the tool side comes
//! from running the real tools over the fixture stores. Run with
//! `cargo run -p trialagent-core --example author_cassettes [FIXTURES_DIR]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use trialagent_core::agent::{AgentRole, Engine, EngineSettings, PromptSet, Resources};
use trialagent_core::gateway::{ChatMessage, CompletionRequest, FnBackend, GatewayError, RecordingBackend, Role, ToolCallRequest};
use trialagent_core::knowledge::{DrugStore, HetioGraph, PathBounds};
use trialagent_core::risk::{EnrollmentModel, EntityKind, OutcomeTable};
use trialagent_core::{parse_trial_dataset, IngestMode, TrialRecord};

/// Scripted replies per role, indexed by turn; the last reply repeats.
struct Script {
    planner: String,
    turns: BTreeMap<AgentRole, Vec<ChatMessage>>,
    reasoning: String,
}

fn call(id: &str, name: &str, args: serde_json::Value) -> ToolCallRequest {
    ToolCallRequest::new(id, name, args.to_string())
}

fn calls(thought: &str, calls: Vec<ToolCallRequest>) -> ChatMessage {
    ChatMessage::assistant_with_calls(thought, calls)
}

fn say(text: &str) -> ChatMessage {
    ChatMessage::assistant(text)
}

fn canonical_planner(record: &TrialRecord) -> String {
    let drug = record.drugs.join(" and ").to_lowercase();
    let disease = record.diseases.join(" and ").to_lowercase();
    format!(
        "Thought: The outcome question splits into recruitment, safety and efficacy.\n\
Subproblem 1 (Enrollment Agent): Determine the level of enrollment feasibility based on inclusion and exclusion criteria.\n\
Subproblem 2 (Safety Agent): Evaluate the safety of the drug \"{drug}\"\n\
Subproblem 3 (Efficacy Agent): Assess the efficacy of the drug \"{drug}\" on the disease \"{disease}\""
    )
}

fn run(label: &str, script: Script, resources: &Resources, record: &TrialRecord, out: &Path) {
    let prompts = PromptSet::builtin();
    let systems: Vec<(AgentRole, String)> = AgentRole::ALL.iter().map(|&r| (r, prompts.get(r).render())).collect();
    let script = Arc::new(script);
    let backend = RecordingBackend::new(FnBackend(move |request: &CompletionRequest| -> Result<ChatMessage, GatewayError> {
        let system = &request.messages[0].content;
        let role = systems.iter().find(|(_, s)| s == system).map(|(r, _)| *r).expect("known role");
        let turn = request.messages.iter().filter(|m| m.role == Role::Assistant).count();
        Ok(match role {
            AgentRole::Planning => say(&script.planner),
            AgentRole::Reasoning => say(&script.reasoning),
            specialist => {
                let replies = &script.turns[&specialist];
                replies[turn.min(replies.len() - 1)].clone()
            }
        })
    }));
    let backend = Arc::new(backend);
    let settings = EngineSettings { concurrent_specialists: false, ..EngineSettings::default() };
    let engine = Engine::new(backend.clone(), resources.clone()).with_settings(settings);
    match engine.predict(record) {
        Ok(result) => println!("{label}: probability {} decision {}", result.probability, result.decision),
        Err(err) => println!("{label}: {err}"),
    }
    backend.save(out).expect("write cassette");
    println!("  -> {} ({} exchanges)", out.display(), backend.cassette().len());
}

fn load_record(path: &Path) -> TrialRecord {
    serde_json::from_str(&fs::read_to_string(path).expect("read trial")).expect("parse trial")
}

fn main() {
    let root: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures"].iter().collect());
    let data = root.join("data");
    let history = parse_trial_dataset(fs::File::open(data.join("history.csv")).unwrap(), IngestMode::Strict).unwrap().records;
    let resources = Resources {
        drugbank: Arc::new(DrugStore::load(fs::File::open(data.join("drugbank.tsv")).unwrap()).unwrap().value),
        hetionet: Arc::new(
            HetioGraph::load(fs::File::open(data.join("hetionet.tsv")).unwrap(), IngestMode::Strict).unwrap().value,
        ),
        drug_outcomes: Arc::new(OutcomeTable::build(&history, EntityKind::Drug).unwrap()),
        disease_outcomes: Arc::new(OutcomeTable::build(&history, EntityKind::Disease).unwrap()),
        enrollment: Some(Arc::new(EnrollmentModel::load(data.join("enrollment_model.json")).unwrap())),
        path_bounds: PathBounds::default(),
    };

    let case = load_record(&root.join("case_study/trial.json"));
    let case_turns = |efficacy: Vec<ChatMessage>, safety: Vec<ChatMessage>| -> BTreeMap<AgentRole, Vec<ChatMessage>> {
        BTreeMap::from([
            (
                AgentRole::Enrollment,
                vec![
                    calls("", vec![call("call_enr_1", "enrollment_prediction_model", serde_json::json!({"trial_id": case.trial_id}))]),
                    say("The enrollment prediction model returns a failure rate of 0.3597. That is a moderate level of \
enrollment difficulty: the recent-infarction window, the age floor and the bleeding and intolerance exclusions \
shrink the eligible population, so recruiting enough patients will take effort."),
                ],
            ),
            (AgentRole::Safety, safety),
            (AgentRole::Efficacy, efficacy),
        ])
    };
    let case_safety = vec![
        calls(
            "I will look up the trial history of the drug and the disease.",
            vec![
                call("call_saf_1", "drug_historical_statistics", serde_json::json!({"drug_name": "Aggrenox capsule"})),
                call("call_saf_2", "disease_historical_statistics", serde_json::json!({"disease_name": "cerebrovascular accident"})),
            ],
        ),
        say("Aggrenox capsule has a historical failure rate of 1.0: none of its previous trials succeeded. Trials in \
cerebrovascular accident have a historical failure rate of 0.5. Given bleeding risk in this population, the safety \
outlook is poor."),
    ];
    let case_efficacy = vec![
        calls(
            "",
            vec![
                call("call_eff_1", "retrieval_hetionet", serde_json::json!({"drug_name": "Aggrenox capsule", "disease_name": "cerebrovascular accident"})),
                call("call_eff_2", "retrieval_drugbank", serde_json::json!({"drug_name": "Aggrenox capsule"})),
            ],
        ),
        say("Aggrenox capsule combines aspirin and extended-release dipyridamole. Hetionet links it to cerebrovascular \
accident through aspirin's binding of PTGS1 and through aspirin treating cerebral infarction. The antiplatelet and \
vasodilatory mechanism fits secondary stroke prevention."),
    ];
    let case_reasoning = "Enrollment is moderately difficult (predicted enrollment failure rate 0.3597). Every earlier \
trial of Aggrenox capsule failed (historical failure rate 1.0). The mechanism fits stroke prevention, but that does \
not outweigh the trial history and the safety concerns, so the chance of success is very low.\nPrediction: 0.0";

    run(
        "case study",
        Script {
            planner: canonical_planner(&case),
            turns: case_turns(case_efficacy.clone(), case_safety.clone()),
            reasoning: case_reasoning.into(),
        },
        &resources,
        &case,
        &root.join("case_study/cassette.json"),
    );

    // efficacy first calls a tool that does not exist, then recovers
    let mut recovering = vec![calls(
        "Let me try a combined lookup.",
        vec![call("call_eff_0", "frobnicate", serde_json::json!({"drug_name": "Aggrenox capsule"}))],
    )];
    recovering.extend(case_efficacy.clone());
    run(
        "unknown tool",
        Script {
            planner: canonical_planner(&case),
            turns: case_turns(recovering, case_safety.clone()),
            reasoning: case_reasoning.into(),
        },
        &resources,
        &case,
        &root.join("cassettes/unknown_tool.json"),
    );

    // safety never stops calling tools
    let looping = vec![calls(
        "Checking the history once more.",
        vec![call("call_loop", "drug_historical_statistics", serde_json::json!({"drug_name": "Aggrenox capsule"}))],
    )];
    run(
        "iteration cap",
        Script { planner: canonical_planner(&case), turns: case_turns(case_efficacy.clone(), looping), reasoning: case_reasoning.into() },
        &resources,
        &case,
        &root.join("cassettes/iteration_cap.json"),
    );

    run(
        "malformed plan",
        Script {
            planner: "I cannot help with that.".into(),
            turns: BTreeMap::from([
                (AgentRole::Enrollment, vec![say("Enrollment looks moderately difficult.")]),
                (AgentRole::Safety, vec![say("Safety history is poor.")]),
                (AgentRole::Efficacy, vec![say("The mechanism fits the disease.")]),
            ]),
            reasoning: "Mixed evidence with a poor safety history.\nPrediction: 0.3".into(),
        },
        &resources,
        &case,
        &root.join("cassettes/malformed_plan.json"),
    );

    let unknown = load_record(&root.join("cassettes/unknown_drug_trial.json"));
    run(
        "unknown drug",
        Script {
            planner: canonical_planner(&unknown),
            turns: BTreeMap::from([
                (
                    AgentRole::Enrollment,
                    vec![
                        calls("", vec![call("call_enr_1", "enrollment_prediction_model", serde_json::json!({"trial_id": unknown.trial_id}))]),
                        say("The predicted enrollment failure rate is 0.3597, a moderate difficulty."),
                    ],
                ),
                (
                    AgentRole::Safety,
                    vec![
                        calls(
                            "",
                            vec![
                                call("call_saf_1", "drug_historical_statistics", serde_json::json!({"drug_name": "Zorbelimab"})),
                                call("call_saf_2", "disease_historical_statistics", serde_json::json!({"disease_name": "Qualtrex syndrome"})),
                            ],
                        ),
                        say("There is no historical data for Zorbelimab or for Qualtrex syndrome, so the safety record cannot be judged from past trials."),
                    ],
                ),
                (
                    AgentRole::Efficacy,
                    vec![
                        calls("", vec![call("call_eff_1", "retrieval_drugbank", serde_json::json!({"drug_name": "Zorbelimab"}))]),
                        say("Zorbelimab is not in DrugBank, so there is no mechanistic evidence either way."),
                    ],
                ),
            ]),
            reasoning: "Little evidence is available; enrollment is moderately difficult.\nPrediction: 0.4".into(),
        },
        &resources,
        &unknown,
        &root.join("cassettes/unknown_drug.json"),
    );

    let suite = parse_trial_dataset(fs::File::open(root.join("eval/trials.csv")).unwrap(), IngestMode::Strict).unwrap().records;
    for (record, probability) in suite.iter().zip(["0.9", "0.8", "0.3", "0.2"]) {
        let drug = record.drugs[0].clone();
        let turns = BTreeMap::from([
            (
                AgentRole::Enrollment,
                vec![
                    calls("", vec![call("call_enr_1", "enrollment_prediction_model", serde_json::json!({"trial_id": record.trial_id}))]),
                    say("The predicted enrollment failure rate is 0.3597."),
                ],
            ),
            (
                AgentRole::Safety,
                vec![
                    calls("", vec![call("call_saf_1", "drug_historical_statistics", serde_json::json!({"drug_name": drug}))]),
                    say(&format!("Historical statistics for {drug} were retrieved.")),
                ],
            ),
            (AgentRole::Efficacy, vec![say(&format!("{drug} has a plausible mechanism for the disease."))]),
        ]);
        run(
            &record.trial_id,
            Script {
                planner: canonical_planner(record),
                turns,
                reasoning: format!("Weighing the three reports.\nPrediction: {probability}"),
            },
            &resources,
            record,
            &root.join(format!("eval/cassettes/{}.json", record.trial_id)),
        );
    }
}
