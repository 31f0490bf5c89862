//! Shared helpers for the integration tests: an independent rule oracle,
//! synthetic screening workspaces and the bundled liver-cancer example.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use eligo::Verdict;

pub const VALUES: [Verdict; 3] = [Verdict::Yes, Verdict::No, Verdict::Unknown];

/// Directory of the bundled two-note example.
pub fn liver_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/liver")
}

// ---------------------------------------------------------------------------
// Rule oracle
// ---------------------------------------------------------------------------

/// A rule as the test sees it. Kept apart from the crate's AST on purpose:
/// quantifiers stay as nodes and evaluation is written out from the
/// semantics, not shared with the engine.
#[derive(Debug, Clone)]
pub enum TestRule {
    Is(String, Verdict),
    IsNot(String, Verdict),
    Not(Box<TestRule>),
    And(Vec<TestRule>),
    Or(Vec<TestRule>),
    Any(Vec<String>, Verdict),
    All(Vec<String>, Verdict),
}

impl TestRule {
    pub fn text(&self) -> String {
        match self {
            TestRule::Is(q, v) => format!("{q} IS {v}"),
            TestRule::IsNot(q, v) => format!("{q} IS NOT {v}"),
            TestRule::Not(inner) => format!("NOT ({})", inner.text()),
            TestRule::And(c) => c.iter().map(|r| format!("({})", r.text())).collect::<Vec<_>>().join(" AND "),
            TestRule::Or(c) => c.iter().map(|r| format!("({})", r.text())).collect::<Vec<_>>().join(" OR "),
            TestRule::Any(ids, v) => format!("ANY({}) IS {v}", ids.join(", ")),
            TestRule::All(ids, v) => format!("ALL({}) IS {v}", ids.join(", ")),
        }
    }

    /// The same rule with every quantifier spelled out as OR/AND.
    pub fn expanded_text(&self) -> String {
        match self {
            TestRule::Any(ids, v) => ids.iter().map(|q| format!("{q} IS {v}")).collect::<Vec<_>>().join(" OR "),
            TestRule::All(ids, v) => ids.iter().map(|q| format!("{q} IS {v}")).collect::<Vec<_>>().join(" AND "),
            TestRule::Not(inner) => format!("NOT ({})", inner.expanded_text()),
            TestRule::And(c) => {
                c.iter().map(|r| format!("({})", r.expanded_text())).collect::<Vec<_>>().join(" AND ")
            }
            TestRule::Or(c) => c.iter().map(|r| format!("({})", r.expanded_text())).collect::<Vec<_>>().join(" OR "),
            other => other.text(),
        }
    }

    pub fn eval(&self, answers: &BTreeMap<String, Verdict>) -> bool {
        let get = |q: &String| answers.get(q).copied().unwrap_or(Verdict::Unknown);
        match self {
            TestRule::Is(q, v) => get(q) == *v,
            TestRule::IsNot(q, v) => get(q) != *v,
            TestRule::Not(inner) => !inner.eval(answers),
            TestRule::And(c) => {
                let mut acc = true;
                for r in c {
                    acc = acc && r.eval(answers);
                }
                acc
            }
            TestRule::Or(c) => {
                let mut acc = false;
                for r in c {
                    acc = acc || r.eval(answers);
                }
                acc
            }
            TestRule::Any(ids, v) => ids.iter().filter(|q| get(q) == *v).count() > 0,
            TestRule::All(ids, v) => ids.iter().filter(|q| get(q) == *v).count() == ids.len(),
        }
    }
}

pub fn question_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("Q{i}")).collect()
}

/// Random rule over `ids` with nesting depth at most `depth`.
pub fn random_rule(rng: &mut impl Rng, ids: &[String], depth: u32) -> TestRule {
    let pick_id = |rng: &mut dyn rand::RngCore| ids[rng.random_range(0..ids.len())].clone();
    let pick_value = |rng: &mut dyn rand::RngCore| VALUES[rng.random_range(0..3)];
    let leaf = depth == 0 || rng.random_bool(0.35);
    if leaf {
        return match rng.random_range(0..4) {
            0 => TestRule::Is(pick_id(rng), pick_value(rng)),
            1 => TestRule::IsNot(pick_id(rng), pick_value(rng)),
            n => {
                let k = rng.random_range(1..=ids.len());
                let chosen: Vec<String> = (0..k).map(|_| pick_id(rng)).collect();
                let v = pick_value(rng);
                if n == 2 {
                    TestRule::Any(chosen, v)
                } else {
                    TestRule::All(chosen, v)
                }
            }
        };
    }
    match rng.random_range(0..3) {
        0 => TestRule::Not(Box::new(random_rule(rng, ids, depth - 1))),
        n => {
            let width = rng.random_range(2..=3);
            let children = (0..width).map(|_| random_rule(rng, ids, depth - 1)).collect();
            if n == 1 {
                TestRule::And(children)
            } else {
                TestRule::Or(children)
            }
        }
    }
}

/// All 3^n assignments of the three values to `ids`.
pub fn assignments(ids: &[String]) -> Vec<BTreeMap<String, Verdict>> {
    let total = 3usize.pow(ids.len() as u32);
    (0..total)
        .map(|mut code| {
            ids.iter()
                .map(|q| {
                    let v = VALUES[code % 3];
                    code /= 3;
                    (q.clone(), v)
                })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Synthetic screening workspace
// ---------------------------------------------------------------------------

fn reply(v: Verdict, evidence: &str) -> String {
    let token = match v {
        Verdict::Yes => "Yes",
        Verdict::No => "No",
        Verdict::Unknown => "Unable to determine",
    };
    if evidence.is_empty() {
        format!("\"{token}\". Synthetic reply.")
    } else {
        format!("\"{token}\". Synthetic reply.\nEVIDENCE:\n{evidence}\nEVIDENCE:")
    }
}

/// A self-contained run directory: notes, catalog, fixtures and `run.json`.
pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub notes: usize,
    pub questions: usize,
}

impl Workspace {
    /// `notes` × `questions` units; fixture replies are drawn from `seed`.
    pub fn new(notes: usize, questions: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path();
        let mut rng = rng(seed);
        let ids = question_ids(questions);

        let mut notes_jsonl = String::new();
        for n in 1..=notes {
            let line = json!({
                "note_id": format!("n{n}"),
                "sections": {
                    "chief_complaint": format!("Complaint number {n}."),
                    "present_illness": format!("Finding alpha in note {n}. Finding beta in note {n}."),
                },
            });
            notes_jsonl.push_str(&line.to_string());
            notes_jsonl.push('\n');
        }
        std::fs::write(root.join("notes.jsonl"), notes_jsonl).unwrap();

        let catalog = root.join("catalog");
        std::fs::create_dir_all(&catalog).unwrap();
        let questions_json: Vec<_> = ids
            .iter()
            .map(|q| json!({"question_id": q, "text": format!("Is finding {q} present?"), "category": "Diagnosis", "task_type": "DirectMatch"}))
            .collect();
        std::fs::write(catalog.join("questions.json"), json!({"questions": questions_json}).to_string()).unwrap();
        let rule = format!("{} IS YES AND NOT ALL({}) IS NO", ids[0], ids.join(", "));
        let criteria = json!({"criteria": [{
            "criterion_id": "C1", "trial_ids": ["T1"], "kind": "inclusion",
            "text": "Synthetic criterion.", "rule": rule, "question_ids": ids,
        }]});
        std::fs::write(catalog.join("criteria.json"), criteria.to_string()).unwrap();
        std::fs::write(catalog.join("trials.json"), json!({"trials": [{"trial_id": "T1", "criterion_ids": ["C1"]}]}).to_string())
            .unwrap();

        let mut fixtures = BTreeMap::new();
        for n in 1..=notes {
            let evidence = format!("Finding alpha in note {n}.");
            for q in &ids {
                let draw = |rng: &mut ChaCha8Rng| {
                    let v = VALUES[rng.random_range(0..3)];
                    reply(v, if v == Verdict::Unknown { "" } else { &evidence })
                };
                for role in ["roleCRC", "roleJD", "roleIE"] {
                    fixtures.insert(format!("n{n}|{q}|{role}"), draw(&mut rng));
                }
                for stage in ["proponent|r1", "opponent|r1", "judge|r1", "proponent|r2", "opponent|r2", "judge|final"] {
                    let text = if stage == "judge|r1" && rng.random_bool(0.5) {
                        "SECOND ROUND: the agents disagree on the wording.".to_string()
                    } else {
                        draw(&mut rng)
                    };
                    fixtures.insert(format!("n{n}|{q}|{stage}"), text);
                }
            }
        }
        std::fs::write(root.join("fixtures.json"), json!({"fixtures": fixtures}).to_string()).unwrap();
        let ws = Workspace { dir, notes, questions };
        ws.write_config(json!({}));
        ws
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn config_path(&self) -> PathBuf {
        self.root().join("run.json")
    }

    pub fn out(&self) -> PathBuf {
        self.root().join("out")
    }

    /// Writes `run.json`, with `overrides` merged over the defaults.
    pub fn write_config(&self, overrides: serde_json::Value) {
        let mut cfg = json!({
            "backend": {"kind": "mock", "fixtures": "fixtures.json", "max_inflight": 3},
            "pathway": "both",
            "notes": "notes.jsonl",
            "catalog": "catalog",
            "out": "out",
            "concurrency": 4,
        });
        for (k, v) in overrides.as_object().expect("object").iter() {
            cfg[k] = v.clone();
        }
        std::fs::write(self.config_path(), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    }
}

pub fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}
