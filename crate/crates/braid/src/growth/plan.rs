//! Growth plans: turning an N-modality alignment into an ordered sequence
//! of binary phases over the pairing graph.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What one planned phase aligns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseKind {
    /// The first phase: two fresh modalities, no junction.
    Initial { first: String, second: String },
    /// A later phase: the branch joins through a junction already in the
    /// trunk.
    Growth { branch: String, junction: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedPhase {
    #[serde(flatten)]
    pub kind: PhaseKind,
    pub dataset_id: String,
}

impl PlannedPhase {
    /// The two modalities this phase trains, in (trunk-side, new-side)
    /// order for growth phases.
    pub fn modalities(&self) -> (&str, &str) {
        match &self.kind {
            PhaseKind::Initial { first, second } => (first, second),
            PhaseKind::Growth { branch, junction } => (junction, branch),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthPlan {
    pub phases: Vec<PlannedPhase>,
}

/// Everything the planner needs to know about a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub id: String,
    pub a: String,
    pub b: String,
    pub n_train: usize,
}

impl From<&crate::data::PairedDataset> for DatasetSummary {
    fn from(ds: &crate::data::PairedDataset) -> Self {
        DatasetSummary {
            id: ds.id.clone(),
            a: ds.modality_a.clone(),
            b: ds.modality_b.clone(),
            n_train: ds.n_train(),
        }
    }
}

impl From<&crate::data::PairSpec> for DatasetSummary {
    fn from(p: &crate::data::PairSpec) -> Self {
        DatasetSummary {
            id: p.id.clone(),
            a: p.a.clone(),
            b: p.b.clone(),
            n_train: p.n_train,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderHeuristic {
    /// Align modalities as close to the given list order as the graph allows.
    GivenOrder,
    /// Greedily prefer the largest usable dataset at every step.
    LargestFirst,
    /// Breadth-first walk of the pairing graph from the first modality.
    SpanningWalk,
}

impl std::str::FromStr for OrderHeuristic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "given" | "given-order" => Ok(OrderHeuristic::GivenOrder),
            "largest-first" => Ok(OrderHeuristic::LargestFirst),
            "spanning-walk" => Ok(OrderHeuristic::SpanningWalk),
            other => Err(Error::InvalidConfig(format!(
                "unknown plan heuristic '{other}' (expected given|largest-first|spanning-walk)"
            ))),
        }
    }
}

impl GrowthPlan {
    /// Re-check the structural invariants: the initial phase comes first
    /// and alone, every junction is already in the trunk, and no modality
    /// is a branch twice.
    pub fn validate(&self) -> Result<()> {
        let mut trunk: BTreeSet<String> = BTreeSet::new();
        for (i, phase) in self.phases.iter().enumerate() {
            match &phase.kind {
                PhaseKind::Initial { first, second } => {
                    if i != 0 {
                        return Err(Error::InvalidConfig(format!(
                            "initial phase at position {i}"
                        )));
                    }
                    trunk.insert(first.clone());
                    trunk.insert(second.clone());
                }
                PhaseKind::Growth { branch, junction } => {
                    if !trunk.contains(junction) {
                        return Err(Error::JunctionNotInTrunk {
                            phase: i,
                            junction: junction.clone(),
                        });
                    }
                    if trunk.contains(branch) {
                        return Err(Error::InvalidConfig(format!(
                            "modality '{branch}' grown twice (phase {i})"
                        )));
                    }
                    trunk.insert(branch.clone());
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: GrowthPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Resolve a valid plan over the requested modalities.
///
/// Only datasets with training pairs participate; evaluation-only pairs
/// (n_train = 0) never define the topology. The pairing graph restricted
/// to the requested modalities must be connected — a disconnected graph
/// means some modality has no junction to grow through.
pub fn resolve_plan(
    modalities: &[String],
    datasets: &[DatasetSummary],
    heuristic: OrderHeuristic,
) -> Result<GrowthPlan> {
    if modalities.len() < 2 {
        return Err(Error::InvalidConfig(
            "a plan needs at least two modalities".into(),
        ));
    }
    let requested: BTreeSet<&String> = modalities.iter().collect();
    let usable: Vec<&DatasetSummary> = datasets
        .iter()
        .filter(|d| {
            d.n_train > 0 && requested.contains(&d.a) && requested.contains(&d.b) && d.a != d.b
        })
        .collect();

    check_connected(modalities, &usable)?;

    let phases = match heuristic {
        OrderHeuristic::GivenOrder => plan_given_order(modalities, &usable),
        OrderHeuristic::LargestFirst => plan_largest_first(modalities, &usable),
        OrderHeuristic::SpanningWalk => plan_spanning_walk(modalities, &usable),
    };
    let plan = GrowthPlan { phases };
    plan.validate()?;
    Ok(plan)
}

fn check_connected(modalities: &[String], usable: &[&DatasetSummary]) -> Result<()> {
    let mut reached: BTreeSet<&String> = BTreeSet::new();
    let mut frontier = vec![&modalities[0]];
    reached.insert(&modalities[0]);
    while let Some(m) = frontier.pop() {
        for d in usable {
            let next = if &d.a == m {
                &d.b
            } else if &d.b == m {
                &d.a
            } else {
                continue;
            };
            if reached.insert(next) {
                frontier.push(next);
            }
        }
    }
    let unreachable: Vec<String> = modalities
        .iter()
        .filter(|m| !reached.contains(m))
        .cloned()
        .collect();
    if unreachable.is_empty() {
        Ok(())
    } else {
        Err(Error::DisconnectedPairing { unreachable })
    }
}

fn edge_between<'a>(
    usable: &[&'a DatasetSummary],
    x: &str,
    y: &str,
) -> Option<&'a DatasetSummary> {
    usable
        .iter()
        .find(|d| (d.a == x && d.b == y) || (d.a == y && d.b == x))
        .copied()
}

fn plan_given_order(modalities: &[String], usable: &[&DatasetSummary]) -> Vec<PlannedPhase> {
    let mut phases = Vec::new();
    let mut trunk: Vec<String> = Vec::new();
    // Initial phase: the first modality with its earliest-listed neighbor.
    let first = &modalities[0];
    let second = modalities[1..]
        .iter()
        .find(|m| edge_between(usable, first, m).is_some())
        .expect("connectivity guarantees a neighbor");
    let ds = edge_between(usable, first, second).unwrap();
    phases.push(PlannedPhase {
        kind: PhaseKind::Initial {
            first: first.clone(),
            second: second.clone(),
        },
        dataset_id: ds.id.clone(),
    });
    trunk.push(first.clone());
    trunk.push(second.clone());

    while trunk.len() < modalities.len() {
        // Earliest-listed unaligned modality with a trunk edge; junction is
        // the earliest trunk member it connects to.
        let (branch, junction, ds) = modalities
            .iter()
            .filter(|m| !trunk.contains(m))
            .find_map(|branch| {
                trunk.iter().find_map(|junction| {
                    edge_between(usable, branch, junction)
                        .map(|d| (branch.clone(), junction.clone(), d))
                })
            })
            .expect("connectivity guarantees progress");
        phases.push(PlannedPhase {
            kind: PhaseKind::Growth {
                branch: branch.clone(),
                junction,
            },
            dataset_id: ds.id.clone(),
        });
        trunk.push(branch);
    }
    phases
}

fn plan_largest_first(modalities: &[String], usable: &[&DatasetSummary]) -> Vec<PlannedPhase> {
    let mut phases = Vec::new();
    let mut trunk: Vec<String> = Vec::new();
    // Largest dataset overall starts the trunk (ties: smaller id).
    let start = usable
        .iter()
        .max_by(|x, y| x.n_train.cmp(&y.n_train).then(y.id.cmp(&x.id)))
        .expect("connectivity needs at least one dataset");
    phases.push(PlannedPhase {
        kind: PhaseKind::Initial {
            first: start.a.clone(),
            second: start.b.clone(),
        },
        dataset_id: start.id.clone(),
    });
    trunk.push(start.a.clone());
    trunk.push(start.b.clone());

    while trunk.len() < modalities.len() {
        let next = usable
            .iter()
            .filter(|d| trunk.contains(&d.a) != trunk.contains(&d.b))
            .max_by(|x, y| x.n_train.cmp(&y.n_train).then(y.id.cmp(&x.id)))
            .expect("connectivity guarantees a frontier edge");
        let (junction, branch) = if trunk.contains(&next.a) {
            (next.a.clone(), next.b.clone())
        } else {
            (next.b.clone(), next.a.clone())
        };
        phases.push(PlannedPhase {
            kind: PhaseKind::Growth {
                branch: branch.clone(),
                junction,
            },
            dataset_id: next.id.clone(),
        });
        trunk.push(branch);
    }
    phases
}

fn plan_spanning_walk(modalities: &[String], usable: &[&DatasetSummary]) -> Vec<PlannedPhase> {
    let mut phases = Vec::new();
    let mut trunk: Vec<String> = vec![modalities[0].clone()];
    let mut queue = std::collections::VecDeque::from([modalities[0].clone()]);
    while let Some(junction) = queue.pop_front() {
        for d in usable {
            let other = if d.a == junction {
                &d.b
            } else if d.b == junction {
                &d.a
            } else {
                continue;
            };
            if trunk.contains(other) {
                continue;
            }
            if phases.is_empty() {
                phases.push(PlannedPhase {
                    kind: PhaseKind::Initial {
                        first: junction.clone(),
                        second: other.clone(),
                    },
                    dataset_id: d.id.clone(),
                });
            } else {
                phases.push(PlannedPhase {
                    kind: PhaseKind::Growth {
                        branch: other.clone(),
                        junction: junction.clone(),
                    },
                    dataset_id: d.id.clone(),
                });
            }
            trunk.push(other.clone());
            queue.push_back(other.clone());
        }
    }
    phases
}
