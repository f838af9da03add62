//! Search-based planner: layer-by-layer exhaustive expansion, value
//! accumulation under the current weights, bucket pruning, and policy
//! extraction/selection inside a model-predictive loop.
//!
//! Expansion is data-parallel over the states of a layer (rayon, so callers
//! control the worker count with `ThreadPool::install`). Children are
//! collected in parent-major, action-minor order, which makes every layer,
//! and therefore every policy set, independent of the worker count.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envmodel::Environment;
use crate::error::{Error, Result};
use crate::reward::{value_of, Feature, FeatureVector, RewardWeights, K};
use crate::vehicle::{
    rollout, sample_actions, ActionProfile, Label, ParentLink, PlannerState, Sample, SubPose,
    Transition, VehicleConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Planning horizon in transitions.
    pub horizon: usize,
    /// Discount per transition step.
    pub gamma: f64,
    pub prune_cap: usize,
    /// Spatial bucket edge, meters.
    pub bucket_cell: f64,
    /// Velocity band width, m/s.
    pub bucket_speed: f64,
    /// States kept per bucket.
    pub bucket_keep: usize,
    /// Free-mode start: arclength on the track and initial speed.
    pub start_station: f64,
    pub start_speed: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 6,
            gamma: 0.95,
            prune_cap: 2000,
            bucket_cell: 1.0,
            bucket_speed: 1.0,
            bucket_keep: 3,
            start_station: 2.0,
            start_speed: 4.0,
        }
    }
}

/// A graph node: a state plus the edge that produced it.
#[derive(Clone, Debug)]
pub struct Node {
    pub state: PlannerState,
    /// Discounted feature path integral from the root.
    pub features: FeatureVector,
    pub action: Option<ActionProfile>,
    pub transition: Option<Arc<Transition>>,
}

/// One planning cycle's search tree, layer 0 holding the root.
#[derive(Clone, Debug, Default)]
pub struct LayeredGraph {
    pub layers: Vec<Vec<Node>>,
    /// Candidate counts per expanded layer before pruning.
    pub expanded: Vec<usize>,
}

impl LayeredGraph {
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn node(&self, layer: usize, index: usize) -> &Node {
        &self.layers[layer][index]
    }
}

#[derive(Clone, Debug)]
pub struct Policy {
    /// Leaf index in the deepest layer; stable id within a cycle.
    pub id: usize,
    pub transitions: Vec<Arc<Transition>>,
    pub actions: Vec<ActionProfile>,
    pub feature_integral: FeatureVector,
    pub value: f64,
    pub projection_distance: Option<f64>,
}

impl Policy {
    pub fn is_valid(&self) -> bool {
        self.transitions.iter().all(|t| t.label == Label::Valid)
    }

    pub fn start_time(&self) -> f64 {
        self.transitions[0].sub_poses[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.transitions.last().unwrap().sub_poses.last().unwrap().t
    }

    /// Sub-poses over the whole policy without repeated boundary poses.
    pub fn poses(&self) -> Vec<SubPose> {
        let mut out = Vec::new();
        for (i, t) in self.transitions.iter().enumerate() {
            let skip = usize::from(i > 0);
            out.extend(t.sub_poses.iter().skip(skip).copied());
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub policies: Vec<Policy>,
    pub graph: LayeredGraph,
    /// True when the search stopped before the horizon.
    pub truncated: bool,
}

/// Spatial-cell and velocity-band key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BucketKey {
    pub cell_x: i64,
    pub cell_y: i64,
    pub band: i64,
}

impl BucketKey {
    pub fn of(state: &PlannerState, cfg: &PlannerConfig) -> Self {
        Self {
            cell_x: (state.x / cfg.bucket_cell).floor() as i64,
            cell_y: (state.y / cfg.bucket_cell).floor() as i64,
            band: (state.v / cfg.bucket_speed).floor() as i64,
        }
    }
}

/// States sharing a bucket, best value first.
#[derive(Clone, Debug)]
pub struct PruneBucket {
    pub key: BucketKey,
    /// Indices into the pruned layer, sorted by descending value.
    pub retained: Vec<usize>,
}

/// Orders by descending value, then ascending index.
fn by_value_desc(states: &[PlannerState]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |&a, &b| {
        states[b]
            .value
            .partial_cmp(&states[a].value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Buckets `states` and keeps the best `bucket_keep` of each bucket. Returns
/// the buckets and each kept state's rank within its bucket.
pub fn prune_buckets(states: &[PlannerState], cfg: &PlannerConfig) -> Vec<PruneBucket> {
    let keep = cfg.bucket_keep.max(1);
    let mut groups: HashMap<BucketKey, Vec<usize>> = HashMap::new();
    for (i, s) in states.iter().enumerate() {
        groups.entry(BucketKey::of(s, cfg)).or_default().push(i);
    }
    let mut buckets: Vec<PruneBucket> = groups
        .into_iter()
        .map(|(key, mut idx)| {
            idx.sort_by(by_value_desc(states));
            idx.truncate(keep);
            PruneBucket { key, retained: idx }
        })
        .collect();
    buckets.sort_by_key(|b| b.key);
    buckets
}

/// Indices (ascending) of the states that survive pruning.
///
/// Each bucket keeps its top `bucket_keep` states. If more than `prune_cap`
/// remain, states are admitted by bucket rank first and value second, so a
/// bucket's best state is only dropped when there are more buckets than cap.
pub fn prune_indices(states: &[PlannerState], cfg: &PlannerConfig) -> Vec<usize> {
    debug_assert!(states.windows(2).all(|w| w[0].t_index == w[1].t_index));
    let buckets = prune_buckets(states, cfg);
    let mut ranked: Vec<(usize, usize)> = buckets
        .iter()
        .flat_map(|b| b.retained.iter().enumerate().map(|(r, &i)| (r, i)))
        .collect();
    if ranked.len() > cfg.prune_cap {
        let cmp = by_value_desc(states);
        ranked.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| cmp(&a.1, &b.1)));
        ranked.truncate(cfg.prune_cap);
    }
    let mut kept: Vec<usize> = ranked.into_iter().map(|(_, i)| i).collect();
    kept.sort_unstable();
    kept
}

pub fn prune(states: &[PlannerState], cfg: &PlannerConfig) -> Vec<PlannerState> {
    prune_indices(states, cfg)
        .into_iter()
        .map(|i| states[i])
        .collect()
}

/// Expanded child before pruning; sub-poses are not kept.
struct Candidate {
    state: PlannerState,
    features: FeatureVector,
    action: ActionProfile,
}

/// Exhaustive forward search from `s0` over `cfg.horizon` transitions.
pub fn plan_cycle(
    s0: &PlannerState,
    weights: &RewardWeights,
    env: &Environment,
    cfg: &PlannerConfig,
    vehicle: &VehicleConfig,
    seed: u64,
) -> Result<PlanOutcome> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if !s0.is_valid(vehicle) {
        return Err(Error::InvalidArgument(format!("invalid start state {s0:?}")));
    }
    let root = Node {
        state: s0.as_root(),
        features: [0.0; K],
        action: None,
        transition: None,
    };
    let mut graph = LayeredGraph {
        layers: vec![vec![root]],
        expanded: Vec::new(),
    };
    let mut truncated = false;
    let substeps = vehicle.substeps;

    for t in 0..cfg.horizon {
        let discount = cfg.gamma.powi(t as i32);
        let parents = &graph.layers[t];
        let per_parent: Vec<Vec<Candidate>> = parents
            .par_iter()
            .enumerate()
            .map_init(
                || Vec::<Sample>::with_capacity(substeps + 1),
                |scratch, (pi, parent)| {
                    let actions = sample_actions(&parent.state, vehicle, seed);
                    let mut out = Vec::with_capacity(actions.len());
                    for (ai, action) in actions.into_iter().enumerate() {
                        let r = rollout(&parent.state, &action, &env.map, &env.track, vehicle, scratch);
                        if r.label != Label::Valid {
                            continue;
                        }
                        let mut features = parent.features;
                        for k in 0..K {
                            features[k] += discount * r.integrand[k];
                        }
                        let mut state = r.state;
                        state.value = parent.state.value + discount * value_of(&r.integrand, weights);
                        state.parent = Some(ParentLink { layer: t, index: pi, action: ai });
                        out.push(Candidate { state, features, action });
                    }
                    out
                },
            )
            .collect();
        let candidates: Vec<Candidate> = per_parent.into_iter().flatten().collect();
        graph.expanded.push(candidates.len());
        if candidates.is_empty() {
            if t == 0 {
                return Err(Error::PlanningFailure(
                    "no valid transition from the start state".into(),
                ));
            }
            truncated = true;
            break;
        }
        let states: Vec<PlannerState> = candidates.iter().map(|c| c.state).collect();
        let kept = prune_indices(&states, cfg);

        // Re-integrate survivors to recover their sub-poses.
        let layer: Vec<Node> = kept
            .par_iter()
            .map_init(
                || Vec::<Sample>::with_capacity(substeps + 1),
                |scratch, &ci| {
                    let c = &candidates[ci];
                    let link = c.state.parent.unwrap();
                    let parent = &graph.layers[t][link.index].state;
                    let r = rollout(parent, &c.action, &env.map, &env.track, vehicle, scratch);
                    debug_assert_eq!(r.label, Label::Valid);
                    let transition = Transition {
                        sub_poses: scratch.iter().map(Sample::pose).collect(),
                        raw_feature_integrand: r.integrand,
                        label: r.label,
                        end_station: r.end_station,
                    };
                    Node {
                        state: c.state,
                        features: c.features,
                        action: Some(c.action),
                        transition: Some(Arc::new(transition)),
                    }
                },
            )
            .collect();
        graph.layers.push(layer);
    }

    let policies = extract_policies(&graph, weights);
    Ok(PlanOutcome {
        policies,
        graph,
        truncated,
    })
}

/// Root-to-leaf policies ending in the deepest layer.
pub fn extract_policies(graph: &LayeredGraph, weights: &RewardWeights) -> Vec<Policy> {
    let depth = graph.layers.len() - 1;
    if depth == 0 {
        return Vec::new();
    }
    graph.layers[depth]
        .iter()
        .enumerate()
        .map(|(id, leaf)| {
            let mut transitions = Vec::with_capacity(depth);
            let mut actions = Vec::with_capacity(depth);
            let mut node = leaf;
            while let Some(link) = node.state.parent {
                transitions.push(node.transition.clone().expect("non-root has transition"));
                actions.push(node.action.expect("non-root has action"));
                node = &graph.layers[link.layer][link.index];
            }
            transitions.reverse();
            actions.reverse();
            Policy {
                id,
                transitions,
                actions,
                feature_integral: leaf.features,
                value: value_of(&leaf.features, weights),
                projection_distance: None,
            }
        })
        .collect()
}

/// Highest-value valid policy; ties go to the lower longitudinal-jerk
/// integral, then to the earlier policy.
pub fn select_policy(policies: &[Policy]) -> Result<&Policy> {
    let jerk = Feature::JerkLon.index();
    let mut best: Option<&Policy> = None;
    for p in policies.iter().filter(|p| p.is_valid()) {
        best = match best {
            None => Some(p),
            Some(b) => {
                if p.value > b.value
                    || (p.value == b.value && p.feature_integral[jerk] < b.feature_integral[jerk])
                {
                    Some(p)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or_else(|| Error::PlanningFailure("empty policy set".into()))
}

/// Where each cycle's start state comes from.
#[derive(Clone, Copy, Debug)]
pub enum MpcMode<'a> {
    /// Execute the first transition of the selected policy.
    Free,
    /// Reset to the odometry record at the start of every cycle.
    Reset(&'a crate::demos::OdometryRecord),
}

/// Everything a cycle produced, handed to the replay sink.
pub struct CycleOutput<'a> {
    pub cycle: usize,
    pub s0: PlannerState,
    pub outcome: &'a PlanOutcome,
    /// Index of the selected policy in `outcome.policies`.
    pub selected: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub s0: PlannerState,
    pub policy_count: usize,
    pub selected_policy_id: usize,
    pub truncated: bool,
    pub layer_sizes: Vec<usize>,
    pub feature_integrals: Vec<FeatureVector>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeRecord {
    pub cycles: Vec<CycleRecord>,
    /// First transition of the selected policy, per cycle.
    pub executed: Vec<Arc<Transition>>,
    pub failure: Option<String>,
}

impl EpisodeRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Line-delimited JSON, one record per cycle.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        for c in &self.cycles {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Free-mode initial state from the planner config.
pub fn initial_state(env: &Environment, cfg: &PlannerConfig) -> PlannerState {
    PlannerState::on_track(&env.track, cfg.start_station, cfg.start_speed)
}

/// Runs `cycles` plan-select iterations. A planning failure truncates the
/// episode and sets `failure`; it is not an error.
#[allow(clippy::too_many_arguments)]
pub fn run_mpc(
    env: &Environment,
    weights: &RewardWeights,
    cycles: usize,
    mode: MpcMode<'_>,
    cfg: &PlannerConfig,
    vehicle: &VehicleConfig,
    seed: u64,
    mut sink: impl FnMut(&CycleOutput<'_>) -> Result<()>,
) -> Result<EpisodeRecord> {
    if cycles == 0 {
        return Err(Error::InvalidArgument("cycles must be at least 1".into()));
    }
    let mut record = EpisodeRecord::default();
    let mut state = match mode {
        MpcMode::Free => initial_state(env, cfg),
        MpcMode::Reset(zeta) => zeta.reset_state(zeta.start_time(), vehicle)?,
    };
    for cycle in 0..cycles {
        if let MpcMode::Reset(zeta) = mode {
            let t = zeta.start_time() + cycle as f64 * vehicle.duration;
            state = zeta.reset_state(t, vehicle)?;
        }
        let outcome = match plan_cycle(&state, weights, env, cfg, vehicle, seed.wrapping_add(cycle as u64)) {
            Ok(o) if !o.policies.is_empty() => o,
            Ok(_) => {
                record.failure = Some(format!("cycle {cycle}: empty policy set"));
                break;
            }
            Err(Error::PlanningFailure(msg)) => {
                record.failure = Some(format!("cycle {cycle}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let selected = select_policy(&outcome.policies)?;
        let selected_idx = selected.id;
        sink(&CycleOutput {
            cycle,
            s0: state,
            outcome: &outcome,
            selected: selected_idx,
        })?;
        let first = selected.transitions[0].clone();
        record.cycles.push(CycleRecord {
            cycle,
            s0: state,
            policy_count: outcome.policies.len(),
            selected_policy_id: selected_idx,
            truncated: outcome.truncated,
            layer_sizes: outcome.graph.layer_sizes(),
            feature_integrals: outcome.policies.iter().map(|p| p.feature_integral).collect(),
            values: outcome.policies.iter().map(|p| p.value).collect(),
        });
        if let MpcMode::Free = mode {
            // The layer-1 ancestor of the selected leaf.
            let depth = outcome.graph.layers.len() - 1;
            let mut link = outcome.graph.layers[depth][selected_idx].state.parent;
            let mut node = &outcome.graph.layers[depth][selected_idx];
            while let Some(l) = link {
                if l.layer == 0 {
                    break;
                }
                node = &outcome.graph.layers[l.layer][l.index];
                link = node.state.parent;
            }
            state = node.state.as_root();
        }
        record.executed.push(first);
    }
    Ok(record)
}
