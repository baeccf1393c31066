//! Synthetic trajectories constrained to a random directed road graph, with
//! tunable per-object and per-slot preferences.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};
use crate::rng::{derived_rng, indexed_rng, Purpose};
use crate::trajectory::{Record, TimeSlotting, TokenQuadruple};

/// 2016-01-01T00:00:00Z; the first synthetic day.
pub const SYNTH_EPOCH: i64 = 1_451_606_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    /// Outgoing edges per node, sorted by target.
    pub adjacency: Vec<Vec<Edge>>,
}

impl RoadGraph {
    pub fn n_locations(&self) -> usize {
        self.adjacency.len()
    }

    pub fn successors(&self, u: usize) -> &[Edge] {
        &self.adjacency[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].iter().any(|e| e.to == v)
    }

    /// Edge weights of `u` normalised to a probability distribution.
    pub fn transition_probabilities(&self, u: usize) -> Vec<(usize, f64)> {
        let total: f64 = self.adjacency[u].iter().map(|e| e.weight).sum();
        self.adjacency[u]
            .iter()
            .map(|e| (e.to, e.weight / total))
            .collect()
    }
}

pub fn location_token(u: usize) -> String {
    format!("L{u}")
}

pub fn object_token(o: usize) -> String {
    format!("v{o}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_locations: usize,
    /// Random successors per node, on top of the ring edge.
    pub out_degree: usize,
    pub n_objects: usize,
    pub n_slots: u32,
    pub slot_minutes: u32,
    /// Consecutive records that fall into the same slot before the clock
    /// moves on to the next one.
    pub records_per_slot: u32,
    pub records_per_object: usize,
    pub seed: u64,
    /// Strength of per-object destination preferences, in [0, 1].
    pub object_signal: f64,
    /// Strength of per-slot destination preferences, in [0, 1].
    pub time_signal: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_locations: 50,
            out_degree: 3,
            n_objects: 20,
            n_slots: 10,
            slot_minutes: 60,
            records_per_slot: 6,
            records_per_object: 1000,
            seed: 0,
            object_signal: 0.5,
            time_signal: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MpeError::Config(m));
        if self.n_locations < 2 {
            return bad("need at least 2 locations".into());
        }
        if self.out_degree >= self.n_locations {
            return bad(format!(
                "out_degree {} must be below n_locations {}",
                self.out_degree, self.n_locations
            ));
        }
        if self.n_objects == 0 || self.n_slots == 0 || self.records_per_slot == 0 {
            return bad("objects, slots and records per slot must be positive".into());
        }
        if self.slot_minutes == 0 || self.n_slots * self.slot_minutes > 24 * 60 {
            return bad("slots must fit into one day".into());
        }
        if !self.slot_minutes.is_multiple_of(self.records_per_slot) {
            return bad("slot_minutes must be divisible by records_per_slot".into());
        }
        for s in [self.object_signal, self.time_signal] {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("signal strength {s} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// The slotting under which generated timestamps map back to the slots
    /// used during generation.
    pub fn slotting(&self) -> TimeSlotting {
        TimeSlotting::new(self.slot_minutes, 0, self.n_slots * self.slot_minutes)
            .expect("validated configuration")
    }

    fn timestamp(&self, step: usize) -> (i64, u32) {
        let per_slot = self.records_per_slot as usize;
        let per_day = per_slot * self.n_slots as usize;
        let day = step / per_day;
        let in_day = step % per_day;
        let slot = (in_day / per_slot) as u32;
        let minute = slot * self.slot_minutes
            + (in_day % per_slot) as u32 * (self.slot_minutes / self.records_per_slot);
        (
            SYNTH_EPOCH + day as i64 * 86_400 + i64::from(minute) * 60,
            slot,
        )
    }
}

/// Each node receives `out_degree` distinct random successors (never itself)
/// plus the ring edge `i → i+1 mod n`. Base weights are uniform in [0.5, 1.5].
pub fn generate_graph(config: &SynthConfig) -> Result<RoadGraph> {
    config.validate()?;
    let n = config.n_locations;
    let mut rng = derived_rng(config.seed, Purpose::Graph);
    let adjacency = (0..n)
        .map(|u| {
            let mut targets: Vec<usize> = index::sample(&mut rng, n - 1, config.out_degree)
                .into_iter()
                .map(|i| if i >= u { i + 1 } else { i })
                .collect();
            let ring = (u + 1) % n;
            if !targets.contains(&ring) {
                targets.push(ring);
            }
            targets.sort_unstable();
            targets
                .into_iter()
                .map(|to| Edge {
                    to,
                    weight: rng.random_range(0.5..1.5),
                })
                .collect()
        })
        .collect();
    Ok(RoadGraph { adjacency })
}

/// Per-object and per-slot destination preferences in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub object: Vec<Vec<f64>>,
    pub slot: Vec<Vec<f64>>,
}

impl Preferences {
    pub fn generate(config: &SynthConfig) -> Self {
        let mut rng = derived_rng(config.seed, Purpose::Preference);
        let mut table = |rows: usize| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| {
                    (0..config.n_locations)
                        .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect()
        };
        let object = table(config.n_objects);
        let slot = table(config.n_slots as usize);
        Self { object, slot }
    }
}

/// Weight of edge `u → v` for an object in a slot:
/// `w(u, v) · (1 + σ_o·pref_o(v)) · (1 + σ_t·pref_t(v))`.
pub fn edge_weight(
    config: &SynthConfig,
    prefs: &Preferences,
    edge: &Edge,
    object: usize,
    slot: u32,
) -> f64 {
    edge.weight
        * (1.0 + config.object_signal * prefs.object[object][edge.to])
        * (1.0 + config.time_signal * prefs.slot[slot as usize][edge.to])
}

fn choose_edge(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// Lazily generated records, object by object; memory does not grow with
/// `records_per_object`.
pub struct TrajectoryStream<'a> {
    graph: &'a RoadGraph,
    config: SynthConfig,
    prefs: Preferences,
    object: usize,
    step: usize,
    node: usize,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl<'a> TrajectoryStream<'a> {
    pub fn new(graph: &'a RoadGraph, config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        if graph.n_locations() != config.n_locations {
            return Err(MpeError::Config(
                "graph does not match the configuration".into(),
            ));
        }
        let mut s = Self {
            graph,
            config: *config,
            prefs: Preferences::generate(config),
            object: 0,
            step: 0,
            node: 0,
            rng: indexed_rng(config.seed, Purpose::Walk, 0),
            weights: Vec::new(),
        };
        s.start_object(0);
        Ok(s)
    }

    fn start_object(&mut self, object: usize) {
        self.object = object;
        self.step = 0;
        self.rng = indexed_rng(self.config.seed, Purpose::Walk, object as u64);
        self.node = self.rng.random_range(0..self.config.n_locations);
    }
}

impl Iterator for TrajectoryStream<'_> {
    type Item = Record;

    fn next(&mut self) -> Option<Record> {
        if self.config.records_per_object == 0 {
            return None;
        }
        if self.step == self.config.records_per_object {
            if self.object + 1 >= self.config.n_objects {
                return None;
            }
            self.start_object(self.object + 1);
        }
        let (timestamp, slot) = self.config.timestamp(self.step);
        let record = Record {
            object_id: object_token(self.object),
            timestamp,
            location_id: location_token(self.node),
        };
        let edges = self.graph.successors(self.node);
        self.weights.clear();
        self.weights.extend(
            edges
                .iter()
                .map(|e| edge_weight(&self.config, &self.prefs, e, self.object, slot)),
        );
        self.node = edges[choose_edge(&mut self.rng, &self.weights)].to;
        self.step += 1;
        Some(record)
    }
}

pub fn generate_trajectories(graph: &RoadGraph, config: &SynthConfig) -> Result<Vec<Record>> {
    Ok(TrajectoryStream::new(graph, config)?.collect())
}

/// Fraction of distinct observed sequences `a → b → c` (two consecutive
/// quadruples of one object with matching middle location) for which the
/// shortcut `a → c` is itself an observed transition. 0 when there are no
/// sequences.
pub fn phantom_rate(quads: &[TokenQuadruple]) -> f64 {
    let transitions: HashSet<(&str, &str)> = quads
        .iter()
        .map(|q| (q.current.as_str(), q.next.as_str()))
        .collect();
    let sequences: HashSet<(&str, &str, &str)> = quads
        .windows(2)
        .filter(|w| w[0].object == w[1].object && w[0].next == w[1].current)
        .map(|w| {
            (
                w[0].current.as_str(),
                w[0].next.as_str(),
                w[1].next.as_str(),
            )
        })
        .collect();
    if sequences.is_empty() {
        return 0.0;
    }
    let with_shortcut = sequences
        .iter()
        .filter(|(a, _, c)| transitions.contains(&(*a, *c)))
        .count();
    with_shortcut as f64 / sequences.len() as f64
}
