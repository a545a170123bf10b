//! Streaming orchestrator: trains on each batch, gathers the lane evidence for
//! every high-loss cycle and merges it with the integer vote
//! `s(f) = 2·[f∈I_1a] + [f∈I_1b] + [f∈I_2] + [f∈I_3]`, root cause iff `s ≥ 2`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::baselines::{IsolationForestModel, KnnModel};
use crate::config::RunConfig;
use crate::cycle::{BinaryMatrix, Batcher, CycleBatch, CycleSeries, ProductivityFlag};
use crate::dependency::{dependency_evidence, DependencyEvidence};
use crate::error::{RcaError, Result};
use crate::nn::{Iae, IaeEvidence};
use crate::seed::derive_seed;
use crate::structural::{pca_cycle, structural_evidence, GbdtModel, GbdtStatus, PcaResult};

/// Which predictor produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Ensemble,
    /// Autoencoder lane alone: `I_1a ∪ I_1b`.
    Iae,
    /// PCA prominence alone.
    Pca,
    /// Mutual-information half of the dependency lane alone.
    Mi,
    Iforest,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Ensemble,
        ModelKind::Iae,
        ModelKind::Pca,
        ModelKind::Mi,
        ModelKind::Iforest,
        ModelKind::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ensemble => "ensemble",
            ModelKind::Iae => "iae",
            ModelKind::Pca => "pca",
            ModelKind::Mi => "mi",
            ModelKind::Iforest => "iforest",
            ModelKind::Knn => "knn",
        }
    }

    fn needs_iae(self) -> bool {
        matches!(self, ModelKind::Ensemble | ModelKind::Iae)
    }

    fn needs_dependency(self) -> bool {
        matches!(self, ModelKind::Ensemble | ModelKind::Mi)
    }

    fn needs_pca(self) -> bool {
        matches!(self, ModelKind::Ensemble | ModelKind::Pca)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = RcaError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RcaError::Config(format!("unknown model {s:?}")))
    }
}

/// The four evidence sets for one high-loss cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterimResult {
    pub cycle_id: u32,
    pub i1a: Vec<usize>,
    pub i1b: Vec<usize>,
    pub i2: Vec<usize>,
    pub i3: Vec<usize>,
}

/// Per-cycle verdict of one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootCauseReport {
    pub model: ModelKind,
    pub cycle: u32,
    /// One score per feature in feature order.
    pub scores: Vec<u8>,
    /// Ascending feature indices with score ≥ 2.
    pub root_causes: Vec<usize>,
    /// Named evidence sets behind the scores.
    pub lanes: Vec<(String, Vec<usize>)>,
}

pub fn score_features(interim: &InterimResult, d: usize) -> RootCauseReport {
    let mut scores = vec![0u8; d];
    for (set, weight) in [(&interim.i1a, 2), (&interim.i1b, 1), (&interim.i2, 1), (&interim.i3, 1)] {
        for &f in set {
            scores[f] += weight;
        }
    }
    RootCauseReport {
        model: ModelKind::Ensemble,
        cycle: interim.cycle_id,
        root_causes: (0..d).filter(|&f| scores[f] >= 2).collect(),
        scores,
        lanes: vec![
            ("i1a".into(), interim.i1a.clone()),
            ("i1b".into(), interim.i1b.clone()),
            ("i2".into(), interim.i2.clone()),
            ("i3".into(), interim.i3.clone()),
        ],
    }
}

/// A single-lane model's report: every selected feature scores 2, so the `≥ 2` rule
/// reads the same for all models.
fn standalone(model: ModelKind, cycle: u32, d: usize, lane: &str, mut set: Vec<usize>) -> RootCauseReport {
    set.sort_unstable();
    set.dedup();
    let mut scores = vec![0u8; d];
    for &f in &set {
        scores[f] = 2;
    }
    RootCauseReport {
        model,
        cycle,
        scores,
        root_causes: set.clone(),
        lanes: vec![(lane.into(), set)],
    }
}

impl RootCauseReport {
    /// `{model, cycle, scores: {name: int}, root_causes: [names], lanes: {lane: [indices]}}`.
    pub fn to_json(&self, names: &[String]) -> Value {
        let scores: Map<String, Value> = names.iter().cloned().zip(self.scores.iter().map(|&s| json!(s))).collect();
        let lanes: Map<String, Value> = self.lanes.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        json!({
            "model": self.model.name(),
            "cycle": self.cycle,
            "scores": scores,
            "root_causes": self.root_causes.iter().map(|&f| names[f].as_str()).collect::<Vec<_>>(),
            "lanes": lanes,
        })
    }

    pub fn to_json_line(&self, names: &[String]) -> String {
        self.to_json(names).to_string()
    }

    /// Inverse of [`RootCauseReport::to_json`]; `names` fixes the feature order.
    pub fn from_json(v: &Value, names: &[String]) -> Result<Self> {
        let bad = |m: String| RcaError::Config(format!("report record: {m}"));
        let index = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| bad(format!("unknown feature {name:?}")))
        };
        let model = v["model"].as_str().ok_or_else(|| bad("missing model".into()))?.parse()?;
        let cycle = v["cycle"]
            .as_u64()
            .and_then(|c| u32::try_from(c).ok())
            .ok_or_else(|| bad("missing cycle".into()))?;
        let mut scores = vec![0u8; names.len()];
        for (k, s) in v["scores"].as_object().ok_or_else(|| bad("missing scores".into()))? {
            let s = s.as_u64().filter(|&s| s <= 4).ok_or_else(|| bad(format!("bad score for {k}")))?;
            scores[index(k)?] = s as u8;
        }
        let mut root_causes = Vec::new();
        for n in v["root_causes"].as_array().ok_or_else(|| bad("missing root_causes".into()))? {
            root_causes.push(index(n.as_str().ok_or_else(|| bad("root cause must be a name".into()))?)?);
        }
        root_causes.sort_unstable();
        let mut lanes = Vec::new();
        if let Some(obj) = v["lanes"].as_object() {
            for (k, arr) in obj {
                let set: Option<Vec<usize>> = arr
                    .as_array()
                    .and_then(|a| a.iter().map(|x| x.as_u64().map(|x| x as usize)).collect::<Option<_>>());
                lanes.push((k.clone(), set.ok_or_else(|| bad(format!("bad lane {k}")))?));
            }
        }
        Ok(Self {
            model,
            cycle,
            scores,
            root_causes,
            lanes,
        })
    }
}

/// Feature names from the `scores` map of a report record, in order.
pub fn feature_names_of(v: &Value) -> Option<Vec<String>> {
    v["scores"].as_object().map(|m| m.keys().cloned().collect())
}

/// Evidence gathered for one high-loss cycle; a lane that failed is `None`.
#[derive(Debug, Clone, Default)]
pub struct CycleEvidence {
    pub cycle_id: u32,
    pub iae: Option<IaeEvidence>,
    pub dependency: Option<DependencyEvidence>,
    pub pca: Option<PcaResult>,
    pub iforest: Option<Vec<usize>>,
    pub knn: Option<Vec<usize>>,
}

fn lane<T>(cycle: u32, name: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("cycle {cycle}: {name} lane failed, contributing nothing: {e}");
            None
        }
    }
}

/// Trained state plus the batcher; feed it cycles in stream order.
pub struct Engine {
    config: RunConfig,
    models: Vec<ModelKind>,
    dim: usize,
    iae: Option<Iae>,
    batcher: Batcher,
    batches_done: u64,
    pool: rayon::ThreadPool,
    last_gbdt: Option<GbdtModel>,
}

impl Engine {
    /// `threads = 0` lets the pool pick; results never depend on the thread count.
    pub fn new(dim: usize, config: RunConfig, models: &[ModelKind], threads: usize) -> Result<Self> {
        config.validate()?;
        if models.is_empty() {
            return Err(RcaError::Config("no model selected".into()));
        }
        let mut models = models.to_vec();
        models.dedup();
        let iae = if models.iter().any(|m| m.needs_iae()) {
            Some(Iae::new(dim, config.iae.clone(), derive_seed(config.seed, "iae"))?)
        } else {
            None
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| RcaError::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            batcher: Batcher::new(config.batch_size)?,
            config,
            models,
            dim,
            iae,
            batches_done: 0,
            pool,
            last_gbdt: None,
        })
    }

    pub fn iae(&self) -> Option<&Iae> {
        self.iae.as_ref()
    }

    pub fn last_gbdt(&self) -> Option<&GbdtModel> {
        self.last_gbdt.as_ref()
    }

    pub fn models(&self) -> &[ModelKind] {
        &self.models
    }

    /// Accept one cycle; returns the reports of a batch that just completed.
    pub fn push(&mut self, cycle: CycleSeries, flag: ProductivityFlag) -> Result<Vec<RootCauseReport>> {
        if cycle.dim() != self.dim {
            return Err(RcaError::Dimension {
                expected: self.dim,
                actual: cycle.dim(),
            });
        }
        match self.batcher.push(cycle, flag)? {
            Some(batch) => self.process_batch(&batch),
            None => Ok(Vec::new()),
        }
    }

    /// Process the trailing partial batch, if any.
    pub fn finish(&mut self) -> Result<Vec<RootCauseReport>> {
        match self.batcher.flush()? {
            Some(batch) => self.process_batch(&batch),
            None => Ok(Vec::new()),
        }
    }

    /// Train on the batch, then report on its high-loss cycles (cycle order, then model order).
    pub fn process_batch(&mut self, batch: &CycleBatch) -> Result<Vec<RootCauseReport>> {
        let batch_index = self.batches_done;
        self.batches_done += 1;
        if let Some(iae) = self.iae.as_mut() {
            iae.train_incremental(batch)?;
        }
        let flagged: Vec<&CycleSeries> = batch
            .cycles
            .iter()
            .zip(&batch.flags)
            .filter(|(_, f)| f.is_high_loss())
            .map(|(c, _)| c)
            .collect();
        if flagged.is_empty() {
            return Ok(Vec::new());
        }
        let wants = |m: ModelKind| self.models.contains(&m);

        let gbdt = if wants(ModelKind::Ensemble) {
            let m = GbdtModel::train(&batch.stacked, &batch.labels_per_row, &self.config.gbdt)?;
            if m.status == GbdtStatus::SingleClass {
                warn!("batch at cycle {}: every row shares one label, structural lane contributes nothing", batch.start_cycle);
            }
            Some(m)
        } else {
            None
        };
        let iforest = if wants(ModelKind::Iforest) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, "iforest"));
            rng.set_stream(batch_index);
            lane(
                batch.start_cycle,
                "iforest",
                IsolationForestModel::train(&batch.stacked, &self.config.iforest, &mut rng),
            )
        } else {
            None
        };
        let knn = if wants(ModelKind::Knn) {
            lane(
                batch.start_cycle,
                "knn",
                KnnModel::new(normal_rows(batch), self.config.knn_k),
            )
        } else {
            None
        };

        let need_iae = self.models.iter().any(|m| m.needs_iae());
        let need_dep = self.models.iter().any(|m| m.needs_dependency());
        let need_pca = self.models.iter().any(|m| m.needs_pca());
        let cfg = &self.config;
        let iae = self.iae.as_ref();
        let evidence: Vec<CycleEvidence> = self.pool.install(|| {
            flagged
                .par_iter()
                .map(|c| {
                    let id = c.cycle_id;
                    CycleEvidence {
                        cycle_id: id,
                        iae: iae
                            .filter(|_| need_iae)
                            .and_then(|m| lane(id, "autoencoder", m.score_cycle(c, &cfg.selection))),
                        dependency: need_dep
                            .then(|| lane(id, "dependency", dependency_evidence(c, &cfg.selection)))
                            .flatten(),
                        pca: need_pca.then(|| lane(id, "pca", pca_cycle(c, &cfg.pca))).flatten(),
                        iforest: iforest
                            .as_ref()
                            .and_then(|m| lane(id, "iforest", m.root_causes(c, &cfg.selection))),
                        knn: knn.as_ref().and_then(|m| lane(id, "knn", m.root_causes(c, &cfg.selection))),
                    }
                })
                .collect()
        });

        let mut reports = Vec::with_capacity(evidence.len() * self.models.len());
        for ev in &evidence {
            for &m in &self.models {
                reports.push(self.report(m, ev, gbdt.as_ref()));
            }
        }
        self.last_gbdt = gbdt;
        Ok(reports)
    }

    fn report(&self, model: ModelKind, ev: &CycleEvidence, gbdt: Option<&GbdtModel>) -> RootCauseReport {
        let d = self.dim;
        let id = ev.cycle_id;
        let sel = &self.config.selection;
        match model {
            ModelKind::Ensemble => {
                let (i1a, i1b) = ev
                    .iae
                    .as_ref()
                    .map_or((vec![], vec![]), |e| (sorted(&e.i1a), sorted(&e.i1b)));
                let i2 = ev.dependency.as_ref().map_or(vec![], |e| e.i2.clone());
                let i3 = match (&ev.pca, gbdt) {
                    (Some(p), Some(g)) if g.status == GbdtStatus::Trained => structural_evidence(p, g, sel).i3,
                    _ => vec![],
                };
                score_features(
                    &InterimResult {
                        cycle_id: id,
                        i1a,
                        i1b,
                        i2,
                        i3,
                    },
                    d,
                )
            }
            ModelKind::Iae => {
                let set = ev
                    .iae
                    .as_ref()
                    .map_or(vec![], |e| e.i1a.iter().chain(&e.i1b).copied().collect());
                standalone(model, id, d, "iae", set)
            }
            ModelKind::Pca => {
                let set = ev.pca.as_ref().map_or(vec![], |p| {
                    crate::select::select_top_fraction(&p.feature_scores, sel.frac_pca)
                });
                standalone(model, id, d, "pca", set)
            }
            ModelKind::Mi => {
                let set = ev.dependency.as_ref().map_or(vec![], |e| e.mi_top.clone());
                standalone(model, id, d, "mi", set)
            }
            ModelKind::Iforest => standalone(model, id, d, "iforest", ev.iforest.clone().unwrap_or_default()),
            ModelKind::Knn => standalone(model, id, d, "knn", ev.knn.clone().unwrap_or_default()),
        }
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

/// Rows of the batch's normal (P = 0) cycles.
fn normal_rows(batch: &CycleBatch) -> BinaryMatrix {
    let mut m = BinaryMatrix::new(batch.dim());
    for (row, &label) in batch.stacked.iter_rows().zip(&batch.labels_per_row) {
        if label == 0 {
            m.push_row(row);
        }
    }
    m
}

/// One-shot convenience: run every cycle through a fresh engine.
pub fn run_stream<I>(dim: usize, config: &RunConfig, models: &[ModelKind], threads: usize, cycles: I) -> Result<(Engine, Vec<RootCauseReport>)>
where
    I: IntoIterator<Item = (CycleSeries, ProductivityFlag)>,
{
    let mut engine = Engine::new(dim, config.clone(), models, threads)?;
    let mut out = Vec::new();
    for (c, f) in cycles {
        out.extend(engine.push(c, f)?);
    }
    out.extend(engine.finish()?);
    Ok((engine, out))
}
