//! Adversarial imitation of expert reasoning paths.
//!
//! Each round the policy rolls out paths from expert origins, the comparator
//! takes one step separating expert from generated path embeddings, and the
//! policy takes one REINFORCE step with the whole-path return
//! `Q = log D(p)` from the updated comparator plus an entropy bonus.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::comparator::ComparatorModel;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeBase, PathSet, ReasoningPath};
use crate::policy::{PathDistribution, PolicyModel, WeightedPath, DEFAULT_ENUMERATION_CAP};
use crate::rng::{seeded, substream};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub rounds: usize,
    pub episodes_per_round: usize,
    /// Expert paths drawn per comparator step.
    pub batch_size: usize,
    pub policy_lr: f64,
    pub comparator_lr: f64,
    /// Initial entropy coefficient; decays linearly to zero over the run.
    pub entropy_coef: f64,
    pub hop_bound: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Record the exact TV distance each round when enumeration fits under the cap.
    pub track_tv: bool,
    pub enumeration_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            episodes_per_round: 32,
            batch_size: 32,
            policy_lr: 1e-3,
            comparator_lr: 1e-3,
            entropy_coef: 0.1,
            hop_bound: 2,
            hidden: 64,
            seed: 0,
            track_tv: true,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.episodes_per_round > 0
            && self.batch_size > 0
            && self.policy_lr >= 0.0
            && self.comparator_lr >= 0.0
            && self.entropy_coef >= 0.0
            && self.hop_bound > 0
            && self.hidden > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training configuration {self:?}")))
        }
    }

    /// Entropy coefficient used in round `round` (0-based).
    pub fn entropy_at(&self, round: usize) -> f64 {
        if self.rounds == 0 {
            return self.entropy_coef;
        }
        self.entropy_coef * (1.0 - round as f64 / self.rounds as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub comparator_loss: f64,
    /// `−mean Q` over the round's generated paths.
    pub interpreter_loss: f64,
    pub mean_q: f64,
    pub entropy: f64,
    pub tv_distance: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricTrace {
    pub records: Vec<RoundMetrics>,
}

impl MetricTrace {
    pub const HEADER: [&'static str; 6] = ["round", "comp_loss", "interp_loss", "mean_q", "entropy", "tv_distance"];

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `round,comp_loss,interp_loss,mean_q,entropy,tv_distance`;
    /// rounds are 1-based and an untracked TV is left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::HEADER)?;
        for r in &self.records {
            out.write_record([
                (r.round + 1).to_string(),
                r.comparator_loss.to_string(),
                r.interpreter_loss.to_string(),
                r.mean_q.to_string(),
                r.entropy.to_string(),
                r.tv_distance.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<metrics csv>", e))?;
        Ok(())
    }
}

/// A generated path with its whole-path return.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub path: ReasoningPath,
    pub q: f64,
}

/// One policy-gradient ascent step with batch-mean baseline and entropy bonus.
pub fn policy_step<T: Scalar>(
    m: &PolicyModel<T>,
    kb: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    episodes: &[Episode],
    entropy_coef: f64,
    lr: f64,
) -> Result<PolicyModel<T>> {
    if episodes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let baseline = episodes.iter().map(|e| e.q).sum::<f64>() / episodes.len() as f64;
    let weighted: Vec<WeightedPath<T>> = episodes
        .iter()
        .map(|e| WeightedPath {
            path: e.path.clone(),
            weight: T::lit(e.q - baseline),
        })
        .collect();
    let grads = m.surrogate_gradient(kb, tab, &weighted, T::lit(entropy_coef))?;
    let mut next = m.clone();
    next.net.apply(&grads, T::lit(lr));
    Ok(next)
}

pub fn tv_distance(a: &PathDistribution, b: &PathDistribution) -> f64 {
    let mut total = 0.0;
    for (p, &x) in a {
        total += (x - b.get(p).copied().unwrap_or(0.0)).abs();
    }
    for (p, &y) in b {
        if !a.contains_key(p) {
            total += y;
        }
    }
    0.5 * total
}

pub fn empirical_distribution(paths: &[ReasoningPath]) -> PathDistribution {
    let mut out = PathDistribution::new();
    let w = 1.0 / paths.len() as f64;
    for p in paths {
        *out.entry(p.clone()).or_insert(0.0) += w;
    }
    out
}

/// Exact distribution of rollouts whose origins are drawn from `origins`
/// (an empirical origin distribution).
pub fn generated_distribution<T: Scalar>(
    m: &PolicyModel<T>,
    kb: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    origins: &BTreeMap<EntityId, f64>,
    cap: usize,
) -> Result<PathDistribution> {
    let per_origin: Vec<(f64, PathDistribution)> = origins
        .par_iter()
        .map(|(&o, &w)| m.enumerate_distribution(kb, tab, o, m.hop_bound, cap).map(|d| (w, d)))
        .collect::<Result<_>>()?;
    let mut out = PathDistribution::new();
    for (w, d) in per_origin {
        for (p, x) in d {
            *out.entry(p).or_insert(0.0) += w * x;
        }
    }
    Ok(out)
}

/// Expert paths re-expressed in the destination knowledge base's ids.
struct AlignedExperts<T> {
    origins: Vec<EntityId>,
    embeddings: Vec<Vec<T>>,
    // None: path leaves the destination knowledge base
    paths: Vec<Option<ReasoningPath>>,
}

fn align_experts<T: Scalar>(
    kb_e: &KnowledgeBase,
    kb_d: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    experts: &PathSet,
) -> Result<AlignedExperts<T>> {
    let mut missing = Vec::new();
    let mut origins = Vec::with_capacity(experts.len());
    let mut embeddings = Vec::with_capacity(experts.len());
    let mut paths = Vec::with_capacity(experts.len());
    for p in experts.paths() {
        let name = kb_e.entity_name(p.origin);
        match kb_d.entity_id(name) {
            Some(o) => origins.push(o),
            None => {
                missing.push(name.to_string());
                continue;
            }
        }
        let mut mapped = ReasoningPath::new(origins[origins.len() - 1]);
        let mut ok = true;
        let mut emb = vec![T::zero(); tab.dim()];
        for &(r, e) in &p.steps {
            let rd = kb_d
                .relation_id(kb_e.relation_name(r))
                .ok_or_else(|| Error::UnknownRelation(kb_e.relation_name(r).to_string()))?;
            emb.iter_mut().zip(tab.try_relation(rd)?).for_each(|(a, &x)| *a += x);
            match kb_d.entity_id(kb_e.entity_name(e)) {
                Some(ed) => mapped.steps.push((rd, ed)),
                None => ok = false,
            }
        }
        embeddings.push(emb);
        paths.push(ok.then_some(mapped));
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingOrigins(missing));
    }
    Ok(AlignedExperts {
        origins,
        embeddings,
        paths,
    })
}

impl<T: Scalar> AlignedExperts<T> {
    fn origin_weights(&self) -> BTreeMap<EntityId, f64> {
        let mut out = BTreeMap::new();
        let w = 1.0 / self.origins.len() as f64;
        for &o in &self.origins {
            *out.entry(o).or_insert(0.0) += w;
        }
        out
    }

    /// TV to the empirical expert distribution; expert paths that leave the
    /// destination knowledge base count as unmatched mass.
    fn tv_to(&self, generated: &PathDistribution) -> f64 {
        let present: Vec<ReasoningPath> = self.paths.iter().flatten().cloned().collect();
        let w = 1.0 / self.paths.len() as f64;
        let mut expert = PathDistribution::new();
        for p in present {
            *expert.entry(p).or_insert(0.0) += w;
        }
        let unmatched = w * self.paths.iter().filter(|p| p.is_none()).count() as f64;
        tv_distance(&expert, generated) + 0.5 * unmatched
    }
}

/// Everything produced by [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub policy: PolicyModel<T>,
    pub comparator: ComparatorModel<T>,
    pub trace: MetricTrace,
    /// Policy with the lowest TV distance (or interpreter loss when TV is not
    /// tracked) among the initial policy and every round's update.
    pub best_policy: PolicyModel<T>,
    /// `None` when the initial policy was never improved on.
    pub best_round: Option<usize>,
    pub initial_tv: Option<f64>,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn best_tv(&self) -> Option<f64> {
        match self.best_round {
            None => self.initial_tv,
            Some(r) => self.trace.records[r].tv_distance,
        }
    }
}

/// Runs `cfg.rounds` alternations of comparator and policy updates.
pub fn train<T: Scalar>(
    kb_e: &KnowledgeBase,
    kb_d: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    experts: &PathSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let mut rng = seeded(cfg.seed);
    let policy = PolicyModel::new(kb_d, tab.dim(), cfg.hidden, cfg.hop_bound, &mut rng)?;
    let comparator = ComparatorModel::new(tab.dim(), cfg.hidden, &mut rng)?;
    train_from(kb_e, kb_d, tab, experts, cfg, policy, comparator)
}

/// [`train`] starting from given models.
pub fn train_from<T: Scalar>(
    kb_e: &KnowledgeBase,
    kb_d: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    experts: &PathSet,
    cfg: &TrainConfig,
    mut policy: PolicyModel<T>,
    mut comparator: ComparatorModel<T>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if experts.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if tab.num_entities() != kb_d.num_entities() || tab.num_relations() != kb_d.num_relations() {
        return Err(Error::InvalidArgument(
            "embedding table does not cover the destination knowledge base".into(),
        ));
    }
    let aligned = align_experts(kb_e, kb_d, tab, experts)?;
    let origin_weights = aligned.origin_weights();
    let measure_tv = |m: &PolicyModel<T>| -> Option<f64> {
        if !cfg.track_tv {
            return None;
        }
        generated_distribution(m, kb_d, tab, &origin_weights, cfg.enumeration_cap)
            .ok()
            .map(|d| aligned.tv_to(&d))
    };

    let initial_tv = measure_tv(&policy);
    let mut best_policy = policy.clone();
    let mut best_score = initial_tv.unwrap_or(f64::INFINITY);
    let mut best_round = None;
    let mut trace = MetricTrace::default();

    for round in 0..cfg.rounds {
        let round_seed = substream(cfg.seed, round as u64 + 1);
        let mut rng = seeded(round_seed);
        let origins: Vec<EntityId> = (0..cfg.episodes_per_round)
            .map(|_| aligned.origins[rng.random_range(0..aligned.origins.len())])
            .collect();
        let expert_batch: Vec<Vec<T>> = (0..cfg.batch_size)
            .map(|_| aligned.embeddings[rng.random_range(0..aligned.embeddings.len())].clone())
            .collect();

        let generated: Vec<ReasoningPath> = origins
            .par_iter()
            .enumerate()
            .map(|(i, &o)| policy.rollout(kb_d, tab, o, substream(round_seed, i as u64)))
            .collect::<Result<_>>()?;
        let gen_emb: Vec<Vec<T>> = generated
            .iter()
            .map(|p| tab.path_embedding(p))
            .collect::<Result<_>>()?;

        let comparator_loss = comparator.loss(&expert_batch, &gen_emb)?.as_f64();
        comparator = comparator.step(&expert_batch, &gen_emb, T::lit(cfg.comparator_lr))?;

        let episodes: Vec<Episode> = generated
            .iter()
            .zip(&gen_emb)
            .map(|(p, e)| {
                Ok(Episode {
                    path: p.clone(),
                    q: comparator.log_feature(e)?.as_f64(),
                })
            })
            .collect::<Result<_>>()?;
        let mean_q = episodes.iter().map(|e| e.q).sum::<f64>() / episodes.len() as f64;
        let entropy = policy.mean_entropy(kb_d, tab, &generated)?;
        policy = policy_step(&policy, kb_d, tab, &episodes, cfg.entropy_at(round), cfg.policy_lr)?;

        let tv_distance = measure_tv(&policy);
        let interpreter_loss = -mean_q;
        let score = tv_distance.unwrap_or(interpreter_loss);
        if score < best_score {
            best_score = score;
            best_round = Some(round);
            best_policy = policy.clone();
        }
        trace.records.push(RoundMetrics {
            round,
            comparator_loss,
            interpreter_loss,
            mean_q,
            entropy,
            tv_distance,
        });
    }

    Ok(TrainOutcome {
        policy,
        comparator,
        trace,
        best_policy,
        best_round,
        initial_tv,
    })
}

/// Fraction of test paths whose terminal entity is hit by at least one of
/// `samples_per_origin` rollouts from the test path's origin.
pub fn evaluate_accuracy<T: Scalar>(
    m: &PolicyModel<T>,
    kb: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    test: &PathSet,
    samples_per_origin: usize,
    seed: u64,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits: Vec<bool> = test
        .paths()
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let base = substream(seed, j as u64);
            for s in 0..samples_per_origin {
                if m.rollout(kb, tab, p.origin, substream(base, s as u64))?.terminal() == p.terminal() {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{parse_triples, PathSource};

    #[test]
    fn tv_of_identical_and_disjoint() {
        let a = ReasoningPath::new(EntityId(0));
        let b = ReasoningPath::new(EntityId(1));
        let d1 = empirical_distribution(&[a.clone(), b.clone()]);
        assert_eq!(tv_distance(&d1, &d1), 0.0);
        let d2 = empirical_distribution(&[a.clone()]);
        let d3 = empirical_distribution(&[b.clone()]);
        assert_eq!(tv_distance(&d2, &d3), 1.0);
        assert_eq!(tv_distance(&d1, &d2), 0.5);
    }

    #[test]
    fn entropy_schedule_decays_to_zero() {
        let cfg = TrainConfig { rounds: 4, entropy_coef: 0.2, ..Default::default() };
        assert_eq!(cfg.entropy_at(0), 0.2);
        assert!((cfg.entropy_at(2) - 0.1).abs() < 1e-15);
        assert!(cfg.entropy_at(3) > 0.0);
    }

    #[test]
    fn missing_origins_are_listed() {
        let kb_e = parse_triples("a\tR\tb\nx\tR\tb\n".as_bytes()).unwrap();
        let kb_d = parse_triples("b\tR\tc\n".as_bytes()).unwrap();
        let tab = EmbeddingTable::<f64>::zeros(kb_d.num_entities(), kb_d.num_relations(), 2);
        let experts = crate::kg::sample_expert_paths(&kb_e, 8, 1, 1).unwrap();
        let err = train(&kb_e, &kb_d, &tab, &experts, &TrainConfig { rounds: 1, ..Default::default() }).unwrap_err();
        match err {
            Error::MissingOrigins(names) => assert_eq!(names, vec!["a".to_string(), "x".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        let kb = parse_triples("a\tR\tb\n".as_bytes()).unwrap();
        let tab = EmbeddingTable::<f64>::zeros(kb.num_entities(), kb.num_relations(), 2);
        let empty = PathSet::new(Vec::new(), PathSource::Expert).unwrap();
        assert!(train(&kb, &kb, &tab, &empty, &TrainConfig::default()).is_err());
        let m = PolicyModel::<f64>::new(&kb, 2, 4, 1, &mut seeded(0)).unwrap();
        assert!(matches!(policy_step(&m, &kb, &tab, &[], 0.1, 0.1), Err(Error::EmptyBatch)));
        assert!(evaluate_accuracy(&m, &kb, &tab, &empty, 1, 0).is_err());
    }
}
