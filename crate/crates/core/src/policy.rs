//! The interpreter's reasoning policy: a relation distribution conditioned on
//! `(current entity, origin entity)`, masked to the relations usable at the
//! current entity, rolled out for a fixed number of hops.

use std::collections::BTreeMap;

use rand::Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeBase, ReasoningPath, RelationId};
use crate::neural::{Activation, DenseNet, Gradients};
use crate::rng::seeded;
use crate::scalar::Scalar;

/// Walk count above which exact enumeration is refused.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// Exact path distribution; masses are `f64` regardless of the model scalar.
pub type PathDistribution = BTreeMap<ReasoningPath, f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct ReasonerState<T> {
    pub current: EntityId,
    pub origin: EntityId,
    /// `concat(e_current, e_origin)`.
    pub state_vec: Vec<T>,
}

impl<T: Scalar> ReasonerState<T> {
    pub fn new(tab: &EmbeddingTable<T>, current: EntityId, origin: EntityId) -> Result<Self> {
        let mut state_vec = tab.try_entity(current)?.to_vec();
        state_vec.extend_from_slice(tab.try_entity(origin)?);
        Ok(Self {
            current,
            origin,
            state_vec,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel<T> {
    pub net: DenseNet<T>,
    pub hop_bound: usize,
}

/// Masked, renormalised softmax of `logits`; invalid entries are exactly zero.
pub fn masked_softmax<T: Scalar>(logits: &[T], mask: &[bool]) -> Result<Vec<T>> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return Err(Error::NoValidAction("(empty mask)".into()));
    }
    let exps: Vec<T> = logits
        .iter()
        .zip(mask)
        .map(|(&z, &m)| if m { (z - max).exp() } else { T::zero() })
        .collect();
    let sum: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Shannon entropy (nats) of a distribution, skipping zero entries.
pub fn entropy<T: Scalar>(p: &[T]) -> T {
    -p.iter()
        .filter(|&&x| x > T::zero())
        .map(|&x| x * x.ln())
        .sum::<T>()
}

fn sample_index<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > T::zero() {
            acc += p.as_f64();
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// One trajectory of on-policy experience with its whole-path weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPath<T> {
    pub path: ReasoningPath,
    pub weight: T,
}

impl<T: Scalar> PolicyModel<T> {
    /// `2d → hidden → hidden → |R|` with ReLU hidden layers and a softmax
    /// head. The head starts small so the initial policy is near uniform.
    pub fn new<R: Rng + ?Sized>(
        kb: &KnowledgeBase,
        dim: usize,
        hidden: usize,
        hop_bound: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let net = DenseNet::mlp(
            &[2 * dim, hidden, hidden, kb.num_relations()],
            Activation::Relu,
            Activation::Softmax,
            0.1,
            rng,
        )?;
        Ok(Self { net, hop_bound })
    }

    pub fn from_net(kb: &KnowledgeBase, net: DenseNet<T>, hop_bound: usize) -> Result<Self> {
        if net.output_width() != kb.num_relations() {
            return Err(Error::Shape {
                expected: kb.num_relations(),
                actual: net.output_width(),
            });
        }
        Ok(Self { net, hop_bound })
    }

    pub fn action_distribution(&self, s: &ReasonerState<T>, kb: &KnowledgeBase) -> Result<Vec<T>> {
        kb.check_entity(s.current)?;
        let logits = self.net.logits(&s.state_vec)?;
        masked_softmax(&logits, &kb.valid_mask(s.current))
            .map_err(|_| Error::NoValidAction(kb.entity_name(s.current).to_string()))
    }

    fn distribution_at(
        &self,
        kb: &KnowledgeBase,
        tab: &EmbeddingTable<T>,
        current: EntityId,
        origin: EntityId,
    ) -> Result<Vec<T>> {
        self.action_distribution(&ReasonerState::new(tab, current, origin)?, kb)
    }

    /// Samples `hop_bound` hops from `e0`; deterministic under `seed`.
    pub fn rollout(&self, kb: &KnowledgeBase, tab: &EmbeddingTable<T>, e0: EntityId, seed: u64) -> Result<ReasoningPath> {
        self.rollout_with(kb, tab, e0, &mut seeded(seed))
    }

    pub fn rollout_with<R: Rng + ?Sized>(
        &self,
        kb: &KnowledgeBase,
        tab: &EmbeddingTable<T>,
        e0: EntityId,
        rng: &mut R,
    ) -> Result<ReasoningPath> {
        kb.check_entity(e0)?;
        let mut path = ReasoningPath::new(e0);
        let mut at = e0;
        for _ in 0..self.hop_bound {
            let probs = self.distribution_at(kb, tab, at, e0)?;
            let r = RelationId(sample_index(&probs, rng) as u32);
            let tails = kb.tails(at, r);
            let next = tails[rng.random_range(0..tails.len())];
            path.steps.push((r, next));
            at = next;
        }
        Ok(path)
    }

    /// `Σₜ log P(rᵗ | sₜ) − log(#tails)`.
    pub fn path_log_prob(&self, kb: &KnowledgeBase, tab: &EmbeddingTable<T>, path: &ReasoningPath) -> Result<T> {
        path.validate(kb)?;
        let mut at = path.origin;
        let mut total = T::zero();
        for &(r, e) in &path.steps {
            let probs = self.distribution_at(kb, tab, at, path.origin)?;
            total += probs[r.index()].ln() - T::lit(kb.tails(at, r).len() as f64).ln();
            at = e;
        }
        Ok(total)
    }

    /// Exact distribution over all `hops`-long walks from `e0`.
    pub fn enumerate_distribution(
        &self,
        kb: &KnowledgeBase,
        tab: &EmbeddingTable<T>,
        e0: EntityId,
        hops: usize,
        cap: usize,
    ) -> Result<PathDistribution> {
        kb.check_entity(e0)?;
        let mut out = PathDistribution::new();
        let mut frontier = vec![(ReasoningPath::new(e0), 1.0f64)];
        for _ in 0..hops {
            let mut next = Vec::new();
            for (path, mass) in frontier {
                let at = path.terminal();
                let probs = self.distribution_at(kb, tab, at, e0)?;
                for (ri, &p) in probs.iter().enumerate() {
                    if p <= T::zero() {
                        continue;
                    }
                    let r = RelationId(ri as u32);
                    let tails = kb.tails(at, r);
                    let share = mass * p.as_f64() / tails.len() as f64;
                    for t in tails {
                        let mut q = path.clone();
                        q.steps.push((r, t));
                        next.push((q, share));
                    }
                }
                if next.len() > cap {
                    return Err(Error::EnumerationCap { cap });
                }
            }
            frontier = next;
        }
        for (p, m) in frontier {
            *out.entry(p).or_insert(0.0) += m;
        }
        Ok(out)
    }

    /// Value of the policy-gradient surrogate
    /// `(1/N) Σⱼ wⱼ Σₜ log π(rᵗ|sₜ) + α · mean over visited states of H(π(·|s))`.
    pub fn surrogate(
        &self,
        kb: &KnowledgeBase,
        tab: &EmbeddingTable<T>,
        episodes: &[WeightedPath<T>],
        entropy_coef: T,
    ) -> Result<T> {
        if episodes.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = T::lit(episodes.len() as f64);
        let steps = T::lit(episodes.iter().map(|e| e.path.hops()).sum::<usize>().max(1) as f64);
        let mut total = T::zero();
        for ep in episodes {
            let mut at = ep.path.origin;
            for &(r, e) in &ep.path.steps {
                let probs = self.distribution_at(kb, tab, at, ep.path.origin)?;
                total += ep.weight * probs[r.index()].ln() / n + entropy_coef * entropy(&probs) / steps;
                at = e;
            }
        }
        Ok(total)
    }

    /// Analytic gradient of [`PolicyModel::surrogate`] w.r.t. the network parameters.
    pub fn surrogate_gradient(
        &self,
        kb: &KnowledgeBase,
        tab: &EmbeddingTable<T>,
        episodes: &[WeightedPath<T>],
        entropy_coef: T,
    ) -> Result<Gradients<T>> {
        if episodes.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = T::lit(episodes.len() as f64);
        let steps = T::lit(episodes.iter().map(|e| e.path.hops()).sum::<usize>().max(1) as f64);
        let mut grads = Gradients::zeros_like(&self.net);
        for ep in episodes {
            ep.path.validate(kb)?;
            let mut at = ep.path.origin;
            for &(r, e) in &ep.path.steps {
                let state = ReasonerState::new(tab, at, ep.path.origin)?;
                let mask = kb.valid_mask(at);
                let probs = self.action_distribution(&state, kb)?;
                let h = entropy(&probs);
                let w = ep.weight / n;
                let ent = entropy_coef / steps;
                // d/dz log q_a = 1[i=a] − q_i ; dH/dz_i = −q_i (log q_i + H), valid i only
                let upstream: Vec<T> = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &q)| {
                        if !mask[i] {
                            return T::zero();
                        }
                        let hit = if i == r.index() { T::one() } else { T::zero() };
                        let d_ent = if q > T::zero() { -q * (q.ln() + h) } else { T::zero() };
                        w * (hit - q) + ent * d_ent
                    })
                    .collect();
                let (g, _) = self.net.backward_from_logits(&state.state_vec, &upstream)?;
                grads.add_scaled(&g, T::one());
                at = e;
            }
        }
        Ok(grads)
    }

    /// Mean entropy of the action distributions met along `paths`.
    pub fn mean_entropy(&self, kb: &KnowledgeBase, tab: &EmbeddingTable<T>, paths: &[ReasoningPath]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for p in paths {
            let mut at = p.origin;
            for &(_, e) in &p.steps {
                total += entropy(&self.distribution_at(kb, tab, at, p.origin)?).as_f64();
                count += 1;
                at = e;
            }
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_triples;
    use crate::neural::Layer;

    fn zero_policy(kb: &KnowledgeBase, dim: usize, hops: usize) -> PolicyModel<f64> {
        let net = DenseNet::new(vec![Layer::zeros(2 * dim, kb.num_relations(), Activation::Softmax)]).unwrap();
        PolicyModel::from_net(kb, net, hops).unwrap()
    }

    fn unit_table(kb: &KnowledgeBase, dim: usize) -> EmbeddingTable<f64> {
        let ents = (0..kb.num_entities())
            .map(|i| (0..dim).map(|j| ((i * dim + j) as f64 * 0.37).sin()).collect())
            .collect();
        let rels = (0..kb.num_relations()).map(|_| vec![0.0; dim]).collect();
        EmbeddingTable::from_rows(dim, ents, rels).unwrap()
    }

    #[test]
    fn isolated_entity_only_has_no_op() {
        let kb = parse_triples("a\tR\tb\n".as_bytes()).unwrap();
        let tab = unit_table(&kb, 3);
        let m = zero_policy(&kb, 3, 1);
        let b = kb.entity_id("b").unwrap();
        let p = m.action_distribution(&ReasonerState::new(&tab, b, b).unwrap(), &kb).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_net_is_uniform_over_valid() {
        let kb = parse_triples("a\tR\tb\na\tS\tc\na\tT\td\nb\tU\tc\n".as_bytes()).unwrap();
        let tab = unit_table(&kb, 2);
        let m = zero_policy(&kb, 2, 1);
        let a = kb.entity_id("a").unwrap();
        let p = m.action_distribution(&ReasonerState::new(&tab, a, a).unwrap(), &kb).unwrap();
        assert_eq!(p.len(), 5);
        for (i, &q) in p.iter().enumerate() {
            let expect = if i == 4 { 0.0 } else { 0.25 };
            assert!((q - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_hop_rollout_is_origin_only() {
        let kb = parse_triples("a\tR\tb\n".as_bytes()).unwrap();
        let tab = unit_table(&kb, 2);
        let m = zero_policy(&kb, 2, 0);
        let p = m.rollout(&kb, &tab, EntityId(0), 1).unwrap();
        assert_eq!(p, ReasoningPath::new(EntityId(0)));
        assert!(m.rollout(&kb, &tab, EntityId(5), 1).is_err());
    }

    #[test]
    fn star_enumeration_is_uniform() {
        let kb = parse_triples("c\tR1\tl1\nc\tR2\tl2\nc\tR3\tl3\n".as_bytes()).unwrap();
        let tab = unit_table(&kb, 2);
        let m = zero_policy(&kb, 2, 1);
        let dist = m.enumerate_distribution(&kb, &tab, EntityId(0), 1, 100).unwrap();
        assert_eq!(dist.len(), 4);
        assert!(dist.values().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let kb = parse_triples("c\tR1\tl1\nc\tR2\tl2\nc\tR3\tl3\n".as_bytes()).unwrap();
        let tab = unit_table(&kb, 2);
        let m = zero_policy(&kb, 2, 1);
        assert!(matches!(
            m.enumerate_distribution(&kb, &tab, EntityId(0), 1, 3),
            Err(Error::EnumerationCap { cap: 3 })
        ));
    }

    #[test]
    fn log_prob_rejects_invalid_path() {
        let kb = parse_triples("a\tR\tb\n".as_bytes()).unwrap();
        let tab = unit_table(&kb, 2);
        let m = zero_policy(&kb, 2, 1);
        let mut p = ReasoningPath::new(EntityId(1));
        p.steps.push((RelationId(1), EntityId(0)));
        assert!(m.path_log_prob(&kb, &tab, &p).is_err());
    }

    #[test]
    fn empty_episode_set_is_an_error() {
        let kb = parse_triples("a\tR\tb\n".as_bytes()).unwrap();
        let tab = unit_table(&kb, 2);
        let m = zero_policy(&kb, 2, 1);
        assert!(matches!(m.surrogate_gradient(&kb, &tab, &[], 0.1), Err(Error::EmptyBatch)));
    }
}
