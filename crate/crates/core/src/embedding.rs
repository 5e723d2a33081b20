//! Translation embeddings (`head + relation ≈ tail`), path embeddings and
//! nearest-entity search.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeBase, ReasoningPath, RelationId, Triple};
use crate::rng::seeded;
use crate::scalar::{l2_norm, squared_distance, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 100,
            negatives: 1,
            seed: 0,
        }
    }
}

impl TransEConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.margin > 0.0) || !(self.learning_rate > 0.0) || self.negatives == 0 {
            return Err(Error::InvalidArgument(format!(
                "need dim >= 1, margin > 0, learning rate > 0, negatives >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Entity and relation vectors of a common dimension, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    entities: Vec<T>,
    relations: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn zeros(num_entities: usize, num_relations: usize, dim: usize) -> Self {
        Self {
            dim,
            entities: vec![T::zero(); num_entities * dim],
            relations: vec![T::zero(); num_relations * dim],
        }
    }

    pub fn from_rows(dim: usize, entities: Vec<Vec<T>>, relations: Vec<Vec<T>>) -> Result<Self> {
        for row in entities.iter().chain(&relations) {
            if row.len() != dim {
                return Err(Error::Shape { expected: dim, actual: row.len() });
            }
        }
        Ok(Self {
            dim,
            entities: entities.concat(),
            relations: relations.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Table for `sub`, a knowledge base sharing `full`'s relation ids, with
    /// entity rows looked up by name.
    pub fn restrict(&self, full: &KnowledgeBase, sub: &KnowledgeBase) -> Result<Self> {
        if sub.num_relations() != full.num_relations() || sub.num_relations() != self.num_relations() {
            return Err(Error::Shape {
                expected: self.num_relations(),
                actual: sub.num_relations(),
            });
        }
        let mut entities = Vec::with_capacity(sub.num_entities() * self.dim);
        for e in sub.entities() {
            let name = sub.entity_name(e);
            let id = full.entity_id(name).ok_or_else(|| Error::UnknownEntity(name.to_string()))?;
            entities.extend_from_slice(self.try_entity(id)?);
        }
        Ok(Self {
            dim: self.dim,
            entities,
            relations: self.relations.clone(),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim
    }

    pub fn entity(&self, e: EntityId) -> &[T] {
        &self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[T] {
        &self.relations[r.index() * self.dim..(r.index() + 1) * self.dim]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [T] {
        let d = self.dim;
        &mut self.entities[e.index() * d..(e.index() + 1) * d]
    }

    pub fn relation_mut(&mut self, r: RelationId) -> &mut [T] {
        let d = self.dim;
        &mut self.relations[r.index() * d..(r.index() + 1) * d]
    }

    pub fn try_entity(&self, e: EntityId) -> Result<&[T]> {
        if e.index() < self.num_entities() {
            Ok(self.entity(e))
        } else {
            Err(Error::UnknownEntity(format!("#{}", e.0)))
        }
    }

    pub fn try_relation(&self, r: RelationId) -> Result<&[T]> {
        if r.index() < self.num_relations() {
            Ok(self.relation(r))
        } else {
            Err(Error::UnknownRelation(format!("#{}", r.0)))
        }
    }

    /// `‖e_head + r − e_tail‖₂`; lower is more plausible.
    pub fn score(&self, t: &Triple) -> Result<T> {
        let h = self.try_entity(t.head)?;
        let r = self.try_relation(t.relation)?;
        let tl = self.try_entity(t.tail)?;
        Ok(h.iter()
            .zip(r)
            .zip(tl)
            .map(|((&a, &b), &c)| (a + b - c) * (a + b - c))
            .sum::<T>()
            .sqrt())
    }

    /// Sum of the relation vectors along `path`; entities do not contribute.
    pub fn path_embedding(&self, path: &ReasoningPath) -> Result<Vec<T>> {
        let mut acc = vec![T::zero(); self.dim];
        for r in path.relations() {
            let v = self.try_relation(r)?;
            acc.iter_mut().zip(v).for_each(|(a, &x)| *a += x);
        }
        Ok(acc)
    }

    /// The `k` entities closest to `v` in Euclidean distance, ascending, ties
    /// by id. `k` is clamped to the entity count.
    pub fn nearest_entities(&self, v: &[T], k: usize) -> Result<Vec<(EntityId, T)>> {
        if v.len() != self.dim {
            return Err(Error::Shape { expected: self.dim, actual: v.len() });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let mut all: Vec<(EntityId, T)> = (0..self.num_entities() as u32)
            .map(EntityId)
            .map(|e| (e, squared_distance(self.entity(e), v)))
            .collect();
        let by_distance = |a: &(EntityId, T), b: &(EntityId, T)| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        };
        let k = k.min(all.len());
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, by_distance);
            all.truncate(k);
        }
        all.sort_by(by_distance);
        Ok(all.into_iter().map(|(e, d2)| (e, d2.sqrt())).collect())
    }

    /// CSV export: header `id,dim,v0..`, one `e<id>` row per entity then one
    /// `r<id>` row per relation.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string(), "dim".to_string()];
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        out.write_record(&header)?;
        let rows = (0..self.num_entities())
            .map(|i| (format!("e{i}"), self.entity(EntityId(i as u32))))
            .chain((0..self.num_relations()).map(|i| (format!("r{i}"), self.relation(RelationId(i as u32)))));
        for (id, v) in rows {
            let mut rec = vec![id, self.dim.to_string()];
            rec.extend(v.iter().map(|x| x.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<embedding csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut entities: Vec<(usize, Vec<T>)> = Vec::new();
        let mut relations: Vec<(usize, Vec<T>)> = Vec::new();
        let mut dim = None;
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let bad = |message: String| Error::Parse { line, message };
            let id = rec.get(0).ok_or_else(|| bad("missing id".into()))?;
            let d: usize = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("missing or bad dim".into()))?;
            if *dim.get_or_insert(d) != d || rec.len() != d + 2 {
                return Err(bad("inconsistent dimension".into()));
            }
            let v = rec
                .iter()
                .skip(2)
                .map(|s| s.parse::<T>().map_err(|_| bad(format!("not a number: {s:?}"))))
                .collect::<Result<Vec<T>>>()?;
            let (kind, idx) = id.split_at(1);
            let idx: usize = idx.parse().map_err(|_| bad(format!("bad id {id:?}")))?;
            match kind {
                "e" => entities.push((idx, v)),
                "r" => relations.push((idx, v)),
                _ => return Err(bad(format!("bad id {id:?}"))),
            }
        }
        let dim = dim.ok_or(Error::Parse { line: 1, message: "no embedding rows".into() })?;
        let order = |mut rows: Vec<(usize, Vec<T>)>, what: &str| -> Result<Vec<Vec<T>>> {
            rows.sort_by_key(|r| r.0);
            if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
                return Err(Error::Parse { line: 0, message: format!("{what} ids are not contiguous") });
            }
            Ok(rows.into_iter().map(|r| r.1).collect())
        };
        Self::from_rows(dim, order(entities, "entity")?, order(relations, "relation")?)
    }
}

/// Margin ranking loss `max(0, γ + d(pos) − d(neg))` of one positive/negative pair.
pub fn margin_loss<T: Scalar>(tab: &EmbeddingTable<T>, pos: &Triple, neg: &Triple, margin: T) -> Result<T> {
    Ok((margin + tab.score(pos)? - tab.score(neg)?).max(T::zero()))
}

/// Gradient contributions of [`margin_loss`] as `(vector, sign-carrying gradient)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Entity(EntityId),
    Relation(RelationId),
}

pub fn margin_loss_grad<T: Scalar>(
    tab: &EmbeddingTable<T>,
    pos: &Triple,
    neg: &Triple,
    margin: T,
) -> Result<(T, Vec<(Param, Vec<T>)>)> {
    let loss = margin_loss(tab, pos, neg, margin)?;
    if loss <= T::zero() {
        return Ok((loss, Vec::new()));
    }
    let unit_residual = |t: &Triple| {
        let res: Vec<T> = tab
            .entity(t.head)
            .iter()
            .zip(tab.relation(t.relation))
            .zip(tab.entity(t.tail))
            .map(|((&h, &r), &tl)| h + r - tl)
            .collect();
        let n = l2_norm(&res);
        if n > T::zero() {
            res.into_iter().map(|x| x / n).collect()
        } else {
            vec![T::zero(); res.len()]
        }
    };
    let gp = unit_residual(pos);
    let gn = unit_residual(neg);
    let neg_of = |v: &[T]| v.iter().map(|&x| -x).collect::<Vec<T>>();
    Ok((
        loss,
        vec![
            (Param::Entity(pos.head), gp.clone()),
            (Param::Entity(pos.tail), neg_of(&gp)),
            (Param::Relation(pos.relation), gp.clone()),
            (Param::Entity(neg.head), neg_of(&gn)),
            (Param::Entity(neg.tail), gn.clone()),
            (Param::Relation(neg.relation), neg_of(&gn)),
        ],
    ))
}

fn normalize<T: Scalar>(v: &mut [T]) {
    let n = l2_norm(v);
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Corrupts head or tail (probability ½ each) with a uniformly drawn
/// different entity.
fn corrupt<R: Rng + ?Sized>(t: &Triple, num_entities: usize, rng: &mut R) -> Triple {
    let mut out = *t;
    let replace_head = rng.random_bool(0.5);
    let current = if replace_head { t.head } else { t.tail };
    let mut e = EntityId(rng.random_range(0..num_entities as u32 - 1));
    if e >= current {
        e.0 += 1;
    }
    if replace_head {
        out.head = e;
    } else {
        out.tail = e;
    }
    out
}

/// Trains translation embeddings with plain SGD on the margin ranking loss.
pub fn train_transe<T: Scalar>(kb: &KnowledgeBase, cfg: &TransEConfig) -> Result<EmbeddingTable<T>> {
    train_transe_traced(kb, cfg).map(|(tab, _)| tab)
}

/// As [`train_transe`], also returning the mean loss of every epoch.
pub fn train_transe_traced<T: Scalar>(kb: &KnowledgeBase, cfg: &TransEConfig) -> Result<(EmbeddingTable<T>, Vec<f64>)> {
    cfg.validate()?;
    if kb.num_triples() == 0 {
        return Err(Error::EmptyKnowledgeBase);
    }
    if kb.num_entities() < 2 {
        return Err(Error::InvalidArgument("negative sampling needs at least two entities".into()));
    }
    let mut rng = seeded(cfg.seed);
    let d = cfg.dim;
    let bound = 6.0 / (d as f64).sqrt();
    let mut tab = EmbeddingTable::<T>::zeros(kb.num_entities(), kb.num_relations(), d);
    for v in tab.entities.iter_mut() {
        *v = T::lit(rng.random_range(-bound..=bound));
    }
    // NO_OP (row 0) stays zero
    for v in tab.relations[d..].iter_mut() {
        *v = T::lit(rng.random_range(-bound..=bound));
    }
    for e in kb.entities() {
        normalize(tab.entity_mut(e));
    }

    let lr = T::lit(cfg.learning_rate);
    let margin = T::lit(cfg.margin);
    let mut order: Vec<usize> = (0..kb.num_triples()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let pos = kb.triples()[i];
            for _ in 0..cfg.negatives {
                let neg = corrupt(&pos, kb.num_entities(), &mut rng);
                let (loss, grads) = margin_loss_grad(&tab, &pos, &neg, margin)?;
                total += loss.as_f64();
                for (param, g) in grads {
                    let target = match param {
                        Param::Entity(e) => tab.entity_mut(e),
                        Param::Relation(r) if r.is_no_op() => continue,
                        Param::Relation(r) => tab.relation_mut(r),
                    };
                    target.iter_mut().zip(&g).for_each(|(p, &gi)| *p -= lr * gi);
                }
                for e in [pos.head, pos.tail, neg.head, neg.tail] {
                    normalize(tab.entity_mut(e));
                }
            }
        }
        losses.push(total / (kb.num_triples() * cfg.negatives) as f64);
    }
    Ok((tab, losses))
}
