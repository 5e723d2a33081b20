//! Genetic-algorithm path reasoner used as the comparison baseline.
//!
//! A chromosome is a sequence of relation ids. It decodes into a valid path
//! from the origin by replacing every relation unusable at the current entity
//! with the cyclically nearest usable one and following the lowest-id tail.
//! Fitness is the comparator feature of the decoded path embedding.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::comparator::ComparatorModel;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeBase, PathSet, ReasoningPath, RelationId};
use crate::rng::{seeded, substream};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament: usize,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 50,
            crossover_rate: 0.8,
            mutation_rate: 0.05,
            tournament: 3,
            elitism: 1,
            seed: 0,
        }
    }
}

impl GaConfig {
    fn validate(&self) -> Result<()> {
        let rates = (0.0..=1.0).contains(&self.crossover_rate) && (0.0..=1.0).contains(&self.mutation_rate);
        if !rates || self.population == 0 || self.tournament == 0 || self.elitism > self.population {
            return Err(Error::InvalidArgument(format!("invalid GA configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaOutcome {
    pub path: ReasoningPath,
    pub fitness: f64,
    /// Best fitness of the initial population, then after each generation.
    pub best_per_generation: Vec<f64>,
}

/// Cyclically nearest usable relation to `gene`; ties go to the forward (`+1`) side.
fn repair(gene: RelationId, mask: &[bool]) -> RelationId {
    let n = mask.len() as i64;
    let g = gene.0 as i64;
    for d in 0..n {
        for cand in [g + d, g - d] {
            let idx = cand.rem_euclid(n) as usize;
            if mask[idx] {
                return RelationId(idx as u32);
            }
        }
    }
    RelationId::NO_OP
}

pub fn decode(kb: &KnowledgeBase, e0: EntityId, genes: &[RelationId]) -> ReasoningPath {
    let mut path = ReasoningPath::new(e0);
    let mut at = e0;
    for &g in genes {
        let r = repair(g, &kb.valid_mask(at));
        let next = kb.tails(at, r)[0];
        path.steps.push((r, next));
        at = next;
    }
    path
}

struct Evaluator<'a, T> {
    kb: &'a KnowledgeBase,
    tab: &'a EmbeddingTable<T>,
    comparator: &'a ComparatorModel<T>,
    e0: EntityId,
    cache: HashMap<Vec<RelationId>, (ReasoningPath, f64)>,
}

impl<T: Scalar> Evaluator<'_, T> {
    fn fitness(&mut self, genes: &[RelationId]) -> Result<f64> {
        if let Some((_, f)) = self.cache.get(genes) {
            return Ok(*f);
        }
        let path = decode(self.kb, self.e0, genes);
        let f = self.comparator.feature(&self.tab.path_embedding(&path)?)?.as_f64();
        self.cache.insert(genes.to_vec(), (path, f));
        Ok(f)
    }

    fn path(&self, genes: &[RelationId]) -> ReasoningPath {
        self.cache[genes].0.clone()
    }
}

fn tournament<'p, R: Rng + ?Sized>(pop: &'p [(Vec<RelationId>, f64)], size: usize, rng: &mut R) -> &'p [RelationId] {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.1 > best.1 {
            best = c;
        }
    }
    &best.0
}

fn fittest(pop: &[(Vec<RelationId>, f64)]) -> &(Vec<RelationId>, f64) {
    // first of the maxima for determinism
    pop.iter().fold(&pop[0], |b, c| if c.1 > b.1 { c } else { b })
}

/// Evolves relation sequences of length `hops` from `e0`; deterministic under `cfg.seed`.
pub fn ga_reason<T: Scalar>(
    kb: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    comparator: &ComparatorModel<T>,
    e0: EntityId,
    hops: usize,
    cfg: &GaConfig,
) -> Result<GaOutcome> {
    cfg.validate()?;
    kb.check_entity(e0)?;
    let mut rng = seeded(cfg.seed);
    let nrel = kb.num_relations() as u32;
    let mut eval = Evaluator {
        kb,
        tab,
        comparator,
        e0,
        cache: HashMap::new(),
    };
    let mut pop = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        let genes: Vec<RelationId> = (0..hops).map(|_| RelationId(rng.random_range(0..nrel))).collect();
        let f = eval.fitness(&genes)?;
        pop.push((genes, f));
    }
    let mut history = vec![fittest(&pop).1];

    for _ in 0..cfg.generations {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&a, &b| pop[b].1.total_cmp(&pop[a].1).then(a.cmp(&b)));
        let mut next: Vec<(Vec<RelationId>, f64)> = ranked[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < cfg.population {
            let mut a = tournament(&pop, cfg.tournament, &mut rng).to_vec();
            let mut b = tournament(&pop, cfg.tournament, &mut rng).to_vec();
            if hops > 1 && rng.random_bool(cfg.crossover_rate) {
                let cut = rng.random_range(1..hops);
                for i in cut..hops {
                    std::mem::swap(&mut a[i], &mut b[i]);
                }
            }
            for child in [a, b] {
                if next.len() == cfg.population {
                    break;
                }
                let mut child = child;
                for g in child.iter_mut() {
                    if rng.random_bool(cfg.mutation_rate) {
                        *g = RelationId(rng.random_range(0..nrel));
                    }
                }
                let f = eval.fitness(&child)?;
                next.push((child, f));
            }
        }
        pop = next;
        history.push(fittest(&pop).1);
    }

    let (genes, fitness) = fittest(&pop).clone();
    Ok(GaOutcome {
        path: eval.path(&genes),
        fitness,
        best_per_generation: history,
    })
}

/// GA counterpart of `evaluate_accuracy`: a test path counts as hit when any
/// of `runs_per_origin` independently seeded GA runs ends on its terminal.
pub fn ga_accuracy<T: Scalar>(
    kb: &KnowledgeBase,
    tab: &EmbeddingTable<T>,
    comparator: &ComparatorModel<T>,
    test: &PathSet,
    runs_per_origin: usize,
    cfg: &GaConfig,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits: Vec<bool> = test
        .paths()
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let base = substream(cfg.seed, j as u64);
            for s in 0..runs_per_origin {
                let run = GaConfig {
                    seed: substream(base, s as u64),
                    ..cfg.clone()
                };
                if ga_reason(kb, tab, comparator, p.origin, p.hops(), &run)?.path.terminal() == p.terminal() {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}
