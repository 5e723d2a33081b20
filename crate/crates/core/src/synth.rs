//! Seeded synthetic knowledge bases for desk-scale experiments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeBase, RelationId, Triple};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub entities: usize,
    pub relations: usize,
    /// Target triples per entity.
    pub density: f64,
    pub seed: u64,
    pub allow_self_loops: bool,
}

impl SynthConfig {
    pub fn new(entities: usize, relations: usize, density: f64, seed: u64) -> Self {
        Self {
            entities,
            relations,
            density,
            seed,
            allow_self_loops: false,
        }
    }

    pub fn target_triples(&self) -> usize {
        (self.density * self.entities as f64).round() as usize
    }
}

/// Uniform `(head, relation, tail)` draws with duplicate rejection. Entities
/// are named `e<i>` and relations `r<j>`, registered up front so isolated
/// entities still belong to the result.
pub fn generate(cfg: &SynthConfig) -> Result<KnowledgeBase> {
    if cfg.entities == 0 || cfg.relations == 0 {
        return Err(Error::InvalidArgument("entity and relation counts must be >= 1".into()));
    }
    if !(cfg.density > 0.0) {
        return Err(Error::InvalidArgument(format!("density {} must be positive", cfg.density)));
    }
    let n = cfg.entities as u64;
    let tails_per_head = if cfg.allow_self_loops { n } else { n - 1 };
    let capacity = n * cfg.relations as u64 * tails_per_head;
    let target = cfg.target_triples() as u64;
    if target > capacity {
        return Err(Error::InvalidArgument(format!(
            "density {} needs {target} triples but only {capacity} distinct ones exist",
            cfg.density
        )));
    }

    let mut b = KnowledgeBase::builder();
    for i in 0..cfg.entities {
        b.entity(&format!("e{i}"));
    }
    for j in 0..cfg.relations {
        b.relation(&format!("r{j}"))?;
    }
    let mut rng = seeded(cfg.seed);
    let candidate = |idx: u64| {
        let head = idx / (cfg.relations as u64 * tails_per_head);
        let rest = idx % (cfg.relations as u64 * tails_per_head);
        let rel = rest / tails_per_head;
        let mut tail = rest % tails_per_head;
        if !cfg.allow_self_loops && tail >= head {
            tail += 1;
        }
        Triple::new(
            EntityId(head as u32),
            RelationId(rel as u32 + 1),
            EntityId(tail as u32),
        )
    };
    if target * 2 > capacity {
        // dense regime: shuffle the full candidate list
        let mut all: Vec<u64> = (0..capacity).collect();
        all.shuffle(&mut rng);
        for &idx in &all[..target as usize] {
            b.triple_ids(candidate(idx));
        }
    } else {
        let mut added = 0;
        while added < target {
            if b.triple_ids(candidate(rng.random_range(0..capacity))) {
                added += 1;
            }
        }
    }
    Ok(b.build())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_sets_triple_count() {
        let kb = generate(&SynthConfig::new(100, 4, 3.0, 1)).unwrap();
        assert_eq!(kb.num_triples(), 300);
        assert_eq!(kb.num_entities(), 100);
        assert_eq!(kb.num_relations(), 5);
        assert!(kb.triples().iter().all(|t| t.head != t.tail));
    }

    #[test]
    fn same_seed_same_kb() {
        let cfg = SynthConfig::new(50, 3, 2.5, 9);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 10, ..cfg };
        assert_ne!(generate(&other).unwrap().triples(), generate(&SynthConfig::new(50, 3, 2.5, 9)).unwrap().triples());
    }

    #[test]
    fn dense_regime_fills_exactly() {
        let kb = generate(&SynthConfig::new(4, 2, 6.0, 3)).unwrap();
        assert_eq!(kb.num_triples(), 24);
    }

    #[test]
    fn infeasible_density_errors() {
        assert!(generate(&SynthConfig::new(3, 1, 2.5, 0)).is_err());
        assert!(generate(&SynthConfig::new(3, 1, 0.0, 0)).is_err());
        let loops = SynthConfig { allow_self_loops: true, ..SynthConfig::new(3, 1, 3.0, 0) };
        assert_eq!(generate(&loops).unwrap().num_triples(), 9);
    }
}
