//! Knowledge bases: entity/relation vocabularies, labeled triples, adjacency,
//! reasoning paths and the expert path sampler.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl RelationId {
    /// Reserved self-loop relation, implicitly available at every entity.
    pub const NO_OP: RelationId = RelationId(0);

    pub fn is_no_op(self) -> bool {
        self == Self::NO_OP
    }
}

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub const NO_OP_NAME: &str = "NO_OP";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Immutable knowledge base `<E, R>` with a directed labeled triple set.
///
/// Relation id 0 is always [`RelationId::NO_OP`]; it never appears in the
/// stored triples but is a valid self-loop action everywhere.
#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    entity_names: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    // sorted by (relation, tail)
    adjacency: Vec<Vec<(RelationId, EntityId)>>,
    // sorted by (relation, head)
    reverse: Vec<Vec<(RelationId, EntityId)>>,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.entity_names == other.entity_names
            && self.relation_names == other.relation_names
            && self.triples == other.triples
    }
}

/// Incremental constructor assigning ids in first-appearance order.
#[derive(Debug)]
pub struct KnowledgeBaseBuilder {
    entity_names: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
}

impl Default for KnowledgeBaseBuilder {
    fn default() -> Self {
        let mut relation_index = HashMap::new();
        relation_index.insert(NO_OP_NAME.to_string(), RelationId::NO_OP);
        Self {
            entity_names: Vec::new(),
            entity_index: HashMap::new(),
            relation_names: vec![NO_OP_NAME.to_string()],
            relation_index,
            triples: Vec::new(),
            triple_set: HashSet::new(),
        }
    }
}

impl KnowledgeBaseBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(name) {
            return id;
        }
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_names.push(name.to_string());
        self.entity_index.insert(name.to_string(), id);
        id
    }

    /// Registers a relation name. Fails for the reserved `NO_OP` name.
    pub fn relation(&mut self, name: &str) -> Result<RelationId> {
        if name == NO_OP_NAME {
            return Err(Error::InvalidArgument(format!(
                "relation name {NO_OP_NAME} is reserved"
            )));
        }
        if let Some(&id) = self.relation_index.get(name) {
            return Ok(id);
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_string());
        self.relation_index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a triple by name; returns false when it was a duplicate.
    pub fn triple(&mut self, head: &str, relation: &str, tail: &str) -> Result<bool> {
        let h = self.entity(head);
        let r = self.relation(relation)?;
        let t = self.entity(tail);
        Ok(self.triple_ids(Triple::new(h, r, t)))
    }

    pub(crate) fn triple_ids(&mut self, triple: Triple) -> bool {
        debug_assert!(!triple.relation.is_no_op());
        if self.triple_set.insert(triple) {
            self.triples.push(triple);
            true
        } else {
            false
        }
    }

    pub fn build(self) -> KnowledgeBase {
        let n = self.entity_names.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut reverse = vec![Vec::new(); n];
        for t in &self.triples {
            adjacency[t.head.index()].push((t.relation, t.tail));
            reverse[t.tail.index()].push((t.relation, t.head));
        }
        for list in adjacency.iter_mut().chain(reverse.iter_mut()) {
            list.sort_unstable();
        }
        KnowledgeBase {
            entity_names: self.entity_names,
            entity_index: self.entity_index,
            relation_names: self.relation_names,
            relation_index: self.relation_index,
            triples: self.triples,
            triple_set: self.triple_set,
            adjacency,
            reverse,
        }
    }
}

impl KnowledgeBase {
    pub fn builder() -> KnowledgeBaseBuilder {
        KnowledgeBaseBuilder::new()
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    /// Relation count including `NO_OP`.
    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_names.len() as u32).map(EntityId)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relation_names.len() as u32).map(RelationId)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        e.index() < self.entity_names.len()
    }

    pub fn has_relation(&self, r: RelationId) -> bool {
        r.index() < self.relation_names.len()
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entity_names[e.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relation_names[r.index()]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    /// Triples per entity.
    pub fn density(&self) -> f64 {
        if self.entity_names.is_empty() {
            0.0
        } else {
            self.triples.len() as f64 / self.entity_names.len() as f64
        }
    }

    pub(crate) fn check_entity(&self, e: EntityId) -> Result<()> {
        if self.has_entity(e) {
            Ok(())
        } else {
            Err(Error::UnknownEntity(format!("#{}", e.0)))
        }
    }

    /// Real (non-`NO_OP`) edges leaving `e`, sorted by (relation, tail).
    pub fn edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.adjacency[e.index()]
    }

    /// Real edges entering `e`, sorted by (relation, head).
    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.reverse[e.index()]
    }

    /// The action list at `e`: its edges plus the implicit `(NO_OP, e)` loop.
    pub fn outgoing(&self, e: EntityId) -> Result<Vec<(RelationId, EntityId)>> {
        self.check_entity(e)?;
        let mut out = Vec::with_capacity(self.adjacency[e.index()].len() + 1);
        out.push((RelationId::NO_OP, e));
        out.extend_from_slice(&self.adjacency[e.index()]);
        Ok(out)
    }

    /// Tails reachable from `e` by relation `r`; `NO_OP` yields `e` itself.
    pub fn tails(&self, e: EntityId, r: RelationId) -> Vec<EntityId> {
        if r.is_no_op() {
            return vec![e];
        }
        let edges = &self.adjacency[e.index()];
        let start = edges.partition_point(|&(rel, _)| rel < r);
        edges[start..]
            .iter()
            .take_while(|&&(rel, _)| rel == r)
            .map(|&(_, t)| t)
            .collect()
    }

    /// Validity mask over all relations at `e`; `NO_OP` is always valid.
    pub fn valid_mask(&self, e: EntityId) -> Vec<bool> {
        let mut mask = vec![false; self.num_relations()];
        mask[RelationId::NO_OP.index()] = true;
        for &(r, _) in &self.adjacency[e.index()] {
            mask[r.index()] = true;
        }
        mask
    }

    /// Sorted distinct relations usable at `e`, `NO_OP` first.
    pub fn valid_relations(&self, e: EntityId) -> Vec<RelationId> {
        let mut out = vec![RelationId::NO_OP];
        for &(r, _) in &self.adjacency[e.index()] {
            if out.last() != Some(&r) {
                out.push(r);
            }
        }
        out
    }

    pub fn is_step_valid(&self, from: EntityId, relation: RelationId, to: EntityId) -> bool {
        if relation.is_no_op() {
            from == to
        } else {
            self.contains(&Triple::new(from, relation, to))
        }
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.triples {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.entity_name(t.head),
                self.relation_name(t.relation),
                self.entity_name(t.tail)
            )?;
        }
        Ok(())
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_tsv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Sub-knowledge-base induced by `members` (kept in the given order).
    /// The full relation vocabulary is preserved so relation ids coincide.
    pub fn induced(&self, members: &[EntityId]) -> KnowledgeBase {
        let mut b = KnowledgeBaseBuilder::new();
        for r in self.relations().skip(1) {
            b.relation(self.relation_name(r)).expect("non-reserved name");
        }
        let mut local = HashMap::with_capacity(members.len());
        for &e in members {
            local.insert(e, b.entity(self.entity_name(e)));
        }
        for t in &self.triples {
            if let (Some(&h), Some(&tl)) = (local.get(&t.head), local.get(&t.tail)) {
                b.triple_ids(Triple::new(h, t.relation, tl));
            }
        }
        b.build()
    }
}

/// Parses TSV triples (`head<TAB>relation<TAB>tail`, `#` comments).
pub fn parse_triples<R: Read>(reader: R) -> Result<KnowledgeBase> {
    let mut b = KnowledgeBaseBuilder::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected head<TAB>relation<TAB>tail, got {line:?}"),
            });
        }
        b.triple(fields[0], fields[1], fields[2])
            .map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
    }
    if b.triples.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    Ok(b.build())
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_triples(file)
}

/// Splits `kb` into `k` disjoint entity blocks (seeded shuffle, equal cuts,
/// last block takes the remainder) and returns the induced sub-graphs in
/// non-increasing order of density.
pub fn partition_skgs(kb: &KnowledgeBase, k: usize, seed: u64) -> Result<Vec<KnowledgeBase>> {
    let n = kb.num_entities();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot cut {n} entities into {k} partitions"
        )));
    }
    let mut order: Vec<EntityId> = kb.entities().collect();
    order.shuffle(&mut seeded(seed));
    let block = n / k;
    let mut parts: Vec<KnowledgeBase> = (0..k)
        .map(|i| {
            let end = if i + 1 == k { n } else { (i + 1) * block };
            let mut members = order[i * block..end].to_vec();
            members.sort_unstable();
            kb.induced(&members)
        })
        .collect();
    // stable: equal densities keep block order
    parts.sort_by(|a, b| b.density().total_cmp(&a.density()));
    Ok(parts)
}

/// Alternating entity/relation sequence `<e0, r1, e1, ..., rL, eL>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReasoningPath {
    pub origin: EntityId,
    pub steps: Vec<(RelationId, EntityId)>,
}

impl ReasoningPath {
    pub fn new(origin: EntityId) -> Self {
        Self {
            origin,
            steps: Vec::new(),
        }
    }

    pub fn hops(&self) -> usize {
        self.steps.len()
    }

    pub fn terminal(&self) -> EntityId {
        self.steps.last().map_or(self.origin, |&(_, e)| e)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.steps.iter().map(|&(r, _)| r)
    }

    /// Origin followed by every visited entity.
    pub fn entities(&self) -> Vec<EntityId> {
        std::iter::once(self.origin)
            .chain(self.steps.iter().map(|&(_, e)| e))
            .collect()
    }

    /// Checks every hop against the triple set (or the `NO_OP` self-loop).
    pub fn validate(&self, kb: &KnowledgeBase) -> Result<()> {
        kb.check_entity(self.origin)?;
        let mut at = self.origin;
        for (i, &(r, e)) in self.steps.iter().enumerate() {
            if !kb.has_relation(r) || !kb.has_entity(e) || !kb.is_step_valid(at, r, e) {
                return Err(Error::InvalidPath(format!(
                    "hop {} (#{} -[#{}]-> #{}) is not an edge",
                    i + 1,
                    at.0,
                    r.0,
                    e.0
                )));
            }
            at = e;
        }
        Ok(())
    }

    pub fn display<'a>(&'a self, kb: &'a KnowledgeBase) -> PathDisplay<'a> {
        PathDisplay { path: self, kb }
    }
}

/// Tab-separated rendering `e0<TAB>r1<TAB>e1...` using names.
pub struct PathDisplay<'a> {
    path: &'a ReasoningPath,
    kb: &'a KnowledgeBase,
}

impl fmt::Display for PathDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kb.entity_name(self.path.origin))?;
        for &(r, e) in &self.path.steps {
            write!(
                f,
                "\t{}\t{}",
                self.kb.relation_name(r),
                self.kb.entity_name(e)
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathSource {
    Expert,
    Generated,
}

/// Paths sharing one hop bound.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    paths: Vec<ReasoningPath>,
    source: PathSource,
}

impl PathSet {
    pub fn new(paths: Vec<ReasoningPath>, source: PathSource) -> Result<Self> {
        if let Some(first) = paths.first() {
            if let Some(bad) = paths.iter().find(|p| p.hops() != first.hops()) {
                return Err(Error::InvalidArgument(format!(
                    "path set mixes {}-hop and {}-hop paths",
                    first.hops(),
                    bad.hops()
                )));
            }
        }
        Ok(Self { paths, source })
    }

    pub fn paths(&self) -> &[ReasoningPath] {
        &self.paths
    }

    pub fn source(&self) -> PathSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn hops(&self) -> Option<usize> {
        self.paths.first().map(ReasoningPath::hops)
    }

    /// First `n` paths as a new set.
    pub fn truncated(&self, n: usize) -> PathSet {
        PathSet {
            paths: self.paths[..n.min(self.paths.len())].to_vec(),
            source: self.source,
        }
    }

    pub fn write<W: Write>(&self, kb: &KnowledgeBase, mut w: W) -> std::io::Result<()> {
        for p in &self.paths {
            writeln!(w, "{}", p.display(kb))?;
        }
        Ok(())
    }

    pub fn save(&self, kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(kb, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a path file, resolving names against `kb` and validating each hop.
    pub fn read<R: Read>(kb: &KnowledgeBase, reader: R, source: PathSource) -> Result<Self> {
        let mut paths = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len().is_multiple_of(2) {
                return Err(Error::Parse {
                    line: line_no,
                    message: "path lines alternate entity and relation fields".into(),
                });
            }
            let entity = |name: &str| {
                kb.entity_id(name).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unknown entity {name}"),
                })
            };
            let mut path = ReasoningPath::new(entity(fields[0])?);
            for pair in fields[1..].chunks(2) {
                let r = kb.relation_id(pair[0]).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unknown relation {}", pair[0]),
                })?;
                path.steps.push((r, entity(pair[1])?));
            }
            path.validate(kb).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            paths.push(path);
        }
        PathSet::new(paths, source)
    }

    pub fn load(kb: &KnowledgeBase, path: impl AsRef<Path>, source: PathSource) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(kb, file, source)
    }
}

/// Two-sided breadth-first sampler of fixed-length expert walks.
///
/// A start is drawn uniformly among entities admitting a `hops`-long walk over
/// real edges, an endpoint uniformly from the forward frontier at depth
/// `hops`, and each hop uniformly among edges whose head lies on the forward
/// frontier and whose tail lies on the reverse frontier grown from the endpoint.
#[derive(Debug)]
pub struct ExpertSampler<'a> {
    kb: &'a KnowledgeBase,
    hops: usize,
    starts: Vec<EntityId>,
}

impl<'a> ExpertSampler<'a> {
    pub fn new(kb: &'a KnowledgeBase, hops: usize) -> Result<Self> {
        if hops == 0 {
            return Err(Error::InvalidArgument("hops must be at least 1".into()));
        }
        // walkable[e]: some real walk of the current length starts at e
        let mut walkable = vec![true; kb.num_entities()];
        for _ in 0..hops {
            walkable = kb
                .entities()
                .map(|e| kb.edges(e).iter().any(|&(_, t)| walkable[t.index()]))
                .collect();
        }
        let starts: Vec<EntityId> = kb.entities().filter(|e| walkable[e.index()]).collect();
        if starts.is_empty() {
            return Err(Error::NoWalk { hops });
        }
        Ok(Self { kb, hops, starts })
    }

    pub fn starts(&self) -> &[EntityId] {
        &self.starts
    }

    fn forward_frontier(&self, start: EntityId) -> Vec<EntityId> {
        let mut frontier = BTreeSet::from([start]);
        for _ in 0..self.hops {
            frontier = frontier
                .iter()
                .flat_map(|&e| self.kb.edges(e).iter().map(|&(_, t)| t))
                .collect();
        }
        frontier.into_iter().collect()
    }

    /// `layers[k]`: entities that reach `end` in exactly `k` real hops.
    fn reverse_layers(&self, end: EntityId) -> Vec<HashSet<EntityId>> {
        let mut layers = vec![HashSet::from([end])];
        for k in 0..self.hops {
            let next: HashSet<EntityId> = layers[k]
                .iter()
                .flat_map(|&e| self.kb.incoming(e).iter().map(|&(_, h)| h))
                .collect();
            layers.push(next);
        }
        layers
    }

    fn hop_candidates(
        &self,
        at: EntityId,
        remaining: usize,
        layers: &[HashSet<EntityId>],
    ) -> Vec<(RelationId, EntityId)> {
        self.kb
            .edges(at)
            .iter()
            .copied()
            .filter(|&(_, t)| layers[remaining - 1].contains(&t))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ReasoningPath {
        let start = self.starts[rng.random_range(0..self.starts.len())];
        let ends = self.forward_frontier(start);
        let end = ends[rng.random_range(0..ends.len())];
        let layers = self.reverse_layers(end);
        let mut path = ReasoningPath::new(start);
        let mut at = start;
        for i in 0..self.hops {
            let cands = self.hop_candidates(at, self.hops - i, &layers);
            let (r, t) = cands[rng.random_range(0..cands.len())];
            path.steps.push((r, t));
            at = t;
        }
        path
    }

    /// Exact distribution of [`ExpertSampler::sample`] over paths.
    pub fn distribution(&self) -> HashMap<ReasoningPath, f64> {
        let mut out = HashMap::new();
        let p_start = 1.0 / self.starts.len() as f64;
        for &s in &self.starts {
            let ends = self.forward_frontier(s);
            let p_end = p_start / ends.len() as f64;
            for &end in &ends {
                let layers = self.reverse_layers(end);
                self.expand(ReasoningPath::new(s), p_end, &layers, &mut out);
            }
        }
        out
    }

    fn expand(
        &self,
        path: ReasoningPath,
        mass: f64,
        layers: &[HashSet<EntityId>],
        out: &mut HashMap<ReasoningPath, f64>,
    ) {
        if path.hops() == self.hops {
            *out.entry(path).or_insert(0.0) += mass;
            return;
        }
        let cands = self.hop_candidates(path.terminal(), self.hops - path.hops(), layers);
        let share = mass / cands.len() as f64;
        for step in cands {
            let mut next = path.clone();
            next.steps.push(step);
            self.expand(next, share, layers, out);
        }
    }
}

/// Draws `n` expert paths of exactly `hops` hops; deterministic under `seed`.
pub fn sample_expert_paths(kb: &KnowledgeBase, n: usize, hops: usize, seed: u64) -> Result<PathSet> {
    let sampler = ExpertSampler::new(kb, hops)?;
    let mut rng = seeded(seed);
    let paths = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    PathSet::new(paths, PathSource::Expert)
}
