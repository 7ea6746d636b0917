//! Knowledge-graph storage: vocabularies, triples, entity types, seed
//! alignments and corruption sets.
//!
//! A [`KgCatalog`] always holds exactly two graphs, [`KgId::L1`] (the source
//! side of every alignment) and [`KgId::L2`] (the target side). Entity and
//! relation vocabularies are disjoint per graph; the entity-type vocabulary
//! is shared.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("entity `{entity}` of {kg} has no type assignment")]
    MissingType { kg: KgId, entity: String },
    #[error("entity `{entity}` is assigned conflicting types `{first}` and `{second}`")]
    TypeConflict {
        entity: String,
        first: String,
        second: String,
    },
    #[error("{origin}:{line}: seed references unknown {kg} triple {triple}")]
    UnknownSeedTriple {
        origin: String,
        line: usize,
        kg: KgId,
        triple: String,
    },
    #[error("unknown {kind} `{name}` in {kg}")]
    UnknownSymbol {
        kind: &'static str,
        kg: KgId,
        name: String,
    },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("corruption is only defined for binary triples, got arity {0}")]
    UnsupportedArity(usize),
    #[error("corruption set is empty (degenerate catalog: one relation and one entity)")]
    EmptyCorruptionSet,
}

/// Which of the two knowledge graphs a symbol belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KgId {
    L1,
    L2,
}

impl fmt::Display for KgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KgId::L1 => f.write_str("L1"),
            KgId::L2 => f.write_str("L2"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityRef {
    pub kg: KgId,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationRef {
    pub kg: KgId,
    pub index: usize,
}

/// Entity type, shared across both graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeRef(pub usize);

/// A relation applied to one or more entities. Binary triples `r(h, t)` are
/// the common case; any arity ≥ 1 is representable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    relation: RelationRef,
    args: Vec<EntityRef>,
}

impl Triple {
    pub fn new(relation: RelationRef, args: Vec<EntityRef>) -> Result<Self, KgError> {
        if args.is_empty() {
            return Err(KgError::InvalidTriple("arity must be at least 1".into()));
        }
        if let Some(a) = args.iter().find(|a| a.kg != relation.kg) {
            return Err(KgError::InvalidTriple(format!(
                "argument from {} under a relation from {}",
                a.kg, relation.kg
            )));
        }
        Ok(Self { relation, args })
    }

    pub fn binary(head: EntityRef, relation: RelationRef, tail: EntityRef) -> Result<Self, KgError> {
        Self::new(relation, vec![head, tail])
    }

    pub fn kg(&self) -> KgId {
        self.relation.kg
    }

    pub fn relation(&self) -> RelationRef {
        self.relation
    }

    pub fn args(&self) -> &[EntityRef] {
        &self.args
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    fn with_relation(&self, relation: RelationRef) -> Self {
        Self { relation, args: self.args.clone() }
    }

    fn with_arg(&self, slot: usize, entity: EntityRef) -> Self {
        let mut args = self.args.clone();
        args[slot] = entity;
        Self { relation: self.relation, args }
    }
}

/// A pair of triples known to state the same fact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentSeed {
    pub left: Triple,
    pub right: Triple,
}

impl AlignmentSeed {
    pub fn new(left: Triple, right: Triple) -> Result<Self, KgError> {
        if left.kg() != KgId::L1 || right.kg() != KgId::L2 {
            return Err(KgError::InvalidTriple(
                "alignment seeds pair an L1 triple with an L2 triple".into(),
            ));
        }
        Ok(Self { left, right })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SeedSplit {
    Train,
    Valid,
    Test,
}

/// Injective string interner with dense indices in order of first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// One knowledge graph: its vocabularies and deduplicated triple list.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    id: KgId,
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    duplicates: usize,
}

impl KnowledgeGraph {
    fn new(id: KgId) -> Self {
        Self {
            id,
            entities: Vocab::default(),
            relations: Vocab::default(),
            triples: Vec::new(),
            triple_set: HashSet::new(),
            duplicates: 0,
        }
    }

    pub fn id(&self) -> KgId {
        self.id
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Number of duplicate triple lines dropped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    pub fn entity(&self, name: &str) -> Option<EntityRef> {
        self.entities.get(name).map(|index| EntityRef { kg: self.id, index })
    }

    pub fn relation(&self, name: &str) -> Option<RelationRef> {
        self.relations.get(name).map(|index| RelationRef { kg: self.id, index })
    }

    fn insert(&mut self, relation: &str, args: &[&str]) -> Result<Triple, KgError> {
        let relation = RelationRef { kg: self.id, index: self.relations.intern(relation) };
        let args = args
            .iter()
            .map(|a| EntityRef { kg: self.id, index: self.entities.intern(a) })
            .collect();
        let triple = Triple::new(relation, args)?;
        if self.triple_set.insert(triple.clone()) {
            self.triples.push(triple.clone());
        } else {
            self.duplicates += 1;
        }
        Ok(triple)
    }

    /// Resolve a triple by surface names without interning anything new.
    pub fn resolve(&self, relation: &str, args: &[&str]) -> Result<Triple, KgError> {
        let rel = self.relation(relation).ok_or_else(|| KgError::UnknownSymbol {
            kind: "relation",
            kg: self.id,
            name: relation.to_owned(),
        })?;
        let args = args
            .iter()
            .map(|a| {
                self.entity(a).ok_or_else(|| KgError::UnknownSymbol {
                    kind: "entity",
                    kg: self.id,
                    name: (*a).to_owned(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Triple::new(rel, args)
    }

    /// Render a triple as `rel(arg1,…,argN)`.
    pub fn render(&self, triple: &Triple) -> String {
        let name = |v: &Vocab, i: usize| v.name(i).unwrap_or("?").to_owned();
        let args: Vec<String> = triple.args.iter().map(|a| name(&self.entities, a.index)).collect();
        format!("{}({})", name(&self.relations, triple.relation.index), args.join(","))
    }
}

/// Both graphs, the type assignment and the seed alignments. Immutable once
/// built.
#[derive(Clone, Debug)]
pub struct KgCatalog {
    l1: KnowledgeGraph,
    l2: KnowledgeGraph,
    types: Vocab,
    entity_types: [Vec<TypeRef>; 2],
    train: Vec<AlignmentSeed>,
    valid: Vec<AlignmentSeed>,
    test: Vec<AlignmentSeed>,
}

impl KgCatalog {
    pub fn graph(&self, kg: KgId) -> &KnowledgeGraph {
        match kg {
            KgId::L1 => &self.l1,
            KgId::L2 => &self.l2,
        }
    }

    pub fn types(&self) -> &Vocab {
        &self.types
    }

    pub fn entity_type(&self, e: EntityRef) -> Option<TypeRef> {
        self.entity_types[kg_slot(e.kg)].get(e.index).copied()
    }

    pub fn seeds(&self, split: SeedSplit) -> &[AlignmentSeed] {
        match split {
            SeedSplit::Train => &self.train,
            SeedSplit::Valid => &self.valid,
            SeedSplit::Test => &self.test,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.l1.entities.len() + self.l2.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.l1.relations.len() + self.l2.relations.len()
    }

    /// Row of `e` in the parameter tables, where L2 rows follow all L1 rows.
    pub fn entity_slot(&self, e: EntityRef) -> usize {
        match e.kg {
            KgId::L1 => e.index,
            KgId::L2 => self.l1.entities.len() + e.index,
        }
    }

    pub fn relation_slot(&self, r: RelationRef) -> usize {
        match r.kg {
            KgId::L1 => r.index,
            KgId::L2 => self.l1.relations.len() + r.index,
        }
    }

    pub fn render(&self, triple: &Triple) -> String {
        self.graph(triple.kg()).render(triple)
    }
}

fn kg_slot(kg: KgId) -> usize {
    match kg {
        KgId::L1 => 0,
        KgId::L2 => 1,
    }
}

/// Incremental construction of a [`KgCatalog`]; [`CatalogBuilder::build`]
/// validates type coverage.
#[derive(Debug)]
pub struct CatalogBuilder {
    l1: KnowledgeGraph,
    l2: KnowledgeGraph,
    types: Vocab,
    type_of: HashMap<String, usize>,
    seeds: [Vec<AlignmentSeed>; 3],
}

impl Default for CatalogBuilder {
    fn default() -> Self {
        Self {
            l1: KnowledgeGraph::new(KgId::L1),
            l2: KnowledgeGraph::new(KgId::L2),
            types: Vocab::default(),
            type_of: HashMap::new(),
            seeds: Default::default(),
        }
    }
}

impl CatalogBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn graph_mut(&mut self, kg: KgId) -> &mut KnowledgeGraph {
        match kg {
            KgId::L1 => &mut self.l1,
            KgId::L2 => &mut self.l2,
        }
    }

    pub fn add_triple(&mut self, kg: KgId, relation: &str, args: &[&str]) -> Result<Triple, KgError> {
        self.graph_mut(kg).insert(relation, args)
    }

    /// Assign a type to an entity name; applies to that name in either graph.
    pub fn set_type(&mut self, entity: &str, ty: &str) -> Result<(), KgError> {
        let t = self.types.intern(ty);
        match self.type_of.get(entity) {
            Some(&prev) if prev != t => Err(KgError::TypeConflict {
                entity: entity.to_owned(),
                first: self.types.name(prev).unwrap_or_default().to_owned(),
                second: ty.to_owned(),
            }),
            _ => {
                self.type_of.insert(entity.to_owned(), t);
                Ok(())
            }
        }
    }

    /// Add a seed whose triples must already be stored in their graphs.
    pub fn add_seed(
        &mut self,
        split: SeedSplit,
        left: (&str, &[&str]),
        right: (&str, &[&str]),
    ) -> Result<(), KgError> {
        let resolve = |g: &KnowledgeGraph, (rel, args): (&str, &[&str])| {
            let t = g.resolve(rel, args).ok().filter(|t| g.contains(t));
            t.ok_or_else(|| KgError::UnknownSeedTriple {
                origin: "<seed>".into(),
                line: 0,
                kg: g.id,
                triple: format!("{rel}({})", args.join(",")),
            })
        };
        let seed = AlignmentSeed::new(resolve(&self.l1, left)?, resolve(&self.l2, right)?)?;
        let idx = match split {
            SeedSplit::Train => 0,
            SeedSplit::Valid => 1,
            SeedSplit::Test => 2,
        };
        self.seeds[idx].push(seed);
        Ok(())
    }

    pub fn build(self) -> Result<KgCatalog, KgError> {
        let mut entity_types: [Vec<TypeRef>; 2] = Default::default();
        for g in [&self.l1, &self.l2] {
            let slot = &mut entity_types[kg_slot(g.id)];
            for name in g.entities.iter() {
                match self.type_of.get(name) {
                    Some(&t) => slot.push(TypeRef(t)),
                    None => {
                        return Err(KgError::MissingType { kg: g.id, entity: name.to_owned() })
                    }
                }
            }
        }
        let [train, valid, test] = self.seeds;
        Ok(KgCatalog {
            l1: self.l1,
            l2: self.l2,
            types: self.types,
            entity_types,
            train,
            valid,
            test,
        })
    }
}

/// Input files for [`load_catalog`]. Validation and test seeds are optional.
#[derive(Clone, Debug, Default)]
pub struct CatalogPaths {
    pub triples_l1: PathBuf,
    pub triples_l2: PathBuf,
    pub types: PathBuf,
    pub train_seeds: PathBuf,
    pub valid_seeds: Option<PathBuf>,
    pub test_seeds: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, KgError> {
    fs::read_to_string(path).map_err(|source| KgError::Io { path: path.to_owned(), source })
}

/// Non-comment, non-blank lines with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_err(origin: &str, line: usize, message: impl Into<String>) -> KgError {
    KgError::Parse { origin: origin.to_owned(), line, message: message.into() }
}

/// Parse a triples TSV into `kg`. Binary files are `head<TAB>relation<TAB>tail`;
/// a `#nary` header switches to `relation<TAB>arg1<TAB>…<TAB>argN`.
pub fn parse_triples(
    builder: &mut CatalogBuilder,
    kg: KgId,
    text: &str,
    origin: &str,
) -> Result<(), KgError> {
    let nary = text.lines().any(|l| l.trim() == "#nary");
    for (line, content) in data_lines(text) {
        let cols: Vec<&str> = content.split('\t').collect();
        if cols.iter().any(|c| c.is_empty()) {
            return Err(parse_err(origin, line, "empty column"));
        }
        if nary {
            if cols.len() < 2 {
                return Err(parse_err(
                    origin,
                    line,
                    format!("expected relation and at least one argument, got {} column(s)", cols.len()),
                ));
            }
            builder.add_triple(kg, cols[0], &cols[1..])?;
        } else {
            if cols.len() != 3 {
                return Err(parse_err(origin, line, format!("expected 3 columns, got {}", cols.len())));
            }
            builder.add_triple(kg, cols[1], &[cols[0], cols[2]])?;
        }
    }
    Ok(())
}

/// Parse an `entity<TAB>type` map.
pub fn parse_types(builder: &mut CatalogBuilder, text: &str, origin: &str) -> Result<(), KgError> {
    for (line, content) in data_lines(text) {
        let cols: Vec<&str> = content.split('\t').collect();
        if cols.len() != 2 || cols.iter().any(|c| c.is_empty()) {
            return Err(parse_err(origin, line, format!("expected 2 columns, got {}", cols.len())));
        }
        builder.set_type(cols[0], cols[1])?;
    }
    Ok(())
}

/// Parse a `head1<TAB>rel1<TAB>tail1<TAB>head2<TAB>rel2<TAB>tail2` seed file.
pub fn parse_seeds(
    builder: &mut CatalogBuilder,
    split: SeedSplit,
    text: &str,
    origin: &str,
) -> Result<(), KgError> {
    for (line, content) in data_lines(text) {
        let c: Vec<&str> = content.split('\t').collect();
        if c.len() != 6 || c.iter().any(|x| x.is_empty()) {
            return Err(parse_err(origin, line, format!("expected 6 columns, got {}", c.len())));
        }
        builder
            .add_seed(split, (c[1], &[c[0], c[2]]), (c[4], &[c[3], c[5]]))
            .map_err(|e| match e {
                KgError::UnknownSeedTriple { kg, triple, .. } => KgError::UnknownSeedTriple {
                    origin: origin.to_owned(),
                    line,
                    kg,
                    triple,
                },
                other => other,
            })?;
    }
    Ok(())
}

/// Load and validate a catalog. Indices are assigned in file order of first
/// appearance, so the same files always produce the same catalog.
pub fn load_catalog(paths: &CatalogPaths) -> Result<KgCatalog, KgError> {
    let mut b = CatalogBuilder::new();
    for (kg, path) in [(KgId::L1, &paths.triples_l1), (KgId::L2, &paths.triples_l2)] {
        parse_triples(&mut b, kg, &read(path)?, &path.display().to_string())?;
    }
    parse_types(&mut b, &read(&paths.types)?, &paths.types.display().to_string())?;
    let splits = [
        (SeedSplit::Train, Some(&paths.train_seeds)),
        (SeedSplit::Valid, paths.valid_seeds.as_ref()),
        (SeedSplit::Test, paths.test_seeds.as_ref()),
    ];
    for (split, path) in splits {
        if let Some(path) = path {
            parse_seeds(&mut b, split, &read(path)?, &path.display().to_string())?;
        }
    }
    b.build()
}

/// Split an atom written `rel(arg1,…,argN)` into its relation and argument
/// names.
pub fn parse_atom(atom: &str) -> Result<(String, Vec<String>), KgError> {
    let bad = |m: &str| KgError::Parse { origin: "atom".into(), line: 1, message: format!("`{atom}`: {m}") };
    let atom_t = atom.trim();
    let open = atom_t.find('(').ok_or_else(|| bad("missing `(`"))?;
    let inner = atom_t[open + 1..].strip_suffix(')').ok_or_else(|| bad("missing closing `)`"))?;
    let rel = atom_t[..open].trim();
    if rel.is_empty() {
        return Err(bad("empty relation name"));
    }
    if inner.contains(['(', ')']) {
        return Err(bad("nested parentheses"));
    }
    let args: Vec<String> = inner.split(',').map(|a| a.trim().to_owned()).collect();
    if args.iter().any(String::is_empty) {
        return Err(bad("empty argument"));
    }
    Ok((rel.to_owned(), args))
}

/// Which slot of a binary triple a corruption replaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptionMode {
    Relation,
    Head,
    Tail,
}

/// How [`sample_negative`] draws from the corruption set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Uniform over the non-empty corruption modes, then uniform within the mode.
    #[default]
    ModeUniform,
    /// Uniform over the whole corruption set.
    GlobalUniform,
}

fn check_binary(t: &Triple) -> Result<(), KgError> {
    if t.arity() != 2 {
        return Err(KgError::UnsupportedArity(t.arity()));
    }
    Ok(())
}

fn mode_sizes(catalog: &KgCatalog, kg: KgId) -> [usize; 3] {
    let g = catalog.graph(kg);
    let r = g.relations.len().saturating_sub(1);
    let e = g.entities.len().saturating_sub(1);
    [r, e, e]
}

/// The `k`-th corruption of `t` in `mode`, skipping the original symbol.
fn corruption_at(t: &Triple, mode: CorruptionMode, k: usize) -> Triple {
    let skip = |orig: usize| if k >= orig { k + 1 } else { k };
    match mode {
        CorruptionMode::Relation => t.with_relation(RelationRef {
            kg: t.kg(),
            index: skip(t.relation.index),
        }),
        CorruptionMode::Head => t.with_arg(0, EntityRef { kg: t.kg(), index: skip(t.args[0].index) }),
        CorruptionMode::Tail => t.with_arg(1, EntityRef { kg: t.kg(), index: skip(t.args[1].index) }),
    }
}

const MODES: [CorruptionMode; 3] = [CorruptionMode::Relation, CorruptionMode::Head, CorruptionMode::Tail];

/// Every single-slot corruption of a binary triple over its graph's
/// vocabularies: relation swaps, then head swaps, then tail swaps, each in
/// index order. The original triple is never included.
pub fn corruption_set(t: &Triple, catalog: &KgCatalog) -> Result<Vec<Triple>, KgError> {
    check_binary(t)?;
    let sizes = mode_sizes(catalog, t.kg());
    let mut out = Vec::with_capacity(sizes.iter().sum());
    for (mode, &size) in MODES.iter().zip(&sizes) {
        out.extend((0..size).map(|k| corruption_at(t, *mode, k)));
    }
    Ok(out)
}

/// Draw one corruption of `t`. Deterministic given the state of `rng`.
pub fn sample_negative<R: Rng + ?Sized>(
    t: &Triple,
    catalog: &KgCatalog,
    rng: &mut R,
    sampling: SamplingMode,
) -> Result<Triple, KgError> {
    check_binary(t)?;
    let sizes = mode_sizes(catalog, t.kg());
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(KgError::EmptyCorruptionSet);
    }
    let (mode, k) = match sampling {
        SamplingMode::ModeUniform => {
            let live: Vec<usize> = (0..3).filter(|&i| sizes[i] > 0).collect();
            let m = live[rng.gen_range(0..live.len())];
            (MODES[m], rng.gen_range(0..sizes[m]))
        }
        SamplingMode::GlobalUniform => {
            let mut k = rng.gen_range(0..total);
            let mut m = 0;
            while k >= sizes[m] {
                k -= sizes[m];
                m += 1;
            }
            (MODES[m], k)
        }
    };
    Ok(corruption_at(t, mode, k))
}
