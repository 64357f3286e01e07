//! Triple storage: vocabularies, tab-separated split files, reciprocal and
//! identity augmentation, the filtered-ranking index, per-relation
//! cardinality statistics and seeded synthetic graphs.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const RECIPROCAL_SUFFIX: &str = "__recip";
pub const IDENTITY_RELATION: &str = "__identity__";

/// hptr / tphr threshold separating "1" from "N".
pub const CATEGORY_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let mut v = Self::new();
        for e in entities {
            if v.entity_index.contains_key(&e) {
                return Err(Error::InvalidArgument(format!("duplicate entity '{e}'")));
            }
            v.intern_entity(&e);
        }
        for r in relations {
            v.add_relation(&r)?;
        }
        Ok(v)
    }

    pub fn n_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn entity(&self, name: &str) -> Option<usize> {
        self.entity_index.get(name).copied()
    }

    pub fn relation(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn entity_name(&self, index: usize) -> &str {
        &self.entity_names[index]
    }

    pub fn relation_name(&self, index: usize) -> &str {
        &self.relation_names[index]
    }

    /// Index of `name`, appending it if new.
    pub fn intern_entity(&mut self, name: &str) -> usize {
        if let Some(&i) = self.entity_index.get(name) {
            return i;
        }
        let i = self.entity_names.len();
        self.entity_names.push(name.to_owned());
        self.entity_index.insert(name.to_owned(), i);
        i
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        if let Some(&i) = self.relation_index.get(name) {
            return i;
        }
        let i = self.relation_names.len();
        self.relation_names.push(name.to_owned());
        self.relation_index.insert(name.to_owned(), i);
        i
    }

    /// Append a relation that must not exist yet.
    pub fn add_relation(&mut self, name: &str) -> Result<usize> {
        if self.relation_index.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "relation '{name}' already exists"
            )));
        }
        Ok(self.intern_relation(name))
    }

    /// SHA-256 over both name lists; guards checkpoints against being
    /// applied to a different dataset.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (tag, names) in [("E", &self.entity_names), ("R", &self.relation_names)] {
            hasher.update(tag.as_bytes());
            hasher.update((names.len() as u64).to_le_bytes());
            for n in names {
                hasher.update((n.len() as u64).to_le_bytes());
                hasher.update(n.as_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub vocab: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub reciprocal_applied: bool,
    pub identity_relation: Option<usize>,
    pub provenance: Vec<PathBuf>,
}

impl Dataset {
    pub fn new(
        vocab: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let ds = Self {
            vocab,
            train,
            valid,
            test,
            ..Self::default()
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<Triple> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Index bounds, reciprocal layout and split disjointness.
    pub fn validate(&self) -> Result<()> {
        let (ne, nr) = (self.vocab.n_entities(), self.vocab.n_relations());
        for t in self.all_triples() {
            if t.head >= ne || t.tail >= ne || t.relation >= nr {
                return Err(Error::InvalidArgument(format!(
                    "triple {t} out of bounds for {ne} entities / {nr} relations"
                )));
            }
        }
        if self.reciprocal_applied && nr % 2 != 0 {
            return Err(Error::InvalidArgument(
                "reciprocal dataset with an odd relation count".into(),
            ));
        }
        let sets: Vec<HashSet<&Triple>> = Split::ALL
            .iter()
            .map(|s| self.split(*s).iter().collect())
            .collect();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            if let Some(t) = sets[i].intersection(&sets[j]).next() {
                return Err(Error::InvalidArgument(format!(
                    "triple {t} appears in both {} and {}",
                    Split::ALL[i].name(),
                    Split::ALL[j].name()
                )));
            }
        }
        Ok(())
    }

    /// Original relation of a reciprocal pair member, or `r` itself.
    pub fn base_relation(&self, r: usize) -> usize {
        if self.reciprocal_applied {
            r - r % 2
        } else {
            r
        }
    }

    pub fn reciprocal_of(&self, r: usize) -> Option<usize> {
        self.reciprocal_applied.then_some(r ^ 1)
    }
}

fn parse_line<'a>(path: &Path, line_no: usize, line: &'a str) -> Result<Option<[&'a str; 3]>> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.trim().is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message: format!("expected 3 tab-separated fields, found {}", fields.len()),
        });
    }
    if let Some(i) = fields.iter().position(|f| f.is_empty()) {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message: format!("field {} is empty", i + 1),
        });
    }
    Ok(Some([fields[0], fields[1], fields[2]]))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Load one split file.
///
/// With `vocab = None` a fresh vocabulary is built in first-appearance order.
/// With `Some(v)` the vocabulary is frozen and unknown names are errors.
pub fn load_triples(path: &Path, vocab: Option<&Vocab>) -> Result<(Vec<Triple>, Vocab)> {
    let text = read_text(path)?;
    let mut triples = Vec::new();
    match vocab {
        None => {
            let mut v = Vocab::new();
            for (i, line) in text.split('\n').enumerate() {
                if let Some([h, r, t]) = parse_line(path, i + 1, line)? {
                    let h = v.intern_entity(h);
                    let r = v.intern_relation(r);
                    let t = v.intern_entity(t);
                    triples.push(Triple::new(h, r, t));
                }
            }
            Ok((triples, v))
        }
        Some(v) => {
            let lookup = |kind: &'static str, name: &str, found: Option<usize>| {
                found.ok_or_else(|| Error::UnknownName {
                    kind,
                    name: name.to_owned(),
                })
            };
            for (i, line) in text.split('\n').enumerate() {
                if let Some([h, r, t]) = parse_line(path, i + 1, line)? {
                    let at_line = |e: Error| e.context(format!("{}:{}", path.display(), i + 1));
                    let h = lookup("entity", h, v.entity(h)).map_err(at_line)?;
                    let r = lookup("relation", r, v.relation(r)).map_err(at_line)?;
                    let t = lookup("entity", t, v.entity(t)).map_err(at_line)?;
                    triples.push(Triple::new(h, r, t));
                }
            }
            Ok((triples, v.clone()))
        }
    }
}

/// Load a split, appending unseen names to `vocab`.
pub fn load_triples_extending(path: &Path, vocab: &mut Vocab) -> Result<Vec<Triple>> {
    let text = read_text(path)?;
    let mut triples = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        if let Some([h, r, t]) = parse_line(path, i + 1, line)? {
            let h = vocab.intern_entity(h);
            let r = vocab.intern_relation(r);
            let t = vocab.intern_entity(t);
            triples.push(Triple::new(h, r, t));
        }
    }
    Ok(triples)
}

/// `train.txt`, `valid.txt`, `test.txt` from a benchmark directory, with one
/// shared vocabulary assigned in that order.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let mut vocab = Vocab::new();
    let mut splits = Vec::with_capacity(3);
    let mut provenance = Vec::with_capacity(3);
    for split in Split::ALL {
        let path = dir.join(format!("{}.txt", split.name()));
        splits.push(load_triples_extending(&path, &mut vocab)?);
        provenance.push(path);
    }
    let test = splits.pop().unwrap_or_default();
    let valid = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    let mut ds = Dataset::new(vocab, train, valid, test)?;
    ds.provenance = provenance;
    Ok(ds)
}

pub fn write_triples(path: &Path, triples: &[Triple], vocab: &Vocab) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        let names = [
            vocab.entity_name(t.head),
            vocab.relation_name(t.relation),
            vocab.entity_name(t.tail),
        ];
        if names.iter().any(|n| n.contains(['\t', '\n', '\r'])) {
            return Err(Error::InvalidArgument(format!(
                "name in triple {t} contains a tab or line break"
            )));
        }
        out.push_str(&names.join("\t"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_dataset_dir(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        write_triples(
            &dir.join(format!("{}.txt", split.name())),
            dataset.split(split),
            &dataset.vocab,
        )?;
    }
    Ok(())
}

/// Add a reciprocal relation for every relation: `r_j` becomes `2j`, its
/// reciprocal `2j + 1`, and each split gets `(t, r', h)` appended for every
/// `(h, r, t)`.
pub fn augment_reciprocal(dataset: &Dataset) -> Result<Dataset> {
    if dataset.reciprocal_applied {
        return Err(Error::InvalidArgument(
            "reciprocal relations already added".into(),
        ));
    }
    let mut relations = Vec::with_capacity(2 * dataset.vocab.n_relations());
    for name in dataset.vocab.relation_names() {
        relations.push(name.clone());
        relations.push(format!("{name}{RECIPROCAL_SUFFIX}"));
    }
    let vocab = Vocab::from_names(dataset.vocab.entity_names().to_vec(), relations)?;
    let mirror = |split: &[Triple]| -> Vec<Triple> {
        let forward = split
            .iter()
            .map(|t| Triple::new(t.head, 2 * t.relation, t.tail));
        let backward = split
            .iter()
            .map(|t| Triple::new(t.tail, 2 * t.relation + 1, t.head));
        forward.chain(backward).collect()
    };
    Ok(Dataset {
        vocab,
        train: mirror(&dataset.train),
        valid: mirror(&dataset.valid),
        test: mirror(&dataset.test),
        reciprocal_applied: true,
        identity_relation: dataset.identity_relation.map(|r| 2 * r),
        provenance: dataset.provenance.clone(),
    })
}

/// Add the identity relation with `(e, identity, e)` training triples for a
/// seeded sample of `⌈fraction·|E|⌉` entities.
pub fn inject_identity(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "identity fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if dataset.identity_relation.is_some() {
        return Err(Error::InvalidArgument(
            "identity relation already injected".into(),
        ));
    }
    let n = dataset.vocab.n_entities();
    let count = ((fraction * n as f64).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();

    let mut out = dataset.clone();
    let rel = out.vocab.add_relation(IDENTITY_RELATION)?;
    out.train
        .extend(chosen.iter().map(|&e| Triple::new(e, rel, e)));
    if out.reciprocal_applied {
        let recip = out
            .vocab
            .add_relation(&format!("{IDENTITY_RELATION}{RECIPROCAL_SUFFIX}"))?;
        out.train
            .extend(chosen.iter().map(|&e| Triple::new(e, recip, e)));
    }
    out.identity_relation = Some(rel);
    Ok(out)
}

/// Copy every triple of `relation` (and of its reciprocal when present) into
/// a new relation named `name`. Returns the new relation index.
pub fn duplicate_relation(dataset: &mut Dataset, relation: usize, name: &str) -> Result<usize> {
    if relation >= dataset.vocab.n_relations() {
        return Err(Error::InvalidArgument(format!(
            "relation {relation} out of range"
        )));
    }
    let base = dataset.base_relation(relation);
    let new = dataset.vocab.add_relation(name)?;
    let pairs: Vec<(usize, usize)> = if dataset.reciprocal_applied {
        let recip = dataset
            .vocab
            .add_relation(&format!("{name}{RECIPROCAL_SUFFIX}"))?;
        vec![(base, new), (base + 1, recip)]
    } else {
        vec![(base, new)]
    };
    for split in Split::ALL {
        let triples = dataset.split_mut(split);
        let copies: Vec<Triple> = triples
            .iter()
            .filter_map(|t| {
                pairs
                    .iter()
                    .find(|(from, _)| *from == t.relation)
                    .map(|(_, to)| Triple::new(t.head, *to, t.tail))
            })
            .collect();
        triples.extend(copies);
    }
    Ok(new)
}

/// Known true tails per `(head, relation)` across all splits.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    buckets: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn tails(&self, head: usize, relation: usize) -> &[usize] {
        self.buckets
            .get(&(head, relation))
            .map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.tails(triple.head, triple.relation)
            .binary_search(&triple.tail)
            .is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }
}

pub fn build_filter_index(dataset: &Dataset) -> FilterIndex {
    let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for t in dataset.all_triples() {
        buckets
            .entry((t.head, t.relation))
            .or_default()
            .push(t.tail);
    }
    for tails in buckets.values_mut() {
        tails.sort_unstable();
        tails.dedup();
    }
    FilterIndex { buckets }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationCategory {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl RelationCategory {
    pub fn from_ratios(hptr: f64, tphr: f64) -> Self {
        match (hptr >= CATEGORY_THRESHOLD, tphr >= CATEGORY_THRESHOLD) {
            (false, false) => Self::OneToOne,
            (false, true) => Self::OneToMany,
            (true, false) => Self::ManyToOne,
            (true, true) => Self::ManyToMany,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::OneToOne => "1-1",
            Self::OneToMany => "1-N",
            Self::ManyToOne => "N-1",
            Self::ManyToMany => "N-N",
        }
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationStats {
    pub relation: usize,
    pub hptr: f64,
    pub tphr: f64,
    pub complexity: f64,
    pub category: RelationCategory,
}

/// Heads-per-tail and tails-per-head over distinct `(h, t)` pairs, one row
/// per relation that has at least one triple, ordered by relation index.
pub fn relation_stats(triples: &[Triple], vocab: &Vocab) -> Vec<RelationStats> {
    let mut pairs: Vec<HashSet<(usize, usize)>> = vec![HashSet::new(); vocab.n_relations()];
    for t in triples {
        if let Some(set) = pairs.get_mut(t.relation) {
            set.insert((t.head, t.tail));
        }
    }
    pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty())
        .map(|(relation, p)| {
            let heads: HashSet<usize> = p.iter().map(|(h, _)| *h).collect();
            let tails: HashSet<usize> = p.iter().map(|(_, t)| *t).collect();
            let n = p.len() as f64;
            let hptr = n / tails.len() as f64;
            let tphr = n / heads.len() as f64;
            RelationStats {
                relation,
                hptr,
                tphr,
                complexity: hptr + tphr,
                category: RelationCategory::from_ratios(hptr, tphr),
            }
        })
        .collect()
}

pub const RELATION_STATS_HEADER: &str = "relation,hptr,tphr,complexity,category";

pub fn relation_stats_csv(stats: &[RelationStats], vocab: &Vocab) -> String {
    let mut out = String::from(RELATION_STATS_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            vocab.relation_name(s.relation),
            s.hptr,
            s.tphr,
            s.complexity,
            s.category
        ));
    }
    out
}

/// Shape of one synthetic relation: `n_heads` heads with `tails_per_head`
/// tails each over `n_tails` tails receiving `heads_per_tail` heads each.
/// `copies > 1` adds further relations holding exactly the same pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationShape {
    pub n_heads: usize,
    pub tails_per_head: usize,
    pub n_tails: usize,
    pub heads_per_tail: usize,
    #[serde(default = "one")]
    pub copies: usize,
}

fn one() -> usize {
    1
}

impl RelationShape {
    /// 1-N shape over distinct tails.
    pub fn one_to_many(n_heads: usize, tails_per_head: usize) -> Self {
        Self {
            n_heads,
            tails_per_head,
            n_tails: n_heads * tails_per_head,
            heads_per_tail: 1,
            copies: 1,
        }
    }

    pub fn with_copies(mut self, copies: usize) -> Self {
        self.copies = copies;
        self
    }
}

/// Train/valid/test proportions of a synthetic graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    /// Everything in train.
    pub fn train_only() -> Self {
        Self {
            train: 1.0,
            valid: 0.0,
            test: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_entities: usize,
    pub relations: Vec<RelationShape>,
    #[serde(default)]
    pub split: SplitFractions,
}

/// Seeded graph with exactly the requested per-relation cardinalities,
/// split by a seeded shuffle (80/10/10 unless configured).
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let infeasible = |msg: String| {
        Err(Error::InvalidArgument(format!(
            "infeasible synthetic spec: {msg}"
        )))
    };
    if spec.relations.is_empty() {
        return infeasible("no relations".into());
    }
    let f = spec.split;
    if [f.train, f.valid, f.test].iter().any(|v| !(*v >= 0.0))
        || (f.train + f.valid + f.test - 1.0).abs() > 1e-9
    {
        return infeasible("split fractions must be nonnegative and sum to 1".into());
    }
    for (j, s) in spec.relations.iter().enumerate() {
        if s.n_heads == 0
            || s.tails_per_head == 0
            || s.n_tails == 0
            || s.heads_per_tail == 0
            || s.copies == 0
        {
            return infeasible(format!("relation {j} has a zero count"));
        }
        if s.n_heads * s.tails_per_head != s.n_tails * s.heads_per_tail {
            return infeasible(format!(
                "relation {j}: {}x{} pairs from the head side but {}x{} from the tail side",
                s.n_heads, s.tails_per_head, s.n_tails, s.heads_per_tail
            ));
        }
        if s.tails_per_head > s.n_tails || s.heads_per_tail > s.n_heads {
            return infeasible(format!("relation {j}: degree exceeds the opposite side"));
        }
        if s.n_heads + s.n_tails > spec.n_entities {
            return infeasible(format!(
                "relation {j} needs {} entities, budget is {}",
                s.n_heads + s.n_tails,
                spec.n_entities
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = Vocab::new();
    for i in 0..spec.n_entities {
        vocab.intern_entity(&format!("e{i}"));
    }
    let mut triples = Vec::new();
    for (j, s) in spec.relations.iter().enumerate() {
        let picked = index::sample(&mut rng, spec.n_entities, s.n_heads + s.n_tails).into_vec();
        let (heads, tails) = picked.split_at(s.n_heads);
        let mut pairs = Vec::with_capacity(s.n_heads * s.tails_per_head);
        for (i, &h) in heads.iter().enumerate() {
            for k in 0..s.tails_per_head {
                pairs.push((h, tails[(i * s.tails_per_head + k) % s.n_tails]));
            }
        }
        for c in 0..s.copies {
            let name = if s.copies == 1 {
                format!("r{j}")
            } else {
                format!("r{j}_{c}")
            };
            let r = vocab.add_relation(&name)?;
            triples.extend(pairs.iter().map(|&(h, t)| Triple::new(h, r, t)));
        }
    }
    triples.shuffle(&mut rng);
    let n = triples.len();
    let n_train = (f.train * n as f64).round() as usize;
    let n_valid = (f.valid * n as f64).round() as usize;
    let test = triples.split_off((n_train + n_valid).min(n));
    let valid = triples.split_off(n_train.min(triples.len()));
    Dataset::new(vocab, triples, valid, test)
}

/// Line count of a split file without building a vocabulary.
pub fn count_lines(path: &Path) -> Result<usize> {
    let text = read_text(path)?;
    Ok(text.split('\n').filter(|l| !l.trim().is_empty()).count())
}

/// Write `contents` to `path`, refusing to replace an existing file unless
/// `force` is set.
pub fn write_output(path: &Path, contents: &[u8], force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                "output exists; pass --force to overwrite",
            ),
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}
