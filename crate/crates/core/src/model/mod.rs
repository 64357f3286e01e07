//! Model parameters and the shared bilinear score pipeline.
//!
//! Every model kind is scored as `φ(h)ᵀ M_r φ(t)` where `φ` normalizes an
//! entity when the entity constraint is on and `M_r` is the relation's
//! effective matrix, divided by its spectral radius when the relation
//! constraint is on. The relation-specific structure lives in [`unibi`] and
//! [`baselines`]; this module owns the entity side, tapes and gradients.

pub mod baselines;
pub mod unibi;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_store::Triple;
use crate::linalg::{self, DenseMatrix, DEGENERATE_NORM};

pub use baselines::{
    baseline_backward, baseline_score, ComplexRelation, CpRelation, RescalRelation,
};
pub use unibi::UniBiRelation;

/// Smallest |ξ_i| accepted at initialization.
const XI_INIT_FLOOR: f64 = 1e-3;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "unibi-o2")]
    UniBiO2,
    #[serde(rename = "unibi-o3")]
    UniBiO3,
    #[serde(rename = "cp")]
    Cp,
    #[serde(rename = "complex")]
    ComplEx,
    #[serde(rename = "rescal")]
    Rescal,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::UniBiO2,
        ModelKind::UniBiO3,
        ModelKind::Cp,
        ModelKind::ComplEx,
        ModelKind::Rescal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::UniBiO2 => "unibi-o2",
            ModelKind::UniBiO3 => "unibi-o3",
            ModelKind::Cp => "cp",
            ModelKind::ComplEx => "complex",
            ModelKind::Rescal => "rescal",
        }
    }

    pub fn is_unibi(self) -> bool {
        matches!(self, ModelKind::UniBiO2 | ModelKind::UniBiO3)
    }

    /// Rotation block size for UniBi kinds.
    pub fn block_size(self) -> Option<usize> {
        match self {
            ModelKind::UniBiO2 => Some(2),
            ModelKind::UniBiO3 => Some(4),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub entity_constraint: bool,
    pub relation_constraint: bool,
}

impl ModelConfig {
    /// UniBi kinds start with both constraints on; baselines start
    /// unconstrained and only take constraints when explicitly enabled.
    pub fn new(kind: ModelKind, dim: usize) -> Result<Self> {
        let on = kind.is_unibi();
        let cfg = Self {
            kind,
            dim,
            entity_constraint: on,
            relation_constraint: on,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_constraints(mut self, entity: bool, relation: bool) -> Self {
        self.entity_constraint = entity;
        self.relation_constraint = relation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        let k = match self.kind {
            ModelKind::ComplEx => 2,
            other => other.block_size().unwrap_or(1),
        };
        if self.dim % k != 0 {
            return Err(Error::Config(format!(
                "{} needs a dimension divisible by {k}, got {}",
                self.kind, self.dim
            )));
        }
        Ok(())
    }

    /// Reals per relation.
    pub fn relation_param_len(&self) -> usize {
        match self.kind {
            ModelKind::UniBiO2 | ModelKind::UniBiO3 => 3 * self.dim,
            ModelKind::Cp | ModelKind::ComplEx => self.dim,
            ModelKind::Rescal => self.dim * self.dim,
        }
    }

    pub fn has_tail_table(&self) -> bool {
        self.kind == ModelKind::Cp
    }
}

/// Raw entity vectors, row-major. CP keeps a second table for the tail role.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityTable {
    dim: usize,
    count: usize,
    heads: Vec<f64>,
    tails: Option<Vec<f64>>,
}

impl EntityTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Vector used when the entity is a head.
    pub fn head(&self, e: usize) -> &[f64] {
        &self.heads[e * self.dim..(e + 1) * self.dim]
    }

    /// Vector used when the entity is a tail (the head table unless CP).
    pub fn tail(&self, e: usize) -> &[f64] {
        let table = self.tails.as_ref().unwrap_or(&self.heads);
        &table[e * self.dim..(e + 1) * self.dim]
    }

    pub fn head_table(&self) -> &[f64] {
        &self.heads
    }

    pub fn tail_table(&self) -> Option<&[f64]> {
        self.tails.as_deref()
    }
}

/// Which side of the relation a transform acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    /// `Mᵀ x`: the query vector for tail prediction.
    Left,
    /// `M x`
    Right,
}

/// Spectral-radius divisor and its sparse gradient over relation parameters.
#[derive(Debug, Clone)]
pub(crate) struct Divisor {
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
}

impl Divisor {
    pub fn unit() -> Self {
        Self {
            value: 1.0,
            grad: Vec::new(),
        }
    }
}

/// Intermediates of one relation transform.
#[derive(Debug, Clone)]
pub(crate) struct TransformCache {
    side: Side,
    input: Vec<f64>,
    mid: Vec<f64>,
    output: Vec<f64>,
    divisor: Divisor,
}

/// Typed, borrowed view of one relation's parameters.
#[derive(Debug, Clone, Copy)]
pub enum RelationView<'a> {
    UniBi(UniBiRelation<'a>),
    Cp(CpRelation<'a>),
    ComplEx(ComplexRelation<'a>),
    Rescal(RescalRelation<'a>),
}

impl<'a> RelationView<'a> {
    fn divisor(&self, rc: bool) -> Result<Divisor> {
        if !rc {
            return Ok(Divisor::unit());
        }
        let d = match self {
            RelationView::UniBi(r) => r.divisor(),
            RelationView::Cp(r) => r.divisor(),
            RelationView::ComplEx(r) => r.divisor(),
            RelationView::Rescal(r) => r.divisor()?,
        };
        if !(d.value > 0.0) {
            return Err(Error::DegenerateVector { norm: d.value });
        }
        Ok(d)
    }

    /// Undivided structured transform; `mid` receives whatever the backward
    /// pass needs beyond the input.
    fn apply(&self, x: &[f64], side: Side, mid: &mut Vec<f64>) -> Vec<f64> {
        match self {
            RelationView::UniBi(r) => r.apply(x, side, mid),
            RelationView::Cp(r) => r.apply(x),
            RelationView::ComplEx(r) => r.apply(x, side),
            RelationView::Rescal(r) => r.apply(x, side),
        }
    }

    fn apply_backward(&self, cache: &TransformCache, dy: &[f64], dx: &mut [f64], drel: &mut [f64]) {
        match self {
            RelationView::UniBi(r) => r.apply_backward(cache, dy, dx, drel),
            RelationView::Cp(r) => r.apply_backward(&cache.input, dy, dx, drel),
            RelationView::ComplEx(r) => r.apply_backward(&cache.input, cache.side, dy, dx, drel),
            RelationView::Rescal(r) => r.apply_backward(&cache.input, cache.side, dy, dx, drel),
        }
    }

    pub(crate) fn transform(&self, x: &[f64], side: Side, rc: bool) -> Result<TransformCache> {
        let divisor = self.divisor(rc)?;
        let mut mid = Vec::new();
        let mut output = self.apply(x, side, &mut mid);
        if divisor.value != 1.0 {
            output.iter_mut().for_each(|v| *v /= divisor.value);
        }
        Ok(TransformCache {
            side,
            input: x.to_vec(),
            mid,
            output,
            divisor,
        })
    }

    /// Backward of `y = T(x) / m`; accumulates into `dx` and `drel`.
    pub(crate) fn transform_backward(
        &self,
        cache: &TransformCache,
        dout: &[f64],
        dx: &mut [f64],
        drel: &mut [f64],
    ) {
        let m = cache.divisor.value;
        if !cache.divisor.grad.is_empty() {
            let dm = -linalg::dot(&cache.output, dout) / m;
            for &(i, g) in &cache.divisor.grad {
                drel[i] += dm * g;
            }
        }
        if m == 1.0 {
            self.apply_backward(cache, dout, dx, drel);
        } else {
            let dy: Vec<f64> = dout.iter().map(|v| v / m).collect();
            self.apply_backward(cache, &dy, dx, drel);
        }
    }

    /// Undivided dense matrix.
    fn raw_matrix(&self) -> DenseMatrix {
        match self {
            RelationView::UniBi(r) => r.raw_matrix(),
            RelationView::Cp(r) => r.raw_matrix(),
            RelationView::ComplEx(r) => r.raw_matrix(),
            RelationView::Rescal(r) => r.raw_matrix(),
        }
    }

    /// Undivided singular values, nonincreasing.
    fn raw_spectrum(&self) -> Result<Vec<f64>> {
        Ok(match self {
            RelationView::UniBi(r) => r.raw_spectrum(),
            RelationView::Cp(r) => r.raw_spectrum(),
            RelationView::ComplEx(r) => r.raw_spectrum(),
            RelationView::Rescal(r) => r.raw_spectrum()?,
        })
    }
}

/// Global counter; each mutation gives the state a fresh value.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    config: ModelConfig,
    entities: EntityTable,
    relations: Vec<f64>,
    n_relations: usize,
    rng_seed: u64,
    version: u64,
}

impl ModelState {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn n_entities(&self) -> usize {
        self.entities.count
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn entities(&self) -> &EntityTable {
        &self.entities
    }

    pub fn relation_table(&self) -> &[f64] {
        &self.relations
    }

    pub fn relation_params(&self, r: usize) -> &[f64] {
        let len = self.config.relation_param_len();
        &self.relations[r * len..(r + 1) * len]
    }

    /// Replace the constraint flags (used by ablations on trained states).
    pub fn set_constraints(&mut self, entity: bool, relation: bool) {
        self.config = self.config.with_constraints(entity, relation);
        self.touch();
    }

    pub fn relation(&self, r: usize) -> Result<RelationView<'_>> {
        if r >= self.n_relations {
            return Err(Error::InvalidArgument(format!(
                "relation {r} out of range ({} relations)",
                self.n_relations
            )));
        }
        let p = self.relation_params(r);
        let n = self.config.dim;
        Ok(match self.config.kind {
            ModelKind::UniBiO2 | ModelKind::UniBiO3 => RelationView::UniBi(
                UniBiRelation::from_flat(p, self.config.kind.block_size().expect("unibi")),
            ),
            ModelKind::Cp => RelationView::Cp(CpRelation::new(p)),
            ModelKind::ComplEx => RelationView::ComplEx(ComplexRelation::new(p)),
            ModelKind::Rescal => RelationView::Rescal(RescalRelation::new(p, n)),
        })
    }

    fn touch(&mut self) {
        self.version = next_version();
    }

    pub fn head_entity_mut(&mut self, e: usize) -> &mut [f64] {
        self.touch();
        let d = self.config.dim;
        &mut self.entities.heads[e * d..(e + 1) * d]
    }

    /// Tail-role vector (the shared table unless CP).
    pub fn tail_entity_mut(&mut self, e: usize) -> &mut [f64] {
        self.touch();
        let d = self.config.dim;
        let table = match self.entities.tails.as_mut() {
            Some(t) => t,
            None => &mut self.entities.heads,
        };
        &mut table[e * d..(e + 1) * d]
    }

    pub fn relation_params_mut(&mut self, r: usize) -> &mut [f64] {
        self.touch();
        let len = self.config.relation_param_len();
        &mut self.relations[r * len..(r + 1) * len]
    }

    /// Flat parameter groups in checkpoint order.
    pub fn param_groups(&self) -> Vec<(&'static str, &[f64])> {
        let mut g: Vec<(&'static str, &[f64])> = vec![("entities", &self.entities.heads)];
        if let Some(t) = &self.entities.tails {
            g.push(("tail_entities", t));
        }
        g.push(("relations", &self.relations));
        g
    }

    pub fn param_groups_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        self.touch();
        let mut g: Vec<(&'static str, &mut Vec<f64>)> =
            vec![("entities", &mut self.entities.heads)];
        if let Some(t) = self.entities.tails.as_mut() {
            g.push(("tail_entities", t));
        }
        g.push(("relations", &mut self.relations));
        g
    }

    /// Rebuild a state from raw arrays (checkpoint loading).
    pub fn from_parts(
        config: ModelConfig,
        n_entities: usize,
        n_relations: usize,
        rng_seed: u64,
        mut groups: Vec<Vec<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = if config.has_tail_table() { 3 } else { 2 };
        if groups.len() != expected {
            return Err(Error::Shape(format!(
                "{} parameter groups, expected {expected}",
                groups.len()
            )));
        }
        let relations = groups.pop().expect("len checked");
        let tails = if config.has_tail_table() {
            groups.pop()
        } else {
            None
        };
        let heads = groups.pop().expect("len checked");
        let ent_len = n_entities * config.dim;
        if heads.len() != ent_len || tails.as_ref().is_some_and(|t| t.len() != ent_len) {
            return Err(Error::Shape("entity table length".into()));
        }
        if relations.len() != n_relations * config.relation_param_len() {
            return Err(Error::Shape("relation table length".into()));
        }
        Ok(Self {
            config,
            entities: EntityTable {
                dim: config.dim,
                count: n_entities,
                heads,
                tails,
            },
            relations,
            n_relations,
            rng_seed,
            version: next_version(),
        })
    }

    /// Restore invariants after an optimizer step: collapsed entity vectors
    /// are re-randomized, collapsed rotation blocks reset to the identity and
    /// vanishing ξ entries lifted off zero.
    pub fn repair(&mut self, step: u64) {
        let d = self.config.dim;
        let seed = self.rng_seed;
        let fix_table = |table: &mut Vec<f64>, salt: u64| {
            for (e, v) in table.chunks_mut(d).enumerate() {
                if linalg::norm(v) < DEGENERATE_NORM {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(seed ^ (step << 20) ^ ((e as u64) << 1) ^ salt);
                    let scale = 1.0 / (d as f64).sqrt();
                    v.iter_mut()
                        .for_each(|x| *x = scale * rng.sample::<f64, _>(StandardNormal));
                }
            }
        };
        fix_table(&mut self.entities.heads, 0);
        if let Some(t) = self.entities.tails.as_mut() {
            fix_table(t, 1);
        }
        if let Some(k) = self.config.kind.block_size() {
            let len = self.config.relation_param_len();
            for rel in self.relations.chunks_mut(len) {
                for block in rel[..2 * d].chunks_mut(k) {
                    if linalg::norm(block) < DEGENERATE_NORM {
                        block.iter_mut().for_each(|x| *x = 0.0);
                        block[0] = 1.0;
                    }
                }
                for xi in &mut rel[2 * d..] {
                    if xi.abs() < DEGENERATE_NORM {
                        *xi = if *xi < 0.0 {
                            -DEGENERATE_NORM
                        } else {
                            DEGENERATE_NORM
                        };
                    }
                }
            }
        }
        self.touch();
    }
}

/// Fresh parameters, deterministic in `seed`.
///
/// Entities are `N(0, 1/n)` per coordinate. UniBi rotation blocks are
/// Gaussian then normalized and ξ is uniform on `[-1, 1]` away from zero.
/// CP and ComplEx relation entries are standard normal; RESCAL matrices are
/// `N(0, 1/n)` per entry.
pub fn init_state(
    config: ModelConfig,
    n_entities: usize,
    n_relations: usize,
    seed: u64,
) -> Result<ModelState> {
    config.validate()?;
    if n_entities == 0 || n_relations == 0 {
        return Err(Error::InvalidArgument(
            "entity and relation counts must be positive".into(),
        ));
    }
    let n = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ent_scale = 1.0 / (n as f64).sqrt();
    let table = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n_entities * n)
            .map(|_| ent_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let heads = table(&mut rng);
    let tails = config.has_tail_table().then(|| table(&mut rng));

    let mut relations = Vec::with_capacity(n_relations * config.relation_param_len());
    for _ in 0..n_relations {
        match config.kind {
            ModelKind::UniBiO2 | ModelKind::UniBiO3 => {
                let k = config.kind.block_size().expect("unibi");
                for _ in 0..2 * n / k {
                    let mut block: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                    linalg::normalize_block_in_place(&mut block);
                    relations.extend(block);
                }
                for _ in 0..n {
                    let mut xi: f64 = rng.random_range(-1.0..=1.0);
                    while xi.abs() < XI_INIT_FLOOR {
                        xi = rng.random_range(-1.0..=1.0);
                    }
                    relations.push(xi);
                }
            }
            ModelKind::Cp | ModelKind::ComplEx => {
                relations.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            }
            ModelKind::Rescal => {
                relations
                    .extend((0..n * n).map(|_| ent_scale * rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    Ok(ModelState {
        config,
        entities: EntityTable {
            dim: n,
            count: n_entities,
            heads,
            tails,
        },
        relations,
        n_relations,
        rng_seed: seed,
        version: next_version(),
    })
}

/// Entity vector as it enters the bilinear form.
#[derive(Debug, Clone)]
pub(crate) struct EntityView {
    pub phi: Vec<f64>,
    /// Raw norm when the entity constraint normalized it.
    pub norm: Option<f64>,
}

pub(crate) fn entity_view(raw: &[f64], ec: bool) -> Result<EntityView> {
    if ec {
        let (phi, norm) = linalg::normalize(raw)?;
        Ok(EntityView {
            phi,
            norm: Some(norm),
        })
    } else {
        Ok(EntityView {
            phi: raw.to_vec(),
            norm: None,
        })
    }
}

/// Map a gradient w.r.t. `φ(e)` to the raw vector; accumulates.
pub(crate) fn entity_backward(view: &EntityView, d_phi: &[f64], d_raw: &mut [f64]) {
    match view.norm {
        Some(n) => linalg::normalize_backward(&view.phi, n, d_phi, d_raw),
        None => d_raw.iter_mut().zip(d_phi).for_each(|(d, g)| *d += g),
    }
}

/// `φ` of every tail-role entity, row-major.
#[derive(Debug, Clone)]
pub struct CandidateTable {
    dim: usize,
    phi: Vec<f64>,
    norms: Option<Vec<f64>>,
}

impl CandidateTable {
    pub fn build(state: &ModelState) -> Result<Self> {
        let d = state.dim();
        let ec = state.config.entity_constraint;
        let table = state
            .entities
            .tails
            .as_deref()
            .unwrap_or(&state.entities.heads);
        if !ec {
            return Ok(Self {
                dim: d,
                phi: table.to_vec(),
                norms: None,
            });
        }
        let mut phi = Vec::with_capacity(table.len());
        let mut norms = Vec::with_capacity(state.n_entities());
        for row in table.chunks(d) {
            let (u, n) = linalg::normalize(row)?;
            phi.extend(u);
            norms.push(n);
        }
        Ok(Self {
            dim: d,
            phi,
            norms: Some(norms),
        })
    }

    pub fn len(&self) -> usize {
        self.phi.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn row(&self, e: usize) -> &[f64] {
        &self.phi[e * self.dim..(e + 1) * self.dim]
    }

    /// `q · φ(t_j)` for every candidate.
    pub fn scores(&self, q: &[f64]) -> Vec<f64> {
        self.phi
            .chunks(self.dim)
            .map(|row| linalg::dot(row, q))
            .collect()
    }

    /// Backward for a whole table of `φ` gradients (row-major), accumulated
    /// into raw gradients.
    pub(crate) fn backward_into(&self, d_phi: &[f64], d_raw: &mut [f64]) {
        match &self.norms {
            None => d_raw.iter_mut().zip(d_phi).for_each(|(d, g)| *d += g),
            Some(norms) => {
                for (e, &n) in norms.iter().enumerate() {
                    let s = e * self.dim..(e + 1) * self.dim;
                    linalg::normalize_backward(
                        &self.phi[s.clone()],
                        n,
                        &d_phi[s.clone()],
                        &mut d_raw[s],
                    );
                }
            }
        }
    }
}

/// Intermediates of a single forward score.
#[derive(Debug, Clone)]
pub struct ScoreTape {
    version: u64,
    triple: Triple,
    head: EntityView,
    tail: EntityView,
    query: TransformCache,
    score: f64,
}

impl ScoreTape {
    pub fn triple(&self) -> Triple {
        self.triple
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    /// Index of the |ξ| entry used as divisor, for UniBi with the relation
    /// constraint on.
    pub fn xi_argmax(&self) -> Option<usize> {
        let n = self.head.phi.len();
        match self.query.divisor.grad.as_slice() {
            [(i, _)] if *i >= 2 * n => Some(i - 2 * n),
            _ => None,
        }
    }
}

/// Raw-parameter gradients of one score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub triple: Triple,
    /// w.r.t. the head-role vector of `triple.head`
    pub head: Vec<f64>,
    /// w.r.t. the tail-role vector of `triple.tail`
    pub tail: Vec<f64>,
    /// w.r.t. the flat parameters of `triple.relation`
    pub relation: Vec<f64>,
}

impl ScoreGrad {
    pub fn is_zero(&self) -> bool {
        self.head
            .iter()
            .chain(&self.tail)
            .chain(&self.relation)
            .all(|v| *v == 0.0)
    }
}

fn check_triple(state: &ModelState, h: usize, r: usize, t: usize) -> Result<()> {
    let ne = state.n_entities();
    if h >= ne || t >= ne || r >= state.n_relations {
        return Err(Error::InvalidArgument(format!(
            "triple ({h}, {r}, {t}) out of range ({ne} entities, {} relations)",
            state.n_relations
        )));
    }
    Ok(())
}

/// Query vector `q = M_rᵀ φ(h)`; `score(h, r, t) = q · φ(t)`.
pub(crate) fn query(
    state: &ModelState,
    h: usize,
    r: usize,
) -> Result<(EntityView, TransformCache)> {
    let head = entity_view(state.entities.head(h), state.config.entity_constraint)?;
    let cache =
        state
            .relation(r)?
            .transform(&head.phi, Side::Left, state.config.relation_constraint)?;
    Ok((head, cache))
}

/// Output vector of a transform.
pub(crate) fn transform_output(cache: &TransformCache) -> &[f64] {
    &cache.output
}

/// Backward from `dq` through the relation and the head normalization.
pub(crate) fn query_backward(
    state: &ModelState,
    r: usize,
    head: &EntityView,
    cache: &TransformCache,
    dq: &[f64],
    d_head_phi_extra: Option<&[f64]>,
    d_head_raw: &mut [f64],
    d_rel: &mut [f64],
) -> Result<()> {
    let mut d_phi = vec![0.0; state.dim()];
    state
        .relation(r)?
        .transform_backward(cache, dq, &mut d_phi, d_rel);
    if let Some(extra) = d_head_phi_extra {
        d_phi.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
    }
    entity_backward(head, &d_phi, d_head_raw);
    Ok(())
}

/// Constrained bilinear score of `(h, r, t)` with a tape for
/// [`score_backward`].
pub fn score(state: &ModelState, h: usize, r: usize, t: usize) -> Result<(f64, ScoreTape)> {
    check_triple(state, h, r, t)?;
    let (head, query) = query(state, h, r)?;
    let tail = entity_view(state.entities.tail(t), state.config.entity_constraint)?;
    let s = linalg::dot(&query.output, &tail.phi);
    if !s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite score for ({h}, {r}, {t})"
        )));
    }
    Ok((
        s,
        ScoreTape {
            version: state.version,
            triple: Triple::new(h, r, t),
            head,
            tail,
            query,
            score: s,
        },
    ))
}

/// Gradients of `upstream · score` w.r.t. every raw parameter touched by the
/// tape's triple.
pub fn score_backward(state: &ModelState, tape: &ScoreTape, upstream: f64) -> Result<ScoreGrad> {
    if tape.version != state.version {
        return Err(Error::StaleTape {
            tape: tape.version,
            state: state.version,
        });
    }
    let n = state.dim();
    let Triple { relation: r, .. } = tape.triple;
    let mut grad = ScoreGrad {
        triple: tape.triple,
        head: vec![0.0; n],
        tail: vec![0.0; n],
        relation: vec![0.0; state.config.relation_param_len()],
    };
    if upstream == 0.0 {
        return Ok(grad);
    }
    let dq: Vec<f64> = tape.tail.phi.iter().map(|v| upstream * v).collect();
    let d_tail_phi: Vec<f64> = tape.query.output.iter().map(|v| upstream * v).collect();
    entity_backward(&tape.tail, &d_tail_phi, &mut grad.tail);
    query_backward(
        state,
        r,
        &tape.head,
        &tape.query,
        &dq,
        None,
        &mut grad.head,
        &mut grad.relation,
    )?;
    Ok(grad)
}

/// Scores of `(h, r, e)` for every entity `e`.
pub fn score_all_tails(state: &ModelState, h: usize, r: usize) -> Result<Vec<f64>> {
    check_triple(state, h, r, 0)?;
    let candidates = CandidateTable::build(state)?;
    score_all_tails_with(state, &candidates, h, r)
}

/// [`score_all_tails`] against a prebuilt candidate table.
pub fn score_all_tails_with(
    state: &ModelState,
    candidates: &CandidateTable,
    h: usize,
    r: usize,
) -> Result<Vec<f64>> {
    let (_, q) = query(state, h, r)?;
    Ok(candidates.scores(&q.output))
}

/// Dense `M` with `score(h, r, t) = φ(h)ᵀ M φ(t)`; the spectral-radius
/// divisor is folded in when the relation constraint is on.
pub fn effective_matrix(state: &ModelState, r: usize) -> Result<DenseMatrix> {
    let view = state.relation(r)?;
    let m = view.raw_matrix();
    let d = view.divisor(state.config.relation_constraint)?;
    Ok(if d.value == 1.0 {
        m
    } else {
        m.scale(1.0 / d.value)
    })
}

/// Singular values of the effective matrix, nonincreasing, computed from
/// the structured parameters.
pub fn singular_spectrum(state: &ModelState, r: usize) -> Result<Vec<f64>> {
    let view = state.relation(r)?;
    let mut s = view.raw_spectrum()?;
    if state.config.relation_constraint {
        let m = s[0];
        if !(m > 0.0) {
            return Err(Error::DegenerateVector { norm: m });
        }
        s.iter_mut().for_each(|v| *v /= m);
    }
    Ok(s)
}

/// `Mᵀ x` and `M x` for the relation's effective matrix.
pub fn apply_effective(
    state: &ModelState,
    r: usize,
    x: &[f64],
    transposed: bool,
) -> Result<Vec<f64>> {
    if x.len() != state.dim() {
        return Err(Error::Shape(format!(
            "vector of length {} for dimension {}",
            x.len(),
            state.dim()
        )));
    }
    let side = if transposed { Side::Left } else { Side::Right };
    Ok(state
        .relation(r)?
        .transform(x, side, state.config.relation_constraint)?
        .output)
}

/// Dense accumulator over all raw parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entities: Vec<f64>,
    pub tail_entities: Option<Vec<f64>>,
    pub relations: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(state: &ModelState) -> Self {
        Self {
            entities: vec![0.0; state.entities.heads.len()],
            tail_entities: state.entities.tails.as_ref().map(|t| vec![0.0; t.len()]),
            relations: vec![0.0; state.relations.len()],
        }
    }

    pub fn clear(&mut self) {
        self.entities.iter_mut().for_each(|v| *v = 0.0);
        if let Some(t) = self.tail_entities.as_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        self.relations.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.entities.iter_mut().for_each(|v| *v *= factor);
        if let Some(t) = self.tail_entities.as_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
        self.relations.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn groups(&self) -> Vec<(&'static str, &[f64])> {
        let mut g: Vec<(&'static str, &[f64])> = vec![("entities", &self.entities)];
        if let Some(t) = &self.tail_entities {
            g.push(("tail_entities", t));
        }
        g.push(("relations", &self.relations));
        g
    }

    pub(crate) fn head_mut(&mut self, dim: usize, e: usize) -> &mut [f64] {
        &mut self.entities[e * dim..(e + 1) * dim]
    }

    pub(crate) fn tail_table_mut(&mut self) -> &mut [f64] {
        match self.tail_entities.as_mut() {
            Some(t) => t,
            None => &mut self.entities,
        }
    }

    pub(crate) fn relation_mut(&mut self, len: usize, r: usize) -> &mut [f64] {
        &mut self.relations[r * len..(r + 1) * len]
    }

    pub fn add_score_grad(&mut self, state: &ModelState, g: &ScoreGrad) {
        let d = state.dim();
        let len = state.config.relation_param_len();
        let Triple {
            head,
            relation,
            tail,
        } = g.triple;
        self.head_mut(d, head)
            .iter_mut()
            .zip(&g.head)
            .for_each(|(a, b)| *a += b);
        self.tail_table_mut()[tail * d..(tail + 1) * d]
            .iter_mut()
            .zip(&g.tail)
            .for_each(|(a, b)| *a += b);
        self.relation_mut(len, relation)
            .iter_mut()
            .zip(&g.relation)
            .for_each(|(a, b)| *a += b);
    }
}

#[cfg(test)]
mod tests;
