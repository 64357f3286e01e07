//! Full-softmax training with DURA-G regularization and Adam.

use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::imbalance_degree;
use crate::error::{Error, Result};
use crate::evaluator::evaluate;
use crate::kg_store::{build_filter_index, Dataset, Triple};
use crate::linalg;
use crate::model::{
    entity_view, query, query_backward, singular_spectrum, transform_output, CandidateTable,
    Gradients, ModelKind, ModelState, ScoreGrad, Side,
};

pub const TRACE_HEADER: &str = "epoch,loss,valid_mrr,rel_name,spectral_radius,delta";

fn default_gamma() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    100
}
fn default_epochs() -> usize {
    200
}
fn default_eval_every() -> usize {
    5
}
fn default_patience() -> usize {
    10
}
fn default_dura() -> [f64; 4] {
    [1.0; 4]
}
fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub reg_weight: f64,
    #[serde(default = "default_dura")]
    pub dura_weights: [f64; 4],
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            reg_weight: 0.0,
            dura_weights: default_dura(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            eval_every: default_eval_every(),
            patience: default_patience(),
            betas: default_betas(),
            epsilon: default_eps(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults with the DURA weighting used for `kind`.
    pub fn for_model(kind: ModelKind) -> Self {
        Self {
            dura_weights: dura_defaults(kind),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma >= 1.0) || !self.gamma.is_finite() {
            return bad("gamma must be a finite value >= 1");
        }
        if !(self.reg_weight >= 0.0) || !self.reg_weight.is_finite() {
            return bad("reg_weight must be finite and >= 0");
        }
        if self
            .dura_weights
            .iter()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return bad("dura_weights must be finite and >= 0");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.batch_size == 0
            || self.max_epochs == 0
            || self.eval_every == 0
            || self.patience == 0
        {
            return bad("batch_size, max_epochs, eval_every and patience must be positive");
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || !(self.epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// `(λ1, λ2, λ3, λ4)`: CP and ComplEx use `(0.5, 0.5, 1.5, 1.5)`, others all ones.
pub fn dura_defaults(kind: ModelKind) -> [f64; 4] {
    match kind {
        ModelKind::Cp | ModelKind::ComplEx => [0.5, 0.5, 1.5, 1.5],
        _ => [1.0; 4],
    }
}

/// `−log softmax(γ s)[target]` and its gradient w.r.t. `s`.
pub fn cross_entropy_loss(scores: &[f64], target: usize, gamma: f64) -> Result<(f64, Vec<f64>)> {
    if target >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} scores",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    let arg = (0..scores.len()).fold(0, |a, j| if scores[j] > scores[a] { j } else { a });
    let max = scores[arg];
    let mut p: Vec<f64> = scores.iter().map(|s| (gamma * (s - max)).exp()).collect();
    // the max term is exactly 1; ln_1p keeps precision when the rest is tiny
    let rest: f64 = p
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != arg)
        .map(|(_, v)| v)
        .sum();
    let z = 1.0 + rest;
    let loss = rest.ln_1p() - gamma * (scores[target] - max);
    p.iter_mut().for_each(|v| *v = gamma * *v / z);
    p[target] -= gamma;
    Ok((loss, p))
}

/// DURA-G on the forward-pass vectors:
/// `λ1‖φh‖² + λ2‖φt‖² + λ3‖Mᵀφh‖² + λ4‖Mφt‖²`.
pub fn dura_g(
    state: &ModelState,
    h: usize,
    r: usize,
    t: usize,
    weights: [f64; 4],
) -> Result<(f64, ScoreGrad)> {
    let [l1, l2, l3, l4] = weights;
    let n = state.dim();
    let ec = state.config().entity_constraint;
    let mut grad = ScoreGrad {
        triple: Triple::new(h, r, t),
        head: vec![0.0; n],
        tail: vec![0.0; n],
        relation: vec![0.0; state.config().relation_param_len()],
    };
    if t >= state.n_entities() {
        return Err(Error::InvalidArgument(format!("tail {t} out of range")));
    }
    let (head, qc) = query(state, h, r)?;
    let q = transform_output(&qc);
    let tail = entity_view(state.entities().tail(t), ec)?;
    let rel = state.relation(r)?;
    let pc = rel.transform(&tail.phi, Side::Right, state.config().relation_constraint)?;
    let sq = |v: &[f64]| linalg::dot(v, v);
    let value =
        l1 * sq(&head.phi) + l2 * sq(&tail.phi) + l3 * sq(q) + l4 * sq(transform_output(&pc));

    let dq: Vec<f64> = q.iter().map(|v| 2.0 * l3 * v).collect();
    let extra: Vec<f64> = head.phi.iter().map(|v| 2.0 * l1 * v).collect();
    query_backward(
        state,
        r,
        &head,
        &qc,
        &dq,
        Some(&extra),
        &mut grad.head,
        &mut grad.relation,
    )?;
    let dp: Vec<f64> = transform_output(&pc).iter().map(|v| 2.0 * l4 * v).collect();
    let mut d_tail: Vec<f64> = tail.phi.iter().map(|v| 2.0 * l2 * v).collect();
    rel.transform_backward(&pc, &dp, &mut d_tail, &mut grad.relation);
    crate::model::entity_backward(&tail, &d_tail, &mut grad.tail);
    Ok((value, grad))
}

/// First and second moments per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub betas: (f64, f64),
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(state: &ModelState) -> Self {
        Self::with_hyper(state, default_betas(), default_eps())
    }

    pub fn with_hyper(state: &ModelState, betas: (f64, f64), epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = state
            .param_groups()
            .into_iter()
            .map(|(_, g)| vec![0.0; g.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            betas,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update followed by invariant repair.
pub fn adam_step(
    adam: &mut AdamState,
    state: &mut ModelState,
    grads: &Gradients,
    lr: f64,
) -> Result<()> {
    let groups = grads.groups();
    if groups.len() != adam.m.len() {
        return Err(Error::Shape(
            "gradient groups do not match optimizer state".into(),
        ));
    }
    for ((name, g), m) in groups.iter().zip(&adam.m) {
        if g.len() != m.len() {
            return Err(Error::Shape(format!(
                "gradient group '{name}' has the wrong length"
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { group: name });
        }
    }
    adam.step += 1;
    let (b1, b2) = adam.betas;
    let c1 = 1.0 - b1.powi(adam.step as i32);
    let c2 = 1.0 - b2.powi(adam.step as i32);
    let eps = adam.epsilon;
    for (gi, (_, params)) in state.param_groups_mut().into_iter().enumerate() {
        let g = groups[gi].1;
        let (m, v) = (&mut adam.m[gi], &mut adam.v[gi]);
        for i in 0..params.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    state.repair(adam.step);
    Ok(())
}

/// Mean over `batch` of `CE(γ·scores) + λ·DURA-G`, accumulating the
/// gradient of that mean into `grads`. Returns `(mean CE, mean λ·DURA-G)`.
pub fn batch_objective(
    state: &ModelState,
    batch: &[Triple],
    cfg: &TrainConfig,
    grads: &mut Gradients,
) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = state.dim();
    let ne = state.n_entities();
    let rel_len = state.config().relation_param_len();
    let rc = state.config().relation_constraint;
    let candidates = CandidateTable::build(state)?;
    let mut d_cand = vec![0.0; ne * n];
    let inv_b = 1.0 / batch.len() as f64;
    let c_reg = cfg.reg_weight * inv_b;
    let [l1, l2, l3, l4] = cfg.dura_weights;
    let (mut loss_sum, mut reg_sum) = (0.0, 0.0);

    for tr in batch {
        let &Triple {
            head: h,
            relation: r,
            tail: t,
        } = tr;
        if h >= ne || t >= ne {
            return Err(Error::InvalidArgument(format!("triple {tr} out of range")));
        }
        let (head, qc) = query(state, h, r)?;
        let q = transform_output(&qc);
        let scores = candidates.scores(q);
        let (loss, g) = cross_entropy_loss(&scores, t, cfg.gamma)?;
        loss_sum += loss;

        let mut dq = vec![0.0; n];
        for (j, &gj) in g.iter().enumerate() {
            let w = gj * inv_b;
            if w == 0.0 {
                continue;
            }
            let row = candidates.row(j);
            let drow = &mut d_cand[j * n..(j + 1) * n];
            for i in 0..n {
                dq[i] += w * row[i];
                drow[i] += w * q[i];
            }
        }

        let mut extra = None;
        let d_rel = &mut grads.relations[r * rel_len..(r + 1) * rel_len];
        if cfg.reg_weight > 0.0 {
            let rel = state.relation(r)?;
            let phi_t = candidates.row(t);
            let pc = rel.transform(phi_t, Side::Right, rc)?;
            let sq = |v: &[f64]| linalg::dot(v, v);
            reg_sum +=
                l1 * sq(&head.phi) + l2 * sq(phi_t) + l3 * sq(q) + l4 * sq(transform_output(&pc));
            for i in 0..n {
                dq[i] += c_reg * 2.0 * l3 * q[i];
            }
            extra = Some(
                head.phi
                    .iter()
                    .map(|v| c_reg * 2.0 * l1 * v)
                    .collect::<Vec<_>>(),
            );
            let dp: Vec<f64> = transform_output(&pc)
                .iter()
                .map(|v| c_reg * 2.0 * l4 * v)
                .collect();
            let drow = &mut d_cand[t * n..(t + 1) * n];
            for i in 0..n {
                drow[i] += c_reg * 2.0 * l2 * phi_t[i];
            }
            rel.transform_backward(&pc, &dp, drow, d_rel);
        }
        query_backward(
            state,
            r,
            &head,
            &qc,
            &dq,
            extra.as_deref(),
            &mut grads.entities[h * n..(h + 1) * n],
            d_rel,
        )?;
    }
    candidates.backward_into(&d_cand, grads.tail_table_mut());
    Ok((loss_sum * inv_b, cfg.reg_weight * reg_sum * inv_b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedRelation {
    pub relation: usize,
    pub name: String,
    pub spectral_radius: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over training triples (cross-entropy plus λ·DURA-G).
    pub loss: f64,
    /// Mean λ·DURA-G part of `loss`.
    pub reg: f64,
    pub valid_mrr: Option<f64>,
    pub relations: Vec<TrackedRelation>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_valid_mrr: Option<f64>,
    pub stopped_early: bool,
}

impl TrainTrace {
    /// One row per epoch and tracked relation.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for rec in &self.records {
            if rec.relations.is_empty() {
                let _ = writeln!(out, "{},{},{},,,", rec.epoch, rec.loss, opt(rec.valid_mrr));
            }
            for t in &rec.relations {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    rec.epoch,
                    rec.loss,
                    opt(rec.valid_mrr),
                    t.name,
                    t.spectral_radius,
                    t.delta
                );
            }
        }
        out
    }
}

type EpochCallback<'a> = Box<dyn FnMut(usize, &ModelState) -> Result<()> + 'a>;

/// Relations to track per epoch and an optional callback, invoked with
/// epoch 0 before training and after every completed epoch.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub tracked: Vec<usize>,
    pub on_epoch: Option<EpochCallback<'a>>,
}

impl<'a> TrainHooks<'a> {
    pub fn tracking(relations: Vec<usize>) -> Self {
        Self {
            tracked: relations,
            on_epoch: None,
        }
    }

    pub fn with_callback(mut self, f: impl FnMut(usize, &ModelState) -> Result<()> + 'a) -> Self {
        self.on_epoch = Some(Box::new(f));
        self
    }
}

fn tracked_relations(
    state: &ModelState,
    dataset: &Dataset,
    tracked: &[usize],
) -> Result<Vec<TrackedRelation>> {
    tracked
        .iter()
        .map(|&r| {
            let s = singular_spectrum(state, r)?;
            Ok(TrackedRelation {
                relation: r,
                name: dataset.vocab.relation_name(r).to_string(),
                spectral_radius: s[0],
                delta: imbalance_degree(&s)?,
            })
        })
        .collect()
}

/// Train on the reciprocal-augmented `dataset`; returns the state with the
/// best validation MRR and the per-epoch trace. With an empty valid split
/// every epoch runs and the final state is returned.
pub fn fit(
    mut state: ModelState,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut hooks: TrainHooks<'_>,
) -> Result<(ModelState, TrainTrace)> {
    cfg.validate()?;
    if !dataset.reciprocal_applied {
        return Err(Error::InvalidArgument(
            "training needs a reciprocal-augmented dataset".into(),
        ));
    }
    if dataset.train.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs a non-empty train split".into(),
        ));
    }
    if dataset.vocab.n_entities() != state.n_entities()
        || dataset.vocab.n_relations() != state.n_relations()
    {
        return Err(Error::Shape("model and dataset sizes differ".into()));
    }
    for &r in &hooks.tracked {
        if r >= state.n_relations() {
            return Err(Error::InvalidArgument(format!(
                "tracked relation {r} out of range"
            )));
        }
    }
    let filter = build_filter_index(dataset);
    let mut adam = AdamState::with_hyper(&state, cfg.betas, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut grads = Gradients::zeros_like(&state);
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, ModelState)> = None;
    let mut bad_evals = 0;
    let start = Instant::now();

    if let Some(cb) = hooks.on_epoch.as_mut() {
        cb(0, &state)?;
    }
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut reg_sum) = (0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Triple> = chunk.iter().map(|&i| dataset.train[i]).collect();
            grads.clear();
            let ctx = |e: Error| e.context(format!("epoch {epoch}, batch {b}"));
            let (loss, reg) = batch_objective(&state, &batch, cfg, &mut grads).map_err(ctx)?;
            adam_step(&mut adam, &mut state, &grads, cfg.learning_rate).map_err(ctx)?;
            loss_sum += (loss + reg) * batch.len() as f64;
            reg_sum += reg * batch.len() as f64;
        }
        let n_train = dataset.train.len() as f64;
        let evaluate_now =
            !dataset.valid.is_empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs);
        let valid_mrr = if evaluate_now {
            Some(
                evaluate(&state, &dataset.valid, &filter)
                    .map_err(|e| e.context(format!("validation after epoch {epoch}")))?
                    .mrr,
            )
        } else {
            None
        };
        let relations = tracked_relations(&state, dataset, &hooks.tracked)?;
        trace.records.push(EpochRecord {
            epoch,
            loss: loss_sum / n_train,
            reg: reg_sum / n_train,
            valid_mrr,
            relations,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        debug!("epoch {epoch}: loss {:.6}", loss_sum / n_train);
        if let Some(cb) = hooks.on_epoch.as_mut() {
            cb(epoch, &state)?;
        }
        if let Some(mrr) = valid_mrr {
            info!("epoch {epoch}: valid MRR {mrr:.4}");
            if best.as_ref().is_none_or(|(b, _)| mrr > *b) {
                best = Some((mrr, state.clone()));
                trace.best_epoch = Some(epoch);
                trace.best_valid_mrr = Some(mrr);
                bad_evals = 0;
            } else {
                bad_evals += 1;
                if bad_evals >= cfg.patience {
                    trace.stopped_early = epoch < cfg.max_epochs;
                    break;
                }
            }
        }
    }
    Ok((best.map_or(state, |(_, s)| s), trace))
}
