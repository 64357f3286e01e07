//! Imbalance degree, identity errors, complexity correlation and the
//! boundedness and identity-law verifiers.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kg_store::{duplicate_relation, relation_stats, Dataset, Triple, IDENTITY_RELATION};
use crate::linalg::{self, DenseMatrix};
use crate::model::{
    effective_matrix, init_state, score, singular_spectrum, ModelConfig, ModelState,
};
use crate::trainer::{fit, TrainConfig, TrainHooks, TrainTrace};

pub const COMPLEXITY_HEADER: &str = "relation,delta_r,delta_rprime,hptr,tphr,complexity";
pub const IDENTITY_TRACE_HEADER: &str = "epoch,delta_identity,error_between_runs";

/// Tolerance for `Σ = I`, `U = V` and identity tests.
pub const CASE_TOLERANCE: f64 = 1e-9;
const SPECTRAL_TOLERANCE: f64 = 1e-9;
const MAX_ORDER: usize = 64;

/// `Σ_i (σ_i/σ_max − 1)²`.
pub fn imbalance_degree(sigma: &[f64]) -> Result<f64> {
    if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(
            "singular values must be finite and nonnegative".into(),
        ));
    }
    let max = linalg::spectral_radius(sigma)?;
    if max <= 0.0 {
        return Err(Error::InvalidArgument(
            "all singular values are zero".into(),
        ));
    }
    Ok(sigma.iter().map(|s| (s / max - 1.0).powi(2)).sum())
}

/// What a relation's effective matrix is compared with.
#[derive(Debug, Clone, Copy)]
pub enum IdentityTarget<'a> {
    Identity,
    Relation(&'a ModelState, usize),
}

/// `‖M_A − M_B‖_F / √n` between effective matrices.
pub fn identity_error(state: &ModelState, r: usize, target: IdentityTarget<'_>) -> Result<f64> {
    let a = effective_matrix(state, r)?;
    let b = match target {
        IdentityTarget::Identity => DenseMatrix::identity(a.rows()),
        IdentityTarget::Relation(other, rb) => effective_matrix(other, rb)?,
    };
    matrix_error(&a, &b)
}

pub fn matrix_error(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let d = a.sub(b)?;
    Ok(linalg::frobenius_norm(&d) / (a.rows() as f64).sqrt())
}

/// Spearman correlation with average ranks for ties; `None` when undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRow {
    pub relation: usize,
    pub name: String,
    pub delta_r: f64,
    /// Δ of the reciprocal relation, when the dataset has reciprocals.
    pub delta_rprime: Option<f64>,
    pub hptr: f64,
    pub tphr: f64,
    pub complexity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
    pub spearman: Option<f64>,
}

impl ComplexityReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{COMPLEXITY_HEADER}\n");
        for r in &self.rows {
            let prime = r.delta_rprime.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{prime},{},{},{}",
                r.name, r.delta_r, r.hptr, r.tphr, r.complexity
            );
        }
        match self.spearman {
            Some(v) => {
                let _ = writeln!(out, "spearman,{v}");
            }
            None => out.push_str("spearman,n/a\n"),
        }
        out
    }
}

/// Δ of every original relation (and its reciprocal) next to its
/// train-split complexity.
pub fn complexity_report(state: &ModelState, dataset: &Dataset) -> Result<ComplexityReport> {
    if state.n_relations() != dataset.vocab.n_relations() {
        return Err(Error::Shape(
            "model and dataset relation counts differ".into(),
        ));
    }
    let originals: Vec<Triple> = dataset
        .train
        .iter()
        .filter(|t| dataset.base_relation(t.relation) == t.relation)
        .copied()
        .collect();
    let stats = relation_stats(&originals, &dataset.vocab);
    let mut rows = Vec::with_capacity(stats.len());
    for s in stats {
        let delta_r = imbalance_degree(&singular_spectrum(state, s.relation)?)?;
        let delta_rprime = match dataset.reciprocal_of(s.relation) {
            Some(rp) => Some(imbalance_degree(&singular_spectrum(state, rp)?)?),
            None => None,
        };
        rows.push(ComplexityRow {
            relation: s.relation,
            name: dataset.vocab.relation_name(s.relation).to_string(),
            delta_r,
            delta_rprime,
            hptr: s.hptr,
            tphr: s.tphr,
            complexity: s.complexity,
        });
    }
    let d: Vec<f64> = rows.iter().map(|r| r.delta_r).collect();
    let c: Vec<f64> = rows.iter().map(|r| r.complexity).collect();
    Ok(ComplexityReport {
        spearman: spearman(&d, &c),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub samples: usize,
    pub worst: f64,
    pub worst_triple: Triple,
}

/// Largest |score| over random triples; errors on any value beyond
/// `1 + 1e-9`.
pub fn verify_bound(state: &ModelState, n_samples: usize, seed: u64) -> Result<BoundReport> {
    let cfg = state.config();
    if !(cfg.entity_constraint && cfg.relation_constraint) {
        return Err(Error::InvalidArgument(
            "the bound holds only with both constraints on".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BoundReport {
        samples: n_samples,
        worst: 0.0,
        worst_triple: Triple::new(0, 0, 0),
    };
    for _ in 0..n_samples {
        let tr = Triple::new(
            rng.random_range(0..state.n_entities()),
            rng.random_range(0..state.n_relations()),
            rng.random_range(0..state.n_entities()),
        );
        let v = score(state, tr.head, tr.relation, tr.tail)?.0;
        if v.abs() > 1.0 + 1e-9 {
            return Err(Error::BoundViolation {
                h: tr.head,
                r: tr.relation,
                t: tr.tail,
                value: v,
            });
        }
        if v.abs() >= report.worst {
            report.worst = v.abs();
            report.worst_triple = tr;
        }
    }
    Ok(report)
}

/// Largest of `‖M e‖`, `‖Mᵀ e‖` over random unit `e` and all relations;
/// errors beyond `1 + 1e-9`.
pub fn verify_necessary_condition(state: &ModelState, n_samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = state.dim();
    let mut worst: f64 = 0.0;
    for r in 0..state.n_relations() {
        let m = effective_matrix(state, r)?;
        for _ in 0..n_samples {
            let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let (e, _) = linalg::normalize(&e)?;
            let v = linalg::norm(&m.matvec(&e)?).max(linalg::norm(&m.tr_matvec(&e)?));
            if v > 1.0 + 1e-9 {
                return Err(Error::NecessaryConditionViolation {
                    relation: r,
                    value: v,
                });
            }
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Which construction produced a witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProofCase {
    /// `Σ = I`: the matrix is orthogonal and moves some basis vector.
    EqualSingularValues,
    /// `U = V`: a symmetric positive semidefinite matrix with unequal σ.
    SharedBases,
    /// A `σ_k = 1` direction with `u_k ≠ v_k`.
    DistinctBases,
    /// `t = Mᵀh / ‖Mᵀh‖`, which Cauchy-Schwarz makes at least as good as `h`.
    CauchySchwarzFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub h: Vec<f64>,
    pub t: Vec<f64>,
    pub case: ProofCase,
    /// `hᵀ M h`
    pub self_score: f64,
    /// `hᵀ M t`
    pub cross_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CounterexampleOutcome {
    IsIdentity,
    Witness(Witness),
}

/// For `m` with unit spectral radius: either `m = I` or unit `h ≠ t` with
/// `hᵀ m h ≤ hᵀ m t`.
pub fn find_counterexample(m: &DenseMatrix) -> Result<CounterexampleOutcome> {
    if !m.is_square() || m.rows() > MAX_ORDER {
        return Err(Error::Shape(format!(
            "need a square matrix of order at most {MAX_ORDER}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let svd = linalg::jacobi_svd(m)?;
    let rho = svd.sigma[0];
    if (rho - 1.0).abs() > SPECTRAL_TOLERANCE {
        return Err(Error::SpectralRadius(rho));
    }
    let eye = DenseMatrix::identity(n);
    if linalg::frobenius_norm(&m.sub(&eye)?) < CASE_TOLERANCE {
        return Ok(CounterexampleOutcome::IsIdentity);
    }

    let all_unit = svd.sigma.iter().all(|s| (s - 1.0).abs() < CASE_TOLERANCE);
    let shared = linalg::frobenius_norm(&svd.u.sub(&svd.v)?) < CASE_TOLERANCE;
    let candidate = if all_unit {
        case_equal(&svd.u.matmul(&svd.v.transpose())?)
    } else if shared {
        case_shared(&svd.u, &svd.sigma)
    } else {
        case_distinct(&svd.u, &svd.v, &svd.sigma)
    };
    let witness = candidate
        .and_then(|(h, t, case)| check_witness(m, h, t, case))
        .or_else(|| cauchy_schwarz(m))
        .ok_or_else(|| {
            Error::Counterexample(
                "no witness separates the matrix from the identity; it is within numerical tolerance of I".into(),
            )
        })?;
    Ok(CounterexampleOutcome::Witness(witness))
}

fn case_equal(p: &DenseMatrix) -> Option<(Vec<f64>, Vec<f64>, ProofCase)> {
    let n = p.rows();
    let mut best = (0, -1.0);
    for k in 0..n {
        let mut moved = p.column(k);
        moved[k] -= 1.0;
        let d = linalg::norm(&moved);
        if d > best.1 {
            best = (k, d);
        }
    }
    let mut t = vec![0.0; n];
    t[best.0] = 1.0;
    Some((p.column(best.0), t, ProofCase::EqualSingularValues))
}

fn case_shared(u: &DenseMatrix, sigma: &[f64]) -> Option<(Vec<f64>, Vec<f64>, ProofCase)> {
    let n = sigma.len();
    let (i, j) = (0, n - 1);
    if sigma[i] - sigma[j] < CASE_TOLERANCE {
        return None;
    }
    // midpoint of the admissible interval (1, σ_i/σ_j)
    let ratio = if sigma[j] > CASE_TOLERANCE {
        (sigma[i] / sigma[j] + 1.0) / 2.0
    } else {
        2.0
    };
    let norm = (1.0 + ratio * ratio).sqrt();
    let (mut hh, mut th) = (vec![0.0; n], vec![0.0; n]);
    hh[i] = 1.0 / norm;
    hh[j] = ratio / norm;
    th[i] = ratio / norm;
    th[j] = 1.0 / norm;
    Some((
        u.matvec(&hh).ok()?,
        u.matvec(&th).ok()?,
        ProofCase::SharedBases,
    ))
}

fn case_distinct(
    u: &DenseMatrix,
    v: &DenseMatrix,
    sigma: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, ProofCase)> {
    (0..sigma.len())
        .filter(|&k| (sigma[k] - 1.0).abs() < CASE_TOLERANCE)
        .map(|k| (u.column(k), v.column(k)))
        .find(|(h, t)| {
            let d: Vec<f64> = h.iter().zip(t).map(|(a, b)| a - b).collect();
            linalg::norm(&d) > 1e-6
        })
        .map(|(h, t)| (h, t, ProofCase::DistinctBases))
}

fn cauchy_schwarz(m: &DenseMatrix) -> Option<Witness> {
    let n = m.rows();
    let mut probes: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..8 {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        probes.push(linalg::normalize(&g).ok()?.0);
    }
    probes.into_iter().find_map(|h| {
        let mth = m.tr_matvec(&h).ok()?;
        let (t, _) = linalg::normalize(&mth).ok()?;
        check_witness(m, h, t, ProofCase::CauchySchwarzFallback)
    })
}

fn check_witness(m: &DenseMatrix, h: Vec<f64>, t: Vec<f64>, case: ProofCase) -> Option<Witness> {
    let mh = m.tr_matvec(&h).ok()?;
    let self_score = linalg::dot(&mh, &h);
    let cross_score = linalg::dot(&mh, &t);
    let gap: Vec<f64> = h.iter().zip(&t).map(|(a, b)| a - b).collect();
    (self_score <= cross_score + 1e-9 && linalg::norm(&gap) > 1e-6).then_some(Witness {
        h,
        t,
        case,
        self_score,
        cross_score,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub matrices: usize,
    pub identities: usize,
    pub witnesses: usize,
    pub by_case: Vec<(ProofCase, usize)>,
}

/// Run [`find_counterexample`] on `n_matrices` random unit-spectral matrices
/// of orders 2 to 6, every tenth replaced by the identity. Each witness is
/// re-checked from scratch; any failure is an error.
pub fn counterexample_suite(n_matrices: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport {
        matrices: n_matrices,
        ..SuiteReport::default()
    };
    for i in 0..n_matrices {
        let n = 2 + i % 5;
        let inject = i % 10 == 9;
        let m = if inject {
            DenseMatrix::identity(n)
        } else {
            random_unit_spectral_matrix(n, &mut rng)
        };
        match (find_counterexample(&m)?, inject) {
            (CounterexampleOutcome::IsIdentity, true) => report.identities += 1,
            (CounterexampleOutcome::IsIdentity, false) => {
                return Err(Error::Counterexample(format!(
                    "matrix {i} misreported as identity"
                )))
            }
            (CounterexampleOutcome::Witness(_), true) => {
                return Err(Error::Counterexample(format!(
                    "identity matrix {i} got a witness"
                )))
            }
            (CounterexampleOutcome::Witness(w), false) => {
                let unit = |v: &[f64]| (linalg::norm(v) - 1.0).abs() < 1e-9;
                let hm = m.tr_matvec(&w.h)?;
                let gap: Vec<f64> = w.h.iter().zip(&w.t).map(|(a, b)| a - b).collect();
                let ok = unit(&w.h)
                    && unit(&w.t)
                    && linalg::dot(&hm, &w.h) <= linalg::dot(&hm, &w.t) + 1e-9
                    && linalg::norm(&gap) > 1e-6;
                if !ok {
                    return Err(Error::Counterexample(format!(
                        "invalid witness for matrix {i}"
                    )));
                }
                report.witnesses += 1;
                match report.by_case.iter_mut().find(|(c, _)| *c == w.case) {
                    Some((_, k)) => *k += 1,
                    None => report.by_case.push((w.case, 1)),
                }
            }
        }
    }
    Ok(report)
}

/// `Q₁ diag(1, s₂, …) Q₂ᵀ` with `s_i` uniform on `(0, 1]`.
pub fn random_unit_spectral_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    let q1 = linalg::random_orthogonal(n, rng);
    let q2 = linalg::random_orthogonal(n, rng);
    let mut s = vec![1.0; n];
    for v in s.iter_mut().skip(1) {
        *v = 1.0 - rng.random::<f64>();
    }
    q1.matmul(&DenseMatrix::from_diagonal(&s))
        .and_then(|a| a.matmul(&q2.transpose()))
        .expect("square factors")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityTraceRow {
    pub epoch: usize,
    pub delta_identity: f64,
    pub error_between_runs: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IdentityRun {
    pub config: ModelConfig,
    pub rows: Vec<IdentityTraceRow>,
    pub train_trace: TrainTrace,
    /// Error of the first identity relation to `I` after the last epoch.
    pub final_error_to_identity: f64,
}

impl IdentityRun {
    pub fn label(&self) -> String {
        let c = &self.config;
        let flag = |b: bool| if b { "on" } else { "off" };
        format!(
            "{}-ec-{}-rc-{}",
            c.kind,
            flag(c.entity_constraint),
            flag(c.relation_constraint)
        )
    }

    pub fn final_row(&self) -> &IdentityTraceRow {
        self.rows.last().expect("epoch 0 is always recorded")
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{IDENTITY_TRACE_HEADER}\n");
        for r in &self.rows {
            let e = r
                .error_between_runs
                .map(|v| v.to_string())
                .unwrap_or_default();
            let _ = writeln!(out, "{},{},{e}", r.epoch, r.delta_identity);
        }
        out
    }
}

/// Train each configuration on `dataset` (which must carry an injected
/// identity relation) and record Δ(identity) every epoch. With two copies a
/// second, independently parameterized identity relation duplicates the same
/// triples and the error between the two matrices is recorded as well.
pub fn run_identity_experiment(
    dataset: &Dataset,
    configs: &[(ModelConfig, TrainConfig)],
    n_identity_copies: usize,
    seed: u64,
) -> Result<Vec<IdentityRun>> {
    let id = dataset
        .identity_relation
        .ok_or_else(|| Error::InvalidArgument("dataset has no identity relation".into()))?;
    if !(1..=2).contains(&n_identity_copies) {
        return Err(Error::InvalidArgument(
            "identity copies must be 1 or 2".into(),
        ));
    }
    let mut ds = dataset.clone();
    let second = if n_identity_copies == 2 {
        Some(duplicate_relation(
            &mut ds,
            id,
            &format!("{IDENTITY_RELATION}2"),
        )?)
    } else {
        None
    };
    let mut runs = Vec::with_capacity(configs.len());
    for (mc, tc) in configs {
        let state = init_state(*mc, ds.vocab.n_entities(), ds.vocab.n_relations(), seed)?;
        let mut rows = Vec::new();
        let hooks = TrainHooks::tracking(vec![id]).with_callback(|epoch, s: &ModelState| {
            let delta_identity = imbalance_degree(&singular_spectrum(s, id)?)?;
            let error_between_runs = match second {
                Some(r2) => Some(identity_error(s, id, IdentityTarget::Relation(s, r2))?),
                None => None,
            };
            rows.push(IdentityTraceRow {
                epoch,
                delta_identity,
                error_between_runs,
            });
            Ok(())
        });
        let (best, train_trace) = fit(state, &ds, tc, hooks)
            .map_err(|e| e.context(format!("identity run {}", mc.kind)))?;
        runs.push(IdentityRun {
            config: *mc,
            rows,
            train_trace,
            final_error_to_identity: identity_error(&best, id, IdentityTarget::Identity)?,
        });
    }
    Ok(runs)
}
