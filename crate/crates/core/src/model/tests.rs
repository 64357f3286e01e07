use super::*;
use proptest::prelude::*;
use rand::Rng;

fn unibi_state(n: usize, params: &[f64], entities: &[&[f64]]) -> ModelState {
    let cfg = ModelConfig::new(ModelKind::UniBiO2, n).unwrap();
    let mut s = init_state(cfg, entities.len(), 1, 0).unwrap();
    s.relation_params_mut(0).copy_from_slice(params);
    for (e, v) in entities.iter().enumerate() {
        s.head_entity_mut(e).copy_from_slice(v);
    }
    s
}

fn identity_unibi(n: usize, entities: &[&[f64]]) -> ModelState {
    let mut p = vec![0.0; 3 * n];
    for b in 0..n {
        if b % 2 == 0 {
            p[b] = 1.0;
            p[n + b] = 1.0;
        }
    }
    p[2 * n..].iter_mut().for_each(|v| *v = 1.0);
    unibi_state(n, &p, entities)
}

fn dense_score(state: &ModelState, h: usize, r: usize, t: usize) -> f64 {
    let m = effective_matrix(state, r).unwrap();
    let ec = state.config().entity_constraint;
    let hv = entity_view(state.entities().head(h), ec).unwrap().phi;
    let tv = entity_view(state.entities().tail(t), ec).unwrap().phi;
    linalg::dot(&hv, &m.matvec(&tv).unwrap())
}

fn random_state(kind: ModelKind, n: usize, ec: bool, rc: bool, seed: u64) -> ModelState {
    let cfg = ModelConfig::new(kind, n).unwrap().with_constraints(ec, rc);
    init_state(cfg, 4, 2, seed).unwrap()
}

#[test]
fn init_is_deterministic() {
    let cfg = ModelConfig::new(ModelKind::UniBiO3, 8).unwrap();
    let a = init_state(cfg, 5, 3, 42).unwrap();
    let b = init_state(cfg, 5, 3, 42).unwrap();
    assert_eq!(a.entities(), b.entities());
    assert_eq!(a.relation_table(), b.relation_table());
    let c = init_state(cfg, 5, 3, 43).unwrap();
    assert_ne!(a.relation_table(), c.relation_table());
}

#[test]
fn o2_has_three_blocks_per_side() {
    let cfg = ModelConfig::new(ModelKind::UniBiO2, 6).unwrap();
    let s = init_state(cfg, 2, 1, 1).unwrap();
    let RelationView::UniBi(r) = s.relation(0).unwrap() else {
        panic!()
    };
    assert_eq!(r.head_rotation().unwrap().len(), 3);
    assert_eq!(r.tail_rotation().unwrap().len(), 3);
    assert!(r.xi().iter().all(|x| x.abs() >= 1e-3 && x.abs() <= 1.0));
}

#[test]
fn o3_rejects_dimension_six() {
    assert!(ModelConfig::new(ModelKind::UniBiO3, 6).is_err());
    assert!(ModelConfig::new(ModelKind::ComplEx, 5).is_err());
    assert!(ModelConfig::new(ModelKind::Cp, 0).is_err());
}

#[test]
fn kind_names_round_trip() {
    for k in ModelKind::ALL {
        assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
    }
    assert!("transe".parse::<ModelKind>().is_err());
}

#[test]
fn identity_self_score_is_one() {
    let h = [0.6, 0.8];
    let s = identity_unibi(2, &[&h, &[-0.8, 0.6]]);
    assert!((score(&s, 0, 0, 0).unwrap().0 - 1.0).abs() < 1e-12);
    assert!(score(&s, 0, 0, 1).unwrap().0.abs() < 1e-12);
}

#[test]
fn rotated_example_score() {
    let s = unibi_state(
        2,
        &[0.0, 1.0, 1.0, 0.0, 1.0, 0.5],
        &[&[1.0, 0.0], &[0.0, 1.0]],
    );
    let (v, _) = score(&s, 0, 0, 1).unwrap();
    assert!((v + 0.5).abs() < 1e-12);
    let m = effective_matrix(&s, 0).unwrap();
    let expect = [0.0, -0.5, 1.0, 0.0];
    for (a, b) in m.data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
    // explicit product R_h Ξ R_t
    let rh = DenseMatrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).unwrap();
    let xi = DenseMatrix::from_diagonal(&[1.0, 0.5]);
    let oracle = rh
        .matmul(&xi)
        .unwrap()
        .matmul(&DenseMatrix::identity(2))
        .unwrap();
    assert!(m
        .sub(&oracle)
        .unwrap()
        .data()
        .iter()
        .all(|v| v.abs() < 1e-12));
}

#[test]
fn degenerate_entity_is_an_error() {
    let s = identity_unibi(2, &[&[0.0, 0.0], &[1.0, 0.0]]);
    assert!(matches!(
        score(&s, 0, 0, 1),
        Err(Error::DegenerateVector { .. })
    ));
    assert!(score(&s, 5, 0, 1).is_err());
}

#[test]
fn identity_effective_matrix() {
    let s = identity_unibi(4, &[&[1.0, 0.0, 0.0, 0.0]]);
    let m = effective_matrix(&s, 0).unwrap();
    assert!(m
        .sub(&DenseMatrix::identity(4))
        .unwrap()
        .data()
        .iter()
        .all(|v| v.abs() < 1e-15));
}

#[test]
fn score_all_tails_identity() {
    let s = identity_unibi(2, &[&[1.0, 0.0], &[1.0, 1.0], &[0.0, -2.0]]);
    let all = score_all_tails(&s, 0, 0).unwrap();
    assert!((all[0] - 1.0).abs() < 1e-12);
    assert!((all[1] - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(all[2].abs() < 1e-12);
    let single = identity_unibi(2, &[&[3.0, 4.0]]);
    assert_eq!(score_all_tails(&single, 0, 0).unwrap().len(), 1);
}

#[test]
fn score_all_tails_matches_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let kind = ModelKind::ALL[case % 5];
        let n = if kind == ModelKind::UniBiO3 { 8 } else { 6 };
        let cfg = ModelConfig::new(kind, n).unwrap();
        let s = init_state(cfg, 9, 3, rng.random()).unwrap();
        let h = rng.random_range(0..9);
        let r = rng.random_range(0..3);
        let all = score_all_tails(&s, h, r).unwrap();
        for (t, v) in all.iter().enumerate() {
            assert!((v - score(&s, h, r, t).unwrap().0).abs() < 1e-12);
        }
    }
}

#[test]
fn blocked_score_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let kind = ModelKind::ALL[case % 5];
        let rc = case % 3 != 0;
        let s = random_state(kind, 8, case % 2 == 0, rc, rng.random());
        let (h, r, t) = (
            rng.random_range(0..4),
            rng.random_range(0..2),
            rng.random_range(0..4),
        );
        let fast = score(&s, h, r, t).unwrap().0;
        assert!(
            (fast - dense_score(&s, h, r, t)).abs() < 1e-12,
            "{kind} case {case}"
        );
    }
}

#[test]
fn spectrum_examples() {
    let mut p = vec![0.0; 12];
    p[0] = 1.0;
    p[2] = 1.0;
    p[4] = 1.0;
    p[6] = 1.0;
    p[8..].copy_from_slice(&[1.0, -1.0, 0.5, 0.5]);
    let s = unibi_state(4, &p, &[&[1.0, 0.0, 0.0, 0.0]]);
    assert_eq!(singular_spectrum(&s, 0).unwrap(), vec![1.0, 1.0, 0.5, 0.5]);

    let cfg = ModelConfig::new(ModelKind::ComplEx, 2).unwrap();
    let mut c = init_state(cfg, 2, 1, 0).unwrap();
    c.relation_params_mut(0).copy_from_slice(&[0.6, 0.8]);
    let sv = singular_spectrum(&c, 0).unwrap();
    assert!(sv.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert_eq!(sv.len(), 2);
}

#[test]
fn spectrum_matches_svd_of_effective_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..60 {
        let kind = ModelKind::ALL[case % 5];
        let s = random_state(kind, 8, true, case % 2 == 0, rng.random());
        for r in 0..2 {
            let fast = singular_spectrum(&s, r).unwrap();
            let slow = linalg::jacobi_svd(&effective_matrix(&s, r).unwrap())
                .unwrap()
                .sigma;
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "{kind}: {fast:?} vs {slow:?}");
            }
            assert!(fast.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}

fn perturbed(state: &ModelState, which: u8, idx: usize, coord: usize, delta: f64) -> ModelState {
    let mut s = state.clone();
    match which {
        0 => s.head_entity_mut(idx)[coord] += delta,
        1 => s.tail_entity_mut(idx)[coord] += delta,
        _ => s.relation_params_mut(idx)[coord] += delta,
    }
    s
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / 1f64.max(a.abs()).max(f.abs())
}

/// Largest relative error between analytic and central-difference gradients.
fn fd_error(state: &ModelState, h: usize, r: usize, t: usize, upstream: f64) -> f64 {
    let (_, tape) = score(state, h, r, t).unwrap();
    let g = score_backward(state, &tape, upstream).unwrap();
    let step = 1e-6;
    let f = |s: &ModelState| upstream * score(s, h, r, t).unwrap().0;
    let fd = |which, idx, coord| {
        (f(&perturbed(state, which, idx, coord, step))
            - f(&perturbed(state, which, idx, coord, -step)))
            / (2.0 * step)
    };
    let shared = !state.config().has_tail_table() && h == t;
    let mut worst: f64 = 0.0;
    for c in 0..state.dim() {
        if shared {
            worst = worst.max(rel_err(g.head[c] + g.tail[c], fd(0, h, c)));
        } else {
            worst = worst.max(rel_err(g.head[c], fd(0, h, c)));
            worst = worst.max(rel_err(g.tail[c], fd(1, t, c)));
        }
    }
    for c in 0..g.relation.len() {
        worst = worst.max(rel_err(g.relation[c], fd(2, r, c)));
    }
    worst
}

fn top_gap(spectrum: &[f64]) -> f64 {
    if spectrum.len() < 2 {
        return f64::INFINITY;
    }
    spectrum[0] - spectrum[1]
}

#[test]
fn unibi_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 200 {
        let n = [2, 4, 8][checked % 3];
        let kind = if n >= 4 && checked % 2 == 1 {
            ModelKind::UniBiO3
        } else {
            ModelKind::UniBiO2
        };
        let mut s = random_state(kind, n, true, true, rng.random());
        // off-unit raw norms so the normalization Jacobians matter
        for e in 0..4 {
            let c: f64 = rng.random_range(0.5..2.0);
            s.head_entity_mut(e).iter_mut().for_each(|v| *v *= c);
        }
        let RelationView::UniBi(rel) = s.relation(0).unwrap() else {
            unreachable!()
        };
        let mut mags: Vec<f64> = rel.xi().iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        if top_gap(&mags) < 1e-4 {
            continue;
        }
        let (h, t) = (rng.random_range(0..4), rng.random_range(0..4));
        let err = fd_error(&s, h, 0, t, rng.random_range(-2.0..2.0));
        assert!(err < 1e-5, "{kind} n={n}: relative error {err}");
        checked += 1;
    }
}

#[test]
fn baseline_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for kind in [ModelKind::Cp, ModelKind::ComplEx, ModelKind::Rescal] {
        let mut checked = 0;
        while checked < 200 {
            let (ec, rc) = match checked % 4 {
                0 => (false, false),
                1 => (true, false),
                2 => (false, true),
                _ => (true, true),
            };
            let n = [2, 4, 6][checked % 3];
            let s = random_state(kind, n, ec, rc, rng.random());
            if rc
                && top_gap(&singular_spectrum(&s.clone_with(false), 0).unwrap()) < 1e-4
                && kind != ModelKind::ComplEx
            {
                continue;
            }
            if rc && kind == ModelKind::ComplEx {
                let RelationView::ComplEx(c) = s.relation(0).unwrap() else {
                    unreachable!()
                };
                let mut m = c.moduli();
                m.sort_by(|a, b| b.total_cmp(a));
                if top_gap(&m) < 1e-4 {
                    continue;
                }
            }
            let (h, t) = (rng.random_range(0..4), rng.random_range(0..4));
            let err = fd_error(&s, h, 0, t, 1.0);
            assert!(err < 1e-5, "{kind} ec={ec} rc={rc}: relative error {err}");
            checked += 1;
        }
    }
}

impl ModelState {
    fn clone_with(&self, rc: bool) -> ModelState {
        let mut s = self.clone();
        s.set_constraints(self.config().entity_constraint, rc);
        s
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    for kind in ModelKind::ALL {
        let s = random_state(kind, 4, true, true, 5);
        let (_, tape) = score(&s, 0, 1, 2).unwrap();
        assert!(score_backward(&s, &tape, 0.0).unwrap().is_zero());
    }
}

#[test]
fn radial_gradient_vanishes_under_entity_constraint() {
    let s = random_state(ModelKind::UniBiO2, 6, true, true, 9);
    let (_, tape) = score(&s, 1, 0, 2).unwrap();
    let g = score_backward(&s, &tape, 1.0).unwrap();
    assert!(linalg::dot(&g.head, s.entities().head(1)).abs() < 1e-12);
    assert!(linalg::dot(&g.tail, s.entities().tail(2)).abs() < 1e-12);
}

#[test]
fn stale_tape_is_rejected() {
    let mut s = random_state(ModelKind::UniBiO2, 4, true, true, 1);
    let (_, tape) = score(&s, 0, 0, 1).unwrap();
    s.head_entity_mut(3)[0] += 0.1;
    assert!(matches!(
        score_backward(&s, &tape, 1.0),
        Err(Error::StaleTape { .. })
    ));
}

#[test]
fn tape_records_xi_argmax() {
    let mut p = vec![1.0, 0.0, 1.0, 0.0, 0.3, -0.9];
    let s = unibi_state(2, &p, &[&[1.0, 0.0], &[0.0, 1.0]]);
    assert_eq!(score(&s, 0, 0, 1).unwrap().1.xi_argmax(), Some(1));
    p[4] = 0.9;
    let tie = unibi_state(2, &p, &[&[1.0, 0.0], &[0.0, 1.0]]);
    assert_eq!(score(&tie, 0, 0, 1).unwrap().1.xi_argmax(), Some(0));
}

#[test]
fn bounded_under_both_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..10_000 {
        let n = [4, 8, 16][case % 3];
        let kind = if case % 2 == 0 {
            ModelKind::UniBiO2
        } else {
            ModelKind::UniBiO3
        };
        let s = random_state(kind, n, true, true, rng.random());
        let v = score(
            &s,
            rng.random_range(0..4),
            rng.random_range(0..2),
            rng.random_range(0..4),
        )
        .unwrap()
        .0;
        assert!(v.abs() <= 1.0 + 1e-9);
    }
}

#[test]
fn necessary_condition_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let kind = if case % 2 == 0 {
            ModelKind::UniBiO2
        } else {
            ModelKind::UniBiO3
        };
        let s = random_state(kind, 8, true, true, rng.random());
        let m = effective_matrix(&s, 0).unwrap();
        let e: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let (e, _) = linalg::normalize(&e).unwrap();
        assert!(linalg::norm(&m.matvec(&e).unwrap()) <= 1.0 + 1e-9);
        assert!(linalg::norm(&m.tr_matvec(&e).unwrap()) <= 1.0 + 1e-9);
    }
}

#[test]
fn constrained_score_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let s = random_state(ModelKind::UniBiO3, 8, true, true, rng.random());
        let before = score(&s, 0, 1, 2).unwrap().0;
        let c: f64 = rng.random_range(0.1..10.0);
        let mut ent = s.clone();
        ent.head_entity_mut(0).iter_mut().for_each(|v| *v *= c);
        assert!((score(&ent, 0, 1, 2).unwrap().0 - before).abs() < 1e-12);
        let mut xi = s.clone();
        xi.relation_params_mut(1)[16..]
            .iter_mut()
            .for_each(|v| *v *= c);
        assert!((score(&xi, 0, 1, 2).unwrap().0 - before).abs() < 1e-12);
    }
}

#[test]
fn unconstrained_scaling_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = random_state(ModelKind::UniBiO2, 6, false, false, 4);
    let (ke, kr): (f64, f64) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
    let mut scaled = s.clone();
    for (name, g) in scaled.param_groups_mut() {
        if name == "entities" {
            g.iter_mut().for_each(|v| *v *= ke);
        }
    }
    for r in 0..2 {
        scaled.relation_params_mut(r)[12..]
            .iter_mut()
            .for_each(|v| *v *= kr);
    }
    for h in 0..4 {
        let a = score_all_tails(&s, h, 1).unwrap();
        let b = score_all_tails(&scaled, h, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - ke * ke * kr * x).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn identity_relation_prefers_self() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut ents: Vec<Vec<f64>> = Vec::new();
    for _ in 0..20 {
        ents.push((0..4).map(|_| rng.sample(StandardNormal)).collect());
    }
    let refs: Vec<&[f64]> = ents.iter().map(|v| v.as_slice()).collect();
    let s = identity_unibi(4, &refs);
    for h in 0..20 {
        let all = score_all_tails(&s, h, 0).unwrap();
        for (t, v) in all.iter().enumerate() {
            if t != h {
                assert!(all[h] > *v);
            }
        }
    }
}

#[test]
fn baseline_examples() {
    let cp = ModelConfig::new(ModelKind::Cp, 3).unwrap();
    let mut s = init_state(cp, 2, 1, 0).unwrap();
    s.relation_params_mut(0).copy_from_slice(&[1.0, 1.0, 1.0]);
    s.head_entity_mut(0).copy_from_slice(&[1.0, 2.0, 2.0]);
    s.tail_entity_mut(1).copy_from_slice(&[1.0, 2.0, 2.0]);
    assert!((baseline_score(&s, 0, 0, 1).unwrap().0 - 9.0).abs() < 1e-12);

    let rescal = ModelConfig::new(ModelKind::Rescal, 2).unwrap();
    let mut s = init_state(rescal, 2, 1, 0).unwrap();
    s.relation_params_mut(0)
        .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    s.head_entity_mut(0).copy_from_slice(&[0.6, 0.8]);
    let (v, tape) = baseline_score(&s, 0, 0, 0).unwrap();
    assert!((v - 1.0).abs() < 1e-12);
    s.head_entity_mut(1).copy_from_slice(&[0.0, 1.0]);
    let (_, tape2) = baseline_score(&s, 0, 0, 1).unwrap();
    let g = baseline_backward(&s, &tape2, 1.0).unwrap();
    let outer = [0.0, 0.6, 0.0, 0.8];
    for (a, b) in g.relation.iter().zip(outer) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(baseline_backward(&s, &tape, 1.0).is_err());

    let complex = ModelConfig::new(ModelKind::ComplEx, 2).unwrap();
    let mut s = init_state(complex, 2, 1, 0).unwrap();
    s.relation_params_mut(0).copy_from_slice(&[0.6, 0.8]);
    s.head_entity_mut(0).copy_from_slice(&[1.0, 0.0]);
    s.head_entity_mut(1).copy_from_slice(&[0.0, 1.0]);
    assert!((baseline_score(&s, 0, 0, 1).unwrap().0 - 0.8).abs() < 1e-12);

    let unibi = random_state(ModelKind::UniBiO2, 4, true, true, 0);
    assert!(baseline_score(&unibi, 0, 0, 1).is_err());
}

#[test]
fn complex_matches_complex_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let s = random_state(ModelKind::ComplEx, 6, false, false, rng.random());
        let h = s.entities().head(0);
        let t = s.entities().head(1);
        let r = s.relation_params(0);
        let mut expect = 0.0;
        for j in 0..3 {
            let (hr, hi) = (h[2 * j], h[2 * j + 1]);
            let (rr, ri) = (r[2 * j], r[2 * j + 1]);
            let (tr, ti) = (t[2 * j], -t[2 * j + 1]);
            let (pr, pi) = (hr * rr - hi * ri, hr * ri + hi * rr);
            expect += pr * tr - pi * ti;
        }
        assert!((score(&s, 0, 0, 1).unwrap().0 - expect).abs() < 1e-12);
    }
}

#[test]
fn complex_commutes_with_block_rotation() {
    let s = random_state(ModelKind::ComplEx, 6, false, false, 13);
    let m = effective_matrix(&s, 0).unwrap();
    let mut j = DenseMatrix::zeros(6, 6);
    for b in 0..3 {
        j.set(2 * b, 2 * b + 1, -1.0);
        j.set(2 * b + 1, 2 * b, 1.0);
    }
    let d = m.matmul(&j).unwrap().sub(&j.matmul(&m).unwrap()).unwrap();
    assert!(d.data().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn rescal_scaled_identity_degeneracy() {
    let cfg = ModelConfig::new(ModelKind::Rescal, 3).unwrap();
    let mut s = init_state(cfg, 2, 1, 0).unwrap();
    let k = 2.5;
    s.relation_params_mut(0)
        .copy_from_slice(&[k, 0.0, 0.0, 0.0, k, 0.0, 0.0, 0.0, k]);
    let h = s.entities().head(0).to_vec();
    let t = s.entities().head(1).to_vec();
    let cos = linalg::dot(&h, &t) / (linalg::norm(&h) * linalg::norm(&t));
    let expect = k * cos * linalg::norm(&h) * linalg::norm(&t);
    assert!((score(&s, 0, 0, 1).unwrap().0 - expect).abs() < 1e-12);
}

#[test]
fn repair_restores_invariants() {
    let mut s = random_state(ModelKind::UniBiO2, 4, true, true, 3);
    s.head_entity_mut(2).iter_mut().for_each(|v| *v = 0.0);
    s.relation_params_mut(1)[0..2].copy_from_slice(&[0.0, 0.0]);
    s.relation_params_mut(1)[9] = 0.0;
    s.repair(7);
    assert!(linalg::norm(s.entities().head(2)) > 1e-3);
    assert_eq!(&s.relation_params(1)[0..2], &[1.0, 0.0]);
    assert!(s.relation_params(1)[9].abs() > 0.0);
}

#[test]
fn from_parts_round_trips() {
    for kind in ModelKind::ALL {
        let s = random_state(kind, 4, true, false, 17);
        let groups: Vec<Vec<f64>> = s
            .param_groups()
            .into_iter()
            .map(|(_, g)| g.to_vec())
            .collect();
        let back = ModelState::from_parts(*s.config(), 4, 2, 17, groups).unwrap();
        assert_eq!(back.entities(), s.entities());
        assert_eq!(back.relation_table(), s.relation_table());
        assert!(ModelState::from_parts(*s.config(), 5, 2, 17, vec![]).is_err());
    }
}

proptest! {
    #[test]
    fn effective_matrix_reproduces_score(seed in any::<u64>(), k in 0usize..5, ec in any::<bool>(), rc in any::<bool>()) {
        let kind = ModelKind::ALL[k];
        let s = random_state(kind, 4, ec, rc, seed);
        for h in 0..4 {
            for t in 0..4 {
                let fast = score(&s, h, 1, t).unwrap().0;
                prop_assert!((fast - dense_score(&s, h, 1, t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_effective_matches_dense(seed in any::<u64>(), k in 0usize..5) {
        let s = random_state(ModelKind::ALL[k], 4, true, true, seed);
        let m = effective_matrix(&s, 0).unwrap();
        let x = s.entities().head(0);
        let a = apply_effective(&s, 0, x, false).unwrap();
        let b = apply_effective(&s, 0, x, true).unwrap();
        for (u, v) in a.iter().zip(m.matvec(x).unwrap()) { prop_assert!((u - v).abs() < 1e-12); }
        for (u, v) in b.iter().zip(m.tr_matvec(x).unwrap()) { prop_assert!((u - v).abs() < 1e-12); }
    }
}
