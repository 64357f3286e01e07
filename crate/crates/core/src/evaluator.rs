//! Filtered tail-prediction ranking: MRR and Hits@k.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg_store::{FilterIndex, Triple, Vocab};
use crate::model::{score_all_tails_with, CandidateTable, ModelState};

pub const HITS_AT: [usize; 3] = [1, 3, 10];
pub const EVAL_HEADER: &str = "split,mrr,hits1,hits3,hits10,n_queries";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mrr: f64,
    pub hits_at: BTreeMap<usize, f64>,
    pub per_query_ranks: Vec<(Triple, f64)>,
    pub n_queries: usize,
}

impl EvalResult {
    pub fn from_ranks(per_query_ranks: Vec<(Triple, f64)>) -> Result<Self> {
        let n = per_query_ranks.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "cannot evaluate an empty split".into(),
            ));
        }
        let mrr = per_query_ranks.iter().map(|(_, r)| 1.0 / r).sum::<f64>() / n as f64;
        let hits_at = HITS_AT
            .iter()
            .map(|&k| {
                let hit = per_query_ranks
                    .iter()
                    .filter(|(_, r)| *r <= k as f64)
                    .count();
                (k, hit as f64 / n as f64)
            })
            .collect();
        Ok(Self {
            mrr,
            hits_at,
            per_query_ranks,
            n_queries: n,
        })
    }

    pub fn hits(&self, k: usize) -> f64 {
        self.hits_at.get(&k).copied().unwrap_or(f64::NAN)
    }

    /// One CSV row matching [`EVAL_HEADER`].
    pub fn csv_row(&self, split: &str) -> String {
        format!(
            "{split},{},{},{},{},{}",
            self.mrr,
            self.hits(1),
            self.hits(3),
            self.hits(10),
            self.n_queries
        )
    }

    /// `head,relation,tail,rank` per query.
    pub fn rank_dump(&self, vocab: &Vocab) -> String {
        let mut out = String::from("head,relation,tail,rank\n");
        for (t, r) in &self.per_query_ranks {
            let _ = writeln!(
                out,
                "{},{},{},{r}",
                vocab.entity_name(t.head),
                vocab.relation_name(t.relation),
                vocab.entity_name(t.tail)
            );
        }
        out
    }
}

/// Mid-rank of `target` among the candidates not in `filtered_out`.
pub fn rank_of(scores: &[f64], target: usize, filtered_out: &[usize]) -> Result<f64> {
    if target >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} scores",
            scores.len()
        )));
    }
    if filtered_out.contains(&target) {
        return Err(Error::InvalidArgument(format!(
            "target {target} is filtered out"
        )));
    }
    let mut skip = filtered_out.to_vec();
    skip.sort_unstable();
    skip.dedup();
    Ok(rank_skipping(scores, target, &skip))
}

/// `skip` must be sorted; the target itself is ignored if present.
fn rank_skipping(scores: &[f64], target: usize, skip: &[usize]) -> f64 {
    let s = scores[target];
    let (mut greater, mut ties) = (0usize, 0usize);
    for (j, &v) in scores.iter().enumerate() {
        if j == target {
            continue;
        }
        if v > s {
            greater += 1;
        } else if v == s {
            ties += 1;
        }
    }
    for &j in skip {
        if j == target || j >= scores.len() {
            continue;
        }
        if scores[j] > s {
            greater -= 1;
        } else if scores[j] == s {
            ties -= 1;
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

/// Filtered evaluation of tail queries.
pub fn evaluate(state: &ModelState, split: &[Triple], filter: &FilterIndex) -> Result<EvalResult> {
    evaluate_with(state, split, Some(filter))
}

/// Raw (unfiltered) ranking, for diagnostics.
pub fn evaluate_unfiltered(state: &ModelState, split: &[Triple]) -> Result<EvalResult> {
    evaluate_with(state, split, None)
}

fn evaluate_with(
    state: &ModelState,
    split: &[Triple],
    filter: Option<&FilterIndex>,
) -> Result<EvalResult> {
    if split.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate an empty split".into(),
        ));
    }
    let candidates = CandidateTable::build(state)?;
    let ranks = split
        .par_iter()
        .map(|t| {
            let scores = score_all_tails_with(state, &candidates, t.head, t.relation)
                .map_err(|e| e.context(format!("scoring query {t}")))?;
            if t.tail >= scores.len() {
                return Err(Error::InvalidArgument(format!("tail out of range in {t}")));
            }
            let skip = filter.map_or(&[][..], |f| f.tails(t.head, t.relation));
            Ok((*t, rank_skipping(&scores, t.tail, skip)))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalResult::from_ranks(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_store::{build_filter_index, Dataset, Vocab};
    use crate::model::{init_state, ModelConfig, ModelKind};
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        let s = [0.9, 0.5, 0.1];
        assert_eq!(rank_of(&s, 0, &[]).unwrap(), 1.0);
        assert_eq!(rank_of(&s, 2, &[]).unwrap(), 3.0);
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 1, &[]).unwrap(), 2.0);
        assert_eq!(rank_of(&s, 2, &[0]).unwrap(), 2.0);
        assert!(rank_of(&s, 2, &[2]).is_err());
        assert!(rank_of(&s, 3, &[]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let t = Triple::new(0, 0, 0);
        let r = EvalResult::from_ranks(vec![(t, 1.0), (t, 2.0), (t, 4.0)]).unwrap();
        assert!((r.mrr - 7.0 / 12.0).abs() < 1e-12);
        assert!((r.hits(3) - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.hits(1) - 1.0 / 3.0).abs() < 1e-12);
        let perfect = EvalResult::from_ranks(vec![(t, 1.0); 5]).unwrap();
        assert_eq!((perfect.mrr, perfect.hits(1)), (1.0, 1.0));
        assert!(EvalResult::from_ranks(vec![]).is_err());
        assert_eq!(
            r.csv_row("test").split(',').count(),
            EVAL_HEADER.split(',').count()
        );
    }

    fn toy() -> (Dataset, ModelState) {
        let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let vocab = Vocab::from_names(names("e", 12), names("r", 2)).unwrap();
        let train: Vec<Triple> = (0..10)
            .map(|i| Triple::new(i, i % 2, (i + 1) % 12))
            .collect();
        let valid = vec![Triple::new(0, 0, 5), Triple::new(3, 1, 7)];
        let test = vec![Triple::new(0, 0, 9), Triple::new(11, 1, 2)];
        let ds = Dataset::new(vocab, train, valid, test).unwrap();
        let cfg = ModelConfig::new(ModelKind::UniBiO2, 6).unwrap();
        (ds, init_state(cfg, 12, 2, 3).unwrap())
    }

    #[test]
    fn evaluation_is_deterministic_and_filter_helps() {
        let (ds, state) = toy();
        let f = build_filter_index(&ds);
        let a = evaluate(&state, &ds.test, &f).unwrap();
        let b = evaluate(&state, &ds.test, &f).unwrap();
        assert_eq!(a, b);
        let raw = evaluate_unfiltered(&state, &ds.test).unwrap();
        for ((_, fr), (_, rr)) in a.per_query_ranks.iter().zip(&raw.per_query_ranks) {
            assert!(1.0 / fr >= 1.0 / rr);
        }
        assert!(a.mrr >= a.hits(1) && a.mrr <= 1.0);
        assert!(a.hits(1) <= a.hits(3) && a.hits(3) <= a.hits(10));
        assert!(evaluate(&state, &[], &f).is_err());
    }

    fn brute_rank(scores: &[f64], target: usize, skip: &[usize]) -> f64 {
        let mut others: Vec<f64> = (0..scores.len())
            .filter(|j| *j != target && !skip.contains(j))
            .map(|j| scores[j])
            .collect();
        others.sort_by(|a, b| b.total_cmp(a));
        let greater = others.iter().take_while(|v| **v > scores[target]).count();
        let ties = others.iter().filter(|v| **v == scores[target]).count();
        1.0 + greater as f64 + ties as f64 / 2.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn rank_matches_brute_force(
            scores in prop::collection::vec(prop::sample::select(vec![-1.0, -0.5, 0.0, 0.25, 0.5, 1.0]), 1..30),
            t in any::<prop::sample::Index>(),
            mask in prop::collection::vec(any::<bool>(), 30),
        ) {
            let target = t.index(scores.len());
            let skip: Vec<usize> = (0..scores.len()).filter(|j| mask[*j] && *j != target).collect();
            prop_assert_eq!(rank_of(&scores, target, &skip).unwrap(), brute_rank(&scores, target, &skip));
        }
    }
}
