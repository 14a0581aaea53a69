//! Bloom hierarchical progression rates: conditional success between Bloom
//! levels of the same scenario for the same model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Bloom, TrialRecord};

pub type RateMatrix = [[Option<f64>; 4]; 4];
pub type CountMatrix = [[usize; 4]; 4];

/// Indexed by `Bloom::rank()` (remember = 0 … analyze = 3), row = conditioning level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhprResult {
    /// `P(correct at j | correct at i)`; `None` when nobody was correct at `i`.
    pub sgs: RateMatrix,
    /// `P(correct at j | incorrect at i)`; `None` when nobody failed at `i`.
    pub sgf: RateMatrix,
    pub sgs_pairs: CountMatrix,
    pub sgf_pairs: CountMatrix,
    pub sgs_lower_to_higher: Option<f64>,
    pub sgs_higher_to_lower: Option<f64>,
    pub sgf_lower_to_higher: Option<f64>,
    pub sgf_higher_to_lower: Option<f64>,
}

impl BhprResult {
    /// Defined off-diagonal entries of a matrix.
    pub fn off_diagonal(m: &RateMatrix) -> impl Iterator<Item = f64> + '_ {
        (0..4).flat_map(move |i| (0..4).filter(move |&j| j != i).filter_map(move |j| m[i][j]))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn directional(m: &RateMatrix, upward: bool) -> Option<f64> {
    mean((0..4).flat_map(|i| {
        (0..4)
            .filter(move |&j| if upward { j > i } else { j < i })
            .filter_map(move |j| m[i][j])
    }))
}

/// Pairs trials by (model, scenario). Diagonal entries pair each trial with
/// itself.
pub fn bhpr(trials: &[TrialRecord]) -> BhprResult {
    let mut by_key: BTreeMap<(&str, &str), [Vec<bool>; 4]> = BTreeMap::new();
    for t in trials {
        by_key.entry((&t.model_id, &t.scenario_id)).or_default()[t.bloom.rank()].push(t.correct);
    }
    let mut hits = [[[0usize; 2]; 4]; 4];
    let mut totals = [[[0usize; 2]; 4]; 4];
    for levels in by_key.values() {
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    for &a in &levels[i] {
                        let c = usize::from(a);
                        totals[i][j][c] += 1;
                        hits[i][j][c] += usize::from(a);
                    }
                    continue;
                }
                for &a in &levels[i] {
                    for &b in &levels[j] {
                        let c = usize::from(a);
                        totals[i][j][c] += 1;
                        hits[i][j][c] += usize::from(b);
                    }
                }
            }
        }
    }
    let mut sgs: RateMatrix = [[None; 4]; 4];
    let mut sgf: RateMatrix = [[None; 4]; 4];
    let mut sgs_pairs = [[0; 4]; 4];
    let mut sgf_pairs = [[0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            sgs_pairs[i][j] = totals[i][j][1];
            sgf_pairs[i][j] = totals[i][j][0];
            if totals[i][j][1] > 0 {
                sgs[i][j] = Some(hits[i][j][1] as f64 / totals[i][j][1] as f64);
            }
            if totals[i][j][0] > 0 {
                sgf[i][j] = Some(hits[i][j][0] as f64 / totals[i][j][0] as f64);
            }
        }
    }
    BhprResult {
        sgs_lower_to_higher: directional(&sgs, true),
        sgs_higher_to_lower: directional(&sgs, false),
        sgf_lower_to_higher: directional(&sgf, true),
        sgf_higher_to_lower: directional(&sgf, false),
        sgs,
        sgf,
        sgs_pairs,
        sgf_pairs,
    }
}

/// Level order used by the matrices.
pub fn level_order() -> [Bloom; 4] {
    let mut out = Bloom::ALL;
    out.sort_by_key(|b| b.rank());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use proptest::prelude::*;

    fn trial(model: usize, scenario: usize, bloom: usize, correct: bool) -> TrialRecord {
        TrialRecord {
            model_id: format!("m{model}"),
            mcq_id: format!("s{scenario}-{bloom}"),
            scenario_id: format!("s{scenario}"),
            practice_id: "P".into(),
            bloom: Bloom::ALL[bloom],
            domain: Domain::Teaching,
            chosen_label: None,
            correct_label: 'A',
            correct,
            raw_response: String::new(),
            error: None,
        }
    }

    /// Direct conditional counting over every ordered pair of trials.
    fn brute(trials: &[TrialRecord]) -> (RateMatrix, RateMatrix) {
        let mut sgs = [[None; 4]; 4];
        let mut sgf = [[None; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let (mut s_hit, mut s_n, mut f_hit, mut f_n) = (0, 0, 0, 0);
                for (a_idx, a) in trials.iter().enumerate() {
                    for (b_idx, b) in trials.iter().enumerate() {
                        let same_unit = a.model_id == b.model_id && a.scenario_id == b.scenario_id;
                        let pair = a.bloom.rank() == i && b.bloom.rank() == j && same_unit;
                        if !pair || (i == j && a_idx != b_idx) {
                            continue;
                        }
                        if a.correct {
                            s_n += 1;
                            s_hit += usize::from(b.correct);
                        } else {
                            f_n += 1;
                            f_hit += usize::from(b.correct);
                        }
                    }
                }
                if s_n > 0 {
                    sgs[i][j] = Some(s_hit as f64 / s_n as f64);
                }
                if f_n > 0 {
                    sgf[i][j] = Some(f_hit as f64 / f_n as f64);
                }
            }
        }
        (sgs, sgf)
    }

    fn arb_trials() -> impl Strategy<Value = Vec<TrialRecord>> {
        prop::collection::vec((0usize..2, 0usize..4, 0usize..4, any::<bool>()), 0..40)
            .prop_map(|v| v.into_iter().map(|(m, s, b, c)| trial(m, s, b, c)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn equals_direct_counting(trials in arb_trials()) {
            let r = bhpr(&trials);
            let (sgs, sgf) = brute(&trials);
            prop_assert_eq!(r.sgs, sgs);
            prop_assert_eq!(r.sgf, sgf);
        }
    }

    #[test]
    fn all_correct() {
        let trials: Vec<_> = (0..3).flat_map(|s| (0..4).map(move |b| trial(0, s, b, true))).collect();
        let r = bhpr(&trials);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.sgs[i][j], Some(1.0));
                assert_eq!(r.sgf[i][j], None);
            }
        }
        assert_eq!(r.sgs_lower_to_higher, Some(1.0));
        assert_eq!(r.sgf_lower_to_higher, None);
    }

    #[test]
    fn single_scenario_transition() {
        // correct at remember and apply only
        let trials: Vec<_> = [true, false, true, false]
            .iter()
            .enumerate()
            .map(|(b, c)| trial(0, 0, b, *c))
            .collect();
        let r = bhpr(&trials);
        assert_eq!(r.sgs[0][2], Some(1.0));
        assert_eq!(r.sgs[0][1], Some(0.0));
        assert_eq!(r.sgf[1][0], Some(1.0));
        assert_eq!(r.sgf[1][3], Some(0.0));
        assert_eq!(level_order(), Bloom::ALL);
    }
}
