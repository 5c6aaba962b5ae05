//! Resolving class probabilities and ranking candidate equi-joins.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::comparator::{distance_vector, fit_normalization};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::learner::{chain_predict, ChainModel, ClassProbabilities};
use crate::oracle::{AttributeRef, QualityClass};
use crate::profiler::AttributeProfile;
use crate::store::ProfileStore;

/// Final class from per-class probabilities.
///
/// Starts from the argmax class `i` (ties go to the lower class) and moves it
/// down to the most probable class below `i` when either
/// * `p0 > 0.5`, or
/// * every probability is below 0.5 and `p_i - p0 <= tau`.
pub fn resolve_class(p: &ClassProbabilities, tau: f64) -> QualityClass {
    let i = p.argmax().index();
    if i == 0 {
        return QualityClass::None;
    }
    let p = &p.0;
    let rule1 = p[0] > 0.5;
    let rule2 = p.iter().all(|&q| q < 0.5) && p[i] - p[0] <= tau;
    if !(rule1 || rule2) {
        return QualityClass::ALL[i];
    }
    let mut best = 0;
    for j in 1..i {
        if p[j] > p[best] {
            best = j;
        }
    }
    QualityClass::ALL[best]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinCandidate {
    pub query: AttributeRef,
    pub candidate: AttributeRef,
    pub probabilities: ClassProbabilities,
    pub predicted: QualityClass,
}

impl JoinCandidate {
    pub fn confidence(&self) -> f64 {
        self.probabilities.get(self.predicted)
    }
}

/// Predicted class descending, then probability of that class descending, then
/// candidate (dataset, attribute), then query attribute.
fn rank_order(a: &JoinCandidate, b: &JoinCandidate) -> Ordering {
    b.predicted
        .cmp(&a.predicted)
        .then_with(|| b.confidence().total_cmp(&a.confidence()))
        .then_with(|| a.candidate.dataset.cmp(&b.candidate.dataset))
        .then_with(|| a.candidate.attribute.cmp(&b.candidate.attribute))
        .then_with(|| a.query.dataset.cmp(&b.query.dataset))
        .then_with(|| a.query.attribute.cmp(&b.query.attribute))
}

/// Which predicted classes a ranking shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassView {
    pub min_class: QualityClass,
}

impl ClassView {
    /// Good and High only.
    pub const INTERESTING: ClassView = ClassView {
        min_class: QualityClass::Good,
    };
    /// Poor through High.
    pub const ALL_CLASSES: ClassView = ClassView {
        min_class: QualityClass::Poor,
    };
    pub const EVERYTHING: ClassView = ClassView {
        min_class: QualityClass::None,
    };

    pub fn shows(self, c: QualityClass) -> bool {
        c >= self.min_class
    }
}

impl Default for ClassView {
    fn default() -> Self {
        ClassView::INTERESTING
    }
}

/// All scored candidates, best first. Filtering by class happens in [`Ranking::view`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub candidates: Vec<JoinCandidate>,
}

impl Ranking {
    pub fn from_candidates(mut candidates: Vec<JoinCandidate>) -> Self {
        candidates.sort_by(rank_order);
        Ranking { candidates }
    }

    pub fn merge(rankings: impl IntoIterator<Item = Ranking>) -> Self {
        Self::from_candidates(rankings.into_iter().flat_map(|r| r.candidates).collect())
    }

    pub fn view(&self, view: ClassView) -> impl Iterator<Item = &JoinCandidate> {
        self.candidates.iter().filter(move |c| view.shows(c.predicted))
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Scores `query` against `candidates`. Normalization is fitted over the query
/// and all candidates together.
pub fn score_candidates(
    query: &AttributeProfile,
    candidates: &[&AttributeProfile],
    model: &ChainModel,
    exec: Execution,
) -> Result<Ranking> {
    if candidates.is_empty() {
        return Ok(Ranking::default());
    }
    let stats = fit_normalization(std::iter::once(query).chain(candidates.iter().copied()))?;
    let query_ref = AttributeRef::new(&query.dataset_name, &query.attribute_name);
    let scored = exec.map(candidates, |b| -> Result<JoinCandidate> {
        let d = distance_vector(query, b, &stats)?;
        let p = chain_predict(model, &d.values)?;
        Ok(JoinCandidate {
            query: query_ref.clone(),
            candidate: AttributeRef::new(&b.dataset_name, &b.attribute_name),
            predicted: resolve_class(&p, model.downgrade_threshold),
            probabilities: p,
        })
    });
    Ok(Ranking::from_candidates(scored.into_iter().collect::<Result<_>>()?))
}

/// Ranks every stored attribute of other datasets as a join partner for `query`.
pub fn discover_by_attribute(
    query: &AttributeRef,
    store: &ProfileStore,
    model: &ChainModel,
    exec: Execution,
) -> Result<Ranking> {
    let profile = store
        .profile(&query.dataset, &query.attribute)
        .ok_or_else(|| Error::Unprofiled {
            dataset: query.dataset.clone(),
            attribute: query.attribute.clone(),
        })?;
    let candidates: Vec<&AttributeProfile> = store.profiles_excluding(&query.dataset).collect();
    score_candidates(profile, &candidates, model, exec)
}

/// Runs [`discover_by_attribute`] for every stored attribute of `dataset` and merges the results.
pub fn discover_by_dataset(
    dataset: &str,
    store: &ProfileStore,
    model: &ChainModel,
    exec: Execution,
) -> Result<Ranking> {
    let doc = store.document(dataset).ok_or_else(|| Error::Unprofiled {
        dataset: dataset.to_string(),
        attribute: "*".into(),
    })?;
    let per_attribute = doc
        .attributes
        .iter()
        .map(|a| {
            discover_by_attribute(&AttributeRef::new(dataset, &a.attribute_name), store, model, exec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ranking::merge(per_attribute))
}

fn quote_identifier(name: &str) -> String {
    let simple = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if simple {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

/// SQL equi-join for a candidate, with fully qualified attribute names.
pub fn render_join_query(c: &JoinCandidate) -> String {
    let (qd, qa) = (quote_identifier(&c.query.dataset), quote_identifier(&c.query.attribute));
    let (cd, ca) = (
        quote_identifier(&c.candidate.dataset),
        quote_identifier(&c.candidate.attribute),
    );
    format!("SELECT * FROM {qd} JOIN {cd} ON {qd}.{qa} = {cd}.{ca}")
}

pub fn ranking_header() -> Vec<&'static str> {
    vec![
        "rank",
        "query_attr",
        "candidate_dataset",
        "candidate_attr",
        "predicted_class",
        "p0",
        "p1",
        "p2",
        "p3",
        "p4",
        "join_query",
    ]
}

/// Writes the visible part of a ranking as CSV. Ranks start at 1.
pub fn write_ranking<W: Write>(ranking: &Ranking, view: ClassView, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse {
        path: "ranking".into(),
        message: e.to_string(),
    };
    w.write_record(ranking_header()).map_err(err)?;
    for (rank, c) in ranking.view(view).enumerate() {
        let mut row = vec![
            (rank + 1).to_string(),
            c.query.attribute.clone(),
            c.candidate.dataset.clone(),
            c.candidate.attribute.clone(),
            c.predicted.to_string(),
        ];
        row.extend(c.probabilities.0.iter().map(|p| p.to_string()));
        row.push(render_join_query(c));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("ranking", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use QualityClass::*;

    fn probs(p: [f64; 5]) -> ClassProbabilities {
        ClassProbabilities(p)
    }

    #[test]
    fn p0_majority_downgrades_to_none() {
        assert_eq!(resolve_class(&probs([0.55, 0.10, 0.20, 0.70, 0.10]), 0.10), None);
    }

    #[test]
    fn narrow_gap_downgrades_to_none() {
        assert_eq!(resolve_class(&probs([0.45, 0.10, 0.20, 0.48, 0.10]), 0.10), None);
    }

    #[test]
    fn wide_gap_keeps_argmax() {
        assert_eq!(resolve_class(&probs([0.20, 0.10, 0.15, 0.45, 0.10]), 0.10), Good);
    }

    #[test]
    fn downgrade_picks_best_lower_class() {
        assert_eq!(resolve_class(&probs([0.30, 0.10, 0.35, 0.38, 0.10]), 0.10), Moderate);
        assert_eq!(resolve_class(&probs([0.6, 0.62, 0.1, 0.1, 0.9]), 0.10), Poor);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(resolve_class(&probs([0.2, 0.2, 0.9, 0.9, 0.1]), 0.10), Moderate);
        assert_eq!(resolve_class(&probs([0.7, 0.1, 0.1, 0.1, 0.7]), 0.10), None);
    }

    fn candidate(q: &str, ds: &str, attr: &str, class: QualityClass, conf: f64) -> JoinCandidate {
        let mut p = [0.0; 5];
        p[class.index()] = conf;
        JoinCandidate {
            query: AttributeRef::new("q", q),
            candidate: AttributeRef::new(ds, attr),
            probabilities: ClassProbabilities(p),
            predicted: class,
        }
    }

    #[test]
    fn ranking_order_and_tie_breaks() {
        let r = Ranking::from_candidates(vec![
            candidate("a", "d2", "x", Good, 0.6),
            candidate("a", "d1", "y", High, 0.7),
            candidate("a", "d1", "x", Good, 0.6),
            candidate("a", "d3", "z", Good, 0.9),
            candidate("a", "d0", "z", None, 0.9),
        ]);
        let order: Vec<String> = r.candidates.iter().map(|c| c.candidate.to_string()).collect();
        assert_eq!(order, ["d1.y", "d3.z", "d1.x", "d2.x", "d0.z"]);
        assert_eq!(r.view(ClassView::INTERESTING).count(), 4);
        assert_eq!(r.view(ClassView::EVERYTHING).count(), 5);
    }

    #[test]
    fn class_views() {
        assert!(!ClassView::INTERESTING.shows(Moderate));
        assert!(ClassView::ALL_CLASSES.shows(Poor));
        assert!(!ClassView::ALL_CLASSES.shows(None));
        assert!(ClassView::EVERYTHING.shows(None));
    }

    #[test]
    fn join_query_template() {
        let mut c = candidate("Country", "D_1", "X", High, 1.0);
        c.query.dataset = "D_ref".into();
        assert_eq!(
            render_join_query(&c),
            "SELECT * FROM D_ref JOIN D_1 ON D_ref.Country = D_1.X"
        );
        c.query.attribute = "Happiness score".into();
        c.candidate.attribute = "Country".into();
        c.query.dataset = "world-2016".into();
        assert_eq!(
            render_join_query(&c),
            "SELECT * FROM \"world-2016\" JOIN D_1 ON \"world-2016\".\"Happiness score\" = D_1.Country"
        );
        assert_eq!(quote_identifier("a\"b"), "\"a\"\"b\"");
        assert_eq!(quote_identifier("1st"), "\"1st\"");
    }

    #[test]
    fn ranking_csv() {
        let r = Ranking::from_candidates(vec![
            candidate("a", "d1", "x", Moderate, 0.6),
            candidate("a", "d2", "y", High, 0.8),
        ]);
        let mut out = Vec::new();
        write_ranking(&r, ClassView::INTERESTING, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], ranking_header().join(","));
        assert!(lines[1].starts_with("1,a,d2,y,4,0,0,0,0,0.8,"));
    }

    fn prob_vector() -> impl Strategy<Value = [f64; 5]> {
        prop::array::uniform5(0.0f64..=1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn never_upgrades(p in prob_vector(), tau in 0.01f64..0.99) {
            let cp = ClassProbabilities(p);
            let i = cp.argmax();
            let out = resolve_class(&cp, tau);
            prop_assert!(out <= i);
            if out < i {
                // a rule fired and the result is the most probable class below i
                let rule1 = p[0] > 0.5;
                let rule2 = p.iter().all(|&q| q < 0.5) && p[i.index()] - p[0] <= tau;
                prop_assert!(rule1 || rule2);
                for j in 0..i.index() {
                    prop_assert!(p[out.index()] >= p[j]);
                }
            } else if i != None {
                prop_assert!(p[0] <= 0.5);
            }
        }
    }
}
