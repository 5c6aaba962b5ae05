//! Exact, value-level join quality. Used to label training pairs and to check predictions.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::comparator::{distance_vector, fit_normalization, FeatureVector, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::Dataset;
use crate::profiler::{profile_attribute, AttributeProfile};

/// Containment (`c_*`) and cardinality-proportion (`k_*`) thresholds per class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    pub c_high: f64,
    pub c_good: f64,
    pub c_moderate: f64,
    pub c_poor: f64,
    pub k_high: f64,
    pub k_good: f64,
    pub k_moderate: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        QualityThresholds {
            c_high: 0.75,
            c_good: 0.5,
            c_moderate: 0.25,
            c_poor: 0.1,
            k_high: 0.25,
            k_good: 0.125,
            k_moderate: 0.083,
        }
    }
}

impl QualityThresholds {
    pub fn validate(&self) -> Result<()> {
        let c_ok = self.c_high > self.c_good
            && self.c_good > self.c_moderate
            && self.c_moderate > self.c_poor
            && self.c_poor > 0.0;
        let k_ok = self.k_high > self.k_good && self.k_good > self.k_moderate && self.k_moderate > 0.0;
        if c_ok && k_ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "quality thresholds must be strictly decreasing and positive".into(),
            ))
        }
    }
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum QualityClass {
    #[default]
    None = 0,
    Poor = 1,
    Moderate = 2,
    Good = 3,
    High = 4,
}

impl QualityClass {
    pub const ALL: [QualityClass; 5] = [
        QualityClass::None,
        QualityClass::Poor,
        QualityClass::Moderate,
        QualityClass::Good,
        QualityClass::High,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl From<QualityClass> for u8 {
    fn from(c: QualityClass) -> u8 {
        c as u8
    }
}

impl TryFrom<u8> for QualityClass {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        QualityClass::from_index(v as usize).ok_or_else(|| format!("no quality class {v}"))
    }
}

impl fmt::Display for QualityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

/// `|a ∩ b| / |a|`.
pub fn containment(a: &HashSet<String>, b: &HashSet<String>) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(intersection_size(a, b) as f64 / a.len() as f64)
}

/// `|a ∩ b| / |a ∪ b|`.
pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> Result<f64> {
    let inter = intersection_size(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Err(Error::EmptySet);
    }
    Ok(inter as f64 / union as f64)
}

fn intersection_size(a: &HashSet<String>, b: &HashSet<String>) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|v| large.contains(*v)).count()
}

/// Quality class from a containment value and the two distinct-value counts.
/// The proportion constraint only applies when the candidate is larger than
/// the reference.
pub fn classify_quality(
    containment: f64,
    reference_cardinality: u64,
    candidate_cardinality: u64,
    t: &QualityThresholds,
) -> QualityClass {
    let proportion_ok = |k: f64| {
        reference_cardinality >= candidate_cardinality
            || reference_cardinality as f64 / candidate_cardinality as f64 >= k
    };
    if containment >= t.c_high && proportion_ok(t.k_high) {
        QualityClass::High
    } else if containment >= t.c_good && proportion_ok(t.k_good) {
        QualityClass::Good
    } else if containment >= t.c_moderate && proportion_ok(t.k_moderate) {
        QualityClass::Moderate
    } else if containment >= t.c_poor {
        QualityClass::Poor
    } else {
        QualityClass::None
    }
}

/// Same rule, stated on a precomputed proportion `|A| / |B|`.
pub fn classify_by_proportion(
    containment: f64,
    proportion: f64,
    t: &QualityThresholds,
) -> QualityClass {
    let ok = |k: f64| proportion >= 1.0 || proportion >= k;
    if containment >= t.c_high && ok(t.k_high) {
        QualityClass::High
    } else if containment >= t.c_good && ok(t.k_good) {
        QualityClass::Good
    } else if containment >= t.c_moderate && ok(t.k_moderate) {
        QualityClass::Moderate
    } else if containment >= t.c_poor {
        QualityClass::Poor
    } else {
        QualityClass::None
    }
}

/// Join quality of reference set `a` against candidate set `b`.
pub fn quality_label(
    a: &HashSet<String>,
    b: &HashSet<String>,
    t: &QualityThresholds,
) -> Result<QualityClass> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let c = containment(a, b)?;
    Ok(classify_quality(c, a.len() as u64, b.len() as u64, t))
}

/// `dataset.attribute` reference.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeRef {
    pub dataset: String,
    pub attribute: String,
}

impl AttributeRef {
    pub fn new(dataset: impl Into<String>, attribute: impl Into<String>) -> Self {
        AttributeRef {
            dataset: dataset.into(),
            attribute: attribute.into(),
        }
    }
}

impl fmt::Display for AttributeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.dataset, self.attribute)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub reference: AttributeRef,
    pub candidate: AttributeRef,
    pub containment: f64,
    pub proportion: f64,
    pub label: QualityClass,
    pub features: FeatureVector,
}

struct Column {
    reference: AttributeRef,
    profile: AttributeProfile,
    values: HashSet<String>,
}

/// Labels every ordered pair of eligible attributes from distinct datasets.
///
/// Normalization is fitted once over all eligible attributes of the
/// repository. Attributes without any non-missing value are skipped.
pub fn label_corpus(
    repo: &[Dataset],
    t: &QualityThresholds,
    exec: Execution,
) -> Result<Vec<LabeledPair>> {
    let eligible: Vec<(&Dataset, &crate::ingest::Attribute)> = repo
        .iter()
        .flat_map(|d| d.eligible_attributes().map(move |a| (d, a)))
        .collect();
    let columns: Vec<Column> = exec
        .map(&eligible, |(d, a)| Column {
            reference: AttributeRef::new(&d.name, &a.name),
            profile: profile_attribute(&a.raw_values, &a.name, &d.name),
            values: a.distinct_values(),
        })
        .into_iter()
        .filter(|c| !c.values.is_empty())
        .collect();

    let datasets: HashSet<&str> = columns.iter().map(|c| c.reference.dataset.as_str()).collect();
    if datasets.len() < 2 {
        return Ok(Vec::new());
    }
    let stats = fit_normalization(columns.iter().map(|c| &c.profile))?;

    let pairs: Vec<(usize, usize)> = (0..columns.len())
        .flat_map(|i| (0..columns.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| columns[i].reference.dataset != columns[j].reference.dataset)
        .collect();

    exec.map(&pairs, |&(i, j)| {
        let (a, b) = (&columns[i], &columns[j]);
        let c = containment(&a.values, &b.values)?;
        Ok(LabeledPair {
            reference: a.reference.clone(),
            candidate: b.reference.clone(),
            containment: c,
            proportion: a.values.len() as f64 / b.values.len() as f64,
            label: classify_quality(c, a.values.len() as u64, b.values.len() as u64, t),
            features: distance_vector(&a.profile, &b.profile, &stats)?,
        })
    })
    .into_iter()
    .collect()
}

/// Header of the labeled-corpus file.
pub fn corpus_header() -> Vec<String> {
    ["dataset_a", "attr_a", "dataset_b", "attr_b", "containment", "proportion", "label"]
        .iter()
        .map(|s| s.to_string())
        .chain(FEATURE_NAMES.iter().map(|s| s.to_string()))
        .collect()
}

pub fn write_corpus<W: Write>(pairs: &[LabeledPair], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse {
        path: "labeled corpus".into(),
        message: e.to_string(),
    };
    w.write_record(corpus_header()).map_err(err)?;
    for p in pairs {
        let mut row = vec![
            p.reference.dataset.clone(),
            p.reference.attribute.clone(),
            p.candidate.dataset.clone(),
            p.candidate.attribute.clone(),
            p.containment.to_string(),
            p.proportion.to_string(),
            p.label.to_string(),
        ];
        row.extend(p.features.values.iter().map(f64::to_string));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("labeled corpus", e))
}

pub fn read_corpus<R: std::io::Read>(input: R, origin: &std::path::Path) -> Result<Vec<LabeledPair>> {
    let malformed = |message: String| Error::MalformedDocument {
        path: origin.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != corpus_header() {
        return Err(malformed("unexpected header".into()));
    }
    let num = |s: &str, line: u64| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| malformed(format!("line {line}: {s:?} is not a number")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let label: u8 = rec[6]
            .parse()
            .map_err(|_| malformed(format!("line {line}: bad label")))?;
        let label = QualityClass::try_from(label).map_err(malformed)?;
        let values = rec
            .iter()
            .skip(7)
            .map(|s| num(s, line))
            .collect::<Result<Vec<_>>>()?;
        out.push(LabeledPair {
            reference: AttributeRef::new(&rec[0], &rec[1]),
            candidate: AttributeRef::new(&rec[2], &rec[3]),
            containment: num(&rec[4], line)?,
            proportion: num(&rec[5], line)?,
            label,
            features: FeatureVector {
                values,
                schema_version: crate::comparator::FEATURE_SCHEMA_VERSION,
            },
        });
    }
    Ok(out)
}

/// Label counts, indexed by class.
pub fn class_counts<'a>(labels: impl IntoIterator<Item = &'a QualityClass>) -> [usize; 5] {
    let mut counts = [0; 5];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Attribute, SampleSpec};
    use proptest::prelude::*;

    fn set(values: &[&str]) -> HashSet<String> {
        values.iter().map(|s| s.to_string()).collect()
    }

    fn dataset(name: &str, cols: &[(&str, &[&str])]) -> Dataset {
        let attrs = cols
            .iter()
            .map(|(n, vals)| Attribute::new(*n, vals.iter().map(|v| Some(v.to_string())).collect()))
            .collect();
        let mut d = Dataset::new(name, attrs).unwrap();
        d.infer_eligibility(SampleSpec::default());
        d
    }

    fn toy_repo() -> Vec<Dataset> {
        vec![
            dataset(
                "d_ref",
                &[
                    ("Country", &["Mexico", "Spain", "United States", "France", "Germany"]),
                    ("Happiness score", &["6.595", "6.354", "6.892", "6.592", "6.985"]),
                    ("Schengen", &["N", "Y", "N", "Y", "Y"]),
                ],
            ),
            dataset(
                "d_1",
                &[
                    ("X", &["Spain", "United States", "Mexico", "Germany"]),
                    ("Y", &["47M", "330M", "123M", "83M"]),
                    ("Z", &["2020", "2020", "2020", "2020"]),
                ],
            ),
            dataset(
                "d_2",
                &[
                    ("Country", &["United States"; 4]),
                    ("Location", &["New York", "Chicago", "Seattle", "Houston"]),
                    ("Discount", &["Y", "N", "N", "Y"]),
                    ("Customer satisfaction", &["7.7", "8.5", "8", "7.7"]),
                ],
            ),
        ]
    }

    #[test]
    fn containment_and_jaccard() {
        let country = set(&["mexico", "spain", "united states", "france", "germany"]);
        let x = set(&["spain", "united states", "mexico", "germany"]);
        assert_eq!(containment(&country, &x).unwrap(), 0.8);
        assert_eq!(containment(&x, &country).unwrap(), 1.0);
        assert_eq!(containment(&set(&["a"]), &set(&["b"])).unwrap(), 0.0);
        assert_eq!(jaccard(&x, &x).unwrap(), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])).unwrap(), 0.0);
        assert_eq!(jaccard(&country, &set(&["united states"])).unwrap(), 0.2);
        assert!(containment(&HashSet::new(), &x).is_err());
        assert!(jaccard(&HashSet::new(), &HashSet::new()).is_err());
    }

    #[test]
    fn quality_examples() {
        let t = QualityThresholds::default();
        assert_eq!(classify_by_proportion(0.8, 0.149, &t), QualityClass::Good);
        assert_eq!(classify_by_proportion(0.95, 0.00826, &t), QualityClass::Poor);
        assert_eq!(classify_by_proportion(0.05, 1.0, &t), QualityClass::None);
        assert_eq!(classify_quality(0.8, 8124, 54500, &t), QualityClass::Good);
        assert_eq!(classify_quality(0.95, 8124, 982921, &t), QualityClass::Poor);
        // larger reference: containment alone decides
        assert_eq!(classify_quality(0.8, 1000, 10, &t), QualityClass::High);
        t.validate().unwrap();
    }

    #[test]
    fn toy_repo_labels() {
        let pairs = label_corpus(&toy_repo(), &QualityThresholds::default(), Execution::Sequential)
            .unwrap();
        let find = |a: &str, b: &str| {
            pairs
                .iter()
                .find(|p| p.reference.to_string() == a && p.candidate.to_string() == b)
                .unwrap()
        };
        assert_eq!(find("d_ref.Country", "d_1.X").label, QualityClass::High);
        let semantic_fp = find("d_ref.Schengen", "d_2.Discount");
        assert_eq!(semantic_fp.containment, 1.0);
        assert_eq!(semantic_fp.label, QualityClass::High);
        assert!(find("d_ref.Country", "d_2.Country").label < QualityClass::High);
        assert!(pairs.iter().all(|p| p.reference.dataset != p.candidate.dataset));
        assert!(pairs.iter().all(|p| p.reference.attribute != "Happiness score"));
    }

    #[test]
    fn single_dataset_has_no_pairs() {
        let repo = vec![toy_repo().remove(0)];
        let pairs = label_corpus(&repo, &QualityThresholds::default(), Execution::Sequential).unwrap();
        assert!(pairs.is_empty());
        assert!(label_corpus(&[], &QualityThresholds::default(), Execution::Sequential)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn corpus_file_round_trip() {
        let pairs = label_corpus(&toy_repo(), &QualityThresholds::default(), Execution::Parallel)
            .unwrap();
        let mut buf = Vec::new();
        write_corpus(&pairs, &mut buf).unwrap();
        let back = read_corpus(buf.as_slice(), std::path::Path::new("mem")).unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn store_movie_scenario() {
        let stores = set(&["chicago", "casablanca", "paris"]);
        let mut movies: HashSet<String> = (0..100_000).map(|i| format!("movie {i}")).collect();
        movies.insert("chicago".into());
        movies.insert("casablanca".into());
        let c = containment(&stores, &movies).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            quality_label(&stores, &movies, &QualityThresholds::default()).unwrap(),
            QualityClass::Poor
        );
    }

    fn values(max: usize) -> impl Strategy<Value = HashSet<String>> {
        prop::collection::hash_set((0..max).prop_map(|i| format!("v{i}")), 1..40)
    }

    proptest! {
        #[test]
        fn monotone_in_shared_values(a in values(60), b in values(60), extra in 0usize..60) {
            let t = QualityThresholds::default();
            let before = quality_label(&a, &b, &t).unwrap();
            // swap one non-shared candidate value for a shared one, keeping |B| fixed
            let missing: Vec<&String> = a.iter().filter(|v| !b.contains(*v)).collect();
            let removable: Vec<&String> = b.iter().filter(|v| !a.contains(*v)).collect();
            if !missing.is_empty() && !removable.is_empty() {
                let mut b2 = b.clone();
                b2.remove(removable[extra % removable.len()]);
                b2.insert(missing[extra % missing.len()].clone());
                prop_assert!(quality_label(&a, &b2, &t).unwrap() >= before);
            }
        }

        #[test]
        fn anti_monotone_in_candidate_growth(a in values(60), b in values(60), grow in 1usize..500) {
            let t = QualityThresholds::default();
            let before = quality_label(&a, &b, &t).unwrap();
            let mut b2 = b.clone();
            b2.extend((0..grow).map(|i| format!("noise{i}")));
            prop_assert!(quality_label(&a, &b2, &t).unwrap() <= before);
        }

        #[test]
        fn jaccard_bounded_by_containments(a in values(30), b in values(30)) {
            let j = jaccard(&a, &b).unwrap();
            let ca = containment(&a, &b).unwrap();
            let cb = containment(&b, &a).unwrap();
            prop_assert!(j <= ca.min(cb) + 1e-15);
            if a.is_subset(&b) {
                prop_assert_eq!(ca, 1.0);
            }
        }
    }
}
