//! Profile normalization and pairwise distance vectors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::{AttributeProfile, PROFILE_SCHEMA_VERSION};

/// Layout version of [`FeatureVector`]. Changing [`FEATURE_NAMES`] or any
/// distance definition requires a bump.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Meta-features that are Z-score normalized before differencing.
pub const NORMALIZED_FEATURES: [&str; 14] = [
    "cardinality",
    "entropy",
    "avg_frequency",
    "min_frequency",
    "max_frequency",
    "sd_frequency",
    "longest_string",
    "shortest_string",
    "avg_string",
    "number_words",
    "avg_words",
    "min_words",
    "max_words",
    "sd_words",
];

/// Component names of a distance vector, in order.
pub const FEATURE_NAMES: [&str; 30] = [
    "cardinality",
    "entropy",
    "avg_frequency",
    "min_frequency",
    "max_frequency",
    "sd_frequency",
    "longest_string",
    "shortest_string",
    "avg_string",
    "number_words",
    "avg_words",
    "min_words",
    "max_words",
    "sd_words",
    "uniqueness",
    "incompleteness",
    "min_perc_frequency",
    "max_perc_frequency",
    "sd_perc_frequency",
    "constancy",
    "octiles",
    "frequent_words",
    "soundex_words",
    "data_type",
    "specific_type",
    "pct_data_type",
    "pct_specific_type",
    "best_containment",
    "flipped_containment",
    "name_distance",
];

pub const BASE_WIDTH: usize = FEATURE_NAMES.len();

/// Index of the first pair feature within a distance vector.
pub const PAIR_OFFSET: usize = BASE_WIDTH - 3;

fn normalized_values(p: &AttributeProfile) -> [f64; 14] {
    [
        p.cardinality as f64,
        p.entropy,
        p.avg_frequency,
        p.min_frequency as f64,
        p.max_frequency as f64,
        p.sd_frequency,
        p.longest_string as f64,
        p.shortest_string as f64,
        p.avg_string,
        p.number_words as f64,
        p.avg_words,
        p.min_words as f64,
        p.max_words as f64,
        p.sd_words,
    ]
}

fn plain_values(p: &AttributeProfile) -> [f64; 6] {
    [
        p.uniqueness,
        p.incompleteness,
        p.min_perc_frequency,
        p.max_perc_frequency,
        p.sd_perc_frequency,
        p.constancy,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMoments {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Population mean and standard deviation of each normalized meta-feature,
/// in [`NORMALIZED_FEATURES`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub features: Vec<FeatureMoments>,
    pub population_size: usize,
}

impl NormalizationStats {
    pub fn get(&self, name: &str) -> Option<&FeatureMoments> {
        self.features.iter().find(|m| m.name == name)
    }

    /// Z-scores of the normalized meta-features of `p`.
    pub fn zscores(&self, p: &AttributeProfile) -> [f64; 14] {
        let raw = normalized_values(p);
        std::array::from_fn(|i| {
            let m = &self.features[i];
            zscore(raw[i], m.mean, m.sd)
        })
    }
}

/// Fits population moments over the comparison population.
pub fn fit_normalization<'a, I>(profiles: I) -> Result<NormalizationStats>
where
    I: IntoIterator<Item = &'a AttributeProfile>,
{
    let rows: Vec<[f64; 14]> = profiles.into_iter().map(normalized_values).collect();
    let n = rows.len();
    if n < 2 {
        return Err(Error::PopulationTooSmall(n));
    }
    let features = NORMALIZED_FEATURES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
            FeatureMoments {
                name: name.to_string(),
                mean,
                sd: var.sqrt(),
            }
        })
        .collect();
    Ok(NormalizationStats {
        features,
        population_size: n,
    })
}

/// `(x - mean) / sd`, or 0 for a degenerate population.
pub fn zscore(x: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        (x - mean) / sd
    }
}

/// Binary meta-features of an attribute pair. `a` is the query side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub best_containment: f64,
    pub flipped_containment: f64,
    pub name_distance: f64,
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance divided by the longer name's length.
pub fn name_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

pub fn pair_features(a: &AttributeProfile, b: &AttributeProfile) -> Result<PairFeatures> {
    for p in [a, b] {
        if p.cardinality == 0 {
            return Err(Error::EmptyAttribute(format!(
                "{}.{}",
                p.dataset_name, p.attribute_name
            )));
        }
    }
    let (ca, cb) = (a.cardinality as f64, b.cardinality as f64);
    Ok(PairFeatures {
        best_containment: ca.min(cb) / ca,
        flipped_containment: ca.min(cb) / ca.max(cb),
        name_distance: name_distance(&a.attribute_name, &b.attribute_name),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema_version: u32,
}

impl FeatureVector {
    pub fn pair(&self) -> PairFeatures {
        PairFeatures {
            best_containment: self.values[PAIR_OFFSET],
            flipped_containment: self.values[PAIR_OFFSET + 1],
            name_distance: self.values[PAIR_OFFSET + 2],
        }
    }
}

/// `1 - |a ∩ b| / |a ∪ b|`, 0 when both are empty.
pub fn sketch_distance(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        1.0 - a.intersection(b).count() as f64 / union as f64
    }
}

/// Half the L1 distance between two share maps (total variation).
pub fn share_distance<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let keys: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0
}

fn check_schema(p: &AttributeProfile) -> Result<()> {
    if p.schema_version != PROFILE_SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            expected: PROFILE_SCHEMA_VERSION,
            found: p.schema_version,
        });
    }
    Ok(())
}

/// Distance vector between query profile `a` and candidate profile `b`.
pub fn distance_vector(
    a: &AttributeProfile,
    b: &AttributeProfile,
    stats: &NormalizationStats,
) -> Result<FeatureVector> {
    check_schema(a)?;
    check_schema(b)?;
    let pair = pair_features(a, b)?;

    let mut values = Vec::with_capacity(BASE_WIDTH);
    let (za, zb) = (stats.zscores(a), stats.zscores(b));
    values.extend(za.iter().zip(&zb).map(|(x, y)| (x - y).abs()));
    let (pa, pb) = (plain_values(a), plain_values(b));
    values.extend(pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()));
    values.push(
        a.octiles
            .iter()
            .zip(&b.octiles)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / 8.0,
    );
    values.push(sketch_distance(&a.frequent_words, &b.frequent_words));
    values.push(sketch_distance(&a.soundex_words, &b.soundex_words));
    values.push(f64::from(u8::from(a.data_type != b.data_type)));
    values.push(f64::from(u8::from(a.specific_type != b.specific_type)));
    values.push(share_distance(&a.pct_data_type, &b.pct_data_type));
    values.push(share_distance(&a.pct_specific_type, &b.pct_specific_type));
    values.push(pair.best_containment);
    values.push(pair.flipped_containment);
    values.push(pair.name_distance);
    debug_assert_eq!(values.len(), BASE_WIDTH);

    Ok(FeatureVector {
        values,
        schema_version: FEATURE_SCHEMA_VERSION,
    })
}
