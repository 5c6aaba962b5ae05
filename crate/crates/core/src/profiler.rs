//! Unary attribute profiles: cardinalities, value distribution and syntactic meta-features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::exec::Execution;
use crate::ingest::{is_missing, looks_datetime, looks_numeric, prepare_value, Dataset};

/// Bumped whenever a profile field or its definition changes.
pub const PROFILE_SCHEMA_VERSION: u32 = 1;

/// Size of the frequent-word and soundex sketches.
pub const SKETCH_SIZE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Numeric,
    Alphabetic,
    Alphanumeric,
    NonAlphanumeric,
    Datetime,
}

impl DataType {
    pub const ALL: [DataType; 5] = [
        DataType::Numeric,
        DataType::Alphabetic,
        DataType::Alphanumeric,
        DataType::NonAlphanumeric,
        DataType::Datetime,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecificType {
    Phone,
    Email,
    Url,
    Ip,
    Username,
    Phrase,
    Other,
}

impl SpecificType {
    pub const ALL: [SpecificType; 7] = [
        SpecificType::Phone,
        SpecificType::Email,
        SpecificType::Url,
        SpecificType::Ip,
        SpecificType::Username,
        SpecificType::Phrase,
        SpecificType::Other,
    ];
}

/// Every unary meta-feature of one string attribute.
///
/// Frequencies come in two forms: counts per distinct value, and the same
/// counts divided by the total row count ("percentage" form). Uniqueness is
/// relative to non-missing rows, incompleteness to all rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeProfile {
    pub schema_version: u32,
    pub dataset_name: String,
    pub attribute_name: String,
    pub row_count: u64,

    pub cardinality: u64,
    pub uniqueness: f64,
    pub incompleteness: f64,
    pub entropy: f64,

    pub avg_frequency: f64,
    pub min_frequency: u64,
    pub max_frequency: u64,
    pub sd_frequency: f64,
    pub octiles: [f64; 8],
    pub min_perc_frequency: f64,
    pub max_perc_frequency: f64,
    pub sd_perc_frequency: f64,
    pub constancy: f64,
    pub frequent_words: BTreeSet<String>,
    pub soundex_words: BTreeSet<String>,

    pub data_type: DataType,
    pub specific_type: SpecificType,
    pub pct_data_type: BTreeMap<DataType, f64>,
    pub pct_specific_type: BTreeMap<SpecificType, f64>,
    pub longest_string: u64,
    pub shortest_string: u64,
    pub avg_string: f64,
    pub number_words: u64,
    pub avg_words: f64,
    pub min_words: u64,
    pub max_words: u64,
    pub sd_words: f64,
}

/// Shannon entropy in bits of a relative-frequency distribution.
pub fn entropy(freqs: &[f64]) -> f64 {
    let h: f64 = freqs
        .iter()
        .filter(|&&f| f > 0.0)
        .map(|&f| f * f.log2())
        .sum();
    if h == 0.0 {
        0.0
    } else {
        -h
    }
}

fn soundex_digit(c: char) -> Option<char> {
    match c {
        'b' | 'f' | 'p' | 'v' => Some('1'),
        'c' | 'g' | 'j' | 'k' | 'q' | 's' | 'x' | 'z' => Some('2'),
        'd' | 't' => Some('3'),
        'l' => Some('4'),
        'm' | 'n' => Some('5'),
        'r' => Some('6'),
        _ => None,
    }
}

/// American Soundex. Non-ASCII-letter characters are ignored; a word without
/// any ASCII letter has no code and yields an empty string.
pub fn soundex(word: &str) -> String {
    let mut letters = word
        .chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_lowercase());
    let Some(first) = letters.next() else {
        return String::new();
    };
    let mut code = String::with_capacity(4);
    code.push(first.to_ascii_uppercase());
    let mut last = soundex_digit(first);
    for c in letters {
        if code.len() == 4 {
            break;
        }
        match soundex_digit(c) {
            Some(d) => {
                if last != Some(d) {
                    code.push(d);
                }
                last = Some(d);
            }
            // h and w do not separate equal codes, vowels do
            None if c == 'h' || c == 'w' => {}
            None => last = None,
        }
    }
    while code.len() < 4 {
        code.push('0');
    }
    code
}

/// Lowercased, trimmed, accent-free form used for syntactic classification.
/// Unlike full preprocessing it keeps punctuation, which carries the shape of
/// emails, URLs and IP addresses.
pub fn syntactic_form(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect()
}

pub fn classify_data_type(value: &str) -> DataType {
    if looks_numeric(value) {
        return DataType::Numeric;
    }
    if looks_datetime(value) {
        return DataType::Datetime;
    }
    let mut letters = false;
    let mut digits = false;
    for c in value.chars() {
        if c.is_alphabetic() {
            letters = true;
        } else if c.is_numeric() {
            digits = true;
        } else if !c.is_whitespace() {
            return DataType::NonAlphanumeric;
        }
    }
    match (letters, digits) {
        (true, false) => DataType::Alphabetic,
        (_, true) => DataType::Alphanumeric,
        (false, false) => DataType::NonAlphanumeric,
    }
}

struct Patterns {
    email: Regex,
    url: Regex,
    ip: Regex,
    dotted: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        email: Regex::new(r"^[\w.%+\-]+@[\w\-]+(\.[\w\-]+)+$").unwrap(),
        url: Regex::new(r"^[a-z][a-z0-9+.\-]*://\S+$").unwrap(),
        ip: Regex::new(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$").unwrap(),
        dotted: Regex::new(r"^\d+(\.\d+){3}$").unwrap(),
    })
}

fn is_ip(value: &str) -> bool {
    patterns().ip.captures(value).is_some_and(|c| {
        (1..=4).all(|i| c[i].parse::<u16>().is_ok_and(|o| o <= 255))
    })
}

fn is_phone(value: &str) -> bool {
    let mut digits = 0usize;
    let mut others = 0usize;
    for c in value.chars() {
        if c.is_ascii_digit() {
            digits += 1;
        } else if matches!(c, ' ' | '-' | '+' | '(' | ')' | '.') {
            others += 1;
        } else {
            return false;
        }
    }
    (7..=15).contains(&digits) && digits >= others && !patterns().dotted.is_match(value)
}

pub fn classify_specific_type(value: &str) -> SpecificType {
    let p = patterns();
    if p.email.is_match(value) {
        return SpecificType::Email;
    }
    if p.url.is_match(value) {
        return SpecificType::Url;
    }
    if is_ip(value) {
        return SpecificType::Ip;
    }
    if is_phone(value) {
        return SpecificType::Phone;
    }
    let len = value.chars().count();
    let has_letter = value.chars().any(char::is_alphabetic);
    if has_letter && len < 6 && value.chars().all(char::is_alphanumeric) {
        return SpecificType::Username;
    }
    let has_space = value.chars().any(char::is_whitespace);
    if has_letter && ((len >= 6 && has_space) || len > 6) {
        return SpecificType::Phrase;
    }
    SpecificType::Other
}

/// Highest `k` keys by count, ties broken by ascending key.
pub fn top_k<K: Ord + Clone>(counts: impl IntoIterator<Item = (K, u64)>, k: usize) -> BTreeSet<K> {
    let mut all: Vec<(K, u64)> = counts.into_iter().collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.into_iter().take(k).map(|(key, _)| key).collect()
}

fn population_sd(values: impl Iterator<Item = f64> + Clone, mean: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt()
}

fn mode<T: Copy + Ord>(counts: &BTreeMap<T, u64>, fallback: T) -> T {
    // BTreeMap iterates in declaration order, so the first maximum wins ties.
    let mut best = (fallback, 0u64);
    for (&t, &c) in counts {
        if c > best.1 {
            best = (t, c);
        }
    }
    best.0
}

/// Profiles one attribute from its raw cells.
///
/// Missing markers and values that preprocess to whitespace count as missing.
/// Cardinality, distribution and length features use preprocessed values;
/// data and specific types use [`syntactic_form`].
pub fn profile_attribute(
    raw_values: &[Option<String>],
    attribute_name: &str,
    dataset_name: &str,
) -> AttributeProfile {
    let row_count = raw_values.len() as u64;

    let mut raw_counts: HashMap<&str, u64> = HashMap::new();
    for v in raw_values.iter().flatten() {
        if !is_missing(v) {
            *raw_counts.entry(v.as_str()).or_default() += 1;
        }
    }

    let mut value_counts: HashMap<String, u64> = HashMap::new();
    let mut data_types: BTreeMap<DataType, u64> = DataType::ALL.iter().map(|&t| (t, 0)).collect();
    let mut specific_types: BTreeMap<SpecificType, u64> =
        SpecificType::ALL.iter().map(|&t| (t, 0)).collect();
    let mut present = 0u64;
    let (mut len_min, mut len_max, mut len_sum) = (u64::MAX, 0u64, 0u64);
    let (mut wc_min, mut wc_max, mut wc_sum, mut wc_sq) = (u64::MAX, 0u64, 0u64, 0u128);

    for (raw, count) in raw_counts {
        let Some(value) = prepare_value(raw) else {
            continue;
        };
        present += count;
        let form = syntactic_form(raw);
        *data_types.get_mut(&classify_data_type(&form)).unwrap() += count;
        *specific_types.get_mut(&classify_specific_type(&form)).unwrap() += count;

        let len = value.chars().count() as u64;
        len_min = len_min.min(len);
        len_max = len_max.max(len);
        len_sum += len * count;
        let wc = value.split_whitespace().count() as u64;
        wc_min = wc_min.min(wc);
        wc_max = wc_max.max(wc);
        wc_sum += wc * count;
        wc_sq += (wc as u128) * (wc as u128) * count as u128;

        *value_counts.entry(value).or_default() += count;
    }

    let missing = row_count - present;
    let cardinality = value_counts.len() as u64;
    // sorted so that float reductions do not depend on hash order
    let mut counts: Vec<u64> = value_counts.values().copied().collect();
    counts.sort_unstable();

    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for (value, &c) in &value_counts {
        for w in value.split_whitespace() {
            *word_counts.entry(w).or_default() += c;
        }
    }
    let mut soundex_counts: HashMap<String, u64> = HashMap::new();
    for (&w, &c) in &word_counts {
        let code = soundex(w);
        if !code.is_empty() {
            *soundex_counts.entry(code).or_default() += c;
        }
    }
    let frequent_words = top_k(word_counts.into_iter().map(|(w, c)| (w.to_string(), c)), SKETCH_SIZE);
    let soundex_words = top_k(soundex_counts, SKETCH_SIZE);

    let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };

    let freq_entropy = if present == 0 {
        0.0
    } else {
        let rel: Vec<f64> = counts.iter().map(|&c| c as f64 / present as f64).collect();
        entropy(&rel)
    };

    let avg_frequency = ratio(present as f64, cardinality);
    let sd_frequency = population_sd(
        counts.iter().map(|&c| c as f64),
        avg_frequency,
        counts.len(),
    );

    let perc: Vec<f64> = counts.iter().map(|&c| c as f64 / row_count as f64).collect();
    let perc_mean = if perc.is_empty() {
        0.0
    } else {
        perc.iter().sum::<f64>() / perc.len() as f64
    };
    let mut octiles = [0.0; 8];
    if !perc.is_empty() {
        let d = perc.len();
        for (j, slot) in octiles.iter_mut().enumerate() {
            let rank = ((j + 1) * d).div_ceil(8);
            *slot = perc[rank - 1];
        }
    }

    let max_count = counts.iter().copied().max().unwrap_or(0);
    let wc_var = if present == 0 {
        0.0
    } else {
        let n = present as u128;
        let s = wc_sum as u128;
        // exact integer numerator of the population variance
        ((n * wc_sq - s * s) as f64) / (n * n) as f64
    };

    AttributeProfile {
        schema_version: PROFILE_SCHEMA_VERSION,
        dataset_name: dataset_name.to_string(),
        attribute_name: attribute_name.to_string(),
        row_count,
        cardinality,
        uniqueness: ratio(cardinality as f64, present),
        incompleteness: ratio(missing as f64, row_count),
        entropy: freq_entropy,
        avg_frequency,
        min_frequency: counts.iter().copied().min().unwrap_or(0),
        max_frequency: max_count,
        sd_frequency,
        octiles,
        min_perc_frequency: perc.first().copied().unwrap_or(0.0),
        max_perc_frequency: perc.last().copied().unwrap_or(0.0),
        sd_perc_frequency: population_sd(perc.iter().copied(), perc_mean, perc.len()),
        constancy: ratio(max_count as f64, row_count),
        frequent_words,
        soundex_words,
        data_type: mode(&data_types, DataType::NonAlphanumeric),
        specific_type: mode(&specific_types, SpecificType::Other),
        pct_data_type: data_types
            .into_iter()
            .map(|(t, c)| (t, ratio(c as f64, present)))
            .collect(),
        pct_specific_type: specific_types
            .into_iter()
            .map(|(t, c)| (t, ratio(c as f64, present)))
            .collect(),
        longest_string: len_max,
        shortest_string: if present == 0 { 0 } else { len_min },
        avg_string: ratio(len_sum as f64, present),
        number_words: wc_sum,
        avg_words: ratio(wc_sum as f64, present),
        min_words: if present == 0 { 0 } else { wc_min },
        max_words: wc_max,
        sd_words: wc_var.max(0.0).sqrt(),
    }
}

/// Profiles every eligible attribute of a dataset, in attribute order.
pub fn profile_dataset(dataset: &Dataset, exec: Execution) -> Vec<AttributeProfile> {
    let eligible: Vec<_> = dataset.eligible_attributes().collect();
    exec.map(&eligible, |a| {
        profile_attribute(&a.raw_values, &a.name, &dataset.name)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[Option<&str>]) -> Vec<Option<String>> {
        values.iter().map(|v| v.map(str::to_string)).collect()
    }

    fn some(values: &[&str]) -> Vec<Option<String>> {
        values.iter().map(|v| Some(v.to_string())).collect()
    }

    #[test]
    fn country_column_profile() {
        let p = profile_attribute(
            &some(&["Mexico", "Spain", "United States", "France", "Germany"]),
            "Country",
            "d_ref",
        );
        assert_eq!(p.cardinality, 5);
        assert_eq!(p.uniqueness, 1.0);
        assert_eq!(p.incompleteness, 0.0);
        assert_eq!(p.constancy, 0.2);
        assert_eq!(p.max_perc_frequency, p.constancy);
        assert!((p.entropy - 5f64.log2()).abs() < 1e-12);
        assert_eq!(p.longest_string, 13);
        assert_eq!(p.shortest_string, 5);
        assert_eq!(p.number_words, 6);
        assert_eq!(p.max_words, 2);
        assert_eq!(p.data_type, DataType::Alphabetic);
    }

    #[test]
    fn constant_column() {
        let p = profile_attribute(&some(&["United States"; 4]), "Country", "d2");
        assert_eq!(p.cardinality, 1);
        assert_eq!(p.constancy, 1.0);
        assert_eq!(p.entropy, 0.0);
        assert!(p.entropy.is_sign_positive());
        assert_eq!(p.octiles, [1.0; 8]);
    }

    #[test]
    fn missing_and_duplicates() {
        let p = profile_attribute(&col(&[Some("a"), Some("a"), Some("b"), None]), "x", "d");
        assert_eq!(p.incompleteness, 0.25);
        assert!((p.uniqueness - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.avg_frequency, 1.5);
        assert_eq!(p.min_frequency, 1);
        assert_eq!(p.max_frequency, 2);
        assert_eq!(p.sd_frequency, 0.5);
        assert_eq!(p.constancy, 0.5);
        assert_eq!(p.min_perc_frequency, 0.25);
    }

    #[test]
    fn all_missing_column() {
        let p = profile_attribute(&col(&[None, Some("!!"), Some("NA")]), "x", "d");
        assert_eq!(p.cardinality, 0);
        assert_eq!(p.entropy, 0.0);
        assert_eq!(p.incompleteness, 1.0);
        assert!(p.frequent_words.is_empty() && p.soundex_words.is_empty());
        assert!(p.pct_data_type.values().all(|&v| v == 0.0));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.5, 0.5]), 1.0);
        assert_eq!(entropy(&[1.0]), 0.0);
        assert_eq!(entropy(&[0.25; 4]), 2.0);
        assert_eq!(entropy(&[]), 0.0);
    }

    #[test]
    fn soundex_examples() {
        assert_eq!(soundex("robert"), "R163");
        assert_eq!(soundex("rupert"), "R163");
        assert_eq!(soundex("r"), "R000");
        assert_eq!(soundex(""), "");
        assert_eq!(soundex("123"), "");
        assert_eq!(soundex("ashcraft"), "A261");
        assert_eq!(soundex("tymczak"), "T522");
        assert_eq!(soundex("pfister"), "P236");
        assert_eq!(soundex("honeyman"), "H555");
        assert_eq!(soundex("rubin"), "R150");
    }

    #[test]
    fn specific_types() {
        assert_eq!(classify_specific_type("a@b.com"), SpecificType::Email);
        assert_eq!(classify_specific_type("https://x.org/a?b"), SpecificType::Url);
        assert_eq!(classify_specific_type("10.0.0.1"), SpecificType::Ip);
        assert_eq!(classify_specific_type("10.0.0.256"), SpecificType::Other);
        assert_eq!(classify_specific_type("+1 (555) 123-4567"), SpecificType::Phone);
        assert_eq!(classify_specific_type("bob12"), SpecificType::Username);
        assert_eq!(classify_specific_type("new york"), SpecificType::Phrase);
        assert_eq!(classify_specific_type("germany"), SpecificType::Phrase);
        assert_eq!(classify_specific_type("mexico"), SpecificType::Other);
        assert_eq!(classify_data_type("new york"), DataType::Alphabetic);
        assert_eq!(classify_data_type("6.595"), DataType::Numeric);
        assert_eq!(classify_data_type("2020-01-01"), DataType::Datetime);
        assert_eq!(classify_data_type("ab12"), DataType::Alphanumeric);
        assert_eq!(classify_data_type("a@b"), DataType::NonAlphanumeric);
    }

    #[test]
    fn syntactic_form_keeps_punctuation() {
        assert_eq!(syntactic_form("  José@Mail.COM "), "jose@mail.com");
    }

    #[test]
    fn top_k_ties_are_lexicographic() {
        let counts = (0..15).map(|i| (format!("w{i:02}"), if i == 14 { 5 } else { 1 }));
        let top = top_k(counts, 10);
        assert!(top.contains("w14"));
        assert!(top.contains("w00") && top.contains("w08"));
        assert!(!top.contains("w09"));
    }

    fn column() -> impl Strategy<Value = Vec<Option<String>>> {
        prop::collection::vec(
            prop_oneof![
                1 => Just(None),
                6 => "[a-c]{1,3}( [a-c]{1,2})?".prop_map(Some),
                1 => "[0-9]{1,3}".prop_map(Some),
            ],
            0..60,
        )
    }

    proptest! {
        #[test]
        fn invariants(values in column()) {
            let p = profile_attribute(&values, "a", "d");
            prop_assert!((0.0..=1.0).contains(&p.uniqueness));
            prop_assert!((0.0..=1.0).contains(&p.incompleteness));
            prop_assert!((0.0..=1.0).contains(&p.constancy));
            prop_assert!(p.min_frequency as f64 <= p.avg_frequency + 1e-12);
            prop_assert!(p.avg_frequency <= p.max_frequency as f64 + 1e-12);
            prop_assert!(p.octiles.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(p.max_perc_frequency, p.constancy);
            prop_assert!(p.frequent_words.len() <= SKETCH_SIZE);
            prop_assert!(p.soundex_words.len() <= SKETCH_SIZE);
            prop_assert_eq!(p.entropy == 0.0, p.cardinality <= 1);
            if p.cardinality > 0 {
                let s: f64 = p.pct_data_type.values().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_invariant(values in column(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = values.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = profile_attribute(&values, "a", "d");
            let b = profile_attribute(&shuffled, "a", "d");
            prop_assert_eq!(a, b);
        }

        #[test]
        fn duplication(values in column()) {
            let doubled: Vec<_> = values.iter().chain(values.iter()).cloned().collect();
            let a = profile_attribute(&values, "a", "d");
            let b = profile_attribute(&doubled, "a", "d");
            prop_assert_eq!(a.cardinality, b.cardinality);
            prop_assert_eq!(a.octiles, b.octiles);
            prop_assert_eq!(a.constancy, b.constancy);
            prop_assert!((a.entropy - b.entropy).abs() < 1e-12);
            prop_assert_eq!(&a.frequent_words, &b.frequent_words);
            prop_assert_eq!(&a.pct_data_type, &b.pct_data_type);
            prop_assert_eq!(a.longest_string, b.longest_string);
            prop_assert_eq!(a.avg_words, b.avg_words);
            prop_assert_eq!(2 * a.max_frequency, b.max_frequency);
            prop_assert_eq!(2 * a.min_frequency, b.min_frequency);
            prop_assert!((2.0 * a.sd_frequency - b.sd_frequency).abs() < 1e-9);
        }
    }
}
