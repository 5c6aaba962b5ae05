//! Loading delimited files and deciding which attributes take part in join discovery.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Cell contents (case-insensitive, after trimming) that count as a missing value.
pub const MISSING_MARKERS: [&str; 5] = ["", "na", "n/a", "null", "nan"];

/// Share of sampled non-missing values that must look numeric or temporal
/// for an attribute to be ruled out.
pub const REAL_TYPE_THRESHOLD: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferredType {
    String,
    NumericAsString,
    DatetimeAsString,
    Other,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub raw_values: Vec<Option<String>>,
    pub inferred_type: InferredType,
    pub eligible: bool,
}

impl Attribute {
    /// A freshly loaded attribute; eligibility is undecided (false) until
    /// [`infer_eligibility`] runs.
    pub fn new(name: impl Into<String>, raw_values: Vec<Option<String>>) -> Self {
        Attribute {
            name: name.into(),
            raw_values,
            inferred_type: InferredType::Other,
            eligible: false,
        }
    }

    /// Preprocessed cells. Values with nothing but whitespace left become missing.
    pub fn prepared_values(&self) -> Vec<Option<String>> {
        self.raw_values
            .iter()
            .map(|v| v.as_deref().and_then(prepare_value))
            .collect()
    }

    /// Distinct preprocessed non-missing values.
    pub fn distinct_values(&self) -> HashSet<String> {
        self.prepared_values().into_iter().flatten().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub row_count: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, attributes: Vec<Attribute>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::DuplicateAttribute(a.name.clone()));
            }
        }
        let row_count = attributes.first().map_or(0, |a| a.raw_values.len());
        if let Some(bad) = attributes.iter().find(|a| a.raw_values.len() != row_count) {
            return Err(Error::InvalidParameter(format!(
                "attribute {:?} has {} cells, expected {row_count}",
                bad.name,
                bad.raw_values.len()
            )));
        }
        Ok(Dataset {
            name: name.into(),
            attributes,
            row_count,
        })
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn eligible_attributes(&self) -> impl Iterator<Item = &Attribute> {
        self.attributes.iter().filter(|a| a.eligible)
    }

    /// Runs [`infer_eligibility`] on every attribute.
    pub fn infer_eligibility(&mut self, sample: SampleSpec) {
        for a in &mut self.attributes {
            infer_eligibility(a, sample);
        }
    }
}

/// Reading interface for tabular sources. CSV is the only implementation.
pub trait TableFormat {
    fn read_table(&self, name: &str, source: &mut dyn Read, origin: &Path) -> Result<Dataset>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub quote: u8,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            quote: b'"',
            has_header: true,
        }
    }
}

impl TableFormat for CsvOptions {
    fn read_table(&self, name: &str, source: &mut dyn Read, origin: &Path) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(self.delimiter)
            .quote(self.quote)
            .double_quote(true)
            .has_headers(false)
            .flexible(true)
            .from_reader(source);

        let parse_err = |e: csv::Error| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        };

        let mut records = reader.records();
        let mut columns: Vec<Vec<Option<String>>>;
        let names: Vec<String>;
        match records.next() {
            None => {
                return Dataset::new(name, Vec::new());
            }
            Some(first) => {
                let first = first.map_err(parse_err)?;
                if self.has_header {
                    names = first.iter().map(|s| s.trim().to_string()).collect();
                    columns = vec![Vec::new(); names.len()];
                } else {
                    names = (1..=first.len()).map(|i| format!("column_{i}")).collect();
                    columns = first.iter().map(|c| vec![cell(c)]).collect();
                }
            }
        }

        for record in records {
            let record = record.map_err(parse_err)?;
            if record.len() != names.len() {
                return Err(Error::RaggedRow {
                    path: origin.to_path_buf(),
                    row: record.position().map_or(0, |p| p.line()),
                    expected: names.len(),
                    found: record.len(),
                });
            }
            for (col, value) in columns.iter_mut().zip(record.iter()) {
                col.push(cell(value));
            }
        }

        let attributes = names
            .into_iter()
            .zip(columns)
            .map(|(n, values)| Attribute::new(n, values))
            .collect();
        Dataset::new(name, attributes)
    }
}

fn cell(raw: &str) -> Option<String> {
    if is_missing(raw) {
        None
    } else {
        Some(raw.to_string())
    }
}

pub fn is_missing(raw: &str) -> bool {
    let t = raw.trim();
    MISSING_MARKERS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

/// Dataset name for a file: its stem.
pub fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Loads a delimited file. Eligibility is not inferred here.
pub fn load_dataset(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    options.read_table(&dataset_name(path), &mut reader, path)
}

/// Writes a dataset back as delimited text. Missing cells become empty fields.
pub fn write_csv<W: Write>(dataset: &Dataset, out: W, options: &CsvOptions) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(options.delimiter)
        .quote(options.quote)
        .from_writer(out);
    let to_err = |e: csv::Error| Error::Parse {
        path: dataset.name.clone().into(),
        message: e.to_string(),
    };
    if options.has_header {
        w.write_record(dataset.attributes.iter().map(|a| a.name.as_str()))
            .map_err(to_err)?;
    }
    for row in 0..dataset.row_count {
        w.write_record(
            dataset
                .attributes
                .iter()
                .map(|a| a.raw_values[row].as_deref().unwrap_or("")),
        )
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(&dataset.name, e))
}

/// Which values are inspected when detecting numeric or temporal attributes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Fraction of non-missing values to inspect; `>= 1.0` scans everything.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            fraction: 1.0,
            seed: 0,
        }
    }
}

/// Marks `attr` eligible unless it is empty or at least 90% of the sampled
/// non-missing values parse as numbers or datetimes.
pub fn infer_eligibility(attr: &mut Attribute, sample: SampleSpec) {
    let present: Vec<&str> = attr.raw_values.iter().flatten().map(String::as_str).collect();
    if present.is_empty() {
        attr.inferred_type = InferredType::Other;
        attr.eligible = false;
        return;
    }

    let picked: Vec<&str> = if sample.fraction >= 1.0 {
        present
    } else {
        let amount = ((present.len() as f64 * sample.fraction.max(0.0)).ceil() as usize)
            .clamp(1, present.len());
        let mut rng = ChaCha8Rng::seed_from_u64(sample.seed);
        let mut idx = rand::seq::index::sample(&mut rng, present.len(), amount).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| present[i]).collect()
    };

    let numeric = picked.iter().filter(|v| looks_numeric(v)).count();
    let temporal = picked
        .iter()
        .filter(|v| !looks_numeric(v) && looks_datetime(v))
        .count();
    let total = picked.len() as f64;
    if (numeric + temporal) as f64 >= REAL_TYPE_THRESHOLD * total {
        attr.inferred_type = if numeric >= temporal {
            InferredType::NumericAsString
        } else {
            InferredType::DatetimeAsString
        };
        attr.eligible = false;
    } else {
        attr.inferred_type = InferredType::String;
        attr.eligible = true;
    }
}

fn number_patterns() -> &'static [Regex; 2] {
    static RE: OnceLock<[Regex; 2]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$").unwrap(),
            Regex::new(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$").unwrap(),
        ]
    })
}

/// Plain decimal numbers, optionally signed, with exponent or thousands separators.
pub fn looks_numeric(raw: &str) -> bool {
    let t = raw.trim();
    !t.is_empty() && number_patterns().iter().any(|re| re.is_match(t))
}

const DATE_FORMATS: [&str; 8] = [
    "%Y-%m-%d", "%Y/%m/%d", "%d/%m/%Y", "%m/%d/%Y", "%d-%m-%Y", "%d.%m.%Y", "%Y%m%d", "%b %d %Y",
];
const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%d/%m/%Y %H:%M",
];
const TIME_FORMATS: [&str; 2] = ["%H:%M:%S", "%H:%M"];

pub fn looks_datetime(raw: &str) -> bool {
    use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
    let t = raw.trim();
    if t.len() < 4 {
        return false;
    }
    DATE_FORMATS
        .iter()
        .any(|f| NaiveDate::parse_from_str(t, f).is_ok())
        || DATETIME_FORMATS
            .iter()
            .any(|f| NaiveDateTime::parse_from_str(t, f).is_ok())
        || DateTime::parse_from_rfc3339(t).is_ok()
        || TIME_FORMATS
            .iter()
            .any(|f| NaiveTime::parse_from_str(t, f).is_ok())
}

/// Lowercases, strips accents and drops every character that is not a letter,
/// digit or whitespace.
pub fn preprocess_value(value: &str) -> String {
    value
        .to_lowercase()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect()
}

/// Preprocesses one non-missing cell; `None` when nothing but whitespace survives.
pub fn prepare_value(raw: &str) -> Option<String> {
    let p = preprocess_value(raw);
    if p.trim().is_empty() {
        None
    } else {
        Some(p)
    }
}

pub fn preprocess_values(values: &[String]) -> Vec<String> {
    values.iter().map(|v| preprocess_value(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HAPPINESS: &str = "Country,Happiness score,Schengen\n\
        Mexico,6.595,N\n\
        Spain,6.354,Y\n\
        United States,6.892,N\n\
        France,6.592,Y\n\
        Germany,6.985,Y\n";

    fn read(text: &str) -> Result<Dataset> {
        CsvOptions::default().read_table("t", &mut text.as_bytes(), Path::new("t.csv"))
    }

    #[test]
    fn loads_happiness_table() {
        let d = read(HAPPINESS).unwrap();
        assert_eq!(d.row_count, 5);
        assert_eq!(d.attributes.len(), 3);
        assert_eq!(d.attributes[1].name, "Happiness score");
        assert_eq!(d.attributes[0].raw_values[2].as_deref(), Some("United States"));
    }

    #[test]
    fn header_only_file_has_no_rows() {
        let d = read("a,b,c\n").unwrap();
        assert_eq!(d.row_count, 0);
        assert_eq!(d.attributes.len(), 3);
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = read("a,b,c\n1,2,3\nx,y\n").unwrap_err();
        match err {
            Error::RaggedRow {
                row, expected, found, ..
            } => {
                assert_eq!((row, expected, found), (3, 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quoted_fields_and_missing_markers() {
        let d = read("a,b\n\"x, y\",NA\n\"he said \"\"hi\"\"\",\n").unwrap();
        assert_eq!(d.attributes[0].raw_values[0].as_deref(), Some("x, y"));
        assert_eq!(d.attributes[0].raw_values[1].as_deref(), Some("he said \"hi\""));
        assert_eq!(d.attributes[1].raw_values, vec![None, None]);
    }

    #[test]
    fn custom_delimiter() {
        let opts = CsvOptions {
            delimiter: b';',
            ..CsvOptions::default()
        };
        let d = opts
            .read_table("t", &mut "a;b\n1,5;x\n".as_bytes(), Path::new("t"))
            .unwrap();
        assert_eq!(d.attributes[0].raw_values[0].as_deref(), Some("1,5"));
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(matches!(read("a,a\n1,2\n"), Err(Error::DuplicateAttribute(_))));
    }

    #[test]
    fn eligibility_of_happiness_table() {
        let mut d = read(HAPPINESS).unwrap();
        d.infer_eligibility(SampleSpec::default());
        assert!(d.attributes[0].eligible);
        assert!(!d.attributes[1].eligible);
        assert_eq!(d.attributes[1].inferred_type, InferredType::NumericAsString);
        assert!(d.attributes[2].eligible);
    }

    #[test]
    fn all_missing_is_ineligible() {
        let mut a = Attribute::new("x", vec![None, None]);
        infer_eligibility(&mut a, SampleSpec::default());
        assert!(!a.eligible);
    }

    #[test]
    fn dates_are_ineligible() {
        let vals = ["2020-01-03", "2021-12-31", "03/04/2019", "2020-01-03T10:00:00Z"];
        let mut a = Attribute::new("d", vals.iter().map(|s| Some(s.to_string())).collect());
        infer_eligibility(&mut a, SampleSpec::default());
        assert_eq!(a.inferred_type, InferredType::DatetimeAsString);
        assert!(!a.eligible);
    }

    #[test]
    fn sampled_eligibility_is_deterministic() {
        let vals: Vec<Option<String>> = (0..500)
            .map(|i| Some(if i % 7 == 0 { format!("w{i}") } else { i.to_string() }))
            .collect();
        let spec = SampleSpec {
            fraction: 0.1,
            seed: 42,
        };
        let mut a = Attribute::new("x", vals.clone());
        let mut b = Attribute::new("x", vals);
        infer_eligibility(&mut a, spec);
        infer_eligibility(&mut b, spec);
        assert_eq!(a, b);
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess_value("São Paulo!"), "sao paulo");
        assert_eq!(preprocess_value("MEXICO"), "mexico");
        assert_eq!(preprocess_value(""), "");
        assert_eq!(preprocess_value("Zürich-Nord"), "zurichnord");
    }

    #[test]
    fn numeric_detection() {
        for s in ["6.595", "-1", "1e5", "1,234,567.5", ".5"] {
            assert!(looks_numeric(s), "{s}");
        }
        for s in ["47M", "inf", "1.2.3", "", "abc"] {
            assert!(!looks_numeric(s), "{s}");
        }
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(s in "\\PC{0,40}") {
            let once = preprocess_value(&s);
            prop_assert_eq!(preprocess_value(&once), once);
        }

        #[test]
        fn reserialize_preserves_cells(
            rows in prop::collection::vec(
                prop::collection::vec(prop_oneof![Just(String::new()), "[a-z ,\"]{1,6}", Just("NA".to_string())], 3),
                0..20)
        ) {
            let mut text = String::from("a,b,c\n");
            {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &rows { w.write_record(r).unwrap(); }
                text.push_str(std::str::from_utf8(&w.into_inner().unwrap()).unwrap());
            }
            let first = read(&text).unwrap();
            let mut buf = Vec::new();
            write_csv(&first, &mut buf, &CsvOptions::default()).unwrap();
            let second = read(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(first.row_count, rows.len());
            prop_assert_eq!(second.row_count, first.row_count);
            for (x, y) in first.attributes.iter().zip(&second.attributes) {
                let mx: Vec<bool> = x.raw_values.iter().map(Option::is_none).collect();
                let my: Vec<bool> = y.raw_values.iter().map(Option::is_none).collect();
                prop_assert_eq!(mx, my);
            }
        }
    }
}
