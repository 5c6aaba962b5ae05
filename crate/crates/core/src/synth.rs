//! Seeded synthetic data lakes for training, tests and benchmarks.
//!
//! Each domain owns a pool of distinct values ordered by popularity. A string
//! column takes a window of its domain's pool and draws rows from it with Zipf
//! weights, so columns of the same domain overlap to varying degrees and columns
//! of different domains never do.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{write_csv, Attribute, CsvOptions, Dataset, SampleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    Word,
    Phrase,
    Code,
    Email,
    Phone,
    Url,
}

impl DomainKind {
    pub const ALL: [DomainKind; 6] = [
        DomainKind::Word,
        DomainKind::Phrase,
        DomainKind::Code,
        DomainKind::Email,
        DomainKind::Phone,
        DomainKind::Url,
    ];

    fn attribute_names(self) -> &'static [&'static str] {
        match self {
            DomainKind::Word => &["name", "Name", "city", "label"],
            DomainKind::Phrase => &["place", "Place", "location", "venue"],
            DomainKind::Code => &["code", "Code", "product_code", "sku"],
            DomainKind::Email => &["email", "Email", "contact", "mail"],
            DomainKind::Phone => &["phone", "Phone", "telephone", "tel"],
            DomainKind::Url => &["url", "URL", "website", "homepage"],
        }
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "ten", "vo", "su", "bel", "dor", "an", "te", "ri", "mon", "sa", "gu",
    "lin", "pe", "zo", "har", "ni", "qua", "de", "ful", "es",
];

fn word(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(2..=4);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    if let Some(first) = w.get(..1) {
        let upper = first.to_uppercase();
        w.replace_range(..1, &upper);
    }
    w
}

fn value(kind: DomainKind, rng: &mut impl Rng) -> String {
    match kind {
        DomainKind::Word => word(rng),
        DomainKind::Phrase => format!("{} {}", word(rng), word(rng)),
        DomainKind::Code => {
            let a = rng.gen_range(b'A'..=b'Z') as char;
            let b = rng.gen_range(b'A'..=b'Z') as char;
            format!("{a}{b}-{:04}", rng.gen_range(0..10_000))
        }
        DomainKind::Email => format!(
            "{}.{}@{}.org",
            word(rng).to_lowercase(),
            word(rng).to_lowercase(),
            ["mail", "post", "inbox"].choose(rng).unwrap()
        ),
        DomainKind::Phone => format!(
            "+{} {:03} {:03} {:03}",
            rng.gen_range(1..99),
            rng.gen_range(0..1000),
            rng.gen_range(0..1000),
            rng.gen_range(0..1000)
        ),
        DomainKind::Url => format!(
            "https://{}.com/{}",
            word(rng).to_lowercase(),
            word(rng).to_lowercase()
        ),
    }
}

/// Distinct values in popularity order (index 0 is the most popular).
#[derive(Clone, Debug)]
pub struct Domain {
    pub kind: DomainKind,
    pub values: Vec<String>,
}

impl Domain {
    pub fn generate(kind: DomainKind, size: usize, rng: &mut impl Rng) -> Self {
        let mut seen = HashSet::with_capacity(size);
        let mut values = Vec::with_capacity(size);
        while values.len() < size {
            let v = value(kind, rng);
            // distinct after preprocessing too, so pool sizes are exact
            if seen.insert(crate::ingest::preprocess_value(&v)) {
                values.push(v);
            }
        }
        Domain { kind, values }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LakeSpec {
    pub datasets: usize,
    pub string_attributes: usize,
    pub numeric_attributes: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    pub domains: usize,
    pub min_domain_size: usize,
    pub max_domain_size: usize,
    /// Share of columns whose window starts at the most popular value.
    pub prefix_share: f64,
    pub missing_rate: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for LakeSpec {
    fn default() -> Self {
        LakeSpec {
            datasets: 24,
            string_attributes: 4,
            numeric_attributes: 2,
            min_rows: 200,
            max_rows: 1500,
            domains: 8,
            min_domain_size: 60,
            max_domain_size: 2500,
            prefix_share: 0.6,
            missing_rate: 0.03,
            zipf_exponent: 0.8,
            seed: 1,
        }
    }
}

impl LakeSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        LakeSpec { seed, ..self }
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn string_column(domain: &Domain, rows: usize, spec: &LakeSpec, rng: &mut impl Rng) -> Vec<Option<String>> {
    let n = domain.values.len();
    let size = (log_uniform(rng, 0.02, 1.0) * n as f64).round().clamp(3.0, n as f64) as usize;
    let start = if rng.gen_bool(spec.prefix_share) {
        0
    } else {
        rng.gen_range(0..=n - size)
    };
    let weights: Vec<f64> = (0..size)
        .map(|k| 1.0 / ((start + k + 1) as f64).powf(spec.zipf_exponent))
        .collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    let shout = rng.gen_bool(0.1);
    (0..rows)
        .map(|_| {
            if rng.gen_bool(spec.missing_rate) {
                return None;
            }
            let v = &domain.values[start + pick.sample(rng)];
            Some(if shout { v.to_uppercase() } else { v.clone() })
        })
        .collect()
}

fn numeric_column(rows: usize, rng: &mut impl Rng) -> Vec<Option<String>> {
    let scale = log_uniform(rng, 1.0, 1e5);
    let integral = rng.gen_bool(0.5);
    (0..rows)
        .map(|_| {
            let x = rng.gen::<f64>() * scale;
            Some(if integral {
                format!("{}", x.round() as i64)
            } else {
                format!("{x:.3}")
            })
        })
        .collect()
}

/// Generates a lake. Eligibility is already inferred on every dataset.
pub fn generate_lake(spec: &LakeSpec) -> Result<Vec<Dataset>> {
    if spec.datasets == 0 || spec.domains == 0 || spec.min_rows == 0 || spec.min_rows > spec.max_rows {
        return Err(Error::InvalidParameter("lake spec needs datasets, domains and rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let domains: Vec<Domain> = (0..spec.domains)
        .map(|i| {
            let size = log_uniform(&mut rng, spec.min_domain_size as f64, spec.max_domain_size as f64);
            Domain::generate(DomainKind::ALL[i % DomainKind::ALL.len()], size.round() as usize, &mut rng)
        })
        .collect();

    (0..spec.datasets)
        .map(|d| {
            let rows = rng.gen_range(spec.min_rows..=spec.max_rows);
            let mut attributes = Vec::new();
            for s in 0..spec.string_attributes {
                let domain = domains.choose(&mut rng).unwrap();
                let base = domain.kind.attribute_names().choose(&mut rng).unwrap();
                attributes.push(Attribute::new(
                    format!("{base}_{s}"),
                    string_column(domain, rows, spec, &mut rng),
                ));
            }
            for k in 0..spec.numeric_attributes {
                attributes.push(Attribute::new(format!("measure_{k}"), numeric_column(rows, &mut rng)));
            }
            let mut ds = Dataset::new(format!("lake_{d:02}"), attributes)?;
            ds.infer_eligibility(SampleSpec::default());
            Ok(ds)
        })
        .collect()
}

/// Writes every dataset as `<name>.csv` under `dir`.
pub fn write_lake(datasets: &[Dataset], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    datasets
        .iter()
        .map(|d| {
            let path = dir.join(format!("{}.csv", d.name));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_csv(d, std::io::BufWriter::new(file), &CsvOptions::default())?;
            Ok(path)
        })
        .collect()
}

/// Streams a `rows` x `cols` table of mixed string values, for timing the profiler.
pub fn write_wide_table<W: Write>(mut out: W, rows: usize, cols: usize, seed: u64) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<Domain> = (0..cols)
        .map(|c| Domain::generate(DomainKind::ALL[c % DomainKind::ALL.len()], 500, &mut rng))
        .collect();
    let header: Vec<String> = (0..cols).map(|c| format!("col_{c}")).collect();
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for _ in 0..rows {
        line.clear();
        for (c, pool) in pools.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&pool.values[rng.gen_range(0..pool.values.len())]);
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}
