//! Task templates, domain vocabularies and the task file format.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ontology::ErrorClass;
use crate::orchestrator::TaskSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Sports,
    Business,
    Science,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Sports, Domain::Business, Domain::Science];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Sports => "sports",
            Domain::Business => "business",
            Domain::Science => "science",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn vocab(self) -> &'static DomainVocab {
        &VOCAB[self.index()]
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = UniverseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| UniverseError::UnknownDomain(s.to_string()))
    }
}

/// A task family: one procedure, one planted failure mode, and a surface
/// phrase per domain.
#[derive(Debug)]
pub struct Template {
    pub name: &'static str,
    /// Step texts; each canonicalizes to one operation.
    pub steps: &'static [&'static str],
    pub failure_mode: Option<ErrorClass>,
    /// Index of the step that receives the task entity.
    pub entity_step: usize,
    /// Index of the step that receives the metric property.
    pub metric_step: usize,
    phrases: [&'static str; 3],
}

impl Template {
    pub fn phrase(&self, domain: Domain) -> &'static str {
        self.phrases[domain.index()]
    }
}

const CV: Option<ErrorClass> = Some(ErrorClass::ConstraintViolation);
const ED: Option<ErrorClass> = Some(ErrorClass::EntityDisambiguation);
const TF: Option<ErrorClass> = Some(ErrorClass::ToolFailure);
const SM: Option<ErrorClass> = Some(ErrorClass::SchemaMismatch);

macro_rules! template {
    ($name:literal, [$($s:literal),+], $fm:expr, $e:literal, $m:literal, [$sp:literal, $bu:literal, $sc:literal]) => {
        Template {
            name: $name,
            steps: &[$($s),+],
            failure_mode: $fm,
            entity_step: $e,
            metric_step: $m,
            phrases: [$sp, $bu, $sc],
        }
    };
}

pub static TEMPLATES: [Template; 20] = [
    template!("entity_period_comparison", ["resolve entity", "filter by time", "aggregate", "compare"], ED, 0, 2,
        ["scout matchup", "benchmark competitor", "specimen contrast"]),
    template!("joined_leaderboard", ["lookup", "join", "rank", "format output"], None, 0, 2,
        ["roster standings", "vendor leaderboard", "citation ranking"]),
    template!("record_audit", ["search", "parse", "count", "verify"], SM, 0, 2,
        ["boxscore recount", "invoice reconciliation", "assay replication"]),
    template!("trend_chart", ["load", "clean", "moving average", "plot"], None, 0, 2,
        ["momentum streak", "sales trendline", "spectral drift"]),
    template!("schema_report", ["explore schema", "query", "sort", "write output"], SM, 1, 2,
        ["fixture almanac", "ledger schema", "genome database"]),
    template!("entity_parity", ["identify entity", "lookup", "normalize", "compare"], None, 0, 2,
        ["rival headtohead", "supplier parity", "isotopic equivalence"]),
    template!("closed_form", ["formulate problem", "derive", "compute", "verify"], CV, 0, 2,
        ["playbook geometry", "pricing formula", "kinetic derivation"]),
    template!("robust_forecast", ["load", "remove outliers", "fit model", "estimate"], None, 0, 3,
        ["draft projection", "demand forecast", "decay extrapolation"]),
    template!("pivot_dashboard", ["load", "deduplicate", "pivot", "chart"], TF, 0, 2,
        ["lineup rotation", "portfolio dashboard", "microscopy panel"]),
    template!("entity_census", ["resolve entity", "discover properties", "query", "count"], None, 0, 3,
        ["franchise registry", "subsidiary catalog", "taxonomy lineage"]),
    template!("grouped_ranking", ["read", "filter", "group by", "rank"], ED, 0, 2,
        ["bracket seeding", "account prioritisation", "reagent shortlist"]),
    template!("hypothesis_report", ["import data", "convert", "test hypothesis", "format output"], None, 0, 2,
        ["referee bias", "merger thesis", "null significance"]),
    template!("merged_dedup", ["search", "merge", "deduplicate", "sort"], TF, 0, 2,
        ["transfer rumours", "customer duplicates", "sample contamination"]),
    template!("period_swing", ["time window", "calculate", "compare", "chart"], None, 0, 1,
        ["clutch comeback", "earnings swing", "catalysis burst"]),
    template!("feed_conversion", ["parse", "validate input", "transform", "serialize"], SM, 0, 2,
        ["scoreboard feed", "purchase orders", "sensor telemetry"]),
    template!("rolling_leaders", ["lookup", "time window", "moving average", "rank"], None, 0, 2,
        ["hotstreak tracker", "ticker rally", "thermal cycling"]),
    template!("rough_estimate", ["frame problem", "estimate", "check result", "write output"], CV, 0, 1,
        ["coaching hunch", "budget guesstimate", "magnitude approximation"]),
    template!("normalized_totals", ["resolve entity", "select rows", "total by", "normalize", "verify"], None, 0, 2,
        ["injury report", "compliance audit", "protocol conformance"]),
    template!("fitted_significance", ["parse", "impute", "regress", "test hypothesis", "chart"], ED, 0, 2,
        ["training regimen", "marketing uplift", "dosage response"]),
    template!("sorted_census_chart", ["explore schema", "count", "standardize", "sort", "chart"], None, 1, 2,
        ["medal tally", "headcount breakdown", "phylogeny census"]),
];

struct DomainVocab {
    entities: [&'static str; 12],
    metrics: [&'static str; 8],
    qualifiers: [&'static str; 6],
}

static VOCAB: [DomainVocab; 3] = [
    DomainVocab {
        entities: [
            "okafor", "lindqvist", "moreau", "tanaka", "brennan", "castillo", "haddad", "novak", "petrov", "adeyemi",
            "kowalski", "ferreira",
        ],
        metrics: ["rebounds", "assists", "goals", "tackles", "saves", "steals", "touchdowns", "laps"],
        qualifiers: ["playoffs", "preseason", "tournament", "league", "derby", "championship"],
    },
    DomainVocab {
        entities: [
            "acmecorp", "globex", "initech", "umbrellaco", "hooli", "vandelay", "soylent", "wonka", "cyberdyne",
            "tyrell", "wayneco", "starkind",
        ],
        metrics: ["revenue", "margin", "churn", "payroll", "inventory", "dividends", "receivables", "bookings"],
        qualifiers: ["quarterly", "fiscal", "annual", "regional", "wholesale", "retail"],
    },
    DomainVocab {
        entities: [
            "xenon", "helium", "argon", "lithium", "cobalt", "tungsten", "zebrafish", "drosophila", "arabidopsis",
            "ecoli", "yeast", "nematode",
        ],
        metrics: ["wavelength", "halflife", "mutation", "viscosity", "enthalpy", "isotope", "spectra", "absorbance"],
        qualifiers: ["experimental", "simulated", "cryogenic", "calorimetric", "laboratory", "field"],
    },
];

/// Every surface token a domain can use in a description.
pub fn domain_tokens(domain: Domain) -> BTreeSet<&'static str> {
    let v = domain.vocab();
    let mut out: BTreeSet<&'static str> = v.entities.iter().chain(&v.metrics).chain(&v.qualifiers).copied().collect();
    for t in &TEMPLATES {
        out.extend(t.phrase(domain).split_whitespace());
    }
    out
}

/// A generated task with the simulation parameters behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTask {
    pub spec: TaskSpec,
    pub template: usize,
    pub difficulty: f64,
    pub failure_mode: Option<ErrorClass>,
    pub entity: String,
    pub metric: String,
    pub qualifier: String,
}

impl SimTask {
    pub fn template(&self) -> &'static Template {
        &TEMPLATES[self.template]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum UniverseError {
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("task file line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("no domains given")]
    NoDomains,
}

/// `ans-` followed by the first 12 hex digits of SHA-256 of the description.
pub fn hidden_oracle(description: &str) -> String {
    let digest = hex::encode(Sha256::digest(description.as_bytes()));
    format!("ans-{}", &digest[..12])
}

/// Deterministic task list. Task `i` uses template `i mod 20` and domain
/// `domains[(i / 20) mod len]`; surface parameters and difficulty come from
/// the seed. Descriptions are unique.
pub fn generate_tasks(n: usize, seed: u64, domains: &[Domain]) -> Result<Vec<SimTask>, UniverseError> {
    if domains.is_empty() {
        return Err(UniverseError::NoDomains);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let template = i % TEMPLATES.len();
        let domain = domains[(i / TEMPLATES.len()) % domains.len()];
        let v = domain.vocab();
        let t = &TEMPLATES[template];
        let difficulty = rng.gen_range(0.4..=1.0);
        let (entity, metric, qualifier, description) = loop {
            let e = v.entities[rng.gen_range(0..v.entities.len())];
            let m = v.metrics[rng.gen_range(0..v.metrics.len())];
            let q = v.qualifiers[rng.gen_range(0..v.qualifiers.len())];
            let d = format!("{} {e} {m} {q}", t.phrase(domain));
            if seen.insert(d.clone()) {
                break (e, m, q, d);
            }
        };
        out.push(SimTask {
            spec: TaskSpec {
                id: format!("{}-{i:04}", domain.as_str()),
                domain: domain.as_str().to_string(),
                hidden_oracle: hidden_oracle(&description),
                description,
            },
            template,
            difficulty,
            failure_mode: t.failure_mode,
            entity: entity.to_string(),
            metric: metric.to_string(),
            qualifier: qualifier.to_string(),
        });
    }
    Ok(out)
}

const TSV_HEADER: &str =
    "id\tdomain\ttemplate\tdifficulty\tfailure_mode\tentity\tmetric\tqualifier\tdescription\thidden_oracle";

/// Tab-separated task file with a header row.
pub fn tasks_to_tsv(tasks: &[SimTask]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for t in tasks {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.spec.id,
            t.spec.domain,
            TEMPLATES[t.template].name,
            t.difficulty,
            t.failure_mode.map_or("-", ErrorClass::as_str),
            t.entity,
            t.metric,
            t.qualifier,
            t.spec.description,
            t.spec.hidden_oracle
        ));
    }
    out
}

pub fn tasks_from_tsv(text: &str) -> Result<Vec<SimTask>, UniverseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || (i == 0 && line == TSV_HEADER) {
            continue;
        }
        let bad = |msg: &str| UniverseError::Malformed { line: line_no, msg: msg.to_string() };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(bad(&format!("expected 10 columns, found {}", cols.len())));
        }
        let domain: Domain = cols[1].parse().map_err(|_| bad("unknown domain"))?;
        let template = TEMPLATES.iter().position(|t| t.name == cols[2]).ok_or_else(|| bad("unknown template"))?;
        let difficulty: f64 = cols[3].parse().map_err(|_| bad("difficulty is not a number"))?;
        if !(0.0..=1.0).contains(&difficulty) {
            return Err(bad("difficulty outside [0, 1]"));
        }
        let failure_mode = match cols[4] {
            "-" => None,
            s => Some(ErrorClass::parse(s).ok_or_else(|| bad("unknown failure mode"))?),
        };
        if cols[8].trim().is_empty() || cols[9].trim().is_empty() {
            return Err(bad("empty description or answer"));
        }
        out.push(SimTask {
            spec: TaskSpec {
                id: cols[0].to_string(),
                domain: domain.as_str().to_string(),
                description: cols[8].to_string(),
                hidden_oracle: cols[9].to_string(),
            },
            template,
            difficulty,
            failure_mode,
            entity: cols[5].to_string(),
            metric: cols[6].to_string(),
            qualifier: cols[7].to_string(),
        });
    }
    Ok(out)
}
