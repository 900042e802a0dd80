//! Loading and normalising the human SI datasets.
//!
//! Every dataset is read from delimited text (comma or tab separated, UTF-8,
//! with a header row) and turned into [`StimulusItem`]s: one per unique
//! (scale, context) pair. Files holding one row per participant response are
//! averaged to item means here, so downstream code only ever sees item-level
//! SI rates.

pub mod schema;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scale::{is_multi_word, PartOfSpeech, Scale};
use schema::{Column, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "degen2015")]
    Degen2015,
    #[serde(rename = "vantiel2016")]
    VanTiel2016,
    #[serde(rename = "gotzner2018")]
    Gotzner2018,
    #[serde(rename = "pankratz2021")]
    Pankratz2021,
    #[serde(rename = "ronai2022")]
    Ronai2022,
    #[serde(rename = "ronai2022_cloze")]
    Ronai2022Cloze,
}

impl DatasetId {
    pub const ALL: [DatasetId; 6] = [
        DatasetId::Degen2015,
        DatasetId::VanTiel2016,
        DatasetId::Gotzner2018,
        DatasetId::Pankratz2021,
        DatasetId::Ronai2022,
        DatasetId::Ronai2022Cloze,
    ];

    /// The four scalar-diversity datasets, in report order.
    pub const CROSS_SCALE: [DatasetId; 4] = [
        DatasetId::Ronai2022,
        DatasetId::Pankratz2021,
        DatasetId::Gotzner2018,
        DatasetId::VanTiel2016,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Degen2015 => "degen2015",
            DatasetId::VanTiel2016 => "vantiel2016",
            DatasetId::Gotzner2018 => "gotzner2018",
            DatasetId::Pankratz2021 => "pankratz2021",
            DatasetId::Ronai2022 => "ronai2022",
            DatasetId::Ronai2022Cloze => "ronai2022_cloze",
        }
    }

    pub fn si_scale(self) -> SiScale {
        match self {
            DatasetId::Degen2015 => SiScale::Likert1To7,
            _ => SiScale::Proportion,
        }
    }

    pub fn is_cross_scale(self) -> bool {
        matches!(
            self,
            DatasetId::VanTiel2016 | DatasetId::Gotzner2018 | DatasetId::Pankratz2021 | DatasetId::Ronai2022
        )
    }

    /// Number of unique scales in the published release.
    pub fn expected_scales(self) -> Option<usize> {
        match self {
            DatasetId::Degen2015 => Some(1),
            DatasetId::VanTiel2016 => Some(39),
            DatasetId::Gotzner2018 => Some(67),
            DatasetId::Pankratz2021 => Some(50),
            DatasetId::Ronai2022 => Some(57),
            DatasetId::Ronai2022Cloze => None,
        }
    }

    /// Number of (scale, context) items in the published release.
    pub fn expected_items(self) -> Option<usize> {
        match self {
            DatasetId::Degen2015 => Some(1363),
            // three contexts per scale
            DatasetId::VanTiel2016 => Some(39 * 3),
            DatasetId::Gotzner2018 => Some(67),
            DatasetId::Pankratz2021 => Some(50),
            DatasetId::Ronai2022 => Some(57),
            DatasetId::Ronai2022Cloze => None,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetId::ALL
            .into_iter()
            .find(|id| id.as_str() == s.trim())
            .ok_or_else(|| IngestError::UnknownDataset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiScale {
    /// Mean similarity rating on a 1-7 Likert scale.
    #[serde(rename = "likert_1_7")]
    Likert1To7,
    /// Proportion of "yes" responses.
    #[serde(rename = "proportion_0_1")]
    Proportion,
}

impl SiScale {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            SiScale::Likert1To7 => (1.0, 7.0),
            SiScale::Proportion => (0.0, 1.0),
        }
    }

    pub fn contains(self, value: f64) -> bool {
        let (lo, hi) = self.bounds();
        value.is_finite() && value >= lo && value <= hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub id: DatasetId,
    pub source_path: PathBuf,
    pub si_scale: SiScale,
    /// Item count the load must reproduce; `None` disables the check
    /// (subsets, fixtures).
    pub expected_items: Option<usize>,
    pub expected_scales: Option<usize>,
}

impl DatasetSpec {
    pub fn new(id: DatasetId, source_path: impl Into<PathBuf>) -> Self {
        DatasetSpec {
            id,
            source_path: source_path.into(),
            si_scale: id.si_scale(),
            expected_items: id.expected_items(),
            expected_scales: id.expected_scales(),
        }
    }

    pub fn without_count_checks(mut self) -> Self {
        self.expected_items = None;
        self.expected_scales = None;
        self
    }
}

/// One (scale, context, human SI rate) record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusItem {
    pub dataset_id: DatasetId,
    #[serde(flatten)]
    pub scale: Scale,
    pub context: String,
    pub human_si: f64,
    #[serde(default)]
    pub covariates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloze_accessibility: Option<f64>,
    /// Byte offset of the weak scalemate occurrence used for templating, when
    /// the context contains more than one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_offset: Option<usize>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown dataset id `{0}`")]
    UnknownDataset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed delimited text: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}: no rows")]
    NoRows(PathBuf),
    #[error("{dataset}: missing column `{column}` (accepted headers: {aliases})")]
    MissingColumn {
        dataset: String,
        column: &'static str,
        aliases: String,
    },
    #[error("{dataset} line {line}: {message}")]
    BadRow {
        dataset: String,
        line: u64,
        message: String,
    },
    #[error("{dataset}: expected {expected} {what}, found {found}")]
    CountMismatch {
        dataset: DatasetId,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("`{0}` has no item schema; load it with load_cloze")]
    NotAnItemDataset(DatasetId),
    #[error("duplicate cloze record for scale <{0}, {1}>")]
    DuplicateCloze(String, String),
    #[error("item store line {line}: {source}")]
    Store {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Counts gathered while loading one file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rejected_out_of_bounds: usize,
    pub dropped_multi_word_rows: usize,
    pub dropped_multi_word_scales: usize,
    pub aggregated_per_response: bool,
    pub items: usize,
    pub scales: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub items: Vec<StimulusItem>,
    pub report: IngestReport,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let first_line = bytes.split(|b| *b == b'\n').next().unwrap_or_default();
    let delimiter = if first_line.contains(&b'\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, record));
    }
    if rows.is_empty() {
        return Err(IngestError::NoRows(path.to_path_buf()));
    }
    Ok(Table { headers, rows })
}

fn require(headers: &[String], dataset: &str, column: &Column) -> Result<usize, IngestError> {
    schema::find(headers, column).ok_or_else(|| IngestError::MissingColumn {
        dataset: dataset.to_string(),
        column: column.name,
        aliases: column.aliases.join(", "),
    })
}

fn parse_number(raw: &str, si_scale: SiScale) -> Option<f64> {
    if si_scale == SiScale::Proportion {
        match raw.to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" => return Some(1.0),
            "no" | "n" | "false" => return Some(0.0),
            _ => {}
        }
    }
    raw.parse::<f64>().ok()
}

struct Resolved {
    weak: Option<usize>,
    strong: Option<usize>,
    pos: Option<usize>,
    context: usize,
    si: usize,
    per_response: bool,
    covariates: Vec<(&'static str, usize)>,
    weak_offset: Option<usize>,
}

fn resolve(schema: &Schema, headers: &[String]) -> Result<Resolved, IngestError> {
    let name = schema.id.as_str();
    let opt =
        |c: Option<Column>| -> Result<Option<usize>, IngestError> { c.map(|c| require(headers, name, &c)).transpose() };
    let (si, per_response) = match schema::find(headers, &schema.si.item_level) {
        Some(i) => (i, false),
        None => match schema::find(headers, &schema.si.per_response) {
            Some(i) => (i, true),
            None => {
                return Err(IngestError::MissingColumn {
                    dataset: name.to_string(),
                    column: schema.si.item_level.name,
                    aliases: schema
                        .si
                        .item_level
                        .aliases
                        .iter()
                        .chain(schema.si.per_response.aliases)
                        .copied()
                        .collect::<Vec<_>>()
                        .join(", "),
                })
            }
        },
    };
    let covariates = schema
        .covariates
        .iter()
        .map(|c| require(headers, name, c).map(|i| (c.name, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Resolved {
        weak: opt(schema.weak)?,
        strong: opt(schema.strong)?,
        pos: opt(schema.pos)?,
        context: require(headers, name, &schema.context)?,
        si,
        per_response,
        covariates,
        weak_offset: schema.weak_offset.and_then(|c| schema::find(headers, &c)),
    })
}

struct Group {
    scale: Scale,
    context: String,
    si_sum: f64,
    responses: usize,
    covariates: BTreeMap<String, f64>,
    weak_offset: Option<usize>,
}

/// Loads one dataset into item-level records.
///
/// Rows whose SI value falls outside the dataset's scale are rejected and
/// counted; rows whose scale has a multi-word member are dropped and counted.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Ingested, IngestError> {
    let schema = schema::schema_for(spec.id).ok_or(IngestError::NotAnItemDataset(spec.id))?;
    let table = read_table(&spec.source_path)?;
    let cols = resolve(&schema, &table.headers)?;
    let name = spec.id.as_str();
    let bad_row = |line: u64, message: String| IngestError::BadRow {
        dataset: name.to_string(),
        line,
        message,
    };

    let mut report = IngestReport {
        rows_read: table.rows.len(),
        aggregated_per_response: cols.per_response,
        ..IngestReport::default()
    };
    let mut multi_word_scales = HashSet::new();
    let mut groups: IndexMap<(Scale, String), Group> = IndexMap::new();

    for (line, row) in &table.rows {
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let scale = match (cols.weak, cols.strong) {
            (Some(w), Some(s)) => {
                let weak = field(w);
                let strong = field(s);
                if is_multi_word(weak) || is_multi_word(strong) {
                    report.dropped_multi_word_rows += 1;
                    multi_word_scales.insert((weak.to_string(), strong.to_string()));
                    continue;
                }
                let pos = match cols.pos {
                    Some(p) => field(p)
                        .parse::<PartOfSpeech>()
                        .map_err(|e| bad_row(*line, e.to_string()))?,
                    None => PartOfSpeech::Quant,
                };
                Scale::new(weak, strong, pos).map_err(|e| bad_row(*line, e.to_string()))?
            }
            _ => Scale::some_all(),
        };
        let context = field(cols.context).to_string();
        if context.is_empty() {
            return Err(bad_row(*line, "empty context".into()));
        }
        let raw_si = field(cols.si);
        let si = parse_number(raw_si, spec.si_scale)
            .ok_or_else(|| bad_row(*line, format!("SI value `{raw_si}` is not a number")))?;
        if !spec.si_scale.contains(si) {
            report.rejected_out_of_bounds += 1;
            continue;
        }
        let mut covariates = BTreeMap::new();
        for (cov, i) in &cols.covariates {
            let raw = field(*i);
            let v = raw
                .parse::<f64>()
                .map_err(|_| bad_row(*line, format!("covariate {cov} = `{raw}` is not a number")))?;
            covariates.insert((*cov).to_string(), v);
        }
        let weak_offset = match cols.weak_offset.map(field) {
            Some("") | None => None,
            Some(raw) => Some(
                raw.parse::<usize>()
                    .map_err(|_| bad_row(*line, format!("bad weak offset `{raw}`")))?,
            ),
        };

        let key = (scale.clone(), context.clone());
        match groups.get_mut(&key) {
            Some(g) => {
                if g.covariates != covariates {
                    warn!("{name} line {line}: covariates differ between responses of one item; keeping the first");
                }
                g.si_sum += si;
                g.responses += 1;
            }
            None => {
                groups.insert(
                    key,
                    Group {
                        scale,
                        context,
                        si_sum: si,
                        responses: 1,
                        covariates,
                        weak_offset,
                    },
                );
            }
        }
    }

    report.dropped_multi_word_scales = multi_word_scales.len();
    if report.dropped_multi_word_rows > 0 {
        info!(
            "{name}: dropped {} rows ({} scales) with multi-word scalemates",
            report.dropped_multi_word_rows, report.dropped_multi_word_scales
        );
    }
    if report.rejected_out_of_bounds > 0 {
        warn!(
            "{name}: rejected {} rows with SI outside {:?}",
            report.rejected_out_of_bounds,
            spec.si_scale.bounds()
        );
    }
    if !cols.per_response {
        if let Some(((scale, context), _)) = groups.iter().find(|(_, g)| g.responses > 1) {
            return Err(IngestError::BadRow {
                dataset: name.to_string(),
                line: 0,
                message: format!("item-level file repeats item {scale} / `{context}`"),
            });
        }
    }

    let items: Vec<StimulusItem> = groups
        .into_values()
        .map(|g| StimulusItem {
            dataset_id: spec.id,
            scale: g.scale,
            context: g.context,
            human_si: g.si_sum / g.responses as f64,
            covariates: g.covariates,
            cloze_accessibility: None,
            weak_offset: g.weak_offset,
        })
        .collect();

    report.items = items.len();
    report.scales = unique_scales(&items);
    if let Some(expected) = spec.expected_items {
        if expected != report.items {
            return Err(IngestError::CountMismatch {
                dataset: spec.id,
                what: "items",
                expected,
                found: report.items,
            });
        }
    }
    if let Some(expected) = spec.expected_scales {
        if expected != report.scales {
            return Err(IngestError::CountMismatch {
                dataset: spec.id,
                what: "scales",
                expected,
                found: report.scales,
            });
        }
    }
    Ok(Ingested { items, report })
}

pub fn unique_scales(items: &[StimulusItem]) -> usize {
    items.iter().map(|i| &i.scale).collect::<HashSet<_>>().len()
}

/// Empirical accessibility of a strong scalemate from the Cloze task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClozeRecord {
    pub weak: String,
    pub strong: String,
    pub accessibility: f64,
}

pub fn load_cloze(path: &Path) -> Result<Vec<ClozeRecord>, IngestError> {
    let table = read_table(path)?;
    let name = DatasetId::Ronai2022Cloze.as_str();
    let [weak, strong, acc] = schema::CLOZE_COLUMNS;
    let weak = require(&table.headers, name, &weak)?;
    let strong = require(&table.headers, name, &strong)?;
    let acc = require(&table.headers, name, &acc)?;
    table
        .rows
        .iter()
        .map(|(line, row)| {
            let f = |i: usize| row.get(i).unwrap_or("").trim();
            let accessibility = f(acc)
                .parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| IngestError::BadRow {
                    dataset: name.to_string(),
                    line: *line,
                    message: format!("accessibility `{}` not in [0, 1]", f(acc)),
                })?;
            Ok(ClozeRecord {
                weak: f(weak).to_string(),
                strong: f(strong).to_string(),
                accessibility,
            })
        })
        .collect()
}

/// Attaches Cloze accessibility to items by scale. Unmatched items are kept
/// with the field unset.
pub fn join_cloze(items: &[StimulusItem], records: &[ClozeRecord]) -> Result<Vec<StimulusItem>, IngestError> {
    let mut by_scale: HashMap<(String, String), f64> = HashMap::new();
    for r in records {
        let key = (r.weak.to_lowercase(), r.strong.to_lowercase());
        if by_scale.insert(key, r.accessibility).is_some() {
            return Err(IngestError::DuplicateCloze(r.weak.clone(), r.strong.clone()));
        }
    }
    Ok(items
        .iter()
        .map(|item| {
            let key = (item.scale.weak.to_lowercase(), item.scale.strong.to_lowercase());
            StimulusItem {
                cloze_accessibility: by_scale.get(&key).copied(),
                ..item.clone()
            }
        })
        .collect())
}

/// Writes items as line-delimited JSON, one record per line.
pub fn write_store<W: Write>(items: &[StimulusItem], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_store<R: BufRead>(input: R) -> Result<Vec<StimulusItem>, IngestError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: PathBuf::from("<item store>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|source| IngestError::Store { line: i + 1, source })?);
    }
    Ok(items)
}
