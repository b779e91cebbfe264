use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use serde::Deserialize;

use super::{
    CategoryTable, EdgeRecord, GraphError, NodeRecord, Result, DEFAULT_GAUSSIAN_SIGMA,
    MAX_GAUSSIAN_SIGMA,
};

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn malformed(line: u64, reason: impl Into<String>) -> GraphError {
    GraphError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn row_line(record: &StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn field<T: std::str::FromStr>(record: &StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = row_line(record);
    let raw = record
        .get(idx)
        .ok_or_else(|| malformed(line, format!("missing column {name}")))?;
    raw.parse()
        .map_err(|_| malformed(line, format!("column {name}: cannot parse {raw:?}")))
}

fn optional_f64(record: &StringRecord, idx: usize, name: &str) -> Result<Option<f64>> {
    match record.get(idx) {
        None | Some("") => Ok(None),
        Some(_) => field(record, idx, name).map(Some),
    }
}

/// Reads `id,lat,lon,category[,gaussian_mean,gaussian_sigma]` rows.
pub fn load_nodes(path: impl AsRef<Path>) -> Result<Vec<NodeRecord>> {
    parse_nodes(read_file(path.as_ref())?.as_bytes())
}

pub fn parse_nodes<R: Read>(input: R) -> Result<Vec<NodeRecord>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for record in reader(input).records() {
        let record = record.map_err(|e| malformed(0, e.to_string()))?;
        let line = row_line(&record);
        if !(4..=6).contains(&record.len()) {
            return Err(malformed(
                line,
                format!("expected 4 to 6 columns, found {}", record.len()),
            ));
        }
        let id: usize = field(&record, 0, "id")?;
        let latitude: f64 = field(&record, 1, "lat")?;
        let longitude: f64 = field(&record, 2, "lon")?;
        if !latitude.is_finite() || !longitude.is_finite() {
            return Err(malformed(line, "non-finite coordinate"));
        }
        let mean = optional_f64(&record, 4, "gaussian_mean")?.unwrap_or(0.0);
        let sigma = optional_f64(&record, 5, "gaussian_sigma")?.unwrap_or(DEFAULT_GAUSSIAN_SIGMA);
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(malformed(
                line,
                "gaussian_mean must be a nonnegative number",
            ));
        }
        if !(sigma > 0.0 && sigma <= MAX_GAUSSIAN_SIGMA) {
            return Err(malformed(line, "gaussian_sigma must lie in (0, 3]"));
        }
        if !ids.insert(id) {
            return Err(GraphError::DuplicateNodeId(id));
        }
        out.push(NodeRecord::new(id, latitude, longitude, &record[3]).with_inflow(mean, sigma));
    }
    Ok(out)
}

/// Reads `id,start,end,distance,category` rows, resolving each category
/// through `categories`.
pub fn load_edges(path: impl AsRef<Path>, categories: &CategoryTable) -> Result<Vec<EdgeRecord>> {
    parse_edges(read_file(path.as_ref())?.as_bytes(), categories)
}

pub fn parse_edges<R: Read>(input: R, categories: &CategoryTable) -> Result<Vec<EdgeRecord>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for record in reader(input).records() {
        let record = record.map_err(|e| malformed(0, e.to_string()))?;
        let line = row_line(&record);
        if record.len() != 5 {
            return Err(malformed(
                line,
                format!("expected 5 columns, found {}", record.len()),
            ));
        }
        let id: usize = field(&record, 0, "id")?;
        let start: usize = field(&record, 1, "start")?;
        let end: usize = field(&record, 2, "end")?;
        let distance: f64 = field(&record, 3, "distance")?;
        if !(distance.is_finite() && distance > 0.0) {
            return Err(malformed(line, "distance must be positive"));
        }
        let category = &record[4];
        let params = categories
            .get(category)
            .ok_or_else(|| GraphError::UnknownCategory {
                line,
                category: category.to_string(),
            })?;
        if !ids.insert(id) {
            return Err(GraphError::DuplicateEdgeId(id));
        }
        out.push(EdgeRecord::new(id, start, end, distance, category, *params));
    }
    Ok(out)
}

fn csv_error(e: impl std::fmt::Display) -> GraphError {
    GraphError::Parse {
        what: "csv output",
        reason: e.to_string(),
    }
}

pub fn write_nodes<W: Write>(out: W, nodes: &[NodeRecord]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    w.write_record([
        "id",
        "lat",
        "lon",
        "category",
        "gaussian_mean",
        "gaussian_sigma",
    ])
    .map_err(csv_error)?;
    for n in nodes {
        w.write_record([
            n.id.to_string(),
            n.latitude.to_string(),
            n.longitude.to_string(),
            n.category.clone(),
            n.gaussian_mean.to_string(),
            n.gaussian_sigma.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

pub fn write_edges<W: Write>(out: W, edges: &[EdgeRecord]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    w.write_record(["id", "start", "end", "distance", "category"])
        .map_err(csv_error)?;
    for e in edges {
        w.write_record([
            e.id.to_string(),
            e.start_node.to_string(),
            e.end_node.to_string(),
            e.distance.to_string(),
            e.category.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

#[derive(Deserialize)]
struct CategoryDocument {
    categories: CategoryTable,
}

/// Reads the `[categories.<name>]` tables of a TOML document.
pub fn load_categories(path: impl AsRef<Path>) -> Result<CategoryTable> {
    parse_categories(&read_file(path.as_ref())?)
}

pub fn parse_categories(text: &str) -> Result<CategoryTable> {
    let doc: CategoryDocument = toml::from_str(text).map_err(|e| GraphError::Parse {
        what: "category table",
        reason: e.to_string(),
    })?;
    doc.categories.validate()?;
    Ok(doc.categories)
}
