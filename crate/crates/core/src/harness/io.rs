//! Dataset and result files.
//!
//! Datasets are read either as CSV (one point per line, comma-separated,
//! lines starting with `#` ignored) or in the `KDKM` binary layout:
//!
//! ```text
//! b"KDKM" | version: u8 = 1 | n: u64 LE | m: u32 LE | n*m f64 LE, row-major
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Dataset;
use crate::result::{ClusteringResult, RunMetrics};

pub const MAGIC: &[u8; 4] = b"KDKM";
pub const BINARY_VERSION: u8 = 1;
const HEADER_LEN: u64 = 4 + 1 + 8 + 4;

/// Schema tag written into every JSON result.
pub const RESULT_SCHEMA: &str = "kdkmeans.result/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Sniffs the magic bytes; anything else is treated as CSV.
pub fn detect_format(path: &Path) -> Result<DatasetFormat> {
    let mut head = [0u8; 4];
    let mut f = open(path)?;
    let mut read = 0;
    while read < 4 {
        match f.read(&mut head[read..]).map_err(|e| Error::io(path, e))? {
            0 => break,
            n => read += n,
        }
    }
    Ok(if read == 4 && &head == MAGIC {
        DatasetFormat::Binary
    } else {
        DatasetFormat::Csv
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let format = detect_format(path)?;
    load_dataset_as(path, format)
}

pub fn load_dataset_as(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let file = open(path)?;
    match format {
        DatasetFormat::Csv => read_csv(BufReader::new(file), path),
        DatasetFormat::Binary => {
            let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
            read_binary(BufReader::new(file), len, path)
        }
    }
}

/// Parses CSV points line by line without buffering the whole text.
pub fn read_csv<R: BufRead>(mut reader: R, path: &Path) -> Result<Dataset> {
    let mut coords = Vec::new();
    let mut dim = None;
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        line_no += 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let before = coords.len();
        for field in text.split(',') {
            let field = field.trim();
            let x: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("`{field}` is not a number")))?;
            if !x.is_finite() {
                return Err(parse_err(format!("non-finite value `{field}`")));
            }
            coords.push(x);
        }
        let width = coords.len() - before;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(parse_err(format!("expected {d} values, found {width}")));
            }
            Some(_) => {}
        }
    }
    let dim = dim.ok_or_else(|| format_err(path, "no data lines"))?;
    Dataset::from_flat(dim, coords)
}

pub fn read_binary<R: Read>(mut reader: R, file_len: u64, path: &Path) -> Result<Dataset> {
    let io = |e| Error::io(path, e);
    let mut header = [0u8; HEADER_LEN as usize];
    reader.read_exact(&mut header).map_err(|_| format_err(path, "truncated header"))?;
    if &header[..4] != MAGIC {
        return Err(format_err(path, "bad magic, expected KDKM"));
    }
    if header[4] != BINARY_VERSION {
        return Err(format_err(path, format!("unsupported version {}", header[4])));
    }
    let n = u64::from_le_bytes(header[5..13].try_into().expect("8 bytes"));
    let m = u32::from_le_bytes(header[13..17].try_into().expect("4 bytes"));
    if m == 0 {
        return Err(format_err(path, "dimensionality is zero"));
    }
    let values = n
        .checked_mul(u64::from(m))
        .ok_or_else(|| format_err(path, "n * m overflows"))?;
    let expected = values
        .checked_mul(8)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(path, "n * m overflows"))?;
    if expected != file_len {
        return Err(format_err(
            path,
            format!("header promises {expected} bytes, file has {file_len}"),
        ));
    }
    let values = usize::try_from(values).map_err(|_| format_err(path, "dataset too large"))?;
    let mut coords = Vec::with_capacity(values);
    let mut buf = [0u8; 8 * 1024];
    let mut remaining = values;
    while remaining > 0 {
        let take = remaining.min(buf.len() / 8);
        reader.read_exact(&mut buf[..take * 8]).map_err(io)?;
        coords.extend(
            buf[..take * 8]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))),
        );
        remaining -= take;
    }
    Dataset::from_flat(m as usize, coords).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_binary<W: Write>(data: &Dataset, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[BINARY_VERSION])?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(&(data.dim() as u32).to_le_bytes())?;
    for x in data.as_flat() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

/// Writes CSV; each line of `header` becomes a `#` comment.
pub fn write_csv<W: Write>(data: &Dataset, header: Option<&str>, mut w: W) -> std::io::Result<()> {
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    for p in data.iter() {
        write_row(&mut w, p)?;
    }
    w.flush()
}

fn write_row<W: Write>(w: &mut W, row: &[f64]) -> std::io::Result<()> {
    for (i, x) in row.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        // Display prints the shortest text that parses back to the same bits
        write!(w, "{x}")?;
    }
    writeln!(w)
}

pub fn save_dataset(data: &Dataset, path: &Path, format: DatasetFormat, header: Option<&str>) -> Result<()> {
    let w = create(path)?;
    match format {
        DatasetFormat::Csv => write_csv(data, header, w),
        DatasetFormat::Binary => write_binary(data, w),
    }
    .map_err(|e| Error::io(path, e))
}

/// On-disk JSON form of a clustering result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema: String,
    pub n: usize,
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    pub cluster_sizes: Vec<usize>,
    pub assignments: Vec<usize>,
    pub iterations_level1: Vec<usize>,
    pub iterations_level2: usize,
    pub metrics: RunMetrics,
    /// Echo of the configuration that produced the result.
    pub config: serde_json::Value,
}

impl ResultDocument {
    pub fn new(result: &ClusteringResult, config: serde_json::Value) -> Self {
        ResultDocument {
            schema: RESULT_SCHEMA.to_owned(),
            n: result.assignments.len(),
            k: result.k(),
            dim: result.centroids.dim(),
            centroids: result.centroids.to_rows(),
            cluster_sizes: result.cluster_sizes.clone(),
            assignments: result.assignments.clone(),
            iterations_level1: result.iterations_level1.clone(),
            iterations_level2: result.iterations_level2,
            metrics: result.metrics.clone(),
            config,
        }
    }
}

/// Centroids and labels read back from a result file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}

pub fn save_result<C: Serialize>(
    result: &ClusteringResult,
    config: &C,
    path: &Path,
    format: OutputFormat,
) -> Result<()> {
    let json_err = |source| Error::Json {
        path: PathBuf::from(path),
        source,
    };
    let echo = serde_json::to_value(config).map_err(json_err)?;
    let mut w = create(path)?;
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &ResultDocument::new(result, echo)).map_err(json_err)?;
            writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
        }
        OutputFormat::Csv => write_result_csv(result, &echo, &mut w).map_err(|e| Error::io(path, e)),
    }
}

fn write_result_csv<W: Write>(result: &ClusteringResult, echo: &serde_json::Value, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "# {RESULT_SCHEMA}")?;
    writeln!(w, "# config: {echo}")?;
    writeln!(
        w,
        "# n={} k={} dim={} iterations={} iterations_level2={} distance_evaluations={} wall_seconds={}",
        result.assignments.len(),
        result.k(),
        result.centroids.dim(),
        result.metrics.iterations,
        result.iterations_level2,
        result.metrics.counters.distance_evaluations,
        result.metrics.wall_seconds,
    )?;
    for (i, c) in result.centroids.positions().enumerate() {
        write!(w, "centroid,{i},")?;
        write_row(w, c)?;
    }
    for (i, a) in result.assignments.iter().enumerate() {
        writeln!(w, "point,{i},{a}")?;
    }
    w.flush()
}

pub fn load_result(path: &Path, format: OutputFormat) -> Result<LoadedResult> {
    match format {
        OutputFormat::Json => {
            let doc = load_result_document(path)?;
            Ok(LoadedResult {
                centroids: doc.centroids,
                assignments: doc.assignments,
            })
        }
        OutputFormat::Csv => load_result_csv(path),
    }
}

pub fn load_result_document(path: &Path) -> Result<ResultDocument> {
    let doc: ResultDocument = serde_json::from_reader(BufReader::new(open(path)?)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if doc.schema != RESULT_SCHEMA {
        return Err(format_err(path, format!("unknown schema `{}`", doc.schema)));
    }
    Ok(doc)
}

fn load_result_csv(path: &Path) -> Result<LoadedResult> {
    let reader = BufReader::new(open(path)?);
    let mut out = LoadedResult {
        centroids: Vec::new(),
        assignments: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: message.to_owned(),
        };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let kind = fields.next().unwrap_or_default();
        let index: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("missing row index"))?;
        match kind {
            "centroid" => {
                if index != out.centroids.len() {
                    return Err(bad("centroid rows out of order"));
                }
                let row = fields
                    .map(str::parse::<f64>)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("bad centroid coordinate"))?;
                out.centroids.push(row);
            }
            "point" => {
                if index != out.assignments.len() {
                    return Err(bad("point rows out of order"));
                }
                let label = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| bad("bad assignment"))?;
                out.assignments.push(label);
            }
            _ => return Err(bad("expected `centroid` or `point` row")),
        }
    }
    Ok(out)
}
