//! File formats: pools (CSV, JSONL), score caches, surrogate snapshots and
//! the per-run CSV outputs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fairaudit_core::harness::ExperimentSummary;
use fairaudit_core::selection::SelectionScore;
use fairaudit_core::{AuditExample, AuditPool, PoolError, RoundLog, Surrogate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(line: usize, detail: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PoolFormat {
    Csv,
    Jsonl,
}

impl PoolFormat {
    /// From the file extension; CSV unless it ends in `.jsonl` or `.json`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => PoolFormat::Jsonl,
            _ => PoolFormat::Csv,
        }
    }
}

pub fn load_pool(path: &Path, format: PoolFormat) -> Result<AuditPool, FormatError> {
    let file = File::open(path).map_err(io_err(path))?;
    match format {
        PoolFormat::Csv => read_pool_csv(BufReader::new(file)),
        PoolFormat::Jsonl => read_pool_jsonl(BufReader::new(file)),
    }
}

fn binary(field: &str, line: usize, value: &str) -> Result<u8, FormatError> {
    match value.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(parse_err(
            line,
            format!("{field} must be 0 or 1, got {other:?}"),
        )),
    }
}

/// Header `id,group,label,f0,…,f{d−1}` with an optional trailing `text`.
/// An empty text cell means no text.
pub fn read_pool_csv<R: io::Read>(reader: R) -> Result<AuditPool, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 3 || cols[..3] != ["id", "group", "label"] {
        return Err(parse_err(1, "header must start with id,group,label"));
    }
    let has_text = cols.last() == Some(&"text");
    let feature_cols = &cols[3..cols.len() - usize::from(has_text)];
    for (j, name) in feature_cols.iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(parse_err(
                1,
                format!("expected feature column f{j}, found {name:?}"),
            ));
        }
    }
    let d = feature_cols.len();
    let width = cols.len();
    let mut examples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record?;
        if record.len() != width {
            return Err(FormatError::Pool(PoolError::InconsistentDimension {
                row,
                expected: d,
                found: record.len().saturating_sub(3 + usize::from(has_text)),
            }));
        }
        let features = (0..d)
            .map(|j| {
                let raw = record[3 + j].trim();
                raw.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("f{j}: not a number: {raw:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut ex = AuditExample::new(
            record[0].to_string(),
            features,
            binary("group", line, &record[1])?,
            binary("label", line, &record[2])?,
        );
        if has_text && !record[width - 1].is_empty() {
            ex.text = Some(record[width - 1].to_string());
        }
        examples.push(ex);
    }
    Ok(AuditPool::new(examples)?)
}

/// One JSON object per line: `{"id", "group", "label", "features", "text"?}`.
/// Blank lines are skipped.
pub fn read_pool_jsonl<R: BufRead>(reader: R) -> Result<AuditPool, FormatError> {
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: AuditExample =
            serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        examples.push(ex);
    }
    Ok(AuditPool::new(examples)?)
}

pub fn write_pool_csv<W: Write>(pool: &AuditPool, writer: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    let has_text = pool.examples().iter().any(|e| e.text.is_some());
    let mut header: Vec<String> = ["id", "group", "label"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..pool.dim()).map(|j| format!("f{j}")));
    if has_text {
        header.push("text".into());
    }
    w.write_record(&header)?;
    for ex in pool.examples() {
        let mut rec = vec![ex.id.clone(), ex.group.to_string(), ex.label.to_string()];
        rec.extend(ex.features.iter().map(|v| v.to_string()));
        if has_text {
            rec.push(ex.text.clone().unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

pub fn write_pool_jsonl<W: Write>(pool: &AuditPool, mut writer: W) -> Result<(), FormatError> {
    for ex in pool.examples() {
        let line = serde_json::to_string(ex).expect("examples serialise");
        writeln!(writer, "{line}").map_err(|e| parse_err(0, e.to_string()))?;
    }
    Ok(())
}

pub fn save_pool(pool: &AuditPool, path: &Path, format: PoolFormat) -> Result<(), FormatError> {
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    match format {
        PoolFormat::Csv => write_pool_csv(pool, file),
        PoolFormat::Jsonl => write_pool_jsonl(pool, file),
    }
}

/// `id,score` rows. Scores must be finite and in `[0, 1]`.
pub fn read_score_cache<R: io::Read>(reader: R) -> Result<BTreeMap<String, f64>, FormatError> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        score: f64,
    }
    let mut out = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(reader);
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        if !(row.score.is_finite() && (0.0..=1.0).contains(&row.score)) {
            return Err(parse_err(
                line,
                format!("score {} outside [0, 1]", row.score),
            ));
        }
        if out.insert(row.id.clone(), row.score).is_some() {
            return Err(parse_err(line, format!("duplicate id {:?}", row.id)));
        }
    }
    Ok(out)
}

pub fn load_score_cache(path: &Path) -> Result<BTreeMap<String, f64>, FormatError> {
    read_score_cache(File::open(path).map_err(io_err(path))?)
}

pub fn write_score_cache<W: Write>(
    scores: &BTreeMap<String, f64>,
    writer: W,
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "score"])?;
    for (id, s) in scores {
        w.write_record([id.as_str(), &s.to_string()])?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

pub fn save_score_cache(scores: &BTreeMap<String, f64>, path: &Path) -> Result<(), FormatError> {
    write_score_cache(
        scores,
        BufWriter::new(File::create(path).map_err(io_err(path))?),
    )
}

pub fn save_snapshot(h: &Surrogate, path: &Path) -> Result<(), FormatError> {
    fs::write(path, h.to_snapshot()).map_err(io_err(path))
}

pub fn load_snapshot(path: &Path) -> Result<Surrogate, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Surrogate::from_snapshot(&text).map_err(|e| FormatError::Snapshot(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const LOG_HEADER: [&str; 15] = [
    "round",
    "queries",
    "batch",
    "empirical",
    "estimate",
    "error",
    "mu_min",
    "mu_max",
    "midpoint",
    "width",
    "smooth_min",
    "smooth_max",
    "gap_min",
    "gap_max",
    "batch_size",
];

/// Per-round log; batch ids are joined with `;`. Wall time is not written
/// here so repeated runs produce identical bytes.
pub fn write_round_logs<W: Write>(logs: &[RoundLog], writer: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LOG_HEADER)?;
    for l in logs {
        let c = l.certificate.as_ref();
        w.write_record([
            l.round.to_string(),
            l.queries.to_string(),
            l.batch.join(";"),
            opt(l.empirical),
            opt(l.estimate),
            opt(l.error),
            opt(c.map(|c| c.mu_min)),
            opt(c.map(|c| c.mu_max)),
            opt(c.map(|c| c.midpoint)),
            opt(c.map(|c| c.width)),
            opt(c.map(|c| c.smooth_min)),
            opt(c.map(|c| c.smooth_max)),
            opt(c.map(|c| c.feasibility_gap_min)),
            opt(c.map(|c| c.feasibility_gap_max)),
            l.batch.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

/// The columns of a round log that [`plot_rows`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRound {
    pub round: usize,
    pub queries: usize,
    pub batch: Vec<String>,
    pub estimate: Option<f64>,
    pub error: Option<f64>,
    pub width: Option<f64>,
}

pub fn read_round_logs<R: io::Read>(reader: R) -> Result<Vec<LoggedRound>, FormatError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column {name}")))
    };
    let (ir, iq, ib, ie, ierr, iw) = (
        col("round")?,
        col("queries")?,
        col("batch")?,
        col("estimate")?,
        col("error")?,
        col("width")?,
    );
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let num = |j: usize| -> Result<Option<f64>, FormatError> {
            let s = rec.get(j).unwrap_or("").trim();
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| parse_err(line, format!("not a number: {s:?}")))
            }
        };
        let int = |j: usize| -> Result<usize, FormatError> {
            let s = rec.get(j).unwrap_or("").trim();
            s.parse()
                .map_err(|_| parse_err(line, format!("not an integer: {s:?}")))
        };
        let batch = rec.get(ib).unwrap_or("");
        out.push(LoggedRound {
            round: int(ir)?,
            queries: int(iq)?,
            batch: if batch.is_empty() {
                Vec::new()
            } else {
                batch.split(';').map(String::from).collect()
            },
            estimate: num(ie)?,
            error: num(ierr)?,
            width: num(iw)?,
        });
    }
    Ok(out)
}

/// `round,wall_time_s`.
pub fn write_timing<W: Write>(logs: &[RoundLog], writer: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["round", "wall_time_s"])?;
    for l in logs {
        w.write_record([l.round.to_string(), opt(l.wall_time)])?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

/// `id,base,acq01,dist_weight,final,selected` for every scored candidate.
pub fn write_diagnostics<W: Write>(
    scores: &[SelectionScore],
    writer: W,
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "base", "acq01", "dist_weight", "final", "selected"])?;
    for s in scores {
        w.write_record([
            s.id.clone(),
            s.base.to_string(),
            opt(s.acq01),
            s.dist_weight.to_string(),
            s.final_score.to_string(),
            u8::from(s.selected).to_string(),
        ])?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

/// One row per strategy. `t_eps_*` columns follow the summary's epsilons;
/// unreached targets and undefined statistics are empty.
pub fn write_summary<W: Write>(
    summaries: &[ExperimentSummary],
    writer: W,
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    let epsilons: Vec<f64> = summaries
        .first()
        .map(|s| s.queries_to_epsilon.iter().map(|e| e.0).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = vec!["strategy".into(), "seeds".into()];
    header.extend(epsilons.iter().map(|e| format!("t_eps_{e}")));
    header.extend(
        [
            "auec",
            "auec_per_query",
            "coverage",
            "mean_violation",
            "width_error_pearson",
            "width_error_spearman",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for s in summaries {
        let mut rec = vec![s.strategy.to_string(), s.seeds.to_string()];
        rec.extend(
            s.queries_to_epsilon
                .iter()
                .map(|(_, t)| t.map(|t| t.to_string()).unwrap_or_default()),
        );
        rec.extend([
            opt(s.auec.map(|a| a.total)),
            opt(s.auec.map(|a| a.per_query)),
            opt(s.coverage),
            opt(s.mean_violation),
            opt(s.width_error_pearson),
            opt(s.width_error_spearman),
        ]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

/// `strategy,queries,mean_error,sd_error,seeds`.
pub fn write_budget_errors<W: Write>(
    summaries: &[ExperimentSummary],
    writer: W,
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["strategy", "queries", "mean_error", "sd_error", "seeds"])?;
    for s in summaries {
        for b in &s.at_budget {
            w.write_record([
                s.strategy.to_string(),
                b.queries.to_string(),
                b.mean.to_string(),
                opt(b.sd),
                b.seeds.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

/// Tidy long-format rows `strategy,seed,q,error,width`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub strategy: String,
    pub seed: u64,
    pub q: usize,
    pub error: Option<f64>,
    pub width: Option<f64>,
}

pub fn plot_rows(strategy: &str, seed: u64, logs: &[LoggedRound]) -> Vec<PlotRow> {
    logs.iter()
        .map(|l| PlotRow {
            strategy: strategy.to_string(),
            seed,
            q: l.queries,
            error: l.error,
            width: l.width,
        })
        .collect()
}

pub fn write_plot_rows<W: Write>(rows: &[PlotRow], writer: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["strategy", "seed", "q", "error", "width"])?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.seed.to_string(),
            r.q.to_string(),
            opt(r.error),
            opt(r.width),
        ])?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>, FormatError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn open_file(path: &Path) -> Result<BufReader<File>, FormatError> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}
