use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{format_exact, parse_exact, MetricReport, COLUMNS};

/// Identifies where a table came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    /// `SOURCE_DATE_EPOCH` when set, else `none`, so reruns stay byte-identical.
    pub timestamp: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: String) -> Self {
        Provenance {
            seed,
            config_hash,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").unwrap_or_else(|_| "none".into()),
        }
    }

    fn header(&self) -> String {
        format!("# seed={} config={} timestamp={}", self.seed, self.config_hash, self.timestamp)
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("malformed provenance line {line:?}"));
        let rest = line.strip_prefix("# ").ok_or_else(bad)?;
        let mut seed = None;
        let mut hash = None;
        let mut ts = None;
        for part in rest.split(' ') {
            match part.split_once('=') {
                Some(("seed", v)) => seed = v.parse().ok(),
                Some(("config", v)) => hash = Some(v.to_string()),
                Some(("timestamp", v)) => ts = Some(v.to_string()),
                _ => return Err(bad()),
            }
        }
        Ok(Provenance {
            seed: seed.ok_or_else(bad)?,
            config_hash: hash.ok_or_else(bad)?,
            timestamp: ts.ok_or_else(bad)?,
        })
    }
}

/// Rows of experiment names against the metric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub provenance: Provenance,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
    /// Set when a sweep stopped early; names the failure.
    pub incomplete: Option<String>,
}

impl ReportTable {
    pub fn new(provenance: Provenance) -> Self {
        ReportTable {
            provenance,
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            incomplete: None,
        }
    }

    pub fn push(&mut self, name: &str, report: &MetricReport) {
        self.rows.push((name.to_string(), report.values().to_vec()));
    }

    /// Tab-separated: provenance comment, header, one line per row; absent cells are `-`.
    pub fn to_machine(&self) -> String {
        let mut out = self.provenance.header();
        out.push('\n');
        if let Some(note) = &self.incomplete {
            let _ = writeln!(out, "# incomplete={}", note.replace('\n', " "));
        }
        let _ = writeln!(out, "row\t{}", self.columns.join("\t"));
        for (name, cells) in &self.rows {
            let cells: Vec<String> = cells.iter().map(|c| format_exact(*c)).collect();
            let _ = writeln!(out, "{name}\t{}", cells.join("\t"));
        }
        out
    }

    pub fn from_machine(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let provenance = Provenance::parse(lines.next().unwrap_or_default())?;
        let mut header = lines.next().unwrap_or_default();
        let mut incomplete = None;
        if let Some(note) = header.strip_prefix("# incomplete=") {
            incomplete = Some(note.to_string());
            header = lines.next().unwrap_or_default();
        }
        let mut cols = header.split('\t');
        if cols.next() != Some("row") {
            return Err(Error::Invalid("report header must start with `row`".into()));
        }
        let columns: Vec<String> = cols.map(str::to_string).collect();
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let mut cells = line.split('\t');
            let name = cells.next().unwrap_or_default().to_string();
            let values = cells.map(parse_exact).collect::<Result<Vec<_>>>()?;
            if values.len() != columns.len() {
                return Err(Error::Invalid(format!("row {name:?} has {} cells, expected {}", values.len(), columns.len())));
            }
            rows.push((name, values));
        }
        Ok(ReportTable {
            provenance,
            columns,
            rows,
            incomplete,
        })
    }

    /// Aligned plain-text rendering with four decimals.
    pub fn to_text(&self) -> String {
        let cell = |col: &str, v: Option<f64>| match v {
            None => "-".to_string(),
            Some(x) if col == "unique_nonstop" => format!("{x:.0}"),
            Some(x) => format!("{x:.4}"),
        };
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut head = vec!["".to_string()];
        head.extend(self.columns.iter().cloned());
        grid.push(head);
        for (name, vals) in &self.rows {
            let mut line = vec![name.clone()];
            line.extend(self.columns.iter().zip(vals).map(|(c, v)| cell(c, *v)));
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = self.provenance.header();
        out.push('\n');
        if let Some(note) = &self.incomplete {
            let _ = writeln!(out, "# INCOMPLETE: {note}");
        }
        for row in grid {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Writes `<stem>.txt` and `<stem>.tsv` into `dir`, returning both paths.
pub fn emit_tables(table: &ReportTable, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let txt = dir.join(format!("{stem}.txt"));
    let tsv = dir.join(format!("{stem}.tsv"));
    std::fs::write(&txt, table.to_text()).map_err(|e| Error::io(&txt, e))?;
    std::fs::write(&tsv, table.to_machine()).map_err(|e| Error::io(&tsv, e))?;
    Ok((txt, tsv))
}
