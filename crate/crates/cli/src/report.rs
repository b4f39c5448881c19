//! Report envelopes, input digests, and CSV/SVG/JSON writers.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::svg;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub inputs: BTreeMap<&'static str, InputDigest>,
    pub files: Vec<String>,
    pub result: T,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut r = BufReader::with_capacity(1 << 20, File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn input_digests(cfg: &RunConfig) -> Result<BTreeMap<&'static str, InputDigest>> {
    let mut out = BTreeMap::new();
    for (name, path) in [("curves", &cfg.curves), ("cache", &cfg.cache), ("zeros", &cfg.zeros)] {
        if let Some(p) = path {
            if p.exists() {
                out.insert(
                    name,
                    InputDigest {
                        path: p.display().to_string(),
                        sha256: file_digest(p)?,
                    },
                );
            }
        }
    }
    Ok(out)
}

/// Collects the files written by one subcommand.
pub struct Outputs {
    dir: PathBuf,
    svg: bool,
    written: Vec<String>,
}

/// A CSV cell.
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn number(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl Outputs {
    pub fn new(dir: &Path, svg: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            svg,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Record a file written by other means.
    pub fn note(&mut self, name: &str) {
        self.written.push(name.to_string());
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        self.note(name);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    /// Write `name.csv`; with SVG enabled, also plot every numeric column
    /// against the first.
    pub fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Cell>>) -> Result<()> {
        let mut w = self.writer(&format!("{name}.csv"))?;
        writeln!(w, "{}", header.join(","))?;
        for r in &rows {
            let line: Vec<String> = r.iter().map(Cell::render).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        if self.svg && header.len() >= 2 {
            let x: Vec<Option<f64>> = rows.iter().map(|r| r[0].number()).collect();
            let series: Vec<(String, Vec<(f64, f64)>)> = (1..header.len())
                .map(|c| {
                    let pts = rows
                        .iter()
                        .zip(&x)
                        .filter_map(|(r, &x)| Some((x?, r.get(c)?.number()?)))
                        .collect();
                    (header[c].to_string(), pts)
                })
                .filter(|(_, pts): &(String, Vec<(f64, f64)>)| !pts.is_empty())
                .collect();
            if !series.is_empty() {
                let doc = svg::line_plot(name, header[0], &series);
                let svg_name = format!("{name}.svg");
                fs::write(self.path(&svg_name), doc)?;
                self.note(&svg_name);
            }
        }
        Ok(())
    }

    /// Write the subcommand's JSON report and return its path.
    pub fn report<T: Serialize>(mut self, command: &str, cfg: &RunConfig, result: T) -> Result<PathBuf> {
        let name = format!("{command}.json");
        self.written.sort();
        let env = Envelope {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            config: cfg,
            inputs: input_digests(cfg)?,
            files: self.written.clone(),
            result,
        };
        let path = self.path(&name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, &env)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}
