//! Cell scheduling, persistence and resume.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json      written first, rewritten after every finished cell
//! cells/cell-NNNNN   one file per finished cell, written atomically
//! samples.csv        all rows in cell order (raw storage) or the reservoir
//! summary.json       estimates and fits
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::summary::{summarize, Column, Summary};
use crate::error::{LabError, Result};
use crate::estimators::RunningMoments;
use crate::experiments::Row;
use crate::lattice_walk::{derive_stream, stream_label, RngStream};
use crate::parallel::try_map_indexed;

pub const MANIFEST_VERSION: u32 = 1;
pub const CSV_COLUMNS: &str = "experiment,kind,n,chain,idx,value";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Kinds whose values are category labels; streaming storage keeps their
/// full histogram instead of moments.
const CATEGORICAL: [&str; 3] = ["tree_index", "tree_path", "lerw_path"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    /// Every sample is a row of `samples.csv`.
    Raw,
    /// Cells keep moments, categorical histograms and a reservoir subsample.
    Streaming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub experiment: String,
    pub n: f64,
    pub chain: u32,
    pub stream_id: u64,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub code_version: String,
    pub csv_columns: String,
    pub config_hash: String,
    /// The configuration in canonical TOML; a run can be repeated from it.
    pub config: String,
    pub storage: Storage,
    pub cells: Vec<CellSpec>,
    /// Indices into `cells`, sorted.
    pub completed: Vec<usize>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| corrupt(path, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| corrupt(path, e.to_string()))
    }

    pub fn config(&self, path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&self.config).map_err(|e| corrupt(path, e.to_string()))
    }

    pub fn is_complete(&self) -> bool {
        self.completed.len() == self.cells.len()
    }
}

/// Stops a run after a given number of newly finished cells.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub max_cells: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: Summary,
    pub cells_run: usize,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> LabError {
    LabError::ManifestCorrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn name_tag(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// `hash(seed, experiment, n, chain)`.
pub fn cell_stream_id(seed: u64, experiment: &str, n: f64, chain: u32) -> u64 {
    stream_label(&[seed, name_tag(experiment), n.to_bits(), u64::from(chain)])
}

fn rows_per_sample(cfg: &ExperimentConfig) -> u64 {
    use super::config::Kind::*;
    match cfg.kind {
        Growth | Nonintersect | Tails => 1,
        Cutpoints | Pieces => 2,
        Escape => 2 + cfg.inner_ratios.len() as u64,
        UstCheck => {
            if cfg.pemantle.is_some() {
                3
            } else {
                1
            }
        }
    }
}

pub fn plan_cells(cfg: &ExperimentConfig) -> Result<Vec<CellSpec>> {
    let name = cfg.name();
    let chains = u64::from(cfg.chains);
    let mut cells = Vec::new();
    for n in cfg.grid()? {
        for chain in 0..cfg.chains {
            let c = u64::from(chain);
            cells.push(CellSpec {
                experiment: name.clone(),
                n,
                chain,
                stream_id: cell_stream_id(cfg.seed, &name, n, chain),
                samples: cfg.samples / chains + u64::from(c < cfg.samples % chains),
            });
        }
    }
    Ok(cells)
}

fn storage_for(cfg: &ExperimentConfig, cells: &[CellSpec]) -> Storage {
    let rows: u64 = cells.iter().map(|c| c.samples).sum::<u64>() * rows_per_sample(cfg);
    if rows > cfg.raw_row_limit {
        Storage::Streaming
    } else {
        Storage::Raw
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    write_atomic(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(m)?.as_bytes())
}

fn cell_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("cells").join(format!("cell-{index:05}"))
}

fn csv_line(out: &mut String, cell: &CellSpec, kind: &str, idx: u64, value: f64) {
    use std::fmt::Write as _;
    writeln!(out, "{},{},{},{},{},{}", cell.experiment, kind, cell.n, cell.chain, idx, value).expect("string write");
}

/// Streaming form of one cell.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct CellDigest {
    moments: BTreeMap<String, RunningMoments>,
    histograms: BTreeMap<String, BTreeMap<String, u64>>,
    /// `(kind, idx, value)` reservoir rows, in sample order.
    reservoir: Vec<(String, u64, f64)>,
}

/// Algorithm R over the rows of each kind, driven by a dedicated substream.
fn digest_rows(rows: &[Row], capacity: usize, rng: &RngStream) -> CellDigest {
    let mut d = CellDigest::default();
    let mut picks: BTreeMap<&str, (u64, Vec<usize>)> = BTreeMap::new();
    let mut stream = rng.substream(u64::MAX);
    for (i, r) in rows.iter().enumerate() {
        d.moments.entry(r.kind.clone()).or_default().push(r.value);
        if CATEGORICAL.contains(&r.kind.as_str()) {
            *d.histograms.entry(r.kind.clone()).or_default().entry(r.value.to_string()).or_default() += 1;
        }
        let (seen, slots) = picks.entry(r.kind.as_str()).or_default();
        *seen += 1;
        if slots.len() < capacity {
            slots.push(i);
        } else {
            let j = stream.below(*seen) as usize;
            if j < capacity {
                slots[j] = i;
            }
        }
    }
    let mut chosen: Vec<usize> = picks.into_values().flat_map(|(_, s)| s).collect();
    chosen.sort_unstable();
    d.reservoir = chosen.into_iter().map(|i| (rows[i].kind.clone(), rows[i].idx, rows[i].value)).collect();
    d
}

fn run_cell(cfg: &ExperimentConfig, storage: Storage, cell: &CellSpec) -> Result<Vec<u8>> {
    let experiment = cfg.experiment()?;
    let rng = derive_stream(cfg.seed, cell.stream_id);
    let rows = experiment.sample_cell(cell.n, cell.samples as usize, &rng)?;
    Ok(match storage {
        Storage::Raw => {
            let mut out = String::new();
            for r in &rows {
                csv_line(&mut out, cell, &r.kind, r.idx, r.value);
            }
            out.into_bytes()
        }
        Storage::Streaming => {
            let capacity = (cfg.reservoir_size / cfg.chains as usize).max(1);
            serde_json::to_vec(&digest_rows(&rows, capacity, &rng))?
        }
    })
}

/// Starts a fresh run in `dir`, which must not already hold a manifest.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, opts: RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    if dir.join(MANIFEST_FILE).exists() {
        return Err(LabError::ConfigInvalid(format!(
            "{} already holds a run; resume it or choose another --out",
            dir.display()
        )));
    }
    fs::create_dir_all(dir.join("cells"))?;
    let cells = plan_cells(cfg)?;
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        csv_columns: CSV_COLUMNS.to_string(),
        config_hash: cfg.hash(),
        config: cfg.to_toml(),
        storage: storage_for(cfg, &cells),
        cells,
        completed: Vec::new(),
        started_at: now(),
        finished_at: None,
    };
    write_manifest(dir, &manifest)?;
    continue_run(cfg, dir, manifest, opts)
}

/// Finishes the run described by the manifest at `manifest_path`, running
/// only cells without a result file. With `expected`, the manifest's
/// configuration must hash to the same value.
pub fn resume(manifest_path: &Path, expected: Option<&ExperimentConfig>, opts: RunOptions) -> Result<RunOutcome> {
    let manifest = RunManifest::load(manifest_path)?;
    let cfg = manifest.config(manifest_path)?;
    if cfg.hash() != manifest.config_hash {
        return Err(corrupt(manifest_path, "embedded config does not match config_hash"));
    }
    if let Some(e) = expected {
        if e.hash() != manifest.config_hash {
            return Err(corrupt(manifest_path, "config hash differs from the given config"));
        }
    }
    if manifest.cells != plan_cells(&cfg)? || manifest.storage != storage_for(&cfg, &manifest.cells) {
        return Err(corrupt(manifest_path, "cell plan does not match the config"));
    }
    if manifest.completed.iter().any(|&i| i >= manifest.cells.len()) {
        return Err(corrupt(manifest_path, "completed cell index out of range"));
    }
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    fs::create_dir_all(dir.join("cells"))?;
    continue_run(&cfg, &dir, manifest, opts)
}

fn continue_run(cfg: &ExperimentConfig, dir: &Path, mut manifest: RunManifest, opts: RunOptions) -> Result<RunOutcome> {
    // A cell counts as done only if its file is present.
    manifest.completed.retain(|&i| cell_path(dir, i).exists());
    let missing: Vec<usize> = (0..manifest.cells.len()).filter(|i| !manifest.completed.contains(i)).collect();
    let todo: Vec<usize> = missing.iter().copied().take(opts.max_cells.unwrap_or(usize::MAX)).collect();
    let storage = manifest.storage;
    let cells = manifest.cells.clone();
    {
        let shared = Mutex::new(&mut manifest);
        try_map_indexed(todo.len(), |k| {
            let index = todo[k];
            let bytes = run_cell(cfg, storage, &cells[index])?;
            write_atomic(&cell_path(dir, index), &bytes)?;
            let mut m = shared.lock().expect("manifest lock");
            m.completed.push(index);
            m.completed.sort_unstable();
            write_manifest(dir, &m)
        })?;
    }
    let cells_run = todo.len();
    if !manifest.is_complete() {
        return Err(LabError::Interrupted {
            completed: manifest.completed.len(),
            total: manifest.cells.len(),
        });
    }
    let summary = finalize(cfg, dir, &manifest)?;
    if manifest.finished_at.is_none() || cells_run > 0 {
        manifest.finished_at = Some(now());
        write_manifest(dir, &manifest)?;
    }
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        manifest,
        summary,
        cells_run,
    })
}

fn parse_cell_csv(text: &str, path: &Path) -> Result<Vec<(String, u64, f64)>> {
    text.lines()
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || corrupt(path, format!("bad row `{line}`"));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok((
                f[1].to_string(),
                f[4].parse().map_err(|_| bad())?,
                f[5].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// Writes `samples.csv` and `summary.json` from the cell files.
fn finalize(cfg: &ExperimentConfig, dir: &Path, manifest: &RunManifest) -> Result<Summary> {
    let mut csv = String::from(CSV_COLUMNS);
    csv.push('\n');
    // (n index, kind) -> column; BTreeMap keeps grid and kind order stable.
    let grid = cfg.grid()?;
    let mut columns: Vec<BTreeMap<String, Column>> = vec![BTreeMap::new(); grid.len()];
    for (index, cell) in manifest.cells.iter().enumerate() {
        let path = cell_path(dir, index);
        let g = grid.iter().position(|&n| n == cell.n).ok_or_else(|| corrupt(&path, "cell radius not in grid"))?;
        match manifest.storage {
            Storage::Raw => {
                let text = fs::read_to_string(&path)?;
                csv.push_str(&text);
                for (kind, _, value) in parse_cell_csv(&text, &path)? {
                    let col = columns[g].entry(kind).or_default();
                    col.moments.push(value);
                    col.values.push(value);
                }
            }
            Storage::Streaming => {
                let d: CellDigest = serde_json::from_slice(&fs::read(&path)?).map_err(|e| corrupt(&path, e.to_string()))?;
                for (kind, idx, value) in &d.reservoir {
                    csv_line(&mut csv, cell, kind, *idx, *value);
                    columns[g].entry(kind.clone()).or_default().values.push(*value);
                }
                for (kind, m) in &d.moments {
                    columns[g].entry(kind.clone()).or_default().moments.merge(m);
                }
                for (kind, h) in d.histograms {
                    let col = columns[g].entry(kind).or_default();
                    for (label, count) in h {
                        *col.histogram.get_or_insert_with(BTreeMap::new).entry(label).or_default() += count;
                    }
                }
            }
        }
    }
    for cols in &mut columns {
        for col in cols.values_mut() {
            col.exact = manifest.storage == Storage::Raw;
        }
    }
    write_atomic(&dir.join(SAMPLES_FILE), csv.as_bytes())?;
    let summary = summarize(cfg, manifest.storage, &grid, &columns)?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_atomic(&dir.join(SUMMARY_FILE), json.as_bytes())?;
    Ok(summary)
}
