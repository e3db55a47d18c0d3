//! On-disk formats: versioned CSV matrices, JSON metadata and archives, and
//! a binary cache for distance matrices.
//!
//! Every CSV file starts with a `# phenomodel-csv <major>.<minor>` line
//! followed by a header row. Readers reject other major versions.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{Genome, NetTopology};
use crate::error::{Error, Result};
use crate::eval::{
    pheno_dim, Dataset, DatasetMeta, EvalResult, FeatureMatrix, ModelKind, PcaResult, Summary,
    DATASET_SCHEMA,
};
use crate::qd::{Elite, GridSpec, NicheGrid, QdConfig};
use crate::sim::{MazeConfig, Vec2};
use crate::surrogate::{DistanceKind, DistanceMatrix};

pub const CSV_SCHEMA: &str = "1.0";
const CSV_MAGIC: &str = "# phenomodel-csv";
pub const ARCHIVE_SCHEMA: &str = "1.0";

pub const META_FILE: &str = "meta.json";
pub const FITNESS_FILE: &str = "fitness.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const ARCHIVE_FILE: &str = "archive.json";
pub const CONFIG_FILE: &str = "config.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const PCA_FILE: &str = "pca.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const PCA_SUMMARY_FILE: &str = "pca_summary.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Checks that a version string has the expected major version.
fn check_major(path: &Path, found: &str, expected: &str) -> Result<()> {
    let major = |v: &str| v.split('.').next().unwrap_or("").to_string();
    if major(found) == major(expected) && !found.is_empty() {
        Ok(())
    } else {
        Err(Error::schema(
            path,
            format!("unsupported schema version {found:?}, expected {expected}"),
        ))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    writeln!(file, "{CSV_MAGIC} {CSV_SCHEMA}").map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// Opens a versioned CSV file, validating its version line.
fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<fs::File>>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err(path))?;
    let version = first
        .trim_end()
        .strip_prefix(CSV_MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::schema(path, "missing version line"))?;
    check_major(path, version, CSV_SCHEMA)?;
    Ok(csv::Reader::from_reader(reader))
}

pub fn write_matrix_csv(path: &Path, header: &[String], m: &FeatureMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in m.iter_rows() {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, FeatureMatrix)> {
    let mut r = csv_reader(path)?;
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.deserialize::<Vec<f64>>() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != header.len() {
            return Err(Error::schema(
                path,
                format!(
                    "row {} has {} values, header has {}",
                    rows + 1,
                    rec.len(),
                    header.len()
                ),
            ));
        }
        data.extend(rec);
        rows += 1;
    }
    let m = FeatureMatrix::new(rows, header.len(), data)?;
    Ok((header, m))
}

fn subset_header(name: &str, cols: usize) -> Vec<String> {
    let prefix = if name == "weights" { "w" } else { "o" };
    (0..cols).map(|j| format!("{prefix}{j}")).collect()
}

pub fn subset_file(name: &str) -> String {
    format!("{name}.csv")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
struct FitnessRow {
    cell: usize,
    path_length: f64,
}

/// Writes `weights.csv`, one `pheno_<dim>.csv` per probe, `fitness.csv` and
/// `meta.json` into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    create_dir(dir)?;
    for (name, m) in data.subsets() {
        write_matrix_csv(
            &dir.join(subset_file(name)),
            &subset_header(name, m.cols()),
            m,
        )?;
    }
    let path = dir.join(FITNESS_FILE);
    let mut w = csv_writer(&path)?;
    for (i, &y) in data.y().iter().enumerate() {
        let cell = data.meta.cells.get(i).copied().unwrap_or(i);
        w.serialize(FitnessRow {
            cell,
            path_length: y,
        })
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    write_json(&dir.join(META_FILE), &data.meta)
}

fn expected_subsets(meta: &DatasetMeta) -> Vec<String> {
    std::iter::once("weights".to_string())
        .chain(meta.probes.iter().map(|p| format!("pheno_{}", p.dim)))
        .collect()
}

/// Reads a dataset directory. Every problem found is listed in one schema
/// error rather than stopping at the first.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mut problems = Vec::new();
    let meta_path = dir.join(META_FILE);
    let meta: Option<DatasetMeta> = if meta_path.is_file() {
        match read_json::<DatasetMeta>(&meta_path) {
            Ok(m) => {
                if check_major(&meta_path, &m.schema_version, DATASET_SCHEMA).is_err() {
                    problems.push(format!(
                        "{META_FILE}: unsupported schema version {:?}",
                        m.schema_version
                    ));
                }
                Some(m)
            }
            Err(e) => {
                problems.push(format!("{META_FILE}: {e}"));
                None
            }
        }
    } else {
        problems.push(format!("missing {META_FILE}"));
        None
    };

    let fitness_path = dir.join(FITNESS_FILE);
    let mut y = Vec::new();
    let mut cells = Vec::new();
    if fitness_path.is_file() {
        match read_fitness(&fitness_path) {
            Ok((c, v)) => {
                cells = c;
                y = v;
            }
            Err(e) => problems.push(format!("{FITNESS_FILE}: {e}")),
        }
    } else {
        problems.push(format!("missing {FITNESS_FILE}"));
    }

    let names = meta
        .as_ref()
        .map(expected_subsets)
        .unwrap_or_else(|| vec!["weights".into()]);
    let mut subsets = Vec::new();
    for name in names {
        let file = subset_file(&name);
        let path = dir.join(&file);
        if !path.is_file() {
            problems.push(format!("missing {file}"));
            continue;
        }
        match read_matrix_csv(&path) {
            Ok((_, m)) => {
                if let Some(meta) = &meta {
                    let want = match pheno_dim(&name) {
                        Some(d) => d,
                        None => meta.topology.weight_count(),
                    };
                    if m.cols() != want {
                        problems.push(format!("{file}: {} columns, expected {want}", m.cols()));
                    }
                }
                if fitness_path.is_file() && m.rows() != y.len() {
                    problems.push(format!(
                        "{file}: {} rows, {FITNESS_FILE} has {}",
                        m.rows(),
                        y.len()
                    ));
                }
                subsets.push((name, m));
            }
            Err(e) => problems.push(format!("{file}: {e}")),
        }
    }

    if !problems.is_empty() {
        return Err(Error::schema(
            dir,
            format!("\n  - {}", problems.join("\n  - ")),
        ));
    }
    let mut meta = meta.expect("meta present when no problems");
    if meta.cells.is_empty() {
        meta.cells = cells;
    }
    Dataset::new(subsets, y, meta).map_err(|e| Error::schema(dir, e.to_string()))
}

fn read_fitness(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = csv_reader(path)?;
    let mut cells = Vec::new();
    let mut y = Vec::new();
    for row in r.deserialize::<FitnessRow>() {
        let row = row.map_err(csv_err(path))?;
        cells.push(row.cell);
        y.push(row.path_length);
    }
    Ok((cells, y))
}

/// Dataset directories directly below `root`, sorted by name. `root` itself
/// counts when it holds a `meta.json`.
pub fn find_datasets(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(META_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let path = entry.map_err(io_err(root))?.path();
        if path.is_dir() && (path.join(META_FILE).is_file() || path.join(FITNESS_FILE).is_file()) {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArchiveElite {
    pub cell: usize,
    pub end_position: Vec2,
    pub fitness: f64,
    pub weights: Vec<f64>,
}

/// Final MAP-Elites archive with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArchiveBundle {
    pub schema_version: String,
    pub topology: NetTopology,
    pub qd: QdConfig,
    pub maze: MazeConfig,
    pub grid: GridSpec,
    pub elites: Vec<ArchiveElite>,
}

impl ArchiveBundle {
    pub fn new(grid: &NicheGrid, topology: NetTopology, qd: QdConfig, maze: MazeConfig) -> Self {
        ArchiveBundle {
            schema_version: ARCHIVE_SCHEMA.to_string(),
            topology,
            qd,
            maze,
            grid: *grid.spec(),
            elites: grid
                .elites()
                .map(|(cell, e)| ArchiveElite {
                    cell,
                    end_position: e.end_position,
                    fitness: e.fitness,
                    weights: e.genome.weights().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_grid(&self) -> Result<NicheGrid> {
        let mut cells = vec![None; self.grid.len()];
        for e in &self.elites {
            let slot = cells
                .get_mut(e.cell)
                .ok_or_else(|| Error::input(format!("archive cell {} outside the grid", e.cell)))?;
            *slot = Some(Elite {
                genome: Genome::new(&self.topology, e.weights.clone())?,
                fitness: e.fitness,
                end_position: e.end_position,
            });
        }
        NicheGrid::from_cells(self.grid, cells)
    }
}

pub fn read_archive(path: &Path) -> Result<ArchiveBundle> {
    let bundle: ArchiveBundle = read_json(path)?;
    check_major(path, &bundle.schema_version, ARCHIVE_SCHEMA)?;
    Ok(bundle)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
struct ResultRow {
    subset: String,
    model: ModelKind,
    n_hidden: usize,
    replication: u64,
    kendall_tau: Option<f64>,
    n_coefficients: Option<usize>,
    train_size: usize,
    test_size: usize,
    error: Option<String>,
}

pub fn write_results(path: &Path, results: &[EvalResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in results {
        w.serialize(ResultRow {
            subset: r.subset.clone(),
            model: r.model,
            n_hidden: r.n_hidden,
            replication: r.replication,
            kendall_tau: r.kendall_tau,
            n_coefficients: r.n_coefficients,
            train_size: r.train_size,
            test_size: r.test_size,
            error: r.error.clone(),
        })
        .map_err(csv_err(path))?;
    }
    if results.is_empty() {
        w.write_record([
            "subset",
            "model",
            "n_hidden",
            "replication",
            "kendall_tau",
            "n_coefficients",
            "train_size",
            "test_size",
            "error",
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_results(path: &Path) -> Result<Vec<EvalResult>> {
    let mut r = csv_reader(path)?;
    r.deserialize::<ResultRow>()
        .map(|row| {
            let row = row.map_err(csv_err(path))?;
            Ok(EvalResult {
                subset: row.subset,
                model: row.model,
                n_hidden: row.n_hidden,
                replication: row.replication,
                kendall_tau: row.kendall_tau,
                n_coefficients: row.n_coefficients,
                train_size: row.train_size,
                test_size: row.test_size,
                error: row.error,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
struct PcaRow {
    subset: String,
    n_hidden: usize,
    replication: u64,
    dim: usize,
    components: Option<usize>,
    error: Option<String>,
}

pub fn write_pca(path: &Path, results: &[PcaResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in results {
        w.serialize(PcaRow {
            subset: p.subset.clone(),
            n_hidden: p.n_hidden,
            replication: p.replication,
            dim: p.dim,
            components: p.components,
            error: p.error.clone(),
        })
        .map_err(csv_err(path))?;
    }
    if results.is_empty() {
        w.write_record([
            "subset",
            "n_hidden",
            "replication",
            "dim",
            "components",
            "error",
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_pca(path: &Path) -> Result<Vec<PcaResult>> {
    let mut r = csv_reader(path)?;
    r.deserialize::<PcaRow>()
        .map(|row| {
            let row = row.map_err(csv_err(path))?;
            Ok(PcaResult {
                subset: row.subset,
                n_hidden: row.n_hidden,
                replication: row.replication,
                dim: row.dim,
                components: row.components,
                error: row.error,
            })
        })
        .collect()
}

/// Tau medians, quartiles and intervals as `summary.csv`, PCA and
/// coefficient medians as `pca_summary.csv`.
pub fn write_summary_tables(dir: &Path, summary: &Summary) -> Result<()> {
    let path = dir.join(SUMMARY_CSV_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record([
        "subset", "model", "n_hidden", "n", "failures", "median", "q1", "q3", "ci_lower",
        "ci_upper",
    ])
    .map_err(csv_err(&path))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in &summary.tau {
        w.write_record([
            t.subset.clone(),
            t.model.to_string(),
            t.n_hidden.to_string(),
            t.values.len().to_string(),
            t.failures.to_string(),
            opt(t.stats.map(|s| s.median)),
            opt(t.stats.map(|s| s.q1)),
            opt(t.stats.map(|s| s.q3)),
            opt(t.median_ci.map(|c| c.lower)),
            opt(t.median_ci.map(|c| c.upper)),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join(PCA_SUMMARY_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["subset", "n_hidden", "metric", "n", "median", "q1", "q3"])
        .map_err(csv_err(&path))?;
    for (metric, rows) in [
        ("pca_components", &summary.pca),
        ("linear_coefficients", &summary.coefficients),
    ] {
        for c in rows {
            w.write_record([
                c.subset.clone(),
                c.n_hidden.to_string(),
                metric.to_string(),
                c.values.len().to_string(),
                opt(c.stats.map(|s| s.median)),
                opt(c.stats.map(|s| s.q1)),
                opt(c.stats.map(|s| s.q3)),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))
}

const DISTANCE_MAGIC: &[u8; 8] = b"PMDIST01";

/// Hash of a feature matrix and distance kind, used as the cache key.
pub fn distance_key(x: &FeatureMatrix, kind: DistanceKind) -> String {
    let mut h = Sha256::new();
    h.update(kind.tag().as_bytes());
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn write_distance_matrix(path: &Path, d: &DistanceMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + 8 * d.as_slice().len());
    bytes.extend_from_slice(DISTANCE_MAGIC);
    bytes.extend_from_slice(&(d.len() as u64).to_le_bytes());
    for v in d.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    // write then rename so a concurrent reader never sees a partial file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_distance_matrix(path: &Path) -> Result<DistanceMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = || Error::schema(path, "not a distance matrix cache file");
    if bytes.len() < 16 || &bytes[..8] != DISTANCE_MAGIC {
        return Err(bad());
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if n.checked_mul(n).and_then(|v| v.checked_mul(8)) != Some(body.len()) {
        return Err(bad());
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DistanceMatrix::from_raw(n, data)
}

/// Loads the distance matrix of `x` from `dir`, computing and storing it
/// when absent or unreadable.
pub fn cached_distances(
    dir: &Path,
    x: &FeatureMatrix,
    kind: DistanceKind,
) -> Result<DistanceMatrix> {
    let path = dir.join(format!("{}-{}.dist", kind.tag(), distance_key(x, kind)));
    if let Ok(d) = read_distance_matrix(&path) {
        if d.len() == x.rows() {
            return Ok(d);
        }
    }
    create_dir(dir)?;
    let d = DistanceMatrix::compute(x, kind);
    write_distance_matrix(&path, &d)?;
    Ok(d)
}

/// SHA-256 over the relative paths and contents of every file below `root`.
pub fn tree_hash(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&f).map_err(io_err(&f))?);
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}
