//! End-to-end experiment stages: dataset generation, model evaluation,
//! PCA analysis and reporting. Each stage reads and writes plain files so
//! stages can be rerun independently.

use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::controller::{draw_probe, draw_trajectory_probe, NetTopology, ProbeMode, ProbeSequence};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, analyze_pca, evaluate_models, AggregateOptions, Dataset, EvalResult, ModelKind,
    PcaResult, Summary,
};
use crate::io::{self, ArchiveBundle};
use crate::qd::{archive_to_dataset, run_map_elites, NicheGrid};
use crate::rng::{derive_seed, Stream};
use crate::sim::{build_maze, MazeMap};

pub const DATASETS_DIR: &str = "datasets";

pub fn dataset_name(n_hidden: usize, replication: u64) -> String {
    format!("nh{n_hidden}_rep{replication:03}")
}

/// One probe per requested length, all derived from the replication seed.
pub fn draw_probes(
    mode: ProbeMode,
    map: &MazeMap,
    topology: &NetTopology,
    sizes: &[usize],
    seed_for: impl Fn(usize) -> u64,
    trajectory_controllers: usize,
) -> Result<Vec<ProbeSequence>> {
    sizes
        .iter()
        .map(|&k| match mode {
            ProbeMode::Uniform => draw_probe(topology, k, seed_for(k)),
            ProbeMode::Trajectory => {
                draw_trajectory_probe(map, topology, k, seed_for(k), trajectory_controllers)
            }
        })
        .collect()
}

/// Runs MAP-Elites for one (hidden size, replication) and samples all
/// phenotype subsets of the final archive.
pub fn generate_replication(
    config: &ExperimentConfig,
    map: &MazeMap,
    n_hidden: usize,
    replication: u64,
) -> Result<(NicheGrid, Dataset)> {
    let topology = NetTopology::maze(n_hidden);
    let qd = config.qd_for(replication, n_hidden);
    let grid = run_map_elites(map, &topology, &qd)?;
    let probes = draw_probes(
        config.probe_mode,
        map,
        &topology,
        &config.probe_sizes,
        |k| config.probe_seed(replication, k),
        config.trajectory_controllers,
    )?;
    let mut data = archive_to_dataset(&grid, &topology, &probes)?;
    data.meta.replication = replication;
    data.meta.base_seed = config.base_seed;
    data.meta.qd_seed = qd.seed;
    data.meta.maze = Some(config.maze.clone());
    Ok((grid, data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRun {
    pub dir: PathBuf,
    pub n_hidden: usize,
    pub replication: u64,
    pub elites: usize,
}

/// Writes `<out>/config.json` and one dataset directory per hidden size and
/// replication under `<out>/datasets`.
pub fn generate(
    config: &ExperimentConfig,
    mut progress: impl FnMut(&GeneratedRun),
) -> Result<Vec<GeneratedRun>> {
    config.validate()?;
    let map = build_maze(&config.maze)?;
    let root = config.out_dir.join(DATASETS_DIR);
    io::create_dir(&root)?;
    io::write_json(&config.out_dir.join(io::CONFIG_FILE), config)?;
    let mut runs = Vec::new();
    for &n_hidden in &config.n_hidden {
        for rep in 0..config.replications as u64 {
            let (grid, data) = generate_replication(config, &map, n_hidden, rep)?;
            let dir = root.join(dataset_name(n_hidden, rep));
            io::write_dataset(&dir, &data)?;
            let qd = config.qd_for(rep, n_hidden);
            let bundle = ArchiveBundle::new(&grid, data.meta.topology, qd, config.maze.clone());
            io::write_json(&dir.join(io::ARCHIVE_FILE), &bundle)?;
            let run = GeneratedRun {
                dir,
                n_hidden,
                replication: rep,
                elites: grid.filled(),
            };
            progress(&run);
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Re-samples phenotypes of a stored archive for new probe lengths and
/// writes the resulting dataset to `out`. Probe seeds follow the same rule
/// as generation, so shared lengths reproduce the original subsets.
pub fn resample_phenotypes(
    dataset_dir: &Path,
    sizes: &[usize],
    mode: ProbeMode,
    trajectory_controllers: usize,
    out: &Path,
) -> Result<Dataset> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::config(
            "probe sizes must be non-empty and at least 1",
        ));
    }
    let bundle = io::read_archive(&dataset_dir.join(io::ARCHIVE_FILE))?;
    let meta: crate::eval::DatasetMeta = io::read_json(&dataset_dir.join(io::META_FILE))?;
    let grid = bundle.to_grid()?;
    let map = build_maze(&bundle.maze)?;
    let probes = draw_probes(
        mode,
        &map,
        &bundle.topology,
        sizes,
        |k| derive_seed(meta.base_seed, meta.replication, Stream::Probe(k as u64)),
        trajectory_controllers,
    )?;
    let mut data = archive_to_dataset(&grid, &bundle.topology, &probes)?;
    data.meta.replication = meta.replication;
    data.meta.base_seed = meta.base_seed;
    data.meta.qd_seed = meta.qd_seed;
    data.meta.maze = Some(bundle.maze.clone());
    io::write_dataset(out, &data)?;
    io::write_json(&out.join(io::ARCHIVE_FILE), &bundle)?;
    Ok(data)
}

/// Which subsets and model kinds to evaluate; everything when empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub subsets: Vec<String>,
    pub models: Vec<ModelKind>,
}

fn datasets_under(root: &Path) -> Result<Vec<PathBuf>> {
    let search = if root.join(DATASETS_DIR).is_dir() {
        root.join(DATASETS_DIR)
    } else {
        root.to_path_buf()
    };
    let dirs = io::find_datasets(&search)?;
    if dirs.is_empty() {
        return Err(Error::schema(root, "no dataset directories found"));
    }
    Ok(dirs)
}

/// Reads every dataset under `root`, checking all of them before any work.
pub fn load_datasets(root: &Path) -> Result<Vec<Dataset>> {
    let dirs = datasets_under(root)?;
    let mut problems = Vec::new();
    let mut out = Vec::new();
    for dir in dirs {
        match io::read_dataset(&dir) {
            Ok(d) => out.push(d),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::schema(root, problems.join("\n")))
    }
}

fn subset_filter(selection: &Selection) -> Option<Vec<String>> {
    (!selection.subsets.is_empty()).then(|| selection.subsets.clone())
}

/// Fits and scores the selected models on every dataset.
pub fn evaluate_datasets(
    config: &ExperimentConfig,
    datasets: &[Dataset],
    selection: &Selection,
) -> Result<(Vec<EvalResult>, Vec<PcaResult>)> {
    config.validate()?;
    let mut results = Vec::new();
    let mut pca = Vec::new();
    for data in datasets {
        let mut eval = config.eval_for(data.meta.replication);
        eval.subsets = subset_filter(selection);
        if !selection.models.is_empty() {
            eval.models = selection.models.clone();
        }
        results.extend(evaluate_models(data, &eval)?);
        pca.extend(analyze_pca(
            data,
            config.pca_fraction,
            config.pca_mode,
            eval.subsets.as_deref(),
        )?);
    }
    Ok((results, pca))
}

/// Evaluates every dataset under `data_root` and writes results, PCA
/// counts, the config echo and the report files into `out`.
pub fn evaluate(
    config: &ExperimentConfig,
    data_root: &Path,
    out: &Path,
    selection: &Selection,
) -> Result<Summary> {
    config.validate()?;
    let datasets = load_datasets(data_root)?;
    let (results, pca) = evaluate_datasets(config, &datasets, selection)?;
    io::create_dir(out)?;
    io::write_json(&out.join(io::CONFIG_FILE), config)?;
    io::write_results(&out.join(io::RESULTS_FILE), &results)?;
    io::write_pca(&out.join(io::PCA_FILE), &pca)?;
    report(out, out, &config.aggregate_options())
}

/// PCA component counts only; writes `pca.csv` and the report files.
pub fn analyze(
    config: &ExperimentConfig,
    data_root: &Path,
    out: &Path,
    selection: &Selection,
) -> Result<Summary> {
    config.validate()?;
    let datasets = load_datasets(data_root)?;
    let mut pca = Vec::new();
    for data in &datasets {
        pca.extend(analyze_pca(
            data,
            config.pca_fraction,
            config.pca_mode,
            subset_filter(selection).as_deref(),
        )?);
    }
    io::create_dir(out)?;
    io::write_json(&out.join(io::CONFIG_FILE), config)?;
    io::write_pca(&out.join(io::PCA_FILE), &pca)?;
    report(out, out, &config.aggregate_options())
}

/// Aggregates `results.csv` and `pca.csv` found in `results_dir` into
/// `summary.json`, `summary.csv`, `pca_summary.csv` and the figure data.
pub fn report(results_dir: &Path, out: &Path, opts: &AggregateOptions) -> Result<Summary> {
    let results_path = results_dir.join(io::RESULTS_FILE);
    let pca_path = results_dir.join(io::PCA_FILE);
    if !results_path.is_file() && !pca_path.is_file() {
        return Err(Error::input(format!(
            "no {} or {} in {}",
            io::RESULTS_FILE,
            io::PCA_FILE,
            results_dir.display()
        )));
    }
    let results = if results_path.is_file() {
        io::read_results(&results_path)?
    } else {
        Vec::new()
    };
    let pca = if pca_path.is_file() {
        io::read_pca(&pca_path)?
    } else {
        Vec::new()
    };
    if results.is_empty() && pca.is_empty() {
        return Err(Error::input(format!(
            "no results in {}",
            results_dir.display()
        )));
    }
    let summary = aggregate(&results, &pca, opts)?;
    io::create_dir(out)?;
    io::write_json(&out.join(io::SUMMARY_FILE), &summary)?;
    io::write_summary_tables(out, &summary)?;
    io::write_json(&out.join("fig6.json"), &summary.fig6())?;
    io::write_json(&out.join("fig7.json"), &summary.fig7())?;
    io::write_json(&out.join("fig8.json"), &summary.fig8())?;
    Ok(summary)
}
