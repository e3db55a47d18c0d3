//! MAP-Elites over end-position niches.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{
    evaluate, mutate, sample_phenotype, Controller, Genome, NetTopology, ProbeSequence,
};
use crate::error::{Error, Result};
use crate::eval::{Dataset, DatasetMeta, FeatureMatrix, ProbeInfo};
use crate::rng::{self, Stream};
use crate::sim::{Aabb, MazeMap, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct QdConfig {
    /// One generation is one batch of children.
    pub generations: usize,
    pub batch_size: usize,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub initial_random: usize,
    pub seed: u64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for QdConfig {
    fn default() -> Self {
        QdConfig {
            generations: 5000,
            batch_size: 16,
            mutation_rate: 0.05,
            mutation_sigma: 0.2,
            initial_random: 200,
            seed: 0,
            grid_rows: 30,
            grid_cols: 30,
        }
    }
}

impl QdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::config("mutation rate must lie in [0, 1]"));
        }
        if !(self.mutation_sigma > 0.0 && self.mutation_sigma.is_finite()) {
            return Err(Error::config("mutation sigma must be positive"));
        }
        if self.initial_random == 0 {
            return Err(Error::config(
                "at least one random genome is needed to seed the archive",
            ));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::config(
                "niche grid needs at least one row and column",
            ));
        }
        Ok(())
    }
}

/// Uniform grid over an axis-aligned box; cells are numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub bounds: Aabb,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_of(&self, p: Vec2) -> usize {
        let fx = (p.x - self.bounds.min.x) / self.bounds.width();
        let fy = (p.y - self.bounds.min.y) / self.bounds.height();
        let col = ((fx * self.cols as f64).floor().max(0.0) as usize).min(self.cols - 1);
        let row = ((fy * self.rows as f64).floor().max(0.0) as usize).min(self.rows - 1);
        row * self.cols + col
    }

    pub fn cell_center(&self, cell: usize) -> Vec2 {
        let (row, col) = (cell / self.cols, cell % self.cols);
        Vec2::new(
            self.bounds.min.x + (col as f64 + 0.5) * self.bounds.width() / self.cols as f64,
            self.bounds.min.y + (row as f64 + 0.5) * self.bounds.height() / self.rows as f64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Elite {
    pub genome: Genome,
    /// Path length of the rollout; lower is better.
    pub fitness: f64,
    pub end_position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Added,
    Replaced,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NicheGrid {
    spec: GridSpec,
    cells: Vec<Option<Elite>>,
}

impl NicheGrid {
    pub fn new(spec: GridSpec) -> Self {
        NicheGrid {
            spec,
            cells: vec![None; spec.len()],
        }
    }

    pub(crate) fn from_cells(spec: GridSpec, cells: Vec<Option<Elite>>) -> Result<Self> {
        if cells.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.len(),
                got: cells.len(),
            });
        }
        Ok(NicheGrid { spec, cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cell(&self, index: usize) -> Option<&Elite> {
        self.cells.get(index).and_then(Option::as_ref)
    }

    pub fn cells(&self) -> &[Option<Elite>] {
        &self.cells
    }

    /// Filled cells in index order.
    pub fn elites(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|e| (i, e)))
    }

    pub fn filled(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Stores `elite` in the cell of its end position if that cell is empty
    /// or holds a strictly longer path.
    pub fn insert(&mut self, elite: Elite) -> Insertion {
        let cell = self.spec.cell_of(elite.end_position);
        match &self.cells[cell] {
            None => {
                self.cells[cell] = Some(elite);
                Insertion::Added
            }
            Some(current) if elite.fitness < current.fitness => {
                self.cells[cell] = Some(elite);
                Insertion::Replaced
            }
            Some(_) => Insertion::Rejected,
        }
    }
}

pub fn grid_spec(map: &MazeMap, config: &QdConfig) -> GridSpec {
    GridSpec {
        rows: config.grid_rows,
        cols: config.grid_cols,
        bounds: map.bounds(),
    }
}

fn evaluate_batch(
    map: &MazeMap,
    topology: &NetTopology,
    genomes: Vec<Genome>,
) -> Result<Vec<Elite>> {
    genomes
        .into_par_iter()
        .map(|genome| {
            let controller = Controller::new(*topology, genome)?;
            let result = evaluate(map, &controller);
            Ok(Elite {
                genome: controller.genome().clone(),
                fitness: result.path_length,
                end_position: result.end_position,
            })
        })
        .collect()
}

pub fn run_map_elites(
    map: &MazeMap,
    topology: &NetTopology,
    config: &QdConfig,
) -> Result<NicheGrid> {
    run_map_elites_observed(map, topology, config, |_, _| {})
}

/// Like [`run_map_elites`], calling `observe(generation, &grid)` after
/// seeding (generation 0) and after every generation.
pub fn run_map_elites_observed<F>(
    map: &MazeMap,
    topology: &NetTopology,
    config: &QdConfig,
    mut observe: F,
) -> Result<NicheGrid>
where
    F: FnMut(usize, &NicheGrid),
{
    config.validate()?;
    topology.validate()?;
    let mut seeding = rng::stream_rng(config.seed, 0, Stream::QdSeeding);
    let mut selection = rng::stream_rng(config.seed, 0, Stream::Selection);
    let mut mutation = rng::stream_rng(config.seed, 0, Stream::Mutation);

    let mut grid = NicheGrid::new(grid_spec(map, config));
    let seeds: Vec<Genome> = (0..config.initial_random)
        .map(|_| Genome::random(topology, &mut seeding))
        .collect();
    for elite in evaluate_batch(map, topology, seeds)? {
        grid.insert(elite);
    }
    if grid.filled() == 0 {
        return Err(Error::EmptyArchive);
    }
    observe(0, &grid);

    for generation in 1..=config.generations {
        let occupied: Vec<usize> = grid.elites().map(|(i, _)| i).collect();
        let children: Vec<Genome> = (0..config.batch_size)
            .map(|_| {
                let parent = occupied[selection.random_range(0..occupied.len())];
                let genome = &grid.cells[parent].as_ref().expect("occupied cell").genome;
                mutate(
                    genome,
                    config.mutation_rate,
                    config.mutation_sigma,
                    &mut mutation,
                )
            })
            .collect();
        for child in evaluate_batch(map, topology, children)? {
            grid.insert(child);
        }
        observe(generation, &grid);
    }
    Ok(grid)
}

/// Cells connected to the start through free space, found by flood fill on
/// a grid `subdivisions` times finer than `spec`.
pub fn reachable_cells(map: &MazeMap, spec: &GridSpec, subdivisions: usize) -> Vec<bool> {
    let sub = subdivisions.max(1);
    let fine = GridSpec {
        rows: spec.rows * sub,
        cols: spec.cols * sub,
        bounds: spec.bounds,
    };
    let mut seen = vec![false; fine.len()];
    let start = fine.cell_of(map.start());
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        let (row, col) = (cell / fine.cols, cell % fine.cols);
        let mut neighbours = Vec::with_capacity(4);
        if row > 0 {
            neighbours.push(cell - fine.cols);
        }
        if row + 1 < fine.rows {
            neighbours.push(cell + fine.cols);
        }
        if col > 0 {
            neighbours.push(cell - 1);
        }
        if col + 1 < fine.cols {
            neighbours.push(cell + 1);
        }
        for next in neighbours {
            if !seen[next] && !map.blocks(fine.cell_center(cell), fine.cell_center(next)) {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    let mut reachable = vec![false; spec.len()];
    for (cell, _) in seen.iter().enumerate().filter(|(_, s)| **s) {
        reachable[spec.cell_of(fine.cell_center(cell))] = true;
    }
    reachable
}

/// Fraction of reachable cells holding an elite.
pub fn coverage(grid: &NicheGrid, reachable: &[bool]) -> f64 {
    let total = reachable.iter().filter(|r| **r).count();
    if total == 0 {
        return 0.0;
    }
    let filled = grid
        .cells()
        .iter()
        .zip(reachable)
        .filter(|(c, r)| **r && c.is_some())
        .count();
    filled as f64 / total as f64
}

/// One row per elite, in cell order: weights, one phenotype subset per probe
/// and the raw path length.
pub fn archive_to_dataset(
    grid: &NicheGrid,
    topology: &NetTopology,
    probes: &[ProbeSequence],
) -> Result<Dataset> {
    if grid.filled() == 0 {
        return Err(Error::EmptyArchive);
    }
    let elites: Vec<&Elite> = grid.elites().map(|(_, e)| e).collect();
    let weights =
        FeatureMatrix::from_rows(elites.iter().map(|e| e.genome.weights().to_vec()).collect())?;
    let mut subsets = vec![("weights".to_string(), weights)];
    let mut infos = Vec::with_capacity(probes.len());
    for probe in probes {
        let rows = elites
            .iter()
            .map(|e| sample_phenotype(&e.genome, topology, probe).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        let dim = probe.len() * topology.n_outputs;
        subsets.push((format!("pheno_{dim}"), FeatureMatrix::from_rows(rows)?));
        infos.push(ProbeInfo {
            k: probe.len(),
            dim,
            seed: probe.seed,
            mode: probe.mode,
        });
    }
    let y = elites.iter().map(|e| e.fitness).collect();
    let meta = DatasetMeta {
        topology: *topology,
        probes: infos,
        cells: grid.elites().map(|(i, _)| i).collect(),
        ..DatasetMeta::default()
    };
    Dataset::new(subsets, y, meta)
}
