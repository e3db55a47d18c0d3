use std::collections::HashMap;

use phenomodel::controller::{Controller, Genome, NetTopology};
use phenomodel::io::{read_archive, write_json, ArchiveBundle};
use phenomodel::qd::{grid_spec, Elite, NicheGrid, QdConfig};
use phenomodel::sim::{build_maze, rollout, sense, MazeConfig, MazeMap, RobotState, Vec2};
use proptest::prelude::*;
use rand::SeedableRng;

fn map() -> MazeMap {
    build_maze(&MazeConfig::default()).unwrap()
}

fn genome(n_hidden: usize) -> impl Strategy<Value = (NetTopology, Genome)> {
    let t = NetTopology::maze(n_hidden);
    prop::collection::vec(-4.0f64..4.0, t.weight_count())
        .prop_map(move |w| (t, Genome::new(&t, w).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rollouts_stay_in_free_space((t, g) in prop_oneof![genome(2), genome(5)]) {
        let map = map();
        let radius = map.config().robot_radius;
        let c = Controller::new(t, g).unwrap();
        let r = rollout(&map, &c, 120);
        prop_assert_eq!(r.trajectory.len(), r.steps + 1);
        let mut sum = 0.0;
        for w in r.trajectory.windows(2) {
            sum += w[1].position.distance(w[0].position);
        }
        prop_assert!((sum - r.path_length).abs() <= 1e-9 * r.path_length.max(1.0));
        prop_assert!(r.path_length + 1e-12 >= r.end_position.distance(map.start()));
        for pose in &r.trajectory {
            prop_assert!(pose.heading >= -std::f64::consts::PI && pose.heading < std::f64::consts::PI);
            // Exhaustive scan, independent of the spatial index.
            let d = map
                .segments()
                .iter()
                .map(|s| s.distance_to(pose.position))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(d >= radius - 1e-9, "penetration {} at {:?}", d, pose.position);
            let state = RobotState { position: pose.position, heading: pose.heading, radius };
            let reading = sense(&map, &state);
            prop_assert!(reading.rangefinders.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(reading.beacon.iter().filter(|&&b| b == 1.0).count(), 1);
            prop_assert_eq!(reading.beacon.iter().filter(|&&b| b == 0.0).count(), 3);
        }
    }

    #[test]
    fn archive_keeps_the_shortest_path_per_cell(
        entries in prop::collection::vec((-35.0f64..35.0, -35.0f64..35.0, 0.0f64..100.0), 1..200)
    ) {
        let map = map();
        let spec = grid_spec(&map, &QdConfig::default());
        let t = NetTopology::maze(2);
        let mut grid = NicheGrid::new(spec);
        let mut best: HashMap<usize, f64> = HashMap::new();
        for (i, &(x, y, f)) in entries.iter().enumerate() {
            let p = Vec2 { x, y };
            let cell = spec.cell_of(p);
            let mut w = vec![0.0; t.weight_count()];
            w[0] = i as f64 * 1e-3;
            grid.insert(Elite { genome: Genome::new(&t, w).unwrap(), fitness: f, end_position: p });
            let e = best.entry(cell).or_insert(f);
            *e = e.min(f);
        }
        prop_assert_eq!(grid.filled(), best.len());
        for (cell, elite) in grid.elites() {
            prop_assert_eq!(elite.fitness, best[&cell]);
            prop_assert_eq!(spec.cell_of(elite.end_position), cell);
        }
    }
}

#[test]
fn archive_round_trip_is_exact() {
    let map = map();
    let qd = QdConfig::default();
    let spec = grid_spec(&map, &qd);
    let t = NetTopology::maze(5);
    let mut grid = NicheGrid::new(spec);
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for _ in 0..300 {
        let g = Genome::random(&t, &mut rng);
        let r = rollout(&map, &Controller::new(t, g.clone()).unwrap(), 60);
        grid.insert(Elite {
            genome: g,
            fitness: r.path_length,
            end_position: r.end_position,
        });
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("archive.json");
    write_json(
        &path,
        &ArchiveBundle::new(&grid, t, qd, map.config().clone()),
    )
    .unwrap();
    let back = read_archive(&path).unwrap().to_grid().unwrap();
    assert_eq!(back, grid);
}
