//! Fixed-topology feed-forward controllers and phenotype sampling.
//!
//! Weight layout in a [`Genome`]: the hidden layer first, one row of
//! `n_inputs` weights followed by a bias per hidden neuron, then the output
//! layer, one row of `n_hidden` weights plus a bias per output neuron. Both
//! layers use `tanh`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng;
use crate::sim::{
    rollout, sense, step, MazeMap, MotorCommand, Policy, RobotState, SensorReading, BEACON_SECTORS,
    RANGEFINDERS, SENSOR_WIDTH,
};

pub const WEIGHT_BOUND: f64 = 4.0;
pub const INIT_BOUND: f64 = 1.0;
/// Largest hidden layer a maze [`Controller`] accepts.
pub const MAX_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetTopology {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
}

impl NetTopology {
    /// Maze controller: sensor inputs, `n_hidden` neurons, two wheel outputs.
    pub fn maze(n_hidden: usize) -> Self {
        NetTopology {
            n_inputs: SENSOR_WIDTH,
            n_hidden,
            n_outputs: 2,
        }
    }

    pub fn weight_count(&self) -> usize {
        (self.n_inputs + 1) * self.n_hidden + (self.n_hidden + 1) * self.n_outputs
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_hidden == 0 || self.n_outputs == 0 {
            return Err(Error::config("every layer needs at least one neuron"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(Vec<f64>);

impl Genome {
    pub fn new(topology: &NetTopology, weights: Vec<f64>) -> Result<Self> {
        check_len(topology.weight_count(), weights.len())?;
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::input("genome weights must be finite"));
        }
        Ok(Genome(weights))
    }

    pub fn zeros(topology: &NetTopology) -> Self {
        Genome(vec![0.0; topology.weight_count()])
    }

    /// Uniform on `[-INIT_BOUND, INIT_BOUND]`.
    pub fn random<R: Rng + ?Sized>(topology: &NetTopology, rng: &mut R) -> Self {
        Genome(
            (0..topology.weight_count())
                .map(|_| rng.random_range(-INIT_BOUND..=INIT_BOUND))
                .collect(),
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn forward(genome: &Genome, topology: &NetTopology, input: &[f64]) -> Result<Vec<f64>> {
    check_len(topology.weight_count(), genome.len())?;
    check_len(topology.n_inputs, input.len())?;
    if !input.iter().all(|x| x.is_finite()) {
        return Err(Error::input("controller input must be finite"));
    }
    let mut hidden = vec![0.0; topology.n_hidden];
    let mut out = vec![0.0; topology.n_outputs];
    forward_into(genome.weights(), topology, input, &mut hidden, &mut out);
    Ok(out)
}

fn forward_into(w: &[f64], t: &NetTopology, input: &[f64], hidden: &mut [f64], out: &mut [f64]) {
    let row = t.n_inputs + 1;
    for (h, weights) in hidden.iter_mut().zip(w.chunks_exact(row)) {
        let (ws, bias) = weights.split_at(t.n_inputs);
        *h = (dot(ws, input) + bias[0]).tanh();
    }
    let out_w = &w[row * t.n_hidden..];
    for (o, weights) in out.iter_mut().zip(out_w.chunks_exact(t.n_hidden + 1)) {
        let (ws, bias) = weights.split_at(t.n_hidden);
        *o = (dot(ws, hidden) + bias[0]).tanh();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A genome bound to its topology; drives the robot with outputs
/// `[left, right]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    topology: NetTopology,
    genome: Genome,
}

impl Controller {
    pub fn new(topology: NetTopology, genome: Genome) -> Result<Self> {
        topology.validate()?;
        check_len(topology.weight_count(), genome.len())?;
        if topology.n_hidden > MAX_HIDDEN {
            return Err(Error::config(format!(
                "at most {MAX_HIDDEN} hidden neurons"
            )));
        }
        if topology.n_inputs != SENSOR_WIDTH || topology.n_outputs != 2 {
            return Err(Error::config(format!(
                "maze controllers need {SENSOR_WIDTH} inputs and 2 outputs"
            )));
        }
        Ok(Controller { topology, genome })
    }

    pub fn topology(&self) -> &NetTopology {
        &self.topology
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }
}

impl Policy for Controller {
    fn act(&self, reading: &SensorReading) -> MotorCommand {
        let input = reading.to_input();
        let mut hidden = [0.0; MAX_HIDDEN];
        let mut out = [0.0; 2];
        forward_into(
            self.genome.weights(),
            &self.topology,
            &input,
            &mut hidden[..self.topology.n_hidden],
            &mut out,
        );
        MotorCommand {
            left: out[0],
            right: out[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ProbeMode {
    /// Rangefinders uniform on `[0, 1]`, beacon sector uniform.
    #[default]
    Uniform,
    /// Sensor readings harvested from rollouts of random controllers.
    Trajectory,
}

/// Fixed input sequence shared by every controller compared in one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSequence {
    pub inputs: Vec<Vec<f64>>,
    pub seed: u64,
    pub mode: ProbeMode,
}

impl ProbeSequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn require_sensor_topology(topology: &NetTopology) -> Result<()> {
    if topology.n_inputs == SENSOR_WIDTH {
        Ok(())
    } else {
        Err(Error::config(format!(
            "probes are drawn in sensor space and need {SENSOR_WIDTH} inputs, topology has {}",
            topology.n_inputs
        )))
    }
}

pub fn draw_probe(topology: &NetTopology, k: usize, seed: u64) -> Result<ProbeSequence> {
    require_sensor_topology(topology)?;
    if k == 0 {
        return Err(Error::config("probe length must be at least 1"));
    }
    let mut rng = rng::seeded(seed);
    let inputs = (0..k)
        .map(|_| {
            let mut input = vec![0.0; SENSOR_WIDTH];
            for v in &mut input[..RANGEFINDERS] {
                *v = rng.random::<f64>();
            }
            let sector = rng.random_range(0..BEACON_SECTORS);
            input[RANGEFINDERS + sector] = 1.0;
            input
        })
        .collect();
    Ok(ProbeSequence {
        inputs,
        seed,
        mode: ProbeMode::Uniform,
    })
}

/// Draws `k` sensor readings from the trajectories of `n_controllers` random
/// controllers.
pub fn draw_trajectory_probe(
    map: &MazeMap,
    topology: &NetTopology,
    k: usize,
    seed: u64,
    n_controllers: usize,
) -> Result<ProbeSequence> {
    require_sensor_topology(topology)?;
    if k == 0 || n_controllers == 0 {
        return Err(Error::config(
            "probe length and controller count must be at least 1",
        ));
    }
    let mut rng = rng::seeded(seed);
    let steps = map.config().max_steps;
    let mut pool = Vec::with_capacity(n_controllers * steps);
    for _ in 0..n_controllers {
        let controller = Controller::new(*topology, Genome::random(topology, &mut rng))?;
        let mut state = RobotState::at_start(map);
        for _ in 0..steps {
            let reading = sense(map, &state);
            pool.push(reading.to_input().to_vec());
            state = step(map, &state, controller.act(&reading));
        }
    }
    let inputs = (0..k)
        .map(|_| pool[rng.random_range(0..pool.len())].clone())
        .collect();
    Ok(ProbeSequence {
        inputs,
        seed,
        mode: ProbeMode::Trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phenotype(pub Vec<f64>);

impl Phenotype {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Concatenated controller outputs over the probe inputs, in probe order.
pub fn sample_phenotype(
    genome: &Genome,
    topology: &NetTopology,
    probe: &ProbeSequence,
) -> Result<Phenotype> {
    check_len(topology.weight_count(), genome.len())?;
    let mut hidden = vec![0.0; topology.n_hidden];
    let mut out = vec![0.0; topology.n_outputs];
    let mut values = Vec::with_capacity(probe.len() * topology.n_outputs);
    for input in &probe.inputs {
        check_len(topology.n_inputs, input.len())?;
        forward_into(genome.weights(), topology, input, &mut hidden, &mut out);
        values.extend_from_slice(&out);
    }
    Ok(Phenotype(values))
}

/// Perturbs each weight with probability `rate` by `N(0, sigma)` and clamps
/// to `[-WEIGHT_BOUND, WEIGHT_BOUND]`.
///
/// Panics if `rate` is outside `[0, 1]` or `sigma` is not positive.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, rate: f64, sigma: f64, rng: &mut R) -> Genome {
    assert!(
        (0.0..=1.0).contains(&rate),
        "mutation rate {rate} outside [0, 1]"
    );
    assert!(sigma > 0.0, "mutation sigma must be positive");
    let normal = Normal::new(0.0, sigma).expect("finite mutation sigma");
    Genome(
        genome
            .0
            .iter()
            .map(|&w| {
                if rng.random::<f64>() < rate {
                    (w + normal.sample(rng)).clamp(-WEIGHT_BOUND, WEIGHT_BOUND)
                } else {
                    w
                }
            })
            .collect(),
    )
}

/// Convenience wrapper: rollout of a genome with the map's episode length.
pub fn evaluate(map: &MazeMap, controller: &Controller) -> crate::sim::RolloutResult {
    rollout(map, controller, map.config().max_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn topo() -> NetTopology {
        NetTopology::maze(2)
    }

    /// Dense matrices built independently of the packed layout walk.
    fn oracle_forward(w: &[f64], t: &NetTopology, input: &[f64]) -> Vec<f64> {
        let mut w1 = vec![vec![0.0; t.n_inputs + 1]; t.n_hidden];
        let mut idx = 0;
        for row in w1.iter_mut() {
            for v in row.iter_mut() {
                *v = w[idx];
                idx += 1;
            }
        }
        let mut w2 = vec![vec![0.0; t.n_hidden + 1]; t.n_outputs];
        for row in w2.iter_mut() {
            for v in row.iter_mut() {
                *v = w[idx];
                idx += 1;
            }
        }
        let mut x = input.to_vec();
        x.push(1.0);
        let mut h: Vec<f64> = w1
            .iter()
            .map(|r| r.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().tanh())
            .collect();
        h.push(1.0);
        w2.iter()
            .map(|r| r.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>().tanh())
            .collect()
    }

    #[test]
    fn weight_count_includes_biases() {
        assert_eq!(NetTopology::maze(2).weight_count(), 8 * 2 + 3 * 2);
        assert_eq!(NetTopology::maze(5).weight_count(), 8 * 5 + 6 * 2);
    }

    #[test]
    fn zero_genome_outputs_zero() {
        let t = topo();
        let out = forward(&Genome::zeros(&t), &t, &[0.3, 0.1, 0.9, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_dense_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n_hidden in [2, 5] {
            let t = NetTopology::maze(n_hidden);
            for _ in 0..50 {
                let g = Genome::new(
                    &t,
                    (0..t.weight_count())
                        .map(|_| rng.random_range(-4.0..4.0))
                        .collect(),
                )
                .unwrap();
                let input: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
                let got = forward(&g, &t, &input).unwrap();
                let want = oracle_forward(g.weights(), &t, &input);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() <= 1e-12);
                }
                assert_eq!(got, forward(&g, &t, &input).unwrap());
            }
        }
    }

    #[test]
    fn forward_rejects_bad_lengths() {
        let t = topo();
        assert!(matches!(
            forward(&Genome::zeros(&t), &t, &[0.0; 6]),
            Err(Error::DimensionMismatch {
                expected: 7,
                got: 6
            })
        ));
        assert!(Genome::new(&t, vec![0.0; 3]).is_err());
        assert!(Genome::new(&t, vec![f64::NAN; t.weight_count()]).is_err());
    }

    #[test]
    fn phenotype_length_and_zero_genome() {
        let t = topo();
        let probe = draw_probe(&t, 4, 11).unwrap();
        let p = sample_phenotype(&Genome::zeros(&t), &t, &probe).unwrap();
        assert_eq!(p.values().len(), 8);
        assert!(p.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn phenotype_length_independent_of_hidden_size() {
        let probe = draw_probe(&topo(), 16, 5).unwrap();
        let mut rng = rng::seeded(1);
        for n_hidden in [1, 2, 5, 9] {
            let t = NetTopology::maze(n_hidden);
            let p = sample_phenotype(&Genome::random(&t, &mut rng), &t, &probe).unwrap();
            assert_eq!(p.values().len(), 32);
            assert!(p.values().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn probe_is_seeded_and_valid() {
        let t = topo();
        assert_eq!(draw_probe(&t, 2, 0).unwrap(), draw_probe(&t, 2, 0).unwrap());
        let probe = draw_probe(&t, 256, 9).unwrap();
        assert_eq!(probe.len(), 256);
        for input in &probe.inputs {
            assert_eq!(input.len(), 7);
            assert!(input[..3].iter().all(|v| (0.0..=1.0).contains(v)));
            let beacon = &input[3..];
            assert_eq!(beacon.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(beacon.iter().sum::<f64>(), 1.0);
        }
        assert!(draw_probe(&t, 0, 0).is_err());
    }

    #[test]
    fn trajectory_probe_inputs_are_sensor_readings() {
        let map = crate::sim::build_maze(&crate::sim::MazeConfig::default()).unwrap();
        let t = topo();
        let probe = draw_trajectory_probe(&map, &t, 32, 4, 3).unwrap();
        assert_eq!(probe.len(), 32);
        assert_eq!(probe.mode, ProbeMode::Trajectory);
        for input in &probe.inputs {
            assert!(input[..3].iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(input[3..].iter().sum::<f64>(), 1.0);
        }
        assert_eq!(probe, draw_trajectory_probe(&map, &t, 32, 4, 3).unwrap());
    }

    #[test]
    fn zero_rate_mutation_is_identity() {
        let t = topo();
        let mut rng = rng::seeded(2);
        let g = Genome::random(&t, &mut rng);
        assert_eq!(mutate(&g, 0.0, 0.2, &mut rng), g);
    }

    #[test]
    fn vanishing_sigma_keeps_genome() {
        let t = topo();
        let mut rng = rng::seeded(2);
        let g = Genome::random(&t, &mut rng);
        let m = mutate(&g, 1.0, 1e-300, &mut rng);
        for (a, b) in g.weights().iter().zip(m.weights()) {
            assert!((a - b).abs() < 1e-200);
        }
    }

    #[test]
    fn mutation_frequency() {
        let g = Genome(vec![0.5; 20]);
        let mut rng = rng::seeded(77);
        let mut changed = 0usize;
        let trials = 10_000;
        for _ in 0..trials {
            let m = mutate(&g, 0.05, 0.2, &mut rng);
            changed += m
                .weights()
                .iter()
                .zip(g.weights())
                .filter(|(a, b)| a != b)
                .count();
        }
        let frac = changed as f64 / (trials * 20) as f64;
        assert!((frac - 0.05).abs() <= 0.01, "fraction {frac}");
    }

    #[test]
    fn mutation_respects_bounds() {
        let g = Genome(vec![3.9; 50]);
        let mut rng = rng::seeded(5);
        let m = mutate(&g, 1.0, 5.0, &mut rng);
        assert!(m.weights().iter().all(|w| w.abs() <= WEIGHT_BOUND));
    }

    #[test]
    fn lipschitz_in_weights() {
        // |d out / d w| <= 1 * max(|input|, |hidden|, 1) * (1 + sum|w2|) on bounded input
        let t = topo();
        let mut rng = rng::seeded(8);
        let g = Genome::random(&t, &mut rng);
        let input = [0.2, 0.7, 1.0, 0.0, 0.0, 1.0, 0.0];
        let base = forward(&g, &t, &input).unwrap();
        let w2_sum: f64 = g.weights()[16..].iter().map(|w| w.abs()).sum();
        let bound = 1.0 + w2_sum;
        let delta = 1e-6;
        for i in 0..t.weight_count() {
            let mut w = g.weights().to_vec();
            w[i] += delta;
            let out = forward(&Genome(w), &t, &input).unwrap();
            for (a, b) in out.iter().zip(&base) {
                assert!((a - b).abs() <= bound * delta * (1.0 + 1e-6));
            }
        }
    }

    proptest! {
        #[test]
        fn outputs_stay_open_interval(weights in prop::collection::vec(-4.0f64..4.0, 22),
                                      input in prop::collection::vec(0.0f64..1.0, 7)) {
            let t = topo();
            let out = forward(&Genome::new(&t, weights).unwrap(), &t, &input).unwrap();
            prop_assert!(out.iter().all(|o| o.abs() < 1.0));
        }
    }
}
