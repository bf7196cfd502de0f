//! Shared generators, reference implementations and check suites for the
//! integration tests and the acceptance target.
#![allow(dead_code)]

pub mod oracle;
pub mod cli;
pub mod suites;

use adhoc_sv::diffcore::Tensor;
use adhoc_sv::graphs::AdjacencyMatrix;
use adhoc_sv::scenesim::{Scene, Speaker};
use adhoc_sv::FrameTensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn rand_frames(rng: &mut ChaCha8Rng, c: usize, t: usize, d: usize) -> FrameTensor {
    FrameTensor::new(c, t, d, (0..c * t * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Random directed graph with self-loops, each off-diagonal edge kept with probability `p`.
pub fn rand_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> AdjacencyMatrix {
    let rows: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j || rng.gen_bool(p)).collect()).collect();
    AdjacencyMatrix::from_rows(&rows).unwrap()
}

fn rand_point(rng: &mut ChaCha8Rng, room: [f64; 3]) -> [f64; 3] {
    [rng.gen_range(0.1..room[0] - 0.1), rng.gen_range(0.1..room[1] - 0.1), rng.gen_range(0.1..room[2] - 0.1)]
}

/// Random valid scene with `n` nodes and a noise source.
pub fn rand_scene(rng: &mut ChaCha8Rng, n: usize) -> Scene {
    let room = [rng.gen_range(8.0..10.0), rng.gen_range(12.0..14.0), rng.gen_range(3.0..5.0)];
    let f: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let norm = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
    Scene {
        room,
        speaker: Speaker { pos: rand_point(rng, room), facing: [f[0] / norm, f[1] / norm, f[2] / norm] },
        noise_pos: Some(rand_point(rng, room)),
        nodes: (0..n).map(|_| rand_point(rng, room)).collect(),
        t60: 0.3,
        snr_db: 5.0,
    }
}

/// Nodes on the x axis at the given distances from a speaker at the origin
/// side of the room, facing +x.
pub fn line_scene(distances: &[f64]) -> Scene {
    let room = [20.0, 10.0, 4.0];
    let spk = [0.5, 5.0, 2.0];
    Scene {
        room,
        speaker: Speaker { pos: spk, facing: [1.0, 0.0, 0.0] },
        noise_pos: None,
        nodes: distances.iter().map(|&d| [spk[0] + d, spk[1], spk[2]]).collect(),
        t60: 0.3,
        snr_db: 10.0,
    }
}
