//! Ad-hoc array scene geometry and a synthetic stand-in for the frozen
//! frame-level embedding extractor.
//!
//! Each channel receives the speaker's identity vector plus Gaussian noise
//! whose scale grows with the node's relative distance to the speaker, with
//! the scene SNR, and with proximity to the point noise source.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::FrameTensor;

pub type Point = [f64; 3];

pub(crate) fn sub3(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot3(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn dist3(a: &Point, b: &Point) -> f64 {
    let d = sub3(a, b);
    dot3(&d, &d).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Speaker {
    pub pos: Point,
    /// Unit vector the speaker faces.
    pub facing: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    /// Width, length, height in meters.
    pub room: Point,
    pub speaker: Speaker,
    pub noise_pos: Option<Point>,
    pub nodes: Vec<Point>,
    pub t60: f64,
    pub snr_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Distances {
    pub to_speaker: Vec<f64>,
    pub to_noise: Option<Vec<f64>>,
    pub max_speaker: f64,
    pub max_noise: Option<f64>,
}

impl Scene {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn distances(&self) -> Distances {
        let to_speaker: Vec<f64> = self.nodes.iter().map(|n| dist3(n, &self.speaker.pos)).collect();
        let to_noise: Option<Vec<f64>> =
            self.noise_pos.map(|np| self.nodes.iter().map(|n| dist3(n, &np)).collect());
        let max_speaker = to_speaker.iter().copied().fold(0.0, f64::max);
        let max_noise = to_noise.as_ref().map(|v| v.iter().copied().fold(0.0, f64::max));
        Distances { to_speaker, to_noise, max_speaker, max_noise }
    }

    /// Scene restricted to the given nodes, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Scene> {
        let nodes = idx
            .iter()
            .map(|&i| {
                self.nodes
                    .get(i)
                    .copied()
                    .ok_or(Error::IndexOutOfRange { index: i, len: self.nodes.len() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene { nodes, ..self.clone() })
    }

    /// Checks placement and facing invariants.
    pub fn validate(&self) -> Result<()> {
        if self.room.iter().any(|&v| v.is_nan() || v <= 0.0 || !v.is_finite()) {
            return Err(Error::Data(format!("invalid room dimensions {:?}", self.room)));
        }
        let inside = |p: &Point| (0..3).all(|k| p[k] > 0.0 && p[k] < self.room[k]);
        if !inside(&self.speaker.pos) {
            return Err(Error::Data("speaker outside the room".into()));
        }
        if let Some(np) = &self.noise_pos {
            if !inside(np) {
                return Err(Error::Data("noise source outside the room".into()));
            }
        }
        if let Some(i) = self.nodes.iter().position(|p| !inside(p)) {
            return Err(Error::Data(format!("node {i} outside the room")));
        }
        let norm = dot3(&self.speaker.facing, &self.speaker.facing).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("facing vector has norm {norm}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Scene> {
        let scene: Scene = serde_json::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }
}

pub type Range = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub room_width: Range,
    pub room_length: Range,
    pub room_height: Range,
    pub t60: Range,
    pub snr_db: Range,
    /// Place a point noise source in every scene.
    pub noise_source: bool,
    /// Share one room and node layout across all utterances (speaker still varies).
    pub fixed_layout: bool,
    pub wall_margin: f64,
    pub d: usize,
    pub t: usize,
    pub n_speakers: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_nodes: 40,
            room_width: [8.0, 10.0],
            room_length: [12.0, 14.0],
            room_height: [3.0, 5.0],
            t60: [0.2, 0.5],
            snr_db: [-5.0, 20.0],
            noise_source: true,
            fixed_layout: false,
            wall_margin: 0.1,
            d: 16,
            t: 20,
            n_speakers: 20,
            n_train: 200,
            n_test: 50,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Reverberation-only variant: longer T60 range, no point noise source.
    pub fn reverb() -> Self {
        Self { t60: [0.2, 1.2], noise_source: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("room_width", self.room_width),
            ("room_length", self.room_length),
            ("room_height", self.room_height),
            ("t60", self.t60),
            ("snr_db", self.snr_db),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        for (name, [lo, _]) in &ranges[..3] {
            if *lo <= 2.0 * self.wall_margin {
                return Err(Error::Config(format!("{name} too small for the wall margin")));
            }
        }
        if self.wall_margin <= 0.0 {
            return Err(Error::Config("wall_margin must be positive".into()));
        }
        if self.t60[0] <= 0.0 {
            return Err(Error::Config("t60 must be positive".into()));
        }
        if self.n_nodes == 0 || self.d == 0 || self.t == 0 {
            return Err(Error::Config("n_nodes, d and t must be positive".into()));
        }
        if self.n_speakers == 0 {
            return Err(Error::Config("n_speakers must be positive".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn place(rng: &mut ChaCha8Rng, room: &Point, margin: f64) -> Point {
    [
        uniform(rng, [margin, room[0] - margin]),
        uniform(rng, [margin, room[1] - margin]),
        uniform(rng, [margin, room[2] - margin]),
    ]
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Point {
    loop {
        let v: Point = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = dot3(&v, &v).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Samples room, speaker, noise source and nodes uniformly; `cfg` must be valid.
pub fn sample_scene(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> Scene {
    let room = [
        uniform(rng, cfg.room_width),
        uniform(rng, cfg.room_length),
        uniform(rng, cfg.room_height),
    ];
    let pos = place(rng, &room, cfg.wall_margin);
    let facing = unit_vector(rng);
    let noise_pos = cfg.noise_source.then(|| place(rng, &room, cfg.wall_margin));
    let nodes = (0..cfg.n_nodes).map(|_| place(rng, &room, cfg.wall_margin)).collect();
    Scene {
        room,
        speaker: Speaker { pos, facing },
        noise_pos,
        nodes,
        t60: uniform(rng, cfg.t60),
        snr_db: uniform(rng, cfg.snr_db),
    }
}

/// Resamples speaker, facing, noise source, T60 and SNR inside an existing
/// room and node layout.
pub fn sample_scene_in_layout(rng: &mut ChaCha8Rng, cfg: &SimConfig, layout: &Scene) -> Scene {
    let room = layout.room;
    let pos = place(rng, &room, cfg.wall_margin);
    let facing = unit_vector(rng);
    let noise_pos = cfg.noise_source.then(|| place(rng, &room, cfg.wall_margin));
    Scene {
        room,
        speaker: Speaker { pos, facing },
        noise_pos,
        nodes: layout.nodes.clone(),
        t60: uniform(rng, cfg.t60),
        snr_db: uniform(rng, cfg.snr_db),
    }
}

/// Fixed random unit identity vectors, one per speaker.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    vectors: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(n_speakers: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = (0..n_speakers)
            .map(|_| loop {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break v.into_iter().map(|x| x / n).collect();
                }
            })
            .collect();
        Self { vectors }
    }

    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Self {
        Self { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, speaker: usize) -> Result<&[f64]> {
        self.vectors.get(speaker).map(Vec::as_slice).ok_or(Error::UnknownSpeaker(speaker))
    }
}

/// Distance-dependent part of the per-channel noise scale.
pub fn distance_gain(ratio: f64) -> f64 {
    0.2 + ratio
}

/// Per-channel noise standard deviation:
/// `g(d/d_max) · 10^(-snr/20) · (1 + (1 - d_noise/d_max_noise))`.
pub fn channel_noise_scales(scene: &Scene) -> Vec<f64> {
    let d = scene.distances();
    let snr = 10f64.powf(-scene.snr_db / 20.0);
    (0..scene.nodes.len())
        .map(|c| {
            let r = if d.max_speaker > 0.0 { d.to_speaker[c] / d.max_speaker } else { 0.0 };
            let proximity = match (&d.to_noise, d.max_noise) {
                (Some(tn), Some(m)) if m > 0.0 => 1.0 + (1.0 - tn[c] / m),
                (Some(_), Some(_)) => 2.0,
                _ => 1.0,
            };
            distance_gain(r) * snr * proximity
        })
        .collect()
}

/// Frame features for one utterance: identity vector plus scaled Gaussian noise.
pub fn synth_features(
    scene: &Scene,
    speaker: usize,
    codebook: &Codebook,
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
) -> Result<FrameTensor> {
    let identity = codebook.get(speaker)?;
    if identity.len() != cfg.d {
        return Err(Error::Dimension(format!(
            "codebook dimension {} differs from configured d={}",
            identity.len(),
            cfg.d
        )));
    }
    let sigmas = channel_noise_scales(scene);
    let (c, t, d) = (scene.nodes.len(), cfg.t, cfg.d);
    let mut data = Vec::with_capacity(c * t * d);
    for sigma in &sigmas {
        for _ in 0..t {
            for &v in identity {
                let eps: f64 = rng.sample(StandardNormal);
                data.push(v + sigma * eps);
            }
        }
    }
    FrameTensor::new(c, t, d, data)
}
