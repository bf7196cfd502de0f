//! On-disk dataset layout written by `simulate`:
//!
//! ```text
//! manifest.json
//! scenes/<id>.json
//! features/<id>.adhc
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::Dataset;
use crate::error::{Error, Result};
use crate::frames::FrameTensor;
use crate::fsutil::{write_atomic, write_json_atomic};
use crate::scenesim::Scene;
use crate::trainer::{all_pairs_trials, Sample, Trial, TrialSet};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub speaker: usize,
    pub split: Split,
    pub features: PathBuf,
    #[serde(default)]
    pub scene: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataManifest {
    pub n_speakers: usize,
    pub utterances: Vec<ManifestEntry>,
}

pub fn write_dataset(dir: &Path, data: &Dataset, n_speakers: usize) -> Result<()> {
    fs::create_dir_all(dir.join("scenes"))?;
    fs::create_dir_all(dir.join("features"))?;
    let tagged: Vec<(Split, &Sample)> = data
        .train
        .iter()
        .map(|s| (Split::Train, s))
        .chain(data.test.iter().map(|s| (Split::Test, s)))
        .collect();
    let entries = tagged
        .par_iter()
        .map(|(split, s)| {
            let features = PathBuf::from("features").join(format!("{}.adhc", s.id));
            write_atomic(&dir.join(&features), &s.features.to_adhc_bytes())?;
            let scene = match &s.scene {
                Some(scene) => {
                    let rel = PathBuf::from("scenes").join(format!("{}.json", s.id));
                    write_atomic(&dir.join(&rel), scene.to_json()?.as_bytes())?;
                    Some(rel)
                }
                None => None,
            };
            Ok(ManifestEntry { id: s.id.clone(), speaker: s.speaker, split: *split, features, scene })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json_atomic(&dir.join(MANIFEST), &DataManifest { n_speakers, utterances: entries })
}

pub struct LoadedData {
    pub n_speakers: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn read_manifest(dir: &Path) -> Result<DataManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn load_dataset(dir: &Path) -> Result<LoadedData> {
    let manifest = read_manifest(dir)?;
    let samples = manifest
        .utterances
        .par_iter()
        .map(|e| {
            let features = FrameTensor::load(&dir.join(&e.features))?;
            let scene = match &e.scene {
                Some(rel) => {
                    let path = dir.join(rel);
                    let text = fs::read_to_string(&path).map_err(|err| Error::Data(format!("{}: {err}", path.display())))?;
                    Some(Scene::from_json(&text)?)
                }
                None => None,
            };
            if e.speaker >= manifest.n_speakers {
                return Err(Error::UnknownSpeaker(e.speaker));
            }
            Ok((e.split, Sample { id: e.id.clone(), features, scene, speaker: e.speaker }))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (split, s) in samples {
        match split {
            Split::Train => train.push(s),
            Split::Test => test.push(s),
        }
    }
    Ok(LoadedData { n_speakers: manifest.n_speakers, train, test })
}

/// All pairs, or a seeded sample of `n_target` / `n_nontarget` pairs.
pub fn make_trials(utts: &[Sample], counts: Option<(usize, usize)>, seed: u64) -> Result<TrialSet> {
    let all = all_pairs_trials(utts);
    let Some((n_target, n_nontarget)) = counts else {
        return Ok(all);
    };
    let (target, nontarget): (Vec<Trial>, Vec<Trial>) = all.trials.into_iter().partition(|t| t.target);
    if n_target > target.len() || n_nontarget > nontarget.len() {
        return Err(Error::Config(format!(
            "requested {n_target}/{n_nontarget} trials but only {}/{} pairs exist",
            target.len(),
            nontarget.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |pool: &[Trial], n: usize| {
        let mut idx = index::sample(&mut rng, pool.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i].clone()).collect::<Vec<_>>()
    };
    let mut trials = pick(&target, n_target);
    trials.extend(pick(&nontarget, n_nontarget));
    Ok(TrialSet::new(trials))
}
