use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::train::Sample;
use crate::error::{Error, Result};

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("embeddings of length {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub target: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub scores: Option<Vec<f64>>,
}

impl TrialSet {
    pub fn new(trials: Vec<Trial>) -> Self {
        Self { trials, scores: None }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Reads `enroll_id,test_id,label` rows; a header row is optional.
    pub fn read_csv<R: Read>(r: R) -> Result<TrialSet> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
        let mut trials = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Data(format!("trial line {} has {} fields", line + 1, rec.len())));
            }
            let target = match &rec[2] {
                "target" => true,
                "nontarget" => false,
                "label" if line == 0 => continue,
                other => return Err(Error::Data(format!("trial line {}: unknown label {other:?}", line + 1))),
            };
            trials.push(Trial { enroll: rec[0].to_string(), test: rec[1].to_string(), target });
        }
        Ok(TrialSet::new(trials))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["enroll_id", "test_id", "label"])?;
        for t in &self.trials {
            wr.write_record([t.enroll.as_str(), t.test.as_str(), if t.target { "target" } else { "nontarget" }])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn labels(&self) -> Vec<bool> {
        self.trials.iter().map(|t| t.target).collect()
    }
}

/// Every unordered pair of utterances; target iff same speaker.
pub fn all_pairs_trials(utts: &[Sample]) -> TrialSet {
    let mut trials = Vec::new();
    for i in 0..utts.len() {
        for j in i + 1..utts.len() {
            trials.push(Trial {
                enroll: utts[i].id.clone(),
                test: utts[j].id.clone(),
                target: utts[i].speaker == utts[j].speaker,
            });
        }
    }
    TrialSet::new(trials)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate with trials accepted when `score >= threshold`.
///
/// Operating points are evaluated at every distinct score and at `+∞`. The
/// EER is read off the first point where the false-reject rate reaches the
/// false-accept rate, interpolating linearly from the preceding point.
pub fn compute_eer(scores: &[f64], labels: &[bool]) -> Result<EerResult> {
    if scores.len() != labels.len() {
        return Err(Error::Protocol(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("trial score".into()));
    }
    let n_tar = labels.iter().filter(|&&l| l).count();
    let n_non = labels.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::Protocol("EER needs both target and nontarget trials".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // (threshold, far, frr) at every distinct score, then +inf
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        points.push((tau, (n_non - non_below) as f64 / n_non as f64, tar_below as f64 / n_tar as f64));
        while i < order.len() && scores[order[i]] == tau {
            if labels[order[i]] {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push((f64::INFINITY, 0.0, 1.0));
    let k = points
        .iter()
        .position(|&(_, far, frr)| frr - far >= 0.0)
        .expect("the +inf operating point always satisfies frr >= far");
    let (tau_k, far_k, frr_k) = points[k];
    let dk = frr_k - far_k;
    if dk == 0.0 || k == 0 {
        return Ok(EerResult { eer: far_k, threshold: if tau_k.is_finite() { tau_k } else { points[k - 1].0 } });
    }
    let (tau_p, far_p, frr_p) = points[k - 1];
    let dp = frr_p - far_p;
    let lambda = dp / (dp - dk);
    let eer = far_p + lambda * (far_k - far_p);
    let threshold = if tau_k.is_finite() { tau_p + lambda * (tau_k - tau_p) } else { tau_p };
    Ok(EerResult { eer, threshold })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer: f64,
    pub threshold: f64,
    pub n_trials: usize,
    #[serde(skip)]
    pub scores: Vec<f64>,
}

/// Embeds every referenced utterance once, scores trials by cosine similarity
/// and computes the EER.
pub fn evaluate(model: &Model, utts: &[Sample], trials: &TrialSet) -> Result<EvalReport> {
    let by_id: HashMap<&str, &Sample> = utts.iter().map(|u| (u.id.as_str(), u)).collect();
    let mut needed: BTreeMap<&str, &Sample> = BTreeMap::new();
    for t in &trials.trials {
        for id in [t.enroll.as_str(), t.test.as_str()] {
            let u = by_id.get(id).ok_or_else(|| Error::Data(format!("trial references unknown utterance {id:?}")))?;
            needed.insert(id, u);
        }
    }
    let embedded: Vec<(&str, Vec<f64>)> = needed
        .into_par_iter()
        .map(|(id, u)| model.embed(&u.features, u.scene.as_ref()).map(|e| (id, e.s)))
        .collect::<Result<_>>()?;
    let emb: HashMap<&str, Vec<f64>> = embedded.into_iter().collect();
    let scores = trials
        .trials
        .iter()
        .map(|t| cosine_score(&emb[t.enroll.as_str()], &emb[t.test.as_str()]))
        .collect::<Result<Vec<f64>>>()?;
    let r = compute_eer(&scores, &trials.labels())?;
    Ok(EvalReport { eer: r.eer, threshold: r.threshold, n_trials: trials.len(), scores })
}
