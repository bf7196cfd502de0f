//! Boolean adjacency matrices for the temporal and spatial graphs, and the
//! prior-knowledge channel masks built from scene geometry.
//!
//! Every constructor sets the diagonal: a node always belongs to its own
//! neighborhood, so masked softmax never sees an empty row.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenesim::{dot3, sub3, Scene};

/// Default threshold for the noise-proximity mask.
pub const DEFAULT_RHO_NOISE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<bool>,
    symmetric: bool,
}

impl AdjacencyMatrix {
    fn from_entries(n: usize, mut entries: Vec<bool>) -> Self {
        for i in 0..n {
            entries[i * n + i] = true;
        }
        let symmetric = (0..n).all(|i| (i + 1..n).all(|j| entries[i * n + j] == entries[j * n + i]));
        Self { n, entries, symmetric }
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(Self::from_entries(n, vec![true; n * n]))
    }

    /// Self-loops only.
    pub fn identity(n: usize) -> Self {
        Self::from_entries(n, vec![false; n * n])
    }

    /// `A[i, j] = 1` iff `|i - j| <= delta`.
    pub fn temporal_span(t: usize, delta: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut e = vec![false; t * t];
        for i in 0..t {
            for j in i.saturating_sub(delta)..=(i + delta).min(t - 1) {
                e[i * t + j] = true;
            }
        }
        Ok(Self::from_entries(t, e))
    }

    /// Row `u` links `u` to its `k` nearest other points (ties to the lower
    /// index). Not symmetric in general.
    pub fn k_nearest(points: &[[f64; 3]], k: usize) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut e = vec![false; n * n];
        for u in 0..n {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&v| v != u)
                .map(|v| (dist(&points[u], &points[v]), v))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, v) in others.iter().take(k) {
                e[u * n + v] = true;
            }
        }
        Ok(Self::from_entries(n, e))
    }

    /// Complete graph over the selected channels; unselected channels keep
    /// only their self-loop.
    pub fn from_selection(mask: &SelectionMask) -> Self {
        let n = mask.len();
        let mut e = vec![false; n * n];
        for i in mask.indices() {
            for j in mask.indices() {
                e[i * n + j] = true;
            }
        }
        Self::from_entries(n, e)
    }

    /// Square boolean rows; the diagonal is forced on.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("adjacency rows must form a square matrix".into()));
        }
        Ok(Self::from_entries(n, rows.concat()))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn count_edges(&self) -> usize {
        self.entries.iter().filter(|&&b| b).count()
    }

    /// Sorted neighbor list of `v`, including `v` itself.
    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        if v >= self.n {
            return Err(Error::IndexOutOfRange { index: v, len: self.n });
        }
        Ok((0..self.n).filter(|&u| self.get(v, u)).collect())
    }

    /// `A[idx, idx]`.
    pub fn submatrix(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptyGraph);
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n) {
            return Err(Error::IndexOutOfRange { index: bad, len: self.n });
        }
        let k = idx.len();
        let mut e = vec![false; k * k];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                e[a * k + b] = self.get(i, j);
            }
        }
        Ok(Self::from_entries(k, e))
    }

    /// `P A Pᵀ` where new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Dimension("permutation length".into()));
        }
        self.submatrix(perm)
    }

    pub fn to_json(&self) -> AdjacencyJson {
        AdjacencyJson {
            n: self.n,
            rows: (0..self.n)
                .map(|i| self.row(i).iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect(),
        }
    }

    pub fn from_json(json: &AdjacencyJson) -> Result<Self> {
        if json.rows.len() != json.n {
            return Err(Error::Data(format!("adjacency declares n={} but has {} rows", json.n, json.rows.len())));
        }
        let rows = json
            .rows
            .iter()
            .map(|r| {
                r.chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        other => Err(Error::Data(format!("invalid adjacency character {other:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }
}

/// Serialized adjacency: one bit string per row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjacencyJson {
    pub n: usize,
    pub rows: Vec<String>,
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = sub3(a, b);
    dot3(&d, &d).sqrt()
}

/// The set of channels kept by a selection step. Never empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    selected: Vec<bool>,
}

impl SelectionMask {
    pub fn new(selected: Vec<bool>) -> Result<Self> {
        if !selected.iter().any(|&b| b) {
            return Err(Error::Range("selection mask selects no channel".into()));
        }
        Ok(Self { selected })
    }

    pub fn all(n: usize) -> Result<Self> {
        Self::new(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn k(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.selected[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.selected
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.selected.iter().map(|&b| u8::from(b)).collect()
    }
}

/// Keeps the nearest channel to the speaker when a filter rejects everything.
fn with_fallback(selected: Vec<bool>, scene: &Scene, reason: &str) -> Result<SelectionMask> {
    if selected.iter().any(|&b| b) {
        return SelectionMask::new(selected);
    }
    let d = scene.distances();
    let nearest = d
        .to_speaker
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(Error::EmptyGraph)?;
    debug!("{reason} rejected every channel; keeping nearest channel {nearest}");
    let mut sel = vec![false; selected.len()];
    sel[nearest] = true;
    SelectionMask::new(sel)
}

/// Distance-ratio prior: channel `i` is selected iff
/// `D(i, spk) / D_max < rho`. The adjacency is complete over the selected
/// channels.
pub fn build_prior(scene: &Scene, rho: f64) -> Result<(AdjacencyMatrix, SelectionMask)> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Range(format!("rho must lie in (0, 1], got {rho}")));
    }
    if scene.nodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let d = scene.distances();
    let selected = d
        .to_speaker
        .iter()
        .map(|&di| ratio(di, d.max_speaker) < rho)
        .collect();
    let mask = with_fallback(selected, scene, "distance prior")?;
    Ok((AdjacencyMatrix::from_selection(&mask), mask))
}

fn ratio(d: f64, max: f64) -> f64 {
    if max > 0.0 {
        d / max
    } else {
        0.0
    }
}

/// Drops channels behind the speaker: `(node - speaker) · facing < 0`.
pub fn apply_orientation_mask(mask: &SelectionMask, scene: &Scene) -> Result<SelectionMask> {
    check_mask_len(mask, scene)?;
    let facing = scene.speaker.facing;
    let selected = scene
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| mask.is_selected(i) && dot3(&sub3(node, &scene.speaker.pos), &facing) >= 0.0)
        .collect();
    with_fallback(selected, scene, "orientation mask")
}

/// Drops channels near the point noise source:
/// `D(i, noise) / D_max_noise < rho_noise`.
pub fn apply_noise_mask(mask: &SelectionMask, scene: &Scene, rho_noise: f64) -> Result<SelectionMask> {
    check_mask_len(mask, scene)?;
    if !(rho_noise > 0.0 && rho_noise <= 1.0) {
        return Err(Error::Range(format!("rho_noise must lie in (0, 1], got {rho_noise}")));
    }
    let d = scene.distances();
    let (to_noise, max_noise) = match (d.to_noise, d.max_noise) {
        (Some(t), Some(m)) => (t, m),
        _ => return Err(Error::Data("noise mask requested but the scene has no noise source".into())),
    };
    let selected = to_noise
        .iter()
        .enumerate()
        .map(|(i, &dn)| mask.is_selected(i) && ratio(dn, max_noise) >= rho_noise)
        .collect();
    with_fallback(selected, scene, "noise mask")
}

fn check_mask_len(mask: &SelectionMask, scene: &Scene) -> Result<()> {
    if mask.len() != scene.nodes.len() {
        return Err(Error::Dimension(format!(
            "mask covers {} channels, scene has {}",
            mask.len(),
            scene.nodes.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::Speaker;

    pub(crate) fn line_scene(distances: &[f64]) -> Scene {
        Scene {
            room: [100.0, 100.0, 10.0],
            speaker: Speaker { pos: [1.0, 50.0, 1.5], facing: [1.0, 0.0, 0.0] },
            noise_pos: None,
            nodes: distances.iter().map(|&d| [1.0 + d, 50.0, 1.5]).collect(),
            t60: 0.3,
            snr_db: 10.0,
        }
    }

    #[test]
    fn complete_graph() {
        let a = AdjacencyMatrix::complete(3).unwrap();
        assert_eq!(a.count_edges(), 9);
        assert_eq!(AdjacencyMatrix::complete(1).unwrap().row(0), &[true]);
        let a = AdjacencyMatrix::complete(40).unwrap();
        assert!(a.is_symmetric());
        assert_eq!(a.count_edges(), 1600);
        assert!(matches!(AdjacencyMatrix::complete(0), Err(Error::EmptyGraph)));
    }

    #[test]
    fn temporal_span_examples() {
        assert_eq!(AdjacencyMatrix::temporal_span(4, 0).unwrap(), AdjacencyMatrix::identity(4));
        let a = AdjacencyMatrix::temporal_span(4, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.get(i, j), i.abs_diff(j) <= 1);
            }
        }
        assert!(a.is_symmetric());
        assert_eq!(AdjacencyMatrix::temporal_span(3, 5).unwrap(), AdjacencyMatrix::complete(3).unwrap());
    }

    #[test]
    fn neighbors_examples() {
        assert_eq!(AdjacencyMatrix::complete(3).unwrap().neighbors(0).unwrap(), vec![0, 1, 2]);
        assert_eq!(AdjacencyMatrix::temporal_span(4, 1).unwrap().neighbors(0).unwrap(), vec![0, 1]);
        assert_eq!(AdjacencyMatrix::identity(3).neighbors(2).unwrap(), vec![2]);
        assert!(matches!(
            AdjacencyMatrix::identity(3).neighbors(3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn prior_threshold_is_strict() {
        let scene = line_scene(&[1.0, 2.0, 3.0, 4.0]);
        let (adj, mask) = build_prior(&scene, 0.6).unwrap();
        assert_eq!(mask.to_bits(), vec![1, 1, 0, 0]);
        assert_eq!(adj.neighbors(0).unwrap(), vec![0, 1]);
        assert_eq!(adj.neighbors(3).unwrap(), vec![3]);

        let (adj, mask) = build_prior(&scene, 1.0).unwrap();
        assert_eq!(mask.to_bits(), vec![1, 1, 1, 0]);
        assert_eq!(adj.neighbors(3).unwrap(), vec![3]);
        assert!(build_prior(&scene, 0.0).is_err());
        assert!(build_prior(&scene, 1.5).is_err());
    }

    #[test]
    fn prior_falls_back_to_nearest() {
        let scene = line_scene(&[3.0, 1.0, 2.0]);
        // 1/3 is not below 0.2
        let (_, mask) = build_prior(&scene, 0.2).unwrap();
        assert_eq!(mask.to_bits(), vec![0, 1, 0]);
    }

    #[test]
    fn orientation_mask_cases() {
        let mut scene = line_scene(&[1.0, -1.0, 0.0]);
        // third node: orthogonal to the facing vector
        scene.nodes[2] = [1.0, 52.0, 1.5];
        let all = SelectionMask::all(3).unwrap();
        let m = apply_orientation_mask(&all, &scene).unwrap();
        assert_eq!(m.to_bits(), vec![1, 0, 1]);
    }

    #[test]
    fn noise_mask_cases() {
        let mut scene = line_scene(&[1.0, 2.0, 10.0]);
        scene.noise_pos = Some(scene.nodes[0]);
        let all = SelectionMask::all(3).unwrap();
        let m = apply_noise_mask(&all, &scene, 0.2).unwrap();
        // node 0 coincides with the noise, node 1 is at ratio 1/9, node 2 at 1.0
        assert_eq!(m.to_bits(), vec![0, 0, 1]);
        assert!(apply_noise_mask(&all, &line_scene(&[1.0, 2.0, 3.0]), 0.2).is_err());
    }

    #[test]
    fn knn_rows() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [7.0, 0.0, 0.0]];
        let a = AdjacencyMatrix::k_nearest(&pts, 1).unwrap();
        assert_eq!(a.neighbors(0).unwrap(), vec![0, 1]);
        assert_eq!(a.neighbors(2).unwrap(), vec![1, 2]);
        assert_eq!(a.neighbors(3).unwrap(), vec![2, 3]);
        assert!(!a.is_symmetric());
    }

    #[test]
    fn json_round_trip() {
        let a = AdjacencyMatrix::temporal_span(5, 1).unwrap();
        let json = a.to_json();
        assert_eq!(json.rows[0], "11000");
        assert_eq!(AdjacencyMatrix::from_json(&json).unwrap(), a);
        let bad = AdjacencyJson { n: 2, rows: vec!["1x".into(), "01".into()] };
        assert!(AdjacencyMatrix::from_json(&bad).is_err());
    }
}
