//! Straight-line reference implementations, written independently of the
//! library kernels.
#![allow(clippy::needless_range_loop)]

use adhoc_sv::diffcore::Tensor;
use adhoc_sv::graphs::AdjacencyMatrix;
use adhoc_sv::scenesim::Scene;
use adhoc_sv::stagg::{GcnHead, SamHead};

fn proj(x: &Tensor, w: &Tensor) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|i| (0..w.cols()).map(|k| (0..x.cols()).map(|j| x.at(i, j) * w.at(j, k)).sum()).collect())
        .collect()
}

fn softmax_over(scores: &[f64], allowed: &[bool]) -> Vec<f64> {
    let m = scores.iter().zip(allowed).filter(|(_, &a)| a).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().zip(allowed).map(|(s, &a)| if a { (s - m).exp() } else { 0.0 }).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Multi-head masked scaled dot-product attention, heads concatenated.
pub fn sam(x: &Tensor, a: &AdjacencyMatrix, heads: &[SamHead]) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut out = vec![Vec::new(); n];
    for h in heads {
        let (q, k, v) = (proj(x, &h.w_q.value), proj(x, &h.w_k.value), proj(x, &h.w_v.value));
        let d = q[0].len();
        for i in 0..n {
            let s: Vec<f64> =
                (0..n).map(|j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt()).collect();
            let p = softmax_over(&s, a.row(i));
            for c in 0..d {
                out[i].push((0..n).map(|j| p[j] * v[j][c]).sum());
            }
        }
    }
    out
}

fn lrelu(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

/// Additive attention with the score taken literally as
/// `βᵀ LeakyReLU(concat(g_l[i], g_r[j]))` for every edge.
pub fn gcn(x: &Tensor, a: &AdjacencyMatrix, heads: &[GcnHead], slope: f64) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut out = vec![Vec::new(); n];
    for h in heads {
        let (gl, gr) = (proj(x, &h.w_l.value), proj(x, &h.w_r.value));
        let d = gl[0].len();
        let beta = h.beta.value.data();
        for i in 0..n {
            let e: Vec<f64> = (0..n)
                .map(|j| {
                    let cat: Vec<f64> = gl[i].iter().chain(&gr[j]).copied().collect();
                    cat.iter().zip(beta).map(|(c, b)| b * lrelu(*c, slope)).sum()
                })
                .collect();
            let alpha = softmax_over(&e, a.row(i));
            for c in 0..d {
                out[i].push((0..n).map(|j| alpha[j] * gr[j][c]).sum());
            }
        }
    }
    out
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Direct `exp(s) / Σ exp(s)` over neighbors with compensated summation and no max shift.
pub fn masked_softmax(logits: &Tensor, a: &AdjacencyMatrix) -> Vec<Vec<f64>> {
    (0..logits.rows())
        .map(|i| {
            let e: Vec<f64> =
                (0..logits.cols()).map(|j| if a.get(i, j) { logits.at(i, j).exp() } else { 0.0 }).collect();
            let z = compensated_sum(e.iter().copied());
            e.into_iter().map(|v| v / z).collect()
        })
        .collect()
}

/// EER by sweeping every candidate threshold and counting errors directly.
pub fn eer_sweep(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let mut taus: Vec<f64> = scores.to_vec();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.push(f64::INFINITY);
    let n_t = labels.iter().filter(|&&l| l).count() as f64;
    let n_n = labels.len() as f64 - n_t;
    let rates = |tau: f64| {
        let mut fa = 0.0;
        let mut fr = 0.0;
        for (s, &l) in scores.iter().zip(labels) {
            match (l, *s >= tau) {
                (false, true) => fa += 1.0,
                (true, false) => fr += 1.0,
                _ => {}
            }
        }
        (fa / n_n, fr / n_t)
    };
    let mut prev: Option<(f64, f64, f64)> = None;
    for &tau in &taus {
        let (far, frr) = rates(tau);
        if frr - far >= 0.0 {
            return match prev {
                None => (far, tau),
                Some((tp, fap, frp)) => {
                    let gp = frp - fap;
                    let gk = frr - far;
                    let lam = if gk - gp == 0.0 { 0.0 } else { -gp / (gk - gp) };
                    let thr = if tau.is_finite() { tp + lam * (tau - tp) } else { tp };
                    (fap + lam * (far - fap), thr)
                }
            };
        }
        prev = Some((tau, far, frr));
    }
    unreachable!("FRR reaches 1 at +inf")
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn nearest(scene: &Scene) -> usize {
    let d: Vec<f64> = scene.nodes.iter().map(|n| dist(n, &scene.speaker.pos)).collect();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order[0]
}

fn or_nearest(sel: Vec<bool>, scene: &Scene) -> Vec<bool> {
    if sel.iter().any(|&b| b) {
        return sel;
    }
    let mut v = vec![false; sel.len()];
    v[nearest(scene)] = true;
    v
}

/// Sort nodes by distance ratio and keep the prefix strictly below `rho`.
pub fn prior_mask(scene: &Scene, rho: f64) -> Vec<bool> {
    let d: Vec<f64> = scene.nodes.iter().map(|n| dist(n, &scene.speaker.pos)).collect();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let dmax = d[*order.last().unwrap()];
    let mut sel = vec![false; d.len()];
    for &i in &order {
        let r = if dmax > 0.0 { d[i] / dmax } else { 0.0 };
        if r >= rho {
            break;
        }
        sel[i] = true;
    }
    or_nearest(sel, scene)
}

pub fn orientation_mask(prev: &[bool], scene: &Scene) -> Vec<bool> {
    let (s, f) = (scene.speaker.pos, scene.speaker.facing);
    let sel = scene
        .nodes
        .iter()
        .zip(prev)
        .map(|(n, &p)| p && (n[0] - s[0]) * f[0] + (n[1] - s[1]) * f[1] + (n[2] - s[2]) * f[2] >= 0.0)
        .collect();
    or_nearest(sel, scene)
}

/// Sort by noise-distance ratio and drop the prefix strictly below `rho_noise`.
pub fn noise_mask(prev: &[bool], scene: &Scene, rho_noise: f64) -> Vec<bool> {
    let np = scene.noise_pos.unwrap();
    let d: Vec<f64> = scene.nodes.iter().map(|n| dist(n, &np)).collect();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let dmax = d[*order.last().unwrap()];
    let mut sel = prev.to_vec();
    for &i in &order {
        let r = if dmax > 0.0 { d[i] / dmax } else { 0.0 };
        if r >= rho_noise {
            break;
        }
        sel[i] = false;
    }
    or_nearest(sel, scene)
}
