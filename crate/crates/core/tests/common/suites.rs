//! Check suites shared by the focused integration tests and the acceptance
//! target. Every check is a pure function of a seed.

use std::time::{Duration, Instant};

use adhoc_sv::chansel::{gpool, gpool_backward, top_k, GPoolParams};
use adhoc_sv::diffcore::{
    check_scalar_fn, leaky_relu, leaky_relu_vjp, masked_softmax, masked_softmax_vjp, matmul, matmul_vjp, sigmoid,
    sigmoid_vjp, vjp_check, Differentiable, GradCheckOptions, GradCheckReport, Tensor,
};
use adhoc_sv::graphs::{apply_noise_mask, apply_orientation_mask, build_prior, AdjacencyMatrix};
use adhoc_sv::stagg::{aggregate, spatial_module, temporal_module, AggHeads, AggOp, AggParams, Mechanism};
use adhoc_sv::trainer::{compute_eer, Model, ModelConfig, ModelMechanism, Selection};
use adhoc_sv::{FrameTensor, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{oracle, rand_adjacency, rand_frames, rand_scene, rand_tensor};

pub const GRAD_TOL: f64 = 1e-5;
pub const AGG_ORACLE_TOL: f64 = 1e-10;
pub const EER_ORACLE_TOL: f64 = 1e-9;
pub const ROW_SUM_TOL: f64 = 1e-12;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- gradients

struct MatmulOp;
impl Differentiable for MatmulOp {
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        matmul(&x[0], &x[1])
    }
    fn vjp(&self, x: &[Tensor], g: &Tensor) -> Result<Vec<Tensor>> {
        let (ga, gb) = matmul_vjp(&x[0], &x[1], g)?;
        Ok(vec![ga, gb])
    }
}

struct SoftmaxOp(AdjacencyMatrix);
impl Differentiable for SoftmaxOp {
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        masked_softmax(&x[0], &self.0)
    }
    fn vjp(&self, x: &[Tensor], g: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![masked_softmax_vjp(&masked_softmax(&x[0], &self.0)?, g)])
    }
}

struct SigmoidOp;
impl Differentiable for SigmoidOp {
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        Ok(sigmoid(&x[0]))
    }
    fn vjp(&self, x: &[Tensor], g: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![sigmoid_vjp(&sigmoid(&x[0]), g)])
    }
}

struct LeakyOp(f64);
impl Differentiable for LeakyOp {
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        Ok(leaky_relu(&x[0], self.0))
    }
    fn vjp(&self, x: &[Tensor], g: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![leaky_relu_vjp(&x[0], self.0, g)])
    }
}

/// gPool over `[Z as C×(T·D), p]`.
struct GPoolOp {
    c: usize,
    t: usize,
    d: usize,
    k: usize,
    adjacency: AdjacencyMatrix,
}

impl GPoolOp {
    fn frames(&self, z: &Tensor) -> FrameTensor {
        FrameTensor::new(self.c, self.t, self.d, z.data().to_vec()).unwrap()
    }
}

impl Differentiable for GPoolOp {
    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        let params = GPoolParams::from_vector(x[1].data().to_vec())?;
        let out = gpool(&self.frames(&x[0]), &self.adjacency, &params, self.k)?;
        Tensor::new(vec![self.k, self.t * self.d], out.z.data().to_vec())
    }
    fn vjp(&self, x: &[Tensor], g: &Tensor) -> Result<Vec<Tensor>> {
        let z = self.frames(&x[0]);
        let mut params = GPoolParams::from_vector(x[1].data().to_vec())?;
        let out = gpool(&z, &self.adjacency, &params, self.k)?;
        let grad = FrameTensor::new(self.k, self.t, self.d, g.data().to_vec())?;
        let gz = gpool_backward(&z, &out, &grad, &mut params)?;
        Ok(vec![Tensor::new(x[0].shape().to_vec(), gz.data().to_vec())?, params.p.grad.clone()])
    }
}

fn opts(seed: u64) -> GradCheckOptions {
    GradCheckOptions { seed, ..GradCheckOptions::default() }
}

pub fn grad_matmul(seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let (m, k, n) = (r.gen_range(1..6), r.gen_range(1..6), r.gen_range(1..6));
    let inputs = [rand_tensor(&mut r, &[m, k], 2.0), rand_tensor(&mut r, &[k, n], 2.0)];
    vjp_check(&MatmulOp, &inputs, &opts(seed)).unwrap()
}

pub fn grad_masked_softmax(seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let n = r.gen_range(1..8);
    let a = rand_adjacency(&mut r, n, 0.5);
    let x = rand_tensor(&mut r, &[n, n], 3.0);
    vjp_check(&SoftmaxOp(a), &[x], &opts(seed)).unwrap()
}

pub fn grad_sigmoid(seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let n = r.gen_range(1..12);
    let x = rand_tensor(&mut r, &[n], 6.0);
    vjp_check(&SigmoidOp, &[x], &opts(seed)).unwrap()
}

pub fn grad_leaky_relu(seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let n = r.gen_range(1..12);
    let x = rand_tensor(&mut r, &[n], 3.0);
    vjp_check(&LeakyOp(0.2), &[x], &opts(seed)).unwrap()
}

fn rand_agg(r: &mut ChaCha8Rng, mechanism: Mechanism) -> (AggParams, AdjacencyMatrix, Tensor) {
    let heads = [1usize, 2, 4][r.gen_range(0..3)];
    let dim = heads * r.gen_range(1..=16 / heads);
    let n = r.gen_range(1..=8);
    let mut params = AggParams::init(mechanism, dim, heads, 0.2, r, "agg").unwrap();
    // Rescale so attention is far from uniform.
    for p in params.parameters_mut() {
        p.value = p.value.scale(r.gen_range(1.0..3.0));
    }
    let a = rand_adjacency(r, n, 0.5);
    let x = rand_tensor(r, &[n, dim], 1.5);
    (params, a, x)
}

fn grad_agg(seed: u64, mechanism: Mechanism) -> GradCheckReport {
    let mut r = rng(seed);
    let (template, adjacency, x) = rand_agg(&mut r, mechanism);
    let op = AggOp { adjacency, template };
    let inputs = op.inputs(&x);
    vjp_check(&op, &inputs, &opts(seed)).unwrap()
}

pub fn grad_sam(seed: u64) -> GradCheckReport {
    grad_agg(seed, Mechanism::Sam)
}

pub fn grad_gcn(seed: u64) -> GradCheckReport {
    grad_agg(seed, Mechanism::Gcn)
}

/// gPool at a point whose top-k set is stable: the boundary score gap is
/// far larger than any finite-difference perturbation.
pub fn grad_gpool(seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    loop {
        let (c, t, d) = (r.gen_range(2..7), r.gen_range(1..5), r.gen_range(1..6));
        let k = r.gen_range(1..=c);
        let z = rand_frames(&mut r, c, t, d);
        let p = rand_tensor(&mut r, &[d], 1.0);
        let Ok(scores) = adhoc_sv::chansel::gpool_scores(&z, &p) else { continue };
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if k < c && sorted[k - 1] - sorted[k] < 1e-2 {
            continue;
        }
        let op = GPoolOp { c, t, d, k, adjacency: rand_adjacency(&mut r, c, 0.5) };
        let zt = Tensor::new(vec![c, t * d], z.data().to_vec()).unwrap();
        return vjp_check(&op, &[zt, p], &opts(seed)).unwrap();
    }
}

/// Cross-entropy loss of the whole model with respect to the input features
/// and every parameter.
pub fn grad_pipeline(seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let mechanism = [ModelMechanism::Sam, ModelMechanism::Gcn][seed as usize % 2];
    let selection = match (seed / 2) % 3 {
        0 => Selection::None,
        1 => Selection::Gpool { k: None },
        _ => Selection::Prior { rho: 0.8, orientation: false, rho_noise: None },
    };
    let (c, t, d, n_speakers) = (4, 3, 8, 3);
    let cfg = ModelConfig { mechanism, heads: 2, selection, d, seed, ..ModelConfig::default() };
    let mut model = Model::new(cfg, n_speakers).unwrap();
    let x = rand_frames(&mut r, c, t, d);
    let scene = rand_scene(&mut r, c);
    let label = r.gen_range(0..n_speakers);
    model.zero_grad();
    let (_, dx) = model.loss_and_backward(&x, Some(&scene), label).unwrap();
    let mut analytic = vec![Tensor::new(vec![c, t * d], dx.data().to_vec()).unwrap()];
    analytic.extend(model.parameters().iter().map(|p| p.grad.clone()));
    let mut inputs = vec![Tensor::new(vec![c, t * d], x.data().to_vec()).unwrap()];
    inputs.extend(model.parameters().iter().map(|p| p.value.clone()));
    let f = |xs: &[Tensor]| {
        let mut m = model.clone();
        for (p, v) in m.parameters_mut().into_iter().zip(&xs[1..]) {
            p.value = v.clone();
        }
        m.loss(&FrameTensor::new(c, t, d, xs[0].data().to_vec())?, Some(&scene), label)
    };
    check_scalar_fn(f, &inputs, &analytic, &opts(seed)).unwrap()
}

pub struct GradSummary {
    pub name: &'static str,
    pub report: GradCheckReport,
    pub instances: usize,
}

pub fn gradient_suite(instances: usize) -> (Vec<GradSummary>, Duration) {
    type Check = (&'static str, fn(u64) -> GradCheckReport);
    let checks: [Check; 8] = [
        ("matmul", grad_matmul),
        ("masked_softmax", grad_masked_softmax),
        ("sigmoid", grad_sigmoid),
        ("leaky_relu", grad_leaky_relu),
        ("sam_agg", grad_sam),
        ("gcn_agg", grad_gcn),
        ("gpool", grad_gpool),
        ("embed pipeline", grad_pipeline),
    ];
    let start = Instant::now();
    let out = checks
        .iter()
        .map(|&(name, f)| {
            let report = (0..instances as u64).map(f).fold(GradCheckReport::default(), GradCheckReport::merge);
            GradSummary { name, report, instances }
        })
        .collect();
    (out, start.elapsed())
}

// ------------------------------------------------------------------ oracles

fn rel_diff(got: &Tensor, want: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            worst = worst.max((got.at(i, j) - w).abs() / w.abs().max(1.0));
        }
    }
    worst
}

pub fn sam_oracle_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (params, a, x) = rand_agg(&mut r, Mechanism::Sam);
    let AggHeads::Sam(heads) = &params.heads else { unreachable!() };
    rel_diff(&aggregate(&x, &a, &params).unwrap(), &oracle::sam(&x, &a, heads))
}

pub fn gcn_oracle_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (params, a, x) = rand_agg(&mut r, Mechanism::Gcn);
    let AggHeads::Gcn(heads) = &params.heads else { unreachable!() };
    rel_diff(&aggregate(&x, &a, &params).unwrap(), &oracle::gcn(&x, &a, heads, params.slope))
}

pub fn softmax_oracle_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..10);
    let a = rand_adjacency(&mut r, n, 0.5);
    let x = rand_tensor(&mut r, &[n, n], 20.0);
    rel_diff(&masked_softmax(&x, &a).unwrap(), &oracle::masked_softmax(&x, &a))
}

/// Largest deviation (EER, threshold) from the sweep oracle on one random
/// score set; every third set has heavily tied scores.
pub fn eer_oracle_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n_t, n_n) = (50, 50);
    let shift = r.gen_range(0.0..2.0);
    let tied = seed.is_multiple_of(3);
    let mut draw = |mu: f64| {
        let v: f64 = r.gen_range(-1.0..1.0) + mu;
        if tied {
            (v * 4.0).round() / 4.0
        } else {
            v
        }
    };
    let mut scores: Vec<f64> = (0..n_t).map(|_| draw(shift)).collect();
    scores.extend((0..n_n).map(|_| draw(0.0)));
    let mut labels: Vec<bool> = (0..n_t + n_n).map(|i| i < n_t).collect();
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.shuffle(&mut r);
    scores = idx.iter().map(|&i| scores[i]).collect();
    labels = idx.iter().map(|&i| labels[i]).collect();
    let got = compute_eer(&scores, &labels).unwrap();
    let (eer, thr) = oracle::eer_sweep(&scores, &labels);
    (got.eer - eer).abs().max((got.threshold - thr).abs())
}

/// Whether prior, orientation and noise masks match the sort-threshold oracles on one random scene.
pub fn prior_matches_oracle(seed: u64) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(1..=40);
    let scene = rand_scene(&mut r, n);
    let rho = r.gen_range(0.05..=1.0);
    let rho_noise = r.gen_range(0.05..=1.0);
    let (adj, mask) = build_prior(&scene, rho).unwrap();
    let want = oracle::prior_mask(&scene, rho);
    if mask.as_slice() != want.as_slice() {
        return Err(format!("seed {seed}: prior mask differs"));
    }
    for i in 0..n {
        for j in 0..n {
            if adj.get(i, j) != (i == j || (want[i] && want[j])) {
                return Err(format!("seed {seed}: prior adjacency differs at ({i},{j})"));
            }
        }
    }
    let ori = apply_orientation_mask(&mask, &scene).unwrap();
    let want_ori = oracle::orientation_mask(&want, &scene);
    if ori.as_slice() != want_ori.as_slice() {
        return Err(format!("seed {seed}: orientation mask differs"));
    }
    let noise = apply_noise_mask(&ori, &scene, rho_noise).unwrap();
    if noise.as_slice() != oracle::noise_mask(&want_ori, &scene, rho_noise).as_slice() {
        return Err(format!("seed {seed}: noise mask differs"));
    }
    Ok(())
}

// --------------------------------------------------------------- invariants

/// Rows of the masked softmax sum to one over neighbors and are exactly zero elsewhere.
pub fn softmax_rows(seed: u64) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(1..12);
    let density = r.gen_range(0.0..1.0);
    let a = rand_adjacency(&mut r, n, density);
    let scale = r.gen_range(0.1..60.0);
    let x = rand_tensor(&mut r, &[n, n], scale);
    let p = masked_softmax(&x, &a).unwrap();
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| a.get(i, j)).map(|j| p.at(i, j)).sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(format!("seed {seed}: row {i} sums to {s}"));
        }
        if let Some(j) = (0..n).find(|&j| !a.get(i, j) && p.at(i, j) != 0.0) {
            return Err(format!("seed {seed}: non-edge ({i},{j}) has weight {}", p.at(i, j)));
        }
    }
    Ok(())
}

fn permutation(r: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

fn frames_close(a: &FrameTensor, b: &FrameTensor) -> bool {
    a.max_abs_diff(b) <= EQUIVARIANCE_TOL
}

/// Relabelling channels (and frames, for the temporal module) permutes the output the same way.
pub fn module_equivariance(seed: u64) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let mechanism = if seed.is_multiple_of(2) { Mechanism::Sam } else { Mechanism::Gcn };
    let heads = [1usize, 2, 4][r.gen_range(0..3)];
    let dim = heads * r.gen_range(1..=16 / heads);
    let (c, t) = (r.gen_range(1..7), r.gen_range(1..7));
    let params = AggParams::init(mechanism, dim, heads, 0.2, &mut r, "m").unwrap();
    let x = rand_frames(&mut r, c, t, dim);
    let a_s = rand_adjacency(&mut r, c, 0.5);
    let a_t = rand_adjacency(&mut r, t, 0.5);
    let pc = permutation(&mut r, c);
    let pt = permutation(&mut r, t);

    let base = spatial_module(&x, &a_s, &params).unwrap();
    let perm = spatial_module(&x.select_channels(&pc).unwrap(), &a_s.permuted(&pc).unwrap(), &params).unwrap();
    if !frames_close(&perm, &base.select_channels(&pc).unwrap()) {
        return Err(format!("seed {seed}: spatial module is not channel-equivariant"));
    }
    let base = temporal_module(&x, &a_t, &params).unwrap();
    let perm = temporal_module(&x.select_channels(&pc).unwrap(), &a_t, &params).unwrap();
    if !frames_close(&perm, &base.select_channels(&pc).unwrap()) {
        return Err(format!("seed {seed}: temporal module is not channel-equivariant"));
    }
    let perm = temporal_module(&x.select_frames(&pt).unwrap(), &a_t.permuted(&pt).unwrap(), &params).unwrap();
    if !frames_close(&perm, &base.select_frames(&pt).unwrap()) {
        return Err(format!("seed {seed}: temporal module is not frame-equivariant"));
    }
    Ok(())
}

/// Scaling the projection by a positive factor never changes the channel ranking.
pub fn gpool_scale_invariance(seed: u64) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let (c, t, d) = (r.gen_range(1..10), r.gen_range(1..5), r.gen_range(1..6));
    let z = rand_frames(&mut r, c, t, d);
    let p: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let s = 10f64.powf(r.gen_range(-3.0..3.0));
    let a = AdjacencyMatrix::complete(c).unwrap();
    let run = |p: Vec<f64>| gpool(&z, &a, &GPoolParams::from_vector(p).unwrap(), c).map(|o| o.indices);
    match (run(p.clone()), run(p.iter().map(|v| v * s).collect())) {
        (Ok(i1), Ok(i2)) if i1 == i2 => Ok(()),
        (Err(_), Err(_)) => Ok(()),
        (i1, i2) => Err(format!("seed {seed}: scale {s} changed the ranking: {i1:?} vs {i2:?}")),
    }
}

/// `span(t, δ)` with `δ ≥ t - 1` is the complete graph.
pub fn span_is_complete(seed: u64) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let t = r.gen_range(1..40);
    let delta = t - 1 + r.gen_range(0..5);
    if AdjacencyMatrix::temporal_span(t, delta).unwrap() == AdjacencyMatrix::complete(t).unwrap() {
        Ok(())
    } else {
        Err(format!("span({t}, {delta}) differs from complete"))
    }
}

/// Top-k against a full brute-force sort.
pub fn top_k_matches_sort(seed: u64) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(1..20);
    let scores: Vec<f64> = (0..n).map(|_| (r.gen_range(-3.0f64..3.0) * 2.0).round() / 2.0).collect();
    let k = r.gen_range(1..=n);
    let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    for i in 0..pairs.len() {
        for j in 0..pairs.len() - 1 - i {
            let (a, b) = (pairs[j], pairs[j + 1]);
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                pairs.swap(j, j + 1);
            }
        }
    }
    let want: Vec<usize> = pairs.iter().take(k).map(|p| p.1).collect();
    if top_k(&scores, k) == want {
        Ok(())
    } else {
        Err(format!("seed {seed}: top-k mismatch"))
    }
}

pub fn run_all(check: fn(u64) -> std::result::Result<(), String>, n: u64) -> std::result::Result<(), String> {
    (0..n).try_for_each(check)
}

// ------------------------------------------------------------ hand examples

pub fn prior_four_nodes() -> std::result::Result<(), String> {
    let scene = super::line_scene(&[1.0, 2.0, 3.0, 4.0]);
    let (_, mask) = build_prior(&scene, 0.6).map_err(|e| e.to_string())?;
    match mask.as_slice() {
        [true, true, false, false] => Ok(()),
        m => Err(format!("mask {m:?}")),
    }
}

pub fn span_zero_is_identity() -> std::result::Result<(), String> {
    for t in 1..=12 {
        if AdjacencyMatrix::temporal_span(t, 0).map_err(|e| e.to_string())? != AdjacencyMatrix::identity(t) {
            return Err(format!("span({t}, 0) is not the identity"));
        }
    }
    Ok(())
}

pub fn gpool_hand_example() -> std::result::Result<(), String> {
    let z = FrameTensor::new(3, 1, 2, vec![3.0, 0.0, 1.0, 0.0, 2.0, 0.0]).unwrap();
    let params = GPoolParams::from_vector(vec![1.0, 0.0]).unwrap();
    let out = gpool(&z, &AdjacencyMatrix::complete(3).unwrap(), &params, 2).map_err(|e| e.to_string())?;
    if out.indices != [0, 2] {
        return Err(format!("indices {:?}", out.indices));
    }
    let want_gates = [0.952574126822433, 0.880797077977882];
    let want_rows = [2.857722, 1.761594];
    for r in 0..2 {
        let row = out.z.frame_vector(r, 0);
        if (out.gates[r] - want_gates[r]).abs() > 1e-6 || (row[0] - want_rows[r]).abs() > 1e-6 || row[1] != 0.0 {
            return Err(format!("row {r}: gate {} values {row:?}", out.gates[r]));
        }
    }
    Ok(())
}
