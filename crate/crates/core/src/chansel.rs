//! Channel selection after aggregation, and utterance-level pooling.
//!
//! gPool scores each channel by projecting its time-averaged feature onto a
//! learnable direction `p`, keeps the `k` best channels and gates them with
//! `sigmoid(score)`. The channel set is fixed for the whole utterance. The
//! prior-knowledge path keeps the channels of a [`SelectionMask`] unchanged.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{kernels::sigmoid_scalar, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::frames::FrameTensor;
use crate::graphs::{AdjacencyMatrix, SelectionMask};

#[derive(Clone, Debug, PartialEq)]
pub struct GPoolParams {
    pub p: Parameter,
}

impl GPoolParams {
    pub fn init(dim: usize, rng: &mut ChaCha8Rng, name: &str) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect();
            if v.iter().any(|&x| x != 0.0) {
                return Self { p: Parameter::new(name, Tensor::from_parts(vec![dim], v)) };
            }
        }
    }

    pub fn from_vector(p: Vec<f64>) -> Result<Self> {
        Ok(Self { p: Parameter::new("gpool.p", Tensor::vector(p)?) })
    }
}

/// Default number of channels gPool keeps: `⌈C/2⌉`.
pub fn default_k(c: usize) -> usize {
    c.div_ceil(2)
}

#[derive(Clone, Debug)]
pub struct GPoolOutput {
    pub z: FrameTensor,
    pub adjacency: AdjacencyMatrix,
    /// Selected channels in rank order (highest score first).
    pub indices: Vec<usize>,
    pub gates: Vec<f64>,
    /// Score of every input channel.
    pub scores: Vec<f64>,
}

/// Channel scores `q = mean_t(Zᵗ) p / ‖p‖`.
pub fn gpool_scores(z: &FrameTensor, p: &Tensor) -> Result<Vec<f64>> {
    if p.len() != z.d() {
        return Err(Error::Dimension(format!("projection has length {}, features have D={}", p.len(), z.d())));
    }
    let norm = p.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    let t = z.t() as f64;
    Ok((0..z.c())
        .map(|c| {
            let mut s = 0.0;
            for f in 0..z.t() {
                s += z.frame_vector(c, f).iter().zip(p.data()).map(|(a, b)| a * b).sum::<f64>();
            }
            s / (t * norm)
        })
        .collect())
}

/// Indices of the `k` largest scores, highest first; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // -0.0 and 0.0 tie.
    let key = |i: usize| if scores[i] == 0.0 { 0.0 } else { scores[i] };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn gpool(z: &FrameTensor, a_s: &AdjacencyMatrix, params: &GPoolParams, k: usize) -> Result<GPoolOutput> {
    if k == 0 || k > z.c() {
        return Err(Error::Range(format!("gPool k={k} must lie in [1, {}]", z.c())));
    }
    if a_s.n() != z.c() {
        return Err(Error::Dimension(format!("{}-node adjacency for {} channels", a_s.n(), z.c())));
    }
    let scores = gpool_scores(z, &params.p.value)?;
    let indices = top_k(&scores, k);
    let gates: Vec<f64> = indices.iter().map(|&i| sigmoid_scalar(scores[i])).collect();
    let mut out = z.select_channels(&indices)?;
    for (j, &g) in gates.iter().enumerate() {
        for t in 0..out.t() {
            out.frame_vector_mut(j, t).iter_mut().for_each(|v| *v *= g);
        }
    }
    Ok(GPoolOutput { z: out, adjacency: a_s.submatrix(&indices)?, indices, gates, scores })
}

/// Accumulates `dL/dp` into `params` and returns `dL/dZ`. The selected index
/// set is treated as constant.
pub fn gpool_backward(z: &FrameTensor, out: &GPoolOutput, grad: &FrameTensor, params: &mut GPoolParams) -> Result<FrameTensor> {
    if (grad.c(), grad.t(), grad.d()) != (out.z.c(), out.z.t(), out.z.d()) {
        return Err(Error::Dimension("gPool upstream gradient shape".into()));
    }
    let p = &params.p.value;
    let norm = p.norm();
    let (t, d) = (z.t(), z.d());
    let mut gz = FrameTensor::zeros(z.c(), t, d);
    let mut gscore = vec![0.0; z.c()];
    for (j, (&c, &g)) in out.indices.iter().zip(&out.gates).enumerate() {
        let mut ggate = 0.0;
        for f in 0..t {
            let up = grad.frame_vector(j, f);
            let src = z.frame_vector(c, f);
            ggate += up.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
            gz.frame_vector_mut(c, f).iter_mut().zip(up).for_each(|(o, u)| *o += g * u);
        }
        gscore[c] += ggate * g * (1.0 - g);
    }
    // q_c = zbar_c · p / ‖p‖
    let mut gp = vec![0.0; d];
    for (c, &gs) in gscore.iter().enumerate() {
        if gs == 0.0 {
            continue;
        }
        let per_frame = gs / (t as f64 * norm);
        let mut zsum = vec![0.0; d];
        for f in 0..t {
            zsum.iter_mut().zip(z.frame_vector(c, f)).for_each(|(s, v)| *s += v);
            gz.frame_vector_mut(c, f).iter_mut().zip(p.data()).for_each(|(o, pk)| *o += per_frame * pk);
        }
        let zbar_dot_p: f64 = zsum.iter().zip(p.data()).map(|(a, b)| a * b).sum();
        for ((g, s), pk) in gp.iter_mut().zip(&zsum).zip(p.data()) {
            *g += per_frame * (s - zbar_dot_p * pk / (norm * norm));
        }
    }
    params.p.accumulate(&Tensor::from_parts(vec![d], gp));
    Ok(gz)
}

/// Keeps the selected channels, unchanged.
pub fn prior_select(z: &FrameTensor, mask: &SelectionMask) -> Result<FrameTensor> {
    if mask.len() != z.c() {
        return Err(Error::Dimension(format!("mask covers {} channels, tensor has {}", mask.len(), z.c())));
    }
    let idx: Vec<usize> = mask.indices().collect();
    z.select_channels(&idx)
}

/// Scatters the gradient of [`prior_select`] back to all channels.
pub fn prior_select_backward(c: usize, mask: &SelectionMask, grad: &FrameTensor) -> FrameTensor {
    let mut g = FrameTensor::zeros(c, grad.t(), grad.d());
    for (j, i) in mask.indices().enumerate() {
        for t in 0..grad.t() {
            g.frame_vector_mut(i, t).copy_from_slice(grad.frame_vector(j, t));
        }
    }
    g
}

/// Mean of all `K·T` frame vectors.
pub fn utterance_pool(z: &FrameTensor) -> Vec<f64> {
    let mut s = vec![0.0; z.d()];
    for v in z.data().chunks_exact(z.d()) {
        s.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    let n = (z.c() * z.t()) as f64;
    s.iter_mut().for_each(|a| *a /= n);
    s
}

pub fn utterance_pool_backward(c: usize, t: usize, grad: &[f64]) -> FrameTensor {
    let n = (c * t) as f64;
    let row: Vec<f64> = grad.iter().map(|g| g / n).collect();
    let data = row.iter().copied().cycle().take(c * t * grad.len()).collect();
    FrameTensor::new(c, t, grad.len(), data).expect("finite gradient")
}
