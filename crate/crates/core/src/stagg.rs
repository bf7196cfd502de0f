//! Spatial-temporal aggregation: adjacency-masked multi-head attention applied
//! along time within each channel (temporal module) and across channels within
//! each frame (spatial module), stacked into blocks.
//!
//! Two attention mechanisms share one interface:
//!
//! * SAM: scaled dot-product self-attention whose softmax is restricted to
//!   graph neighbors.
//! * GCN: per-edge additive scores `βᵀ LeakyReLU([g_l[i] ‖ g_r[j]])`, softmax
//!   over neighbors, aggregation of the key projections `g_r`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    leaky_relu, leaky_relu_vjp, masked_softmax, masked_softmax_vjp, matmul, Differentiable,
    Parameter, Tensor, DEFAULT_LEAKY_SLOPE,
};
use crate::error::{Error, Result};
use crate::frames::FrameTensor;
use crate::graphs::AdjacencyMatrix;
use crate::scenesim::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Sam,
    Gcn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamHead {
    pub w_q: Parameter,
    pub w_k: Parameter,
    pub w_v: Parameter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnHead {
    pub w_l: Parameter,
    pub w_r: Parameter,
    /// Length `2d`: the first half scores the query side, the second the key side.
    pub beta: Parameter,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AggHeads {
    Sam(Vec<SamHead>),
    Gcn(Vec<GcnHead>),
}

/// Parameters of one aggregation layer `H = agg(X, A)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggParams {
    pub heads: AggHeads,
    /// LeakyReLU negative slope (GCN only).
    pub slope: f64,
}

fn init_tensor(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..len).map(|_| rng.gen_range(-bound..=bound)).collect())
}

impl AggParams {
    /// Uniform `(-1/√D, 1/√D)` initialization with `E = D` and `d = D / heads`.
    pub fn init(
        mechanism: Mechanism,
        dim: usize,
        n_heads: usize,
        slope: f64,
        rng: &mut ChaCha8Rng,
        prefix: &str,
    ) -> Result<Self> {
        if n_heads == 0 || dim == 0 || !dim.is_multiple_of(n_heads) {
            return Err(Error::Config(format!(
                "embedding dim {dim} is not divisible into {n_heads} heads"
            )));
        }
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::Config(format!("LeakyReLU slope must lie in (0, 1), got {slope}")));
        }
        let d = dim / n_heads;
        let bound = 1.0 / (dim as f64).sqrt();
        let mut p = |name: String, shape: &[usize]| Parameter::new(name, init_tensor(rng, shape, bound));
        let heads = match mechanism {
            Mechanism::Sam => AggHeads::Sam(
                (0..n_heads)
                    .map(|m| SamHead {
                        w_q: p(format!("{prefix}.head{m}.w_q"), &[dim, d]),
                        w_k: p(format!("{prefix}.head{m}.w_k"), &[dim, d]),
                        w_v: p(format!("{prefix}.head{m}.w_v"), &[dim, d]),
                    })
                    .collect(),
            ),
            Mechanism::Gcn => AggHeads::Gcn(
                (0..n_heads)
                    .map(|m| GcnHead {
                        w_l: p(format!("{prefix}.head{m}.w_l"), &[dim, d]),
                        w_r: p(format!("{prefix}.head{m}.w_r"), &[dim, d]),
                        beta: p(format!("{prefix}.head{m}.beta"), &[2 * d]),
                    })
                    .collect(),
            ),
        };
        Ok(Self { heads, slope })
    }

    pub fn mechanism(&self) -> Mechanism {
        match self.heads {
            AggHeads::Sam(_) => Mechanism::Sam,
            AggHeads::Gcn(_) => Mechanism::Gcn,
        }
    }

    pub fn n_heads(&self) -> usize {
        match &self.heads {
            AggHeads::Sam(h) => h.len(),
            AggHeads::Gcn(h) => h.len(),
        }
    }

    fn first_projection(&self) -> Option<&Tensor> {
        match &self.heads {
            AggHeads::Sam(h) => h.first().map(|h| &h.w_q.value),
            AggHeads::Gcn(h) => h.first().map(|h| &h.w_l.value),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.first_projection().map_or(0, Tensor::rows)
    }

    pub fn head_dim(&self) -> usize {
        self.first_projection().map_or(0, Tensor::cols)
    }

    pub fn output_dim(&self) -> usize {
        self.n_heads() * self.head_dim()
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        match &self.heads {
            AggHeads::Sam(h) => h.iter().flat_map(|h| [&h.w_q, &h.w_k, &h.w_v]).collect(),
            AggHeads::Gcn(h) => h.iter().flat_map(|h| [&h.w_l, &h.w_r, &h.beta]).collect(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match &mut self.heads {
            AggHeads::Sam(h) => h.iter_mut().flat_map(|h| [&mut h.w_q, &mut h.w_k, &mut h.w_v]).collect(),
            AggHeads::Gcn(h) => h.iter_mut().flat_map(|h| [&mut h.w_l, &mut h.w_r, &mut h.beta]).collect(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Copy with parameter values replaced, in [`Self::parameters`] order.
    pub fn with_values(&self, values: &[Tensor]) -> Result<AggParams> {
        let mut out = self.clone();
        let params = out.parameters_mut();
        if params.len() != values.len() {
            return Err(Error::Dimension(format!("{} values for {} parameters", values.len(), params.len())));
        }
        for (p, v) in params.into_iter().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Dimension(format!("parameter {} shape mismatch", p.name)));
            }
            p.value = v.clone();
        }
        Ok(out)
    }

    fn validate(&self, x: &Tensor, a: &AdjacencyMatrix) -> Result<()> {
        if !x.is_matrix() {
            return Err(Error::Dimension("aggregation input must be a matrix".into()));
        }
        if a.n() != x.rows() {
            return Err(Error::Dimension(format!("{} nodes against a {}-node adjacency", x.rows(), a.n())));
        }
        let (dim, d) = (x.cols(), self.head_dim());
        if self.n_heads() == 0 {
            return Err(Error::Config("aggregation needs at least one head".into()));
        }
        let bad = |t: &Tensor| t.shape() != [dim, d];
        let ok = match &self.heads {
            AggHeads::Sam(h) => h.iter().all(|h| !bad(&h.w_q.value) && !bad(&h.w_k.value) && !bad(&h.w_v.value)),
            AggHeads::Gcn(h) => h
                .iter()
                .all(|h| !bad(&h.w_l.value) && !bad(&h.w_r.value) && h.beta.value.shape() == [2 * d]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!("head parameters do not match input dimension {dim}")))
        }
    }
}

#[derive(Clone, Debug)]
enum HeadCache {
    Sam { q: Tensor, k: Tensor, v: Tensor, p: Tensor },
    Gcn { gl: Tensor, gr: Tensor, alpha: Tensor },
}

/// Intermediates of one aggregation call, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AggCache {
    x: Tensor,
    heads: Vec<HeadCache>,
}

fn sam_head_forward(x: &Tensor, a: &AdjacencyMatrix, h: &SamHead) -> Result<(Tensor, HeadCache)> {
    let q = matmul(x, &h.w_q.value)?;
    let k = matmul(x, &h.w_k.value)?;
    let v = matmul(x, &h.w_v.value)?;
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let scores = matmul(&q, &k.transpose())?.scale(scale);
    let p = masked_softmax(&scores, a)?;
    let out = matmul(&p, &v)?;
    Ok((out, HeadCache::Sam { q, k, v, p }))
}

/// Per-edge scores `βᵀ LeakyReLU([g_l[i] ‖ g_r[j]])`. LeakyReLU acts
/// elementwise, so the score splits into a query term plus a key term.
fn gcn_scores(gl: &Tensor, gr: &Tensor, beta: &Tensor, slope: f64) -> Tensor {
    let d = gl.cols();
    let (bl, br) = beta.data().split_at(d);
    let ll = leaky_relu(gl, slope);
    let lr = leaky_relu(gr, slope);
    let n = gl.rows();
    let qs: Vec<f64> = (0..n).map(|i| ll.row(i).iter().zip(bl).map(|(a, b)| a * b).sum()).collect();
    let ks: Vec<f64> = (0..n).map(|j| lr.row(j).iter().zip(br).map(|(a, b)| a * b).sum()).collect();
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            e[i * n + j] = qs[i] + ks[j];
        }
    }
    Tensor::from_parts(vec![n, n], e)
}

fn gcn_head_forward(x: &Tensor, a: &AdjacencyMatrix, h: &GcnHead, slope: f64) -> Result<(Tensor, HeadCache)> {
    let gl = matmul(x, &h.w_l.value)?;
    let gr = matmul(x, &h.w_r.value)?;
    let scores = gcn_scores(&gl, &gr, &h.beta.value, slope);
    let alpha = masked_softmax(&scores, a)?;
    let out = matmul(&alpha, &gr)?;
    Ok((out, HeadCache::Gcn { gl, gr, alpha }))
}

/// Runs the layer and keeps what the backward pass needs.
pub fn aggregate_forward(x: &Tensor, a: &AdjacencyMatrix, params: &AggParams) -> Result<(Tensor, AggCache)> {
    params.validate(x, a)?;
    let d = params.head_dim();
    let mut out = Tensor::zeros(&[x.rows(), params.output_dim()]);
    let mut caches = Vec::with_capacity(params.n_heads());
    match &params.heads {
        AggHeads::Sam(heads) => {
            for (m, h) in heads.iter().enumerate() {
                let (hm, c) = sam_head_forward(x, a, h)?;
                out.set_column_block(m * d, &hm);
                caches.push(c);
            }
        }
        AggHeads::Gcn(heads) => {
            for (m, h) in heads.iter().enumerate() {
                let (hm, c) = gcn_head_forward(x, a, h, params.slope)?;
                out.set_column_block(m * d, &hm);
                caches.push(c);
            }
        }
    }
    Ok((out, AggCache { x: x.clone(), heads: caches }))
}

pub fn aggregate(x: &Tensor, a: &AdjacencyMatrix, params: &AggParams) -> Result<Tensor> {
    aggregate_forward(x, a, params).map(|(h, _)| h)
}

/// SAM aggregation: masked multi-head scaled dot-product attention.
pub fn sam_agg(x: &Tensor, a: &AdjacencyMatrix, heads: &[SamHead]) -> Result<Tensor> {
    aggregate(x, a, &AggParams { heads: AggHeads::Sam(heads.to_vec()), slope: DEFAULT_LEAKY_SLOPE })
}

/// GCN aggregation with additive LeakyReLU edge scores.
pub fn gcn_agg(x: &Tensor, a: &AdjacencyMatrix, heads: &[GcnHead], slope: f64) -> Result<Tensor> {
    aggregate(x, a, &AggParams { heads: AggHeads::Gcn(heads.to_vec()), slope })
}

fn add_into(acc: &mut Tensor, g: Tensor) {
    acc.add_assign(&g);
}

/// Accumulates parameter gradients into `params` and returns `dL/dX`.
pub fn aggregate_backward(cache: &AggCache, grad: &Tensor, params: &mut AggParams) -> Result<Tensor> {
    let x = &cache.x;
    let xt = x.transpose();
    let d = params.head_dim();
    if grad.shape() != [x.rows(), params.output_dim()] {
        return Err(Error::Dimension(format!("aggregation upstream gradient shape {:?}", grad.shape())));
    }
    let mut gx = Tensor::zeros(x.shape());
    let slope = params.slope;
    match &mut params.heads {
        AggHeads::Sam(heads) => {
            for (m, (h, c)) in heads.iter_mut().zip(&cache.heads).enumerate() {
                let HeadCache::Sam { q, k, v, p } = c else {
                    return Err(Error::Dimension("cache does not match SAM parameters".into()));
                };
                let gh = grad.column_block(m * d, d);
                let gp = matmul(&gh, &v.transpose())?;
                let gv = matmul(&p.transpose(), &gh)?;
                let gs = masked_softmax_vjp(p, &gp).scale(1.0 / (d as f64).sqrt());
                let gq = matmul(&gs, k)?;
                let gk = matmul(&gs.transpose(), q)?;
                h.w_q.accumulate(&matmul(&xt, &gq)?);
                h.w_k.accumulate(&matmul(&xt, &gk)?);
                h.w_v.accumulate(&matmul(&xt, &gv)?);
                add_into(&mut gx, matmul(&gq, &h.w_q.value.transpose())?);
                add_into(&mut gx, matmul(&gk, &h.w_k.value.transpose())?);
                add_into(&mut gx, matmul(&gv, &h.w_v.value.transpose())?);
            }
        }
        AggHeads::Gcn(heads) => {
            for (m, (h, c)) in heads.iter_mut().zip(&cache.heads).enumerate() {
                let HeadCache::Gcn { gl, gr, alpha } = c else {
                    return Err(Error::Dimension("cache does not match GCN parameters".into()));
                };
                let n = gl.rows();
                let gh = grad.column_block(m * d, d);
                let galpha = matmul(&gh, &gr.transpose())?;
                let mut ggr = matmul(&alpha.transpose(), &gh)?;
                let ge = masked_softmax_vjp(alpha, &galpha);
                let gq: Vec<f64> = (0..n).map(|i| ge.row(i).iter().sum()).collect();
                let gk: Vec<f64> = (0..n).map(|j| (0..n).map(|i| ge.at(i, j)).sum()).collect();

                let (bl, br) = h.beta.value.data().split_at(d);
                let ll = leaky_relu(gl, slope);
                let lr = leaky_relu(gr, slope);
                let mut gbeta = vec![0.0; 2 * d];
                let mut up_l = Tensor::zeros(gl.shape());
                let mut up_r = Tensor::zeros(gr.shape());
                for i in 0..n {
                    for k in 0..d {
                        gbeta[k] += gq[i] * ll.at(i, k);
                        gbeta[d + k] += gk[i] * lr.at(i, k);
                        up_l.set(i, k, gq[i] * bl[k]);
                        up_r.set(i, k, gk[i] * br[k]);
                    }
                }
                let ggl = leaky_relu_vjp(gl, slope, &up_l);
                ggr.add_assign(&leaky_relu_vjp(gr, slope, &up_r));

                h.beta.accumulate(&Tensor::from_parts(vec![2 * d], gbeta));
                h.w_l.accumulate(&matmul(&xt, &ggl)?);
                h.w_r.accumulate(&matmul(&xt, &ggr)?);
                add_into(&mut gx, matmul(&ggl, &h.w_l.value.transpose())?);
                add_into(&mut gx, matmul(&ggr, &h.w_r.value.transpose())?);
            }
        }
    }
    Ok(gx)
}

/// Aggregation as a [`Differentiable`] over `[X, params...]` for gradient checks.
pub struct AggOp {
    pub adjacency: AdjacencyMatrix,
    pub template: AggParams,
}

impl AggOp {
    pub fn inputs(&self, x: &Tensor) -> Vec<Tensor> {
        std::iter::once(x.clone())
            .chain(self.template.parameters().into_iter().map(|p| p.value.clone()))
            .collect()
    }
}

impl Differentiable for AggOp {
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let params = self.template.with_values(&inputs[1..])?;
        aggregate(&inputs[0], &self.adjacency, &params)
    }

    fn vjp(&self, inputs: &[Tensor], grad: &Tensor) -> Result<Vec<Tensor>> {
        let mut params = self.template.with_values(&inputs[1..])?;
        params.zero_grad();
        let (_, cache) = aggregate_forward(&inputs[0], &self.adjacency, &params)?;
        let gx = aggregate_backward(&cache, grad, &mut params)?;
        Ok(std::iter::once(gx)
            .chain(params.parameters().into_iter().map(|p| p.grad.clone()))
            .collect())
    }
}

/// Per-slice caches of a temporal or spatial module.
#[derive(Clone, Debug)]
pub struct ModuleCache {
    slices: Vec<AggCache>,
}

/// Applies the aggregation to each channel's `T×D` slice with shared parameters.
pub fn temporal_forward(x: &FrameTensor, a_t: &AdjacencyMatrix, params: &AggParams) -> Result<(FrameTensor, ModuleCache)> {
    if a_t.n() != x.t() {
        return Err(Error::Dimension(format!("temporal graph has {} nodes for {} frames", a_t.n(), x.t())));
    }
    let mut out = FrameTensor::zeros(x.c(), x.t(), params.output_dim());
    let mut slices = Vec::with_capacity(x.c());
    for c in 0..x.c() {
        let (h, cache) = aggregate_forward(&x.channel(c), a_t, params)?;
        out.set_channel(c, &h);
        slices.push(cache);
    }
    Ok((out, ModuleCache { slices }))
}

pub fn temporal_module(x: &FrameTensor, a_t: &AdjacencyMatrix, params: &AggParams) -> Result<FrameTensor> {
    temporal_forward(x, a_t, params).map(|(y, _)| y)
}

pub fn temporal_backward(cache: &ModuleCache, grad: &FrameTensor, params: &mut AggParams) -> Result<FrameTensor> {
    let first = cache.slices.first().ok_or(Error::EmptyGraph)?;
    let (t, d_in) = (first.x.rows(), first.x.cols());
    let mut gx = FrameTensor::zeros(cache.slices.len(), t, d_in);
    for (c, slice) in cache.slices.iter().enumerate() {
        let g = aggregate_backward(slice, &grad.channel(c), params)?;
        gx.set_channel(c, &g);
    }
    Ok(gx)
}

/// Applies the aggregation to each frame's `C×D` slice with shared parameters.
pub fn spatial_forward(y: &FrameTensor, a_s: &AdjacencyMatrix, params: &AggParams) -> Result<(FrameTensor, ModuleCache)> {
    if a_s.n() != y.c() {
        return Err(Error::Dimension(format!("spatial graph has {} nodes for {} channels", a_s.n(), y.c())));
    }
    let mut out = FrameTensor::zeros(y.c(), y.t(), params.output_dim());
    let mut slices = Vec::with_capacity(y.t());
    for t in 0..y.t() {
        let (h, cache) = aggregate_forward(&y.frame(t), a_s, params)?;
        out.set_frame(t, &h);
        slices.push(cache);
    }
    Ok((out, ModuleCache { slices }))
}

pub fn spatial_module(y: &FrameTensor, a_s: &AdjacencyMatrix, params: &AggParams) -> Result<FrameTensor> {
    spatial_forward(y, a_s, params).map(|(z, _)| z)
}

pub fn spatial_backward(cache: &ModuleCache, grad: &FrameTensor, params: &mut AggParams) -> Result<FrameTensor> {
    let first = cache.slices.first().ok_or(Error::EmptyGraph)?;
    let (c, d_in) = (first.x.rows(), first.x.cols());
    let mut gy = FrameTensor::zeros(c, cache.slices.len(), d_in);
    for (t, slice) in cache.slices.iter().enumerate() {
        let g = aggregate_backward(slice, &grad.frame(t), params)?;
        gy.set_frame(t, &g);
    }
    Ok(gy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TemporalGraph {
    Complete,
    Span { delta: usize },
}

impl TemporalGraph {
    pub fn build(&self, t: usize) -> Result<AdjacencyMatrix> {
        match *self {
            TemporalGraph::Complete => AdjacencyMatrix::complete(t),
            TemporalGraph::Span { delta } => AdjacencyMatrix::temporal_span(t, delta),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpatialGraph {
    Complete,
    /// Each channel links to its `k` nearest nodes (needs node positions).
    KNearest { k: usize },
}

impl SpatialGraph {
    pub fn build(&self, c: usize, scene: Option<&Scene>) -> Result<AdjacencyMatrix> {
        match *self {
            SpatialGraph::Complete => AdjacencyMatrix::complete(c),
            SpatialGraph::KNearest { k } => {
                let scene = scene.ok_or(Error::MissingPrior)?;
                if scene.nodes.len() != c {
                    return Err(Error::Dimension(format!("scene has {} nodes for {c} channels", scene.nodes.len())));
                }
                AdjacencyMatrix::k_nearest(&scene.nodes, k)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub n_blocks: usize,
    pub mechanism: Mechanism,
    pub temporal_graph: TemporalGraph,
    pub spatial_graph: SpatialGraph,
}

/// One spatial-temporal block: temporal then spatial aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub temporal: AggParams,
    pub spatial: AggParams,
}

impl BlockParams {
    pub fn init(mechanism: Mechanism, dim: usize, heads: usize, slope: f64, rng: &mut ChaCha8Rng, prefix: &str) -> Result<Self> {
        Ok(Self {
            temporal: AggParams::init(mechanism, dim, heads, slope, rng, &format!("{prefix}.temporal"))?,
            spatial: AggParams::init(mechanism, dim, heads, slope, rng, &format!("{prefix}.spatial"))?,
        })
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.temporal.parameters();
        v.extend(self.spatial.parameters());
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.temporal.parameters_mut();
        v.extend(self.spatial.parameters_mut());
        v
    }
}

/// Graphs one utterance is processed with.
#[derive(Clone, Debug, PartialEq)]
pub struct StackGraphs {
    pub temporal: AdjacencyMatrix,
    pub spatial: AdjacencyMatrix,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    blocks: Vec<(ModuleCache, ModuleCache)>,
}

pub fn st_stack_forward(x: &FrameTensor, graphs: &StackGraphs, blocks: &[BlockParams]) -> Result<(FrameTensor, StackCache)> {
    if blocks.is_empty() {
        return Err(Error::Config("a stack needs at least one block".into()));
    }
    let mut h = x.clone();
    let mut caches = Vec::with_capacity(blocks.len());
    for b in blocks {
        if b.temporal.input_dim() != h.d() || b.temporal.output_dim() != h.d() || b.spatial.output_dim() != h.d() {
            return Err(Error::Dimension(format!("block dimensions do not preserve D={}", h.d())));
        }
        let (y, tc) = temporal_forward(&h, &graphs.temporal, &b.temporal)?;
        let (z, sc) = spatial_forward(&y, &graphs.spatial, &b.spatial)?;
        caches.push((tc, sc));
        h = z;
    }
    Ok((h, StackCache { blocks: caches }))
}

/// Alternates temporal and spatial modules, one pair per block; shape is preserved.
pub fn st_stack(x: &FrameTensor, graphs: &StackGraphs, blocks: &[BlockParams]) -> Result<FrameTensor> {
    st_stack_forward(x, graphs, blocks).map(|(z, _)| z)
}

pub fn st_stack_backward(cache: &StackCache, grad: &FrameTensor, blocks: &mut [BlockParams]) -> Result<FrameTensor> {
    let mut g = grad.clone();
    for (b, (tc, sc)) in blocks.iter_mut().zip(&cache.blocks).rev() {
        let gy = spatial_backward(sc, &g, &mut b.spatial)?;
        g = temporal_backward(tc, &gy, &mut b.temporal)?;
    }
    Ok(g)
}
