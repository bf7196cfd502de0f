use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chansel::{
    default_k, gpool, gpool_backward, prior_select, prior_select_backward, utterance_pool,
    utterance_pool_backward, GPoolOutput, GPoolParams,
};
use crate::diffcore::{Parameter, Tensor, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::frames::FrameTensor;
use crate::graphs::{apply_noise_mask, apply_orientation_mask, build_prior, AdjacencyMatrix, SelectionMask};
use crate::scenesim::Scene;
use crate::stagg::{
    st_stack_backward, st_stack_forward, BlockParams, Mechanism, SpatialGraph, StackCache, StackGraphs,
    TemporalGraph,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMechanism {
    Sam,
    Gcn,
    /// Average of all channel embeddings; only the classifier head is trained.
    MeanBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Selection {
    None,
    /// Learned top-k pooling; `k` defaults to `⌈C/2⌉`.
    Gpool {
        #[serde(default)]
        k: Option<usize>,
    },
    /// Distance-ratio prior, optionally combined with the orientation and
    /// noise-proximity masks.
    Prior {
        rho: f64,
        #[serde(default)]
        orientation: bool,
        #[serde(default)]
        rho_noise: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mechanism: ModelMechanism,
    pub n_blocks: usize,
    pub heads: usize,
    pub selection: Selection,
    pub temporal_graph: TemporalGraph,
    pub spatial_graph: SpatialGraph,
    pub d: usize,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mechanism: ModelMechanism::Gcn,
            n_blocks: 2,
            heads: 4,
            selection: Selection::None,
            temporal_graph: TemporalGraph::Complete,
            spatial_graph: SpatialGraph::Complete,
            d: 16,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.mechanism == ModelMechanism::MeanBaseline {
            if self.selection != Selection::None {
                return Err(Error::Config("mean-baseline does not support channel selection".into()));
            }
            return Ok(());
        }
        if self.n_blocks == 0 {
            return Err(Error::Config("n_blocks must be at least 1".into()));
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("d={} is not divisible into {} heads", self.d, self.heads)));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky_slope must lie in (0, 1)".into()));
        }
        match self.selection {
            Selection::Gpool { k: Some(0) } => return Err(Error::Config("gpool k must be positive".into())),
            Selection::Prior { rho, rho_noise, .. } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(Error::Config(format!("rho must lie in (0, 1], got {rho}")));
                }
                if let Some(r) = rho_noise {
                    if !(r > 0.0 && r <= 1.0) {
                        return Err(Error::Config(format!("rho_noise must lie in (0, 1], got {r}")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn stack_mechanism(&self) -> Option<Mechanism> {
        match self.mechanism {
            ModelMechanism::Sam => Some(Mechanism::Sam),
            ModelMechanism::Gcn => Some(Mechanism::Gcn),
            ModelMechanism::MeanBaseline => None,
        }
    }

    pub fn needs_scene(&self) -> bool {
        matches!(self.selection, Selection::Prior { .. })
            || (self.mechanism != ModelMechanism::MeanBaseline
                && matches!(self.spatial_graph, SpatialGraph::KNearest { .. }))
    }
}

/// Which channels reached the pooling step, for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionInfo {
    pub selected_indices: Vec<usize>,
    pub gates: Option<Vec<f64>>,
    pub mechanism: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceEmbedding {
    pub s: Vec<f64>,
    pub selection: SelectionInfo,
}

enum SelectionCache {
    Pass,
    GPool(GPoolOutput),
    Prior(SelectionMask),
}

/// Everything needed to backpropagate from the utterance embedding.
pub struct ForwardCache {
    input_c: usize,
    input_t: usize,
    stack: Option<(StackCache, FrameTensor)>,
    selection: SelectionCache,
    pooled: (usize, usize),
    pub embedding: UtteranceEmbedding,
}

/// Aggregation stack, optional gPool projection, and the linear softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub n_speakers: usize,
    pub blocks: Vec<BlockParams>,
    pub gpool: Option<GPoolParams>,
    pub head_w: Parameter,
    pub head_b: Parameter,
}

impl Model {
    pub fn new(config: ModelConfig, n_speakers: usize) -> Result<Model> {
        config.validate()?;
        if n_speakers < 2 {
            return Err(Error::DegenerateTask(n_speakers));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d;
        let blocks = match config.stack_mechanism() {
            Some(m) => (0..config.n_blocks)
                .map(|b| BlockParams::init(m, d, config.heads, config.leaky_slope, &mut rng, &format!("block{b}")))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let gpool = matches!(config.selection, Selection::Gpool { .. })
            .then(|| GPoolParams::init(d, &mut rng, "gpool.p"));
        let bound = 1.0 / (d as f64).sqrt();
        let w = (0..d * n_speakers).map(|_| rand::Rng::gen_range(&mut rng, -bound..=bound)).collect();
        Ok(Model {
            config,
            n_speakers,
            blocks,
            gpool,
            head_w: Parameter::new("head.w", Tensor::from_parts(vec![d, n_speakers], w)),
            head_b: Parameter::new("head.b", Tensor::zeros(&[n_speakers])),
        })
    }

    /// All learnable parameters in checkpoint order.
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut v: Vec<&Parameter> = self.blocks.iter().flat_map(BlockParams::parameters).collect();
        if let Some(g) = &self.gpool {
            v.push(&g.p);
        }
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = self.blocks.iter_mut().flat_map(BlockParams::parameters_mut).collect();
        if let Some(g) = &mut self.gpool {
            v.push(&mut g.p);
        }
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Selection mask implied by the prior configuration, if any.
    pub fn prior_mask(&self, scene: Option<&Scene>, c: usize) -> Result<Option<SelectionMask>> {
        let Selection::Prior { rho, orientation, rho_noise } = self.config.selection else {
            return Ok(None);
        };
        let scene = scene.ok_or(Error::MissingPrior)?;
        if scene.nodes.len() != c {
            return Err(Error::Dimension(format!("scene has {} nodes for {c} channels", scene.nodes.len())));
        }
        let (_, mut mask) = build_prior(scene, rho)?;
        if orientation {
            mask = apply_orientation_mask(&mask, scene)?;
        }
        if let Some(r) = rho_noise {
            mask = apply_noise_mask(&mask, scene, r)?;
        }
        Ok(Some(mask))
    }

    fn graphs(&self, x: &FrameTensor, scene: Option<&Scene>, prior: Option<&SelectionMask>) -> Result<StackGraphs> {
        let temporal = self.config.temporal_graph.build(x.t())?;
        let spatial = match prior {
            Some(mask) => AdjacencyMatrix::from_selection(mask),
            None => self.config.spatial_graph.build(x.c(), scene)?,
        };
        Ok(StackGraphs { temporal, spatial })
    }

    pub fn forward(&self, x: &FrameTensor, scene: Option<&Scene>) -> Result<ForwardCache> {
        if x.d() != self.config.d {
            return Err(Error::Dimension(format!("features have D={}, model expects {}", x.d(), self.config.d)));
        }
        if self.config.mechanism == ModelMechanism::MeanBaseline {
            let s = utterance_pool(x);
            return Ok(ForwardCache {
                input_c: x.c(),
                input_t: x.t(),
                stack: None,
                selection: SelectionCache::Pass,
                pooled: (x.c(), x.t()),
                embedding: UtteranceEmbedding {
                    s,
                    selection: SelectionInfo {
                        selected_indices: (0..x.c()).collect(),
                        gates: None,
                        mechanism: "mean-baseline".into(),
                    },
                },
            });
        }
        let prior = self.prior_mask(scene, x.c())?;
        let graphs = self.graphs(x, scene, prior.as_ref())?;
        let (z, stack_cache) = st_stack_forward(x, &graphs, &self.blocks)?;
        let (pooled_input, selection, info) = match (&self.config.selection, prior) {
            (Selection::Prior { .. }, Some(mask)) => {
                let kept = prior_select(&z, &mask)?;
                let info = SelectionInfo {
                    selected_indices: mask.indices().collect(),
                    gates: None,
                    mechanism: "prior".into(),
                };
                (kept, SelectionCache::Prior(mask), info)
            }
            (Selection::Gpool { k }, _) => {
                let params = self.gpool.as_ref().ok_or_else(|| Error::Config("missing gPool parameters".into()))?;
                let k = k.unwrap_or_else(|| default_k(z.c())).min(z.c());
                let out = gpool(&z, &graphs.spatial, params, k)?;
                let info = SelectionInfo {
                    selected_indices: out.indices.clone(),
                    gates: Some(out.gates.clone()),
                    mechanism: "gpool".into(),
                };
                (out.z.clone(), SelectionCache::GPool(out), info)
            }
            _ => {
                let info = SelectionInfo {
                    selected_indices: (0..z.c()).collect(),
                    gates: None,
                    mechanism: "none".into(),
                };
                (z.clone(), SelectionCache::Pass, info)
            }
        };
        let s = utterance_pool(&pooled_input);
        Ok(ForwardCache {
            input_c: x.c(),
            input_t: x.t(),
            pooled: (pooled_input.c(), pooled_input.t()),
            stack: Some((stack_cache, z)),
            selection,
            embedding: UtteranceEmbedding { s, selection: info },
        })
    }

    /// Utterance-level embedding `S`.
    pub fn embed(&self, x: &FrameTensor, scene: Option<&Scene>) -> Result<UtteranceEmbedding> {
        self.forward(x, scene).map(|c| c.embedding)
    }

    /// Backpropagates `dL/dS`, accumulating parameter gradients; returns `dL/dX`.
    pub fn backward_embedding(&mut self, cache: &ForwardCache, grad_s: &[f64]) -> Result<FrameTensor> {
        let (k, t) = cache.pooled;
        let g_pooled = utterance_pool_backward(k, t, grad_s);
        let Some((stack_cache, z)) = &cache.stack else {
            return Ok(g_pooled);
        };
        let g_z = match &cache.selection {
            SelectionCache::Pass => g_pooled,
            SelectionCache::Prior(mask) => prior_select_backward(cache.input_c, mask, &g_pooled),
            SelectionCache::GPool(out) => {
                let params = self.gpool.as_mut().ok_or_else(|| Error::Config("missing gPool parameters".into()))?;
                gpool_backward(z, out, &g_pooled, params)?
            }
        };
        debug_assert_eq!((g_z.c(), g_z.t()), (cache.input_c, cache.input_t));
        st_stack_backward(stack_cache, &g_z, &mut self.blocks)
    }

    pub fn logits(&self, s: &[f64]) -> Vec<f64> {
        let w = &self.head_w.value;
        (0..self.n_speakers)
            .map(|j| self.head_b.value.data()[j] + s.iter().enumerate().map(|(i, v)| v * w.at(i, j)).sum::<f64>())
            .collect()
    }

    /// Cross-entropy of the softmax classifier for one utterance.
    pub fn loss(&self, x: &FrameTensor, scene: Option<&Scene>, label: usize) -> Result<f64> {
        let emb = self.embed(x, scene)?;
        let (loss, _) = cross_entropy(&self.logits(&emb.s), label)?;
        Ok(loss)
    }

    /// Forward, loss and full backward for one utterance. Returns the loss and `dL/dX`.
    pub fn loss_and_backward(&mut self, x: &FrameTensor, scene: Option<&Scene>, label: usize) -> Result<(f64, FrameTensor)> {
        let cache = self.forward(x, scene)?;
        let s = &cache.embedding.s;
        let (loss, g_logits) = cross_entropy(&self.logits(s), label)?;
        let d = s.len();
        let mut gw = vec![0.0; d * self.n_speakers];
        let mut gs = vec![0.0; d];
        for i in 0..d {
            for j in 0..self.n_speakers {
                gw[i * self.n_speakers + j] = s[i] * g_logits[j];
                gs[i] += self.head_w.value.at(i, j) * g_logits[j];
            }
        }
        self.head_w.accumulate(&Tensor::from_parts(vec![d, self.n_speakers], gw));
        self.head_b.accumulate(&Tensor::from_parts(vec![self.n_speakers], g_logits));
        let gx = self.backward_embedding(&cache, &gs)?;
        Ok((loss, gx))
    }
}

/// Returns `(-log softmax(logits)[label], dL/dlogits)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::UnknownSpeaker(label));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(logits[label] - max - sum.ln());
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("cross-entropy loss is {loss}")));
    }
    let mut g: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    g[label] -= 1.0;
    Ok((loss, g))
}
