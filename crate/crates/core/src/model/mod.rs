//! Two-stage multimodal predictor.
//!
//! Dataflow: feature extractor (temporal conv over each agent's history,
//! lane-piece MLP, agent-to-lane attention) -> trajectory proposal
//! attention (proposal header, shared proposal encoder, multi-head
//! attention of the agent feature over its proposals) -> interaction
//! (agent-to-agent, then agent-to-lane attention) -> prediction header
//! with one score per modality.
//!
//! All trajectories are expressed in the owning agent's frame as offsets
//! from its current position.

mod input;
mod layers;
mod objective;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{concat, AutodiffError, Checkpoint, ParamStore, Tape, Tensor, Var};
use crate::geom::Point2;
use crate::losses::LossError;
use crate::metrics::Forecast;

pub use input::{lane_pieces, SceneInput};
pub use objective::{prepare_targets, scene_objective, AgentTargets, LossBreakdown, ObjectiveConfig, TargetConfig};

use layers::{ConvEncoder, Header, Init, Linear, Mha, Mlp};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid scene input: {0}")]
    Input(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature width.
    pub d: usize,
    /// Proposal count.
    pub k: usize,
    /// Output modality count.
    pub modes: usize,
    pub heads: usize,
    pub t_o: usize,
    pub t_f: usize,
    /// Two-stage mode; when off, the feature extractor output goes straight to interaction.
    pub use_tpa: bool,
    /// Proposal embedding width.
    pub proposal_width: usize,
    pub conv_channels: usize,
    pub lane_points: usize,
    pub lane_piece_length: f64,
    /// Lane pieces farther than this from an agent are invisible to it.
    pub lane_radius: f64,
    /// Agents farther apart than this do not interact.
    pub agent_radius: f64,
    pub groups: usize,
    /// Meters per unit for positional inputs and trajectory outputs.
    pub coord_scale: f64,
    /// Start both headers' regression layers at zero.
    pub zero_init_heads: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            k: 6,
            modes: 6,
            heads: 4,
            t_o: 20,
            t_f: 30,
            use_tpa: true,
            proposal_width: 128,
            conv_channels: 16,
            lane_points: 6,
            lane_piece_length: 20.0,
            lane_radius: 50.0,
            agent_radius: 50.0,
            groups: 1,
            coord_scale: 10.0,
            zero_init_heads: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return bad("d must be a positive multiple of heads");
        }
        if self.k == 0 || self.modes == 0 {
            return bad("k and modes must be >= 1");
        }
        if self.t_o < 3 || self.t_f < 3 {
            return bad("t_o and t_f must be >= 3");
        }
        if self.groups == 0 || !self.d.is_multiple_of(self.groups) {
            return bad("d must be divisible by groups");
        }
        if self.lane_points < 2 || self.conv_channels == 0 || self.proposal_width == 0 {
            return bad("lane_points >= 2, conv_channels and proposal_width >= 1");
        }
        let positive = [self.lane_piece_length, self.lane_radius, self.agent_radius, self.coord_scale];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("lengths, radii and coord_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layers {
    agent_enc: ConvEncoder,
    lane_enc: Mlp,
    fe_attn: Mha,
    proposal_header: Header,
    proposal_enc: ConvEncoder,
    proposal_attn: Mha,
    fuse: Linear,
    pair_proj: Linear,
    agent_attn: Mha,
    lane_attn: Mha,
    pred_header: Header,
    score_header: Header,
}

#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    params: ParamStore,
    layers: Layers,
}

/// Feature-extractor output.
pub struct SceneFeatures<'t> {
    /// `[agents, d]`
    pub h_fe: Var<'t>,
    /// `[pairs, d]`, rows grouped per agent as in [`SceneInput::lane_rows`].
    pub lane_features: Option<Var<'t>>,
}

pub struct ProposalStage<'t> {
    /// `[agents, k * t_f * 2]` in meters.
    pub proposals: Var<'t>,
    /// `[agents * k, proposal_width]`
    pub embeddings: Var<'t>,
    /// `[agents, 2d]` before re-projection.
    pub h: Var<'t>,
    /// Per head `[agents, agents * k]`.
    pub attention: Vec<Tensor>,
}

pub struct ForwardOutput<'t> {
    pub h_fe: Var<'t>,
    pub proposals: Option<ProposalStage<'t>>,
    /// `[agents, modes * t_f * 2]` in meters.
    pub trajectories: Var<'t>,
    /// `[agents, modes]`
    pub scores: Var<'t>,
}

impl<'t> ForwardOutput<'t> {
    /// `[modes, t_f, 2]` for one agent.
    pub fn agent_trajectories(&self, cfg: &ModelConfig, i: usize) -> Result<Var<'t>, AutodiffError> {
        self.trajectories.slice(0, i, i + 1)?.reshape(&[cfg.modes, cfg.t_f, 2])
    }

    pub fn agent_scores(&self, cfg: &ModelConfig, i: usize) -> Result<Var<'t>, AutodiffError> {
        self.scores.slice(0, i, i + 1)?.reshape(&[cfg.modes])
    }

    /// `[k, t_f, 2]` for one agent, when the proposal stage ran.
    pub fn agent_proposals(&self, cfg: &ModelConfig, i: usize) -> Result<Option<Var<'t>>, AutodiffError> {
        self.proposals
            .as_ref()
            .map(|p| p.proposals.slice(0, i, i + 1)?.reshape(&[cfg.k, cfg.t_f, 2]))
            .transpose()
    }
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let d = cfg.d;
        let head_init = if cfg.zero_init_heads { Init::Zero } else { Init::Default };
        let layers = Layers {
            agent_enc: ConvEncoder::new(&mut s, &mut rng, "agent_enc", cfg.t_o, 4, cfg.conv_channels, d),
            lane_enc: Mlp::new(&mut s, &mut rng, "lane_enc", 2 * cfg.lane_points, d, d),
            fe_attn: Mha::new(&mut s, &mut rng, "fe_attn", d, d, d, cfg.heads),
            proposal_header: Header::new(&mut s, &mut rng, "proposal_header", d, cfg.k * cfg.t_f * 2, cfg.groups, head_init),
            proposal_enc: ConvEncoder::new(&mut s, &mut rng, "proposal_enc", cfg.t_f, 4, cfg.conv_channels, cfg.proposal_width),
            proposal_attn: Mha::new(&mut s, &mut rng, "proposal_attn", d, cfg.proposal_width, d, cfg.heads),
            fuse: Linear::new(&mut s, &mut rng, "fuse", 2 * d, d, Init::He),
            pair_proj: Linear::new(&mut s, &mut rng, "pair_proj", d + 4, d, Init::He),
            agent_attn: Mha::new(&mut s, &mut rng, "agent_attn", d, d, d, cfg.heads),
            lane_attn: Mha::new(&mut s, &mut rng, "lane_attn", d, d, d, cfg.heads),
            pred_header: Header::new(&mut s, &mut rng, "pred_header", d, cfg.modes * cfg.t_f * 2, cfg.groups, head_init),
            score_header: Header::new(&mut s, &mut rng, "score_header", d, cfg.modes, cfg.groups, Init::Default),
        };
        Ok(Self { cfg, params: s, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.params.to_checkpoint()
    }

    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), ModelError> {
        Ok(self.params.load_checkpoint(ckpt)?)
    }

    /// Parameter indices grouped by top-level component name.
    pub fn param_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, name) in self.params.names().iter().enumerate() {
            let g = name.split('.').next().unwrap().to_string();
            match groups.iter_mut().find(|(n, _)| *n == g) {
                Some((_, v)) => v.push(i),
                None => groups.push((g, vec![i])),
            }
        }
        groups
    }

    pub fn feature_extractor<'t>(&self, p: &[Var<'t>], input: &SceneInput) -> Result<SceneFeatures<'t>, ModelError> {
        let tape = p[0].tape();
        let l = &self.layers;
        let history = tape.constant(input.history.clone());
        let a = l.agent_enc.apply(p, history)?;
        let lanes = match &input.lane_features {
            Some(t) => Some(l.lane_enc.apply(p, tape.constant(t.clone()))?),
            None => None,
        };
        let ctx = l.fe_attn.apply(p, a, lanes, &input.lane_rows)?;
        let h_fe = a.add(ctx.out)?.group_norm(self.cfg.groups)?.relu();
        Ok(SceneFeatures {
            h_fe,
            lane_features: lanes,
        })
    }

    /// `[agents, d] -> [agents, k * t_f * 2]`, meters in each agent's frame.
    pub fn proposal_header<'t>(&self, p: &[Var<'t>], h_fe: Var<'t>) -> Result<Var<'t>, ModelError> {
        Ok(self.layers.proposal_header.apply(p, h_fe)?.scale(self.cfg.coord_scale))
    }

    /// Trajectories `[batch, t_f, 2]` in meters to `[batch, proposal_width]`.
    pub fn proposal_encoder<'t>(&self, p: &[Var<'t>], z: Var<'t>) -> Result<Var<'t>, ModelError> {
        let tape = z.tape();
        let b = z.shape()[0];
        let t_f = self.cfg.t_f;
        let zero = tape.constant(Tensor::zeros(&[b, 1, 2]));
        let prev = concat(&[zero, z.slice(1, 0, t_f - 1)?], 1)?;
        let delta = z.sub(prev)?;
        let x = concat(&[z.scale(1.0 / self.cfg.coord_scale), delta], 2)?;
        Ok(self.layers.proposal_enc.apply(p, x)?)
    }

    /// Attention of each agent's `h_fe` over its own `k` proposal
    /// embeddings; returns `h = h_fe ++ h_mha` and the attention weights.
    pub fn proposal_attention<'t>(
        &self,
        p: &[Var<'t>],
        h_fe: Var<'t>,
        g: Var<'t>,
    ) -> Result<(Var<'t>, Vec<Tensor>), ModelError> {
        let n = h_fe.shape()[0];
        let k = g.shape()[0] / n;
        let rows: Vec<Vec<usize>> = (0..n).map(|i| (i * k..(i + 1) * k).collect()).collect();
        let att = self.layers.proposal_attn.apply(p, h_fe, Some(g), &rows)?;
        Ok((concat(&[h_fe, att.out], 1)?, att.weights))
    }

    pub fn proposal_stage<'t>(&self, p: &[Var<'t>], h_fe: Var<'t>) -> Result<ProposalStage<'t>, ModelError> {
        let n = h_fe.shape()[0];
        let z = self.proposal_header(p, h_fe)?;
        let g = self.proposal_encoder(p, z.reshape(&[n * self.cfg.k, self.cfg.t_f, 2])?)?;
        let (h, attention) = self.proposal_attention(p, h_fe, g)?;
        Ok(ProposalStage {
            proposals: z,
            embeddings: g,
            h,
            attention,
        })
    }

    /// One agent-to-agent and one agent-to-lane attention round, each
    /// residual and normalized. Shape preserving.
    pub fn interaction_stage<'t>(
        &self,
        p: &[Var<'t>],
        h: Var<'t>,
        lanes: Option<Var<'t>>,
        input: &SceneInput,
    ) -> Result<Var<'t>, ModelError> {
        let l = &self.layers;
        let tape = h.tape();
        let pairs = match &input.pair_geometry {
            Some(geo) => {
                let src = h.gather(0, &input.pair_source)?;
                let x = concat(&[src, tape.constant(geo.clone())], 1)?;
                Some(l.pair_proj.apply(p, x)?.relu())
            }
            None => None,
        };
        let aa = l.agent_attn.apply(p, h, pairs, &input.pair_rows)?;
        let h = h.add(aa.out)?.group_norm(self.cfg.groups)?.relu();
        let al = l.lane_attn.apply(p, h, lanes, &input.lane_rows)?;
        Ok(h.add(al.out)?.group_norm(self.cfg.groups)?.relu())
    }

    /// `(trajectories [agents, modes * t_f * 2], scores [agents, modes])`
    pub fn prediction_header<'t>(&self, p: &[Var<'t>], h: Var<'t>) -> Result<(Var<'t>, Var<'t>), ModelError> {
        let traj = self.layers.pred_header.apply(p, h)?.scale(self.cfg.coord_scale);
        let scores = self.layers.score_header.apply(p, h)?;
        Ok((traj, scores))
    }

    pub fn forward<'t>(&self, p: &[Var<'t>], input: &SceneInput) -> Result<ForwardOutput<'t>, ModelError> {
        let fe = self.feature_extractor(p, input)?;
        let (h, proposals) = if self.cfg.use_tpa {
            let stage = self.proposal_stage(p, fe.h_fe)?;
            let h = self.layers.fuse.apply(p, stage.h)?.group_norm(self.cfg.groups)?.relu();
            (h, Some(stage))
        } else {
            (fe.h_fe, None)
        };
        let refined = self.interaction_stage(p, h, fe.lane_features, input)?;
        let (trajectories, scores) = self.prediction_header(p, refined)?;
        Ok(ForwardOutput {
            h_fe: fe.h_fe,
            proposals,
            trajectories,
            scores,
        })
    }

    /// Forecasts for every agent in world coordinates.
    pub fn predict(&self, input: &SceneInput) -> Result<Vec<Forecast>, ModelError> {
        let tape = Tape::new();
        let p = self.params.bind_constants(&tape);
        let out = self.forward(&p, input)?;
        let traj = out.trajectories.to_tensor();
        let scores = out.scores.to_tensor();
        let (m, t_f) = (self.cfg.modes, self.cfg.t_f);
        let mut forecasts = Vec::with_capacity(input.agents);
        for i in 0..input.agents {
            let back = input.frames[i].inverse();
            let row = &traj.data()[i * m * t_f * 2..(i + 1) * m * t_f * 2];
            let trajectories = row
                .chunks(t_f * 2)
                .map(|c| c.chunks(2).map(|xy| back.apply(Point2::new(xy[0], xy[1]))).collect())
                .collect();
            let s = scores.data()[i * m..(i + 1) * m].to_vec();
            forecasts.push(Forecast::new(trajectories, s).expect("modes >= 1"));
        }
        Ok(forecasts)
    }
}
