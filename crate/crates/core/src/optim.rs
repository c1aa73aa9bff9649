//! Direct per-shape skeleton fitting.
//!
//! Keypoints are either softmax-weighted averages of the input cloud
//! ([`KeypointMode::Convex`]) or free 3D positions. Activations are sigmoids of
//! logits and offsets are optimized directly. Every parameter group is updated
//! by Adam on the analytic gradient of `CCD + ridge penalty`.

use std::time::Instant;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ccd::{CcdConfig, CcdEvaluator, CcdResult, DEFAULT_GAMMA};
use crate::cloud::{farthest_point_sample, nearest_neighbor, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::skeleton::{
    apply_offsets, offset_penalty, plan_sampling, sample_edges, ActivationVector, OffsetTable,
    SamplingPlan, Skeleton, SkeletonDoc, SubCloudSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeypointMode {
    /// Keypoints are softmax-weighted averages of the input points.
    Convex,
    /// Keypoints are unconstrained 3D positions.
    Free,
}

fn default_budget() -> usize {
    2048
}
fn default_lr() -> f64 {
    0.01
}
fn default_offset_lr() -> f64 {
    0.01
}
fn default_keypoint_lr() -> f64 {
    0.1
}
fn default_decay() -> f64 {
    0.5
}
fn default_stages() -> usize {
    3
}
fn default_offset_warmup() -> usize {
    1
}
fn default_iterations() -> usize {
    300
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn one() -> f64 {
    1.0
}
fn default_lambda_f() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}
fn default_mode() -> KeypointMode {
    KeypointMode::Convex
}
fn default_anchor_weight() -> f64 {
    0.99
}

/// Flat fitting configuration. Only `k` is required in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub k: usize,
    #[serde(default = "default_budget")]
    pub total_budget: usize,
    /// Base Adam step for activation logits.
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Base Adam step for sample offsets.
    #[serde(default = "default_offset_lr")]
    pub offset_learning_rate: f64,
    /// Base Adam step for keypoint parameters (logits in convex mode,
    /// coordinates in free mode).
    #[serde(default = "default_keypoint_lr")]
    pub keypoint_learning_rate: f64,
    /// Multiplier applied to every rate at each stage boundary.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    /// The run is split into this many equal stages.
    #[serde(default = "default_stages")]
    pub lr_stages: usize,
    /// Offsets stay frozen during this many leading schedule stages, so the
    /// keypoints settle before local refinement starts.
    #[serde(default = "default_offset_warmup")]
    pub offset_warmup_stages: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Fidelity weight. Paired with mean-form losses, 2 keeps spurious edges'
    /// fidelity pull strong enough for their activations to separate.
    #[serde(default = "default_lambda_f")]
    pub lambda_f: f64,
    #[serde(default = "one")]
    pub lambda_c: f64,
    /// Mean-form losses, so the fidelity/coverage balance does not drift
    /// with cloud size or sample budget.
    #[serde(default = "yes")]
    pub normalize_losses: bool,
    #[serde(default = "one")]
    pub lambda_reg: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub keypoint_mode: KeypointMode,
    /// Softmax mass placed on each keypoint's anchor point at initialization.
    #[serde(default = "default_anchor_weight")]
    pub anchor_weight: f64,
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        FitConfig {
            k,
            total_budget: default_budget(),
            learning_rate: default_lr(),
            offset_learning_rate: default_offset_lr(),
            keypoint_learning_rate: default_keypoint_lr(),
            lr_decay: default_decay(),
            lr_stages: default_stages(),
            offset_warmup_stages: default_offset_warmup(),
            iterations: default_iterations(),
            gamma: default_gamma(),
            lambda_f: default_lambda_f(),
            lambda_c: 1.0,
            normalize_losses: true,
            lambda_reg: 1.0,
            seed: 0,
            keypoint_mode: default_mode(),
            anchor_weight: default_anchor_weight(),
        }
    }

    pub fn ccd(&self) -> CcdConfig {
        CcdConfig {
            gamma: self.gamma,
            lambda_f: self.lambda_f,
            lambda_c: self.lambda_c,
            normalize: self.normalize_losses,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(invalid(format!("k must be at least 2, got {}", self.k)));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        if self.lr_stages == 0 {
            return Err(invalid("lr_stages must be at least 1"));
        }
        if !(self.learning_rate >= 0.0
            && self.offset_learning_rate >= 0.0
            && self.keypoint_learning_rate >= 0.0)
        {
            return Err(invalid("learning rates must be nonnegative"));
        }
        if !(self.lambda_reg >= 0.0) {
            return Err(invalid("lambda_reg must be nonnegative"));
        }
        if !(self.anchor_weight > 0.0 && self.anchor_weight < 1.0) {
            return Err(invalid("anchor_weight must lie in (0, 1)"));
        }
        self.ccd().validate()
    }

    pub fn stage(&self, iteration: usize) -> usize {
        iteration / self.iterations.div_ceil(self.lr_stages).max(1)
    }

    /// Rate multiplier for `iteration`: `lr_decay ^ stage`.
    pub fn schedule(&self, iteration: usize) -> f64 {
        self.lr_decay.powi(self.stage(iteration) as i32)
    }
}

/// Keypoint parameterization.
#[derive(Debug, Clone, PartialEq)]
pub enum KeypointParams {
    /// Row-major `k x N` scores; keypoint `j` is `softmax(row j) . X`.
    Convex { logits: Vec<f64>, n: usize },
    Free { positions: Vec<Point3<f64>> },
}

#[derive(Debug, Clone, PartialEq, Default)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizable latent state plus the frozen sampling plan and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub keypoints: KeypointParams,
    pub activation_logits: Vec<f64>,
    pub offsets: OffsetTable,
    pub plan: SamplingPlan,
    adam: AdamState,
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn weighted_average(weights: &[f64], points: &[Point3<f64>]) -> Point3<f64> {
    Point3::from(
        weights
            .iter()
            .zip(points)
            .fold(Vector3::zeros(), |acc, (w, p)| acc + p.coords * *w),
    )
}

impl FitParams {
    pub fn k(&self) -> usize {
        match &self.keypoints {
            KeypointParams::Convex { logits, n } => logits.len() / n,
            KeypointParams::Free { positions } => positions.len(),
        }
    }

    /// Per-keypoint softmax weights over the input (convex mode only).
    pub fn keypoint_weights(&self) -> Option<Vec<Vec<f64>>> {
        match &self.keypoints {
            KeypointParams::Convex { logits, n } => {
                Some(logits.chunks(*n).map(softmax).collect())
            }
            KeypointParams::Free { .. } => None,
        }
    }

    pub fn keypoints(&self, cloud: &PointCloud) -> Vec<Point3<f64>> {
        match &self.keypoints {
            KeypointParams::Convex { .. } => self
                .keypoint_weights()
                .unwrap()
                .iter()
                .map(|w| weighted_average(w, cloud.points()))
                .collect(),
            KeypointParams::Free { positions } => positions.clone(),
        }
    }

    pub fn activations(&self) -> ActivationVector {
        ActivationVector::new(self.activation_logits.iter().map(|&z| sigmoid(z)).collect())
            .expect("sigmoid lies in [0, 1]")
    }

    /// Skeleton and refined sub-clouds for the current parameters.
    pub fn decode(&self, cloud: &PointCloud) -> Result<(Skeleton, SubCloudSet)> {
        let skeleton = Skeleton::new(self.keypoints(cloud))?;
        let raw = sample_edges(&skeleton, &self.plan)?;
        let refined = apply_offsets(&raw, &self.offsets)?;
        Ok((skeleton, refined))
    }

    fn num_params(&self) -> usize {
        let kp = match &self.keypoints {
            KeypointParams::Convex { logits, .. } => logits.len(),
            KeypointParams::Free { positions } => 3 * positions.len(),
        };
        kp + self.activation_logits.len() + 3 * self.offsets.as_slice().len()
    }

    fn keypoint_param_count(&self) -> usize {
        match &self.keypoints {
            KeypointParams::Convex { logits, .. } => logits.len(),
            KeypointParams::Free { positions } => 3 * positions.len(),
        }
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        match &self.keypoints {
            KeypointParams::Convex { logits, .. } => out.extend_from_slice(logits),
            KeypointParams::Free { positions } => {
                out.extend(positions.iter().flat_map(|p| [p.x, p.y, p.z]))
            }
        }
        out.extend_from_slice(&self.activation_logits);
        out.extend(self.offsets.as_slice().iter().flat_map(|b| [b.x, b.y, b.z]));
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        match &mut self.keypoints {
            KeypointParams::Convex { logits, .. } => {
                logits.iter_mut().for_each(|s| *s = it.next().unwrap())
            }
            KeypointParams::Free { positions } => positions.iter_mut().for_each(|p| {
                *p = Point3::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
            }),
        }
        self.activation_logits
            .iter_mut()
            .for_each(|z| *z = it.next().unwrap());
        self.offsets.as_mut_slice().iter_mut().for_each(|b| {
            *b = Vector3::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
        });
    }

    /// Same latent values, fresh optimizer moments.
    pub fn reset_optimizer(&mut self) {
        self.adam = AdamState::default();
    }
}

/// Loss components of one evaluation. `ccd = lambda_f * fidelity + lambda_c * coverage`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ccd: f64,
    pub fidelity: f64,
    pub coverage: f64,
    pub penalty: f64,
}

impl LossBreakdown {
    /// Quantity minimized by the fitter.
    pub fn objective(&self) -> f64 {
        self.ccd + self.penalty
    }

    pub fn as_row(&self) -> [f64; 4] {
        [self.ccd, self.fidelity, self.coverage, self.penalty]
    }

    fn is_finite(&self) -> bool {
        self.as_row().iter().all(|v| v.is_finite())
    }
}

fn init_with_anchor_indices(
    cloud: &PointCloud,
    anchors: &[usize],
    config: &FitConfig,
) -> Result<FitParams> {
    let n = cloud.len();
    let keypoints = match config.keypoint_mode {
        KeypointMode::Convex => {
            // anchor logit L with e^L / (e^L + n - 1) = anchor_weight
            let w = config.anchor_weight;
            let peak = if n > 1 {
                (w * (n - 1) as f64 / (1.0 - w)).ln()
            } else {
                0.0
            };
            let mut logits = vec![0.0; anchors.len() * n];
            for (j, &a) in anchors.iter().enumerate() {
                logits[j * n + a] = peak;
            }
            KeypointParams::Convex { logits, n }
        }
        KeypointMode::Free => KeypointParams::Free {
            positions: anchors.iter().map(|&a| cloud.points()[a]).collect(),
        },
    };
    let mut params = FitParams {
        keypoints,
        activation_logits: vec![0.0; anchors.len() * (anchors.len() - 1) / 2],
        offsets: OffsetTable::zeros(&SamplingPlan {
            total_budget: 0,
            counts: vec![],
        }),
        plan: SamplingPlan {
            total_budget: 0,
            counts: vec![],
        },
        adam: AdamState::default(),
    };
    let skeleton = Skeleton::new(params.keypoints(cloud))?;
    params.plan = plan_sampling(&skeleton, config.total_budget)?;
    params.offsets = OffsetTable::zeros(&params.plan);
    Ok(params)
}

/// Initial parameters: keypoints concentrated on farthest-point-sampled
/// anchors, all activations 0.5, zero offsets, sampling plan frozen from the
/// initial skeleton.
pub fn init_params(cloud: &PointCloud, config: &FitConfig) -> Result<FitParams> {
    config.validate()?;
    if config.k > cloud.len() {
        return Err(invalid(format!(
            "k = {} exceeds the cloud size {}",
            config.k,
            cloud.len()
        )));
    }
    let anchors = farthest_point_sample(cloud, config.k, config.seed)?;
    init_with_anchor_indices(cloud, &anchors, config)
}

/// Initialization shared across clouds: each anchor position is snapped to its
/// nearest point of `cloud`, keeping the anchor order.
pub fn init_params_from_anchors(
    cloud: &PointCloud,
    anchors: &[Point3<f64>],
    config: &FitConfig,
) -> Result<FitParams> {
    config.validate()?;
    if anchors.len() != config.k {
        return Err(Error::ShapeMismatch(format!(
            "{} anchors given for k = {}",
            anchors.len(),
            config.k
        )));
    }
    let idx: Vec<usize> = anchors.iter().map(|a| nearest_neighbor(a, cloud).0).collect();
    init_with_anchor_indices(cloud, &idx, config)
}

/// Anchor positions `init_params` would use for this cloud and seed.
pub fn anchor_points(cloud: &PointCloud, config: &FitConfig) -> Result<Vec<Point3<f64>>> {
    Ok(farthest_point_sample(cloud, config.k, config.seed)?
        .into_iter()
        .map(|i| cloud.points()[i])
        .collect())
}

/// Loss and flat gradient (same layout as the parameter vector).
fn loss_and_gradient(
    eval: &CcdEvaluator<'_>,
    params: &FitParams,
    config: &FitConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let cloud = eval.input();
    let (skeleton, subclouds) = params.decode(cloud)?;
    let activations = params.activations();
    let CcdResult {
        fidelity,
        coverage,
        total,
        grad_points,
        grad_activations,
        ..
    } = eval.evaluate(&subclouds, &activations, &config.ccd())?;
    let (penalty, grad_penalty) = offset_penalty(&params.offsets, config.lambda_reg);

    // Sample positions are affine in the two edge keypoints.
    let k = skeleton.k();
    let mut grad_kp = vec![Vector3::zeros(); k];
    for (e, &(u, v)) in skeleton.edges().iter().enumerate() {
        let n = params.plan.counts[e];
        for (slot, idx) in subclouds.edge_range(e).enumerate() {
            let t = SamplingPlan::sample_param(slot, n);
            grad_kp[u] += grad_points[idx] * (1.0 - t);
            grad_kp[v] += grad_points[idx] * t;
        }
    }

    let mut grad = Vec::with_capacity(params.num_params());
    match &params.keypoints {
        KeypointParams::Convex { .. } => {
            let weights = params.keypoint_weights().unwrap();
            let kps = skeleton.keypoints();
            for j in 0..k {
                // d/dS_jn = w_jn (X_n - K_j) . g_Kj
                let g = grad_kp[j];
                grad.extend(
                    weights[j]
                        .iter()
                        .zip(cloud.points())
                        .map(|(w, x)| w * (x - kps[j]).dot(&g)),
                );
            }
        }
        KeypointParams::Free { .. } => grad.extend(grad_kp.iter().flat_map(|g| [g.x, g.y, g.z])),
    }
    grad.extend(
        grad_activations
            .iter()
            .zip(activations.as_slice())
            .map(|(g, a)| g * a * (1.0 - a)),
    );
    grad.extend(
        grad_points
            .iter()
            .zip(&grad_penalty)
            .flat_map(|(gp, gr)| {
                let g = gp + gr;
                [g.x, g.y, g.z]
            }),
    );
    Ok((
        LossBreakdown {
            ccd: total,
            fidelity,
            coverage,
            penalty,
        },
        grad,
    ))
}

/// Loss of `params` on `cloud` without taking a step.
pub fn evaluate(cloud: &PointCloud, params: &FitParams, config: &FitConfig) -> Result<LossBreakdown> {
    Ok(loss_and_gradient(&CcdEvaluator::new(cloud), params, config)?.0)
}

/// Flat analytic gradient of `CCD + penalty`; exposed for gradient checks.
pub fn gradient(cloud: &PointCloud, params: &FitParams, config: &FitConfig) -> Result<Vec<f64>> {
    Ok(loss_and_gradient(&CcdEvaluator::new(cloud), params, config)?.1)
}

/// Parameters as one flat vector (keypoint params, activation logits, offsets).
pub fn flatten_params(params: &FitParams) -> Vec<f64> {
    params.flat()
}

pub fn with_flat_params(params: &FitParams, flat: &[f64]) -> Result<FitParams> {
    if flat.len() != params.num_params() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {} parameters",
            flat.len(),
            params.num_params()
        )));
    }
    let mut out = params.clone();
    out.set_flat(flat);
    Ok(out)
}

fn adam_update(params: &mut FitParams, grad: &[f64], config: &FitConfig, iteration: usize) {
    let scale = config.schedule(iteration);
    let offsets_live = config.stage(iteration) >= config.offset_warmup_stages;
    let n_kp = params.keypoint_param_count();
    let n_act = n_kp + params.activation_logits.len();
    let mut flat = params.flat();
    let state = &mut params.adam;
    if state.m.len() != flat.len() {
        state.m = vec![0.0; flat.len()];
        state.v = vec![0.0; flat.len()];
        state.t = 0;
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t);
    let c2 = 1.0 - BETA2.powi(state.t);
    for (i, g) in grad.iter().enumerate() {
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
    }
    // Activation logits share one second-moment scale (the group maximum).
    // Per-coordinate scaling would equalize step sizes across edges and erase
    // the gap between spurious and supported edges that the loss encodes.
    let act_v = state.v[n_kp..n_act].iter().copied().fold(0.0, f64::max);
    for (i, x) in flat.iter_mut().enumerate() {
        let lr = scale
            * if i < n_kp {
                config.keypoint_learning_rate
            } else if i < n_act {
                config.learning_rate
            } else if offsets_live {
                config.offset_learning_rate
            } else {
                0.0
            };
        let m_hat = state.m[i] / c1;
        let v_raw = if (n_kp..n_act).contains(&i) {
            act_v
        } else {
            state.v[i]
        };
        let v_hat = v_raw / c2;
        *x -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    params.set_flat(&flat);
}

/// One Adam step at schedule position `iteration`. The returned loss is the
/// loss of the parameters before the update.
pub fn step(
    cloud: &PointCloud,
    params: &FitParams,
    config: &FitConfig,
    iteration: usize,
) -> Result<(FitParams, LossBreakdown)> {
    step_with(&CcdEvaluator::new(cloud), params, config, iteration)
}

fn step_with(
    eval: &CcdEvaluator<'_>,
    params: &FitParams,
    config: &FitConfig,
    iteration: usize,
) -> Result<(FitParams, LossBreakdown)> {
    let (loss, grad) = loss_and_gradient(eval, params, config)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            iteration,
            last_finite: Box::new(params.clone()),
            history: Vec::new(),
        });
    }
    let mut next = params.clone();
    adam_update(&mut next, &grad, config, iteration);
    Ok((next, loss))
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub skeleton: Skeleton,
    pub activations: ActivationVector,
    pub subclouds: SubCloudSet,
    /// Loss of the parameters entering each iteration.
    pub history: Vec<LossBreakdown>,
    pub best_iteration: usize,
    pub best_loss: LossBreakdown,
    pub converged: bool,
    pub wall_time_secs: f64,
    /// Best parameters, usable to continue fitting.
    pub params: FitParams,
}

impl FitReport {
    /// Keypoints in parameter order; this order is the keypoint identity.
    pub fn keypoints(&self) -> &[Point3<f64>] {
        self.skeleton.keypoints()
    }

    pub fn skeleton_doc(&self) -> SkeletonDoc {
        SkeletonDoc::new(&self.skeleton, &self.activations, &self.params.plan)
    }

    pub fn to_doc(&self) -> FitReportDoc {
        FitReportDoc {
            skeleton: self.skeleton_doc(),
            history: self.history.iter().map(LossBreakdown::as_row).collect(),
            best_iteration: self.best_iteration,
            best_loss: self.best_loss.as_row(),
            converged: self.converged,
        }
    }
}

/// Serialized form of a [`FitReport`]. Rows of `history` are `[L, L_f, L_c, penalty]`.
/// Wall time is deliberately absent so reports are reproducible byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReportDoc {
    pub skeleton: SkeletonDoc,
    pub history: Vec<[f64; 4]>,
    pub best_iteration: usize,
    pub best_loss: [f64; 4],
    pub converged: bool,
}

pub fn extract_keypoints(report: &FitReport) -> Vec<Point3<f64>> {
    report.keypoints().to_vec()
}

/// Fits from `init_params`.
pub fn fit(cloud: &PointCloud, config: &FitConfig) -> Result<FitReport> {
    let params = init_params(cloud, config)?;
    fit_from(cloud, params, config)
}

/// Runs `config.iterations` steps from `params` and returns the best iterate.
pub fn fit_from(cloud: &PointCloud, params: FitParams, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let start = Instant::now();
    let eval = CcdEvaluator::new(cloud);
    let mut history: Vec<LossBreakdown> = Vec::with_capacity(config.iterations + 1);
    let mut current = params;
    let mut best: Option<(usize, LossBreakdown, FitParams)> = None;
    // the final evaluation scores the last update
    for it in 0..=config.iterations {
        let result = if it < config.iterations {
            step_with(&eval, &current, config, it)
        } else {
            loss_and_gradient(&eval, &current, config).and_then(|(loss, _)| {
                if loss.is_finite() {
                    Ok((current.clone(), loss))
                } else {
                    Err(Error::Diverged {
                        iteration: it,
                        last_finite: Box::new(current.clone()),
                        history: Vec::new(),
                    })
                }
            })
        };
        let (next, loss) = match result {
            Ok(r) => r,
            Err(Error::Diverged {
                iteration,
                last_finite,
                ..
            }) => {
                return Err(Error::Diverged {
                    iteration,
                    last_finite,
                    history,
                })
            }
            Err(e) => return Err(e),
        };
        if it < config.iterations {
            history.push(loss);
        }
        if best
            .as_ref()
            .is_none_or(|(_, b, _)| loss.objective() < b.objective())
        {
            best = Some((it, loss, current.clone()));
        }
        current = next;
    }
    let (best_iteration, best_loss, best_params) = best.expect("at least one evaluation");
    let (skeleton, subclouds) = best_params.decode(cloud)?;
    let activations = best_params.activations();
    Ok(FitReport {
        skeleton,
        activations,
        subclouds,
        converged: converged(&history),
        history,
        best_iteration,
        best_loss,
        wall_time_secs: start.elapsed().as_secs_f64(),
        params: best_params,
    })
}

/// The best objective moved by less than 0.1% over the final tenth of the run.
fn converged(history: &[LossBreakdown]) -> bool {
    let n = history.len();
    if n < 2 {
        return false;
    }
    let window = (n / 10).max(1);
    let best_upto = |end: usize| {
        history[..end]
            .iter()
            .map(LossBreakdown::objective)
            .fold(f64::INFINITY, f64::min)
    };
    let before = best_upto(n - window);
    let after = best_upto(n);
    (before - after).abs() <= 1e-3 * after.abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::normalize;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn blob(n: usize, seed: u64) -> PointCloud {
        let mut rng = stream_rng(seed, 0);
        let c = PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.2))
                .collect(),
        )
        .unwrap();
        normalize(&c).unwrap().0
    }

    #[test]
    fn init_concentrates_on_anchors() {
        let cloud = blob(300, 1);
        let mut cfg = FitConfig::new(5);
        cfg.total_budget = 200;
        let params = init_params(&cloud, &cfg).unwrap();
        let anchors = anchor_points(&cloud, &cfg).unwrap();
        let diag = cloud.bounding_box().diagonal();
        for (kp, a) in params.keypoints(&cloud).iter().zip(&anchors) {
            assert!((kp - a).norm() < 0.05 * diag);
        }
        for w in params.keypoint_weights().unwrap() {
            let max = w.iter().copied().fold(0.0, f64::max);
            assert!((max - 0.99).abs() < 1e-9);
        }
        assert!(params.activations().as_slice().iter().all(|&a| a == 0.5));
        let loss = evaluate(&cloud, &params, &cfg).unwrap();
        assert_eq!(loss.penalty, 0.0);
    }

    #[test]
    fn init_errors() {
        let cloud = blob(3, 1);
        assert!(init_params(&cloud, &FitConfig::new(4)).is_err());
        assert!(init_params(&cloud, &FitConfig::new(1)).is_err());
        let mut cfg = FitConfig::new(2);
        cfg.iterations = 0;
        assert!(init_params(&cloud, &cfg).is_err());
    }

    #[test]
    fn zero_rate_step_keeps_params() {
        let cloud = blob(100, 2);
        let mut cfg = FitConfig::new(3);
        cfg.total_budget = 60;
        cfg.learning_rate = 0.0;
        cfg.offset_learning_rate = 0.0;
        cfg.keypoint_learning_rate = 0.0;
        let p0 = init_params(&cloud, &cfg).unwrap();
        let (p1, loss) = step(&cloud, &p0, &cfg, 0).unwrap();
        assert_eq!(flatten_params(&p0), flatten_params(&p1));
        assert!(loss.objective() > 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let cloud = blob(50, 3);
        let mut cfg = FitConfig::new(3);
        cfg.total_budget = 30;
        for mode in [KeypointMode::Convex, KeypointMode::Free] {
            cfg.keypoint_mode = mode;
            let p = init_params(&cloud, &cfg).unwrap();
            let flat = flatten_params(&p);
            assert_eq!(with_flat_params(&p, &flat).unwrap(), p);
            assert!(with_flat_params(&p, &flat[1..]).is_err());
        }
    }

    #[test]
    fn schedule_halves_each_third() {
        let cfg = FitConfig::new(2);
        assert_eq!(cfg.schedule(0), 1.0);
        assert_eq!(cfg.schedule(99), 1.0);
        assert_eq!(cfg.schedule(100), 0.5);
        assert_eq!(cfg.schedule(299), 0.25);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: FitConfig = serde_json::from_str(r#"{"k": 4}"#).unwrap();
        assert_eq!(cfg, FitConfig::new(4));
        assert!(serde_json::from_str::<FitConfig>(r#"{"k": 4, "bogus": 1}"#).is_err());
    }
}
