//! Network construction and staged forward passes.
//!
//! Every family is a sequence of stages keyed by [`TruncationPoint`]:
//! stem, block1..block4, pool, fc. Feature extraction cuts the walk at a
//! stage; perturbed forwards add a delta to a stage output before the next
//! stage consumes it.

use crate::error::{NetError, Result};
use crate::params::{ParameterStore, StoreMeta};
use crate::spec::{Family, NetworkSpec, StemKind, TruncationPoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;
use tensorcore::{Tape, Tensor, Var};

/// Batch-norm running statistics momentum.
pub const BN_MOMENTUM: f32 = 0.1;

/// Forward mode: train uses batch statistics and updates running buffers,
/// eval is a pure function of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Where a feature perturbation is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSite {
    /// The data space: added to the input before the stem.
    Input,
    /// Added to the named stage's output activation.
    Stage(TruncationPoint),
}

/// Options for eval-mode forwards.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Stop after this stage; `None` runs through fc (logits).
    pub truncation: Option<TruncationPoint>,
    /// Perturbations added at feature sites (tape vars, differentiable).
    pub perturbations: Vec<(FeatureSite, Var)>,
    /// Added to the first convolution weight (weight-space ablation).
    pub first_weight_delta: Option<Var>,
}

/// A forward pass plus the parameter leaves it bound, for gradient harvest.
pub struct BoundForward {
    pub out: Var,
    pub bindings: Vec<(usize, Var)>,
}

pub struct Model {
    pub spec: NetworkSpec,
    pub store: ParameterStore,
}

struct Binder<'m> {
    store: &'m ParameterStore,
    trainable: bool,
    bound: HashMap<usize, Var>,
    order: Vec<(usize, Var)>,
}

impl<'m> Binder<'m> {
    fn new(store: &'m ParameterStore, trainable: bool) -> Self {
        Self { store, trainable, bound: HashMap::new(), order: Vec::new() }
    }

    fn var(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        let i = self.store.idx(name)?;
        if let Some(v) = self.bound.get(&i) {
            return Ok(*v);
        }
        let p = self.store.param(i);
        let v = tape.leaf(p.value.clone(), self.trainable && p.trainable);
        self.bound.insert(i, v);
        self.order.push((i, v));
        Ok(v)
    }

    fn raw(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.store.param(self.store.idx(name)?).value)
    }
}

/// Deferred batch-norm running-stat updates collected during a train pass.
type BnUpdates = Vec<(String, Vec<f32>, Vec<f32>, usize)>;

struct FwdCtx<'a> {
    mode: Mode,
    first_weight_delta: Option<Var>,
    bn_updates: &'a mut BnUpdates,
}

impl Model {
    /// Build a freshly initialized network: He fan-in convolutions and
    /// linear layers, unit batch-norm scale, zero shift. Deterministic in
    /// `seed`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut store = ParameterStore::new(StoreMeta { spec_hash: spec.hash(), seed, epoch: 0 });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { store: &mut store, rng: &mut rng };
        let (c, _, _) = spec.input;
        let w = spec.stage_widths();
        match spec.family {
            Family::SimplifiedResnet18 => {
                b.stem(c, w[0], spec.stem)?;
                b.resnet_stages(&w, 1, false)?;
                b.fc(w[3], spec.num_classes)?;
            }
            Family::SenetSlim => {
                b.stem(c, w[0], spec.stem)?;
                b.resnet_stages(&w, 1, true)?;
                b.fc(w[3], spec.num_classes)?;
            }
            Family::Resnet20Target => {
                b.stem(c, w[0], spec.stem)?;
                b.resnet_stages(&w, 3, false)?;
                b.fc(w[2], spec.num_classes)?;
            }
            Family::VggSlim => {
                b.conv_bn("stem", c, w[0], 3)?;
                for (s, &wo) in [w[1], w[2], w[3], w[3]].iter().enumerate() {
                    let wi = if s == 0 { w[0] } else { [w[1], w[2], w[3], w[3]][s - 1] };
                    b.conv_bn(&format!("block{}.conv1", s + 1), wi, wo, 3)?;
                }
                b.fc(w[3], spec.num_classes)?;
            }
            Family::Vgg11Target => {
                b.conv_bn("stem", c, w[0], 3)?;
                b.conv_bn("block1.conv1", w[0], w[1], 3)?;
                b.conv_bn("block2.conv1", w[1], w[2], 3)?;
                b.conv_bn("block2.conv2", w[2], w[2], 3)?;
                b.conv_bn("block3.conv1", w[2], w[3], 3)?;
                b.conv_bn("block3.conv2", w[3], w[3], 3)?;
                b.conv_bn("block4.conv1", w[3], w[3], 3)?;
                b.conv_bn("block4.conv2", w[3], w[3], 3)?;
                b.fc(w[3], spec.num_classes)?;
            }
            Family::MobilenetLiteTarget => {
                b.conv_bn("stem", c, w[0], 3)?;
                let io = [(w[0], w[1]), (w[1], w[2]), (w[2], w[3]), (w[3], w[3])];
                for (s, &(wi, wo)) in io.iter().enumerate() {
                    b.depthwise_bn(&format!("block{}.dw", s + 1), wi)?;
                    b.conv_bn_k1(&format!("block{}.pw", s + 1), wi, wo)?;
                }
                b.fc(w[3], spec.num_classes)?;
            }
        }
        Ok(Model { spec: spec.clone(), store })
    }

    /// Reference resnet build with a configurable block count per stage.
    /// Exists so tests can compare the simplified one-block capacity against
    /// the standard two-block layout; not part of the spec surface.
    #[doc(hidden)]
    pub fn build_resnet_variant(spec: &NetworkSpec, seed: u64, blocks_per_stage: usize) -> Result<Model> {
        spec.validate()?;
        let mut store = ParameterStore::new(StoreMeta { spec_hash: spec.hash(), seed, epoch: 0 });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { store: &mut store, rng: &mut rng };
        let (c, _, _) = spec.input;
        let w = spec.stage_widths();
        b.stem(c, w[0], spec.stem)?;
        b.resnet_stages(&w, blocks_per_stage, false)?;
        b.fc(w[w.len() - 1], spec.num_classes)?;
        Ok(Model { spec: spec.clone(), store })
    }

    /// Stages this family exposes, in order, excluding pool/fc.
    pub fn feature_stages(&self) -> Vec<TruncationPoint> {
        let blocks = match self.spec.family {
            Family::Resnet20Target => 3,
            _ => 4,
        };
        let mut v = vec![TruncationPoint::Stem];
        v.extend(TruncationPoint::ALL[1..1 + blocks].iter().copied());
        v
    }

    pub fn supports(&self, t: TruncationPoint) -> bool {
        match t {
            TruncationPoint::Pool | TruncationPoint::Fc => true,
            other => self.feature_stages().contains(&other),
        }
    }

    /// Residual block count (zero for non-residual families).
    pub fn residual_block_count(&self) -> usize {
        match self.spec.family {
            Family::SimplifiedResnet18 | Family::SenetSlim | Family::Resnet20Target => {
                self.store.names().filter(|n| n.starts_with("block") && n.ends_with(".conv2.w")).count()
            }
            _ => 0,
        }
    }

    /// Train-mode forward to logits (or a truncation); binds parameters as
    /// differentiable leaves and updates batch-norm running statistics.
    pub fn forward_train(
        &mut self,
        tape: &mut Tape,
        x: Var,
        truncation: Option<TruncationPoint>,
    ) -> Result<BoundForward> {
        let mut bn_updates = Vec::new();
        let mut binder = Binder::new(&self.store, true);
        let out = {
            let mut ctx = FwdCtx { mode: Mode::Train, first_weight_delta: None, bn_updates: &mut bn_updates };
            self.walk(tape, x, truncation, &[], &mut binder, &mut ctx)?
        };
        let bindings = binder.order.clone();
        drop(binder);
        self.apply_bn_updates(bn_updates)?;
        Ok(BoundForward { out, bindings })
    }

    /// Eval-mode forward: a pure function of its input.
    pub fn forward_eval(&self, tape: &mut Tape, x: Var, opts: &EvalOptions) -> Result<Var> {
        let mut bn_updates = Vec::new();
        let mut binder = Binder::new(&self.store, false);
        let mut ctx =
            FwdCtx { mode: Mode::Eval, first_weight_delta: opts.first_weight_delta, bn_updates: &mut bn_updates };
        self.walk(tape, x, opts.truncation, &opts.perturbations, &mut binder, &mut ctx)
    }

    /// Logits in eval mode.
    pub fn forward_logits(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_eval(tape, x, &EvalOptions::default())
    }

    /// Feature map at a truncation point in eval mode.
    pub fn forward_features(&self, tape: &mut Tape, x: Var, at: TruncationPoint) -> Result<Var> {
        self.forward_eval(tape, x, &EvalOptions { truncation: Some(at), ..Default::default() })
    }

    /// Feature map with perturbations injected at earlier sites.
    pub fn forward_features_perturbed(
        &self,
        tape: &mut Tape,
        x: Var,
        at: TruncationPoint,
        perturbations: Vec<(FeatureSite, Var)>,
    ) -> Result<Var> {
        self.forward_eval(tape, x, &EvalOptions { truncation: Some(at), perturbations, ..Default::default() })
    }

    /// Resume the forward from a stage's activation through to logits.
    pub fn forward_eval_from(&self, tape: &mut Tape, h: Var, after: TruncationPoint) -> Result<Var> {
        if !self.supports(after) || after.is_final() {
            return Err(NetError::InvalidTruncation(after.to_string()));
        }
        let mut bn_updates = Vec::new();
        let mut binder = Binder::new(&self.store, false);
        let mut ctx = FwdCtx { mode: Mode::Eval, first_weight_delta: None, bn_updates: &mut bn_updates };
        let mut h = h;
        let mut passed = false;
        for stage in self.stage_sequence() {
            if passed {
                h = self.stage_forward(tape, h, stage, &mut binder, &mut ctx)?;
            }
            if stage == after {
                passed = true;
            }
        }
        Ok(h)
    }

    fn stage_sequence(&self) -> Vec<TruncationPoint> {
        let mut v = self.feature_stages();
        v.push(TruncationPoint::Pool);
        v.push(TruncationPoint::Fc);
        v
    }

    fn walk(
        &self,
        tape: &mut Tape,
        x: Var,
        truncation: Option<TruncationPoint>,
        perturbations: &[(FeatureSite, Var)],
        binder: &mut Binder,
        ctx: &mut FwdCtx,
    ) -> Result<Var> {
        let stop = truncation.unwrap_or(TruncationPoint::Fc);
        if !self.supports(stop) {
            return Err(NetError::InvalidTruncation(stop.to_string()));
        }
        for (site, _) in perturbations {
            if let FeatureSite::Stage(t) = site {
                if !self.supports(*t) || t.ordinal() > stop.ordinal() {
                    return Err(NetError::InvalidTruncation(format!("perturbation site {t} beyond cut {stop}")));
                }
            }
        }
        let mut h = x;
        for (site, d) in perturbations {
            if *site == FeatureSite::Input {
                h = tape.add(h, *d)?;
            }
        }
        for stage in self.stage_sequence() {
            h = self.stage_forward(tape, h, stage, binder, ctx)?;
            for (site, d) in perturbations {
                if *site == FeatureSite::Stage(stage) {
                    h = tape.add(h, *d)?;
                }
            }
            if stage == stop {
                break;
            }
        }
        Ok(h)
    }

    fn stage_forward(
        &self,
        tape: &mut Tape,
        h: Var,
        stage: TruncationPoint,
        binder: &mut Binder,
        ctx: &mut FwdCtx,
    ) -> Result<Var> {
        match stage {
            TruncationPoint::Stem => self.stem_forward(tape, h, binder, ctx),
            TruncationPoint::Pool => {
                let pooled = tape.global_avgpool(h)?;
                Ok(pooled)
            }
            TruncationPoint::Fc => {
                let w = binder.var(tape, "fc.w")?;
                let b = binder.var(tape, "fc.b")?;
                Ok(tape.linear(h, w, Some(b))?)
            }
            block => {
                let s = block.ordinal(); // 1-based stage index
                match self.spec.family {
                    Family::SimplifiedResnet18 | Family::SenetSlim => {
                        self.resnet_stage(tape, h, s, 1, self.spec.family == Family::SenetSlim, binder, ctx)
                    }
                    Family::Resnet20Target => self.resnet_stage(tape, h, s, 3, false, binder, ctx),
                    Family::VggSlim => {
                        let h = self.conv_bn_relu(tape, h, &format!("block{s}.conv1"), 1, 1, binder, ctx, false)?;
                        Ok(tape.maxpool2d(h, 2, 2, 0)?)
                    }
                    Family::Vgg11Target => {
                        let mut h = self.conv_bn_relu(tape, h, &format!("block{s}.conv1"), 1, 1, binder, ctx, false)?;
                        if s >= 2 {
                            h = self.conv_bn_relu(tape, h, &format!("block{s}.conv2"), 1, 1, binder, ctx, false)?;
                        }
                        Ok(tape.maxpool2d(h, 2, 2, 0)?)
                    }
                    Family::MobilenetLiteTarget => {
                        let stride = if s == 2 || s == 3 { 2 } else { 1 };
                        let h = self.depthwise_bn_relu(tape, h, &format!("block{s}.dw"), stride, binder, ctx)?;
                        self.conv_bn_relu(tape, h, &format!("block{s}.pw"), 1, 0, binder, ctx, false)
                    }
                }
            }
        }
    }

    fn stem_forward(&self, tape: &mut Tape, h: Var, binder: &mut Binder, ctx: &mut FwdCtx) -> Result<Var> {
        match self.spec.family {
            Family::SimplifiedResnet18 | Family::SenetSlim | Family::Resnet20Target => match self.spec.stem {
                StemKind::Conv3x3 => self.conv_bn_relu(tape, h, "stem", 1, 1, binder, ctx, true),
                StemKind::Conv7x7Pool => {
                    let h = self.conv_bn_relu(tape, h, "stem", 2, 3, binder, ctx, true)?;
                    Ok(tape.maxpool2d(h, 3, 2, 1)?)
                }
            },
            Family::VggSlim | Family::MobilenetLiteTarget => self.conv_bn_relu(tape, h, "stem", 1, 1, binder, ctx, true),
            Family::Vgg11Target => {
                let h = self.conv_bn_relu(tape, h, "stem", 1, 1, binder, ctx, true)?;
                Ok(tape.maxpool2d(h, 2, 2, 0)?)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn resnet_stage(
        &self,
        tape: &mut Tape,
        mut h: Var,
        s: usize,
        blocks: usize,
        se: bool,
        binder: &mut Binder,
        ctx: &mut FwdCtx,
    ) -> Result<Var> {
        let stage_stride = if s == 1 { 1 } else { 2 };
        for b in 1..=blocks {
            let stride = if b == 1 { stage_stride } else { 1 };
            h = self.basic_block(tape, h, &format!("block{s}_{b}"), stride, se, binder, ctx)?;
        }
        Ok(h)
    }

    #[allow(clippy::too_many_arguments)]
    fn basic_block(
        &self,
        tape: &mut Tape,
        x: Var,
        prefix: &str,
        stride: usize,
        se: bool,
        binder: &mut Binder,
        ctx: &mut FwdCtx,
    ) -> Result<Var> {
        let w1 = binder.var(tape, &format!("{prefix}.conv1.w"))?;
        let mut h = tape.conv2d(x, w1, stride, 1)?;
        h = self.batchnorm(tape, h, &format!("{prefix}.bn1"), binder, ctx)?;
        h = tape.relu(h)?;
        let w2 = binder.var(tape, &format!("{prefix}.conv2.w"))?;
        h = tape.conv2d(h, w2, 1, 1)?;
        h = self.batchnorm(tape, h, &format!("{prefix}.bn2"), binder, ctx)?;
        if se {
            let pooled = tape.global_avgpool(h)?;
            let f1w = binder.var(tape, &format!("{prefix}.se.fc1.w"))?;
            let f1b = binder.var(tape, &format!("{prefix}.se.fc1.b"))?;
            let z = tape.linear(pooled, f1w, Some(f1b))?;
            let z = tape.relu(z)?;
            let f2w = binder.var(tape, &format!("{prefix}.se.fc2.w"))?;
            let f2b = binder.var(tape, &format!("{prefix}.se.fc2.b"))?;
            let z = tape.linear(z, f2w, Some(f2b))?;
            let gate = tape.sigmoid(z)?;
            h = tape.scale_channels(h, gate)?;
        }
        let shortcut = if self.store.idx(&format!("{prefix}.down.conv.w")).is_ok() {
            let wd = binder.var(tape, &format!("{prefix}.down.conv.w"))?;
            let sc = tape.conv2d(x, wd, stride, 0)?;
            self.batchnorm(tape, sc, &format!("{prefix}.down.bn"), binder, ctx)?
        } else {
            x
        };
        let sum = tape.add(h, shortcut)?;
        Ok(tape.relu(sum)?)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_bn_relu(
        &self,
        tape: &mut Tape,
        x: Var,
        prefix: &str,
        stride: usize,
        pad: usize,
        binder: &mut Binder,
        ctx: &mut FwdCtx,
        is_first: bool,
    ) -> Result<Var> {
        let mut w = binder.var(tape, &format!("{prefix}.conv.w"))?;
        if is_first {
            if let Some(delta) = ctx.first_weight_delta {
                w = tape.add(w, delta)?;
            }
        }
        let h = tape.conv2d(x, w, stride, pad)?;
        let h = self.batchnorm(tape, h, &format!("{prefix}.bn"), binder, ctx)?;
        Ok(tape.relu(h)?)
    }

    fn depthwise_bn_relu(
        &self,
        tape: &mut Tape,
        x: Var,
        prefix: &str,
        stride: usize,
        binder: &mut Binder,
        ctx: &mut FwdCtx,
    ) -> Result<Var> {
        let w = binder.var(tape, &format!("{prefix}.w"))?;
        let h = tape.depthwise_conv2d(x, w, stride, 1)?;
        let h = self.batchnorm(tape, h, &format!("{prefix}.bn"), binder, ctx)?;
        Ok(tape.relu(h)?)
    }

    fn batchnorm(
        &self,
        tape: &mut Tape,
        x: Var,
        prefix: &str,
        binder: &mut Binder,
        ctx: &mut FwdCtx,
    ) -> Result<Var> {
        let gamma = binder.var(tape, &format!("{prefix}.gamma"))?;
        let beta = binder.var(tape, &format!("{prefix}.beta"))?;
        match ctx.mode {
            Mode::Train => {
                let (n, _, h, w) = tape.value(x).dims4()?;
                let count = n * h * w;
                let (out, mean, var) = tape.batchnorm2d_train(x, gamma, beta)?;
                ctx.bn_updates.push((prefix.to_string(), mean, var, count));
                Ok(out)
            }
            Mode::Eval => {
                let rmean = binder.raw(&format!("{prefix}.rmean"))?.data().to_vec();
                let rvar = binder.raw(&format!("{prefix}.rvar"))?.data().to_vec();
                Ok(tape.batchnorm2d_eval(x, gamma, beta, &rmean, &rvar)?)
            }
        }
    }

    fn apply_bn_updates(&mut self, updates: BnUpdates) -> Result<()> {
        for (prefix, mean, var, count) in updates {
            // Unbiased variance for the running buffer, matching common
            // framework semantics; normalization used the biased one.
            let unbias = if count > 1 { count as f32 / (count as f32 - 1.0) } else { 1.0 };
            {
                let rm = self.store.get_mut(&format!("{prefix}.rmean"))?.data_mut();
                for (r, m) in rm.iter_mut().zip(&mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
            }
            {
                let rv = self.store.get_mut(&format!("{prefix}.rvar"))?.data_mut();
                for (r, v) in rv.iter_mut().zip(&var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * (v * unbias);
                }
            }
        }
        Ok(())
    }
}

struct Builder<'a> {
    store: &'a mut ParameterStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn he_conv(&mut self, name: &str, co: usize, ci: usize, k: usize) -> Result<()> {
        let fan_in = (ci * k * k) as f32;
        let std = (2.0 / fan_in).sqrt();
        let dist = Normal::new(0.0f32, std).expect("std > 0");
        let n = co * ci * k * k;
        let data: Vec<f32> = (0..n).map(|_| dist.sample(self.rng)).collect();
        self.store.add(name, Tensor::new(vec![co, ci, k, k], data)?, true)
    }

    fn bn(&mut self, prefix: &str, c: usize) -> Result<()> {
        self.store.add(&format!("{prefix}.gamma"), Tensor::full(vec![c], 1.0), true)?;
        self.store.add(&format!("{prefix}.beta"), Tensor::zeros(vec![c]), true)?;
        self.store.add(&format!("{prefix}.rmean"), Tensor::zeros(vec![c]), false)?;
        self.store.add(&format!("{prefix}.rvar"), Tensor::full(vec![c], 1.0), false)
    }

    fn conv_bn(&mut self, prefix: &str, ci: usize, co: usize, k: usize) -> Result<()> {
        self.he_conv(&format!("{prefix}.conv.w"), co, ci, k)?;
        self.bn(&format!("{prefix}.bn"), co)
    }

    fn conv_bn_k1(&mut self, prefix: &str, ci: usize, co: usize) -> Result<()> {
        self.conv_bn(prefix, ci, co, 1)
    }

    fn depthwise_bn(&mut self, prefix: &str, c: usize) -> Result<()> {
        let fan_in = 9.0f32;
        let std = (2.0 / fan_in).sqrt();
        let dist = Normal::new(0.0f32, std).expect("std > 0");
        let data: Vec<f32> = (0..c * 9).map(|_| dist.sample(self.rng)).collect();
        self.store.add(&format!("{prefix}.w"), Tensor::new(vec![c, 1, 3, 3], data)?, true)?;
        self.bn(&format!("{prefix}.bn"), c)
    }

    fn stem(&mut self, ci: usize, co: usize, kind: StemKind) -> Result<()> {
        let k = match kind {
            StemKind::Conv3x3 => 3,
            StemKind::Conv7x7Pool => 7,
        };
        self.he_conv("stem.conv.w", co, ci, k)?;
        self.bn("stem.bn", co)
    }

    fn resnet_stages(&mut self, widths: &[usize], blocks: usize, se: bool) -> Result<()> {
        for (s, &wo) in widths.iter().enumerate() {
            let wi_stage = if s == 0 { widths[0] } else { widths[s - 1] };
            for b in 1..=blocks {
                let prefix = format!("block{}_{b}", s + 1);
                let (wi, stride) = if b == 1 { (wi_stage, if s == 0 { 1 } else { 2 }) } else { (wo, 1) };
                self.he_conv(&format!("{prefix}.conv1.w"), wo, wi, 3)?;
                self.bn(&format!("{prefix}.bn1"), wo)?;
                self.he_conv(&format!("{prefix}.conv2.w"), wo, wo, 3)?;
                self.bn(&format!("{prefix}.bn2"), wo)?;
                if se {
                    let mid = (wo / 4).max(4);
                    self.linear(&format!("{prefix}.se.fc1"), wo, mid)?;
                    self.linear(&format!("{prefix}.se.fc2"), mid, wo)?;
                }
                if stride != 1 || wi != wo {
                    self.he_conv(&format!("{prefix}.down.conv.w"), wo, wi, 1)?;
                    self.bn(&format!("{prefix}.down.bn"), wo)?;
                }
            }
        }
        Ok(())
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) -> Result<()> {
        let std = (2.0 / d_in as f32).sqrt();
        let dist = Normal::new(0.0f32, std).expect("std > 0");
        let data: Vec<f32> = (0..d_out * d_in).map(|_| dist.sample(self.rng)).collect();
        self.store.add(&format!("{prefix}.w"), Tensor::new(vec![d_out, d_in], data)?, true)?;
        self.store.add(&format!("{prefix}.b"), Tensor::zeros(vec![d_out]), true)
    }

    fn fc(&mut self, d_in: usize, classes: usize) -> Result<()> {
        self.linear("fc", d_in, classes)
    }
}
