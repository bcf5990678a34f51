//! Regular and complementary generative adversarial nets over user
//! representations.
//!
//! The generator maps uniform noise through one ReLU hidden layer to a tanh
//! output of representation width. The discriminator has two ReLU hidden
//! layers; the second one is the feature map `f(·)` used by feature
//! matching and the pull-away term, and a two-way softmax on top gives
//! `p_benign` as its first component.
//!
//! The regular GAN is trained first. Its frozen discriminator acts as a
//! density proxy: a generated sample counts as lying in a high-density
//! region of benign users when the proxy's `p_benign` exceeds a threshold
//! `ε` fitted as a lower quantile over real benign representations. The
//! complementary generator is then pushed away from those regions while
//! staying inside the representation space, and the complementary
//! discriminator learns to separate real users from its samples.

use serde::{Deserialize, Serialize};

use crate::data::minibatches;
use crate::error::{OcanError, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::params::ParamGroup;
use crate::rng::{sample_noise, SeededRng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Probabilities are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before any log.
pub const PROB_FLOOR: f64 = 1e-7;
/// Row norms in the pull-away term are clamped below at this value.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub g_hidden: usize,
    pub d_hidden: usize,
    /// Width of the discriminator feature layer.
    pub d_features: usize,
    /// `ε` is the `1/k` lower quantile of proxy probabilities.
    pub quantile_k: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            noise_dim: 50,
            g_hidden: 100,
            d_hidden: 100,
            d_features: 50,
            quantile_k: 5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.epochs,
            self.batch_size,
            self.noise_dim,
            self.g_hidden,
            self.d_hidden,
            self.d_features,
        ];
        if dims.contains(&0) {
            return Err(OcanError::InvalidArgument(format!(
                "GAN config values must be positive: {self:?}"
            )));
        }
        if self.quantile_k < 2 {
            return Err(OcanError::InvalidArgument(format!(
                "quantile k must be at least 2, got {}",
                self.quantile_k
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub group: ParamGroup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub group: ParamGroup,
}

impl Generator {
    pub fn new(
        noise_dim: usize,
        hidden: usize,
        output: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut group = ParamGroup::new();
        group.push_weight("w1", noise_dim, hidden, rng)?;
        group.push_bias("b1", hidden, 0.0)?;
        group.push_weight("w2", hidden, output, rng)?;
        group.push_bias("b2", output, 0.0)?;
        Ok(Self { group })
    }

    pub fn from_config(config: &GanConfig, output: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(config.noise_dim, config.g_hidden, output, rng)
    }

    pub fn noise_dim(&self) -> usize {
        self.group.value_at(0).rows()
    }

    pub fn output_width(&self) -> usize {
        self.group.value_at(2).cols()
    }

    pub fn bind(&self, tape: &mut Tape) -> GenVars {
        GenVars(self.group.bind(tape))
    }
}

impl Discriminator {
    pub fn new(input: usize, hidden: usize, features: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut group = ParamGroup::new();
        group.push_weight("w1", input, hidden, rng)?;
        group.push_bias("b1", hidden, 0.0)?;
        group.push_weight("w2", hidden, features, rng)?;
        group.push_bias("b2", features, 0.0)?;
        group.push_weight("w3", features, 2, rng)?;
        group.push_bias("b3", 2, 0.0)?;
        Ok(Self { group })
    }

    pub fn from_config(config: &GanConfig, input: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(input, config.d_hidden, config.d_features, rng)
    }

    pub fn input_width(&self) -> usize {
        self.group.value_at(0).rows()
    }

    pub fn feature_width(&self) -> usize {
        self.group.value_at(2).cols()
    }

    pub fn bind(&self, tape: &mut Tape) -> DiscVars {
        DiscVars(self.group.bind(tape))
    }

    pub fn bind_frozen(&self, tape: &mut Tape) -> DiscVars {
        DiscVars(self.group.bind_frozen(tape))
    }
}

/// Discriminator outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput {
    /// `B x 1` probability of the benign (real) class.
    pub p_benign: Tensor,
    /// `B x features` intermediate activations `f(v)`.
    pub features: Tensor,
}

fn check_width(op: &'static str, x: &Tensor, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(OcanError::ShapeMismatch {
            op,
            lhs: x.shape(),
            rhs: (x.rows(), expected),
        });
    }
    Ok(())
}

/// `ṽ = G(z)`; entries in `(-1, 1)`.
pub fn generator_forward(g: &Generator, z: &Tensor) -> Result<Tensor> {
    check_width("generator_forward", z, g.noise_dim())?;
    let v = g.group.values();
    z.matmul(&v[0])?
        .add_row(&v[1])?
        .relu()?
        .matmul(&v[2])?
        .add_row(&v[3])?
        .tanh()
}

pub fn discriminator_forward(d: &Discriminator, x: &Tensor) -> Result<DiscriminatorOutput> {
    check_width("discriminator_forward", x, d.input_width())?;
    let v = d.group.values();
    let h1 = x.matmul(&v[0])?.add_row(&v[1])?.relu()?;
    let features = h1.matmul(&v[2])?.add_row(&v[3])?.relu()?;
    let probs = features.matmul(&v[4])?.add_row(&v[5])?.row_softmax()?;
    Ok(DiscriminatorOutput {
        p_benign: probs.column(0)?,
        features,
    })
}

/// Generator bound to a tape.
pub struct GenVars(Vec<Var>);

/// Discriminator bound to a tape.
pub struct DiscVars(Vec<Var>);

impl GenVars {
    pub fn from_vars(vars: &[Var]) -> Self {
        Self(vars.to_vec())
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    pub fn forward(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let v = &self.0;
        let pre = tape.linear(z, v[0], v[1])?;
        let h = tape.relu(pre)?;
        let out = tape.linear(h, v[2], v[3])?;
        tape.tanh(out)
    }
}

impl DiscVars {
    pub fn from_vars(vars: &[Var]) -> Self {
        Self(vars.to_vec())
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Returns `(p_benign, features)`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let v = &self.0;
        let a1 = tape.linear(x, v[0], v[1])?;
        let h1 = tape.relu(a1)?;
        let a2 = tape.linear(h1, v[2], v[3])?;
        let features = tape.relu(a2)?;
        let logits = tape.linear(features, v[4], v[5])?;
        let probs = tape.row_softmax(logits)?;
        let p = tape.column(probs, 0)?;
        Ok((p, features))
    }
}

fn nonempty(tape: &Tape, v: Var, what: &'static str) -> Result<()> {
    if tape.value(v).rows() == 0 {
        return Err(OcanError::Empty(what));
    }
    Ok(())
}

/// `log(clamp(p))`.
pub fn safe_log(tape: &mut Tape, p: Var) -> Result<Var> {
    let c = tape.clamp(p, PROB_FLOOR, 1.0 - PROB_FLOOR)?;
    tape.log(c)
}

fn mean_log(tape: &mut Tape, p: Var) -> Result<Var> {
    let l = safe_log(tape, p)?;
    tape.mean(l)
}

fn mean_log_one_minus(tape: &mut Tape, p: Var) -> Result<Var> {
    let q = tape.one_minus(p)?;
    mean_log(tape, q)
}

/// Regular discriminator objective (maximized):
/// `mean log D(v) + mean log(1 - D(G(z)))`.
pub fn regular_d_objective(tape: &mut Tape, p_real: Var, p_fake: Var) -> Result<Var> {
    nonempty(tape, p_real, "real batch")?;
    nonempty(tape, p_fake, "generated batch")?;
    let a = mean_log(tape, p_real)?;
    let b = mean_log_one_minus(tape, p_fake)?;
    tape.add(a, b)
}

/// Regular generator objective (minimized): `mean log(1 - D(G(z)))`.
pub fn regular_g_objective(tape: &mut Tape, p_fake: Var) -> Result<Var> {
    nonempty(tape, p_fake, "generated batch")?;
    mean_log_one_minus(tape, p_fake)
}

/// Complementary discriminator objective (maximized): the regular objective
/// plus `mean D(v) log D(v)` over real samples.
pub fn ocan_d_objective(tape: &mut Tape, p_real: Var, p_fake: Var) -> Result<Var> {
    let base = regular_d_objective(tape, p_real, p_fake)?;
    let l = safe_log(tape, p_real)?;
    let dl = tape.mul(p_real, l)?;
    let ent = tape.mean(dl)?;
    tape.add(base, ent)
}

/// Mean squared cosine similarity over ordered pairs of distinct rows.
pub fn pull_away(tape: &mut Tape, features: Var) -> Result<Var> {
    let n = tape.value(features).rows();
    if n < 2 {
        return Err(OcanError::InvalidArgument(format!(
            "pull-away term needs at least 2 rows, got {n}"
        )));
    }
    let norms = tape.row_norms(features)?;
    let norms = tape.clamp(norms, NORM_FLOOR, f64::MAX)?;
    let ones = tape.constant(Tensor::filled(n, 1, 1.0)?);
    let inv = tape.div(ones, norms)?;
    let unit = tape.mul_col(features, inv)?;
    let unit_t = tape.transpose(unit)?;
    let cos = tape.matmul(unit, unit_t)?;
    let sq = tape.square(cos)?;
    let off_diag: Vec<f64> = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
        .collect();
    let mask = tape.constant(Tensor::from_vec(n, n, off_diag)?);
    let masked = tape.mul(sq, mask)?;
    let total = tape.sum(masked)?;
    tape.scale(total, 1.0 / (n * (n - 1)) as f64)
}

/// `‖mean f(ṽ) - mean f(v)‖²`.
pub fn feature_matching(tape: &mut Tape, generated: Var, real: Var) -> Result<Var> {
    nonempty(tape, generated, "generated features")?;
    nonempty(tape, real, "real features")?;
    let a = tape.mean_rows(generated)?;
    let b = tape.mean_rows(real)?;
    let d = tape.sub(a, b)?;
    let sq = tape.square(d)?;
    tape.sum(sq)
}

/// `1[p > ε]` per row, computed outside differentiation.
pub fn density_mask(p_proxy: &Tensor, epsilon: f64) -> Result<Tensor> {
    p_proxy.map("density_mask", |p| if p > epsilon { 1.0 } else { 0.0 })
}

/// Complementary generator objective (minimized): pull-away term on
/// generated features, plus the masked mean log proxy density, plus feature
/// matching against real features.
pub fn complementary_g_objective(
    tape: &mut Tape,
    generated_features: Var,
    proxy_p_generated: Var,
    mask: Var,
    real_features: Var,
) -> Result<Var> {
    let pt = pull_away(tape, generated_features)?;
    let logp = safe_log(tape, proxy_p_generated)?;
    let masked = tape.mul(logp, mask)?;
    let density = tape.mean(masked)?;
    let fm = feature_matching(tape, generated_features, real_features)?;
    let s = tape.add(pt, density)?;
    tape.add(s, fm)
}

fn eval_scalar(build: impl FnOnce(&mut Tape) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let v = build(&mut tape)?;
    tape.value(v).item()
}

fn as_column(p: &[f64]) -> Result<Tensor> {
    Tensor::from_vec(p.len(), 1, p.to_vec())
}

/// Regular discriminator objective from probabilities.
pub fn regular_gan_d_loss(p_real: &[f64], p_fake: &[f64]) -> Result<f64> {
    eval_scalar(|t| {
        let a = t.constant(as_column(p_real)?);
        let b = t.constant(as_column(p_fake)?);
        regular_d_objective(t, a, b)
    })
}

pub fn regular_gan_g_loss(p_fake: &[f64]) -> Result<f64> {
    eval_scalar(|t| {
        let b = t.constant(as_column(p_fake)?);
        regular_g_objective(t, b)
    })
}

pub fn ocan_d_loss(p_real: &[f64], p_fake: &[f64]) -> Result<f64> {
    eval_scalar(|t| {
        let a = t.constant(as_column(p_real)?);
        let b = t.constant(as_column(p_fake)?);
        ocan_d_objective(t, a, b)
    })
}

pub fn pull_away_term(features: &Tensor) -> Result<f64> {
    eval_scalar(|t| {
        let f = t.constant(features.clone());
        pull_away(t, f)
    })
}

pub fn feature_matching_loss(generated: &Tensor, real: &Tensor) -> Result<f64> {
    eval_scalar(|t| {
        let g = t.constant(generated.clone());
        let r = t.constant(real.clone());
        feature_matching(t, g, r)
    })
}

/// Complementary generator objective from precomputed quantities.
pub fn complementary_g_loss_from_parts(
    generated_features: &Tensor,
    proxy_p_generated: &[f64],
    epsilon: f64,
    real_features: &Tensor,
) -> Result<f64> {
    eval_scalar(|t| {
        let p = as_column(proxy_p_generated)?;
        let mask = t.constant(density_mask(&p, epsilon)?);
        let pv = t.constant(p);
        let g = t.constant(generated_features.clone());
        let r = t.constant(real_features.clone());
        complementary_g_objective(t, g, pv, mask, r)
    })
}

/// Frozen regular-GAN discriminator plus density threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProxy {
    pub discriminator: Discriminator,
    pub epsilon: f64,
}

/// Value at index `ceil(N/k) - 1` of the ascending sort.
pub fn quantile_threshold(probs: &[f64], k: usize) -> Result<f64> {
    if probs.is_empty() {
        return Err(OcanError::Empty("probabilities for quantile threshold"));
    }
    if k < 2 {
        return Err(OcanError::InvalidArgument(format!(
            "quantile k must be at least 2, got {k}"
        )));
    }
    let mut sorted = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = probs.len().div_ceil(k) - 1;
    Ok(sorted[idx])
}

/// `ε` from the proxy's benign probabilities on real benign representations.
pub fn fit_density_threshold(proxy: &Discriminator, benign: &Tensor, k: usize) -> Result<f64> {
    if benign.rows() == 0 {
        return Err(OcanError::Empty("benign representations"));
    }
    let out = discriminator_forward(proxy, benign)?;
    quantile_threshold(out.p_benign.data(), k)
}

impl DensityProxy {
    pub fn fit(discriminator: Discriminator, benign: &Tensor, k: usize) -> Result<Self> {
        let epsilon = fit_density_threshold(&discriminator, benign, k)?;
        Ok(Self {
            discriminator,
            epsilon,
        })
    }
}

/// Per-epoch training summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean discriminator objective (the maximized quantity).
    pub d_objective: f64,
    /// Mean generator objective (the minimized quantity).
    pub g_objective: f64,
    pub mean_p_real: f64,
    pub mean_p_generated: f64,
    /// Feature-matching distance between the last generated and real batch.
    pub feature_distance: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedGan {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub history: Vec<EpochStats>,
}

#[derive(Clone, Copy)]
enum Mode<'a> {
    Regular,
    Complementary(&'a DensityProxy),
}

// Stream ids keep the two GANs' random draws independent under one seed.
const REGULAR_STREAMS: u64 = 10;
const COMPLEMENTARY_STREAMS: u64 = 20;

fn diverged(epoch: usize, what: &'static str) -> impl Fn(OcanError) -> OcanError {
    move |e| match e {
        OcanError::NonFinite { .. } | OcanError::LogDomain { .. } => {
            OcanError::Diverged { epoch, what }
        }
        other => other,
    }
}

fn train(
    real: &Tensor,
    config: &GanConfig,
    mode: Mode<'_>,
    on_epoch: &mut dyn FnMut(usize, &Generator, &Discriminator) -> Result<()>,
) -> Result<TrainedGan> {
    config.validate()?;
    if real.rows() == 0 {
        return Err(OcanError::Empty("benign representations"));
    }
    let width = real.cols();
    if let Mode::Complementary(proxy) = mode {
        if proxy.discriminator.input_width() != width {
            return Err(OcanError::ShapeMismatch {
                op: "density proxy",
                lhs: (1, proxy.discriminator.input_width()),
                rhs: (1, width),
            });
        }
    }
    let base = match mode {
        Mode::Regular => REGULAR_STREAMS,
        Mode::Complementary(_) => COMPLEMENTARY_STREAMS,
    };
    let mut init_rng = SeededRng::derive(config.seed, base + 1);
    let mut shuffle_rng = SeededRng::derive(config.seed, base + 2);
    let mut noise_rng = SeededRng::derive(config.seed, base + 3);

    let mut generator = Generator::from_config(config, width, &mut init_rng)?;
    let mut discriminator = Discriminator::from_config(config, width, &mut init_rng)?;
    let mut adam_g = AdamState::new(&generator.group, config.adam);
    let mut adam_d = AdamState::new(&discriminator.group, config.adam);

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut d_sum = 0.0;
        let mut g_sum = 0.0;
        let mut p_real_sum = 0.0;
        let mut p_gen_sum = 0.0;
        let mut batches = 0usize;
        let mut feature_distance = 0.0;
        for batch in minibatches(real.rows(), config.batch_size, &mut shuffle_rng) {
            let real_batch = real.gather_rows(&batch)?;
            let m = real_batch.rows();

            // Discriminator ascent on a fixed generated batch.
            let z = sample_noise(&mut noise_rng, m, config.noise_dim)?;
            let fake = generator_forward(&generator, &z)?;
            discriminator.group.zero_grad();
            let mut tape = Tape::new();
            let dv = discriminator.bind(&mut tape);
            let rv = tape.constant(real_batch.clone());
            let fv = tape.constant(fake);
            let (p_real, _) = dv.forward(&mut tape, rv)?;
            let (p_fake, _) = dv.forward(&mut tape, fv)?;
            let objective = match mode {
                Mode::Regular => regular_d_objective(&mut tape, p_real, p_fake),
                Mode::Complementary(_) => ocan_d_objective(&mut tape, p_real, p_fake),
            }
            .map_err(diverged(epoch, "discriminator objective"))?;
            d_sum += tape.value(objective).item()?;
            p_real_sum += tape.value(p_real).mean()?;
            p_gen_sum += tape.value(p_fake).mean()?;
            let loss = tape.neg(objective)?;
            discriminator.group.backward(&tape, loss, dv.vars())?;
            adam_d
                .step(&mut discriminator.group)
                .map_err(diverged(epoch, "discriminator parameters"))?;

            // Generator descent against the updated, frozen discriminator.
            let z = sample_noise(&mut noise_rng, m, config.noise_dim)?;
            generator.group.zero_grad();
            let mut tape = Tape::new();
            let gv = generator.bind(&mut tape);
            let zv = tape.constant(z);
            let fake = gv.forward(&mut tape, zv)?;
            let dv = discriminator.bind_frozen(&mut tape);
            let (p_fake, f_fake) = dv.forward(&mut tape, fake)?;
            let rv = tape.constant(real_batch);
            let (_, f_real) = dv.forward(&mut tape, rv)?;
            let objective = match mode {
                Mode::Regular => regular_g_objective(&mut tape, p_fake),
                Mode::Complementary(proxy) => {
                    let pv = proxy.discriminator.bind_frozen(&mut tape);
                    let (p_proxy, _) = pv.forward(&mut tape, fake)?;
                    let mask = tape.constant(density_mask(tape.value(p_proxy), proxy.epsilon)?);
                    if m < 2 {
                        // The pull-away term needs two samples; skip a
                        // trailing singleton batch.
                        continue;
                    }
                    complementary_g_objective(&mut tape, f_fake, p_proxy, mask, f_real)
                }
            }
            .map_err(diverged(epoch, "generator objective"))?;
            g_sum += tape.value(objective).item()?;
            let fm = feature_matching(&mut tape, f_fake, f_real)?;
            feature_distance = tape.value(fm).item()?;
            generator.group.backward(&tape, objective, gv.vars())?;
            adam_g
                .step(&mut generator.group)
                .map_err(diverged(epoch, "generator parameters"))?;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let stats = EpochStats {
            epoch,
            d_objective: d_sum / n,
            g_objective: g_sum / n,
            mean_p_real: p_real_sum / n,
            mean_p_generated: p_gen_sum / n,
            feature_distance,
        };
        if !(stats.d_objective.is_finite() && stats.g_objective.is_finite()) {
            return Err(OcanError::Diverged {
                epoch,
                what: "epoch objectives",
            });
        }
        history.push(stats);
        on_epoch(epoch, &generator, &discriminator)?;
    }
    Ok(TrainedGan {
        generator,
        discriminator,
        history,
    })
}

/// Alternating regular GAN training (one discriminator step, then one
/// generator step per minibatch).
pub fn train_regular_gan(real: &Tensor, config: &GanConfig) -> Result<TrainedGan> {
    train(real, config, Mode::Regular, &mut |_, _, _| Ok(()))
}

pub fn train_regular_gan_with(
    real: &Tensor,
    config: &GanConfig,
    on_epoch: &mut dyn FnMut(usize, &Generator, &Discriminator) -> Result<()>,
) -> Result<TrainedGan> {
    train(real, config, Mode::Regular, on_epoch)
}

/// Complementary GAN training against a fitted, frozen density proxy.
pub fn train_complementary_gan(
    real: &Tensor,
    proxy: &DensityProxy,
    config: &GanConfig,
) -> Result<TrainedGan> {
    train(real, config, Mode::Complementary(proxy), &mut |_, _, _| {
        Ok(())
    })
}

/// [`train_complementary_gan`] with a callback after every epoch.
pub fn train_complementary_gan_with(
    real: &Tensor,
    proxy: &DensityProxy,
    config: &GanConfig,
    on_epoch: &mut dyn FnMut(usize, &Generator, &Discriminator) -> Result<()>,
) -> Result<TrainedGan> {
    train(real, config, Mode::Complementary(proxy), on_epoch)
}

/// Complementary generator objective for a generator bound on `tape`,
/// against frozen discriminator and proxy, with noise and real batch fixed.
pub fn complementary_g_loss_on_tape(
    tape: &mut Tape,
    generator: &GenVars,
    discriminator: &Discriminator,
    proxy: &DensityProxy,
    z: &Tensor,
    real: &Tensor,
) -> Result<Var> {
    let zv = tape.constant(z.clone());
    let fake = generator.forward(tape, zv)?;
    let dv = discriminator.bind_frozen(tape);
    let (_, f_fake) = dv.forward(tape, fake)?;
    let rv = tape.constant(real.clone());
    let (_, f_real) = dv.forward(tape, rv)?;
    let pv = proxy.discriminator.bind_frozen(tape);
    let (p_proxy, _) = pv.forward(tape, fake)?;
    let mask = tape.constant(density_mask(tape.value(p_proxy), proxy.epsilon)?);
    complementary_g_objective(tape, f_fake, p_proxy, mask, f_real)
}

/// Mean benign probability the discriminator assigns to a batch.
pub fn mean_p_benign(d: &Discriminator, x: &Tensor) -> Result<f64> {
    discriminator_forward(d, x)?.p_benign.mean()
}
