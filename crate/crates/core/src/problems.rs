//! Desk-scale test problems with analytic gradients, seeded minibatch
//! streams, block layouts, and finite-difference oracles.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::BlockLayout;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid problem spec: {0}")]
    Invalid(String),
    #[error("finite-difference step is zero at coordinate {index}")]
    ZeroStep { index: usize },
    #[error("batch size must be positive")]
    ZeroBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Holdout,
}

/// A minibatch: sample indices into a split, plus an optional noise seed for
/// problems whose stochasticity is additive gradient noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub split: Split,
    pub samples: Vec<usize>,
    pub noise: Option<u64>,
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn layout(&self) -> &BlockLayout;
    /// Training samples; 0 for analytic problems.
    fn n_samples(&self) -> usize;
    fn loss(&self, theta: &[f64], batch: &Batch) -> f64;
    fn grad(&self, theta: &[f64], batch: &Batch) -> Vec<f64>;
    fn initial_point(&self, seed: u64) -> Vec<f64>;

    fn dimension(&self) -> usize {
        self.layout().dimension()
    }

    /// The whole training set, without gradient noise.
    fn full_batch(&self) -> Batch {
        Batch {
            split: Split::Train,
            samples: (0..self.n_samples()).collect(),
            noise: None,
        }
    }

    fn holdout_batch(&self) -> Option<Batch> {
        None
    }
}

/// Deterministic minibatch sequence. Batch `k` is a pure function of
/// `(seed, batch_size, k)`: data problems walk a fresh seeded permutation each
/// epoch, analytic problems get a per-batch noise seed.
#[derive(Debug, Clone)]
pub struct BatchStream {
    n_samples: usize,
    batch_size: usize,
    seed: u64,
    epoch: Option<(u64, Vec<usize>)>,
}

impl BatchStream {
    pub fn new(n_samples: usize, seed: u64, batch_size: usize) -> Result<Self, ProblemError> {
        if batch_size == 0 {
            return Err(ProblemError::ZeroBatch);
        }
        Ok(Self {
            n_samples,
            batch_size,
            seed,
            epoch: None,
        })
    }

    pub fn for_problem(
        problem: &dyn Problem,
        seed: u64,
        batch_size: usize,
    ) -> Result<Self, ProblemError> {
        Self::new(problem.n_samples(), seed, batch_size)
    }

    pub fn batches_per_epoch(&self) -> u64 {
        if self.n_samples == 0 {
            1
        } else {
            self.n_samples.div_ceil(self.batch_size.min(self.n_samples)) as u64
        }
    }

    pub fn batch(&mut self, k: u64) -> Batch {
        if self.n_samples == 0 {
            let noise = rng::stream(self.seed, rng::STREAM_NOISE).random::<u64>()
                ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            return Batch {
                split: Split::Train,
                samples: Vec::new(),
                noise: Some(noise),
            };
        }
        let b = self.batch_size.min(self.n_samples);
        let per_epoch = self.batches_per_epoch();
        let (epoch, pos) = (k / per_epoch, (k % per_epoch) as usize);
        if self.epoch.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.n_samples).collect();
            perm.shuffle(&mut rng::stream(self.seed, rng::STREAM_SHUFFLE + epoch));
            self.epoch = Some((epoch, perm));
        }
        let perm = &self.epoch.as_ref().expect("epoch permutation").1;
        let start = pos * b;
        let end = (start + b).min(self.n_samples);
        Batch {
            split: Split::Train,
            samples: perm[start..end].to_vec(),
            noise: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Quadratic

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub h: Vec<f64>,
    pub noise_sigma: f64,
}

impl QuadraticSpec {
    /// Curvatures drawn uniformly from `[lo, hi]`.
    pub fn random(dimension: usize, lo: f64, hi: f64, seed: u64, noise_sigma: f64) -> Self {
        let mut r = rng::stream(seed, rng::STREAM_DATA);
        let h = (0..dimension).map(|_| r.random_range(lo..=hi)).collect();
        Self { h, noise_sigma }
    }
}

/// `½ Σ h_i θ_i²` with optional additive Gaussian gradient noise.
#[derive(Debug, Clone)]
pub struct Quadratic {
    spec: QuadraticSpec,
    layout: BlockLayout,
}

pub fn make_quadratic(spec: QuadraticSpec) -> Result<Quadratic, ProblemError> {
    if spec.h.is_empty() {
        return Err(ProblemError::Invalid(
            "quadratic needs at least one curvature".into(),
        ));
    }
    if !spec.h.iter().all(|h| h.is_finite() && *h > 0.0) {
        return Err(ProblemError::Invalid(
            "curvatures must be finite and positive".into(),
        ));
    }
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(ProblemError::Invalid(
            "noise_sigma must be finite and >= 0".into(),
        ));
    }
    let layout = BlockLayout::single(spec.h.len());
    Ok(Quadratic { spec, layout })
}

impl Quadratic {
    pub fn curvatures(&self) -> &[f64] {
        &self.spec.h
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }
    fn n_samples(&self) -> usize {
        0
    }
    fn loss(&self, theta: &[f64], _batch: &Batch) -> f64 {
        0.5 * self
            .spec
            .h
            .iter()
            .zip(theta)
            .map(|(h, t)| h * t * t)
            .sum::<f64>()
    }
    fn grad(&self, theta: &[f64], batch: &Batch) -> Vec<f64> {
        let mut g: Vec<f64> = self.spec.h.iter().zip(theta).map(|(h, t)| h * t).collect();
        if let (Some(seed), true) = (batch.noise, self.spec.noise_sigma > 0.0) {
            let mut r = rng::stream(seed, rng::STREAM_NOISE);
            for gi in &mut g {
                let z: f64 = r.sample(StandardNormal);
                *gi += self.spec.noise_sigma * z;
            }
        }
        g
    }
    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, rng::STREAM_INIT);
        (0..self.spec.h.len())
            .map(|_| r.random_range(-1.0..=1.0))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Rosenbrock

/// `(1 - x)² + 100 (y - x²)²`
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    layout: BlockLayout,
}

pub fn make_rosenbrock() -> Rosenbrock {
    Rosenbrock {
        layout: BlockLayout::single(2),
    }
}

impl Problem for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }
    fn n_samples(&self) -> usize {
        0
    }
    fn loss(&self, t: &[f64], _batch: &Batch) -> f64 {
        let (x, y) = (t[0], t[1]);
        (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
    }
    fn grad(&self, t: &[f64], _batch: &Batch) -> Vec<f64> {
        let (x, y) = (t[0], t[1]);
        let r = y - x * x;
        vec![-2.0 * (1.0 - x) - 400.0 * x * r, 200.0 * r]
    }
    fn initial_point(&self, _seed: u64) -> Vec<f64> {
        vec![-1.2, 1.0]
    }
}

// ---------------------------------------------------------------------------
// Logistic regression

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub separation_margin: f64,
    pub seed: u64,
}

impl Default for LogRegSpec {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_features: 20,
            separation_margin: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

/// Binary logistic regression on linearly separable synthetic data, with
/// parameters `[w (n_features), b]`.
#[derive(Debug, Clone)]
pub struct LogReg {
    train: Dataset,
    holdout: Dataset,
    planted: Vec<f64>,
    layout: BlockLayout,
}

fn separable_samples(planted: &[f64], n: usize, margin: f64, r: &mut impl Rng) -> Dataset {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while x.len() < n {
        let xi: Vec<f64> = (0..planted.len())
            .map(|_| r.sample(StandardNormal))
            .collect();
        let z: f64 = planted.iter().zip(&xi).map(|(a, b)| a * b).sum();
        if z.abs() < margin {
            continue;
        }
        y.push(z.signum());
        x.push(xi);
    }
    Dataset { x, y }
}

pub fn make_logreg(spec: &LogRegSpec) -> Result<LogReg, ProblemError> {
    if spec.n_samples == 0 || spec.n_features == 0 {
        return Err(ProblemError::Invalid(
            "logreg needs samples and features".into(),
        ));
    }
    // acceptance rate of |N(0,1)| >= margin must stay reasonable
    if !(spec.separation_margin > 0.0 && spec.separation_margin <= 3.0) {
        return Err(ProblemError::Invalid(
            "separation_margin must lie in (0, 3]".into(),
        ));
    }
    let mut r = rng::stream(spec.seed, rng::STREAM_DATA);
    let mut planted: Vec<f64> = (0..spec.n_features)
        .map(|_| r.sample(StandardNormal))
        .collect();
    let norm = planted.iter().map(|w| w * w).sum::<f64>().sqrt();
    planted.iter_mut().for_each(|w| *w /= norm);
    let train = separable_samples(&planted, spec.n_samples, spec.separation_margin, &mut r);
    let n_holdout = (spec.n_samples / 4).max(1);
    let mut rh = rng::stream(spec.seed, rng::STREAM_HOLDOUT);
    let holdout = separable_samples(&planted, n_holdout, spec.separation_margin, &mut rh);
    Ok(LogReg {
        train,
        holdout,
        planted,
        layout: BlockLayout::from_sizes(&[spec.n_features, 1]).expect("nonempty blocks"),
    })
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogReg {
    pub fn planted_direction(&self) -> &[f64] {
        &self.planted
    }

    fn data(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Holdout => &self.holdout,
        }
    }

    fn margin(&self, theta: &[f64], x: &[f64]) -> f64 {
        let d = x.len();
        theta[..d].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + theta[d]
    }
}

impl Problem for LogReg {
    fn name(&self) -> &str {
        "logreg"
    }
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }
    fn n_samples(&self) -> usize {
        self.train.y.len()
    }
    fn loss(&self, theta: &[f64], batch: &Batch) -> f64 {
        let data = self.data(batch.split);
        let total: f64 = batch
            .samples
            .iter()
            .map(|&i| softplus(-data.y[i] * self.margin(theta, &data.x[i])))
            .sum();
        total / batch.samples.len().max(1) as f64
    }
    fn grad(&self, theta: &[f64], batch: &Batch) -> Vec<f64> {
        let data = self.data(batch.split);
        let d = theta.len() - 1;
        let mut g = vec![0.0; theta.len()];
        for &i in &batch.samples {
            let (x, y) = (&data.x[i], data.y[i]);
            // d/dm softplus(-y m) = -y σ(-y m)
            let c = -y * sigmoid(-y * self.margin(theta, x));
            for (gj, xj) in g[..d].iter_mut().zip(x) {
                *gj += c * xj;
            }
            g[d] += c;
        }
        let n = batch.samples.len().max(1) as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }
    fn initial_point(&self, _seed: u64) -> Vec<f64> {
        vec![0.0; self.dimension()]
    }
    fn holdout_batch(&self) -> Option<Batch> {
        Some(Batch {
            split: Split::Holdout,
            samples: (0..self.holdout.y.len()).collect(),
            noise: None,
        })
    }
}

// ---------------------------------------------------------------------------
// MLP

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub init_std: f64,
    pub n_samples: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            layer_sizes: vec![4, 8, 1],
            activation: Activation::Tanh,
            seed: 0,
            init_std: 0.05,
            n_samples: 256,
        }
    }
}

/// Fully connected tanh network regressing onto a seeded teacher network of
/// the same shape, with loss `½ mean ‖out - target‖²`. Parameters are laid out
/// as `W_0, b_0, W_1, b_1, ...` with `W_l` row-major `(out, in)`, one block each.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    init_std: f64,
    train: Dataset2,
    holdout: Dataset2,
    layout: BlockLayout,
}

#[derive(Debug, Clone)]
struct Dataset2 {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

fn param_sizes(sizes: &[usize]) -> Vec<usize> {
    sizes.windows(2).flat_map(|w| [w[0] * w[1], w[1]]).collect()
}

pub fn make_mlp(spec: &MlpSpec) -> Result<Mlp, ProblemError> {
    if spec.layer_sizes.len() < 2 || spec.layer_sizes.contains(&0) {
        return Err(ProblemError::Invalid(
            "mlp needs at least two positive layer sizes".into(),
        ));
    }
    if !(spec.init_std.is_finite() && spec.init_std > 0.0) || spec.n_samples == 0 {
        return Err(ProblemError::Invalid(
            "mlp needs init_std > 0 and samples".into(),
        ));
    }
    let sizes = spec.layer_sizes.clone();
    let layout = BlockLayout::from_sizes(&param_sizes(&sizes)).expect("positive sizes");
    let mut r = rng::stream(spec.seed, rng::STREAM_DATA);
    // teacher weights with unit-variance preactivations
    let mut teacher = Vec::with_capacity(layout.dimension());
    for w in sizes.windows(2) {
        let scale = 1.0 / (w[0] as f64).sqrt();
        teacher.extend((0..w[0] * w[1]).map(|_| scale * r.sample::<f64, _>(StandardNormal)));
        teacher.extend((0..w[1]).map(|_| 0.1 * r.sample::<f64, _>(StandardNormal)));
    }
    let mut net = Mlp {
        sizes,
        init_std: spec.init_std,
        train: Dataset2 {
            x: vec![],
            y: vec![],
        },
        holdout: Dataset2 {
            x: vec![],
            y: vec![],
        },
        layout,
    };
    let draw = |n: usize, r: &mut rand_chacha::ChaCha8Rng, net: &Mlp| {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..net.sizes[0])
                    .map(|_| r.sample(StandardNormal))
                    .collect()
            })
            .collect();
        let y = x
            .iter()
            .map(|xi| net.forward(&teacher, xi).pop().expect("output layer"))
            .collect();
        Dataset2 { x, y }
    };
    net.train = draw(spec.n_samples, &mut r, &net);
    let mut rh = rng::stream(spec.seed, rng::STREAM_HOLDOUT);
    net.holdout = draw((spec.n_samples / 4).max(1), &mut rh, &net);
    Ok(net)
}

impl Mlp {
    fn is_output(&self, layer: usize) -> bool {
        layer + 2 == self.sizes.len()
    }

    /// Activations of every layer, input first.
    fn forward(&self, theta: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &theta[off..off + n_in * n_out];
            let bias = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = acts.last().expect("input layer");
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let z = bias[o]
                        + weights[o * n_in..(o + 1) * n_in]
                            .iter()
                            .zip(prev)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if self.is_output(l) {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    fn data(&self, split: Split) -> &Dataset2 {
        match split {
            Split::Train => &self.train,
            Split::Holdout => &self.holdout,
        }
    }
}

impl Problem for Mlp {
    fn name(&self) -> &str {
        "mlp"
    }
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }
    fn n_samples(&self) -> usize {
        self.train.x.len()
    }
    fn loss(&self, theta: &[f64], batch: &Batch) -> f64 {
        let data = self.data(batch.split);
        let total: f64 = batch
            .samples
            .iter()
            .map(|&i| {
                let out = self.forward(theta, &data.x[i]).pop().expect("output layer");
                0.5 * out
                    .iter()
                    .zip(&data.y[i])
                    .map(|(o, t)| (o - t).powi(2))
                    .sum::<f64>()
            })
            .sum();
        total / batch.samples.len().max(1) as f64
    }
    fn grad(&self, theta: &[f64], batch: &Batch) -> Vec<f64> {
        let data = self.data(batch.split);
        let mut g = vec![0.0; theta.len()];
        let offsets: Vec<usize> = param_sizes(&self.sizes)
            .chunks(2)
            .scan(0, |off, c| {
                let start = *off;
                *off += c[0] + c[1];
                Some(start)
            })
            .collect();
        for &i in &batch.samples {
            let acts = self.forward(theta, &data.x[i]);
            let out = acts.last().expect("output layer");
            // dL/dz at the (linear) output
            let mut delta: Vec<f64> = out.iter().zip(&data.y[i]).map(|(o, t)| o - t).collect();
            for l in (0..self.sizes.len() - 1).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                let prev = &acts[l];
                for o in 0..n_out {
                    for j in 0..n_in {
                        g[off + o * n_in + j] += delta[o] * prev[j];
                    }
                    g[off + n_in * n_out + o] += delta[o];
                }
                if l > 0 {
                    let weights = &theta[off..off + n_in * n_out];
                    delta = (0..n_in)
                        .map(|j| {
                            let back: f64 =
                                (0..n_out).map(|o| weights[o * n_in + j] * delta[o]).sum();
                            back * (1.0 - prev[j] * prev[j])
                        })
                        .collect();
                }
            }
        }
        let n = batch.samples.len().max(1) as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }
    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, rng::STREAM_INIT);
        (0..self.dimension())
            .map(|_| self.init_std * r.sample::<f64, _>(StandardNormal))
            .collect()
    }
    fn holdout_batch(&self) -> Option<Batch> {
        Some(Batch {
            split: Split::Holdout,
            samples: (0..self.holdout.x.len()).collect(),
            noise: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Finite-difference oracles

pub const FD_STEP: f64 = 1e-5;

/// Central differences of the loss on a fixed batch.
pub fn fd_gradient(problem: &dyn Problem, theta: &[f64], batch: &Batch, h_step: f64) -> Vec<f64> {
    assert!(h_step > 0.0, "finite-difference step must be positive");
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + h_step;
            let up = problem.loss(&probe, batch);
            probe[i] = theta[i] - h_step;
            let down = problem.loss(&probe, batch);
            probe[i] = theta[i];
            (up - down) / (2.0 * h_step)
        })
        .collect()
}

/// `(∇f(θ + Δ) - ∇f(θ)) ⊘ Δ`
pub fn fd_diag_hessian(
    problem: &dyn Problem,
    theta: &[f64],
    batch: &Batch,
    delta: &[f64],
) -> Result<Vec<f64>, ProblemError> {
    if let Some(index) = delta.iter().position(|&d| d == 0.0) {
        return Err(ProblemError::ZeroStep { index });
    }
    let shifted: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + d).collect();
    let g0 = problem.grad(theta, batch);
    let g1 = problem.grad(&shifted, batch);
    Ok(g1
        .iter()
        .zip(&g0)
        .zip(delta)
        .map(|((a, b), d)| (a - b) / d)
        .collect())
}

/// Per-coordinate relative error `|a - b| / max(|a| + |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

// ---------------------------------------------------------------------------
// Tagged problem configuration

fn default_dimension() -> usize {
    20
}
fn default_h_min() -> f64 {
    0.5
}
fn default_h_max() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Explicit curvatures `h`, or `dimension` curvatures drawn from `[h_min, h_max]`.
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<Vec<f64>>,
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default = "default_h_min")]
        h_min: f64,
        #[serde(default = "default_h_max")]
        h_max: f64,
        #[serde(default)]
        curvature_seed: u64,
        #[serde(default)]
        noise_sigma: f64,
    },
    Rosenbrock,
    Logreg(LogRegSpec),
    Mlp(MlpSpec),
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Quadratic {
            h: None,
            dimension: default_dimension(),
            h_min: default_h_min(),
            h_max: default_h_max(),
            curvature_seed: 0,
            noise_sigma: 0.0,
        }
    }
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Quadratic { .. } => "quadratic",
            ProblemSpec::Rosenbrock => "rosenbrock",
            ProblemSpec::Logreg(_) => "logreg",
            ProblemSpec::Mlp(_) => "mlp",
        }
    }

    /// The default spec of the named problem.
    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "quadratic" => Self::default(),
            "rosenbrock" => ProblemSpec::Rosenbrock,
            "logreg" => ProblemSpec::Logreg(LogRegSpec::default()),
            "mlp" => ProblemSpec::Mlp(MlpSpec::default()),
            _ => return None,
        })
    }

    pub fn build(&self) -> Result<Box<dyn Problem>, ProblemError> {
        Ok(match self {
            ProblemSpec::Quadratic {
                h,
                dimension,
                h_min,
                h_max,
                curvature_seed,
                noise_sigma,
            } => {
                let spec = match h {
                    Some(h) => QuadraticSpec {
                        h: h.clone(),
                        noise_sigma: *noise_sigma,
                    },
                    None => {
                        if !(*h_min > 0.0 && h_min <= h_max && h_max.is_finite()) {
                            return Err(ProblemError::Invalid("need 0 < h_min <= h_max".into()));
                        }
                        QuadraticSpec::random(
                            *dimension,
                            *h_min,
                            *h_max,
                            *curvature_seed,
                            *noise_sigma,
                        )
                    }
                };
                Box::new(make_quadratic(spec)?)
            }
            ProblemSpec::Rosenbrock => Box::new(make_rosenbrock()),
            ProblemSpec::Logreg(s) => Box::new(make_logreg(s)?),
            ProblemSpec::Mlp(s) => Box::new(make_mlp(s)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(h: Vec<f64>, sigma: f64) -> Quadratic {
        make_quadratic(QuadraticSpec {
            h,
            noise_sigma: sigma,
        })
        .unwrap()
    }

    #[test]
    fn quadratic_examples() {
        let q = quad(vec![2.0], 0.0);
        let b = q.full_batch();
        assert_eq!(q.grad(&[1.0], &b), vec![2.0]);
        assert_eq!(q.grad(&[0.0], &b), vec![0.0]);
        assert_eq!(q.loss(&[0.0], &b), 0.0);
        assert!(make_quadratic(QuadraticSpec {
            h: vec![1.0, 0.0],
            noise_sigma: 0.0
        })
        .is_err());
    }

    #[test]
    fn noisy_quadratic_mean_gradient() {
        let q = quad(vec![2.0, 0.5], 1.5);
        let theta = [0.7, -1.3];
        let mut stream = BatchStream::for_problem(&q, 11, 1).unwrap();
        let n = 10_000;
        let mut sums = [0.0; 2];
        for k in 0..n {
            let g = q.grad(&theta, &stream.batch(k));
            sums[0] += g[0];
            sums[1] += g[1];
        }
        let se = 1.5 / (n as f64).sqrt();
        assert!((sums[0] / n as f64 - 1.4).abs() < 3.0 * se);
        assert!((sums[1] / n as f64 + 0.65).abs() < 3.0 * se);
    }

    #[test]
    fn rosenbrock_examples() {
        let r = make_rosenbrock();
        let b = r.full_batch();
        assert_eq!(r.loss(&[1.0, 1.0], &b), 0.0);
        assert_eq!(r.grad(&[1.0, 1.0], &b), vec![0.0, 0.0]);
        assert_eq!(r.loss(&[0.0, 0.0], &b), 1.0);
        assert_eq!(r.grad(&[0.0, 0.0], &b), vec![-2.0, 0.0]);
        assert!((r.loss(&[-1.2, 1.0], &b) - 24.2).abs() < 1e-12);
    }

    #[test]
    fn logreg_at_origin_is_ln2() {
        let p = make_logreg(&LogRegSpec {
            n_samples: 50,
            n_features: 3,
            ..Default::default()
        })
        .unwrap();
        let theta = vec![0.0; 4];
        assert!((p.loss(&theta, &p.full_batch()) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(p.layout().blocks(), &[0..3, 3..4]);
    }

    #[test]
    fn logreg_data_respects_margin() {
        let spec = LogRegSpec {
            n_samples: 200,
            n_features: 5,
            separation_margin: 0.5,
            seed: 3,
        };
        let p = make_logreg(&spec).unwrap();
        for (x, y) in p
            .train
            .x
            .iter()
            .zip(&p.train.y)
            .chain(p.holdout.x.iter().zip(&p.holdout.y))
        {
            let z: f64 = p.planted.iter().zip(x).map(|(a, b)| a * b).sum();
            assert!(z * y >= 0.5);
        }
    }

    #[test]
    fn fd_gradient_examples() {
        let q = quad(vec![2.0], 0.0);
        let g = fd_gradient(&q, &[1.0], &q.full_batch(), FD_STEP);
        assert!((g[0] - 2.0).abs() < 1e-8);
        let r = make_rosenbrock();
        let g = fd_gradient(&r, &[0.0, 0.0], &r.full_batch(), FD_STEP);
        assert!((g[0] + 2.0).abs() < 1e-8 && g[1].abs() < 1e-8);
        let g = fd_gradient(&r, &[1.0, 1.0], &r.full_batch(), FD_STEP);
        assert!(g.iter().all(|x| x.abs() < 1e-7));
    }

    #[test]
    fn fd_diag_hessian_examples() {
        let q = quad(vec![3.0, 0.25], 0.0);
        let h = fd_diag_hessian(&q, &[0.3, -2.0], &q.full_batch(), &[0.5, -1e-3]).unwrap();
        assert!((h[0] - 3.0).abs() < 1e-12 && (h[1] - 0.25).abs() < 1e-12);

        // a joint step also picks up the off-diagonal terms: H·1 ⊘ 1 = (802 - 400, -400 + 200)
        let r = make_rosenbrock();
        let h = fd_diag_hessian(&r, &[1.0, 1.0], &r.full_batch(), &[1e-6, 1e-6]).unwrap();
        assert!(
            (h[0] - 402.0).abs() < 1e-2 && (h[1] + 200.0).abs() < 1e-2,
            "{h:?}"
        );

        assert_eq!(
            fd_diag_hessian(&q, &[0.0, 0.0], &q.full_batch(), &[1.0, 0.0]),
            Err(ProblemError::ZeroStep { index: 1 })
        );
    }

    #[test]
    fn batch_stream_reproducible_and_covers_epochs() {
        let mut a = BatchStream::new(10, 5, 4).unwrap();
        let mut b = BatchStream::new(10, 5, 4).unwrap();
        let first: Vec<Batch> = (0..6).map(|k| a.batch(k)).collect();
        let again: Vec<Batch> = (0..6).map(|k| b.batch(k)).collect();
        assert_eq!(first, again);
        assert_eq!(a.batches_per_epoch(), 3);
        let mut seen: Vec<usize> = first[..3].iter().flat_map(|b| b.samples.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        // random access agrees with sequential access
        let mut c = BatchStream::new(10, 5, 4).unwrap();
        assert_eq!(c.batch(4), first[4]);
        assert_eq!(c.batch(1), first[1]);
        assert!(BatchStream::new(10, 5, 0).is_err());
    }

    #[test]
    fn mlp_layout_has_one_block_per_tensor() {
        let p = make_mlp(&MlpSpec {
            layer_sizes: vec![4, 2, 1],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(p.layout().blocks(), &[0..8, 8..10, 10..12, 12..13]);
        assert_eq!(p.initial_point(1).len(), 13);
    }

    #[test]
    fn spec_round_trips_through_toml() {
        for name in ["quadratic", "rosenbrock", "logreg", "mlp"] {
            let spec = ProblemSpec::by_name(name).unwrap();
            let text = toml::to_string(&spec).unwrap();
            let back: ProblemSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.build().unwrap().name(), name);
        }
    }
}
