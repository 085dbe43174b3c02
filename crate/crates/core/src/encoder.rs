//! Stacked denoising sparse autoencoder.
//!
//! The encoder maps an `R²`-dimensional MAD vector through hidden layers
//! (default `[500, 64, 21]`) to a 7-unit code; a mirrored decoder with untied
//! weights maps the code back to the input space. Every layer applies
//! `arctan(W a + b)`, so codes live in `(−π/2, π/2)`.
//!
//! The training objective for a batch of `N` rows is
//!
//! ```text
//! J = 1/N Σ_n ‖x̂_n − x_n‖²  +  λ₂ Σ_i ‖W_i‖_F²  +  β Σ_h Σ_u KL(ρ ‖ ρ̂_hu)
//! ρ̂_hu = mean_n(a_nhu) / π + 1/2
//! ```
//!
//! where `x̂_n` is reconstructed from a corrupted copy of `x_n` and the
//! sparsity sum runs over the encoder hidden layers (not the code, not the
//! decoder).

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::wavelet::Subband;
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 4] = [500, 64, 21, 7];
pub const DEFAULT_RHO: f64 = 0.001;
pub const DEFAULT_LAMBDA2: f64 = 0.00055;
pub const DEFAULT_CORRUPTION: f64 = 0.20;
pub const DEFAULT_SPARSITY_WEIGHT: f64 = 0.1;
pub const DEFAULT_EPOCHS: usize = 2000;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;

const MAGIC: &[u8; 5] = b"SDAE\0";
const FORMAT_VERSION: u32 = 1;

/// How the denoising corruption is applied during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// Zero each input coordinate with probability `corruption_rate`.
    #[default]
    InputMask,
    /// Inverted dropout on the hidden units (code layer excluded).
    UnitDropout,
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input-mask" | "input_mask" => Ok(NoiseMode::InputMask),
            "unit-dropout" | "unit_dropout" => Ok(NoiseMode::UnitDropout),
            other => Err(Error::InvalidArgument(format!(
                "unknown noise mode {other:?} (expected input-mask or unit-dropout)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdaeConfig {
    /// Encoder sizes including the input: `[input, h1, …, code]`.
    pub layer_sizes: Vec<usize>,
    pub rho: f64,
    pub lambda2: f64,
    pub corruption_rate: f64,
    /// β, the weight of the KL sparsity penalty.
    pub sparsity_weight: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub noise_mode: NoiseMode,
}

impl SdaeConfig {
    /// Default architecture `[input, 500, 64, 21, 7]` and hyper-parameters.
    pub fn for_input(input: usize) -> Self {
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(&DEFAULT_HIDDEN);
        Self {
            layer_sizes,
            rho: DEFAULT_RHO,
            lambda2: DEFAULT_LAMBDA2,
            corruption_rate: DEFAULT_CORRUPTION,
            sparsity_weight: DEFAULT_SPARSITY_WEIGHT,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            noise_mode: NoiseMode::InputMask,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            problems.push(format!("layer sizes must be >= 2 positive entries, got {:?}", self.layer_sizes));
        }
        if !(0.0..1.0).contains(&self.corruption_rate) {
            problems.push(format!("corruption rate {} not in [0, 1)", self.corruption_rate));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            problems.push(format!("rho {} not in (0, 1)", self.rho));
        }
        if !(self.lambda2 >= 0.0) {
            problems.push(format!("lambda2 {} must be >= 0", self.lambda2));
        }
        if !(self.sparsity_weight >= 0.0) {
            problems.push(format!("sparsity weight {} must be >= 0", self.sparsity_weight));
        }
        if !(self.learning_rate > 0.0) {
            problems.push(format!("learning rate {} must be > 0", self.learning_rate));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn code_size(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }
}

/// Which objective terms to include; used to check each term separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub reconstruction: bool,
    pub l2: bool,
    pub sparsity: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms {
        reconstruction: true,
        l2: true,
        sparsity: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub l2: f64,
    pub sparsity: f64,
    pub total: f64,
}

/// Encoder weights followed by the mirrored decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SdaeParams {
    pub layer_sizes: Vec<usize>,
    /// `weights[i]` is `out × in`; the first half encodes.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradient with the same layout as [`SdaeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer values of a batch forward pass. `post[0]` is the input.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub pre: Vec<Array2<f64>>,
    pub post: Vec<Array2<f64>>,
}

/// Forward pass of a single input vector.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Output of every layer, encoder then decoder.
    pub activations: Vec<Array1<f64>>,
    pub code: Array1<f64>,
    pub reconstruction: Array1<f64>,
}

fn layer_dims(layer_sizes: &[usize]) -> Vec<usize> {
    let mut dims = layer_sizes.to_vec();
    dims.extend(layer_sizes.iter().rev().skip(1));
    dims
}

impl SdaeParams {
    /// Uniform `±1/√fan_in` weights and zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> Self {
        let dims = layer_dims(layer_sizes);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let dims = layer_dims(layer_sizes);
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: dims.windows(2).map(|p| Array2::zeros((p[1], p[0]))).collect(),
            biases: dims.windows(2).map(|p| Array1::zeros(p[1])).collect(),
        }
    }

    /// Number of encoder layers `K`; the code is the output of layer `K-1`.
    pub fn encoder_depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn code_size(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty layer sizes")
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().flat_map(|w| w.iter()).map(|v| v * v).sum()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_size() {
            return Err(Error::Shape(format!(
                "input has {cols} columns, network expects {}",
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Batch forward pass; `masks[i]`, when present, multiplies layer `i`'s
    /// output.
    pub fn forward_batch(&self, input: ArrayView2<f64>, masks: Option<&[Option<Array2<f64>>]>) -> Result<BatchForward> {
        self.check_input(input.ncols())?;
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut post = Vec::with_capacity(layers + 1);
        post.push(input.to_owned());
        for i in 0..layers {
            let mut z = post[i].dot(&self.weights[i].t());
            z += &self.biases[i];
            let mut a = z.mapv(f64::atan);
            if let Some(Some(m)) = masks.and_then(|m| m.get(i)) {
                a *= m;
            }
            pre.push(z);
            post.push(a);
        }
        Ok(BatchForward { pre, post })
    }

    pub fn forward(&self, input: ArrayView1<f64>) -> Result<Forward> {
        let batch = input.insert_axis(Axis(0));
        let fwd = self.forward_batch(batch, None)?;
        let activations: Vec<Array1<f64>> = fwd.post[1..].iter().map(|a| a.row(0).to_owned()).collect();
        Ok(Forward {
            code: activations[self.encoder_depth() - 1].clone(),
            reconstruction: activations.last().expect("at least one layer").clone(),
            activations,
        })
    }

    /// Bottleneck codes of every row, without corruption.
    pub fn encode(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut a = input.to_owned();
        for i in 0..self.encoder_depth() {
            let mut z = a.dot(&self.weights[i].t());
            z += &self.biases[i];
            a = z.mapv(f64::atan);
        }
        Ok(a)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.iter().chain(b.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: &str| Error::format("SDAE parameter file", "<bytes>", detail);
        let mut cursor = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = cursor.split_at(n);
            cursor = tail;
            Ok(head)
        };
        if take(5)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = u32_at(take(4)?) as usize;
        if count < 2 {
            return Err(bad("fewer than two layer sizes"));
        }
        let mut layer_sizes = Vec::with_capacity(count);
        for _ in 0..count {
            layer_sizes.push(u32_at(take(4)?) as usize);
        }
        let mut params = SdaeParams::zeros(&layer_sizes);
        for (w, b) in params.weights.iter_mut().zip(params.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
            }
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { what, detail, .. } => Error::format(what, path, detail),
            other => other,
        })
    }
}

/// Zeroes each coordinate independently with probability `rate`.
pub fn corrupt(input: ArrayView2<f64>, rate: f64, rng: &mut impl Rng) -> Array2<f64> {
    if rate <= 0.0 {
        return input.to_owned();
    }
    input.mapv(|v| if rng.random::<f64>() < rate { 0.0 } else { v })
}

fn kl(rho: f64, rho_hat: f64) -> f64 {
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

fn mean_activation(a: &Array2<f64>) -> Array1<f64> {
    let n = a.nrows() as f64;
    a.sum_axis(Axis(0))
        .mapv(|s| (s / n / std::f64::consts::PI + 0.5).clamp(1e-12, 1.0 - 1e-12))
}

fn terms_of(params: &SdaeParams, fwd: &BatchForward, target: ArrayView2<f64>, config: &SdaeConfig, terms: LossTerms) -> LossBreakdown {
    let n = target.nrows() as f64;
    let reconstruction = if terms.reconstruction {
        let out = fwd.post.last().expect("output layer");
        Zip::from(out).and(target).fold(0.0, |acc, &o, &t| acc + (o - t) * (o - t)) / n
    } else {
        0.0
    };
    let l2 = if terms.l2 {
        config.lambda2 * params.weight_norm_sq()
    } else {
        0.0
    };
    let sparsity = if terms.sparsity && config.sparsity_weight > 0.0 {
        let depth = params.encoder_depth();
        let sum: f64 = (1..depth)
            .map(|h| mean_activation(&fwd.post[h]).iter().map(|&r| kl(config.rho, r)).sum::<f64>())
            .sum();
        config.sparsity_weight * sum
    } else {
        0.0
    };
    LossBreakdown {
        reconstruction,
        l2,
        sparsity,
        total: reconstruction + l2 + sparsity,
    }
}

fn check_batch(params: &SdaeParams, input: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<()> {
    params.check_input(input.ncols())?;
    if input.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "input {:?} and target {:?} differ",
            input.dim(),
            target.dim()
        )));
    }
    if input.nrows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

fn finite_or_err(loss: LossBreakdown, epoch: usize) -> Result<LossBreakdown> {
    if loss.total.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss {
            epoch,
            detail: format!(
                "reconstruction={}, l2={}, sparsity={}",
                loss.reconstruction, loss.l2, loss.sparsity
            ),
        })
    }
}

/// Objective value for a (possibly corrupted) `input` against clean `target`.
pub fn loss(params: &SdaeParams, input: ArrayView2<f64>, target: ArrayView2<f64>, config: &SdaeConfig) -> Result<LossBreakdown> {
    loss_with(params, input, target, config, LossTerms::ALL, None)
}

pub fn loss_with(
    params: &SdaeParams,
    input: ArrayView2<f64>,
    target: ArrayView2<f64>,
    config: &SdaeConfig,
    terms: LossTerms,
    masks: Option<&[Option<Array2<f64>>]>,
) -> Result<LossBreakdown> {
    check_batch(params, input, target)?;
    let fwd = params.forward_batch(input, masks)?;
    finite_or_err(terms_of(params, &fwd, target, config, terms), 0)
}

/// Analytic gradient of [`loss`].
pub fn grad(params: &SdaeParams, input: ArrayView2<f64>, target: ArrayView2<f64>, config: &SdaeConfig) -> Result<(LossBreakdown, Gradients)> {
    grad_with(params, input, target, config, LossTerms::ALL, None)
}

pub fn grad_with(
    params: &SdaeParams,
    input: ArrayView2<f64>,
    target: ArrayView2<f64>,
    config: &SdaeConfig,
    terms: LossTerms,
    masks: Option<&[Option<Array2<f64>>]>,
) -> Result<(LossBreakdown, Gradients)> {
    check_batch(params, input, target)?;
    let fwd = params.forward_batch(input, masks)?;
    let value = finite_or_err(terms_of(params, &fwd, target, config, terms), 0)?;

    let n = input.nrows() as f64;
    let layers = params.weights.len();
    let depth = params.encoder_depth();
    let mut gw: Vec<Array2<f64>> = Vec::with_capacity(layers);
    let mut gb: Vec<Array1<f64>> = Vec::with_capacity(layers);

    // dJ/d(post[layers])
    let mut delta_a = if terms.reconstruction {
        (&fwd.post[layers] - &target) * (2.0 / n)
    } else {
        Array2::zeros(fwd.post[layers].dim())
    };
    for i in (0..layers).rev() {
        let out = i + 1;
        if terms.sparsity && config.sparsity_weight > 0.0 && out < depth {
            let rho = config.rho;
            let scale = config.sparsity_weight / (std::f64::consts::PI * n);
            let d = mean_activation(&fwd.post[out]).mapv(|r| scale * (-rho / r + (1.0 - rho) / (1.0 - r)));
            delta_a += &d;
        }
        let mut delta_z = delta_a;
        Zip::from(&mut delta_z)
            .and(&fwd.pre[i])
            .for_each(|d, &z| *d /= 1.0 + z * z);
        if let Some(Some(m)) = masks.and_then(|m| m.get(i)) {
            delta_z *= m;
        }
        let mut w_grad = delta_z.t().dot(&fwd.post[i]);
        if terms.l2 && config.lambda2 != 0.0 {
            w_grad.scaled_add(2.0 * config.lambda2, &params.weights[i]);
        }
        gb.push(delta_z.sum_axis(Axis(0)));
        gw.push(w_grad);
        delta_a = if i > 0 {
            delta_z.dot(&params.weights[i])
        } else {
            Array2::zeros((0, 0))
        };
    }
    gw.reverse();
    gb.reverse();
    Ok((
        value,
        Gradients {
            weights: gw,
            biases: gb,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Objective on the corrupted batch used for this epoch's update.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SdaeParams,
    pub trajectory: Vec<EpochLoss>,
}

fn dropout_masks(params: &SdaeParams, rows: usize, rate: f64, rng: &mut impl Rng) -> Vec<Option<Array2<f64>>> {
    let layers = params.weights.len();
    let depth = params.encoder_depth();
    let keep = 1.0 / (1.0 - rate);
    (0..layers)
        .map(|i| {
            // hidden layers only: skip the code (depth-1) and the output
            if i + 1 == depth || i + 1 == layers {
                None
            } else {
                let units = params.weights[i].nrows();
                Some(Array2::from_shape_simple_fn((rows, units), || {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                }))
            }
        })
        .collect()
}

/// Full-batch gradient descent with a fresh corruption draw every epoch.
pub fn train(data: ArrayView2<f64>, config: &SdaeConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 rows, got {}",
            data.nrows()
        )));
    }
    if data.ncols() != config.layer_sizes[0] {
        return Err(Error::Shape(format!(
            "data has {} columns, config expects {}",
            data.ncols(),
            config.layer_sizes[0]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = SdaeParams::init(&config.layer_sizes, &mut rng);
    let mut trajectory = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (input, masks) = match config.noise_mode {
            NoiseMode::InputMask => (corrupt(data, config.corruption_rate, &mut rng), None),
            NoiseMode::UnitDropout => (
                data.to_owned(),
                Some(dropout_masks(&params, data.nrows(), config.corruption_rate, &mut rng)),
            ),
        };
        let (value, g) = grad_with(&params, input.view(), data, config, LossTerms::ALL, masks.as_deref())
            .map_err(|e| match e {
                Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss { epoch, detail },
                other => other,
            })?;
        trajectory.push(EpochLoss {
            epoch,
            loss: value.total,
        });
        for (w, gw) in params.weights.iter_mut().zip(&g.weights) {
            w.scaled_add(-config.learning_rate, gw);
        }
        for (b, gb) in params.biases.iter_mut().zip(&g.biases) {
            b.scaled_add(-config.learning_rate, gb);
        }
    }
    if params.weights.iter().flat_map(|w| w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
            detail: "parameters diverged".into(),
        });
    }
    Ok(TrainOutcome { params, trajectory })
}

/// `W × code` matrix of bottleneck codes for an embedding matrix.
pub fn encode_features(params: &SdaeParams, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    params.encode(data)
}

/// Codes of several sub-bands placed side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub subbands: Vec<Subband>,
}

/// Horizontal concatenation in the given order.
pub fn concat_features(codes: &[(Subband, Array2<f64>)]) -> Result<FeatureMatrix> {
    let first = codes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no feature matrices to concatenate".into()))?;
    let rows = first.1.nrows();
    if let Some((band, m)) = codes.iter().find(|(_, m)| m.nrows() != rows) {
        return Err(Error::LengthMismatch {
            context: format!("window count of sub-band {band}"),
            expected: rows,
            found: m.nrows(),
        });
    }
    let views: Vec<ArrayView2<f64>> = codes.iter().map(|(_, m)| m.view()).collect();
    Ok(FeatureMatrix {
        data: concatenate(Axis(1), &views).expect("row counts checked"),
        subbands: codes.iter().map(|(b, _)| *b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::FRAC_PI_2;

    fn toy_config(sizes: &[usize]) -> SdaeConfig {
        SdaeConfig {
            layer_sizes: sizes.to_vec(),
            epochs: 50,
            ..SdaeConfig::for_input(sizes[0])
        }
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-0.5..0.5))
    }

    #[test]
    fn zero_net_gives_zero_code() {
        let params = SdaeParams::zeros(&[6, 4, 3]);
        let f = params.forward(array![1.0, -2.0, 3.0, 0.5, 0.0, 9.0].view()).unwrap();
        assert!(f.code.iter().all(|&c| c == 0.0));
        assert_eq!(f.activations.len(), 4);
        assert_eq!(f.reconstruction.len(), 6);
    }

    #[test]
    fn single_unit_arctan() {
        let mut params = SdaeParams::zeros(&[1, 1]);
        params.weights[0][[0, 0]] = 1.0;
        let f = params.forward(array![1.0].view()).unwrap();
        assert!((f.code[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-10);
    }

    #[test]
    fn codes_stay_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = SdaeParams::init(&[8, 6, 3], &mut rng);
        let x = random_batch(10, 8, 2) * 1e6;
        let codes = params.encode(x.view()).unwrap();
        assert!(codes.iter().all(|c| c.abs() < FRAC_PI_2));
        assert!(params.encode(random_batch(2, 7, 0).view()).is_err());
    }

    #[test]
    fn corruption_behaviour() {
        let x = Array2::from_elem((1, 10_000), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(corrupt(x.view(), 0.0, &mut rng), x);
        let a = corrupt(x.view(), 0.2, &mut ChaCha8Rng::seed_from_u64(5));
        let b = corrupt(x.view(), 0.2, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let zeroed = a.iter().filter(|v| **v == 0.0).count() as f64 / 10_000.0;
        assert!((0.18..=0.22).contains(&zeroed), "{zeroed}");
    }

    #[test]
    fn identity_net_has_zero_reconstruction() {
        // arctan layers cannot realise the identity; use the net's own output as target
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = SdaeParams::init(&[5, 3], &mut rng);
        let x = random_batch(4, 5, 6);
        let target = params.forward_batch(x.view(), None).unwrap().post.last().unwrap().clone();
        let cfg = toy_config(&[5, 3]);
        let l = loss(&params, x.view(), target.view(), &cfg).unwrap();
        assert_eq!(l.reconstruction, 0.0);
        assert!((l.total - l.l2 - l.sparsity).abs() < 1e-15);
    }

    #[test]
    fn plain_mse_by_hand() {
        let mut params = SdaeParams::zeros(&[2, 1]);
        params.biases[1] = array![0.5, -0.25];
        // output rows are atan(b) regardless of input
        let cfg = SdaeConfig {
            lambda2: 0.0,
            sparsity_weight: 0.0,
            ..toy_config(&[2, 1])
        };
        let x = array![[1.0, 2.0], [0.0, -1.0]];
        let o = [0.5f64.atan(), (-0.25f64).atan()];
        let expect = ((o[0] - 1.0).powi(2) + (o[1] - 2.0).powi(2) + (o[0] - 0.0).powi(2) + (o[1] + 1.0).powi(2)) / 2.0;
        let l = loss(&params, x.view(), x.view(), &cfg).unwrap();
        assert!((l.total - expect).abs() < 1e-14);
    }

    #[test]
    fn l2_term_is_linear_in_lambda2() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = SdaeParams::init(&[6, 4, 2], &mut rng);
        let x = random_batch(3, 6, 9);
        let cfg = toy_config(&[6, 4, 2]);
        let doubled = SdaeConfig {
            lambda2: 2.0 * cfg.lambda2,
            ..cfg.clone()
        };
        let a = loss(&params, x.view(), x.view(), &cfg).unwrap();
        let b = loss(&params, x.view(), x.view(), &doubled).unwrap();
        let diff = b.total - a.total;
        assert!((diff - cfg.lambda2 * params.weight_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn l2_gradient_is_two_lambda_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = SdaeParams::init(&[5, 4, 3], &mut rng);
        let x = random_batch(3, 5, 11);
        let cfg = toy_config(&[5, 4, 3]);
        let terms = LossTerms {
            reconstruction: false,
            l2: true,
            sparsity: false,
        };
        let (_, g) = grad_with(&params, x.view(), x.view(), &cfg, terms, None).unwrap();
        for (gw, w) in g.weights.iter().zip(&params.weights) {
            assert_eq!(gw, &(w * (2.0 * cfg.lambda2)));
        }
        assert!(g.biases.iter().all(|b| b.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn zero_targets_zero_decoder_bias_gradient() {
        let params = SdaeParams::zeros(&[4, 3, 2]);
        let x = Array2::zeros((5, 4));
        let cfg = SdaeConfig {
            sparsity_weight: 0.0,
            ..toy_config(&[4, 3, 2])
        };
        let (_, g) = grad(&params, x.view(), x.view(), &cfg).unwrap();
        let depth = params.encoder_depth();
        for b in &g.biases[depth..] {
            assert!(b.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sizes = [5, 4, 3, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = SdaeParams::init(&sizes, &mut rng);
        let x = random_batch(6, 5, 13);
        let noisy = corrupt(x.view(), 0.2, &mut rng);
        let cfg = SdaeConfig {
            rho: 0.05,
            lambda2: 0.01,
            sparsity_weight: 0.3,
            ..toy_config(&sizes)
        };
        let (_, g) = grad(&params, noisy.view(), x.view(), &cfg).unwrap();
        let h = 1e-5;
        let mut worst = 0.0_f64;
        for layer in 0..params.weights.len() {
            for idx in 0..params.weights[layer].len() {
                let mut p = params.clone();
                let flat = p.weights[layer].as_slice_mut().unwrap();
                let orig = flat[idx];
                flat[idx] = orig + h;
                let up = loss(&p, noisy.view(), x.view(), &cfg).unwrap().total;
                p.weights[layer].as_slice_mut().unwrap()[idx] = orig - h;
                let down = loss(&p, noisy.view(), x.view(), &cfg).unwrap().total;
                let fd = (up - down) / (2.0 * h);
                let an = g.weights[layer].as_slice().unwrap()[idx];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
            }
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn training_is_deterministic_and_epoch_zero_is_init() {
        let x = random_batch(8, 6, 14);
        let cfg = SdaeConfig {
            epochs: 0,
            seed: 3,
            ..toy_config(&[6, 4, 2])
        };
        let out = train(x.view(), &cfg).unwrap();
        let init = SdaeParams::init(&cfg.layer_sizes, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(out.params, init);
        assert!(out.trajectory.is_empty());

        let cfg = SdaeConfig { epochs: 30, ..cfg };
        let a = train(x.view(), &cfg).unwrap();
        let b = train(x.view(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trajectory, b.trajectory);
        let dropout = SdaeConfig {
            noise_mode: NoiseMode::UnitDropout,
            ..cfg.clone()
        };
        assert!(train(x.view(), &dropout).is_ok());
        assert!(train(x.slice(ndarray::s![0..1, ..]), &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let x = random_batch(8, 6, 15) * 1e3;
        let cfg = SdaeConfig {
            learning_rate: 1e200,
            epochs: 5,
            ..toy_config(&[6, 4, 2])
        };
        assert!(matches!(train(x.view(), &cfg), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn params_round_trip_through_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let params = SdaeParams::init(&[7, 5, 3], &mut rng);
        let bytes = params.to_bytes();
        assert_eq!(&bytes[..5], b"SDAE\0");
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 3);
        assert_eq!(SdaeParams::from_bytes(&bytes).unwrap(), params);
        assert!(SdaeParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn concatenation_layout() {
        let a = Array2::from_shape_fn((4, 7), |(i, j)| (i * 10 + j) as f64);
        let b = a.mapv(|v| -v);
        let fm = concat_features(&[(Subband::Original, a.clone()), (Subband::Detail(1), b.clone())]).unwrap();
        assert_eq!(fm.data.ncols(), 14);
        for c in 0..7 {
            assert_eq!(fm.data.column(7 + c), b.column(c));
            assert_eq!(fm.data.column(c), a.column(c));
        }
        let single = concat_features(&[(Subband::Original, a.clone())]).unwrap();
        assert_eq!(single.data, a);
        assert!(concat_features(&[(Subband::Original, a), (Subband::Approx(1), Array2::zeros((3, 7)))]).is_err());
    }
}
