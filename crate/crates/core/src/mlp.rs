//! Fully connected feed-forward network trained by full-batch gradient
//! descent on the mean squared error.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INIT_SCHEME: &str = "xavier-uniform";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y = f(z)`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
}

/// Affine map applied to inputs before the first layer: `(x - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    /// Per-column mean and standard deviation of `inputs` (unit scale for
    /// constant columns).
    pub fn fit(inputs: &[Vec<f64>]) -> Result<Self> {
        let n = inputs.len();
        if n == 0 {
            return Err(Error::invalid("cannot fit input scaling on an empty set"));
        }
        let dim = inputs[0].len();
        let mut offset = vec![0.0; dim];
        let mut scale = vec![0.0; dim];
        for d in 0..dim {
            let mean = inputs.iter().map(|x| x[d]).sum::<f64>() / n as f64;
            let var = inputs.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n as f64;
            offset[d] = mean;
            scale[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { offset, scale })
    }
}

/// Network parameters. `weights[l]` has shape `units_l x units_{l-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    seed: u64,
    input_scaling: Option<InputScaling>,
}

/// Gradients of the loss, one entry per layer, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.units)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_scaling(&self) -> Option<&InputScaling> {
        self.input_scaling.as_ref()
    }

    pub fn set_input_scaling(&mut self, scaling: Option<InputScaling>) -> Result<()> {
        if let Some(s) = &scaling {
            if s.offset.len() != self.input_dim || s.scale.len() != self.input_dim {
                return Err(Error::invalid("input scaling dimension does not match the model"));
            }
            if s.scale.iter().any(|&v| !(v.is_finite() && v != 0.0)) {
                return Err(Error::invalid("input scaling factors must be finite and nonzero"));
            }
        }
        self.input_scaling = scaling;
        Ok(())
    }

    /// Unit counts `[m_0, m_1, ..., m_L]`.
    pub fn architecture(&self) -> Vec<usize> {
        std::iter::once(self.input_dim).chain(self.layers.iter().map(|l| l.units)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Column-per-sample input matrix, scaled if the model carries a scaling.
    fn input_matrix(&self, inputs: &[Vec<f64>]) -> Result<Array2<f64>> {
        if let Some((s, x)) = inputs.iter().enumerate().find(|(_, x)| x.len() != self.input_dim) {
            return Err(Error::invalid(format!(
                "input {s} has length {}, the model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut m = Array2::from_shape_fn((self.input_dim, inputs.len()), |(d, s)| inputs[s][d]);
        if let Some(sc) = &self.input_scaling {
            for (d, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
                row.mapv_inplace(|v| (v - sc.offset[d]) / sc.scale[d]);
            }
        }
        Ok(m)
    }

    /// Activations of every layer, input included; each is `units x batch`.
    fn forward_all(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for ((w, b), spec) in self.weights.iter().zip(&self.biases).zip(&self.layers) {
            let mut z = w.dot(acts.last().unwrap());
            z += &b.view().insert_axis(Axis(1));
            z.mapv_inplace(|v| spec.activation.apply(v));
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward_batch(std::slice::from_ref(&input.to_vec()))?;
        Ok(out.into_iter().next().unwrap())
    }

    pub fn forward_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let x = self.input_matrix(inputs)?;
        let y = self.forward_all(x).pop().unwrap();
        Ok(y.axis_iter(Axis(1)).map(|c| c.to_vec()).collect())
    }

    fn target_matrix(&self, targets: &[Vec<f64>], n: usize) -> Result<Array2<f64>> {
        if targets.len() != n {
            return Err(Error::invalid(format!("{} targets for {n} inputs", targets.len())));
        }
        let out = self.output_dim();
        if targets.iter().any(|t| t.len() != out) {
            return Err(Error::invalid(format!("targets must have length {out}")));
        }
        Ok(Array2::from_shape_fn((out, n), |(d, s)| targets[s][d]))
    }

    /// Loss and exact reverse-mode gradients over the full batch.
    pub fn loss_and_gradients(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        let n = inputs.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let t = self.target_matrix(targets, n)?;
        let acts = self.forward_all(self.input_matrix(inputs)?);
        let y = acts.last().unwrap();
        let diff = y - &t;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / n as f64;

        let n_layers = self.layers.len();
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        // dL/dy for the output layer
        let mut delta = diff * (2.0 / n as f64);
        for l in (0..n_layers).rev() {
            let act = self.layers[l].activation;
            delta.zip_mut_with(&acts[l + 1], |d, &y| *d *= act.derivative_from_output(y));
            gw[l] = delta.dot(&acts[l].t());
            gb[l] = delta.sum_axis(Axis(1));
            if l > 0 {
                delta = self.weights[l].t().dot(&delta);
            }
        }
        Ok((loss, Gradients { weights: gw, biases: gb }))
    }

    /// `p <- p - lr * grad` for every weight and bias.
    pub fn gd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        let shapes_match = grads.weights.len() == self.weights.len()
            && grads.biases.len() == self.biases.len()
            && grads.weights.iter().zip(&self.weights).all(|(g, w)| g.dim() == w.dim())
            && grads.biases.iter().zip(&self.biases).all(|(g, b)| g.len() == b.len());
        if !shapes_match {
            return Err(Error::invalid("gradient shapes do not match the model"));
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-learning_rate, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-learning_rate, g);
        }
        Ok(())
    }
}

/// Zero biases and weights uniform on `(-r, r)`, `r = sqrt(6 / (fan_in + fan_out))`.
pub fn init_model(architecture: &[usize], activations: &[Activation], seed: u64) -> Result<MlpModel> {
    if architecture.len() < 2 {
        return Err(Error::invalid("architecture needs an input size and at least one layer"));
    }
    if architecture.contains(&0) {
        return Err(Error::invalid("every layer needs at least one unit"));
    }
    if activations.len() != architecture.len() - 1 {
        return Err(Error::invalid(format!(
            "{} activations for {} layers",
            activations.len(),
            architecture.len() - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut layers = Vec::new();
    for (pair, &activation) in architecture.windows(2).zip(activations) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-r..r)));
        biases.push(Array1::zeros(fan_out));
        layers.push(LayerSpec { units: fan_out, activation });
    }
    Ok(MlpModel { input_dim: architecture[0], layers, weights, biases, seed, input_scaling: None })
}

/// `tanh` on every hidden layer and identity on the output layer.
pub fn regression_activations(architecture: &[usize]) -> Vec<Activation> {
    let n = architecture.len().saturating_sub(1);
    (0..n).map(|l| if l + 1 == n { Activation::Identity } else { Activation::Tanh }).collect()
}

/// `(1/n) sum_s |pred_s - target_s|^2`.
pub fn mse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("mse of an empty set"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::invalid(format!("{} predictions for {} targets", predictions.len(), targets.len())));
    }
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(Error::invalid("prediction and target dimensions differ"));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / predictions.len() as f64)
}

pub fn backward(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Gradients> {
    model.loss_and_gradients(inputs, targets).map(|(_, g)| g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Training stops once the epoch loss falls below this value.
    pub loss_target: f64,
    pub rng_seed: u64,
    /// Fit an input standardization on the training inputs before training.
    pub standardize_inputs: bool,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if !(self.loss_target > 0.0) {
            return Err(Error::invalid("loss target must be positive"));
        }
        Ok(())
    }
}

/// Full-batch gradient descent. The history holds the loss measured at the
/// forward pass of each epoch.
pub fn train(
    mut model: MlpModel,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.standardize_inputs {
        model.set_input_scaling(Some(InputScaling::fit(inputs)?))?;
    }
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs {
        let (loss, grads) = model.loss_and_gradients(inputs, targets)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        history.push(loss);
        if loss < config.loss_target {
            break;
        }
        model.gd_step(&grads, config.learning_rate)?;
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    /// Coefficient of determination per output component.
    pub r2: Vec<f64>,
}

/// Per-component `1 - SS_res / SS_tot`.
pub fn r2_scores(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::invalid("R^2 needs equal, nonzero numbers of predictions and targets"));
    }
    let dim = targets[0].len();
    let n = targets.len() as f64;
    (0..dim)
        .map(|d| {
            let mean = targets.iter().map(|t| t[d]).sum::<f64>() / n;
            let ss_tot: f64 = targets.iter().map(|t| (t[d] - mean).powi(2)).sum();
            let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (p[d] - t[d]).powi(2)).sum();
            if ss_tot == 0.0 {
                Err(Error::UndefinedR2 { component: d })
            } else {
                Ok(1.0 - ss_res / ss_tot)
            }
        })
        .collect()
}

pub fn evaluate(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Metrics> {
    if inputs.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let predictions = model.forward_batch(inputs)?;
    Ok(Metrics { mse: mse_loss(&predictions, targets)?, r2: r2_scores(&predictions, targets)? })
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    arch: Vec<usize>,
    activations: Vec<Activation>,
    seed: u64,
    init: String,
    /// `weights[l][row][col]`
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_scaling: Option<InputScaling>,
}

impl MlpModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            arch: self.architecture(),
            activations: self.layers.iter().map(|l| l.activation).collect(),
            seed: self.seed,
            init: INIT_SCHEME.to_string(),
            weights: self.weights.iter().map(|w| w.outer_iter().map(|r| r.to_vec()).collect()).collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
            input_scaling: self.input_scaling.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let n_layers = file.arch.len().saturating_sub(1);
        if n_layers == 0 || file.arch.contains(&0) {
            return Err(Error::Schema("arch must list at least two positive sizes".into()));
        }
        if file.activations.len() != n_layers || file.weights.len() != n_layers || file.biases.len() != n_layers {
            return Err(Error::Schema(format!(
                "arch declares {n_layers} layers but the file has {} activations, {} weight and {} bias blocks",
                file.activations.len(),
                file.weights.len(),
                file.biases.len()
            )));
        }
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for (l, (w, b)) in file.weights.into_iter().zip(file.biases).enumerate() {
            let (rows, cols) = (file.arch[l + 1], file.arch[l]);
            if w.len() != rows || w.iter().any(|r| r.len() != cols) || b.len() != rows {
                return Err(Error::Schema(format!("layer {} does not have shape {rows}x{cols}", l + 1)));
            }
            let flat: Vec<f64> = w.into_iter().flatten().collect();
            if flat.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("layer {} has non-finite parameters", l + 1)));
            }
            weights.push(Array2::from_shape_vec((rows, cols), flat).expect("shape checked"));
            biases.push(Array1::from(b));
        }
        let layers = file.arch[1..]
            .iter()
            .zip(&file.activations)
            .map(|(&units, &activation)| LayerSpec { units, activation })
            .collect();
        let mut model =
            MlpModel { input_dim: file.arch[0], layers, weights, biases, seed: file.seed, input_scaling: None };
        model.set_input_scaling(file.input_scaling).map_err(|e| Error::Schema(e.to_string()))?;
        Ok(model)
    }
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json()? + "\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::from_json(&std::fs::read_to_string(path)?)
}

/// Central finite-difference gradient of the loss, parameter by parameter.
pub fn finite_difference_gradients(
    model: &MlpModel,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    step: f64,
) -> Result<Gradients> {
    let loss = |m: &MlpModel| -> Result<f64> { mse_loss(&m.forward_batch(inputs)?, targets) };
    let mut probe = model.clone();
    let mut gw = Vec::new();
    let mut gb = Vec::new();
    for l in 0..model.weights.len() {
        let mut g = Array2::zeros(model.weights[l].raw_dim());
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let orig = model.weights[l][[r, c]];
            probe.weights[l][[r, c]] = orig + step;
            let up = loss(&probe)?;
            probe.weights[l][[r, c]] = orig - step;
            let down = loss(&probe)?;
            probe.weights[l][[r, c]] = orig;
            g[[r, c]] = (up - down) / (2.0 * step);
        }
        gw.push(g);
        let mut g = Array1::zeros(model.biases[l].len());
        for i in 0..g.len() {
            let orig = model.biases[l][i];
            probe.biases[l][i] = orig + step;
            let up = loss(&probe)?;
            probe.biases[l][i] = orig - step;
            let down = loss(&probe)?;
            probe.biases[l][i] = orig;
            g[i] = (up - down) / (2.0 * step);
        }
        gb.push(g);
    }
    Ok(Gradients { weights: gw, biases: gb })
}

impl Gradients {
    /// Every entry, weights then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend(w.iter());
            v.extend(b.iter());
        }
        v
    }
}

/// Builds a model from explicit parameters (mainly for tests and bindings).
pub fn model_from_parts(
    input_dim: usize,
    activations: &[Activation],
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
) -> Result<MlpModel> {
    if weights.is_empty() || weights.len() != biases.len() || weights.len() != activations.len() {
        return Err(Error::invalid("need matching, nonempty weight, bias and activation lists"));
    }
    let mut prev = input_dim;
    let mut layers = Vec::new();
    for ((w, b), &activation) in weights.iter().zip(&biases).zip(activations) {
        if w.ncols() != prev || w.nrows() != b.len() || w.nrows() == 0 {
            return Err(Error::invalid("inconsistent layer shapes"));
        }
        prev = w.nrows();
        layers.push(LayerSpec { units: w.nrows(), activation });
    }
    Ok(MlpModel { input_dim, layers, weights, biases, seed: 0, input_scaling: None })
}
