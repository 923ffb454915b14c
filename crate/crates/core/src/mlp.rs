//! A small one-hidden-layer perceptron (logistic hidden units, affine
//! output) trained with Adam under three regimes: full labeled data,
//! clustered centers with approximate responses, and weighted digital-net
//! points through the app_avg surrogate.
//!
//! The output layer is either a single scalar (round-and-clamp prediction;
//! required for the weighted mode, whose loss is defined on f itself) or ten
//! scores trained against one-hot digit targets (argmax prediction). Scalar
//! label regression interpolates its training set but plateaus near 60 %
//! test accuracy on MNIST, so the digit pipelines train the class head.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::weights::WeightSet;
use crate::KahanSum;

/// Fully-connected s -> hidden -> out network. Weights are row-major:
/// w1[i * s + j] feeds input j into hidden unit i.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MlpModel {
    /// Seeded uniform init; hidden weights get a gain of 4 to compensate the
    /// logistic slope of 1/4 at the origin.
    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::Parameter("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = 4.0 / (input as f64).sqrt();
        let bound2 = 4.0 / (hidden as f64).sqrt();
        let sample = |bound: f64, count: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        Ok(Self {
            input,
            hidden,
            output,
            w1: sample(bound1, hidden * input, &mut rng),
            b1: sample(bound1, hidden, &mut rng),
            w2: sample(bound2, output * hidden, &mut rng),
            b2: vec![0.0; output],
        })
    }

    pub fn scalar_output(&self) -> bool {
        self.output == 1
    }

    fn hidden_activations(&self, x: &[f64], h: &mut [f64]) {
        for i in 0..self.hidden {
            let row = &self.w1[i * self.input..(i + 1) * self.input];
            let mut z = self.b1[i];
            for (w, xv) in row.iter().zip(x) {
                z += w * xv;
            }
            h[i] = sigmoid(z);
        }
    }

    fn output_from_hidden(&self, h: &[f64], out: &mut [f64]) {
        for o in 0..self.output {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            let mut z = self.b2[o];
            for (w, hv) in row.iter().zip(h) {
                z += w * hv;
            }
            out[o] = z;
        }
    }

    /// All output scores for one input.
    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.output];
        self.hidden_activations(x, &mut h);
        self.output_from_hidden(&h, &mut out);
        out
    }

    /// Scalar prediction f(x); for class models this is the first score.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_vec(x)[0]
    }

    /// Predicted digit: round-and-clamp for scalar models, argmax for class
    /// models. Rounding is half-up.
    pub fn predict_label(&self, x: &[f64]) -> usize {
        let out = self.forward_vec(x);
        if self.scalar_output() {
            ((out[0] + 0.5).floor().clamp(0.0, 9.0)) as usize
        } else {
            out.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0)
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameter vector in the fixed order w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters vs expected {}",
                params.len(),
                self.param_count()
            )));
        }
        let (a, rest) = params.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
        Ok(())
    }

    /// Plain text dump with a version header; round-trips exactly.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = format!("qmc-mlp-v1 {} {} {}\n", self.input, self.hidden, self.output);
        for chunk in [&self.w1, &self.b1, &self.w2, &self.b2] {
            let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty model file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("qmc-mlp-v1") {
            return Err(Error::Format("unknown model header".into()));
        }
        let mut dim = |what: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::Format(format!("missing {what}")))?
                .parse()
                .map_err(|e| Error::Format(format!("bad {what}: {e}")))
        };
        let (input, hidden, output) = (dim("input")?, dim("hidden")?, dim("output")?);
        let mut parse_row = |count: usize, what: &str| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| Error::Format(format!("missing {what}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("bad {what}: {e}")))?;
            if vals.len() != count {
                return Err(Error::Format(format!("{what}: {} values, expected {count}", vals.len())));
            }
            Ok(vals)
        };
        Ok(Self {
            input,
            hidden,
            output,
            w1: parse_row(hidden * input, "w1")?,
            b1: parse_row(hidden, "b1")?,
            w2: parse_row(output * hidden, "w2")?,
            b2: parse_row(output, "b2")?,
        })
    }
}

/// Gradient with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradient {
    fn zeros(model: &MlpModel) -> Self {
        Self {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }
}

/// Accumulates d(loss)/d(params) for one input given d(loss)/d(output).
fn backprop_into(model: &MlpModel, x: &[f64], h: &[f64], dout: &[f64], grad: &mut Gradient) {
    let mut dh = vec![0.0; model.hidden];
    for o in 0..model.output {
        let go = dout[o];
        if go == 0.0 {
            continue;
        }
        grad.b2[o] += go;
        let row = &model.w2[o * model.hidden..(o + 1) * model.hidden];
        let grow = &mut grad.w2[o * model.hidden..(o + 1) * model.hidden];
        for i in 0..model.hidden {
            grow[i] += go * h[i];
            dh[i] += go * row[i];
        }
    }
    for i in 0..model.hidden {
        let dz = dh[i] * h[i] * (1.0 - h[i]);
        if dz == 0.0 {
            continue;
        }
        grad.b1[i] += dz;
        let grow = &mut grad.w1[i * model.input..(i + 1) * model.input];
        for (g, xv) in grow.iter_mut().zip(x) {
            *g += dz * xv;
        }
    }
}

fn target_vec(model: &MlpModel, y: f64, buf: &mut [f64]) {
    if model.scalar_output() {
        buf[0] = y;
    } else {
        buf.fill(0.0);
        let label = (y + 0.5).floor().clamp(0.0, (model.output - 1) as f64) as usize;
        buf[label] = 1.0;
    }
}

/// Mean-squared-error loss of a batch; class models compare against one-hot
/// targets of the rounded response.
pub fn batch_loss(model: &MlpModel, points: &[Vec<f64>], responses: &[f64]) -> Result<f64> {
    if points.len() != responses.len() || points.is_empty() {
        return Err(Error::Shape("batch points/responses mismatch or empty".into()));
    }
    let mut target = vec![0.0; model.output];
    let mut acc = KahanSum::new();
    for (x, &y) in points.iter().zip(responses) {
        let out = model.forward_vec(x);
        target_vec(model, y, &mut target);
        for (o, t) in out.iter().zip(&target) {
            acc.add((o - t) * (o - t));
        }
    }
    Ok(acc.value() / (points.len() * model.output) as f64)
}

/// Gradient of [`batch_loss`] over the given batch.
pub fn grad_full(model: &MlpModel, points: &[Vec<f64>], responses: &[f64]) -> Result<Gradient> {
    if points.len() != responses.len() || points.is_empty() {
        return Err(Error::Shape("batch points/responses mismatch or empty".into()));
    }
    let mut grad = Gradient::zeros(model);
    let mut h = vec![0.0; model.hidden];
    let mut out = vec![0.0; model.output];
    let mut target = vec![0.0; model.output];
    let mut dout = vec![0.0; model.output];
    let scale = 2.0 / (points.len() * model.output) as f64;
    for (x, &y) in points.iter().zip(responses) {
        model.hidden_activations(x, &mut h);
        model.output_from_hidden(&h, &mut out);
        target_vec(model, y, &mut target);
        for o in 0..model.output {
            dout[o] = scale * (out[o] - target[o]);
        }
        backprop_into(model, x, &h, &dout, &mut grad);
    }
    Ok(grad)
}

/// Gradient of app_avg: sum_l (2 f(z_l) wx_l - 2 wxy_l) grad f(z_l).
/// Scalar-output models only.
pub fn grad_weighted(
    model: &MlpModel,
    net_points: &[Vec<f64>],
    weights: &WeightSet,
) -> Result<Gradient> {
    if !model.scalar_output() {
        return Err(Error::Parameter("weighted training requires a scalar-output model".into()));
    }
    if net_points.len() != weights.wx.len() {
        return Err(Error::Shape(format!(
            "{} net points vs {} weights",
            net_points.len(),
            weights.wx.len()
        )));
    }
    let mut grad = Gradient::zeros(model);
    let mut h = vec![0.0; model.hidden];
    let mut out = vec![0.0; 1];
    for (z, (&wx, &wxy)) in net_points.iter().zip(weights.wx.iter().zip(&weights.wxy)) {
        model.hidden_activations(z, &mut h);
        model.output_from_hidden(&h, &mut out);
        let dout = [2.0 * (out[0] * wx - wxy)];
        backprop_into(model, z, &h, &dout, &mut grad);
    }
    Ok(grad)
}

/// Weighted surrogate loss of the current model on the net.
pub fn weighted_loss(model: &MlpModel, net_points: &[Vec<f64>], weights: &WeightSet) -> Result<f64> {
    let f: Vec<f64> = net_points.iter().map(|z| model.forward(z)).collect();
    let f_sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    crate::weights::app_avg(&f, &f_sq, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    Full,
    Clustered,
    Weighted,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub mode: LossMode,
}

impl TrainConfig {
    pub fn new(mode: LossMode) -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            mode,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in
            params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Mini-batch Adam on labeled data (full or clustered regimes). Shuffle
/// order is fixed by the seed; returns the per-epoch loss trace.
pub fn train(model: &mut MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Parameter("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = Adam::new(model.param_count());
    let mut params = model.params();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut batch_pts: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut batch_ys: Vec<f64> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        // Fisher-Yates with the seeded stream
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            batch_pts.clear();
            batch_ys.clear();
            for &i in chunk {
                batch_pts.push(data.points[i].clone());
                batch_ys.push(data.responses[i]);
            }
            let grad = grad_full(model, &batch_pts, &batch_ys)?;
            adam.step(&mut params, &grad.to_vec(), cfg);
            model.set_params(&params)?;
        }
        trace.push(batch_loss(model, &data.points, &data.responses)?);
    }
    Ok(trace)
}

/// Full-batch Adam on the weighted surrogate; one step per epoch. The trace
/// records app_avg itself.
pub fn train_weighted(
    model: &mut MlpModel,
    net_points: &[Vec<f64>],
    weights: &WeightSet,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if net_points.is_empty() {
        return Err(Error::Parameter("empty net".into()));
    }
    let mut adam = Adam::new(model.param_count());
    let mut params = model.params();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let grad = grad_weighted(model, net_points, weights)?;
        adam.step(&mut params, &grad.to_vec(), cfg);
        model.set_params(&params)?;
        trace.push(weighted_loss(model, net_points, weights)?);
    }
    Ok(trace)
}

/// Accuracy and confusion counts on a labeled test set.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<u64>>,
    pub final_loss: Option<f64>,
}

impl EvalReport {
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\pred,0,1,2,3,4,5,6,7,8,9\n");
        for (t, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&format!("{t},{}\n", cells.join(",")));
        }
        out
    }
}

/// Evaluates digit predictions against integer responses.
pub fn evaluate(model: &MlpModel, test: &Dataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Parameter("empty test set".into()));
    }
    let mut confusion = vec![vec![0u64; 10]; 10];
    let mut correct = 0u64;
    for (x, &y) in test.points.iter().zip(&test.responses) {
        let truth = (y + 0.5).floor().clamp(0.0, 9.0) as usize;
        let pred = model.predict_label(x).min(9);
        confusion[truth][pred] += 1;
        if truth == pred {
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / test.len() as f64,
        confusion,
        final_loss: None,
    })
}
