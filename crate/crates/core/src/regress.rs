//! Two-layer regressor `c̃(r) = W2 tanh(W1 r + b1) + b2` from a vectorized
//! rotation to subspace coefficients, trained by full-batch gradient descent
//! with weight decay.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{Precision, Reader, Writer};
use crate::error::{Error, Result};

pub const SECTION_VERSION: u32 = 1;
pub const INPUT_DIM: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Step multiplier after an accepted step; a rejected step halves it.
    pub lr_growth: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            lr_growth: 1.05,
            weight_decay: 1e-4,
            iterations: 5000,
            hidden: 20,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.lr_growth >= 1.0) || self.hidden == 0 {
            return Err(Error::Configuration(
                "learning rate must be > 0, weight decay ≥ 0, growth ≥ 1, hidden width ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

impl Regressor {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(output, hidden),
            b2: DVector::zeros(output),
        }
    }

    /// Every parameter drawn uniformly from `[−0.1, 0.1]`.
    pub fn random(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-0.1..=0.1));
        let w1 = u(hidden, input);
        let b1 = u(hidden, 1).column(0).into_owned();
        let w2 = u(output, hidden);
        let b2 = u(output, 1).column(0).into_owned();
        Self { w1, b1, w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.hidden_dim();
        if self.b1.len() != j || self.w2.ncols() != j || self.b2.len() != self.output_dim() {
            return Err(Error::param("regressor dimensions are inconsistent"));
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::param("regressor has non-finite parameters"));
        }
        Ok(())
    }

    pub fn hidden(&self, r: &[f64]) -> Result<DVector<f64>> {
        if r.len() != self.input_dim() {
            return Err(Error::param(format!("input length {} != {}", r.len(), self.input_dim())));
        }
        Ok((&self.w1 * DVector::from_column_slice(r) + &self.b1).map(f64::tanh))
    }

    pub fn predict(&self, r: &[f64]) -> Result<Vec<f64>> {
        let h = self.hidden(r)?;
        Ok((&self.w2 * h + &self.b2).iter().copied().collect())
    }

    pub fn weight_norm_squared(&self) -> f64 {
        self.w1.norm_squared() + self.w2.norm_squared()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters as one vector: W1, b1, W2, b2, matrices column-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for x in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
        {
            *x = it.next().unwrap();
        }
    }

    fn axpy(&mut self, a: f64, g: &Regressor) {
        self.w1.zip_apply(&g.w1, |x, y| *x += a * y);
        self.b1.axpy(a, &g.b1, 1.0);
        self.w2.zip_apply(&g.w2, |x, y| *x += a * y);
        self.b2.axpy(a, &g.b2, 1.0);
    }

    pub fn quantized(&self, p: Precision) -> Self {
        let q = |x: f64| p.quantize(x);
        Self {
            w1: self.w1.map(q),
            b1: self.b1.map(q),
            w2: self.w2.map(q),
            b2: self.b2.map(q),
        }
    }

    /// Dims (I, J, L) as u32, then W1, b1, W2, b2 with matrices row-major.
    pub fn write_to(&self, w: &mut Writer, p: Precision) {
        w.u32(self.input_dim() as u32);
        w.u32(self.hidden_dim() as u32);
        w.u32(self.output_dim() as u32);
        write_matrix(w, p, &self.w1);
        w.floats(p, self.b1.iter().copied());
        write_matrix(w, p, &self.w2);
        w.floats(p, self.b2.iter().copied());
    }

    pub fn read_from(r: &mut Reader<'_>, p: Precision) -> Result<Self> {
        let (i, j, l) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let w1 = read_matrix(r, p, j, i)?;
        let b1 = DVector::from_vec(r.floats(p, j)?);
        let w2 = read_matrix(r, p, l, j)?;
        let b2 = DVector::from_vec(r.floats(p, l)?);
        let reg = Self { w1, b1, w2, b2 };
        reg.validate()?;
        Ok(reg)
    }
}

pub(crate) fn write_matrix(w: &mut Writer, p: Precision, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        w.floats(p, m.row(r).iter().copied());
    }
}

pub(crate) fn read_matrix(r: &mut Reader<'_>, p: Precision, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_row_slice(rows, cols, &r.floats(p, rows * cols)?))
}

/// Training pairs as column matrices: inputs `I×P`, targets `L×P`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl Batch {
    pub fn new<A: AsRef<[f64]>, B: AsRef<[f64]>>(inputs: &[A], targets: &[B]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::param("need at least one (input, target) pair, equally many of each"));
        }
        let i = inputs[0].as_ref().len();
        let l = targets[0].as_ref().len();
        if inputs.iter().any(|r| r.as_ref().len() != i) || targets.iter().any(|c| c.as_ref().len() != l) {
            return Err(Error::param("inconsistent pair dimensions"));
        }
        Ok(Self {
            inputs: DMatrix::from_fn(i, inputs.len(), |r, c| inputs[c].as_ref()[r]),
            targets: DMatrix::from_fn(l, targets.len(), |r, c| targets[c].as_ref()[r]),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean squared error over all pairs and outputs plus
/// `wd/2 (‖W1‖² + ‖W2‖²)`, and its gradient.
pub fn loss_and_gradient(reg: &Regressor, batch: &Batch, weight_decay: f64) -> (f64, Regressor) {
    let p = batch.len();
    let l = reg.output_dim();
    let mut z = &reg.w1 * &batch.inputs;
    for mut col in z.column_iter_mut() {
        col += &reg.b1;
    }
    let h = z.map(f64::tanh);
    let mut e = &reg.w2 * &h;
    for mut col in e.column_iter_mut() {
        col += &reg.b2;
    }
    e -= &batch.targets;
    let scale = 1.0 / (p * l.max(1)) as f64;
    let loss = e.norm_squared() * scale + 0.5 * weight_decay * reg.weight_norm_squared();
    let d_out = e * (2.0 * scale);
    let mut g_w2 = &d_out * h.transpose();
    g_w2.zip_apply(&reg.w2, |g, w| *g += weight_decay * w);
    let g_b2 = d_out.column_sum();
    let mut d_z = reg.w2.tr_mul(&d_out);
    d_z.zip_apply(&h, |dz, hv| *dz *= 1.0 - hv * hv);
    let mut g_w1 = &d_z * batch.inputs.transpose();
    g_w1.zip_apply(&reg.w1, |g, w| *g += weight_decay * w);
    let g_b1 = d_z.column_sum();
    (
        loss,
        Regressor {
            w1: g_w1,
            b1: g_b1,
            w2: g_w2,
            b2: g_b2,
        },
    )
}

pub fn loss(reg: &Regressor, batch: &Batch, weight_decay: f64) -> f64 {
    loss_and_gradient(reg, batch, weight_decay).0
}

/// Gradient descent from `init`. A step that raises the loss is rejected and
/// the learning rate halved; accepted steps grow it by `lr_growth`. The
/// trace holds the loss of the current parameters at every iteration, so it
/// never increases.
pub fn train_from(init: Regressor, batch: &Batch, config: &TrainConfig) -> Result<(Regressor, Vec<f64>)> {
    config.validate()?;
    if batch.inputs.nrows() != init.input_dim() || batch.targets.nrows() != init.output_dim() {
        return Err(Error::param("batch dimensions do not match the regressor"));
    }
    let mut reg = init;
    let (mut current, mut grad) = loss_and_gradient(&reg, batch, config.weight_decay);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    trace.push(current);
    let fail = |it: usize, trace: Vec<f64>| Error::TrainingFailure {
        iterations: it,
        message: "loss is not finite".into(),
        trace,
    };
    if !current.is_finite() {
        return Err(fail(0, trace));
    }
    let mut lr = config.learning_rate;
    for it in 0..config.iterations {
        let mut candidate = reg.clone();
        candidate.axpy(-lr, &grad);
        let (next, next_grad) = loss_and_gradient(&candidate, batch, config.weight_decay);
        if next.is_nan() {
            return Err(fail(it + 1, trace));
        }
        if next <= current {
            reg = candidate;
            current = next;
            grad = next_grad;
            lr *= config.lr_growth;
        } else {
            lr *= 0.5;
            if lr < 1e-300 {
                return Err(fail(it + 1, trace));
            }
        }
        trace.push(current);
    }
    Ok((reg, trace))
}

pub fn train<A: AsRef<[f64]>, B: AsRef<[f64]>>(inputs: &[A], targets: &[B], config: &TrainConfig) -> Result<(Regressor, Vec<f64>)> {
    let batch = Batch::new(inputs, targets)?;
    let init = Regressor::random(batch.inputs.nrows(), config.hidden, batch.targets.nrows(), config.seed);
    train_from(init, &batch, config)
}

/// Per-output mean and scale used to standardize targets.
fn standardization(targets: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let mean = targets.column_mean();
    let scale = DVector::from_fn(targets.nrows(), |r, _| {
        let row = targets.row(r);
        let var = row.iter().map(|x| (x - mean[r]).powi(2)).sum::<f64>() / row.len() as f64;
        if var > 1e-24 {
            var.sqrt()
        } else {
            1.0
        }
    });
    (mean, scale)
}

/// Minimizes the training loss exactly over `W2, b2` for fixed hidden
/// features `h` (`J×P`): a ridge regression with the weight-decay penalty.
fn solve_output_layer(h: &DMatrix<f64>, targets: &DMatrix<f64>, penalty: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (j, p) = (h.nrows(), h.ncols());
    let mut ht = DMatrix::from_element(j + 1, p, 1.0);
    ht.rows_mut(0, j).copy_from(h);
    let mut a = &ht * ht.transpose();
    let floor = 1e-12 * (a.trace() / (j + 1) as f64).max(1e-300);
    for k in 0..=j {
        a[(k, k)] += if k < j { penalty } else { 0.0 } + floor;
    }
    let rhs = &ht * targets.transpose();
    let sol = match a.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a.svd(true, true).solve(&rhs, 1e-14).expect("svd solve"),
    };
    let w = sol.rows(0, j).transpose();
    let b = sol.row(j).transpose();
    (w, b)
}

/// Trains on standardized targets, folds the scaling back into the output
/// layer and, if `refit_output`, re-solves the output layer in closed form.
pub fn fit(batch: &Batch, config: &TrainConfig, refit_output: bool) -> Result<(Regressor, Vec<f64>)> {
    let (mean, scale) = standardization(&batch.targets);
    let mut std_targets = batch.targets.clone();
    for mut col in std_targets.column_iter_mut() {
        col -= &mean;
        col.component_div_assign(&scale);
    }
    let std_batch = Batch {
        inputs: batch.inputs.clone(),
        targets: std_targets,
    };
    let init = Regressor::random(batch.inputs.nrows(), config.hidden, batch.targets.nrows(), config.seed);
    let (mut reg, trace) = train_from(init, &std_batch, config)?;
    if refit_output {
        let h = hidden_features(&reg, &batch.inputs);
        let penalty = 0.5 * config.weight_decay * (batch.len() * reg.output_dim()) as f64;
        let (w2, b2) = solve_output_layer(&h, &std_batch.targets, penalty);
        reg.w2 = w2;
        reg.b2 = b2;
    }
    for (r, mut row) in reg.w2.row_iter_mut().enumerate() {
        row *= scale[r];
    }
    reg.b2 = reg.b2.component_mul(&scale) + mean;
    Ok((reg, trace))
}

fn hidden_features(reg: &Regressor, inputs: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &reg.w1 * inputs;
    for mut col in z.column_iter_mut() {
        col += &reg.b1;
    }
    z.map(f64::tanh)
}

/// Several outputs heads over one shared hidden layer, each head trained only
/// on the frames where its target exists.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRegressor {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub heads: Vec<(DMatrix<f64>, DVector<f64>)>,
}

/// One head's training data: `(pair index, target)` for observed pairs.
pub struct HeadData<'a> {
    pub samples: Vec<(usize, &'a [f64])>,
    pub output_dim: usize,
}

impl GroupRegressor {
    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn hidden(&self, r: &[f64]) -> Result<DVector<f64>> {
        if r.len() != self.w1.ncols() {
            return Err(Error::param(format!("input length {} != {}", r.len(), self.w1.ncols())));
        }
        Ok((&self.w1 * DVector::from_column_slice(r) + &self.b1).map(f64::tanh))
    }

    pub fn predict_head(&self, head: usize, hidden: &DVector<f64>) -> Result<Vec<f64>> {
        let (w, b) = self
            .heads
            .get(head)
            .ok_or_else(|| Error::Configuration(format!("no regressor head {head}")))?;
        Ok((w * hidden + b).iter().copied().collect())
    }

    /// The regressor for a single head.
    pub fn head_regressor(&self, head: usize) -> Result<Regressor> {
        let (w, b) = self
            .heads
            .get(head)
            .ok_or_else(|| Error::Configuration(format!("no regressor head {head}")))?;
        Ok(Regressor {
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: w.clone(),
            b2: b.clone(),
        })
    }

    pub fn quantized(&self, p: Precision) -> Self {
        let q = |x: f64| p.quantize(x);
        Self {
            w1: self.w1.map(q),
            b1: self.b1.map(q),
            heads: self.heads.iter().map(|(w, b)| (w.map(q), b.map(q))).collect(),
        }
    }

    pub fn write_to(&self, w: &mut Writer, p: Precision) {
        w.u32(self.w1.ncols() as u32);
        w.u32(self.w1.nrows() as u32);
        write_matrix(w, p, &self.w1);
        w.floats(p, self.b1.iter().copied());
        w.u32(self.heads.len() as u32);
        for (hw, hb) in &self.heads {
            w.u32(hw.nrows() as u32);
            write_matrix(w, p, hw);
            w.floats(p, hb.iter().copied());
        }
    }

    pub fn read_from(r: &mut Reader<'_>, p: Precision) -> Result<Self> {
        let (i, j) = (r.u32()? as usize, r.u32()? as usize);
        let w1 = read_matrix(r, p, j, i)?;
        let b1 = DVector::from_vec(r.floats(p, j)?);
        let n = r.u32()? as usize;
        let mut heads = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let l = r.u32()? as usize;
            let w = read_matrix(r, p, l, j)?;
            let b = DVector::from_vec(r.floats(p, l)?);
            heads.push((w, b));
        }
        Ok(Self { w1, b1, heads })
    }
}

const IMPUTE_ROUNDS: usize = 6;

/// Trains the shared hidden layer on the leading `feature_rank` principal
/// directions of the heads' standardized targets, then solves each head in
/// closed form on its own observed pairs. Missing targets are filled by
/// alternating rank-`feature_rank` reconstruction, starting from zero.
pub fn fit_group(inputs: &DMatrix<f64>, heads: &[HeadData<'_>], config: &TrainConfig, feature_rank: usize) -> Result<GroupRegressor> {
    config.validate()?;
    let p = inputs.ncols();
    let total: usize = heads.iter().map(|h| h.output_dim).sum();
    // Standardized stacked targets.
    let mut stacked = DMatrix::zeros(total.max(1), p);
    let mut observed = DMatrix::from_element(total.max(1), p, false);
    let mut row = 0;
    for h in heads {
        if !h.samples.is_empty() {
            let mut mean = DVector::zeros(h.output_dim);
            for (_, c) in &h.samples {
                mean += DVector::from_column_slice(c);
            }
            mean /= h.samples.len() as f64;
            let mut var = DVector::zeros(h.output_dim);
            for (_, c) in &h.samples {
                var += (DVector::from_column_slice(c) - &mean).map(|x| x * x);
            }
            let sd = (var / h.samples.len() as f64).map(|v: f64| if v > 1e-24 { v.sqrt() } else { 1.0 });
            for &(f, c) in &h.samples {
                for k in 0..h.output_dim {
                    stacked[(row + k, f)] = (c[k] - mean[k]) / sd[k];
                    observed[(row + k, f)] = true;
                }
            }
        }
        row += h.output_dim;
    }
    let r = feature_rank.clamp(1, p);
    let mut eig = crate::subspace::eigen::top_eigen(&stacked.tr_mul(&stacked), r);
    if observed.iter().any(|&o| !o) {
        for _ in 0..IMPUTE_ROUNDS {
            let v = &eig.vectors;
            let recon = (&stacked * v) * v.transpose();
            stacked.zip_zip_apply(&recon, &observed, |x, rc, obs| {
                if !obs {
                    *x = rc;
                }
            });
            eig = crate::subspace::eigen::top_eigen(&stacked.tr_mul(&stacked), r);
        }
    }
    // Scores of each frame on the leading directions, unit variance.
    let mut features = DMatrix::zeros(r, p);
    for k in 0..r {
        let s = eig.values[k].max(0.0).sqrt();
        if s > 1e-12 * eig.values[0].max(1e-300).sqrt() {
            let scale = (p as f64).sqrt();
            for f in 0..p {
                features[(k, f)] = eig.vectors[(f, k)] * scale;
            }
        }
    }
    let batch = Batch {
        inputs: inputs.clone(),
        targets: features,
    };
    let init = Regressor::random(inputs.nrows(), config.hidden, r, config.seed);
    let (reg, _) = train_from(init, &batch, config)?;
    let hidden = hidden_features(&reg, inputs);
    let mut out = Vec::with_capacity(heads.len());
    for h in heads {
        if h.samples.is_empty() {
            out.push((DMatrix::zeros(h.output_dim, config.hidden), DVector::zeros(h.output_dim)));
            continue;
        }
        let hs = DMatrix::from_fn(config.hidden, h.samples.len(), |j, s| hidden[(j, h.samples[s].0)]);
        let ys = DMatrix::from_fn(h.output_dim, h.samples.len(), |k, s| h.samples[s].1[k]);
        let penalty = 0.5 * config.weight_decay * (h.samples.len() * h.output_dim.max(1)) as f64;
        out.push(solve_output_layer(&hs, &ys, penalty));
    }
    Ok(GroupRegressor {
        w1: reg.w1,
        b1: reg.b1,
        heads: out,
    })
}
