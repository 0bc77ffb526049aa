use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::*;
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Architecture: `conv_channels.len()` blocks of conv3x3 -> BN -> ReLU ->
/// maxpool2x2, then `fc_sizes.len()` dense -> ReLU -> dropout layers and a
/// linear head with `2 * n_points` outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_points: usize,
    /// `(channels, height, width)`.
    pub input: (usize, usize, usize),
    pub conv_channels: Vec<usize>,
    pub fc_sizes: Vec<usize>,
    pub dropout_p: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl NetworkConfig {
    pub fn new(n_points: usize) -> Self {
        Self {
            n_points,
            input: (1, 128, 128),
            conv_channels: vec![16, 32, 64, 128],
            fc_sizes: vec![256, 128],
            dropout_p: 0.5,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input;
        let down = 1usize << self.conv_channels.len();
        if self.n_points == 0 {
            return Err(Error::Config("n_points must be positive".into()));
        }
        if c == 0 || h == 0 || w == 0 || h % down != 0 || w % down != 0 {
            return Err(Error::Config(format!(
                "input {c}x{h}x{w} must be non-empty with height and width divisible by {down}"
            )));
        }
        if self.conv_channels.iter().chain(&self.fc_sizes).any(|&v| v == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(self.bn_eps >= 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("invalid batch-norm settings".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        2 * self.n_points
    }

    /// Length of the flattened feature vector entering the first dense layer.
    pub fn flatten_dim(&self) -> usize {
        let (_, h, w) = self.input;
        let down = 1usize << self.conv_channels.len();
        self.conv_channels.last().copied().unwrap_or(self.input.0) * (h / down) * (w / down)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub in_c: usize,
    pub out_c: usize,
    /// `(out_c, in_c, 3, 3)`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `(out_dim, in_dim)`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameters and batch-norm statistics of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    pub config: NetworkConfig,
    pub blocks: Vec<ConvBlock<T>>,
    pub hidden: Vec<DenseLayer<T>>,
    pub head: DenseLayer<T>,
}

/// Parameter gradients, in [`ModelState::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T>(pub Vec<Vec<T>>);

/// Intermediate values kept by a train-mode forward pass.
pub struct ForwardCache<T> {
    block_inputs: Vec<Tensor<T>>,
    bn: Vec<BnCache<T>>,
    relu_out: Vec<Tensor<T>>,
    pool_arg: Vec<Vec<u8>>,
    dense_inputs: Vec<Tensor<T>>,
    dense_relu: Vec<Tensor<T>>,
    masks: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    /// Activation pattern (ReLU on/off and pooling choices). Two forward
    /// passes with equal signatures are on the same linear piece.
    pub fn signature(&self) -> Vec<u8>
    where
        T: Real,
    {
        let mut sig: Vec<u8> = Vec::new();
        for t in self.relu_out.iter().chain(&self.dense_relu) {
            sig.extend(t.data().iter().map(|v| (*v > T::zero()) as u8));
        }
        for a in &self.pool_arg {
            sig.extend_from_slice(a);
        }
        sig
    }
}

fn normal_vec<T: Real>(rng: &mut impl Rng, len: usize, std: f64) -> Vec<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..len).map(|_| T::from_f64_lossy(dist.sample(rng))).collect()
}

/// He-normal (fan-in) weights for layers feeding a ReLU, Glorot-normal for the
/// linear head, zero biases, `gamma = 1`, `beta = 0` and running statistics
/// `(0, 1)`. Deterministic per seed.
pub fn init_params<T: Real>(cfg: &NetworkConfig, seed: u64) -> Result<ModelState<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_c = cfg.input.0;
    let mut blocks = Vec::with_capacity(cfg.conv_channels.len());
    for &out_c in &cfg.conv_channels {
        let fan_in = in_c * 9;
        blocks.push(ConvBlock {
            in_c,
            out_c,
            weight: normal_vec(&mut rng, out_c * fan_in, (2.0 / fan_in as f64).sqrt()),
            bias: vec![T::zero(); out_c],
            gamma: vec![T::one(); out_c],
            beta: vec![T::zero(); out_c],
            running_mean: vec![T::zero(); out_c],
            running_var: vec![T::one(); out_c],
        });
        in_c = out_c;
    }
    let mut in_dim = cfg.flatten_dim();
    let mut hidden = Vec::with_capacity(cfg.fc_sizes.len());
    for &out_dim in &cfg.fc_sizes {
        hidden.push(DenseLayer {
            in_dim,
            out_dim,
            weight: normal_vec(&mut rng, out_dim * in_dim, (2.0 / in_dim as f64).sqrt()),
            bias: vec![T::zero(); out_dim],
        });
        in_dim = out_dim;
    }
    let out_dim = cfg.output_dim();
    let head = DenseLayer {
        in_dim,
        out_dim,
        weight: normal_vec(
            &mut rng,
            out_dim * in_dim,
            (2.0 / (in_dim + out_dim) as f64).sqrt(),
        ),
        bias: vec![T::zero(); out_dim],
    };
    Ok(ModelState {
        config: cfg.clone(),
        blocks,
        hidden,
        head,
    })
}

impl<T: Real> ModelState<T> {
    /// Trainable tensors: per block `weight, bias, gamma, beta`, then per dense
    /// layer (hidden layers, then head) `weight, bias`.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.blocks {
            out.extend([&b.weight[..], &b.bias, &b.gamma, &b.beta]);
        }
        for d in self.hidden.iter().chain(std::iter::once(&self.head)) {
            out.extend([&d.weight[..], &d.bias]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in &mut self.blocks {
            out.extend([&mut b.weight[..], &mut b.bias, &mut b.gamma, &mut b.beta]);
        }
        for d in self.hidden.iter_mut().chain(std::iter::once(&mut self.head)) {
            out.extend([&mut d.weight[..], &mut d.bias]);
        }
        out
    }

    /// Batch-norm running statistics: per block `running_mean, running_var`.
    pub fn buffers(&self) -> Vec<&[T]> {
        self.blocks
            .iter()
            .flat_map(|b| [&b.running_mean[..], &b.running_var[..]])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [&mut b.running_mean[..], &mut b.running_var[..]])
            .collect()
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let (n, c, h, w) = x.dims4()?;
        if (c, h, w) != self.config.input {
            return Err(Error::Shape(format!(
                "input is {c}x{h}x{w}, network expects {:?}",
                self.config.input
            )));
        }
        if n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        Ok(n)
    }

    /// Eval-mode forward: running statistics, no dropout. Pure.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        let eps = T::from_f64_lossy(self.config.bn_eps);
        let mut h = x.clone();
        for b in &self.blocks {
            let z = conv2d_forward(&h, &b.weight, &b.bias, b.out_c, 3, 1)?;
            let p = BnParams { gamma: &b.gamma, beta: &b.beta, eps };
            let z = batchnorm_forward_eval(&z, &p, &b.running_mean, &b.running_var)?;
            h = maxpool2x2_forward(&relu_forward(&z))?.0;
        }
        let mut h = h.reshape(&[n, self.config.flatten_dim()])?;
        for d in &self.hidden {
            h = relu_forward(&dense_forward(&h, &d.weight, &d.bias)?);
        }
        dense_forward(&h, &self.head.weight, &self.head.bias)
    }

    /// Train-mode forward: batch statistics (running statistics are updated),
    /// fresh dropout masks from `rng`.
    pub fn forward_train(
        &mut self,
        x: &Tensor<T>,
        rng: &mut impl Rng,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let n = self.check_input(x)?;
        let eps = T::from_f64_lossy(self.config.bn_eps);
        let momentum = T::from_f64_lossy(self.config.bn_momentum);
        let mut cache = ForwardCache {
            block_inputs: Vec::new(),
            bn: Vec::new(),
            relu_out: Vec::new(),
            pool_arg: Vec::new(),
            dense_inputs: Vec::new(),
            dense_relu: Vec::new(),
            masks: Vec::new(),
        };
        let mut h = x.clone();
        for b in &mut self.blocks {
            let z = conv2d_forward(&h, &b.weight, &b.bias, b.out_c, 3, 1)?;
            cache.block_inputs.push(h);
            let p = BnParams { gamma: &b.gamma, beta: &b.beta, eps };
            let (z, bn) =
                batchnorm_forward_train(&z, &p, &mut b.running_mean, &mut b.running_var, momentum)?;
            let r = relu_forward(&z);
            let (pooled, arg) = maxpool2x2_forward(&r)?;
            cache.bn.push(bn);
            cache.relu_out.push(r);
            cache.pool_arg.push(arg);
            h = pooled;
        }
        let mut h = h.reshape(&[n, self.config.flatten_dim()])?;
        for d in &self.hidden {
            let r = relu_forward(&dense_forward(&h, &d.weight, &d.bias)?);
            let mask = dropout_mask(r.len(), self.config.dropout_p, rng)?;
            let out = apply_mask(&r, &mask)?;
            cache.dense_inputs.push(h);
            cache.dense_relu.push(r);
            cache.masks.push(mask);
            h = out;
        }
        let y = dense_forward(&h, &self.head.weight, &self.head.bias)?;
        cache.dense_inputs.push(h);
        Ok((y, cache))
    }

    /// Forward in the given mode; `rng` is only drawn from in train mode.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut impl Rng) -> Result<Tensor<T>> {
        match mode {
            Mode::Eval => self.predict(x),
            Mode::Train => self.forward_train(x, rng).map(|(y, _)| y),
        }
    }

    /// Gradients of the loss whose output gradient is `dy`, through the pass
    /// recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Tensor<T>) -> Result<Gradients<T>> {
        let n_dense = self.hidden.len();
        let mut dense_grads: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(n_dense + 1);

        let (mut g, dw, db) = dense_backward(&cache.dense_inputs[n_dense], &self.head.weight, dy)?;
        dense_grads.push((dw, db));
        for i in (0..n_dense).rev() {
            let d = &self.hidden[i];
            g = apply_mask(&g, &cache.masks[i])?;
            g = relu_backward(&cache.dense_relu[i], &g)?;
            let (gx, dw, db) = dense_backward(&cache.dense_inputs[i], &d.weight, &g)?;
            dense_grads.push((dw, db));
            g = gx;
        }
        dense_grads.reverse();

        let n = dy.dims2()?.0;
        let last = self.blocks.len() - 1;
        let pooled_shape = {
            let s = cache.relu_out[last].shape();
            [n, s[1], s[2] / 2, s[3] / 2]
        };
        let mut g = g.reshape(&pooled_shape)?;
        let mut block_grads: Vec<[Vec<T>; 4]> = Vec::with_capacity(self.blocks.len());
        for i in (0..self.blocks.len()).rev() {
            let b = &self.blocks[i];
            let gr = maxpool2x2_backward(cache.relu_out[i].shape(), &cache.pool_arg[i], &g)?;
            let gz = relu_backward(&cache.relu_out[i], &gr)?;
            let (gbn, dgamma, dbeta) = batchnorm_backward(&cache.bn[i], &b.gamma, &gz)?;
            let cg = conv2d_backward(&cache.block_inputs[i], &b.weight, b.out_c, 3, 1, &gbn, i > 0)?;
            block_grads.push([cg.dweight, cg.dbias, dgamma, dbeta]);
            if let Some(dx) = cg.dx {
                g = dx;
            }
        }
        block_grads.reverse();

        let mut out = Vec::new();
        for bg in block_grads {
            out.extend(bg);
        }
        for (dw, db) in dense_grads {
            out.push(dw);
            out.push(db);
        }
        Ok(Gradients(out))
    }

    /// Casts every value to another element type.
    pub fn cast<U: Real>(&self) -> ModelState<U> {
        let c = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::from_f64_lossy(x.to_f64_lossy())).collect() };
        ModelState {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock {
                    in_c: b.in_c,
                    out_c: b.out_c,
                    weight: c(&b.weight),
                    bias: c(&b.bias),
                    gamma: c(&b.gamma),
                    beta: c(&b.beta),
                    running_mean: c(&b.running_mean),
                    running_var: c(&b.running_var),
                })
                .collect(),
            hidden: self
                .hidden
                .iter()
                .map(|d| DenseLayer {
                    in_dim: d.in_dim,
                    out_dim: d.out_dim,
                    weight: c(&d.weight),
                    bias: c(&d.bias),
                })
                .collect(),
            head: DenseLayer {
                in_dim: self.head.in_dim,
                out_dim: self.head.out_dim,
                weight: c(&self.head.weight),
                bias: c(&self.head.bias),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkConfig {
        NetworkConfig {
            n_points: 2,
            input: (1, 16, 16),
            conv_channels: vec![2, 2, 2, 2],
            fc_sizes: vec![8, 8],
            ..NetworkConfig::new(2)
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a: ModelState<f32> = init_params(&tiny(), 4).unwrap();
        let b: ModelState<f32> = init_params(&tiny(), 4).unwrap();
        assert_eq!(a, b);
        let c: ModelState<f32> = init_params(&tiny(), 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_bn_identity() {
        let m: ModelState<f32> = init_params(&NetworkConfig::new(10), 0).unwrap();
        for b in &m.blocks {
            assert!(b.gamma.iter().all(|&g| g == 1.0));
            assert!(b.beta.iter().all(|&v| v == 0.0));
            assert!(b.running_mean.iter().all(|&v| v == 0.0));
            assert!(b.running_var.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn output_shape_and_eval_determinism() {
        let m: ModelState<f32> = init_params(&NetworkConfig::new(10), 1).unwrap();
        let x = Tensor::from_vec(&[2, 1, 128, 128], (0..2 * 128 * 128).map(|i| (i % 97) as f32 / 97.0).collect()).unwrap();
        let y = m.predict(&x).unwrap();
        assert_eq!(y.shape(), &[2, 20]);
        assert!(y.is_finite());
        assert_eq!(y, m.predict(&x).unwrap());
    }

    #[test]
    fn wrong_input_size_rejected() {
        let m: ModelState<f32> = init_params(&tiny(), 1).unwrap();
        assert!(matches!(m.predict(&Tensor::zeros(&[1, 1, 8, 8])), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_layout_matches_params() {
        let mut m: ModelState<f64> = init_params(&tiny(), 2).unwrap();
        let x = Tensor::from_vec(&[3, 1, 16, 16], (0..3 * 256).map(|i| ((i * 37) % 101) as f64 / 101.0).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, cache) = m.forward_train(&x, &mut rng).unwrap();
        let g = m.backward(&cache, &y).unwrap();
        let lens: Vec<usize> = m.params().iter().map(|p| p.len()).collect();
        assert_eq!(g.0.iter().map(|v| v.len()).collect::<Vec<_>>(), lens);
    }

    #[test]
    fn invalid_configs() {
        let mut c = tiny();
        c.input = (1, 20, 16);
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.dropout_p = 1.0;
        assert!(c.validate().is_err());
    }
}
