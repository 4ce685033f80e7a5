//! ShallowNet-style classifier: temporal conv → spatial conv → square →
//! average pool → log → dropout → dense.

use rand::Rng;

use super::init::he_uniform_init;
use super::layers::{Cache, Layer, Mode, Sequential};
use super::params::{Grads, ParamStore};
use super::tensor::Tensor;
use crate::error::{DsfError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNetConfig {
    pub n_filters_time: usize,
    pub kernel_time: usize,
    pub n_filters_spat: usize,
    pub pool_width: usize,
    pub pool_stride: usize,
    pub dropout_rate: f64,
    pub n_classes: usize,
}

impl Default for ShallowNetConfig {
    fn default() -> Self {
        Self {
            n_filters_time: 8,
            kernel_time: 25,
            n_filters_spat: 8,
            pool_width: 75,
            pool_stride: 15,
            dropout_rate: 0.5,
            n_classes: 2,
        }
    }
}

impl ShallowNetConfig {
    /// Pooled time length for `n_times` input samples.
    pub fn pooled_len(&self, n_times: usize) -> Result<usize> {
        let after_conv = n_times.checked_sub(self.kernel_time).map(|v| v + 1).unwrap_or(0);
        if after_conv < self.pool_width || self.pool_stride == 0 {
            return Err(DsfError::Shape(format!(
                "T={n_times} too short for kernel {} and pool window {}",
                self.kernel_time, self.pool_width
            )));
        }
        Ok((after_conv - self.pool_width) / self.pool_stride + 1)
    }
}

#[derive(Debug, Clone)]
pub struct ShallowNet {
    pub config: ShallowNetConfig,
    pub in_channels: usize,
    pub n_times: usize,
    net: Sequential,
}

impl ShallowNet {
    /// Registers parameters under `prefix` with He-uniform weights and zero biases.
    pub fn build<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        prefix: &str,
        config: ShallowNetConfig,
        in_channels: usize,
        n_times: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let pooled = config.pooled_len(n_times)?;
        let (nt, kt, ns) = (config.n_filters_time, config.kernel_time, config.n_filters_spat);
        let tw = ps.add(&format!("{prefix}conv_time.weight"), he_uniform_init(&[nt, kt], kt, rng))?;
        let tb = ps.add(&format!("{prefix}conv_time.bias"), Tensor::zeros(&[nt]))?;
        let m = nt * in_channels;
        let sw = ps.add(&format!("{prefix}conv_spat.weight"), he_uniform_init(&[ns, m], m, rng))?;
        let sb = ps.add(&format!("{prefix}conv_spat.bias"), Tensor::zeros(&[ns]))?;
        let feat = ns * pooled;
        let dw = ps.add(&format!("{prefix}classifier.weight"), he_uniform_init(&[config.n_classes, feat], feat, rng))?;
        let db = ps.add(&format!("{prefix}classifier.bias"), Tensor::zeros(&[config.n_classes]))?;
        let net = Sequential::new(vec![
            Layer::TemporalConv { weight: tw, bias: tb, n_filters: nt, kernel: kt },
            Layer::SpatialConv { weight: sw, bias: sb, in_rows: m, out_rows: ns },
            Layer::Square,
            Layer::AvgPool { width: config.pool_width, stride: config.pool_stride },
            Layer::Log,
            Layer::Dropout { rate: config.dropout_rate },
            Layer::Dense { weight: dw, bias: db, in_dim: feat, out_dim: config.n_classes },
        ]);
        Ok(Self { config, in_channels, n_times, net })
    }

    /// Reattaches to parameters already present in `ps` (e.g. loaded from disk).
    pub fn attach(ps: &ParamStore, prefix: &str, config: ShallowNetConfig, in_channels: usize, n_times: usize) -> Result<Self> {
        let pooled = config.pooled_len(n_times)?;
        let id = |n: &str| ps.require(&format!("{prefix}{n}"));
        let m = config.n_filters_time * in_channels;
        let feat = config.n_filters_spat * pooled;
        let net = Sequential::new(vec![
            Layer::TemporalConv {
                weight: id("conv_time.weight")?,
                bias: id("conv_time.bias")?,
                n_filters: config.n_filters_time,
                kernel: config.kernel_time,
            },
            Layer::SpatialConv {
                weight: id("conv_spat.weight")?,
                bias: id("conv_spat.bias")?,
                in_rows: m,
                out_rows: config.n_filters_spat,
            },
            Layer::Square,
            Layer::AvgPool { width: config.pool_width, stride: config.pool_stride },
            Layer::Log,
            Layer::Dropout { rate: config.dropout_rate },
            Layer::Dense { weight: id("classifier.weight")?, bias: id("classifier.bias")?, in_dim: feat, out_dim: config.n_classes },
        ]);
        Ok(Self { config, in_channels, n_times, net })
    }

    /// Logits (length `n_classes`) for one C′×T example.
    pub fn forward(&self, ps: &ParamStore, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, Vec<Cache>)> {
        let (c, t) = x.dims2()?;
        if c != self.in_channels || t != self.n_times {
            return Err(DsfError::Shape(format!(
                "ShallowNet built for {}x{}, got {c}x{t}",
                self.in_channels, self.n_times
            )));
        }
        self.net.forward(ps, x, mode)
    }

    /// Features entering the dense layer (after log, before dropout), eval mode.
    pub fn features(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let head = Sequential::new(self.net.layers[..5].to_vec());
        Ok(head.forward(ps, x, &mut Mode::Eval)?.0)
    }

    pub fn backward(&self, ps: &ParamStore, caches: &[Cache], dlogits: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        self.net.backward(ps, caches, dlogits, grads)
    }

    /// Batched logits, batch × n_classes.
    pub fn forward_batch(&self, ps: &ParamStore, xs: &[Tensor]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(xs.len() * self.config.n_classes);
        for x in xs {
            out.extend_from_slice(self.forward(ps, x, &mut Mode::Eval)?.0.data());
        }
        Tensor::from_vec(&[xs.len(), self.config.n_classes], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_param_gradients;
    use crate::nn::loss::softmax_xent;
    use crate::rng::{rng_from_seed, standard_normal};

    fn small_config() -> ShallowNetConfig {
        ShallowNetConfig { n_filters_time: 3, kernel_time: 5, n_filters_spat: 2, pool_width: 10, pool_stride: 5, dropout_rate: 0.5, n_classes: 2 }
    }

    fn random_window(c: usize, t: usize, seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        Tensor::from_vec(&[c, t], (0..c * t).map(|_| standard_normal(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn output_shape_for_several_lengths() {
        for t in [64, 100, 257] {
            let mut ps = ParamStore::new();
            let net = ShallowNet::build(&mut ps, "", small_config(), 3, t, &mut rng_from_seed(0)).unwrap();
            let xs = vec![random_window(3, t, 1), random_window(3, t, 2)];
            assert_eq!(net.forward_batch(&ps, &xs).unwrap().shape(), &[2, 2]);
        }
    }

    #[test]
    fn too_short_input_is_rejected() {
        let mut ps = ParamStore::new();
        assert!(ShallowNet::build(&mut ps, "", ShallowNetConfig::default(), 3, 90, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn delta_kernel_collapses_to_log_mean_power() {
        let cfg = ShallowNetConfig { n_filters_time: 1, kernel_time: 1, n_filters_spat: 1, pool_width: 64, pool_stride: 1, dropout_rate: 0.5, n_classes: 2 };
        let mut ps = ParamStore::new();
        let net = ShallowNet::build(&mut ps, "", cfg, 1, 64, &mut rng_from_seed(0)).unwrap();
        ps.value_mut(ps.id("conv_time.weight").unwrap()).fill(1.0);
        ps.value_mut(ps.id("conv_spat.weight").unwrap()).fill(1.0);
        let x = random_window(1, 64, 4);
        let feats = net.features(&ps, &x).unwrap();
        let power = x.data().iter().map(|v| v * v).sum::<f64>() / 64.0;
        assert!((feats.data()[0] - power.ln()).abs() < 1e-6);
    }

    #[test]
    fn end_to_end_gradient_check() {
        for seed in 0..20u64 {
            let mut ps = ParamStore::new();
            let net = ShallowNet::build(&mut ps, "", small_config(), 3, 64, &mut rng_from_seed(seed)).unwrap();
            let xs = [random_window(3, 64, 100 + seed), random_window(3, 64, 200 + seed)];
            let labels = [0usize, 1];
            let loss = |p: &ParamStore| -> f64 {
                let mut logits = Vec::new();
                for (i, x) in xs.iter().enumerate() {
                    let mut rng = rng_from_seed(seed * 10 + i as u64);
                    logits.extend_from_slice(net.forward(p, x, &mut Mode::Train(&mut rng)).unwrap().0.data());
                }
                softmax_xent(&Tensor::from_vec(&[2, 2], logits).unwrap(), &labels, &[1.0, 1.0]).unwrap().0
            };
            let mut grads = ps.grads_like();
            let mut logits = Vec::new();
            let mut caches = Vec::new();
            for (i, x) in xs.iter().enumerate() {
                let mut rng = rng_from_seed(seed * 10 + i as u64);
                let (y, c) = net.forward(&ps, x, &mut Mode::Train(&mut rng)).unwrap();
                logits.extend_from_slice(y.data());
                caches.push(c);
            }
            let (_, dl) = softmax_xent(&Tensor::from_vec(&[2, 2], logits).unwrap(), &labels, &[1.0, 1.0]).unwrap();
            for (i, c) in caches.iter().enumerate() {
                let row = Tensor::from_vec(&[2], dl.data()[i * 2..i * 2 + 2].to_vec()).unwrap();
                net.backward(&ps, c, &row, &mut grads).unwrap();
            }
            let rep = check_param_gradients(&ps, &grads, 1e-5, loss);
            assert!(rep.max_rel_error < 1e-4, "seed {seed}: {rep:?}");
        }
    }

    #[test]
    fn attach_reuses_loaded_parameters() {
        let mut ps = ParamStore::new();
        let net = ShallowNet::build(&mut ps, "f.", small_config(), 3, 64, &mut rng_from_seed(3)).unwrap();
        let loaded = ParamStore::from_bytes(&ps.to_bytes()).unwrap();
        let again = ShallowNet::attach(&loaded, "f.", small_config(), 3, 64).unwrap();
        let x = vec![random_window(3, 64, 5)];
        assert_eq!(net.forward_batch(&ps, &x).unwrap(), again.forward_batch(&loaded, &x).unwrap());
    }
}
