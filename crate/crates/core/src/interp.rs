//! Interpolation-based front-ends that DSF generalizes.
//!
//! All four variants compute `Y = diag(α)·X + (I − diag(α))·W·X` with a
//! zero-diagonal interpolation matrix `W`:
//!
//! | kind          | α                         | W                     |
//! |---------------|---------------------------|-----------------------|
//! | `InterpOnly`  | 0                         | learned, static       |
//! | `Scalar`      | one sigmoid output, tiled | learned, static       |
//! | `Vector`      | C sigmoid outputs         | learned, static       |
//! | `Dynamic`     | diagonal of MLP output    | off-diagonal of MLP   |

use rand::Rng;

use crate::dsf::Mlp;
use crate::error::{DsfError, Result};
use crate::linalg::Matrix;
use crate::nn::layers::{sigmoid, Cache};
use crate::nn::{Grads, ParamId, ParamStore, Tensor};
use crate::spatial::phi_logm_cov;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterpKind {
    InterpOnly,
    Scalar,
    Vector,
    Dynamic,
}

#[derive(Debug, Clone)]
pub struct InterpModule {
    pub kind: InterpKind,
    pub c: usize,
    pub w_static: Option<ParamId>,
    pub mlp: Option<Mlp>,
}

#[derive(Debug, Clone)]
pub struct InterpCache {
    x: Matrix,
    alpha: Vec<f64>,
    wx: Matrix,
    mlp: Option<(Vec<f64>, Vec<Cache>)>,
}

pub const PREFIX: &str = "interp.";

fn mlp_out_dim(kind: InterpKind, c: usize) -> Option<usize> {
    match kind {
        InterpKind::InterpOnly => None,
        InterpKind::Scalar => Some(1),
        InterpKind::Vector => Some(c),
        InterpKind::Dynamic => Some(c * c),
    }
}

/// `diag(α)·X + (I − diag(α))·W·X`; also returns `W·X`.
pub fn mix_apply(alpha: &[f64], w: &Matrix, x: &Matrix) -> Result<(Matrix, Matrix)> {
    if alpha.len() != x.rows() {
        return Err(DsfError::Shape(format!("{} attention weights for {} channels", alpha.len(), x.rows())));
    }
    let wx = w.matmul(x)?;
    let mut y = x.clone();
    for (i, &a) in alpha.iter().enumerate() {
        for (yv, &wv) in y.row_mut(i).iter_mut().zip(wx.row(i)) {
            *yv = a * *yv + (1.0 - a) * wv;
        }
    }
    Ok((y, wx))
}

/// `Ω = diag(α) + (I − diag(α))·W_X` for zero-diagonal `W_X`.
pub fn dynamic_omega(alpha: &[f64], w_x: &Matrix) -> Result<Matrix> {
    let c = alpha.len();
    if w_x.rows() != c || w_x.cols() != c {
        return Err(DsfError::Shape(format!("W_X must be {c}x{c}")));
    }
    if (0..c).any(|i| w_x[(i, i)] != 0.0) {
        return Err(DsfError::InvalidInput("W_X must have a zero diagonal".into()));
    }
    if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(DsfError::InvalidInput("attention weights must lie in [0, 1]".into()));
    }
    let mut omega = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            omega[(i, j)] = if i == j { alpha[i] } else { (1.0 - alpha[i]) * w_x[(i, j)] };
        }
    }
    Ok(omega)
}

/// Uniform averaging over the other channels.
pub fn uniform_interpolation(c: usize) -> Matrix {
    let mut w = Matrix::zeros(c, c);
    if c > 1 {
        let v = 1.0 / (c - 1) as f64;
        for i in 0..c {
            for j in 0..c {
                if i != j {
                    w[(i, j)] = v;
                }
            }
        }
    }
    w
}

impl InterpModule {
    pub fn build<R: Rng + ?Sized>(ps: &mut ParamStore, kind: InterpKind, c: usize, rng: &mut R) -> Result<Self> {
        if c < 2 {
            return Err(DsfError::Config("interpolation needs at least 2 channels".into()));
        }
        let w_static = if kind == InterpKind::Dynamic {
            None
        } else {
            let w = uniform_interpolation(c);
            Some(ps.add(&format!("{PREFIX}weight"), Tensor::from_matrix(&w))?)
        };
        let mlp = match mlp_out_dim(kind, c) {
            Some(out) => Some(Mlp::build(ps, PREFIX, c * (c + 1) / 2, c * c, out, rng)?),
            None => None,
        };
        Ok(Self { kind, c, w_static, mlp })
    }

    pub fn attach(ps: &ParamStore, kind: InterpKind, c: usize) -> Result<Self> {
        let w_static = if kind == InterpKind::Dynamic { None } else { Some(ps.require(&format!("{PREFIX}weight"))?) };
        let mlp = match mlp_out_dim(kind, c) {
            Some(out) => Some(Mlp::attach(ps, PREFIX, c * (c + 1) / 2, c * c, out)?),
            None => None,
        };
        Ok(Self { kind, c, w_static, mlp })
    }

    /// Attention weights and interpolation matrix for `x`.
    pub fn components(&self, ps: &ParamStore, x: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let (alpha, w, _) = self.components_cached(ps, x)?;
        Ok((alpha, w))
    }

    #[allow(clippy::type_complexity)]
    fn components_cached(&self, ps: &ParamStore, x: &Matrix) -> Result<(Vec<f64>, Matrix, Option<(Vec<f64>, Vec<Cache>)>)> {
        let c = self.c;
        if x.rows() != c {
            return Err(DsfError::Shape(format!("interpolation expects {c} channels, got {}", x.rows())));
        }
        let mlp_out = match &self.mlp {
            Some(mlp) => {
                let summary = phi_logm_cov(x)?;
                Some(mlp.forward(ps, &summary.values)?)
            }
            None => None,
        };
        let static_w = |id: ParamId| Matrix::from_vec(c, c, ps.value(id).to_vec());
        let (alpha, w) = match (self.kind, &mlp_out) {
            (InterpKind::InterpOnly, _) => (vec![0.0; c], static_w(self.w_static.unwrap())?),
            (InterpKind::Scalar, Some((h, _))) => (vec![sigmoid(h[0]); c], static_w(self.w_static.unwrap())?),
            (InterpKind::Vector, Some((h, _))) => (h.iter().map(|&v| sigmoid(v)).collect(), static_w(self.w_static.unwrap())?),
            (InterpKind::Dynamic, Some((h, _))) => {
                let alpha = (0..c).map(|i| sigmoid(h[i * c + i])).collect();
                let mut w = Matrix::from_vec(c, c, h.clone())?;
                for i in 0..c {
                    w[(i, i)] = 0.0;
                }
                (alpha, w)
            }
            _ => unreachable!("attention variants always carry an MLP"),
        };
        Ok((alpha, w, mlp_out))
    }

    pub fn forward(&self, ps: &ParamStore, x: &Matrix) -> Result<(Matrix, InterpCache)> {
        let (alpha, w, mlp) = self.components_cached(ps, x)?;
        let (y, wx) = mix_apply(&alpha, &w, x)?;
        Ok((y, InterpCache { x: x.clone(), alpha, wx, mlp }))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &InterpCache, dy: &Matrix, grads: &mut Grads) -> Result<()> {
        let c = self.c;
        let x = &cache.x;
        // dα_i = Σ_t dY_it (X_it − (WX)_it);  d(WX)_i = (1 − α_i) dY_i
        let mut dalpha = vec![0.0; c];
        let mut dwx = Matrix::zeros(c, x.cols());
        for i in 0..c {
            let a = cache.alpha[i];
            dalpha[i] = dy.row(i).iter().zip(x.row(i)).zip(cache.wx.row(i)).map(|((g, xv), wv)| g * (xv - wv)).sum();
            for (d, &g) in dwx.row_mut(i).iter_mut().zip(dy.row(i)) {
                *d = (1.0 - a) * g;
            }
        }
        let dw = dwx.matmul(&x.transpose())?;

        if let Some(id) = self.w_static {
            let g = grads.get_mut(id);
            for i in 0..c {
                for j in 0..c {
                    if i != j {
                        g[i * c + j] += dw[(i, j)];
                    }
                }
            }
        }
        if let (Some(mlp), Some((_, caches))) = (&self.mlp, &cache.mlp) {
            let dsig = |i: usize| cache.alpha[i] * (1.0 - cache.alpha[i]);
            let dh: Vec<f64> = match self.kind {
                InterpKind::Scalar => vec![(0..c).map(|i| dalpha[i]).sum::<f64>() * dsig(0)],
                InterpKind::Vector => (0..c).map(|i| dalpha[i] * dsig(i)).collect(),
                InterpKind::Dynamic => {
                    let mut dh = vec![0.0; c * c];
                    for i in 0..c {
                        for j in 0..c {
                            dh[i * c + j] = if i == j { dalpha[i] * dsig(i) } else { dw[(i, j)] };
                        }
                    }
                    dh
                }
                InterpKind::InterpOnly => unreachable!(),
            };
            mlp.backward(ps, caches, &dh, grads)?;
        }
        Ok(())
    }

    /// Forces the static interpolation matrix back to a zero diagonal.
    pub fn clamp_diagonal(&self, ps: &mut ParamStore) {
        if let Some(id) = self.w_static {
            let c = self.c;
            let w = ps.value_mut(id);
            for i in 0..c {
                w[i * c + i] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_param_gradients;
    use crate::nn::{adamw_step, TrainConfig};
    use crate::rng::{rng_from_seed, standard_normal};

    fn random(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        Matrix::from_vec(r, c, (0..r * c).map(|_| standard_normal(&mut rng)).collect()).unwrap()
    }

    fn window(c: usize, t: usize, seed: u64) -> Matrix {
        let mut x = random(c, t, seed);
        for i in 0..c {
            x.row_mut(i).iter_mut().for_each(|v| *v *= 1.0 + i as f64);
        }
        x
    }

    fn zero_diag(mut w: Matrix) -> Matrix {
        for i in 0..w.rows() {
            w[(i, i)] = 0.0;
        }
        w
    }

    #[test]
    fn endpoints() {
        let x = window(4, 30, 1);
        let w = zero_diag(random(4, 4, 2));
        let (y, _) = mix_apply(&[0.0; 4], &Matrix::zeros(4, 4), &x).unwrap();
        assert_eq!(y, Matrix::zeros(4, 30));
        let (y, _) = mix_apply(&[1.0; 4], &w, &x).unwrap();
        assert_eq!(y, x);
        let (y, wx) = mix_apply(&[0.0; 4], &w, &x).unwrap();
        assert_eq!(y, wx);
        assert_eq!(y, w.matmul(&x).unwrap());
    }

    #[test]
    fn interp_only_with_zero_weights_outputs_zero() {
        let mut ps = ParamStore::new();
        let m = InterpModule::build(&mut ps, InterpKind::InterpOnly, 3, &mut rng_from_seed(0)).unwrap();
        ps.value_mut(m.w_static.unwrap()).fill(0.0);
        let (y, _) = m.forward(&ps, &window(3, 20, 3)).unwrap();
        assert_eq!(y, Matrix::zeros(3, 20));
    }

    #[test]
    fn omega_endpoints_and_equivalence() {
        let w = zero_diag(random(5, 5, 4));
        assert_eq!(dynamic_omega(&[1.0; 5], &w).unwrap(), Matrix::identity(5));
        assert_eq!(dynamic_omega(&[0.0; 5], &w).unwrap(), w);
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            let alpha: Vec<f64> = (0..5).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
            let x = random(5, 40, rand::Rng::gen(&mut rng));
            let direct = dynamic_omega(&alpha, &w).unwrap().matmul(&x).unwrap();
            let (two_term, _) = mix_apply(&alpha, &w, &x).unwrap();
            assert!(direct.sub(&two_term).unwrap().max_abs() < 1e-12);
        }
        assert!(dynamic_omega(&[0.5; 5], &Matrix::identity(5)).is_err());
    }

    #[test]
    fn scalar_and_vector_coincide_for_tied_weights() {
        let x = window(4, 25, 6);
        let w = zero_diag(random(4, 4, 7));
        let a = 0.37;
        let (ys, _) = mix_apply(&[a; 4], &w, &x).unwrap();
        let mut yv = x.scale(a);
        let wx = w.matmul(&x).unwrap();
        for i in 0..4 {
            for (v, &q) in yv.row_mut(i).iter_mut().zip(wx.row(i)) {
                *v += (1.0 - a) * q;
            }
        }
        assert!(ys.sub(&yv).unwrap().max_abs() < 1e-12);
    }

    // Each rung reproduces the previous one under a parameter embedding.
    #[test]
    fn ladder_embeddings() {
        let c = 3;
        let x = window(c, 40, 8);
        let mut ps = ParamStore::new();
        let only = InterpModule::build(&mut ps, InterpKind::InterpOnly, c, &mut rng_from_seed(1)).unwrap();
        let w_static = Matrix::from_vec(c, c, ps.value(only.w_static.unwrap()).to_vec()).unwrap();
        let (y_only, _) = only.forward(&ps, &x).unwrap();

        // interp_only = scalar with α → 0: saturate the scalar MLP's output bias.
        let mut ps_s = ParamStore::new();
        let scalar = InterpModule::build(&mut ps_s, InterpKind::Scalar, c, &mut rng_from_seed(2)).unwrap();
        ps_s.value_mut(scalar.w_static.unwrap()).copy_from_slice(w_static.data());
        let ids = scalar.mlp.as_ref().unwrap().param_ids();
        ps_s.value_mut(ids[2]).fill(0.0);
        ps_s.value_mut(ids[3]).fill(-800.0);
        let (y_scalar, _) = scalar.forward(&ps_s, &x).unwrap();
        assert!(y_scalar.sub(&y_only).unwrap().max_abs() < 1e-12);

        // scalar = vector with every output row tied to the scalar one.
        let mut ps_s = ParamStore::new();
        let scalar = InterpModule::build(&mut ps_s, InterpKind::Scalar, c, &mut rng_from_seed(3)).unwrap();
        let mut ps_v = ParamStore::new();
        let vector = InterpModule::build(&mut ps_v, InterpKind::Vector, c, &mut rng_from_seed(4)).unwrap();
        let (si, vi) = (scalar.mlp.as_ref().unwrap().param_ids(), vector.mlp.as_ref().unwrap().param_ids());
        let w1 = ps_s.value(si[0]).to_vec();
        let b1 = ps_s.value(si[1]).to_vec();
        let w2 = ps_s.value(si[2]).to_vec();
        let b2 = ps_s.value(si[3])[0];
        ps_v.value_mut(vi[0]).copy_from_slice(&w1);
        ps_v.value_mut(vi[1]).copy_from_slice(&b1);
        for row in ps_v.value_mut(vi[2]).chunks_mut(w2.len()) {
            row.copy_from_slice(&w2);
        }
        ps_v.value_mut(vi[3]).fill(b2);
        let ws = ps_s.value(scalar.w_static.unwrap()).to_vec();
        ps_v.value_mut(vector.w_static.unwrap()).copy_from_slice(&ws);
        let (y_s, _) = scalar.forward(&ps_s, &x).unwrap();
        let (y_v, _) = vector.forward(&ps_v, &x).unwrap();
        assert!(y_s.sub(&y_v).unwrap().max_abs() < 1e-12);

        // vector = dynamic with constant W_X: zero output weights off the diagonal,
        // biases carrying W, diagonal rows copying the vector MLP.
        let mut ps_d = ParamStore::new();
        let dynamic = InterpModule::build(&mut ps_d, InterpKind::Dynamic, c, &mut rng_from_seed(5)).unwrap();
        let di = dynamic.mlp.as_ref().unwrap().param_ids();
        let hidden = c * c;
        let vw1 = ps_v.value(vi[0]).to_vec();
        let vb1 = ps_v.value(vi[1]).to_vec();
        let vw2 = ps_v.value(vi[2]).to_vec();
        let vb2 = ps_v.value(vi[3]).to_vec();
        ps_d.value_mut(di[0]).copy_from_slice(&vw1);
        ps_d.value_mut(di[1]).copy_from_slice(&vb1);
        {
            let w2 = ps_d.value_mut(di[2]);
            w2.fill(0.0);
            for i in 0..c {
                let out = i * c + i;
                w2[out * hidden..(out + 1) * hidden].copy_from_slice(&vw2[i * hidden..(i + 1) * hidden]);
            }
        }
        {
            let b2 = ps_d.value_mut(di[3]);
            for i in 0..c {
                for j in 0..c {
                    b2[i * c + j] = if i == j { vb2[i] } else { ws[i * c + j] };
                }
            }
        }
        let (y_d, _) = dynamic.forward(&ps_d, &x).unwrap();
        assert!(y_v.sub(&y_d).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20u64 {
            for kind in [InterpKind::InterpOnly, InterpKind::Scalar, InterpKind::Vector, InterpKind::Dynamic] {
                let mut ps = ParamStore::new();
                let m = InterpModule::build(&mut ps, kind, 3, &mut rng_from_seed(seed)).unwrap();
                let x = window(3, 30, 50 + seed);
                // Keep the objective near unit scale so difference quotients resolve small gradients.
                let probe = random(3, 30, 90 + seed).scale(0.1);
                let objective = |p: &ParamStore| -> f64 {
                    let (y, _) = m.forward(p, &x).unwrap();
                    y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
                };
                let (_, cache) = m.forward(&ps, &x).unwrap();
                let mut grads = ps.grads_like();
                m.backward(&ps, &cache, &probe, &mut grads).unwrap();
                // The static diagonal is clamped, so it carries no gradient; compare off-diagonal only.
                if let Some(id) = m.w_static {
                    for i in 0..3 {
                        assert_eq!(grads.get(id)[i * 3 + i], 0.0);
                    }
                }
                let rep = check_param_gradients(&ps, &grads, 1e-5, |p| {
                    let mut masked = p.clone();
                    if let Some(id) = m.w_static {
                        // Diagonal perturbations are projected away, as the clamp does in training.
                        let orig = ps.value(id).to_vec();
                        for i in 0..3 {
                            masked.value_mut(id)[i * 3 + i] = orig[i * 3 + i];
                        }
                    }
                    objective(&masked)
                });
                assert!(rep.max_rel_error < 1e-4, "{kind:?} seed {seed}: {rep:?}");
            }
        }
    }

    #[test]
    fn diagonal_stays_zero_through_training_steps() {
        let mut ps = ParamStore::new();
        let m = InterpModule::build(&mut ps, InterpKind::Vector, 4, &mut rng_from_seed(1)).unwrap();
        let cfg = TrainConfig { weight_decay: 0.01, ..Default::default() };
        for step in 1..=20u64 {
            let x = window(4, 50, 100 + step);
            let (_, cache) = m.forward(&ps, &x).unwrap();
            let mut grads = ps.grads_like();
            m.backward(&ps, &cache, &random(4, 50, step), &mut grads).unwrap();
            ps.set_grads(&grads);
            adamw_step(&mut ps, 1e-2, &cfg, step);
            m.clamp_diagonal(&mut ps);
            let w = ps.value(m.w_static.unwrap());
            assert!((0..4).all(|i| w[i * 4 + i] == 0.0));
        }
        let (alpha, _) = m.components(&ps, &window(4, 50, 9)).unwrap();
        assert!(alpha.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}
