use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// `x · weight + bias` with `weight: [in, out]`, `bias: [1, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub weight: T,
    pub bias: T,
}

/// Affine → relu → affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub hidden: Affine<T>,
    pub output: Affine<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GinParams<T> {
    /// Applied to the scaled self feature `(1 + theta) * f_i`.
    pub mlp0: Mlp<T>,
    /// Applied to the neighbour sum.
    pub mlp1: Mlp<T>,
    /// Scalar self-weight, shape `[1]`.
    pub theta: T,
}

/// `kernel: [C_out, C_in, kh, kw]`, `bias: [C_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub kernel: T,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbamParams<T> {
    /// `C -> C/r -> C`, shared by the average- and max-pooled branches.
    pub channel_mlp: Mlp<T>,
    /// 2 → 1 channel, 7×7.
    pub spatial_conv: ConvParams<T>,
}

/// Every learnable tensor of the network, generic over the leaf type so the
/// same tree holds shapes, owned tensors, or tape variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub embed: Affine<T>,
    pub gin: GinParams<T>,
    pub convs: [ConvParams<T>; 3],
    pub cbams: [CbamParams<T>; 3],
    pub head: Affine<T>,
}

impl<T> Affine<T> {
    fn map<'a, U>(&'a self, p: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> Affine<U> {
        Affine {
            weight: f(&format!("{p}.weight"), &self.weight),
            bias: f(&format!("{p}.bias"), &self.bias),
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{p}.weight"), &mut self.weight);
        f(&format!("{p}.bias"), &mut self.bias);
    }
}

impl<T> Mlp<T> {
    fn map<'a, U>(&'a self, p: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> Mlp<U> {
        Mlp {
            hidden: self.hidden.map(&format!("{p}.hidden"), f),
            output: self.output.map(&format!("{p}.output"), f),
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut impl FnMut(&str, &mut T)) {
        self.hidden.visit_mut(&format!("{p}.hidden"), f);
        self.output.visit_mut(&format!("{p}.output"), f);
    }
}

impl<T> ConvParams<T> {
    fn map<'a, U>(&'a self, p: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> ConvParams<U> {
        ConvParams {
            kernel: f(&format!("{p}.kernel"), &self.kernel),
            bias: f(&format!("{p}.bias"), &self.bias),
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{p}.kernel"), &mut self.kernel);
        f(&format!("{p}.bias"), &mut self.bias);
    }
}

impl<T> CbamParams<T> {
    fn map<'a, U>(&'a self, p: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> CbamParams<U> {
        CbamParams {
            channel_mlp: self.channel_mlp.map(&format!("{p}.channel_mlp"), f),
            spatial_conv: self.spatial_conv.map(&format!("{p}.spatial_conv"), f),
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut impl FnMut(&str, &mut T)) {
        self.channel_mlp.visit_mut(&format!("{p}.channel_mlp"), f);
        self.spatial_conv.visit_mut(&format!("{p}.spatial_conv"), f);
    }
}

impl<T> Weights<T> {
    /// Maps every leaf in canonical order, passing its dotted name.
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, &'a T) -> U) -> Weights<U> {
        let embed = self.embed.map("embed", f);
        let gin = GinParams {
            mlp0: self.gin.mlp0.map("gin.mlp0", f),
            mlp1: self.gin.mlp1.map("gin.mlp1", f),
            theta: f("gin.theta", &self.gin.theta),
        };
        let c = &self.convs;
        let convs = [c[0].map("conv1", f), c[1].map("conv2", f), c[2].map("conv3", f)];
        let a = &self.cbams;
        let cbams = [a[0].map("cbam1", f), a[1].map("cbam2", f), a[2].map("cbam3", f)];
        Weights {
            embed,
            gin,
            convs,
            cbams,
            head: self.head.map("head", f),
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
        self.embed.visit_mut("embed", f);
        self.gin.mlp0.visit_mut("gin.mlp0", f);
        self.gin.mlp1.visit_mut("gin.mlp1", f);
        f("gin.theta", &mut self.gin.theta);
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit_mut(&format!("conv{}", i + 1), f);
        }
        for (i, c) in self.cbams.iter_mut().enumerate() {
            c.visit_mut(&format!("cbam{}", i + 1), f);
        }
        self.head.visit_mut("head", f);
    }

    /// Leaves with their names, in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(&mut |name, t| out.push((name.to_string(), t)));
        out
    }
}

fn affine_shape(fan_in: usize, fan_out: usize) -> Affine<Vec<usize>> {
    Affine {
        weight: vec![fan_in, fan_out],
        bias: vec![1, fan_out],
    }
}

fn mlp_shape(input: usize, hidden: usize, output: usize) -> Mlp<Vec<usize>> {
    Mlp {
        hidden: affine_shape(input, hidden),
        output: affine_shape(hidden, output),
    }
}

fn conv_shape(c_out: usize, c_in: usize, kh: usize, kw: usize) -> ConvParams<Vec<usize>> {
    ConvParams {
        kernel: vec![c_out, c_in, kh, kw],
        bias: vec![c_out],
    }
}

/// Parameter shapes implied by `cfg`.
pub fn layout(cfg: &ModelConfig) -> Weights<Vec<usize>> {
    let g = cfg.gin_out();
    let [c1, c2, c3] = cfg.conv_channels;
    let k = cfg.spatial_kernel;
    let cbam = |c: usize| CbamParams {
        channel_mlp: mlp_shape(c, c / cfg.cbam_reduction, c),
        spatial_conv: conv_shape(1, 2, k, k),
    };
    Weights {
        embed: affine_shape(4 * cfg.t_in, cfg.embed_dim),
        gin: GinParams {
            mlp0: mlp_shape(cfg.embed_dim, cfg.mlp_hidden, g),
            mlp1: mlp_shape(cfg.embed_dim, cfg.mlp_hidden, g),
            theta: vec![1],
        },
        convs: [conv_shape(c1, 1, 2, 2), conv_shape(c2, c1, 2, 1), conv_shape(c3, c2, 2, 1)],
        cbams: [cbam(c1), cbam(c2), cbam(c3)],
        head: affine_shape(c3 * cfg.t_in, 2 * cfg.t_out),
    }
}

/// Learnable state of a model together with the configuration it was
/// built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: Weights<Tensor>,
}

impl ModelParams {
    /// Glorot-uniform weights and kernels, zero biases, `theta = 0`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = layout(&config).map(&mut |name, shape| {
            let limit = glorot_limit(name, shape);
            let n = shape.iter().product();
            let data = match limit {
                Some(l) => (0..n).map(|_| rng.gen_range(-l..=l)).collect(),
                None => vec![0.0; n],
            };
            Tensor::new(shape.clone(), data).expect("layout shapes are positive")
        });
        Ok(Self { config, weights })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let weights = layout(&config).map(&mut |_, shape| Tensor::zeros(shape.clone()));
        Ok(Self { config, weights })
    }

    /// Assembles parameters from named tensors, checking every shape
    /// against the layout for `config`.
    pub fn from_named(config: ModelConfig, mut tensors: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let shapes = layout(&config);
        let expected = shapes.named();
        if tensors.len() != expected.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        let mut failure = None;
        let weights = shapes.map(&mut |name, shape| {
            let pos = tensors.iter().position(|(n, _)| n == name);
            match pos {
                Some(p) if tensors[p].1.shape() == shape.as_slice() => tensors.swap_remove(p).1,
                Some(p) => {
                    failure.get_or_insert_with(|| {
                        format!(
                            "tensor `{name}` has shape {:?}, config requires {shape:?}",
                            tensors[p].1.shape()
                        )
                    });
                    Tensor::zeros(shape.clone())
                }
                None => {
                    failure.get_or_insert_with(|| format!("tensor `{name}` is missing"));
                    Tensor::zeros(shape.clone())
                }
            }
        });
        match failure {
            Some(msg) => Err(Error::Format(msg)),
            None => Ok(Self { config, weights }),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.weights.named()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Records every tensor as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> Weights<Var> {
        self.weights.map(&mut |_, t| {
            let mut t = t.clone();
            t.set_tracked(tracked);
            tape.leaf(t)
        })
    }
}

fn glorot_limit(name: &str, shape: &[usize]) -> Option<f64> {
    let (fan_in, fan_out) = if name.ends_with(".weight") {
        (shape[0], shape[1])
    } else if name.ends_with(".kernel") {
        let area = shape[2] * shape[3];
        (shape[1] * area, shape[0] * area)
    } else {
        return None;
    };
    Some((6.0 / (fan_in + fan_out) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_affine_count() {
        let a = affine_shape(7, 3);
        assert_eq!(a.weight.iter().product::<usize>() + a.bias.iter().product::<usize>(), 7 * 3 + 3);
    }

    #[test]
    fn theta_is_one_scalar() {
        let p = ModelParams::init(ModelConfig::pedestrian(), 0).unwrap();
        assert_eq!(p.weights.gin.theta.shape(), &[1]);
        assert_eq!(p.weights.gin.theta.item(), 0.0);
        let names: Vec<_> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.iter().filter(|n| n.contains("theta")).count(), 1);
    }

    #[test]
    fn counts_are_deterministic() {
        let a = ModelParams::init(ModelConfig::vehicle(), 1).unwrap();
        let b = ModelParams::init(ModelConfig::vehicle(), 2).unwrap();
        assert_eq!(a.parameter_count(), b.parameter_count());
        assert_eq!(a.parameter_count(), 151_470);
        assert_eq!(ModelParams::init(ModelConfig::pedestrian(), 1).unwrap().parameter_count(), 45_612);
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let p = ModelParams::init(ModelConfig::pedestrian(), 3).unwrap();
        let w = &p.weights.embed.weight;
        let limit = (6.0 / (32.0 + 64.0f64)).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
        assert!(p.weights.head.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_named_rejects_bad_shape() {
        let cfg = ModelConfig::pedestrian();
        let p = ModelParams::init(cfg, 0).unwrap();
        let mut named: Vec<(String, Tensor)> = p
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        assert_eq!(ModelParams::from_named(cfg, named.clone()).unwrap(), p);
        named[0].1 = Tensor::zeros([3, 3]);
        let err = ModelParams::from_named(cfg, named).unwrap_err().to_string();
        assert!(err.contains("embed.weight"), "{err}");
    }
}
