use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ops::Real;
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;

/// Architecture of the encoder-decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    /// Number of pooling / upsampling levels.
    pub depth: usize,
    /// Channels at the first level; doubled at each level down.
    pub base_channels: usize,
    pub in_channels: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            depth: 2,
            base_channels: 8,
            in_channels: 1,
        }
    }
}

/// One convolution of the layer plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvShape {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + self.out_channels
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth > 8 || self.base_channels == 0 || self.in_channels == 0 {
            return Err(Error::Config(format!("unsupported network spec {self:?}")));
        }
        Ok(())
    }

    /// Channels at level `l` (level `depth` is the bottleneck).
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial dimensions must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let m = self.size_multiple();
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::InvalidInput(format!(
                "input {h}x{w} is not divisible by {m} (network depth {})",
                self.depth
            )));
        }
        Ok(())
    }

    /// Convolutions in forward order: two per encoder level, two at the
    /// bottleneck, two per decoder level (deepest first), then the 1x1 head.
    pub fn conv_layers(&self) -> Vec<ConvShape> {
        let conv = |name: String, cin: usize, cout: usize, kernel: usize| ConvShape {
            name,
            in_channels: cin,
            out_channels: cout,
            kernel,
        };
        let mut layers = Vec::with_capacity(4 * self.depth + 3);
        let mut cin = self.in_channels;
        for l in 0..self.depth {
            let c = self.channels(l);
            layers.push(conv(format!("enc{l}.conv1"), cin, c, KERNEL));
            layers.push(conv(format!("enc{l}.conv2"), c, c, KERNEL));
            cin = c;
        }
        let cb = self.channels(self.depth);
        layers.push(conv("bottom.conv1".into(), cin, cb, KERNEL));
        layers.push(conv("bottom.conv2".into(), cb, cb, KERNEL));
        for l in (0..self.depth).rev() {
            let c = self.channels(l);
            layers.push(conv(format!("dec{l}.conv1"), self.channels(l + 1) + c, c, KERNEL));
            layers.push(conv(format!("dec{l}.conv2"), c, c, KERNEL));
        }
        layers.push(conv("head".into(), self.channels(0), 1, 1));
        layers
    }

    pub fn param_count(&self) -> usize {
        self.conv_layers().iter().map(ConvShape::param_count).sum()
    }
}

/// A named tensor with explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Network parameters in a fixed order: for each layer of
/// [`NetworkSpec::conv_layers`], its weight then its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let tensors = spec
            .conv_layers()
            .into_iter()
            .flat_map(|l| {
                let k = l.kernel;
                [
                    Tensor {
                        name: format!("{}.weight", l.name),
                        shape: vec![l.out_channels, l.in_channels, k, k],
                        data: vec![T::zero(); l.weight_len()],
                    },
                    Tensor {
                        name: format!("{}.bias", l.name),
                        shape: vec![l.out_channels],
                        data: vec![T::zero(); l.out_channels],
                    },
                ]
            })
            .collect();
        Self { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![T::zero(); t.data.len()],
                })
                .collect(),
        }
    }

    pub(crate) fn from_tensors(tensors: Vec<Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Weight and bias of the `i`-th convolution.
    pub(crate) fn layer(&self, i: usize) -> (&[T], &[T]) {
        (&self.tensors[2 * i].data, &self.tensors[2 * i + 1].data)
    }

    pub(crate) fn layer_mut(&mut self, i: usize) -> (&mut [T], &mut [T]) {
        let (w, b) = self.tensors[2 * i..2 * i + 2].split_at_mut(1);
        (&mut w[0].data, &mut b[0].data)
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    /// Checks that both sets have identical names and shapes.
    pub fn check_compatible<U>(&self, other: &ParamSet<U>) -> Result<()> {
        let same = self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if same {
            Ok(())
        } else {
            Err(Error::InvalidInput("parameter sets have different layouts".into()))
        }
    }

    /// `self += other`, element-wise in storage order.
    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.values_mut().for_each(|v| *v *= s);
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// He-normal kernels (`std = sqrt(2 / fan_in)`) and zero biases, drawn from a
/// ChaCha8 stream seeded with `seed`.
pub fn init_params<T: Real>(spec: &NetworkSpec, seed: u64) -> ParamSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::zeros(spec);
    for (i, layer) in spec.conv_layers().iter().enumerate() {
        let fan_in = (layer.in_channels * layer.kernel * layer.kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let (w, _) = params.layer_mut(i);
        for v in w {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = T::of(std * z);
        }
    }
    params
}
