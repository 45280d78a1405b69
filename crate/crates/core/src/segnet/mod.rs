//! A small U-Net-style encoder-decoder with an explicit reverse pass.
//!
//! Each level applies two same-padded 3x3 convolutions with ReLU; the encoder
//! downsamples by 2x2 max-pooling, the decoder upsamples by nearest-neighbor
//! replication and concatenates the matching encoder activation before its
//! convolutions. A 1x1 convolution and a sigmoid produce one probability per
//! pixel.

mod checkpoint;
mod gradcheck;
mod ops;
mod params;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use ops::Real;
pub use params::{init_params, ConvShape, NetworkSpec, ParamSet, Tensor, KERNEL};

use ops::{
    col2im, gemm, im2col, maxpool2, maxpool2_backward, sigmoid, upsample2, upsample2_backward,
    MatRef,
};

use crate::error::{check_len, Error, Result};

/// `N x 1 x H x W` input or output batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Batch<T> {
    pub fn new(n: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        check_len(n * h * w, data.len())?;
        Ok(Self { n, h, w, data })
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let len = self.h * self.w;
        &self.data[i * len..(i + 1) * len]
    }
}

struct ConvCache<T> {
    cols: Vec<T>,
    h: usize,
    w: usize,
}

/// Activations of one sample retained for the reverse pass.
pub struct SampleCache<T> {
    h: usize,
    w: usize,
    convs: Vec<ConvCache<T>>,
    /// Post-ReLU output of every convolution except the head.
    acts: Vec<Vec<T>>,
    pools: Vec<Vec<u32>>,
    output: Vec<T>,
    min_abs_preactivation: T,
    min_pool_gap: T,
}

impl<T: Real> SampleCache<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Distance of the evaluation point from the nearest non-differentiable
    /// configuration (a ReLU input at zero or a near tie in a max-pool window).
    pub fn kink_margin(&self) -> T {
        self.min_abs_preactivation.min(self.min_pool_gap)
    }

    pub fn pattern(&self) -> ActivationPattern {
        ActivationPattern {
            active: self.acts.iter().flatten().map(|&v| v > T::zero()).collect(),
            argmax: self.pools.iter().flatten().copied().collect(),
        }
    }
}

/// ReLU on/off states and max-pool choices of one forward pass. Two
/// evaluations with equal patterns lie on the same linear piece of the
/// network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    active: Vec<bool>,
    argmax: Vec<u32>,
}

/// Per-sample caches of a batch forward pass.
pub struct ForwardCache<T> {
    pub samples: Vec<SampleCache<T>>,
}

/// Network bound to its spec; stateless apart from the layer plan.
#[derive(Debug, Clone)]
pub struct SegNet {
    spec: NetworkSpec,
    layers: Vec<ConvShape>,
}

impl SegNet {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            layers: spec.conv_layers(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    fn enc_index(&self, level: usize) -> usize {
        2 * level
    }

    fn bottom_index(&self) -> usize {
        2 * self.spec.depth
    }

    fn dec_index(&self, level: usize) -> usize {
        2 * self.spec.depth + 2 + 2 * (self.spec.depth - 1 - level)
    }

    fn head_index(&self) -> usize {
        4 * self.spec.depth + 2
    }

    fn check_params<T: Real>(&self, params: &ParamSet<T>) -> Result<()> {
        params.check_compatible(&ParamSet::<T>::zeros(&self.spec))
    }

    /// Convolution (plus bias) of `x`, caching the unfolded input.
    fn conv<T: Real>(
        &self,
        params: &ParamSet<T>,
        li: usize,
        x: &[T],
        h: usize,
        w: usize,
        cache: &mut SampleCache<T>,
    ) -> Vec<T> {
        let l = &self.layers[li];
        let (weight, bias) = params.layer(li);
        let hw = h * w;
        let cols = im2col(x, l.in_channels, h, w, l.kernel);
        let mut out = vec![T::zero(); l.out_channels * hw];
        for (o, &b) in bias.iter().enumerate() {
            out[o * hw..(o + 1) * hw].fill(b);
        }
        gemm(
            MatRef::new(weight, l.out_channels, l.in_channels * l.kernel * l.kernel),
            MatRef::new(&cols, l.in_channels * l.kernel * l.kernel, hw),
            T::one(),
            &mut out,
        );
        cache.convs.push(ConvCache { cols, h, w });
        out
    }

    fn conv_relu<T: Real>(
        &self,
        params: &ParamSet<T>,
        li: usize,
        x: &[T],
        h: usize,
        w: usize,
        cache: &mut SampleCache<T>,
    ) -> Vec<T> {
        let mut z = self.conv(params, li, x, h, w, cache);
        let mut min_abs = cache.min_abs_preactivation;
        for v in z.iter_mut() {
            min_abs = min_abs.min(v.abs());
            *v = v.max(T::zero());
        }
        cache.min_abs_preactivation = min_abs;
        cache.acts.push(z.clone());
        z
    }

    /// Forward pass of one `H x W` single-channel sample.
    pub fn forward_sample<T: Real>(
        &self,
        params: &ParamSet<T>,
        input: &[T],
        h: usize,
        w: usize,
    ) -> Result<SampleCache<T>> {
        self.spec.check_input(h, w)?;
        check_len(self.spec.in_channels * h * w, input.len())?;
        self.check_params(params)?;
        let depth = self.spec.depth;
        let mut cache = SampleCache {
            h,
            w,
            convs: Vec::with_capacity(self.layers.len()),
            acts: Vec::with_capacity(self.layers.len() - 1),
            pools: Vec::with_capacity(depth),
            output: Vec::new(),
            min_abs_preactivation: T::infinity(),
            min_pool_gap: T::infinity(),
        };

        let (mut ch, mut cw) = (h, w);
        let mut x = input.to_vec();
        let mut skip_act = Vec::with_capacity(depth);
        for l in 0..depth {
            let li = self.enc_index(l);
            x = self.conv_relu(params, li, &x, ch, cw, &mut cache);
            x = self.conv_relu(params, li + 1, &x, ch, cw, &mut cache);
            skip_act.push(cache.acts.len() - 1);
            let (pooled, arg, gap) = maxpool2(&x, self.spec.channels(l), ch, cw);
            cache.min_pool_gap = cache.min_pool_gap.min(gap);
            cache.pools.push(arg);
            x = pooled;
            ch /= 2;
            cw /= 2;
        }
        let bi = self.bottom_index();
        x = self.conv_relu(params, bi, &x, ch, cw, &mut cache);
        x = self.conv_relu(params, bi + 1, &x, ch, cw, &mut cache);
        for l in (0..depth).rev() {
            let mut cat = upsample2(&x, self.spec.channels(l + 1), ch, cw);
            ch *= 2;
            cw *= 2;
            cat.extend_from_slice(&cache.acts[skip_act[l]]);
            let li = self.dec_index(l);
            x = self.conv_relu(params, li, &cat, ch, cw, &mut cache);
            x = self.conv_relu(params, li + 1, &x, ch, cw, &mut cache);
        }
        let z = self.conv(params, self.head_index(), &x, ch, cw, &mut cache);
        cache.output = z.into_iter().map(sigmoid).collect();
        Ok(cache)
    }

    /// Gradient of a convolution; accumulates into `grads` and returns the
    /// input gradient when `need_input` is set.
    fn conv_backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        li: usize,
        cache: &SampleCache<T>,
        dout: &[T],
        grads: &mut ParamSet<T>,
        need_input: bool,
    ) -> Vec<T> {
        let l = &self.layers[li];
        let cc = &cache.convs[li];
        let hw = cc.h * cc.w;
        let rows = l.in_channels * l.kernel * l.kernel;
        let (weight, _) = params.layer(li);
        let (dw, db) = grads.layer_mut(li);
        gemm(
            MatRef::new(dout, l.out_channels, hw),
            MatRef::new(&cc.cols, rows, hw).t(),
            T::one(),
            dw,
        );
        for (o, g) in db.iter_mut().enumerate() {
            *g += dout[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
        }
        if !need_input {
            return Vec::new();
        }
        let mut dcols = vec![T::zero(); rows * hw];
        gemm(
            MatRef::new(weight, l.out_channels, rows).t(),
            MatRef::new(dout, l.out_channels, hw),
            T::zero(),
            &mut dcols,
        );
        col2im(&dcols, l.in_channels, cc.h, cc.w, l.kernel)
    }

    /// ReLU adjoint followed by the convolution adjoint. `act` indexes
    /// `cache.acts`, which is aligned with the conv index for non-head layers.
    fn conv_relu_backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        li: usize,
        cache: &SampleCache<T>,
        mut dout: Vec<T>,
        grads: &mut ParamSet<T>,
        need_input: bool,
    ) -> Vec<T> {
        for (g, &a) in dout.iter_mut().zip(&cache.acts[li]) {
            if a <= T::zero() {
                *g = T::zero();
            }
        }
        self.conv_backward(params, li, cache, &dout, grads, need_input)
    }

    /// Parameter gradients of one sample given `d loss / d output`.
    pub fn backward_sample<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &SampleCache<T>,
        grad_out: &[T],
    ) -> Result<ParamSet<T>> {
        check_len(cache.output.len(), grad_out.len())?;
        self.check_params(params)?;
        let depth = self.spec.depth;
        let mut grads = params.zeros_like();

        let dz: Vec<T> = grad_out
            .iter()
            .zip(&cache.output)
            .map(|(&g, &y)| g * y * (T::one() - y))
            .collect();
        let mut dx = self.conv_backward(params, self.head_index(), cache, &dz, &mut grads, true);

        let mut dskip: Vec<Vec<T>> = vec![Vec::new(); depth];
        let (mut ch, mut cw) = (cache.h, cache.w);
        for l in 0..depth {
            let li = self.dec_index(l);
            dx = self.conv_relu_backward(params, li + 1, cache, dx, &mut grads, true);
            let dcat = self.conv_relu_backward(params, li, cache, dx, &mut grads, true);
            let up_len = self.spec.channels(l + 1) * ch * cw;
            dskip[l] = dcat[up_len..].to_vec();
            ch /= 2;
            cw /= 2;
            dx = upsample2_backward(&dcat[..up_len], self.spec.channels(l + 1), ch, cw);
        }
        let bi = self.bottom_index();
        dx = self.conv_relu_backward(params, bi + 1, cache, dx, &mut grads, true);
        dx = self.conv_relu_backward(params, bi, cache, dx, &mut grads, true);
        for l in (0..depth).rev() {
            ch *= 2;
            cw *= 2;
            let mut d = maxpool2_backward(&dx, &cache.pools[l], self.spec.channels(l) * ch * cw);
            for (a, b) in d.iter_mut().zip(&dskip[l]) {
                *a += *b;
            }
            let li = self.enc_index(l);
            d = self.conv_relu_backward(params, li + 1, cache, d, &mut grads, true);
            dx = self.conv_relu_backward(params, li, cache, d, &mut grads, l > 0);
        }
        Ok(grads)
    }

    /// Probabilities for one sample.
    pub fn predict<T: Real>(&self, params: &ParamSet<T>, input: &[T], h: usize, w: usize) -> Result<Vec<T>> {
        Ok(self.forward_sample(params, input, h, w)?.output)
    }

    /// Forward pass over a batch.
    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        batch: &Batch<T>,
    ) -> Result<(Batch<T>, ForwardCache<T>)> {
        let samples = (0..batch.n)
            .map(|i| self.forward_sample(params, batch.sample(i), batch.h, batch.w))
            .collect::<Result<Vec<_>>>()?;
        let data = samples.iter().flat_map(|s| s.output.iter().copied()).collect();
        Ok((
            Batch::new(batch.n, batch.h, batch.w, data)?,
            ForwardCache { samples },
        ))
    }

    /// Parameter gradients of a batch, reduced over samples in index order.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &ForwardCache<T>,
        grad_out: &Batch<T>,
    ) -> Result<ParamSet<T>> {
        if grad_out.n != cache.samples.len() {
            return Err(Error::LengthMismatch {
                expected: cache.samples.len(),
                actual: grad_out.n,
            });
        }
        let mut total = params.zeros_like();
        for (i, sc) in cache.samples.iter().enumerate() {
            if (sc.h, sc.w) != (grad_out.h, grad_out.w) {
                return Err(Error::ShapeMismatch {
                    expected: (sc.h, sc.w),
                    actual: (grad_out.h, grad_out.w),
                });
            }
            total.add_assign(&self.backward_sample(params, sc, grad_out.sample(i))?);
        }
        Ok(total)
    }
}
