//! Encoder/decoder segmentation network with inception sub-blocks and
//! residual skip connections, plus named parameter groups so whole blocks
//! can be frozen during fine-tuning.
//!
//! Layout per level i (channels c_i = base_channels·2^(i-1)):
//! down block = inception then 2×2 max-pool; bottleneck = inception;
//! up block = 2× transposed conv, concat of the residual-processed skip,
//! inception; head = 1×1 conv + logistic. All arithmetic is f64 and the
//! backward pass is written by hand against the forward trace.

mod checkpoint;
mod layers;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, load_checkpoint_bytes, save_checkpoint, CHECKPOINT_VERSION,
};

use crate::error::{Error, Result};
use layers::{
    conv2d_backward, conv2d_forward, maxpool2_backward, maxpool2_forward, maxpool3s1_backward,
    maxpool3s1_forward, relu_backward, relu_forward, sigmoid, tconv2_backward, tconv2_forward,
};
use ndarray::{concatenate, s, Array1, Array2, Array3, Array4, ArrayD, ArrayView1, ArrayView4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const BOTTLENECK_GROUP: &str = "Bottleneck";
pub const HEAD_GROUP: &str = "Head";

pub fn down_group_name(level: usize) -> String {
    format!("Down-{level}")
}

pub fn up_group_name(level: usize) -> String {
    format!("Up-{level}")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of down/up levels L.
    pub n_levels: usize,
    /// Channels after the first inception block; doubles per level. Must be
    /// a multiple of 4 (four equal-width inception branches).
    pub base_channels: usize,
    pub input_channels: usize,
    /// Expected input size; must be divisible by 2^n_levels.
    pub height: usize,
    pub width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_levels: 4,
            base_channels: 16,
            input_channels: 1,
            height: 64,
            width: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.n_levels) {
            return Err(Error::Config("n_levels must be in 1..=8".into()));
        }
        if self.base_channels < 4 || self.base_channels % 4 != 0 || self.base_channels > 512 {
            return Err(Error::Config(
                "base_channels must be a multiple of 4 in 4..=512".into(),
            ));
        }
        if self.base_channels << self.n_levels > 4096 {
            return Err(Error::Config(
                "base_channels * 2^n_levels must not exceed 4096".into(),
            ));
        }
        if self.input_channels != 1 {
            return Err(Error::Config("input_channels must be 1".into()));
        }
        if self.height > 4096 || self.width > 4096 {
            return Err(Error::Config("height/width must not exceed 4096".into()));
        }
        let stride = 1usize << self.n_levels;
        if self.height == 0 || self.width == 0 || self.height % stride != 0 || self.width % stride != 0
        {
            return Err(Error::Config(format!(
                "{}x{} input not divisible by 2^{}",
                self.height, self.width, self.n_levels
            )));
        }
        Ok(())
    }

    fn channels_at(&self, level: usize) -> usize {
        self.base_channels << (level - 1)
    }
}

/// Total parameter scalars a model built from `config` will hold, computed
/// without allocating anything. Mirrors [`build_model`]'s layer list.
pub(crate) fn config_scalar_count(config: &ModelConfig) -> u64 {
    let conv = |c_in: u64, c_out: u64, k: u64| c_out * c_in * k * k + c_out;
    let inception = |c_in: u64, c_out: u64| {
        let q = c_out / 4;
        conv(c_in, q, 1) * 4 + conv(q, q, 3) + conv(q, q, 5)
    };
    let l = config.n_levels;
    let mut total = 0u64;
    let mut c_prev = config.input_channels as u64;
    for i in 1..=l {
        let c = config.channels_at(i) as u64;
        total += inception(c_prev, c);
        c_prev = c;
    }
    let mut c_below = (config.base_channels << l) as u64;
    total += inception(c_prev, c_below);
    for i in (1..=l).rev() {
        let c = config.channels_at(i) as u64;
        total += c_below * c * 4 + c; // transposed conv
        total += conv(c, c, 3); // residual skip conv
        total += inception(2 * c, c);
        c_below = c;
    }
    total + conv(config.base_channels as u64, 1, 1)
}

/// Index of one parameter tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat storage for every parameter tensor of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    params: Vec<ArrayD<f64>>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.params[id.0]
    }

    /// Total scalar count across all tensors.
    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn total_scalars(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    fn push(&mut self, arr: ArrayD<f64>) -> ParamId {
        self.params.push(arr);
        ParamId(self.params.len() - 1)
    }

    fn view4(&self, id: ParamId) -> ArrayView4<'_, f64> {
        self.params[id.0].view().into_dimensionality().unwrap()
    }

    fn view1(&self, id: ParamId) -> ArrayView1<'_, f64> {
        self.params[id.0].view().into_dimensionality().unwrap()
    }
}

/// Gradient accumulator shaped like a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradStore {
    grads: Vec<ArrayD<f64>>,
}

impl GradStore {
    pub fn zeros_like(store: &ParamStore) -> GradStore {
        GradStore {
            grads: store.params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.grads[id.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * factor);
        }
    }

    fn add4(&mut self, id: ParamId, delta: &Array4<f64>) {
        self.grads[id.0] += &delta.view().into_dyn();
    }

    fn add1(&mut self, id: ParamId, delta: &Array1<f64>) {
        self.grads[id.0] += &delta.view().into_dyn();
    }
}

/// Named parameter groups (`Down-1..L`, `Bottleneck`, `Up-1..L`, `Head`)
/// that partition every parameter tensor of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroupMap {
    groups: BTreeMap<String, Vec<ParamId>>,
}

impl ParamGroupMap {
    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.groups.contains_key(name)
    }

    pub fn ids(&self, name: &str) -> Result<&[ParamId]> {
        self.groups
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Config(format!("unknown parameter group {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ParamId])> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Every ParamId in 0..n_params appears in exactly one group.
    pub fn validate_partition(&self, n_params: usize) -> Result<()> {
        let mut seen = vec![false; n_params];
        for ids in self.groups.values() {
            for id in ids {
                if id.0 >= n_params || seen[id.0] {
                    return Err(Error::Invalid(
                        "parameter groups do not partition the parameter set".into(),
                    ));
                }
                seen[id.0] = true;
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err(Error::Invalid(
                "parameter groups do not partition the parameter set".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Inception {
    b1: Conv,
    b2a: Conv,
    b2b: Conv,
    b3a: Conv,
    b3b: Conv,
    b4: Conv,
}

#[derive(Debug, Clone, Copy)]
struct UpBlock {
    up: Conv,
    res: Conv,
    fuse: Inception,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub groups: ParamGroupMap,
    downs: Vec<Inception>,
    bottleneck: Inception,
    /// Decoder order: index 0 is the deepest block (Up-L).
    ups: Vec<UpBlock>,
    head: Conv,
}

/// Bias initialization. Slightly positive so no ReLU pre-activation starts
/// exactly on the kink (zero bias + a dead input channel would) and so
/// narrow inception branches cannot start out permanently dead.
const BIAS_INIT: f64 = 0.01;

struct Builder {
    store: ParamStore,
    groups: BTreeMap<String, Vec<ParamId>>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn tensor(&mut self, group: &str, shape: &[usize], std: f64) -> ParamId {
        let n: usize = shape.iter().product();
        let data = if std == 0.0 {
            vec![BIAS_INIT; n]
        } else {
            let dist = Normal::new(0.0, std).unwrap();
            (0..n).map(|_| dist.sample(&mut self.rng)).collect()
        };
        let id = self
            .store
            .push(ArrayD::from_shape_vec(ndarray::IxDyn(shape), data).unwrap());
        self.groups.entry(group.to_string()).or_default().push(id);
        id
    }

    /// He-normal weights, near-zero constant bias.
    fn conv(&mut self, group: &str, c_in: usize, c_out: usize, k: usize) -> Conv {
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        Conv {
            w: self.tensor(group, &[c_out, c_in, k, k], std),
            b: self.tensor(group, &[c_out], 0.0),
        }
    }

    fn tconv(&mut self, group: &str, c_in: usize, c_out: usize) -> Conv {
        let std = (2.0 / (c_in * 4) as f64).sqrt();
        Conv {
            w: self.tensor(group, &[c_in, c_out, 2, 2], std),
            b: self.tensor(group, &[c_out], 0.0),
        }
    }

    /// Four parallel branches of width c_out/4: 1×1, 1×1→3×3, 1×1→5×5,
    /// 3×3 max-pool→1×1; ReLU after every convolution.
    fn inception(&mut self, group: &str, c_in: usize, c_out: usize) -> Inception {
        let q = c_out / 4;
        Inception {
            b1: self.conv(group, c_in, q, 1),
            b2a: self.conv(group, c_in, q, 1),
            b2b: self.conv(group, q, q, 3),
            b3a: self.conv(group, c_in, q, 1),
            b3b: self.conv(group, q, q, 5),
            b4: self.conv(group, c_in, q, 1),
        }
    }
}

/// Builds a model with deterministic He-normal initialization.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut b = Builder {
        store: ParamStore { params: vec![] },
        groups: BTreeMap::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let l = config.n_levels;
    let mut downs = Vec::with_capacity(l);
    let mut c_prev = config.input_channels;
    for i in 1..=l {
        let c = config.channels_at(i);
        downs.push(b.inception(&down_group_name(i), c_prev, c));
        c_prev = c;
    }
    let bottleneck = b.inception(BOTTLENECK_GROUP, c_prev, config.base_channels << l);
    let mut c_below = config.base_channels << l;
    let mut ups = Vec::with_capacity(l);
    for i in (1..=l).rev() {
        let c = config.channels_at(i);
        let group = up_group_name(i);
        ups.push(UpBlock {
            up: b.tconv(&group, c_below, c),
            res: b.conv(&group, c, c, 3),
            fuse: b.inception(&group, 2 * c, c),
        });
        c_below = c;
    }
    let head = b.conv(HEAD_GROUP, config.base_channels, 1, 1);
    let groups = ParamGroupMap { groups: b.groups };
    groups.validate_partition(b.store.len())?;
    Ok(Model {
        config: config.clone(),
        params: b.store,
        groups,
        downs,
        bottleneck,
        ups,
        head,
    })
}

struct IncCache {
    x: Array3<f64>,
    y1: Array3<f64>,
    y2a: Array3<f64>,
    y2b: Array3<f64>,
    y3a: Array3<f64>,
    y3b: Array3<f64>,
    pool_out: Array3<f64>,
    pool_idx: Array3<u8>,
    y4: Array3<f64>,
}

struct UpCache {
    below: Array3<f64>,
    skip: Array3<f64>,
    inc: IncCache,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardTrace {
    downs: Vec<(IncCache, Array3<u8>)>,
    bottleneck: IncCache,
    ups: Vec<UpCache>,
    head_in: Array3<f64>,
    prob: Array3<f64>,
}

impl Model {
    fn check_input(&self, image: &Array2<f64>) -> Result<()> {
        if image.dim() != (self.config.height, self.config.width) {
            return Err(Error::Shape(format!(
                "input {:?} does not match configured {}x{}",
                image.dim(),
                self.config.height,
                self.config.width
            )));
        }
        Ok(())
    }

    fn inception_forward(&self, inc: &Inception, x: Array3<f64>) -> (Array3<f64>, IncCache) {
        let p = &self.params;
        let y1 = relu_forward(&conv2d_forward(&x, p.view4(inc.b1.w), p.view1(inc.b1.b)));
        let y2a = relu_forward(&conv2d_forward(&x, p.view4(inc.b2a.w), p.view1(inc.b2a.b)));
        let y2b = relu_forward(&conv2d_forward(&y2a, p.view4(inc.b2b.w), p.view1(inc.b2b.b)));
        let y3a = relu_forward(&conv2d_forward(&x, p.view4(inc.b3a.w), p.view1(inc.b3a.b)));
        let y3b = relu_forward(&conv2d_forward(&y3a, p.view4(inc.b3b.w), p.view1(inc.b3b.b)));
        let (pool_out, pool_idx) = maxpool3s1_forward(&x);
        let y4 = relu_forward(&conv2d_forward(
            &pool_out,
            p.view4(inc.b4.w),
            p.view1(inc.b4.b),
        ));
        let out = concatenate(
            Axis(0),
            &[y1.view(), y2b.view(), y3b.view(), y4.view()],
        )
        .unwrap();
        (
            out,
            IncCache {
                x,
                y1,
                y2a,
                y2b,
                y3a,
                y3b,
                pool_out,
                pool_idx,
                y4,
            },
        )
    }

    fn inception_backward(
        &self,
        inc: &Inception,
        cache: &IncCache,
        d_out: &Array3<f64>,
        grads: &mut GradStore,
    ) -> Array3<f64> {
        let p = &self.params;
        let q = d_out.dim().0 / 4;
        let d1 = d_out.slice(s![0..q, .., ..]).to_owned();
        let d2 = d_out.slice(s![q..2 * q, .., ..]).to_owned();
        let d3 = d_out.slice(s![2 * q..3 * q, .., ..]).to_owned();
        let d4 = d_out.slice(s![3 * q..4 * q, .., ..]).to_owned();

        let dz1 = relu_backward(&d1, &cache.y1);
        let g1 = conv2d_backward(&cache.x, p.view4(inc.b1.w), &dz1);
        grads.add4(inc.b1.w, &g1.dw);
        grads.add1(inc.b1.b, &g1.db);
        let mut dx = g1.dx;

        let dz2b = relu_backward(&d2, &cache.y2b);
        let g2b = conv2d_backward(&cache.y2a, p.view4(inc.b2b.w), &dz2b);
        grads.add4(inc.b2b.w, &g2b.dw);
        grads.add1(inc.b2b.b, &g2b.db);
        let dz2a = relu_backward(&g2b.dx, &cache.y2a);
        let g2a = conv2d_backward(&cache.x, p.view4(inc.b2a.w), &dz2a);
        grads.add4(inc.b2a.w, &g2a.dw);
        grads.add1(inc.b2a.b, &g2a.db);
        dx += &g2a.dx;

        let dz3b = relu_backward(&d3, &cache.y3b);
        let g3b = conv2d_backward(&cache.y3a, p.view4(inc.b3b.w), &dz3b);
        grads.add4(inc.b3b.w, &g3b.dw);
        grads.add1(inc.b3b.b, &g3b.db);
        let dz3a = relu_backward(&g3b.dx, &cache.y3a);
        let g3a = conv2d_backward(&cache.x, p.view4(inc.b3a.w), &dz3a);
        grads.add4(inc.b3a.w, &g3a.dw);
        grads.add1(inc.b3a.b, &g3a.db);
        dx += &g3a.dx;

        let dz4 = relu_backward(&d4, &cache.y4);
        let g4 = conv2d_backward(&cache.pool_out, p.view4(inc.b4.w), &dz4);
        grads.add4(inc.b4.w, &g4.dw);
        grads.add1(inc.b4.b, &g4.db);
        dx += &maxpool3s1_backward(&g4.dx, &cache.pool_idx);

        dx
    }

    /// Forward pass that also records the trace needed by [`Model::backward`].
    pub fn forward_trace(&self, image: &Array2<f64>) -> Result<(Array2<f64>, ForwardTrace)> {
        self.check_input(image)?;
        let p = &self.params;
        let x0 = image
            .view()
            .insert_axis(Axis(0))
            .to_owned();
        let mut downs = Vec::with_capacity(self.downs.len());
        let mut skips = Vec::with_capacity(self.downs.len());
        let mut x = x0;
        for inc in &self.downs {
            let (y, cache) = self.inception_forward(inc, x);
            let (pooled, idx) = maxpool2_forward(&y);
            skips.push(y);
            downs.push((cache, idx));
            x = pooled;
        }
        let (mut u, bottleneck) = self.inception_forward(&self.bottleneck, x);
        let mut ups = Vec::with_capacity(self.ups.len());
        // self.ups[j] is level L-j; skips[i-1] belongs to level i.
        for (j, block) in self.ups.iter().enumerate() {
            let skip = skips[self.ups.len() - 1 - j].clone();
            let t = tconv2_forward(&u, p.view4(block.up.w), p.view1(block.up.b));
            let r_conv = conv2d_forward(&skip, p.view4(block.res.w), p.view1(block.res.b));
            let r = &skip + &r_conv;
            let cat = concatenate(Axis(0), &[t.view(), r.view()]).unwrap();
            let (out, inc) = self.inception_forward(&block.fuse, cat);
            ups.push(UpCache {
                below: u,
                skip,
                inc,
            });
            u = out;
        }
        let z = conv2d_forward(&u, p.view4(self.head.w), p.view1(self.head.b));
        let prob = sigmoid(&z);
        let out2 = prob.index_axis(Axis(0), 0).to_owned();
        Ok((
            out2,
            ForwardTrace {
                downs,
                bottleneck,
                ups,
                head_in: u,
                prob,
            },
        ))
    }

    /// Probability map in [0,1] with the input's shape.
    pub fn forward(&self, image: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(image)?.0)
    }

    /// Accumulates parameter gradients for d(loss)/d(prob map) into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, d_prob: &Array2<f64>, grads: &mut GradStore) {
        let p = &self.params;
        // Through the logistic head: dz = dL/dp · p(1−p).
        let mut dz = trace.prob.clone();
        dz.zip_mut_with(&trace.prob, |z, &pr| *z = pr * (1.0 - pr));
        {
            let mut dz0 = dz.index_axis_mut(Axis(0), 0);
            dz0 *= d_prob;
        }
        let gh = conv2d_backward(&trace.head_in, p.view4(self.head.w), &dz);
        grads.add4(self.head.w, &gh.dw);
        grads.add1(self.head.b, &gh.db);
        let mut du = gh.dx;

        let l = self.ups.len();
        let mut d_skips: Vec<Option<Array3<f64>>> = vec![None; l];
        // Decoder backward, shallowest block first (reverse of forward).
        for j in (0..l).rev() {
            let block = &self.ups[j];
            let cache = &trace.ups[j];
            let dcat = self.inception_backward(&block.fuse, &cache.inc, &du, grads);
            let c = dcat.dim().0 / 2;
            let dt = dcat.slice(s![0..c, .., ..]).to_owned();
            let dr = dcat.slice(s![c..2 * c, .., ..]).to_owned();
            let gres = conv2d_backward(&cache.skip, p.view4(block.res.w), &dr);
            grads.add4(block.res.w, &gres.dw);
            grads.add1(block.res.b, &gres.db);
            // Residual: d(skip) = dr (identity branch) + conv backward.
            d_skips[l - 1 - j] = Some(&dr + &gres.dx);
            let gup = tconv2_backward(&cache.below, p.view4(block.up.w), &dt);
            grads.add4(block.up.w, &gup.dw);
            grads.add1(block.up.b, &gup.db);
            du = gup.dx;
        }

        let mut d_pool = self.inception_backward(&self.bottleneck, &trace.bottleneck, &du, grads);
        for i in (0..self.downs.len()).rev() {
            let (cache, idx) = &trace.downs[i];
            let mut dy = maxpool2_backward(&d_pool, idx);
            dy += d_skips[i].as_ref().unwrap();
            d_pool = self.inception_backward(&self.downs[i], cache, &dy, grads);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand::{Rng, SeedableRng};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_levels: 2,
            base_channels: 4,
            input_channels: 1,
            height: 8,
            width: 8,
        }
    }

    fn random_image(seed: u64, h: usize, w: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn groups_partition_all_parameters() {
        let model = build_model(&tiny_config(), 0).unwrap();
        model.groups.validate_partition(model.params.len()).unwrap();
        let from_groups: usize = model
            .groups
            .iter()
            .flat_map(|(_, ids)| ids.iter())
            .map(|&id| model.params.get(id).len())
            .sum();
        assert_eq!(from_groups, model.params.total_scalars());
        let names: Vec<&str> = model.groups.group_names().collect();
        assert_eq!(
            names,
            ["Bottleneck", "Down-1", "Down-2", "Head", "Up-1", "Up-2"]
        );
    }

    #[test]
    fn same_seed_same_params() {
        let a = build_model(&tiny_config(), 42).unwrap();
        let b = build_model(&tiny_config(), 42).unwrap();
        assert_eq!(a.params, b.params);
        let c = build_model(&tiny_config(), 43).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn build_rejects_indivisible_size() {
        let mut config = ModelConfig {
            n_levels: 4,
            height: 60,
            width: 60,
            ..tiny_config()
        };
        assert!(build_model(&config, 0).is_err());
        config.height = 64;
        config.width = 64;
        let model = build_model(&config, 0).unwrap();
        assert!(model.forward(&random_image(0, 64, 64)).is_ok());
        assert!(model.forward(&random_image(0, 60, 60)).is_err());
    }

    #[test]
    fn forward_is_bounded_and_shape_preserving() {
        let model = build_model(&tiny_config(), 7).unwrap();
        let img = random_image(1, 8, 8);
        let out = model.forward(&img).unwrap();
        assert_eq!(out.dim(), (8, 8));
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Deterministic forward.
        assert_eq!(out, model.forward(&img).unwrap());
    }

    #[test]
    fn residual_skip_is_identity_at_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array3::from_shape_fn((3, 6, 6), |_| rng.gen_range(-1.0..1.0));
        let w = Array4::zeros((3, 3, 3, 3));
        let b = Array1::zeros(3);
        let y = &x + &layers::conv2d_forward(&x, w.view(), b.view());
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_output_depends_only_on_biases() {
        // Zero the biases of two models with different weights: on a zero
        // input every activation dies, so both collapse to exactly 0.5.
        for seed in [3, 4] {
            let mut model = build_model(&tiny_config(), seed).unwrap();
            for raw in 0..model.params.len() {
                let id = ParamId(raw);
                if model.params.get(id).ndim() == 1 {
                    model.params.get_mut(id).fill(0.0);
                }
            }
            let out = model.forward(&Array2::zeros((8, 8))).unwrap();
            assert!(out.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        }
    }

    /// Full-model gradient check: scalar functional sum(prob · probe),
    /// analytic backward vs central finite differences over every parameter.
    /// Tolerance: |a−n| / max(|a|,|n|,1e-3) < 1e-4 (absolute cushion for
    /// near-zero gradients, h = 1e-6).
    #[test]
    fn full_model_gradients_match_finite_differences() {
        let mut model = build_model(&tiny_config(), 11).unwrap();
        let img = random_image(2, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probe = Array2::from_shape_fn((8, 8), |_| rng.gen_range(-1.0..1.0));

        let (_, trace) = model.forward_trace(&img).unwrap();
        let mut grads = GradStore::zeros_like(&model.params);
        model.backward(&trace, &probe, &mut grads);

        let h = 1e-6;
        let n_params = model.params.len();
        let mut checked = 0usize;
        for raw in 0..n_params {
            let id = ParamId(raw);
            let n_elems = model.params.get(id).len();
            for flat in 0..n_elems {
                let ix = flat_index(model.params.get(id), flat);
                let orig = model.params.get(id)[&ix];
                model.params.get_mut(id)[&ix] = orig + h;
                let fp = (model.forward(&img).unwrap() * &probe).sum();
                model.params.get_mut(id)[&ix] = orig - h;
                let fm = (model.forward(&img).unwrap() * &probe).sum();
                model.params.get_mut(id)[&ix] = orig;
                let numeric = (fp - fm) / (2.0 * h);
                let analytic = grads.get(id)[&ix];
                let rel = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(1e-3);
                assert!(
                    rel < 1e-4,
                    "param {raw}[{flat}]: analytic {analytic} vs numeric {numeric}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, model.params.total_scalars());
    }

    fn flat_index(a: &ArrayD<f64>, mut flat: usize) -> IxDyn {
        let shape = a.shape();
        let mut ix = vec![0usize; shape.len()];
        for d in (0..shape.len()).rev() {
            ix[d] = flat % shape[d];
            flat /= shape[d];
        }
        IxDyn(&ix)
    }
}
