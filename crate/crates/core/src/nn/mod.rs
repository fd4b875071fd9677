//! The CNN engine: declarative network specs, instantiated parameter state,
//! forward/backward execution, plain SGD, layer freezing, architecture
//! presets, checkpoints, and a finite-difference gradient checker.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod presets;

pub use checkpoint::{load_checkpoint, save_checkpoint, LoadMode};
pub use gradcheck::grad_check;
pub use layers::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, flatten_backward, flatten_forward,
    maxpool2d_backward, maxpool2d_forward, merge_backward, merge_forward, relu_backward,
    relu_forward, MergeKind,
};
pub use loss::{cross_entropy_loss, softmax};
pub use presets::{build_network, Preset};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Which half of the network a layer belongs to. The feature extractor is
/// the transfer-learning unit; only its parameterized layers can be frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    FeatureExtractor,
    Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv2d { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    MaxPool2d { window: usize, stride: usize },
    Relu,
    Flatten,
    FullyConnected { out_features: usize },
    /// Adds the named earlier layer's output to the current input.
    ResidualAdd { from: String },
    /// Concatenates the named earlier layer's output along channels.
    Concat { from: String },
}

impl LayerKind {
    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::FullyConnected { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub stage: Stage,
}

/// Batch-agnostic activation shape used during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat { f: usize },
}

/// Declarative layer list plus input geometry and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// (channels, height, width) of one input sample.
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Checks every structural invariant and returns the output shape of
    /// each layer. Errors name the offending layer.
    pub fn validate(&self) -> Result<Vec<ActivationShape>> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for l in &self.layers {
            if !names.insert(l.name.as_str()) {
                return Err(Error::Config(format!("duplicate layer name {:?}", l.name)));
            }
        }
        let mut classifier_seen = false;
        for l in &self.layers {
            match l.stage {
                Stage::Classifier => classifier_seen = true,
                Stage::FeatureExtractor if classifier_seen => {
                    return Err(Error::Config(format!(
                        "feature-extractor layer {:?} after a classifier layer",
                        l.name
                    )));
                }
                _ => {}
            }
        }
        match &self.layers.last().unwrap().kind {
            LayerKind::FullyConnected { out_features } if *out_features == self.num_classes => {}
            _ => {
                return Err(Error::Config(format!(
                    "final layer must be fully-connected with {} outputs",
                    self.num_classes
                )));
            }
        }

        let (c, h, w) = self.input_shape;
        let mut shape = ActivationShape::Spatial { c, h, w };
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            shape = self.propagate(l, shape, &by_name, &shapes).map_err(|e| match e {
                Error::ShapeMismatch(m) => Error::ShapeMismatch(format!("layer {:?}: {m}", l.name)),
                Error::Config(m) => Error::Config(format!("layer {:?}: {m}", l.name)),
                other => other,
            })?;
            shapes.push(shape);
            by_name.insert(l.name.as_str(), i);
        }
        Ok(shapes)
    }

    fn propagate(
        &self,
        layer: &LayerSpec,
        input: ActivationShape,
        by_name: &BTreeMap<&str, usize>,
        shapes: &[ActivationShape],
    ) -> Result<ActivationShape> {
        use ActivationShape::*;
        let spatial = |s: ActivationShape| match s {
            Spatial { c, h, w } => Ok((c, h, w)),
            Flat { .. } => Err(Error::ShapeMismatch("needs spatial input, got flat".into())),
        };
        match &layer.kind {
            LayerKind::Conv2d { out_channels, kernel, stride, padding } => {
                let (_, h, w) = spatial(input)?;
                let ho = out_dim(h, *kernel, *stride, *padding)?;
                let wo = out_dim(w, *kernel, *stride, *padding)?;
                Ok(Spatial { c: *out_channels, h: ho, w: wo })
            }
            LayerKind::MaxPool2d { window, stride } => {
                let (c, h, w) = spatial(input)?;
                if *window > h || *window > w {
                    return Err(Error::ShapeMismatch(format!(
                        "pool window {window} exceeds input {h}x{w}"
                    )));
                }
                Ok(Spatial { c, h: out_dim(h, *window, *stride, 0)?, w: out_dim(w, *window, *stride, 0)? })
            }
            LayerKind::Relu => Ok(input),
            LayerKind::Flatten => {
                let (c, h, w) = spatial(input)?;
                Ok(Flat { f: c * h * w })
            }
            LayerKind::FullyConnected { out_features } => match input {
                Flat { .. } => Ok(Flat { f: *out_features }),
                Spatial { .. } => {
                    Err(Error::ShapeMismatch("fully-connected needs flattened input".into()))
                }
            },
            LayerKind::ResidualAdd { from } | LayerKind::Concat { from } => {
                let idx = *by_name.get(from.as_str()).ok_or_else(|| {
                    Error::Config(format!("merge references unknown or later layer {from:?}"))
                })?;
                let (c, h, w) = spatial(input)?;
                let (fc, fh, fw) = spatial(shapes[idx])?;
                match &layer.kind {
                    LayerKind::ResidualAdd { .. } => {
                        if (c, h, w) != (fc, fh, fw) {
                            return Err(Error::ShapeMismatch(format!(
                                "residual-add shapes differ: {c}x{h}x{w} vs {fc}x{fh}x{fw}"
                            )));
                        }
                        Ok(Spatial { c, h, w })
                    }
                    _ => {
                        if (h, w) != (fh, fw) {
                            return Err(Error::ShapeMismatch(format!(
                                "concat spatial dims differ: {h}x{w} vs {fh}x{fw}"
                            )));
                        }
                        Ok(Spatial { c: c + fc, h, w })
                    }
                }
            }
        }
    }
}

fn out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel || (padded - kernel) % stride != 0 {
        return Err(Error::ShapeMismatch(format!(
            "bad output dim: ({input} + 2*{padding} - {kernel}) / {stride} + 1"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// How many leading parameterized feature-extractor layers to freeze.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    Count(usize),
    /// The whole feature extractor; the classifier still trains.
    All,
}

/// Instantiated network: spec plus named parameter/gradient tensors and
/// per-layer trainable flags. Parameters of layer `x` are `x.weight` and
/// `x.bias`.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<ActivationShape>,
    by_name: BTreeMap<String, usize>,
    params: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Tensor>,
    trainable: BTreeMap<String, bool>,
}

/// Per-layer activations kept by the forward pass for backprop and merge
/// references.
pub struct ForwardCache {
    outputs: Vec<Tensor>,
    pool_idx: Vec<Option<Vec<u32>>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Tensor {
        self.outputs.last().expect("non-empty network")
    }

    pub fn output_of(&self, idx: usize) -> &Tensor {
        &self.outputs[idx]
    }
}

impl Network {
    /// Validates the spec and draws He-normal weights (std = sqrt(2/fan_in),
    /// zero biases) from `rng`.
    pub fn new(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        let shapes = spec.validate()?;
        let (c0, h0, w0) = spec.input_shape;
        let mut params = BTreeMap::new();
        let mut grads = BTreeMap::new();
        let mut trainable = BTreeMap::new();
        let mut by_name = BTreeMap::new();
        let mut input = ActivationShape::Spatial { c: c0, h: h0, w: w0 };
        for (i, l) in spec.layers.iter().enumerate() {
            by_name.insert(l.name.clone(), i);
            match (&l.kind, input) {
                (LayerKind::Conv2d { out_channels, kernel, .. }, ActivationShape::Spatial { c, .. }) => {
                    let fan_in = c * kernel * kernel;
                    let w_shape = [*out_channels, c, *kernel, *kernel];
                    params.insert(format!("{}.weight", l.name), he_normal(&w_shape, fan_in, rng)?);
                    params.insert(format!("{}.bias", l.name), Tensor::zeros(&[*out_channels])?);
                    grads.insert(format!("{}.weight", l.name), Tensor::zeros(&w_shape)?);
                    grads.insert(format!("{}.bias", l.name), Tensor::zeros(&[*out_channels])?);
                    trainable.insert(l.name.clone(), true);
                }
                (LayerKind::FullyConnected { out_features }, ActivationShape::Flat { f }) => {
                    let w_shape = [f, *out_features];
                    params.insert(format!("{}.weight", l.name), he_normal(&w_shape, f, rng)?);
                    params.insert(format!("{}.bias", l.name), Tensor::zeros(&[*out_features])?);
                    grads.insert(format!("{}.weight", l.name), Tensor::zeros(&w_shape)?);
                    grads.insert(format!("{}.bias", l.name), Tensor::zeros(&[*out_features])?);
                    trainable.insert(l.name.clone(), true);
                }
                _ => {}
            }
            input = shapes[i];
        }
        Ok(Self { spec, shapes, by_name, params, grads, trainable })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn output_shapes(&self) -> &[ActivationShape] {
        &self.shapes
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    pub fn is_trainable(&self, layer: &str) -> bool {
        self.trainable.get(layer).copied().unwrap_or(false)
    }

    /// Parameter names in layer order, weight before bias. This is the
    /// canonical order used by checkpoints and SGD.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in &self.spec.layers {
            if l.kind.is_parameterized() {
                names.push(format!("{}.weight", l.name));
                names.push(format!("{}.bias", l.name));
            }
        }
        names
    }

    /// Names of parameterized layers in the given stage, network order.
    pub fn stage_layers(&self, stage: Stage) -> Vec<String> {
        self.spec
            .layers
            .iter()
            .filter(|l| l.stage == stage && l.kind.is_parameterized())
            .map(|l| l.name.clone())
            .collect()
    }

    /// Marks the first `n` parameterized feature-extractor layers (or all
    /// of them) non-trainable and every other layer trainable. The
    /// classifier is never frozen.
    pub fn set_freeze(&mut self, freeze: Freeze) -> Result<()> {
        let fe = self.stage_layers(Stage::FeatureExtractor);
        let n = match freeze {
            Freeze::All => fe.len(),
            Freeze::Count(n) => {
                if n > fe.len() {
                    return Err(Error::Config(format!(
                        "freeze count {n} exceeds {} feature-extractor layers",
                        fe.len()
                    )));
                }
                n
            }
        };
        for flag in self.trainable.values_mut() {
            *flag = true;
        }
        for name in fe.iter().take(n) {
            self.trainable.insert(name.clone(), false);
        }
        Ok(())
    }

    fn lowest_trainable_idx(&self) -> Option<usize> {
        self.spec
            .layers
            .iter()
            .position(|l| l.kind.is_parameterized() && self.is_trainable(&l.name))
    }

    /// Runs the layers in order; merge layers read the cached output of
    /// their referenced layer. Returns the logits and the activation cache
    /// the backward pass consumes.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let (c, h, w) = self.spec.input_shape;
        if batch.rank() != 4 || batch.shape()[1..] != [c, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "batch shape {:?} does not match input {:?}",
                batch.shape(),
                (c, h, w)
            )));
        }
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.spec.layers.len());
        let mut pool_idx: Vec<Option<Vec<u32>>> = Vec::with_capacity(self.spec.layers.len());
        for (i, l) in self.spec.layers.iter().enumerate() {
            let input = if i == 0 { batch } else { &outputs[i - 1] };
            let mut idx_entry = None;
            let out = match &l.kind {
                LayerKind::Conv2d { stride, padding, .. } => layers::conv2d_forward(
                    input,
                    &self.params[&format!("{}.weight", l.name)],
                    &self.params[&format!("{}.bias", l.name)],
                    *stride,
                    *padding,
                ),
                LayerKind::MaxPool2d { window, stride } => {
                    layers::maxpool2d_forward(input, *window, *stride).map(|(out, idx)| {
                        idx_entry = Some(idx);
                        out
                    })
                }
                LayerKind::Relu => Ok(layers::relu_forward(input)),
                LayerKind::Flatten => layers::flatten_forward(input),
                LayerKind::FullyConnected { .. } => layers::fc_forward(
                    input,
                    &self.params[&format!("{}.weight", l.name)],
                    &self.params[&format!("{}.bias", l.name)],
                ),
                LayerKind::ResidualAdd { from } => {
                    layers::merge_forward(MergeKind::ResidualAdd, input, &outputs[self.by_name[from]])
                }
                LayerKind::Concat { from } => {
                    layers::merge_forward(MergeKind::Concat, input, &outputs[self.by_name[from]])
                }
            }
            .map_err(|e| rename_layer_err(e, &l.name))?;
            outputs.push(out);
            pool_idx.push(idx_entry);
        }
        let logits = outputs.last().unwrap().clone();
        Ok((logits, ForwardCache { outputs, pool_idx }))
    }

    /// Fills `grads` for every trainable layer from the loss gradient at
    /// the logits. Skips all computation below the deepest frozen prefix.
    pub fn backward(&mut self, batch: &Tensor, cache: &ForwardCache, d_logits: &Tensor) -> Result<()> {
        let n_layers = self.spec.layers.len();
        if cache.outputs.len() != n_layers {
            return Err(Error::Precondition("stale forward cache".into()));
        }
        let Some(lowest) = self.lowest_trainable_idx() else {
            return Ok(()); // everything frozen; nothing to compute
        };
        let mut d_acc: Vec<Option<Tensor>> = (0..n_layers).map(|_| None).collect();
        d_acc[n_layers - 1] = Some(d_logits.clone());
        let mut new_grads: Vec<(String, Tensor)> = Vec::new();
        for i in (lowest..n_layers).rev() {
            let Some(d_out) = d_acc[i].take() else { continue };
            let l = &self.spec.layers[i];
            let input = if i == 0 { batch } else { &cache.outputs[i - 1] };
            let need_dx = i > lowest;
            let trainable = self.is_trainable(&l.name);
            let mut d_input: Option<Tensor> = None;
            match &l.kind {
                LayerKind::Conv2d { stride, padding, .. } => {
                    let w = &self.params[&format!("{}.weight", l.name)];
                    let (dx, dw, db) =
                        layers::conv2d_backward(input, w, &d_out, *stride, *padding, need_dx)
                            .map_err(|e| rename_layer_err(e, &l.name))?;
                    if trainable {
                        new_grads.push((format!("{}.weight", l.name), dw));
                        new_grads.push((format!("{}.bias", l.name), db));
                    }
                    d_input = dx;
                }
                LayerKind::FullyConnected { .. } => {
                    let w = &self.params[&format!("{}.weight", l.name)];
                    let (dx, dw, db) = layers::fc_backward(input, w, &d_out, need_dx)
                        .map_err(|e| rename_layer_err(e, &l.name))?;
                    if trainable {
                        new_grads.push((format!("{}.weight", l.name), dw));
                        new_grads.push((format!("{}.bias", l.name), db));
                    }
                    d_input = dx;
                }
                LayerKind::MaxPool2d { .. } => {
                    if need_dx {
                        let idx = cache.pool_idx[i].as_ref().expect("pool cache");
                        d_input = Some(
                            layers::maxpool2d_backward(input.shape(), idx, &d_out)
                                .map_err(|e| rename_layer_err(e, &l.name))?,
                        );
                    }
                }
                LayerKind::Relu => {
                    if need_dx {
                        d_input = Some(
                            layers::relu_backward(input, &d_out)
                                .map_err(|e| rename_layer_err(e, &l.name))?,
                        );
                    }
                }
                LayerKind::Flatten => {
                    if need_dx {
                        d_input = Some(layers::flatten_backward(input.shape(), &d_out)?);
                    }
                }
                LayerKind::ResidualAdd { from } | LayerKind::Concat { from } => {
                    let kind = match l.kind {
                        LayerKind::ResidualAdd { .. } => MergeKind::ResidualAdd,
                        _ => MergeKind::Concat,
                    };
                    let (da, db) = layers::merge_backward(kind, input.shape(), &d_out)
                        .map_err(|e| rename_layer_err(e, &l.name))?;
                    let src = self.by_name[from];
                    if src >= lowest {
                        accumulate(&mut d_acc[src], db)?;
                    }
                    if need_dx {
                        d_input = Some(da);
                    }
                }
            }
            if let Some(dx) = d_input {
                accumulate(&mut d_acc[i - 1], dx)?;
            }
        }
        for (name, g) in new_grads {
            self.grads.insert(name, g);
        }
        Ok(())
    }

    /// One plain gradient-descent update: `w -= lr * g` per element for
    /// every trainable layer; frozen layers are not touched at all.
    pub fn sgd_step(&mut self, lr: f32) -> Result<()> {
        if lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        for l in &self.spec.layers {
            if !l.kind.is_parameterized() || !self.is_trainable(&l.name) {
                continue;
            }
            for suffix in ["weight", "bias"] {
                let key = format!("{}.{suffix}", l.name);
                let g = &self.grads[&key];
                let w = self.params.get_mut(&key).expect("param exists");
                debug_assert_eq!(w.shape(), g.shape());
                for (wv, &gv) in w.data_mut().iter_mut().zip(g.data()) {
                    *wv -= lr * gv;
                }
            }
        }
        Ok(())
    }
}

fn rename_layer_err(e: Error, name: &str) -> Error {
    match e {
        Error::ShapeMismatch(m) => Error::ShapeMismatch(format!("layer {name:?}: {m}")),
        other => other,
    }
}

fn accumulate(slot: &mut Option<Tensor>, t: Tensor) -> Result<()> {
    *slot = Some(match slot.take() {
        Some(existing) => existing.add(&t)?,
        None => t,
    });
    Ok(())
}

fn he_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<Tensor> {
    let std = (2.0 / fan_in as f32).sqrt();
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(rng.normal(0.0, std)?);
    }
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc_only_spec(in_features: usize, k: usize) -> NetworkSpec {
        NetworkSpec {
            input_shape: (1, 1, in_features),
            layers: vec![
                LayerSpec {
                    name: "flatten".into(),
                    kind: LayerKind::Flatten,
                    stage: Stage::FeatureExtractor,
                },
                LayerSpec {
                    name: "fc".into(),
                    kind: LayerKind::FullyConnected { out_features: k },
                    stage: Stage::Classifier,
                },
            ],
            num_classes: k,
        }
    }

    fn random_batch(rng: &mut Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect()).unwrap()
    }

    #[test]
    fn single_fc_net_equals_fc_forward() {
        let mut rng = Rng::new(3);
        let net = Network::new(fc_only_spec(6, 4), &mut rng).unwrap();
        let batch = random_batch(&mut rng, &[2, 1, 1, 6]);
        let (logits, _) = net.forward(&batch).unwrap();
        let flat = batch.clone().reshape(&[2, 6]).unwrap();
        let direct =
            layers::fc_forward(&flat, net.param("fc.weight").unwrap(), net.param("fc.bias").unwrap())
                .unwrap();
        assert_eq!(logits, direct);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        // duplicate names
        let mut spec = fc_only_spec(4, 2);
        spec.layers[1].name = "flatten".into();
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        // final layer not matching num_classes
        let mut spec = fc_only_spec(4, 2);
        spec.num_classes = 3;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        // classifier before feature extractor
        let mut spec = fc_only_spec(4, 2);
        spec.layers[0].stage = Stage::Classifier;
        spec.layers[1].stage = Stage::FeatureExtractor;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn validation_names_failing_layer() {
        let spec = NetworkSpec {
            input_shape: (1, 4, 4),
            layers: vec![
                LayerSpec {
                    name: "pool_big".into(),
                    kind: LayerKind::MaxPool2d { window: 5, stride: 1 },
                    stage: Stage::FeatureExtractor,
                },
                LayerSpec {
                    name: "flatten".into(),
                    kind: LayerKind::Flatten,
                    stage: Stage::Classifier,
                },
                LayerSpec {
                    name: "fc".into(),
                    kind: LayerKind::FullyConnected { out_features: 2 },
                    stage: Stage::Classifier,
                },
            ],
            num_classes: 2,
        };
        match spec.validate() {
            Err(Error::ShapeMismatch(m)) => assert!(m.contains("pool_big"), "{m}"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn merge_must_reference_earlier_layer() {
        let spec = NetworkSpec {
            input_shape: (2, 4, 4),
            layers: vec![
                LayerSpec {
                    name: "add".into(),
                    kind: LayerKind::ResidualAdd { from: "nowhere".into() },
                    stage: Stage::FeatureExtractor,
                },
                LayerSpec {
                    name: "flatten".into(),
                    kind: LayerKind::Flatten,
                    stage: Stage::Classifier,
                },
                LayerSpec {
                    name: "fc".into(),
                    kind: LayerKind::FullyConnected { out_features: 2 },
                    stage: Stage::Classifier,
                },
            ],
            num_classes: 2,
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn sgd_moves_weights_by_exactly_lr_times_grad() {
        let mut rng = Rng::new(5);
        let mut net = Network::new(fc_only_spec(3, 2), &mut rng).unwrap();
        let w0 = net.param("fc.weight").unwrap().clone();
        // zero gradient leaves weights untouched
        net.sgd_step(0.01).unwrap();
        assert_eq!(net.param("fc.weight").unwrap(), &w0);
        // handcrafted gradient moves by exactly -lr*g
        net.grads.insert("fc.weight".into(), Tensor::new(&[3, 2], 2.0).unwrap());
        net.sgd_step(0.01).unwrap();
        let w1 = net.param("fc.weight").unwrap();
        for (a, b) in w1.data().iter().zip(w0.data()) {
            assert_eq!(a.to_bits(), (b - 0.01 * 2.0).to_bits());
        }
    }

    #[test]
    fn sgd_rejects_nonpositive_lr() {
        let mut rng = Rng::new(5);
        let mut net = Network::new(fc_only_spec(3, 2), &mut rng).unwrap();
        assert!(matches!(net.sgd_step(0.0), Err(Error::Config(_))));
        assert!(matches!(net.sgd_step(-0.1), Err(Error::Config(_))));
    }

    #[test]
    fn frozen_layer_ignores_sgd() {
        let mut rng = Rng::new(6);
        let spec = NetworkSpec {
            input_shape: (1, 4, 4),
            layers: vec![
                LayerSpec {
                    name: "conv1".into(),
                    kind: LayerKind::Conv2d { out_channels: 2, kernel: 3, stride: 1, padding: 1 },
                    stage: Stage::FeatureExtractor,
                },
                LayerSpec {
                    name: "flatten".into(),
                    kind: LayerKind::Flatten,
                    stage: Stage::FeatureExtractor,
                },
                LayerSpec {
                    name: "fc".into(),
                    kind: LayerKind::FullyConnected { out_features: 3 },
                    stage: Stage::Classifier,
                },
            ],
            num_classes: 3,
        };
        let mut net = Network::new(spec, &mut rng).unwrap();
        net.set_freeze(Freeze::Count(1)).unwrap();
        let w0 = net.param("conv1.weight").unwrap().clone();
        net.grads.insert("conv1.weight".into(), Tensor::new(&[2, 1, 3, 3], 2.0).unwrap());
        net.sgd_step(0.5).unwrap();
        let w1 = net.param("conv1.weight").unwrap();
        for (a, b) in w1.data().iter().zip(w0.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn freeze_counting_and_bounds() {
        let mut rng = Rng::new(7);
        let net_spec = presets::build_spec(Preset::Vanilla, (1, 32, 32), 36).unwrap();
        let mut net = Network::new(net_spec, &mut rng).unwrap();
        assert!(net.set_freeze(Freeze::Count(99)).is_err());
        net.set_freeze(Freeze::Count(1)).unwrap();
        assert!(!net.is_trainable("conv1"));
        assert!(net.is_trainable("conv2"));
        net.set_freeze(Freeze::Count(0)).unwrap();
        assert!(net.is_trainable("conv1"));
        net.set_freeze(Freeze::All).unwrap();
        for name in net.stage_layers(Stage::FeatureExtractor) {
            assert!(!net.is_trainable(&name));
        }
        for name in net.stage_layers(Stage::Classifier) {
            assert!(net.is_trainable(&name));
        }
    }

    #[test]
    fn freeze_all_leaves_feature_grads_zero_but_classifier_learns() {
        let mut rng = Rng::new(8);
        let spec = presets::build_spec(Preset::Vanilla, (1, 16, 16), 4).unwrap();
        let mut net = Network::new(spec, &mut rng).unwrap();
        net.set_freeze(Freeze::All).unwrap();
        let batch = random_batch(&mut rng, &[2, 1, 16, 16]);
        let (logits, cache) = net.forward(&batch).unwrap();
        let (_, d_logits) = loss::cross_entropy_loss(&logits, &[0, 1]).unwrap();
        net.backward(&batch, &cache, &d_logits).unwrap();
        for name in net.stage_layers(Stage::FeatureExtractor) {
            let g = net.grad(&format!("{name}.weight")).unwrap();
            assert!(g.data().iter().all(|&v| v == 0.0), "frozen {name} has nonzero grads");
        }
        let g = net.grad("fc1.weight").unwrap();
        assert!(g.data().iter().any(|&v| v != 0.0), "classifier grads are all zero");
    }

    #[test]
    fn forward_rejects_wrong_batch_shape() {
        let mut rng = Rng::new(9);
        let net = Network::new(fc_only_spec(4, 2), &mut rng).unwrap();
        let bad = Tensor::zeros(&[1, 1, 1, 5]).unwrap();
        assert!(matches!(net.forward(&bad), Err(Error::ShapeMismatch(_))));
    }
}
