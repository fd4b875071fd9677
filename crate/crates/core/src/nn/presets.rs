//! Miniature architecture presets.
//!
//! Each preset keeps one signature mechanism at a size that trains on a CPU
//! in minutes: `vanilla` is the plain conv/pool/fc baseline, `mini-alexnet`
//! a 5-conv/3-fc stack with a wider first kernel, `mini-vgg` stacked 3x3
//! pairs, `mini-resnet` a skip connection, `mini-densenet` channel
//! concatenation. Every preset shares the vanilla classifier head
//! (fc 128 -> relu -> fc K) on top of its own feature extractor.

use super::{LayerKind, LayerSpec, Network, NetworkSpec, Stage};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Vanilla,
    MiniAlexNet,
    MiniVgg,
    MiniResNet,
    MiniDenseNet,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Vanilla,
        Preset::MiniAlexNet,
        Preset::MiniVgg,
        Preset::MiniResNet,
        Preset::MiniDenseNet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Vanilla => "vanilla",
            Preset::MiniAlexNet => "mini-alexnet",
            Preset::MiniVgg => "mini-vgg",
            Preset::MiniResNet => "mini-resnet",
            Preset::MiniDenseNet => "mini-densenet",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

struct SpecBuilder {
    layers: Vec<LayerSpec>,
}

impl SpecBuilder {
    fn new() -> Self {
        Self { layers: Vec::new() }
    }

    fn push(&mut self, name: &str, kind: LayerKind, stage: Stage) -> &mut Self {
        self.layers.push(LayerSpec { name: name.into(), kind, stage });
        self
    }

    fn conv(&mut self, name: &str, out: usize, kernel: usize, padding: usize) -> &mut Self {
        self.push(
            name,
            LayerKind::Conv2d { out_channels: out, kernel, stride: 1, padding },
            Stage::FeatureExtractor,
        )
    }

    fn relu_fe(&mut self, name: &str) -> &mut Self {
        self.push(name, LayerKind::Relu, Stage::FeatureExtractor)
    }

    fn pool(&mut self, name: &str) -> &mut Self {
        self.push(name, LayerKind::MaxPool2d { window: 2, stride: 2 }, Stage::FeatureExtractor)
    }

    /// The classifier head every preset shares.
    fn head(&mut self, k: usize) -> &mut Self {
        self.push("flatten", LayerKind::Flatten, Stage::FeatureExtractor);
        self.push("fc1", LayerKind::FullyConnected { out_features: 128 }, Stage::Classifier);
        self.push("relu_fc1", LayerKind::Relu, Stage::Classifier);
        self.push("fc2", LayerKind::FullyConnected { out_features: k }, Stage::Classifier)
    }
}

/// Layer list of a preset for the given input geometry and class count.
pub fn build_spec(preset: Preset, input_shape: (usize, usize, usize), k: usize) -> Result<NetworkSpec> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {k}")));
    }
    let mut b = SpecBuilder::new();
    match preset {
        Preset::Vanilla => {
            b.conv("conv1", 16, 3, 1).relu_fe("relu1").pool("pool1");
            b.conv("conv2", 32, 3, 1).relu_fe("relu2").pool("pool2");
            b.conv("conv3", 64, 3, 1).relu_fe("relu3").pool("pool3");
            b.head(k);
        }
        Preset::MiniAlexNet => {
            b.conv("conv1", 16, 5, 2).relu_fe("relu1").pool("pool1");
            b.conv("conv2", 32, 3, 1).relu_fe("relu2").pool("pool2");
            b.conv("conv3", 48, 3, 1).relu_fe("relu3");
            b.conv("conv4", 48, 3, 1).relu_fe("relu4");
            b.conv("conv5", 32, 3, 1).relu_fe("relu5").pool("pool3");
            // the third fully-connected layer sits in the feature extractor,
            // so the 5-conv + 3-fc count holds while the head stays shared
            b.push("flatten", LayerKind::Flatten, Stage::FeatureExtractor);
            b.push("fc_pre", LayerKind::FullyConnected { out_features: 256 }, Stage::FeatureExtractor);
            b.push("relu_pre", LayerKind::Relu, Stage::FeatureExtractor);
            b.push("fc1", LayerKind::FullyConnected { out_features: 128 }, Stage::Classifier);
            b.push("relu_fc1", LayerKind::Relu, Stage::Classifier);
            b.push("fc2", LayerKind::FullyConnected { out_features: k }, Stage::Classifier);
        }
        Preset::MiniVgg => {
            b.conv("conv1a", 16, 3, 1).relu_fe("relu1a");
            b.conv("conv1b", 16, 3, 1).relu_fe("relu1b").pool("pool1");
            b.conv("conv2a", 32, 3, 1).relu_fe("relu2a");
            b.conv("conv2b", 32, 3, 1).relu_fe("relu2b").pool("pool2");
            b.conv("conv3a", 64, 3, 1).relu_fe("relu3a");
            b.conv("conv3b", 64, 3, 1).relu_fe("relu3b").pool("pool3");
            b.head(k);
        }
        Preset::MiniResNet => {
            b.conv("conv1", 16, 3, 1).relu_fe("relu1").pool("pool1");
            b.conv("conv2", 32, 3, 1).relu_fe("relu2").pool("pool2");
            b.conv("conv3", 32, 3, 1).relu_fe("relu3");
            b.conv("conv4", 32, 3, 1);
            b.push("skip", LayerKind::ResidualAdd { from: "pool2".into() }, Stage::FeatureExtractor);
            b.relu_fe("relu4").pool("pool3");
            b.head(k);
        }
        Preset::MiniDenseNet => {
            b.conv("conv1", 16, 3, 1).relu_fe("relu1").pool("pool1");
            b.conv("conv2", 16, 3, 1).relu_fe("relu2");
            b.push("cat1", LayerKind::Concat { from: "pool1".into() }, Stage::FeatureExtractor);
            b.conv("conv3", 16, 3, 1).relu_fe("relu3");
            b.push("cat2", LayerKind::Concat { from: "cat1".into() }, Stage::FeatureExtractor);
            b.pool("pool2");
            b.conv("conv4", 32, 3, 1).relu_fe("relu4").pool("pool3");
            b.head(k);
        }
    }
    let spec = NetworkSpec { input_shape, layers: b.layers, num_classes: k };
    spec.validate()?;
    Ok(spec)
}

/// Builds and He-initializes a preset network.
pub fn build_network(
    preset: Preset,
    input_shape: (usize, usize, usize),
    k: usize,
    rng: &mut Rng,
) -> Result<Network> {
    Network::new(build_spec(preset, input_shape, k)?, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn vanilla_produces_logits_of_class_count() {
        let mut rng = Rng::new(1);
        let net = build_network(Preset::Vanilla, (3, 128, 128), 36, &mut rng).unwrap();
        let batch = {
            let n = 2 * 3 * 128 * 128;
            Tensor::from_vec(
                &[2, 3, 128, 128],
                (0..n).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect(),
            )
            .unwrap()
        };
        let (logits, _) = net.forward(&batch).unwrap();
        assert_eq!(logits.shape(), &[2, 36]);
    }

    #[test]
    fn structural_contracts() {
        let resnet = build_spec(Preset::MiniResNet, (1, 32, 32), 36).unwrap();
        assert!(resnet.layers.iter().any(|l| matches!(l.kind, LayerKind::ResidualAdd { .. })));
        let densenet = build_spec(Preset::MiniDenseNet, (1, 32, 32), 36).unwrap();
        assert!(densenet.layers.iter().any(|l| matches!(l.kind, LayerKind::Concat { .. })));
    }

    #[test]
    fn mini_alexnet_has_five_convs_and_three_fcs() {
        let spec = build_spec(Preset::MiniAlexNet, (3, 64, 64), 36).unwrap();
        let convs = spec.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv2d { .. })).count();
        let fcs = spec
            .layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::FullyConnected { .. }))
            .count();
        assert_eq!((convs, fcs), (5, 3));
    }

    #[test]
    fn all_presets_run_forward_at_training_sizes() {
        for preset in Preset::ALL {
            for size in [32usize, 64] {
                let mut rng = Rng::new(2);
                let net = build_network(preset, (1, size, size), 36, &mut rng).unwrap();
                let batch = Tensor::new(&[1, 1, size, size], 0.5).unwrap();
                let (logits, _) = net.forward(&batch).unwrap();
                assert_eq!(logits.shape(), &[1, 36], "{} at {size}", preset.name());
            }
        }
    }

    #[test]
    fn too_small_input_is_shape_error() {
        assert!(matches!(
            build_spec(Preset::Vanilla, (1, 4, 4), 36),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn preset_parse_roundtrip() {
        for p in Preset::ALL {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
        }
        assert!(Preset::parse("vgg-16").is_err());
    }
}
