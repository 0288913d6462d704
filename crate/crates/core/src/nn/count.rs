//! Parameter and FLOP accounting.

use serde::Serialize;

use super::model::Architecture;
use crate::error::Result;

pub const FLOP_CONVENTION: &str =
    "FLOPs = 2 x multiply-accumulates, summed over Conv2D, SeparableConv2D and Dense layers";

#[derive(Debug, Clone, Serialize)]
pub struct LayerCount {
    pub section: &'static str,
    pub index: usize,
    pub kind: &'static str,
    pub output_shape: Vec<usize>,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Complexity {
    pub model: String,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerCount>,
    pub params: u64,
    pub flops: u64,
    pub convention: &'static str,
}

/// Published complexity of reference transfer-learning models.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReferenceRow {
    pub model: &'static str,
    pub flops_millions: f64,
    pub params_millions: f64,
}

pub const REFERENCE_ROWS: [ReferenceRow; 6] = [
    ReferenceRow { model: "VGG16", flops_millions: 30960.0, params_millions: 138.0 },
    ReferenceRow { model: "ResNet50", flops_millions: 7751.0, params_millions: 23.58 },
    ReferenceRow { model: "ResNet101", flops_millions: 15195.0, params_millions: 42.65 },
    ReferenceRow { model: "VGG19", flops_millions: 39037.83, params_millions: 20.02 },
    ReferenceRow { model: "InceptionResNetV2", flops_millions: 26382.0, params_millions: 55.87 },
    ReferenceRow { model: "Modified VGG16", flops_millions: 30713.0, params_millions: 15.0 },
];

pub fn complexity(arch: &Architecture, input_shape: [usize; 3]) -> Result<Complexity> {
    let mut shape = input_shape.to_vec();
    let mut layers = Vec::new();
    let sections = [("backbone", &arch.backbone), ("head", &arch.head)];
    for (section, specs) in sections {
        for (index, spec) in specs.iter().enumerate() {
            let params = spec.param_shapes(&shape)?.iter().map(|(_, s)| s.iter().product::<usize>() as u64).sum();
            let macs = spec.macs(&shape)?;
            let output_shape = spec.output_shape(&shape)?;
            layers.push(LayerCount { section, index, kind: spec.name(), output_shape: output_shape.clone(), params, macs });
            shape = output_shape;
        }
    }
    let params = layers.iter().map(|l| l.params).sum();
    let flops = 2 * layers.iter().map(|l| l.macs).sum::<u64>();
    Ok(Complexity { model: arch.name.clone(), input_shape, layers, params, flops, convention: FLOP_CONVENTION })
}

/// Weight and bias elements of every layer, trainable or not.
pub fn count_params(arch: &Architecture) -> Result<u64> {
    Ok(complexity(arch, arch.input_shape)?.params)
}

pub fn count_flops(arch: &Architecture, input_shape: [usize; 3]) -> Result<u64> {
    Ok(complexity(arch, input_shape)?.flops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Activation, LayerSpec, Padding};

    fn arch(backbone: Vec<LayerSpec>, head: Vec<LayerSpec>, input: [usize; 3]) -> Architecture {
        Architecture { name: "t".into(), input_shape: input, backbone, head }
    }

    #[test]
    fn small_cases() {
        let empty = arch(vec![], vec![], [1, 1, 1]);
        assert_eq!(count_params(&empty).unwrap(), 0);
        let dense = |units, input: [usize; 3]| {
            arch(vec![], vec![LayerSpec::Flatten, LayerSpec::Dense { units, activation: Activation::Relu }], input)
        };
        assert_eq!(count_params(&dense(64, [1, 1, 256])).unwrap(), 16448);
        let d = dense(5, [1, 1, 10]);
        assert_eq!(count_flops(&d, d.input_shape).unwrap(), 100);
    }

    #[test]
    fn classifier_head_param_counts() {
        // per layer: separable 9*512 + 512*64 + 64, dense 256*64 + 64, dense 64*2 + 2
        let head = arch(vec![], Architecture::classifier_head(Padding::Valid), [7, 7, 512]);
        let c = complexity(&head, head.input_shape).unwrap();
        let per_layer: Vec<u64> = c.layers.iter().map(|l| l.params).filter(|&p| p > 0).collect();
        assert_eq!(per_layer, vec![37_440, 16_448, 130]);
        assert_eq!(c.params, 54_018);
    }

    #[test]
    fn vgg16_backbone_params() {
        let bb = arch(Architecture::vgg16_backbone(), vec![], [224, 224, 3]);
        assert_eq!(count_params(&bb).unwrap(), 14_714_688);
        assert_eq!(count_params(&Architecture::vgg16()).unwrap(), 138_357_544);
    }
}
