//! Metadata for the 27 ImageNet-pretrained CNN architectures in the benchmark.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchitectureSpec {
    /// Model-zoo identifier, e.g. `wide_resnet50_2`.
    pub id: &'static str,
    /// Display name used in tables, e.g. `Wide ResNet-50-2`.
    pub name: &'static str,
    /// Table grouping.
    pub family: &'static str,
    pub input_size: u32,
    pub depth: u32,
    pub params_millions: f64,
    pub imagenet_top1_err: f64,
    pub imagenet_top5_err: f64,
}

const fn arch(
    id: &'static str,
    name: &'static str,
    family: &'static str,
    depth: u32,
    params_millions: f64,
    imagenet_top1_err: f64,
    imagenet_top5_err: f64,
) -> ArchitectureSpec {
    ArchitectureSpec {
        id,
        name,
        family,
        input_size: 224,
        depth,
        params_millions,
        imagenet_top1_err,
        imagenet_top5_err,
    }
}

static REGISTRY: [ArchitectureSpec; 27] = [
    arch("alexnet", "AlexNet", "AlexNet", 5, 61.0, 43.45, 20.91),
    arch(
        "densenet121",
        "Densenet-121",
        "DenseNet",
        121,
        8.0,
        25.35,
        7.83,
    ),
    arch(
        "densenet161",
        "Densenet-161",
        "DenseNet",
        161,
        28.0,
        22.35,
        6.2,
    ),
    arch(
        "densenet169",
        "Densenet-169",
        "DenseNet",
        169,
        14.0,
        24.0,
        7.0,
    ),
    arch(
        "densenet201",
        "Densenet-201",
        "DenseNet",
        201,
        20.0,
        22.8,
        6.43,
    ),
    arch("vgg11_bn", "VGG-11bn", "VGG", 11, 133.0, 29.62, 10.19),
    arch("vgg11", "VGG-11", "VGG", 11, 133.0, 30.98, 11.37),
    arch("vgg13", "VGG-13", "VGG", 13, 133.0, 30.07, 10.75),
    arch("vgg13_bn", "VGG-13bn", "VGG", 13, 133.0, 28.45, 9.63),
    arch("vgg16_bn", "VGG-16bn", "VGG", 16, 138.0, 26.63, 8.5),
    arch("vgg16", "VGG-16", "VGG", 16, 138.0, 28.41, 9.62),
    arch("vgg19", "VGG-19", "VGG", 19, 144.0, 27.62, 9.12),
    arch("vgg19_bn", "VGG-19bn", "VGG", 19, 144.0, 25.76, 8.15),
    arch("resnet18", "ResNet-18", "ResNet", 18, 11.0, 30.24, 10.92),
    arch("resnet34", "ResNet-34", "ResNet", 34, 21.0, 26.7, 8.58),
    arch("resnet50", "ResNet-50", "ResNet", 50, 25.0, 23.85, 7.13),
    arch("resnet101", "ResNet-101", "ResNet", 101, 44.0, 22.63, 6.44),
    arch("resnet152", "ResNet-152", "ResNet", 152, 60.0, 21.69, 5.94),
    arch(
        "resnext50_32x4d",
        "ResNeXt-50-32x4d",
        "ResNeXt",
        50,
        25.0,
        22.38,
        6.3,
    ),
    arch(
        "resnext101_32x8d",
        "ResNeXt-101-32x8d",
        "ResNeXt",
        101,
        88.0,
        20.69,
        5.47,
    ),
    arch(
        "squeezenet1_0",
        "SqueezeNet 1.0",
        "SqueezeNet",
        18,
        1.24,
        41.9,
        19.58,
    ),
    arch(
        "squeezenet1_1",
        "SqueezeNet 1.1",
        "SqueezeNet",
        18,
        1.23,
        41.81,
        19.38,
    ),
    arch(
        "wide_resnet50_2",
        "Wide ResNet-50-2",
        "Wide ResNet",
        50,
        68.0,
        21.49,
        5.91,
    ),
    arch(
        "wide_resnet101_2",
        "Wide ResNet-101-2",
        "Wide ResNet",
        101,
        126.0,
        21.16,
        5.72,
    ),
    arch("googlenet", "GoogLeNet", "GoogLeNet", 22, 6.0, 30.22, 10.47),
    ArchitectureSpec {
        input_size: 299,
        ..arch(
            "inception_v3",
            "Inception-v3",
            "Inception",
            48,
            24.0,
            22.55,
            6.44,
        )
    },
    arch(
        "mobilenet_v2",
        "MobileNet-v2",
        "MobileNet",
        53,
        3.0,
        28.12,
        9.71,
    ),
];

/// All architectures, in benchmark table order.
pub fn registry() -> &'static [ArchitectureSpec] {
    &REGISTRY
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Finds an architecture by id or display name, ignoring case and punctuation
/// (`Wide ResNet-50-2`, `wide_resnet50_2` and `wideresnet502` all match).
pub fn lookup(name: &str) -> Option<&'static ArchitectureSpec> {
    let key = normalize(name);
    REGISTRY
        .iter()
        .find(|a| normalize(a.id) == key || normalize(a.name) == key)
}

pub fn require(name: &str) -> Result<&'static ArchitectureSpec> {
    lookup(name).ok_or_else(|| Error::UnknownArchitecture {
        name: name.to_string(),
        known: REGISTRY.iter().map(|a| a.id).collect::<Vec<_>>().join(", "),
    })
}

/// Table grouping for an architecture string; unknown architectures form their own group.
pub fn family_of(architecture: &str) -> String {
    lookup(architecture)
        .map(|a| a.family.to_string())
        .unwrap_or_else(|| architecture.to_string())
}
