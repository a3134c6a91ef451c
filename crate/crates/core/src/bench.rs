//! Shipped configurations and benchmark suites.

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::mapping::Mapping;
use crate::workload::{Workload, WorkloadConfig};

macro_rules! configs {
    ($dir:literal: $($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../configs/", $dir, "/", $name, ".toml")))),*]
    };
}

pub const ARCHS: &[(&str, &str)] = configs!("arch": "pe-8x8", "pe-8x8-ample", "vector-1x64", "eyeriss-14x12", "shidiannao-8x8");

pub const MAPPINGS: &[(&str, &str)] = configs!(
    "mapping": "os-ij-8x8", "os-ij-gemm8", "ws-kj-8x8", "vector-j-1x64", "rs-alexnet-conv2", "rs-alexnet-conv2-small", "ws-kc-8x8",
    "shidiannao-oxoy-8x8",
);

pub const WORKLOADS: &[(&str, &str)] = configs!(
    "workload": "gemm-256", "gemm-8", "alexnet-conv2", "alexnet-conv2-small", "mobilenetv2-2", "resnet50-1", "conv-tiny",
);

fn lookup(table: &[(&str, &'static str)], kind: &str, name: &str) -> Result<&'static str> {
    table.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
        Error::config(format!("unknown builtin {kind} '{name}' (available: {})", names.join(", ")))
    })
}

pub fn arch_text(name: &str) -> Result<&'static str> {
    lookup(ARCHS, "arch", name)
}

pub fn mapping_text(name: &str) -> Result<&'static str> {
    lookup(MAPPINGS, "mapping", name)
}

pub fn workload_text(name: &str) -> Result<&'static str> {
    lookup(WORKLOADS, "workload", name)
}

pub fn workload(name: &str) -> Result<Workload> {
    WorkloadConfig::parse(workload_text(name)?)?.build()
}

/// Everything needed to evaluate one mapping, plus the source texts (hashed
/// into report provenance).
#[derive(Debug, Clone)]
pub struct BenchCase {
    pub name: String,
    pub arch: ArchSpec,
    pub mapping: Mapping,
    pub workload: Workload,
    pub arch_text: String,
    pub mapping_text: String,
    pub workload_text: String,
}

impl BenchCase {
    pub fn from_texts(name: &str, arch: &str, mapping: &str, workload: &str) -> Result<Self> {
        Ok(BenchCase {
            name: name.to_string(),
            arch: ArchSpec::parse(arch)?,
            mapping: Mapping::parse(mapping)?,
            workload: WorkloadConfig::parse(workload)?.build()?,
            arch_text: arch.to_string(),
            mapping_text: mapping.to_string(),
            workload_text: workload.to_string(),
        })
    }

    fn builtin(name: &str, arch: &str, mapping: &str, workload: &str) -> Result<Self> {
        Self::from_texts(name, arch_text(arch)?, mapping_text(mapping)?, workload_text(workload)?)
    }
}

pub const SUITES: &[&str] = &["gemm", "conv", "full", "small"];

/// `(case, arch, mapping, workload)` rows of the full-size suite.
const FULL: &[(&str, &str, &str, &str)] = &[
    ("gemm-os-ij", "pe-8x8", "os-ij-8x8", "gemm-256"),
    ("gemm-ws-kj", "pe-8x8", "ws-kj-8x8", "gemm-256"),
    ("gemm-vector-j", "vector-1x64", "vector-j-1x64", "gemm-256"),
    ("conv-rs-alexnet", "eyeriss-14x12", "rs-alexnet-conv2", "alexnet-conv2"),
    ("conv-ws-kc-mobilenet", "pe-8x8", "ws-kc-8x8", "mobilenetv2-2"),
    ("conv-shidiannao-resnet", "shidiannao-8x8", "shidiannao-oxoy-8x8", "resnet50-1"),
];

pub fn suite(name: &str) -> Result<Vec<BenchCase>> {
    let rows = |r: &[(&str, &str, &str, &str)]| r.iter().map(|(n, a, m, w)| BenchCase::builtin(n, a, m, w)).collect();
    match name {
        "gemm" => rows(&FULL[..3]),
        "conv" => rows(&FULL[3..]),
        "full" => rows(FULL),
        "small" => small_cases(),
        _ => Err(Error::config(format!("unknown suite '{name}' (available: {})", SUITES.join(", ")))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GemmDataflow {
    OutputStationary,
    WeightStationary,
    Vector,
}

impl GemmDataflow {
    pub const ALL: [GemmDataflow; 3] = [GemmDataflow::OutputStationary, GemmDataflow::WeightStationary, GemmDataflow::Vector];

    pub fn tag(self) -> &'static str {
        match self {
            GemmDataflow::OutputStationary => "os-ij",
            GemmDataflow::WeightStationary => "ws-kj",
            GemmDataflow::Vector => "vector-j",
        }
    }
}

fn grid_arch(base: &str, name: &str, grid: [i64; 2]) -> String {
    let (from_name, from_grid) = match base {
        "vector-1x64" => ("vector-1x64", "grid = [64, 1]"),
        "eyeriss-14x12" => ("eyeriss-14x12", "grid = [14, 12]"),
        "shidiannao-8x8" => ("shidiannao-8x8", "grid = [8, 8]"),
        _ => ("pe-8x8", "grid = [8, 8]"),
    };
    let text = arch_text(from_name).expect("shipped arch");
    let pe = text.lines().find(|l| l.starts_with("pe_size")).expect("pe_size line");
    text.replace(&format!("name = \"{from_name}\""), &format!("name = \"{name}\""))
        .replace(from_grid, &format!("grid = [{}, {}]", grid[0], grid[1]))
        .replace(pe, &format!("pe_size = {}", grid[0] * grid[1]))
}

/// gemm(8,8,8) under one of the GEMM dataflows on a `g x g` array (or a
/// `g*g`-lane vector unit).
pub fn scaled_gemm(df: GemmDataflow, g: i64) -> Result<BenchCase> {
    if !matches!(g, 1 | 2 | 4 | 8) {
        return Err(Error::config(format!("scaled gemm needs a grid side dividing 8, got {g}")));
    }
    let name = format!("gemm8-{}-{g}x{g}", df.tag());
    let (arch, glb) = match df {
        GemmDataflow::OutputStationary => (
            grid_arch("pe-8x8", &format!("pe-{g}x{g}"), [g, g]),
            format!(
                "temporal_order = [\"i\", \"j\", \"k\"]\ntemporal_tile = {{ i = 4, j = 8, k = 8 }}\nspatial_tile = {{ i = {}, j = {} }}\nspace_x = \"j\"\nspace_y = \"i\"",
                4 / g.min(4),
                8 / g
            ),
        ),
        GemmDataflow::WeightStationary => (
            grid_arch("pe-8x8", &format!("pe-{g}x{g}"), [g, g]),
            format!(
                "temporal_order = [\"j\", \"k\", \"i\"]\ntemporal_tile = {{ i = 8, j = 4, k = 8 }}\nspatial_tile = {{ j = {}, k = {} }}\nspace_x = \"j\"\nspace_y = \"k\"",
                4 / g.min(4),
                8 / g
            ),
        ),
        GemmDataflow::Vector => {
            let lanes = (g * g).min(8);
            (
                grid_arch("vector-1x64", &format!("vector-1x{}", g * g), [g * g, 1]),
                format!(
                    "temporal_order = [\"i\", \"k\", \"j\"]\ntemporal_tile = {{ i = 4, j = 8, k = 8 }}\nspatial_tile = {{ j = {} }}\nspace_x = \"j\"",
                    8 / lanes
                ),
            )
        }
    };
    let mapping = format!(
        "name = \"{name}\"\n\n[[levels]]\nlevel = \"DRAM\"\ntemporal_order = [\"i\", \"j\", \"k\"]\n\n[[levels]]\nlevel = \"GLB\"\n{glb}\n\n[[levels]]\nlevel = \"RF\"\ntemporal_order = [\"i\", \"j\", \"k\"]\ntemporal_tile = {{ i = 1, j = 1, k = 1 }}\n"
    );
    BenchCase::from_texts(&name, &arch, &mapping, workload_text("gemm-8")?)
}

const CONV_LEAF: &str = "[[levels]]\nlevel = \"RF\"\ntemporal_order = [\"n\", \"k\", \"c\", \"oy\", \"ox\", \"r\", \"s\"]\ntemporal_tile = { n = 1, k = 1, c = 1, oy = 1, ox = 1, r = 1, s = 1 }\n";

/// The 4x4 output / 3x3 kernel convolution under row stationary on a 4x3
/// Eyeriss-like array.
pub fn tiny_conv_rs() -> Result<BenchCase> {
    let arch = grid_arch("eyeriss-14x12", "eyeriss-4x3", [4, 3]);
    let mapping = format!(
        "name = \"rs-conv-tiny\"\n\n[[levels]]\nlevel = \"DRAM\"\ntemporal_order = [\"n\", \"k\", \"c\", \"oy\", \"ox\", \"r\", \"s\"]\n\n\
         [[levels]]\nlevel = \"GLB\"\ntemporal_order = [\"n\", \"k\", \"c\", \"oy\", \"ox\", \"r\", \"s\"]\nspatial_tile = {{ oy = 1, s = 1 }}\nspace_x = \"oy\"\nspace_y = \"s\"\n\n\
         [[levels]]\nlevel = \"NoC\"\ntemporal_order = [\"n\", \"k\", \"c\", \"oy\", \"r\", \"ox\", \"s\"]\n\n{CONV_LEAF}"
    );
    BenchCase::from_texts("conv-tiny-rs-4x3", &arch, &mapping, workload_text("conv-tiny")?)
}

/// The same convolution ShiDianNao-style on a 4x4 array.
pub fn tiny_conv_shidiannao() -> Result<BenchCase> {
    let arch = grid_arch("shidiannao-8x8", "shidiannao-4x4", [4, 4]);
    let mapping = format!(
        "name = \"shidiannao-conv-tiny\"\n\n[[levels]]\nlevel = \"DRAM\"\ntemporal_order = [\"n\", \"k\", \"c\", \"oy\", \"ox\", \"r\", \"s\"]\n\n\
         [[levels]]\nlevel = \"GLB\"\ntemporal_order = [\"n\", \"k\", \"c\", \"s\", \"r\", \"oy\", \"ox\"]\nspatial_tile = {{ oy = 1, ox = 1 }}\nspace_x = \"ox\"\nspace_y = \"oy\"\n\n{CONV_LEAF}"
    );
    BenchCase::from_texts("conv-tiny-shidiannao-4x4", &arch, &mapping, workload_text("conv-tiny")?)
}

/// Desk-scale cases small enough for the trace oracle.
pub fn small_cases() -> Result<Vec<BenchCase>> {
    let mut out = Vec::new();
    for g in [4, 2] {
        for df in GemmDataflow::ALL {
            out.push(scaled_gemm(df, g)?);
        }
    }
    out.push(tiny_conv_rs()?);
    out.push(tiny_conv_shidiannao()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::check_legality;

    #[test]
    fn shipped_configs_parse() {
        for (n, t) in ARCHS {
            ArchSpec::parse(t).unwrap_or_else(|e| panic!("{n}: {e}"));
        }
        for (n, t) in MAPPINGS {
            Mapping::parse(t).unwrap_or_else(|e| panic!("{n}: {e}"));
        }
        for (n, _) in WORKLOADS {
            workload(n).unwrap_or_else(|e| panic!("{n}: {e}"));
        }
    }

    #[test]
    fn every_suite_case_is_legal() {
        for s in SUITES {
            for c in suite(s).unwrap() {
                let v = check_legality(&c.mapping, &c.arch, &c.workload);
                assert!(v.is_empty(), "{}: {:?}", c.name, v);
            }
        }
    }

    #[test]
    fn suites_have_expected_sizes() {
        assert_eq!(suite("gemm").unwrap().len(), 3);
        assert_eq!(suite("conv").unwrap().len(), 3);
        assert_eq!(suite("small").unwrap().len(), 8);
        let e = suite("nope").unwrap_err().to_string();
        assert!(e.contains("gemm") && e.contains("conv"), "{e}");
    }

    #[test]
    fn alexnet_conv2_shape() {
        let w = workload("alexnet-conv2").unwrap();
        assert_eq!(w.extents(), vec![1, 256, 48, 27, 27, 5, 5]);
        assert_eq!(workload("gemm-256").unwrap().instance_count(), 1 << 24);
    }
}
