use std::collections::BTreeSet;

use super::*;
use crate::arch::ArchSpec;

pub(crate) const ARCH_4X4: &str = r#"
name = "pe-4x4"
[params]
e_act = 1.0
e_idle = 0.1
e_multi = 0.5
e_inter = 0.25
lat_avg = 1.0
pe_size = 16
bus_width = 16.0
f_accel = 1.0
f_dma = 1.0
dma_init = 0.0

[[levels]]
name = "L3"
grid = [1, 1]
read_energy = 200.0
write_energy = 200.0

[[levels]]
name = "L2"
parent = "L3"
grid = [1, 1]
capacity_bytes = 65536
read_energy = 6.0
write_energy = 6.0

[[levels]]
name = "L1"
parent = "L2"
grid = [4, 4]
dim = "XY"
capacity_bytes = 512
read_energy = 1.0
write_energy = 1.0
per_operand = { input = "ifmap_spad" }
buffer_capacity = { ifmap_spad = 24 }
connect = [ { relation = "{[x,y]->[x,y-1]}", buffer = "ifmap_spad" } ]

[[levels]]
name = "L0"
parent = "L1"
grid = [4, 4]
dim = "XY"
capacity_bytes = 16
read_energy = 0.5
write_energy = 0.5
"#;

pub(crate) const MAP_4X4: &str = r#"
name = "mm-ij"
[[levels]]
level = "L3"
temporal_order = ["i", "j", "k"]

[[levels]]
level = "L2"
temporal_order = ["i", "j", "k"]
spatial_tile = { i = 4, j = 4 }
space_x = "i"
space_y = "j"

[[levels]]
level = "L1"
temporal_order = ["i", "j", "k"]
temporal_tile = { i = 1, j = 1, k = 4 }

[[levels]]
level = "L0"
temporal_order = ["k", "i", "j"]
temporal_tile = { i = 1, j = 1, k = 1 }
"#;

fn setup() -> (Mapping, ArchSpec, Workload) {
    (Mapping::parse(MAP_4X4).unwrap(), ArchSpec::parse(ARCH_4X4).unwrap(), Workload::gemm(16, 16, 16).unwrap())
}

fn rules(v: &[Violation]) -> BTreeSet<Rule> {
    v.iter().map(|v| v.rule).collect()
}

#[test]
fn parallelism_ratios() {
    let (m, _, w) = setup();
    assert_eq!(m.parallelism(&w, "L2", "i").unwrap(), 4);
    assert_eq!(m.parallelism(&w, "L2", "j").unwrap(), 4);
    assert_eq!(m.parallelism(&w, "L2", "k").unwrap(), 1);
    assert!(m.parallelism(&w, "L9", "i").is_err());
    assert!(m.parallelism(&w, "L2", "q").is_err());

    let m2 = Mapping::parse(&MAP_4X4.replace("spatial_tile = { i = 4, j = 4 }", "temporal_tile = { i = 8 }\nspatial_tile = { i = 2, j = 4 }"))
        .unwrap();
    let w8 = Workload::gemm(8, 16, 16).unwrap();
    assert_eq!(m2.parallelism(&w8, "L2", "i").unwrap(), 4);
}

#[test]
fn reference_mapping_is_legal() {
    let (m, a, w) = setup();
    assert_eq!(check_legality(&m, &a, &w), vec![]);
    assert!(legal_tiling(&m, &a, &w).is_ok());
}

#[test]
fn over_parallelism_is_rule_two() {
    let (_, a, _) = setup();
    let w = Workload::gemm(32, 16, 16).unwrap();
    let m = Mapping::parse(MAP_4X4).unwrap();
    // i now has parallelism 8 onto a 4-wide x axis.
    let v = check_legality(&m, &a, &w);
    assert_eq!(rules(&v), [Rule::Parallelism].into());
    assert_eq!((v[0].required, v[0].available), (8, 4));
    assert!(v[0].to_string().starts_with("[parallelism] level L2 dim i"));
}

#[test]
fn unmapped_parallel_dim_is_rule_two() {
    let (_, a, w) = setup();
    let m = Mapping::parse(&MAP_4X4.replace("space_y = \"j\"\n", "")).unwrap();
    let v = check_legality(&m, &a, &w);
    assert_eq!(rules(&v), [Rule::Parallelism].into());
}

#[test]
fn capacity_overflow_is_rule_three() {
    let (m, a, w) = setup();
    // 3 operands of a (1,1,4) tile: A=4, B=4, C=1 datums; the input spad holds 24 bytes.
    let small = ArchSpec::parse(&ARCH_4X4.replace("ifmap_spad = 24", "ifmap_spad = 6")).unwrap();
    let v = check_legality(&m, &small, &w);
    assert_eq!(rules(&v), [Rule::Capacity].into());
    assert_eq!((v[0].required, v[0].available), (8, 6));
    assert!(check_legality(&m, &a, &w).is_empty());

    let tight = ArchSpec::parse(&ARCH_4X4.replace("capacity_bytes = 512", "capacity_bytes = 9")).unwrap();
    let v = check_legality(&m, &tight, &w);
    // B (4) + C (1) datums at 2 bytes each share the level buffer.
    assert_eq!((v[0].required, v[0].available), (10, 9));
}

#[test]
fn broken_divisibility_is_tiling() {
    let (_, a, w) = setup();
    let m = Mapping::parse(&MAP_4X4.replace("k = 4 }", "k = 3 }")).unwrap();
    let v = check_legality(&m, &a, &w);
    assert_eq!(rules(&v), [Rule::Tiling].into());
    let m = Mapping::parse(&MAP_4X4.replace("spatial_tile = { i = 4, j = 4 }", "spatial_tile = { i = 3, j = 4 }")).unwrap();
    assert!(rules(&check_legality(&m, &a, &w)).contains(&Rule::Tiling));
    let m = Mapping::parse(&MAP_4X4.replacen("temporal_order = [\"i\", \"j\", \"k\"]\n", "temporal_order = [\"i\", \"j\", \"k\"]\ntemporal_tile = { i = 8 }\n", 1))
        .unwrap();
    assert!(rules(&check_legality(&m, &a, &w)).contains(&Rule::Tiling));
}

#[test]
fn structural_problems() {
    let (_, a, w) = setup();
    let m = Mapping::parse(&MAP_4X4.replace("[\"k\", \"i\", \"j\"]", "[\"k\", \"i\"]")).unwrap();
    assert_eq!(rules(&check_legality(&m, &a, &w)), [Rule::Structure].into());
    let m = Mapping::parse(&MAP_4X4.replace("level = \"L0\"", "level = \"PE\"")).unwrap();
    assert_eq!(rules(&check_legality(&m, &a, &w)), [Rule::Structure].into());
    assert!(Mapping::parse(&MAP_4X4.replace("space_x", "spacex")).is_err());
}

#[test]
fn reduction_split_on_virtual_level_needs_accumulation() {
    let (_, a, w) = setup();
    let virt = ArchSpec::parse(&ARCH_4X4.replace("capacity_bytes = 65536", "virtual = true")).unwrap();
    let m = Mapping::parse(&MAP_4X4.replace(
        "spatial_tile = { i = 4, j = 4 }\nspace_x = \"i\"\nspace_y = \"j\"",
        "spatial_tile = { i = 4, k = 4 }\nspace_x = \"i\"\nspace_y = \"k\"",
    ))
    .unwrap();
    assert!(check_legality(&m, &a, &w).is_empty());
    let v = check_legality(&m, &virt, &w);
    assert_eq!(rules(&v), [Rule::Dependence].into());
    assert_eq!(v[0].dim.as_deref(), Some("k"));
}

#[test]
fn schedule_tree_structure() {
    let (m, _, w) = setup();
    let tree = build_schedule_tree(&m, &w).unwrap();
    let marks: Vec<&str> = tree.levels.iter().map(|l| l.level.as_str()).collect();
    assert_eq!(marks, ["L3", "L2", "L1", "L0"]);
    let space: Vec<bool> = tree.levels.iter().map(|l| l.space.is_some()).collect();
    assert_eq!(space, [false, true, false, false]);
    let sp = tree.levels[1].space.as_ref().unwrap();
    assert_eq!(sp.trips(), vec![4, 4]);
    assert_eq!(sp.members[0].axis, Some(SpaceAxis::Y));
    assert!(tree.render().contains("space band: [(j/4)%4@y, (i/4)%4@x]"));
    assert_eq!(tree.leaf_time_steps(), 16 * 16 * 16 / 16);
}

#[test]
fn tree_bands_enumerate_the_domain_once() {
    let (m, _, w) = setup();
    let tree = build_schedule_tree(&m, &w).unwrap();
    let mut seen = BTreeSet::new();
    let mut count = 0u64;
    tree.for_each_instance(|i| {
        seen.insert(i.to_vec());
        count += 1;
    });
    assert_eq!(count, w.instance_count());
    assert_eq!(seen.len() as u64, w.instance_count());
    assert!(seen.iter().all(|i| i.iter().zip(w.extents()).all(|(v, e)| 0 <= *v && *v < e)));
}

#[test]
fn purely_temporal_mapping_has_no_space_band() {
    let w = Workload::gemm(4, 4, 4).unwrap();
    let m = Mapping::parse(
        r#"
[[levels]]
level = "DRAM"
temporal_order = ["i", "j", "k"]
[[levels]]
level = "RF"
temporal_order = ["k", "j", "i"]
temporal_tile = { i = 2, j = 2, k = 1 }
"#,
    )
    .unwrap();
    let tree = build_schedule_tree(&m, &w).unwrap();
    assert!(tree.levels.iter().all(|l| l.space.is_none()));
    assert_eq!(tree.time_stamp(0, &[3, 1, 2]), vec![1, 0, 2]);
    assert_eq!(tree.time_stamp(1, &[3, 1, 2]), vec![1, 0, 2, 0, 1, 1]);
    assert_eq!(tree.time_trips(1), vec![2, 2, 4, 1, 2, 2]);
    let mut n = 0;
    tree.for_each_instance(|_| n += 1);
    assert_eq!(n, 64);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn divisors(n: i64) -> Vec<i64> {
        (1..=n).filter(|d| n % d == 0).collect()
    }

    proptest! {
        // Random exact tilings of a small GEMM always scan the domain bijectively,
        // and the per-dim tile ratios multiply back to the extent.
        #[test]
        fn random_tilings_are_bijective(pick in prop::collection::vec(0usize..16, 9)) {
            let ext = [4i64, 6, 4];
            let names = ["i", "j", "k"];
            let mut levels = Vec::new();
            let mut parent_s = ext.to_vec();
            for l in 0..3 {
                let mut tt = std::collections::BTreeMap::new();
                let mut st = std::collections::BTreeMap::new();
                let mut s_here = Vec::new();
                for d in 0..3 {
                    let t = if l == 0 { ext[d] } else {
                        let ds = divisors(parent_s[d]);
                        ds[pick[l * 3 + d] % ds.len()]
                    };
                    let ds = divisors(t);
                    let s = if l == 2 { t } else { ds[pick[(l * 3 + d + 4) % 9] % ds.len()] };
                    tt.insert(names[d].to_string(), t);
                    st.insert(names[d].to_string(), s);
                    s_here.push(s);
                }
                parent_s = s_here;
                levels.push(LevelMapping {
                    level: format!("L{l}"),
                    temporal_order: vec!["k".into(), "i".into(), "j".into()],
                    temporal_tile: tt,
                    spatial_tile: st,
                    space_x: Some("i".into()),
                    space_y: Some("j".into()),
                    simd: Some("k".into()),
                });
            }
            let m = Mapping { name: String::new(), note: None, levels };
            let w = Workload::gemm(4, 6, 4).unwrap();
            let tree = build_schedule_tree(&m, &w).unwrap();
            let mut seen = BTreeSet::new();
            tree.for_each_instance(|i| { seen.insert(i.to_vec()); });
            prop_assert_eq!(seen.len() as u64, w.instance_count());
            let t = &tree.tiling;
            for (d, e) in ext.iter().enumerate() {
                let prod: i64 = (0..3).map(|a| t.parallelism(a, d) * t.time_trip(a, d)).product();
                prop_assert_eq!(prod, *e);
            }
        }
    }
}
