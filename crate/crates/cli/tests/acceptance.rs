//! Acceptance suite: prints one PASS/FAIL line per criterion and fails if any
//! criterion fails. Run with `cargo test --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use placement::analysis::{energy, evaluate, exec_time, SliceOptions};
use placement::arch::ArchSpec;
use placement::bench::{self, BenchCase};
use placement::intrel::{IntRelation, IntSet, Shape, Tuple};
use placement::mapping::{build_schedule_tree, check_legality, Mapping, Rule};
use placement::oracle::{active_pe_series, diff, simulate};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let cases = bench::small_cases().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for c in &cases {
        let tree = build_schedule_tree(&c.mapping, &c.workload).map_err(|e| e.to_string())?;
        let (_, r) = evaluate(&c.mapping, &c.arch, &c.workload, SliceOptions::default()).map_err(|e| e.to_string())?;
        let tr = simulate(&tree, &c.workload, &c.arch).map_err(|e| e.to_string())?;
        let d = diff(&r.volumes, &tr.volumes);
        ensure(d.is_empty(), || format!("{}: {}", c.name, d.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")))?;
        compared += r.volumes.entries.len();
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(30), || format!("took {took:?}"))?;
    Ok(format!("{} cases, {compared} (level, array) rows identical, {:.2} s", cases.len(), took.as_secs_f64()))
}

fn c2_ideal_time() -> Outcome {
    let c = BenchCase::from_texts(
        "gemm-os-ij-ample",
        bench::arch_text("pe-8x8-ample").unwrap(),
        bench::mapping_text("os-ij-8x8").unwrap(),
        bench::workload_text("gemm-256").unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let (_, r) = evaluate(&c.mapping, &c.arch, &c.workload, SliceOptions::default()).map_err(|e| e.to_string())?;
    let ideal = (256u64.pow(3) / 64) as f64 * c.arch.params.lat_avg;
    ensure(r.timing.total_cycles == ideal, || format!("total_cycles {} != {ideal}", r.timing.total_cycles))?;
    ensure(r.util == 1.0, || format!("util {} != 1", r.util))?;
    Ok(format!("total_cycles = {ideal} = 256^3/64 * lat_avg, util = 1.0"))
}

fn c3_partition() -> Outcome {
    let cases = bench::suite("full").map_err(|e| e.to_string())?;
    let mut rows = 0;
    for c in &cases {
        let (_, r) = evaluate(&c.mapping, &c.arch, &c.workload, SliceOptions::default()).map_err(|e| e.to_string())?;
        for e in &r.volumes.entries {
            ensure(e.tv + e.sv + e.tsv + e.uv == e.total, || format!("{} {} {}: {:?}", c.name, e.level, e.array, e.volumes()))?;
            rows += 1;
        }
        // Every MAC reads one element of each array at the leaf.
        let leaf = &c.arch.levels[c.arch.leaf()].name;
        for e in r.volumes.entries.iter().filter(|e| &e.level == leaf) {
            ensure(e.total == r.total_mac, || format!("{} leaf {} total {} != {}", c.name, e.array, e.total, r.total_mac))?;
        }
    }
    Ok(format!("{} benchmarks, {rows} (level, array) rows partition exactly", cases.len()))
}

fn c4_utilization() -> Outcome {
    let c = BenchCase::from_texts(
        "rs-alexnet-conv2-small",
        bench::arch_text("eyeriss-14x12").unwrap(),
        bench::mapping_text("rs-alexnet-conv2-small").unwrap(),
        bench::workload_text("alexnet-conv2-small").unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let (tree, r) = evaluate(&c.mapping, &c.arch, &c.workload, SliceOptions::default()).map_err(|e| e.to_string())?;
    let series = active_pe_series(&tree, &c.arch).map_err(|e| e.to_string())?;
    let busy: u64 = series.iter().sum();
    let steps = series.len() as u64;
    let pe = c.arch.params.pe_size;
    // util = total_mac / (pe * leaf_steps) against busy / (pe * steps), as exact fractions.
    ensure(r.total_mac * steps == busy * r.leaf_time_steps, || format!("analysis {}/{} vs oracle {busy}/{steps}", r.total_mac, r.leaf_time_steps))?;
    ensure(r.util == busy as f64 / (pe * steps) as f64, || format!("util {} vs {}", r.util, busy as f64 / (pe * steps) as f64))?;
    Ok(format!("util = {busy}/({pe}*{steps}) = {:.6} from both", r.util))
}

fn c5_identities() -> Outcome {
    let cases = bench::small_cases().map_err(|e| e.to_string())?;
    let evaluated: Vec<_> = cases
        .iter()
        .map(|c| evaluate(&c.mapping, &c.arch, &c.workload, SliceOptions::default()).map(|(_, r)| (c, r)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    let mut runner = TestRunner::new(Config { cases: 100, failure_persistence: None, ..Config::default() });
    let params = (0..evaluated.len(), 0.25f64..4.0, 0.5f64..128.0, 0.0f64..64.0, 50.0f64..400.0, 50.0f64..400.0, 0.0f64..1.0);
    runner
        .run(&params, |(i, lat, bus, init, fa, fd, inv)| {
            let (c, r) = &evaluated[i];
            let mut arch = c.arch.clone();
            let p = &mut arch.params;
            (p.lat_avg, p.bus_width, p.dma_init, p.f_accel, p.f_dma, p.dma_bytes_per_cycle_inv) = (lat, bus, init, fa, fd, inv);
            let t = exec_time(&r.volumes, &r.dma_reqs, &arch, &c.workload, r.leaf_time_steps).unwrap();
            prop_assert_eq!(t.total_cycles, t.cycles_comp.max(t.cycles_comm));
            prop_assert_eq!(t.cycles_comm, t.cycles_dram.max(t.cycles_on_chip));
            Ok(())
        })
        .map_err(|e| format!("max identity: {e}"))?;

    for (c, r) in &evaluated {
        let mut arch = c.arch.clone();
        let p = &mut arch.params;
        (p.e_act, p.e_idle, p.e_multi, p.e_inter) = (0.0, 0.0, 0.0, 0.0);
        for l in arch.levels.iter_mut() {
            (l.read_energy, l.write_energy) = (0.0, 0.0);
        }
        let e = energy(&r.volumes, &arch, r.util, r.total_mac).map_err(|e| e.to_string())?;
        ensure(e.total == 0.0, || format!("{}: zero coefficients gave {}", c.name, e.total))?;

        let mut arch = c.arch.clone();
        arch.params.e_idle = arch.params.e_act;
        let base = energy(&r.volumes, &arch, r.util, r.total_mac).map_err(|e| e.to_string())?.mac;
        for u in [0.0, 0.125, 1.0 / 3.0, 0.7, 1.0] {
            let m = energy(&r.volumes, &arch, u, r.total_mac).map_err(|e| e.to_string())?.mac;
            ensure(m == base, || format!("{}: E_mac {m} at util {u} vs {base}", c.name))?;
        }
    }
    Ok(format!("max identity on 100 random configs; zero energy and util-independent E_mac on {} cases", evaluated.len()))
}

fn gemm256_mapping(glb: &str) -> String {
    format!(
        "name = \"illegal\"\n[[levels]]\nlevel = \"DRAM\"\ntemporal_order = [\"i\", \"j\", \"k\"]\n\n\
         [[levels]]\nlevel = \"GLB\"\ntemporal_order = [\"i\", \"j\", \"k\"]\n{glb}\nspace_x = \"j\"\nspace_y = \"i\"\n\n\
         [[levels]]\nlevel = \"RF\"\ntemporal_order = [\"i\", \"j\", \"k\"]\ntemporal_tile = {{ i = 1, j = 1, k = 1 }}\n"
    )
}

fn c6_legality() -> Outcome {
    let arch = ArchSpec::parse(bench::arch_text("pe-8x8").unwrap()).map_err(|e| e.to_string())?;
    let w = bench::workload("gemm-256").map_err(|e| e.to_string())?;
    let cases = [
        // 16 rows of parallelism on an 8-row array.
        ("over-parallelism", "temporal_tile = { i = 64, j = 64, k = 256 }\nspatial_tile = { i = 4, j = 8 }", Rule::Parallelism),
        // 128x256 + 256x128 + 128x128 halfwords = 160 KiB in a 128 KiB buffer.
        ("capacity overflow", "temporal_tile = { i = 128, j = 128, k = 256 }\nspatial_tile = { i = 16, j = 16 }", Rule::Capacity),
        // 48 does not divide 256.
        ("tiling divisibility", "temporal_tile = { i = 48, j = 64, k = 256 }\nspatial_tile = { i = 6, j = 8 }", Rule::Tiling),
    ];
    let mut seen = Vec::new();
    for (what, glb, rule) in cases {
        let m = Mapping::parse(&gemm256_mapping(glb)).map_err(|e| e.to_string())?;
        let rules: BTreeSet<Rule> = check_legality(&m, &arch, &w).iter().map(|v| v.rule).collect();
        ensure(rules == BTreeSet::from([rule]), || format!("{what}: expected only {}, got {rules:?}", rule.as_str()))?;
        seen.push(format!("{what} -> {}", rule.as_str()));
    }
    // The legal baseline with the same shape passes.
    let ok = Mapping::parse(&gemm256_mapping("temporal_tile = { i = 64, j = 64, k = 256 }\nspatial_tile = { i = 8, j = 8 }")).unwrap();
    ensure(check_legality(&ok, &arch, &w).is_empty(), || "baseline mapping rejected".into())?;
    Ok(seen.join(", "))
}

fn c7_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [
        ("pe-8x8", "os-ij-8x8", "gemm-256", false),
        ("eyeriss-14x12", "rs-alexnet-conv2", "alexnet-conv2", false),
        ("pe-8x8", "os-ij-gemm8", "gemm-8", true),
    ];
    for (arch, mapping, workload, oracle) in runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let path = dir.path().join(format!("{mapping}-{rep}.json"));
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_placement"));
            cmd.args(["analyze", "--arch", arch, "--mapping", mapping, "--workload", workload, "--report"]).arg(&path);
            if oracle {
                cmd.arg("--with-oracle");
            }
            let st = cmd.stderr(std::process::Stdio::null()).status().map_err(|e| e.to_string())?;
            ensure(st.success(), || format!("{mapping}: exit {st}"))?;
            outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1], || format!("{mapping}: reports differ"))?;
    }
    Ok(format!("{} configurations, two runs each, byte-identical", runs.len()))
}

fn rel1() -> impl Strategy<Value = IntRelation> {
    prop::collection::vec((0i64..5, 0i64..5), 0..14).prop_map(|v| {
        IntRelation::from_pairs(Shape::flat(1), Shape::flat(1), v.into_iter().map(|(a, b)| (Tuple::from([a]), Tuple::from([b])))).unwrap()
    })
}

fn set2() -> impl Strategy<Value = IntSet> {
    prop::collection::vec((0i64..4, 0i64..4), 0..14)
        .prop_map(|v| IntSet::from_tuples(Shape::flat(2), v.into_iter().map(|(a, b)| Tuple::from([a, b]))).unwrap())
}

fn c9_intrel() -> Outcome {
    let cfg = || Config { cases: 1000, failure_persistence: None, ..Config::default() };
    let mut out = Vec::new();

    let mut r = TestRunner::new(cfg());
    r.run(&(rel1(), rel1(), rel1()), |(a, b, c)| {
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
        Ok(())
    })
    .map_err(|e| format!("associativity: {e}"))?;
    out.push("associativity");

    let mut r = TestRunner::new(cfg());
    r.run(&rel1(), |a| {
        prop_assert_eq!(a.inverse().inverse(), a);
        Ok(())
    })
    .map_err(|e| format!("involution: {e}"))?;
    out.push("involution");

    let mut r = TestRunner::new(cfg());
    r.run(&(set2(), set2(), rel1(), rel1()), |(a, b, p, q)| {
        let (u, i) = (a.union(&b).unwrap(), a.intersect(&b).unwrap());
        prop_assert_eq!(u.cardinality() + i.cardinality(), a.cardinality() + b.cardinality());
        let (u, i) = (p.union(&q).unwrap(), p.intersect(&q).unwrap());
        prop_assert_eq!(u.cardinality() + i.cardinality(), p.cardinality() + q.cardinality());
        Ok(())
    })
    .map_err(|e| format!("inclusion-exclusion: {e}"))?;
    out.push("inclusion-exclusion");

    let mut r = TestRunner::new(cfg());
    r.run(&set2(), |s| {
        let pred = s.lex_closest_pred();
        prop_assert_eq!(pred.cardinality(), s.cardinality().saturating_sub(1));
        // Each pair t -> p runs against lex order, so its inverse lies in lex_lt
        // and nothing in the set sits strictly between p and t.
        let lt = s.lex_lt().unwrap();
        for (t, p) in pred.iter() {
            prop_assert!(lt.contains(p, t));
            prop_assert!(!s.iter().any(|q| p < q && q < t));
        }
        Ok(())
    })
    .map_err(|e| format!("lex_closest_pred: {e}"))?;
    out.push("lex_closest_pred size law");

    Ok(format!("{} properties x 1000 cases", out.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        (1, "oracle equivalence", c1_oracle_equivalence),
        (2, "ideal execution time", c2_ideal_time),
        (3, "partition invariant", c3_partition),
        (4, "utilization vs oracle", c4_utilization),
        (5, "algebraic identities", c5_identities),
        (6, "legality gate", c6_legality),
        (7, "determinism", c7_determinism),
        (9, "intrel property suite", c9_intrel),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        let start = Instant::now();
        match f() {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail} [{:.1} s]", start.elapsed().as_secs_f64()),
            Err(why) => {
                println!("criterion {n} ({name}): FAIL - {why}");
                failed.push(n);
            }
        }
        if n == 7 {
            println!(
                "criterion 8 (hardware deltas): NOT REPRODUCIBLE - needs measured silicon and third-party model runs; covered by criteria 1-5 instead"
            );
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
