//! Stable JSON and CSV rendering of cost reports.
//!
//! Keys are sorted, counts and cycles are integers and energies carry exactly
//! six decimals, so identical inputs give byte-identical files.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{CostReport, VolumeReport};
use crate::bench::BenchCase;
use crate::error::{Error, Result};
use crate::oracle::DiffEntry;

pub const SCHEMA_VERSION: u32 = 1;

pub const CLASSIFICATION_NOTE: &str = "each placement is counted once, by priority TV > TSV > SV > UV; \
     UV = Total - TV - SV - TSV, so the four classes partition Total";

fn fixed(v: f64) -> Value {
    let v = if v == 0.0 { 0.0 } else { v };
    serde_json::from_str(&format!("{v:.6}")).expect("finite decimal")
}

fn cycles(v: f64) -> Value {
    Value::from(v.ceil() as u64)
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn volumes_json(v: &VolumeReport) -> Value {
    Value::Array(
        v.entries
            .iter()
            .map(|e| {
                json!({
                    "level": e.level, "array": e.array, "role": e.role.as_str(),
                    "tv": e.tv, "sv": e.sv, "tsv": e.tsv, "uv": e.uv, "total": e.total,
                })
            })
            .collect(),
    )
}

/// Outcome of an oracle cross-check, if one was run.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleCheck {
    Match { mean_active_pe: f64 },
    Mismatch(Vec<DiffEntry>),
}

pub fn report_json(case: &BenchCase, r: &CostReport, oracle: Option<&OracleCheck>) -> Value {
    let t = &r.timing;
    let e = &r.energy;
    let per_array = |m: &std::collections::BTreeMap<String, f64>| -> Value {
        Value::Object(m.iter().map(|(k, v)| (k.clone(), cycles(*v))).collect())
    };
    let w = &case.workload;
    let dims: Map<String, Value> = w.dims.iter().map(|d| (d.name.clone(), Value::from(d.extent))).collect();
    let mut out = json!({
        "schema_version": SCHEMA_VERSION,
        "case": case.name,
        "arch": case.arch.name,
        "mapping": case.mapping.name,
        "workload": { "name": w.name, "dims": dims, "element_bits": w.element_bits },
        "provenance": {
            "tool": "placement",
            "version": env!("CARGO_PKG_VERSION"),
            "arch_sha256": sha256_hex(&case.arch_text),
            "mapping_sha256": sha256_hex(&case.mapping_text),
            "workload_sha256": sha256_hex(&case.workload_text),
            "classification": CLASSIFICATION_NOTE,
        },
        "total_mac": r.total_mac,
        "leaf_time_steps": r.leaf_time_steps,
        "act_pe_avg": fixed(r.act_pe_avg),
        "util": fixed(r.util),
        "cycles": {
            "total": cycles(t.total_cycles),
            "comp": cycles(t.cycles_comp),
            "comm": cycles(t.cycles_comm),
            "dram": cycles(t.cycles_dram),
            "on_chip": cycles(t.cycles_on_chip),
            "dma_per_array": per_array(&t.dma_per_array),
            "multicast_per_array": per_array(&t.multicast_per_array),
            "unicast_per_array": per_array(&t.unicast_per_array),
        },
        "energy": {
            "total": fixed(e.total),
            "mac": fixed(e.mac),
            "dram": fixed(e.dram),
            "connect": fixed(e.connect),
            "on_chip": Value::Object(e.on_chip.iter().map(|(k, v)| (k.clone(), fixed(*v))).collect()),
        },
        "dma_reqs": r.dma_reqs,
        "volumes": volumes_json(&r.volumes),
    });
    if let Some(o) = oracle {
        let v = match o {
            OracleCheck::Match { mean_active_pe } => json!({ "volumes": "MATCH", "mean_active_pe": fixed(*mean_active_pe) }),
            OracleCheck::Mismatch(d) => json!({
                "volumes": "MISMATCH",
                "diff": d.iter().map(|e| json!({"level": e.level, "array": e.array, "field": e.field, "analysis": e.left, "oracle": e.right})).collect::<Vec<_>>(),
            }),
        };
        out["oracle"] = v;
    }
    out
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialise");
    s.push('\n');
    s
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::config(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per level and array access pattern counts.
pub fn volumes_csv(case: &str, r: &CostReport) -> Result<String> {
    let rows = r
        .volumes
        .entries
        .iter()
        .map(|e| {
            let mut row = vec![case.to_string(), e.level.clone(), e.array.clone(), e.role.as_str().to_string()];
            row.extend([e.tv, e.sv, e.tsv, e.uv, e.total].map(|v| v.to_string()));
            row
        })
        .collect();
    csv_string(&["case", "level", "array", "role", "tv", "sv", "tsv", "uv", "total"], rows)
}

/// Energy per component, six decimals.
pub fn energy_csv(case: &str, r: &CostReport) -> Result<String> {
    let e = &r.energy;
    let mut parts = vec![("mac".to_string(), e.mac)];
    parts.extend(e.on_chip.iter().map(|(k, v)| (k.clone(), *v)));
    parts.push(("dram".into(), e.dram));
    parts.push(("connect".into(), e.connect));
    parts.push(("total".into(), e.total));
    let rows = parts.into_iter().map(|(k, v)| vec![case.to_string(), k, format!("{v:.6}")]).collect();
    csv_string(&["case", "component", "energy"], rows)
}
