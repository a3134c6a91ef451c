use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{analyze_volumes, SliceOptions, VolumeReport, Volumes};
use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::mapping::{legal_tiling, Mapping, ScheduleTree};
use crate::workload::Workload;

/// Average active MACs over leaf time-stamps divided by the PE count.
pub fn utilization(tree: &ScheduleTree, arch: &ArchSpec, total_mac: u64) -> f64 {
    let steps = tree.leaf_time_steps();
    total_mac as f64 / (arch.params.pe_size as f64 * steps as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub mac: f64,
    /// Per on-chip physical level.
    pub on_chip: BTreeMap<String, f64>,
    pub dram: f64,
    pub connect: f64,
    pub total: f64,
}

fn sum_arrays<F: Fn(&Volumes, Option<&Volumes>) -> f64>(v: &VolumeReport, level: &str, child: Option<&str>, f: F) -> f64 {
    v.entries
        .iter()
        .filter(|e| e.level == level)
        .map(|e| {
            let c = child.and_then(|c| v.get(c, &e.array));
            f(&e.volumes(), c.as_ref())
        })
        .sum()
}

pub fn energy(volumes: &VolumeReport, arch: &ArchSpec, util: f64, total_mac: u64) -> Result<EnergyBreakdown> {
    let p = &arch.params;
    let n = arch.levels.len();
    if n < 2 {
        return Err(Error::config("energy needs DRAM and at least one child level"));
    }
    // util * e_act + (1 - util) * e_idle, arranged so equal coefficients cancel exactly.
    let mac = (p.e_idle + util * (p.e_act - p.e_idle)) * total_mac as f64;

    let mut on_chip = BTreeMap::new();
    for a in 1..n {
        let l = &arch.levels[a];
        if l.is_virtual {
            continue;
        }
        let child = arch.levels.get(a + 1).map(|c| c.name.as_str());
        let e = sum_arrays(volumes, &l.name, child, |v, c| {
            // The leaf is read once per MAC operand access.
            let reads = match c {
                Some(c) => c.uv + c.tv,
                None => v.total,
            };
            l.write_energy * v.uv as f64 + l.read_energy * reads as f64
        });
        on_chip.insert(l.name.clone(), e);
    }

    let root = &arch.levels[0];
    let dram = sum_arrays(volumes, &arch.levels[1].name, None, |v, _| {
        root.write_energy * v.uv as f64 + root.read_energy * (v.uv + v.tv) as f64
    });

    let connect = volumes.entries.iter().map(|e| p.e_multi * e.sv as f64 + p.e_inter * e.tsv as f64).sum();
    let total = mac + on_chip.values().sum::<f64>() + dram + connect;
    Ok(EnergyBreakdown { mac, on_chip, dram, connect, total })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub cycles_comp: f64,
    pub dma_per_array: BTreeMap<String, f64>,
    pub cycles_dram: f64,
    pub multicast_per_array: BTreeMap<String, f64>,
    pub unicast_per_array: BTreeMap<String, f64>,
    pub cycles_on_chip: f64,
    pub cycles_comm: f64,
    pub total_cycles: f64,
}

pub fn exec_time(
    volumes: &VolumeReport,
    dma_reqs: &BTreeMap<String, u64>,
    arch: &ArchSpec,
    w: &Workload,
    leaf_time_steps: u64,
) -> Result<Timing> {
    let p = &arch.params;
    if p.bus_width <= 0.0 {
        return Err(Error::config("bus_width must be positive"));
    }
    if p.f_dma <= 0.0 {
        return Err(Error::config("f_dma must be positive"));
    }
    if arch.levels.len() < 2 {
        return Err(Error::config("timing needs DRAM and at least one child level"));
    }
    let cycles_comp = leaf_time_steps as f64 * p.lat_avg;

    let mut dma_per_array = BTreeMap::new();
    for e in volumes.entries.iter().filter(|e| e.level == arch.levels[1].name) {
        let reqs = dma_reqs.get(&e.array).copied().unwrap_or(0) as f64;
        let bytes = e.uv as f64 * w.element_bytes();
        dma_per_array.insert(e.array.clone(), (reqs * p.dma_init + p.dma_bytes_per_cycle_inv * bytes) * p.f_accel / p.f_dma);
    }
    let cycles_dram = dma_per_array.values().sum();

    // Transfers out of on-chip physical buffers.
    let mut multicast_per_array: BTreeMap<String, f64> = BTreeMap::new();
    let mut unicast_per_array: BTreeMap<String, f64> = BTreeMap::new();
    for a in 2..arch.levels.len() {
        if arch.levels[a - 1].is_virtual {
            continue;
        }
        for e in volumes.entries.iter().filter(|e| e.level == arch.levels[a].name) {
            *multicast_per_array.entry(e.array.clone()).or_default() += e.sv as f64 / p.bus_width;
            let uni = e.total.saturating_sub(e.sv + e.tv);
            *unicast_per_array.entry(e.array.clone()).or_default() += uni as f64 / p.bus_width;
        }
    }
    let cycles_on_chip = multicast_per_array.values().sum::<f64>() + unicast_per_array.values().sum::<f64>();
    let cycles_comm = f64::max(cycles_dram, cycles_on_chip);
    let total_cycles = f64::max(cycles_comp, cycles_comm);
    Ok(Timing {
        cycles_comp,
        dma_per_array,
        cycles_dram,
        multicast_per_array,
        unicast_per_array,
        cycles_on_chip,
        cycles_comm,
        total_cycles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub total_mac: u64,
    pub leaf_time_steps: u64,
    pub act_pe_avg: f64,
    pub util: f64,
    pub timing: Timing,
    pub energy: EnergyBreakdown,
    pub volumes: VolumeReport,
    pub dma_reqs: BTreeMap<String, u64>,
}

/// Legality check, volume analysis and cost model in one call.
pub fn evaluate(m: &Mapping, arch: &ArchSpec, w: &Workload, opts: SliceOptions) -> Result<(ScheduleTree, CostReport)> {
    let tiling = legal_tiling(m, arch, w)?;
    let tree = ScheduleTree::from_tiling(tiling);
    let va = analyze_volumes(&tree, arch, w, opts)?;
    let total_mac = w.instance_count();
    let steps = tree.leaf_time_steps();
    let util = utilization(&tree, arch, total_mac);
    let energy = energy(&va.report, arch, util, total_mac)?;
    let timing = exec_time(&va.report, &va.dma_reqs, arch, w, steps)?;
    let report = CostReport {
        total_mac,
        leaf_time_steps: steps,
        act_pe_avg: total_mac as f64 / steps as f64,
        util,
        timing,
        energy,
        volumes: va.report,
        dma_reqs: va.dma_reqs,
    };
    Ok((tree, report))
}
