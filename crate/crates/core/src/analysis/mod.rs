//! Reuse classification of placements and the cost model built on it.
//!
//! Every child placement `(element, unit, t)` of a level is counted once, in
//! this priority order:
//!
//! * **TV**  the same unit held the element at the preceding time-stamp;
//! * **TSV** a connect-neighbour (`s' -> s`) held it at the preceding
//!   time-stamp, or holds it at the same time-stamp and forwards it with a
//!   skew;
//! * **SV**  the level receives this operand by multicast and another unit
//!   fed by the same parent unit gets the same element at the same time:
//!   a group of `g` such placements contributes `g - 1`;
//! * **UV**  everything else (fetched from the parent).
//!
//! So `TV + SV + TSV + UV == Total` always holds.

mod cost;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;
use std::ops::AddAssign;

use serde::Serialize;

use crate::arch::ArchSpec;
use crate::dpr::{element_shift, InterLevelPlacement, LevelSlicer};
use crate::error::{Error, Result};
use crate::intrel::{IntRelError, IntRelation, Shape, Tuple};
use crate::mapping::ScheduleTree;
use crate::workload::{Role, Workload};

pub use cost::{energy, evaluate, exec_time, utilization, CostReport, EnergyBreakdown, Timing};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Volumes {
    pub tv: u64,
    pub sv: u64,
    pub tsv: u64,
    pub uv: u64,
    pub total: u64,
}

impl Volumes {
    pub fn is_partition(&self) -> bool {
        self.tv + self.sv + self.tsv + self.uv == self.total
    }
}

impl AddAssign for Volumes {
    fn add_assign(&mut self, o: Self) {
        self.tv += o.tv;
        self.sv += o.sv;
        self.tsv += o.tsv;
        self.uv += o.uv;
        self.total += o.total;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VolumeEntry {
    pub level: String,
    pub array: String,
    pub role: Role,
    pub tv: u64,
    pub sv: u64,
    pub tsv: u64,
    pub uv: u64,
    pub total: u64,
}

impl VolumeEntry {
    pub fn volumes(&self) -> Volumes {
        Volumes { tv: self.tv, sv: self.sv, tsv: self.tsv, uv: self.uv, total: self.total }
    }
}

/// Volumes per (level, array) for every non-root level, levels root first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VolumeReport {
    pub entries: Vec<VolumeEntry>,
}

impl VolumeReport {
    pub fn push(&mut self, level: &str, array: &str, role: Role, v: Volumes) {
        self.entries.push(VolumeEntry {
            level: level.to_string(),
            array: array.to_string(),
            role,
            tv: v.tv,
            sv: v.sv,
            tsv: v.tsv,
            uv: v.uv,
            total: v.total,
        });
    }

    pub fn get(&self, level: &str, array: &str) -> Option<Volumes> {
        self.entries.iter().find(|e| e.level == level && e.array == array).map(|e| e.volumes())
    }
}

/// Classifies one time-step of placements `(unit, parent unit, element)`
/// given the `(unit, element)` residency of the preceding step. Returns the
/// residency of this step.
pub(crate) fn classify_step<K: Hash + Eq + Clone>(
    prev: &HashSet<(u32, K)>,
    cur: &[(u32, u32, K)],
    preds: &[Vec<u32>],
    multicast: bool,
    acc: &mut Volumes,
) -> HashSet<(u32, K)> {
    let here: HashSet<(u32, K)> = cur.iter().map(|(u, _, k)| (*u, k.clone())).collect();
    let mut groups: HashSet<(u32, &K)> = HashSet::new();
    for (u, p, k) in cur {
        acc.total += 1;
        if prev.contains(&(*u, k.clone())) {
            acc.tv += 1;
        } else if preds[*u as usize].iter().any(|s| {
            let key = (*s, k.clone());
            prev.contains(&key) || here.contains(&key)
        }) {
            acc.tsv += 1;
        } else if multicast && !groups.insert((*p, k)) {
            acc.sv += 1;
        } else {
            acc.uv += 1;
        }
    }
    here
}

fn wrapped_pair(shape: &Shape) -> Option<(&Shape, &Shape)> {
    match shape {
        Shape::Wrap(a, b) => Some((a, b)),
        _ => None,
    }
}

/// Classify a materialised inter-level relation. `connect` is the child
/// level's connect relation for this operand; `multicast` whether the
/// operand reaches the child level by multicast.
pub fn reuse_volumes(theta: &InterLevelPlacement, connect: &IntRelation, multicast: bool) -> Result<Volumes> {
    let shape = theta.rel.out_shape();
    let bad = || IntRelError::NotWrapped(shape.clone());
    let (parent, child) = wrapped_pair(shape).ok_or_else(bad)?;
    let (ps, pt) = wrapped_pair(parent).ok_or_else(bad)?;
    let (cs, _) = wrapped_pair(child).ok_or_else(bad)?;
    let (ps, pt, cs) = (ps.arity(), pt.arity(), cs.arity());
    if connect.in_arity() != cs || connect.out_arity() != cs {
        return Err(IntRelError::Arity { expected: cs, found: connect.in_arity() }.into());
    }

    let mut units: BTreeMap<Tuple, u32> = BTreeMap::new();
    let mut parents: BTreeMap<Tuple, u32> = BTreeMap::new();
    let mut steps: BTreeMap<Tuple, Vec<(Tuple, Tuple, Tuple)>> = BTreeMap::new();
    for (e, r) in theta.rel.iter() {
        let v = r.values();
        let sp = Tuple(v[..ps].to_vec());
        let sc = Tuple(v[ps + pt..ps + pt + cs].to_vec());
        let tc = Tuple(v[ps + pt + cs..].to_vec());
        parents.entry(sp.clone()).or_insert(0);
        units.entry(sc.clone()).or_insert(0);
        steps.entry(tc).or_default().push((sc, sp, e.clone()));
    }
    for (a, b) in connect.iter() {
        units.entry(a.clone()).or_insert(0);
        units.entry(b.clone()).or_insert(0);
    }
    for (i, v) in units.values_mut().enumerate() {
        *v = i as u32;
    }
    for (i, v) in parents.values_mut().enumerate() {
        *v = i as u32;
    }
    let mut preds = vec![Vec::new(); units.len()];
    for (a, b) in connect.iter() {
        preds[units[b] as usize].push(units[a]);
    }

    let mut acc = Volumes::default();
    let mut prev = HashSet::new();
    for (_, list) in steps {
        let cur: Vec<(u32, u32, Tuple)> = list.into_iter().map(|(s, p, e)| (units[&s], parents[&p], e)).collect();
        prev = classify_step(&prev, &cur, &preds, multicast, &mut acc);
    }
    Ok(acc)
}

/// Options for the sliced analysis.
#[derive(Debug, Clone, Copy)]
pub struct SliceOptions {
    /// Reuse the counts of slices that sit at the same displacement from
    /// their predecessor.
    pub memoize: bool,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions { memoize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelVolumes {
    pub volumes: Volumes,
    /// Slices (parent time-stamps) in which some element had to be fetched.
    pub fetching_slices: u64,
}

const FIELD: u32 = 24;
const BIAS: i64 = 1 << (FIELD - 1);

fn pack(elem: &[i64], shift: &[i64]) -> Result<u128> {
    if elem.len() as u32 * FIELD > 128 {
        return Err(Error::config("element arity too large for packed keys"));
    }
    let mut key = 0u128;
    for (i, v) in elem.iter().enumerate() {
        let x = if i == 0 { *v } else { v + shift.get(i - 1).copied().unwrap_or(0) } + BIAS;
        if !(0..1 << FIELD).contains(&x) {
            return Err(Error::config("array index out of packable range"));
        }
        key = (key << FIELD) | x as u128;
    }
    Ok(key)
}

/// Volumes of one array at level `a` (with its parent `a - 1`), computed one
/// parent time-stamp at a time.
pub fn level_volumes(
    arch: &ArchSpec,
    w: &Workload,
    slicer: &LevelSlicer,
    array: usize,
    opts: SliceOptions,
) -> Result<LevelVolumes> {
    let a = slicer.level;
    let lvl = &arch.levels[a];
    let role = w.arrays[array].role;
    let multicast = lvl.multicast.contains(&role);
    let mut preds = vec![Vec::new(); slicer.units.len()];
    for (s, t) in lvl.connect_for(role).iter() {
        let (si, ti) = (slicer.units.binary_search(s), slicer.units.binary_search(t));
        if let (Ok(si), Ok(ti)) = (si, ti) {
            preds[ti].push(si as u32);
        }
    }

    let fps = slicer.footprints(w, array)?;
    let steps = slicer.steps as usize;
    let zero = vec![0; w.arrays[array].index_arity];
    // Per step: (unit, parent, element) relative to a zero base.
    let mut rel: Vec<Vec<(u32, u32, &Tuple)>> = vec![Vec::new(); steps];
    for (t, fp) in slicer.tiles.iter().zip(&fps) {
        rel[t.step as usize].extend(fp.iter().map(|e| (t.unit, t.parent, e)));
    }
    for step in rel.iter_mut() {
        step.sort();
        step.dedup();
    }
    let packed = |shift: &[i64]| -> Result<Vec<Vec<(u32, u32, u128)>>> {
        rel.iter().map(|s| s.iter().map(|(u, p, e)| Ok((*u, *p, pack(e.values(), shift)?))).collect()).collect()
    };
    let run = |cur: &[Vec<(u32, u32, u128)>], boundary: Option<&[i64]>| -> Result<Volumes> {
        let mut prev: HashSet<(u32, u128)> = HashSet::new();
        if let Some(shift) = boundary {
            for (u, _, e) in &rel[steps - 1] {
                prev.insert((*u, pack(e.values(), shift)?));
            }
        }
        let mut acc = Volumes::default();
        for step in cur {
            prev = classify_step(&prev, step, &preds, multicast, &mut acc);
        }
        Ok(acc)
    };

    let base0 = if opts.memoize { Some(packed(&zero)?) } else { None };
    let mut memo: HashMap<Option<Vec<i64>>, Volumes> = HashMap::new();
    let mut total = Volumes::default();
    let mut fetching = 0u64;
    let mut prev_base: Option<Vec<i64>> = None;
    let mut err = None;
    slicer.for_each_base(w.depth(), |_, base| {
        if err.is_some() {
            return;
        }
        let res = (|| -> Result<Volumes> {
            if let Some(cur0) = &base0 {
                let key = prev_base.as_ref().map(|p| base.iter().zip(p).map(|(b, p)| b - p).collect::<Vec<i64>>());
                if let Some(v) = memo.get(&key) {
                    return Ok(*v);
                }
                let boundary = match &key {
                    Some(d) => Some(element_shift(w, array, &d.iter().map(|x| -x).collect::<Vec<_>>())?),
                    None => None,
                };
                let v = run(cur0, boundary.as_deref())?;
                memo.insert(key, v);
                Ok(v)
            } else {
                let cur = packed(&element_shift(w, array, base)?)?;
                let boundary = match &prev_base {
                    Some(p) => Some(element_shift(w, array, p)?),
                    None => None,
                };
                run(&cur, boundary.as_deref())
            }
        })();
        match res {
            Ok(v) => {
                total += v;
                fetching += (v.uv > 0) as u64;
            }
            Err(e) => err = Some(e),
        }
        prev_base = Some(base.to_vec());
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(LevelVolumes { volumes: total, fetching_slices: fetching })
}

/// Volumes of every array at every non-root level, plus the number of DRAM
/// time-steps in which each array is fetched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeAnalysis {
    pub report: VolumeReport,
    pub dma_reqs: BTreeMap<String, u64>,
}

pub fn analyze_volumes(tree: &ScheduleTree, arch: &ArchSpec, w: &Workload, opts: SliceOptions) -> Result<VolumeAnalysis> {
    let mut report = VolumeReport::default();
    let mut dma_reqs = BTreeMap::new();
    for a in 1..arch.levels.len() {
        let slicer = LevelSlicer::new(tree, arch, a)?;
        for (idx, arr) in w.arrays.iter().enumerate() {
            let lv = level_volumes(arch, w, &slicer, idx, opts)?;
            report.push(&arch.levels[a].name, &arr.name, arr.role, lv.volumes);
            if a == 1 {
                dma_reqs.insert(arr.name.clone(), lv.fetching_slices);
            }
        }
    }
    Ok(VolumeAnalysis { report, dma_reqs })
}

#[cfg(test)]
mod tests;
