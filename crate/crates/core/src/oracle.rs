//! Brute-force trace oracle.
//!
//! Walks every loop instance, works out for each memory level which unit
//! runs it and at which time-stamp straight from the tile sizes, records the
//! resident elements, and then replays the time-stamps in order classifying
//! each placement. It shares no code with the analytical path beyond the
//! workload and integer-set basics, so the two can check each other.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::analysis::{VolumeReport, Volumes};
use crate::arch::ArchSpec;
use crate::error::Result;
use crate::intrel::{IntRelError, Tuple};
use crate::mapping::{ScheduleTree, Tiling};
use crate::workload::{Role, Workload};

/// Largest number of leaf time-steps the oracle will simulate.
pub const MAX_LEAF_STEPS: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Class {
    TV,
    TSV,
    SV,
    UV,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time: Vec<i64>,
    pub level: String,
    pub unit: Tuple,
    pub array: String,
    pub element: Tuple,
    pub class: Class,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {} {:?} {}{:?} {:?}", self.time, self.level, self.unit.values(), self.array, &self.element.values()[1..], self.class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub volumes: VolumeReport,
    /// Active leaf units at every leaf time-stamp, in time order.
    pub active_pe: Vec<u64>,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn mean_active_pe(&self) -> f64 {
        let (busy, steps) = self.active_pe_ratio();
        busy as f64 / steps as f64
    }

    /// `(sum of active units over steps, number of steps)`, for exact comparisons.
    pub fn active_pe_ratio(&self) -> (u64, u64) {
        (self.active_pe.iter().sum(), self.active_pe.len() as u64)
    }

    pub fn event_log(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Resident elements: time-stamp -> unit position -> (feeding parent position, elements).
type Slots = BTreeMap<(i64, i64), ((i64, i64), BTreeSet<Tuple>)>;
type Residency = BTreeMap<Vec<i64>, Slots>;

struct Coords<'a> {
    tl: &'a Tiling,
    arch: &'a ArchSpec,
}

impl Coords<'_> {
    fn child_t(&self, a: usize, d: usize) -> i64 {
        self.tl.t.get(a + 1).map_or(1, |t| t[d])
    }

    /// (spatial index, temporal index) of instance `i` at level `a` along `d`.
    fn split(&self, a: usize, d: usize, i: i64) -> (i64, i64) {
        let (t, s) = (self.tl.t[a][d], self.tl.s[a][d]);
        ((i % t) / s, (i % s) / self.child_t(a, d))
    }

    fn time(&self, a: usize, inst: &[i64]) -> Vec<i64> {
        let mut out = Vec::new();
        for l in 0..=a {
            for &d in &self.tl.order[l] {
                out.push(self.split(l, d, inst[d]).1);
            }
        }
        out
    }

    fn position(&self, a: usize, inst: &[i64]) -> (i64, i64) {
        let (mut x, mut y) = (0, 0);
        for l in 0..a {
            let (p, c) = (&self.arch.levels[l], &self.arch.levels[l + 1]);
            let ax = self.tl.axes[l];
            let sig = |d: Option<usize>| d.map_or(0, |d| self.split(l, d, inst[d]).0);
            let simd_n = ax.simd.map_or(1, |d| self.tl.t[l][d] / self.tl.s[l][d]);
            x = x * (c.nx / p.nx) + sig(ax.x) * simd_n + sig(ax.simd);
            y = y * (c.ny / p.ny) + sig(ax.y);
        }
        (x, y)
    }
}

fn for_each_index(extents: &[i64], mut f: impl FnMut(&[i64])) {
    if extents.iter().any(|e| *e < 1) {
        return;
    }
    let mut cur = vec![0; extents.len()];
    'outer: loop {
        f(&cur);
        for d in (0..extents.len()).rev() {
            cur[d] += 1;
            if cur[d] < extents[d] {
                continue 'outer;
            }
            cur[d] = 0;
        }
        return;
    }
}

fn leaf_steps(tl: &Tiling) -> u64 {
    let n = tl.t.len();
    (0..n).map(|a| (0..tl.extents.len()).map(|d| (tl.s[a][d] / tl.t.get(a + 1).map_or(1, |t| t[d])) as u64).product::<u64>()).product()
}

/// Active leaf units per leaf time-step, without tracking data.
pub fn active_pe_series(tree: &ScheduleTree, arch: &ArchSpec) -> Result<Vec<u64>> {
    let tl = &tree.tiling;
    let steps = leaf_steps(tl);
    if steps > MAX_LEAF_STEPS {
        return Err(IntRelError::Budget { limit: MAX_LEAF_STEPS as usize, requested: steps as usize }.into());
    }
    let c = Coords { tl, arch };
    let leaf = arch.levels.len() - 1;
    let ny = arch.levels[leaf].ny;
    let words = (arch.levels[leaf].instances() as usize).div_ceil(64);
    // Time-stamp coordinates stay below their trip counts, so the mixed-radix
    // index orders steps exactly like the lexicographic time-stamps.
    let radices: Vec<i64> = (0..=leaf)
        .flat_map(|l| tl.order[l].iter().map(move |&d| tl.s[l][d] / tl.t.get(l + 1).map_or(1, |t| t[d])))
        .collect();
    let mut busy = vec![0u64; steps as usize * words];
    for_each_index(&tl.extents, |inst| {
        let t = c.time(leaf, inst);
        let idx = t.iter().zip(&radices).fold(0i64, |acc, (v, r)| acc * r + v) as usize;
        let (x, y) = c.position(leaf, inst);
        let u = (x * ny + y) as usize;
        busy[idx * words + u / 64] |= 1 << (u % 64);
    });
    Ok(busy.chunks(words).map(|w| w.iter().map(|b| b.count_ones() as u64).sum()).filter(|n| *n > 0).collect())
}

pub fn simulate(tree: &ScheduleTree, w: &Workload, arch: &ArchSpec) -> Result<Trace> {
    let tl = &tree.tiling;
    let steps = leaf_steps(tl);
    if steps > MAX_LEAF_STEPS {
        return Err(IntRelError::Budget { limit: MAX_LEAF_STEPS as usize, requested: steps as usize }.into());
    }
    crate::intrel::check_budget(w.instance_count() as usize * w.accesses.len())?;
    let c = Coords { tl, arch };
    let n = arch.levels.len();

    // Residency per level per array.
    let mut res: Vec<Vec<Residency>> = vec![vec![Residency::new(); w.arrays.len()]; n];
    for_each_index(&tl.extents, |inst| {
        for (a, per_array) in res.iter_mut().enumerate().skip(1) {
            let t = c.time(a, inst);
            let (x, y) = c.position(a, inst);
            let parent = arch.parent_position(a, x, y);
            for acc in &w.accesses {
                let e = w.element(acc, inst);
                let slot = per_array[acc.array].entry(t.clone()).or_default().entry((x, y)).or_insert((parent, BTreeSet::new()));
                slot.1.insert(e);
            }
        }
    });

    let mut volumes = VolumeReport::default();
    let mut events = Vec::new();
    for (a, per_array) in res.iter().enumerate().skip(1) {
        let lvl = &arch.levels[a];
        for (ai, arr) in w.arrays.iter().enumerate() {
            let v = classify(&per_array[ai], arch, a, arr.role, &arr.name, &mut events);
            volumes.push(&lvl.name, &arr.name, arr.role, v);
        }
    }
    let active_pe = active_pe_series(tree, arch)?;
    Ok(Trace { volumes, active_pe, events })
}

fn classify(r: &Residency, arch: &ArchSpec, a: usize, role: Role, array: &str, events: &mut Vec<Event>) -> Volumes {
    let lvl = &arch.levels[a];
    let connect = lvl.connect_for(role);
    let multicast = lvl.multicast.contains(&role);
    let empty = BTreeMap::new();
    let mut prev = &empty;
    let mut v = Volumes::default();
    for (t, units) in r {
        let mut delivered: BTreeSet<(Tuple, (i64, i64))> = BTreeSet::new();
        for (pos, (parent, elems)) in units {
            let me = lvl.unit(pos.0, pos.1);
            let neighbours: Vec<(i64, i64)> = connect
                .iter()
                .filter(|p| p.1 == me)
                .filter_map(|p| units.keys().chain(prev.keys()).find(|q| lvl.unit(q.0, q.1) == p.0).copied())
                .collect();
            let held = |m: &Slots, p: &(i64, i64), e: &Tuple| {
                m.get(p).is_some_and(|(_, s)| s.contains(e))
            };
            for e in elems {
                v.total += 1;
                let class = if held(prev, pos, e) {
                    Class::TV
                } else if neighbours.iter().any(|nb| held(prev, nb, e) || held(units, nb, e)) {
                    Class::TSV
                } else if multicast && !delivered.insert((e.clone(), *parent)) {
                    Class::SV
                } else {
                    if multicast {
                        delivered.insert((e.clone(), *parent));
                    }
                    Class::UV
                };
                match class {
                    Class::TV => v.tv += 1,
                    Class::TSV => v.tsv += 1,
                    Class::SV => v.sv += 1,
                    Class::UV => v.uv += 1,
                }
                events.push(Event { time: t.clone(), level: lvl.name.clone(), unit: me.clone(), array: array.to_string(), element: e.clone(), class });
            }
        }
        prev = units;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiffEntry {
    pub level: String,
    pub array: String,
    pub field: String,
    pub left: Option<u64>,
    pub right: Option<u64>,
}

impl fmt::Display for DiffEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        write!(f, "{} {} {}: {} != {}", self.level, self.array, self.field, show(self.left), show(self.right))
    }
}

/// Field-by-field difference of two volume reports; empty iff identical.
pub fn diff(a: &VolumeReport, b: &VolumeReport) -> Vec<DiffEntry> {
    let index = |r: &VolumeReport| -> BTreeMap<(String, String), Volumes> {
        r.entries.iter().map(|e| ((e.level.clone(), e.array.clone()), e.volumes())).collect()
    };
    let (ia, ib) = (index(a), index(b));
    let keys: BTreeSet<&(String, String)> = ia.keys().chain(ib.keys()).collect();
    let mut out = Vec::new();
    for k in keys {
        let (x, y) = (ia.get(k), ib.get(k));
        let fields = |v: Option<&Volumes>| -> [Option<u64>; 5] {
            match v {
                Some(v) => [Some(v.tv), Some(v.sv), Some(v.tsv), Some(v.uv), Some(v.total)],
                None => [None; 5],
            }
        };
        for ((name, l), r) in ["tv", "sv", "tsv", "uv", "total"].iter().zip(fields(x)).zip(fields(y)) {
            if l != r {
                out.push(DiffEntry { level: k.0.clone(), array: k.1.clone(), field: name.to_string(), left: l, right: r });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpr::tests::{ARCH_2X2, OS_2X2};
    use crate::mapping::{build_schedule_tree, Mapping};

    fn os() -> (ScheduleTree, ArchSpec, Workload) {
        let w = Workload::gemm(2, 2, 2).unwrap();
        let tree = build_schedule_tree(&Mapping::parse(OS_2X2).unwrap(), &w).unwrap();
        (tree, ArchSpec::parse(ARCH_2X2).unwrap(), w)
    }

    #[test]
    fn output_stationary_trace() {
        let (tree, arch, w) = os();
        let tr = simulate(&tree, &w, &arch).unwrap();
        assert_eq!(tr.volumes.get("RF", "C"), Some(Volumes { tv: 4, sv: 0, tsv: 0, uv: 4, total: 8 }));
        assert_eq!(tr.active_pe, vec![4, 4]);
        assert_eq!(tr.mean_active_pe(), 4.0);
        assert_eq!(tr.events.len() as u64, tr.volumes.entries.iter().map(|e| e.total).sum::<u64>());
    }

    #[test]
    fn single_pe_reuses_one_element() {
        // One output element accumulated over 4 steps on one PE.
        let w = Workload::gemm(1, 1, 4).unwrap();
        let arch = ArchSpec::parse(&ARCH_2X2.replace("grid = [2, 2]", "grid = [1, 1]").replace("pe_size = 4", "pe_size = 1")).unwrap();
        let m = Mapping::parse(OS_2X2.replace("spatial_tile = { i = 1, j = 1 }\nspace_x = \"j\"\nspace_y = \"i\"\n", "").as_str()).unwrap();
        let tree = build_schedule_tree(&m, &w).unwrap();
        let tr = simulate(&tree, &w, &arch).unwrap();
        assert_eq!(tr.volumes.get("RF", "C"), Some(Volumes { tv: 3, sv: 0, tsv: 0, uv: 1, total: 4 }));
    }

    #[test]
    fn deterministic_event_log() {
        let (tree, arch, w) = os();
        let a = simulate(&tree, &w, &arch).unwrap().event_log();
        let b = simulate(&tree, &w, &arch).unwrap().event_log();
        assert_eq!(a, b);
        assert!(a.lines().next().unwrap().starts_with("[0, 0, 0, 0, 0, 0] RF"));
    }

    #[test]
    fn diff_reports() {
        let (tree, arch, w) = os();
        let r = simulate(&tree, &w, &arch).unwrap().volumes;
        assert!(diff(&r, &r).is_empty());
        let mut s = r.clone();
        s.entries[0].tv += 1;
        let d = diff(&r, &s);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "tv");
        s.entries.pop();
        assert_eq!(diff(&r, &s).len(), 6);
    }
}
