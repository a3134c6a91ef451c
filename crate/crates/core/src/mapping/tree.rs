use std::fmt::Write;

use crate::error::Result;
use crate::mapping::{Mapping, Tiling};
use crate::workload::{for_each_point, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Time,
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceAxis {
    Y,
    X,
    Simd,
}

/// One loop of a band: coordinate `(i[dim] / stride) % trip`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandMember {
    pub dim: usize,
    pub trip: i64,
    pub stride: i64,
    pub axis: Option<SpaceAxis>,
}

impl BandMember {
    pub fn coord(&self, inst: &[i64]) -> i64 {
        (inst[self.dim] / self.stride) % self.trip
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Band {
    pub kind: BandKind,
    pub members: Vec<BandMember>,
}

impl Band {
    pub fn coords(&self, inst: &[i64]) -> Vec<i64> {
        self.members.iter().map(|m| m.coord(inst)).collect()
    }

    pub fn trips(&self) -> Vec<i64> {
        self.members.iter().map(|m| m.trip).collect()
    }

    pub fn size(&self) -> i64 {
        self.members.iter().map(|m| m.trip).product()
    }
}

/// Everything under one mark node: the level's time band and, when some dim
/// is parallel, its space band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelBands {
    pub level: String,
    pub time: Band,
    pub space: Option<Band>,
}

/// Domain node followed by one mark per memory level, root first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTree {
    pub dims: Vec<String>,
    pub extents: Vec<i64>,
    pub levels: Vec<LevelBands>,
    pub tiling: Tiling,
}

pub fn build_schedule_tree(m: &Mapping, w: &Workload) -> Result<ScheduleTree> {
    let tiling = m.resolve(w)?;
    let errs = tiling.divisibility();
    if !errs.is_empty() {
        return Err(crate::Error::Legality(errs));
    }
    Ok(ScheduleTree::from_tiling(tiling))
}

impl ScheduleTree {
    pub fn from_tiling(tiling: Tiling) -> Self {
        let mut levels = Vec::with_capacity(tiling.levels());
        for a in 0..tiling.levels() {
            let time = Band {
                kind: BandKind::Time,
                members: tiling.order[a]
                    .iter()
                    .map(|&d| BandMember { dim: d, trip: tiling.time_trip(a, d), stride: tiling.child_tile(a, d), axis: None })
                    .collect(),
            };
            let ax = tiling.axes[a];
            let mut members = Vec::new();
            for (axis, d) in [(SpaceAxis::Y, ax.y), (SpaceAxis::X, ax.x), (SpaceAxis::Simd, ax.simd)] {
                if let Some(d) = d {
                    if tiling.parallelism(a, d) > 1 {
                        members.push(BandMember { dim: d, trip: tiling.parallelism(a, d), stride: tiling.s[a][d], axis: Some(axis) });
                    }
                }
            }
            let space = (!members.is_empty()).then_some(Band { kind: BandKind::Space, members });
            levels.push(LevelBands { level: tiling.names[a].clone(), time, space });
        }
        ScheduleTree { dims: tiling.dims.clone(), extents: tiling.extents.clone(), levels, tiling }
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.level == name)
    }

    /// Concatenated time-band coordinates from the root down to level `a`.
    pub fn time_stamp(&self, a: usize, inst: &[i64]) -> Vec<i64> {
        self.levels[..=a].iter().flat_map(|l| l.time.coords(inst)).collect()
    }

    pub fn time_stamp_arity(&self, a: usize) -> usize {
        self.levels[..=a].iter().map(|l| l.time.members.len()).sum()
    }

    /// Trips of the time-stamp coordinates of level `a`.
    pub fn time_trips(&self, a: usize) -> Vec<i64> {
        self.levels[..=a].iter().flat_map(|l| l.time.trips()).collect()
    }

    /// Number of distinct time-stamps of the leaf level.
    pub fn leaf_time_steps(&self) -> u64 {
        self.levels.iter().map(|l| l.time.size() as u64).product()
    }

    /// Instance reached by a full set of band coordinates (`time[a]`, `space[a]`).
    pub fn instance(&self, time: &[Vec<i64>], space: &[Vec<i64>]) -> Vec<i64> {
        let mut inst = vec![0; self.extents.len()];
        for (a, l) in self.levels.iter().enumerate() {
            for (m, c) in l.time.members.iter().zip(&time[a]) {
                inst[m.dim] += c * m.stride;
            }
            if let Some(sp) = &l.space {
                for (m, c) in sp.members.iter().zip(&space[a]) {
                    inst[m.dim] += c * m.stride;
                }
            }
        }
        inst
    }

    /// Calls `f` on every instance reached by scanning all bands, in
    /// schedule order.
    pub fn for_each_instance<F: FnMut(&[i64])>(&self, mut f: F) {
        let mut bands: Vec<&Band> = Vec::new();
        for l in &self.levels {
            bands.push(&l.time);
            if let Some(s) = &l.space {
                bands.push(s);
            }
        }
        let members: Vec<&BandMember> = bands.iter().flat_map(|b| b.members.iter()).collect();
        let trips: Vec<i64> = members.iter().map(|m| m.trip).collect();
        let mut inst = vec![0; self.extents.len()];
        for_each_point(&trips, |c| {
            inst.iter_mut().for_each(|v| *v = 0);
            for (m, v) in members.iter().zip(c) {
                inst[m.dim] += v * m.stride;
            }
            f(&inst);
        });
    }

    /// Indented text form, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let dom: Vec<String> = self.dims.iter().zip(&self.extents).map(|(d, e)| format!("0 <= {d} < {e}")).collect();
        let _ = writeln!(out, "domain: {}", dom.join(", "));
        let mut indent = 1;
        for l in &self.levels {
            let _ = writeln!(out, "{}mark: {}", "  ".repeat(indent), l.level);
            indent += 1;
            for band in std::iter::once(&l.time).chain(l.space.as_ref()) {
                let kind = match band.kind {
                    BandKind::Time => "time",
                    BandKind::Space => "space",
                };
                let parts: Vec<String> = band
                    .members
                    .iter()
                    .map(|m| {
                        let axis = match m.axis {
                            Some(SpaceAxis::X) => "@x",
                            Some(SpaceAxis::Y) => "@y",
                            Some(SpaceAxis::Simd) => "@simd",
                            None => "",
                        };
                        format!("({}/{})%{}{axis}", self.dims[m.dim], m.stride, m.trip)
                    })
                    .collect();
                let _ = writeln!(out, "{}{kind} band: [{}]", "  ".repeat(indent), parts.join(", "));
                indent += 1;
            }
        }
        let _ = writeln!(out, "{}leaf", "  ".repeat(indent));
        out
    }
}
