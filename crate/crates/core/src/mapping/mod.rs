//! Mapping description, legality rules and schedule-tree construction.
//!
//! A mapping lists one entry per memory level, root first. At level `a` the
//! temporal tile `T[a]` is cut into spatial tiles `S[a]`; the `T[a] / S[a]`
//! pieces are distributed over the instances of level `a + 1`, and each
//! piece is walked in time in steps of the child's temporal tile `T[a + 1]`.
//! So along every dim the iteration index decomposes as
//!
//! ```text
//! i = sum_a (sigma_a * S[a] + tau_a * T[a + 1])      (T[n] = 1)
//! ```
//!
//! with `sigma_a` the space-band coordinate and `tau_a` the time-band
//! coordinate at level `a`.

mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::workload::{Role, Workload};

pub use tree::{build_schedule_tree, Band, BandKind, BandMember, LevelBands, ScheduleTree, SpaceAxis};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelMapping {
    pub level: String,
    pub temporal_order: Vec<String>,
    /// Missing dims inherit the parent's spatial tile (the full extent at the root).
    #[serde(default)]
    pub temporal_tile: BTreeMap<String, i64>,
    /// Missing dims default to the temporal tile (no parallelism).
    #[serde(default)]
    pub spatial_tile: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_y: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simd: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mapping {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub levels: Vec<LevelMapping>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Rule 1: reductions split across units need an accumulation path.
    Dependence,
    /// Rule 2: parallelism must fit the child instances along the mapped axis.
    Parallelism,
    /// Rule 3: per-instance tile footprint must fit the buffer.
    Capacity,
    /// Tile sizes must nest exactly.
    Tiling,
    /// Malformed mapping (unknown dims, level mismatch, ...).
    Structure,
}

impl Rule {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rule::Dependence => "dependence",
            Rule::Parallelism => "parallelism",
            Rule::Capacity => "capacity",
            Rule::Tiling => "tiling",
            Rule::Structure => "structure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub level: String,
    pub dim: Option<String>,
    pub required: i64,
    pub available: i64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] level {}", self.rule.as_str(), self.level)?;
        if let Some(d) = &self.dim {
            write!(f, " dim {d}")?;
        }
        write!(f, ": {} (required {}, available {})", self.message, self.required, self.available)
    }
}

impl Mapping {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("mapping serialises")
    }

    fn level(&self, level: &str) -> Result<usize> {
        self.levels.iter().position(|l| l.level == level).ok_or_else(|| Error::config(format!("mapping has no level '{level}'")))
    }

    /// Resolve dim names and defaults against a workload.
    pub fn resolve(&self, w: &Workload) -> Result<Tiling> {
        let n = self.levels.len();
        if n == 0 {
            return Err(Error::config("mapping has no levels"));
        }
        let depth = w.depth();
        let dim = |lvl: &str, name: &str| -> Result<usize> {
            w.dim_index(name).ok_or_else(|| Error::config(format!("level '{lvl}': unknown dim '{name}'")))
        };
        let mut t = Vec::with_capacity(n);
        let mut s: Vec<Vec<i64>> = Vec::with_capacity(n);
        let mut order = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        for (a, lm) in self.levels.iter().enumerate() {
            let mut ord = Vec::with_capacity(depth);
            for name in &lm.temporal_order {
                let d = dim(&lm.level, name)?;
                if ord.contains(&d) {
                    return Err(Error::config(format!("level '{}': dim '{name}' repeated in temporal_order", lm.level)));
                }
                ord.push(d);
            }
            if ord.len() != depth {
                return Err(Error::config(format!(
                    "level '{}': temporal_order must list all {depth} dims, got {}",
                    lm.level,
                    ord.len()
                )));
            }
            let mut tt = if a == 0 { w.extents() } else { s[a - 1].clone() };
            for (name, v) in &lm.temporal_tile {
                tt[dim(&lm.level, name)?] = *v;
            }
            let mut ss = tt.clone();
            for (name, v) in &lm.spatial_tile {
                ss[dim(&lm.level, name)?] = *v;
            }
            let mut ax = LevelAxes::default();
            for (slot, name) in [(&mut ax.x, &lm.space_x), (&mut ax.y, &lm.space_y), (&mut ax.simd, &lm.simd)] {
                if let Some(name) = name {
                    *slot = Some(dim(&lm.level, name)?);
                }
            }
            let used: Vec<usize> = [ax.x, ax.y, ax.simd].into_iter().flatten().collect();
            if used.iter().collect::<BTreeSet<_>>().len() != used.len() {
                return Err(Error::config(format!("level '{}': a dim is mapped to more than one spatial axis", lm.level)));
            }
            t.push(tt);
            s.push(ss);
            order.push(ord);
            axes.push(ax);
        }
        Ok(Tiling {
            names: self.levels.iter().map(|l| l.level.clone()).collect(),
            dims: w.dims.iter().map(|d| d.name.clone()).collect(),
            extents: w.extents(),
            t,
            s,
            order,
            axes,
        })
    }

    /// `T / S` for `dim` at `level`.
    pub fn parallelism(&self, w: &Workload, level: &str, dim: &str) -> Result<i64> {
        let a = self.level(level)?;
        let d = w.dim_index(dim).ok_or_else(|| Error::config(format!("unknown dim '{dim}'")))?;
        let tiling = self.resolve(w)?;
        if tiling.s[a][d] < 1 || tiling.t[a][d] % tiling.s[a][d] != 0 {
            return Err(Error::config(format!("level '{level}' dim '{dim}': spatial tile does not divide temporal tile")));
        }
        Ok(tiling.parallelism(a, d))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LevelAxes {
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub simd: Option<usize>,
}

/// A mapping with dim names resolved to indices and defaults filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tiling {
    pub names: Vec<String>,
    pub dims: Vec<String>,
    pub extents: Vec<i64>,
    /// Temporal tile per level per dim.
    pub t: Vec<Vec<i64>>,
    /// Spatial tile per level per dim.
    pub s: Vec<Vec<i64>>,
    /// Temporal loop order per level (outermost first).
    pub order: Vec<Vec<usize>>,
    pub axes: Vec<LevelAxes>,
}

impl Tiling {
    pub fn levels(&self) -> usize {
        self.t.len()
    }

    pub fn depth(&self) -> usize {
        self.extents.len()
    }

    pub fn parallelism(&self, a: usize, d: usize) -> i64 {
        self.t[a][d] / self.s[a][d]
    }

    /// Temporal tile of the level below `a` (1 below the leaf).
    pub fn child_tile(&self, a: usize, d: usize) -> i64 {
        if a + 1 < self.levels() {
            self.t[a + 1][d]
        } else {
            1
        }
    }

    pub fn time_trip(&self, a: usize, d: usize) -> i64 {
        self.s[a][d] / self.child_tile(a, d)
    }

    /// Space-band trip along x (space_x parallelism times simd parallelism).
    pub fn x_parallelism(&self, a: usize) -> i64 {
        let ax = self.axes[a];
        ax.x.map_or(1, |d| self.parallelism(a, d)) * ax.simd.map_or(1, |d| self.parallelism(a, d))
    }

    pub fn y_parallelism(&self, a: usize) -> i64 {
        self.axes[a].y.map_or(1, |d| self.parallelism(a, d))
    }

    fn divisibility(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let n = self.levels();
        for a in 0..n {
            for d in 0..self.depth() {
                let (t, s) = (self.t[a][d], self.s[a][d]);
                let viol = |required: i64, available: i64, message: String| Violation {
                    rule: Rule::Tiling,
                    level: self.names[a].clone(),
                    dim: Some(self.dims[d].clone()),
                    required,
                    available,
                    message,
                };
                if t < 1 || s < 1 {
                    v.push(viol(1, t.min(s), "tile sizes must be positive".into()));
                    continue;
                }
                if a == 0 && t != self.extents[d] {
                    v.push(viol(self.extents[d], t, "root temporal tile must equal the full extent".into()));
                }
                if t % s != 0 {
                    v.push(viol(s, t, format!("spatial tile {s} does not divide temporal tile {t}")));
                }
                let c = self.child_tile(a, d);
                if c < 1 || s % c != 0 {
                    v.push(viol(c, s, format!("child temporal tile {c} does not divide spatial tile {s}")));
                }
            }
        }
        v
    }
}

fn structure(level: &str, message: String) -> Violation {
    Violation { rule: Rule::Structure, level: level.to_string(), dim: None, required: 0, available: 0, message }
}

/// Check the mapping against the architecture and workload. An empty result
/// means the mapping is legal.
pub fn check_legality(m: &Mapping, arch: &ArchSpec, w: &Workload) -> Vec<Violation> {
    let tiling = match m.resolve(w) {
        Ok(t) => t,
        Err(e) => return vec![structure("-", e.to_string())],
    };
    if tiling.levels() != arch.levels.len() {
        return vec![structure(
            "-",
            format!("mapping has {} levels, architecture has {}", tiling.levels(), arch.levels.len()),
        )];
    }
    let mut out = Vec::new();
    for (a, (name, lvl)) in tiling.names.iter().zip(&arch.levels).enumerate() {
        if *name != lvl.name {
            out.push(structure(name, format!("level {a} of the mapping is '{name}', architecture has '{}'", lvl.name)));
        }
    }
    if !out.is_empty() {
        return out;
    }
    out.extend(tiling.divisibility());
    if !out.is_empty() {
        // Everything below assumes exact tiling.
        return out;
    }
    out.extend(parallelism_rule(&tiling, arch));
    out.extend(dependence_rule(&tiling, arch, w));
    out.extend(capacity_rule(&tiling, arch, w));
    out
}

fn parallelism_rule(tiling: &Tiling, arch: &ArchSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = tiling.levels();
    for a in 0..n {
        let name = &tiling.names[a];
        let ax = tiling.axes[a];
        for d in 0..tiling.depth() {
            let p = tiling.parallelism(a, d);
            if p > 1 && ![ax.x, ax.y, ax.simd].contains(&Some(d)) {
                out.push(Violation {
                    rule: Rule::Parallelism,
                    level: name.clone(),
                    dim: Some(tiling.dims[d].clone()),
                    required: p,
                    available: 1,
                    message: "parallel dim is not mapped to space_x, space_y or simd".into(),
                });
            }
        }
        let (fx, fy) = if a + 1 < n {
            let (p, c) = (&arch.levels[a], &arch.levels[a + 1]);
            (c.nx / p.nx, c.ny / p.ny)
        } else {
            (1, 1)
        };
        let dim_name = |ds: &[Option<usize>]| {
            let names: Vec<&str> = ds.iter().flatten().map(|d| tiling.dims[*d].as_str()).collect();
            (!names.is_empty()).then(|| names.join("*"))
        };
        let px = tiling.x_parallelism(a);
        if px > fx {
            out.push(Violation {
                rule: Rule::Parallelism,
                level: name.clone(),
                dim: dim_name(&[ax.x, ax.simd]),
                required: px,
                available: fx,
                message: "x-axis parallelism exceeds child instances along x".into(),
            });
        }
        let py = tiling.y_parallelism(a);
        if py > fy {
            out.push(Violation {
                rule: Rule::Parallelism,
                level: name.clone(),
                dim: dim_name(&[ax.y]),
                required: py,
                available: fy,
                message: "y-axis parallelism exceeds child instances along y".into(),
            });
        }
    }
    out
}

fn dependence_rule(tiling: &Tiling, arch: &ArchSpec, w: &Workload) -> Vec<Violation> {
    let mut out = Vec::new();
    let out_roles: BTreeSet<Role> = w.output_arrays().iter().map(|a| w.arrays[*a].role).collect();
    for a in 0..tiling.levels().saturating_sub(1) {
        let child = &arch.levels[a + 1];
        let chained = out_roles.iter().all(|r| !child.connect_for(*r).is_empty());
        if chained || !arch.levels[a].is_virtual {
            continue;
        }
        for d in w.reduction_dims() {
            let p = tiling.parallelism(a, d);
            if p > 1 {
                out.push(Violation {
                    rule: Rule::Dependence,
                    level: tiling.names[a].clone(),
                    dim: Some(tiling.dims[d].clone()),
                    required: p,
                    available: 1,
                    message: "reduction split across units with no accumulation path".into(),
                });
            }
        }
    }
    out
}

fn capacity_rule(tiling: &Tiling, arch: &ArchSpec, w: &Workload) -> Vec<Violation> {
    let mut out = Vec::new();
    for (a, lvl) in arch.levels.iter().enumerate().skip(1) {
        if lvl.is_virtual {
            continue;
        }
        // buffer name (None = the level's shared space) -> bytes needed
        let mut need: BTreeMap<Option<&str>, (u64, u64, Vec<&str>)> = BTreeMap::new();
        for (idx, arr) in w.arrays.iter().enumerate() {
            let (buf, cap) = lvl.capacity_for(arr.role);
            let bytes = w.box_footprint_count(idx, &tiling.t[a]) * w.element_bits as u64 / 8;
            let e = need.entry(buf).or_insert((0, cap, Vec::new()));
            e.0 += bytes;
            e.2.push(arr.name.as_str());
        }
        for (buf, (bytes, cap, arrays)) in need {
            if bytes > cap {
                out.push(Violation {
                    rule: Rule::Capacity,
                    level: lvl.name.clone(),
                    dim: None,
                    required: bytes as i64,
                    available: cap as i64,
                    message: format!("tile of {} exceeds {} capacity (bytes)", arrays.join("+"), buf.unwrap_or("buffer")),
                });
            }
        }
    }
    out
}

/// Resolve and check in one step; illegal mappings become an error.
pub fn legal_tiling(m: &Mapping, arch: &ArchSpec, w: &Workload) -> Result<Tiling> {
    let v = check_legality(m, arch, w);
    if !v.is_empty() {
        return Err(Error::Legality(v));
    }
    m.resolve(w)
}

#[cfg(test)]
pub(crate) mod tests;
