//! Space-time maps and data placement relations.
//!
//! At level `a` the unit of work is a tile of the child's temporal tile
//! size (single instances at the leaf). A tile's space-stamp is the unit of
//! level `a` it runs on, fixed by the space bands of the levels above; its
//! time-stamp concatenates the time bands of levels `0..=a`.
//!
//! * `ST`  : tile origin -> [[s] -> [t]]
//! * `θ`   : element -> [[s] -> [t]]        (`ST` composed with the inverse footprint)
//! * `Θ`   : element -> [[[s'] -> [t']] -> [[s] -> [t]]]   (parent placement attached)
//!
//! The materialised relations are meant for inspection and small instances;
//! [`LevelSlicer`] provides the same placements one parent time-stamp at a
//! time for the scalable analysis path.

use std::collections::BTreeMap;

use crate::arch::{ArchSpec, DimAxis};
use crate::error::{Error, Result};
use crate::intrel::{check_budget, IntRelation, IntSet, Shape, Tuple};
use crate::mapping::{BandMember, ScheduleTree, SpaceAxis};
use crate::workload::{for_each_point, Workload};

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeMap {
    pub level: String,
    pub rel: IntRelation,
    pub s_arity: usize,
    pub t_arity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSet {
    pub level: String,
    pub array: String,
    pub rel: IntRelation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterLevelPlacement {
    pub parent_level: String,
    pub child_level: String,
    pub array: String,
    pub rel: IntRelation,
}

impl PlacementSet {
    pub fn dump(&self) -> String {
        format!("# theta {} @ {}\n{}\n", self.array, self.level, self.rel)
    }
}

impl InterLevelPlacement {
    pub fn dump(&self) -> String {
        format!("# Theta {} @ {} -> {}\n{}\n", self.array, self.parent_level, self.child_level, self.rel)
    }
}

fn level_of(tree: &ScheduleTree, arch: &ArchSpec, name: &str) -> Result<usize> {
    let a = tree.level_index(name).ok_or_else(|| Error::config(format!("unknown level '{name}'")))?;
    if arch.levels.get(a).map(|l| l.name.as_str()) != Some(name) {
        return Err(Error::config(format!("level '{name}' is not at the same position in mapping and architecture")));
    }
    Ok(a)
}

/// Local offset contributed by the space band of level `l` (the position of
/// the child unit inside its parent's fan-out).
fn local_offset(members: &[BandMember], coords: impl Fn(&BandMember) -> i64) -> (i64, i64) {
    let (mut x, mut y, mut simd, mut simd_trip) = (0, 0, 0, 1);
    for m in members {
        match m.axis {
            Some(SpaceAxis::X) => x = coords(m),
            Some(SpaceAxis::Y) => y = coords(m),
            Some(SpaceAxis::Simd) => {
                simd = coords(m);
                simd_trip = m.trip;
            }
            None => {}
        }
    }
    (x * simd_trip + simd, y)
}

/// Absolute grid position of the level-`a` unit that runs `inst`.
pub fn unit_position(tree: &ScheduleTree, arch: &ArchSpec, a: usize, inst: &[i64]) -> (i64, i64) {
    let (mut x, mut y) = (0, 0);
    for l in 0..a {
        let (p, c) = (&arch.levels[l], &arch.levels[l + 1]);
        let (fx, fy) = (c.nx / p.nx, c.ny / p.ny);
        let (lx, ly) = match &tree.levels[l].space {
            Some(b) => local_offset(&b.members, |m| m.coord(inst)),
            None => (0, 0),
        };
        x = x * fx + lx;
        y = y * fy + ly;
    }
    (x, y)
}

/// Grid position encoded by a unit tuple of level `a`.
pub fn unit_xy(arch: &ArchSpec, a: usize, unit: &Tuple) -> (i64, i64) {
    let l = &arch.levels[a];
    let v = unit.values();
    if l.instances() == 1 {
        return (0, 0);
    }
    match l.dim {
        DimAxis::X => (v[0], 0),
        DimAxis::Y => (0, v[0]),
        DimAxis::XY => (v[0], v[1]),
    }
}

/// Unit of level `a - 1` that feeds unit `unit` of level `a`.
pub fn parent_unit(arch: &ArchSpec, a: usize, unit: &Tuple) -> Tuple {
    let (x, y) = unit_xy(arch, a, unit);
    let (px, py) = arch.parent_position(a, x, y);
    arch.levels[a - 1].unit(px, py)
}

fn tile_extents(tree: &ScheduleTree, a: usize) -> Vec<i64> {
    (0..tree.extents.len()).map(|d| tree.tiling.child_tile(a, d)).collect()
}

/// Origins of the tiles visible at level `a`.
fn tile_origins(tree: &ScheduleTree, a: usize) -> Result<Vec<Vec<i64>>> {
    let tile = tile_extents(tree, a);
    let counts: Vec<i64> = tree.extents.iter().zip(&tile).map(|(e, t)| e / t).collect();
    check_budget(counts.iter().product::<i64>() as usize)?;
    let mut out = Vec::new();
    for_each_point(&counts, |p| out.push(p.iter().zip(&tile).map(|(c, t)| c * t).collect()));
    Ok(out)
}

pub fn space_time_map(tree: &ScheduleTree, arch: &ArchSpec, level: &str) -> Result<SpaceTimeMap> {
    let a = level_of(tree, arch, level)?;
    let lvl = &arch.levels[a];
    let s_arity = lvl.unit_arity();
    let t_arity = tree.time_stamp_arity(a);
    let shape = Shape::wrap(Shape::flat(s_arity), Shape::flat(t_arity));
    let mut pairs = Vec::new();
    for origin in tile_origins(tree, a)? {
        let (x, y) = unit_position(tree, arch, a, &origin);
        let st = lvl.unit(x, y).concat(&Tuple(tree.time_stamp(a, &origin)));
        pairs.push((Tuple(origin), st));
    }
    let rel = IntRelation::from_pairs(Shape::flat(tree.extents.len()), shape, pairs)?;
    Ok(SpaceTimeMap { level: level.to_string(), rel, s_arity, t_arity })
}

fn array_of(w: &Workload, array: &str) -> Result<usize> {
    w.array_index(array).ok_or_else(|| Error::config(format!("unknown array '{array}'")))
}

/// Tile origin -> element relation for the tiles of level `a`.
fn footprint_relation(tree: &ScheduleTree, w: &Workload, a: usize, array: usize) -> Result<IntRelation> {
    let tile = tile_extents(tree, a);
    let mut pairs = Vec::new();
    for origin in tile_origins(tree, a)? {
        let fp = w.box_footprint(array, &origin, &tile);
        check_budget(pairs.len() + fp.len())?;
        let o = Tuple(origin);
        pairs.extend(fp.into_iter().map(|e| (o.clone(), e)));
    }
    Ok(IntRelation::from_pairs(Shape::flat(tree.extents.len()), w.element_shape(), pairs)?)
}

pub fn theta(tree: &ScheduleTree, arch: &ArchSpec, w: &Workload, array: &str, level: &str) -> Result<PlacementSet> {
    let idx = array_of(w, array)?;
    let st = space_time_map(tree, arch, level)?;
    let a = tree.level_index(level).unwrap();
    let fp = footprint_relation(tree, w, a, idx)?;
    let rel = st.rel.compose(&fp.inverse())?;
    Ok(PlacementSet { level: level.to_string(), array: array.to_string(), rel })
}

pub fn inter_level(
    tree: &ScheduleTree,
    arch: &ArchSpec,
    w: &Workload,
    array: &str,
    parent_level: &str,
    child_level: &str,
) -> Result<InterLevelPlacement> {
    let p = level_of(tree, arch, parent_level)?;
    let c = level_of(tree, arch, child_level)?;
    if c != p + 1 {
        return Err(Error::config(format!("levels '{parent_level}' and '{child_level}' are not adjacent")));
    }
    let child = theta(tree, arch, w, array, child_level)?;
    let s_arity = arch.levels[c].unit_arity();
    let tp_arity = tree.time_stamp_arity(p);
    let child_shape = child.rel.out_shape().clone();
    let parent_shape = Shape::wrap(Shape::flat(arch.levels[p].unit_arity()), Shape::flat(tp_arity));
    let mut lift = Vec::new();
    for st in child.rel.range().iter() {
        let (s, t) = st.split(s_arity);
        let parent = parent_unit(arch, c, &s).concat(&Tuple(t.values()[..tp_arity].to_vec()));
        lift.push((st.clone(), parent.concat(st)));
    }
    let lift = IntRelation::from_pairs(child_shape.clone(), Shape::wrap(parent_shape, child_shape), lift)?;
    let rel = lift.compose(&child.rel)?;
    Ok(InterLevelPlacement {
        parent_level: parent_level.to_string(),
        child_level: child_level.to_string(),
        array: array.to_string(),
        rel,
    })
}

/// One child tile of a slice, relative to the slice base.
#[derive(Debug, Clone)]
pub struct SliceTile {
    pub offset: Vec<i64>,
    pub unit: u32,
    pub parent: u32,
    /// Lexicographic index of the level's own time-band coordinates.
    pub step: u32,
}

/// Placements of one level, one parent time-stamp (slice) at a time.
///
/// Every slice holds the same tiles translated by the slice base, so element
/// sets of a slice are those of the first slice shifted by the array's
/// access coefficients applied to the base.
#[derive(Debug, Clone)]
pub struct LevelSlicer {
    pub level: usize,
    pub units: Vec<Tuple>,
    pub parent_units: Vec<Tuple>,
    pub tiles: Vec<SliceTile>,
    pub steps: u32,
    /// (dim, stride, trip) of each parent time-stamp coordinate.
    pub slice_coords: Vec<(usize, i64, i64)>,
    pub tile_extents: Vec<i64>,
}

impl LevelSlicer {
    pub fn new(tree: &ScheduleTree, arch: &ArchSpec, a: usize) -> Result<Self> {
        if a == 0 || a >= arch.levels.len() {
            return Err(Error::config("slicing needs a non-root level"));
        }
        let lvl = &arch.levels[a];
        let units: Vec<Tuple> = lvl.units().iter().cloned().collect();
        let parent_units: Vec<Tuple> = arch.levels[a - 1].units().iter().cloned().collect();
        let index = |list: &[Tuple], t: &Tuple| list.binary_search(t).expect("unit inside grid") as u32;

        // Free coordinates inside a slice: all space bands of 0..=a and the time band of a.
        let mut free: Vec<&BandMember> = Vec::new();
        for l in 0..=a {
            if let Some(b) = &tree.levels[l].space {
                free.extend(b.members.iter());
            }
        }
        let time = &tree.levels[a].time;
        free.extend(time.members.iter());
        let trips: Vec<i64> = free.iter().map(|m| m.trip).collect();
        let n: i64 = trips.iter().product();
        check_budget(n as usize)?;

        let mut tiles = Vec::with_capacity(n as usize);
        let mut err = None;
        for_each_point(&trips, |c| {
            let mut off = vec![0; tree.extents.len()];
            for (m, v) in free.iter().zip(c) {
                off[m.dim] += v * m.stride;
            }
            let (x, y) = unit_position(tree, arch, a, &off);
            let unit = lvl.unit(x, y);
            if x >= lvl.nx || y >= lvl.ny {
                err = Some(Error::config(format!("level '{}': unit ({x}, {y}) outside the grid", lvl.name)));
                return;
            }
            let parent = parent_unit(arch, a, &unit);
            let mut step = 0i64;
            for m in &time.members {
                step = step * m.trip + m.coord(&off);
            }
            tiles.push(SliceTile { unit: index(&units, &unit), parent: index(&parent_units, &parent), step: step as u32, offset: off });
        });
        if let Some(e) = err {
            return Err(e);
        }
        let slice_coords = tree.levels[..a]
            .iter()
            .flat_map(|l| l.time.members.iter().map(|m| (m.dim, m.stride, m.trip)))
            .collect();
        Ok(LevelSlicer {
            level: a,
            units,
            parent_units,
            tiles,
            steps: time.size() as u32,
            slice_coords,
            tile_extents: tile_extents(tree, a),
        })
    }

    pub fn slice_count(&self) -> u64 {
        self.slice_coords.iter().map(|c| c.2 as u64).product()
    }

    /// Calls `f(index, base)` for every slice in time order.
    pub fn for_each_base<F: FnMut(u64, &[i64])>(&self, depth: usize, mut f: F) {
        let trips: Vec<i64> = self.slice_coords.iter().map(|c| c.2).collect();
        let mut i = 0;
        let mut base = vec![0; depth];
        for_each_point(&trips, |c| {
            base.iter_mut().for_each(|b| *b = 0);
            for ((d, stride, _), v) in self.slice_coords.iter().zip(c) {
                base[*d] += v * stride;
            }
            f(i, &base);
            i += 1;
        });
    }

    /// Per-tile footprints of `array`, relative to a zero base.
    pub fn footprints(&self, w: &Workload, array: usize) -> Result<Vec<Vec<Tuple>>> {
        let mut total = 0;
        let mut out = Vec::with_capacity(self.tiles.len());
        for t in &self.tiles {
            let fp = w.box_footprint(array, &t.offset, &self.tile_extents);
            total += fp.len();
            check_budget(total)?;
            out.push(fp);
        }
        Ok(out)
    }
}

/// Element-index shift caused by moving a slice by `delta` iterations.
pub fn element_shift(w: &Workload, array: usize, delta: &[i64]) -> Result<Vec<i64>> {
    let mut accs = w.accesses.iter().filter(|a| a.array == array);
    let first = accs.next().ok_or_else(|| Error::config("array has no access"))?;
    if accs.any(|a| a.coeffs != first.coeffs) {
        return Err(Error::config(format!("array '{}' is accessed with different index maps", w.arrays[array].name)));
    }
    Ok(first.coeffs.iter().map(|row| row.iter().zip(delta).map(|(c, d)| c * d).sum()).collect())
}

/// All tiles' unit indices by local step, for utilisation counting.
pub fn active_units_per_step(slicer: &LevelSlicer) -> BTreeMap<u32, usize> {
    let mut m: BTreeMap<u32, std::collections::BTreeSet<u32>> = BTreeMap::new();
    for t in &slicer.tiles {
        m.entry(t.step).or_default().insert(t.unit);
    }
    m.into_iter().map(|(k, v)| (k, v.len())).collect()
}

/// Set of all space-stamps used at level `a`.
pub fn used_units(tree: &ScheduleTree, arch: &ArchSpec, level: &str) -> Result<IntSet> {
    Ok(space_time_map(tree, arch, level)?.rel.range().unwrap()?.domain())
}
