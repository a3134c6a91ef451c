//! Memory-centric accelerator description.
//!
//! An accelerator is a chain of memory levels from the root (DRAM) down to
//! the level that hosts the MAC units. Each level has a grid of instances,
//! an optional interconnect between its own instances (connect relations in
//! brace notation over unit coordinates) and per-access energy costs.
//!
//! Unit coordinates are `[1]` for single-instance levels, `[x]` or `[y]` for
//! one-dimensional grids and `[x, y]` for two-dimensional ones.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intrel::{parse_relation_over, IntRelation, IntSet, Shape, Tuple};
use crate::workload::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DimAxis {
    #[default]
    X,
    Y,
    XY,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareParams {
    /// Energy of an active MAC operation (pJ).
    pub e_act: f64,
    /// Energy of an idle MAC slot (pJ).
    pub e_idle: f64,
    /// Per-datum multicast network energy (pJ).
    pub e_multi: f64,
    /// Per-datum point-to-point forwarding energy (pJ).
    pub e_inter: f64,
    /// Cycles per MAC.
    pub lat_avg: f64,
    pub pe_size: u64,
    /// On-chip data bus width, datums per cycle.
    pub bus_width: f64,
    pub f_accel: f64,
    pub f_dma: f64,
    /// DMA start-up latency in DMA cycles.
    pub dma_init: f64,
    /// DMA cycles per byte.
    #[serde(default = "default_dma_coef")]
    pub dma_bytes_per_cycle_inv: f64,
}

fn default_dma_coef() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectConfig {
    pub relation: String,
    /// Operand roles this link carries; all roles when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operands: Option<Vec<Role>>,
    /// Dedicated buffer (see `per_operand`) this link belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub grid: [i64; 2],
    #[serde(default)]
    pub dim: DimAxis,
    #[serde(rename = "virtual", default)]
    pub is_virtual: bool,
    #[serde(default)]
    pub capacity_bytes: u64,
    #[serde(default)]
    pub read_energy: f64,
    #[serde(default)]
    pub write_energy: f64,
    #[serde(default)]
    pub connect: Vec<ConnectConfig>,
    /// Operand role -> dedicated sub-buffer name (e.g. `input = "ifmap_spad"`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_operand: BTreeMap<Role, String>,
    /// Capacity of each dedicated sub-buffer in bytes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub buffer_capacity: BTreeMap<String, u64>,
    /// Operand roles the network feeding this level can multicast.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multicast: Vec<Role>,
}

/// A parent->child link between units of two adjacent levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub parent: String,
    pub child: String,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub params: HardwareParams,
    pub levels: Vec<LevelConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connect {
    pub text: String,
    pub roles: BTreeSet<Role>,
    pub relation: IntRelation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryLevel {
    pub name: String,
    pub parent: Option<usize>,
    pub nx: i64,
    pub ny: i64,
    pub dim: DimAxis,
    pub is_virtual: bool,
    pub capacity_bytes: u64,
    pub read_energy: f64,
    pub write_energy: f64,
    pub connects: Vec<Connect>,
    pub per_operand: BTreeMap<Role, String>,
    pub buffer_capacity: BTreeMap<String, u64>,
    pub multicast: BTreeSet<Role>,
}

impl MemoryLevel {
    pub fn instances(&self) -> i64 {
        self.nx * self.ny
    }

    /// Coordinate tuple of the unit at absolute grid position `(x, y)`.
    pub fn unit(&self, x: i64, y: i64) -> Tuple {
        if self.instances() == 1 {
            return Tuple::from([1]);
        }
        match self.dim {
            DimAxis::X => Tuple::from([x]),
            DimAxis::Y => Tuple::from([y]),
            DimAxis::XY => Tuple::from([x, y]),
        }
    }

    pub fn unit_arity(&self) -> usize {
        if self.instances() == 1 {
            1
        } else if self.dim == DimAxis::XY {
            2
        } else {
            1
        }
    }

    pub fn units(&self) -> IntSet {
        let mut v = Vec::new();
        for x in 0..self.nx {
            for y in 0..self.ny {
                v.push(self.unit(x, y));
            }
        }
        IntSet::from_tuples(Shape::flat(self.unit_arity()), v).expect("grid within budget")
    }

    /// Connect relation carrying operands of `role`.
    pub fn connect_for(&self, role: Role) -> IntRelation {
        let shape = Shape::flat(self.unit_arity());
        let mut acc = IntRelation::empty(shape.clone(), shape);
        for c in self.connects.iter().filter(|c| c.roles.contains(&role)) {
            acc = acc.union(&c.relation).expect("same unit arity");
        }
        acc
    }

    /// Capacity available to operand `role`: `(buffer name, bytes)`.
    pub fn capacity_for(&self, role: Role) -> (Option<&str>, u64) {
        match self.per_operand.get(&role) {
            Some(buf) => (Some(buf.as_str()), self.buffer_capacity.get(buf).copied().unwrap_or(self.capacity_bytes)),
            None => (None, self.capacity_bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub name: String,
    /// Root first, leaf (MAC host) last.
    pub levels: Vec<MemoryLevel>,
    pub params: HardwareParams,
    /// child level index -> relation parent unit -> child unit.
    pub links: BTreeMap<usize, IntRelation>,
    /// Non-fatal notes produced while validating (dropped connect pairs, ...).
    pub warnings: Vec<String>,
    pub config: ArchConfig,
}

const ALL_ROLES: [Role; 3] = [Role::Input, Role::Weight, Role::Output];

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::config(msg)
}

impl ArchSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ArchConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        Self::from_config(cfg)
    }

    /// Serialise back into the config document format.
    pub fn render(&self) -> String {
        toml::to_string(&self.config).expect("arch config serialises")
    }

    pub fn from_config(cfg: ArchConfig) -> Result<Self> {
        if cfg.levels.is_empty() {
            return Err(cfg_err("architecture has no levels"));
        }
        let index: BTreeMap<&str, usize> = cfg.levels.iter().enumerate().map(|(i, l)| (l.name.as_str(), i)).collect();
        if index.len() != cfg.levels.len() {
            return Err(cfg_err("duplicate level names"));
        }
        let mut parents = Vec::new();
        for l in &cfg.levels {
            let p = match &l.parent {
                None => None,
                Some(p) => Some(*index.get(p.as_str()).ok_or_else(|| cfg_err(format!("level '{}': dangling parent '{p}'", l.name)))?),
            };
            parents.push(p);
        }
        let roots: Vec<usize> = (0..parents.len()).filter(|i| parents[*i].is_none()).collect();
        if roots.len() != 1 {
            return Err(cfg_err(format!("expected exactly one root level, found {}", roots.len())));
        }
        // Walk the chain from the root; anything unreachable sits on a cycle.
        let mut order = vec![roots[0]];
        loop {
            let cur = *order.last().unwrap();
            let kids: Vec<usize> = (0..parents.len()).filter(|i| parents[*i] == Some(cur)).collect();
            match kids.len() {
                0 => break,
                1 => order.push(kids[0]),
                _ => {
                    return Err(cfg_err(format!(
                        "level '{}' has {} children; only chain hierarchies are supported",
                        cfg.levels[cur].name,
                        kids.len()
                    )))
                }
            }
        }
        if order.len() != cfg.levels.len() {
            return Err(cfg_err("cycle in level hierarchy"));
        }
        if order.iter().enumerate().any(|(i, o)| *o != i) {
            return Err(cfg_err("levels must be listed root first, each after its parent"));
        }

        let mut warnings = Vec::new();
        let mut levels: Vec<MemoryLevel> = Vec::new();
        for (i, l) in cfg.levels.iter().enumerate() {
            let [nx, ny] = l.grid;
            if nx < 1 || ny < 1 {
                return Err(cfg_err(format!("level '{}': grid counts must be >= 1", l.name)));
            }
            if nx * ny > 1 {
                match l.dim {
                    DimAxis::X if ny != 1 => return Err(cfg_err(format!("level '{}': dim X needs a grid of [n, 1]", l.name))),
                    DimAxis::Y if nx != 1 => return Err(cfg_err(format!("level '{}': dim Y needs a grid of [1, n]", l.name))),
                    _ => {}
                }
            }
            if let Some(p) = parents[i] {
                let pl = &levels[p];
                if nx % pl.nx != 0 || ny % pl.ny != 0 {
                    return Err(cfg_err(format!("level '{}': grid is not a multiple of parent '{}' grid", l.name, pl.name)));
                }
            }
            for (role, buf) in &l.per_operand {
                if !l.buffer_capacity.contains_key(buf) {
                    return Err(cfg_err(format!("level '{}': buffer '{buf}' for {} has no capacity", l.name, role.as_str())));
                }
            }
            let mut level = MemoryLevel {
                name: l.name.clone(),
                parent: parents[i],
                nx,
                ny,
                dim: l.dim,
                is_virtual: l.is_virtual,
                capacity_bytes: l.capacity_bytes,
                read_energy: l.read_energy,
                write_energy: l.write_energy,
                connects: Vec::new(),
                per_operand: l.per_operand.clone(),
                buffer_capacity: l.buffer_capacity.clone(),
                multicast: l.multicast.iter().copied().collect(),
            };
            let units = level.units();
            for c in &l.connect {
                let (relation, dropped) = parse_relation_over(&c.relation, &units, &units)
                    .map_err(|e| cfg_err(format!("level '{}': connect {}: {e}", l.name, c.relation)))?;
                if dropped > 0 {
                    warnings.push(format!("level '{}': connect {} dropped {dropped} pair(s) outside the grid", l.name, c.relation));
                }
                if has_cycle(&relation) {
                    return Err(cfg_err(format!("level '{}': connect {} is cyclic", l.name, c.relation)));
                }
                let roles: BTreeSet<Role> = match (&c.operands, &c.buffer) {
                    (Some(ops), _) => ops.iter().copied().collect(),
                    (None, Some(buf)) => {
                        let r: BTreeSet<Role> = l.per_operand.iter().filter(|(_, b)| *b == buf).map(|(r, _)| *r).collect();
                        if r.is_empty() {
                            return Err(cfg_err(format!("level '{}': connect refers to unknown buffer '{buf}'", l.name)));
                        }
                        r
                    }
                    (None, None) => ALL_ROLES.iter().copied().collect(),
                };
                level.connects.push(Connect { text: c.relation.clone(), roles, relation });
            }
            levels.push(level);
        }

        let leaf = levels.last().unwrap();
        let pe = (leaf.nx * leaf.ny) as u64;
        if cfg.params.pe_size != pe {
            return Err(cfg_err(format!("pe_size {} does not match the leaf grid ({pe})", cfg.params.pe_size)));
        }
        let p = &cfg.params;
        for (name, v) in [
            ("e_act", p.e_act),
            ("e_idle", p.e_idle),
            ("e_multi", p.e_multi),
            ("e_inter", p.e_inter),
            ("lat_avg", p.lat_avg),
            ("bus_width", p.bus_width),
            ("f_accel", p.f_accel),
            ("f_dma", p.f_dma),
            ("dma_init", p.dma_init),
            ("dma_bytes_per_cycle_inv", p.dma_bytes_per_cycle_inv),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(cfg_err(format!("parameter {name} must be a non-negative number")));
            }
        }

        let mut links = BTreeMap::new();
        for link in &cfg.links {
            let (pi, ci) = match (index.get(link.parent.as_str()), index.get(link.child.as_str())) {
                (Some(p), Some(c)) => (*p, *c),
                _ => return Err(cfg_err(format!("link {} -> {}: unknown level", link.parent, link.child))),
            };
            if parents[ci] != Some(pi) {
                return Err(cfg_err(format!("link {} -> {}: levels are not adjacent", link.parent, link.child)));
            }
            let (rel, dropped) = parse_relation_over(&link.relation, &levels[pi].units(), &levels[ci].units())
                .map_err(|e| cfg_err(format!("link {}: {e}", link.relation)))?;
            if dropped > 0 {
                warnings.push(format!("link {} dropped {dropped} pair(s) outside the grids", link.relation));
            }
            for u in levels[ci].units().iter() {
                let feeders = rel.iter().filter(|(_, c)| c == u).count();
                if feeders != 1 {
                    return Err(cfg_err(format!(
                        "link {}: child unit {} must have exactly one parent, has {feeders}",
                        link.relation,
                        Shape::flat(u.arity()).render(u.values())
                    )));
                }
            }
            links.insert(ci, rel);
        }

        Ok(ArchSpec { name: cfg.name.clone(), levels, params: cfg.params.clone(), links, warnings, config: cfg })
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.name == name)
    }

    pub fn leaf(&self) -> usize {
        self.levels.len() - 1
    }

    /// Union of a level's connect relations.
    pub fn connect_relation(&self, level: &str) -> Result<IntRelation> {
        let l = self.levels.get(self.level_index(level).ok_or_else(|| cfg_err(format!("unknown level '{level}'")))?).unwrap();
        let shape = Shape::flat(l.unit_arity());
        let mut acc = IntRelation::empty(shape.clone(), shape);
        for c in &l.connects {
            acc = acc.union(&c.relation)?;
        }
        Ok(acc)
    }

    /// Absolute grid position of the parent unit feeding child unit `(x, y)`
    /// of level `child`.
    pub fn parent_position(&self, child: usize, x: i64, y: i64) -> (i64, i64) {
        let c = &self.levels[child];
        let p = &self.levels[c.parent.expect("non-root level")];
        if let Some(link) = self.links.get(&child) {
            let u = c.unit(x, y);
            let (pu, _) = link.iter().find(|(_, cu)| *cu == u).expect("validated link");
            return match (p.instances(), p.dim) {
                (1, _) => (0, 0),
                (_, DimAxis::X) => (pu.values()[0], 0),
                (_, DimAxis::Y) => (0, pu.values()[0]),
                (_, DimAxis::XY) => (pu.values()[0], pu.values()[1]),
            };
        }
        (x / (c.nx / p.nx), y / (c.ny / p.ny))
    }
}

fn has_cycle(rel: &IntRelation) -> bool {
    let mut adj: BTreeMap<&Tuple, Vec<&Tuple>> = BTreeMap::new();
    for (a, b) in rel.iter() {
        adj.entry(a).or_default().push(b);
    }
    // 0 = unseen, 1 = on stack, 2 = done
    let mut state: BTreeMap<&Tuple, u8> = BTreeMap::new();
    fn visit<'a>(n: &'a Tuple, adj: &BTreeMap<&'a Tuple, Vec<&'a Tuple>>, state: &mut BTreeMap<&'a Tuple, u8>) -> bool {
        match state.get(n) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(n, 1);
        if let Some(next) = adj.get(n) {
            for m in next {
                if visit(m, adj, state) {
                    return true;
                }
            }
        }
        state.insert(n, 2);
        false
    }
    let nodes: Vec<&Tuple> = adj.keys().copied().collect();
    nodes.into_iter().any(|n| visit(n, &adj, &mut state))
}
