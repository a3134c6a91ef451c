//! Affine loop-nest workloads: iteration domain, access functions and the
//! identity base schedule.
//!
//! Domains are half-open boxes `0 <= d < extent`. Array elements are encoded
//! as `[array_id, idx...]`, padded with zeros to a common arity so a single
//! relation can carry every array.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intrel::{check_budget, IntRelation, IntSet, Shape, Tuple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Weight,
    Output,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Weight => "weight",
            Role::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "input" => Some(Role::Input),
            "weight" => Some(Role::Weight),
            "output" => Some(Role::Output),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimSpec {
    pub name: String,
    pub extent: i64,
}

/// `array[coeffs * iter + offsets]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessFunction {
    pub array: usize,
    pub kind: AccessKind,
    /// One row per array index dimension, one column per loop dimension.
    pub coeffs: Vec<Vec<i64>>,
    pub offsets: Vec<i64>,
}

impl AccessFunction {
    pub fn index(&self, iter: &[i64]) -> Vec<i64> {
        self.coeffs
            .iter()
            .zip(&self.offsets)
            .map(|(row, off)| row.iter().zip(iter).map(|(c, i)| c * i).sum::<i64>() + off)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayInfo {
    pub name: String,
    pub role: Role,
    pub index_arity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Gemm,
    Conv2d,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub name: String,
    pub op: OpKind,
    pub dims: Vec<DimSpec>,
    pub arrays: Vec<ArrayInfo>,
    pub accesses: Vec<AccessFunction>,
    pub element_bits: u32,
}

pub const DEFAULT_ELEMENT_BITS: u32 = 16;

fn positive(name: &str, v: i64) -> Result<()> {
    if v < 1 {
        Err(Error::config(format!("extent of '{name}' must be >= 1, got {v}")))
    } else {
        Ok(())
    }
}

fn unit_row(n: usize, at: &[(usize, i64)]) -> Vec<i64> {
    let mut row = vec![0; n];
    for (d, c) in at {
        row[*d] = *c;
    }
    row
}

impl Workload {
    /// `C[i,j] += A[i,k] * B[k,j]` over `[I, J, K]`.
    pub fn gemm(i: i64, j: i64, k: i64) -> Result<Self> {
        positive("I", i)?;
        positive("J", j)?;
        positive("K", k)?;
        let dims = vec![
            DimSpec { name: "i".into(), extent: i },
            DimSpec { name: "j".into(), extent: j },
            DimSpec { name: "k".into(), extent: k },
        ];
        let arrays = vec![
            ArrayInfo { name: "A".into(), role: Role::Input, index_arity: 2 },
            ArrayInfo { name: "B".into(), role: Role::Weight, index_arity: 2 },
            ArrayInfo { name: "C".into(), role: Role::Output, index_arity: 2 },
        ];
        let acc = |array, kind, rows: Vec<Vec<i64>>| AccessFunction { array, kind, offsets: vec![0; rows.len()], coeffs: rows };
        let c_rows = || vec![unit_row(3, &[(0, 1)]), unit_row(3, &[(1, 1)])];
        let accesses = vec![
            acc(2, AccessKind::Read, c_rows()),
            acc(0, AccessKind::Read, vec![unit_row(3, &[(0, 1)]), unit_row(3, &[(2, 1)])]),
            acc(1, AccessKind::Read, vec![unit_row(3, &[(2, 1)]), unit_row(3, &[(1, 1)])]),
            acc(2, AccessKind::Write, c_rows()),
        ];
        Ok(Workload {
            name: format!("gemm-{i}x{j}x{k}"),
            op: OpKind::Gemm,
            dims,
            arrays,
            accesses,
            element_bits: DEFAULT_ELEMENT_BITS,
        })
    }

    /// Seven-deep convolution over `[n, k, c, oy, ox, r, s]`:
    /// `O[n,k,oy,ox] += I[n, c, stride*oy + s, stride*ox + r] * W[k, c, r, s]`.
    pub fn conv2d(p: ConvParams) -> Result<Self> {
        let ConvParams { n, k, c, oy, ox, r, s, stride } = p;
        for (name, v) in [("N", n), ("K", k), ("C", c), ("Oy", oy), ("Ox", ox), ("R", r), ("S", s), ("stride", stride)] {
            positive(name, v)?;
        }
        let names = ["n", "k", "c", "oy", "ox", "r", "s"];
        let extents = [n, k, c, oy, ox, r, s];
        let dims = names.iter().zip(extents).map(|(nm, e)| DimSpec { name: nm.to_string(), extent: e }).collect();
        let arrays = vec![
            ArrayInfo { name: "I".into(), role: Role::Input, index_arity: 4 },
            ArrayInfo { name: "W".into(), role: Role::Weight, index_arity: 4 },
            ArrayInfo { name: "O".into(), role: Role::Output, index_arity: 4 },
        ];
        let (dn, dk, dc, doy, dox, dr, ds) = (0, 1, 2, 3, 4, 5, 6);
        let out_rows = || vec![unit_row(7, &[(dn, 1)]), unit_row(7, &[(dk, 1)]), unit_row(7, &[(doy, 1)]), unit_row(7, &[(dox, 1)])];
        let acc = |array, kind, rows: Vec<Vec<i64>>| AccessFunction { array, kind, offsets: vec![0; rows.len()], coeffs: rows };
        let accesses = vec![
            acc(2, AccessKind::Read, out_rows()),
            acc(
                0,
                AccessKind::Read,
                vec![
                    unit_row(7, &[(dn, 1)]),
                    unit_row(7, &[(dc, 1)]),
                    unit_row(7, &[(doy, stride), (ds, 1)]),
                    unit_row(7, &[(dox, stride), (dr, 1)]),
                ],
            ),
            acc(
                1,
                AccessKind::Read,
                vec![unit_row(7, &[(dk, 1)]), unit_row(7, &[(dc, 1)]), unit_row(7, &[(dr, 1)]), unit_row(7, &[(ds, 1)])],
            ),
            acc(2, AccessKind::Write, out_rows()),
        ];
        Ok(Workload {
            name: format!("conv2d-{n}x{k}x{c}x{oy}x{ox}x{r}x{s}-s{stride}"),
            op: OpKind::Conv2d,
            dims,
            arrays,
            accesses,
            element_bits: DEFAULT_ELEMENT_BITS,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_element_bits(mut self, bits: u32) -> Self {
        self.element_bits = bits;
        self
    }

    pub fn depth(&self) -> usize {
        self.dims.len()
    }

    pub fn extents(&self) -> Vec<i64> {
        self.dims.iter().map(|d| d.extent).collect()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn array_index(&self, name: &str) -> Option<usize> {
        self.arrays.iter().position(|a| a.name == name)
    }

    pub fn instance_count(&self) -> u64 {
        self.dims.iter().map(|d| d.extent as u64).product()
    }

    pub fn element_bytes(&self) -> f64 {
        self.element_bits as f64 / 8.0
    }

    /// Arity of encoded element tuples (`1 + max index arity`).
    pub fn element_arity(&self) -> usize {
        1 + self.arrays.iter().map(|a| a.index_arity).max().unwrap_or(0)
    }

    pub fn element_shape(&self) -> Shape {
        Shape::flat(self.element_arity())
    }

    /// Encoded element touched by `access` at iteration `iter`.
    pub fn element(&self, access: &AccessFunction, iter: &[i64]) -> Tuple {
        let mut v = Vec::with_capacity(self.element_arity());
        v.push(access.array as i64);
        v.extend(access.index(iter));
        v.resize(self.element_arity(), 0);
        Tuple(v)
    }

    /// Loop dimensions that no write access depends on (reduction dims).
    pub fn reduction_dims(&self) -> Vec<usize> {
        (0..self.depth())
            .filter(|d| {
                self.accesses
                    .iter()
                    .filter(|a| a.kind == AccessKind::Write)
                    .all(|a| a.coeffs.iter().all(|row| row[*d] == 0))
            })
            .collect()
    }

    pub fn output_arrays(&self) -> BTreeSet<usize> {
        self.accesses.iter().filter(|a| a.kind == AccessKind::Write).map(|a| a.array).collect()
    }

    pub fn domain(&self) -> Result<IntSet> {
        Ok(IntSet::boxed(&self.extents())?)
    }

    fn relation_of<F: Fn(&AccessFunction) -> bool>(&self, keep: F) -> Result<IntRelation> {
        let domain = self.domain()?;
        let accs: Vec<&AccessFunction> = self.accesses.iter().filter(|a| keep(a)).collect();
        check_budget(domain.len() * accs.len())?;
        let mut pairs = Vec::with_capacity(domain.len() * accs.len());
        for inst in domain.iter() {
            for a in &accs {
                pairs.push((inst.clone(), self.element(a, inst.values())));
            }
        }
        Ok(IntRelation::from_pairs(Shape::flat(self.depth()), self.element_shape(), pairs)?)
    }

    /// Instance -> element for every read access.
    pub fn read_relation(&self) -> Result<IntRelation> {
        self.relation_of(|a| a.kind == AccessKind::Read)
    }

    /// Instance -> element for every write access.
    pub fn write_relation(&self) -> Result<IntRelation> {
        self.relation_of(|a| a.kind == AccessKind::Write)
    }

    /// Instance -> element for all accesses (read or write) of one array.
    pub fn access_relation(&self, array: usize) -> Result<IntRelation> {
        self.relation_of(|a| a.array == array)
    }

    /// Distinct elements of `array` touched by the box `origin + [0, extents)`.
    pub fn box_footprint(&self, array: usize, origin: &[i64], extents: &[i64]) -> Vec<Tuple> {
        let mut out: BTreeSet<Tuple> = BTreeSet::new();
        for acc in self.accesses.iter().filter(|a| a.array == array) {
            self.access_box_image(acc, origin, extents, &mut out);
        }
        out.into_iter().collect()
    }

    pub fn box_footprint_count(&self, array: usize, extents: &[i64]) -> u64 {
        let origin = vec![0; extents.len()];
        let accs: Vec<&AccessFunction> = self.accesses.iter().filter(|a| a.array == array).collect();
        if let Some(first) = accs.first() {
            let same = accs.iter().all(|b| b.coeffs == first.coeffs && b.offsets == first.offsets);
            if same {
                if let Some(sets) = separable_values(first, &origin, extents) {
                    return sets.iter().map(|s| s.len() as u64).product();
                }
            }
        }
        self.box_footprint(array, &origin, extents).len() as u64
    }

    fn access_box_image(&self, acc: &AccessFunction, origin: &[i64], extents: &[i64], out: &mut BTreeSet<Tuple>) {
        let arity = self.element_arity();
        if let Some(sets) = separable_values(acc, origin, extents) {
            let mut cur = vec![0usize; sets.len()];
            if sets.iter().any(|s| s.is_empty()) {
                return;
            }
            loop {
                let mut v = Vec::with_capacity(arity);
                v.push(acc.array as i64);
                v.extend(cur.iter().zip(&sets).map(|(i, s)| s[*i]));
                v.resize(arity, 0);
                out.insert(Tuple(v));
                let mut d = sets.len();
                loop {
                    if d == 0 {
                        return;
                    }
                    d -= 1;
                    cur[d] += 1;
                    if cur[d] < sets[d].len() {
                        break;
                    }
                    cur[d] = 0;
                }
            }
        }
        for_each_point(extents, |p| {
            let iter: Vec<i64> = p.iter().zip(origin).map(|(a, b)| a + b).collect();
            out.insert(self.element(acc, &iter));
        });
    }
}

/// Per-index value sets when every loop dim feeds at most one index row.
fn separable_values(acc: &AccessFunction, origin: &[i64], extents: &[i64]) -> Option<Vec<Vec<i64>>> {
    let depth = extents.len();
    for d in 0..depth {
        if acc.coeffs.iter().filter(|row| row[d] != 0).count() > 1 {
            return None;
        }
    }
    let mut sets = Vec::with_capacity(acc.coeffs.len());
    for (row, off) in acc.coeffs.iter().zip(&acc.offsets) {
        let used: Vec<usize> = (0..depth).filter(|d| row[*d] != 0).collect();
        let sub: Vec<i64> = used.iter().map(|d| extents[*d]).collect();
        let base: i64 = used.iter().map(|d| row[*d] * origin[*d]).sum::<i64>() + off;
        let mut vals = BTreeSet::new();
        for_each_point(&sub, |p| {
            vals.insert(base + p.iter().zip(&used).map(|(x, d)| row[*d] * x).sum::<i64>());
        });
        sets.push(vals.into_iter().collect());
    }
    Some(sets)
}

/// Calls `f` on every point of `[0, extents)` in lexicographic order.
pub(crate) fn for_each_point<F: FnMut(&[i64])>(extents: &[i64], mut f: F) {
    if extents.iter().any(|e| *e <= 0) {
        return;
    }
    let mut cur = vec![0i64; extents.len()];
    loop {
        f(&cur);
        let mut d = extents.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            cur[d] += 1;
            if cur[d] < extents[d] {
                break;
            }
            cur[d] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub n: i64,
    pub k: i64,
    pub c: i64,
    pub oy: i64,
    pub ox: i64,
    pub r: i64,
    pub s: i64,
    pub stride: i64,
}

/// On-disk workload description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub op: OpKind,
    pub dims: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_bits: Option<u32>,
    /// Free-form provenance note (e.g. where layer shapes come from).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl WorkloadConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    fn get(&self, keys: &[&str], default: Option<i64>) -> Result<i64> {
        for k in keys {
            for (name, v) in &self.dims {
                if name.eq_ignore_ascii_case(k) {
                    return Ok(*v);
                }
            }
        }
        default.ok_or_else(|| Error::config(format!("workload dims missing '{}'", keys[0])))
    }

    pub fn build(&self) -> Result<Workload> {
        let allowed: &[&str] = match self.op {
            OpKind::Gemm => &["i", "j", "k"],
            OpKind::Conv2d => &["n", "k", "c", "oy", "ox", "r", "s", "stride"],
        };
        for k in self.dims.keys() {
            if !allowed.iter().any(|a| a.eq_ignore_ascii_case(k)) {
                return Err(Error::config(format!("unknown workload dim '{k}'")));
            }
        }
        let w = match self.op {
            OpKind::Gemm => Workload::gemm(self.get(&["i"], None)?, self.get(&["j"], None)?, self.get(&["k"], None)?)?,
            OpKind::Conv2d => Workload::conv2d(ConvParams {
                n: self.get(&["n"], Some(1))?,
                k: self.get(&["k"], None)?,
                c: self.get(&["c"], None)?,
                oy: self.get(&["oy"], None)?,
                ox: self.get(&["ox"], None)?,
                r: self.get(&["r"], None)?,
                s: self.get(&["s"], None)?,
                stride: self.get(&["stride"], Some(1))?,
            })?,
        };
        let w = w.with_element_bits(self.element_bits.unwrap_or(DEFAULT_ELEMENT_BITS));
        if w.element_bits == 0 {
            return Err(Error::config("element_bits must be positive"));
        }
        Ok(match &self.name {
            Some(n) => w.with_name(n.clone()),
            None => w,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn array_image(rel: &IntRelation, array: usize) -> usize {
        rel.range().iter().filter(|t| t.values()[0] == array as i64).count()
    }

    #[test]
    fn gemm_domain_sizes() {
        assert_eq!(Workload::gemm(256, 256, 256).unwrap().instance_count(), 16_777_216);
        let one = Workload::gemm(1, 1, 1).unwrap();
        let reads = one.read_relation().unwrap().range();
        assert_eq!(reads.len(), 3);
        assert!(reads.contains(&Tuple::from([0, 0, 0])));
        assert!(reads.contains(&Tuple::from([1, 0, 0])));
        assert!(reads.contains(&Tuple::from([2, 0, 0])));
    }

    #[test]
    fn gemm_read_and_write_relations() {
        let w = Workload::gemm(2, 2, 2).unwrap();
        let a = w.array_index("A").unwrap();
        assert_eq!(array_image(&w.read_relation().unwrap(), a), 4);

        let w12 = Workload::gemm(1, 1, 2).unwrap();
        let ra = w12.read_relation().unwrap().filter(|_, e| e.values()[0] == 0);
        let expect = IntRelation::from_pairs(
            Shape::flat(3),
            Shape::flat(3),
            [(Tuple::from([0, 0, 0]), Tuple::from([0, 0, 0])), (Tuple::from([0, 0, 1]), Tuple::from([0, 0, 1]))],
        )
        .unwrap();
        assert_eq!(ra, expect);

        let wr = w.write_relation().unwrap();
        assert_eq!(wr.cardinality(), 8);
        assert_eq!(wr.range().len(), 4);
        // Each C element written exactly K times.
        for e in wr.range().iter() {
            assert_eq!(wr.iter().filter(|(_, b)| b == e).count(), 2);
        }
        assert_eq!(w.reduction_dims(), vec![2]);
    }

    #[test]
    fn rejects_non_positive_extents() {
        assert!(Workload::gemm(0, 1, 1).is_err());
        let p = ConvParams { n: 1, k: 1, c: 1, oy: 2, ox: 2, r: 2, s: 2, stride: 0 };
        assert!(Workload::conv2d(p).is_err());
    }

    #[test]
    fn conv_input_footprints() {
        let pw = Workload::conv2d(ConvParams { n: 2, k: 3, c: 2, oy: 3, ox: 4, r: 1, s: 1, stride: 1 }).unwrap();
        let i = pw.array_index("I").unwrap();
        assert_eq!(array_image(&pw.read_relation().unwrap(), i), 2 * 2 * 3 * 4);

        let w = Workload::conv2d(ConvParams { n: 1, k: 1, c: 1, oy: 2, ox: 2, r: 2, s: 2, stride: 1 }).unwrap();
        assert_eq!(array_image(&w.read_relation().unwrap(), 0), 9);
        assert_eq!(w.reduction_dims(), vec![2, 5, 6]);
    }

    #[test]
    fn box_footprint_matches_enumeration() {
        let w = Workload::conv2d(ConvParams { n: 1, k: 2, c: 2, oy: 4, ox: 4, r: 3, s: 3, stride: 2 }).unwrap();
        let ext = w.extents();
        let rel = w.read_relation().unwrap();
        for a in 0..3 {
            let fp = w.box_footprint(a, &[0; 7], &ext);
            assert_eq!(fp.len(), array_image(&rel, a));
            assert_eq!(w.box_footprint_count(a, &ext), fp.len() as u64);
        }
    }

    #[test]
    fn config_round_trip() {
        let cfg = WorkloadConfig::parse("op = \"conv2d\"\nelement_bits = 8\n[dims]\nK = 4\nC = 2\nOy = 3\nOx = 3\nR = 2\nS = 2\n").unwrap();
        let w = cfg.build().unwrap();
        assert_eq!(w.element_bits, 8);
        assert_eq!(w.instance_count(), 4 * 2 * 9 * 4);
        assert!(WorkloadConfig::parse("op = \"gemm\"\n[dims]\nI = 1\nJ = 1\nK = 1\nQ = 3\n").unwrap().build().is_err());
        assert!(WorkloadConfig::parse("op = \"gemm\"\nbogus = 1\n[dims]\nI = 1\n").is_err());
    }
}
