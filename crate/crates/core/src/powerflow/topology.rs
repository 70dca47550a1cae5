//! Radial feeder description: buses, branches and where each device sits.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IEEE33_BRANCHES: &str = include_str!("../../data/ieee33_branches.txt");
const IEEE33_LOADS: &str = include_str!("../../data/ieee33_loads.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub kv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub base_kv: f64,
}

/// Bus of every device, in the microgrid's device order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceBuses {
    pub ess: Vec<usize>,
    pub generators: Vec<usize>,
    pub pv: Vec<usize>,
    pub loads: Vec<usize>,
}

impl Default for DeviceBuses {
    /// Placement used with the default microgrid on the 33-bus feeder.
    fn default() -> Self {
        Self {
            ess: vec![6, 14, 24, 30, 18],
            generators: vec![7, 12, 22, 25, 32],
            pv: vec![10, 16, 20, 27, 29, 33],
            loads: vec![2, 3, 4, 5, 7, 8, 9, 11, 13, 15, 17, 19, 21, 23, 24, 26, 28, 30, 31, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederTopology {
    /// Sorted by id.
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Substation bus, the voltage reference while grid-connected.
    pub slack: usize,
    pub base_mva: f64,
    pub devices: DeviceBuses,
    index: BTreeMap<usize, usize>,
}

/// The feeder oriented away from a chosen root.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedTree {
    pub root: usize,
    /// Bus indices in breadth-first order from the root.
    pub order: Vec<usize>,
    /// Parent bus index, `None` at the root.
    pub parent: Vec<Option<usize>>,
    /// Branch index joining each bus to its parent.
    pub parent_branch: Vec<Option<usize>>,
}

/// Parses `from to r_ohm x_ohm kv` lines; `#` starts a comment.
pub fn parse_branches(text: &str) -> Result<Vec<Branch>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("branch line {}: expected 5 fields, found {}", n + 1, f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("branch line {}: {s}: {e}", n + 1)));
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("branch line {}: {s}: {e}", n + 1)));
        out.push(Branch { from: int(f[0])?, to: int(f[1])?, r_ohm: num(f[2])?, x_ohm: num(f[3])?, kv: num(f[4])? });
    }
    Ok(out)
}

/// Parses `bus p_kw q_kvar` lines into per-bus loads in MW / MVAr.
pub fn parse_bus_loads(text: &str) -> Result<Vec<(usize, Complex64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("load line {}: expected 3 fields, found {}", n + 1, f.len())));
        }
        let bus = f[0].parse::<usize>().map_err(|e| Error::Parse(format!("load line {}: {e}", n + 1)))?;
        let p = f[1].parse::<f64>().map_err(|e| Error::Parse(format!("load line {}: {e}", n + 1)))?;
        let q = f[2].parse::<f64>().map_err(|e| Error::Parse(format!("load line {}: {e}", n + 1)))?;
        out.push((bus, Complex64::new(p / 1e3, q / 1e3)));
    }
    Ok(out)
}

impl FeederTopology {
    pub fn new(branches: Vec<Branch>, slack: usize, base_mva: f64, devices: DeviceBuses) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::Topology(format!("base_mva must be positive, got {base_mva}")));
        }
        let mut kv: BTreeMap<usize, f64> = BTreeMap::new();
        for b in &branches {
            if b.from == b.to {
                return Err(Error::Topology(format!("branch {}-{} is a self loop", b.from, b.to)));
            }
            if !(b.r_ohm >= 0.0 && b.x_ohm >= 0.0 && b.kv > 0.0) {
                return Err(Error::Topology(format!("branch {}-{} has invalid impedance or voltage", b.from, b.to)));
            }
            kv.entry(b.from).or_insert(b.kv);
            kv.entry(b.to).or_insert(b.kv);
        }
        if !kv.contains_key(&slack) {
            return Err(Error::Topology(format!("slack bus {slack} is not on any branch")));
        }
        let buses: Vec<Bus> = kv.iter().map(|(&id, &base_kv)| Bus { id, base_kv }).collect();
        let index = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let topo = Self { buses, branches, slack, base_mva, devices, index };
        for (kind, list) in [
            ("ess", &topo.devices.ess),
            ("generator", &topo.devices.generators),
            ("pv", &topo.devices.pv),
            ("load", &topo.devices.loads),
        ] {
            for (k, bus) in list.iter().enumerate() {
                if !topo.index.contains_key(bus) {
                    return Err(Error::Topology(format!("{kind} {k} mapped to unknown bus {bus}")));
                }
            }
        }
        topo.rooted(slack)?;
        Ok(topo)
    }

    /// The 33-bus test feeder with the default device placement.
    pub fn ieee33() -> Self {
        Self::new(parse_branches(IEEE33_BRANCHES).expect("bundled branch data"), 1, 10.0, DeviceBuses::default())
            .expect("bundled feeder is radial")
    }

    /// Base-case loads of the bundled 33-bus feeder, MW + j MVAr per bus.
    pub fn ieee33_base_loads() -> Vec<(usize, Complex64)> {
        parse_bus_loads(IEEE33_LOADS).expect("bundled load data")
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// Branch impedance in per unit on the branch voltage base.
    pub fn branch_z_pu(&self, k: usize) -> Complex64 {
        let b = &self.branches[k];
        let z_base = b.kv * b.kv / self.base_mva;
        Complex64::new(b.r_ohm / z_base, b.x_ohm / z_base)
    }

    /// Per-bus vector of zeros aligned with `buses`.
    pub fn zero_injections(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.buses.len()]
    }

    /// Orients the feeder away from `root`; fails on cycles or islands.
    pub fn rooted(&self, root: usize) -> Result<RootedTree> {
        let n = self.buses.len();
        let r = self.bus_index(root).ok_or_else(|| Error::Topology(format!("root bus {root} not in feeder")))?;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut seen_pairs = BTreeSet::new();
        for (k, b) in self.branches.iter().enumerate() {
            let (i, j) = (self.index[&b.from], self.index[&b.to]);
            if !seen_pairs.insert((i.min(j), i.max(j))) {
                return Err(Error::Topology(format!("parallel branches between buses {} and {}", b.from, b.to)));
            }
            adj[i].push((j, k));
            adj[j].push((i, k));
        }
        let mut parent = vec![None; n];
        let mut parent_branch = vec![None; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([r]);
        visited[r] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &(j, k) in &adj[i] {
                if parent_branch[i] == Some(k) {
                    continue;
                }
                if visited[j] {
                    return Err(Error::Topology(format!(
                        "cycle closed by branch {}-{}",
                        self.branches[k].from, self.branches[k].to
                    )));
                }
                visited[j] = true;
                parent[j] = Some(i);
                parent_branch[j] = Some(k);
                queue.push_back(j);
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(Error::Topology(format!("bus {} is not connected to bus {root}", self.buses[i].id)));
        }
        Ok(RootedTree { root: r, order, parent, parent_branch })
    }
}
