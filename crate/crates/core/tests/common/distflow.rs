//! Branch-power (DistFlow) radial power flow, written independently of the
//! library's current-based sweep. Works on its own parse of the branch file
//! and iterates the exact magnitude recursions:
//!
//! P_ij = P_j + sum_k P_jk + r (P_ij^2 + Q_ij^2) / V_i^2 (same for Q with x),
//! V_j^2 = V_i^2 - 2 (r P_ij + x Q_ij) + (r^2 + x^2)(P_ij^2 + Q_ij^2) / V_i^2.

use std::collections::BTreeMap;

pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

pub const IEEE33_BRANCHES: &str = include_str!("../../data/ieee33_branches.txt");
pub const IEEE33_LOADS: &str = include_str!("../../data/ieee33_loads.txt");

fn rows(text: &str) -> impl Iterator<Item = Vec<f64>> + '_ {
    text.lines()
        .map(|l| l.split('#').next().unwrap().trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse::<f64>().unwrap()).collect())
}

/// Lines in per unit on `base_mva`.
pub fn lines(text: &str, base_mva: f64) -> Vec<Line> {
    rows(text)
        .map(|c| {
            let z_base = c[4] * c[4] / base_mva;
            Line { from: c[0] as usize, to: c[1] as usize, r: c[2] / z_base, x: c[3] / z_base }
        })
        .collect()
}

/// Bus loads in MW / MVAr.
pub fn loads(text: &str) -> BTreeMap<usize, (f64, f64)> {
    rows(text).map(|c| (c[0] as usize, (c[1] / 1000.0, c[2] / 1000.0))).collect()
}

pub struct Flow {
    pub v: BTreeMap<usize, f64>,
    pub losses_mw: f64,
    pub converged: bool,
}

/// `load` maps bus -> (P, Q) consumed in MW / MVAr; negative is generation.
pub fn solve(lines: &[Line], slack: usize, load: &BTreeMap<usize, (f64, f64)>, base_mva: f64) -> Flow {
    // Orient every line away from the slack.
    let mut adj: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (k, l) in lines.iter().enumerate() {
        adj.entry(l.from).or_default().push((l.to, k));
        adj.entry(l.to).or_default().push((l.from, k));
    }
    let mut order = vec![slack];
    let mut up: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut i = 0;
    while i < order.len() {
        let b = order[i];
        for &(n, k) in &adj[&b] {
            if n != slack && !up.contains_key(&n) {
                up.insert(n, (b, k));
                order.push(n);
            }
        }
        i += 1;
    }
    let pq = |b: usize| load.get(&b).map_or((0.0, 0.0), |&(p, q)| (p / base_mva, q / base_mva));
    let mut v2: BTreeMap<usize, f64> = order.iter().map(|&b| (b, 1.0)).collect();
    let mut flow: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut converged = false;
    for _ in 0..500 {
        let mut acc: BTreeMap<usize, (f64, f64)> = order.iter().map(|&b| (b, pq(b))).collect();
        for &b in order.iter().rev().filter(|&&b| b != slack) {
            let (parent, k) = up[&b];
            let l = &lines[k];
            let (p, q) = acc[&b];
            let (p0, q0) = flow.get(&b).copied().unwrap_or((p, q));
            let loss = (p0 * p0 + q0 * q0) / v2[&parent];
            let sent = (p + l.r * loss, q + l.x * loss);
            flow.insert(b, sent);
            let e = acc.get_mut(&parent).unwrap();
            e.0 += sent.0;
            e.1 += sent.1;
        }
        let mut change: f64 = 0.0;
        for &b in order.iter().filter(|&&b| b != slack) {
            let (parent, k) = up[&b];
            let l = &lines[k];
            let (p, q) = flow[&b];
            let vi = v2[&parent];
            let next = vi - 2.0 * (l.r * p + l.x * q) + (l.r * l.r + l.x * l.x) * (p * p + q * q) / vi;
            change = change.max((next - v2[&b]).abs());
            v2.insert(b, next);
        }
        if change < 1e-14 {
            converged = true;
            break;
        }
    }
    let losses_mw = order
        .iter()
        .filter(|&&b| b != slack)
        .map(|&b| {
            let (parent, k) = up[&b];
            let (p, q) = flow[&b];
            lines[k].r * (p * p + q * q) / v2[&parent] * base_mva
        })
        .sum();
    Flow { v: v2.into_iter().map(|(b, x)| (b, x.sqrt())).collect(), losses_mw, converged }
}
