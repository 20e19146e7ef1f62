//! Vine tree structures: Dissmann's greedy maximum spanning trees for R-vines,
//! star trees for C-vines and paths for D-vines, plus validation and DOT export.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicop::{
    select_family_with_tau, BicopSpec, CondOn, Criterion, Family, SelectionSettings,
};
use crate::dependence::kendall_tau;
use crate::error::{Error, Result};
use crate::margins::PseudoObs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VineKind {
    Rvine,
    Cvine,
    Dvine,
}

impl std::str::FromStr for VineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rvine" | "r" => Ok(VineKind::Rvine),
            "cvine" | "c" => Ok(VineKind::Cvine),
            "dvine" | "d" => Ok(VineKind::Dvine),
            other => Err(format!("unknown vine kind {other:?} (expected rvine, cvine or dvine)")),
        }
    }
}

impl std::fmt::Display for VineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VineKind::Rvine => "rvine",
            VineKind::Cvine => "cvine",
            VineKind::Dvine => "dvine",
        })
    }
}

/// One pair copula: `c_{a,b;D}` with `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct VineEdge {
    pub conditioned: [usize; 2],
    pub conditioning: Vec<usize>,
    pub level: usize,
    /// |tau| of the conditioned pseudo-observations, the selection weight.
    pub weight: f64,
    pub spec: Option<BicopSpec>,
}

impl VineEdge {
    /// Conditioned and conditioning variables together, sorted.
    pub fn union(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.conditioning.clone();
        u.extend(self.conditioned);
        u.sort_unstable();
        u
    }

    pub fn contains(&self, var: usize) -> bool {
        self.conditioned.contains(&var) || self.conditioning.contains(&var)
    }

    /// The other conditioned variable.
    pub fn partner(&self, var: usize) -> Option<usize> {
        match self.conditioned {
            [a, b] if a == var => Some(b),
            [a, b] if b == var => Some(a),
            _ => None,
        }
    }

    pub fn label(&self, names: &[String]) -> String {
        node_label(&self.conditioned, &self.conditioning, names)
    }
}

fn joined(vars: &[usize], names: &[String]) -> String {
    let mut v: Vec<&str> = vars.iter().map(|&i| names[i].as_str()).collect();
    v.sort_unstable();
    v.join(",")
}

/// `a,b|c,d` with names sorted inside each part.
pub fn node_label(conditioned: &[usize], conditioning: &[usize], names: &[String]) -> String {
    if conditioning.is_empty() {
        joined(conditioned, names)
    } else {
        format!("{}|{}", joined(conditioned, names), joined(conditioning, names))
    }
}

/// A C-vine centre: the node chosen as star centre at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvineCenter {
    pub level: usize,
    /// Variable conditioned on from the next level on.
    pub variable: usize,
    /// Full label of the centre node (its conditioned set and conditioning set).
    pub node: String,
    pub score: f64,
    /// Variables joined to the centre at this level with their tau.
    pub neighbors: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VineStructure {
    pub d: usize,
    pub kind: VineKind,
    pub names: Vec<String>,
    pub trees: Vec<Vec<VineEdge>>,
    /// Star centres in selection order (C-vines only).
    pub centers: Vec<CvineCenter>,
}

impl VineStructure {
    pub fn edges(&self) -> impl Iterator<Item = &VineEdge> {
        self.trees.iter().flatten()
    }

    pub fn n_edges(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    pub fn is_fitted(&self) -> bool {
        self.edges().all(|e| e.spec.is_some())
    }

    /// Degree of every variable in the first tree.
    pub fn first_tree_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.d];
        for e in self.trees.first().into_iter().flatten() {
            deg[e.conditioned[0]] += 1;
            deg[e.conditioned[1]] += 1;
        }
        deg
    }

    /// First-tree edges as sorted index pairs.
    pub fn first_tree_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.trees
            .first()
            .into_iter()
            .flatten()
            .map(|e| (e.conditioned[0], e.conditioned[1]))
            .collect()
    }

    pub fn to_dot(&self) -> Vec<String> {
        self.trees
            .iter()
            .enumerate()
            .map(|(m, edges)| tree_dot(&format!("T{}", m + 1), m + 1, edges, &self.names))
            .collect()
    }
}

pub(crate) fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn edge_dot_label(e: &VineEdge) -> String {
    match &e.spec {
        Some(s) => format!("{} tau={:.3}", s.label(), s.implied_tau()),
        None => format!("|tau|={:.3}", e.weight),
    }
}

/// DOT graph of one tree; node labels are conditioned sets of the tree's nodes.
fn tree_dot(name: &str, level: usize, edges: &[VineEdge], names: &[String]) -> String {
    let mut out = format!("graph {} {{\n", dot_quote(name));
    let mut nodes = BTreeSet::new();
    let mut lines = Vec::new();
    for e in edges {
        let (l, r) = endpoint_labels(e, level, names);
        nodes.insert(l.clone());
        nodes.insert(r.clone());
        lines.push(format!(
            "  {} -- {} [label={}];\n",
            dot_quote(&l),
            dot_quote(&r),
            dot_quote(&edge_dot_label(e))
        ));
    }
    for n in nodes {
        let _ = writeln!(out, "  {};", dot_quote(&n));
    }
    for l in lines {
        out.push_str(&l);
    }
    out.push_str("}\n");
    out
}

/// Labels of the two tree nodes an edge joins.
fn endpoint_labels(e: &VineEdge, level: usize, names: &[String]) -> (String, String) {
    let [a, b] = e.conditioned;
    if level == 1 {
        return (names[a].clone(), names[b].clone());
    }
    // parents have unions {a} + D and {b} + D; recover their conditioned sets
    // by taking the variable that distinguishes them from the grandparent level
    let side = |x: usize| -> String {
        let mut union = e.conditioning.clone();
        union.push(x);
        union.sort_unstable();
        format!("[{}]", joined(&union, names))
    };
    (side(a), side(b))
}

/// Maximum spanning tree over a complete weighted graph (Kruskal). Ties are
/// broken by lexicographic edge order `(i, j)`, `i < j`.
pub fn max_spanning_tree(weights: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::Structure(format!("spanning tree needs at least two nodes, got {n}")));
    }
    let mut cands = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        if weights[i].len() != n {
            return Err(Error::Structure("weight matrix is not square".into()));
        }
        for j in i + 1..n {
            let w = weights[i][j];
            if !w.is_finite() {
                return Err(Error::Structure(format!("weight ({i}, {j}) is not finite")));
            }
            cands.push((i, j, w));
        }
    }
    let tree = kruskal(n, cands, |i, j| (i, j));
    if tree.len() != n - 1 {
        return Err(Error::Structure("weight graph is disconnected".into()));
    }
    Ok(tree)
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Kruskal on an explicit candidate list: heaviest first, then by `key`.
fn kruskal<K: Ord, F: Fn(usize, usize) -> K>(n: usize, mut cands: Vec<(usize, usize, f64)>, key: F) -> Vec<(usize, usize)> {
    cands.sort_by(|x, y| y.2.total_cmp(&x.2).then_with(|| key(x.0, x.1).cmp(&key(y.0, y.1))));
    let mut ds = DisjointSet::new(n);
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for (i, j, _) in cands {
        if ds.union(i, j) {
            out.push((i, j));
            if out.len() + 1 == n {
                break;
            }
        }
    }
    out
}

/// Estimation settings shared by the structure builders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub selection: SelectionSettings,
    /// Levels above this are fixed to Independence.
    pub trunc_level: Option<usize>,
}

impl FitSettings {
    pub fn with_families(families: &[Family]) -> Self {
        FitSettings {
            selection: SelectionSettings::with_families(families),
            trunc_level: None,
        }
    }

    pub fn criterion(mut self, c: Criterion) -> Self {
        self.selection.criterion = c;
        self
    }

    fn truncated(&self, level: usize) -> bool {
        self.trunc_level.is_some_and(|t| level > t)
    }
}

/// A node of the tree currently being built: a variable at level 1, an edge of
/// the previous tree afterwards. `data` holds, for each conditioned variable
/// `x`, the pseudo-observations of `x` given the rest of `union`.
#[derive(Debug, Clone)]
struct WorkNode {
    union: Vec<usize>,
    ends: Option<[usize; 2]>,
    label: String,
    data: Vec<(usize, Arc<Vec<f64>>)>,
}

impl WorkNode {
    fn series(&self, var: usize) -> &[f64] {
        &self.data.iter().find(|(v, _)| *v == var).expect("conditioned variable present").1
    }
}

/// A candidate edge between nodes `i < j`: conditioned `a` from node i, `b`
/// from node j, and the tau of their pseudo-observations.
#[derive(Debug, Clone)]
struct Candidate {
    i: usize,
    j: usize,
    a: usize,
    b: usize,
    conditioning: Vec<usize>,
    tau: f64,
}

fn set_minus(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| !b.contains(x)).collect()
}

/// The pair (i, j) may be joined when the node unions differ by one variable
/// each and, above level 1, the nodes share an endpoint.
fn admissible(ni: &WorkNode, nj: &WorkNode) -> Option<(usize, usize, Vec<usize>)> {
    let ai = set_minus(&ni.union, &nj.union);
    let bj = set_minus(&nj.union, &ni.union);
    if ai.len() != 1 || bj.len() != 1 {
        return None;
    }
    if let (Some(ei), Some(ej)) = (ni.ends, nj.ends) {
        if !ei.iter().any(|x| ej.contains(x)) {
            return None;
        }
    }
    let d: Vec<usize> = ni.union.iter().copied().filter(|x| nj.union.contains(x)).collect();
    Some((ai[0], bj[0], d))
}

fn candidate(nodes: &[WorkNode], i: usize, j: usize) -> Result<Option<Candidate>> {
    let Some((a, b, conditioning)) = admissible(&nodes[i], &nodes[j]) else {
        return Ok(None);
    };
    let tau = kendall_tau(nodes[i].series(a), nodes[j].series(b))?;
    Ok(Some(Candidate {
        i,
        j,
        a,
        b,
        conditioning,
        tau,
    }))
}

fn candidates_for(nodes: &[WorkNode], pairs: &[(usize, usize)]) -> Result<Vec<Candidate>> {
    let out = pairs
        .par_iter()
        .map(|&(i, j)| candidate(nodes, i, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().flatten().collect())
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn initial_nodes(u: &PseudoObs) -> Vec<WorkNode> {
    (0..u.d())
        .map(|j| WorkNode {
            union: vec![j],
            ends: None,
            label: u.names()[j].clone(),
            data: vec![(j, Arc::new(u.column(j).to_vec()))],
        })
        .collect()
}

/// Fits the chosen candidates and turns them into the next level's nodes.
fn fit_level(
    level: usize,
    chosen: Vec<Candidate>,
    nodes: &[WorkNode],
    names: &[String],
    settings: &FitSettings,
) -> Result<(Vec<VineEdge>, Vec<WorkNode>)> {
    let mut chosen = chosen;
    // canonical order within a tree
    chosen.sort_by(|x, y| {
        let kx = (x.a.min(x.b), x.a.max(x.b), &x.conditioning);
        let ky = (y.a.min(y.b), y.a.max(y.b), &y.conditioning);
        kx.cmp(&ky)
    });
    let truncated = settings.truncated(level);
    let fitted = chosen
        .par_iter()
        .map(|c| {
            // orient so the first copula argument is the smaller variable index
            let (lo, hi, xs, ys) = if c.a < c.b {
                (c.a, c.b, nodes[c.i].series(c.a), nodes[c.j].series(c.b))
            } else {
                (c.b, c.a, nodes[c.j].series(c.b), nodes[c.i].series(c.a))
            };
            let spec = if truncated {
                BicopSpec::independence(c.tau, xs.len())
            } else {
                match select_family_with_tau(xs, ys, c.tau, &settings.selection) {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!(
                            "edge {}: falling back to independence: {e}",
                            node_label(&[lo, hi], &c.conditioning, names)
                        );
                        let mut s = BicopSpec::independence(c.tau, xs.len());
                        s.converged = false;
                        s
                    }
                }
            };
            let (hx, hy) = crate::vinefit::h_outputs(&spec, xs, ys);
            let edge = VineEdge {
                conditioned: [lo, hi],
                conditioning: c.conditioning.clone(),
                level,
                weight: c.tau.abs(),
                spec: Some(spec),
            };
            let node = WorkNode {
                union: edge.union(),
                ends: Some([c.i, c.j]),
                label: edge.label(names),
                data: vec![(lo, hx), (hi, hy)],
            };
            Ok((edge, node))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fitted.into_iter().unzip())
}

fn check_input(u: &PseudoObs) -> Result<()> {
    if u.d() < 2 {
        return Err(Error::Data(format!("a vine needs at least two variables, got {}", u.d())));
    }
    if u.n() < crate::bicop::MIN_FIT_N {
        return Err(Error::Data(format!(
            "vine estimation needs at least {} rows, got {}",
            crate::bicop::MIN_FIT_N,
            u.n()
        )));
    }
    Ok(())
}

/// Dissmann's sequential R-vine: each tree is the maximum spanning tree on
/// |tau| among proximity-admissible pairs.
pub fn build_rvine(u: &PseudoObs, settings: &FitSettings) -> Result<VineStructure> {
    check_input(u)?;
    let names = u.names().to_vec();
    let d = u.d();
    let mut nodes = initial_nodes(u);
    let mut trees = Vec::with_capacity(d - 1);
    for level in 1..d {
        let cands = candidates_for(&nodes, &all_pairs(nodes.len()))?;
        let weighted: Vec<(usize, usize, f64)> = cands.iter().map(|c| (c.i, c.j, c.tau.abs())).collect();
        let labels: Vec<&str> = nodes.iter().map(|n| n.label.as_str()).collect();
        let tree = kruskal(nodes.len(), weighted, |i, j| {
            let (x, y) = (labels[i], labels[j]);
            if x <= y {
                (x, y)
            } else {
                (y, x)
            }
        });
        if tree.len() + 1 != nodes.len() {
            return Err(Error::Structure(format!("level {level}: admissible pairs do not span the tree")));
        }
        let chosen: Vec<Candidate> = tree
            .iter()
            .map(|&(i, j)| cands.iter().find(|c| c.i == i && c.j == j).expect("chosen from candidates").clone())
            .collect();
        let (edges, next) = fit_level(level, chosen, &nodes, &names, settings)?;
        trees.push(edges);
        nodes = next;
    }
    Ok(VineStructure {
        d,
        kind: VineKind::Rvine,
        names,
        trees,
        centers: Vec::new(),
    })
}

/// C-vine: at each level the centre is the node with the largest sum of |tau|
/// to the other nodes; ties go to the lexicographically smaller label.
pub fn build_cvine(u: &PseudoObs, settings: &FitSettings) -> Result<VineStructure> {
    build_cvine_levels(u, settings, None)
}

/// C-vine limited to the first `max_levels` trees (all when `None`).
pub fn build_cvine_levels(u: &PseudoObs, settings: &FitSettings, max_levels: Option<usize>) -> Result<VineStructure> {
    check_input(u)?;
    let names = u.names().to_vec();
    let d = u.d();
    let last = max_levels.unwrap_or(d - 1).min(d - 1);
    let mut nodes = initial_nodes(u);
    let mut trees = Vec::with_capacity(last);
    let mut centers = Vec::with_capacity(last);
    for level in 1..=last {
        let cands = candidates_for(&nodes, &all_pairs(nodes.len()))?;
        let k = nodes.len();
        let mut score = vec![0.0; k];
        // sequential accumulation keeps the sums independent of thread count
        for c in &cands {
            score[c.i] += c.tau.abs();
            score[c.j] += c.tau.abs();
        }
        let center = (0..k)
            .filter(|&i| cands.iter().filter(|c| c.i == i || c.j == i).count() == k - 1)
            .min_by(|&x, &y| score[y].total_cmp(&score[x]).then_with(|| nodes[x].label.cmp(&nodes[y].label)))
            .ok_or_else(|| Error::Structure(format!("level {level}: no admissible star centre")))?;
        let chosen: Vec<Candidate> = cands.iter().filter(|c| c.i == center || c.j == center).cloned().collect();
        // the variable the centre contributes to every star edge
        let variable = {
            let c = &chosen[0];
            if c.i == center {
                c.a
            } else {
                c.b
            }
        };
        let mut neighbors: Vec<(usize, f64)> = chosen
            .iter()
            .map(|c| (if c.i == center { c.b } else { c.a }, c.tau))
            .collect();
        neighbors.sort_by_key(|n| n.0);
        centers.push(CvineCenter {
            level,
            variable,
            node: nodes[center].label.clone(),
            score: score[center],
            neighbors,
        });
        let (edges, next) = fit_level(level, chosen, &nodes, &names, settings)?;
        trees.push(edges);
        nodes = next;
    }
    Ok(VineStructure {
        d,
        kind: VineKind::Cvine,
        names,
        trees,
        centers,
    })
}

/// D-vine on the given variable order.
pub fn build_dvine(u: &PseudoObs, order: &[usize], settings: &FitSettings) -> Result<VineStructure> {
    check_input(u)?;
    let d = u.d();
    let mut seen = vec![false; d];
    if order.len() != d || order.iter().any(|&v| v >= d || std::mem::replace(&mut seen[v], true)) {
        return Err(Error::Structure(format!("order {order:?} is not a permutation of 0..{d}")));
    }
    let names = u.names().to_vec();
    let base = initial_nodes(u);
    let mut nodes: Vec<WorkNode> = order.iter().map(|&v| base[v].clone()).collect();
    let mut trees = Vec::with_capacity(d - 1);
    for level in 1..d {
        let pairs: Vec<(usize, usize)> = (0..nodes.len() - 1).map(|i| (i, i + 1)).collect();
        let cands = candidates_for(&nodes, &pairs)?;
        if cands.len() != pairs.len() {
            return Err(Error::Structure(format!("level {level}: path neighbours are not admissible")));
        }
        let (edges, next) = fit_level(level, cands, &nodes, &names, settings)?;
        trees.push(edges);
        // keep path order for the next level: fit_level sorted edges canonically
        let mut next = next;
        next.sort_by_key(|n| n.ends.map(|e| e[0].min(e[1])));
        nodes = next;
    }
    Ok(VineStructure {
        d,
        kind: VineKind::Dvine,
        names,
        trees,
        centers: Vec::new(),
    })
}

/// Result of [`validate_structure`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub violations: Vec<String>,
}

impl Diagnostics {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks tree sizes, edge bookkeeping, acyclicity and connectivity, the
/// proximity condition and the C/D shape constraints.
pub fn validate_structure(s: &VineStructure) -> Diagnostics {
    let mut v = Vec::new();
    let d = s.d;
    let name = |e: &VineEdge| {
        if e.conditioned.iter().chain(&e.conditioning).all(|&x| x < s.names.len()) {
            e.label(&s.names)
        } else {
            format!("{:?}|{:?}", e.conditioned, e.conditioning)
        }
    };
    if s.names.len() != d {
        v.push(format!("{} names for d = {d}", s.names.len()));
    }
    if s.trees.len() != d.saturating_sub(1) {
        v.push(format!("expected {} trees, found {}", d.saturating_sub(1), s.trees.len()));
    }
    // union -> index of the node in the previous level
    let mut prev: HashMap<Vec<usize>, usize> = (0..d).map(|j| (vec![j], j)).collect();
    let mut prev_ends: Vec<Option<[usize; 2]>> = vec![None; d];
    for (m0, tree) in s.trees.iter().enumerate() {
        let m = m0 + 1;
        let n_nodes = d + 1 - m;
        if tree.len() != d - m {
            v.push(format!("tree {m} has {} edges, expected {}", tree.len(), d - m));
        }
        let mut ds = DisjointSet::new(n_nodes.max(prev.len()));
        let mut next = HashMap::new();
        let mut next_ends = Vec::new();
        for e in tree {
            let [a, b] = e.conditioned;
            let bad_index = a >= d || b >= d || e.conditioning.iter().any(|&x| x >= d);
            if bad_index || a >= b || e.conditioning.contains(&a) || e.conditioning.contains(&b) {
                v.push(format!("tree {m}: malformed edge {}", name(e)));
                continue;
            }
            if e.level != m || e.conditioning.len() != m - 1 || e.conditioning.windows(2).any(|w| w[0] >= w[1]) {
                v.push(format!("tree {m}: edge {} has inconsistent level or conditioning set", name(e)));
                continue;
            }
            let key = |x: usize| {
                let mut k = e.conditioning.clone();
                k.push(x);
                k.sort_unstable();
                k
            };
            let (Some(&pa), Some(&pb)) = (prev.get(&key(a)), prev.get(&key(b))) else {
                v.push(format!(
                    "tree {m}: edge {} violates the proximity condition: its parent nodes are not in tree {}",
                    name(e),
                    m - 1
                ));
                continue;
            };
            if let (Some(ea), Some(eb)) = (prev_ends[pa], prev_ends[pb]) {
                if !ea.iter().any(|x| eb.contains(x)) {
                    v.push(format!("tree {m}: edge {} violates the proximity condition", name(e)));
                }
            }
            if !ds.union(pa, pb) {
                v.push(format!("tree {m}: edge {} closes a cycle", name(e)));
            }
            if next.insert(e.union(), next_ends.len()).is_some() {
                v.push(format!("tree {m}: duplicate edge {}", name(e)));
            }
            next_ends.push(Some([pa, pb]));
        }
        prev = next;
        prev_ends = next_ends;
    }
    match s.kind {
        VineKind::Cvine => {
            for (m0, tree) in s.trees.iter().enumerate() {
                if tree.len() < 2 {
                    continue;
                }
                let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
                for e in tree {
                    for x in e.conditioned {
                        let mut k = e.conditioning.clone();
                        k.push(x);
                        k.sort_unstable();
                        *count.entry(k).or_insert(0) += 1;
                    }
                }
                if !count.values().any(|&c| c == tree.len()) {
                    v.push(format!("tree {} is not a star", m0 + 1));
                }
            }
        }
        VineKind::Dvine => {
            if let Some(deg) = s.first_tree_degrees().iter().position(|&k| k > 2) {
                v.push(format!("first tree is not a path: {} has degree > 2", s.names.get(deg).map_or("?", |n| n)));
            }
        }
        VineKind::Rvine => {}
    }
    Diagnostics { violations: v }
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    conditioned: [usize; 2],
    conditioning: Vec<usize>,
    level: usize,
    weight: f64,
    #[serde(flatten)]
    spec: Option<BicopSpec>,
}

#[derive(Serialize, Deserialize)]
struct RawStructure {
    kind: VineKind,
    d: usize,
    names: Vec<String>,
    trees: Vec<Vec<RawEdge>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    centers: Vec<CvineCenter>,
}

impl Serialize for VineStructure {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        RawStructure {
            kind: self.kind,
            d: self.d,
            names: self.names.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|e| RawEdge {
                            conditioned: e.conditioned,
                            conditioning: e.conditioning.clone(),
                            level: e.level,
                            weight: e.weight,
                            spec: e.spec.clone(),
                        })
                        .collect()
                })
                .collect(),
            centers: self.centers.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for VineStructure {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawStructure::deserialize(de)?;
        let s = VineStructure {
            d: raw.d,
            kind: raw.kind,
            names: raw.names,
            trees: raw
                .trees
                .into_iter()
                .map(|t| {
                    t.into_iter()
                        .map(|e| VineEdge {
                            conditioned: e.conditioned,
                            conditioning: e.conditioning,
                            level: e.level,
                            weight: e.weight,
                            spec: e.spec,
                        })
                        .collect()
                })
                .collect(),
            centers: raw.centers,
        };
        let diag = validate_structure(&s);
        if !diag.ok() {
            return Err(serde::de::Error::custom(format!(
                "invalid vine structure: {}",
                diag.violations.join("; ")
            )));
        }
        Ok(s)
    }
}

/// Builds an unfitted structure from explicit trees of `(a, b, conditioning)`
/// triples, for hand-specified models and tests.
pub fn structure_from_edges(
    names: Vec<String>,
    kind: VineKind,
    trees: Vec<Vec<(usize, usize, Vec<usize>)>>,
) -> Result<VineStructure> {
    let d = names.len();
    let trees = trees
        .into_iter()
        .enumerate()
        .map(|(m0, t)| {
            t.into_iter()
                .map(|(a, b, mut cond)| {
                    cond.sort_unstable();
                    VineEdge {
                        conditioned: [a.min(b), a.max(b)],
                        conditioning: cond,
                        level: m0 + 1,
                        weight: 0.0,
                        spec: None,
                    }
                })
                .collect()
        })
        .collect();
    let s = VineStructure {
        d,
        kind,
        names,
        trees,
        centers: Vec::new(),
    };
    let diag = validate_structure(&s);
    if diag.ok() {
        Ok(s)
    } else {
        Err(Error::Structure(diag.violations.join("; ")))
    }
}

/// Attaches copulas to every edge, in tree order.
pub fn with_copulas(mut s: VineStructure, specs: Vec<BicopSpec>) -> Result<VineStructure> {
    if specs.len() != s.n_edges() {
        return Err(Error::Structure(format!("{} copulas for {} edges", specs.len(), s.n_edges())));
    }
    for (e, spec) in s.trees.iter_mut().flatten().zip(specs) {
        e.weight = spec.implied_tau().abs();
        e.spec = Some(spec);
    }
    Ok(s)
}

/// Argument order helpers for the sampler.
pub(crate) fn first_arg(e: &VineEdge, var: usize) -> bool {
    e.conditioned[0] == var
}

pub(crate) fn cond_on_partner(e: &VineEdge, var: usize) -> CondOn {
    // h(u_a | u_b) is dC/dv when `var` is the first argument
    if first_arg(e, var) {
        CondOn::Second
    } else {
        CondOn::First
    }
}

#[cfg(test)]
mod tests;
