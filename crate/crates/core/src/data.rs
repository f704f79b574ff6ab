//! DAGs, logistic Bayesian networks over binary variables, datasets, and
//! contingency counts.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dist::JointDist2x2;
use crate::error::{Error, Result};

/// Directed acyclic graph stored as sorted parent lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Self {
            parents: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); n];
        for &(p, c) in edges {
            if p >= n || c >= n {
                return Err(Error::InvalidArgument(format!("edge ({p}, {c}) out of range")));
            }
            parents[c].push(p);
        }
        Self::from_parent_sets(parents)
    }

    pub fn from_parent_sets(mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = parents.len();
        for (c, ps) in parents.iter_mut().enumerate() {
            ps.sort_unstable();
            ps.dedup();
            if ps.iter().any(|&p| p == c || p >= n) {
                return Err(Error::InvalidArgument(format!(
                    "invalid parent set for node {c}: {ps:?}"
                )));
            }
        }
        let dag = Self { parents };
        if dag.topological_order().is_none() {
            return Err(Error::Cyclic);
        }
        Ok(dag)
    }

    pub fn n(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn parent_mask(&self, i: usize) -> u64 {
        self.parents[i].iter().fold(0, |m, &p| m | (1 << p))
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parents[child].binary_search(&parent).is_ok()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    /// All edges `(parent, child)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn check_in_degree(&self, bound: usize) -> Result<()> {
        match self.parents.iter().enumerate().find(|(_, p)| p.len() > bound) {
            Some((node, p)) => Err(Error::InDegree {
                node,
                degree: p.len(),
                bound,
            }),
            None => Ok(()),
        }
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&c| self.has_edge(i, c)).collect()
    }

    /// Kahn's algorithm, smallest ready index first. `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Whether `to` is reachable from `from` along directed edges.
    pub fn reachable(&self, from: usize, to: usize) -> bool {
        let n = self.n();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for &c in &children[v] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        false
    }

    pub fn add_edge(&mut self, parent: usize, child: usize) -> Result<()> {
        if parent == child || parent >= self.n() || child >= self.n() {
            return Err(Error::InvalidArgument(format!("bad edge ({parent}, {child})")));
        }
        if self.has_edge(parent, child) {
            return Ok(());
        }
        if self.reachable(child, parent) {
            return Err(Error::Cyclic);
        }
        let ps = &mut self.parents[child];
        let pos = ps.binary_search(&parent).unwrap_err();
        ps.insert(pos, parent);
        Ok(())
    }

    pub fn remove_edge(&mut self, parent: usize, child: usize) -> bool {
        match self.parents[child].binary_search(&parent) {
            Ok(pos) => {
                self.parents[child].remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn set_parents(&mut self, child: usize, parents: Vec<usize>) {
        let mut parents = parents;
        parents.sort_unstable();
        self.parents[child] = parents;
    }

    /// Every labeled DAG on `n` nodes (optionally with bounded in-degree).
    /// Exponential; intended for `n <= 5`.
    pub fn enumerate(n: usize, max_in_degree: Option<usize>) -> Vec<Dag> {
        assert!(n <= 6, "enumeration is limited to 6 nodes");
        let bound = max_in_degree.unwrap_or(n);
        // Candidate parent masks per node, excluding the node itself.
        let choices: Vec<Vec<u64>> = (0..n)
            .map(|i| {
                (0u64..(1 << n))
                    .filter(|m| m & (1 << i) == 0 && (m.count_ones() as usize) <= bound)
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        let mut current = vec![0u64; n];
        fn rec(
            i: usize,
            n: usize,
            choices: &[Vec<u64>],
            current: &mut Vec<u64>,
            out: &mut Vec<Dag>,
        ) {
            if i == n {
                if masks_acyclic(current) {
                    out.push(Dag::from_masks(current));
                }
                return;
            }
            for &m in &choices[i] {
                current[i] = m;
                rec(i + 1, n, choices, current, out);
            }
        }
        rec(0, n, &choices, &mut current, &mut out);
        out
    }

    pub(crate) fn from_masks(masks: &[u64]) -> Dag {
        Dag {
            parents: masks
                .iter()
                .map(|&m| (0..64).filter(|b| m & (1 << b) != 0).collect())
                .collect(),
        }
    }

    /// Random DAG: a uniform node order, then each node takes a uniformly
    /// drawn number of parents in `0..=min(d, #predecessors)`, chosen
    /// uniformly without replacement among its predecessors.
    pub fn random<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Dag {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut parents = vec![Vec::new(); n];
        for (k, &node) in order.iter().enumerate() {
            let m = rng.random_range(0..=d.min(k));
            parents[node] = index::sample(rng, k, m)
                .into_iter()
                .map(|j| order[j])
                .collect();
            parents[node].sort_unstable();
        }
        Dag { parents }
    }
}

/// Acyclicity of a graph given as parent bitmasks (repeated sink removal).
pub(crate) fn masks_acyclic(masks: &[u64]) -> bool {
    let n = masks.len();
    let mut remaining: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };
    loop {
        if remaining == 0 {
            return true;
        }
        // Strip nodes with no remaining parents.
        let mut removed = false;
        for i in 0..n {
            if remaining & (1 << i) != 0 && masks[i] & remaining == 0 {
                remaining &= !(1 << i);
                removed = true;
            }
        }
        if !removed {
            return false;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A DAG with logistic conditionals
/// `P(X_i = 1 | x_pa) = sigmoid(theta_i . x_pa + u_i)`, parent values as raw bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    names: Vec<String>,
    dag: Dag,
    /// Aligned with `dag.parents(i)`.
    theta: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Network {
    pub fn new(names: Vec<String>, dag: Dag, theta: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let n = dag.n();
        if names.len() != n || theta.len() != n || bias.len() != n {
            return Err(Error::InvalidArgument(
                "names, weights and biases must match the node count".into(),
            ));
        }
        for i in 0..n {
            if theta[i].len() != dag.parents(i).len() {
                return Err(Error::InvalidArgument(format!(
                    "node {i} needs one weight per parent"
                )));
            }
        }
        Ok(Self {
            names,
            dag,
            theta,
            bias,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn n(&self) -> usize {
        self.dag.n()
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.theta[i]
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.bias[i]
    }

    /// `P(X_i = 1)` given a full assignment (only the parents are read).
    pub fn prob_one(&self, i: usize, x: &[u8]) -> f64 {
        let z = self.dag.parents(i)
            .iter()
            .zip(&self.theta[i])
            .fold(self.bias[i], |z, (&p, &w)| z + w * x[p] as f64);
        sigmoid(z)
    }

    /// Probability of every joint state; state bit `k` is variable `k`.
    pub fn joint_table(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > 20 {
            return Err(Error::TooManyNodes(n, 20));
        }
        let mut x = vec![0u8; n];
        Ok((0..1usize << n)
            .map(|state| {
                for (k, v) in x.iter_mut().enumerate() {
                    *v = ((state >> k) & 1) as u8;
                }
                (0..n)
                    .map(|i| {
                        let p1 = self.prob_one(i, &x);
                        if x[i] == 1 {
                            p1
                        } else {
                            1.0 - p1
                        }
                    })
                    .product()
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = NetworkDoc {
            variables: self.names.clone(),
            edges: edge_names(&self.names, &self.dag),
            cpds: Some(
                (0..self.n())
                    .map(|i| {
                        let theta = self.dag.parents(i)
                            .iter()
                            .zip(&self.theta[i])
                            .map(|(&p, &w)| (self.names[p].clone(), w))
                            .collect();
                        (self.names[i].clone(), CpdDoc { theta, u: self.bias[i] })
                    })
                    .collect(),
            ),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(s)?;
        let dag = doc.dag()?;
        let cpds = doc
            .cpds
            .as_ref()
            .ok_or_else(|| Error::Parse("network file has no cpds".into()))?;
        let mut theta = Vec::with_capacity(dag.n());
        let mut bias = Vec::with_capacity(dag.n());
        for (i, name) in doc.variables.iter().enumerate() {
            let cpd = cpds
                .get(name)
                .ok_or_else(|| Error::Parse(format!("missing cpd for {name}")))?;
            let w = dag.parents(i)
                .iter()
                .map(|&p| {
                    cpd.theta.get(&doc.variables[p]).copied().ok_or_else(|| {
                        Error::Parse(format!("missing weight {} -> {name}", doc.variables[p]))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if cpd.theta.len() != w.len() {
                return Err(Error::Parse(format!("{name} has weights for non-parents")));
            }
            theta.push(w);
            bias.push(cpd.u);
        }
        Network::new(doc.variables, dag, theta, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CpdDoc {
    theta: BTreeMap<String, f64>,
    u: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkDoc {
    variables: Vec<String>,
    edges: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cpds: Option<BTreeMap<String, CpdDoc>>,
}

impl NetworkDoc {
    fn dag(&self) -> Result<Dag> {
        let idx: BTreeMap<&str, usize> = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        if idx.len() != self.variables.len() {
            return Err(Error::Parse("duplicate variable names".into()));
        }
        let edges = self
            .edges
            .iter()
            .map(|[p, c]| match (idx.get(p.as_str()), idx.get(c.as_str())) {
                (Some(&p), Some(&c)) => Ok((p, c)),
                _ => Err(Error::Parse(format!("edge {p} -> {c} names an unknown variable"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Dag::from_edges(self.variables.len(), &edges)
    }
}

fn edge_names(names: &[String], dag: &Dag) -> Vec<[String; 2]> {
    dag.edges()
        .into_iter()
        .map(|(p, c)| [names[p].clone(), names[c].clone()])
        .collect()
}

/// `{variables, edges}` document, the structure part of a network file.
pub fn structure_to_json(names: &[String], dag: &Dag) -> Result<String> {
    let doc = NetworkDoc {
        variables: names.to_vec(),
        edges: edge_names(names, dag),
        cpds: None,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Reads the structure of either a full network file or a structure-only file.
pub fn structure_from_json(s: &str) -> Result<(Vec<String>, Dag)> {
    let doc: NetworkDoc = serde_json::from_str(s)?;
    let dag = doc.dag()?;
    Ok((doc.variables, dag))
}

pub fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{i}")).collect()
}

/// Random network with in-degree at most `d`; weights
/// `U[-1/2, 1/2] + N(0, 1)/4`, biases `N(0, 1)/4`.
pub fn random_network(n: usize, d: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dag = Dag::random(n, d, &mut rng);
    let noise = Normal::new(0.0, 0.25).expect("positive sd");
    let theta = (0..n)
        .map(|i| {
            dag.parents(i)
                .iter()
                .map(|_| rng.random_range(-0.5..0.5) + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    let bias = (0..n).map(|_| noise.sample(&mut rng)).collect();
    Network::new(default_names(n), dag, theta, bias).expect("consistent by construction")
}

/// Ancestral sampling of `rows` observations.
pub fn sample(net: &Network, rows: usize, seed: u64) -> BinaryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = net.dag.topological_order().expect("network DAG is acyclic");
    let n = net.n();
    let mut columns = vec![Vec::with_capacity(rows); n];
    let mut x = vec![0u8; n];
    for _ in 0..rows {
        for &i in &order {
            x[i] = (rng.random::<f64>() < net.prob_one(i, &x)) as u8;
        }
        for (col, &v) in columns.iter_mut().zip(&x) {
            col.push(v);
        }
    }
    BinaryDataset {
        names: net.names.clone(),
        n_rows: rows,
        columns,
    }
}

/// Complete binary observations, stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDataset {
    names: Vec<String>,
    n_rows: usize,
    columns: Vec<Vec<u8>>,
}

impl BinaryDataset {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<u8>]) -> Result<Self> {
        let n = names.len();
        if n == 0 || rows.is_empty() {
            return Err(Error::InvalidArgument(
                "a dataset needs at least one row and one column".into(),
            ));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "row {r} has {} cells, expected {n}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::InvalidArgument(format!("cell ({r}, {c}) is {v}")));
                }
                columns[c].push(v);
            }
        }
        Ok(Self {
            names,
            n_rows: rows.len(),
            columns,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, c: usize) -> &[u8] {
        &self.columns[c]
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.columns[col][row]
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.names)?;
        let mut rec = Vec::with_capacity(self.n_vars());
        for r in 0..self.n_rows {
            rec.clear();
            rec.extend(self.columns.iter().map(|c| if c[r] == 1 { "1" } else { "0" }));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let names: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| match s {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::Parse(format!("row {}: expected 0 or 1, got {other:?}", k + 1))),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        Self::from_rows(names, &rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Index of the assignment of `vars` in `row`, bit `k` holding `vars[k]`.
fn assignment_index(data: &BinaryDataset, vars: &[usize], row: usize) -> usize {
    vars.iter()
        .enumerate()
        .fold(0, |acc, (k, &v)| acc | ((data.columns[v][row] as usize) << k))
}

/// 2×2 counts of `(A, B)` for every assignment of `s` (indexed as in
/// [`assignment_index`]). Entry order is `n00, n01, n10, n11`.
pub fn conditional_counts(data: &BinaryDataset, a: usize, b: usize, s: &[usize]) -> Vec<[u64; 4]> {
    let mut out = vec![[0u64; 4]; 1 << s.len()];
    let (ca, cb) = (&data.columns[a], &data.columns[b]);
    for r in 0..data.n_rows {
        let k = assignment_index(data, s, r);
        out[k][2 * ca[r] as usize + cb[r] as usize] += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalJoint {
    /// No row matches the conditioning assignment.
    Empty,
    Observed { dist: JointDist2x2, count: usize },
}

/// Empirical distribution of `(A, B)` among rows with `S = s`.
pub fn conditional_joint(
    data: &BinaryDataset,
    a: usize,
    b: usize,
    s: &[usize],
    values: &[u8],
) -> Result<ConditionalJoint> {
    if a == b || s.contains(&a) || s.contains(&b) || s.len() != values.len() {
        return Err(Error::InvalidArgument(
            "A and B must be distinct and outside S, one value per S variable".into(),
        ));
    }
    let key = values
        .iter()
        .enumerate()
        .fold(0usize, |acc, (k, &v)| acc | ((v as usize & 1) << k));
    let counts = conditional_counts(data, a, b, s)[key];
    let total: u64 = counts.iter().sum();
    Ok(match JointDist2x2::from_counts(counts) {
        None => ConditionalJoint::Empty,
        Some(dist) => ConditionalJoint::Observed {
            dist,
            count: total as usize,
        },
    })
}

/// `counts[k] = [#(X_i = 0), #(X_i = 1)]` for parent assignment `k`
/// (bit `j` of `k` is the value of `parents[j]`).
pub fn family_counts(data: &BinaryDataset, i: usize, parents: &[usize]) -> Vec<[u64; 2]> {
    let mut out = vec![[0u64; 2]; 1 << parents.len()];
    let col = &data.columns[i];
    for r in 0..data.n_rows {
        out[assignment_index(data, parents, r)][col[r] as usize] += 1;
    }
    out
}
