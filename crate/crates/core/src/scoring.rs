//! Log-likelihood, BIC, sparsity boosts and the decomposed parent-set scores.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::beta::BetaTable;
use crate::data::{self, BinaryDataset, Dag, Network};
use crate::dist::{self, JointDist2x2};
use crate::error::{Error, Result};
use crate::par;

/// Which conditioning sets may certify a missing edge `(A, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepsetMode {
    /// Every `S` outside `{A, B}` with `|S| <= d`; independent of the graph.
    BoundedSize,
    /// `{Pa(A) \ B, Pa(B) \ A}` in the graph being scored.
    ParentBased,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub eta: f64,
    /// Complexity weight: `psi1(N) = kappa ln N`.
    pub kappa: f64,
    /// Weight on the sum of sparsity boosts.
    pub psi2: f64,
    /// Maximum in-degree and maximum separating-set size.
    pub d: usize,
    pub sepset_mode: SepsetMode,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            kappa: 0.5,
            psi2: 1.0,
            d: 2,
            sepset_mode: SepsetMode::BoundedSize,
        }
    }
}

impl ScoreConfig {
    /// Plain BIC/MDL with the same `kappa` and `d`.
    pub fn bic(self) -> Self {
        Self { psi2: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.kappa > 0.0 && self.psi2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need eta > 0, kappa > 0, psi2 >= 0; got {self:?}"
            )));
        }
        Ok(())
    }

    fn psi1(&self, n_rows: usize) -> f64 {
        self.kappa * (n_rows as f64).ln()
    }
}

fn xlogx_ratio(count: u64, total: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * (count as f64 / total as f64).ln()
    }
}

/// Maximized log-likelihood of one family.
pub fn family_log_likelihood(data: &BinaryDataset, i: usize, parents: &[usize]) -> f64 {
    data::family_counts(data, i, parents)
        .iter()
        .map(|&[n0, n1]| xlogx_ratio(n0, n0 + n1) + xlogx_ratio(n1, n0 + n1))
        .sum()
}

pub fn log_likelihood(data: &BinaryDataset, dag: &Dag) -> f64 {
    (0..dag.n())
        .map(|i| family_log_likelihood(data, i, dag.parents(i)))
        .sum()
}

/// Free parameters of a binary network: one per parent assignment.
pub fn dim(dag: &Dag) -> usize {
    (0..dag.n()).map(|i| 1usize << dag.parents(i).len()).sum()
}

/// `LL - psi1 * dim`.
pub fn bic_score(data: &BinaryDataset, dag: &Dag, psi1: f64) -> f64 {
    log_likelihood(data, dag) - psi1 * dim(dag) as f64
}

/// All subsets of `V \ {a, b}` with at most `d` elements, by size then lexicographically.
pub fn bounded_separating_sets(n: usize, a: usize, b: usize, d: usize) -> Vec<Vec<usize>> {
    let pool: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..d.min(pool.len()) {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l| pool.iter().position(|&p| p == l).unwrap() + 1);
            for &v in &pool[start..] {
                let mut t = s.clone();
                t.push(v);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// `max_S min_s -ln beta(N_s, MI(p(A, B | s)))`; unobserved assignments give 0.
fn boost_over_sets(
    data: &BinaryDataset,
    a: usize,
    b: usize,
    sets: &[Vec<usize>],
    table: &BetaTable,
) -> f64 {
    sets.iter()
        .map(|s| {
            data::conditional_counts(data, a, b, s)
                .into_iter()
                .map(|counts| {
                    let n_s: u64 = counts.iter().sum();
                    if n_s == 0 {
                        0.0
                    } else {
                        table.query_neg_ln_beta(n_s as usize, dist::mutual_information_counts(counts))
                    }
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Sparsity boost of the unordered pair `{a, b}` under `dag`.
pub fn edge_boost(
    data: &BinaryDataset,
    a: usize,
    b: usize,
    table: &BetaTable,
    cfg: &ScoreConfig,
    dag: &Dag,
) -> f64 {
    let sets = match cfg.sepset_mode {
        SepsetMode::BoundedSize => bounded_separating_sets(data.n_vars(), a, b, cfg.d),
        SepsetMode::ParentBased => {
            let pa: Vec<usize> = dag.parents(a).iter().copied().filter(|&v| v != b).collect();
            let pb: Vec<usize> = dag.parents(b).iter().copied().filter(|&v| v != a).collect();
            if pa == pb {
                vec![pa]
            } else {
                vec![pa, pb]
            }
        }
    };
    boost_over_sets(data, a, b, &sets, table)
}

/// Graph-independent boosts of every unordered pair (bounded-size separating sets).
#[derive(Debug, Clone, PartialEq)]
pub struct PairBoosts {
    n: usize,
    values: Vec<f64>,
}

impl PairBoosts {
    pub fn compute(data: &BinaryDataset, table: &BetaTable, d: usize) -> Self {
        let n = data.n_vars();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let boosts = par::map(&pairs, |&(a, b)| {
            boost_over_sets(data, a, b, &bounded_separating_sets(n, a, b, d), table)
        });
        let mut values = vec![0.0; n * n];
        for (&(a, b), v) in pairs.iter().zip(boosts) {
            values[a * n + b] = v;
            values[b * n + a] = v;
        }
        Self { n, values }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sum over unordered pairs.
    pub fn total(&self) -> f64 {
        (0..self.n)
            .flat_map(|a| ((a + 1)..self.n).map(move |b| (a, b)))
            .map(|(a, b)| self.get(a, b))
            .sum()
    }
}

/// `LL - kappa ln N |G| + psi2 * sum of boosts over nonadjacent pairs`.
pub fn total_score(data: &BinaryDataset, dag: &Dag, table: &BetaTable, cfg: &ScoreConfig) -> Result<f64> {
    cfg.validate()?;
    if dag.n() != data.n_vars() {
        return Err(Error::InvalidArgument("graph and data disagree on variable count".into()));
    }
    dag.check_in_degree(cfg.d)?;
    let bic = bic_score(data, dag, cfg.psi1(data.n_rows()));
    if cfg.psi2 == 0.0 {
        return Ok(bic);
    }
    let n = dag.n();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .filter(|&(a, b)| !dag.adjacent(a, b))
        .collect();
    let boosts: f64 = par::map(&pairs, |&(a, b)| edge_boost(data, a, b, table, cfg, dag))
        .into_iter()
        .sum();
    Ok(bic + cfg.psi2 * boosts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyScore {
    /// Bitmask of parents.
    pub parents: u64,
    pub score: f64,
}

/// Per-(node, parent set) scores whose sum plus `constant` equals the total
/// score of any DAG whose families are all listed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentSetScoreTable {
    names: Vec<String>,
    constant: f64,
    /// Per node, ordered by parent-set size then lexicographically.
    families: Vec<Vec<FamilyScore>>,
    index: Vec<HashMap<u64, usize>>,
}

fn mask_members(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| mask & (1 << b) != 0).collect()
}

fn family_order(a: u64, b: u64) -> std::cmp::Ordering {
    a.count_ones()
        .cmp(&b.count_ones())
        .then_with(|| mask_members(a).cmp(&mask_members(b)))
}

impl ParentSetScoreTable {
    pub fn new(names: Vec<String>, constant: f64, families: Vec<Vec<FamilyScore>>) -> Result<Self> {
        let n = families.len();
        if names.len() != n {
            return Err(Error::InvalidArgument("one name per node required".into()));
        }
        if n > 64 {
            return Err(Error::TooManyNodes(n, 64));
        }
        let mut families = families;
        let mut index = Vec::with_capacity(n);
        for (i, fams) in families.iter_mut().enumerate() {
            fams.sort_by(|x, y| family_order(x.parents, y.parents));
            let mut map = HashMap::with_capacity(fams.len());
            for (k, f) in fams.iter().enumerate() {
                if f.parents & (1 << i) != 0 || (n < 64 && f.parents >> n != 0) {
                    return Err(Error::InvalidArgument(format!(
                        "node {i} has an invalid parent set"
                    )));
                }
                if !f.score.is_finite() {
                    return Err(Error::InvalidArgument(format!("node {i} has a non-finite score")));
                }
                if map.insert(f.parents, k).is_some() {
                    return Err(Error::InvalidArgument(format!("node {i} lists a parent set twice")));
                }
            }
            index.push(map);
        }
        Ok(Self {
            names,
            constant,
            families,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.families.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn families(&self, i: usize) -> &[FamilyScore] {
        &self.families[i]
    }

    pub fn family_score(&self, i: usize, parents: u64) -> Option<f64> {
        self.index[i].get(&parents).map(|&k| self.families[i][k].score)
    }

    /// Largest listed parent-set size.
    pub fn max_parents(&self) -> usize {
        self.families
            .iter()
            .flatten()
            .map(|f| f.parents.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Sum of family scores plus the constant; errors when a family is not listed.
    pub fn score_of(&self, dag: &Dag) -> Result<f64> {
        if dag.n() != self.n() {
            return Err(Error::InvalidArgument("graph size does not match score table".into()));
        }
        let mut total = 0.0;
        for i in 0..dag.n() {
            total += self.family_score(i, dag.parent_mask(i)).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "parent set {:?} of node {i} is not in the score table",
                    dag.parents(i)
                ))
            })?;
        }
        Ok(total + self.constant)
    }

    /// Text form: `n <count> constant <value>`, `variables <names...>`, then one
    /// line `<node> <k> <p1> ... <pk> <score>` per family.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n {} constant {:?}", self.n(), self.constant);
        let _ = writeln!(s, "variables {}", self.names.join(" "));
        for (i, fams) in self.families.iter().enumerate() {
            for f in fams {
                let ps = mask_members(f.parents);
                let _ = write!(s, "{i} {}", ps.len());
                for p in ps {
                    let _ = write!(s, " {p}");
                }
                let _ = writeln!(s, " {:?}", f.score);
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse(format!("line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or_else(|| Error::Parse("empty score file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "n" || h[2] != "constant" {
            return Err(bad(ln, "expected `n <count> constant <value>`"));
        }
        let n: usize = h[1].parse().map_err(|_| bad(ln, "bad node count"))?;
        let constant: f64 = h[3].parse().map_err(|_| bad(ln, "bad constant"))?;
        let mut names = data::default_names(n);
        let mut families = vec![Vec::new(); n];
        for (ln, line) in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok[0] == "variables" {
                if tok.len() != n + 1 {
                    return Err(bad(ln, "wrong number of variable names"));
                }
                names = tok[1..].iter().map(|s| s.to_string()).collect();
                continue;
            }
            let num = |k: usize| -> Result<usize> {
                tok.get(k)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(ln, "expected an integer"))
            };
            let node = num(0)?;
            let k = num(1)?;
            if node >= n || tok.len() != k + 3 {
                return Err(bad(ln, "malformed family line"));
            }
            let mut mask = 0u64;
            for j in 0..k {
                let p = num(2 + j)?;
                if p >= n {
                    return Err(bad(ln, "parent out of range"));
                }
                mask |= 1 << p;
            }
            let score: f64 = tok[k + 2].parse().map_err(|_| bad(ln, "bad score"))?;
            families[node].push(FamilyScore { parents: mask, score });
        }
        Self::new(names, constant, families)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&s)
    }
}

/// All parent sets of size `<= d` drawn from `V \ {i}`, as bitmasks.
pub fn candidate_parent_sets(n: usize, i: usize, d: usize) -> Vec<u64> {
    bounded_separating_sets(n, i, i, d)
        .into_iter()
        .map(|s| s.iter().fold(0u64, |m, &p| m | (1 << p)))
        .collect()
}

/// Decomposes the score into family scores. Each boost `b_{ij}` is moved
/// into the child's family as `-psi2 * b_{ij}` for every parent `j`, and the
/// sum of all boosts becomes the constant.
pub fn build_parent_set_scores(
    data: &BinaryDataset,
    table: &BetaTable,
    cfg: &ScoreConfig,
) -> Result<ParentSetScoreTable> {
    cfg.validate()?;
    if cfg.sepset_mode != SepsetMode::BoundedSize {
        return Err(Error::InvalidArgument(
            "parent-based separating sets depend on the graph and cannot be decomposed".into(),
        ));
    }
    let n = data.n_vars();
    if n > 64 {
        return Err(Error::TooManyNodes(n, 64));
    }
    let boosts = (cfg.psi2 != 0.0).then(|| PairBoosts::compute(data, table, cfg.d));
    let psi1 = cfg.psi1(data.n_rows());
    let jobs: Vec<(usize, u64)> = (0..n)
        .flat_map(|i| candidate_parent_sets(n, i, cfg.d).into_iter().map(move |m| (i, m)))
        .collect();
    let scores = par::map(&jobs, |&(i, mask)| {
        let parents = mask_members(mask);
        let mut s = family_log_likelihood(data, i, &parents) - psi1 * (1u64 << parents.len()) as f64;
        if let Some(b) = &boosts {
            s -= cfg.psi2 * parents.iter().map(|&j| b.get(i, j)).sum::<f64>();
        }
        s
    });
    let mut families = vec![Vec::new(); n];
    for (&(i, mask), score) in jobs.iter().zip(scores) {
        families[i].push(FamilyScore { parents: mask, score });
    }
    let constant = boosts.map_or(0.0, |b| cfg.psi2 * b.total());
    ParentSetScoreTable::new(data.names().to_vec(), constant, families)
}

/// Minimal conditional MI of `(A, B)` under the network's exact joint:
/// `min_S max_s MI(p(A, B | s))` over `|S| <= d`, skipping `P(S = s) = 0`.
pub fn edge_strength(net: &Network, a: usize, b: usize, d: usize) -> Result<f64> {
    let n = net.n();
    if n > 20 {
        return Err(Error::TooManyNodes(n, 20));
    }
    if a == b || a >= n || b >= n {
        return Err(Error::InvalidArgument(format!("bad pair ({a}, {b})")));
    }
    let joint = net.joint_table()?;
    let sets = bounded_separating_sets(n, a, b, d);
    let per_set = par::map(&sets, |s| {
        let mut tables = vec![[0.0f64; 4]; 1 << s.len()];
        for (state, &p) in joint.iter().enumerate() {
            let key = s
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &v)| acc | (((state >> v) & 1) << k));
            let cell = 2 * ((state >> a) & 1) + ((state >> b) & 1);
            tables[key][cell] += p;
        }
        tables
            .iter()
            .filter_map(|t| {
                let mass: f64 = t.iter().sum();
                (mass > 0.0).then(|| {
                    let p = JointDist2x2::from_array(t.map(|x| x / mass))
                        .unwrap_or_else(|_| JointDist2x2::uniform());
                    dist::mutual_information(&p)
                })
            })
            .fold(0.0, f64::max)
    });
    Ok(per_set.into_iter().fold(f64::INFINITY, f64::min))
}
