//! Structure search over a decomposed score table.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dag;
use crate::error::{Error, Result};
use crate::par;
use crate::scoring::{FamilyScore, ParentSetScoreTable};

pub const DP_MAX_NODES: usize = 24;
pub const BRUTE_MAX_NODES: usize = 5;

/// Improvements at or below this are treated as ties by hill climbing.
const MIN_IMPROVEMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SearchMethod {
    Dp,
    Greedy,
    Brute,
}

impl SearchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMethod::Dp => "dp",
            SearchMethod::Greedy => "greedy",
            SearchMethod::Brute => "brute",
        }
    }
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SearchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp" => Ok(SearchMethod::Dp),
            "greedy" => Ok(SearchMethod::Greedy),
            "brute" => Ok(SearchMethod::Brute),
            _ => Err(Error::InvalidArgument(format!("unknown search method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub dag: Dag,
    pub score: f64,
    pub method: SearchMethod,
    pub runtime_ms: f64,
}

fn finish(scores: &ParentSetScoreTable, dag: Dag, method: SearchMethod, start: Instant) -> Result<SearchResult> {
    let score = scores.score_of(&dag)?;
    Ok(SearchResult {
        dag,
        score,
        method,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn search(scores: &ParentSetScoreTable, method: SearchMethod, restarts: usize, seed: u64) -> Result<SearchResult> {
    match method {
        SearchMethod::Dp => exact_dp(scores),
        SearchMethod::Greedy => greedy_hill_climb(scores, restarts, seed),
        SearchMethod::Brute => brute_force(scores),
    }
}

/// Families of one node sorted best-first; ties keep the table's
/// smaller-then-lexicographic order.
fn ranked_families(scores: &ParentSetScoreTable, i: usize) -> Vec<FamilyScore> {
    let mut fams = scores.families(i).to_vec();
    fams.sort_by(|a, b| b.score.total_cmp(&a.score));
    fams
}

fn best_within(ranked: &[FamilyScore], allowed: u64) -> Option<&FamilyScore> {
    ranked.iter().find(|f| f.parents & !allowed == 0)
}

/// Subset dynamic program: `best[W]` is the optimum over DAGs on `W` whose
/// parents lie in `W`, built by choosing the best sink of each subset.
pub fn exact_dp(scores: &ParentSetScoreTable) -> Result<SearchResult> {
    let start = Instant::now();
    let n = scores.n();
    if n > DP_MAX_NODES {
        return Err(Error::TooManyNodes(n, DP_MAX_NODES));
    }
    let ranked: Vec<Vec<FamilyScore>> = (0..n).map(|i| ranked_families(scores, i)).collect();
    let full = (1usize << n) - 1;
    let mut best = vec![f64::NEG_INFINITY; full + 1];
    let mut sink = vec![u8::MAX; full + 1];
    best[0] = 0.0;
    for w in 1..=full {
        for i in 0..n {
            if w & (1 << i) == 0 {
                continue;
            }
            let rest = w & !(1 << i);
            if best[rest] == f64::NEG_INFINITY {
                continue;
            }
            if let Some(f) = best_within(&ranked[i], rest as u64) {
                let s = best[rest] + f.score;
                if s > best[w] {
                    best[w] = s;
                    sink[w] = i as u8;
                }
            }
        }
    }
    if best[full] == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("score table admits no DAG".into()));
    }
    let mut parents = vec![Vec::new(); n];
    let mut w = full;
    while w != 0 {
        let i = sink[w] as usize;
        let rest = w & !(1 << i);
        let f = best_within(&ranked[i], rest as u64).expect("sink chosen with a family");
        parents[i] = (0..n).filter(|&p| f.parents & (1 << p) != 0).collect();
        w = rest;
    }
    finish(scores, Dag::from_parent_sets(parents)?, SearchMethod::Dp, start)
}

/// Exhaustive search over all DAGs whose in-degree fits the table.
pub fn brute_force(scores: &ParentSetScoreTable) -> Result<SearchResult> {
    let start = Instant::now();
    let n = scores.n();
    if n > BRUTE_MAX_NODES {
        return Err(Error::TooManyNodes(n, BRUTE_MAX_NODES));
    }
    let mut best: Option<(f64, Vec<(usize, usize)>, Dag)> = None;
    for dag in Dag::enumerate(n, Some(scores.max_parents())) {
        let Ok(s) = scores.score_of(&dag) else { continue };
        let edges = dag.edges();
        let better = match &best {
            None => true,
            Some((bs, be, _)) => s > *bs || (s == *bs && edges < *be),
        };
        if better {
            best = Some((s, edges, dag));
        }
    }
    let (_, _, dag) = best.ok_or_else(|| Error::InvalidArgument("score table admits no DAG".into()))?;
    finish(scores, dag, SearchMethod::Brute, start)
}

struct Climber<'a> {
    scores: &'a ParentSetScoreTable,
    n: usize,
    d: usize,
    masks: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

impl Climber<'_> {
    fn family(&self, i: usize, mask: u64) -> Option<f64> {
        self.scores.family_score(i, mask)
    }

    /// `desc[v]`: nodes reachable from `v` by a nonempty directed path.
    fn descendants(&self) -> Vec<u64> {
        let dag = Dag::from_parent_sets(
            self.masks
                .iter()
                .map(|&m| (0..self.n).filter(|&p| m & (1 << p) != 0).collect())
                .collect(),
        )
        .expect("climber keeps the graph acyclic");
        let order = dag.topological_order().expect("acyclic");
        let mut desc = vec![0u64; self.n];
        for &v in order.iter().rev() {
            for c in 0..self.n {
                if self.masks[c] & (1 << v) != 0 {
                    desc[v] |= (1 << c) | desc[c];
                }
            }
        }
        desc
    }

    fn best_move(&self) -> Option<(Move, f64)> {
        let desc = self.descendants();
        let current: Vec<f64> = (0..self.n)
            .map(|i| self.family(i, self.masks[i]).expect("current families are listed"))
            .collect();
        let mut best: Option<(Move, f64)> = None;
        let mut consider = |m: Move, delta: f64| {
            if delta > MIN_IMPROVEMENT && best.is_none_or(|(_, b)| delta > b) {
                best = Some((m, delta));
            }
        };
        for p in 0..self.n {
            for c in 0..self.n {
                if p == c {
                    continue;
                }
                let bit_p = 1u64 << p;
                let bit_c = 1u64 << c;
                if self.masks[c] & bit_p != 0 {
                    let without = self.masks[c] & !bit_p;
                    if let Some(s) = self.family(c, without) {
                        consider(Move::Delete(p, c), s - current[c]);
                    }
                    // Reversal is legal unless another path p -> ... -> c exists.
                    let other_path = (0..self.n)
                        .any(|x| x != c && self.masks[x] & bit_p != 0 && desc[x] & bit_c != 0);
                    let grown = self.masks[p] | bit_c;
                    if !other_path && (grown.count_ones() as usize) <= self.d {
                        if let (Some(sc), Some(sp)) = (self.family(c, without), self.family(p, grown)) {
                            consider(Move::Reverse(p, c), sc - current[c] + sp - current[p]);
                        }
                    }
                } else if self.masks[p] & bit_c == 0 {
                    let grown = self.masks[c] | bit_p;
                    if desc[c] & bit_p == 0 && (grown.count_ones() as usize) <= self.d {
                        if let Some(s) = self.family(c, grown) {
                            consider(Move::Add(p, c), s - current[c]);
                        }
                    }
                }
            }
        }
        best
    }

    fn apply(&mut self, m: Move) {
        match m {
            Move::Add(p, c) => self.masks[c] |= 1 << p,
            Move::Delete(p, c) => self.masks[c] &= !(1 << p),
            Move::Reverse(p, c) => {
                self.masks[c] &= !(1 << p);
                self.masks[p] |= 1 << c;
            }
        }
    }

    fn climb(&mut self) {
        while let Some((m, _)) = self.best_move() {
            self.apply(m);
        }
    }
}

fn masks_of(dag: &Dag) -> Vec<u64> {
    (0..dag.n()).map(|i| dag.parent_mask(i)).collect()
}

/// Steepest-ascent hill climbing over edge additions, deletions and
/// reversals. Restart 0 starts from the empty graph, the rest from random
/// DAGs; the best local optimum wins, earlier restarts on ties.
pub fn greedy_hill_climb(scores: &ParentSetScoreTable, restarts: usize, seed: u64) -> Result<SearchResult> {
    let start = Instant::now();
    let n = scores.n();
    let d = scores.max_parents();
    let empty = Dag::empty(n);
    scores.score_of(&empty).map_err(|_| {
        Error::InvalidArgument("hill climbing needs every empty parent set in the table".into())
    })?;
    let runs = par::map_range(restarts.max(1), |r| {
        let init = if r == 0 {
            empty.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(par::mix_seed(seed, r as u64, 0));
            let g = Dag::random(n, d, &mut rng);
            if scores.score_of(&g).is_ok() {
                g
            } else {
                empty.clone()
            }
        };
        let mut climber = Climber {
            scores,
            n,
            d,
            masks: masks_of(&init),
        };
        climber.climb();
        let dag = Dag::from_parent_sets(
            climber
                .masks
                .iter()
                .map(|&m| (0..n).filter(|&p| m & (1 << p) != 0).collect())
                .collect(),
        )
        .expect("acyclic");
        let s = scores.score_of(&dag).expect("listed families");
        (s, dag)
    });
    let mut best = &runs[0];
    for run in &runs[1..] {
        if run.0 > best.0 {
            best = run;
        }
    }
    finish(scores, best.1.clone(), SearchMethod::Greedy, start)
}
