//! Equivalence classes, structural Hamming distance and the experiment harness.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::beta::{self, BetaTable};
use crate::data::{self, Dag, Network};
use crate::error::{Error, Result};
use crate::par;
use crate::scoring::{self, ScoreConfig, SepsetMode};
use crate::search::{self, SearchMethod};

/// Partially directed graph. Undirected edges are stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pdag {
    n: usize,
    undirected: BTreeSet<(usize, usize)>,
    directed: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairState {
    Absent,
    Undirected,
    Directed(usize, usize),
}

impl Pdag {
    pub fn new(
        n: usize,
        undirected: impl IntoIterator<Item = (usize, usize)>,
        directed: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let undirected: BTreeSet<_> = undirected.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        let directed: BTreeSet<_> = directed.into_iter().collect();
        let mut seen = BTreeSet::new();
        for &(a, b) in undirected.iter().chain(&directed) {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("bad edge ({a}, {b})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidArgument(format!("more than one edge between {a} and {b}")));
            }
        }
        Ok(Self { n, undirected, directed })
    }

    /// Every edge of `dag` kept directed.
    pub fn from_dag(dag: &Dag) -> Self {
        Self {
            n: dag.n(),
            undirected: BTreeSet::new(),
            directed: dag.edges().into_iter().collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn undirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    /// Skeleton as sorted `(min, max)` pairs.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.undirected
            .iter()
            .copied()
            .chain(self.directed.iter().map(|&(a, b)| (a.min(b), a.max(b))))
            .collect()
    }

    fn state(&self, a: usize, b: usize) -> PairState {
        if self.undirected.contains(&(a.min(b), a.max(b))) {
            PairState::Undirected
        } else if self.directed.contains(&(a, b)) {
            PairState::Directed(a, b)
        } else if self.directed.contains(&(b, a)) {
            PairState::Directed(b, a)
        } else {
            PairState::Absent
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Unknown,
    Compelled,
    Reversible,
}

/// Completed PDAG of the Markov equivalence class of `dag`: compelled
/// edges directed, reversible edges undirected.
pub fn dag_to_cpdag(dag: &Dag) -> Pdag {
    let n = dag.n();
    let order = dag.topological_order().expect("Dag is acyclic");
    let mut rank = vec![0; n];
    for (k, &v) in order.iter().enumerate() {
        rank[v] = k;
    }
    let mut edges = dag.edges();
    edges.sort_by(|&(x1, y1), &(x2, y2)| rank[y1].cmp(&rank[y2]).then(rank[x2].cmp(&rank[x1])));
    let position: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let mut label = vec![Label::Unknown; edges.len()];

    while let Some(k) = label.iter().position(|&l| l == Label::Unknown) {
        let (x, y) = edges[k];
        let mut done = false;
        for &w in dag.parents(x) {
            if label[position[&(w, x)]] != Label::Compelled {
                continue;
            }
            if !dag.has_edge(w, y) {
                for &p in dag.parents(y) {
                    label[position[&(p, y)]] = Label::Compelled;
                }
                done = true;
                break;
            }
            label[position[&(w, y)]] = Label::Compelled;
        }
        if done {
            continue;
        }
        let v_structure = dag.parents(y).iter().any(|&z| z != x && !dag.has_edge(z, x) && !dag.has_edge(x, z));
        let fill = if v_structure { Label::Compelled } else { Label::Reversible };
        for &p in dag.parents(y) {
            let j = position[&(p, y)];
            if label[j] == Label::Unknown {
                label[j] = fill;
            }
        }
    }

    let mut undirected = BTreeSet::new();
    let mut directed = BTreeSet::new();
    for (&(x, y), l) in edges.iter().zip(label) {
        if l == Label::Compelled {
            directed.insert((x, y));
        } else {
            undirected.insert((x.min(y), x.max(y)));
        }
    }
    Pdag { n, undirected, directed }
}

/// One unit per unordered pair whose edge is missing in one graph or
/// differs in type or orientation.
pub fn shd(p1: &Pdag, p2: &Pdag) -> Result<usize> {
    if p1.n != p2.n {
        return Err(Error::InvalidArgument(format!(
            "graphs have {} and {} nodes",
            p1.n, p2.n
        )));
    }
    let pairs: BTreeSet<(usize, usize)> = p1.skeleton().union(&p2.skeleton()).copied().collect();
    Ok(pairs.into_iter().filter(|&(a, b)| p1.state(a, b) != p2.state(a, b)).count())
}

/// SHD between the equivalence classes of two DAGs.
pub fn dag_shd(truth: &Dag, learned: &Dag) -> Result<usize> {
    shd(&dag_to_cpdag(truth), &dag_to_cpdag(learned))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    /// A fresh random network per seed.
    Generate { n: usize, d: usize },
    /// The same network for every seed.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Bic,
    Sparsityboost,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Bic => "bic",
            ScoreKind::Sparsityboost => "sparsityboost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub score: ScoreKind,
    pub search: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSettings {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_psi2")]
    pub psi2: f64,
    #[serde(default = "default_d")]
    pub d: usize,
}

fn default_eta() -> f64 {
    ScoreConfig::default().eta
}
fn default_kappa() -> f64 {
    ScoreConfig::default().kappa
}
fn default_psi2() -> f64 {
    ScoreConfig::default().psi2
}
fn default_d() -> usize {
    ScoreConfig::default().d
}
fn default_restarts() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_mc_samples() -> usize {
    beta::DEFAULT_MC_SAMPLES
}

impl Default for ScoreSettings {
    fn default() -> Self {
        let c = ScoreConfig::default();
        Self {
            eta: c.eta,
            kappa: c.kappa,
            psi2: c.psi2,
            d: c.d,
        }
    }
}

impl ScoreSettings {
    pub fn config(&self, kind: ScoreKind) -> ScoreConfig {
        let cfg = ScoreConfig {
            eta: self.eta,
            kappa: self.kappa,
            psi2: self.psi2,
            d: self.d,
            sepset_mode: SepsetMode::BoundedSize,
        };
        match kind {
            ScoreKind::Bic => cfg.bic(),
            ScoreKind::Sparsityboost => cfg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSource,
    pub n_schedule: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub score: ScoreSettings,
    /// Precomputed table; built with the default grids when absent.
    #[serde(default)]
    pub beta_table: Option<PathBuf>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// When false, timing columns are written as 0 so reruns are byte-identical.
    #[serde(default = "default_true")]
    pub record_timings: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_schedule.is_empty() || self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("N schedule must be nonempty and ascending".into()));
        }
        if self.n_schedule[0] == 0 {
            return Err(Error::InvalidArgument("sample sizes must be positive".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if self.seeds.is_empty() || distinct.len() != self.seeds.len() {
            return Err(Error::InvalidArgument("seeds must be nonempty and distinct".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods configured".into()));
        }
        for m in &self.methods {
            m.search.parse::<SearchMethod>()?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&s)?;
        // Relative paths inside the config resolve against its directory.
        let base = path.parent().unwrap_or(Path::new("."));
        if let NetworkSource::File(p) = &mut cfg.network {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = &mut cfg.beta_table {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub sample_size: usize,
    pub score_name: ScoreKind,
    pub eta: f64,
    pub search_method: SearchMethod,
    /// `None` for failed runs.
    pub shd: Option<usize>,
    pub total_score: Option<f64>,
    pub score_build_ms: f64,
    pub search_ms: f64,
    pub total_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageRecord {
    pub sample_size: usize,
    pub score_name: ScoreKind,
    pub search_method: SearchMethod,
    pub runs: usize,
    pub errors: usize,
    pub mean_shd: Option<f64>,
    pub mean_total_score: Option<f64>,
    pub mean_score_build_ms: f64,
    pub mean_search_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<RunRecord>,
    pub averages: Vec<AverageRecord>,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Seed of the dataset drawn for `(seed, N)`; shared by every method.
fn data_seed(seed: u64, sample_size: usize) -> u64 {
    par::mix_seed(seed, sample_size as u64, 1)
}

fn network_for(cfg: &ExperimentConfig, file_net: Option<&Network>, seed: u64) -> (Network, usize) {
    match (&cfg.network, file_net) {
        (NetworkSource::Generate { n, d }, _) => (data::random_network(*n, *d, seed), *d),
        (NetworkSource::File(_), Some(net)) => (net.clone(), net.dag().max_in_degree()),
        (NetworkSource::File(_), None) => unreachable!("file network loaded up front"),
    }
}

/// Runs every `(seed, N, method)` job. Failures become error rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let file_net = match &cfg.network {
        NetworkSource::File(p) => Some(Network::load(p)?),
        NetworkSource::Generate { .. } => None,
    };
    let needs_table = cfg.methods.iter().any(|m| m.score == ScoreKind::Sparsityboost);
    let table = match (&cfg.beta_table, needs_table) {
        (Some(p), true) => {
            let t = BetaTable::load(p)?;
            if (t.eta - cfg.score.eta).abs() > 1e-12 * cfg.score.eta {
                return Err(Error::InvalidArgument(format!(
                    "beta table was built for eta = {}, config uses {}",
                    t.eta, cfg.score.eta
                )));
            }
            Some(t)
        }
        (None, true) => Some(beta::build_table(
            cfg.score.eta,
            &beta::default_n_grid(),
            &beta::default_gamma_grid(cfg.score.eta),
            cfg.mc_samples,
            0,
        )?),
        (_, false) => None,
    };
    // Stand-in for BIC-only runs, where no boost is ever queried.
    let empty_table = BetaTable {
        eta: cfg.score.eta,
        mc_samples: 0,
        seed: 0,
        n_grid: vec![1],
        gamma_grid: vec![0.0],
        kl_of_gamma: vec![0.0],
        neg_ln_beta: vec![0.0],
    };
    let table = table.as_ref().unwrap_or(&empty_table);

    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for &sample_size in &cfg.n_schedule {
            for m in &cfg.methods {
                jobs.push((seed, sample_size, m.score, m.search.parse::<SearchMethod>()?));
            }
        }
    }
    jobs.sort_by(|a, b| {
        (a.0, a.1, a.2.as_str(), a.3.as_str()).cmp(&(b.0, b.1, b.2.as_str(), b.3.as_str()))
    });
    jobs.dedup();

    let rows = par::map(&jobs, |&(seed, sample_size, kind, method)| {
        let (net, d) = network_for(cfg, file_net.as_ref(), seed);
        let score_cfg = cfg.score.config(kind);
        let mut row = RunRecord {
            seed,
            n: net.n(),
            d,
            sample_size,
            score_name: kind,
            eta: cfg.score.eta,
            search_method: method,
            shd: None,
            total_score: None,
            score_build_ms: 0.0,
            search_ms: 0.0,
            total_ms: 0.0,
            error: None,
        };
        let outcome = (|| -> Result<(usize, f64, f64, f64)> {
            let data = data::sample(&net, sample_size, data_seed(seed, sample_size));
            let t0 = Instant::now();
            let scores = scoring::build_parent_set_scores(&data, table, &score_cfg)?;
            let build_ms = elapsed_ms(t0);
            let t1 = Instant::now();
            let result = search::search(&scores, method, cfg.restarts, seed)?;
            let search_ms = elapsed_ms(t1);
            Ok((dag_shd(net.dag(), &result.dag)?, result.score, build_ms, search_ms))
        })();
        match outcome {
            Ok((s, score, build_ms, search_ms)) => {
                row.shd = Some(s);
                row.total_score = Some(score);
                if cfg.record_timings {
                    row.score_build_ms = build_ms;
                    row.search_ms = search_ms;
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row.total_ms = row.score_build_ms + row.search_ms;
        row
    });
    let averages = average_rows(&rows);
    Ok(ExperimentResult { rows, averages })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Per-(N, score, search) means over successful runs.
pub fn average_rows(rows: &[RunRecord]) -> Vec<AverageRecord> {
    let keys: BTreeSet<(usize, &str, &str)> = rows
        .iter()
        .map(|r| (r.sample_size, r.score_name.as_str(), r.search_method.as_str()))
        .collect();
    keys.into_iter()
        .map(|(sample_size, score, method)| {
            let group: Vec<&RunRecord> = rows
                .iter()
                .filter(|r| {
                    r.sample_size == sample_size
                        && r.score_name.as_str() == score
                        && r.search_method.as_str() == method
                })
                .collect();
            let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.error.is_none()).collect();
            AverageRecord {
                sample_size,
                score_name: group[0].score_name,
                search_method: group[0].search_method,
                runs: group.len(),
                errors: group.len() - ok.len(),
                mean_shd: mean(ok.iter().filter_map(|r| r.shd).map(|s| s as f64)),
                mean_total_score: mean(ok.iter().filter_map(|r| r.total_score)),
                mean_score_build_ms: mean(group.iter().map(|r| r.score_build_ms)).unwrap_or(0.0),
                mean_search_ms: mean(group.iter().map(|r| r.search_ms)).unwrap_or(0.0),
            }
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RUN_COLUMNS: [&str; 11] = [
    "seed",
    "n",
    "d",
    "N",
    "score_name",
    "eta",
    "search_method",
    "shd",
    "total_score",
    "score_build_ms",
    "search_ms",
];

pub fn write_runs_csv<W: std::io::Write>(rows: &[RunRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RUN_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.seed.to_string(),
            r.n.to_string(),
            r.d.to_string(),
            r.sample_size.to_string(),
            r.score_name.as_str().to_string(),
            r.eta.to_string(),
            r.search_method.to_string(),
            opt(r.shd),
            opt(r.total_score),
            r.score_build_ms.to_string(),
            r.search_ms.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_averages_csv<W: std::io::Write>(rows: &[AverageRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "N",
        "score_name",
        "search_method",
        "runs",
        "errors",
        "mean_shd",
        "mean_total_score",
        "mean_score_build_ms",
        "mean_search_ms",
    ])?;
    for r in rows {
        out.write_record([
            r.sample_size.to_string(),
            r.score_name.as_str().to_string(),
            r.search_method.to_string(),
            r.runs.to_string(),
            r.errors.to_string(),
            opt(r.mean_shd),
            opt(r.mean_total_score),
            r.mean_score_build_ms.to_string(),
            r.mean_search_ms.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
