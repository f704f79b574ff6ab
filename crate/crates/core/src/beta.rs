//! Type II error of the mutual-information threshold test.
//!
//! `beta_N(gamma)` is the probability that `N` i.i.d. draws from the
//! reference distribution `p^eta` produce an empirical MI of at most
//! `gamma`. It is computed exactly by summing over types, by brute force
//! over sequences (tiny `N` only), or by importance-sampled Monte Carlo
//! integration of the continuous type-class approximation. [`BetaTable`]
//! tabulates `-ln beta` on an `(N, gamma)` grid and interpolates it
//! linearly in `N` and in `H(p^gamma || p^eta)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::dist::{self, JointDist2x2, PathParams};
use crate::error::{Error, Result};
use crate::par;

/// Largest `N` accepted by [`beta_exact`].
pub const EXACT_CAP: usize = 2000;
/// Largest `N` computed exactly when building a table; larger rows use Monte Carlo.
pub const TABLE_EXACT_CAP: usize = 200;
/// Largest `N` accepted by [`beta_bruteforce`].
pub const BRUTEFORCE_CAP: usize = 8;
pub const DEFAULT_ESS_FLOOR: f64 = 100.0;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
/// Above this eta the uniform-marginal proposal center is not trusted.
pub const MAX_TABLE_ETA: f64 = 0.11;

const MC_CHUNK: usize = 8192;
const PATH_PROBES: usize = 64;
const SIGMA_T_FLOOR: f64 = 1e-4;
const SIGMA_MARGINAL_FLOOR: f64 = 0.02;
/// Rounding allowance when a type's MI sits exactly on the threshold.
const MI_SLACK: f64 = 1e-12;

/// Empirical MI of count vectors of a fixed length, via `k ln k` lookups.
struct TypeMi {
    xlogx: Vec<f64>,
    n: usize,
}

impl TypeMi {
    fn new(n: usize) -> Self {
        let xlogx = (0..=n)
            .map(|k| if k == 0 { 0.0 } else { k as f64 * (k as f64).ln() })
            .collect();
        Self { xlogx, n }
    }

    fn mi(&self, t: [usize; 4]) -> f64 {
        if t[0] * t[3] == t[1] * t[2] {
            return 0.0;
        }
        let x = &self.xlogx;
        let joint = x[t[0]] + x[t[1]] + x[t[2]] + x[t[3]];
        let rows = x[t[0] + t[1]] + x[t[2] + t[3]];
        let cols = x[t[0] + t[2]] + x[t[1] + t[3]];
        ((joint - rows - cols + x[self.n]) / self.n as f64).max(0.0)
    }

    fn accepts(&self, t: [usize; 4], gamma: f64) -> bool {
        self.mi(t) <= gamma + MI_SLACK
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lf = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    lf.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        lf.push(acc);
    }
    lf
}

fn check_reference(reference: &JointDist2x2) -> Result<()> {
    if !reference.is_strictly_positive() {
        return Err(Error::InvalidArgument(
            "reference distribution must be strictly positive".into(),
        ));
    }
    Ok(())
}

fn check_n_gamma(n: usize, gamma: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Exact `beta_N(gamma)` by summing multinomial type probabilities. `O(N^3)`.
pub fn beta_exact(n: usize, gamma: f64, reference: &JointDist2x2) -> Result<f64> {
    beta_exact_capped(n, gamma, reference, EXACT_CAP)
}

pub fn beta_exact_capped(
    n: usize,
    gamma: f64,
    reference: &JointDist2x2,
    cap: usize,
) -> Result<f64> {
    check_n_gamma(n, gamma)?;
    check_reference(reference)?;
    if n > cap {
        return Err(Error::SampleSizeCap { n, cap });
    }
    let lf = ln_factorials(n);
    let lp = reference.entries().map(f64::ln);
    let mi = TypeMi::new(n);
    let mut total = 0.0;
    for a in 0..=n {
        let base_a = lf[n] - lf[a] + a as f64 * lp[0];
        for b in 0..=(n - a) {
            let base_b = base_a - lf[b] + b as f64 * lp[1];
            for c in 0..=(n - a - b) {
                let d = n - a - b - c;
                if mi.accepts([a, b, c, d], gamma) {
                    total += (base_b - lf[c] - lf[d] + c as f64 * lp[2] + d as f64 * lp[3]).exp();
                }
            }
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Oracle for [`beta_exact`]: sums over all `4^N` raw sequences.
pub fn beta_bruteforce(n: usize, gamma: f64, reference: &JointDist2x2) -> Result<f64> {
    check_n_gamma(n, gamma)?;
    check_reference(reference)?;
    if n > BRUTEFORCE_CAP {
        return Err(Error::SampleSizeCap {
            n,
            cap: BRUTEFORCE_CAP,
        });
    }
    let p = reference.entries();
    let mi = TypeMi::new(n);
    let mut total = 0.0;
    for code in 0..(1usize << (2 * n)) {
        let mut counts = [0usize; 4];
        let mut prob = 1.0;
        for pos in 0..n {
            let sym = (code >> (2 * pos)) & 3;
            counts[sym] += 1;
            prob *= p[sym];
        }
        if mi.accepts(counts, gamma) {
            total += prob;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    pub ess_floor: f64,
}

impl McOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            ess_floor: DEFAULT_ESS_FLOOR,
        }
    }
}

/// Result of [`beta_mc`] with importance-sampling diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub beta: f64,
    /// Standard error of the sample mean of the weights.
    pub std_error: f64,
    /// Kish effective sample size `(sum w)^2 / sum w^2`.
    pub ess: f64,
    pub sigma_marginal: f64,
    pub sigma_t: f64,
}

/// Log of the continuous type-class integrand at `q`; `None` outside the
/// region `MI(q) <= gamma` or on the simplex boundary.
fn ln_integrand(q: &[f64; 4], n: f64, ln_ref: &[f64; 4], gamma: f64) -> Option<f64> {
    if q.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let p = JointDist2x2::from_array(*q).ok()?;
    if dist::mutual_information(&p) > gamma {
        return None;
    }
    let mut kl = 0.0;
    let mut ln_prod = 0.0;
    for k in 0..4 {
        let lq = q[k].ln();
        kl += q[k] * (lq - ln_ref[k]);
        ln_prod += lq;
    }
    Some(1.5 * (n / (2.0 * PI)).ln() - n * kl - 0.5 * ln_prod)
}

fn sigma_marginal(n: usize) -> f64 {
    (0.5 / (n as f64).sqrt()).max(SIGMA_MARGINAL_FLOOR)
}

/// Width of the `t` proposal: distance from the integrand's peak along the
/// uniform-marginal segment `(0, t_gamma)` to where it drops by `e^{-1/2}`,
/// but never narrower than `t_gamma`. The integrand decays only
/// exponentially across the region, so a narrower Gaussian leaves heavy
/// weights near `-t_gamma`.
fn sigma_t(n: f64, t_gamma: f64, ln_ref: &[f64; 4], gamma: f64) -> f64 {
    let probes: Vec<(f64, f64)> = (1..=PATH_PROBES)
        .filter_map(|k| {
            let t = t_gamma * k as f64 / (PATH_PROBES + 1) as f64;
            let q = [0.25 + t, 0.25 - t, 0.25 - t, 0.25 + t];
            ln_integrand(&q, n, ln_ref, gamma).map(|v| (t, v))
        })
        .collect();
    let Some(peak) = probes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
    else {
        return SIGMA_T_FLOOR.max(t_gamma);
    };
    let (t_peak, v_peak) = probes[peak];
    let drop = probes[..=peak]
        .iter()
        .rev()
        .find(|(_, v)| *v < v_peak - 0.5)
        .map(|(t, _)| t_peak - t)
        .unwrap_or(t_peak);
    drop.max(t_gamma).max(SIGMA_T_FLOOR)
}

fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// Importance-sampled estimate of `beta_N(gamma)` against `p^eta`.
pub fn beta_mc(n: usize, gamma: f64, eta: f64, samples: usize, seed: u64) -> Result<McEstimate> {
    beta_mc_with(n, gamma, eta, &McOptions::new(samples, seed))
}

pub fn beta_mc_with(n: usize, gamma: f64, eta: f64, opts: &McOptions) -> Result<McEstimate> {
    check_n_gamma(n, gamma)?;
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma < eta) {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs 0 < gamma < eta, got gamma = {gamma}, eta = {eta}"
        )));
    }
    let reference = dist::reference_dist(eta)?;
    let ln_ref = reference.entries().map(f64::ln);
    let t_gamma = dist::find_t_plus(gamma, dist::T_PLUS_TOL)?;
    let nf = n as f64;
    let s_marg = sigma_marginal(n);
    let s_t = sigma_t(nf, t_gamma, &ln_ref, gamma);

    let marginal = Normal::new(0.5, s_marg).expect("positive sd");
    let offset = Normal::new(t_gamma, s_t).expect("positive sd");
    let chunks = opts.samples.div_ceil(MC_CHUNK);
    let partial = par::map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(c as u64);
        let len = MC_CHUNK.min(opts.samples - c * MC_CHUNK);
        let (mut sum_w, mut sum_w2) = (0.0_f64, 0.0_f64);
        for _ in 0..len {
            let pa0 = marginal.sample(&mut rng);
            let pb0 = marginal.sample(&mut rng);
            let t = offset.sample(&mut rng);
            if !(pa0 > 0.0 && pa0 < 1.0 && pb0 > 0.0 && pb0 < 1.0) {
                continue;
            }
            let (lo, hi) = PathParams::t_bounds(pa0, pb0);
            if !(t > lo && t < hi) {
                continue;
            }
            let (pa1, pb1) = (1.0 - pa0, 1.0 - pb0);
            let q = [pa0 * pb0 + t, pa0 * pb1 - t, pa1 * pb0 - t, pa1 * pb1 + t];
            // The map (pa0, pb0, t) -> (q00, q01, q10) has unit Jacobian.
            if let Some(lf) = ln_integrand(&q, nf, &ln_ref, gamma) {
                let lq = ln_normal_pdf(pa0, 0.5, s_marg)
                    + ln_normal_pdf(pb0, 0.5, s_marg)
                    + ln_normal_pdf(t, t_gamma, s_t);
                let w = (lf - lq).exp();
                sum_w += w;
                sum_w2 += w * w;
            }
        }
        (sum_w, sum_w2)
    });
    let (sum_w, sum_w2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let s = opts.samples as f64;
    let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
    if !(ess >= opts.ess_floor) {
        return Err(Error::LowEffectiveSampleSize {
            ess,
            floor: opts.ess_floor,
        });
    }
    let mean = sum_w / s;
    let var = (sum_w2 / s - mean * mean).max(0.0);
    Ok(McEstimate {
        beta: mean,
        std_error: (var / s).sqrt(),
        ess,
        sigma_marginal: s_marg,
        sigma_t: s_t,
    })
}

/// `-ln beta` over an `(N, gamma)` grid for one `eta`. Immutable once built.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct BetaTable {
    pub eta: f64,
    pub mc_samples: usize,
    pub seed: u64,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub kl_of_gamma: Vec<f64>,
    /// Row-major, one row per entry of `n_grid`.
    pub neg_ln_beta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub exact_cap: usize,
    pub ess_floor: f64,
    pub allow_large_eta: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            exact_cap: TABLE_EXACT_CAP,
            ess_floor: DEFAULT_ESS_FLOOR,
            allow_large_eta: false,
        }
    }
}

pub fn default_n_grid() -> Vec<usize> {
    vec![20, 50, 100, 200, 500, 1000, 2000, 5000, 10000]
}

/// `0` followed by 12 geometrically spaced points in `[eta/1000, 0.9 eta]`.
pub fn default_gamma_grid(eta: f64) -> Vec<f64> {
    let (lo, hi) = (eta / 1000.0, 0.9 * eta);
    let steps = 12;
    let ratio = (hi / lo).ln() / (steps - 1) as f64;
    std::iter::once(0.0)
        .chain((0..steps).map(|k| {
            if k == steps - 1 {
                hi
            } else {
                lo * (ratio * k as f64).exp()
            }
        }))
        .collect()
}

/// `H(p^gamma || p^eta)`, with `p^0` the uniform distribution.
pub fn kl_to_reference(gamma: f64, reference: &JointDist2x2) -> Result<f64> {
    let p_gamma = if gamma <= 0.0 {
        JointDist2x2::uniform()
    } else {
        dist::reference_dist(gamma)?
    };
    dist::kl_divergence(&p_gamma, reference)
}

fn neg_ln(beta: f64) -> f64 {
    (-beta.clamp(f64::MIN_POSITIVE, 1.0).ln()).max(0.0)
}

pub fn build_table(
    eta: f64,
    n_grid: &[usize],
    gamma_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<BetaTable> {
    build_table_with(eta, n_grid, gamma_grid, samples, seed, &TableOptions::default())
}

pub fn build_table_with(
    eta: f64,
    n_grid: &[usize],
    gamma_grid: &[f64],
    samples: usize,
    seed: u64,
    opts: &TableOptions,
) -> Result<BetaTable> {
    if !(eta > 0.0 && eta < std::f64::consts::LN_2) {
        return Err(Error::EtaOutOfRange(eta));
    }
    if eta > MAX_TABLE_ETA && !opts.allow_large_eta {
        return Err(Error::InvalidArgument(format!(
            "eta = {eta} exceeds {MAX_TABLE_ETA}; the proposal center is unverified there"
        )));
    }
    if n_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::InvalidArgument("grids must be nonempty".into()));
    }
    if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "N grid must be positive and strictly ascending".into(),
        ));
    }
    if gamma_grid.windows(2).any(|w| !(w[0] < w[1]))
        || gamma_grid.iter().any(|&g| !(g >= 0.0 && g < eta))
    {
        return Err(Error::InvalidArgument(
            "gamma grid must be strictly ascending within [0, eta)".into(),
        ));
    }

    let reference = dist::reference_dist(eta)?;
    let kl_of_gamma = gamma_grid
        .iter()
        .map(|&g| kl_to_reference(g, &reference))
        .collect::<Result<Vec<_>>>()?;

    let cols = gamma_grid.len();
    let cells: Vec<(usize, usize)> = (0..n_grid.len())
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .collect();
    let values = par::map(&cells, |&(i, j)| -> Result<Option<f64>> {
        let (n, gamma) = (n_grid[i], gamma_grid[j]);
        let cell = |e: Error| Error::Cell {
            n,
            gamma,
            source: Box::new(e),
        };
        if n <= opts.exact_cap {
            beta_exact_capped(n, gamma, &reference, opts.exact_cap)
                .map(|b| Some(neg_ln(b)))
                .map_err(cell)
        } else if gamma == 0.0 {
            // Filled below from neighbouring columns.
            Ok(None)
        } else {
            let mc = McOptions {
                samples,
                seed: par::mix_seed(seed, i as u64, j as u64),
                ess_floor: opts.ess_floor,
            };
            beta_mc_with(n, gamma, eta, &mc)
                .map(|e| Some(neg_ln(e.beta)))
                .map_err(cell)
        }
    });
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;

    let mut neg_ln_beta = Vec::with_capacity(values.len());
    for (i, row) in values.chunks(cols).enumerate() {
        let mut filled: Vec<f64> = row.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        if filled.iter().any(|v| v.is_nan()) {
            fill_zero_gamma(&mut filled, &kl_of_gamma).map_err(|e| Error::Cell {
                n: n_grid[i],
                gamma: 0.0,
                source: Box::new(e),
            })?;
        }
        neg_ln_beta.extend(filled);
    }

    Ok(BetaTable {
        eta,
        mc_samples: samples,
        seed,
        n_grid: n_grid.to_vec(),
        gamma_grid: gamma_grid.to_vec(),
        kl_of_gamma,
        neg_ln_beta,
    })
}

/// The continuous integral puts no mass on `MI = 0`, so a Monte Carlo row's
/// `gamma = 0` cell is extrapolated linearly in KL from the two smallest
/// positive-gamma cells, never below the first of them.
fn fill_zero_gamma(row: &mut [f64], kl: &[f64]) -> Result<()> {
    let known: Vec<usize> = (0..row.len()).filter(|&j| !row[j].is_nan()).collect();
    let Some(&j1) = known.first() else {
        return Err(Error::InvalidArgument(
            "a Monte Carlo row needs at least one positive gamma".into(),
        ));
    };
    let value = match known.get(1) {
        Some(&j2) if kl[j1] != kl[j2] => {
            let slope = (row[j1] - row[j2]) / (kl[j1] - kl[j2]);
            row[j1] + slope.max(0.0) * (kl[0] - kl[j1])
        }
        _ => row[j1],
    };
    let value = value.max(row[j1]);
    for v in row.iter_mut().filter(|v| v.is_nan()) {
        *v = value;
    }
    Ok(())
}

fn lerp(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if x1 == x0 {
        y0
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

impl BetaTable {
    pub fn get(&self, n_index: usize, gamma_index: usize) -> f64 {
        self.neg_ln_beta[n_index * self.gamma_grid.len() + gamma_index]
    }

    fn row(&self, i: usize) -> &[f64] {
        let c = self.gamma_grid.len();
        &self.neg_ln_beta[i * c..(i + 1) * c]
    }

    /// Linear in KL along a row. Columns are ordered by decreasing KL.
    /// Beyond the last column the row is joined to `(KL = 0, 0)`, which keeps
    /// the query continuous at `gamma = eta`.
    fn row_at_kl(&self, i: usize, kl: f64) -> f64 {
        let row = self.row(i);
        let ks = &self.kl_of_gamma;
        let last = ks.len() - 1;
        if kl <= ks[last] {
            return lerp(0.0, 0.0, ks[last], row[last], kl);
        }
        if kl >= ks[0] {
            return if last == 0 {
                row[0]
            } else {
                lerp(ks[1], row[1], ks[0], row[0], kl)
            };
        }
        let j = (0..last).find(|&j| kl <= ks[j] && kl >= ks[j + 1]).unwrap_or(last - 1);
        lerp(ks[j + 1], row[j + 1], ks[j], row[j], kl)
    }

    /// Interpolated `-ln beta_N(gamma)`, clamped at zero; zero for `gamma >= eta`.
    pub fn query_neg_ln_beta(&self, n: usize, gamma: f64) -> f64 {
        if gamma >= self.eta || n == 0 {
            return 0.0;
        }
        let Ok(reference) = dist::reference_dist(self.eta) else {
            return 0.0;
        };
        let kl = kl_to_reference(gamma.max(0.0), &reference).unwrap_or(0.0);
        self.query_at_kl(n, kl)
    }

    pub fn query_at_kl(&self, n: usize, kl: f64) -> f64 {
        let ns = &self.n_grid;
        let nf = n as f64;
        let value = if ns.len() == 1 {
            self.row_at_kl(0, kl)
        } else {
            let i = match ns.iter().position(|&g| g >= n) {
                Some(0) => 0,
                Some(k) => k - 1,
                None => ns.len() - 2,
            };
            let (n0, n1) = (ns[i] as f64, ns[i + 1] as f64);
            lerp(n0, self.row_at_kl(i, kl), n1, self.row_at_kl(i + 1, kl), nf)
        };
        value.max(0.0)
    }

    pub fn to_json(&self) -> String {
        fn num(x: f64) -> String {
            format!("{x:.16e}")
        }
        fn list<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
            let items: Vec<String> = xs.iter().map(f).collect();
            format!("[{}]", items.join(", "))
        }
        let mut s = String::new();
        s.push_str("{\n");
        let _ = writeln!(s, "  \"eta\": {},", num(self.eta));
        let _ = writeln!(s, "  \"mc_samples\": {},", self.mc_samples);
        let _ = writeln!(s, "  \"seed\": {},", self.seed);
        let _ = writeln!(s, "  \"N_grid\": {},", list(&self.n_grid, |n| n.to_string()));
        let _ = writeln!(s, "  \"gamma_grid\": {},", list(&self.gamma_grid, |&x| num(x)));
        let _ = writeln!(s, "  \"kl_of_gamma\": {},", list(&self.kl_of_gamma, |&x| num(x)));
        let _ = writeln!(s, "  \"neg_ln_beta\": {}", list(&self.neg_ln_beta, |&x| num(x)));
        s.push_str("}\n");
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: BetaTable = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let (r, c) = (self.n_grid.len(), self.gamma_grid.len());
        if r == 0 || c == 0 || self.kl_of_gamma.len() != c || self.neg_ln_beta.len() != r * c {
            return Err(Error::Parse("beta table dimensions are inconsistent".into()));
        }
        if self.neg_ln_beta.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parse("neg_ln_beta entries must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Free-function form of [`BetaTable::query_neg_ln_beta`].
pub fn query_neg_ln_beta(table: &BetaTable, n: usize, gamma: f64) -> f64 {
    table.query_neg_ln_beta(n, gamma)
}
