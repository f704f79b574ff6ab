//! Acceptance criteria. Each check prints one PASS/FAIL line; the process
//! exits nonzero if any check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsityboost::beta::{self, beta_bruteforce, beta_exact, beta_mc, kl_to_reference};
use sparsityboost::data::{self, default_names, BinaryDataset, Dag};
use sparsityboost::dist::{self, JointDist2x2};
use sparsityboost::eval::{self, ExperimentConfig, MethodSpec, NetworkSource, ScoreKind, ScoreSettings};
use sparsityboost::scoring::{self, FamilyScore, ParentSetScoreTable, ScoreConfig};
use sparsityboost::search;

type Outcome = Result<String, String>;

const ETA: f64 = 0.01;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn linear_fit_r2(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let reference = dist::reference_dist(ETA).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for n in 1..=6 {
        for gamma in [0.0, 0.005, 0.01, 0.1, 0.7] {
            let a = beta_exact(n, gamma, &reference).map_err(|e| e.to_string())?;
            let b = beta_bruteforce(n, gamma, &reference).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-12 && secs < 60.0,
        format!("max |exact - brute| = {worst:.2e}, {secs:.2} s"),
    )
}

fn mc_accuracy() -> Outcome {
    let start = Instant::now();
    let reference = dist::reference_dist(ETA).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, bound) in [(20, 0.35), (50, 0.15), (100, 0.15)] {
        for gamma in [0.001, 0.005] {
            let exact = beta_exact(n, gamma, &reference).map_err(|e| e.to_string())?;
            let mc = beta_mc(n, gamma, ETA, 100_000, 1).map_err(|e| e.to_string())?;
            let err = (mc.beta / exact - 1.0).abs();
            ok &= err <= bound;
            parts.push(format!("N={n} g={gamma}: {:.1}%", 100.0 * err));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(ok && secs < 300.0, format!("{}, {secs:.1} s", parts.join(", ")))
}

fn linearity_in_n() -> Outcome {
    let reference = dist::reference_dist(ETA).map_err(|e| e.to_string())?;
    let ns = [40.0, 80.0, 120.0, 160.0, 200.0];
    let y: Vec<f64> = ns
        .iter()
        .map(|&n| beta_exact(n as usize, 0.005, &reference).map(|b| -b.ln()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (_, r2) = linear_fit_r2(&ns, &y);
    let values: Vec<String> = y.iter().map(|v| format!("{v:.3}")).collect();
    check(r2 >= 0.98, format!("R^2 = {r2:.4}, -ln beta = [{}]", values.join(", ")))
}

fn linearity_in_kl() -> Outcome {
    let reference = dist::reference_dist(ETA).map_err(|e| e.to_string())?;
    let gammas: Vec<f64> = (1..=8).map(|k| ETA * k as f64 / 9.0).collect();
    let mut kl = Vec::new();
    let mut y = Vec::new();
    for &g in &gammas {
        kl.push(kl_to_reference(g, &reference).map_err(|e| e.to_string())?);
        let est = beta_mc(2000, g, ETA, 100_000, 2).map_err(|e| e.to_string())?;
        y.push(-est.beta.ln());
    }
    let mut pairs: Vec<(f64, f64)> = kl.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = pairs.windows(2).all(|w| w[1].1 > w[0].1);
    let (_, r2) = linear_fit_r2(&kl, &y);
    check(monotone && r2 >= 0.95, format!("monotone = {monotone}, R^2 = {r2:.4}"))
}

fn exact_cost_scaling() -> Outcome {
    let reference = dist::reference_dist(ETA).map_err(|e| e.to_string())?;
    let ns = [50usize, 100, 200, 400];
    let mut times = Vec::new();
    for &n in &ns {
        // Repeat until the measurement spans enough wall time, keep the best rate.
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let mut reps = 0u32;
            let start = Instant::now();
            while reps == 0 || start.elapsed().as_secs_f64() < 0.05 {
                std::hint::black_box(beta_exact(n, 0.005, &reference).map_err(|e| e.to_string())?);
                reps += 1;
            }
            best = best.min(start.elapsed().as_secs_f64() / reps as f64);
        }
        times.push(best);
    }
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (slope, _) = linear_fit_r2(&lx, &ly);
    check(
        (slope - 3.0).abs() <= 0.5,
        format!("log-log slope = {slope:.3}, N=400 takes {:.1} ms", 1e3 * times[3]),
    )
}

fn analytic_identities() -> Outcome {
    let mut worst_mi = 0.0f64;
    for k in 0..50 {
        let eta = (1e-5f64.ln() + (0.6f64.ln() - 1e-5f64.ln()) * k as f64 / 49.0).exp();
        let t = dist::find_t_plus(eta, dist::T_PLUS_TOL).map_err(|e| e.to_string())?;
        let p = dist::uniform_path(t).map_err(|e| e.to_string())?;
        worst_mi = worst_mi.max((dist::mutual_information(&p) - eta).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let uniform = JointDist2x2::uniform();
    let mut worst_kl = 0.0f64;
    for _ in 0..1000 {
        let t = rng.random_range(-0.2499..0.2499);
        let p = dist::uniform_path(t).map_err(|e| e.to_string())?;
        let kl = dist::kl_divergence(&p, &uniform).map_err(|e| e.to_string())?;
        worst_kl = worst_kl.max((kl - dist::mutual_information(&p)).abs());
    }
    let random_dist = |rng: &mut ChaCha8Rng| {
        let w: [f64; 4] = std::array::from_fn(|_| -rng.random_range(f64::EPSILON..1.0).ln());
        let s: f64 = w.iter().sum();
        JointDist2x2::from_array(w.map(|x| x / s)).expect("normalized")
    };
    let mut min_mi = f64::INFINITY;
    let mut min_kl = f64::INFINITY;
    for _ in 0..100_000 {
        let p = random_dist(&mut rng);
        let q = random_dist(&mut rng);
        min_mi = min_mi.min(dist::mutual_information(&p));
        min_kl = min_kl.min(dist::kl_divergence(&p, &q).map_err(|e| e.to_string())?);
    }
    check(
        worst_mi <= 1e-10 && worst_kl <= 1e-12 && min_mi >= 0.0 && min_kl >= 0.0,
        format!(
            "MI residual {worst_mi:.1e}, KL-vs-MI {worst_kl:.1e}, min MI {min_mi:.1e}, min KL {min_kl:.1e}"
        ),
    )
}

fn random_table(n: usize, seed: u64) -> ParentSetScoreTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let families = (0..n)
        .map(|i| {
            (0u64..1 << n)
                .filter(|m| m & (1 << i) == 0)
                .map(|m| FamilyScore {
                    parents: m,
                    score: rng.random_range(-20.0..0.0),
                })
                .collect()
        })
        .collect();
    ParentSetScoreTable::new(default_names(n), 0.0, families).expect("valid table")
}

fn search_exactness() -> Outcome {
    let start = Instant::now();
    let count = Dag::enumerate(4, None).len();
    let mut mismatches = 0;
    for seed in 0..50 {
        let t = random_table(4, seed);
        let dp = search::exact_dp(&t).map_err(|e| e.to_string())?;
        let bf = search::brute_force(&t).map_err(|e| e.to_string())?;
        if dp.score != bf.score {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        count == 543 && mismatches == 0 && secs < 60.0,
        format!("{count} DAGs per table, {mismatches}/50 mismatches, {secs:.2} s"),
    )
}

fn scaled_sample_complexity() -> Outcome {
    let start = Instant::now();
    let table = beta::build_table(
        ETA,
        &beta::default_n_grid(),
        &beta::default_gamma_grid(ETA),
        beta::DEFAULT_MC_SAMPLES,
        0,
    )
    .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let table_path = dir.path().join("beta.json");
    table.save(&table_path).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        network: NetworkSource::Generate { n: 8, d: 2 },
        n_schedule: vec![500, 5000],
        methods: vec![
            MethodSpec {
                score: ScoreKind::Bic,
                search: "dp".into(),
            },
            MethodSpec {
                score: ScoreKind::Sparsityboost,
                search: "dp".into(),
            },
        ],
        seeds: (0..10).collect(),
        score: ScoreSettings {
            eta: ETA,
            kappa: 0.5,
            psi2: 1.0,
            d: 2,
        },
        beta_table: Some(table_path),
        mc_samples: beta::DEFAULT_MC_SAMPLES,
        restarts: 1,
        record_timings: true,
    };
    let res = eval::run_experiment(&cfg).map_err(|e| e.to_string())?;
    let mean = |n: usize, kind: ScoreKind| {
        res.averages
            .iter()
            .find(|a| a.sample_size == n && a.score_name == kind)
            .and_then(|a| (a.errors == 0).then_some(a.mean_shd).flatten())
    };
    let (Some(bic500), Some(sb500), Some(bic5000), Some(sb5000)) = (
        mean(500, ScoreKind::Bic),
        mean(500, ScoreKind::Sparsityboost),
        mean(5000, ScoreKind::Bic),
        mean(5000, ScoreKind::Sparsityboost),
    ) else {
        return Err("some runs failed".into());
    };
    let secs = start.elapsed().as_secs_f64();
    check(
        sb500 <= bic500 && sb5000 <= 1.0 && secs < 1800.0,
        format!(
            "N=500: SB {sb500:.1} vs BIC {bic500:.1}; N=5000: SB {sb5000:.1} (BIC {bic5000:.1}); {secs:.1} s"
        ),
    )
}

/// Plain BIC from raw counts, independent of the scoring module.
fn reference_bic(data: &BinaryDataset, dag: &Dag) -> f64 {
    let rows = data.n_rows();
    let mut ll = 0.0;
    let mut dim = 0usize;
    for i in 0..dag.n() {
        let ps = dag.parents(i);
        dim += 1 << ps.len();
        let mut counts: BTreeMap<Vec<u8>, [f64; 2]> = BTreeMap::new();
        for r in 0..rows {
            let key: Vec<u8> = ps.iter().map(|&p| data.get(r, p)).collect();
            counts.entry(key).or_insert([0.0; 2])[data.get(r, i) as usize] += 1.0;
        }
        for [a, b] in counts.values() {
            for c in [a, b] {
                if *c > 0.0 {
                    ll += c * (c / (a + b)).ln();
                }
            }
        }
    }
    ll - 0.5 * (rows as f64).ln() * dim as f64
}

fn score_sanity() -> Outcome {
    let table = beta::build_table(ETA, &[20, 100, 500, 2000], &beta::default_gamma_grid(ETA), 20_000, 3)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_bic = 0.0f64;
    for k in 0..20 {
        let n = 3 + k % 4;
        let net = data::random_network(n, 2, 100 + k as u64);
        let ds = data::sample(&net, 200 + 50 * k, k as u64);
        let g = Dag::random(n, 2, &mut rng);
        let s = scoring::total_score(&ds, &g, &table, &ScoreConfig::default().bic()).map_err(|e| e.to_string())?;
        worst_bic = worst_bic.max((s - reference_bic(&ds, &g)).abs());
    }
    let ds = data::sample(&data::random_network(5, 2, 77), 1000, 77);
    let cfg = ScoreConfig::default();
    let pst = scoring::build_parent_set_scores(&ds, &table, &cfg).map_err(|e| e.to_string())?;
    let dags = Dag::enumerate(5, Some(2));
    let mut worst_rec = 0.0f64;
    for g in &dags {
        let direct = scoring::total_score(&ds, g, &table, &cfg).map_err(|e| e.to_string())?;
        let rebuilt = pst.score_of(g).map_err(|e| e.to_string())?;
        worst_rec = worst_rec.max((direct - rebuilt).abs());
    }
    check(
        worst_bic <= 1e-9 && worst_rec <= 1e-9,
        format!(
            "BIC residual {worst_bic:.1e}, reconstruction residual {worst_rec:.1e} over {} DAGs",
            dags.len()
        ),
    )
}

/// Skeleton and unshielded colliders, computed directly from the DAG.
fn class_key(g: &Dag) -> (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize, usize)>) {
    let skeleton = g.edges().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
    let mut colliders = BTreeSet::new();
    for c in 0..g.n() {
        let ps = g.parents(c);
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                if !g.adjacent(a, b) {
                    colliders.insert((a, b, c));
                }
            }
        }
    }
    (skeleton, colliders)
}

fn equivalence_classes() -> Outcome {
    let mut bad = 0;
    let mut classes_total = 0;
    for n in 1..=4 {
        let mut classes: BTreeMap<_, Vec<Dag>> = BTreeMap::new();
        for g in Dag::enumerate(n, None) {
            classes.entry(class_key(&g)).or_default().push(g);
        }
        classes_total += classes.len();
        let mut seen = Vec::new();
        for members in classes.values() {
            let first = eval::dag_to_cpdag(&members[0]);
            for g in members {
                let p = eval::dag_to_cpdag(g);
                if p != first || eval::shd(&p, &first).map_err(|e| e.to_string())? != 0 {
                    bad += 1;
                }
            }
            if seen.contains(&first) {
                bad += 1;
            }
            seen.push(first);
        }
    }
    check(bad == 0, format!("{classes_total} classes for n <= 4, {bad} violations"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact beta equals brute force", oracle_equivalence),
        ("Monte Carlo beta accuracy", mc_accuracy),
        ("-ln beta linear in N", linearity_in_n),
        ("-ln beta near-linear in KL", linearity_in_kl),
        ("exact beta cost is cubic", exact_cost_scaling),
        ("information identities", analytic_identities),
        ("DP search matches enumeration", search_exactness),
        ("SHD on small random networks", scaled_sample_complexity),
        ("score sanity and reconstruction", score_sanity),
        ("CPDAG constant on equivalence classes", equivalence_classes),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("criterion {:>2} {tag}: {name} ({detail})", k + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
