//! Joint distributions of two binary variables.
//!
//! Entries are indexed `(a, b)` with `A` the first variable, so the storage
//! order is `p00, p01, p10, p11` where `p01 = P(A = 0, B = 1)`. All
//! information quantities are in nats.

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Default tolerance on `|MI(p0(t)) - eta|` for [`find_t_plus`].
pub const T_PLUS_TOL: f64 = 1e-12;
const T_PLUS_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDist2x2 {
    p: [f64; 4],
}

impl JointDist2x2 {
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        Self::from_array([p00, p01, p10, p11])
    }

    pub fn from_array(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entries must be finite and nonnegative, got {p:?}"
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        Ok(Self { p })
    }

    /// Empirical distribution of a 2×2 count table; `None` when all counts are zero.
    pub fn from_counts(counts: [u64; 4]) -> Option<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(Self {
            p: counts.map(|c| c as f64 / n),
        })
    }

    pub fn uniform() -> Self {
        Self { p: [0.25; 4] }
    }

    pub fn entries(&self) -> [f64; 4] {
        self.p
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.p[2 * a + b]
    }

    /// `(P(A = 0), P(A = 1))`
    pub fn marginal_a(&self) -> (f64, f64) {
        (self.p[0] + self.p[1], self.p[2] + self.p[3])
    }

    /// `(P(B = 0), P(B = 1))`
    pub fn marginal_b(&self) -> (f64, f64) {
        (self.p[0] + self.p[2], self.p[1] + self.p[3])
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.p.iter().all(|&x| x > 0.0)
    }
}

/// Mutual information of the two coordinates, with `0 ln 0 = 0`.
pub fn mutual_information(p: &JointDist2x2) -> f64 {
    let (a0, a1) = p.marginal_a();
    let (b0, b1) = p.marginal_b();
    let ma = [a0, a0, a1, a1];
    let mb = [b0, b1, b0, b1];
    let mut mi = 0.0;
    for k in 0..4 {
        let pk = p.p[k];
        if pk > 0.0 {
            let indep = ma[k] * mb[k];
            mi += pk * ((pk - indep) / indep).ln_1p();
        }
    }
    mi.max(0.0)
}

/// Mutual information of the empirical distribution of a count table.
///
/// Product tables (`n00 n11 = n01 n10`) return exactly zero so that
/// threshold tests at `gamma = 0` are not decided by rounding.
pub fn mutual_information_counts(counts: [u64; 4]) -> f64 {
    if (counts[0] as u128) * (counts[3] as u128) == (counts[1] as u128) * (counts[2] as u128) {
        return 0.0;
    }
    JointDist2x2::from_counts(counts)
        .map(|p| mutual_information(&p))
        .unwrap_or(0.0)
}

/// `H(p || q)` in nats.
pub fn kl_divergence(p: &JointDist2x2, q: &JointDist2x2) -> Result<f64> {
    let mut kl = 0.0;
    for k in 0..4 {
        let (pk, qk) = (p.p[k], q.p[k]);
        if pk > 0.0 {
            if qk <= 0.0 {
                return Err(Error::SupportViolation { index: k });
            }
            kl += pk * (pk / qk).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Marginals plus correlation offset `t`; see [`make_dist`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// `P(A = 0)`
    pub pa0: f64,
    /// `P(B = 0)`
    pub pb0: f64,
    pub t: f64,
}

impl PathParams {
    pub fn new(pa0: f64, pb0: f64, t: f64) -> Self {
        Self { pa0, pb0, t }
    }

    /// `(t_min, t_max)`: the range of `t` keeping all four entries nonnegative.
    pub fn t_bounds(pa0: f64, pb0: f64) -> (f64, f64) {
        let (pa1, pb1) = (1.0 - pa0, 1.0 - pb0);
        let lo = -(pa0 * pb0).min(pa1 * pb1);
        let hi = (pa1 * pb0).min(pa0 * pb1);
        (lo, hi)
    }

    fn entries(&self) -> [f64; 4] {
        let (pa0, pb0, t) = (self.pa0, self.pb0, self.t);
        let (pa1, pb1) = (1.0 - pa0, 1.0 - pb0);
        [pa0 * pb0 + t, pa0 * pb1 - t, pa1 * pb0 - t, pa1 * pb1 + t]
    }
}

/// Builds the distribution with marginals `(pa0, 1 - pa0)`, `(pb0, 1 - pb0)`
/// and diagonal shifted by `+t`, off-diagonal by `-t`.
///
/// `t` may lie anywhere in the closed admissible interval; the endpoints give
/// distributions with a zero entry.
pub fn make_dist(params: PathParams) -> Result<JointDist2x2> {
    let PathParams { pa0, pb0, t } = params;
    if !(0.0..=1.0).contains(&pa0) || !(0.0..=1.0).contains(&pb0) {
        return Err(Error::InvalidDistribution(format!(
            "marginals must lie in [0, 1], got ({pa0}, {pb0})"
        )));
    }
    let (lo, hi) = PathParams::t_bounds(pa0, pb0);
    if !t.is_finite() || t < lo || t > hi {
        return Err(Error::InadmissibleT { t, lo, hi });
    }
    // Rounding can push a boundary entry to -1e-17.
    Ok(JointDist2x2 {
        p: params.entries().map(|x| x.max(0.0)),
    })
}

/// The uniform-marginal path `p0(t)`, `t` in `[-1/4, 1/4]`.
pub fn uniform_path(t: f64) -> Result<JointDist2x2> {
    make_dist(PathParams::new(0.5, 0.5, t))
}

fn uniform_path_mi(t: f64) -> f64 {
    mutual_information(&JointDist2x2 {
        p: [0.25 + t, 0.25 - t, 0.25 - t, 0.25 + t],
    })
}

/// Solves `MI(p0(t)) = eta` for `t` in `(0, 1/4)` by bisection.
pub fn find_t_plus(eta: f64, tol: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < std::f64::consts::LN_2) {
        return Err(Error::EtaOutOfRange(eta));
    }
    let (mut lo, mut hi) = (0.0_f64, 0.25_f64);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..T_PLUS_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let mi = uniform_path_mi(mid);
        if (mi - eta).abs() <= tol || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if mi < eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// The fixed alternative `p0(t_eta^+)`: uniform marginals, `MI = eta`.
pub fn reference_dist(eta: f64) -> Result<JointDist2x2> {
    let t = find_t_plus(eta, T_PLUS_TOL)?;
    uniform_path(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mi_examples() {
        assert_eq!(mutual_information(&JointDist2x2::uniform()), 0.0);
        let diag = JointDist2x2::new(0.5, 0.0, 0.0, 0.5).unwrap();
        assert!(close(mutual_information(&diag), LN_2, 1e-15));
        let p = make_dist(PathParams::new(0.5, 0.5, 0.1)).unwrap();
        let e = p.entries();
        for (x, y) in e.iter().zip([0.35, 0.15, 0.15, 0.35]) {
            assert!(close(*x, y, 1e-15));
        }
        // 0.7 ln 1.4 + 0.3 ln 0.6
        let oracle = 0.7 * 1.4_f64.ln() + 0.3 * 0.6_f64.ln();
        assert!(close(mutual_information(&p), oracle, 1e-15));
        assert!(close(oracle, 0.082282, 1e-6));
    }

    #[test]
    fn kl_examples() {
        let p = make_dist(PathParams::new(0.3, 0.6, 0.05)).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let point = JointDist2x2::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let u = JointDist2x2::uniform();
        assert!(close(kl_divergence(&point, &u).unwrap(), 4.0_f64.ln(), 1e-15));
        let p1 = uniform_path(0.1).unwrap();
        let kl = kl_divergence(&p1, &uniform_path(0.0).unwrap()).unwrap();
        assert!(close(kl, mutual_information(&p1), 1e-15));
        assert!(close(kl, 0.082282, 1e-6));
    }

    #[test]
    fn kl_support_violation() {
        let u = JointDist2x2::uniform();
        let point = JointDist2x2::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            kl_divergence(&u, &point),
            Err(Error::SupportViolation { index: 1 })
        ));
    }

    #[test]
    fn make_dist_examples() {
        assert_eq!(
            make_dist(PathParams::new(0.5, 0.5, 0.0)).unwrap(),
            JointDist2x2::uniform()
        );
        let d = make_dist(PathParams::new(0.5, 0.5, 0.25)).unwrap();
        assert_eq!(d.entries(), [0.5, 0.0, 0.0, 0.5]);
        let (lo, hi) = PathParams::t_bounds(0.3, 0.5);
        assert!(close(hi, 0.15, 1e-15));
        assert!(close(lo, -0.15, 1e-15));
        assert!(make_dist(PathParams::new(0.3, 0.5, 0.1500001)).is_err());
        assert!(make_dist(PathParams::new(0.3, 0.5, -0.2)).is_err());
    }

    #[test]
    fn invalid_joint_rejected() {
        assert!(JointDist2x2::new(0.5, 0.5, 0.5, -0.5).is_err());
        assert!(JointDist2x2::new(0.3, 0.3, 0.3, 0.3).is_err());
        assert!(JointDist2x2::from_counts([0; 4]).is_none());
    }

    #[test]
    fn t_plus_examples() {
        let t = find_t_plus(1e-14, T_PLUS_TOL).unwrap();
        assert!(t < 1e-6);
        let t = find_t_plus(LN_2 - 1e-9, T_PLUS_TOL).unwrap();
        assert!(close(t, 0.25, 1e-6));
        let eta = 0.7 * 1.4_f64.ln() + 0.3 * 0.6_f64.ln();
        let t = find_t_plus(eta, T_PLUS_TOL).unwrap();
        assert!(close(t, 0.1, 1e-10));
        assert!(find_t_plus(0.0, T_PLUS_TOL).is_err());
        assert!(find_t_plus(LN_2, T_PLUS_TOL).is_err());
        assert!(find_t_plus(-0.1, T_PLUS_TOL).is_err());
    }

    #[test]
    fn reference_dist_examples() {
        assert!(reference_dist(0.0).is_err());
        let eta = 0.7 * 1.4_f64.ln() + 0.3 * 0.6_f64.ln();
        let r = reference_dist(eta).unwrap();
        for (x, y) in r.entries().iter().zip([0.35, 0.15, 0.15, 0.35]) {
            assert!(close(*x, y, 1e-10));
        }
        let r = reference_dist(0.01).unwrap().entries();
        assert_eq!(r[0], r[3]);
        assert_eq!(r[1], r[2]);
        assert!(close(mutual_information(&reference_dist(0.01).unwrap()), 0.01, 1e-12));
    }

    #[test]
    fn count_mi_is_exact_zero_on_product_tables() {
        assert_eq!(mutual_information_counts([2, 1, 4, 2]), 0.0);
        assert_eq!(mutual_information_counts([3, 0, 0, 0]), 0.0);
        assert!(close(mutual_information_counts([1, 0, 0, 1]), LN_2, 1e-15));
    }

    fn arb_dist() -> impl Strategy<Value = JointDist2x2> {
        prop::array::uniform4(0.0f64..1.0).prop_filter_map("nonzero", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-9).then(|| {
                let mut p = w.map(|x| x / s);
                p[3] = 1.0 - p[0] - p[1] - p[2];
                JointDist2x2 { p: p.map(|x| x.max(0.0)) }
            })
        })
    }

    proptest! {
        #[test]
        fn marginals_independent_of_t(pa0 in 0.01f64..0.99, pb0 in 0.01f64..0.99, u in 0.0f64..1.0) {
            let (lo, hi) = PathParams::t_bounds(pa0, pb0);
            let t = lo + u * (hi - lo);
            let d = make_dist(PathParams::new(pa0, pb0, t)).unwrap();
            prop_assert!((d.marginal_a().0 - pa0).abs() < 1e-12);
            prop_assert!((d.marginal_b().0 - pb0).abs() < 1e-12);
        }

        #[test]
        fn path_mi_symmetric(t in 0.0f64..0.25) {
            let a = mutual_information(&uniform_path(t).unwrap());
            let b = mutual_information(&uniform_path(-t).unwrap());
            prop_assert!((a - b).abs() < 1e-15);
        }

        #[test]
        fn mi_and_kl_nonnegative(p in arb_dist(), q in arb_dist()) {
            prop_assert!(mutual_information(&p) >= 0.0);
            if q.is_strictly_positive() {
                prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            }
        }
    }
}
