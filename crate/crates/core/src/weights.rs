//! Compression weights over a digital net: for each net point z_l, the pair
//! (W_X, W_XY) aggregates how many data points (and how much response mass)
//! share elementary intervals with z_l, averaged over every partition of the
//! cube into intervals of volume b^-nu via the inclusion-exclusion
//! combination principle. The weighted quadratic-loss surrogate is
//!
//!   app_avg(f) = sum_l f(z_l)^2 wx_l - 2 sum_l f(z_l) wxy_l + (1/N) sum_n y_n^2.
//!
//! The alternating binomial sums are accumulated with compensated summation;
//! per-point interval counts come from Algorithm-style digit matching
//! against the net point's exact digits.

use std::collections::HashMap;
use std::sync::RwLock;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::net::DigitalNet;
use crate::KahanSum;

/// Net parameters a weight set was computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct NetRef {
    pub b: u32,
    pub m: usize,
    pub s: usize,
    pub alpha: usize,
    pub t: Option<u32>,
}

/// Per-net-point weights plus the constant response-energy term.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub nu: u32,
    pub wx: Vec<f64>,
    pub wxy: Vec<f64>,
    /// (1/N) sum of squared responses.
    pub y_energy: f64,
    pub net: NetRef,
}

/// Largest k <= r such that the first k base-b digits of `x` equal the first
/// k digits of the net coordinate, decided by incremental multiply-floor on
/// `x` against the exact digit prefix.
pub fn digit_match_depth(z_digits: &[u8], x: f64, b: u32, r: u32) -> u32 {
    let bf = f64::from(b);
    let mut z_prefix = 0u64;
    let mut x_scaled = x;
    for k in 1..=r {
        z_prefix = z_prefix * u64::from(b) + u64::from(z_digits.get(k as usize - 1).copied().unwrap_or(0));
        x_scaled *= bf;
        if x_scaled.floor() as u64 != z_prefix {
            return k - 1;
        }
    }
    r
}

/// Number of vectors d in N_0^s with |d| = r and d <= caps componentwise.
/// Zero caps pin their coordinate and drop out; r <= 2 has closed forms and
/// larger r runs a dynamic program over the remaining coordinates.
pub fn count_bounded_compositions(r: u32, caps: &[u32]) -> u128 {
    match r {
        0 => return 1,
        1 => return caps.iter().filter(|&&c| c >= 1).count() as u128,
        2 => {
            let ge1 = caps.iter().filter(|&&c| c >= 1).count() as u128;
            let ge2 = caps.iter().filter(|&&c| c >= 2).count() as u128;
            return ge2 + ge1 * ge1.saturating_sub(1) / 2;
        }
        _ => {}
    }
    let r = r as usize;
    let mut table = vec![0u128; r + 1];
    let mut next = vec![0u128; r + 1];
    table[0] = 1;
    for &cap in caps.iter().filter(|&&c| c > 0) {
        let cap = cap.min(r as u32) as usize;
        for rem in 0..=r {
            let mut acc = 0u128;
            for d in 0..=cap.min(rem) {
                acc += table[rem - d];
            }
            next[rem] = acc;
        }
        std::mem::swap(&mut table, &mut next);
    }
    table[r]
}

/// Memo for N_{r,i} counts, keyed by (r, caps truncated at r) packed into a
/// u128. The counts are universal (data-independent), so one cache serves a
/// whole run; the map is only consulted for dimensions small enough to pack,
/// where keys repeat heavily.
#[derive(Debug, Default)]
pub struct CompositionCache {
    map: RwLock<HashMap<(u32, u128), u128>>,
}

const CACHE_MAX_DIM: usize = 16;

impl CompositionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, r: u32, caps: &[u32]) -> u128 {
        if caps.len() > CACHE_MAX_DIM || r > u8::MAX as u32 {
            return count_bounded_compositions(r, caps);
        }
        let mut key = 0u128;
        for &c in caps {
            key = (key << 8) | u128::from(c.min(r) as u8);
        }
        if let Some(&hit) = self.map.read().expect("cache lock").get(&(r, key)) {
            return hit;
        }
        let value = count_bounded_compositions(r, caps);
        self.map.write().expect("cache lock").insert((r, key), value);
        value
    }
}

/// One pass of the S_r / T_r accumulation for a single net point: for every
/// data point, the per-coordinate digit match depths form the cap vector i,
/// and N_{r,i} (weighted by y_n for T_r) is added. Cost O(r * s * N).
pub fn accumulate_s_t(
    z_digits: &[Vec<u8>],
    data: &Dataset,
    b: u32,
    r: u32,
    cache: &CompositionCache,
) -> (f64, f64) {
    let mut s_acc = KahanSum::new();
    let mut t_acc = KahanSum::new();
    let mut caps = vec![0u32; data.s];
    for (x, &y) in data.points.iter().zip(&data.responses) {
        for (j, cap) in caps.iter_mut().enumerate() {
            *cap = digit_match_depth(&z_digits[j], x[j], b, r);
        }
        let count = cache.count(r, &caps) as f64;
        s_acc.add(count);
        t_acc.add(y * count);
    }
    (s_acc.value(), t_acc.value())
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Computes both weight families. Requires nu <= m - t whenever the net's t
/// is known; for unverified nets the caller vouches for the net quality.
pub fn compute_weights(data: &Dataset, net: &DigitalNet, nu: u32) -> Result<WeightSet> {
    if data.is_empty() {
        return Err(Error::Range("empty dataset".into()));
    }
    if data.s != net.s {
        return Err(Error::Shape(format!("data dimension {} vs net dimension {}", data.s, net.s)));
    }
    if let Some(t) = net.t {
        if nu > net.m as u32 - t {
            return Err(Error::Parameter(format!(
                "nu = {nu} exceeds m - t = {}",
                net.m as u32 - t
            )));
        }
    } else if nu > net.m as u32 * net.alpha as u32 {
        return Err(Error::Parameter(format!("nu = {nu} exceeds digit depth", )));
    }
    let n = data.len() as f64;
    let b = net.b;
    let q_max = (net.s - 1).min(nu as usize);
    // signed coefficients (-1)^q binom(s-1, q) / b^q
    let coeffs: Vec<f64> = (0..=q_max)
        .map(|q| {
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial_f64(net.s - 1, q) / f64::from(b).powi(q as i32)
        })
        .collect();
    let scale = f64::from(b).powi(nu as i32 - net.m as i32) / n;
    let cache = CompositionCache::new();

    let pairs: Vec<(f64, f64)> = net
        .digits
        .par_iter()
        .map(|z_digits| {
            // one digit-match pass at depth nu serves every r = nu - q
            let mut s_sums = vec![KahanSum::new(); q_max + 1];
            let mut t_sums = vec![KahanSum::new(); q_max + 1];
            let mut caps = vec![0u32; net.s];
            for (x, &y) in data.points.iter().zip(&data.responses) {
                for (j, cap) in caps.iter_mut().enumerate() {
                    *cap = digit_match_depth(&z_digits[j], x[j], b, nu);
                }
                for q in 0..=q_max {
                    let count = cache.count(nu - q as u32, &caps) as f64;
                    s_sums[q].add(count);
                    t_sums[q].add(y * count);
                }
            }
            let mut wx = KahanSum::new();
            let mut wxy = KahanSum::new();
            for q in 0..=q_max {
                wx.add(coeffs[q] * s_sums[q].value());
                wxy.add(coeffs[q] * t_sums[q].value());
            }
            (scale * wx.value(), scale * wxy.value())
        })
        .collect();

    let mut energy = KahanSum::new();
    for &y in &data.responses {
        energy.add(y * y);
    }
    Ok(WeightSet {
        nu,
        wx: pairs.iter().map(|p| p.0).collect(),
        wxy: pairs.iter().map(|p| p.1).collect(),
        y_energy: energy.value() / n,
        net: NetRef { b, m: net.m, s: net.s, alpha: net.alpha, t: net.t },
    })
}

/// Refinement level from the convergence-optimal rules: m/2 for order 1,
/// alpha*m/(alpha+1) for order >= 2, rounded and clamped to [0, m - t].
pub fn default_nu(m: usize, t: u32, alpha: usize) -> u32 {
    let raw = if alpha <= 1 {
        (m as f64 / 2.0).round()
    } else {
        (alpha as f64 * m as f64 / (alpha as f64 + 1.0)).round()
    };
    (raw as u32).min(m as u32 - t.min(m as u32))
}

/// Weighted loss surrogate: sum f^2 wx - 2 sum f wxy + y_energy.
pub fn app_avg(f_values: &[f64], f_sq_values: &[f64], weights: &WeightSet) -> Result<f64> {
    if f_values.len() != weights.wx.len() || f_sq_values.len() != weights.wx.len() {
        return Err(Error::Shape(format!(
            "{} / {} function values vs {} weights",
            f_values.len(),
            f_sq_values.len(),
            weights.wx.len()
        )));
    }
    let mut acc = KahanSum::new();
    for ((&fsq, &f), (&wx, &wxy)) in
        f_sq_values.iter().zip(f_values).zip(weights.wx.iter().zip(&weights.wxy))
    {
        acc.add(fsq * wx);
        acc.add(-2.0 * f * wxy);
    }
    acc.add(weights.y_energy);
    Ok(acc.value())
}

/// Fraction of total |wx| mass carried by the two largest |wx|.
pub fn weight_concentration(weights: &WeightSet) -> f64 {
    let total = crate::kahan_sum(weights.wx.iter().map(|w| w.abs()));
    if total == 0.0 {
        return 0.0;
    }
    let mut top = [0.0f64; 2];
    for &w in &weights.wx {
        let a = w.abs();
        if a > top[0] {
            top[1] = top[0];
            top[0] = a;
        } else if a > top[1] {
            top[1] = a;
        }
    }
    (top[0] + top[1]) / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_uniform;
    use crate::net::{faure_matrices, generate_points};

    fn uniform_data(n: usize, s: usize, seed: u64) -> Dataset {
        let points = generate_uniform(n, s, seed).unwrap();
        let responses = crate::dataset::add_noise(
            &points.iter().map(|p| p.iter().sum::<f64>()).collect::<Vec<_>>(),
            0.5,
            seed ^ 1,
        )
        .unwrap();
        Dataset::new(points, responses).unwrap()
    }

    #[test]
    fn digit_match_examples() {
        // z = 0.5 = (.1000..)_2 vs x = 0.49: first digits differ
        assert_eq!(digit_match_depth(&[1, 0, 0, 0, 0], 0.49, 2, 5), 0);
        // z = 0.25 = (.01)_2 vs x = 0.26: prefixes agree through depth 5
        assert_eq!(digit_match_depth(&[0, 1], 0.26, 2, 5), 5);
        // x equal to z's value matches to any requested depth
        assert_eq!(digit_match_depth(&[0, 1], 0.25, 2, 2), 2);
        assert_eq!(digit_match_depth(&[1, 2, 0], 1.0 / 3.0 + 2.0 / 9.0, 3, 3), 3);
    }

    #[test]
    fn bounded_composition_counts() {
        assert_eq!(count_bounded_compositions(0, &[3, 1]), 1);
        assert_eq!(count_bounded_compositions(2, &[1, 2]), 2);
        // unconstrained caps give stars and bars: binom(r + s - 1, s - 1)
        assert_eq!(count_bounded_compositions(3, &[3, 3]), 4);
        assert_eq!(count_bounded_compositions(4, &[9, 9, 9]), 15);
    }

    #[test]
    fn composition_count_matches_enumeration() {
        // exhaustive check over r <= 6, s <= 4, caps <= 6
        for s in 1..=4usize {
            for r in 0..=6u32 {
                for trial in 0..30u64 {
                    let caps: Vec<u32> =
                        (0..s).map(|j| (crate::derive_seed(trial, j as u64) % 7) as u32).collect();
                    let brute = crate::net::compositions(r, s)
                        .into_iter()
                        .filter(|d| d.iter().zip(&caps) .all(|(dj, cj)| dj <= cj))
                        .count() as u128;
                    assert_eq!(count_bounded_compositions(r, &caps), brute, "r={r} caps={caps:?}");
                }
            }
        }
    }

    #[test]
    fn cache_agrees_with_direct() {
        let cache = CompositionCache::new();
        for r in 0..5 {
            assert_eq!(cache.count(r, &[2, 5]), count_bounded_compositions(r, &[2, 5]));
            // second read hits the memo
            assert_eq!(cache.count(r, &[2, 5]), count_bounded_compositions(r, &[2, 5]));
        }
    }

    #[test]
    fn accumulate_s_t_examples() {
        let net = generate_points(&faure_matrices(2, 3, 2).unwrap(), 2).unwrap();
        let cache = CompositionCache::new();

        // data = the net point itself: every cap saturates, S_r = binom(r+s-1, s-1)
        let z = &net.points[5];
        let data = Dataset::new(vec![z.clone()], vec![2.0]).unwrap();
        for r in 0..=3u32 {
            let (s_r, t_r) = accumulate_s_t(&net.digits[5], &data, 2, r, &cache);
            assert_eq!(s_r, binomial_f64(r as usize + 1, 1));
            assert_eq!(t_r, 2.0 * s_r);
        }

        // s = 1, first digits differ for every data point: S_r = 0 for r >= 1
        let net1 = generate_points(&faure_matrices(2, 3, 1).unwrap(), 1).unwrap();
        let l_half = net1.points.iter().position(|p| p[0] == 0.5).unwrap();
        let data = Dataset::new(vec![vec![0.1], vec![0.3]], vec![1.0, 1.0]).unwrap();
        let (s1, _) = accumulate_s_t(&net1.digits[l_half], &data, 2, 1, &cache);
        assert_eq!(s1, 0.0);

        // r = 0: single interval, S_0 = N and T_0 = sum y
        let data = uniform_data(20, 2, 3);
        let (s0, t0) = accumulate_s_t(&net.digits[0], &data, 2, 0, &cache);
        assert_eq!(s0, 20.0);
        assert!((t0 - data.responses.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn nu_zero_gives_uniform_weights() {
        let net = generate_points(&faure_matrices(2, 3, 2).unwrap(), 2).unwrap();
        let data = uniform_data(40, 2, 7);
        let w = compute_weights(&data, &net, 0).unwrap();
        let l = net.len() as f64;
        let ybar = data.response_mean();
        for (&wx, &wxy) in w.wx.iter().zip(&w.wxy) {
            assert!((wx - 1.0 / l).abs() < 1e-15);
            assert!((wxy - ybar / l).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_normalize_on_proper_nets() {
        let net = generate_points(&faure_matrices(2, 4, 2).unwrap(), 2).unwrap();
        let data = uniform_data(50, 2, 11);
        for nu in 0..=4 {
            let w = compute_weights(&data, &net, nu).unwrap();
            let sum_wx = crate::kahan_sum(w.wx.iter().copied());
            let sum_wxy = crate::kahan_sum(w.wxy.iter().copied());
            let ybar = data.response_mean();
            assert!((sum_wx - 1.0).abs() <= 1e-9, "nu={nu}: {sum_wx}");
            assert!((sum_wxy - ybar).abs() <= 1e-9 * (1.0 + ybar.abs()), "nu={nu}");
        }
    }

    #[test]
    fn nu_beyond_net_quality_is_rejected() {
        let net = generate_points(&faure_matrices(2, 4, 2).unwrap(), 2).unwrap();
        let data = uniform_data(10, 2, 0);
        assert!(matches!(compute_weights(&data, &net, 5), Err(Error::Parameter(_))));
    }

    #[test]
    fn default_nu_rules() {
        assert_eq!(default_nu(8, 0, 1), 4);
        assert_eq!(default_nu(9, 0, 2), 6);
        assert_eq!(default_nu(4, 4, 1), 0); // clamped to m - t
        assert_eq!(default_nu(9, 0, 1), 5); // round half up
    }

    #[test]
    fn app_avg_of_zero_function_is_energy() {
        let net = generate_points(&faure_matrices(2, 3, 2).unwrap(), 2).unwrap();
        let data = uniform_data(30, 2, 1);
        let w = compute_weights(&data, &net, 2).unwrap();
        let zeros = vec![0.0; net.len()];
        assert_eq!(app_avg(&zeros, &zeros, &w).unwrap(), w.y_energy);
        assert!(matches!(app_avg(&zeros[..3], &zeros, &w), Err(Error::Shape(_))));
    }

    #[test]
    fn constant_function_is_exact() {
        let net = generate_points(&faure_matrices(2, 4, 2).unwrap(), 2).unwrap();
        let data = uniform_data(60, 2, 2);
        let ybar = data.response_mean();
        for c in [-3.0, 0.0, 1.0] {
            let f = vec![c; net.len()];
            let fsq = vec![c * c; net.len()];
            for nu in 0..=4 {
                let w = compute_weights(&data, &net, nu).unwrap();
                let approx = app_avg(&f, &fsq, &w).unwrap();
                let exact = c * c - 2.0 * c * ybar + w.y_energy;
                assert!((approx - exact).abs() <= 1e-9 * (1.0 + c * c), "c={c} nu={nu}");
            }
        }
    }

    #[test]
    fn wxy_is_linear_in_responses() {
        let net = generate_points(&faure_matrices(2, 3, 2).unwrap(), 2).unwrap();
        let data = uniform_data(25, 2, 4);
        let w = compute_weights(&data, &net, 2).unwrap();
        let (a, b) = (1.75, -0.4);
        let scaled = Dataset::new(
            data.points.clone(),
            data.responses.iter().map(|&y| a * y + b).collect(),
        )
        .unwrap();
        let w2 = compute_weights(&scaled, &net, 2).unwrap();
        for l in 0..net.len() {
            let expect = a * w.wxy[l] + b * w.wx[l];
            assert!((w2.wxy[l] - expect).abs() <= 1e-12 * (1.0 + expect.abs()), "l={l}");
        }
    }

    #[test]
    fn concentration_of_uniform_weights() {
        let netref = NetRef { b: 2, m: 2, s: 1, alpha: 1, t: Some(0) };
        let w = WeightSet {
            nu: 0,
            wx: vec![0.25; 4],
            wxy: vec![0.0; 4],
            y_energy: 0.0,
            net: netref,
        };
        assert!((weight_concentration(&w) - 0.5).abs() < 1e-15);
    }
}
