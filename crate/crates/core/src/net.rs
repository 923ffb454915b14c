//! Digital (t,m,s)-nets in prime base b: Faure generating matrices, matrix
//! files, higher-order row interlacing, point generation and exhaustive
//! verification of the net property on elementary intervals.
//!
//! Net points carry their exact base-b digit vectors; every interval-
//! membership decision works on digits, never on floats, so b-adic
//! boundaries are handled exactly.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A set of generating matrices over Z_b. For order alpha = 1 each matrix is
/// m x m; after interlacing each is (alpha * m) x m.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingMatrixSet {
    pub b: u32,
    pub m: usize,
    pub alpha: usize,
    /// Row-major matrices, entries in 0..b.
    pub matrices: Vec<Vec<Vec<u8>>>,
    /// Net quality parameter guaranteed by the construction, when known.
    pub known_t: Option<u32>,
}

/// b^m points in `[0,1)^s` with exact digit vectors of length alpha * m.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalNet {
    pub b: u32,
    pub m: usize,
    pub s: usize,
    pub alpha: usize,
    /// Verified or construction-guaranteed t; `None` when unknown (large
    /// nets where exhaustive verification is infeasible).
    pub t: Option<u32>,
    pub points: Vec<Vec<f64>>,
    /// digits[l][j][i] is the i-th base-b digit of coordinate j of point l.
    pub digits: Vec<Vec<Vec<u8>>>,
}

impl DigitalNet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Axis-aligned elementary interval: per-axis refinement exponents `d` and
/// grid position `a` with `a[j] < b^d[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryInterval {
    pub d: Vec<u32>,
    pub a: Vec<u64>,
}

impl ElementaryInterval {
    /// Interval containing the net point with the given digit vectors.
    pub fn containing(digits: &[Vec<u8>], d: &[u32], b: u32) -> Self {
        let a = digits
            .iter()
            .zip(d)
            .map(|(dig, &dj)| {
                let mut acc = 0u64;
                for i in 0..dj as usize {
                    acc = acc * u64::from(b) + u64::from(dig.get(i).copied().unwrap_or(0));
                }
                acc
            })
            .collect();
        Self { d: d.to_vec(), a }
    }

    /// Exact membership for a net point given by digit vectors.
    pub fn contains_digits(&self, digits: &[Vec<u8>], b: u32) -> bool {
        digits.iter().zip(&self.d).zip(&self.a).all(|((dig, &dj), &aj)| {
            let mut acc = 0u64;
            for i in 0..dj as usize {
                acc = acc * u64::from(b) + u64::from(dig.get(i).copied().unwrap_or(0));
            }
            acc == aj
        })
    }

    /// Membership for a float point (used for data, not for net points).
    pub fn contains_float(&self, x: &[f64], b: u32) -> bool {
        x.iter()
            .zip(&self.d)
            .zip(&self.a)
            .all(|((&xj, &dj), &aj)| (xj * f64::from(b).powi(dj as i32)).floor() as u64 == aj)
    }
}

fn is_prime(b: u32) -> bool {
    if b < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= b {
        if b % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// All vectors in N_0^parts with component sum `total`.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; parts];
    fn rec(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(out, cur, pos + 1, left - v);
        }
    }
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(&mut out, &mut cur, 0, total);
    out
}

/// Faure generating matrices: C_j is the (j-1)-th power of the upper
/// unitriangular Pascal matrix over Z_b, entrywise
/// `binom(n-1, k-1) * (j-1)^(n-k) mod b` at row k, column n. For prime b and
/// s <= b these determine a (0,m,s)-net.
pub fn faure_matrices(b: u32, m: usize, s: usize) -> Result<GeneratingMatrixSet> {
    if !is_prime(b) {
        return Err(Error::Parameter(format!("base {b} is not prime")));
    }
    if m == 0 || s == 0 {
        return Err(Error::Parameter(format!("m = {m}, s = {s}: both must be positive")));
    }
    // Pascal triangle binom(n, k) mod b, indices 0..m
    let mut binom = vec![vec![0u32; m]; m];
    for n in 0..m {
        binom[n][0] = 1;
        for k in 1..=n {
            binom[n][k] = (binom[n - 1][k - 1] + if k <= n - 1 { binom[n - 1][k] } else { 0 }) % b;
        }
    }
    let matrices = (1..=s as u32)
        .map(|j| {
            let c = j - 1;
            (1..=m)
                .map(|k| {
                    (1..=m)
                        .map(|n| {
                            if n < k {
                                0
                            } else {
                                let mut pw = 1u32;
                                for _ in 0..(n - k) {
                                    pw = pw * (c % b) % b;
                                }
                                (binom[n - 1][k - 1] * pw % b) as u8
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(GeneratingMatrixSet {
        b,
        m,
        alpha: 1,
        matrices,
        known_t: if s <= b as usize { Some(0) } else { None },
    })
}

/// Parses a generating-matrix file: first line `b m s alpha`, then s blocks
/// of alpha*m rows of m integers in Z_b.
pub fn load_matrices<P: AsRef<Path>>(path: P) -> Result<GeneratingMatrixSet> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace();
    let mut next_int = |what: &str| -> Result<u64> {
        tokens
            .next()
            .ok_or_else(|| Error::Format(format!("matrix file ended while reading {what}")))?
            .parse::<u64>()
            .map_err(|e| Error::Format(format!("bad {what}: {e}")))
    };
    let b = next_int("base")? as u32;
    let m = next_int("m")? as usize;
    let s = next_int("s")? as usize;
    let alpha = next_int("alpha")? as usize;
    if !is_prime(b) {
        return Err(Error::Format(format!("base {b} is not prime")));
    }
    if m == 0 || s == 0 || alpha == 0 {
        return Err(Error::Format(format!("bad header: b={b} m={m} s={s} alpha={alpha}")));
    }
    let mut matrices = Vec::with_capacity(s);
    for _ in 0..s {
        let mut rows = Vec::with_capacity(alpha * m);
        for _ in 0..alpha * m {
            let mut row = Vec::with_capacity(m);
            for _ in 0..m {
                let v = next_int("matrix entry")?;
                if v >= u64::from(b) {
                    return Err(Error::Format(format!("entry {v} not in Z_{b}")));
                }
                row.push(v as u8);
            }
            rows.push(row);
        }
        matrices.push(rows);
    }
    if tokens.next().is_some() {
        return Err(Error::Format("trailing tokens after matrix blocks".into()));
    }
    Ok(GeneratingMatrixSet { b, m, alpha, matrices, known_t: None })
}

/// Writes the plain-text matrix format read by [`load_matrices`].
pub fn save_matrices<P: AsRef<Path>>(set: &GeneratingMatrixSet, path: P) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {} {} {}\n", set.b, set.m, set.matrices.len(), set.alpha));
    for mat in &set.matrices {
        for row in mat {
            let line: Vec<String> = row.iter().map(|e| e.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Interlaces matrices for alpha*s coordinates into s higher-order matrices:
/// D_j row (v-1)*alpha + u is row v of C_((j-1)*alpha + u).
pub fn interlace(set: &GeneratingMatrixSet, alpha: usize) -> Result<GeneratingMatrixSet> {
    if alpha == 0 {
        return Err(Error::Parameter("alpha must be positive".into()));
    }
    if set.alpha != 1 {
        return Err(Error::Parameter("interlace expects order-1 input matrices".into()));
    }
    if alpha == 1 {
        return Ok(set.clone());
    }
    if set.matrices.len() % alpha != 0 {
        return Err(Error::Parameter(format!(
            "{} matrices not divisible by alpha = {alpha}",
            set.matrices.len()
        )));
    }
    let s = set.matrices.len() / alpha;
    let m = set.m;
    let matrices = (0..s)
        .map(|j| {
            let mut rows = Vec::with_capacity(alpha * m);
            for v in 0..m {
                for u in 0..alpha {
                    rows.push(set.matrices[j * alpha + u][v].clone());
                }
            }
            rows
        })
        .collect();
    Ok(GeneratingMatrixSet { b: set.b, m, alpha, matrices, known_t: None })
}

/// Generates the b^m net points for the first `s` matrices. Point l is the
/// matrix-vector product of C_j with the base-b digits of l-1 (least
/// significant first); float coordinates are reconstructed from the digits.
pub fn generate_points(set: &GeneratingMatrixSet, s: usize) -> Result<DigitalNet> {
    if s == 0 || s > set.matrices.len() {
        return Err(Error::Parameter(format!(
            "requested {s} coordinates, set provides {}",
            set.matrices.len()
        )));
    }
    let b = set.b;
    let m = set.m;
    let l_total = (u64::from(b)).checked_pow(m as u32).filter(|&l| l <= 1 << 26).ok_or_else(
        || Error::Parameter(format!("net size {b}^{m} too large to materialize")),
    )? as usize;
    let dlen = set.alpha * m;
    let rows: Vec<(Vec<f64>, Vec<Vec<u8>>)> = (0..l_total)
        .into_par_iter()
        .map(|l| {
            // digits of l, least significant first
            let mut lambda = vec![0u8; m];
            let mut rest = l as u64;
            for digit in lambda.iter_mut() {
                *digit = (rest % u64::from(b)) as u8;
                rest /= u64::from(b);
            }
            let mut point = Vec::with_capacity(s);
            let mut digits = Vec::with_capacity(s);
            for mat in &set.matrices[..s] {
                let dig: Vec<u8> = (0..dlen)
                    .map(|row| {
                        let acc: u64 = mat[row]
                            .iter()
                            .zip(&lambda)
                            .map(|(&c, &lam)| u64::from(c) * u64::from(lam))
                            .sum();
                        (acc % u64::from(b)) as u8
                    })
                    .collect();
                // Horner from the last digit keeps reconstruction within 1 ulp
                let mut value = 0.0f64;
                for &d in dig.iter().rev() {
                    value = (value + f64::from(d)) / f64::from(b);
                }
                point.push(value);
                digits.push(dig);
            }
            (point, digits)
        })
        .collect();
    let mut points = Vec::with_capacity(l_total);
    let mut digits = Vec::with_capacity(l_total);
    for (p, d) in rows {
        points.push(p);
        digits.push(d);
    }
    Ok(DigitalNet { b, m, s, alpha: set.alpha, t: set.known_t, points, digits })
}

/// Exhaustively checks the net property: every elementary interval with
/// |d| = m - t holds exactly b^t points. Membership is decided on exact
/// digits. Cost grows like b^(m-t) * binom(m-t+s-1, s-1) * L; intended as a
/// verification oracle for small nets.
pub fn verify_net(net: &DigitalNet, t_candidate: u32) -> bool {
    let m = net.m as u32;
    if t_candidate > m {
        return false;
    }
    let depth = m - t_candidate;
    let b = u64::from(net.b);
    let quota = b.pow(t_candidate);
    for d in compositions(depth, net.s) {
        let cells = b.pow(depth) as usize;
        let mut counts = vec![0u64; cells];
        for digs in &net.digits {
            let mut cell = 0u64;
            for (j, &dj) in d.iter().enumerate() {
                let mut a = 0u64;
                for i in 0..dj as usize {
                    a = a * b + u64::from(digs[j].get(i).copied().unwrap_or(0));
                }
                cell = cell * b.pow(dj) + a;
            }
            let slot = &mut counts[cell as usize];
            *slot += 1;
            if *slot > quota {
                return false;
            }
        }
        // total count is b^m = cells * quota, so no overfull cell means all full
    }
    true
}

/// Smallest t for which [`verify_net`] passes. t = m always verifies.
pub fn min_t(net: &DigitalNet) -> u32 {
    (0..=net.m as u32).find(|&t| verify_net(net, t)).unwrap_or(net.m as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn faure_small_matrices() {
        // j = 1 is the identity; j = 2 is the Pascal matrix mod 2
        let set = faure_matrices(2, 3, 2).unwrap();
        assert_eq!(set.matrices[0], vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(set.matrices[1], vec![vec![1, 1, 1], vec![0, 1, 0], vec![0, 0, 1]]);
        // diagonals are 1 for every j
        let set = faure_matrices(5, 4, 5).unwrap();
        for mat in &set.matrices {
            for k in 0..4 {
                assert_eq!(mat[k][k], 1);
            }
        }
        assert!(matches!(faure_matrices(4, 3, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn identity_net_points_in_order() {
        let set = GeneratingMatrixSet {
            b: 2,
            m: 2,
            alpha: 1,
            matrices: vec![vec![vec![1, 0], vec![0, 1]]],
            known_t: Some(0),
        };
        let net = generate_points(&set, 1).unwrap();
        let coords: Vec<f64> = net.points.iter().map(|p| p[0]).collect();
        assert_eq!(coords, vec![0.0, 0.5, 0.25, 0.75]);
        assert_eq!(net.points[0], vec![0.0]); // l = 1 is always the origin
    }

    #[test]
    fn digit_reconstruction_is_exact() {
        let net = generate_points(&faure_matrices(3, 4, 3).unwrap(), 3).unwrap();
        for (p, digs) in net.points.iter().zip(&net.digits) {
            for (coord, dig) in p.iter().zip(digs) {
                let recon: f64 = dig.iter().enumerate().map(|(i, &d)| f64::from(d) / 3f64.powi(i as i32 + 1)).sum();
                assert!((coord - recon).abs() <= f64::EPSILON, "{coord} vs {recon}");
            }
        }
    }

    #[test]
    fn van_der_corput_is_a_0_net() {
        let net = generate_points(&faure_matrices(2, 2, 1).unwrap(), 1).unwrap();
        assert!(verify_net(&net, 0));
    }

    #[test]
    fn faure_b2_m4_s2_is_a_0_4_2_net() {
        let net = generate_points(&faure_matrices(2, 4, 2).unwrap(), 2).unwrap();
        assert!(verify_net(&net, 0));
        assert_eq!(min_t(&net), 0);
        assert!(verify_net(&net, 4)); // t = m always holds
    }

    #[test]
    fn degenerate_three_dim_net_has_large_t() {
        // base 2 supports only two distinct Faure matrices, so s = 3 repeats
        // one of them and the pairwise net property fails below t = m - 1
        let net = generate_points(&faure_matrices(2, 4, 3).unwrap(), 3).unwrap();
        assert_eq!(min_t(&net), 3);
    }

    #[test]
    fn matrix_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mats.txt");

        std::fs::write(&path, "2 2 1 1\n1 0\n0 1\n").unwrap();
        let set = load_matrices(&path).unwrap();
        assert_eq!(set.matrices, vec![vec![vec![1, 0], vec![0, 1]]]);

        let faure = faure_matrices(3, 3, 2).unwrap();
        save_matrices(&faure, &path).unwrap();
        let back = load_matrices(&path).unwrap();
        assert_eq!(back.matrices, faure.matrices);
        assert_eq!(back.b, 3);

        std::fs::write(&path, "2 2 1 1\n1 2\n0 1\n").unwrap();
        assert!(matches!(load_matrices(&path), Err(Error::Format(_))));
        std::fs::write(&path, "2 2 1 1\n1 0\n").unwrap();
        assert!(matches!(load_matrices(&path), Err(Error::Format(_))));
    }

    #[test]
    fn interlace_examples() {
        let single = GeneratingMatrixSet {
            b: 2,
            m: 1,
            alpha: 1,
            matrices: vec![vec![vec![1]], vec![vec![1]]],
            known_t: None,
        };
        let d = interlace(&single, 2).unwrap();
        assert_eq!(d.matrices, vec![vec![vec![1], vec![1]]]);

        let set = faure_matrices(2, 2, 4).unwrap();
        let inter = interlace(&set, 2).unwrap();
        assert_eq!(inter.matrices.len(), 2);
        for (j, mat) in inter.matrices.iter().enumerate() {
            assert_eq!(mat.len(), 4);
            // row order: (C_{2j+1})_1, (C_{2j+2})_1, (C_{2j+1})_2, (C_{2j+2})_2
            assert_eq!(mat[0], set.matrices[2 * j][0]);
            assert_eq!(mat[1], set.matrices[2 * j + 1][0]);
            assert_eq!(mat[2], set.matrices[2 * j][1]);
            assert_eq!(mat[3], set.matrices[2 * j + 1][1]);
        }

        assert_eq!(interlace(&set, 1).unwrap(), set);
        assert!(matches!(interlace(&set, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn interlaced_net_uses_alpha_m_digits() {
        let set = interlace(&faure_matrices(2, 3, 4).unwrap(), 2).unwrap();
        let net = generate_points(&set, 2).unwrap();
        assert_eq!(net.alpha, 2);
        assert_eq!(net.digits[1][0].len(), 6);
        // reconstruction still exact
        for (p, digs) in net.points.iter().zip(&net.digits) {
            for (coord, dig) in p.iter().zip(digs) {
                let recon: f64 =
                    dig.iter().enumerate().map(|(i, &d)| f64::from(d) / 2f64.powi(i as i32 + 1)).sum();
                assert!((coord - recon).abs() <= f64::EPSILON);
            }
        }
    }

    proptest! {
        // distinct l map to distinct digit matrices (generation is injective)
        #[test]
        fn generation_is_injective(m in 1usize..5, s in 1usize..3) {
            let net = generate_points(&faure_matrices(3, m, 2).unwrap(), s).unwrap();
            let mut seen = std::collections::HashSet::new();
            for digs in &net.digits {
                prop_assert!(seen.insert(digs.clone()));
            }
        }

        // interlacing matches direct row bookkeeping on random small inputs
        #[test]
        fn interlace_matches_bruteforce(m in 1usize..4, s in 1usize..3, alpha in 2usize..4, seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let matrices: Vec<Vec<Vec<u8>>> = (0..alpha * s)
                .map(|_| (0..m).map(|_| (0..m).map(|_| rng.gen_range(0..2u8)).collect()).collect())
                .collect();
            let set = GeneratingMatrixSet { b: 2, m, alpha: 1, matrices: matrices.clone(), known_t: None };
            let inter = interlace(&set, alpha).unwrap();
            for j in 0..s {
                for v in 0..m {
                    for u in 0..alpha {
                        prop_assert_eq!(&inter.matrices[j][v * alpha + u], &matrices[j * alpha + u][v]);
                    }
                }
            }
        }
    }
}
