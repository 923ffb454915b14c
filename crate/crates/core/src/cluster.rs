//! Clustering compressions: supercompress (iterative response-loss-guided
//! 2-means splitting), its robust lambda-blend, QMC-Voronoi assignment onto
//! digital-net points, and a plain K-means baseline. All of them summarize a
//! dataset by K centers with cluster-mean responses, evaluated through the
//! clustered loss surrogate app_clst(f) = (1/K) sum_k (f(z_k) - w_k)^2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::net::DigitalNet;
use crate::KahanSum;

const MAX_LLOYD_ITERS: usize = 100;
const LLOYD_TOL: f64 = 1e-9;

/// Which compression produced a [`ClusterModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Supercompress,
    RobustSupercompress,
    QmcVoronoi,
    KMeans,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Supercompress => "supercompress",
            Method::RobustSupercompress => "robust-supercompress",
            Method::QmcVoronoi => "qmc-voronoi",
            Method::KMeans => "kmeans",
        }
    }
}

/// K centers with approximate responses, the index partition that produced
/// them, and per-cluster losses.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    pub partition: Vec<Vec<usize>>,
    pub losses: Vec<f64>,
    pub method: Method,
    /// Set when the splitter ran out of splittable clusters before reaching K.
    pub exhausted: bool,
    /// Original net indices of retained centers (QMC-Voronoi only).
    pub net_indices: Option<Vec<usize>>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Centers + responses as a trainable dataset.
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.centers.clone(), self.responses.clone())
    }

    /// Checks that the partition is a disjoint cover of 0..n.
    pub fn partition_is_valid(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for cluster in &self.partition {
            for &i in cluster {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|v| v)
    }
}

/// Clustered loss surrogate (1/K) sum (f(z_k) - w_k)^2.
pub fn app_clst(f_at_centers: &[f64], responses: &[f64]) -> Result<f64> {
    if f_at_centers.len() != responses.len() {
        return Err(Error::Shape(format!(
            "{} function values vs {} responses",
            f_at_centers.len(),
            responses.len()
        )));
    }
    if f_at_centers.is_empty() {
        return Err(Error::Range("no centers".into()));
    }
    let mut acc = KahanSum::new();
    for (&f, &w) in f_at_centers.iter().zip(responses) {
        acc.add((f - w) * (f - w));
    }
    Ok(acc.value() / f_at_centers.len() as f64)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn mean_of(rows: &[Vec<f64>], idxs: &[usize], dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for &i in idxs {
        for (cj, xj) in c.iter_mut().zip(&rows[i]) {
            *cj += xj;
        }
    }
    for cj in &mut c {
        *cj /= idxs.len() as f64;
    }
    c
}

/// k-means++ seeding over the subset `idxs`: first center uniform, later
/// centers with probability proportional to squared distance from the
/// nearest chosen center.
fn kmeanspp_seed(
    rows: &[Vec<f64>],
    idxs: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let first = idxs[rng.gen_range(0..idxs.len())];
    let mut centers = vec![rows[first].clone()];
    let mut d2: Vec<f64> = idxs.iter().map(|&i| sq_dist(&rows[i], &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateSplit(format!(
                "only {} distinct point(s) for {k} centers",
                centers.len()
            )));
        }
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = idxs.len() - 1;
        for (pos, &w) in d2.iter().enumerate() {
            if u < w {
                chosen = pos;
                break;
            }
            u -= w;
        }
        let center = rows[idxs[chosen]].clone();
        for (pos, &i) in idxs.iter().enumerate() {
            d2[pos] = d2[pos].min(sq_dist(&rows[i], &center));
        }
        centers.push(center);
    }
    Ok(centers)
}

/// Lloyd iterations over a subset. Nearest-center ties break toward the
/// lower center index; an emptied cluster is reseeded at the point farthest
/// from its assigned center. Stops on relative center movement below 1e-9,
/// on an unchanged assignment, or after 100 iterations.
fn lloyd(
    rows: &[Vec<f64>],
    idxs: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<usize>>)> {
    let dim = rows[0].len();
    let mut centers = kmeanspp_seed(rows, idxs, k, rng)?;
    let mut assign = vec![usize::MAX; idxs.len()];
    let parallel = idxs.len() * k * dim > 1 << 22;

    for _ in 0..MAX_LLOYD_ITERS {
        let next: Vec<usize> = if parallel {
            idxs.par_iter()
                .map(|&i| {
                    let mut best = 0;
                    let mut best_d = sq_dist(&rows[i], &centers[0]);
                    for (c, center) in centers.iter().enumerate().skip(1) {
                        let d = sq_dist(&rows[i], center);
                        if d < best_d {
                            best_d = d;
                            best = c;
                        }
                    }
                    best
                })
                .collect()
        } else {
            idxs.iter()
                .map(|&i| {
                    let mut best = 0;
                    let mut best_d = sq_dist(&rows[i], &centers[0]);
                    for (c, center) in centers.iter().enumerate().skip(1) {
                        let d = sq_dist(&rows[i], center);
                        if d < best_d {
                            best_d = d;
                            best = c;
                        }
                    }
                    best
                })
                .collect()
        };

        let unchanged = next == assign;
        assign = next;

        let mut new_centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (pos, &i) in idxs.iter().enumerate() {
            counts[assign[pos]] += 1;
            for (sj, xj) in sums[assign[pos]].iter_mut().zip(&rows[i]) {
                *sj += xj;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from its current center takes over
                let far = idxs
                    .iter()
                    .enumerate()
                    .max_by(|(pa, &ia), (pb, &ib)| {
                        let da = sq_dist(&rows[ia], &centers[assign[*pa]]);
                        let db = sq_dist(&rows[ib], &centers[assign[*pb]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(_, &i)| i)
                    .expect("nonempty subset");
                new_centers.push(rows[far].clone());
            } else {
                let mut c_mean = sums[c].clone();
                for v in &mut c_mean {
                    *v /= counts[c] as f64;
                }
                new_centers.push(c_mean);
            }
        }

        let moved: f64 = centers.iter().zip(&new_centers).map(|(a, b)| sq_dist(a, b)).sum();
        let base: f64 = centers.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum();
        centers = new_centers;
        if unchanged || moved.sqrt() / (1.0 + base.sqrt()) < LLOYD_TOL {
            break;
        }
    }

    // final assignment consistent with the returned centers
    let mut partition = vec![Vec::new(); k];
    for &i in idxs {
        let mut best = 0;
        let mut best_d = sq_dist(&rows[i], &centers[0]);
        for (c, center) in centers.iter().enumerate().skip(1) {
            let d = sq_dist(&rows[i], center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        partition[best].push(i);
    }
    // centers as exact means of the final assignment (emptied ones keep the
    // reseed position)
    for c in 0..k {
        if !partition[c].is_empty() {
            centers[c] = mean_of(rows, &partition[c], dim);
        }
    }
    Ok((centers, partition))
}

/// Splits a point set into two Lloyd clusters with k-means++ seeding.
pub fn two_means(points: &[Vec<f64>], seed: u64) -> Result<([Vec<f64>; 2], [Vec<usize>; 2])> {
    if points.len() < 2 {
        return Err(Error::DegenerateSplit(format!("{} point(s)", points.len())));
    }
    let idxs: Vec<usize> = (0..points.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (centers, parts) = lloyd(points, &idxs, 2, &mut rng)?;
    let [c0, c1]: [Vec<f64>; 2] = centers.try_into().expect("two centers");
    let [p0, p1]: [Vec<usize>; 2] = parts.try_into().expect("two parts");
    if p0.is_empty() || p1.is_empty() {
        return Err(Error::DegenerateSplit("2-means collapsed to one cluster".into()));
    }
    Ok(([c0, c1], [p0, p1]))
}

struct SplitCluster {
    idxs: Vec<usize>,
    center: Vec<f64>,
    loss: f64,
}

/// Shared engine for Algorithm-(S)-style iterative splitting. `split_rows`
/// is the space 2-means runs in; `loss_targets` are the per-point vectors
/// whose within-cluster squared deviation defines the splitting loss.
fn iterative_split(
    split_rows: &[Vec<f64>],
    loss_targets: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<(Vec<SplitCluster>, bool)> {
    let n = split_rows.len();
    if !(2..=n).contains(&k) {
        return Err(Error::Parameter(format!("k = {k} outside 2..=n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = split_rows[0].len();
    let cluster_loss = |idxs: &[usize]| -> f64 {
        let tdim = loss_targets[0].len();
        let mut mean = vec![0.0; tdim];
        for &i in idxs {
            for (mj, tj) in mean.iter_mut().zip(&loss_targets[i]) {
                *mj += tj;
            }
        }
        for mj in &mut mean {
            *mj /= idxs.len() as f64;
        }
        let mut acc = KahanSum::new();
        for &i in idxs {
            acc.add(sq_dist(&loss_targets[i], &mean));
        }
        acc.value()
    };

    let all: Vec<usize> = (0..n).collect();
    let (centers, parts) = lloyd(split_rows, &all, 2, &mut rng)?;
    let mut clusters: Vec<SplitCluster> = centers
        .into_iter()
        .zip(parts)
        .map(|(center, idxs)| {
            let loss = cluster_loss(&idxs);
            SplitCluster { idxs, center, loss }
        })
        .collect();
    if clusters.iter().any(|c| c.idxs.is_empty()) {
        return Err(Error::DegenerateSplit("initial 2-means collapsed".into()));
    }

    let mut exhausted = false;
    while clusters.len() < k {
        // max loss first; ties by larger cardinality, then lower index
        let mut order: Vec<usize> = (0..clusters.len()).collect();
        order.sort_by(|&a, &b| {
            clusters[b]
                .loss
                .partial_cmp(&clusters[a].loss)
                .unwrap()
                .then(clusters[b].idxs.len().cmp(&clusters[a].idxs.len()))
                .then(a.cmp(&b))
        });
        let mut split_done = false;
        for &j in &order {
            if clusters[j].idxs.len() < 2 {
                continue;
            }
            let (two, parts) = match lloyd(split_rows, &clusters[j].idxs, 2, &mut rng) {
                Ok(res) => res,
                Err(Error::DegenerateSplit(_)) => continue,
                Err(e) => return Err(e),
            };
            let [left, right]: [Vec<usize>; 2] = parts.try_into().expect("two parts");
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let parent_loss = clusters[j].loss;
            let l_loss = cluster_loss(&left);
            let r_loss = cluster_loss(&right);
            debug_assert!(
                l_loss + r_loss <= parent_loss + 1e-9 * (1.0 + parent_loss),
                "split increased loss: {l_loss} + {r_loss} > {parent_loss}"
            );
            clusters[j] = SplitCluster { idxs: left, center: two[0].clone(), loss: l_loss };
            clusters.push(SplitCluster { idxs: right, center: two[1].clone(), loss: r_loss });
            split_done = true;
            break;
        }
        if !split_done {
            exhausted = true;
            break;
        }
    }
    let _ = dim;
    Ok((clusters, exhausted))
}

fn response_means(data: &Dataset, partition: &[Vec<usize>]) -> Vec<f64> {
    partition
        .iter()
        .map(|idxs| {
            let mut acc = KahanSum::new();
            for &i in idxs {
                acc.add(data.responses[i]);
            }
            acc.value() / idxs.len() as f64
        })
        .collect()
}

fn response_losses(data: &Dataset, partition: &[Vec<usize>], means: &[f64]) -> Vec<f64> {
    partition
        .iter()
        .zip(means)
        .map(|(idxs, &w)| {
            let mut acc = KahanSum::new();
            for &i in idxs {
                let d = data.responses[i] - w;
                acc.add(d * d);
            }
            acc.value()
        })
        .collect()
}

/// Iterative splitting of the maximum-response-loss cluster into 2-means
/// children until K clusters exist. Centers are cluster centroids, responses
/// are cluster response means, losses are within-cluster response SSE.
pub fn supercompress(data: &Dataset, k: usize, seed: u64) -> Result<ClusterModel> {
    let loss_targets: Vec<Vec<f64>> = data.responses.iter().map(|&y| vec![y]).collect();
    let (clusters, exhausted) = iterative_split(&data.points, &loss_targets, k, seed)?;
    let partition: Vec<Vec<usize>> = clusters.iter().map(|c| c.idxs.clone()).collect();
    let responses = response_means(data, &partition);
    let losses = response_losses(data, &partition, &responses);
    Ok(ClusterModel {
        centers: clusters.into_iter().map(|c| c.center).collect(),
        responses,
        partition,
        losses,
        method: Method::Supercompress,
        exhausted,
        net_indices: None,
    })
}

/// Robust variant: 2-means runs on points augmented with the rescaled
/// response coordinate y * sqrt((1-lambda)/lambda), and splitting is guided
/// by the joint within-cluster loss sum ||z_j - x_i||^2 + (ytilde_i - w_j)^2.
/// Returned centers are the x-parts; responses are means of the original y.
/// lambda = 0 falls back to plain supercompress.
pub fn robust_supercompress(data: &Dataset, k: usize, lambda: f64, seed: u64) -> Result<ClusterModel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda = {lambda} outside [0, 1]")));
    }
    if lambda == 0.0 {
        return supercompress(data, k, seed);
    }
    let factor = ((1.0 - lambda) / lambda).sqrt();
    let augmented: Vec<Vec<f64>> = data
        .points
        .iter()
        .zip(&data.responses)
        .map(|(x, &y)| {
            let mut row = x.clone();
            row.push(y * factor);
            row
        })
        .collect();
    let (clusters, exhausted) = iterative_split(&augmented, &augmented, k, seed)?;
    let partition: Vec<Vec<usize>> = clusters.iter().map(|c| c.idxs.clone()).collect();
    let responses = response_means(data, &partition);
    let losses = clusters.iter().map(|c| c.loss).collect();
    Ok(ClusterModel {
        centers: clusters.into_iter().map(|c| { let mut ctr = c.center; ctr.pop(); ctr }).collect(),
        responses,
        partition,
        losses,
        method: Method::RobustSupercompress,
        exhausted,
        net_indices: None,
    })
}

/// Assigns every data point to its Euclidean-nearest net point (ties toward
/// the lower net index), deletes net points with empty regions, and averages
/// the responses per retained center.
pub fn qmc_voronoi(data: &Dataset, net: &DigitalNet) -> Result<ClusterModel> {
    if net.is_empty() {
        return Err(Error::Parameter("empty net".into()));
    }
    if data.s != net.s {
        return Err(Error::Shape(format!("data dimension {} vs net dimension {}", data.s, net.s)));
    }
    let assign: Vec<usize> = data
        .points
        .par_iter()
        .map(|x| {
            let mut best = 0;
            let mut best_d = sq_dist(x, &net.points[0]);
            for (l, z) in net.points.iter().enumerate().skip(1) {
                let d = sq_dist(x, z);
                if d < best_d {
                    best_d = d;
                    best = l;
                }
            }
            best
        })
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); net.len()];
    for (i, &l) in assign.iter().enumerate() {
        members[l].push(i);
    }
    let mut centers = Vec::new();
    let mut partition = Vec::new();
    let mut net_indices = Vec::new();
    for (l, idxs) in members.into_iter().enumerate() {
        if !idxs.is_empty() {
            centers.push(net.points[l].clone());
            partition.push(idxs);
            net_indices.push(l);
        }
    }
    let responses = response_means(data, &partition);
    let losses = response_losses(data, &partition, &responses);
    Ok(ClusterModel {
        centers,
        responses,
        partition,
        losses,
        method: Method::QmcVoronoi,
        exhausted: false,
        net_indices: Some(net_indices),
    })
}

/// Classical K-means on the input space with cluster-mean responses.
pub fn kmeans(data: &Dataset, k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 || k > data.len() {
        return Err(Error::Parameter(format!("k = {k} outside 1..=n = {}", data.len())));
    }
    let idxs: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (centers, partition) = lloyd(&data.points, &idxs, k, &mut rng)?;
    let responses = response_means(data, &partition);
    let losses = response_losses(data, &partition, &responses);
    Ok(ClusterModel {
        centers,
        responses,
        partition,
        losses,
        method: Method::KMeans,
        exhausted: false,
        net_indices: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{add_noise, generate_uniform};
    use crate::net::{faure_matrices, generate_points};

    fn toy_dataset(points: Vec<Vec<f64>>, responses: Vec<f64>) -> Dataset {
        Dataset::new(points, responses).unwrap()
    }

    #[test]
    fn two_means_separates_a_pair() {
        let pts = vec![vec![0.0], vec![0.9]];
        let (centers, parts) = two_means(&pts, 0).unwrap();
        let mut got: Vec<f64> = centers.iter().map(|c| c[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![0.0, 0.9]);
        assert_eq!(parts[0].len() + parts[1].len(), 2);
    }

    #[test]
    fn two_means_rejects_identical_points() {
        let pts = vec![vec![0.3, 0.3]; 5];
        assert!(matches!(two_means(&pts, 1), Err(Error::DegenerateSplit(_))));
    }

    #[test]
    fn two_means_finds_blobs() {
        let mut pts = Vec::new();
        for i in 0..50 {
            let jitter = (i as f64 / 50.0 - 0.5) * 0.02;
            pts.push(vec![0.2 + jitter]);
            pts.push(vec![0.8 - jitter]);
        }
        let (centers, _) = two_means(&pts, 3).unwrap();
        let mut got: Vec<f64> = centers.iter().map(|c| c[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] - 0.2).abs() < 0.05, "{got:?}");
        assert!((got[1] - 0.8).abs() < 0.05, "{got:?}");
    }

    #[test]
    fn supercompress_constant_responses_split_by_size() {
        let points = generate_uniform(40, 2, 5).unwrap();
        let data = toy_dataset(points, vec![1.0; 40]);
        let model = supercompress(&data, 4, 0).unwrap();
        assert_eq!(model.k(), 4);
        assert!(model.partition_is_valid(40));
        assert!(model.losses.iter().all(|&l| l < 1e-18));
        assert!(model.responses.iter().all(|&w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn supercompress_singletons_have_zero_loss() {
        let points = generate_uniform(6, 1, 9).unwrap();
        let responses: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let data = toy_dataset(points, responses);
        let model = supercompress(&data, 6, 1).unwrap();
        assert_eq!(model.k(), 6);
        let total: f64 = model.losses.iter().sum();
        assert!(total < 1e-18, "total loss {total}");
    }

    #[test]
    fn supercompress_parameter_errors() {
        let data = toy_dataset(generate_uniform(5, 1, 0).unwrap(), vec![0.0; 5]);
        assert!(matches!(supercompress(&data, 1, 0), Err(Error::Parameter(_))));
        assert!(matches!(supercompress(&data, 6, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn supercompress_responses_are_cluster_means() {
        let points = generate_uniform(200, 2, 13).unwrap();
        let raw: Vec<f64> = points.iter().map(|p| p[0] + p[1]).collect();
        let responses = add_noise(&raw, 0.01, 14).unwrap();
        let data = toy_dataset(points, responses);
        let model = supercompress(&data, 16, 2).unwrap();
        assert!(model.partition_is_valid(200));
        for (idxs, &w) in model.partition.iter().zip(&model.responses) {
            let mean: f64 = idxs.iter().map(|&i| data.responses[i]).sum::<f64>() / idxs.len() as f64;
            assert!((mean - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn supercompress_beats_or_matches_enumerated_optimum_on_separated_data() {
        // 1-D separated data: enumeration of all 2-partitions by threshold
        let points: Vec<Vec<f64>> =
            [0.01, 0.02, 0.03, 0.8, 0.82, 0.84].iter().map(|&v| vec![v]).collect();
        let responses = vec![0.0, 0.1, 0.05, 2.0, 2.1, 1.9];
        let data = toy_dataset(points, responses.clone());
        let model = supercompress(&data, 2, 7).unwrap();
        let total: f64 = model.losses.iter().sum();

        let mut best = f64::INFINITY;
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| data.points[a][0].partial_cmp(&data.points[b][0]).unwrap());
        for cut in 1..6 {
            let (a, b) = order.split_at(cut);
            let sse = |ix: &[usize]| {
                let m: f64 = ix.iter().map(|&i| responses[i]).sum::<f64>() / ix.len() as f64;
                ix.iter().map(|&i| (responses[i] - m).powi(2)).sum::<f64>()
            };
            best = best.min(sse(a) + sse(b));
        }
        assert!(total >= best - 1e-12, "found better than optimal?");
        assert!(total <= best + 1e-9, "2-means missed the separated optimum");
    }

    #[test]
    fn robust_lambda_extremes() {
        let points = generate_uniform(30, 2, 21).unwrap();
        let responses: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let data = toy_dataset(points, responses);

        assert!(matches!(robust_supercompress(&data, 4, -0.1, 0), Err(Error::Parameter(_))));
        assert!(matches!(robust_supercompress(&data, 4, 1.5, 0), Err(Error::Parameter(_))));

        // lambda = 0 delegates to plain supercompress
        let a = robust_supercompress(&data, 4, 0.0, 3).unwrap();
        let b = supercompress(&data, 4, 3).unwrap();
        assert_eq!(a.partition, b.partition);
        assert_eq!(a.method, Method::Supercompress);

        // lambda = 1/2 leaves responses unchanged in the augmented space
        let c = robust_supercompress(&data, 4, 0.5, 3).unwrap();
        assert_eq!(c.centers[0].len(), 2);
        assert!(c.partition_is_valid(30));

        // lambda = 1 clusters on geometry alone
        let d = robust_supercompress(&data, 4, 1.0, 3).unwrap();
        assert!(d.partition_is_valid(30));
        for (idxs, &w) in d.partition.iter().zip(&d.responses) {
            let mean: f64 =
                idxs.iter().map(|&i| data.responses[i]).sum::<f64>() / idxs.len() as f64;
            assert!((mean - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn voronoi_on_the_net_itself_keeps_every_center() {
        let net = generate_points(&faure_matrices(2, 3, 2).unwrap(), 2).unwrap();
        let data = toy_dataset(net.points.clone(), (0..8).map(|i| i as f64).collect());
        let model = qmc_voronoi(&data, &net).unwrap();
        assert_eq!(model.k(), 8);
        assert_eq!(model.net_indices.as_ref().unwrap().len(), 8);
        for (k, idxs) in model.partition.iter().enumerate() {
            assert_eq!(idxs, &vec![k]);
        }
        assert!(model.losses.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn voronoi_collapses_to_one_corner() {
        let net = generate_points(&faure_matrices(2, 2, 1).unwrap(), 1).unwrap();
        // all data in [0, 0.1): nearest net point is always 0.0
        let data = toy_dataset(vec![vec![0.01], vec![0.05], vec![0.09]], vec![1.0, 2.0, 3.0]);
        let model = qmc_voronoi(&data, &net).unwrap();
        assert_eq!(model.k(), 1);
        assert_eq!(model.net_indices, Some(vec![0]));
        assert!((model.responses[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn voronoi_assignment_is_nearest() {
        let net = generate_points(&faure_matrices(2, 3, 2).unwrap(), 2).unwrap();
        let points = generate_uniform(100, 2, 31).unwrap();
        let data = toy_dataset(points, vec![0.0; 100]);
        let model = qmc_voronoi(&data, &net).unwrap();
        assert!(model.partition_is_valid(100));
        for (slot, idxs) in model.partition.iter().enumerate() {
            for &i in idxs {
                let d_assigned = sq_dist(&data.points[i], &model.centers[slot]);
                for z in &net.points {
                    assert!(d_assigned <= sq_dist(&data.points[i], z) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn kmeans_single_cluster_is_centroid() {
        let points = generate_uniform(50, 2, 17).unwrap();
        let data = toy_dataset(points.clone(), vec![2.0; 50]);
        let model = kmeans(&data, 1, 0).unwrap();
        for j in 0..2 {
            let mean: f64 = points.iter().map(|p| p[j]).sum::<f64>() / 50.0;
            assert!((model.centers[0][j] - mean).abs() < 1e-12);
        }
        assert_eq!(model.responses, vec![2.0]);
    }

    #[test]
    fn kmeans_n_distinct_points_gives_singletons() {
        let points = generate_uniform(8, 2, 23).unwrap();
        let data = toy_dataset(points, (0..8).map(|i| i as f64).collect());
        let model = kmeans(&data, 8, 4).unwrap();
        assert_eq!(model.k(), 8);
        assert!(model.partition.iter().all(|p| p.len() == 1));
        assert!(model.losses.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn seed_determinism() {
        let points = generate_uniform(120, 2, 3).unwrap();
        let responses: Vec<f64> = points.iter().map(|p| p[0] * p[1]).collect();
        let data = toy_dataset(points, responses);
        for builder in [supercompress, |d: &Dataset, k, s| robust_supercompress(d, k, 0.25, s)] {
            let a = builder(&data, 10, 99).unwrap();
            let b = builder(&data, 10, 99).unwrap();
            assert_eq!(a.centers, b.centers);
            assert_eq!(a.partition, b.partition);
            assert_eq!(a.responses, b.responses);
        }
    }

    #[test]
    fn app_clst_examples() {
        assert_eq!(app_clst(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(app_clst(&[0.0], &[2.0]).unwrap(), 4.0);
        assert!(matches!(app_clst(&[0.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }
}
