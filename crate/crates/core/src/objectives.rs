//! Environments: synthetic test functions, finite arm sets and noisy rewards.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

/// Location matrix in units of 10⁻⁴.
const HARTMANN_P: [[f64; 6]; 4] = [
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
];

const HARTMANN_P_SCALE: f64 = 1e-4;

pub fn hartmann6(x: &[f64]) -> Result<f64> {
    check_len("hartmann6", x.len(), 6)?;
    let mut total = 0.0;
    for i in 0..4 {
        let inner: f64 = (0..6)
            .map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j] * HARTMANN_P_SCALE).powi(2))
            .sum();
        total += HARTMANN_ALPHA[i] * (-inner).exp();
    }
    Ok(-total)
}

pub fn cosine8(x: &[f64]) -> Result<f64> {
    check_len("cosine8", x.len(), 8)?;
    let cos: f64 = x.iter().map(|v| (5.0 * std::f64::consts::PI * v).cos()).sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    Ok(0.1 * cos - sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Hartmann6,
    Cosine8,
}

impl SyntheticKind {
    pub fn dim(self) -> usize {
        match self {
            SyntheticKind::Hartmann6 => 6,
            SyntheticKind::Cosine8 => 8,
        }
    }

    /// Sampling box for arm generation.
    pub fn domain(self) -> (f64, f64) {
        match self {
            SyntheticKind::Hartmann6 => (0.0, 1.0),
            SyntheticKind::Cosine8 => (-1.0, 1.0),
        }
    }

    pub fn eval(self, x: &[f64]) -> Result<f64> {
        match self {
            SyntheticKind::Hartmann6 => hartmann6(x),
            SyntheticKind::Cosine8 => cosine8(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Hartmann6 => "hartmann6",
            SyntheticKind::Cosine8 => "cosine8",
        }
    }
}

/// The finite decision set with its true mean rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    arms: Vec<Vec<f64>>,
    mean_rewards: Vec<f64>,
    best_index: usize,
    noise_sigma: f64,
}

impl ArmSet {
    pub fn new(arms: Vec<Vec<f64>>, mean_rewards: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::invalid("arm set must contain at least one arm"));
        }
        check_len("mean rewards", mean_rewards.len(), arms.len())?;
        let dim = arms[0].len();
        if dim == 0 {
            return Err(Error::invalid("arms must have at least one feature"));
        }
        for (k, a) in arms.iter().enumerate() {
            check_len(&format!("arm {k}"), a.len(), dim)?;
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        if mean_rewards.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean rewards must be finite"));
        }
        let mut best_index = 0;
        for (k, &v) in mean_rewards.iter().enumerate() {
            if v > mean_rewards[best_index] {
                best_index = k;
            }
        }
        Ok(Self {
            arms,
            mean_rewards,
            best_index,
            noise_sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.arms[0].len()
    }

    pub fn arm(&self, k: usize) -> &[f64] {
        &self.arms[k]
    }

    pub fn arms(&self) -> &[Vec<f64>] {
        &self.arms
    }

    pub fn mean_rewards(&self) -> &[f64] {
        &self.mean_rewards
    }

    pub fn best_index(&self) -> usize {
        self.best_index
    }

    pub fn best_reward(&self) -> f64 {
        self.mean_rewards[self.best_index]
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Largest absolute mean reward, used as a surrogate for the function bound.
    pub fn max_abs_reward(&self) -> f64 {
        self.mean_rewards.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `mean[best] − mean[k]`
    pub fn regret(&self, k: usize) -> f64 {
        self.best_reward() - self.mean_rewards[k]
    }

    /// One noisy observation of arm `k`. Exactly one standard normal is drawn
    /// per call, whatever `k` and σ are, so the noise sequence does not
    /// depend on the arms chosen.
    pub fn sample_reward<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<f64> {
        if k >= self.len() {
            return Err(Error::invalid(format!(
                "arm index {k} out of range for {} arms",
                self.len()
            )));
        }
        let z: f64 = StandardNormal.sample(rng);
        Ok(self.mean_rewards[k] + self.noise_sigma * z)
    }
}

/// Samples `k` arms uniformly from the function's domain. Rewards are the
/// negated function values, so maximizing reward minimizes the function.
pub fn build_synthetic_armset(kind: SyntheticKind, k: usize, sigma: f64, seed: u64) -> Result<ArmSet> {
    if k == 0 {
        return Err(Error::invalid("synthetic arm set needs K >= 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (lo, hi) = kind.domain();
    let arms: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..kind.dim()).map(|_| rng.random_range(lo..hi)).collect())
        .collect();
    let means = arms
        .iter()
        .map(|a| kind.eval(a).map(|v| -v))
        .collect::<Result<Vec<_>>>()?;
    ArmSet::new(arms, means, sigma)
}

/// Rows of `feature_1,…,feature_d,response`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut features = Vec::new();
    let mut responses = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(i + 1);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            // A non-numeric first row is a header.
            Err(_) if i == 0 => continue,
            Err(e) => return Err(parse_err(line, format!("non-numeric field: {e}"))),
        };
        if values.len() < 2 {
            return Err(parse_err(line, "need at least one feature and a response".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(line, "non-finite value".into()));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {w} columns, found {}", values.len()),
                ))
            }
            _ => {}
        }
        let (feat, resp) = values.split_at(values.len() - 1);
        features.push(feat.to_vec());
        responses.push(resp[0]);
    }
    if features.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(Dataset {
        features,
        responses,
    })
}

/// Rescales every column to [0, 1]; constant columns map to 0.
pub fn min_max_normalize(rows: &mut [Vec<f64>]) {
    let Some(first) = rows.first() else { return };
    for c in 0..first.len() {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
        let span = hi - lo;
        for r in rows.iter_mut() {
            r[c] = if span > 0.0 { (r[c] - lo) / span } else { 0.0 };
        }
    }
}

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm seeded with `k` distinct sampled rows.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} clusters exceeds the {} data rows",
            points.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = index::sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let dim = points[0].len();
    let mut assignment = vec![0; points.len()];
    let mut history = Vec::new();

    for _ in 0..KMEANS_MAX_ITERS {
        let mut objective = 0.0;
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assignment[i] = c;
            dists[i] = d;
            objective += d;
        }
        history.push(objective);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let next = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // Re-seed from the point farthest from its centroid.
                let far = (0..points.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap();
                dists[far] = 0.0;
                points[far].clone()
            };
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift <= KMEANS_TOL {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignment[i] = nearest(p, &centroids).0;
    }
    Ok(KMeans {
        centroids,
        assignment,
        objective_history: history,
    })
}

/// Clusters a normalized dataset; each centroid becomes an arm whose mean
/// reward is the average response of its members.
pub fn build_armset_from_csv(path: &Path, k_clusters: usize, sigma: f64, seed: u64) -> Result<ArmSet> {
    let mut data = read_dataset_csv(path)?;
    armset_from_dataset(&mut data, k_clusters, sigma, seed)
}

pub fn armset_from_dataset(data: &mut Dataset, k_clusters: usize, sigma: f64, seed: u64) -> Result<ArmSet> {
    min_max_normalize(&mut data.features);
    let km = kmeans(&data.features, k_clusters, seed)?;
    let mut sums = vec![0.0; k_clusters];
    let mut counts = vec![0usize; k_clusters];
    for (&c, &y) in km.assignment.iter().zip(&data.responses) {
        sums[c] += y;
        counts[c] += 1;
    }
    let mut arms = Vec::with_capacity(k_clusters);
    let mut means = Vec::with_capacity(k_clusters);
    for c in 0..k_clusters {
        // A cluster can only end empty when rows are duplicated; drop it.
        if counts[c] == 0 {
            continue;
        }
        arms.push(km.centroids[c].clone());
        means.push(sums[c] / counts[c] as f64);
    }
    ArmSet::new(arms, means, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HARTMANN_MINIMIZER: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];

    // Random scan followed by a shrinking coordinate pattern search.
    fn search_hartmann_min(seed: u64) -> f64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut starts: Vec<(f64, Vec<f64>)> = (0..20_000)
            .map(|_| {
                let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
                (hartmann6(&x).unwrap(), x)
            })
            .collect();
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = f64::INFINITY;
        for (mut fx, mut x) in starts.into_iter().take(10) {
            let mut step = 0.1;
            while step > 1e-7 {
                let mut improved = false;
                for j in 0..6 {
                    for dir in [-1.0, 1.0] {
                        let mut y = x.clone();
                        y[j] = (y[j] + dir * step).clamp(0.0, 1.0);
                        let fy = hartmann6(&y).unwrap();
                        if fy < fx {
                            fx = fy;
                            x = y;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best = best.min(fx);
        }
        best
    }

    #[test]
    fn hartmann_minimum() {
        let at_min = hartmann6(&HARTMANN_MINIMIZER).unwrap();
        assert!((at_min + 3.32237).abs() < 1e-4, "{at_min}");
        let searched = search_hartmann_min(0);
        assert!((searched + 3.32237).abs() < 1e-4, "{searched}");
    }

    #[test]
    fn hartmann_vanishes_far_away() {
        let v = hartmann6(&[10.0; 6]).unwrap();
        assert!(v.abs() < 1e-6);
        assert!(hartmann6(&[0.0; 5]).is_err());
    }

    #[test]
    fn hartmann_constants() {
        assert_eq!(HARTMANN_ALPHA, [1.0, 1.2, 3.0, 3.2]);
        assert_eq!(HARTMANN_A[1], [0.05, 10.0, 17.0, 0.1, 8.0, 14.0]);
        assert_eq!(HARTMANN_P[3], [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0]);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine8(&[0.0; 8]).unwrap() - 0.8).abs() < 1e-15);
        assert!((cosine8(&[1.0; 8]).unwrap() + 8.8).abs() < 1e-12);
        let x = [0.1, -0.3, 0.5, 0.7, -0.9, 0.2, 0.0, -1.0];
        let mut direct = 0.0;
        for v in x {
            direct += 0.1 * (5.0 * std::f64::consts::PI * v).cos() - v * v;
        }
        assert!((cosine8(&x).unwrap() - direct).abs() < 1e-12);
        assert!(cosine8(&[0.0; 6]).is_err());
    }

    #[test]
    fn synthetic_armsets() {
        let a = build_synthetic_armset(SyntheticKind::Hartmann6, 50, 0.01, 4).unwrap();
        assert_eq!(a.len(), 50);
        assert!(a.arms().iter().all(|x| x.len() == 6 && x.iter().all(|v| (0.0..1.0).contains(v))));
        let b = build_synthetic_armset(SyntheticKind::Hartmann6, 50, 0.01, 4).unwrap();
        assert_eq!(a, b);
        for (x, m) in a.arms().iter().zip(a.mean_rewards()) {
            assert_eq!(m + hartmann6(x).unwrap(), 0.0);
        }
        let scan = (0..50)
            .max_by(|&i, &j| {
                (-hartmann6(a.arm(i)).unwrap())
                    .total_cmp(&-hartmann6(a.arm(j)).unwrap())
                    .then(j.cmp(&i))
            })
            .unwrap();
        assert_eq!(a.best_index(), scan);

        let c = build_synthetic_armset(SyntheticKind::Cosine8, 50, 0.01, 4).unwrap();
        assert!(c.arms().iter().all(|x| x.len() == 8 && x.iter().all(|v| (-1.0..1.0).contains(v))));
        assert!(build_synthetic_armset(SyntheticKind::Cosine8, 0, 0.01, 4).is_err());
    }

    #[test]
    fn best_index_tie_break() {
        let a = ArmSet::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![0.5, 2.0, 1.0, 2.0],
            0.0,
        )
        .unwrap();
        assert_eq!(a.best_index(), 1);
        assert_eq!(a.regret(2), 1.0);
        assert_eq!(a.regret(3), 0.0);
    }

    #[test]
    fn armset_validation() {
        assert!(ArmSet::new(vec![], vec![], 0.0).is_err());
        assert!(ArmSet::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0], 0.0).is_err());
        assert!(ArmSet::new(vec![vec![1.0]], vec![0.0], -1.0).is_err());
    }

    #[test]
    fn noiseless_reward_is_exact() {
        let a = build_synthetic_armset(SyntheticKind::Cosine8, 5, 0.0, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for k in 0..5 {
            assert_eq!(a.sample_reward(k, &mut rng).unwrap(), a.mean_rewards()[k]);
        }
        assert!(a.sample_reward(5, &mut rng).is_err());
    }

    #[test]
    fn reward_moments() {
        let sigma = 0.5;
        let a = ArmSet::new(vec![vec![0.0], vec![1.0]], vec![1.0, -2.0], sigma).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| a.sample_reward(1, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean + 2.0).abs() < 5.0 * sigma / (n as f64).sqrt());
        assert!((var - sigma * sigma).abs() < 0.1 * sigma * sigma);
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_singleton_clusters() {
        let f = write_csv("a,b,y\n0,10,1.5\n2,20,2.5\n4,15,-1\n1,12,0\n");
        let arms = build_armset_from_csv(f.path(), 4, 0.0, 3).unwrap();
        assert_eq!(arms.len(), 4);
        let mut expected = vec![
            (vec![0.0, 0.0], 1.5),
            (vec![0.5, 1.0], 2.5),
            (vec![1.0, 0.5], -1.0),
            (vec![0.25, 0.2], 0.0),
        ];
        let mut got: Vec<(Vec<f64>, f64)> = arms
            .arms()
            .iter()
            .cloned()
            .zip(arms.mean_rewards().iter().copied())
            .collect();
        let key = |p: &(Vec<f64>, f64)| p.1;
        expected.sort_by(|a, b| key(a).total_cmp(&key(b)));
        got.sort_by(|a, b| key(a).total_cmp(&key(b)));
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!(g.1, e.1);
            for (p, q) in g.0.iter().zip(&e.0) {
                assert!((p - q).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn csv_deterministic_and_header_optional() {
        let mut body = String::new();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..200 {
            let row: Vec<String> = (0..11).map(|_| format!("{}", rng.random_range(-5.0..5.0))).collect();
            body.push_str(&row.join(","));
            body.push('\n');
        }
        let f = write_csv(&body);
        let a = build_armset_from_csv(f.path(), 20, 0.01, 1).unwrap();
        let b = build_armset_from_csv(f.path(), 20, 0.01, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 10);
        assert_eq!(a.len(), 20);

        let header = write_csv(&format!("{}\n{body}", (0..11).map(|i| format!("c{i}")).collect::<Vec<_>>().join(",")));
        let c = build_armset_from_csv(header.path(), 20, 0.01, 1).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            build_armset_from_csv(Path::new("/nonexistent/data.csv"), 2, 0.0, 0),
            Err(Error::Io { .. })
        ));
        let f = write_csv("1,2,3\n4,5,6\n7,x,9\n");
        match read_dataset_csv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_csv("1,2,3\n4,5\n");
        assert!(matches!(read_dataset_csv(f.path()), Err(Error::Parse { line: 2, .. })));
        let f = write_csv("1,2,3\n4,5,6\n");
        assert!(matches!(
            build_armset_from_csv(f.path(), 3, 0.0, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn kmeans_objective_non_increasing() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let c = (i % 4) as f64;
                vec![c + rng.random_range(-0.6..0.6), c * 0.5 + rng.random_range(-0.6..0.6)]
            })
            .collect();
        for seed in 0..10 {
            let km = kmeans(&pts, 6, seed).unwrap();
            for w in km.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", km.objective_history);
            }
        }
    }
}
