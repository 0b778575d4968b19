use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{pca_project, ProjectionError, ProjectionResult, TsneConfig};
use crate::embedding_io::EmbeddingMatrix;
use crate::matrix::{squared_distance, Matrix};

/// Off-diagonal joint affinities are floored at this value before the final normalization.
pub const AFFINITY_FLOOR: f64 = 1e-12;
/// Per-axis standard deviation of the PCA initialization.
pub const INIT_STDDEV: f64 = 1e-4;

/// PCA axes whose variance is below this fraction of the leading axis are treated as empty.
const DEGENERATE_VARIANCE_RATIO: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandwidthStatus {
    Converged,
    /// Ran out of bisection steps; the best precision found is returned.
    Unconverged,
    /// Every distance is zero; the row is uniform.
    AllZeroDistances,
    /// The target exceeds the largest perplexity the row can express; the row is uniform.
    Unachievable,
}

/// Result of the per-row perplexity search.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    /// Gaussian precision, `p_j ∝ exp(-beta · d²_j)`.
    pub beta: f64,
    /// Normalized conditional distribution over the row's neighbors.
    pub probs: Vec<f64>,
    /// Shannon entropy of `probs` in bits.
    pub entropy_bits: f64,
    pub status: BandwidthStatus,
}

/// Entropy (bits) and normalized distribution at precision `beta`. Distances
/// are shifted by their minimum, which leaves the distribution unchanged.
///
/// Sums run over `order` (ascending distance) so that two rows holding the
/// same distances in a different arrangement produce bit-identical results.
/// Duplicate input points rely on this to receive identical affinities.
fn row_entropy(sq_dists: &[f64], order: &[usize], d_min: f64, beta: f64, probs: &mut [f64]) -> f64 {
    for (p, &d) in probs.iter_mut().zip(sq_dists) {
        *p = (-beta * (d - d_min)).exp();
    }
    let sum: f64 = order.iter().map(|&k| probs[k]).sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    let weighted: f64 = order.iter().map(|&k| probs[k] * (sq_dists[k] - d_min)).sum();
    (sum.ln() + beta * weighted) / std::f64::consts::LN_2
}

/// Binary search for the precision whose conditional distribution has the
/// requested perplexity.
pub fn calibrate_bandwidth(
    sq_dists: &[f64],
    perplexity: f64,
    tol: f64,
    max_iters: usize,
) -> Bandwidth {
    let len = sq_dists.len();
    let uniform = |status| Bandwidth {
        beta: 0.0,
        probs: vec![1.0 / len as f64; len],
        entropy_bits: (len as f64).log2(),
        status,
    };
    if len == 0 || sq_dists.iter().all(|&d| d == 0.0) {
        return uniform(BandwidthStatus::AllZeroDistances);
    }
    let target = perplexity.log2();
    if target - (len as f64).log2() >= tol {
        return uniform(BandwidthStatus::Unachievable);
    }

    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| sq_dists[a].total_cmp(&sq_dists[b]));
    let d_min = sq_dists[order[0]];
    let mean = order.iter().map(|&k| sq_dists[k]).sum::<f64>() / len as f64;
    let mut beta = 1.0 / mean;
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut probs = vec![0.0; len];
    let mut best = (f64::INFINITY, beta, 0.0);

    for _ in 0..max_iters {
        let h = row_entropy(sq_dists, &order, d_min, beta, &mut probs);
        let diff = h - target;
        if diff.abs() < best.0 {
            best = (diff.abs(), beta, h);
        }
        if diff.abs() < tol {
            return Bandwidth {
                beta,
                probs,
                entropy_bits: h,
                status: BandwidthStatus::Converged,
            };
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }

    let (_, beta, h) = best;
    row_entropy(sq_dists, &order, d_min, beta, &mut probs);
    Bandwidth {
        beta,
        probs,
        entropy_bits: h,
        status: BandwidthStatus::Unconverged,
    }
}

/// Row-normalized conditional affinities `p_{j|i}` with per-row status.
pub fn conditional_affinities(
    points: &Matrix,
    cfg: &TsneConfig,
) -> (Matrix, Vec<Bandwidth>) {
    let n = points.rows();
    let rows: Vec<Bandwidth> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dists: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| squared_distance(points.row(i), points.row(j)))
                .collect();
            calibrate_bandwidth(
                &dists,
                cfg.perplexity,
                cfg.perplexity_tolerance,
                cfg.perplexity_max_bisect,
            )
        })
        .collect();

    let mut cond = Matrix::zeros(n, n);
    for (i, bw) in rows.iter().enumerate() {
        let out = cond.row_mut(i);
        let mut k = 0;
        for (j, slot) in out.iter_mut().enumerate() {
            if j != i {
                *slot = bw.probs[k];
                k += 1;
            }
        }
    }
    (cond, rows)
}

/// `P = (C + Cᵀ) / 2N`, floored off the diagonal and renormalized to unit mass.
pub fn symmetrize_affinities(cond: &Matrix) -> Matrix {
    let n = cond.rows();
    let denom = 2.0 * n as f64;
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = (cond.get(i, j) + cond.get(j, i)) / denom;
                p.set(i, j, v.max(AFFINITY_FLOOR));
            }
        }
    }
    let total: f64 = p.as_slice().iter().sum();
    for v in p.as_mut_slice() {
        *v /= total;
    }
    p
}

/// Symmetric joint affinity matrix plus the bandwidth search outcome per row.
#[derive(Debug, Clone)]
pub struct JointAffinities {
    pub p: Matrix,
    pub bandwidths: Vec<Bandwidth>,
}

impl JointAffinities {
    pub fn unconverged_rows(&self) -> usize {
        self.bandwidths
            .iter()
            .filter(|b| b.status != BandwidthStatus::Converged)
            .count()
    }
}

pub fn joint_affinities(
    points: &Matrix,
    cfg: &TsneConfig,
) -> Result<JointAffinities, ProjectionError> {
    let n = points.rows();
    if n < 3 {
        return Err(ProjectionError::TooFewSamples {
            required: 3,
            found: n,
        });
    }
    cfg.validate_for(n)?;
    let (cond, bandwidths) = conditional_affinities(points, cfg);
    Ok(JointAffinities {
        p: symmetrize_affinities(&cond),
        bandwidths,
    })
}

/// Student-t kernel numerators `1 / (1 + |y_i - y_j|²)` (zero diagonal) and their total.
fn student_kernel(y: &Matrix, num: &mut [f64]) -> f64 {
    let n = y.rows();
    let row_sums: Vec<f64> = num
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let yi = y.row(i);
            let mut s = 0.0;
            for (j, slot) in row.iter_mut().enumerate() {
                if j == i {
                    *slot = 0.0;
                } else {
                    *slot = 1.0 / (1.0 + squared_distance(yi, y.row(j)));
                    s += *slot;
                }
            }
            s
        })
        .collect();
    // fixed-order reduction keeps results independent of the thread count
    row_sums.iter().sum()
}

/// `KL(P ‖ Q)` for layout `y`.
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let n = y.rows();
    let mut num = vec![0.0; n * n];
    let z = student_kernel(y, &mut num);
    kl_from_kernel(p, &num, z)
}

fn kl_from_kernel(p: &Matrix, num: &[f64], z: f64) -> f64 {
    let n = p.rows();
    let per_row: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                let pij = p.get(i, j);
                if j != i && pij > 0.0 {
                    s += pij * (pij * z / num[i * n + j]).ln();
                }
            }
            s
        })
        .collect();
    per_row.iter().sum::<f64>().max(0.0)
}

/// Gradient of `KL(exaggeration · P ‖ Q)` with respect to the layout, together
/// with the (unexaggerated) divergence at `y`.
pub fn kl_gradient(p: &Matrix, y: &Matrix, exaggeration: f64) -> (Matrix, f64) {
    let mut num = vec![0.0; y.rows() * y.rows()];
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    let kl = gradient_into(p, y, exaggeration, &mut num, &mut grad);
    (grad, kl)
}

fn gradient_into(
    p: &Matrix,
    y: &Matrix,
    exaggeration: f64,
    num: &mut [f64],
    grad: &mut Matrix,
) -> f64 {
    let n = y.rows();
    let dim = y.cols();
    let z = student_kernel(y, num);
    let num: &[f64] = num;
    grad.as_mut_slice()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, g)| {
            g.fill(0.0);
            let yi = y.row(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let nij = num[i * n + j];
                let mult = (exaggeration * p.get(i, j) - nij / z) * nij;
                for (gk, (a, b)) in g.iter_mut().zip(yi.iter().zip(y.row(j))) {
                    *gk += mult * (a - b);
                }
            }
            for gk in g.iter_mut() {
                *gk *= 4.0;
            }
        });
    kl_from_kernel(p, num, z)
}

/// Momentum gradient descent on the t-SNE objective, one iteration per [`step`](Self::step).
pub struct TsneOptimizer<'a> {
    p: &'a Matrix,
    y: Matrix,
    velocity: Matrix,
    grad: Matrix,
    kernel: Vec<f64>,
    cfg: TsneConfig,
    learning_rate: f64,
    iteration: usize,
}

impl<'a> TsneOptimizer<'a> {
    pub fn new(p: &'a Matrix, init: Matrix, cfg: &TsneConfig) -> Self {
        let n = init.rows();
        let dim = init.cols();
        Self {
            p,
            y: init,
            velocity: Matrix::zeros(n, dim),
            grad: Matrix::zeros(n, dim),
            kernel: vec![0.0; n * n],
            learning_rate: cfg.effective_learning_rate(n),
            cfg: cfg.clone(),
            iteration: 0,
        }
    }

    pub fn coords(&self) -> &Matrix {
        &self.y
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_coords(self) -> Matrix {
        self.y
    }

    /// Performs one update and returns the KL divergence of the layout before it.
    pub fn step(&mut self) -> Result<f64, ProjectionError> {
        let early = self.iteration < self.cfg.early_exaggeration_iters;
        let (exaggeration, momentum) = if early {
            (self.cfg.early_exaggeration_factor, self.cfg.momentum_early)
        } else {
            (1.0, self.cfg.momentum_late)
        };
        let kl = gradient_into(self.p, &self.y, exaggeration, &mut self.kernel, &mut self.grad);

        let lr = self.learning_rate;
        for ((v, g), y) in self
            .velocity
            .as_mut_slice()
            .iter_mut()
            .zip(self.grad.as_slice())
            .zip(self.y.as_mut_slice())
        {
            *v = momentum * *v - lr * g;
            *y += *v;
        }
        recenter(&mut self.y);
        if !self.y.is_finite() || !kl.is_finite() {
            return Err(ProjectionError::NonFiniteUpdate {
                iteration: self.iteration,
            });
        }
        self.iteration += 1;
        Ok(kl)
    }

    pub fn kl(&self) -> f64 {
        kl_divergence(self.p, &self.y)
    }
}

fn recenter(y: &mut Matrix) {
    let n = y.rows();
    for k in 0..y.cols() {
        let mean = (0..n).map(|i| y.get(i, k)).sum::<f64>() / n as f64;
        for i in 0..n {
            y.set(i, k, y.get(i, k) - mean);
        }
    }
}

/// PCA scores rescaled to [`INIT_STDDEV`] per axis. Axes without variance
/// (rank-deficient input) are filled with seeded Gaussian noise of the same scale.
fn initial_layout(points: &Matrix, cfg: &TsneConfig) -> Result<(Matrix, Vec<f64>), ProjectionError> {
    let n = points.rows();
    let k = cfg.target_dim.min(points.cols()).min(n);
    let pca = pca_project(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y = Matrix::zeros(n, cfg.target_dim);
    let top = pca.explained_variance.first().copied().unwrap_or(0.0);
    for axis in 0..cfg.target_dim {
        // variance at rounding level means the axis carries no signal
        let has_signal = axis < k && pca.explained_variance[axis] > DEGENERATE_VARIANCE_RATIO * top;
        let col: Vec<f64> = if has_signal {
            (0..n).map(|i| pca.coords.get(i, axis)).collect()
        } else {
            vec![0.0; n]
        };
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        if sd > 0.0 {
            let scale = INIT_STDDEV / sd;
            for (i, v) in col.iter().enumerate() {
                y.set(i, axis, (v - mean) * scale);
            }
        } else {
            for i in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                y.set(i, axis, z * INIT_STDDEV);
            }
        }
    }
    Ok((y, pca.explained_variance))
}

/// Exact t-SNE on an `f64` point set.
pub fn tsne_embed_matrix(
    points: &Matrix,
    cfg: &TsneConfig,
) -> Result<ProjectionResult, ProjectionError> {
    let n = points.rows();
    if n < 4 {
        return Err(ProjectionError::TooFewSamples {
            required: 4,
            found: n,
        });
    }
    let affinities = joint_affinities(points, cfg)?;
    let (init, pca_explained_variance) = initial_layout(points, cfg)?;

    let mut opt = TsneOptimizer::new(&affinities.p, init, cfg);
    let mut kl_trace = Vec::with_capacity(cfg.total_iters + 1);
    for _ in 0..cfg.total_iters {
        kl_trace.push(opt.step()?);
    }
    kl_trace.push(opt.kl());

    Ok(ProjectionResult {
        coords: opt.into_coords(),
        kl_trace,
        pca_explained_variance,
        unconverged_rows: affinities.unconverged_rows(),
    })
}

/// Exact t-SNE on an embedding matrix.
pub fn tsne_embed(
    m: &EmbeddingMatrix,
    cfg: &TsneConfig,
) -> Result<ProjectionResult, ProjectionError> {
    tsne_embed_matrix(&m.to_matrix(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight(perplexity: f64) -> TsneConfig {
        TsneConfig {
            perplexity,
            perplexity_tolerance: 1e-10,
            perplexity_max_bisect: 200,
            ..TsneConfig::default()
        }
    }

    #[test]
    fn equal_distances_are_uniform() {
        let bw = calibrate_bandwidth(&[4.0; 5], 5.0, 1e-5, 50);
        assert_eq!(bw.status, BandwidthStatus::Converged);
        for p in &bw.probs {
            assert!((p - 0.2).abs() < 1e-15);
        }
        // any other target cannot be reached with equal distances
        let bw = calibrate_bandwidth(&[4.0; 5], 3.0, 1e-5, 50);
        assert_eq!(bw.status, BandwidthStatus::Unconverged);
        assert!(bw.probs.iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn perplexity_above_row_size_is_unachievable() {
        let bw = calibrate_bandwidth(&[1.0, 2.0, 3.0], 4.0, 1e-5, 50);
        assert_eq!(bw.status, BandwidthStatus::Unachievable);
        let bw = calibrate_bandwidth(&[1.0, 2.0, 3.0], 10.0, 1e-5, 50);
        assert_eq!(bw.status, BandwidthStatus::Unachievable);
    }

    #[test]
    fn all_zero_distances_flagged() {
        let bw = calibrate_bandwidth(&[0.0; 4], 2.0, 1e-5, 50);
        assert_eq!(bw.status, BandwidthStatus::AllZeroDistances);
        assert_eq!(bw.probs, vec![0.25; 4]);
    }

    #[test]
    fn bandwidth_hits_tolerance() {
        let d: Vec<f64> = (1..40).map(|i| (i as f64).powf(1.3)).collect();
        let bw = calibrate_bandwidth(&d, 10.0, 1e-5, 50);
        assert_eq!(bw.status, BandwidthStatus::Converged);
        assert!((bw.entropy_bits - 10f64.log2()).abs() < 1e-5);
        let s: f64 = bw.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equilateral_triangle() {
        let h = 3f64.sqrt() / 2.0;
        let pts = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]]);
        let aff = joint_affinities(&pts, &tight(2.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((aff.p.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affinities_need_three_points() {
        let pts = Matrix::from_rows(&[[0.0], [1.0]]);
        assert!(matches!(
            joint_affinities(&pts, &tight(1.0)),
            Err(ProjectionError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn tsne_rejects_tiny_input() {
        let pts = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        assert!(matches!(
            tsne_embed_matrix(&pts, &tight(1.5)),
            Err(ProjectionError::TooFewSamples { required: 4, .. })
        ));
    }

    #[test]
    fn perplexity_must_be_below_sample_count() {
        let pts = Matrix::from_rows(&[[0.0], [1.0], [2.0], [4.0]]);
        assert!(matches!(
            joint_affinities(&pts, &tight(4.0)),
            Err(ProjectionError::InvalidConfig(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let pts = Matrix::from_rows(&[[0.0], [1.0], [2.0], [4.0], [8.0]]);
        let cfg = TsneConfig {
            perplexity: 2.0,
            learning_rate: Some(1e308),
            total_iters: 20,
            early_exaggeration_iters: 5,
            ..TsneConfig::default()
        };
        assert!(matches!(
            tsne_embed_matrix(&pts, &cfg),
            Err(ProjectionError::NonFiniteUpdate { .. })
        ));
    }

    #[test]
    fn low_rank_input_still_gets_three_axes() {
        let pts = Matrix::from_rows(&[[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]]);
        let cfg = TsneConfig {
            perplexity: 2.0,
            total_iters: 100,
            early_exaggeration_iters: 30,
            ..TsneConfig::default()
        };
        let r = tsne_embed_matrix(&pts, &cfg).unwrap();
        assert_eq!(r.coords.cols(), 3);
        assert!(r.coords.is_finite());
        assert_eq!(r.kl_trace.len(), 101);
    }
}
