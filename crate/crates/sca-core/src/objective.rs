//! Losses, regularizers, and the full training objective
//! `U(w) = (1/N) sum_i l(y_i, f(w; x_i)) + lambda * r(w)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math;
use crate::nn::{MlpModel, OutputHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `(y - f)^2`, paired with the identity head.
    Squared,
    /// `-(y log f + (1 - y) log(1 - f))`, paired with the sigmoid head.
    CrossEntropy,
}

impl LossKind {
    pub(crate) fn check_head(self, head: OutputHead) -> Result<()> {
        let ok = matches!(
            (self, head),
            (LossKind::Squared, OutputHead::Identity)
                | (LossKind::CrossEntropy, OutputHead::Sigmoid)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::IncompatibleLossHead)
        }
    }
}

/// Loss of a single prediction `f` against target `y`.
pub fn loss_value(loss: LossKind, y: f64, f: f64) -> Result<f64> {
    match loss {
        LossKind::Squared => Ok((y - f) * (y - f)),
        LossKind::CrossEntropy => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::LossDomain { value: f });
            }
            if y != 0.0 && y != 1.0 {
                return Err(Error::InvalidParameter {
                    what: "cross-entropy targets must be 0 or 1",
                });
            }
            Ok(-(y * math::ln(f) + (1.0 - y) * math::ln(1.0 - f)))
        }
    }
}

/// Weight groups for structured sparsity; per-group weights are the square
/// root of the group size.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    sets: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl Groups {
    pub fn new(sets: Vec<Vec<usize>>) -> Result<Groups> {
        if sets.is_empty() || sets.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidParameter {
                what: "groups must be non-empty",
            });
        }
        let weights = sets.iter().map(|s| math::sqrt(s.len() as f64)).collect();
        Ok(Groups { sets, weights })
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn weight(&self, p: usize) -> f64 {
        self.weights[p]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Checks that the groups exactly partition `0..q`.
    pub fn validate_partition(&self, q: usize) -> Result<()> {
        let mut seen = vec![false; q];
        for set in &self.sets {
            for &i in set {
                if i >= q {
                    return Err(Error::GroupIndexOutOfRange { index: i, len: q });
                }
                if seen[i] {
                    return Err(Error::InvalidParameter {
                        what: "groups overlap",
                    });
                }
                seen[i] = true;
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                what: "groups do not cover all weights",
            })
        }
    }
}

/// kNN graph over samples with nonnegative similarity weights.
///
/// `neighbors_of` exposes the raw k-nearest sets; `edges_of` the
/// max-symmetrized adjacency actually used by the manifold term.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    knn: Vec<Vec<usize>>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.knn[i]
    }

    pub fn edges_of(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }
}

/// Builds the kNN graph with Gaussian weights
/// `q_ij = exp(-|x_i - x_j|^2 / (2 sigma^2))`, symmetrized by
/// `max(q_ij, q_ji)`. Distance ties break toward the lower index.
pub fn build_knn_graph(inputs: &Mat, k: usize, sigma: f64) -> Result<NeighborGraph> {
    let n = inputs.rows();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter {
            what: "neighbor count must satisfy 0 < k < n",
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter {
            what: "sigma must be positive",
        });
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut knn = Vec::with_capacity(n);
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let mut d2 = 0.0;
                let (ri, rj) = (inputs.row(i), inputs.row(j));
                for t in 0..inputs.cols() {
                    let d = ri[t] - rj[t];
                    d2 += d * d;
                }
                (d2, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        dists.truncate(k);
        knn.push(dists.iter().map(|&(_, j)| j).collect::<Vec<_>>());
        for &(d2, j) in &dists {
            let q = math::exp(-d2 * inv);
            upsert_edge(&mut adj[i], j, q);
            upsert_edge(&mut adj[j], i, q);
        }
    }
    for edges in &mut adj {
        edges.sort_by_key(|&(j, _)| j);
    }
    Ok(NeighborGraph { k, knn, adj })
}

fn upsert_edge(edges: &mut Vec<(usize, f64)>, j: usize, q: f64) {
    match edges.iter_mut().find(|(t, _)| *t == j) {
        Some((_, w)) => *w = w.max(q),
        None => edges.push((j, q)),
    }
}

/// Median pairwise Euclidean distance over at most `cap` rows; the usual
/// default for the Gaussian kernel width.
pub fn median_heuristic_sigma(inputs: &Mat, cap: usize) -> f64 {
    let n = inputs.rows().min(cap.max(2));
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for t in 0..inputs.cols() {
                let d = inputs.get(i, t) - inputs.get(j, t);
                d2 += d * d;
            }
            dists.push(math::sqrt(d2));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    if m == 0 {
        return 1.0;
    }
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

#[derive(Debug, Clone)]
pub enum RegKind {
    /// `(1/2) |w|^2`
    L2,
    /// `|w|_1`
    L1,
    /// `mix * |w|_1 + (1 - mix) * (1/2) |w|^2`
    ElasticNet { mix: f64 },
    /// `sum_p a_p |w_p|` over the given groups.
    GroupSparse(Groups),
    /// Output-smoothness penalty over a neighbor graph; needs the model and
    /// the sample inputs to evaluate.
    Manifold(NeighborGraph),
}

#[derive(Debug, Clone)]
pub struct Regularizer {
    pub kind: RegKind,
    pub lambda: f64,
}

impl Regularizer {
    pub fn new(kind: RegKind, lambda: f64) -> Result<Regularizer> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter {
                what: "lambda must be positive and finite",
            });
        }
        if let RegKind::ElasticNet { mix } = kind {
            if !(0.0..=1.0).contains(&mix) {
                return Err(Error::InvalidParameter {
                    what: "elastic-net mix must lie in [0, 1]",
                });
            }
        }
        Ok(Regularizer { kind, lambda })
    }

    /// `r(w)` without the `lambda` factor. The manifold variant needs model
    /// context; use [`Regularizer::value_with_model`] for it.
    pub fn value(&self, w: &[f64]) -> Result<f64> {
        match &self.kind {
            RegKind::L2 => Ok(0.5 * w.iter().map(|v| v * v).sum::<f64>()),
            RegKind::L1 => Ok(w.iter().map(|v| v.abs()).sum()),
            RegKind::ElasticNet { mix } => {
                let l1: f64 = w.iter().map(|v| v.abs()).sum();
                let l2: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
                Ok(mix * l1 + (1.0 - mix) * l2)
            }
            RegKind::GroupSparse(groups) => {
                let mut total = 0.0;
                for (p, set) in groups.sets().iter().enumerate() {
                    let mut s = 0.0;
                    for &i in set {
                        if i >= w.len() {
                            return Err(Error::GroupIndexOutOfRange {
                                index: i,
                                len: w.len(),
                            });
                        }
                        s += w[i] * w[i];
                    }
                    total += groups.weight(p) * math::sqrt(s);
                }
                Ok(total)
            }
            RegKind::Manifold(_) => Err(Error::Unsupported {
                what: "manifold regularizer needs model context",
            }),
        }
    }

    /// `r(w)`, evaluating the manifold variant with `template`'s topology
    /// and head at weights `w` over `inputs`.
    pub fn value_with_model(&self, w: &[f64], template: &MlpModel, inputs: &Mat) -> Result<f64> {
        match &self.kind {
            RegKind::Manifold(graph) => {
                let model = template.with_weights(w.to_vec())?;
                manifold_value(graph, &model, inputs, None)
            }
            _ => self.value(w),
        }
    }

    /// A subgradient of `r` at `w` (without `lambda`); zero is chosen at
    /// kinks. The manifold variant is not supported here.
    pub fn subgradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            RegKind::L2 => Ok(w.to_vec()),
            RegKind::L1 => Ok(w.iter().map(|&v| sign(v)).collect()),
            RegKind::ElasticNet { mix } => Ok(w
                .iter()
                .map(|&v| mix * sign(v) + (1.0 - mix) * v)
                .collect()),
            RegKind::GroupSparse(groups) => {
                let mut g = vec![0.0; w.len()];
                for (p, set) in groups.sets().iter().enumerate() {
                    let mut s = 0.0;
                    for &i in set {
                        if i >= w.len() {
                            return Err(Error::GroupIndexOutOfRange {
                                index: i,
                                len: w.len(),
                            });
                        }
                        s += w[i] * w[i];
                    }
                    let norm = math::sqrt(s);
                    if norm > 0.0 {
                        let scale = groups.weight(p) / norm;
                        for &i in set {
                            g[i] = scale * w[i];
                        }
                    }
                }
                Ok(g)
            }
            RegKind::Manifold(_) => Err(Error::Unsupported {
                what: "subgradient of the manifold regularizer",
            }),
        }
    }

    /// Whether `r` splits into independent per-block terms under a
    /// group-consistent partition.
    pub fn is_block_separable(&self) -> bool {
        !matches!(self.kind, RegKind::Manifold(_))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Manifold penalty `sum_i (1/k) sum_{j in N_i} q_ij (f(w;x_i) - f(w;x_j))^2`
/// over the symmetrized graph. `subset` restricts the outer sum.
pub(crate) fn manifold_value(
    graph: &NeighborGraph,
    model: &MlpModel,
    inputs: &Mat,
    subset: Option<&[usize]>,
) -> Result<f64> {
    if graph.len() > inputs.rows() {
        return Err(Error::MissingNeighbor {
            sample: inputs.rows(),
            neighbor: graph.len() - 1,
        });
    }
    let inv_k = 1.0 / graph.k() as f64;
    let mut outputs: Vec<Option<f64>> = vec![None; inputs.rows()];
    let f_of = |i: usize, outputs: &mut Vec<Option<f64>>| -> Result<f64> {
        if let Some(v) = outputs[i] {
            return Ok(v);
        }
        let (out, _) = model.forward(inputs.row(i))?;
        outputs[i] = Some(out);
        Ok(out)
    };
    let mut total = 0.0;
    let iter: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..graph.len()).collect(),
    };
    for i in iter {
        if i >= graph.len() {
            return Err(Error::MissingNeighbor {
                sample: i,
                neighbor: i,
            });
        }
        let fi = f_of(i, &mut outputs)?;
        for &(j, q) in graph.edges_of(i) {
            if j >= inputs.rows() {
                return Err(Error::MissingNeighbor {
                    sample: i,
                    neighbor: j,
                });
            }
            let fj = f_of(j, &mut outputs)?;
            let d = fi - fj;
            total += inv_k * q * d * d;
        }
    }
    Ok(total)
}

/// Full objective `U(w)` of a model over a dataset.
pub fn objective_value(
    model: &MlpModel,
    dataset: &Dataset,
    loss: LossKind,
    reg: &Regularizer,
) -> Result<f64> {
    objective_value_subsampled(model, dataset, loss, reg, None)
}

/// `U(w)` with the data term (and the manifold sum, when applicable)
/// restricted to `subset`; used for cheap progress logging on large sets.
pub fn objective_value_subsampled(
    model: &MlpModel,
    dataset: &Dataset,
    loss: LossKind,
    reg: &Regularizer,
    subset: Option<&[usize]>,
) -> Result<f64> {
    loss.check_head(model.head())?;
    if dataset.len() == 0 {
        return Err(Error::EmptyDataset);
    }
    let idx: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..dataset.len()).collect(),
    };
    let mut data_term = 0.0;
    for &i in &idx {
        let (f, _) = model.forward(dataset.inputs.row(i))?;
        data_term += loss_value(loss, dataset.targets[i], f)?;
    }
    data_term /= idx.len() as f64;
    let r = match &reg.kind {
        RegKind::Manifold(graph) => manifold_value(graph, model, &dataset.inputs, subset)?,
        _ => reg.value(model.weights())?,
    };
    Ok(data_term + reg.lambda * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;
    use crate::nn::Topology;

    #[test]
    fn squared_loss_values() {
        assert_eq!(loss_value(LossKind::Squared, 0.7, 0.7).unwrap(), 0.0);
        assert_eq!(loss_value(LossKind::Squared, 1.0, 0.5).unwrap(), 0.25);
    }

    #[test]
    fn cross_entropy_at_half_is_ln_two() {
        let v = loss_value(LossKind::CrossEntropy, 1.0, 0.5).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_domain_error() {
        assert!(matches!(
            loss_value(LossKind::CrossEntropy, 1.0, 1.0),
            Err(Error::LossDomain { .. })
        ));
        assert!(matches!(
            loss_value(LossKind::CrossEntropy, 1.0, -0.1),
            Err(Error::LossDomain { .. })
        ));
    }

    #[test]
    fn l2_and_l1_values() {
        let l2 = Regularizer::new(RegKind::L2, 1.0).unwrap();
        assert_eq!(l2.value(&[3.0, 4.0]).unwrap(), 12.5);
        let l1 = Regularizer::new(RegKind::L1, 1.0).unwrap();
        assert_eq!(l1.value(&[3.0, -4.0]).unwrap(), 7.0);
    }

    #[test]
    fn group_sparse_value() {
        let groups = Groups::new(vec![vec![0, 1]]).unwrap();
        let reg = Regularizer::new(RegKind::GroupSparse(groups), 1.0).unwrap();
        let v = reg.value(&[3.0, 4.0]).unwrap();
        let expected = 2.0f64.sqrt() * 5.0;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn group_index_out_of_range_errors() {
        let groups = Groups::new(vec![vec![0, 5]]).unwrap();
        let reg = Regularizer::new(RegKind::GroupSparse(groups), 1.0).unwrap();
        assert!(matches!(
            reg.value(&[1.0, 2.0]),
            Err(Error::GroupIndexOutOfRange { index: 5, len: 2 })
        ));
    }

    #[test]
    fn knn_identical_points_get_unit_weight() {
        let inputs = Mat::from_vec(2, 1, vec![0.5, 0.5]).unwrap();
        let g = build_knn_graph(&inputs, 1, 1.0).unwrap();
        assert_eq!(g.edges_of(0), &[(1, 1.0)]);
        assert_eq!(g.edges_of(1), &[(0, 1.0)]);
    }

    #[test]
    fn knn_collinear_nearest() {
        let inputs = Mat::from_vec(3, 1, vec![0.0, 1.0, 10.0]).unwrap();
        let g = build_knn_graph(&inputs, 1, 1.0).unwrap();
        assert_eq!(g.neighbors_of(1), &[0]);
    }

    #[test]
    fn manifold_zero_for_constant_network() {
        // all non-bias weights zero -> f(x) constant -> zero penalty
        let topo = Topology::new(vec![2, 3, 1]).unwrap();
        let mut w = alloc::vec![0.0; topo.param_count()];
        let (_, b_off, _, fan_out) = topo.layer_span(1);
        for r in 0..fan_out {
            w[b_off + r] = 0.4;
        }
        let model = MlpModel::new(topo, OutputHead::Identity, w).unwrap();
        let inputs =
            Mat::from_vec(4, 2, alloc::vec![0.1, 0.2, -0.3, 0.4, 0.0, 0.0, 0.25, -0.25]).unwrap();
        let g = build_knn_graph(&inputs, 2, 1.0).unwrap();
        let v = manifold_value(&g, &model, &inputs, None).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn objective_reduces_to_loss_for_single_sample() {
        let topo = Topology::new(vec![1, 1]).unwrap();
        let model = MlpModel::new(topo, OutputHead::Identity, alloc::vec![2.0, 0.0]).unwrap();
        let ds = Dataset::new(
            "t".into(),
            Mat::from_vec(1, 1, alloc::vec![0.5]).unwrap(),
            alloc::vec![0.3],
            TaskKind::Regression,
        )
        .unwrap();
        // tiny lambda so the reg term is negligible but construction valid
        let reg = Regularizer::new(RegKind::L2, 1e-300).unwrap();
        let u = objective_value(&model, &ds, LossKind::Squared, &reg).unwrap();
        let l = loss_value(LossKind::Squared, 0.3, 1.0).unwrap();
        assert!((u - l).abs() < 1e-12);
    }
}
