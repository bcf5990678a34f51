//! Metrics, baselines and clustering diagnostics. Malicious is the positive
//! class throughout.

use serde::{Deserialize, Serialize};

use crate::error::{OcanError, Result};
use crate::sequence::Label;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub counts: ConfusionCounts,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn counts_from(predicted: &[Label], actual: &[Label]) -> Result<ConfusionCounts> {
    if predicted.len() != actual.len() {
        return Err(OcanError::ShapeMismatch {
            op: "confusion_metrics",
            lhs: (predicted.len(), 1),
            rhs: (actual.len(), 1),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, a) in predicted.iter().zip(actual) {
        match (p.is_malicious(), a.is_malicious()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn metrics_from_counts(c: ConfusionCounts) -> Metrics {
    let mut degenerate = false;
    let precision = ratio(c.tp, c.tp + c.fp, &mut degenerate);
    let recall = ratio(c.tp, c.tp + c.fn_, &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = ratio(c.tp + c.tn, c.total(), &mut degenerate);
    Metrics {
        precision,
        recall,
        f1,
        accuracy,
        counts: c,
        degenerate,
    }
}

pub fn confusion_metrics(predicted: &[Label], actual: &[Label]) -> Result<Metrics> {
    Ok(metrics_from_counts(counts_from(predicted, actual)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC over `scores` where larger means more likely malicious. Equal
/// scores form a single step of the curve.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(OcanError::ShapeMismatch {
            op: "roc_auc",
            lhs: (scores.len(), 1),
            rhs: (labels.len(), 1),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(OcanError::InvalidArgument(format!(
            "score {i} is not finite"
        )));
    }
    let pos = labels.iter().filter(|l| l.is_malicious()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(OcanError::InvalidArgument(format!(
            "ROC needs both classes, got {pos} malicious and {neg} benign"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]].is_malicious() {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (x0, y0) = *points.last().expect("non-empty");
        let p = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (p.0 - x0) * (p.1 + y0) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(train: &Tensor, x: &[f64], skip: Option<usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, row) in train.row_iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d = sq_dist(row, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Nearest-neighbour one-class scores `d1 - d2`: the distance from each test
/// row to its nearest training row `u`, minus the distance from `u` to its
/// own nearest training neighbour.
pub fn ocnn_scores(train: &Tensor, test: &Tensor) -> Result<Vec<f64>> {
    if train.rows() < 2 {
        return Err(OcanError::Insufficient(format!(
            "nearest-neighbour baseline needs at least 2 training rows, got {}",
            train.rows()
        )));
    }
    if train.cols() != test.cols() {
        return Err(OcanError::ShapeMismatch {
            op: "ocnn_baseline",
            lhs: train.shape(),
            rhs: test.shape(),
        });
    }
    let mut own: Vec<Option<f64>> = vec![None; train.rows()];
    test.row_iter()
        .map(|z| {
            let (u, d1) = nearest(train, z, None);
            let d2 = *own[u].get_or_insert_with(|| nearest(train, train.row(u), Some(u)).1);
            Ok(d1 - d2)
        })
        .collect()
}

/// Malicious iff `d1 - d2 > threshold`.
pub fn ocnn_baseline(train: &Tensor, test: &Tensor, threshold: f64) -> Result<Vec<Label>> {
    Ok(ocnn_scores(train, test)?
        .into_iter()
        .map(|s| {
            if s > threshold {
                Label::Malicious
            } else {
                Label::Benign
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterComposition {
    pub benign: usize,
    pub malicious: usize,
    pub unlabeled: usize,
}

impl ClusterComposition {
    fn add(&mut self, label: Option<Label>) {
        match label {
            Some(Label::Benign) => self.benign += 1,
            Some(Label::Malicious) => self.malicious += 1,
            None => self.unlabeled += 1,
        }
    }

    pub fn size(&self) -> usize {
        self.benign + self.malicious + self.unlabeled
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub eps: f64,
    pub min_pts: usize,
    /// Cluster index per point, `None` for noise.
    pub assignments: Vec<Option<usize>>,
    pub clusters: Vec<ClusterComposition>,
    pub noise: ClusterComposition,
    /// Euclidean distances between cluster means, row-major `k x k`.
    pub centroid_distances: Vec<Vec<f64>>,
}

impl ClusterReport {
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn isolated(&self) -> usize {
        self.noise.size()
    }
}

/// Mean pairwise distance for `eps`; `min_pts` scaled as `180 N / 9000`.
pub fn default_dbscan_params(x: &Tensor) -> Result<(f64, usize)> {
    let n = x.rows();
    if n < 2 {
        return Err(OcanError::Insufficient(format!(
            "need at least 2 points, got {n}"
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += sq_dist(x.row(i), x.row(j)).sqrt();
        }
    }
    let eps = total / (n * (n - 1) / 2) as f64;
    let min_pts = ((180 * n) as f64 / 9000.0).round().max(1.0) as usize;
    Ok((eps, min_pts))
}

/// Density-based clustering with Euclidean distance. A point counts itself
/// towards `min_pts`.
pub fn dbscan_cluster(
    x: &Tensor,
    labels: Option<&[Label]>,
    eps: f64,
    min_pts: usize,
) -> Result<ClusterReport> {
    let n = x.rows();
    if n == 0 {
        return Err(OcanError::Empty("points to cluster"));
    }
    if !(eps > 0.0 && eps.is_finite()) || min_pts == 0 {
        return Err(OcanError::InvalidArgument(format!(
            "DBSCAN needs eps > 0 and min_pts >= 1, got eps {eps} min_pts {min_pts}"
        )));
    }
    if labels.is_some_and(|l| l.len() != n) {
        return Err(OcanError::ShapeMismatch {
            op: "dbscan_cluster labels",
            lhs: (n, 1),
            rhs: (labels.map_or(0, <[Label]>::len), 1),
        });
    }
    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| sq_dist(x.row(i), x.row(j)) <= eps2)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut assignments: Vec<Option<usize>> = vec![None; n];
    let mut k = 0;
    for start in 0..n {
        if !core[start] || assignments[start].is_some() {
            continue;
        }
        assignments[start] = Some(k);
        let mut frontier = vec![start];
        while let Some(p) = frontier.pop() {
            for &q in &neighbours[p] {
                if assignments[q].is_none() {
                    assignments[q] = Some(k);
                    if core[q] {
                        frontier.push(q);
                    }
                }
            }
        }
        k += 1;
    }

    let blank = ClusterComposition {
        benign: 0,
        malicious: 0,
        unlabeled: 0,
    };
    let mut clusters = vec![blank.clone(); k];
    let mut noise = blank;
    let mut sums = vec![vec![0.0; x.cols()]; k];
    for (i, a) in assignments.iter().enumerate() {
        let label = labels.map(|l| l[i]);
        match a {
            Some(c) => {
                clusters[*c].add(label);
                for (s, v) in sums[*c].iter_mut().zip(x.row(i)) {
                    *s += v;
                }
            }
            None => noise.add(label),
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&clusters)
        .map(|(s, c)| s.into_iter().map(|v| v / c.size() as f64).collect())
        .collect();
    let centroid_distances = centroids
        .iter()
        .map(|a| centroids.iter().map(|b| sq_dist(a, b).sqrt()).collect())
        .collect();
    Ok(ClusterReport {
        eps,
        min_pts,
        assignments,
        clusters,
        noise,
        centroid_distances,
    })
}

/// Mean and sample standard deviation; the deviation is absent for fewer
/// than two values.
pub fn mean_std(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    Some((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Benign as B, Malicious as M};

    #[test]
    fn confusion_hand_case() {
        let predicted = [M, M, M, M, B, B, B, B, B, B];
        let actual = [M, M, M, B, M, B, B, B, B, B];
        let m = confusion_metrics(&predicted, &actual).unwrap();
        assert_eq!(
            m.counts,
            ConfusionCounts {
                tp: 3,
                fp: 1,
                tn: 5,
                fn_: 1
            }
        );
        assert_eq!(
            (m.precision, m.recall, m.f1, m.accuracy),
            (0.75, 0.75, 0.75, 0.8)
        );
        assert!(!m.degenerate);
    }

    #[test]
    fn no_positive_predictions_are_flagged() {
        let m = confusion_metrics(&[B, B, B], &[M, B, B]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.degenerate);
        assert!(confusion_metrics(&[B], &[B, M]).is_err());
    }

    #[test]
    fn roc_extremes() {
        let labels = [M, M, B, B];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap().auc, 1.0);
        let flat = roc_auc(&[0.4; 4], &labels).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(roc_auc(&[0.1, 0.2], &[M, M]).is_err());
    }

    #[test]
    fn ocnn_hand_case() {
        let train = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let test = Tensor::from_rows(&[vec![5.0], vec![1.0]]).unwrap();
        assert_eq!(ocnn_scores(&train, &test).unwrap(), vec![3.0, -1.0]);
        assert_eq!(ocnn_baseline(&train, &test, 1.0).unwrap(), vec![M, B]);
        assert!(ocnn_baseline(&Tensor::zeros(1, 1), &test, 1.0).is_err());
    }

    #[test]
    fn dbscan_two_blobs() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.01, 0.0]);
            rows.push(vec![100.0 + i as f64 * 0.01, 0.0]);
        }
        let x = Tensor::from_rows(&rows).unwrap();
        let r = dbscan_cluster(&x, None, 0.5, 5).unwrap();
        assert_eq!(r.num_clusters(), 2);
        assert_eq!(r.isolated(), 0);
        assert!((r.centroid_distances[0][1] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn dbscan_single_point_is_noise() {
        let r = dbscan_cluster(&Tensor::zeros(1, 3), Some(&[M]), 1.0, 2).unwrap();
        assert_eq!(r.num_clusters(), 0);
        assert_eq!(r.noise.malicious, 1);
        assert!(dbscan_cluster(&Tensor::zeros(0, 3), None, 1.0, 2).is_err());
    }

    #[test]
    fn default_params_scale_min_pts() {
        let x = Tensor::from_rows(&[vec![0.0], vec![3.0], vec![6.0]]).unwrap();
        let (eps, min_pts) = default_dbscan_params(&x).unwrap();
        assert_eq!(eps, 4.0);
        assert_eq!(min_pts, 1);
    }

    #[test]
    fn mean_std_rules() {
        assert_eq!(mean_std(&[2.0]), Some((2.0, None)));
        assert_eq!(mean_std(&[1.0, 1.0]), Some((1.0, Some(0.0))));
        assert_eq!(mean_std(&[]), None);
    }
}
