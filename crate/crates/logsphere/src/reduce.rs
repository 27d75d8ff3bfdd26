//! Abstract representations: PCA reduction of rich vectors, density-based
//! clustering of the reduced points, and centroid lookup for unseen logs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::RichRepr;
use crate::hdbscan::{self, NOISE};
use crate::{Error, Result};

/// PCA basis fitted by eigendecomposition of the centered covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Row-major orthonormal basis, one component per row, length d_rich.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing, one per component.
    pub explained_variance: Vec<f64>,
}

/// PCA basis plus cluster centroids and the inference assignment radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub pca: PcaModel,
    pub centroids: BTreeMap<i32, Vec<f64>>,
    /// Inference radius: 95th percentile of training member-to-own-centroid
    /// distances.
    pub tau: f64,
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

/// Reduced vector plus the cluster it landed in. `cluster_id` is `None` for
/// points farther than tau from every centroid; their vector is the reduced
/// point itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractRepr {
    pub vector: Vec<f64>,
    pub cluster_id: Option<i32>,
}

/// Jacobi eigendecomposition of a symmetric matrix. Returns (eigenvalues,
/// eigenvectors as rows), sorted by descending eigenvalue.
fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-18 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap().then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row][col]).collect())
        .collect();
    (eigenvalues, eigenvectors)
}

/// Fit PCA on rich representations. Sign convention: the first component of
/// each basis vector with magnitude above 1e-12 is made positive.
pub fn fit_pca(reprs: &[RichRepr], d_abs: usize) -> Result<PcaModel> {
    if d_abs < 1 {
        return Err(Error::Usage("d_abs must be >= 1".into()));
    }
    if reprs.len() <= d_abs {
        return Err(Error::Data(format!(
            "need more than d_abs={d_abs} points to fit PCA, got {}",
            reprs.len()
        )));
    }
    let d = reprs[0].vector.len();
    if d_abs > d {
        return Err(Error::Usage(format!(
            "d_abs={d_abs} exceeds input dimension {d}"
        )));
    }
    let n = reprs.len();
    let mut mean = vec![0.0f64; d];
    for r in reprs {
        if r.vector.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: r.vector.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(&r.vector) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0f64; d]; d];
    for r in reprs {
        let c: Vec<f64> = r.vector.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            if c[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    let total_var: f64 = (0..d).map(|i| cov[i][i]).sum();
    if total_var <= 1e-24 {
        return Err(Error::Data(
            "zero variance: all input points are identical".into(),
        ));
    }
    let (eigenvalues, eigenvectors) = symmetric_eigen(cov);
    let mut components = Vec::with_capacity(d_abs);
    let mut explained = Vec::with_capacity(d_abs);
    for k in 0..d_abs {
        let mut comp = eigenvectors[k].clone();
        if let Some(first) = comp.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                for x in &mut comp {
                    *x = -*x;
                }
            }
        }
        components.push(comp);
        explained.push(eigenvalues[k].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
    })
}

impl PcaModel {
    /// Center and project onto the basis.
    pub fn project(&self, r: &RichRepr) -> Result<Vec<f64>> {
        if r.vector.len() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: r.vector.len(),
            });
        }
        let centered: Vec<f64> = r.vector.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Inverse of `project` restricted to the retained subspace.
    pub fn reconstruct(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (coef, comp) in reduced.iter().zip(&self.components) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += coef * c;
            }
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cluster reduced vectors and compute centroids. `pca` is stored alongside
/// so the model can map raw rich vectors end to end.
pub fn fit_clusters(
    pca: PcaModel,
    reduced: &[Vec<f64>],
    min_cluster_size: usize,
    min_samples: usize,
) -> Result<(ClusterModel, Vec<i32>)> {
    let labels = hdbscan::cluster(reduced, min_cluster_size, min_samples)?;
    let mut sums: BTreeMap<i32, (Vec<f64>, usize)> = BTreeMap::new();
    for (p, &l) in reduced.iter().zip(&labels) {
        if l == NOISE {
            continue;
        }
        let entry = sums.entry(l).or_insert_with(|| (vec![0.0; p.len()], 0));
        for (s, x) in entry.0.iter_mut().zip(p) {
            *s += x;
        }
        entry.1 += 1;
    }
    let centroids: BTreeMap<i32, Vec<f64>> = sums
        .into_iter()
        .map(|(l, (mut s, c))| {
            for x in &mut s {
                *x /= c as f64;
            }
            (l, s)
        })
        .collect();
    // tau: 95th percentile of member distance to own centroid
    let mut member_dists: Vec<f64> = reduced
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l != NOISE)
        .map(|(p, &l)| sq_dist(p, &centroids[&l]).sqrt())
        .collect();
    let tau = if member_dists.is_empty() {
        0.0
    } else {
        member_dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((0.95 * member_dists.len() as f64).ceil() as usize).clamp(1, member_dists.len());
        member_dists[idx - 1]
    };
    Ok((
        ClusterModel {
            pca,
            centroids,
            tau,
            min_cluster_size,
            min_samples,
        },
        labels,
    ))
}

impl ClusterModel {
    /// Nearest-centroid assignment with the tau radius rule.
    pub fn assign(&self, reduced: &[f64]) -> Result<AbstractRepr> {
        if self.centroids.is_empty() {
            return Err(Error::Data("cluster model has no centroids".into()));
        }
        let (best_id, best_d2) = self
            .centroids
            .iter()
            .map(|(&id, c)| (id, sq_dist(reduced, c)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .unwrap();
        if best_d2.sqrt() <= self.tau {
            Ok(AbstractRepr {
                vector: self.centroids[&best_id].clone(),
                cluster_id: Some(best_id),
            })
        } else {
            Ok(AbstractRepr {
                vector: reduced.to_vec(),
                cluster_id: None,
            })
        }
    }

    /// Like `assign` but for points outside every cluster radius it still
    /// returns the reduced vector with no id (never errors on empty input).
    pub fn abstract_of(&self, reduced: Vec<f64>) -> AbstractRepr {
        if self.centroids.is_empty() {
            return AbstractRepr {
                vector: reduced,
                cluster_id: None,
            };
        }
        self.assign(&reduced).unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterParams {
    pub d_abs: usize,
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            d_abs: 16,
            min_cluster_size: 5,
            min_samples: 5,
        }
    }
}

/// Full training-time abstraction: PCA fit, clustering, and one abstract
/// representation per input, aligned index by index. Members of a cluster
/// share its centroid bitwise; noise points keep their own reduced vector.
pub fn abstract_for_training(
    reprs: &[RichRepr],
    params: ClusterParams,
) -> Result<(ClusterModel, Vec<AbstractRepr>)> {
    let pca = fit_pca(reprs, params.d_abs)?;
    let reduced: Vec<Vec<f64>> = reprs
        .iter()
        .map(|r| pca.project(r))
        .collect::<Result<_>>()?;
    let (model, labels) = fit_clusters(pca, &reduced, params.min_cluster_size, params.min_samples)?;
    let out = reduced
        .into_iter()
        .zip(&labels)
        .map(|(v, &l)| {
            if l == NOISE {
                AbstractRepr {
                    vector: v,
                    cluster_id: None,
                }
            } else {
                AbstractRepr {
                    vector: model.centroids[&l].clone(),
                    cluster_id: Some(l),
                }
            }
        })
        .collect();
    Ok((model, out))
}
