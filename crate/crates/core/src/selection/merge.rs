//! Pooling column clusters across platforms by shared latent atoms.

use serde::Serialize;

use crate::model::{AtomId, ClusterState, LatentMatrices};

/// One merged cluster: the platform column clusters whose latent columns
/// carry the same atom sequence, and their probes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergedCluster {
    /// `(platform, probe)` pairs in platform then probe order.
    pub members: Vec<(usize, usize)>,
    /// `(platform, column cluster)` pairs merged into this cluster.
    pub sources: Vec<(usize, usize)>,
    /// Atom ids of the shared latent column, one per row cluster.
    pub signature: Vec<AtomId>,
}

impl MergedCluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergedClusters {
    pub clusters: Vec<MergedCluster>,
}

impl MergedClusters {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(MergedCluster::size).collect()
    }
}

/// Merge column clusters, within or across platforms, whose latent columns
/// reference identical atom id sequences. Merged clusters are ordered by their
/// first source.
pub fn merge_clusters(latents: &LatentMatrices, state: &ClusterState) -> MergedClusters {
    let mut clusters: Vec<MergedCluster> = Vec::new();
    // (platform, column cluster) -> merged index
    let mut index: Vec<Vec<usize>> = Vec::with_capacity(latents.platforms.len());
    for (t, m) in latents.platforms.iter().enumerate() {
        let mut idx = Vec::with_capacity(m.cols());
        for k in 0..m.cols() {
            let signature: Vec<AtomId> = (0..m.rows()).map(|h| m.cell(h, k).atom).collect();
            let at = match clusters.iter().position(|c| c.signature == signature) {
                Some(at) => at,
                None => {
                    clusters.push(MergedCluster {
                        members: Vec::new(),
                        sources: Vec::new(),
                        signature,
                    });
                    clusters.len() - 1
                }
            };
            clusters[at].sources.push((t, k));
            idx.push(at);
        }
        index.push(idx);
    }
    for (t, columns) in state.columns.iter().enumerate() {
        for (j, &k) in columns.iter().enumerate() {
            clusters[index[t][k]].members.push((t, j));
        }
    }
    MergedClusters { clusters }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LatentCell, LatentMatrix};

    fn matrix(ids: &[&[u64]]) -> LatentMatrix {
        let rows = ids.len();
        let cols = ids[0].len();
        let cells = ids
            .iter()
            .flat_map(|r| r.iter())
            .map(|&a| LatentCell {
                value: a as f64,
                atom: a,
                table: 0,
            })
            .collect();
        LatentMatrix::new(rows, cols, cells).unwrap()
    }

    #[test]
    fn distinct_atoms_do_not_merge() {
        let latents = LatentMatrices {
            platforms: vec![matrix(&[&[1, 2]]), matrix(&[&[3]])],
            noise_sd: vec![1.0, 1.0],
        };
        let state = ClusterState::new(vec![vec![0, 1, 0], vec![0, 0]], vec![0, 0]).unwrap();
        let m = merge_clusters(&latents, &state);
        assert_eq!(m.k(), 3);
        assert_eq!(m.clusters[0].members, vec![(0, 0), (0, 2)]);
    }

    #[test]
    fn one_shared_column_merges_once() {
        let latents = LatentMatrices {
            platforms: vec![matrix(&[&[1, 2], &[4, 5]]), matrix(&[&[2, 7], &[5, 5]])],
            noise_sd: vec![1.0, 1.0],
        };
        let state = ClusterState::new(vec![vec![0, 1], vec![0, 1, 1]], vec![0, 1]).unwrap();
        let m = merge_clusters(&latents, &state);
        assert_eq!(m.k(), 3);
        assert_eq!(m.clusters[1].sources, vec![(0, 1), (1, 0)]);
        assert_eq!(m.clusters[1].members, vec![(0, 1), (1, 0)]);
        assert_eq!(m.sizes().iter().sum::<usize>(), 5);
    }
}
