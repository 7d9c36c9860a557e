use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabelSet;
use crate::anim::{trajectory, AnimSequence};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const MOVE_TOLERANCE: f64 = 1e-9;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means over vertex trajectories with k-means++ seeding.
///
/// Returns one-hot labels of width `k`; cluster index plays the role of
/// a bone. Clusters that empty out are re-seeded with the point farthest
/// from its centroid.
pub fn cluster_trajectories(seq: &AnimSequence, k: usize, seed: u64) -> Result<LabelSet> {
    let n = seq.vertex_count();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cluster count {k} must be in 1..={n}")));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|i| trajectory(seq, i).map(|t| t.values)).collect::<Result<_>>()?;
    let assignment = kmeans(&points, k, seed);
    let rows = assignment
        .into_iter()
        .map(|c| {
            let mut row = vec![0.0; k];
            row[c] = 1.0;
            row
        })
        .collect();
    LabelSet::new(rows)
}

/// Lloyd iterations on `points`; returns the cluster of each point.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let dim = points[0].len();
    let mut assignment = vec![0usize; points.len()];

    for _ in 0..MAX_ITERATIONS {
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from its own centroid becomes the new seed
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, dist2(p, &centroids[assignment[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                let old = assignment[far];
                counts[old] -= 1;
                for (s, x) in sums[old].iter_mut().zip(&points[far]) {
                    *s -= x;
                }
                assignment[far] = c;
                counts[c] = 1;
                sums[c] = points[far].clone();
            }
        }

        let mut moved: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            moved = moved.max(dist2(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if moved < MOVE_TOLERANCE {
            break;
        }
    }
    assignment
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, dist2(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anim::{RigParams, SyntheticRig};

    #[test]
    fn single_cluster() {
        let rig = SyntheticRig::generate(RigParams::new(2, 20, 5, 0)).unwrap();
        let labels = cluster_trajectories(&rig.sequence, 1, 0).unwrap();
        assert!(labels.rows().iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn too_many_clusters() {
        let rig = SyntheticRig::generate(RigParams::new(1, 5, 3, 0)).unwrap();
        assert!(cluster_trajectories(&rig.sequence, 6, 0).is_err());
        assert!(cluster_trajectories(&rig.sequence, 0, 0).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let rig = SyntheticRig::generate(RigParams::new(3, 30, 8, 4)).unwrap();
        let a = cluster_trajectories(&rig.sequence, 5, 17).unwrap();
        let b = cluster_trajectories(&rig.sequence, 5, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_cluster_used() {
        // duplicated points force empty clusters during iteration
        let mut points = vec![vec![0.0, 0.0]; 10];
        points.push(vec![5.0, 5.0]);
        points.push(vec![9.0, 1.0]);
        let a = kmeans(&points, 3, 1);
        for c in 0..3 {
            assert!(a.contains(&c));
        }
    }
}
