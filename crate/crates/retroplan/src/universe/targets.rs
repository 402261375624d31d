//! Target selection by leader clustering.
//!
//! Candidate targets are the non-buyable pool molecules inside a size
//! window. They are fingerprinted, clustered with the Taylor–Butina leader
//! algorithm (two molecules are neighbours when their Tanimoto similarity
//! exceeds a threshold), and the centroids of the largest clusters become
//! the targets, split at random into disjoint train and test sets.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::universe::{tanimoto, Fingerprint, Molecule, Universe};

/// Parameters for clustering and the train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetParams {
    pub n_train: usize,
    pub n_test: usize,
    /// Strict similarity threshold for neighbourhood (T > threshold).
    pub similarity_threshold: f64,
    /// Candidate size window.
    pub min_len: usize,
    pub max_len: usize,
    /// Preferred minimum cluster size; smaller clusters are used only when
    /// the larger ones cannot supply enough centroids.
    pub min_cluster_size: usize,
    pub fingerprint_len: usize,
    pub fingerprint_radius: usize,
}

impl Default for TargetParams {
    fn default() -> Self {
        TargetParams {
            n_train: 200,
            n_test: 50,
            similarity_threshold: 0.4,
            min_len: 5,
            max_len: 40,
            min_cluster_size: 2,
            fingerprint_len: 1024,
            fingerprint_radius: 3,
        }
    }
}

/// Disjoint train/test target sets; every member is a non-buyable pool
/// molecule inside the size window.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSelection {
    pub train: Vec<Molecule>,
    pub test: Vec<Molecule>,
}

/// Clusters the candidate pool and returns shuffled centroid targets.
pub fn select_targets(u: &Universe, params: &TargetParams, seed: u64) -> Result<TargetSelection> {
    if params.n_train == 0 {
        return Err(Error::InvalidParameter("n_train must be >= 1".into()));
    }
    let needed = params.n_train + params.n_test;
    let candidates: Vec<&Molecule> = u
        .pool()
        .iter()
        .filter(|m| {
            !u.is_buyable(m) && (params.min_len..=params.max_len).contains(&m.size())
        })
        .collect();
    if candidates.len() < needed {
        return Err(Error::Capacity(format!(
            "universe has {} candidate targets after filtering but {} are required",
            candidates.len(),
            needed
        )));
    }

    let fps: Vec<Fingerprint> = candidates
        .iter()
        .map(|m| Fingerprint::compute(m, params.fingerprint_len, params.fingerprint_radius))
        .collect::<Result<_>>()?;

    // Neighbour lists under the strict threshold. Candidates are already in
    // canonical order (the pool is sorted), so index order is deterministic.
    let n = candidates.len();
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if tanimoto(&fps[i], &fps[j])? > params.similarity_threshold {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }

    // Leader algorithm: repeatedly crown the unassigned molecule with the
    // most unassigned neighbours, absorb those neighbours as its cluster.
    let mut assigned = vec![false; n];
    let mut clusters: Vec<(usize, usize)> = Vec::new(); // (centroid index, size)
    loop {
        let mut best: Option<(usize, usize)> = None; // (count, index)
        for i in 0..n {
            if assigned[i] {
                continue;
            }
            let count = neighbours[i].iter().filter(|&&j| !assigned[j]).count();
            let better = match best {
                None => true,
                Some((bc, bi)) => count > bc || (count == bc && i < bi),
            };
            if better {
                best = Some((count, i));
            }
        }
        let Some((count, centroid)) = best else { break };
        assigned[centroid] = true;
        for &j in &neighbours[centroid].clone() {
            if !assigned[j] {
                assigned[j] = true;
            }
        }
        clusters.push((centroid, count + 1));
    }

    // Largest clusters first; prefer those meeting min_cluster_size, then
    // top up from the remainder (singletons) if the big ones run out.
    clusters.sort_by(|a, b| b.1.cmp(&a.1).then(candidates[a.0].cmp(candidates[b.0])));
    if clusters.len() < needed {
        return Err(Error::Capacity(format!(
            "clustering produced {} clusters but {} targets are required",
            clusters.len(),
            needed
        )));
    }
    let mut picked: Vec<usize> = clusters
        .iter()
        .filter(|(_, size)| *size >= params.min_cluster_size)
        .map(|(c, _)| *c)
        .take(needed)
        .collect();
    if picked.len() < needed {
        for (c, size) in &clusters {
            if *size < params.min_cluster_size {
                picked.push(*c);
                if picked.len() == needed {
                    break;
                }
            }
        }
    }

    let mut targets: Vec<Molecule> = picked.into_iter().map(|i| candidates[i].clone()).collect();
    let mut rng = rng::stream(&[seed, 0x7A26]);
    targets.shuffle(&mut rng);
    let test = targets.split_off(params.n_train);
    Ok(TargetSelection { train: targets, test: test.into_iter().take(params.n_test).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::universe::UniverseParams;

    fn universe() -> Universe {
        let p = UniverseParams {
            molecule_count: 400,
            template_count: 14,
            alphabet_size: 6,
            max_len: 30,
            ..UniverseParams::default()
        };
        Universe::generate(41, p).unwrap()
    }

    #[test]
    fn selection_is_deterministic_and_disjoint() {
        let u = universe();
        let p = TargetParams { n_train: 30, n_test: 10, ..TargetParams::default() };
        let a = select_targets(&u, &p, 9).unwrap();
        let b = select_targets(&u, &p, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 30);
        assert_eq!(a.test.len(), 10);
        for m in a.train.iter().chain(&a.test) {
            assert!(!u.is_buyable(m));
            assert!((5..=40).contains(&m.size()));
            assert!(u.pool().contains(m));
        }
        for m in &a.test {
            assert!(!a.train.contains(m), "train/test overlap at {m}");
        }
        let c = select_targets(&u, &p, 10).unwrap();
        assert_ne!(a, c, "different seeds should shuffle differently");
    }

    #[test]
    fn capacity_error_when_pool_too_small() {
        let u = universe();
        let p = TargetParams { n_train: 5000, n_test: 100, ..TargetParams::default() };
        assert!(matches!(select_targets(&u, &p, 0), Err(Error::Capacity(_))));
    }

    #[test]
    fn mutually_dissimilar_candidates_form_singletons() {
        // Threshold 1.0 makes strict similarity impossible (T <= 1), so every
        // candidate is a singleton cluster and any `needed` prefix works.
        let u = universe();
        let p = TargetParams {
            n_train: 12,
            n_test: 4,
            similarity_threshold: 1.0,
            ..TargetParams::default()
        };
        let sel = select_targets(&u, &p, 3).unwrap();
        assert_eq!(sel.train.len() + sel.test.len(), 16);
    }
}
