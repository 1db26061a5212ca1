//! Euclidean k-nearest-neighbour graph and patch extraction.
//!
//! Construction is exhaustive (O(n²m)). Neighbour lists are ordered by
//! ascending distance with ties resolved towards the lower sample index, so
//! the graph is fully deterministic.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KknnError, Result};
use crate::exec::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl Neighbor {
    fn order(&self, other: &Neighbor) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

/// `⌊log₂ n⌋`, floored at 1.
pub fn default_k(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(KknnError::out_of_range("sample count", n, ">= 2"));
    }
    Ok((n.ilog2() as usize).max(1))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The `k` rows of `d` nearest to `q`, optionally excluding one index.
fn nearest(d: &Dataset, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = (0..d.n())
        .filter(|&j| Some(j) != exclude)
        .map(|j| Neighbor {
            index: j,
            distance: euclidean(q, d.row(j)),
        })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k, Neighbor::order);
        all.truncate(k);
    }
    all.sort_unstable_by(Neighbor::order);
    all
}

/// Directed k-NN graph: one ascending neighbour list per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    /// Writes `i,rank,j,distance` rows (rank is 0-based).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "rank", "j", "distance"])?;
        for (i, list) in self.lists.iter().enumerate() {
            for (rank, nb) in list.iter().enumerate() {
                w.write_record(&[
                    i.to_string(),
                    rank.to_string(),
                    nb.index.to_string(),
                    nb.distance.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| KknnError::io("<graph csv>", e))?;
        Ok(())
    }
}

pub fn build_knng(d: &Dataset, k: usize) -> Result<NeighborGraph> {
    build_knng_with(d, k, Exec::default())
}

pub fn build_knng_with(d: &Dataset, k: usize, exec: Exec) -> Result<NeighborGraph> {
    let n = d.n();
    if k < 1 || k + 1 > n {
        return Err(KknnError::out_of_range("k", k, format!("1..={}", n.saturating_sub(1))));
    }
    let lists = exec.map(n, |i| nearest(d, d.row(i), k, Some(i)));
    Ok(NeighborGraph { k, lists })
}

/// A centre point together with its ascending neighbour list and the
/// neighbour coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub center: Vec<f64>,
    /// Sample index of the centre when it belongs to the dataset.
    pub center_index: Option<usize>,
    pub neighbors: Vec<Neighbor>,
    pub neighbor_vectors: Vec<Vec<f64>>,
}

impl Patch {
    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Builds a patch directly from coordinates (neighbour indices are
    /// positional and distances are recomputed).
    pub fn from_vectors(center: Vec<f64>, neighbor_vectors: Vec<Vec<f64>>) -> Self {
        let neighbors = neighbor_vectors
            .iter()
            .enumerate()
            .map(|(index, v)| Neighbor {
                index,
                distance: euclidean(&center, v),
            })
            .collect();
        Patch {
            center,
            center_index: None,
            neighbors,
            neighbor_vectors,
        }
    }

    fn assemble(d: &Dataset, center: Vec<f64>, center_index: Option<usize>, neighbors: Vec<Neighbor>) -> Self {
        let neighbor_vectors = neighbors.iter().map(|nb| d.row(nb.index).to_vec()).collect();
        Patch {
            center,
            center_index,
            neighbors,
            neighbor_vectors,
        }
    }
}

pub fn patch_of(g: &NeighborGraph, d: &Dataset, i: usize) -> Result<Patch> {
    if i >= g.len() || i >= d.n() {
        return Err(KknnError::out_of_range("sample index", i, format!("0..{}", d.n())));
    }
    Ok(Patch::assemble(d, d.row(i).to_vec(), Some(i), g.lists[i].clone()))
}

/// Patch of an out-of-sample query against the training rows.
pub fn neighbors_of_query(train: &Dataset, q: &[f64], k: usize) -> Result<Patch> {
    if q.len() != train.m() {
        return Err(KknnError::DimensionMismatch {
            expected: train.m(),
            got: q.len(),
        });
    }
    if k < 1 || k > train.n() {
        return Err(KknnError::out_of_range("k", k, format!("1..={}", train.n())));
    }
    Ok(Patch::assemble(train, q.to_vec(), None, nearest(train, q, k, None)))
}
