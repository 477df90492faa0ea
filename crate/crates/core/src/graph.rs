//! Areal adjacency structure.
//!
//! Neighborhoods feed two parts of the model: the ICAR prior on the spatially
//! structured effect and the lagged neighborhood count term of the propagator.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

/// Undirected neighbor structure over an ordered set of areas.
///
/// Invariants: symmetric, irreflexive, and every area has at least one
/// neighbor. Area order is the order of `area_ids` as supplied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    area_ids: Vec<String>,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Builds a graph from unordered id pairs. Duplicate and reversed pairs
    /// collapse to a single undirected edge.
    pub fn build<S: AsRef<str>>(edges: &[(S, S)], area_ids: &[String]) -> Result<Self> {
        let mut index = HashMap::with_capacity(area_ids.len());
        for (i, id) in area_ids.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(Error::DuplicateAreaId(id.clone()));
            }
        }
        let mut sets = vec![BTreeSet::new(); area_ids.len()];
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index.get(a).ok_or_else(|| Error::UnknownAreaId(a.to_string()))?;
            let ib = *index.get(b).ok_or_else(|| Error::UnknownAreaId(b.to_string()))?;
            if ia == ib {
                return Err(Error::SelfLoop(a.to_string()));
            }
            sets[ia].insert(ib);
            sets[ib].insert(ia);
        }
        if let Some(i) = sets.iter().position(BTreeSet::is_empty) {
            return Err(Error::IslandArea(area_ids[i].clone()));
        }
        Ok(Self {
            area_ids: area_ids.to_vec(),
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Reads an edge list CSV with header `fips_a,fips_b`.
    pub fn from_csv(path: impl AsRef<Path>, area_ids: &[String]) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut edges = Vec::new();
        for row in reader.deserialize() {
            let (a, b): (String, String) = row?;
            edges.push((a, b));
        }
        Self::build(&edges, area_ids)
    }

    /// Writes the graph back out as an edge list with each undirected edge once.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["fips_a", "fips_b"])?;
        for (a, b) in self.edges() {
            w.write_record([&self.area_ids[a], &self.area_ids[b]])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_areas(&self) -> usize {
        self.area_ids.len()
    }

    pub fn area_ids(&self) -> &[String] {
        &self.area_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.area_ids.iter().position(|a| a == id)
    }

    /// Sorted neighbor indices of area `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn n_neighbors(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Undirected edges as `(i, k)` pairs with `i < k`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&k| k > i).map(move |&k| (i, k)))
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Number of connected components (the rank deficiency of the ICAR precision).
    pub fn n_components(&self) -> usize {
        let n = self.n_areas();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                for &k in &self.neighbors[i] {
                    if !seen[k] {
                        seen[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
        count
    }

    /// Sum of the previous-day counts over the neighbors of area `i`.
    pub fn neighbor_lag_sum(&self, counts_prev: &[f64], i: usize) -> Result<f64> {
        if i >= self.n_areas() {
            return Err(Error::IndexOutOfRange { index: i, len: self.n_areas() });
        }
        if counts_prev.len() != self.n_areas() {
            return Err(Error::IndexOutOfRange { index: counts_prev.len(), len: self.n_areas() });
        }
        Ok(self.neighbors[i].iter().map(|&k| counts_prev[k]).sum())
    }
}
