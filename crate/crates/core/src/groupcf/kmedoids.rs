//! PAM k-medoids over key-feature tuples.
//!
//! Duplicate tuples are collapsed into weighted points first; the objective
//! (total weighted dissimilarity to the nearest medoid) is unchanged by this.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng::rng_from;
use crate::{Error, Result};

/// Mixed dissimilarity over tuples: `|a - b| / scale` on dimensions with a
/// scale, 0/1 mismatch on the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleDissimilarity {
    /// `Some(scale)` for a continuous dimension, `None` for a categorical one.
    pub scales: Vec<Option<f64>>,
}

impl TupleDissimilarity {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.scales
            .iter()
            .zip(a.iter().zip(b))
            .map(|(scale, (x, y))| match scale {
                Some(s) => libm::fabs(x - y) / s,
                None => (x != y) as u8 as f64,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Medoids {
    /// Indices into the input points.
    pub medoids: Vec<usize>,
    /// Sum over all points of the dissimilarity to their nearest medoid.
    pub cost: f64,
}

fn tuple_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Greedy BUILD initialisation followed by best-improvement SWAP until no
/// swap lowers the cost. Ties in either phase go to the earliest point in a
/// seeded scan order, so the result is a deterministic function of the seed.
pub fn kmedoids(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    dissimilarity: &TupleDissimilarity,
) -> Result<Medoids> {
    if k == 0 || k > points.len() {
        return Err(Error::TooFewPoints {
            points: points.len(),
            k,
        });
    }

    let mut first_of: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut distinct: Vec<usize> = Vec::new();
    let mut weight: Vec<f64> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match first_of.get(&tuple_key(p)) {
            Some(&d) => weight[d] += 1.0,
            None => {
                first_of.insert(tuple_key(p), distinct.len());
                distinct.push(i);
                weight.push(1.0);
            }
        }
    }

    if k >= distinct.len() {
        let mut medoids = distinct.clone();
        let mut taken = vec![false; points.len()];
        for &m in &medoids {
            taken[m] = true;
        }
        medoids.extend((0..points.len()).filter(|&i| !taken[i]).take(k - distinct.len()));
        return Ok(Medoids { medoids, cost: 0.0 });
    }

    let n = distinct.len();
    let dist = |a: usize, b: usize| dissimilarity.distance(&points[distinct[a]], &points[distinct[b]]);
    let mut scan: Vec<usize> = (0..n).collect();
    scan.shuffle(&mut rng_from(seed));

    // BUILD
    let mut nearest = vec![f64::INFINITY; n];
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for &c in &scan {
            if is_medoid[c] {
                continue;
            }
            // first pick: minimal total cost; later picks: largest cost reduction
            let score: f64 = if chosen.is_empty() {
                -(0..n).map(|j| weight[j] * dist(j, c)).sum::<f64>()
            } else {
                (0..n)
                    .map(|j| weight[j] * (nearest[j] - dist(j, c)).max(0.0))
                    .sum()
            };
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, c));
            }
        }
        let (_, c) = best.expect("k < distinct points");
        chosen.push(c);
        is_medoid[c] = true;
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist(j, c));
        }
    }

    // SWAP
    let assign = |chosen: &[usize]| -> (Vec<f64>, Vec<usize>, Vec<f64>) {
        let mut d1 = vec![f64::INFINITY; n];
        let mut who = vec![0usize; n];
        let mut d2 = vec![f64::INFINITY; n];
        for j in 0..n {
            for (slot, &m) in chosen.iter().enumerate() {
                let d = dist(j, m);
                if d < d1[j] {
                    d2[j] = d1[j];
                    d1[j] = d;
                    who[j] = slot;
                } else if d < d2[j] {
                    d2[j] = d;
                }
            }
        }
        (d1, who, d2)
    };
    let mut cost;
    for _ in 0..1000 {
        let (d1, who, d2) = assign(&chosen);
        cost = (0..n).map(|j| weight[j] * d1[j]).sum::<f64>();
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for &o in &scan {
                if is_medoid[o] {
                    continue;
                }
                let delta: f64 = (0..n)
                    .map(|j| {
                        let dj = dist(j, o);
                        let after = if who[j] == slot { dj.min(d2[j]) } else { dj.min(d1[j]) };
                        weight[j] * (after - d1[j])
                    })
                    .sum();
                if best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, slot, o));
                }
            }
        }
        match best {
            Some((delta, slot, o)) if delta < -1e-12 * cost.max(1.0) => {
                is_medoid[chosen[slot]] = false;
                is_medoid[o] = true;
                chosen[slot] = o;
            }
            _ => break,
        }
    }
    let (d1, _, _) = assign(&chosen);
    cost = (0..n).map(|j| weight[j] * d1[j]).sum::<f64>();
    Ok(Medoids {
        medoids: chosen.into_iter().map(|c| distinct[c]).collect(),
        cost,
    })
}
