//! Link-, mention-, and entity-based coreference scores.

use std::collections::{HashMap, HashSet};

use super::assignment::max_weight_assignment;
use super::{Counts, Prf};
use crate::corpus::Span;
use crate::error::{Error, Result};

pub type Partition = [Vec<Span>];

/// Span → cluster index, rejecting spans listed twice.
fn index(partition: &Partition) -> Result<HashMap<Span, usize>> {
    let mut map = HashMap::new();
    for (c, cluster) in partition.iter().enumerate() {
        for s in cluster {
            if map.insert(*s, c).is_some() {
                return Err(Error::DuplicateSpan(s.start, s.end));
            }
        }
    }
    Ok(map)
}

/// Copies `partition` without size-1 clusters.
pub fn drop_singletons(partition: &Partition) -> Vec<Vec<Span>> {
    partition.iter().filter(|c| c.len() > 1).cloned().collect()
}

/// Σ (|K| − p(K)) and Σ (|K| − 1) over the clusters of `key`, where p(K)
/// counts the parts of `response` meeting K plus K's unaligned mentions.
fn muc_side(key: &Partition, response: &HashMap<Span, usize>) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in key {
        let mut parts = HashSet::new();
        let mut unaligned = 0;
        for s in k {
            match response.get(s) {
                Some(c) => {
                    parts.insert(*c);
                }
                None => unaligned += 1,
            }
        }
        num += (k.len() - parts.len() - unaligned) as f64;
        den += (k.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(key: &Partition, response: &Partition) -> Result<Counts> {
    let ki = index(key)?;
    let ri = index(response)?;
    let (r_num, r_den) = muc_side(key, &ri);
    let (p_num, p_den) = muc_side(response, &ki);
    Ok(Counts {
        p_num,
        p_den,
        r_num,
        r_den,
    })
}

pub fn muc(key: &Partition, response: &Partition) -> Result<Prf> {
    Ok(muc_counts(key, response)?.prf())
}

/// Σ over mentions of `key` of |K ∩ R| / |K|.
fn b_cubed_side(key: &Partition, response: &Partition, response_index: &HashMap<Span, usize>) -> f64 {
    let mut total = 0.0;
    for k in key {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for s in k {
            if let Some(c) = response_index.get(s) {
                *overlap.entry(*c).or_default() += 1;
            }
        }
        for s in k {
            if let Some(c) = response_index.get(s) {
                debug_assert!(response[*c].contains(s));
                total += overlap[c] as f64 / k.len() as f64;
            }
        }
    }
    total
}

pub fn b_cubed_counts(key: &Partition, response: &Partition) -> Result<Counts> {
    let ki = index(key)?;
    let ri = index(response)?;
    Ok(Counts {
        p_num: b_cubed_side(response, key, &ki),
        p_den: ri.len() as f64,
        r_num: b_cubed_side(key, response, &ri),
        r_den: ki.len() as f64,
    })
}

pub fn b_cubed(key: &Partition, response: &Partition) -> Result<Prf> {
    Ok(b_cubed_counts(key, response)?.prf())
}

/// `φ4(K, R) = 2|K ∩ R| / (|K| + |R|)`.
pub fn phi4(k: &[Span], r: &[Span]) -> f64 {
    let ks: HashSet<&Span> = k.iter().collect();
    let common = r.iter().filter(|s| ks.contains(s)).count();
    2.0 * common as f64 / (k.len() + r.len()) as f64
}

pub fn ceaf_phi4_counts(key: &Partition, response: &Partition) -> Result<Counts> {
    index(key)?;
    index(response)?;
    let sim: Vec<Vec<f64>> = key
        .iter()
        .map(|k| response.iter().map(|r| phi4(k, r)).collect())
        .collect();
    let (total, _) = max_weight_assignment(&sim);
    Ok(Counts {
        p_num: total,
        p_den: response.len() as f64,
        r_num: total,
        r_den: key.len() as f64,
    })
}

pub fn ceaf_phi4(key: &Partition, response: &Partition) -> Result<Prf> {
    Ok(ceaf_phi4_counts(key, response)?.prf())
}
