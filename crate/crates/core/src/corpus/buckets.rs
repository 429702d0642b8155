use crate::error::{Error, Result};

/// Number of cluster-size (and in-cluster position) buckets.
pub const SIZE_BUCKETS: usize = 8;
/// Number of mention-distance buckets.
pub const DISTANCE_BUCKETS: usize = 10;

/// Buckets `[1, 2, 3, 4, 5-7, 8-11, 12-19, 20+]`.
pub fn bucket_cluster_size(n: i64) -> Result<usize> {
    Ok(match n {
        i64::MIN..=0 => return Err(Error::ClusterSize(n)),
        1..=4 => (n - 1) as usize,
        5..=7 => 4,
        8..=11 => 5,
        12..=19 => 6,
        _ => 7,
    })
}

/// Buckets `[0, 1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63, 64+]`.
pub fn bucket_distance(d: i64) -> Result<usize> {
    Ok(match d {
        i64::MIN..=-1 => return Err(Error::Distance(d)),
        0..=4 => d as usize,
        5..=7 => 5,
        8..=15 => 6,
        16..=31 => 7,
        32..=63 => 8,
        _ => 9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_examples() {
        assert_eq!(bucket_cluster_size(1).unwrap(), 0);
        assert_eq!(bucket_cluster_size(4).unwrap(), 3);
        assert_eq!(bucket_cluster_size(6).unwrap(), 4);
        assert_eq!(bucket_cluster_size(100).unwrap(), 7);
        assert!(bucket_cluster_size(0).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(bucket_distance(0).unwrap(), 0);
        assert_eq!(bucket_distance(6).unwrap(), 5);
        assert_eq!(bucket_distance(64).unwrap(), 9);
        assert!(bucket_distance(-1).is_err());
    }

    #[test]
    fn total_monotone_surjective() {
        let sizes: Vec<usize> = (1..200).map(|n| bucket_cluster_size(n).unwrap()).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(sizes.iter().copied().max(), Some(SIZE_BUCKETS - 1));
        for b in 0..SIZE_BUCKETS {
            assert!(sizes.contains(&b));
        }
        let dists: Vec<usize> = (0..200).map(|n| bucket_distance(n).unwrap()).collect();
        assert!(dists.windows(2).all(|w| w[0] <= w[1]));
        for b in 0..DISTANCE_BUCKETS {
            assert!(dists.contains(&b));
        }
    }
}
