//! Seeded random splitting of a table by ratio.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taegan::codec::RawTable;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("bad ratio {0:?}: expected positive integers separated by ':'")]
    BadRatio(String),
}

/// Parses `"1:1:1"`-style ratios.
pub fn parse_ratio(text: &str) -> Result<Vec<u64>, SplitError> {
    let parts: Option<Vec<u64>> = text.split(':').map(|p| p.trim().parse().ok().filter(|&v| v > 0)).collect();
    match parts {
        Some(p) if !p.is_empty() => Ok(p),
        _ => Err(SplitError::BadRatio(text.to_owned())),
    }
}

/// Part sizes: each part gets the floor of its share, and leftover rows go
/// one at a time to the parts in order, starting with the first.
pub fn split_sizes(n: usize, ratio: &[u64]) -> Vec<usize> {
    let total: u64 = ratio.iter().sum();
    let mut sizes: Vec<usize> = ratio
        .iter()
        .map(|&r| (n as u128 * r as u128 / total as u128) as usize)
        .collect();
    // Fewer leftover rows than parts, so one pass suffices.
    let left = n - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut().take(left) {
        *s += 1;
    }
    sizes
}

/// Shuffles the rows with `seed` and cuts them into consecutive parts.
pub fn split_table(table: &RawTable, ratio: &[u64], seed: u64) -> Vec<RawTable> {
    let mut idx: Vec<usize> = (0..table.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut start = 0;
    split_sizes(table.len(), ratio)
        .into_iter()
        .map(|size| {
            let part = table.select(&idx[start..start + size]);
            start += size;
            part
        })
        .collect()
}

/// File stem suffixes for the parts of a split.
pub fn part_names(parts: usize) -> Vec<String> {
    if parts == 3 {
        vec!["train".into(), "val".into(), "test".into()]
    } else {
        (1..=parts).map(|i| format!("part{i}")).collect()
    }
}
