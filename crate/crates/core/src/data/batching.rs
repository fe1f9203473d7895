use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// Index pairs into the sample list; the two targets of a pair differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairStream {
    pub batches: Vec<PairBatch>,
    /// Batches that produced no pair.
    pub empty_batches: usize,
    /// Samples still unpaired after the last batch.
    pub leftover: usize,
}

/// Shuffles sample indices, cuts them into batches of `batch_size`, and pairs
/// samples of different classes within each batch, always drawing from the
/// two largest remaining class groups. Unpaired samples move on to the next
/// batch.
pub fn pair_batches(targets: &[usize], batch_size: usize, seed: u64) -> Result<PairStream, DataError> {
    if batch_size < 2 {
        return Err(DataError::Spec(format!("batch size {batch_size} < 2")));
    }
    let distinct: std::collections::BTreeSet<usize> = targets.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(DataError::SingleClass(distinct.len()));
    }
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut batches = Vec::new();
    let mut empty_batches = 0;
    let mut carry: Vec<usize> = Vec::new();
    for chunk in order.chunks(batch_size) {
        let mut groups: BTreeMap<usize, std::collections::VecDeque<usize>> = BTreeMap::new();
        for &i in carry.iter().chain(chunk) {
            groups.entry(targets[i]).or_default().push_back(i);
        }
        let mut pairs = Vec::new();
        loop {
            let mut sizes: Vec<(usize, usize)> = groups
                .iter()
                .filter(|(_, g)| !g.is_empty())
                .map(|(&c, g)| (g.len(), c))
                .collect();
            if sizes.len() < 2 {
                break;
            }
            sizes.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let (ca, cb) = (sizes[0].1, sizes[1].1);
            let i = groups.get_mut(&ca).and_then(|g| g.pop_front()).expect("non-empty");
            let j = groups.get_mut(&cb).and_then(|g| g.pop_front()).expect("non-empty");
            pairs.push((i, j));
        }
        carry = groups.into_values().flatten().collect();
        if pairs.is_empty() {
            empty_batches += 1;
        } else {
            batches.push(PairBatch { pairs });
        }
    }
    Ok(PairStream {
        batches,
        empty_batches,
        leftover: carry.len(),
    })
}
