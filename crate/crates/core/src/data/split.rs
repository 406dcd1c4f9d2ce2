use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{Episode, EpisodeId, SplitId};
use crate::error::{Error, Result};

/// Three disjoint, near-equal sets of episode ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub d1: Vec<EpisodeId>,
    pub d2: Vec<EpisodeId>,
    pub d3: Vec<EpisodeId>,
}

impl SplitSet {
    pub fn ids(&self, split: SplitId) -> &[EpisodeId] {
        match split {
            SplitId::D1 => &self.d1,
            SplitId::D2 => &self.d2,
            SplitId::D3 => &self.d3,
        }
    }

    pub fn split_of(&self, id: EpisodeId) -> Option<SplitId> {
        SplitId::ALL.into_iter().find(|s| self.ids(*s).contains(&id))
    }

    pub fn assignment(&self) -> BTreeMap<EpisodeId, SplitId> {
        let mut map = BTreeMap::new();
        for s in SplitId::ALL {
            for id in self.ids(s) {
                map.insert(*id, s);
            }
        }
        map
    }

    /// Episodes belonging to `split`, in id order.
    pub fn select<'a>(&self, episodes: &'a [Episode], split: SplitId) -> Vec<&'a Episode> {
        let wanted: BTreeSet<EpisodeId> = self.ids(split).iter().copied().collect();
        let mut out: Vec<&Episode> = episodes.iter().filter(|e| wanted.contains(&e.id)).collect();
        out.sort_by_key(|e| e.id);
        out
    }

    pub fn from_assignment(map: &BTreeMap<EpisodeId, SplitId>) -> Self {
        let mut set = SplitSet {
            d1: Vec::new(),
            d2: Vec::new(),
            d3: Vec::new(),
        };
        for (id, s) in map {
            match s {
                SplitId::D1 => set.d1.push(*id),
                SplitId::D2 => set.d2.push(*id),
                SplitId::D3 => set.d3.push(*id),
            }
        }
        set
    }
}

/// Shuffles episodes by id with a seeded RNG and deals them into three splits of
/// sizes differing by at most one (the larger splits come first).
pub fn split_dataset(episodes: &[Episode], seed: u64) -> Result<SplitSet> {
    let mut ids: Vec<EpisodeId> = episodes.iter().map(|e| e.id).collect();
    split_ids(&mut ids, seed)
}

pub fn split_ids(ids: &mut [EpisodeId], seed: u64) -> Result<SplitSet> {
    let n = ids.len();
    if n < 3 {
        return Err(Error::InsufficientEpisodes(n));
    }
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let base = n / 3;
    let rem = n % 3;
    let sizes = [base + usize::from(rem > 0), base + usize::from(rem > 1), base];
    let (a, rest) = ids.split_at(sizes[0]);
    let (b, c) = rest.split_at(sizes[1]);
    let sorted = |s: &[EpisodeId]| {
        let mut v = s.to_vec();
        v.sort();
        v
    };
    Ok(SplitSet {
        d1: sorted(a),
        d2: sorted(b),
        d3: sorted(c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: u32) -> Vec<EpisodeId> {
        (0..n).map(EpisodeId).collect()
    }

    #[test]
    fn nine_and_ten() {
        let s = split_ids(&mut ids(9), 1).unwrap();
        assert_eq!((s.d1.len(), s.d2.len(), s.d3.len()), (3, 3, 3));
        let s = split_ids(&mut ids(10), 1).unwrap();
        assert_eq!((s.d1.len(), s.d2.len(), s.d3.len()), (4, 3, 3));
    }

    #[test]
    fn deterministic() {
        let a = split_ids(&mut ids(50), 99).unwrap();
        let b = split_ids(&mut ids(50), 99).unwrap();
        assert_eq!(a, b);
        let c = split_ids(&mut ids(50), 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few() {
        assert!(matches!(split_ids(&mut ids(2), 0), Err(Error::InsufficientEpisodes(2))));
    }

    proptest! {
        #[test]
        fn partitions_exactly(n in 3u32..200, seed in any::<u64>()) {
            let s = split_ids(&mut ids(n), seed).unwrap();
            let mut all: Vec<EpisodeId> = s.d1.iter().chain(&s.d2).chain(&s.d3).copied().collect();
            all.sort();
            prop_assert_eq!(all, ids(n));
            let sizes = [s.d1.len(), s.d2.len(), s.d3.len()];
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
