//! Bounded, sorted candidate list shared by the in-memory and disk searches.

use crate::distance::Neighbor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub dist: f32,
    pub id: u32,
    pub expanded: bool,
    pub in_flight: bool,
}

impl Candidate {
    pub fn neighbor(&self) -> Neighbor {
        Neighbor::new(self.id, self.dist)
    }
}

/// At most `capacity` candidates sorted by `(dist, id)`.
#[derive(Debug, Clone)]
pub struct CandidateList {
    capacity: usize,
    items: Vec<Candidate>,
}

impl CandidateList {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::with_capacity(capacity + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Candidate] {
        &self.items
    }

    /// Inserts unless the list is full and `(dist, id)` ranks after its
    /// last entry. Returns the insertion position. Callers guarantee `id` is
    /// not already present.
    pub fn insert(&mut self, id: u32, dist: f32) -> Option<usize> {
        let key = Neighbor::new(id, dist);
        if self.items.len() == self.capacity {
            let last = self.items.last().unwrap().neighbor();
            if key >= last {
                return None;
            }
        }
        let pos = self.items.partition_point(|c| c.neighbor() < key);
        self.items.insert(
            pos,
            Candidate {
                dist,
                id,
                expanded: false,
                in_flight: false,
            },
        );
        if self.items.len() > self.capacity {
            self.items.pop();
        }
        Some(pos)
    }

    pub fn position(&self, id: u32) -> Option<usize> {
        self.items.iter().position(|c| c.id == id)
    }

    pub fn get_mut(&mut self, pos: usize) -> &mut Candidate {
        &mut self.items[pos]
    }

    pub fn first_unexpanded(&self) -> Option<usize> {
        self.items.iter().position(|c| !c.expanded)
    }

    /// Ids of up to `width` best candidates that are neither expanded nor
    /// already in flight, best first.
    pub fn frontier(&self, width: usize) -> Vec<u32> {
        self.items
            .iter()
            .filter(|c| !c.expanded && !c.in_flight)
            .take(width)
            .map(|c| c.id)
            .collect()
    }

    pub fn has_unexpanded(&self) -> bool {
        self.items.iter().any(|c| !c.expanded)
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.items.first()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_list_rejects_worse() {
        let mut l = CandidateList::new(2);
        assert_eq!(l.insert(1, 1.0), Some(0));
        assert_eq!(l.insert(2, 2.0), Some(1));
        assert_eq!(l.insert(3, 3.0), None);
        assert_eq!(l.insert(0, 2.0), Some(1));
        assert_eq!(l.items().iter().map(|c| c.id).collect::<Vec<_>>(), vec![1, 0]);
    }

    proptest! {
        #[test]
        fn stays_sorted_and_bounded(cap in 1usize..20, dists in prop::collection::vec(0u16..50, 0..80)) {
            let mut l = CandidateList::new(cap);
            for (i, d) in dists.iter().enumerate() {
                l.insert(i as u32, *d as f32);
            }
            prop_assert!(l.len() <= cap);
            for w in l.items().windows(2) {
                prop_assert!(w[0].neighbor() < w[1].neighbor());
            }
            // Holds exactly the `cap` smallest keys.
            let mut all: Vec<Neighbor> = dists.iter().enumerate().map(|(i, d)| Neighbor::new(i as u32, *d as f32)).collect();
            all.sort();
            all.truncate(cap);
            prop_assert_eq!(all, l.items().iter().map(Candidate::neighbor).collect::<Vec<_>>());
        }
    }
}
