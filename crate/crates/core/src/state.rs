use std::collections::BTreeSet;

use rand::{Rng, RngCore};

use crate::error::{invalid, Result};

/// Subset of `0..n` with O(1) insert, remove and uniform pick.
#[derive(Debug, Clone)]
pub struct IndexedSet {
    items: Vec<usize>,
    pos: Vec<usize>,
}

const ABSENT: usize = usize::MAX;

impl IndexedSet {
    pub fn new(n: usize) -> Self {
        Self { items: Vec::new(), pos: vec![ABSENT; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { items: (0..n).collect(), pos: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.pos[x] != ABSENT
    }

    pub fn insert(&mut self, x: usize) -> bool {
        if self.contains(x) {
            return false;
        }
        self.pos[x] = self.items.len();
        self.items.push(x);
        true
    }

    pub fn remove(&mut self, x: usize) -> bool {
        let p = self.pos[x];
        if p == ABSENT {
            return false;
        }
        let last = self.items.pop().expect("nonempty");
        if last != x {
            self.items[p] = last;
            self.pos[last] = p;
        }
        self.pos[x] = ABSENT;
        true
    }

    pub fn pick<R: RngCore + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items[rng.random_range(0..self.items.len())])
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.items
    }
}

/// Servers bucketed by queue length, with a pointer to the lowest
/// nonempty bucket so that join-the-shortest-queue is O(1).
#[derive(Debug, Clone)]
pub struct LevelIndex {
    level: Vec<u32>,
    pos: Vec<usize>,
    buckets: Vec<Vec<usize>>,
    min_level: u32,
    total: u64,
}

impl LevelIndex {
    pub fn new(queues: &[u32]) -> Self {
        let top = queues.iter().copied().max().unwrap_or(0) as usize;
        let mut buckets = vec![Vec::new(); top + 2];
        let mut pos = vec![0; queues.len()];
        for (s, &q) in queues.iter().enumerate() {
            pos[s] = buckets[q as usize].len();
            buckets[q as usize].push(s);
        }
        let min_level = queues.iter().copied().min().unwrap_or(0);
        Self { level: queues.to_vec(), pos, buckets, min_level, total: queues.iter().map(|&q| q as u64).sum() }
    }

    pub fn n(&self) -> usize {
        self.level.len()
    }

    #[inline]
    pub fn level(&self, s: usize) -> u32 {
        self.level[s]
    }

    pub fn levels(&self) -> &[u32] {
        &self.level
    }

    pub fn min_level(&self) -> u32 {
        self.min_level
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bucket(&self, k: u32) -> &[usize] {
        self.buckets.get(k as usize).map(|b| b.as_slice()).unwrap_or(&[])
    }

    pub fn count_at(&self, k: u32) -> usize {
        self.bucket(k).len()
    }

    fn detach(&mut self, s: usize) {
        let k = self.level[s] as usize;
        let p = self.pos[s];
        let b = &mut self.buckets[k];
        let last = b.pop().expect("server in its bucket");
        if last != s {
            b[p] = last;
            self.pos[last] = p;
        }
    }

    fn attach(&mut self, s: usize, k: u32) {
        let k = k as usize;
        if k >= self.buckets.len() {
            self.buckets.resize_with(k + 2, Vec::new);
        }
        self.pos[s] = self.buckets[k].len();
        self.buckets[k].push(s);
        self.level[s] = k as u32;
    }

    #[inline]
    pub fn increment(&mut self, s: usize) {
        let k = self.level[s];
        self.detach(s);
        self.attach(s, k + 1);
        self.total += 1;
        if k == self.min_level && self.buckets[k as usize].is_empty() {
            self.min_level = k + 1;
        }
    }

    #[inline]
    pub fn decrement(&mut self, s: usize) {
        let k = self.level[s];
        debug_assert!(k > 0);
        self.detach(s);
        self.attach(s, k - 1);
        self.total -= 1;
        if k - 1 < self.min_level {
            self.min_level = k - 1;
        }
    }

    /// Uniform choice among the servers with the globally shortest queue.
    pub fn pick_min<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let b = &self.buckets[self.min_level as usize];
        b[rng.random_range(0..b.len())]
    }

    pub fn pick_at<R: RngCore + ?Sized>(&self, k: u32, rng: &mut R) -> Option<usize> {
        let b = self.bucket(k);
        if b.is_empty() {
            None
        } else {
            Some(b[rng.random_range(0..b.len())])
        }
    }

    pub fn occupancy(&self) -> OccupancyVector {
        OccupancyVector::from_queues(&self.level)
    }
}

/// `q[i]` is the number of servers with at least `i+1` tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyVector(pub Vec<u64>);

impl OccupancyVector {
    pub fn from_queues(queues: &[u32]) -> Self {
        let top = queues.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; top + 1];
        for &q in queues {
            counts[q as usize] += 1;
        }
        let mut occ = vec![0u64; top];
        let mut acc = 0;
        for i in (1..=top).rev() {
            acc += counts[i];
            occ[i - 1] = acc;
        }
        OccupancyVector(occ)
    }

    /// Q_i for i >= 1 (zero beyond the stored length).
    pub fn get(&self, i: usize) -> u64 {
        if i == 0 {
            panic!("occupancy levels start at 1");
        }
        self.0.get(i - 1).copied().unwrap_or(0)
    }

    pub fn total_tasks(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_monotone(&self, n: u64) -> bool {
        self.0.first().is_none_or(|&q| q <= n) && self.0.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn fractions(&self, n: usize) -> Vec<f64> {
        self.0.iter().map(|&q| q as f64 / n as f64).collect()
    }
}

/// Queue lengths and dispatcher-visible bookkeeping for a server farm.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub levels: LevelIndex,
    pub buffer: Option<u32>,
    busy_until: Vec<f64>,
    workload_index: Option<BTreeSet<(u64, usize)>>,
    pub rr_cursor: usize,
    pub losses: u64,
    pub now: f64,
}

impl SystemState {
    pub fn new(queues: &[u32], buffer: Option<u32>) -> Result<Self> {
        if queues.is_empty() {
            return invalid("need at least one server");
        }
        if let Some(b) = buffer {
            if b == 0 {
                return invalid("buffer must be >= 1");
            }
            if queues.iter().any(|&q| q > b) {
                return invalid("initial queue exceeds buffer");
            }
        }
        Ok(Self {
            levels: LevelIndex::new(queues),
            buffer,
            busy_until: vec![0.0; queues.len()],
            workload_index: None,
            rr_cursor: 0,
            losses: 0,
            now: 0.0,
        })
    }

    pub fn empty(n: usize, buffer: Option<u32>) -> Result<Self> {
        Self::new(&vec![0; n], buffer)
    }

    /// Keep an ordered index of busy servers' completion times (for JSW).
    pub fn track_workloads(&mut self) {
        let mut idx = BTreeSet::new();
        for s in 0..self.n() {
            if self.queue(s) > 0 {
                idx.insert((self.busy_until[s].to_bits(), s));
            }
        }
        self.workload_index = Some(idx);
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.levels.n()
    }

    #[inline]
    pub fn queue(&self, s: usize) -> u32 {
        self.levels.level(s)
    }

    pub fn queues(&self) -> &[u32] {
        self.levels.levels()
    }

    #[inline]
    pub fn is_full(&self, s: usize) -> bool {
        self.buffer.is_some_and(|b| self.queue(s) >= b)
    }

    pub fn workload(&self, s: usize) -> f64 {
        if self.queue(s) == 0 {
            0.0
        } else {
            (self.busy_until[s] - self.now).max(0.0)
        }
    }

    pub fn busy_until(&self, s: usize) -> f64 {
        self.busy_until[s]
    }

    /// Busy server with the least residual work, if any server is busy.
    pub fn least_loaded_busy(&self) -> Option<usize> {
        match &self.workload_index {
            Some(idx) => idx.iter().next().map(|&(_, s)| s),
            None => (0..self.n())
                .filter(|&s| self.queue(s) > 0)
                .min_by(|&a, &b| self.busy_until[a].total_cmp(&self.busy_until[b])),
        }
    }

    /// FCFS admission at a single-server queue; returns (service start, completion).
    pub fn admit_fcfs(&mut self, s: usize, service: f64) -> (f64, f64) {
        let start = if self.queue(s) == 0 { self.now } else { self.busy_until[s].max(self.now) };
        let finish = start + service;
        if let Some(idx) = self.workload_index.as_mut() {
            if self.levels.level(s) > 0 {
                idx.remove(&(self.busy_until[s].to_bits(), s));
            }
            idx.insert((finish.to_bits(), s));
        }
        self.busy_until[s] = finish;
        self.levels.increment(s);
        (start, finish)
    }

    /// Admission to an infinite-server pool.
    pub fn admit_pool(&mut self, s: usize) {
        self.levels.increment(s);
    }

    pub fn depart(&mut self, s: usize) {
        self.levels.decrement(s);
        if self.levels.level(s) == 0 {
            if let Some(idx) = self.workload_index.as_mut() {
                idx.remove(&(self.busy_until[s].to_bits(), s));
            }
        }
    }

    pub fn occupancy(&self) -> OccupancyVector {
        self.levels.occupancy()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    #[test]
    fn occupancy_from_queues() {
        let occ = OccupancyVector::from_queues(&[3, 1, 2, 0]);
        assert_eq!(occ.0, vec![3, 2, 1]);
        assert_eq!(occ.total_tasks(), 6);
        assert_eq!(occ.get(4), 0);
    }

    #[test]
    fn indexed_set_ops() {
        let mut s = IndexedSet::new(5);
        assert!(s.insert(3));
        assert!(!s.insert(3));
        s.insert(1);
        s.insert(4);
        assert!(s.remove(3));
        assert!(!s.contains(3));
        let mut v = s.as_slice().to_vec();
        v.sort();
        assert_eq!(v, vec![1, 4]);
    }

    #[test]
    fn fcfs_admission_times() {
        let mut st = SystemState::empty(1, None).unwrap();
        let (s0, f0) = st.admit_fcfs(0, 1.0);
        assert_eq!((s0, f0), (0.0, 1.0));
        st.now = 0.25;
        let (s1, f1) = st.admit_fcfs(0, 1.0);
        // second task waits exactly the residual service 0.75
        assert_eq!(s1 - st.now, 0.75);
        assert_eq!(f1, 2.0);
    }

    proptest! {
        #[test]
        fn level_index_tracks_queues(ops in proptest::collection::vec((0usize..6, any::<bool>()), 1..300)) {
            let mut li = LevelIndex::new(&[0; 6]);
            let mut q = [0u32; 6];
            let mut rng = RngStream::new(1, 0);
            for (s, up) in ops {
                if up {
                    li.increment(s);
                    q[s] += 1;
                } else if q[s] > 0 {
                    li.decrement(s);
                    q[s] -= 1;
                }
                let m = *q.iter().min().unwrap();
                prop_assert_eq!(li.min_level(), m);
                prop_assert_eq!(q[li.pick_min(&mut rng)], m);
                prop_assert_eq!(li.levels(), &q[..]);
                let occ = li.occupancy();
                prop_assert!(occ.is_monotone(6));
                prop_assert_eq!(occ.total_tasks(), q.iter().map(|&x| x as u64).sum::<u64>());
                for k in 0..=q.iter().copied().max().unwrap() {
                    prop_assert_eq!(li.count_at(k), q.iter().filter(|&&x| x == k).count());
                }
            }
        }
    }
}
