use std::collections::BTreeMap;

/// Time integral of a piecewise-constant quantity restricted to `[start, ∞)`.
#[derive(Debug, Clone)]
pub struct TimeIntegral {
    start: f64,
    last: f64,
    value: f64,
    integral: f64,
}

impl TimeIntegral {
    pub fn new(start: f64, value: f64) -> Self {
        Self { start, last: 0.0, value, integral: 0.0 }
    }

    #[inline]
    fn flush(&mut self, t: f64) {
        let from = self.last.max(self.start);
        if t > from {
            self.integral += self.value * (t - from);
        }
        self.last = t;
    }

    #[inline]
    pub fn set(&mut self, t: f64, v: f64) {
        self.flush(t);
        self.value = v;
    }

    #[inline]
    pub fn add(&mut self, t: f64, dv: f64) {
        self.flush(t);
        self.value += dv;
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Average over `[start, horizon]`.
    pub fn average(&mut self, horizon: f64) -> f64 {
        self.flush(horizon);
        if horizon > self.start {
            self.integral / (horizon - self.start)
        } else {
            self.value
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// Q_1, Q_2, … at the sample time
    pub occupancy: Vec<u64>,
}

/// Occupancy counts Q_i, their time averages over a stationary window,
/// an optional sampled trajectory and an optional state-occupation law.
#[derive(Debug, Clone)]
pub struct OccupancyObserver {
    n: usize,
    window_start: f64,
    q: Vec<u64>,
    integrals: Vec<TimeIntegral>,
    sample_interval: Option<f64>,
    next_sample: f64,
    pub samples: Vec<Snapshot>,
    pub max_queue: u32,
    law: Option<BTreeMap<Vec<u32>, f64>>,
    law_last: f64,
}

impl OccupancyObserver {
    pub fn new(n: usize, window_start: f64, sample_interval: Option<f64>, state_law: bool) -> Self {
        Self {
            n,
            window_start,
            q: Vec::new(),
            integrals: Vec::new(),
            sample_interval: sample_interval.filter(|&d| d > 0.0),
            next_sample: 0.0,
            samples: Vec::new(),
            max_queue: 0,
            law: state_law.then(BTreeMap::new),
            law_last: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window_start(&self) -> f64 {
        self.window_start
    }

    pub fn tracks_law(&self) -> bool {
        self.law.is_some()
    }

    /// Emit trajectory samples for grid times up to `t`.
    #[inline]
    pub fn advance(&mut self, t: f64) {
        if let Some(dt) = self.sample_interval {
            while self.next_sample <= t {
                self.samples.push(Snapshot { t: self.next_sample, occupancy: self.q.clone() });
                self.next_sample = self.samples.len() as f64 * dt;
            }
        }
    }

    /// Record time spent in the current (unsorted) queue vector before it changes.
    pub fn law_step(&mut self, t: f64, queues: &[u32]) {
        if let Some(law) = self.law.as_mut() {
            let from = self.law_last.max(self.window_start);
            if t > from {
                let mut key = queues.to_vec();
                key.sort_unstable();
                *law.entry(key).or_insert(0.0) += t - from;
            }
            self.law_last = t;
        }
    }

    /// A server moved from `k` to `k+1` tasks.
    #[inline]
    pub fn inc(&mut self, t: f64, k: u32) {
        let i = k as usize;
        if i >= self.q.len() {
            self.q.resize(i + 1, 0);
            self.integrals.resize_with(i + 1, || TimeIntegral::new(self.window_start, 0.0));
        }
        self.q[i] += 1;
        self.integrals[i].add(t, 1.0);
        if k + 1 > self.max_queue {
            self.max_queue = k + 1;
        }
    }

    /// A server moved from `k` to `k-1` tasks.
    #[inline]
    pub fn dec(&mut self, t: f64, k: u32) {
        let i = (k - 1) as usize;
        self.q[i] -= 1;
        self.integrals[i].add(t, -1.0);
    }

    pub fn current(&self) -> &[u64] {
        &self.q
    }

    pub fn finish(&mut self, horizon: f64, queues: &[u32]) {
        self.advance(horizon);
        self.law_step(horizon, queues);
        for it in &mut self.integrals {
            it.flush(horizon);
        }
    }

    /// Time-averaged fraction of servers with at least `i` tasks (i >= 1).
    pub fn q_avg(&mut self, i: usize, horizon: f64) -> f64 {
        match self.integrals.get_mut(i - 1) {
            Some(it) => it.average(horizon) / self.n as f64,
            None => 0.0,
        }
    }

    /// Time-averaged number of tasks in the system.
    pub fn mean_tasks(&mut self, horizon: f64) -> f64 {
        self.integrals.iter_mut().map(|it| it.average(horizon)).sum()
    }

    pub fn levels(&self) -> usize {
        self.q.len()
    }

    /// Fraction of window time spent in each sorted queue vector.
    pub fn state_law(&self) -> Option<BTreeMap<Vec<u32>, f64>> {
        let law = self.law.as_ref()?;
        let total: f64 = law.values().sum();
        Some(law.iter().map(|(k, v)| (k.clone(), v / total)).collect())
    }

    /// Sampled fractions q_i(t) for level `i` (i >= 1).
    pub fn trajectory(&self, i: usize) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .map(|s| (s.t, s.occupancy.get(i - 1).copied().unwrap_or(0) as f64 / self.n as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskRecord {
    pub arrival: f64,
    pub start: f64,
    pub service: f64,
    pub server: usize,
}

/// Waiting-time accumulator over tasks arriving in the stationary window.
#[derive(Debug, Clone, Default)]
pub struct WaitStats {
    pub window_start: f64,
    pub arrivals: u64,
    pub admitted: u64,
    pub lost: u64,
    pub delayed: u64,
    pub sum_wait: f64,
    pub sum_sojourn: f64,
}

impl WaitStats {
    pub fn new(window_start: f64) -> Self {
        Self { window_start, ..Default::default() }
    }

    #[inline]
    pub fn arrival(&mut self, t: f64) {
        if t >= self.window_start {
            self.arrivals += 1;
        }
    }

    #[inline]
    pub fn lost(&mut self, t: f64) {
        if t >= self.window_start {
            self.lost += 1;
        }
    }

    /// `found_busy`: the server was occupied when the task joined it.
    #[inline]
    pub fn admitted(&mut self, t: f64, wait: f64, sojourn: f64, found_busy: bool) {
        if t >= self.window_start {
            self.admitted += 1;
            self.sum_wait += wait;
            self.sum_sojourn += sojourn;
            if found_busy {
                self.delayed += 1;
            }
        }
    }

    pub fn mean_wait(&self) -> f64 {
        if self.admitted == 0 {
            0.0
        } else {
            self.sum_wait / self.admitted as f64
        }
    }

    pub fn mean_sojourn(&self) -> f64 {
        if self.admitted == 0 {
            0.0
        } else {
            self.sum_sojourn / self.admitted as f64
        }
    }

    pub fn p_wait(&self) -> f64 {
        if self.admitted == 0 {
            0.0
        } else {
            self.delayed as f64 / self.admitted as f64
        }
    }

    pub fn loss_fraction(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.lost as f64 / self.arrivals as f64
        }
    }
}
