//! Trailing count window over fixed time bins.

/// Circular buffer of per-bin counts with a running sum.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    bins: Vec<u32>,
    head: usize,
    /// Index of the most recent bin pushed, if any.
    last_bin: Option<u64>,
    sum: u32,
}

impl SlidingWindow {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "window length must be positive");
        Self {
            bins: vec![0; len],
            head: 0,
            last_bin: None,
            sum: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum == 0
    }

    /// Counts in the last `len` bins.
    pub fn sum(&self) -> u32 {
        self.sum
    }

    fn push(&mut self, count: u32) {
        let evicted = std::mem::replace(&mut self.bins[self.head], count);
        self.sum = self.sum - evicted + count;
        self.head = (self.head + 1) % self.bins.len();
    }

    fn clear(&mut self) {
        self.bins.iter_mut().for_each(|b| *b = 0);
        self.sum = 0;
    }

    /// Records `count` events in bin `bin` (bins must be non-decreasing and
    /// each recorded at most once); skipped bins are zero. Returns the window
    /// sum ending at `bin`.
    pub fn record(&mut self, bin: u64, count: u32) -> u32 {
        let gap = match self.last_bin {
            None => bin + 1,
            Some(last) => {
                debug_assert!(bin > last, "bins must strictly increase");
                bin - last
            }
        };
        if gap as usize >= self.bins.len() {
            self.clear();
        } else {
            for _ in 1..gap {
                self.push(0);
            }
        }
        self.push(count);
        self.last_bin = Some(bin);
        self.sum
    }
}
