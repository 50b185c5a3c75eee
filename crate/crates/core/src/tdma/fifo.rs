use std::collections::VecDeque;

/// Client-side MAC transmission queue.
///
/// Underflows are counted only once the first packet has been queued; slots
/// that pass before the flow starts are not transmission opportunities for it.
#[derive(Debug, Clone)]
pub struct FifoBuffer<T> {
    queue: VecDeque<T>,
    capacity: usize,
    primed: bool,
    pub underflow_events: u64,
    pub overflow_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("FIFO overflow at capacity {capacity}")]
pub struct Overflow {
    pub capacity: usize,
}

impl<T> FifoBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
            primed: false,
            underflow_events: 0,
            overflow_events: 0,
        }
    }

    pub fn occupancy(&self) -> usize {
        self.queue.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, item: T) -> Result<(), Overflow> {
        if self.queue.len() >= self.capacity {
            self.overflow_events += 1;
            return Err(Overflow {
                capacity: self.capacity,
            });
        }
        self.primed = true;
        self.queue.push_back(item);
        Ok(())
    }

    /// Head-of-line packet at a transmission opportunity. The flag is true
    /// when the opportunity was an underflow.
    pub fn take(&mut self) -> (Option<T>, bool) {
        match self.queue.pop_front() {
            Some(p) => (Some(p), false),
            None => {
                if self.primed {
                    self.underflow_events += 1;
                }
                (None, self.primed)
            }
        }
    }
}
