use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutReason {
    /// The batch reached the maximum message count.
    Size,
    /// The batch timeout expired first.
    Timeout,
}

/// What the caller must do after [`BlockCutter::push`].
#[derive(Debug, PartialEq)]
pub enum PushOutcome<T> {
    Queued,
    /// First item of a new batch: fire [`BlockCutter::on_timer`] with
    /// `generation` at `deadline_us`.
    ArmTimer { deadline_us: u64, generation: u64 },
    Cut(Vec<T>),
}

/// Batching rule of the ordering service: a block is cut as soon as either
/// the batch holds `max_message_count` items or `timeout_us` has passed
/// since the first item of the batch arrived.
#[derive(Debug, Clone)]
pub struct BlockCutter<T> {
    max_message_count: usize,
    timeout_us: u64,
    pending: Vec<T>,
    generation: u64,
}

impl<T> BlockCutter<T> {
    pub fn new(max_message_count: usize, timeout_us: u64) -> Self {
        assert!(max_message_count > 0 && timeout_us > 0);
        BlockCutter {
            max_message_count,
            timeout_us,
            pending: Vec::new(),
            generation: 0,
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn push(&mut self, item: T, now_us: u64) -> PushOutcome<T> {
        self.pending.push(item);
        if self.pending.len() >= self.max_message_count {
            // Invalidate the armed timer.
            self.generation += 1;
            return PushOutcome::Cut(std::mem::take(&mut self.pending));
        }
        if self.pending.len() == 1 {
            self.generation += 1;
            return PushOutcome::ArmTimer {
                deadline_us: now_us + self.timeout_us,
                generation: self.generation,
            };
        }
        PushOutcome::Queued
    }

    /// A timer armed by `push` expired. Stale timers are ignored.
    pub fn on_timer(&mut self, generation: u64) -> Option<Vec<T>> {
        if generation != self.generation || self.pending.is_empty() {
            return None;
        }
        self.generation += 1;
        Some(std::mem::take(&mut self.pending))
    }
}
