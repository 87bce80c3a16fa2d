//! Time-ordered waiting queue in front of the fusion.

use super::{FusionError, SampleEnvelope};

/// Envelopes sorted by timestamp, ties kept in arrival order. Samples
/// older than the last processed timestamp by more than `lateness` are
/// refused.
#[derive(Debug, Clone, Default)]
pub struct EnvelopeQueue {
    items: Vec<(f64, u64, SampleEnvelope)>,
    seq: u64,
    watermark: Option<f64>,
    lateness: f64,
}

impl EnvelopeQueue {
    pub fn new(lateness: f64) -> Self {
        Self { items: Vec::new(), seq: 0, watermark: None, lateness }
    }

    /// Timestamp of the last dequeued envelope.
    pub fn watermark(&self) -> Option<f64> {
        self.watermark
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, env: SampleEnvelope) -> Result<(), FusionError> {
        let t = env.timestamp;
        if !t.is_finite() {
            return Err(FusionError::OutOfOrder { timestamp: t, watermark: self.watermark.unwrap_or(f64::NAN) });
        }
        if let Some(w) = self.watermark {
            if t < w - self.lateness {
                return Err(FusionError::OutOfOrder { timestamp: t, watermark: w });
            }
        }
        // insert after every entry with timestamp <= t keeps equal stamps stable
        let pos = self.items.partition_point(|(ts, _, _)| *ts <= t);
        self.items.insert(pos, (t, self.seq, env));
        self.seq += 1;
        Ok(())
    }

    pub fn peek_timestamp(&self) -> Option<f64> {
        self.items.first().map(|(t, _, _)| *t)
    }

    pub fn pop(&mut self) -> Option<SampleEnvelope> {
        if self.items.is_empty() {
            return None;
        }
        let (t, _, env) = self.items.remove(0);
        self.watermark = Some(self.watermark.map_or(t, |w| w.max(t)));
        Some(env)
    }

    /// Pops the next envelope if its timestamp is at most `until`.
    pub fn pop_until(&mut self, until: f64) -> Option<SampleEnvelope> {
        match self.peek_timestamp() {
            Some(t) if t <= until => self.pop(),
            _ => None,
        }
    }
}
