//! Training-trace records handed to a caller-provided sink.

/// One line of a loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub stage: &'static str,
    pub iter: u64,
    pub loss: f64,
    pub mean_reward: Option<f64>,
    pub d_acc: Option<f64>,
}

impl TraceRecord {
    pub fn loss(stage: &'static str, iter: u64, loss: f64) -> Self {
        Self {
            stage,
            iter,
            loss,
            mean_reward: None,
            d_acc: None,
        }
    }
}

pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);
}

/// Discards every record.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: &TraceRecord) {}
}

impl TraceSink for alloc::vec::Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) {
        self.push(*rec);
    }
}
