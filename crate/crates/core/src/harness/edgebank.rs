use std::collections::HashMap;

use crate::ctdg::{EventKind, EventStream, NodeId, Phase, SplitSpec};
use crate::error::{Error, Result};
use crate::harness::metrics::auc;

/// Memory span of the EdgeBank baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeBankWindow {
    /// Remember every edge ever seen.
    Unlimited,
    /// Remember edges seen within this fraction of the training time span.
    Fraction(f64),
}

impl EdgeBankWindow {
    /// The sweep used for window comparisons, shortest first.
    pub const SWEEP: [EdgeBankWindow; 8] = [
        EdgeBankWindow::Fraction(0.01),
        EdgeBankWindow::Fraction(0.05),
        EdgeBankWindow::Fraction(0.10),
        EdgeBankWindow::Fraction(0.25),
        EdgeBankWindow::Fraction(0.50),
        EdgeBankWindow::Fraction(0.75),
        EdgeBankWindow::Fraction(1.00),
        EdgeBankWindow::Unlimited,
    ];

    pub fn label(&self) -> String {
        match self {
            EdgeBankWindow::Unlimited => "inf".into(),
            EdgeBankWindow::Fraction(f) => format!("{}%", f * 100.0),
        }
    }
}

/// Learning-free link predictor: an edge scores 1 iff the same
/// `(src, dst)` pair occurred within the memory window.
#[derive(Clone, Debug, Default)]
pub struct EdgeBank {
    /// Window length in time units; `None` is unlimited.
    window: Option<f64>,
    last_seen: HashMap<(NodeId, NodeId), f64>,
}

impl EdgeBank {
    pub fn new(window: Option<f64>) -> Self {
        Self {
            window,
            last_seen: HashMap::new(),
        }
    }

    pub fn insert(&mut self, src: NodeId, dst: NodeId, t: f64) {
        self.last_seen.insert((src, dst), t);
    }

    pub fn score(&self, src: NodeId, dst: NodeId, t: f64) -> f64 {
        match self.last_seen.get(&(src, dst)) {
            Some(&seen) if seen < t && self.window.is_none_or(|w| seen >= t - w) => 1.0,
            _ => 0.0,
        }
    }
}

/// Validation and test AUC of EdgeBank over the stream. Each timestamp is
/// scored from the memory of strictly earlier events, then absorbed.
pub fn edgebank_eval(
    stream: &EventStream,
    split: &SplitSpec,
    window: EdgeBankWindow,
    negatives: &[Option<NodeId>],
) -> Result<(f64, f64)> {
    if negatives.len() != stream.len() {
        return Err(Error::Contract("one negative slot per event expected".into()));
    }
    let events = stream.events();
    if split.train_end == 0 {
        return Err(Error::Split("empty training split".into()));
    }
    let span = events[split.train_end - 1].time - events[0].time;
    let w = match window {
        EdgeBankWindow::Unlimited => None,
        EdgeBankWindow::Fraction(f) => Some(f * span),
    };
    let mut bank = EdgeBank::new(w);
    let mut scores: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    let mut i = 0;
    while i < events.len() {
        let t = events[i].time;
        let mut j = i;
        while j < events.len() && events[j].time == t {
            j += 1;
        }
        for k in i..j {
            let e = &events[k];
            let (EventKind::EdgeAdd, Some(dst), Some(neg)) = (e.kind, e.dst, negatives[k]) else {
                continue;
            };
            let slot = match split.phase_of(k) {
                Phase::Train => continue,
                Phase::Val => 0,
                Phase::Test => 1,
            };
            scores[slot].0.push(bank.score(e.src, dst, t));
            scores[slot].1.push(bank.score(e.src, neg, t));
        }
        for e in &events[i..j] {
            if let Some(dst) = e.dst {
                bank.insert(e.src, dst, t);
            }
        }
        i = j;
    }
    let [(vp, vn), (tp, tn)] = &scores;
    Ok((auc(vp, vn)?, auc(tp, tn)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_cases() {
        let mut b = EdgeBank::new(Some(2.0));
        let (a, c) = (NodeId(0), NodeId(1));
        assert_eq!(b.score(a, c, 1.0), 0.0);
        b.insert(a, c, 1.0);
        assert_eq!(b.score(a, c, 1.0), 0.0);
        assert_eq!(b.score(a, c, 2.0), 1.0);
        assert_eq!(b.score(a, c, 3.0), 1.0);
        assert_eq!(b.score(a, c, 3.5), 0.0);
        assert_eq!(b.score(c, a, 2.0), 0.0);
        let mut inf = EdgeBank::new(None);
        inf.insert(a, c, 0.0);
        assert_eq!(inf.score(a, c, 1e9), 1.0);
    }
}
