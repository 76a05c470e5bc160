//! Request intervals and the subdivision-closed action set.

use std::collections::BTreeSet;
use std::fmt;

/// Closed interval of slot numbers `start..=end`, with `1 <= start <= end <= H`.
///
/// Slot numbers are one-based; slot `s` is curve index `s - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntervalAction {
    pub start: usize,
    pub end: usize,
}

impl IntervalAction {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(1 <= start && start <= end, "invalid interval [{start},{end}]");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, slot: i64) -> bool {
        slot >= self.start as i64 && slot <= self.end as i64
    }

    /// Rounded-up midpoint shared by both children.
    pub fn midpoint(&self) -> usize {
        (self.start + self.end).div_ceil(2)
    }

    pub fn children(&self) -> [IntervalAction; 2] {
        let m = self.midpoint();
        [Self::new(self.start, m), Self::new(m, self.end)]
    }
}

impl fmt::Display for IntervalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

/// The smallest set containing `[1,H]` and closed under splitting
/// `[a,b]` into `[a,m]` and `[m,b]` at `m = ceil((a+b)/2)`, sorted by (start, end).
pub fn build_action_set(horizon: usize) -> Vec<IntervalAction> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut set = BTreeSet::new();
    let mut pending = vec![IntervalAction::new(1, horizon)];
    while let Some(a) = pending.pop() {
        if set.insert(a) {
            pending.extend(a.children());
        }
    }
    set.into_iter().collect()
}
