use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Training phase a recorded operation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    CriticUpdate,
    ActorUpdate,
    Evaluation,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::CriticUpdate, Phase::ActorUpdate, Phase::Evaluation];

    fn index(self) -> usize {
        match self {
            Phase::CriticUpdate => 0,
            Phase::ActorUpdate => 1,
            Phase::Evaluation => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::CriticUpdate => "critic_update",
            Phase::ActorUpdate => "actor_update",
            Phase::Evaluation => "evaluation",
        }
    }
}

/// Shared multiply-accumulate counter, one cell per [`Phase`].
///
/// Tapes charge forward-pass work only: an `m×k · k×n` product is `m·n·k`
/// MACs and every elementwise output element is one.
#[derive(Clone, Default)]
pub struct MacCounter {
    cells: Arc<[AtomicU64; 3]>,
}

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, phase: Phase, macs: u64) {
        self.cells[phase.index()].fetch_add(macs, Ordering::Relaxed);
    }

    pub fn read(&self, phase: Phase) -> u64 {
        self.cells[phase.index()].load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        Phase::ALL.iter().map(|&p| self.read(p)).sum()
    }

    pub fn reset(&self) {
        for cell in self.cells.iter() {
            cell.store(0, Ordering::Relaxed);
        }
    }
}

impl fmt::Debug for MacCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for p in Phase::ALL {
            m.entry(&p.name(), &self.read(p));
        }
        m.finish()
    }
}
