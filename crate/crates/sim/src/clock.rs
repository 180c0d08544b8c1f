use std::sync::atomic::{AtomicI64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ztrv_core::clock::duration_to_millis_ceil;
use ztrv_core::{Clock, SystemClock, Timestamp};

/// Fixed origin for virtual-time runs, so reports do not depend on when they
/// were produced.
pub const VIRTUAL_EPOCH: Timestamp = Timestamp::from_millis(1_700_000_000_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Virtual,
    Wall,
}

/// The clock shared by issuer, verifier and registry during an experiment.
///
/// In virtual mode time moves only through [`SimClock::advance`] and
/// [`SimClock::set`].
#[derive(Debug)]
pub struct SimClock {
    virtual_now: AtomicI64,
    wall: Option<SystemClock>,
}

impl SimClock {
    pub fn virtual_at(start: Timestamp) -> Self {
        Self {
            virtual_now: AtomicI64::new(start.as_millis()),
            wall: None,
        }
    }

    pub fn wall() -> Self {
        Self {
            virtual_now: AtomicI64::new(0),
            wall: Some(SystemClock::new()),
        }
    }

    pub fn mode(&self) -> ClockMode {
        if self.wall.is_some() {
            ClockMode::Wall
        } else {
            ClockMode::Virtual
        }
    }

    /// Moves virtual time forward. No effect on a wall clock.
    pub fn advance(&self, by: Duration) {
        self.virtual_now
            .fetch_add(duration_to_millis_ceil(by), Ordering::AcqRel);
    }

    /// Jumps virtual time to `to` if that is not earlier than the current reading.
    pub fn set(&self, to: Timestamp) {
        self.virtual_now.fetch_max(to.as_millis(), Ordering::AcqRel);
    }
}

impl Clock for SimClock {
    fn now(&self) -> Timestamp {
        match &self.wall {
            Some(wall) => wall.now(),
            None => Timestamp::from_millis(self.virtual_now.load(Ordering::Acquire)),
        }
    }
}
