//! Capacity-1 hand-off where a newer item replaces an undelivered older one.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug)]
struct Slot<T> {
    item: Option<T>,
    closed: bool,
    replaced: u64,
}

/// Single-slot mailbox with drop-oldest semantics.
#[derive(Debug)]
pub struct Handoff<T> {
    slot: Mutex<Slot<T>>,
    ready: Condvar,
}

impl<T> Default for Handoff<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Handoff<T> {
    pub fn new() -> Self {
        Self {
            slot: Mutex::new(Slot {
                item: None,
                closed: false,
                replaced: 0,
            }),
            ready: Condvar::new(),
        }
    }

    /// Stores `item`, returning the pending item it displaced, if any.
    /// Items put after `close` are handed straight back.
    pub fn put(&self, item: T) -> Option<T> {
        let mut slot = self.slot.lock().unwrap();
        if slot.closed {
            return Some(item);
        }
        let old = slot.item.replace(item);
        if old.is_some() {
            slot.replaced += 1;
        }
        self.ready.notify_all();
        old
    }

    pub fn try_take(&self) -> Option<T> {
        self.slot.lock().unwrap().item.take()
    }

    /// Blocks until an item is available. Returns `None` once closed and empty.
    pub fn take(&self) -> Option<T> {
        let mut slot = self.slot.lock().unwrap();
        loop {
            if let Some(item) = slot.item.take() {
                return Some(item);
            }
            if slot.closed {
                return None;
            }
            slot = self.ready.wait(slot).unwrap();
        }
    }

    pub fn take_timeout(&self, timeout: Duration) -> Option<T> {
        let slot = self.slot.lock().unwrap();
        let (mut slot, _) = self
            .ready
            .wait_timeout_while(slot, timeout, |s| s.item.is_none() && !s.closed)
            .unwrap();
        slot.item.take()
    }

    pub fn is_pending(&self) -> bool {
        self.slot.lock().unwrap().item.is_some()
    }

    /// Number of items displaced by a newer `put`.
    pub fn replaced(&self) -> u64 {
        self.slot.lock().unwrap().replaced
    }

    pub fn close(&self) {
        self.slot.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.slot.lock().unwrap().closed
    }
}
