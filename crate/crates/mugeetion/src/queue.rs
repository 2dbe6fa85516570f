//! Bounded frame queue between an input producer and the pipeline.
//!
//! Live input uses [`FrameQueue::push_lossy`], which drops the oldest frame
//! when full so latency stays bounded. File and synthetic input use
//! [`FrameQueue::push_blocking`] so replay at max speed loses nothing.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use mugeetion_core::FacialFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pop {
    Frame(FacialFrame),
    Empty,
    Closed,
}

#[derive(Debug, Default)]
struct State {
    items: VecDeque<FacialFrame>,
    closed: bool,
    dropped: u64,
}

#[derive(Debug)]
pub struct FrameQueue {
    capacity: usize,
    state: Mutex<State>,
    readable: Condvar,
    writable: Condvar,
}

impl FrameQueue {
    pub fn new(capacity: usize) -> Self {
        FrameQueue {
            capacity: capacity.max(1),
            state: Mutex::default(),
            readable: Condvar::new(),
            writable: Condvar::new(),
        }
    }

    /// Appends a frame, evicting the oldest when full. Returns false once
    /// the queue is closed.
    pub fn push_lossy(&self, frame: FacialFrame) -> bool {
        let mut s = self.state.lock().unwrap();
        if s.closed {
            return false;
        }
        if s.items.len() == self.capacity {
            s.items.pop_front();
            s.dropped += 1;
        }
        s.items.push_back(frame);
        self.readable.notify_one();
        true
    }

    /// Appends a frame, waiting for room. Returns false once the queue is
    /// closed.
    pub fn push_blocking(&self, frame: FacialFrame) -> bool {
        let mut s = self.state.lock().unwrap();
        while s.items.len() == self.capacity && !s.closed {
            s = self.writable.wait(s).unwrap();
        }
        if s.closed {
            return false;
        }
        s.items.push_back(frame);
        self.readable.notify_one();
        true
    }

    /// Waits up to `timeout` for a frame. Frames queued before `close` are
    /// still delivered.
    pub fn pop_timeout(&self, timeout: Duration) -> Pop {
        let s = self.state.lock().unwrap();
        let (mut s, _) = self
            .readable
            .wait_timeout_while(s, timeout, |s| s.items.is_empty() && !s.closed)
            .unwrap();
        match s.items.pop_front() {
            Some(f) => {
                self.writable.notify_one();
                Pop::Frame(f)
            }
            None if s.closed => Pop::Closed,
            None => Pop::Empty,
        }
    }

    /// No more pushes are accepted; blocked producers return.
    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.readable.notify_all();
        self.writable.notify_all();
    }

    /// Closes and discards anything still queued.
    pub fn abort(&self) {
        let mut s = self.state.lock().unwrap();
        s.closed = true;
        s.items.clear();
        self.readable.notify_all();
        self.writable.notify_all();
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().unwrap().dropped
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
