use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

/// Bounded LIFO frame buffer. Pushing beyond capacity evicts the oldest
/// entry; popping returns the newest.
#[derive(Debug, Clone)]
pub struct FrameBuffer<T> {
    capacity: usize,
    /// Newest first.
    entries: VecDeque<T>,
}

impl<T> FrameBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores `item` and returns whatever was evicted. With zero capacity the
    /// item itself comes straight back.
    pub fn push(&mut self, item: T) -> Option<T> {
        if self.capacity == 0 {
            return Some(item);
        }
        self.entries.push_front(item);
        if self.entries.len() > self.capacity {
            self.entries.pop_back()
        } else {
            None
        }
    }

    pub fn pop(&mut self) -> Option<T> {
        self.entries.pop_front()
    }

    /// Entries from newest to oldest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// [`FrameBuffer`] shared between one producer and many consumers.
#[derive(Debug)]
pub struct SharedFrameBuffer<T> {
    state: Mutex<(FrameBuffer<T>, bool)>,
    ready: Condvar,
}

impl<T> SharedFrameBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self { state: Mutex::new((FrameBuffer::new(capacity), false)), ready: Condvar::new() }
    }

    pub fn push(&self, item: T) -> Option<T> {
        let mut g = self.state.lock().unwrap();
        let evicted = g.0.push(item);
        drop(g);
        self.ready.notify_one();
        evicted
    }

    /// Blocks until an entry is available. Returns `None` once the buffer
    /// is closed and drained.
    pub fn pop_blocking(&self) -> Option<T> {
        let mut g = self.state.lock().unwrap();
        loop {
            if let Some(item) = g.0.pop() {
                return Some(item);
            }
            if g.1 {
                return None;
            }
            g = self.ready.wait(g).unwrap();
        }
    }

    /// Wakes every consumer; later pops return `None` when empty.
    pub fn close(&self) {
        let mut g = self.state.lock().unwrap();
        g.1 = true;
        g.0.clear();
        drop(g);
        self.ready.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn lifo_with_eviction() {
        let mut b = FrameBuffer::new(2);
        assert_eq!(b.push(1), None);
        assert_eq!(b.push(2), None);
        assert_eq!(b.push(3), Some(1));
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![3, 2]);
        assert_eq!(b.pop(), Some(3));
        assert_eq!(b.pop(), Some(2));
        assert_eq!(b.pop(), None);
    }

    #[test]
    fn zero_capacity_drops() {
        let mut b = FrameBuffer::new(0);
        assert_eq!(b.push(7), Some(7));
        assert!(b.is_empty());
    }

    #[test]
    fn shared_buffer_many_consumers() {
        let buf = Arc::new(SharedFrameBuffer::new(2));
        let got = Arc::new(Mutex::new(Vec::new()));
        std::thread::scope(|s| {
            for _ in 0..4 {
                let (buf, got) = (buf.clone(), got.clone());
                s.spawn(move || {
                    while let Some(v) = buf.pop_blocking() {
                        got.lock().unwrap().push(v);
                    }
                });
            }
            for i in 0..100 {
                buf.push(i);
            }
            std::thread::sleep(std::time::Duration::from_millis(20));
            buf.close();
        });
        let got = got.lock().unwrap();
        // nothing is consumed twice
        let mut sorted = got.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), got.len());
    }
}
