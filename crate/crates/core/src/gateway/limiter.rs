use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding in-flight backend calls. Also records the
/// peak concurrency and total call count for tests.
pub struct Limiter {
    max: usize,
    state: Mutex<State>,
    released: Condvar,
}

#[derive(Default)]
struct State {
    in_flight: usize,
    peak: usize,
    total: usize,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            state: Mutex::new(State::default()),
            released: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().expect("limiter lock");
        while state.in_flight >= self.max {
            state = self.released.wait(state).expect("limiter lock");
        }
        state.in_flight += 1;
        state.total += 1;
        state.peak = state.peak.max(state.in_flight);
        Permit { limiter: self }
    }

    pub fn peak(&self) -> usize {
        self.state.lock().expect("limiter lock").peak
    }

    pub fn total(&self) -> usize {
        self.state.lock().expect("limiter lock").total
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().expect("limiter lock");
        state.in_flight -= 1;
        drop(state);
        self.limiter.released.notify_one();
    }
}
