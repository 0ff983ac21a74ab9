use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{send_utterance, TtsTransport, Utterance};
use crate::handoff::Handoff;
use crate::scheduler::Shutdown;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchStats {
    /// Utterances acknowledged by the endpoint.
    pub sent: u64,
    /// Pending utterances displaced by a newer one before being sent.
    pub replaced: u64,
    /// Utterances discarded at shutdown without being sent.
    pub discarded: u64,
    pub errors: u64,
    pub last_error: Option<String>,
    /// Texts in the order they were acknowledged.
    pub spoken: Vec<String>,
    #[serde(skip)]
    in_request: bool,
}

struct Shared {
    queue: Handoff<Utterance>,
    stats: Mutex<DispatchStats>,
    idle: Condvar,
    stop: Shutdown,
}

/// Background speaker. At most one request is in flight and the next one is
/// not sent until the previous acknowledged duration has elapsed. While
/// busy, only the newest utterance is kept.
pub struct TtsDispatcher {
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl TtsDispatcher {
    pub fn spawn(transport: Box<dyn TtsTransport>) -> Self {
        let shared = Arc::new(Shared {
            queue: Handoff::new(),
            stats: Mutex::new(DispatchStats::default()),
            idle: Condvar::new(),
            stop: Shutdown::new(),
        });
        let worker_shared = Arc::clone(&shared);
        let worker = std::thread::Builder::new()
            .name("tts-dispatch".into())
            .spawn(move || worker_loop(&worker_shared, transport.as_ref()))
            .expect("spawn tts thread");
        Self {
            shared,
            worker: Some(worker),
        }
    }

    /// Queues `utt`, returning the older pending utterance it displaced.
    pub fn enqueue(&self, utt: Utterance) -> Option<Utterance> {
        let displaced = self.shared.queue.put(utt);
        if displaced.is_some() {
            self.shared.stats.lock().unwrap().replaced += 1;
        }
        displaced
    }

    pub fn stats(&self) -> DispatchStats {
        self.shared.stats.lock().unwrap().clone()
    }

    /// Lets the pending utterance (if any) go out, waiting at most `timeout`,
    /// then stops without waiting for playback to end.
    pub fn finish(mut self, timeout: Duration) -> DispatchStats {
        let deadline = Instant::now() + timeout;
        {
            let mut stats = self.shared.stats.lock().unwrap();
            while self.shared.queue.is_pending() || stats.in_request {
                let now = Instant::now();
                if now >= deadline {
                    break;
                }
                stats = self.shared.idle.wait_timeout(stats, deadline - now).unwrap().0;
            }
        }
        self.stop()
    }

    /// Drops anything pending and stops.
    pub fn abort(mut self) -> DispatchStats {
        self.stop()
    }

    fn stop(&mut self) -> DispatchStats {
        self.shared.stop.trigger();
        if self.shared.queue.try_take().is_some() {
            self.shared.stats.lock().unwrap().discarded += 1;
        }
        self.shared.queue.close();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
        self.stats()
    }
}

impl Drop for TtsDispatcher {
    fn drop(&mut self) {
        if self.worker.is_some() {
            self.stop();
        }
    }
}

fn worker_loop(shared: &Shared, transport: &dyn TtsTransport) {
    // An utterance already taken when a stop arrives is still sent; the
    // stop only cuts the playback wait and keeps later ones out.
    while let Some(utt) = shared.queue.take() {
        shared.stats.lock().unwrap().in_request = true;
        let result = send_utterance(transport, &utt);
        let wait = {
            let mut stats = shared.stats.lock().unwrap();
            stats.in_request = false;
            let wait = match result {
                Ok(ack) => {
                    stats.sent += 1;
                    stats.spoken.push(utt.text);
                    Some(Duration::from_millis(ack.duration_ms))
                }
                Err(e) => {
                    tracing::warn!(error = %e, "tts dispatch failed");
                    stats.errors += 1;
                    stats.last_error = Some(e.to_string());
                    None
                }
            };
            shared.idle.notify_all();
            wait
        };
        if let Some(d) = wait {
            if shared.stop.wait_timeout(d) {
                break;
            }
        }
    }
    shared.idle.notify_all();
}
