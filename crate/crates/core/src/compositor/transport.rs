//! Collective byte transport between ranks.
//!
//! The protocol only needs a variable-size all-to-all exchange and a gather at
//! the master. [`InProcessFabric`] provides both for ranks running as threads
//! in one address space.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("expected {expected} buffers, got {got}")]
    BufferCount { expected: usize, got: usize },
    #[error("another rank aborted")]
    Aborted,
    #[error("only the master can gather")]
    NotMaster,
}

pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    /// Sends `send[d]` to rank `d`; returns one buffer per source rank.
    fn all_to_all_v(&mut self, send: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>, TransportError>;
    fn send_to_master(&mut self, bytes: Vec<u8>) -> Result<(), TransportError>;
    /// Master only: one buffer per rank, in rank order.
    fn master_receive_all(&mut self) -> Result<Vec<Vec<u8>>, TransportError>;
    /// Tells the other ranks to stop waiting.
    fn abort(&self);
}

pub const MASTER: usize = 0;

struct Shared {
    aborted: AtomicBool,
    barrier: Mutex<(usize, u64)>,
    cv: Condvar,
    size: usize,
}

impl Shared {
    fn wait(&self) -> Result<(), TransportError> {
        let mut g = self.barrier.lock().unwrap();
        let gen = g.1;
        g.0 += 1;
        if g.0 == self.size {
            g.0 = 0;
            g.1 += 1;
            self.cv.notify_all();
            return Ok(());
        }
        while g.1 == gen {
            if self.aborted.load(Ordering::SeqCst) {
                return Err(TransportError::Aborted);
            }
            g = self
                .cv
                .wait_timeout(g, Duration::from_millis(20))
                .unwrap()
                .0;
        }
        Ok(())
    }
}

enum Kind {
    Exchange,
    Gather,
}

struct Msg {
    src: usize,
    kind: Kind,
    bytes: Vec<u8>,
}

/// One rank's endpoint of an in-process fabric.
pub struct InProcessEndpoint {
    rank: usize,
    peers: Vec<Sender<Msg>>,
    inbox: Receiver<Msg>,
    pending: Vec<VecDeque<Msg>>,
    shared: Arc<Shared>,
}

pub struct InProcessFabric;

impl InProcessFabric {
    #[allow(clippy::new_ret_no_self)]
    pub fn new(size: usize) -> Vec<InProcessEndpoint> {
        let shared = Arc::new(Shared {
            aborted: AtomicBool::new(false),
            barrier: Mutex::new((0, 0)),
            cv: Condvar::new(),
            size,
        });
        let (senders, receivers): (Vec<_>, Vec<_>) = (0..size).map(|_| channel()).unzip();
        receivers
            .into_iter()
            .enumerate()
            .map(|(rank, inbox)| InProcessEndpoint {
                rank,
                peers: senders.clone(),
                inbox,
                pending: (0..size).map(|_| VecDeque::new()).collect(),
                shared: shared.clone(),
            })
            .collect()
    }
}

impl InProcessEndpoint {
    fn next_from(&mut self, src: usize, gather: bool) -> Result<Vec<u8>, TransportError> {
        let matches = |m: &Msg| {
            matches!(
                (&m.kind, gather),
                (Kind::Gather, true) | (Kind::Exchange, false)
            )
        };
        loop {
            if let Some(i) = self.pending[src].iter().position(matches) {
                return Ok(self.pending[src].remove(i).expect("index in range").bytes);
            }
            match self.inbox.recv_timeout(Duration::from_millis(20)) {
                Ok(m) => self.pending[m.src].push_back(m),
                Err(RecvTimeoutError::Timeout) => {
                    if self.shared.aborted.load(Ordering::SeqCst) {
                        return Err(TransportError::Aborted);
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return Err(TransportError::Aborted),
            }
        }
    }

    fn post(&self, dst: usize, kind: Kind, bytes: Vec<u8>) -> Result<(), TransportError> {
        self.peers[dst]
            .send(Msg {
                src: self.rank,
                kind,
                bytes,
            })
            .map_err(|_| TransportError::Aborted)
    }
}

impl Transport for InProcessEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.peers.len()
    }

    fn all_to_all_v(&mut self, send: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>, TransportError> {
        if send.len() != self.size() {
            return Err(TransportError::BufferCount {
                expected: self.size(),
                got: send.len(),
            });
        }
        for (dst, bytes) in send.into_iter().enumerate() {
            self.post(dst, Kind::Exchange, bytes)?;
        }
        let out = (0..self.size())
            .map(|src| self.next_from(src, false))
            .collect::<Result<Vec<_>, _>>()?;
        self.shared.wait()?;
        Ok(out)
    }

    fn send_to_master(&mut self, bytes: Vec<u8>) -> Result<(), TransportError> {
        self.post(MASTER, Kind::Gather, bytes)
    }

    fn master_receive_all(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
        if self.rank != MASTER {
            return Err(TransportError::NotMaster);
        }
        (0..self.size())
            .map(|src| self.next_from(src, true))
            .collect()
    }

    fn abort(&self) {
        self.shared.aborted.store(true, Ordering::SeqCst);
        self.shared.cv.notify_all();
    }
}

/// Runs `f` once per rank on its own thread and returns the per-rank results.
/// A rank returning an error aborts the fabric so the others do not hang.
pub fn run_ranks<T, E, F>(size: usize, f: F) -> Vec<Result<T, E>>
where
    T: Send,
    E: Send,
    F: Fn(&mut InProcessEndpoint) -> Result<T, E> + Sync,
{
    let endpoints = InProcessFabric::new(size);
    std::thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|mut ep| {
                let f = &f;
                s.spawn(move || {
                    let r = f(&mut ep);
                    if r.is_err() {
                        ep.abort();
                    }
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_to_all_routes_by_source() {
        let out = run_ranks(4, |ep| {
            let r = ep.rank() as u8;
            let send = (0..4u8).map(|d| vec![r, d]).collect();
            let first = ep.all_to_all_v(send)?;
            // A second round must not mix with the first.
            let second = ep.all_to_all_v((0..4u8).map(|d| vec![r + 10, d]).collect())?;
            Ok::<_, TransportError>((first, second))
        });
        for (rank, res) in out.into_iter().enumerate() {
            let (first, second) = res.unwrap();
            for src in 0..4 {
                assert_eq!(first[src], vec![src as u8, rank as u8]);
                assert_eq!(second[src], vec![src as u8 + 10, rank as u8]);
            }
        }
    }

    #[test]
    fn gather_at_master() {
        let out = run_ranks(3, |ep| {
            ep.send_to_master(vec![ep.rank() as u8; ep.rank() + 1])?;
            if ep.rank() == MASTER {
                ep.master_receive_all()
            } else {
                assert_eq!(ep.master_receive_all(), Err(TransportError::NotMaster));
                Ok(Vec::new())
            }
        });
        assert_eq!(
            out[0].as_ref().unwrap(),
            &vec![vec![0], vec![1, 1], vec![2, 2, 2]]
        );
    }

    #[test]
    fn failing_rank_releases_the_others() {
        let out = run_ranks(3, |ep| {
            if ep.rank() == 1 {
                return Err(TransportError::Aborted);
            }
            ep.all_to_all_v(vec![Vec::new(); 3]).map(|_| ())
        });
        assert!(out.iter().all(|r| r.is_err()));
    }
}
