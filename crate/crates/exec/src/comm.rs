//! Point-to-point message transport between simulated ranks.
//!
//! Sends are buffered (they never block). Messages on a channel
//! `(src, dst, tag)` are numbered in send order and the receiver asks for a
//! specific number, which gives MPI's non-overtaking order no matter when
//! the matching wait happens.

use std::collections::{BTreeMap, HashMap};

use crate::data::Data;
use crate::ExecError;

pub trait Comm {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn send(&mut self, dest: usize, tag: i64, data: Data) -> Result<(), ExecError>;
    /// Blocks until message `seq` of channel `(src, self, tag)` arrives.
    /// `waiting_in` describes the blocked operation for deadlock reports.
    fn recv(&mut self, src: usize, tag: i64, seq: u64, waiting_in: &str) -> Result<Data, ExecError>;
    fn try_recv(&mut self, src: usize, tag: i64, seq: u64) -> Result<Option<Data>, ExecError>;
    /// Called after every communication operation; a scheduler may switch
    /// to another rank here.
    fn yield_point(&mut self) -> Result<(), ExecError> {
        Ok(())
    }
}

#[derive(Debug, Default)]
struct Channel {
    sent: u64,
    pending: BTreeMap<u64, Data>,
}

/// All in-flight messages.
#[derive(Debug, Default)]
pub struct Transport {
    channels: HashMap<(usize, usize, i64), Channel>,
    pub messages: u64,
    pub elements: u64,
}

impl Transport {
    pub fn push(&mut self, src: usize, dst: usize, tag: i64, data: Data) {
        self.messages += 1;
        self.elements += data.len() as u64;
        let ch = self.channels.entry((src, dst, tag)).or_default();
        let seq = ch.sent;
        ch.sent += 1;
        ch.pending.insert(seq, data);
    }

    pub fn take(&mut self, src: usize, dst: usize, tag: i64, seq: u64) -> Option<Data> {
        self.channels.get_mut(&(src, dst, tag))?.pending.remove(&seq)
    }

    /// Messages sent but never received, as `(src, dst, tag, count)`.
    pub fn undelivered(&self) -> Vec<(usize, usize, i64, usize)> {
        let mut v: Vec<_> = self
            .channels
            .iter()
            .filter(|(_, c)| !c.pending.is_empty())
            .map(|(&(s, d, t), c)| (s, d, t, c.pending.len()))
            .collect();
        v.sort();
        v
    }
}

/// A communicator of one rank (sends to self are delivered locally).
#[derive(Debug, Default)]
pub struct LocalComm {
    pub transport: Transport,
}

impl Comm for LocalComm {
    fn rank(&self) -> usize {
        0
    }

    fn size(&self) -> usize {
        1
    }

    fn send(&mut self, dest: usize, tag: i64, data: Data) -> Result<(), ExecError> {
        if dest != 0 {
            return Err(ExecError::Input(format!("send to rank {dest} in a single-rank run")));
        }
        self.transport.push(0, 0, tag, data);
        Ok(())
    }

    fn recv(&mut self, src: usize, tag: i64, seq: u64, waiting_in: &str) -> Result<Data, ExecError> {
        self.transport.take(src, 0, tag, seq).ok_or_else(|| ExecError::Deadlock {
            blocked: vec![crate::BlockedRank { rank: 0, waiting_in: waiting_in.to_string() }],
        })
    }

    fn try_recv(&mut self, src: usize, tag: i64, seq: u64) -> Result<Option<Data>, ExecError> {
        Ok(self.transport.take(src, 0, tag, seq))
    }
}
