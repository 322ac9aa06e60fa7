//! Authenticated, lossless, ordered classical channel between nodes.
//!
//! The sender identity on a [`Message`] is stamped by the channel itself, so
//! within the simulation no node can forge another's announcements.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::transcript::{RecordKind, Route, Transcripts};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassicalError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("route must name at least a sender and a receiver")]
    EmptyRoute,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub from: String,
    pub to: String,
    pub seq: u64,
    pub kind: RecordKind,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct ClassicalChannel {
    nodes: BTreeSet<String>,
    queues: BTreeMap<(String, String), VecDeque<Message>>,
    seq: u64,
}

impl ClassicalChannel {
    pub fn new<I, S>(nodes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            nodes: nodes.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    fn known(&self, node: &str) -> Result<(), ClassicalError> {
        if self.nodes.contains(node) {
            Ok(())
        } else {
            Err(ClassicalError::UnknownNode(node.to_string()))
        }
    }

    /// Queues `payload` from `from` to `to` and logs it in the sender's transcript.
    pub fn send(
        &mut self,
        from: &str,
        to: &str,
        kind: RecordKind,
        payload: &[u8],
        log: &mut Transcripts,
    ) -> Result<u64, ClassicalError> {
        self.known(from)?;
        self.known(to)?;
        let seq = self.seq;
        self.seq += 1;
        log.log_routed(from, kind, Route::Sent { to: to.to_string() }, payload);
        self.queues
            .entry((from.to_string(), to.to_string()))
            .or_default()
            .push_back(Message {
                from: from.to_string(),
                to: to.to_string(),
                seq,
                kind,
                payload: payload.to_vec(),
            });
        Ok(seq)
    }

    /// Delivers the oldest pending message from `from` to `to`, logging it at
    /// the receiver.
    pub fn recv(&mut self, to: &str, from: &str, log: &mut Transcripts) -> Option<Message> {
        let msg = self
            .queues
            .get_mut(&(from.to_string(), to.to_string()))?
            .pop_front()?;
        log.log_routed(
            to,
            msg.kind,
            Route::Received {
                from: msg.from.clone(),
            },
            &msg.payload,
        );
        Some(msg)
    }

    pub fn pending(&self, from: &str, to: &str) -> usize {
        self.queues
            .get(&(from.to_string(), to.to_string()))
            .map_or(0, VecDeque::len)
    }

    /// Send and immediately deliver; returns the delivered bytes.
    pub fn classical_send(
        &mut self,
        from: &str,
        to: &str,
        kind: RecordKind,
        payload: &[u8],
        log: &mut Transcripts,
    ) -> Result<Vec<u8>, ClassicalError> {
        self.send(from, to, kind, payload, log)?;
        Ok(self
            .recv(to, from, log)
            .expect("message was just queued")
            .payload)
    }

    /// Sends along `path` (sender first, receiver last); every intermediate
    /// node relays the message and sees its contents.
    pub fn send_routed(
        &mut self,
        path: &[String],
        kind: RecordKind,
        payload: &[u8],
        log: &mut Transcripts,
    ) -> Result<Vec<u8>, ClassicalError> {
        if path.len() < 2 {
            return Err(ClassicalError::EmptyRoute);
        }
        for n in path {
            self.known(n)?;
        }
        let (src, dst) = (&path[0], &path[path.len() - 1]);
        log.log_routed(src, kind, Route::Sent { to: dst.clone() }, payload);
        for w in path.windows(3) {
            log.log_routed(
                &w[1],
                kind,
                Route::Relayed {
                    from: w[0].clone(),
                    to: w[2].clone(),
                },
                payload,
            );
        }
        log.log_routed(dst, kind, Route::Received { from: src.clone() }, payload);
        self.seq += 1;
        Ok(payload.to_vec())
    }
}
