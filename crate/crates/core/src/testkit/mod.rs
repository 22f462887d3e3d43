//! Reference models and randomized harnesses shared by the test suites.
//!
//! Everything here is written against the public API only and recomputes
//! expected results by brute force, so it can be used to check the
//! implementation rather than restate it.

pub mod oracle;
pub mod schedules;
pub mod stress;

use std::sync::Arc;

use crate::idle_store::{Link, Linked};

/// Minimal store entry carrying an identity.
pub struct Node {
    pub id: u64,
    link: Link<Node>,
}

unsafe impl Linked for Node {
    fn link(&self) -> &Link<Node> {
        &self.link
    }
}

pub fn node(id: u64) -> Arc<Node> {
    Arc::new(Node {
        id,
        link: Link::default(),
    })
}
