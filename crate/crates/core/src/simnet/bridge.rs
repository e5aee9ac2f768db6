//! 802.1Q egress port: eight FIFO queues indexed by PCP, served in strict
//! priority order onto a fixed-rate wired link.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::frames::Pcp;
use crate::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WiredLink {
    pub capacity_bps: f64,
    pub delay_ns: Nanos,
}

impl Default for WiredLink {
    fn default() -> Self {
        WiredLink {
            capacity_bps: 1e9,
            delay_ns: 1_000,
        }
    }
}

impl WiredLink {
    pub fn serialization_ns(&self, bytes: usize) -> Nanos {
        (bytes as f64 * 8.0 * 1e9 / self.capacity_bps).round() as Nanos
    }
}

#[derive(Debug, Clone)]
pub struct TsnBridgePort<T> {
    queues: [VecDeque<(usize, T)>; 8],
    pub link: WiredLink,
    busy_until: Nanos,
    pub sent: u64,
}

/// A frame leaving the port: serialization ends at `end_ns`, the far end
/// receives it at `arrival_ns`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortTransmission<T> {
    pub item: T,
    pub pcp: Pcp,
    pub end_ns: Nanos,
    pub arrival_ns: Nanos,
}

impl<T> TsnBridgePort<T> {
    pub fn new(link: WiredLink) -> Self {
        TsnBridgePort {
            queues: Default::default(),
            link,
            busy_until: 0,
            sent: 0,
        }
    }

    /// Queues `item` (`len` bytes on the wire) by PCP.
    pub fn enqueue(&mut self, pcp: Pcp, len: usize, item: T) {
        self.queues[usize::from(pcp.value())].push_back((len, item));
    }

    pub fn is_idle(&self, now: Nanos) -> bool {
        self.busy_until <= now
    }

    pub fn busy_until(&self) -> Nanos {
        self.busy_until
    }

    pub fn backlog(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    /// Highest PCP with a queued frame.
    pub fn head_pcp(&self) -> Option<Pcp> {
        (0..8u8)
            .rev()
            .find(|&p| !self.queues[usize::from(p)].is_empty())
            .map(|p| Pcp::new(p).expect("index < 8"))
    }

    /// Starts the next transmission if the link is free at `now`.
    pub fn start_next(&mut self, now: Nanos) -> Option<PortTransmission<T>> {
        if !self.is_idle(now) {
            return None;
        }
        let pcp = self.head_pcp()?;
        let (len, item) = self.queues[usize::from(pcp.value())]
            .pop_front()
            .expect("non-empty queue");
        let end_ns = now + self.link.serialization_ns(len);
        self.busy_until = end_ns;
        self.sent += 1;
        Some(PortTransmission {
            item,
            pcp,
            end_ns,
            arrival_ns: end_ns + self.link.delay_ns,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pcp(v: u8) -> Pcp {
        Pcp::new(v).unwrap()
    }

    #[test]
    fn serves_highest_pcp_first_and_fifo_within() {
        let mut port = TsnBridgePort::new(WiredLink {
            capacity_bps: 1e9,
            delay_ns: 10,
        });
        port.enqueue(pcp(0), 125, "lp1");
        port.enqueue(pcp(7), 125, "hp1");
        port.enqueue(pcp(0), 125, "lp2");
        port.enqueue(pcp(7), 125, "hp2");
        let mut now = 0;
        let mut order = Vec::new();
        while let Some(t) = port.start_next(now) {
            assert_eq!(t.end_ns, now + 1_000);
            assert_eq!(t.arrival_ns, t.end_ns + 10);
            order.push(t.item);
            assert!(port.start_next(now).is_none());
            now = t.end_ns;
        }
        assert_eq!(order, vec!["hp1", "hp2", "lp1", "lp2"]);
    }

    proptest! {
        #[test]
        fn never_dequeues_below_a_waiting_higher_pcp(
            ops in proptest::collection::vec((0u8..8, any::<bool>()), 1..300)
        ) {
            let mut port = TsnBridgePort::new(WiredLink { capacity_bps: 1e9, delay_ns: 0 });
            let mut now = 0;
            for (i, (p, dequeue)) in ops.into_iter().enumerate() {
                port.enqueue(pcp(p), 64, i);
                if dequeue {
                    now = port.busy_until().max(now);
                    let highest = port.head_pcp();
                    if let Some(t) = port.start_next(now) {
                        prop_assert_eq!(Some(t.pcp), highest);
                    }
                }
            }
        }
    }
}
