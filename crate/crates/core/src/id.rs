//! Node identity.
//!
//! A [`NodeId`] is an address/port pair. IPv4 addresses are stored in their
//! IPv4-mapped IPv6 form so that every identifier occupies the same 18 bytes
//! and all of them share one total order.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Serialized width of a [`NodeId`] in bytes.
pub const NODE_ID_LEN: usize = 18;

/// Totally ordered node identity: lexicographic over the address bytes, then
/// the port.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    addr: [u8; 16],
    port: u16,
}

impl NodeId {
    pub const fn new(addr: [u8; 16], port: u16) -> Self {
        NodeId { addr, port }
    }

    /// An IPv4 identity, stored IPv4-mapped.
    pub const fn v4(a: u8, b: u8, c: u8, d: u8, port: u16) -> Self {
        let mut addr = [0u8; 16];
        addr[10] = 0xff;
        addr[11] = 0xff;
        addr[12] = a;
        addr[13] = b;
        addr[14] = c;
        addr[15] = d;
        NodeId { addr, port }
    }

    pub fn addr(&self) -> [u8; 16] {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    fn as_v4(&self) -> Option<Ipv4Addr> {
        Ipv6Addr::from(self.addr).to_ipv4_mapped()
    }

    pub fn to_bytes(&self) -> [u8; NODE_ID_LEN] {
        let mut out = [0u8; NODE_ID_LEN];
        out[..16].copy_from_slice(&self.addr);
        out[16..].copy_from_slice(&self.port.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: [u8; NODE_ID_LEN]) -> Self {
        let mut addr = [0u8; 16];
        addr.copy_from_slice(&bytes[..16]);
        NodeId {
            addr,
            port: u16::from_be_bytes([bytes[16], bytes[17]]),
        }
    }
}

impl From<SocketAddr> for NodeId {
    fn from(sa: SocketAddr) -> Self {
        let addr = match sa.ip() {
            IpAddr::V4(v4) => v4.to_ipv6_mapped().octets(),
            IpAddr::V6(v6) => v6.octets(),
        };
        NodeId {
            addr,
            port: sa.port(),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_v4() {
            Some(v4) => write!(f, "{}:{}", v4, self.port),
            None => write!(f, "[{}]:{}", hex::encode(self.addr), self.port),
        }
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for NodeId {
    type Err = Error;

    /// Accepts `a.b.c.d:port` or `[<32 hex digits>]:port`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::ParseNodeId(s.to_string());
        let (host, port) = s.rsplit_once(':').ok_or_else(bad)?;
        let port: u16 = port.parse().map_err(|_| bad())?;
        if let Some(hex_part) = host.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            let raw = hex::decode(hex_part).map_err(|_| bad())?;
            let addr: [u8; 16] = raw.try_into().map_err(|_| bad())?;
            return Ok(NodeId { addr, port });
        }
        let v4: Ipv4Addr = host.parse().map_err(|_| bad())?;
        Ok(NodeId {
            addr: v4.to_ipv6_mapped().octets(),
            port,
        })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn v4_text_form() {
        let id = NodeId::v4(10, 0, 1, 7, 7946);
        assert_eq!(id.to_string(), "10.0.1.7:7946");
        assert_eq!("10.0.1.7:7946".parse::<NodeId>().unwrap(), id);
    }

    #[test]
    fn long_address_text_form() {
        let mut addr = [0u8; 16];
        addr[0] = 0x20;
        addr[1] = 0x01;
        addr[15] = 0x42;
        let id = NodeId::new(addr, 80);
        let text = id.to_string();
        assert_eq!(text, "[20010000000000000000000000000042]:80");
        assert_eq!(text.parse::<NodeId>().unwrap(), id);
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "10.0.0.1", "10.0.0.1:x", "[abcd]:1", "300.1.1.1:2"] {
            assert!(s.parse::<NodeId>().is_err(), "{s}");
        }
    }

    #[test]
    fn serialized_width_is_18() {
        assert_eq!(NodeId::v4(1, 2, 3, 4, 5).to_bytes().len(), 18);
    }

    #[test]
    fn port_breaks_address_ties() {
        assert!(NodeId::v4(10, 0, 0, 1, 1) < NodeId::v4(10, 0, 0, 1, 2));
        assert!(NodeId::v4(10, 0, 0, 1, 9000) < NodeId::v4(10, 0, 0, 2, 1));
    }

    fn any_id() -> impl Strategy<Value = NodeId> {
        (any::<[u8; 16]>(), any::<u16>()).prop_map(|(a, p)| NodeId::new(a, p))
    }

    proptest! {
        #[test]
        fn bytes_and_text_round_trip(id in any_id()) {
            prop_assert_eq!(NodeId::from_bytes(id.to_bytes()), id);
            prop_assert_eq!(id.to_string().parse::<NodeId>().unwrap(), id);
        }

        #[test]
        fn order_matches_serialized_bytes(a in any_id(), b in any_id()) {
            prop_assert_eq!(a.cmp(&b), a.to_bytes().cmp(&b.to_bytes()));
        }
    }
}
