use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::ids::{FogId, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DhcpError {
    #[error("address pool of {0} is exhausted")]
    PoolExhausted(FogId),
    #[error("user {0} is not authenticated")]
    NotAuthenticated(NodeId),
}

/// Fog-scoped address uniqueness: `10.<fog>.x.y`, lowest free first.
#[derive(Clone, Debug)]
pub struct AddressPool {
    fog: FogId,
    size: u32,
    by_user: BTreeMap<NodeId, u32>,
    used: BTreeSet<u32>,
}

impl AddressPool {
    /// At most 65534 addresses fit under one fog prefix.
    pub const MAX_SIZE: u32 = 65_534;

    pub fn new(fog: FogId, size: u32) -> Self {
        AddressPool {
            fog,
            size: size.min(Self::MAX_SIZE),
            by_user: BTreeMap::new(),
            used: BTreeSet::new(),
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    fn address(&self, offset: u32) -> Ipv4Addr {
        Ipv4Addr::from(0x0A00_0000 | ((self.fog.0 & 0xFF) << 16) | (offset + 1))
    }

    pub fn address_of(&self, user: NodeId) -> Option<Ipv4Addr> {
        self.by_user.get(&user).map(|&o| self.address(o))
    }

    pub fn assign_address(
        &mut self,
        user: NodeId,
        authenticated: bool,
    ) -> Result<Ipv4Addr, DhcpError> {
        if !authenticated {
            return Err(DhcpError::NotAuthenticated(user));
        }
        if let Some(addr) = self.address_of(user) {
            return Ok(addr);
        }
        let offset = (0..self.size)
            .find(|o| !self.used.contains(o))
            .ok_or(DhcpError::PoolExhausted(self.fog))?;
        self.used.insert(offset);
        self.by_user.insert(user, offset);
        Ok(self.address(offset))
    }

    pub fn assignments(&self) -> impl Iterator<Item = (NodeId, Ipv4Addr)> + '_ {
        self.by_user.iter().map(|(&u, &o)| (u, self.address(o)))
    }
}
