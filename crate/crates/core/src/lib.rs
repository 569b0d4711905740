//! Flow-level discrete-event simulator for rural broadband access networks
//! built from a macro cell, WLAN clusters on a multi-hop wireless middle
//! mile, a fog-resident SDN control plane and a cloud core.

pub mod engine;
pub mod fixtures;
pub mod ids;
pub mod slicing;
pub mod topology;
pub mod dataplane;
pub mod fogctrl;
pub mod cloudctrl;
pub mod network;
pub mod harness;
pub mod sweep;
