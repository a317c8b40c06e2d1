//! Distributed protocol layer: party roles, session configuration, the wire
//! format, transports, and the protocol drivers.

pub mod wire;

pub use wire::{Envelope, MsgType, Role, WIRE_VERSION};
