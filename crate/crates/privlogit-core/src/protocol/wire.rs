//! Wire format.
//!
//! Frame layout, all integers big-endian:
//!
//! ```text
//! offset  size  field
//! 0       1     version (0x01)
//! 1       16    session id
//! 17      3     sender   (1-byte role tag + 2-byte node index)
//! 20      3     receiver (same encoding)
//! 23      1     message type
//! 24      4     payload length
//! 28      n     payload
//! ```
//!
//! Role tags: 0x00 node (index 1-based), 0x01 aggregation server, 0x02 key
//! server. Payload integers use the shared length-prefixed big-endian
//! encoding; matrices and vectors carry a 2-byte row count and 2-byte
//! column count followed by row-major entries.

use num_bigint::BigUint;

use crate::codec::{get_biguint, put_biguint};

pub const WIRE_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 28;
/// Upper bound on accepted payload sizes (64 MiB); a malformed length
/// prefix aborts the session rather than an allocation attempt.
pub const MAX_PAYLOAD: usize = 64 << 20;

/// A party within one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// Data-holding organization, 1-based index.
    Node(u16),
    /// Aggregation server: holds ciphertexts, never the key.
    ServerA,
    /// Key server: holds the decryption key, sees only blinded values.
    ServerB,
}

impl Role {
    fn encode(self, out: &mut Vec<u8>) {
        match self {
            Role::Node(idx) => {
                out.push(0x00);
                out.extend_from_slice(&idx.to_be_bytes());
            }
            Role::ServerA => {
                out.push(0x01);
                out.extend_from_slice(&0u16.to_be_bytes());
            }
            Role::ServerB => {
                out.push(0x02);
                out.extend_from_slice(&0u16.to_be_bytes());
            }
        }
    }

    fn decode(bytes: &[u8]) -> Option<Self> {
        let idx = u16::from_be_bytes([bytes[1], bytes[2]]);
        match bytes[0] {
            0x00 => Some(Role::Node(idx)),
            0x01 => Some(Role::ServerA),
            0x02 => Some(Role::ServerB),
            _ => None,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Node(i) => write!(f, "node-{i}"),
            Role::ServerA => write!(f, "server-a"),
            Role::ServerB => write!(f, "server-b"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0x01,
    ConfigAck = 0x02,
    LocalHessian = 0x03,
    LocalGradient = 0x04,
    LocalLogLik = 0x05,
    LocalNewtonStep = 0x06,
    BlindedRequest = 0x07,
    BlindedResponse = 0x08,
    BetaBroadcast = 0x09,
    InvHessianBroadcast = 0x0a,
    ConvergedNotice = 0x0b,
    Abort = 0x0c,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => Self::Hello,
            0x02 => Self::ConfigAck,
            0x03 => Self::LocalHessian,
            0x04 => Self::LocalGradient,
            0x05 => Self::LocalLogLik,
            0x06 => Self::LocalNewtonStep,
            0x07 => Self::BlindedRequest,
            0x08 => Self::BlindedResponse,
            0x09 => Self::BetaBroadcast,
            0x0a => Self::InvHessianBroadcast,
            0x0b => Self::ConvergedNotice,
            0x0c => Self::Abort,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub version: u8,
    pub session: [u8; 16],
    pub from: Role,
    pub to: Role,
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("unsupported version {0:#x}")]
    Version(u8),
    #[error("unknown role tag")]
    Role,
    #[error("unknown message type {0:#x}")]
    MsgType(u8),
    #[error("payload length {0} exceeds the frame limit")]
    Oversized(usize),
    #[error("payload length prefix does not match payload size")]
    LengthMismatch,
    #[error("malformed payload for {0}")]
    Payload(&'static str),
}

impl Envelope {
    pub fn new(session: [u8; 16], from: Role, to: Role, msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self {
            version: WIRE_VERSION,
            session,
            from,
            to,
            msg_type,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.version);
        out.extend_from_slice(&self.session);
        self.from.encode(&mut out);
        self.to.encode(&mut out);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated);
        }
        let version = bytes[0];
        if version != WIRE_VERSION {
            return Err(WireError::Version(version));
        }
        let mut session = [0u8; 16];
        session.copy_from_slice(&bytes[1..17]);
        let from = Role::decode(&bytes[17..20]).ok_or(WireError::Role)?;
        let to = Role::decode(&bytes[20..23]).ok_or(WireError::Role)?;
        let msg_type = MsgType::from_byte(bytes[23]).ok_or(WireError::MsgType(bytes[23]))?;
        let len = u32::from_be_bytes(bytes[24..28].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(WireError::Oversized(len));
        }
        if bytes.len() != HEADER_LEN + len {
            return Err(WireError::LengthMismatch);
        }
        Ok(Self {
            version,
            session,
            from,
            to,
            msg_type,
            payload: bytes[28..].to_vec(),
        })
    }
}

// ---- payload building blocks ----

pub fn put_uint_vec(out: &mut Vec<u8>, v: &[BigUint]) {
    out.extend_from_slice(&(v.len() as u16).to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    for x in v {
        out.extend(put_biguint(x));
    }
}

pub fn get_uint_vec(bytes: &[u8]) -> Option<(Vec<BigUint>, &[u8])> {
    let rows = u16::from_be_bytes(bytes.get(..2)?.try_into().ok()?) as usize;
    let cols = u16::from_be_bytes(bytes.get(2..4)?.try_into().ok()?) as usize;
    if cols != 1 {
        return None;
    }
    let mut rest = &bytes[4..];
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let (v, r) = get_biguint(rest)?;
        out.push(v);
        rest = r;
    }
    Some((out, rest))
}

/// Row-major matrix of ring elements with explicit dimensions.
pub fn put_uint_matrix(out: &mut Vec<u8>, rows: usize, cols: usize, data: &[BigUint]) {
    debug_assert_eq!(rows * cols, data.len());
    out.extend_from_slice(&(rows as u16).to_be_bytes());
    out.extend_from_slice(&(cols as u16).to_be_bytes());
    for x in data {
        out.extend(put_biguint(x));
    }
}

pub fn get_uint_matrix(bytes: &[u8]) -> Option<((usize, usize, Vec<BigUint>), &[u8])> {
    let rows = u16::from_be_bytes(bytes.get(..2)?.try_into().ok()?) as usize;
    let cols = u16::from_be_bytes(bytes.get(2..4)?.try_into().ok()?) as usize;
    let mut rest = &bytes[4..];
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let (v, r) = get_biguint(rest)?;
        out.push(v);
        rest = r;
    }
    Some(((rows, cols, out), rest))
}

pub fn put_f64_vec(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u16).to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    for x in v {
        out.extend_from_slice(&x.to_bits().to_be_bytes());
    }
}

pub fn get_f64_vec(bytes: &[u8]) -> Option<(Vec<f64>, &[u8])> {
    let rows = u16::from_be_bytes(bytes.get(..2)?.try_into().ok()?) as usize;
    let cols = u16::from_be_bytes(bytes.get(2..4)?.try_into().ok()?) as usize;
    if cols != 1 {
        return None;
    }
    let rest = &bytes[4..];
    if rest.len() < rows * 8 {
        return None;
    }
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let bits = u64::from_be_bytes(rest[i * 8..i * 8 + 8].try_into().ok()?);
        out.push(f64::from_bits(bits));
    }
    Some((out, &rest[rows * 8..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let env = Envelope::new(
            [7u8; 16],
            Role::Node(3),
            Role::ServerA,
            MsgType::LocalGradient,
            vec![1, 2, 3, 4, 5],
        );
        let bytes = env.encode();
        assert_eq!(Envelope::decode(&bytes).unwrap(), env);
    }

    #[test]
    fn large_payload_round_trip() {
        let env = Envelope::new(
            [0u8; 16],
            Role::ServerA,
            Role::ServerB,
            MsgType::BlindedRequest,
            vec![0xabu8; 1 << 20],
        );
        let bytes = env.encode();
        let back = Envelope::decode(&bytes).unwrap();
        assert_eq!(back.payload.len(), 1 << 20);
        assert_eq!(back, env);
    }

    #[test]
    fn truncated_and_malformed_frames() {
        let env = Envelope::new([0u8; 16], Role::ServerA, Role::Node(1), MsgType::Hello, vec![9; 10]);
        let bytes = env.encode();
        assert_eq!(Envelope::decode(&bytes[..10]), Err(WireError::Truncated));
        assert_eq!(
            Envelope::decode(&bytes[..bytes.len() - 1]),
            Err(WireError::LengthMismatch)
        );
        let mut bad_version = bytes.clone();
        bad_version[0] = 0x02;
        assert!(matches!(
            Envelope::decode(&bad_version),
            Err(WireError::Version(0x02))
        ));
        let mut bad_type = bytes.clone();
        bad_type[23] = 0x7f;
        assert!(matches!(
            Envelope::decode(&bad_type),
            Err(WireError::MsgType(0x7f))
        ));
    }

    #[test]
    fn vector_codecs_round_trip() {
        let v: Vec<BigUint> = (0u32..5).map(BigUint::from).collect();
        let mut out = Vec::new();
        put_uint_vec(&mut out, &v);
        let (back, rest) = get_uint_vec(&out).unwrap();
        assert_eq!(back, v);
        assert!(rest.is_empty());

        let f = vec![1.5, -2.25, f64::MIN_POSITIVE];
        let mut out = Vec::new();
        put_f64_vec(&mut out, &f);
        let (back, rest) = get_f64_vec(&out).unwrap();
        assert_eq!(back, f);
        assert!(rest.is_empty());
    }
}
