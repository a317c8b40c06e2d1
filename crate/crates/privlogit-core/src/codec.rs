//! Length-prefixed big-endian byte encodings shared by the key material and
//! the protocol wire format: 4-byte big-endian length, then the magnitude
//! bytes; signed integers append one sign byte (0 positive, 1 negative).

use num_bigint::{BigInt, BigUint, Sign};

pub fn put_biguint(v: &BigUint) -> Vec<u8> {
    let mag = v.to_bytes_be();
    let mut out = Vec::with_capacity(4 + mag.len());
    out.extend_from_slice(&(mag.len() as u32).to_be_bytes());
    out.extend_from_slice(&mag);
    out
}

pub fn get_biguint(bytes: &[u8]) -> Option<(BigUint, &[u8])> {
    if bytes.len() < 4 {
        return None;
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().ok()?) as usize;
    if bytes.len() < 4 + len {
        return None;
    }
    Some((BigUint::from_bytes_be(&bytes[4..4 + len]), &bytes[4 + len..]))
}

pub fn put_bigint(v: &BigInt) -> Vec<u8> {
    let (sign, mag) = v.to_bytes_be();
    let mut out = Vec::with_capacity(5 + mag.len());
    out.extend_from_slice(&(mag.len() as u32).to_be_bytes());
    out.extend_from_slice(&mag);
    out.push(if sign == Sign::Minus { 1 } else { 0 });
    out
}

pub fn get_bigint(bytes: &[u8]) -> Option<(BigInt, &[u8])> {
    if bytes.len() < 4 {
        return None;
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().ok()?) as usize;
    if bytes.len() < 4 + len + 1 {
        return None;
    }
    let mag = &bytes[4..4 + len];
    let sign_byte = bytes[4 + len];
    let sign = if sign_byte == 1 { Sign::Minus } else { Sign::Plus };
    let v = BigInt::from_bytes_be(sign, mag);
    Some((v, &bytes[4 + len + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    #[test]
    fn round_trips() {
        for v in [
            BigUint::zero(),
            BigUint::from(1u8),
            BigUint::from(u64::MAX),
            BigUint::from(u128::MAX) * 12345u32,
        ] {
            let b = put_biguint(&v);
            let (back, rest) = get_biguint(&b).unwrap();
            assert_eq!(back, v);
            assert!(rest.is_empty());
        }
        for v in [BigInt::from(-42), BigInt::zero(), BigInt::from(7i64)] {
            let b = put_bigint(&v);
            let (back, rest) = get_bigint(&b).unwrap();
            assert_eq!(back, v);
            assert!(rest.is_empty());
        }
        assert!(get_biguint(&[0, 0, 0, 9, 1]).is_none());
    }
}
