//! Shared-blob framing.
//!
//! A shared blob is a run of `signature(32) || length(2, big-endian) || payload`
//! records followed by zero padding up to [`BLOB_SIZE`]. A zero length field
//! terminates the run, so valid payloads are 1..=65535 bytes.

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bytes in one blob.
pub const BLOB_SIZE: usize = 131_072;
pub const SIGNATURE_LEN: usize = 32;
pub const LENGTH_LEN: usize = 2;
/// Per-entry framing overhead.
pub const HEADER_LEN: usize = SIGNATURE_LEN + LENGTH_LEN;
/// Largest payload the length field can describe.
pub const MAX_ENTRY_PAYLOAD: usize = u16::MAX as usize;
/// Smallest serialized entry (header plus one payload byte).
pub const MIN_ENTRY_WIRE: usize = HEADER_LEN + 1;
/// Payload ceiling of a single blob: two entries, since one cannot exceed 65535.
pub const MAX_BLOB_PAYLOAD: usize = BLOB_SIZE - 2 * HEADER_LEN;

pub type Signature = [u8; SIGNATURE_LEN];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("rollup label must not be empty")]
    EmptyLabel,
    #[error("entry {index} has payload length {len}; valid range is 1..=65535")]
    InvalidPayloadLength { index: usize, len: usize },
    #[error("entries need {wire} wire bytes, {overflow} more than the blob holds")]
    Overflow { wire: usize, overflow: usize },
    #[error("blob must be {expected} bytes, got {actual}")]
    WrongBlobLength { expected: usize, actual: usize },
    #[error("corrupt blob: entry at offset {offset} declares {declared} bytes but only {available} remain")]
    Corrupt {
        offset: usize,
        declared: usize,
        available: usize,
    },
}

/// One framed record inside a shared blob.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShareEntry {
    pub signature: Signature,
    pub payload: Vec<u8>,
}

impl ShareEntry {
    pub fn new(signature: Signature, payload: Vec<u8>) -> Self {
        Self { signature, payload }
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

/// Entries destined for one blob, with running byte totals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SharedBlob {
    entries: Vec<ShareEntry>,
    payload_bytes: usize,
    wire_bytes: usize,
}

impl SharedBlob {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry if it is well-formed and fits.
    pub fn push(&mut self, entry: ShareEntry) -> Result<(), CodecError> {
        let len = entry.payload.len();
        if len == 0 || len > MAX_ENTRY_PAYLOAD {
            return Err(CodecError::InvalidPayloadLength {
                index: self.entries.len(),
                len,
            });
        }
        let wire = self.wire_bytes + entry.wire_len();
        if wire > BLOB_SIZE {
            return Err(CodecError::Overflow {
                wire,
                overflow: wire - BLOB_SIZE,
            });
        }
        self.wire_bytes = wire;
        self.payload_bytes += len;
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[ShareEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ShareEntry> {
        self.entries
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload_bytes
    }

    pub fn wire_bytes(&self) -> usize {
        self.wire_bytes
    }

    pub fn capacity_remaining(&self) -> usize {
        capacity_remaining(self.wire_bytes)
    }

    pub fn encode(&self) -> Vec<u8> {
        // Entries were validated on push.
        encode(&self.entries).expect("SharedBlob holds only valid entries")
    }
}

impl TryFrom<Vec<ShareEntry>> for SharedBlob {
    type Error = CodecError;

    fn try_from(entries: Vec<ShareEntry>) -> Result<Self, Self::Error> {
        let mut blob = SharedBlob::new();
        for e in entries {
            blob.push(e)?;
        }
        Ok(blob)
    }
}

/// Attribution tag for a rollup: SHA-256 of the UTF-8 label.
pub fn rollup_signature(label: &str) -> Result<Signature, CodecError> {
    if label.is_empty() {
        return Err(CodecError::EmptyLabel);
    }
    Ok(Sha256::digest(label.as_bytes()).into())
}

/// Free bytes left in a blob whose entries occupy `wire_bytes`.
pub fn capacity_remaining(wire_bytes: usize) -> usize {
    BLOB_SIZE.saturating_sub(wire_bytes)
}

/// Largest payload a new entry may carry given the free space.
pub fn max_admissible_payload(capacity: usize) -> usize {
    if capacity < MIN_ENTRY_WIRE {
        0
    } else {
        MAX_ENTRY_PAYLOAD.min(capacity - HEADER_LEN)
    }
}

/// Serializes entries in order and zero-pads to a full blob.
pub fn encode(entries: &[ShareEntry]) -> Result<Vec<u8>, CodecError> {
    let mut wire = 0usize;
    for (index, e) in entries.iter().enumerate() {
        let len = e.payload.len();
        if len == 0 || len > MAX_ENTRY_PAYLOAD {
            return Err(CodecError::InvalidPayloadLength { index, len });
        }
        wire += e.wire_len();
    }
    if wire > BLOB_SIZE {
        return Err(CodecError::Overflow {
            wire,
            overflow: wire - BLOB_SIZE,
        });
    }

    let mut out = Vec::with_capacity(BLOB_SIZE);
    for e in entries {
        out.extend_from_slice(&e.signature);
        out.extend_from_slice(&(e.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&e.payload);
    }
    out.resize(BLOB_SIZE, 0);
    Ok(out)
}

/// Parses entries until fewer than a minimal entry's bytes remain or a zero
/// length field is read.
pub fn decode(blob: &[u8]) -> Result<Vec<ShareEntry>, CodecError> {
    if blob.len() != BLOB_SIZE {
        return Err(CodecError::WrongBlobLength {
            expected: BLOB_SIZE,
            actual: blob.len(),
        });
    }
    let mut entries = Vec::new();
    let mut offset = 0usize;
    while BLOB_SIZE - offset >= MIN_ENTRY_WIRE {
        let len_at = offset + SIGNATURE_LEN;
        let declared = u16::from_be_bytes([blob[len_at], blob[len_at + 1]]) as usize;
        if declared == 0 {
            break;
        }
        let body = offset + HEADER_LEN;
        let available = BLOB_SIZE - body;
        if declared > available {
            return Err(CodecError::Corrupt {
                offset,
                declared,
                available,
            });
        }
        let mut signature = [0u8; SIGNATURE_LEN];
        signature.copy_from_slice(&blob[offset..len_at]);
        entries.push(ShareEntry::new(
            signature,
            blob[body..body + declared].to_vec(),
        ));
        offset = body + declared;
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(label: &str, len: usize, fill: u8) -> ShareEntry {
        ShareEntry::new(rollup_signature(label).unwrap(), vec![fill; len])
    }

    #[test]
    fn signature_properties() {
        let a = rollup_signature("base").unwrap();
        assert_eq!(a, rollup_signature("base").unwrap());
        assert_ne!(a, rollup_signature("zora").unwrap());
        assert_ne!(a, [0u8; 32]);
        assert_eq!(rollup_signature(""), Err(CodecError::EmptyLabel));
        assert_eq!(
            hex::encode(a),
            "cae662172fd450bb0cd710a769079c05bfc5d8e35efa6576edc7d0377afdd4a2"
        );
    }

    #[test]
    fn encode_single_entry_layout() {
        let e = entry("a", 100, 0xab);
        let blob = encode(std::slice::from_ref(&e)).unwrap();
        assert_eq!(blob.len(), BLOB_SIZE);
        assert_eq!(&blob[..32], &e.signature);
        assert_eq!(&blob[32..34], &[0x00, 0x64]);
        assert!(blob[34..134].iter().all(|&b| b == 0xab));
        assert!(blob[134..].iter().all(|&b| b == 0));
    }

    #[test]
    fn encode_empty_is_all_padding() {
        let blob = encode(&[]).unwrap();
        assert_eq!(blob, vec![0u8; BLOB_SIZE]);
        assert!(decode(&blob).unwrap().is_empty());
    }

    #[test]
    fn two_entries_fill_exactly() {
        let entries = vec![entry("a", 65_535, 1), entry("b", 65_435, 2)];
        let blob = SharedBlob::try_from(entries.clone()).unwrap();
        assert_eq!(blob.wire_bytes(), BLOB_SIZE - 34);
        let mut entries = entries;
        entries[1] = entry("b", 65_469, 2);
        let blob = SharedBlob::try_from(entries.clone()).unwrap();
        assert_eq!(blob.wire_bytes(), BLOB_SIZE);
        assert_eq!(blob.payload_bytes(), MAX_BLOB_PAYLOAD);
        assert_eq!(decode(&blob.encode()).unwrap(), entries);
    }

    #[test]
    fn encode_rejects_bad_entries() {
        assert_eq!(
            encode(&[entry("a", 0, 0)]),
            Err(CodecError::InvalidPayloadLength { index: 0, len: 0 })
        );
        assert_eq!(
            encode(&[entry("a", 10, 1), entry("a", 65_536, 1)]),
            Err(CodecError::InvalidPayloadLength {
                index: 1,
                len: 65_536
            })
        );
        let e = encode(&[entry("a", 65_535, 1), entry("b", 65_535, 1)]).unwrap_err();
        assert_eq!(
            e,
            CodecError::Overflow {
                wire: 131_138,
                overflow: 66
            }
        );
    }

    #[test]
    fn decode_rejects_overrun_and_bad_length() {
        // the 16-bit length field cannot overrun from offset 0, so corrupt the second header
        let mut blob2 = vec![0u8; BLOB_SIZE];
        let first = encode(&[entry("a", 65_535, 7)]).unwrap();
        blob2[..65_569].copy_from_slice(&first[..65_569]);
        blob2[65_569 + 32..65_569 + 34].copy_from_slice(&65_500u16.to_be_bytes());
        assert_eq!(
            decode(&blob2),
            Err(CodecError::Corrupt {
                offset: 65_569,
                declared: 65_500,
                available: BLOB_SIZE - 65_569 - 34
            })
        );
        assert_eq!(
            decode(&[0u8; 10]),
            Err(CodecError::WrongBlobLength {
                expected: BLOB_SIZE,
                actual: 10
            })
        );
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(SharedBlob::new().capacity_remaining(), BLOB_SIZE);
        let mut b = SharedBlob::new();
        b.push(entry("a", 100, 1)).unwrap();
        assert_eq!(b.capacity_remaining(), 130_938);
        assert_eq!(capacity_remaining(131_050), 22);
        assert_eq!(max_admissible_payload(22), 0);
        assert_eq!(max_admissible_payload(35), 1);
        assert_eq!(max_admissible_payload(BLOB_SIZE), MAX_ENTRY_PAYLOAD);
    }

    #[test]
    fn short_tail_stops_decoding() {
        // a blob that ends with 34 bytes of non-zero junk is not parsed as an entry
        let mut blob = encode(&[entry("a", 65_535, 1), entry("b", 65_435, 2)]).unwrap();
        for b in &mut blob[BLOB_SIZE - 34..] {
            *b = 0xff;
        }
        assert_eq!(decode(&blob).unwrap().len(), 2);
    }

    fn arb_entries() -> impl Strategy<Value = Vec<ShareEntry>> {
        prop::collection::vec(
            (any::<[u8; 32]>(), 1usize..=MAX_ENTRY_PAYLOAD, any::<u8>()),
            0..8,
        )
        .prop_map(|raw| {
            let mut out = Vec::new();
            let mut wire = 0;
            for (sig, len, fill) in raw {
                let room = max_admissible_payload(BLOB_SIZE - wire);
                if room == 0 {
                    break;
                }
                let len = len.min(room);
                wire += HEADER_LEN + len;
                let payload = (0..len).map(|i| fill.wrapping_add(i as u8)).collect();
                out.push(ShareEntry::new(sig, payload));
            }
            out
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn roundtrip_and_overhead(entries in arb_entries()) {
            let blob = SharedBlob::try_from(entries.clone()).unwrap();
            prop_assert_eq!(blob.wire_bytes(), blob.payload_bytes() + HEADER_LEN * entries.len());
            let bytes = encode(&entries).unwrap();
            prop_assert_eq!(decode(&bytes).unwrap(), entries);
        }

        #[test]
        fn padding_corruption_keeps_prefix(entries in arb_entries(), pos in any::<prop::sample::Index>(), val in 1u8..) {
            let mut bytes = encode(&entries).unwrap();
            let wire: usize = entries.iter().map(ShareEntry::wire_len).sum();
            prop_assume!(wire < BLOB_SIZE);
            let at = wire + pos.index(BLOB_SIZE - wire);
            bytes[at] = val;
            if let Ok(decoded) = decode(&bytes) {
                prop_assert!(decoded.len() >= entries.len());
                prop_assert_eq!(&decoded[..entries.len()], &entries[..]);
            }
        }
    }
}
