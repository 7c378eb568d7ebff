//! Length-prefixed parameter messages.
//!
//! Frame: one version byte (`0x01`), a big-endian `u32` payload length, then
//! a UTF-8 JSON object
//! `{round, client_id, n_samples, weights, intercept, shapes, loss?, error?}`.
//! Floats are written as shortest round-trip decimals, so every binary64
//! value decodes to the same bits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::model::ModelParams;

pub const WIRE_VERSION: u8 = 0x01;
/// Largest accepted payload (64 MiB).
pub const MAX_PAYLOAD: usize = 64 << 20;
const HEADER: usize = 5;

/// One frame. Round 0 is reserved: a client's hello carries round 0 and so
/// does the server's shutdown notice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsMessage {
    pub round: u64,
    pub client_id: u32,
    pub n_samples: u64,
    pub weights: Vec<f64>,
    pub intercept: f64,
    #[serde(default)]
    pub shapes: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ParamsMessage {
    pub fn new(round: u64, client_id: u32, n_samples: u64, params: &ModelParams) -> Self {
        ParamsMessage {
            round,
            client_id,
            n_samples,
            weights: params.weights.clone(),
            intercept: params.intercept,
            shapes: params.layer_shapes.clone(),
            loss: None,
            error: None,
        }
    }

    /// A message with no parameters (hello, shutdown, failure report).
    pub fn control(round: u64, client_id: u32, n_samples: u64) -> Self {
        ParamsMessage::new(round, client_id, n_samples, &ModelParams::linear(0, 0.0))
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            weights: self.weights.clone(),
            intercept: self.intercept,
            layer_shapes: self.shapes.clone(),
        }
    }
}

pub fn encode_params_message(msg: &ParamsMessage) -> Result<Vec<u8>, ProtocolError> {
    if !msg.intercept.is_finite()
        || msg.weights.iter().any(|w| !w.is_finite())
        || msg.loss.is_some_and(|l| !l.is_finite())
    {
        return Err(ProtocolError::Encoding("non-finite value".into()));
    }
    let payload = serde_json::to_vec(msg).map_err(|e| ProtocolError::Encoding(e.to_string()))?;
    if payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::MalformedLength(format!(
            "payload of {} bytes exceeds {MAX_PAYLOAD}",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.push(WIRE_VERSION);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

fn parse_header(header: &[u8]) -> Result<usize, ProtocolError> {
    if header.len() < HEADER {
        return Err(ProtocolError::MalformedLength(format!(
            "frame header needs {HEADER} bytes, got {}",
            header.len()
        )));
    }
    if header[0] != WIRE_VERSION {
        return Err(ProtocolError::UnknownVersion(header[0]));
    }
    let len = u32::from_be_bytes([header[1], header[2], header[3], header[4]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::MalformedLength(format!(
            "declared length {len} exceeds {MAX_PAYLOAD}"
        )));
    }
    Ok(len)
}

fn parse_payload(payload: &[u8]) -> Result<ParamsMessage, ProtocolError> {
    serde_json::from_slice(payload).map_err(|e| ProtocolError::Encoding(e.to_string()))
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_params_message(bytes: &[u8]) -> Result<ParamsMessage, ProtocolError> {
    let len = parse_header(bytes)?;
    let body = &bytes[HEADER..];
    if body.len() < len {
        return Err(ProtocolError::TruncatedPayload {
            expected: len,
            actual: body.len(),
        });
    }
    if body.len() > len {
        return Err(ProtocolError::MalformedLength(format!(
            "declared length {len} but {} bytes follow",
            body.len()
        )));
    }
    parse_payload(body)
}

pub(crate) fn write_frame(w: &mut impl Write, msg: &ParamsMessage) -> Result<(), ProtocolError> {
    let bytes = encode_params_message(msg)?;
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| ProtocolError::Io(e.to_string()))
}

/// Reads one frame. A clean end of stream before the header yields `Ok(None)`.
pub(crate) fn read_frame(r: &mut impl Read) -> Result<Option<ParamsMessage>, std::io::Error> {
    let mut header = [0u8; HEADER];
    let mut got = 0;
    while got < HEADER {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "truncated frame header",
                ))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = parse_header(&header).map_err(invalid)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    parse_payload(&payload).map(Some).map_err(invalid)
}

fn invalid(e: ProtocolError) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn msg(weights: Vec<f64>) -> ParamsMessage {
        let mut m = ParamsMessage::new(
            3,
            7,
            120,
            &ModelParams {
                weights,
                intercept: 70.03,
                layer_shapes: vec![],
            },
        );
        m.loss = Some(0.1 + 0.2);
        m
    }

    #[test]
    fn round_trip_560() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..560)
            .map(|_| {
                f64::from_bits(rng.random::<u64>() >> 2) * if rng.random() { -1.0 } else { 1.0 }
            })
            .collect();
        let m = msg(w);
        let back = decode_params_message(&encode_params_message(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.weights.iter().zip(&m.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_weights() {
        let m = msg(vec![]);
        assert_eq!(
            decode_params_message(&encode_params_message(&m).unwrap()).unwrap(),
            m
        );
    }

    #[test]
    fn header_layout() {
        let bytes = encode_params_message(&msg(vec![1.0])).unwrap();
        assert_eq!(bytes[0], 0x01);
        let len = u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 5);
        let json: serde_json::Value = serde_json::from_slice(&bytes[5..]).unwrap();
        for key in [
            "round",
            "client_id",
            "n_samples",
            "weights",
            "intercept",
            "shapes",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode_params_message(&msg(vec![1.0, 2.0])).unwrap();
        assert!(matches!(
            decode_params_message(&bytes[..bytes.len() - 1]),
            Err(ProtocolError::TruncatedPayload { .. })
        ));
        let mut v = bytes.clone();
        v[0] = 0x02;
        assert!(matches!(
            decode_params_message(&v),
            Err(ProtocolError::UnknownVersion(2))
        ));
        assert!(matches!(
            decode_params_message(&bytes[..3]),
            Err(ProtocolError::MalformedLength(_))
        ));
        let mut huge = bytes.clone();
        huge[1..5].copy_from_slice(&u32::MAX.to_be_bytes());
        assert!(matches!(
            decode_params_message(&huge),
            Err(ProtocolError::MalformedLength(_))
        ));
        let mut extra = bytes.clone();
        extra.push(b' ');
        assert!(matches!(
            decode_params_message(&extra),
            Err(ProtocolError::MalformedLength(_))
        ));
        let mut garbage = bytes;
        garbage[5] = b'#';
        assert!(matches!(
            decode_params_message(&garbage),
            Err(ProtocolError::Encoding(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(encode_params_message(&msg(vec![f64::NAN])).is_err());
    }

    #[test]
    fn stream_framing() {
        let (a, b) = (msg(vec![1.5]), msg(vec![-2.25, 3.0]));
        let mut buf = Vec::new();
        write_frame(&mut buf, &a).unwrap();
        write_frame(&mut buf, &b).unwrap();
        let mut r = std::io::Cursor::new(buf);
        assert_eq!(read_frame(&mut r).unwrap(), Some(a));
        assert_eq!(read_frame(&mut r).unwrap(), Some(b));
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    proptest! {
        #[test]
        fn bits_survive(ws in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..64), b in -1e3f64..1e3) {
            let mut m = msg(ws);
            m.intercept = b;
            let back = decode_params_message(&encode_params_message(&m).unwrap()).unwrap();
            prop_assert_eq!(back.weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), m.weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.intercept.to_bits(), m.intercept.to_bits());
        }
    }
}
