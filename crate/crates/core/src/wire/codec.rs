use serde::{Deserialize, Serialize};

use super::WireError;
use crate::airflow::ImpellerCommand;

pub const HEADER: u8 = 0xA5;
pub const FRAME_LEN: usize = 5;
/// Largest SET_DUTY payload: 100 % in 0.5 % units.
pub const MAX_DUTY_UNITS: u8 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    SetDuty = 0x01,
    Stop = 0x02,
    Ping = 0x03,
}

impl Opcode {
    pub const ALL: [Opcode; 3] = [Opcode::SetDuty, Opcode::Stop, Opcode::Ping];

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(Opcode::SetDuty),
            0x02 => Some(Opcode::Stop),
            0x03 => Some(Opcode::Ping),
            _ => None,
        }
    }

    fn max_payload(self) -> u8 {
        match self {
            Opcode::SetDuty => MAX_DUTY_UNITS,
            Opcode::Stop | Opcode::Ping => 0,
        }
    }
}

/// Host to microcontroller command: `[0xA5, seq, opcode, payload, checksum]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommandFrame {
    pub seq: u8,
    pub opcode: Opcode,
    pub payload: u8,
}

impl CommandFrame {
    pub fn new(seq: u8, opcode: Opcode, payload: u8) -> Result<Self, WireError> {
        if payload > opcode.max_payload() {
            return Err(WireError::PayloadOutOfRange { opcode: opcode as u8, payload });
        }
        Ok(Self { seq, opcode, payload })
    }

    pub fn set_duty(seq: u8, cmd: &ImpellerCommand) -> Self {
        Self { seq, opcode: Opcode::SetDuty, payload: cmd.units() }
    }

    pub fn stop(seq: u8) -> Self {
        Self { seq, opcode: Opcode::Stop, payload: 0 }
    }

    pub fn ping(seq: u8) -> Self {
        Self { seq, opcode: Opcode::Ping, payload: 0 }
    }

    /// Commanded duty for SET_DUTY frames.
    pub fn duty_pct(&self) -> Option<f64> {
        (self.opcode == Opcode::SetDuty).then(|| f64::from(self.payload) * ImpellerCommand::STEP_PCT)
    }
}

pub fn checksum(seq: u8, opcode: u8, payload: u8) -> u8 {
    seq ^ opcode ^ payload
}

pub fn encode(frame: &CommandFrame) -> Result<[u8; FRAME_LEN], WireError> {
    let f = CommandFrame::new(frame.seq, frame.opcode, frame.payload)?;
    let op = f.opcode as u8;
    Ok([HEADER, f.seq, op, f.payload, checksum(f.seq, op, f.payload)])
}

pub fn decode(bytes: &[u8]) -> Result<CommandFrame, WireError> {
    let &[header, seq, op, payload, sum] = bytes else {
        return Err(WireError::BadLength(bytes.len()));
    };
    if header != HEADER {
        return Err(WireError::BadHeader(header));
    }
    let expected = checksum(seq, op, payload);
    if sum != expected {
        return Err(WireError::BadChecksum { expected, found: sum });
    }
    let opcode = Opcode::from_byte(op).ok_or(WireError::UnknownOpcode(op))?;
    CommandFrame::new(seq, opcode, payload)
}

/// Wrapping 8-bit frame counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeqCounter(u8);

impl SeqCounter {
    pub fn next_seq(&mut self) -> u8 {
        let s = self.0;
        self.0 = self.0.wrapping_add(1);
        s
    }
}

/// Every frame the codec accepts, in seq-major order.
pub fn valid_frames() -> impl Iterator<Item = CommandFrame> {
    (0..=u8::MAX).flat_map(|seq| {
        Opcode::ALL
            .into_iter()
            .flat_map(move |op| (0..=op.max_payload()).map(move |payload| CommandFrame { seq, opcode: op, payload }))
    })
}

/// Round-trips every valid frame; returns how many were checked.
pub fn exhaustive_round_trip() -> Result<usize, WireError> {
    let mut n = 0;
    for f in valid_frames() {
        let bytes = encode(&f)?;
        let back = decode(&bytes)?;
        if back != f {
            return Err(WireError::RoundTripMismatch(bytes));
        }
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let f = CommandFrame::new(1, Opcode::SetDuty, 200).unwrap();
        assert_eq!(encode(&f).unwrap(), [0xA5, 0x01, 0x01, 0xC8, 0xC8]);
        assert_eq!(encode(&CommandFrame::ping(0)).unwrap(), [0xA5, 0x00, 0x03, 0x00, 0x03]);
        assert_eq!(
            CommandFrame::new(0, Opcode::SetDuty, 201),
            Err(WireError::PayloadOutOfRange { opcode: 1, payload: 201 })
        );
        let raw = CommandFrame { seq: 0, opcode: Opcode::SetDuty, payload: 201 };
        assert!(matches!(encode(&raw), Err(WireError::PayloadOutOfRange { .. })));
    }

    #[test]
    fn decode_examples() {
        let f = decode(&[0xA5, 0x01, 0x01, 0xC8, 0xC8]).unwrap();
        assert_eq!((f.seq, f.opcode, f.duty_pct()), (1, Opcode::SetDuty, Some(100.0)));
        assert!(matches!(decode(&[0xA5, 0x01, 0x01, 0xC8, 0xC9]), Err(WireError::BadChecksum { .. })));
        assert_eq!(decode(&[0x5A, 0x01, 0x01, 0xC8, 0xC8]), Err(WireError::BadHeader(0x5A)));
        assert_eq!(decode(&[0xA5, 0x01, 0x01, 0xC8]), Err(WireError::BadLength(4)));
        assert_eq!(decode(&[0xA5, 0x00, 0x07, 0x00, 0x07]), Err(WireError::UnknownOpcode(7)));
        assert!(matches!(decode(&[0xA5, 0x00, 0x02, 0x01, 0x03]), Err(WireError::PayloadOutOfRange { .. })));
    }

    #[test]
    fn duty_commands_map_to_units() {
        let cmd = ImpellerCommand::new(37.5, 0.0).unwrap();
        let f = CommandFrame::set_duty(9, &cmd);
        assert_eq!(f.payload, 75);
        assert_eq!(decode(&encode(&f).unwrap()).unwrap().duty_pct(), Some(37.5));
        assert_eq!(CommandFrame::stop(1).duty_pct(), None);
    }

    #[test]
    fn seq_wraps() {
        let mut c = SeqCounter::default();
        let seqs: Vec<u8> = (0..258).map(|_| c.next_seq()).collect();
        assert_eq!(&seqs[254..], &[254, 255, 0, 1]);
    }
}
