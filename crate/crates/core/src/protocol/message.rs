use std::io::Cursor;

use bitstream_io::{BigEndian, BitRead, BitReader, BitWrite, BitWriter};

use crate::semcom::rate::{cell_index_bits, position_encoding, PositionMode};
use crate::semcom::Patch;
use crate::{Error, Result};

pub const MAGIC: [u8; 2] = *b"TC";
pub const VERSION: u8 = 1;
/// Magic, version, type, two 16-bit grid dimensions and the index width.
pub const HEADER_BYTES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    ContextOnly = 0,
    ContextPlusTask = 1,
    FullLatent = 2,
    TaskPatch = 3,
    MoreInfoRequest = 4,
    RegionRequest = 5,
}

impl MessageType {
    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => MessageType::ContextOnly,
            1 => MessageType::ContextPlusTask,
            2 => MessageType::FullLatent,
            3 => MessageType::TaskPatch,
            4 => MessageType::MoreInfoRequest,
            5 => MessageType::RegionRequest,
            other => return Err(Error::Format(format!("unknown message type {other}"))),
        })
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelBox {
    pub x0: u16,
    pub y0: u16,
    pub x1: u16,
    pub y1: u16,
}

impl PixelBox {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    /// Context indices; the header carries the context grid dims.
    ContextOnly { indices: Vec<u32> },
    /// Context plus selected image-latent cells; the header carries the
    /// image grid dims and the context grid is that divided by the factor.
    ContextPlusTask { context_factor: u8, context: Vec<u32>, patch: Patch },
    FullLatent { indices: Vec<u32> },
    TaskPatch { patch: Patch },
    MoreInfoRequest,
    RegionRequest { region: PixelBox },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemMessage {
    pub grid_h: u32,
    pub grid_w: u32,
    /// Bits per codebook index.
    pub index_bits: u8,
    pub body: MessageBody,
}

impl SemMessage {
    pub fn msg_type(&self) -> MessageType {
        match self.body {
            MessageBody::ContextOnly { .. } => MessageType::ContextOnly,
            MessageBody::ContextPlusTask { .. } => MessageType::ContextPlusTask,
            MessageBody::FullLatent { .. } => MessageType::FullLatent,
            MessageBody::TaskPatch { .. } => MessageType::TaskPatch,
            MessageBody::MoreInfoRequest => MessageType::MoreInfoRequest,
            MessageBody::RegionRequest { .. } => MessageType::RegionRequest,
        }
    }

    pub fn cells(&self) -> usize {
        self.grid_h as usize * self.grid_w as usize
    }

    fn context_dims(&self, factor: u8) -> Result<(usize, usize)> {
        let f = factor as u32;
        if f == 0 || self.grid_h % f != 0 || self.grid_w % f != 0 {
            return Err(Error::Format(format!(
                "context factor {factor} does not divide the {}x{} grid",
                self.grid_h, self.grid_w
            )));
        }
        Ok(((self.grid_h / f) as usize, (self.grid_w / f) as usize))
    }

    /// Checks every structural invariant the wire format relies on.
    pub fn validate(&self) -> Result<()> {
        if self.grid_h > u16::MAX as u32 || self.grid_w > u16::MAX as u32 {
            return Err(Error::Format(format!("grid {}x{} exceeds 65535", self.grid_h, self.grid_w)));
        }
        if self.index_bits > 32 {
            return Err(Error::Format(format!("index width {} exceeds 32 bits", self.index_bits)));
        }
        let cells = self.cells();
        let needs_indices = !matches!(self.body, MessageBody::MoreInfoRequest | MessageBody::RegionRequest { .. });
        if needs_indices && self.index_bits == 0 {
            return Err(Error::Format("index width must be positive".into()));
        }
        let check_indices = |v: &[u32]| -> Result<()> {
            if self.index_bits < 32 {
                if let Some(bad) = v.iter().find(|&&i| i >> self.index_bits != 0) {
                    return Err(Error::Format(format!("index {bad} does not fit {} bits", self.index_bits)));
                }
            }
            Ok(())
        };
        let check_patch = |p: &Patch| -> Result<()> {
            if p.cells().last().is_some_and(|&c| c as usize >= cells) {
                return Err(Error::Format("patch cell outside the grid".into()));
            }
            check_indices(p.indices())
        };
        match &self.body {
            MessageBody::ContextOnly { indices } | MessageBody::FullLatent { indices } => {
                if indices.len() != cells {
                    return Err(Error::Format(format!("{} indices for {cells} cells", indices.len())));
                }
                check_indices(indices)
            }
            MessageBody::ContextPlusTask { context_factor, context, patch } => {
                let (ch, cw) = self.context_dims(*context_factor)?;
                if context.len() != ch * cw {
                    return Err(Error::Format(format!("{} context indices for {} cells", context.len(), ch * cw)));
                }
                check_indices(context)?;
                check_patch(patch)
            }
            MessageBody::TaskPatch { patch } => check_patch(patch),
            MessageBody::MoreInfoRequest => Ok(()),
            MessageBody::RegionRequest { .. } => Ok(()),
        }
    }

    pub fn serialize(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(HEADER_BYTES + 16);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type() as u8);
        out.extend_from_slice(&(self.grid_h as u16).to_be_bytes());
        out.extend_from_slice(&(self.grid_w as u16).to_be_bytes());
        out.push(self.index_bits);
        let b = self.index_bits as u32;
        let cells = self.cells();
        match &self.body {
            MessageBody::ContextOnly { indices } | MessageBody::FullLatent { indices } => {
                pack(&mut out, indices.iter().map(|&i| (b, i)));
            }
            MessageBody::ContextPlusTask { context_factor, context, patch } => {
                out.push(*context_factor);
                pack(&mut out, context.iter().map(|&i| (b, i)));
                write_patch(&mut out, patch, cells, b);
            }
            MessageBody::TaskPatch { patch } => write_patch(&mut out, patch, cells, b),
            MessageBody::MoreInfoRequest => {}
            MessageBody::RegionRequest { region } => {
                for v in [region.x0, region.y0, region.x1, region.y1] {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
        }
        Ok(out)
    }

    /// Strict parser: rejects bad magic/version, truncation, trailing bytes
    /// and non-zero padding, so every accepted byte string is canonical.
    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if bytes[..2] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        if bytes[2] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[2])));
        }
        let kind = MessageType::from_code(bytes[3])?;
        let grid_h = u16::from_be_bytes([bytes[4], bytes[5]]) as u32;
        let grid_w = u16::from_be_bytes([bytes[6], bytes[7]]) as u32;
        let index_bits = bytes[8];
        let mut cur = Reader::new(&bytes[HEADER_BYTES..]);
        let mut msg = SemMessage { grid_h, grid_w, index_bits, body: MessageBody::MoreInfoRequest };
        let b = index_bits as u32;
        if b > 32 {
            return Err(Error::Format(format!("index width {b} exceeds 32 bits")));
        }
        let cells = msg.cells();
        msg.body = match kind {
            MessageType::ContextOnly => MessageBody::ContextOnly { indices: cur.indices(cells, b)? },
            MessageType::FullLatent => MessageBody::FullLatent { indices: cur.indices(cells, b)? },
            MessageType::ContextPlusTask => {
                let context_factor = cur.byte()?;
                let (ch, cw) = msg.context_dims(context_factor)?;
                let context = cur.indices(ch * cw, b)?;
                let patch = cur.patch(cells, b)?;
                MessageBody::ContextPlusTask { context_factor, context, patch }
            }
            MessageType::TaskPatch => MessageBody::TaskPatch { patch: cur.patch(cells, b)? },
            MessageType::MoreInfoRequest => MessageBody::MoreInfoRequest,
            MessageType::RegionRequest => {
                let mut v = [0u16; 4];
                for slot in &mut v {
                    *slot = u16::from_be_bytes([cur.byte()?, cur.byte()?]);
                }
                MessageBody::RegionRequest { region: PixelBox { x0: v[0], y0: v[1], x1: v[2], y1: v[3] } }
            }
        };
        if !cur.rest().is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cur.rest().len())));
        }
        msg.validate()?;
        Ok(msg)
    }
}

/// Payload bits counted for rate accounting: index and position payloads,
/// or the four coordinates of a region request. Headers, the context-factor
/// byte, the position-mode byte and padding are excluded.
pub fn payload_bits(msg: &SemMessage) -> u64 {
    let b = msg.index_bits as u64;
    let cells = msg.cells();
    match &msg.body {
        MessageBody::ContextOnly { indices } | MessageBody::FullLatent { indices } => indices.len() as u64 * b,
        MessageBody::ContextPlusTask { context, patch, .. } => {
            context.len() as u64 * b + position_encoding(patch.len(), cells).1 + patch.len() as u64 * b
        }
        MessageBody::TaskPatch { patch } => position_encoding(patch.len(), cells).1 + patch.len() as u64 * b,
        MessageBody::MoreInfoRequest => 0,
        MessageBody::RegionRequest { .. } => 64,
    }
}

/// Appends `(width, value)` fields MSB first, zero-padded to a byte.
fn pack(out: &mut Vec<u8>, fields: impl Iterator<Item = (u32, u32)>) {
    let mut w = BitWriter::endian(Vec::new(), BigEndian);
    for (bits, v) in fields {
        if bits > 0 {
            w.write_var::<u32>(bits, v).expect("value fits its declared width");
        }
    }
    w.byte_align().expect("in-memory write");
    out.extend(w.into_writer());
}

fn write_patch(out: &mut Vec<u8>, patch: &Patch, cells: usize, b: u32) {
    let (mode, _) = position_encoding(patch.len(), cells);
    out.push(mode.code());
    match mode {
        PositionMode::List => {
            let width = cell_index_bits(cells);
            let head = std::iter::once((16, patch.len() as u32));
            pack(out, head.chain(patch.cells().iter().map(|&c| (width, c))));
        }
        PositionMode::Bitmap => {
            let mut bits = vec![0u32; cells];
            for &c in patch.cells() {
                bits[c as usize] = 1;
            }
            pack(out, bits.into_iter().map(|v| (1, v)));
        }
    }
    pack(out, patch.indices().iter().map(|&i| (b, i)));
}

type Bits<'a> = BitReader<Cursor<&'a [u8]>, BigEndian>;

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes }
    }

    fn rest(&self) -> &'a [u8] {
        self.bytes
    }

    fn byte(&mut self) -> Result<u8> {
        let (&first, rest) = self.bytes.split_first().ok_or_else(truncated)?;
        self.bytes = rest;
        Ok(first)
    }

    /// Runs `read` over the next byte-aligned section of `total` bits and
    /// checks that the section's padding is zero. The length is checked
    /// before `read` runs, so no allocation exceeds the input size.
    fn section<T>(&mut self, total: u64, read: impl FnOnce(&mut Bits<'a>) -> std::io::Result<T>) -> Result<T> {
        let len = total.div_ceil(8);
        if len > self.bytes.len() as u64 {
            return Err(truncated());
        }
        let (head, rest) = self.bytes.split_at(len as usize);
        self.bytes = rest;
        let mut r = BitReader::endian(Cursor::new(head), BigEndian);
        let value = read(&mut r).map_err(|e| Error::Format(format!("bit read failed: {e}")))?;
        let pad = (len * 8 - total) as u32;
        if pad > 0 && r.read_var::<u32>(pad).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("non-zero padding".into()));
        }
        Ok(value)
    }

    fn indices(&mut self, count: usize, bits: u32) -> Result<Vec<u32>> {
        if bits == 0 {
            return Err(Error::Format("index width must be positive".into()));
        }
        self.section(count as u64 * bits as u64, |r| (0..count).map(|_| r.read_var::<u32>(bits)).collect())
    }

    fn patch(&mut self, cells: usize, b: u32) -> Result<Patch> {
        let mode = self.byte()?;
        let positions = match mode {
            0 => {
                if self.bytes.len() < 2 {
                    return Err(truncated());
                }
                let count = u16::from_be_bytes([self.bytes[0], self.bytes[1]]) as usize;
                let width = cell_index_bits(cells);
                self.section(16 + count as u64 * width as u64, |r| {
                    r.read_var::<u32>(16)?;
                    (0..count).map(|_| if width == 0 { Ok(0) } else { r.read_var::<u32>(width) }).collect()
                })?
            }
            1 => self.section(cells as u64, |r| {
                let mut set = Vec::new();
                for i in 0..cells as u32 {
                    if r.read_bit()? {
                        set.push(i);
                    }
                }
                Ok(set)
            })?,
            other => return Err(Error::Format(format!("unknown position mode {other}"))),
        };
        if positions.windows(2).any(|w| w[0] >= w[1]) || positions.last().is_some_and(|&c| c as usize >= cells) {
            return Err(Error::Format("patch positions are not increasing cells of the grid".into()));
        }
        if position_encoding(positions.len(), cells).0.code() != mode {
            return Err(Error::Format("position mode is not the cheaper encoding".into()));
        }
        let indices = if positions.is_empty() { Vec::new() } else { self.indices(positions.len(), b)? };
        Patch::new(positions, indices).map_err(|e| Error::Format(e.to_string()))
    }
}

fn truncated() -> Error {
    Error::Format("truncated message".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(kind: u8, h: u16, w: u16, b: u8) -> Vec<u8> {
        let mut v = b"TC\x01".to_vec();
        v.push(kind);
        v.extend(h.to_be_bytes());
        v.extend(w.to_be_bytes());
        v.push(b);
        v
    }

    #[test]
    fn context_only_layout_and_size() {
        let msg = SemMessage {
            grid_h: 14,
            grid_w: 14,
            index_bits: 13,
            body: MessageBody::ContextOnly { indices: (0..196).map(|i| i * 41 % 8192).collect() },
        };
        let bytes = msg.serialize().unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES + 319);
        assert_eq!(payload_bits(&msg), 2548);
        assert_eq!(&bytes[..HEADER_BYTES], &header(0, 14, 14, 13)[..]);
        assert_eq!(SemMessage::deserialize(&bytes).unwrap(), msg);
    }

    #[test]
    fn packing_is_msb_first() {
        let msg = SemMessage { grid_h: 1, grid_w: 3, index_bits: 3, body: MessageBody::FullLatent { indices: vec![5, 0, 7] } };
        // 101 000 111 + 7 padding bits
        let bytes = msg.serialize().unwrap();
        assert_eq!(&bytes[HEADER_BYTES..], &[0b1010_0011, 0b1000_0000]);
    }

    #[test]
    fn list_positions_layout() {
        let patch = Patch::new(vec![2, 9], vec![1, 3]).unwrap();
        let msg = SemMessage { grid_h: 4, grid_w: 16, index_bits: 2, body: MessageBody::TaskPatch { patch } };
        let bytes = msg.serialize().unwrap();
        // mode 0, count 2, positions 2 and 9 in 6 bits, then indices 01 11
        assert_eq!(&bytes[HEADER_BYTES..], &[0, 0, 2, 0b0000_1000, 0b1001_0000, 0b0111_0000]);
        assert_eq!(payload_bits(&msg), 16 + 12 + 4);
        assert_eq!(SemMessage::deserialize(&bytes).unwrap(), msg);
    }

    #[test]
    fn region_request_is_eight_payload_bytes() {
        let msg = SemMessage {
            grid_h: 16,
            grid_w: 16,
            index_bits: 9,
            body: MessageBody::RegionRequest { region: PixelBox { x0: 1, y0: 2, x1: 300, y1: 4 } },
        };
        let bytes = msg.serialize().unwrap();
        assert_eq!(bytes.len() - HEADER_BYTES, 8);
        assert_eq!(&bytes[HEADER_BYTES..], &[0, 1, 0, 2, 1, 44, 0, 4]);
        assert_eq!(payload_bits(&msg), 64);
        assert_eq!(SemMessage::deserialize(&bytes).unwrap(), msg);
    }

    #[test]
    fn rejects_malformed_input() {
        let good = SemMessage { grid_h: 1, grid_w: 3, index_bits: 3, body: MessageBody::FullLatent { indices: vec![5, 0, 7] } }
            .serialize()
            .unwrap();
        let mut bad_pad = good.clone();
        *bad_pad.last_mut().unwrap() |= 1;
        assert!(SemMessage::deserialize(&bad_pad).is_err());
        assert!(SemMessage::deserialize(&good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(SemMessage::deserialize(&trailing).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(SemMessage::deserialize(&magic).is_err());
        let mut version = good.clone();
        version[2] = 2;
        assert!(SemMessage::deserialize(&version).is_err());
        let mut kind = good;
        kind[3] = 6;
        assert!(SemMessage::deserialize(&kind).is_err());
    }

    #[test]
    fn oversized_grids_and_indices_are_format_errors() {
        let big = SemMessage { grid_h: 70_000, grid_w: 1, index_bits: 1, body: MessageBody::MoreInfoRequest };
        assert!(matches!(big.serialize(), Err(Error::Format(_))));
        let wide = SemMessage { grid_h: 1, grid_w: 1, index_bits: 2, body: MessageBody::FullLatent { indices: vec![4] } };
        assert!(matches!(wide.serialize(), Err(Error::Format(_))));
    }

    #[test]
    fn non_canonical_position_mode_is_rejected() {
        // one selected cell of 16: list (16 + 4 bits) vs bitmap (16 bits) picks bitmap
        let mut bytes = header(3, 4, 4, 1);
        bytes.extend([0, 0, 1, 0b0011_0000, 0b1000_0000]);
        assert!(SemMessage::deserialize(&bytes).is_err());
    }
}
