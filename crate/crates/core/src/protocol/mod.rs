//! Wire format, the simulated lossless channel and the transmitter and
//! receiver sessions.

mod channel;
mod message;
mod session;

pub use channel::{Channel, Direction, Transcript, TranscriptFrame};
pub use message::{payload_bits, MessageBody, MessageType, PixelBox, SemMessage, HEADER_BYTES, VERSION};
pub use session::{region_cells, region_request_round, GateOutcome, Receiver, ReceiverConfig, Transmitter};
