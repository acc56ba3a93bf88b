//! Event intake: the NDJSON codec, per-source ordering, replay, the prosody
//! heuristic and the external recognizer contract.

pub mod asr_adapter;
pub mod codec;
pub mod liveness;
pub mod order;
pub mod prosody;
pub mod replay;

pub use codec::{decode_event, encode_event, peek_source, IngestError, IngestEvent, Payload, Source, WatermarkBeat};
pub use order::{check_stream_order, OrderVerdict, RejectReason, SourceState};
pub use replay::{Clock, ManualClock, Replay, ReplayError, ReplayItem, SystemClock};
