//! Fan-out of caption emissions to display clients: the wire protocol, the
//! per-session outbound queue and the session hub.

pub mod hub;
pub mod protocol;
pub mod queue;

pub use hub::{parse_resume_token, resume_token, ClientSession, Drain, Handle, Hub, Link, SNAPSHOT_WINDOW};
pub use protocol::{
    decode_client, decode_server, encode_client, AnnotationMsg, ClientMessage, ClientView, ProtocolError, SegmentMsg,
    ServerMessage, PROTOCOL_VERSION,
};
pub use queue::{OutboundQueue, PushOutcome, QUEUE_CAPACITY};
