use crate::cue_model::{plain_char_count, TranscriptToken};

use super::config::FusionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentDecision {
    Append,
    CloseThenOpen,
}

pub fn ends_sentence(text: &str) -> bool {
    text.ends_with(['.', '?', '!'])
}

/// Whether the last token of an open segment closes it regardless of what
/// comes next. Only final tokens can end a sentence; a partial may still be
/// revised.
pub fn closes_after(last: &TranscriptToken) -> bool {
    last.is_final() && ends_sentence(&last.text)
}

pub fn gap_ms(last: &TranscriptToken, incoming: &TranscriptToken) -> i64 {
    incoming.t_start.0 as i64 - last.t_end.0 as i64
}

/// Decides whether `incoming` joins the open segment.
///
/// A pause of at least `gap_ms` or a sentence-final last token always closes.
/// Length limits (`max_tokens`, `max_chars`) only close for a final
/// incoming token; partials are allowed to overrun them.
pub fn segment_tokens(open_tokens: &[TranscriptToken], incoming: &TranscriptToken, config: &FusionConfig) -> SegmentDecision {
    let Some(last) = open_tokens.last() else {
        return SegmentDecision::Append;
    };
    if gap_ms(last, incoming) >= config.gap_ms as i64 || closes_after(last) {
        return SegmentDecision::CloseThenOpen;
    }
    if incoming.is_final() {
        let tokens = open_tokens.len() + 1;
        let chars = plain_char_count(open_tokens) + 1 + incoming.text.chars().count();
        if tokens > config.max_tokens || chars > config.max_chars {
            return SegmentDecision::CloseThenOpen;
        }
    }
    SegmentDecision::Append
}
