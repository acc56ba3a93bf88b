//! Golden transcript format: one line per final segment,
//! `t0..t1|verbose rendering with every category shown`.

use std::fmt::Write as _;

use crate::cue_model::{render_segment_text, CaptionSegment, RenderOptions};

pub fn transcript_line(segment: &CaptionSegment) -> String {
    format!(
        "{}..{}|{}",
        segment.t_start,
        segment.t_end,
        render_segment_text(segment, &RenderOptions::VERBOSE_ALL)
    )
}

/// Newline-terminated lines for `segments`, in order.
pub fn render_transcript<'a>(segments: impl IntoIterator<Item = &'a CaptionSegment>) -> String {
    let mut out = String::new();
    for segment in segments {
        writeln!(out, "{}", transcript_line(segment)).expect("writing to a String cannot fail");
    }
    out
}

/// Matches `^[0-9]+\.\.[0-9]+\|.*$` without pulling in a regex engine.
pub fn is_transcript_line(line: &str) -> bool {
    let Some((span, _)) = line.split_once('|') else {
        return false;
    };
    let Some((a, b)) = span.split_once("..") else {
        return false;
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit());
    digits(a) && digits(b) && !line.contains('\n')
}
