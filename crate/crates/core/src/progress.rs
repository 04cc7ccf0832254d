//! The PROGRESS self-evaluation wire format: prompt rendering, block parsing,
//! and canonical emission.
//!
//! The block format is a public contract. The marker strings
//! `===PROGRESS===` / `===END_PROGRESS===` and the `<reason>` / `<value>`
//! tags must never change without a major version bump; every rendered
//! prompt carries them byte-for-byte.
//!
//! Parsing is total: any input yields either a [`ProgressAssessment`] or a
//! [`ParseFailure`] describing the first violated rule. When several
//! complete blocks appear in one completion (models often quote the
//! instruction template, which itself contains a well-formed block before
//! producing the real one), the last complete block wins.

use serde::{Deserialize, Serialize};

pub const PROGRESS_START: &str = "===PROGRESS===";
pub const PROGRESS_END: &str = "===END_PROGRESS===";
pub const REASON_OPEN: &str = "<reason>";
pub const REASON_CLOSE: &str = "</reason>";
pub const VALUE_OPEN: &str = "<value>";
pub const VALUE_CLOSE: &str = "</value>";

const VALUE_TRUE: &str = "TRUE";
const VALUE_FALSE: &str = "FALSE";

/// Instruction text for the self-evaluation step. The structural-format
/// section and the trailing block opener are part of the wire contract.
const PROGRESS_PROMPT_TEMPLATE: &str = "\
In this THINK step, I will first summarize what has changed since the previous THINK step,
then analyze whether these changes constitute significant progress toward the final objective.

Summary of new actions and results since the previous THINK step:
-

Impact of these changes on progress toward the objective:
-

Now I will make an explicit binary judgment about progress.

IMPORTANT: In the PROGRESS block below, I MUST strictly follow this structural format:
===PROGRESS===
<reason> one or two sentences explaining whether there is significant progress and why </reason>
<value>TRUE or FALSE only</value>
===END_PROGRESS===

and finish the generation immediately without any further content. Ignore the original requirements for the think tool.

Now I write the actual PROGRESS block following this structural format:
===PROGRESS===
<reason>";

/// A parsed self-evaluation: a short rationale plus the binary progress
/// verdict. `value` is `true` for meaningful progress and `false` for
/// stagnation; there is no third state — malformed model output becomes a
/// [`ParseFailure`], never an assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressAssessment {
    pub rationale: String,
    pub value: bool,
}

impl ProgressAssessment {
    /// Builds an assessment, trimming surrounding whitespace from the
    /// rationale. Fails if nothing remains after trimming.
    pub fn new(rationale: impl Into<String>, value: bool) -> Result<Self, ParseFailure> {
        let rationale = rationale.into().trim().to_string();
        if rationale.is_empty() {
            return Err(ParseFailure {
                kind: ParseFailureKind::EmptyRationale,
                offset: 0,
                excerpt: String::new(),
            });
        }
        Ok(Self { rationale, value })
    }
}

/// Why a completion could not be read as a PROGRESS block. Variants are
/// ordered by priority: when several rules are violated, the earliest
/// applicable kind is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseFailureKind {
    MissingStartMarker,
    MissingEndMarker,
    MissingReasonTag,
    MissingValueTag,
    InvalidValueToken,
    EmptyRationale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub kind: ParseFailureKind,
    /// Character index into the input near the violation. At most the input
    /// length in characters.
    pub offset: usize,
    /// Up to 80 characters of the offending text.
    pub excerpt: String,
}

impl std::fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?} at character {}{}",
            self.kind,
            self.offset,
            if self.excerpt.is_empty() {
                String::new()
            } else {
                format!(": {:?}", self.excerpt)
            }
        )
    }
}

impl std::error::Error for ParseFailure {}

/// Renders the progress-check instruction, prepending the caller's context
/// summary when one is given. The template portion is identical across all
/// calls and ends with the opening `<reason>` of the block the model is
/// expected to complete.
pub fn render_progress_prompt(context_summary: &str) -> String {
    if context_summary.is_empty() {
        PROGRESS_PROMPT_TEMPLATE.to_string()
    } else {
        format!("{context_summary}\n\n{PROGRESS_PROMPT_TEMPLATE}")
    }
}

/// Parses the last complete PROGRESS block out of arbitrary model output.
/// Value tokens must match `TRUE` / `FALSE` exactly (after trimming).
pub fn parse_progress_block(raw: &str) -> Result<ProgressAssessment, ParseFailure> {
    parse_progress_block_with(raw, false)
}

/// Like [`parse_progress_block`], with an opt-in lenient mode that matches
/// value tokens case-insensitively for weaker models.
pub fn parse_progress_block_with(
    raw: &str,
    lenient_values: bool,
) -> Result<ProgressAssessment, ParseFailure> {
    let Some(span) = last_complete_span(raw) else {
        if raw.find(PROGRESS_START).is_none() {
            return Err(failure_at(raw, 0, ParseFailureKind::MissingStartMarker));
        }
        // Start markers exist but none is followed by an end marker.
        let last_start = raw.rfind(PROGRESS_START).unwrap();
        return Err(failure_at(
            raw,
            last_start,
            ParseFailureKind::MissingEndMarker,
        ));
    };

    let body = &raw[span.clone()];
    let base = span.start;

    let Some(reason_open) = body.find(REASON_OPEN) else {
        return Err(failure_at(raw, base, ParseFailureKind::MissingReasonTag));
    };
    let reason_content_start = reason_open + REASON_OPEN.len();
    let Some(reason_close_rel) = body[reason_content_start..].find(REASON_CLOSE) else {
        return Err(failure_at(
            raw,
            base + reason_open,
            ParseFailureKind::MissingReasonTag,
        ));
    };
    let reason_raw = &body[reason_content_start..reason_content_start + reason_close_rel];
    let after_reason = reason_content_start + reason_close_rel + REASON_CLOSE.len();

    let Some(value_open_rel) = body[after_reason..].find(VALUE_OPEN) else {
        return Err(failure_at(
            raw,
            base + after_reason,
            ParseFailureKind::MissingValueTag,
        ));
    };
    let value_content_start = after_reason + value_open_rel + VALUE_OPEN.len();
    let Some(value_close_rel) = body[value_content_start..].find(VALUE_CLOSE) else {
        return Err(failure_at(
            raw,
            base + after_reason + value_open_rel,
            ParseFailureKind::MissingValueTag,
        ));
    };
    let token = body[value_content_start..value_content_start + value_close_rel].trim();

    let value = match token_to_value(token, lenient_values) {
        Some(v) => v,
        None => {
            return Err(failure_at(
                raw,
                base + value_content_start,
                ParseFailureKind::InvalidValueToken,
            ));
        }
    };

    let rationale = reason_raw.trim();
    if rationale.is_empty() {
        return Err(failure_at(
            raw,
            base + reason_content_start,
            ParseFailureKind::EmptyRationale,
        ));
    }

    Ok(ProgressAssessment {
        rationale: rationale.to_string(),
        value,
    })
}

/// Emits the canonical block for an assessment. Parsing the result yields an
/// equal assessment as long as the rationale contains none of the reserved
/// marker strings.
pub fn emit_progress_block(assessment: &ProgressAssessment) -> String {
    let token = if assessment.value {
        VALUE_TRUE
    } else {
        VALUE_FALSE
    };
    format!(
        "{PROGRESS_START}\n{REASON_OPEN} {} {REASON_CLOSE}\n{VALUE_OPEN}{token}{VALUE_CLOSE}\n{PROGRESS_END}",
        assessment.rationale
    )
}

fn token_to_value(token: &str, lenient: bool) -> Option<bool> {
    if lenient {
        if token.eq_ignore_ascii_case(VALUE_TRUE) {
            return Some(true);
        }
        if token.eq_ignore_ascii_case(VALUE_FALSE) {
            return Some(false);
        }
        return None;
    }
    match token {
        VALUE_TRUE => Some(true),
        VALUE_FALSE => Some(false),
        _ => None,
    }
}

/// Byte range of the content of the last complete start..end span, if any.
/// The last start marker that is still followed by an end marker wins; a
/// dangling trailing start marker does not shadow an earlier complete block.
fn last_complete_span(raw: &str) -> Option<std::ops::Range<usize>> {
    let mut search_end = raw.len();
    while let Some(start) = raw[..search_end].rfind(PROGRESS_START) {
        let content_start = start + PROGRESS_START.len();
        if let Some(end_rel) = raw[content_start..].find(PROGRESS_END) {
            return Some(content_start..content_start + end_rel);
        }
        search_end = start;
    }
    None
}

fn failure_at(raw: &str, byte_offset: usize, kind: ParseFailureKind) -> ParseFailure {
    let offset = raw[..byte_offset].chars().count();
    let excerpt: String = raw[byte_offset..].chars().take(80).collect();
    ParseFailure {
        kind,
        offset,
        excerpt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const VALID_BLOCK: &str = "===PROGRESS===\n<reason> found key document </reason>\n<value>TRUE</value>\n===END_PROGRESS===";

    #[test]
    fn renders_markers_verbatim() {
        let prompt = render_progress_prompt("");
        assert!(prompt.contains(PROGRESS_START));
        assert!(prompt.ends_with(REASON_OPEN));
        // The structural-format section spells out the block exactly once.
        let format_section = {
            let from = prompt.find("IMPORTANT:").unwrap();
            let to = prompt.find("and finish the generation").unwrap();
            &prompt[from..to]
        };
        assert_eq!(format_section.matches(REASON_OPEN).count(), 1);
        assert_eq!(format_section.matches(PROGRESS_END).count(), 1);
        assert_eq!(prompt.matches(PROGRESS_END).count(), 1);
    }

    #[test]
    fn renders_summary_before_template() {
        let prompt = render_progress_prompt("step 3 summary");
        assert!(prompt.starts_with("step 3 summary\n\n"));
        assert!(prompt.contains(PROGRESS_START));
        assert!(prompt.ends_with(REASON_OPEN));
        // Same template bytes no matter the summary.
        let bare = render_progress_prompt("");
        assert!(prompt.ends_with(&bare));
    }

    #[test]
    fn parses_canonical_true_block() {
        let parsed = parse_progress_block(VALID_BLOCK).unwrap();
        assert_eq!(parsed.rationale, "found key document");
        assert!(parsed.value);
    }

    #[test]
    fn parses_false_token() {
        let block = VALID_BLOCK.replace("<value>TRUE</value>", "<value>FALSE</value>");
        let parsed = parse_progress_block(&block).unwrap();
        assert!(!parsed.value);
    }

    #[test]
    fn rejects_unknown_value_token() {
        let block = VALID_BLOCK.replace("<value>TRUE</value>", "<value>maybe</value>");
        let failure = parse_progress_block(&block).unwrap_err();
        assert_eq!(failure.kind, ParseFailureKind::InvalidValueToken);
        assert!(failure.excerpt.starts_with("maybe"));
    }

    #[test]
    fn strict_mode_rejects_lowercase_true() {
        let block = VALID_BLOCK.replace("<value>TRUE</value>", "<value>true</value>");
        assert_eq!(
            parse_progress_block(&block).unwrap_err().kind,
            ParseFailureKind::InvalidValueToken
        );
        let parsed = parse_progress_block_with(&block, true).unwrap();
        assert!(parsed.value);
    }

    #[test]
    fn finds_block_inside_surrounding_chatter() {
        let noise: String = "lorem ipsum dolor sit amet ".repeat(40);
        assert!(noise.len() >= 1024);
        let input = format!("{noise}{VALID_BLOCK}{noise}");
        let parsed = parse_progress_block(&input).unwrap();
        assert_eq!(parsed.rationale, "found key document");
        assert!(parsed.value);
    }

    #[test]
    fn last_complete_block_wins() {
        let first = VALID_BLOCK.replace("found key document", "template echo");
        let second = VALID_BLOCK.replace("<value>TRUE</value>", "<value>FALSE</value>");
        let input = format!("{first}\nsome narration\n{second}");
        let parsed = parse_progress_block(&input).unwrap();
        assert!(!parsed.value);
    }

    #[test]
    fn dangling_trailing_start_marker_does_not_hide_a_complete_block() {
        let input = format!("{VALID_BLOCK}\nNow I write it again:\n{PROGRESS_START}\n<reason>");
        let parsed = parse_progress_block(&input).unwrap();
        assert_eq!(parsed.rationale, "found key document");
    }

    #[test]
    fn missing_markers_are_classified_in_order() {
        let no_start = "nothing to see here";
        assert_eq!(
            parse_progress_block(no_start).unwrap_err().kind,
            ParseFailureKind::MissingStartMarker
        );

        let no_end = format!("{PROGRESS_START}\n<reason> hmm </reason>\n<value>TRUE</value>");
        assert_eq!(
            parse_progress_block(&no_end).unwrap_err().kind,
            ParseFailureKind::MissingEndMarker
        );

        let no_reason = format!("{PROGRESS_START}\n<value>TRUE</value>\n{PROGRESS_END}");
        assert_eq!(
            parse_progress_block(&no_reason).unwrap_err().kind,
            ParseFailureKind::MissingReasonTag
        );

        let no_value = format!("{PROGRESS_START}\n<reason> hmm </reason>\n{PROGRESS_END}");
        assert_eq!(
            parse_progress_block(&no_value).unwrap_err().kind,
            ParseFailureKind::MissingValueTag
        );

        // An invalid token outranks the empty rationale that follows it.
        let both = format!("{PROGRESS_START}\n<reason>  </reason>\n<value>eh</value>\n{PROGRESS_END}");
        assert_eq!(
            parse_progress_block(&both).unwrap_err().kind,
            ParseFailureKind::InvalidValueToken
        );

        let empty = format!("{PROGRESS_START}\n<reason>  </reason>\n<value>TRUE</value>\n{PROGRESS_END}");
        assert_eq!(
            parse_progress_block(&empty).unwrap_err().kind,
            ParseFailureKind::EmptyRationale
        );
    }

    #[test]
    fn offsets_stay_within_the_input() {
        let inputs = ["", "x", "===PROGRESS===", VALID_BLOCK];
        for input in inputs {
            if let Err(failure) = parse_progress_block(input) {
                assert!(failure.offset <= input.chars().count());
                assert!(failure.excerpt.chars().count() <= 80);
            }
        }
    }

    #[test]
    fn emit_includes_the_chosen_token() {
        let a = ProgressAssessment::new("stuck on search", false).unwrap();
        let block = emit_progress_block(&a);
        assert!(block.contains("<value>FALSE</value>"));
        assert_eq!(parse_progress_block(&block).unwrap(), a);
    }

    #[test]
    fn round_trips_embedded_newlines() {
        let a = ProgressAssessment::new("first line\nsecond line", true).unwrap();
        assert_eq!(parse_progress_block(&emit_progress_block(&a)).unwrap(), a);
    }

    #[test]
    fn rejects_empty_rationale_at_construction() {
        assert_eq!(
            ProgressAssessment::new("   \n ", true).unwrap_err().kind,
            ParseFailureKind::EmptyRationale
        );
    }

    fn contains_reserved(s: &str) -> bool {
        [
            PROGRESS_START,
            PROGRESS_END,
            REASON_OPEN,
            REASON_CLOSE,
            VALUE_OPEN,
            VALUE_CLOSE,
        ]
        .iter()
        .any(|m| s.contains(m))
    }

    proptest! {
        #[test]
        fn round_trip_identity(raw in "[ -~\\n]{1,200}", value in any::<bool>()) {
            prop_assume!(!contains_reserved(&raw));
            prop_assume!(!raw.trim().is_empty());
            let a = ProgressAssessment::new(raw, value).unwrap();
            prop_assert_eq!(parse_progress_block(&emit_progress_block(&a)).unwrap(), a);
        }

        #[test]
        fn parser_is_total(raw in any::<String>()) {
            let _ = parse_progress_block(&raw);
        }
    }

    #[test]
    fn parser_is_total_on_megabyte_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let bytes: Vec<u8> = (0..1_048_576).map(|_| rng.gen()).collect();
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_progress_block(&text);
        // And with markers scattered through the noise.
        let mut salted_bytes = bytes[..1000].to_vec();
        salted_bytes.extend_from_slice(PROGRESS_START.as_bytes());
        salted_bytes.extend_from_slice(&bytes[1000..2000]);
        salted_bytes.extend_from_slice(PROGRESS_END.as_bytes());
        salted_bytes.extend_from_slice(&bytes[2000..4000]);
        let salted = String::from_utf8_lossy(&salted_bytes);
        let _ = parse_progress_block(&salted);
    }
}
