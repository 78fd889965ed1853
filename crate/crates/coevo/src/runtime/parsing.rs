//! Text protocols agents speak: tool-call tags, delivery tags, final answers.

use serde::{Deserialize, Serialize};

const TOOL_OPEN: &str = "<tool_call>";
const TOOL_CLOSE: &str = "</tool_call>";
const DELIVERY_OPEN: &str = "<delivery>";
const DELIVERY_CLOSE: &str = "</delivery>";
const SOLUTION_OPEN: &str = "<solution>";
const SOLUTION_CLOSE: &str = "</solution>";
const BOXED_OPEN: &str = "\\boxed{";

/// A well-formed tool invocation parsed from agent output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedToolCall {
    pub name: String,
    pub arguments: serde_json::Map<String, serde_json::Value>,
}

/// One `<tool_call>` span: parsed, or flagged with the reason it is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ToolCallParse {
    Call(ParsedToolCall),
    Malformed { raw: String, reason: String },
}

/// Parse every `<tool_call>…</tool_call>` span, in order of appearance.
/// Malformed spans are returned as flagged entries, never dropped.
pub fn parse_tool_calls(text: &str) -> Vec<ToolCallParse> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(TOOL_OPEN) {
        let after_open = &rest[open + TOOL_OPEN.len()..];
        let Some(close) = after_open.find(TOOL_CLOSE) else {
            out.push(ToolCallParse::Malformed {
                raw: after_open.to_string(),
                reason: "unterminated tool_call tag".to_string(),
            });
            break;
        };
        let raw = &after_open[..close];
        out.push(parse_tool_call_body(raw));
        rest = &after_open[close + TOOL_CLOSE.len()..];
    }
    out
}

fn parse_tool_call_body(raw: &str) -> ToolCallParse {
    let malformed = |reason: String| ToolCallParse::Malformed { raw: raw.to_string(), reason };
    let value: serde_json::Value = match serde_json::from_str(raw.trim()) {
        Ok(v) => v,
        Err(e) => return malformed(format!("not a JSON document: {e}")),
    };
    let serde_json::Value::Object(mut obj) = value else {
        return malformed("tool call must be a JSON object".to_string());
    };
    let name = match obj.remove("name") {
        Some(serde_json::Value::String(s)) => s,
        Some(_) => return malformed("'name' must be a string".to_string()),
        None => return malformed("missing 'name' field".to_string()),
    };
    let arguments = match obj.remove("arguments") {
        None => serde_json::Map::new(),
        Some(serde_json::Value::Object(map)) => map,
        Some(_) => return malformed("'arguments' must be an object".to_string()),
    };
    ToolCallParse::Call(ParsedToolCall { name, arguments })
}

/// Content of the first well-formed `<delivery>…</delivery>` span. Only this
/// content is forwarded as the inter-agent message.
pub fn extract_delivery(text: &str) -> Option<&str> {
    let open = text.find(DELIVERY_OPEN)?;
    let after = &text[open + DELIVERY_OPEN.len()..];
    let close = after.find(DELIVERY_CLOSE)?;
    Some(&after[..close])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Boxed,
    SolutionBlock,
}

/// A final answer recovered from terminal agent output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub kind: AnswerKind,
    pub payload: String,
}

/// Extract the final answer from terminal output.
///
/// Boxed extraction takes the last `\boxed{…}` occurrence with balanced
/// braces; solution extraction takes the last `<solution>…</solution>` span.
/// When both are present, the one appearing later in the text wins. Payloads
/// are whitespace-trimmed and must be non-empty.
pub fn extract_final_answer(text: &str) -> Option<Answer> {
    let boxed = last_boxed(text);
    let solution = last_solution(text);
    match (boxed, solution) {
        (Some((b_at, b)), Some((s_at, s))) => Some(if b_at > s_at { b } else { s }),
        (Some((_, b)), None) => Some(b),
        (None, Some((_, s))) => Some(s),
        (None, None) => None,
    }
}

fn last_boxed(text: &str) -> Option<(usize, Answer)> {
    let positions: Vec<usize> = text.match_indices(BOXED_OPEN).map(|(at, _)| at).collect();
    for &at in positions.iter().rev() {
        let body_start = at + BOXED_OPEN.len();
        if let Some(end) = balance_braces(&text[body_start..]) {
            let payload = text[body_start..body_start + end].trim();
            if !payload.is_empty() {
                return Some((at, Answer { kind: AnswerKind::Boxed, payload: payload.to_string() }));
            }
        }
    }
    None
}

/// Byte offset of the `}` that closes an already-open brace, if balanced.
fn balance_braces(text: &str) -> Option<usize> {
    let mut depth = 1usize;
    for (i, c) in text.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn last_solution(text: &str) -> Option<(usize, Answer)> {
    let mut best = None;
    let mut rest = text;
    let mut offset = 0usize;
    while let Some(open) = rest.find(SOLUTION_OPEN) {
        let body_start = open + SOLUTION_OPEN.len();
        let Some(close) = rest[body_start..].find(SOLUTION_CLOSE) else { break };
        let payload = rest[body_start..body_start + close].trim();
        if !payload.is_empty() {
            best = Some((
                offset + open,
                Answer { kind: AnswerKind::SolutionBlock, payload: payload.to_string() },
            ));
        }
        let advance = body_start + close + SOLUTION_CLOSE.len();
        offset += advance;
        rest = &rest[advance..];
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tool_call_parses_name_and_arguments() {
        let text = r#"Let me test. <tool_call>{"name": "execute_code", "arguments": {"code": "print(1)"}}</tool_call> done."#;
        let calls = parse_tool_calls(text);
        assert_eq!(calls.len(), 1);
        match &calls[0] {
            ToolCallParse::Call(c) => {
                assert_eq!(c.name, "execute_code");
                assert_eq!(c.arguments["code"], "print(1)");
            }
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn text_without_tags_yields_no_calls() {
        assert!(parse_tool_calls("no tools here").is_empty());
    }

    #[test]
    fn malformed_body_is_flagged_not_dropped() {
        let calls = parse_tool_calls("<tool_call>not-a-document</tool_call>");
        assert_eq!(calls.len(), 1);
        assert!(matches!(&calls[0], ToolCallParse::Malformed { reason, .. } if reason.contains("JSON")));
    }

    #[test]
    fn calls_come_back_in_order_with_malformed_interleaved() {
        let text = concat!(
            r#"<tool_call>{"name": "a"}</tool_call>"#,
            r#"<tool_call>{"name": 3}</tool_call>"#,
            r#"<tool_call>{"name": "b", "arguments": {}}</tool_call>"#,
        );
        let calls = parse_tool_calls(text);
        assert_eq!(calls.len(), 3);
        assert!(matches!(&calls[0], ToolCallParse::Call(c) if c.name == "a" && c.arguments.is_empty()));
        assert!(matches!(&calls[1], ToolCallParse::Malformed { .. }));
        assert!(matches!(&calls[2], ToolCallParse::Call(c) if c.name == "b"));
    }

    #[test]
    fn unterminated_tool_call_is_flagged() {
        let calls = parse_tool_calls(r#"<tool_call>{"name": "a"}"#);
        assert_eq!(calls.len(), 1);
        assert!(matches!(&calls[0], ToolCallParse::Malformed { reason, .. } if reason.contains("unterminated")));
    }

    #[test]
    fn first_delivery_span_wins() {
        assert_eq!(extract_delivery("<delivery>a</delivery><delivery>b</delivery>"), Some("a"));
        assert_eq!(extract_delivery("pre <delivery>answer draft</delivery> post"), Some("answer draft"));
        assert_eq!(extract_delivery("no tags"), None);
        assert_eq!(extract_delivery("<delivery>unclosed"), None);
    }

    #[test]
    fn boxed_answer_is_extracted() {
        let answer = extract_final_answer("The answer is \\boxed{116}").unwrap();
        assert_eq!(answer, Answer { kind: AnswerKind::Boxed, payload: "116".into() });
    }

    #[test]
    fn last_balanced_boxed_wins() {
        let answer = extract_final_answer("\\boxed{1} then \\boxed{\\frac{192}{5}}").unwrap();
        assert_eq!(answer.payload, "\\frac{192}{5}");
    }

    #[test]
    fn unbalanced_trailing_boxed_falls_back_to_earlier_one() {
        let answer = extract_final_answer("\\boxed{42} and \\boxed{oops").unwrap();
        assert_eq!(answer.payload, "42");
    }

    #[test]
    fn empty_boxed_is_skipped() {
        assert_eq!(extract_final_answer("\\boxed{}"), None);
        assert_eq!(extract_final_answer("\\boxed{7}\\boxed{}").unwrap().payload, "7");
    }

    #[test]
    fn solution_block_is_extracted() {
        let answer = extract_final_answer("<solution>def solve():\n    pass</solution>").unwrap();
        assert_eq!(answer.kind, AnswerKind::SolutionBlock);
        assert_eq!(answer.payload, "def solve():\n    pass");
    }

    #[test]
    fn later_marker_wins_when_both_present() {
        let a = extract_final_answer("\\boxed{1} ... <solution>code</solution>").unwrap();
        assert_eq!(a.kind, AnswerKind::SolutionBlock);
        let b = extract_final_answer("<solution>code</solution> ... \\boxed{1}").unwrap();
        assert_eq!(b.kind, AnswerKind::Boxed);
    }

    #[test]
    fn prose_without_markers_has_no_answer() {
        assert_eq!(extract_final_answer("I think the answer is 42."), None);
    }
}
