//! Pulling usable structure out of free-form model replies.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// The XML document inside a reply: the `<Root>…</Root>` span if present,
/// else the body of the first fenced block, else the whole reply.
pub fn extract_xml(reply: &str) -> &str {
    if let (Some(start), Some(end)) = (reply.find("<Root"), reply.rfind("</Root>")) {
        if start < end {
            return &reply[start..end + "</Root>".len()];
        }
    }
    if let Some(open) = reply.find("```") {
        let body = &reply[open + 3..];
        let body = body.split_once('\n').map_or(body, |(_, rest)| rest);
        if let Some(close) = body.find("```") {
            return body[..close].trim();
        }
    }
    reply.trim()
}

fn question_line(line: &str) -> Option<&str> {
    let t = line.trim();
    let rest = if let Some(r) = t
        .strip_prefix("- ")
        .or_else(|| t.strip_prefix("* "))
        .or_else(|| t.strip_prefix("• "))
    {
        r
    } else {
        let digits = t.chars().take_while(char::is_ascii_digit).count();
        let labeled = t.starts_with(['Q', 'q']) && t[1..].starts_with(|c: char| c.is_ascii_digit());
        let skip = if labeled {
            1 + t[1..].chars().take_while(char::is_ascii_digit).count()
        } else if digits > 0 {
            digits
        } else {
            return None;
        };
        let after = &t[skip..];
        after.strip_prefix(['.', ')', ':'])?
    };
    let rest = rest.trim();
    (!rest.is_empty()).then_some(rest)
}

fn says_none(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric()).any(|tok| tok == "NONE")
}

/// Clarification questions from an uncertainty-analysis reply.
///
/// Looks after a `Questions:` marker when there is one. An explicit `NONE`
/// means no questions; a reply with neither questions nor `NONE` is an error.
pub fn parse_questions(reply: &str) -> Result<Vec<String>, String> {
    let lower = reply.to_lowercase();
    let body = match lower.rfind("questions:") {
        Some(i) => &reply[i + "questions:".len()..],
        None => reply,
    };
    let questions: Vec<String> = body.lines().filter_map(question_line).map(str::to_string).collect();
    if !questions.is_empty() {
        return Ok(questions);
    }
    if says_none(body) {
        return Ok(Vec::new());
    }
    Err("no clarification questions and no NONE marker found".to_string())
}
