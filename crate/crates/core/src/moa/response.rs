//! Three-section agent replies: (a) analysis of answerability, (b) labeled
//! answers, (c) questions not answered.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AgentVerdict, ClarificationQuestion, MoaError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "text", rename_all = "snake_case")]
pub enum Outcome {
    Answered(String),
    /// Carries the question text exactly as it was asked.
    Unanswered(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledVerdict {
    pub label: String,
    pub analysis: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Analysis,
    Answers,
    Unanswered,
}

const ANALYSIS_HEADING: &str = "a) Analysis of answerability";
const ANSWER_HEADING: &str = "b) Answer";
const UNANSWERED_HEADING: &str = "c) Output of questions not answered";

fn strip_decoration(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['#', '*', '-', '•', '>', ' '])
        .trim_end_matches(['*', ':', ' '])
        .trim()
}

fn heading(line: &str) -> Option<Section> {
    let s = strip_decoration(line);
    if s.is_empty() || label_prefix(line).is_some() {
        return None;
    }
    let lower = s.to_lowercase();
    let marker = |c: char| {
        let mut it = lower.chars();
        let first = it.next();
        let (letter, next) = if first == Some('(') {
            (it.next(), it.next())
        } else {
            (first, it.next())
        };
        letter == Some(c) && matches!(next, Some(')') | Some('.'))
    };

    if marker('a') || lower.starts_with("analysis of answerability") {
        Some(Section::Analysis)
    } else if marker('c')
        || lower.starts_with("output of questions not answered")
        || lower.starts_with("questions not answered")
        || lower.starts_with("unanswered questions")
    {
        Some(Section::Unanswered)
    } else if marker('b') || lower == "answer" || lower == "answers" || lower.starts_with("actual responses") {
        Some(Section::Answers)
    } else {
        None
    }
}

/// Splits `Q<n><sep> rest` (optionally bulleted, bracketed or bolded) into
/// the normalized label and the remaining text.
fn label_prefix(line: &str) -> Option<(String, &str)> {
    let s = line.trim_start().trim_start_matches(['-', '*', '•', ' ', '[', '(']);
    let mut chars = s.char_indices();
    match chars.next() {
        Some((_, 'Q')) | Some((_, 'q')) => {}
        _ => return None,
    }
    let digits_end = s[1..]
        .char_indices()
        .find(|(_, c)| !c.is_ascii_digit())
        .map(|(i, _)| i + 1)
        .unwrap_or(s.len());
    if digits_end == 1 {
        return None;
    }
    let label = alloc::format!("Q{}", &s[1..digits_end]);
    let rest = s[digits_end..].trim_start_matches([']', ')', '*']);
    let rest = match rest.chars().next() {
        None => "",
        Some(':') | Some('.') | Some('-') | Some(')') => &rest[1..],
        Some(c) if c.is_whitespace() => rest,
        Some(_) => return None,
    };
    Some((label, rest.trim_start_matches('*').trim()))
}

/// Entries of one section: label and its (possibly multi-line) text.
type Entries = Vec<(String, String)>;

fn split_sections(raw: &str) -> Option<[Entries; 3]> {
    let mut sections: [Entries; 3] = Default::default();
    let mut current: Option<Section> = None;
    let mut seen_heading = false;

    for line in raw.lines() {
        if let Some(sec) = heading(line) {
            current = Some(sec);
            seen_heading = true;
            continue;
        }
        let Some(sec) = current else { continue };
        let bucket = &mut sections[sec as usize];
        if let Some((label, rest)) = label_prefix(line) {
            bucket.push((label, rest.to_string()));
        } else if let Some((_, text)) = bucket.last_mut() {
            let cont = line.trim();
            if !cont.is_empty() {
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(cont);
            }
        }
    }
    seen_heading.then_some(sections)
}

/// Parses an agent reply against the questions it was asked.
///
/// A label answered in (b) is Answered even if it also appears in (c). A
/// label missing from both is Unanswered. Unanswered outcomes always carry
/// the original question text, not the agent's copy of it.
pub fn parse_agent_response(
    agent_id: &str,
    raw: &str,
    expected: &[ClarificationQuestion],
) -> Result<AgentVerdict, MoaError> {
    let [analysis, answers, _unanswered] = split_sections(raw).ok_or(MoaError::UnparseableResponse)?;

    let per_question = expected
        .iter()
        .map(|q| {
            let analysis = analysis
                .iter()
                .find(|(l, _)| *l == q.label)
                .map(|(_, t)| t.clone())
                .unwrap_or_default();
            let answer = answers.iter().find(|(l, t)| *l == q.label && !t.trim().is_empty());
            let outcome = match answer {
                Some((_, text)) => Outcome::Answered(text.clone()),
                None => Outcome::Unanswered(q.text.clone()),
            };
            LabeledVerdict {
                label: q.label.clone(),
                analysis,
                outcome,
            }
        })
        .collect();

    let discarded = answers
        .into_iter()
        .filter(|(l, _)| !expected.iter().any(|q| q.label == *l))
        .collect();

    Ok(AgentVerdict {
        agent_id: agent_id.to_string(),
        per_question,
        discarded,
    })
}

/// Writes a verdict in the three-section layout that
/// [`parse_agent_response`] reads. Used by scripted agents.
pub fn render_agent_response(verdict: &AgentVerdict) -> String {
    let mut out = String::new();
    out.push_str(ANALYSIS_HEADING);
    out.push('\n');
    for v in &verdict.per_question {
        push_entry(&mut out, &v.label, &v.analysis);
    }
    out.push('\n');
    out.push_str(ANSWER_HEADING);
    out.push('\n');
    for v in &verdict.per_question {
        if let Outcome::Answered(text) = &v.outcome {
            push_entry(&mut out, &v.label, text);
        }
    }
    for (label, text) in &verdict.discarded {
        push_entry(&mut out, label, text);
    }
    out.push('\n');
    out.push_str(UNANSWERED_HEADING);
    out.push('\n');
    for v in &verdict.per_question {
        if let Outcome::Unanswered(text) = &v.outcome {
            push_entry(&mut out, &v.label, text);
        }
    }
    out
}

fn push_entry(out: &mut String, label: &str, text: &str) {
    out.push_str(label);
    out.push_str(": ");
    out.push_str(text);
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn qs() -> Vec<ClarificationQuestion> {
        vec![
            ClarificationQuestion::new("Q1", "Can the robot open the lid with one arm?", 1),
            ClarificationQuestion::new("Q2", "How many strawberries do you want?", 1),
        ]
    }

    #[test]
    fn well_formed_reply() {
        let raw = "\
a) Analysis of answerability
Q1: Answerable from the robot specification.
Q2: Depends on user preference.

b) Answer
Q1: Yes, the right arm can open the lid alone.

c) Output of questions not answered
Q2: how many strawberries?
";
        let v = parse_agent_response("robot", raw, &qs()).unwrap();
        assert_eq!(
            v.per_question[0].outcome,
            Outcome::Answered("Yes, the right arm can open the lid alone.".into())
        );
        assert_eq!(v.per_question[0].analysis, "Answerable from the robot specification.");
        // verbatim from the question, not the agent's lowercase copy
        assert_eq!(
            v.per_question[1].outcome,
            Outcome::Unanswered("How many strawberries do you want?".into())
        );
    }

    #[test]
    fn markdown_variants() {
        let raw = "\
## (a) Analysis of answerability:
- **Q1**: fine
### **b) Answer**
- [Q1] Yes.
  It has two arms.
**c) Output of questions not answered**
";
        let v = parse_agent_response("robot", raw, &qs()).unwrap();
        assert_eq!(
            v.per_question[0].outcome,
            Outcome::Answered("Yes.\nIt has two arms.".into())
        );
        assert_eq!(v.per_question[0].analysis, "fine");
        assert!(matches!(v.per_question[1].outcome, Outcome::Unanswered(_)));
    }

    #[test]
    fn extraneous_answers_are_discarded() {
        let raw = "b) Answer\nQ9: something\nQ1: yes\n";
        let v = parse_agent_response("robot", raw, &qs()).unwrap();
        assert_eq!(v.discarded, vec![("Q9".to_string(), "something".to_string())]);
        assert_eq!(v.per_question.len(), 2);
        assert!(v.get("Q9").is_none());
    }

    #[test]
    fn empty_answer_section_leaves_everything_unanswered() {
        let raw =
            "a) Analysis of answerability\nQ1: no\nQ2: no\nb) Answer\nc) Output of questions not answered\nQ1: x\n";
        let v = parse_agent_response("robot", raw, &qs()).unwrap();
        assert!(v
            .per_question
            .iter()
            .all(|p| matches!(p.outcome, Outcome::Unanswered(_))));
    }

    #[test]
    fn answered_wins_over_unanswered() {
        let raw = "b) Answer\nQ2: three\nc) Output of questions not answered\nQ2: How many?\n";
        let v = parse_agent_response("robot", raw, &qs()).unwrap();
        assert_eq!(v.per_question[1].outcome, Outcome::Answered("three".into()));
    }

    #[test]
    fn no_structure_is_an_error() {
        assert_eq!(
            parse_agent_response("robot", "I cannot help with that.", &qs()),
            Err(MoaError::UnparseableResponse)
        );
        assert_eq!(
            parse_agent_response("robot", "", &qs()),
            Err(MoaError::UnparseableResponse)
        );
    }

    #[test]
    fn render_then_parse() {
        let v = AgentVerdict {
            agent_id: "robot".into(),
            per_question: vec![
                LabeledVerdict {
                    label: "Q1".into(),
                    analysis: "answerable".into(),
                    outcome: Outcome::Answered("yes".into()),
                },
                LabeledVerdict {
                    label: "Q2".into(),
                    analysis: "preference".into(),
                    outcome: Outcome::Unanswered("How many strawberries do you want?".into()),
                },
            ],
            discarded: vec![("Q5".into(), "stray".into())],
        };
        let raw = render_agent_response(&v);
        assert_eq!(parse_agent_response("robot", &raw, &qs()).unwrap(), v);
    }

    #[test]
    fn label_prefix_forms() {
        assert_eq!(label_prefix("Q12: hi"), Some(("Q12".into(), "hi")));
        assert_eq!(label_prefix("- q3. hi"), Some(("Q3".into(), "hi")));
        assert_eq!(label_prefix("**Q4**: hi"), Some(("Q4".into(), "hi")));
        assert_eq!(label_prefix("Q4) hi"), Some(("Q4".into(), "hi")));
        assert_eq!(label_prefix("Question: hi"), None);
        assert_eq!(label_prefix("Q: hi"), None);
        assert_eq!(label_prefix("Q1x hi"), None);
    }
}
