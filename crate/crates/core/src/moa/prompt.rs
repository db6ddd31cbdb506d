use alloc::string::String;

use super::{AgentConfig, ClarificationQuestion};
use crate::template;

/// One `<label>: <text>` line per question.
pub fn render_question_list(questions: &[ClarificationQuestion]) -> String {
    let mut out = String::new();
    for (i, q) in questions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&q.label);
        out.push_str(": ");
        out.push_str(&q.text);
    }
    out
}

pub fn render_agent_prompt(agent: &AgentConfig, questions: &[ClarificationQuestion], prerequisites: &str) -> String {
    let prerequisites = if prerequisites.trim().is_empty() {
        "(none yet)"
    } else {
        prerequisites.trim_end()
    };
    let list = render_question_list(questions);
    template::fill(
        template::MOA_AGENT,
        &[
            ("process", template::MOA_PROCESS.trim_end()),
            ("persona", agent.persona.trim_end()),
            ("scope_rules", agent.scope_rules.trim_end()),
            ("prerequisites", prerequisites),
            ("questions", &list),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn robot() -> AgentConfig {
        AgentConfig {
            agent_id: "robot".into(),
            persona: "You are a robot expert.".into(),
            scope_rules: "Only answer questions about the robot.".into(),
            chain_rank: 1,
        }
    }

    #[test]
    fn prompt_layout() {
        let qs = vec![
            ClarificationQuestion::new("Q1", "Which gripper?", 1),
            ClarificationQuestion::new("Q2", "How many strawberries?", 1),
        ];
        let p = render_agent_prompt(&robot(), &qs, "");
        assert!(p.starts_with("# Process\n1. Generate three sections"));
        assert!(p.contains("a) Analysis of answerability"));
        assert!(p.contains("Please prefix your answer with a question label."));
        let process_end = p.find("# Role").unwrap();
        let persona = p.find("You are a robot expert.").unwrap();
        let scope = p.find("Only answer questions").unwrap();
        let prereq = p.find("(none yet)").unwrap();
        let list = p.find("# Questions").unwrap();
        assert!(process_end < persona && persona < scope && scope < prereq && prereq < list);
        let section = &p[list..p.find("# Output format").unwrap()];
        assert_eq!(section.matches("Q1").count(), 1);
        assert_eq!(section.matches("Q2").count(), 1);
        assert_eq!(p.matches("Q1").count(), 1);
    }

    #[test]
    fn deterministic() {
        let qs = vec![ClarificationQuestion::new("Q7", "Which cup?", 2)];
        assert_eq!(
            render_agent_prompt(&robot(), &qs, "Q1: x -> y"),
            render_agent_prompt(&robot(), &qs, "Q1: x -> y")
        );
    }
}
