//! Versioned prompt assets and `{key}` substitution.

use alloc::string::String;

pub const MOA_PROCESS: &str = include_str!("../assets/prompts/moa_process.txt");
pub const MOA_AGENT: &str = include_str!("../assets/prompts/moa_agent.v1.txt");
pub const DRAFT: &str = include_str!("../assets/prompts/draft.v1.txt");
pub const UNCERTAINTY: &str = include_str!("../assets/prompts/uncertainty.v1.txt");
pub const REPROMPT: &str = include_str!("../assets/prompts/reprompt.v1.txt");

/// Identifies the prompt asset set; recorded with each planning session.
pub const PROMPT_VERSION: &str = "v1";

/// Replaces each `{key}` with its value in one left-to-right pass, so text
/// inside substituted values is never expanded. Unknown keys stay literal.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_once() {
        assert_eq!(fill("a {x} b {y}", &[("x", "{y}"), ("y", "2")]), "a {y} b 2");
        assert_eq!(fill("{missing} {", &[]), "{missing} {");
    }

    #[test]
    fn assets_carry_their_placeholders() {
        for key in [
            "{process}",
            "{persona}",
            "{scope_rules}",
            "{prerequisites}",
            "{questions}",
        ] {
            assert!(MOA_AGENT.contains(key), "{key}");
        }
        assert!(DRAFT.contains("{instruction}"));
        assert!(UNCERTAINTY.contains("{tree}"));
        assert!(MOA_PROCESS.contains("Analysis of answerability"));
    }
}
