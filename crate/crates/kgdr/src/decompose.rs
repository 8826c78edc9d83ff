//! Complex-question decomposition: prompt construction, strict parsing of
//! the model's JSON-array output, and a total fallback to the undecomposed
//! question.

use serde::{Deserialize, Serialize};

use crate::llm::{ChatClient, LlmError};

/// Ordered list of atomic subquestions for one complex question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionPlan {
    pub original_question: String,
    pub subquestions: Vec<String>,
    pub used_fallback: bool,
}

impl DecompositionPlan {
    pub fn len(&self) -> usize {
        self.subquestions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subquestions.is_empty()
    }
}

const INSTRUCTIONS: &str = "\
You are an expert at decomposing complex questions into smaller, atomic subquestions.
If the question can't be decomposed into smaller questions, leave it as it is.
Decompose the following question into a list of simpler subquestions that:

- Are atomic (addressing only one piece of information at a time)
- Are logically ordered
- Have access to answers from previous subquestions
- Cover all necessary aspects of the original question
- Can be answered with a single entity
- Lead to the answer in the last subquestion

You must strictly format your answer as a valid JSON array; do NOT include explanations or reasoning.

Examples:

Input: What is the capital of the country that exports the most honey ?
Output: [\"Which country exports the most honey ?\", \"What is the capital of that country ?\"]

Input: What sports team does Michael's best friend support ?
Output: [\"Who is Michael's best friend ?\", \"What sports team does he support ?\"]

Input: What fruits grow in the hottest countries from the largest continent in the world ?
Output: [\"What is the largest continent in the world ?\", \"What countries are hottest on this continent ?\", \"What fruits grow in those countries ?\"]

Input: How old is Obama ?
Output: [\"How old is Obama ?\"]

Now decompose the following question in JSON format.

Complex Question:
";

/// Builds the decomposition prompt: instruction block, few-shot examples,
/// then the question itself at the end.
pub fn build_decomposition_prompt(question: &str) -> String {
    format!("{INSTRUCTIONS}\"{question}\"")
}

/// Extracts an ordered plan from raw model output.
///
/// Scans for the first JSON array of one or more non-empty strings, looking
/// past code fences, reasoning wrappers, and leading prose. If no such
/// array exists anywhere in the output, falls back to a single-subquestion
/// plan containing the original question. Never fails and never returns an
/// empty plan.
pub fn parse_decomposition(raw_output: &str, original: &str) -> DecompositionPlan {
    for (start, _) in raw_output.match_indices('[') {
        let mut stream =
            serde_json::Deserializer::from_str(&raw_output[start..]).into_iter::<serde_json::Value>();
        let Some(Ok(serde_json::Value::Array(items))) = stream.next() else {
            continue;
        };
        if items.is_empty() {
            continue;
        }
        let mut subquestions = Vec::with_capacity(items.len());
        let mut ok = true;
        for item in &items {
            match item.as_str().map(str::trim) {
                Some(s) if !s.is_empty() => subquestions.push(s.to_string()),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return DecompositionPlan {
                original_question: original.to_string(),
                subquestions,
                used_fallback: false,
            };
        }
    }
    DecompositionPlan {
        original_question: original.to_string(),
        subquestions: vec![original.to_string()],
        used_fallback: true,
    }
}

/// Decomposes a question with exactly one chat call.
///
/// Parse failures are not errors (the fallback plan is returned); only
/// transport failures propagate. `max_subquestions`, when set, truncates
/// the plan from the tail.
pub fn decompose(
    question: &str,
    client: &dyn ChatClient,
    max_subquestions: Option<usize>,
) -> Result<DecompositionPlan, LlmError> {
    decompose_with_raw(question, client, max_subquestions).map(|(plan, _)| plan)
}

/// Like [`decompose`] but also returns the raw model output, for prompt
/// logging.
pub fn decompose_with_raw(
    question: &str,
    client: &dyn ChatClient,
    max_subquestions: Option<usize>,
) -> Result<(DecompositionPlan, String), LlmError> {
    if question.trim().is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    let prompt = build_decomposition_prompt(question);
    let raw = client.complete(&prompt)?;
    let mut plan = parse_decomposition(&raw, question);
    if let Some(cap) = max_subquestions {
        if cap >= 1 && plan.subquestions.len() > cap {
            plan.subquestions.truncate(cap);
        }
    }
    Ok((plan, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptRule, ScriptedMock};
    use proptest::prelude::*;

    #[test]
    fn prompt_contains_template_and_question_at_end() {
        let prompt = build_decomposition_prompt("Where was the author of '1984' born?");
        assert!(prompt.contains("atomic"));
        assert!(prompt.ends_with("\"Where was the author of '1984' born?\""));
    }

    #[test]
    fn prompt_is_deterministic_golden() {
        let a = build_decomposition_prompt("How old is Obama ?");
        let b = build_decomposition_prompt("How old is Obama ?");
        assert_eq!(a, b);
        assert!(a.contains("strictly format your answer as a valid JSON array"));
    }

    #[test]
    fn prompt_has_exactly_four_few_shot_pairs() {
        let prompt = build_decomposition_prompt("anything");
        assert_eq!(prompt.matches("Input:").count(), 4);
        assert_eq!(prompt.matches("Output:").count(), 4);
        // The no-decomposition example must be among them.
        assert!(prompt.contains("Input: How old is Obama ?\nOutput: [\"How old is Obama ?\"]"));
    }

    #[test]
    fn parses_plain_array() {
        let raw = r#"["Who is the author of the novel '1984'?", "Where was this author born?"]"#;
        let plan = parse_decomposition(raw, "orig");
        assert!(!plan.used_fallback);
        assert_eq!(
            plan.subquestions,
            vec!["Who is the author of the novel '1984'?", "Where was this author born?"]
        );
    }

    #[test]
    fn parses_single_element_array() {
        let plan = parse_decomposition(r#"["How old is Obama ?"]"#, "How old is Obama ?");
        assert!(!plan.used_fallback);
        assert_eq!(plan.subquestions, vec!["How old is Obama ?"]);
    }

    #[test]
    fn garbage_falls_back_to_original() {
        let plan = parse_decomposition("garbage text", "the original?");
        assert!(plan.used_fallback);
        assert_eq!(plan.subquestions, vec!["the original?"]);
    }

    #[test]
    fn tolerates_code_fences_and_prose() {
        let raw = "Sure! Here is the decomposition:\n```json\n[\"first ?\", \"second ?\"]\n```\n";
        let plan = parse_decomposition(raw, "orig");
        assert!(!plan.used_fallback);
        assert_eq!(plan.subquestions, vec!["first ?", "second ?"]);
    }

    #[test]
    fn skips_non_string_arrays_before_a_valid_one() {
        let raw = "<think>[1, 2, 3] hmm [not json</think>\n[\"only q ?\"]";
        let plan = parse_decomposition(raw, "orig");
        assert!(!plan.used_fallback);
        assert_eq!(plan.subquestions, vec!["only q ?"]);
    }

    #[test]
    fn empty_or_blank_arrays_fall_back() {
        assert!(parse_decomposition("[]", "o").used_fallback);
        assert!(parse_decomposition("[\"\", \"x\"]", "o").used_fallback);
        assert!(parse_decomposition("[\"  \"]", "o").used_fallback);
    }

    #[test]
    fn decompose_issues_exactly_one_call() {
        let mock = ScriptedMock::new(
            vec![ScriptRule {
                contains: "1984".into(),
                response: r#"["Who is the author of the novel '1984'?", "Where was this author born?"]"#
                    .into(),
            }],
            "no rule",
        );
        let plan =
            decompose("Which city is the birthplace of the author of the novel '1984'?", &mock, None)
                .unwrap();
        assert_eq!(plan.len(), 2);
        assert!(!plan.used_fallback);
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn decompose_falls_back_on_malformed_output_with_one_call() {
        let mock = ScriptedMock::new(vec![], "not json at all");
        let plan = decompose("a complex question?", &mock, None).unwrap();
        assert!(plan.used_fallback);
        assert_eq!(plan.subquestions, vec!["a complex question?"]);
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn decompose_rejects_empty_question() {
        let mock = ScriptedMock::new(vec![], "x");
        assert!(matches!(decompose("  ", &mock, None), Err(LlmError::EmptyPrompt)));
    }

    #[test]
    fn max_subquestions_truncates_the_tail() {
        let mock = ScriptedMock::new(vec![], r#"["a ?", "b ?", "c ?"]"#);
        let plan = decompose("q?", &mock, Some(2)).unwrap();
        assert_eq!(plan.subquestions, vec!["a ?", "b ?"]);
    }

    proptest! {
        #[test]
        fn parse_is_total_and_never_empty(raw in ".*", original in ".+") {
            let plan = parse_decomposition(&raw, &original);
            prop_assert!(!plan.subquestions.is_empty());
            prop_assert!(plan.subquestions.iter().all(|s| !s.is_empty()) || plan.used_fallback);
            if plan.used_fallback {
                prop_assert_eq!(plan.subquestions, vec![original]);
            }
        }

        #[test]
        fn parse_recovers_well_formed_plans(
            subs in proptest::collection::vec("[a-zA-Z ?]{1,20}", 1..5),
            prefix in "[^\\[\\]]{0,20}",
        ) {
            // Well-formed arrays of non-blank strings round-trip through parsing.
            prop_assume!(subs.iter().all(|s| !s.trim().is_empty()));
            let raw = format!("{prefix}{}", serde_json::to_string(&subs).unwrap());
            let plan = parse_decomposition(&raw, "orig");
            prop_assert!(!plan.used_fallback);
            let trimmed: Vec<String> = subs.iter().map(|s| s.trim().to_string()).collect();
            prop_assert_eq!(plan.subquestions, trimmed);
        }
    }
}
