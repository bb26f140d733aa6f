//! Prompt templates for event summarization, scene classification and
//! question answering. The template text lives in `assets/` and is shipped
//! verbatim; only the `{placeholder}` slots are filled here.

const EVENT_SUMMARY: &str = include_str!("../assets/event_summary.txt");
const SCENE_CLASSIFICATION: &str = include_str!("../assets/scene_classification.txt");
const QA: &str = include_str!("../assets/qa.txt");
const QA_NO_CONTEXT: &str = include_str!("../assets/qa_no_context.txt");
const QA_SYSTEM: &str = include_str!("../assets/qa_system.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    EventSummary,
    SceneClassification,
    Qa,
    QaNoContext,
}

impl PromptKind {
    pub fn template(self) -> &'static str {
        match self {
            PromptKind::EventSummary => EVENT_SUMMARY,
            PromptKind::SceneClassification => SCENE_CLASSIFICATION,
            PromptKind::Qa => QA,
            PromptKind::QaNoContext => QA_NO_CONTEXT,
        }
    }

    fn header(self) -> &'static str {
        self.template().lines().next().unwrap_or_default()
    }

    /// Identifies a rendered prompt by its first line.
    pub fn detect(prompt: &str) -> Option<PromptKind> {
        let first = prompt.lines().next()?;
        [
            PromptKind::EventSummary,
            PromptKind::SceneClassification,
            PromptKind::Qa,
            PromptKind::QaNoContext,
        ]
        .into_iter()
        .find(|k| k.header() == first)
    }
}

/// System message prepended by chat-style answer generators.
pub fn system_message() -> &'static str {
    QA_SYSTEM
}

/// Replaces line breaks so a value cannot break the line-oriented layout.
pub fn single_line(s: &str) -> String {
    s.replace(['\r', '\n'], " ")
}

/// Fills `{key}` slots in one left-to-right pass; substituted values are
/// never rescanned.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let filled = after.find('}').and_then(|close| {
            let key = &after[..close];
            slots
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match filled {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn event_prompt(speakers: &[String], block_text: &str) -> String {
    let speakers = single_line(&speakers.join(", "));
    let text = single_line(block_text);
    render(
        EVENT_SUMMARY,
        &[("speaker_list", &speakers), ("text", &text)],
    )
}

pub fn scene_prompt(event_summary: &str) -> String {
    render(
        SCENE_CLASSIFICATION,
        &[("event_summary", &single_line(event_summary))],
    )
}

/// Full QA prompt with the three memory sections already formatted.
pub fn qa_prompt(question: &str, short_term: &str, pending: &str, long_term: &str) -> String {
    render(
        QA,
        &[
            ("stsb_buffer_content", short_term),
            ("pending_buffer_content", pending),
            ("long_term_content", long_term),
            ("question_text", &single_line(question)),
        ],
    )
}

pub fn qa_no_context_prompt(question: &str) -> String {
    render(QA_NO_CONTEXT, &[("question_text", &single_line(question))])
}

/// Text following `marker` up to the end of its line.
pub(crate) fn line_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(marker))
}

/// The body of a `## <name>: ` section of a QA prompt, up to the next
/// section or question line.
pub(crate) fn qa_section<'a>(prompt: &'a str, name: &str) -> Option<&'a str> {
    let marker = format!("## {name}: ");
    let start = prompt.find(&marker)? + marker.len();
    let body = &prompt[start..];
    let end = ["\n## ", "\nQuestion: "]
        .iter()
        .filter_map(|m| body.find(m))
        .min()
        .unwrap_or(body.len());
    Some(&body[..end])
}
