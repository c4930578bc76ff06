//! Normalises inline `<think>…</think>` reasoning into a separate channel.

const OPEN: &str = "<think>";
const CLOSE: &str = "</think>";

/// Split `text` into `(reasoning, answer)`.
///
/// Handles both a full `<think>…</think>` span and the chat-template variant
/// where the opening tag is injected by the server and only `</think>`
/// reaches the client.
pub fn split_think(text: &str) -> (Option<String>, String) {
    let Some(close) = text.find(CLOSE) else {
        return (None, text.to_string());
    };
    let (before, reasoning) = match text[..close].find(OPEN) {
        Some(open) => (&text[..open], &text[open + OPEN.len()..close]),
        None => ("", &text[..close]),
    };
    let after = &text[close + CLOSE.len()..];
    let mut answer = String::with_capacity(before.len() + after.len());
    answer.push_str(before.trim_end());
    if !answer.is_empty() && !after.trim().is_empty() {
        answer.push('\n');
    }
    answer.push_str(after.trim_start());
    (Some(reasoning.trim().to_string()), answer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_tags_passes_through() {
        assert_eq!(split_think("plain"), (None, "plain".to_string()));
    }

    #[test]
    fn full_span() {
        let (r, a) = split_think("<think>\nstep one\n</think>\n\nanswer");
        assert_eq!(r.as_deref(), Some("step one"));
        assert_eq!(a, "answer");
    }

    #[test]
    fn close_only() {
        let (r, a) = split_think("thinking...</think>final");
        assert_eq!(r.as_deref(), Some("thinking..."));
        assert_eq!(a, "final");
    }
}
