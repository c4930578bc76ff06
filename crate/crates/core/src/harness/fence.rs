//! Fenced code block extraction from model output.

const FENCE: &str = "```";

/// One fenced block: info-string tag and exact body bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock<'a> {
    pub tag: &'a str,
    pub body: &'a str,
}

/// Every complete fenced block in `text`, in order of appearance.
///
/// Fences do not have to start a line: a block opens at any "```" whose
/// info string runs to the end of that line, and closes at the next "```".
/// One newline before the closing fence belongs to the fence, not the body.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock<'_>> {
    let mut blocks = Vec::new();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find(FENCE) {
        let open = pos + rel;
        let after_open = open + FENCE.len();
        let Some(nl) = text[after_open..].find('\n') else {
            break;
        };
        let info_end = after_open + nl;
        let info = &text[after_open..info_end];
        if info.contains(FENCE) {
            // Inline ```code``` span on a single line.
            pos = after_open + info.find(FENCE).unwrap() + FENCE.len();
            continue;
        }
        let body_start = info_end + 1;
        let Some(close_rel) = text[info_end..].find(FENCE) else {
            break;
        };
        let close = info_end + close_rel;
        let body = if close <= body_start {
            ""
        } else {
            let raw = &text[body_start..close];
            raw.strip_suffix('\n').unwrap_or(raw)
        };
        let tag = info.split_whitespace().next().unwrap_or("");
        blocks.push(FencedBlock { tag, body });
        pos = close + FENCE.len();
    }
    blocks
}

fn tag_matches(block_tag: &str, wanted: &str) -> bool {
    let t = block_tag.to_ascii_lowercase();
    let w = wanted.to_ascii_lowercase();
    t == w || (w == "verilog" && matches!(t.as_str(), "systemverilog" | "sv" | "v"))
}

/// Body of the LAST block tagged `language_tag`, or of the last untagged
/// block when no block carries the tag. `verilog` also accepts the
/// `systemverilog`/`sv`/`v` tags.
pub fn extract_code<'a>(message: &'a str, language_tag: &str) -> Option<&'a str> {
    let blocks = fenced_blocks(message);
    blocks
        .iter()
        .rev()
        .find(|b| tag_matches(b.tag, language_tag))
        .or_else(|| blocks.iter().rev().find(|b| b.tag.is_empty()))
        .map(|b| b.body)
}

/// Wrap `code` in a fence tagged `language_tag`; inverse of [`extract_code`].
pub fn embed_in_fence(code: &str, language_tag: &str) -> String {
    format!("{FENCE}{language_tag}\n{code}\n{FENCE}")
}
