//! Lightweight Verilog tokenizer and module-level structure scan.
//!
//! This is not a grammar. It knows enough to find module declarations,
//! header port lists, parameter defaults and module instantiations.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Number(String),
    Str,
    Punct(char),
}

impl Token {
    pub fn is_punct(&self, c: char) -> bool {
        matches!(self, Token::Punct(p) if *p == c)
    }

    pub fn ident(&self) -> Option<&str> {
        match self {
            Token::Ident(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        self.ident() == Some(kw)
    }
}

const KEYWORDS: &[&str] = &[
    "always", "always_comb", "always_ff", "always_latch", "and", "assert", "assign", "assume", "automatic",
    "begin", "bit", "buf", "byte", "case", "casex", "casez", "class", "const", "cover", "deassign",
    "default", "defparam", "disable", "do", "else", "end", "endcase", "endclass", "endfunction",
    "endgenerate", "endinterface", "endmodule", "endpackage", "endprogram", "endtask", "enum", "event",
    "export", "extern", "final", "for", "force", "forever", "fork", "function", "generate", "genvar",
    "if", "iff", "import", "initial", "inout", "input", "int", "integer", "interface", "join", "join_any",
    "join_none", "localparam", "logic", "longint", "macromodule", "module", "nand", "negedge", "nor",
    "not", "or", "output", "package", "packed", "parameter", "posedge", "program", "real", "realtime",
    "reg", "release", "repeat", "return", "shortint", "signed", "specify", "static", "string", "struct",
    "supply0", "supply1", "task", "time", "tri", "tri0", "tri1", "triand", "trior", "typedef", "union",
    "unique", "unique0", "unsigned", "var", "void", "wait", "wand", "while", "wire", "wor", "xnor", "xor",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

/// Tokenize `src`, dropping comments, attributes `(* … *)` and compiler
/// directives.
pub fn tokenize(src: &str) -> Vec<Token> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i += 2;
            }
            b'(' if bytes.get(i + 1) == Some(&b'*') && bytes.get(i + 2) != Some(&b')') => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b')') {
                    i += 1;
                }
                i += 2;
            }
            b'`' => {
                // Directive: drop the rest of the line.
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'"' => {
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i += 1;
                out.push(Token::Str);
            }
            b'\\' => {
                let start = i + 1;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push(Token::Ident(src[start..i].to_string()));
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c == b'$' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                    i += 1;
                }
                out.push(Token::Ident(src[start..i].to_string()));
            }
            c if c.is_ascii_digit() || c == b'\'' => {
                let start = i;
                let mut seen_tick = false;
                while i < bytes.len() {
                    let b = bytes[i];
                    if b == b'\'' && !seen_tick {
                        seen_tick = true;
                        i += 1;
                        // base letter, optional signedness
                        while i < bytes.len() && matches!(bytes[i], b's' | b'S') {
                            i += 1;
                        }
                        if i < bytes.len() && bytes[i].is_ascii_alphabetic() {
                            i += 1;
                        }
                        while i < bytes.len() && bytes[i] == b' ' {
                            i += 1;
                        }
                    } else if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'?' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                if i == start {
                    i += 1;
                }
                out.push(Token::Number(src[start..i].trim_end().to_string()));
            }
            _ => {
                // Multi-byte UTF-8 punctuation is skipped whole.
                let ch = src[i..].chars().next().unwrap();
                if ch.is_ascii() {
                    out.push(Token::Punct(ch));
                }
                i += ch.len_utf8();
            }
        }
    }
    out
}

/// Index of the token matching the opener at `open` (`(`/`[`/`{`).
pub fn matching_close(tokens: &[Token], open: usize) -> Option<usize> {
    let (o, c) = match tokens.get(open)? {
        Token::Punct('(') => ('(', ')'),
        Token::Punct('[') => ('[', ']'),
        Token::Punct('{') => ('{', '}'),
        _ => return None,
    };
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        if t.is_punct(o) {
            depth += 1;
        } else if t.is_punct(c) {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

/// A module declaration located in a token stream.
#[derive(Debug, Clone)]
pub struct ModuleSpan {
    pub name: String,
    /// Tokens from after the name to the header-terminating `;` (exclusive).
    pub header: std::ops::Range<usize>,
    /// Tokens after the header `;` up to `endmodule` (exclusive).
    pub body: std::ops::Range<usize>,
}

pub fn modules(tokens: &[Token]) -> Vec<ModuleSpan> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].is_kw("module") || tokens[i].is_kw("macromodule") {
            // Skip lifetime qualifier: `module automatic foo`.
            let mut j = i + 1;
            if tokens.get(j).is_some_and(|t| t.is_kw("automatic") || t.is_kw("static")) {
                j += 1;
            }
            let Some(name) = tokens.get(j).and_then(Token::ident).map(str::to_string) else {
                i += 1;
                continue;
            };
            let header_start = j + 1;
            let mut k = header_start;
            while k < tokens.len() && !tokens[k].is_punct(';') {
                if matches!(tokens[k], Token::Punct('(') | Token::Punct('[') | Token::Punct('{')) {
                    k = matching_close(tokens, k).unwrap_or(tokens.len() - 1);
                }
                k += 1;
            }
            let header_end = k.min(tokens.len());
            let body_start = (header_end + 1).min(tokens.len());
            let body_end = tokens[body_start..]
                .iter()
                .position(|t| t.is_kw("endmodule"))
                .map_or(tokens.len(), |p| body_start + p);
            out.push(ModuleSpan {
                name,
                header: header_start..header_end,
                body: body_start..body_end,
            });
            i = body_end + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Names of modules instantiated inside `body` tokens.
pub fn instantiations(tokens: &[Token]) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let Some(name) = tokens[i].ident() else {
            i += 1;
            continue;
        };
        if is_keyword(name) || name.starts_with('$') {
            i += 1;
            continue;
        }
        let boundary = i == 0
            || matches!(&tokens[i - 1], Token::Punct(';') | Token::Punct(')') | Token::Punct(':'))
            || tokens[i - 1].ident().is_some_and(|p| {
                matches!(p, "begin" | "end" | "generate" | "else" | "endgenerate" | "endcase" | "endfunction" | "endtask")
            });
        if !boundary {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        if tokens.get(j).is_some_and(|t| t.is_punct('#')) {
            j += 1;
            if tokens.get(j).is_some_and(|t| t.is_punct('(')) {
                match matching_close(tokens, j) {
                    Some(c) => j = c + 1,
                    None => break,
                }
            } else {
                j += 1;
            }
        }
        let instance = tokens.get(j).and_then(Token::ident).filter(|n| !is_keyword(n));
        if instance.is_some() {
            let mut k = j + 1;
            while tokens.get(k).is_some_and(|t| t.is_punct('[')) {
                match matching_close(tokens, k) {
                    Some(c) => k = c + 1,
                    None => break,
                }
            }
            if tokens.get(k).is_some_and(|t| t.is_punct('(')) {
                if !out.iter().any(|n| n == name) {
                    out.push(name.to_string());
                }
                i = matching_close(tokens, k).unwrap_or(k) + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Module names declared in `src`, in order.
pub fn declared_modules(src: &str) -> Vec<String> {
    modules(&tokenize(src)).into_iter().map(|m| m.name).collect()
}

/// Module names instantiated anywhere in `src`.
pub fn instantiated_modules(src: &str) -> Vec<String> {
    let tokens = tokenize(src);
    let mut out: Vec<String> = Vec::new();
    for m in modules(&tokens) {
        for n in instantiations(&tokens[m.body.clone()]) {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

/// Instantiated modules that `src` does not declare itself.
pub fn external_instances(src: &str) -> Vec<String> {
    let declared = declared_modules(src);
    instantiated_modules(src)
        .into_iter()
        .filter(|n| !declared.contains(n))
        .collect()
}

/// Declared modules that no other module in the same sources instantiates.
pub fn top_modules(sources: &[&str]) -> Vec<String> {
    let mut declared = Vec::new();
    let mut used = Vec::new();
    for s in sources {
        declared.extend(declared_modules(s));
        used.extend(instantiated_modules(s));
    }
    declared.into_iter().filter(|d| !used.contains(d)).collect()
}
