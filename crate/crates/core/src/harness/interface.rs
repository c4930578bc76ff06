//! Module interface extraction (name, ports, widths) from Verilog headers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::lexer::{self, is_keyword, matching_close, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "in")]
    Input,
    #[serde(rename = "out")]
    Output,
    #[serde(rename = "inout")]
    Inout,
}

impl Direction {
    fn from_kw(kw: &str) -> Option<Self> {
        match kw {
            "input" => Some(Self::Input),
            "output" => Some(Self::Output),
            "inout" => Some(Self::Inout),
            _ => None,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Self::Input => "input",
            Self::Output => "output",
            Self::Inout => "inout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleInterface {
    pub module_name: String,
    pub ports: Vec<Port>,
}

impl ModuleInterface {
    /// ANSI header such as `module add(input [1:0] a, output [2:0] s);`.
    pub fn render_header(&self) -> String {
        let ports: Vec<String> = self
            .ports
            .iter()
            .map(|p| {
                if p.width > 1 {
                    format!("{} [{}:0] {}", p.direction.keyword(), p.width - 1, p.name)
                } else {
                    format!("{} {}", p.direction.keyword(), p.name)
                }
            })
            .collect();
        format!("module {}({});", self.module_name, ports.join(", "))
    }

    pub fn port_names(&self) -> impl Iterator<Item = &str> {
        self.ports.iter().map(|p| p.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterfaceError {
    #[error("no module declaration found")]
    NoModuleFound,
    #[error("could not resolve ports of module {module_name}: {reason}")]
    UnparsablePorts {
        module_name: String,
        /// Names-only fallback, in header order.
        names: Vec<String>,
        reason: String,
    },
}

/// Extract the top module's interface from `src`.
///
/// The top module is the first declared module that no other module in the
/// same text instantiates. Both ANSI and non-ANSI port styles are handled.
pub fn parse_interface(src: &str) -> Result<ModuleInterface, InterfaceError> {
    let tokens = lexer::tokenize(src);
    let mods = lexer::modules(&tokens);
    if mods.is_empty() {
        return Err(InterfaceError::NoModuleFound);
    }
    let used: Vec<String> = mods
        .iter()
        .flat_map(|m| lexer::instantiations(&tokens[m.body.clone()]))
        .collect();
    let top = mods.iter().find(|m| !used.contains(&m.name)).unwrap_or(&mods[0]);
    let header = &tokens[top.header.clone()];
    let body = &tokens[top.body.clone()];

    let mut params = Params::default();
    let mut h = 0;
    if header.first().is_some_and(|t| t.is_punct('#')) {
        if let Some(close) = header.get(1).filter(|t| t.is_punct('(')).and_then(|_| matching_close(header, 1)) {
            params.collect_list(&header[2..close]);
            h = close + 1;
        }
    }
    params.collect_body(body);

    let port_list = match header.get(h) {
        Some(t) if t.is_punct('(') => {
            let close = matching_close(header, h).ok_or_else(|| InterfaceError::UnparsablePorts {
                module_name: top.name.clone(),
                names: Vec::new(),
                reason: "unbalanced port list".into(),
            })?;
            &header[h + 1..close]
        }
        _ => &header[0..0],
    };

    let items = split_top_level(port_list, ',');
    let ansi = items
        .first()
        .and_then(|it| it.first())
        .and_then(Token::ident)
        .is_some_and(|w| Direction::from_kw(w).is_some());

    let build = |decls: Result<Vec<Port>, String>, names: Vec<String>| match decls {
        Ok(ports) => check_unique(&top.name, ports),
        Err(reason) => Err(InterfaceError::UnparsablePorts {
            module_name: top.name.clone(),
            names,
            reason,
        }),
    };

    if ansi {
        let names: Vec<String> = items.iter().filter_map(|it| last_ident(it)).collect();
        build(parse_ansi(&items, &params), names)
    } else {
        let names: Vec<String> = items.iter().filter_map(|it| last_ident(it)).collect();
        build(parse_non_ansi(&names, body, &params), names)
    }
}

fn check_unique(module_name: &str, ports: Vec<Port>) -> Result<ModuleInterface, InterfaceError> {
    for (i, p) in ports.iter().enumerate() {
        if ports[..i].iter().any(|q| q.name == p.name) {
            return Err(InterfaceError::UnparsablePorts {
                module_name: module_name.to_string(),
                names: ports.iter().map(|p| p.name.clone()).collect(),
                reason: format!("duplicate port {}", p.name),
            });
        }
    }
    Ok(ModuleInterface {
        module_name: module_name.to_string(),
        ports,
    })
}

fn split_top_level(tokens: &[Token], sep: char) -> Vec<&[Token]> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        match t {
            Token::Punct('(') | Token::Punct('[') | Token::Punct('{') => depth += 1,
            Token::Punct(')') | Token::Punct(']') | Token::Punct('}') => depth -= 1,
            Token::Punct(c) if *c == sep && depth == 0 => {
                out.push(&tokens[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < tokens.len() {
        out.push(&tokens[start..]);
    }
    out
}

/// Last identifier outside brackets and before any `=` default.
fn last_ident(item: &[Token]) -> Option<String> {
    let end = item.iter().position(|t| t.is_punct('=')).unwrap_or(item.len());
    let mut depth = 0i32;
    let mut found = None;
    for t in &item[..end] {
        match t {
            Token::Punct('[') | Token::Punct('(') => depth += 1,
            Token::Punct(']') | Token::Punct(')') => depth -= 1,
            Token::Ident(s) if depth == 0 && !is_keyword(s) => found = Some(s.clone()),
            _ => {}
        }
    }
    found
}

/// Direction, width and names from one declaration fragment such as
/// `output reg [2:0] s` or `input signed [7:0] a, b`.
struct Decl {
    direction: Option<Direction>,
    width: Option<u32>,
    has_type: bool,
    name: Option<String>,
}

fn parse_decl(tokens: &[Token], params: &Params) -> Result<Decl, String> {
    let mut decl = Decl {
        direction: None,
        width: None,
        has_type: false,
        name: None,
    };
    let end = tokens.iter().position(|t| t.is_punct('=')).unwrap_or(tokens.len());
    let mut i = 0;
    let mut packed: Option<u32> = None;
    while i < end {
        match &tokens[i] {
            Token::Ident(w) if Direction::from_kw(w).is_some() => decl.direction = Direction::from_kw(w),
            Token::Ident(w) if is_keyword(w) => {
                decl.has_type = true;
                let implied = match w.as_str() {
                    "integer" | "int" => Some(32),
                    "byte" => Some(8),
                    "shortint" => Some(16),
                    "longint" | "time" => Some(64),
                    _ => None,
                };
                if implied.is_some() {
                    packed = implied;
                }
            }
            Token::Punct('[') if decl.name.is_none() => {
                let close = matching_close(&tokens[..end], i).ok_or("unbalanced range")?;
                let w = range_width(&tokens[i + 1..close], params)?;
                packed = Some(packed.map_or(w, |p| p * w));
                decl.has_type = true;
                i = close;
            }
            Token::Punct('[') => {
                // Unpacked dimension after the name: skip.
                i = matching_close(&tokens[..end], i).ok_or("unbalanced range")?;
            }
            Token::Ident(name) => decl.name = Some(name.clone()),
            _ => {}
        }
        i += 1;
    }
    decl.width = packed;
    Ok(decl)
}

fn parse_ansi(items: &[&[Token]], params: &Params) -> Result<Vec<Port>, String> {
    let mut ports = Vec::new();
    let mut direction = None;
    let mut width = 1;
    for item in items {
        let d = parse_decl(item, params)?;
        let name = d.name.ok_or("port item without a name")?;
        if d.direction.is_some() || d.has_type {
            if let Some(dir) = d.direction {
                direction = Some(dir);
            }
            width = d.width.unwrap_or(1);
        }
        let direction = direction.ok_or_else(|| format!("port {name} has no direction"))?;
        ports.push(Port { name, direction, width });
    }
    Ok(ports)
}

fn parse_non_ansi(names: &[String], body: &[Token], params: &Params) -> Result<Vec<Port>, String> {
    let mut dirs: HashMap<String, (Direction, Option<u32>)> = HashMap::new();
    let mut net_widths: HashMap<String, u32> = HashMap::new();
    for stmt in split_top_level(body, ';') {
        let Some(first) = stmt.first().and_then(Token::ident) else {
            continue;
        };
        let is_dir = Direction::from_kw(first).is_some();
        let is_net = matches!(first, "wire" | "reg" | "logic" | "integer" | "tri");
        if !is_dir && !is_net {
            continue;
        }
        // `input [1:0] a, b` → shared prefix applies to every name.
        let parts = split_top_level(stmt, ',');
        let head = parse_decl(parts[0], params)?;
        let mut record = |name: String| {
            if is_dir {
                dirs.insert(name, (head.direction.unwrap(), head.width));
            } else if let Some(w) = head.width {
                net_widths.insert(name, w);
            }
        };
        if let Some(n) = head.name.clone() {
            record(n);
        }
        for p in &parts[1..] {
            if let Some(n) = last_ident(p) {
                record(n);
            }
        }
    }
    names
        .iter()
        .map(|n| {
            let (direction, width) = dirs.get(n).ok_or_else(|| format!("port {n} has no direction declaration"))?;
            let width = width.or_else(|| net_widths.get(n).copied()).unwrap_or(1);
            Ok(Port {
                name: n.clone(),
                direction: *direction,
                width,
            })
        })
        .collect()
}

fn range_width(tokens: &[Token], params: &Params) -> Result<u32, String> {
    let parts = split_top_level(tokens, ':');
    if parts.len() != 2 {
        return Err("range is not of the form [msb:lsb]".into());
    }
    let msb = params.eval(parts[0])?;
    let lsb = params.eval(parts[1])?;
    Ok((msb - lsb).unsigned_abs() as u32 + 1)
}

#[derive(Default)]
struct Params(HashMap<String, i64>);

impl Params {
    fn collect_list(&mut self, tokens: &[Token]) {
        for item in split_top_level(tokens, ',') {
            self.collect_assignment(item);
        }
    }

    fn collect_body(&mut self, body: &[Token]) {
        for stmt in split_top_level(body, ';') {
            if stmt
                .first()
                .is_some_and(|t| t.is_kw("parameter") || t.is_kw("localparam"))
            {
                for item in split_top_level(stmt, ',') {
                    self.collect_assignment(item);
                }
            }
        }
    }

    fn collect_assignment(&mut self, item: &[Token]) {
        if let Some(eq) = item.iter().position(|t| t.is_punct('=')) {
            if let Some(name) = last_ident(&item[..eq]) {
                if let Ok(v) = self.eval(&item[eq + 1..]) {
                    self.0.entry(name).or_insert(v);
                }
            }
        }
    }

    fn eval(&self, tokens: &[Token]) -> Result<i64, String> {
        let mut p = ExprParser {
            tokens,
            pos: 0,
            params: self,
        };
        let v = p.expr()?;
        if p.pos != tokens.len() {
            return Err("trailing tokens in constant expression".into());
        }
        Ok(v)
    }
}

/// Recursive-descent evaluator for constant range expressions.
struct ExprParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    params: &'a Params,
}

impl ExprParser<'_> {
    fn peek_punct(&self, c: char) -> bool {
        self.tokens.get(self.pos).is_some_and(|t| t.is_punct(c))
    }

    fn expr(&mut self) -> Result<i64, String> {
        let mut v = self.term()?;
        loop {
            if self.peek_punct('+') {
                self.pos += 1;
                v += self.term()?;
            } else if self.peek_punct('-') {
                self.pos += 1;
                v -= self.term()?;
            } else {
                return Ok(v);
            }
        }
    }

    fn term(&mut self) -> Result<i64, String> {
        let mut v = self.unary()?;
        loop {
            if self.peek_punct('*') {
                self.pos += 1;
                v *= self.unary()?;
            } else if self.peek_punct('/') {
                self.pos += 1;
                let d = self.unary()?;
                if d == 0 {
                    return Err("division by zero".into());
                }
                v /= d;
            } else {
                return Ok(v);
            }
        }
    }

    fn unary(&mut self) -> Result<i64, String> {
        if self.peek_punct('-') {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        if self.peek_punct('+') {
            self.pos += 1;
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<i64, String> {
        let tok = self.tokens.get(self.pos).ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Token::Number(n) => parse_number(n),
            Token::Punct('(') => {
                let v = self.expr()?;
                if !self.peek_punct(')') {
                    return Err("missing ')'".into());
                }
                self.pos += 1;
                Ok(v)
            }
            Token::Ident(f) if f == "$clog2" => {
                if !self.peek_punct('(') {
                    return Err("$clog2 needs an argument".into());
                }
                self.pos += 1;
                let v = self.expr()?;
                if !self.peek_punct(')') {
                    return Err("missing ')'".into());
                }
                self.pos += 1;
                Ok(clog2(v))
            }
            Token::Ident(name) => self
                .params
                .0
                .get(name)
                .copied()
                .ok_or_else(|| format!("unknown parameter {name}")),
            _ => Err("unsupported token in constant expression".into()),
        }
    }
}

fn clog2(v: i64) -> i64 {
    let mut r = 0;
    while (1i64 << r) < v {
        r += 1;
    }
    r
}

fn parse_number(text: &str) -> Result<i64, String> {
    let clean: String = text.chars().filter(|c| *c != '_' && !c.is_whitespace()).collect();
    let bad = || format!("unsupported number literal {text}");
    match clean.find('\'') {
        None => clean.parse().map_err(|_| bad()),
        Some(tick) => {
            let rest = clean[tick + 1..].trim_start_matches(['s', 'S']);
            let (radix, digits) = match rest.chars().next() {
                Some('d' | 'D') => (10, &rest[1..]),
                Some('h' | 'H') => (16, &rest[1..]),
                Some('b' | 'B') => (2, &rest[1..]),
                Some('o' | 'O') => (8, &rest[1..]),
                _ => return Err(bad()),
            };
            i64::from_str_radix(digits, radix).map_err(|_| bad())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn port(name: &str, direction: Direction, width: u32) -> Port {
        Port {
            name: name.into(),
            direction,
            width,
        }
    }

    #[test]
    fn ansi_adder() {
        let i = parse_interface("module add(input [1:0] a, input [1:0] b, output [2:0] s); endmodule").unwrap();
        assert_eq!(i.module_name, "add");
        assert_eq!(
            i.ports,
            vec![
                port("a", Direction::Input, 2),
                port("b", Direction::Input, 2),
                port("s", Direction::Output, 3)
            ]
        );
    }

    #[test]
    fn empty_module() {
        let i = parse_interface("module t; endmodule").unwrap();
        assert_eq!(i.module_name, "t");
        assert!(i.ports.is_empty());
    }

    #[test]
    fn non_ansi_matches_ansi_twin() {
        let ansi = parse_interface("module add(input [1:0] a, input [1:0] b, output [2:0] s); endmodule").unwrap();
        let non_ansi = parse_interface(include_str!("../../fixtures/misc/adder_non_ansi.v")).unwrap();
        assert_eq!(ansi, non_ansi);
    }

    #[test]
    fn shared_declarations_and_reg_outputs() {
        let src = "module m(input clk, rst, input [7:0] d, output reg [3:0] q, output wire v); endmodule";
        let i = parse_interface(src).unwrap();
        assert_eq!(
            i.ports,
            vec![
                port("clk", Direction::Input, 1),
                port("rst", Direction::Input, 1),
                port("d", Direction::Input, 8),
                port("q", Direction::Output, 4),
                port("v", Direction::Output, 1),
            ]
        );
    }

    #[test]
    fn parameterised_widths() {
        let src = "module p #(parameter WIDTH = 8, parameter DEPTH = 16) (
            input [WIDTH-1:0] d, input [$clog2(DEPTH)-1:0] addr, output [2*WIDTH-1:0] q); endmodule";
        let i = parse_interface(src).unwrap();
        assert_eq!(i.ports.iter().map(|p| p.width).collect::<Vec<_>>(), vec![8, 4, 16]);
    }

    #[test]
    fn non_ansi_width_from_reg_declaration() {
        let src = "module c(clk, count); input clk; output count; reg [3:0] count; endmodule";
        let i = parse_interface(src).unwrap();
        assert_eq!(i.ports[1], port("count", Direction::Output, 4));
    }

    #[test]
    fn top_is_uninstantiated_module() {
        let src = "module leaf(input a, output y); assign y = a; endmodule
                   module top(input x, output z); leaf u(.a(x), .y(z)); endmodule";
        assert_eq!(parse_interface(src).unwrap().module_name, "top");
    }

    #[test]
    fn no_module() {
        assert_eq!(parse_interface("wire x;"), Err(InterfaceError::NoModuleFound));
    }

    #[test]
    fn unknown_parameter_falls_back_to_names() {
        let err = parse_interface("module u(input [N-1:0] a, output y); endmodule").unwrap_err();
        match err {
            InterfaceError::UnparsablePorts { module_name, names, .. } => {
                assert_eq!(module_name, "u");
                assert_eq!(names, vec!["a", "y"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_rendering() {
        let i = parse_interface("module add(input [1:0] a, input [1:0] b, output [2:0] s); endmodule").unwrap();
        assert_eq!(i.render_header(), "module add(input [1:0] a, input [1:0] b, output [2:0] s);");
        assert_eq!(parse_interface(&format!("{} endmodule", i.render_header())).unwrap(), i);
    }

    #[test]
    fn number_literals() {
        assert_eq!(parse_number("4'd3"), Ok(3));
        assert_eq!(parse_number("'hFF"), Ok(255));
        assert_eq!(parse_number("1_000"), Ok(1000));
        assert_eq!(parse_number("8'sb1010"), Ok(10));
    }
}
