// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser for the supported Verilog subset.
//!
//! Parsing is recovering: constructs outside the subset produce
//! `UnsupportedConstruct` diagnostics, a broken statement resyncs at `;`,
//! and a broken module resyncs at the next `module` keyword, so one bad
//! region never discards a whole file.

use crate::ast::*;
use crate::diag::{DiagKind, Diagnostic, Severity};
use crate::lexer::{tokenize, LexError, Token, TokenKind};

/// Result of parsing one source file.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub modules: Vec<AstModule>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| d.severity == Severity::Error)
    }

    pub fn module(&self, name: &str) -> Option<&AstModule> {
        self.modules.iter().find(|m| m.name == name)
    }
}

/// Parse a full source file; only lexer failures are fatal.
pub fn parse_design(source: &str) -> Result<ParseOutcome, LexError> {
    let tokens = tokenize(source)?;
    let mut outcome = ParseOutcome::default();
    let stream = preprocess(tokens, &mut outcome.diagnostics);
    let mut p = Parser::new(stream, &mut outcome.diagnostics);
    while !p.at_end() {
        if p.at_keyword("module") {
            if let Some(module) = p.parse_module() {
                outcome.modules.push(module);
            }
        } else if p.at_keyword("primitive") {
            p.diag_here(DiagKind::UnsupportedConstruct, "unsupported construct: primitive");
            p.skip_until_keyword("endprimitive");
            p.bump();
        } else if p.at_keyword("interface") {
            p.diag_here(DiagKind::UnsupportedConstruct, "unsupported construct: interface");
            p.skip_until_keyword("endinterface");
            p.bump();
        } else if p.at_keyword("package") {
            p.diag_here(DiagKind::UnsupportedConstruct, "unsupported construct: package");
            p.skip_until_keyword("endpackage");
            p.bump();
        } else {
            // stray top-level token; note unsupported keywords, skip quietly otherwise
            if let Some(t) = p.peek() {
                if t.kind == TokenKind::Keyword && !matches!(t.lexeme.as_str(), "module") {
                    let msg = format!("unsupported construct: {}", t.lexeme);
                    p.diag_here(DiagKind::UnsupportedConstruct, msg);
                }
            }
            p.bump();
        }
    }
    Ok(outcome)
}

/// Strip comments, apply argument-less `` `define `` substitution, and drop
/// harmless directives; diagnostics for the unsupported ones.
fn preprocess(tokens: Vec<Token>, diags: &mut Vec<Diagnostic>) -> Vec<Token> {
    use std::collections::HashMap;
    let mut macros: HashMap<String, Vec<Token>> = HashMap::new();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if t.kind == TokenKind::Comment {
            i += 1;
            continue;
        }
        if t.kind == TokenKind::Identifier && t.lexeme.starts_with('`') {
            let directive = &t.lexeme[1..];
            let line = t.line;
            match directive {
                "define" => {
                    i += 1;
                    if i < tokens.len() && tokens[i].kind == TokenKind::Identifier {
                        let name = tokens[i].lexeme.clone();
                        i += 1;
                        // macros with arguments are out of subset
                        if i < tokens.len()
                            && tokens[i].line == line
                            && tokens[i].lexeme == "("
                            && tokens[i].start == tokens[i - 1].end
                        {
                            diags.push(Diagnostic::error(
                                DiagKind::UnsupportedConstruct,
                                line,
                                t.column,
                                "unsupported construct: `define with arguments",
                            ));
                            while i < tokens.len() && tokens[i].line == line {
                                i += 1;
                            }
                            continue;
                        }
                        let mut body = Vec::new();
                        while i < tokens.len() && tokens[i].line == line {
                            if tokens[i].kind != TokenKind::Comment {
                                body.push(tokens[i].clone());
                            }
                            i += 1;
                        }
                        macros.insert(name, body);
                    } else {
                        diags.push(Diagnostic::error(
                            DiagKind::Parse,
                            line,
                            t.column,
                            "`define missing name",
                        ));
                    }
                    continue;
                }
                "timescale" | "default_nettype" | "resetall" | "celldefine" | "endcelldefine" => {
                    while i < tokens.len() && tokens[i].line == line {
                        i += 1;
                    }
                    continue;
                }
                "include" | "ifdef" | "ifndef" | "elsif" | "else" | "endif" | "undef" => {
                    diags.push(Diagnostic::error(
                        DiagKind::UnsupportedConstruct,
                        line,
                        t.column,
                        format!("unsupported construct: `{}", directive),
                    ));
                    while i < tokens.len() && tokens[i].line == line {
                        i += 1;
                    }
                    continue;
                }
                name => {
                    if let Some(body) = macros.get(name) {
                        // splice at the use site, bounded expansion depth
                        let mut pending: Vec<Token> = body.clone();
                        let mut depth = 0;
                        while depth < 8
                            && pending.iter().any(|pt| {
                                pt.lexeme.starts_with('`')
                                    && macros.contains_key(&pt.lexeme[1..])
                            })
                        {
                            let mut next = Vec::new();
                            for pt in pending {
                                if pt.lexeme.starts_with('`') {
                                    if let Some(b) = macros.get(&pt.lexeme[1..]) {
                                        next.extend(b.iter().cloned());
                                        continue;
                                    }
                                }
                                next.push(pt);
                            }
                            pending = next;
                            depth += 1;
                        }
                        for mut pt in pending {
                            pt.line = t.line;
                            pt.column = t.column;
                            out.push(pt);
                        }
                    } else {
                        diags.push(Diagnostic::error(
                            DiagKind::Parse,
                            line,
                            t.column,
                            format!("undefined macro `{}", name),
                        ));
                    }
                    i += 1;
                    continue;
                }
            }
        }
        out.push(t.clone());
        i += 1;
    }
    out
}

struct ParseAbort;

type PResult<T> = Result<T, ParseAbort>;

struct Parser<'d> {
    tokens: Vec<Token>,
    pos: usize,
    diags: &'d mut Vec<Diagnostic>,
    /// identifier uses (name, line, col) recorded while parsing expressions
    uses: Vec<(String, u32, u32)>,
    gate_counter: u32,
}

const GATE_PRIMITIVES: &[&str] = &["and", "or", "not", "nand", "nor", "xor", "xnor", "buf"];

impl<'d> Parser<'d> {
    fn new(tokens: Vec<Token>, diags: &'d mut Vec<Diagnostic>) -> Self {
        Parser {
            tokens,
            pos: 0,
            diags,
            uses: Vec::new(),
            gate_counter: 0,
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&Token> {
        self.tokens.get(self.pos + off)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek()
            .map(|t| t.kind == TokenKind::Keyword && t.lexeme == kw)
            .unwrap_or(false)
    }

    fn at_lexeme(&self, s: &str) -> bool {
        self.peek().map(|t| t.lexeme == s).unwrap_or(false)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_lexeme(&mut self, s: &str) -> bool {
        if self.at_lexeme(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn here(&self) -> (u32, u32) {
        self.peek()
            .map(|t| (t.line, t.column))
            .or_else(|| self.tokens.last().map(|t| (t.line, t.column)))
            .unwrap_or((1, 1))
    }

    fn diag_here(&mut self, kind: DiagKind, message: impl Into<String>) {
        let (line, column) = self.here();
        self.diags
            .push(Diagnostic::error(kind, line, column, message));
    }

    fn warn_here(&mut self, kind: DiagKind, message: impl Into<String>) {
        let (line, column) = self.here();
        self.diags
            .push(Diagnostic::warning(kind, line, column, message));
    }

    fn expect_lexeme(&mut self, s: &str) -> PResult<Token> {
        if self.at_lexeme(s) {
            Ok(self.bump().unwrap())
        } else {
            let found = self
                .peek()
                .map(|t| t.lexeme.clone())
                .unwrap_or_else(|| "end of file".into());
            self.diag_here(DiagKind::Parse, format!("expected '{}', found '{}'", s, found));
            Err(ParseAbort)
        }
    }

    fn expect_identifier(&mut self, what: &str) -> PResult<Token> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier && !t.lexeme.starts_with('$') => {
                Ok(self.bump().unwrap())
            }
            _ => {
                let found = self
                    .peek()
                    .map(|t| t.lexeme.clone())
                    .unwrap_or_else(|| "end of file".into());
                self.diag_here(
                    DiagKind::Parse,
                    format!("expected {} name, found '{}'", what, found),
                );
                Err(ParseAbort)
            }
        }
    }

    fn skip_until_keyword(&mut self, kw: &str) {
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Keyword && t.lexeme == kw {
                return;
            }
            self.pos += 1;
        }
    }

    /// Resynchronize after a statement/item error: skip past the next `;`,
    /// stopping short of structural keywords that end the region.
    fn resync_semi(&mut self) {
        while let Some(t) = self.peek() {
            if t.lexeme == ";" {
                self.pos += 1;
                return;
            }
            if t.kind == TokenKind::Keyword
                && matches!(t.lexeme.as_str(), "endmodule" | "end" | "endcase" | "module")
            {
                return;
            }
            self.pos += 1;
        }
    }

    fn record_use(&mut self, name: &str, line: u32, col: u32) {
        self.uses.push((name.to_string(), line, col));
    }

    // ------------------------------------------------------------------
    // modules
    // ------------------------------------------------------------------

    fn parse_module(&mut self) -> Option<AstModule> {
        debug_assert!(self.at_keyword("module"));
        self.bump();
        self.uses.clear();
        self.gate_counter = 0;

        let name = match self.expect_identifier("module") {
            Ok(t) => t.lexeme,
            Err(_) => {
                self.skip_to_next_module();
                return None;
            }
        };

        let mut module = AstModule {
            name,
            ports: Vec::new(),
            parameters: Vec::new(),
            nets: Vec::new(),
            items: Vec::new(),
        };
        let mut header_port_names: Vec<String> = Vec::new();
        let mut ansi_header = false;

        let header = (|| -> PResult<()> {
            if self.eat_lexeme("#") {
                self.expect_lexeme("(")?;
                self.parse_parameter_header(&mut module)?;
                self.expect_lexeme(")")?;
            }
            if self.eat_lexeme("(") {
                if !self.at_lexeme(")") {
                    if self.peek().map(|t| t.kind == TokenKind::Keyword).unwrap_or(false) {
                        ansi_header = true;
                        self.parse_ansi_ports(&mut module)?;
                    } else {
                        loop {
                            let id = self.expect_identifier("port")?;
                            header_port_names.push(id.lexeme);
                            if !self.eat_lexeme(",") {
                                break;
                            }
                        }
                    }
                }
                self.expect_lexeme(")")?;
            }
            self.expect_lexeme(";")?;
            Ok(())
        })();

        if header.is_err() {
            self.skip_to_next_module();
            return None;
        }

        // non-ANSI headers materialize ports now, directions patched from body
        if !ansi_header {
            for n in &header_port_names {
                module.ports.push(Port {
                    name: n.clone(),
                    direction: PortDirection::Input,
                    range: None,
                    kind: NetKind::Wire,
                });
            }
        }
        let mut direction_seen: Vec<String> = Vec::new();

        // body
        let mut failures = 0u32;
        loop {
            if self.at_end() {
                self.diag_here(DiagKind::Parse, "missing endmodule");
                break;
            }
            if self.eat_keyword("endmodule") {
                break;
            }
            if self.at_keyword("module") {
                self.diag_here(DiagKind::Parse, "missing endmodule");
                break;
            }
            match self.parse_module_item(&mut module, ansi_header, &mut direction_seen) {
                Ok(()) => {}
                Err(_) => {
                    failures += 1;
                    if failures > 50 {
                        // hopeless region: abandon to the next module
                        self.skip_to_next_module();
                        break;
                    }
                    self.resync_semi();
                }
            }
        }

        self.finish_module(&mut module, ansi_header, &header_port_names);
        Some(module)
    }

    fn skip_to_next_module(&mut self) {
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Keyword && t.lexeme == "module" {
                return;
            }
            if t.kind == TokenKind::Keyword && t.lexeme == "endmodule" {
                self.pos += 1;
                return;
            }
            self.pos += 1;
        }
    }

    fn parse_parameter_header(&mut self, module: &mut AstModule) -> PResult<()> {
        loop {
            let is_local = if self.eat_keyword("parameter") {
                false
            } else if self.eat_keyword("localparam") {
                true
            } else {
                // `#(4)`-style headers are only legal on instances
                self.diag_here(DiagKind::Parse, "expected parameter declaration");
                return Err(ParseAbort);
            };
            self.eat_keyword("integer");
            if self.at_keyword("signed") {
                self.warn_here(DiagKind::UnsupportedConstruct, "unsupported construct: signed");
                self.bump();
            }
            let range = self.try_parse_range()?;
            loop {
                let name = self.expect_identifier("parameter")?.lexeme;
                self.expect_lexeme("=")?;
                let value = self.parse_expression()?;
                module.parameters.push(Parameter {
                    name,
                    value,
                    is_local,
                    range: range.clone(),
                });
                if self.at_lexeme(",") {
                    // a following parameter keyword starts a new declaration
                    if self
                        .peek_at(1)
                        .map(|t| t.lexeme == "parameter" || t.lexeme == "localparam")
                        .unwrap_or(false)
                    {
                        self.bump();
                        break;
                    }
                    self.bump();
                    continue;
                }
                return Ok(());
            }
        }
    }

    fn parse_ansi_ports(&mut self, module: &mut AstModule) -> PResult<()> {
        let mut direction = PortDirection::Input;
        let mut kind = NetKind::Wire;
        let mut range: Option<Range> = None;
        let mut first = true;
        loop {
            let mut explicit = false;
            if self.eat_keyword("input") {
                direction = PortDirection::Input;
                explicit = true;
            } else if self.eat_keyword("output") {
                direction = PortDirection::Output;
                explicit = true;
            } else if self.eat_keyword("inout") {
                direction = PortDirection::Inout;
                explicit = true;
            } else if first {
                self.diag_here(DiagKind::Parse, "expected port direction");
                return Err(ParseAbort);
            }
            if explicit {
                kind = NetKind::Wire;
                if self.eat_keyword("wire") {
                    kind = NetKind::Wire;
                } else if self.eat_keyword("reg") || self.eat_keyword("logic") {
                    kind = NetKind::Reg;
                }
                if self.at_keyword("signed") {
                    self.warn_here(DiagKind::UnsupportedConstruct, "unsupported construct: signed");
                    self.bump();
                }
                range = self.try_parse_range()?;
            }
            let name = self.expect_identifier("port")?.lexeme;
            module.ports.push(Port {
                name,
                direction,
                range: range.clone(),
                kind,
            });
            first = false;
            if !self.eat_lexeme(",") {
                return Ok(());
            }
        }
    }

    fn try_parse_range(&mut self) -> PResult<Option<Range>> {
        if !self.at_lexeme("[") {
            return Ok(None);
        }
        self.bump();
        let msb = self.parse_expression()?;
        self.expect_lexeme(":")?;
        let lsb = self.parse_expression()?;
        self.expect_lexeme("]")?;
        Ok(Some(Range { msb, lsb }))
    }

    // ------------------------------------------------------------------
    // module items
    // ------------------------------------------------------------------

    fn parse_module_item(
        &mut self,
        module: &mut AstModule,
        ansi_header: bool,
        direction_seen: &mut Vec<String>,
    ) -> PResult<()> {
        let t = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(ParseAbort),
        };

        match (t.kind, t.lexeme.as_str()) {
            (TokenKind::Keyword, "parameter") | (TokenKind::Keyword, "localparam") => {
                let is_local = t.lexeme == "localparam";
                self.bump();
                self.eat_keyword("integer");
                if self.at_keyword("signed") {
                    self.warn_here(DiagKind::UnsupportedConstruct, "unsupported construct: signed");
                    self.bump();
                }
                let range = self.try_parse_range()?;
                loop {
                    let name = self.expect_identifier("parameter")?.lexeme;
                    self.expect_lexeme("=")?;
                    let value = self.parse_expression()?;
                    module.parameters.push(Parameter {
                        name,
                        value,
                        is_local,
                        range: range.clone(),
                    });
                    if !self.eat_lexeme(",") {
                        break;
                    }
                }
                self.expect_lexeme(";")?;
                Ok(())
            }
            (TokenKind::Keyword, "input") | (TokenKind::Keyword, "output")
            | (TokenKind::Keyword, "inout") => {
                self.parse_direction_decl(module, ansi_header, direction_seen)
            }
            (TokenKind::Keyword, "wire") | (TokenKind::Keyword, "reg")
            | (TokenKind::Keyword, "integer") | (TokenKind::Keyword, "genvar")
            | (TokenKind::Keyword, "logic") => self.parse_net_decl(module),
            (TokenKind::Keyword, "assign") => {
                self.bump();
                if self.at_lexeme("#") {
                    self.warn_here(
                        DiagKind::UnsupportedConstruct,
                        "unsupported construct: delayed continuous assign",
                    );
                    self.bump();
                    if self.peek().map(|t| t.kind == TokenKind::Number).unwrap_or(false) {
                        self.bump();
                    }
                }
                loop {
                    let target = self.parse_lvalue()?;
                    self.expect_lexeme("=")?;
                    let value = self.parse_expression()?;
                    module.items.push(ModuleItem::ContinuousAssign { target, value });
                    if !self.eat_lexeme(",") {
                        break;
                    }
                }
                self.expect_lexeme(";")?;
                Ok(())
            }
            (TokenKind::Keyword, "always") => {
                self.bump();
                let sensitivity = self.parse_sensitivity()?;
                let body = self.parse_statement()?;
                module.items.push(ModuleItem::AlwaysBlock { sensitivity, body });
                Ok(())
            }
            (TokenKind::Keyword, "always_comb") | (TokenKind::Keyword, "always_ff")
            | (TokenKind::Keyword, "always_latch") => {
                self.diag_here(
                    DiagKind::UnsupportedConstruct,
                    format!("unsupported construct: {}", t.lexeme),
                );
                Err(ParseAbort)
            }
            (TokenKind::Keyword, "initial") => {
                self.bump();
                let body = self.parse_statement()?;
                module.items.push(ModuleItem::InitialBlock { body });
                Ok(())
            }
            (TokenKind::Keyword, "generate") => {
                self.bump();
                let mut items = Vec::new();
                while !self.at_keyword("endgenerate") {
                    if self.at_end() || self.at_keyword("endmodule") {
                        self.diag_here(DiagKind::Parse, "missing endgenerate");
                        return Err(ParseAbort);
                    }
                    items.push(self.parse_generate_item()?);
                }
                self.bump();
                module.items.push(ModuleItem::GenerateRegion(items));
                Ok(())
            }
            (TokenKind::Keyword, "for") => {
                // bare generate loop at item level
                let item = self.parse_generate_item()?;
                module.items.push(ModuleItem::GenerateRegion(vec![item]));
                Ok(())
            }
            (TokenKind::Keyword, kw) if GATE_PRIMITIVES.contains(&kw) => {
                self.parse_gate_instance(module)
            }
            (TokenKind::Keyword, "defparam") => {
                self.diag_here(DiagKind::UnsupportedConstruct, "unsupported construct: defparam");
                Err(ParseAbort)
            }
            (TokenKind::Keyword, "task") | (TokenKind::Keyword, "function") => {
                let end_kw = if t.lexeme == "task" { "endtask" } else { "endfunction" };
                self.diag_here(
                    DiagKind::UnsupportedConstruct,
                    format!("unsupported construct: {}", t.lexeme),
                );
                self.bump();
                self.skip_until_keyword(end_kw);
                self.bump();
                Ok(())
            }
            (TokenKind::Keyword, "specify") => {
                self.diag_here(DiagKind::UnsupportedConstruct, "unsupported construct: specify");
                self.bump();
                self.skip_until_keyword("endspecify");
                self.bump();
                Ok(())
            }
            (TokenKind::Keyword, kw) => {
                self.diag_here(
                    DiagKind::UnsupportedConstruct,
                    format!("unsupported construct: {}", kw),
                );
                Err(ParseAbort)
            }
            (TokenKind::Identifier, _) if !t.lexeme.starts_with('$') => {
                self.parse_instantiation(module)
            }
            _ => {
                self.diag_here(
                    DiagKind::Parse,
                    format!("unexpected token '{}' in module body", t.lexeme),
                );
                Err(ParseAbort)
            }
        }
    }

    fn parse_direction_decl(
        &mut self,
        module: &mut AstModule,
        ansi_header: bool,
        direction_seen: &mut Vec<String>,
    ) -> PResult<()> {
        let dir_tok = self.bump().unwrap();
        let direction = match dir_tok.lexeme.as_str() {
            "input" => PortDirection::Input,
            "output" => PortDirection::Output,
            _ => PortDirection::Inout,
        };
        let mut kind = None;
        if self.eat_keyword("wire") {
            kind = Some(NetKind::Wire);
        } else if self.eat_keyword("reg") || self.eat_keyword("logic") {
            kind = Some(NetKind::Reg);
        }
        if self.at_keyword("signed") {
            self.warn_here(DiagKind::UnsupportedConstruct, "unsupported construct: signed");
            self.bump();
        }
        let range = self.try_parse_range()?;
        loop {
            let name_tok = self.expect_identifier("port")?;
            let name = name_tok.lexeme;
            if ansi_header {
                self.diags.push(Diagnostic::error(
                    DiagKind::Parse,
                    name_tok.line,
                    name_tok.column,
                    format!("port '{}' re-declared after ANSI header", name),
                ));
            } else if let Some(port) = module.ports.iter_mut().find(|p| p.name == name) {
                if direction_seen.contains(&name) {
                    self.diags.push(Diagnostic::error(
                        DiagKind::DuplicateName,
                        name_tok.line,
                        name_tok.column,
                        format!("duplicate direction for port '{}'", name),
                    ));
                }
                port.direction = direction;
                port.range = range.clone();
                if let Some(k) = kind {
                    port.kind = k;
                }
                direction_seen.push(name);
            } else {
                self.diags.push(Diagnostic::error(
                    DiagKind::Parse,
                    name_tok.line,
                    name_tok.column,
                    format!("'{}' is not in the module port list", name),
                ));
            }
            if !self.eat_lexeme(",") {
                break;
            }
        }
        self.expect_lexeme(";")?;
        Ok(())
    }

    fn parse_net_decl(&mut self, module: &mut AstModule) -> PResult<()> {
        let kw = self.bump().unwrap();
        let kind = match kw.lexeme.as_str() {
            "wire" => NetKind::Wire,
            "reg" | "logic" => NetKind::Reg,
            "integer" => NetKind::Integer,
            _ => NetKind::Genvar,
        };
        if self.at_keyword("signed") {
            self.warn_here(DiagKind::UnsupportedConstruct, "unsupported construct: signed");
            self.bump();
        }
        let range = self.try_parse_range()?;
        loop {
            let name_tok = self.expect_identifier("net")?;
            let name = name_tok.lexeme;
            let array = self.try_parse_range()?;
            // `reg x;` on an existing port refines the port kind
            if let Some(port) = module.ports.iter_mut().find(|p| p.name == name) {
                port.kind = if kind == NetKind::Reg { NetKind::Reg } else { port.kind };
                if port.range.is_none() {
                    port.range = range.clone();
                }
            } else {
                module.nets.push(NetDecl {
                    name: name.clone(),
                    kind,
                    range: range.clone(),
                    array,
                });
            }
            if self.eat_lexeme("=") {
                let value = self.parse_expression()?;
                module.items.push(ModuleItem::ContinuousAssign {
                    target: Expression::Ident(name),
                    value,
                });
            }
            if !self.eat_lexeme(",") {
                break;
            }
        }
        self.expect_lexeme(";")?;
        Ok(())
    }

    fn parse_gate_instance(&mut self, module: &mut AstModule) -> PResult<()> {
        let gate = self.bump().unwrap().lexeme;
        let name = if self
            .peek()
            .map(|t| t.kind == TokenKind::Identifier)
            .unwrap_or(false)
        {
            self.bump().unwrap().lexeme
        } else {
            self.gate_counter += 1;
            format!("_gp{}", self.gate_counter - 1)
        };
        self.expect_lexeme("(")?;
        let mut args = Vec::new();
        if !self.at_lexeme(")") {
            loop {
                args.push(self.parse_expression()?);
                if !self.eat_lexeme(",") {
                    break;
                }
            }
        }
        self.expect_lexeme(")")?;
        self.expect_lexeme(";")?;
        module.items.push(ModuleItem::Instantiation(Instance {
            module: gate,
            name,
            parameters: Connections::empty(),
            ports: Connections::Positional(args),
        }));
        Ok(())
    }

    fn parse_instantiation(&mut self, module: &mut AstModule) -> PResult<()> {
        let module_name = self.bump().unwrap().lexeme;
        let mut parameters = Connections::empty();
        if self.eat_lexeme("#") {
            self.expect_lexeme("(")?;
            parameters = self.parse_connections()?;
            self.expect_lexeme(")")?;
        }
        let inst_name = self.expect_identifier("instance")?.lexeme;
        if self.at_lexeme("[") {
            self.diag_here(
                DiagKind::UnsupportedConstruct,
                "unsupported construct: instance array",
            );
            return Err(ParseAbort);
        }
        self.expect_lexeme("(")?;
        let ports = if self.at_lexeme(")") {
            Connections::empty()
        } else {
            self.parse_connections()?
        };
        self.expect_lexeme(")")?;
        self.expect_lexeme(";")?;
        module.items.push(ModuleItem::Instantiation(Instance {
            module: module_name,
            name: inst_name,
            parameters,
            ports,
        }));
        Ok(())
    }

    fn parse_connections(&mut self) -> PResult<Connections> {
        if self.at_lexeme(".") {
            let mut named = Vec::new();
            let mut saw_positional = false;
            loop {
                if self.eat_lexeme(".") {
                    let port = self.expect_identifier("port")?.lexeme;
                    self.expect_lexeme("(")?;
                    let expr = if self.at_lexeme(")") {
                        None
                    } else {
                        Some(self.parse_expression()?)
                    };
                    self.expect_lexeme(")")?;
                    named.push(NamedConnection { port, expr });
                } else {
                    saw_positional = true;
                    let _ = self.parse_expression()?;
                }
                if !self.eat_lexeme(",") {
                    break;
                }
            }
            if saw_positional {
                self.diag_here(
                    DiagKind::MixedConnections,
                    "mixed named and positional connections",
                );
            }
            Ok(Connections::Named(named))
        } else {
            let mut exprs = Vec::new();
            let mut saw_named = false;
            loop {
                if self.at_lexeme(".") {
                    saw_named = true;
                    self.bump();
                    let _ = self.expect_identifier("port")?;
                    self.expect_lexeme("(")?;
                    if !self.at_lexeme(")") {
                        let _ = self.parse_expression()?;
                    }
                    self.expect_lexeme(")")?;
                } else {
                    exprs.push(self.parse_expression()?);
                }
                if !self.eat_lexeme(",") {
                    break;
                }
            }
            if saw_named {
                self.diag_here(
                    DiagKind::MixedConnections,
                    "mixed named and positional connections",
                );
            }
            Ok(Connections::Positional(exprs))
        }
    }

    fn parse_generate_item(&mut self) -> PResult<GenerateItem> {
        if self.at_keyword("for") {
            self.bump();
            self.expect_lexeme("(")?;
            self.eat_keyword("genvar");
            let var = self.expect_identifier("genvar")?.lexeme;
            self.record_use_tok(&var);
            self.expect_lexeme("=")?;
            let init = self.parse_expression()?;
            self.expect_lexeme(";")?;
            let cond = self.parse_expression()?;
            self.expect_lexeme(";")?;
            let step = self.parse_gen_step(&var)?;
            self.expect_lexeme(")")?;
            let body = self.parse_gen_block()?;
            Ok(GenerateItem::For(GenFor {
                genvar: var,
                init,
                cond,
                step,
                body,
            }))
        } else if self.at_keyword("if") {
            self.bump();
            self.expect_lexeme("(")?;
            let cond = self.parse_expression()?;
            self.expect_lexeme(")")?;
            let then_block = self.parse_gen_block()?;
            let else_block = if self.eat_keyword("else") {
                Some(self.parse_gen_block()?)
            } else {
                None
            };
            Ok(GenerateItem::If(GenIf {
                cond,
                then_block,
                else_block,
            }))
        } else {
            // plain item inside a generate region
            let mut tmp = AstModule {
                name: String::new(),
                ports: Vec::new(),
                parameters: Vec::new(),
                nets: Vec::new(),
                items: Vec::new(),
            };
            let mut seen = Vec::new();
            self.parse_module_item(&mut tmp, true, &mut seen)?;
            if !tmp.nets.is_empty() {
                // declarations outside a labeled block ride along in a
                // constant-true conditional block
                let block = GenBlock {
                    label: None,
                    decls: tmp.nets,
                    items: tmp
                        .items
                        .into_iter()
                        .map(|i| GenerateItem::Plain(Box::new(i)))
                        .collect(),
                };
                return Ok(GenerateItem::If(GenIf {
                    cond: Expression::literal(1),
                    then_block: block,
                    else_block: None,
                }));
            }
            match tmp.items.len() {
                1 => Ok(GenerateItem::Plain(Box::new(tmp.items.pop().unwrap()))),
                _ => Ok(GenerateItem::If(GenIf {
                    cond: Expression::literal(1),
                    then_block: GenBlock {
                        label: None,
                        decls: Vec::new(),
                        items: tmp
                            .items
                            .into_iter()
                            .map(|i| GenerateItem::Plain(Box::new(i)))
                            .collect(),
                    },
                    else_block: None,
                })),
            }
        }
    }

    fn parse_gen_step(&mut self, var: &str) -> PResult<Expression> {
        // `i = i + 1` or `i = i - 1`; the assigned variable must match
        let name = self.expect_identifier("genvar")?;
        if name.lexeme != var {
            self.diag_here(DiagKind::Parse, "generate step must assign the loop variable");
            return Err(ParseAbort);
        }
        self.record_use(&name.lexeme, name.line, name.column);
        self.expect_lexeme("=")?;
        self.parse_expression()
    }

    fn parse_gen_block(&mut self) -> PResult<GenBlock> {
        if self.eat_keyword("begin") {
            let label = if self.eat_lexeme(":") {
                Some(self.expect_identifier("block")?.lexeme)
            } else {
                None
            };
            let mut decls = Vec::new();
            let mut items = Vec::new();
            while !self.at_keyword("end") {
                if self.at_end() || self.at_keyword("endmodule") {
                    self.diag_here(DiagKind::Parse, "missing end in generate block");
                    return Err(ParseAbort);
                }
                if self.at_keyword("wire") || self.at_keyword("reg") || self.at_keyword("integer") {
                    let mut tmp = AstModule {
                        name: String::new(),
                        ports: Vec::new(),
                        parameters: Vec::new(),
                        nets: Vec::new(),
                        items: Vec::new(),
                    };
                    self.parse_net_decl(&mut tmp)?;
                    decls.extend(tmp.nets);
                    items.extend(
                        tmp.items
                            .into_iter()
                            .map(|i| GenerateItem::Plain(Box::new(i))),
                    );
                } else {
                    items.push(self.parse_generate_item()?);
                }
            }
            self.bump();
            Ok(GenBlock {
                label,
                decls,
                items,
            })
        } else {
            let item = self.parse_generate_item()?;
            Ok(GenBlock {
                label: None,
                decls: Vec::new(),
                items: vec![item],
            })
        }
    }

    // ------------------------------------------------------------------
    // statements
    // ------------------------------------------------------------------

    fn parse_sensitivity(&mut self) -> PResult<Sensitivity> {
        if !self.at_lexeme("@") {
            self.diag_here(
                DiagKind::UnsupportedConstruct,
                "unsupported construct: always without sensitivity list",
            );
            return Err(ParseAbort);
        }
        self.bump();
        if self.eat_lexeme("*") {
            return Ok(Sensitivity::Star);
        }
        self.expect_lexeme("(")?;
        if self.eat_lexeme("*") {
            self.expect_lexeme(")")?;
            return Ok(Sensitivity::Star);
        }
        let mut edges = Vec::new();
        let mut plain = 0u32;
        loop {
            if self.at_keyword("posedge") || self.at_keyword("negedge") {
                let pol = if self.bump().unwrap().lexeme == "posedge" {
                    EdgePolarity::Posedge
                } else {
                    EdgePolarity::Negedge
                };
                let sig = self.expect_identifier("signal")?;
                self.record_use(&sig.lexeme, sig.line, sig.column);
                edges.push(EdgeEvent {
                    polarity: pol,
                    signal: sig.lexeme,
                });
            } else {
                let sig = self.expect_identifier("signal")?;
                self.record_use(&sig.lexeme, sig.line, sig.column);
                plain += 1;
            }
            if self.eat_lexeme(",") || self.eat_keyword("or") {
                continue;
            }
            break;
        }
        self.expect_lexeme(")")?;
        if !edges.is_empty() && plain > 0 {
            self.diag_here(
                DiagKind::Parse,
                "sensitivity list mixes edge events and plain signals",
            );
            return Err(ParseAbort);
        }
        if edges.is_empty() {
            // a plain signal list is treated as combinational
            Ok(Sensitivity::Star)
        } else {
            Ok(Sensitivity::Edges(edges))
        }
    }

    fn parse_statement(&mut self) -> PResult<Statement> {
        let t = match self.peek() {
            Some(t) => t.clone(),
            None => {
                self.diag_here(DiagKind::Parse, "unexpected end of file in statement");
                return Err(ParseAbort);
            }
        };
        match (t.kind, t.lexeme.as_str()) {
            (TokenKind::Keyword, "begin") => {
                self.bump();
                let label = if self.eat_lexeme(":") {
                    Some(self.expect_identifier("block")?.lexeme)
                } else {
                    None
                };
                let mut statements = Vec::new();
                loop {
                    if self.eat_keyword("end") {
                        break;
                    }
                    if self.at_end() || self.at_keyword("endmodule") {
                        self.diag_here(DiagKind::Parse, "missing end");
                        return Err(ParseAbort);
                    }
                    match self.parse_statement() {
                        Ok(s) => statements.push(s),
                        Err(_) => self.resync_semi(),
                    }
                }
                Ok(Statement::Block { label, statements })
            }
            (TokenKind::Keyword, "if") => {
                self.bump();
                self.expect_lexeme("(")?;
                let cond = self.parse_expression()?;
                self.expect_lexeme(")")?;
                let then_branch = Box::new(self.parse_statement()?);
                let else_branch = if self.eat_keyword("else") {
                    Some(Box::new(self.parse_statement()?))
                } else {
                    None
                };
                Ok(Statement::If {
                    cond,
                    then_branch,
                    else_branch,
                })
            }
            (TokenKind::Keyword, "case") | (TokenKind::Keyword, "casex")
            | (TokenKind::Keyword, "casez") => {
                let kind = match t.lexeme.as_str() {
                    "casex" => CaseKind::Casex,
                    "casez" => CaseKind::Casez,
                    _ => CaseKind::Case,
                };
                self.bump();
                self.expect_lexeme("(")?;
                let selector = self.parse_expression()?;
                self.expect_lexeme(")")?;
                let mut arms = Vec::new();
                let mut default_count = 0;
                loop {
                    if self.eat_keyword("endcase") {
                        break;
                    }
                    if self.at_end() || self.at_keyword("endmodule") {
                        self.diag_here(DiagKind::Parse, "missing endcase");
                        return Err(ParseAbort);
                    }
                    if self.eat_keyword("default") {
                        self.eat_lexeme(":");
                        let body = self.parse_statement()?;
                        default_count += 1;
                        if default_count > 1 {
                            self.diag_here(DiagKind::Parse, "multiple default arms in case");
                        }
                        arms.push(CaseArm {
                            labels: Vec::new(),
                            is_default: true,
                            body,
                        });
                    } else {
                        let mut labels = vec![self.parse_expression()?];
                        while self.eat_lexeme(",") {
                            labels.push(self.parse_expression()?);
                        }
                        self.expect_lexeme(":")?;
                        let body = self.parse_statement()?;
                        arms.push(CaseArm {
                            labels,
                            is_default: false,
                            body,
                        });
                    }
                }
                Ok(Statement::Case {
                    kind,
                    selector,
                    arms,
                })
            }
            (TokenKind::Keyword, "for") => {
                self.bump();
                self.expect_lexeme("(")?;
                let var_tok = self.expect_identifier("loop variable")?;
                self.record_use(&var_tok.lexeme, var_tok.line, var_tok.column);
                let var = var_tok.lexeme;
                self.expect_lexeme("=")?;
                let init = self.parse_expression()?;
                self.expect_lexeme(";")?;
                let cond = self.parse_expression()?;
                self.expect_lexeme(";")?;
                let step_tok = self.expect_identifier("loop variable")?;
                if step_tok.lexeme != var {
                    self.diag_here(DiagKind::Parse, "for step must assign the loop variable");
                    return Err(ParseAbort);
                }
                self.expect_lexeme("=")?;
                let step = self.parse_expression()?;
                self.expect_lexeme(")")?;
                let body = Box::new(self.parse_statement()?);
                Ok(Statement::ForLoop {
                    var,
                    init,
                    cond,
                    step,
                    body,
                })
            }
            (TokenKind::Operator, "#") => {
                self.bump();
                let amount = match self.peek() {
                    Some(n) if n.kind == TokenKind::Number => {
                        let tok = self.bump().unwrap();
                        self.number_to_expression(&tok)?
                    }
                    _ => {
                        self.diag_here(DiagKind::Parse, "expected delay value after '#'");
                        return Err(ParseAbort);
                    }
                };
                if self.eat_lexeme(";") {
                    return Ok(Statement::Delay {
                        amount,
                        stmt: None,
                    });
                }
                let stmt = Box::new(self.parse_statement()?);
                Ok(Statement::Delay {
                    amount,
                    stmt: Some(stmt),
                })
            }
            (TokenKind::Identifier, name) if name.starts_with('$') => {
                self.bump();
                let mut args = Vec::new();
                if self.eat_lexeme("(") {
                    if !self.at_lexeme(")") {
                        loop {
                            if self.peek().map(|t| t.kind == TokenKind::String).unwrap_or(false) {
                                // string args carried as zero literals; text irrelevant here
                                self.bump();
                                args.push(Expression::literal(0));
                            } else {
                                args.push(self.parse_expression()?);
                            }
                            if !self.eat_lexeme(",") {
                                break;
                            }
                        }
                    }
                    self.expect_lexeme(")")?;
                }
                self.expect_lexeme(";")?;
                Ok(Statement::SystemCall {
                    name: name.to_string(),
                    args,
                })
            }
            (TokenKind::Punctuation, ";") => {
                self.bump();
                Ok(Statement::Empty)
            }
            (TokenKind::Keyword, kw @ ("wait" | "forever" | "repeat" | "while" | "fork"
            | "disable" | "force" | "release" | "deassign")) => {
                self.diag_here(
                    DiagKind::UnsupportedConstruct,
                    format!("unsupported construct: {}", kw),
                );
                Err(ParseAbort)
            }
            (TokenKind::Identifier, _) | (TokenKind::Punctuation, "{") => {
                let target = self.parse_lvalue()?;
                if self.eat_lexeme("<=") {
                    let value = self.parse_expression()?;
                    self.expect_lexeme(";")?;
                    Ok(Statement::NonblockingAssign { target, value })
                } else if self.eat_lexeme("=") {
                    if self.at_lexeme("#") {
                        self.warn_here(
                            DiagKind::UnsupportedConstruct,
                            "unsupported construct: intra-assignment delay",
                        );
                        self.bump();
                        if self.peek().map(|t| t.kind == TokenKind::Number).unwrap_or(false) {
                            self.bump();
                        }
                    }
                    let value = self.parse_expression()?;
                    self.expect_lexeme(";")?;
                    Ok(Statement::BlockingAssign { target, value })
                } else {
                    self.diag_here(DiagKind::Parse, "expected '=' or '<=' in assignment");
                    Err(ParseAbort)
                }
            }
            _ => {
                self.diag_here(
                    DiagKind::Parse,
                    format!("unexpected token '{}' in statement", t.lexeme),
                );
                Err(ParseAbort)
            }
        }
    }

    // ------------------------------------------------------------------
    // expressions
    // ------------------------------------------------------------------

    fn parse_lvalue(&mut self) -> PResult<Expression> {
        if self.at_lexeme("{") {
            self.bump();
            let mut parts = Vec::new();
            loop {
                parts.push(self.parse_lvalue()?);
                if !self.eat_lexeme(",") {
                    break;
                }
            }
            self.expect_lexeme("}")?;
            return Ok(Expression::Concat(parts));
        }
        let id = self.expect_identifier("assignment target")?;
        self.record_use(&id.lexeme, id.line, id.column);
        let mut expr = Expression::Ident(id.lexeme);
        expr = self.parse_selects(expr)?;
        Ok(expr)
    }

    fn parse_selects(&mut self, mut base: Expression) -> PResult<Expression> {
        while self.at_lexeme("[") {
            self.bump();
            let first = self.parse_expression()?;
            if self.eat_lexeme(":") {
                let lsb = self.parse_expression()?;
                self.expect_lexeme("]")?;
                base = Expression::PartSelect {
                    base: Box::new(base),
                    msb: Box::new(first),
                    lsb: Box::new(lsb),
                };
            } else if self.at_lexeme("+:") || self.at_lexeme("-:") {
                let ascending = self.bump().unwrap().lexeme == "+:";
                let width = self.parse_expression()?;
                self.expect_lexeme("]")?;
                base = Expression::IndexedPartSelect {
                    base: Box::new(base),
                    start: Box::new(first),
                    width: Box::new(width),
                    ascending,
                };
            } else {
                self.expect_lexeme("]")?;
                base = Expression::BitSelect {
                    base: Box::new(base),
                    index: Box::new(first),
                };
            }
        }
        Ok(base)
    }

    fn parse_expression(&mut self) -> PResult<Expression> {
        let cond = self.parse_binary(0)?;
        if self.eat_lexeme("?") {
            let then_value = self.parse_expression()?;
            self.expect_lexeme(":")?;
            let else_value = self.parse_expression()?;
            Ok(Expression::Ternary {
                cond: Box::new(cond),
                then_value: Box::new(then_value),
                else_value: Box::new(else_value),
            })
        } else {
            Ok(cond)
        }
    }

    fn binary_op(&self) -> Option<(BinaryOp, u8)> {
        let t = self.peek()?;
        if t.kind != TokenKind::Operator {
            return None;
        }
        // precedence: higher binds tighter
        let r = match t.lexeme.as_str() {
            "*" => (BinaryOp::Mul, 10),
            "/" => (BinaryOp::Div, 10),
            "+" => (BinaryOp::Add, 9),
            "-" => (BinaryOp::Sub, 9),
            "<<" => (BinaryOp::Shl, 8),
            ">>" => (BinaryOp::Shr, 8),
            "<" => (BinaryOp::Lt, 7),
            "<=" => (BinaryOp::Le, 7),
            ">" => (BinaryOp::Gt, 7),
            ">=" => (BinaryOp::Ge, 7),
            "==" => (BinaryOp::Eq, 6),
            "!=" => (BinaryOp::Ne, 6),
            "&" => (BinaryOp::BitAnd, 5),
            "^" => (BinaryOp::BitXor, 4),
            "~^" | "^~" => (BinaryOp::BitXnor, 4),
            "|" => (BinaryOp::BitOr, 3),
            "&&" => (BinaryOp::LogicalAnd, 2),
            "||" => (BinaryOp::LogicalOr, 1),
            _ => return None,
        };
        Some(r)
    }

    fn parse_binary(&mut self, min_prec: u8) -> PResult<Expression> {
        let mut lhs = self.parse_unary()?;
        while let Some((op, prec)) = self.binary_op() {
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.parse_binary(prec + 1)?;
            lhs = Expression::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<Expression> {
        let t = match self.peek() {
            Some(t) => t.clone(),
            None => {
                self.diag_here(DiagKind::Parse, "unexpected end of file in expression");
                return Err(ParseAbort);
            }
        };
        if t.kind == TokenKind::Operator {
            let op = match t.lexeme.as_str() {
                "~" => Some(UnaryOp::BitNot),
                "!" => Some(UnaryOp::LogicalNot),
                "-" => Some(UnaryOp::Negate),
                "+" => Some(UnaryOp::Identity),
                "&" => Some(UnaryOp::RedAnd),
                "|" => Some(UnaryOp::RedOr),
                "^" => Some(UnaryOp::RedXor),
                "~&" => Some(UnaryOp::RedNand),
                "~|" => Some(UnaryOp::RedNor),
                "~^" | "^~" => Some(UnaryOp::RedXnor),
                "%" => {
                    self.diag_here(
                        DiagKind::UnsupportedConstruct,
                        "unsupported construct: operator %",
                    );
                    return Err(ParseAbort);
                }
                "===" | "!==" | "<<<" | ">>>" => {
                    self.diag_here(
                        DiagKind::UnsupportedConstruct,
                        format!("unsupported construct: operator {}", t.lexeme),
                    );
                    return Err(ParseAbort);
                }
                _ => None,
            };
            if let Some(op) = op {
                self.bump();
                let operand = self.parse_unary()?;
                return Ok(Expression::Unary {
                    op,
                    operand: Box::new(operand),
                });
            }
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> PResult<Expression> {
        let t = match self.peek() {
            Some(t) => t.clone(),
            None => {
                self.diag_here(DiagKind::Parse, "unexpected end of file in expression");
                return Err(ParseAbort);
            }
        };
        match t.kind {
            TokenKind::Number => {
                self.bump();
                self.number_to_expression(&t)
            }
            TokenKind::Identifier if !t.lexeme.starts_with('$') && !t.lexeme.starts_with('`') => {
                self.bump();
                self.record_use(&t.lexeme, t.line, t.column);
                let expr = Expression::Ident(t.lexeme);
                self.parse_selects(expr)
            }
            TokenKind::Identifier if t.lexeme.starts_with('$') => {
                self.diag_here(
                    DiagKind::UnsupportedConstruct,
                    format!("unsupported construct: system function {}", t.lexeme),
                );
                Err(ParseAbort)
            }
            TokenKind::Punctuation if t.lexeme == "(" => {
                self.bump();
                let e = self.parse_expression()?;
                self.expect_lexeme(")")?;
                Ok(e)
            }
            TokenKind::Punctuation if t.lexeme == "{" => {
                self.bump();
                let first = self.parse_expression()?;
                if self.at_lexeme("{") {
                    // replication {N{expr}}
                    self.bump();
                    let value = self.parse_expression()?;
                    self.expect_lexeme("}")?;
                    self.expect_lexeme("}")?;
                    return Ok(Expression::Replicate {
                        count: Box::new(first),
                        value: Box::new(value),
                    });
                }
                let mut parts = vec![first];
                while self.eat_lexeme(",") {
                    parts.push(self.parse_expression()?);
                }
                self.expect_lexeme("}")?;
                Ok(Expression::Concat(parts))
            }
            _ => {
                self.diag_here(
                    DiagKind::Parse,
                    format!("unexpected token '{}' in expression", t.lexeme),
                );
                Err(ParseAbort)
            }
        }
    }

    fn record_use_tok(&mut self, name: &str) {
        let (line, col) = self.here();
        self.record_use(name, line, col);
    }

    /// Convert a number lexeme (possibly split across `4` + `'b0` tokens)
    /// into a `Literal` expression.
    fn number_to_expression(&mut self, tok: &Token) -> PResult<Expression> {
        let mut text = tok.lexeme.clone();
        // sized literal written with a space: `4 'b0`
        if !text.contains('\'') {
            if let Some(next) = self.peek() {
                if next.kind == TokenKind::Number && next.lexeme.starts_with('\'') {
                    text.push_str(&self.bump().unwrap().lexeme);
                }
            }
        }
        match parse_literal(&text) {
            Ok(lit) => Ok(Expression::Literal(lit)),
            Err(msg) => {
                self.diags.push(Diagnostic::error(
                    DiagKind::Parse,
                    tok.line,
                    tok.column,
                    msg,
                ));
                Err(ParseAbort)
            }
        }
    }

    // ------------------------------------------------------------------
    // post-parse checks
    // ------------------------------------------------------------------

    fn finish_module(
        &mut self,
        module: &mut AstModule,
        _ansi: bool,
        _header_ports: &[String],
    ) {
        use std::collections::HashSet;

        let mut seen: HashSet<&str> = HashSet::new();
        for p in &module.ports {
            if !seen.insert(&p.name) {
                self.diags.push(Diagnostic::error(
                    DiagKind::DuplicateName,
                    1,
                    1,
                    format!("duplicate port '{}' in module '{}'", p.name, module.name),
                ));
            }
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for n in &module.nets {
            if !seen.insert(&n.name) || module.port(&n.name).is_some() {
                self.diags.push(Diagnostic::error(
                    DiagKind::DuplicateName,
                    1,
                    1,
                    format!("duplicate net '{}' in module '{}'", n.name, module.name),
                ));
            }
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for p in &module.parameters {
            if !seen.insert(&p.name) {
                self.diags.push(Diagnostic::error(
                    DiagKind::DuplicateName,
                    1,
                    1,
                    format!(
                        "duplicate parameter '{}' in module '{}'",
                        p.name, module.name
                    ),
                ));
            }
        }

        let declared: HashSet<&str> = module.declared_names().collect();
        let mut reported: HashSet<String> = HashSet::new();
        for (name, line, col) in std::mem::take(&mut self.uses) {
            if !declared.contains(name.as_str()) && reported.insert(name.clone()) {
                self.diags.push(Diagnostic::error(
                    DiagKind::UnresolvedIdentifier,
                    line,
                    col,
                    format!("unresolved identifier '{}'", name),
                ));
            }
        }
    }
}

/// Parse a literal lexeme like `42`, `4'b1010`, `'hff`, `8'hx?`.
pub fn parse_literal(text: &str) -> Result<Literal, String> {
    let text = text.trim();
    if let Some(idx) = text.find('\'') {
        let size_part = &text[..idx];
        let width = if size_part.is_empty() {
            None
        } else {
            let digits: String = size_part.chars().filter(|c| *c != '_').collect();
            let w: u32 = digits
                .parse()
                .map_err(|_| format!("bad literal size '{}'", size_part))?;
            if w == 0 || w > 128 {
                return Err(format!("unsupported literal width {}", w));
            }
            Some(w)
        };
        let mut rest = &text[idx + 1..];
        if rest.starts_with('s') || rest.starts_with('S') {
            rest = &rest[1..];
        }
        let (base, bits_per_digit) = match rest.chars().next() {
            Some('b') | Some('B') => (LiteralBase::Bin, 1),
            Some('o') | Some('O') => (LiteralBase::Oct, 3),
            Some('h') | Some('H') => (LiteralBase::Hex, 4),
            Some('d') | Some('D') => (LiteralBase::Dec, 0),
            _ => return Err(format!("bad literal base in '{}'", text)),
        };
        let digits: Vec<char> = rest[1..].chars().filter(|c| *c != '_').collect();
        if digits.is_empty() {
            return Err(format!("literal '{}' has no digits", text));
        }
        if base == LiteralBase::Dec {
            let s: String = digits.iter().collect();
            if s.chars().all(|c| matches!(c, 'x' | 'X')) {
                return Ok(Literal {
                    width,
                    base,
                    value: 0,
                    x_mask: mask_for(width.unwrap_or(32)),
                    z_mask: 0,
                });
            }
            if s.chars().all(|c| matches!(c, 'z' | 'Z' | '?')) {
                return Ok(Literal {
                    width,
                    base,
                    value: 0,
                    x_mask: 0,
                    z_mask: mask_for(width.unwrap_or(32)),
                });
            }
            let value: u128 = s
                .parse()
                .map_err(|_| format!("bad decimal digits in '{}'", text))?;
            return Ok(Literal {
                width,
                base,
                value: value & mask_for(width.unwrap_or(128)),
                x_mask: 0,
                z_mask: 0,
            });
        }
        let mut value: u128 = 0;
        let mut x_mask: u128 = 0;
        let mut z_mask: u128 = 0;
        for c in digits {
            value = value.wrapping_shl(bits_per_digit);
            x_mask = x_mask.wrapping_shl(bits_per_digit);
            z_mask = z_mask.wrapping_shl(bits_per_digit);
            let digit_mask = mask_for(bits_per_digit);
            match c {
                'x' | 'X' => x_mask |= digit_mask,
                'z' | 'Z' | '?' => z_mask |= digit_mask,
                _ => {
                    let d = c
                        .to_digit(16)
                        .ok_or_else(|| format!("bad digit '{}' in '{}'", c, text))?;
                    if d as u128 > digit_mask {
                        return Err(format!("digit '{}' out of range for base", c));
                    }
                    value |= d as u128;
                }
            }
        }
        let m = mask_for(width.unwrap_or(128));
        Ok(Literal {
            width,
            base,
            value: value & m,
            x_mask: x_mask & m,
            z_mask: z_mask & m,
        })
    } else {
        // plain decimal, possibly a real used in delays (fraction dropped)
        let whole = text.split('.').next().unwrap_or("0");
        let digits: String = whole.chars().filter(|c| *c != '_').collect();
        let value: u128 = digits
            .parse()
            .map_err(|_| format!("bad number '{}'", text))?;
        Ok(Literal::unsized_dec(value))
    }
}

pub(crate) fn mask_for(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(src: &str) -> ParseOutcome {
        parse_design(src).expect("lexing should succeed")
    }

    #[test]
    fn minimal_passthrough() {
        let out = parse_ok("module m(input a, output y); assign y = a; endmodule");
        assert_eq!(out.modules.len(), 1);
        let m = &out.modules[0];
        assert_eq!(m.ports.len(), 2);
        assert_eq!(m.ports[0].direction, PortDirection::Input);
        assert_eq!(m.ports[1].direction, PortDirection::Output);
        assert_eq!(m.items.len(), 1);
        assert!(matches!(m.items[0], ModuleItem::ContinuousAssign { .. }));
        assert!(!out.has_errors());
    }

    #[test]
    fn alu_shape() {
        let src = r#"
module alu(input [3:0] A, input [3:0] B, input [2:0] ALUOp,
           output reg [7:0] Result, output Zero);
  always @(*) begin
    case (ALUOp)
      3'b000: Result = A + B;
      3'b001: Result = A - B;
      3'b010: Result = A & B;
      3'b011: Result = A | B;
      3'b100: Result = A * B;
      default: Result = 8'b0;
    endcase
  end
  assign Zero = (Result == 8'b0);
endmodule
"#;
        let out = parse_ok(src);
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        let m = &out.modules[0];
        let inputs = m
            .ports
            .iter()
            .filter(|p| p.direction == PortDirection::Input)
            .count();
        let outputs = m
            .ports
            .iter()
            .filter(|p| p.direction == PortDirection::Output)
            .count();
        assert_eq!((inputs, outputs), (3, 2));
        let always = m
            .items
            .iter()
            .find_map(|i| match i {
                ModuleItem::AlwaysBlock { sensitivity, body } => Some((sensitivity, body)),
                _ => None,
            })
            .expect("always block");
        assert_eq!(*always.0, Sensitivity::Star);
        // the always body holds a case with a default arm
        fn find_case(s: &Statement) -> Option<&Vec<CaseArm>> {
            match s {
                Statement::Case { arms, .. } => Some(arms),
                Statement::Block { statements, .. } => statements.iter().find_map(find_case),
                _ => None,
            }
        }
        let arms = find_case(always.1).expect("case statement");
        assert!(arms.iter().any(|a| a.is_default));
    }

    #[test]
    fn interface_is_unsupported() {
        let out = parse_ok("interface ifc; endinterface");
        assert!(out.modules.is_empty());
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.kind == DiagKind::UnsupportedConstruct
                && d.message.contains("interface")));
    }

    #[test]
    fn non_ansi_ports() {
        let src = "module m(a, y); input [3:0] a; output y; reg y; assign y = a[0]; endmodule";
        let out = parse_ok(src);
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        let m = &out.modules[0];
        assert_eq!(m.ports[0].direction, PortDirection::Input);
        assert!(m.ports[0].range.is_some());
        assert_eq!(m.ports[1].kind, NetKind::Reg);
    }

    #[test]
    fn unresolved_identifier_reported() {
        let out = parse_ok("module m(output y); assign y = BAUD_RATE; endmodule");
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.kind == DiagKind::UnresolvedIdentifier
                && d.message.contains("BAUD_RATE")));
    }

    #[test]
    fn error_recovery_keeps_later_modules() {
        let src = "module bad(input a; output y); junk junk junk\nmodule good(input a, output y); assign y = a; endmodule";
        let out = parse_ok(src);
        assert!(out.modules.iter().any(|m| m.name == "good"));
        assert!(out.has_errors());
    }

    #[test]
    fn instantiation_named_and_positional() {
        let src = r#"
module top(input a, output y);
  wire t;
  buf1 u0 (.x(a), .z(t));
  buf1 u1 (t, y);
endmodule
"#;
        let out = parse_ok(src);
        let m = &out.modules[0];
        let insts: Vec<_> = m
            .items
            .iter()
            .filter_map(|i| match i {
                ModuleItem::Instantiation(inst) => Some(inst),
                _ => None,
            })
            .collect();
        assert_eq!(insts.len(), 2);
        assert!(matches!(insts[0].ports, Connections::Named(_)));
        assert!(matches!(insts[1].ports, Connections::Positional(_)));
    }

    #[test]
    fn mixed_connections_diagnosed() {
        let src = "module top(input a, output y); buf1 u0 (.x(a), y); endmodule";
        let out = parse_ok(src);
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.kind == DiagKind::MixedConnections));
    }

    #[test]
    fn generate_for_parses() {
        let src = r#"
module g(input [1:0] a, output [1:0] y);
  genvar i;
  generate
    for (i = 0; i < 2; i = i + 1) begin : gen
      assign y[i] = a[i];
    end
  endgenerate
endmodule
"#;
        let out = parse_ok(src);
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        assert!(matches!(
            out.modules[0].items[0],
            ModuleItem::GenerateRegion(_)
        ));
    }

    #[test]
    fn define_substitution() {
        let src = "`define WIDTH 4\nmodule m(output [`WIDTH-1:0] y); assign y = 0; endmodule";
        let out = parse_ok(src);
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        let m = &out.modules[0];
        assert!(m.ports[0].range.is_some());
    }

    #[test]
    fn multiple_defaults_diagnosed() {
        let src = r#"
module m(input [1:0] s, output reg y);
  always @(*) case (s)
    2'b00: y = 1'b0;
    default: y = 1'b1;
    default: y = 1'b0;
  endcase
endmodule
"#;
        let out = parse_ok(src);
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.message.contains("multiple default")));
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(parse_literal("42").unwrap().value, 42);
        let l = parse_literal("4'b1010").unwrap();
        assert_eq!((l.width, l.value), (Some(4), 10));
        let l = parse_literal("8'hzz").unwrap();
        assert_eq!(l.z_mask, 0xff);
        let l = parse_literal("'hff").unwrap();
        assert_eq!((l.width, l.value), (None, 255));
        assert!(parse_literal("4'q0").is_err());
    }

    #[test]
    fn testbench_constructs_parse() {
        let src = r#"
module tb;
  reg clk;
  initial begin
    clk = 0;
    #10 clk = 1;
    #10 $finish;
  end
endmodule
"#;
        let out = parse_ok(src);
        assert_eq!(out.modules.len(), 1);
        assert!(out.modules[0].ports.is_empty());
    }
}
