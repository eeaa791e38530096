// SPDX-License-Identifier: Apache-2.0

//! Abstract syntax tree for the supported Verilog subset.
//!
//! Nodes are position-free so structural equality can be used directly for
//! round-trip checks; the parser reports positions through diagnostics
//! instead.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortDirection {
    Input,
    Output,
    Inout,
}

impl fmt::Display for PortDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortDirection::Input => write!(f, "input"),
            PortDirection::Output => write!(f, "output"),
            PortDirection::Inout => write!(f, "inout"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    Wire,
    Reg,
    Integer,
    Genvar,
}

impl fmt::Display for NetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetKind::Wire => write!(f, "wire"),
            NetKind::Reg => write!(f, "reg"),
            NetKind::Integer => write!(f, "integer"),
            NetKind::Genvar => write!(f, "genvar"),
        }
    }
}

/// `[msb:lsb]` with arbitrary (possibly parameterized) bound expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Range {
    pub msb: Expression,
    pub lsb: Expression,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Port {
    pub name: String,
    pub direction: PortDirection,
    /// Bit range; `None` means a scalar (`0:0` after elaboration).
    pub range: Option<Range>,
    pub kind: NetKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Parameter {
    pub name: String,
    pub value: Expression,
    pub is_local: bool,
    pub range: Option<Range>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetDecl {
    pub name: String,
    pub kind: NetKind,
    pub range: Option<Range>,
    /// Second dimension for memories: `reg [7:0] m [0:15]`.
    pub array: Option<Range>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sensitivity {
    /// `@*` / `@(*)` or a plain signal list, all treated as combinational.
    Star,
    /// Nonempty list of edge events.
    Edges(Vec<EdgeEvent>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeEvent {
    pub polarity: EdgePolarity,
    pub signal: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgePolarity {
    Posedge,
    Negedge,
}

impl fmt::Display for EdgePolarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgePolarity::Posedge => write!(f, "posedge"),
            EdgePolarity::Negedge => write!(f, "negedge"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModuleItem {
    ContinuousAssign {
        target: Expression,
        value: Expression,
    },
    AlwaysBlock {
        sensitivity: Sensitivity,
        body: Statement,
    },
    InitialBlock {
        body: Statement,
    },
    Instantiation(Instance),
    GenerateRegion(Vec<GenerateItem>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub module: String,
    pub name: String,
    pub parameters: Connections,
    pub ports: Connections,
}

/// Port or parameter bindings: all named or all positional, never mixed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Connections {
    Named(Vec<NamedConnection>),
    Positional(Vec<Expression>),
}

impl Connections {
    pub fn empty() -> Self {
        Connections::Positional(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Connections::Named(v) => v.is_empty(),
            Connections::Positional(v) => v.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NamedConnection {
    pub port: String,
    /// `None` for explicitly unconnected `.port()`.
    pub expr: Option<Expression>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GenerateItem {
    For(GenFor),
    If(GenIf),
    Plain(Box<ModuleItem>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenFor {
    pub genvar: String,
    pub init: Expression,
    pub cond: Expression,
    pub step: Expression,
    pub body: GenBlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenIf {
    pub cond: Expression,
    pub then_block: GenBlock,
    pub else_block: Option<GenBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenBlock {
    pub label: Option<String>,
    pub decls: Vec<NetDecl>,
    pub items: Vec<GenerateItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    Case,
    Casex,
    Casez,
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseKind::Case => write!(f, "case"),
            CaseKind::Casex => write!(f, "casex"),
            CaseKind::Casez => write!(f, "casez"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CaseArm {
    /// Empty labels + `is_default` marks the default arm.
    pub labels: Vec<Expression>,
    pub is_default: bool,
    pub body: Statement,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statement {
    BlockingAssign {
        target: Expression,
        value: Expression,
    },
    NonblockingAssign {
        target: Expression,
        value: Expression,
    },
    If {
        cond: Expression,
        then_branch: Box<Statement>,
        else_branch: Option<Box<Statement>>,
    },
    Case {
        kind: CaseKind,
        selector: Expression,
        arms: Vec<CaseArm>,
    },
    Block {
        label: Option<String>,
        statements: Vec<Statement>,
    },
    ForLoop {
        var: String,
        init: Expression,
        cond: Expression,
        step: Expression,
        body: Box<Statement>,
    },
    /// `#n` or `#n stmt`; kept for testbench classification, outside the
    /// synthesizable subset.
    Delay {
        amount: Expression,
        stmt: Option<Box<Statement>>,
    },
    /// `$display(...)`, `$finish`, `$readmemh(...)`, ...
    SystemCall {
        name: String,
        args: Vec<Expression>,
    },
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LiteralBase {
    Dec,
    Bin,
    Oct,
    Hex,
}

/// A sized or unsized numeric literal, normalized at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub width: Option<u32>,
    pub base: LiteralBase,
    /// Bit value with x/z digits forced to zero.
    pub value: u128,
    /// Bits that were written as `x` (or `?`/`z` in `x_mask|z_mask`).
    pub x_mask: u128,
    pub z_mask: u128,
}

impl Literal {
    pub fn unsized_dec(value: u128) -> Self {
        Literal {
            width: None,
            base: LiteralBase::Dec,
            value,
            x_mask: 0,
            z_mask: 0,
        }
    }

    pub fn sized(width: u32, value: u128) -> Self {
        Literal {
            width: Some(width),
            base: LiteralBase::Dec,
            value,
            x_mask: 0,
            z_mask: 0,
        }
    }

    /// Self-determined width: explicit size, else the 32-bit default.
    pub fn self_width(&self) -> u32 {
        self.width.unwrap_or(32)
    }

    pub fn has_xz(&self) -> bool {
        self.x_mask != 0 || self.z_mask != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    BitNot,
    LogicalNot,
    Negate,
    Identity,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    BitAnd,
    BitOr,
    BitXor,
    BitXnor,
    LogicalAnd,
    LogicalOr,
    Shl,
    Shr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl BinaryOp {
    /// Short mnemonic used for graph node labels.
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::BitAnd => "and",
            BinaryOp::BitOr => "or",
            BinaryOp::BitXor => "xor",
            BinaryOp::BitXnor => "xnor",
            BinaryOp::LogicalAnd => "land",
            BinaryOp::LogicalOr => "lor",
            BinaryOp::Shl => "shl",
            BinaryOp::Shr => "shr",
            BinaryOp::Lt => "lt",
            BinaryOp::Gt => "gt",
            BinaryOp::Le => "le",
            BinaryOp::Ge => "ge",
            BinaryOp::Eq => "eq",
            BinaryOp::Ne => "ne",
        }
    }
}

impl UnaryOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            UnaryOp::BitNot => "not",
            UnaryOp::LogicalNot => "lnot",
            UnaryOp::Negate => "neg",
            UnaryOp::Identity => "pos",
            UnaryOp::RedAnd => "rand",
            UnaryOp::RedOr => "ror",
            UnaryOp::RedXor => "rxor",
            UnaryOp::RedNand => "rnand",
            UnaryOp::RedNor => "rnor",
            UnaryOp::RedXnor => "rxnor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expression {
    Literal(Literal),
    Ident(String),
    BitSelect {
        base: Box<Expression>,
        index: Box<Expression>,
    },
    PartSelect {
        base: Box<Expression>,
        msb: Box<Expression>,
        lsb: Box<Expression>,
    },
    /// `base[start +: width]` / `base[start -: width]`; folded into a plain
    /// part select during elaboration.
    IndexedPartSelect {
        base: Box<Expression>,
        start: Box<Expression>,
        width: Box<Expression>,
        ascending: bool,
    },
    Concat(Vec<Expression>),
    Replicate {
        count: Box<Expression>,
        value: Box<Expression>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expression>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expression>,
        rhs: Box<Expression>,
    },
    Ternary {
        cond: Box<Expression>,
        then_value: Box<Expression>,
        else_value: Box<Expression>,
    },
}

impl Expression {
    pub fn ident(name: impl Into<String>) -> Self {
        Expression::Ident(name.into())
    }

    pub fn literal(value: u128) -> Self {
        Expression::Literal(Literal::unsized_dec(value))
    }

    /// Name at the root of an lvalue, if it is a plain (possibly selected)
    /// reference.
    pub fn base_name(&self) -> Option<&str> {
        match self {
            Expression::Ident(n) => Some(n),
            Expression::BitSelect { base, .. }
            | Expression::PartSelect { base, .. }
            | Expression::IndexedPartSelect { base, .. } => base.base_name(),
            _ => None,
        }
    }

    /// All identifier names referenced anywhere in the expression.
    pub fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expression::Literal(_) => {}
            Expression::Ident(n) => out.push(n),
            Expression::BitSelect { base, index } => {
                base.collect_idents(out);
                index.collect_idents(out);
            }
            Expression::PartSelect { base, msb, lsb } => {
                base.collect_idents(out);
                msb.collect_idents(out);
                lsb.collect_idents(out);
            }
            Expression::IndexedPartSelect {
                base, start, width, ..
            } => {
                base.collect_idents(out);
                start.collect_idents(out);
                width.collect_idents(out);
            }
            Expression::Concat(parts) => {
                for p in parts {
                    p.collect_idents(out);
                }
            }
            Expression::Replicate { count, value } => {
                count.collect_idents(out);
                value.collect_idents(out);
            }
            Expression::Unary { operand, .. } => operand.collect_idents(out),
            Expression::Binary { lhs, rhs, .. } => {
                lhs.collect_idents(out);
                rhs.collect_idents(out);
            }
            Expression::Ternary {
                cond,
                then_value,
                else_value,
            } => {
                cond.collect_idents(out);
                then_value.collect_idents(out);
                else_value.collect_idents(out);
            }
        }
    }
}

/// One parsed `module` ... `endmodule` region.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AstModule {
    pub name: String,
    pub ports: Vec<Port>,
    pub parameters: Vec<Parameter>,
    pub nets: Vec<NetDecl>,
    pub items: Vec<ModuleItem>,
}

impl AstModule {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn net(&self, name: &str) -> Option<&NetDecl> {
        self.nets.iter().find(|n| n.name == name)
    }

    /// Ports plus internal declarations, the full signal namespace.
    pub fn declared_names(&self) -> impl Iterator<Item = &str> {
        self.ports
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.nets.iter().map(|n| n.name.as_str()))
            .chain(self.parameters.iter().map(|p| p.name.as_str()))
    }
}
