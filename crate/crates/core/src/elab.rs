// SPDX-License-Identifier: Apache-2.0

//! Elaboration: parameter resolution, generate expansion, completeness
//! checking, and hierarchy flattening.
//!
//! Flattening is semantics-preserving inlining: child ports become renamed
//! internal nets (instance path joined with `__`) connected to the parent's
//! actual expressions through inserted continuous assigns; inout ports
//! alias nets directly. Gate primitive instances are lowered to equivalent
//! continuous assigns so the flat module contains no instantiations at all.

use crate::ast::*;
use crate::diag::{DiagKind, Diagnostic};
use crate::parser::mask_for;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

/// Hierarchy depth cap.
pub const MAX_DEPTH: u32 = 32;
/// Expansion size cap (items after generate/loop expansion and inlining).
pub const MAX_ITEMS: usize = 100_000;
/// Per-loop iteration cap.
pub const MAX_LOOP_ITERS: i128 = 65_536;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElabError {
    #[error("non-constant expression in {0}")]
    NonConstant(String),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("division by zero in {0}")]
    DivideByZero(String),
    #[error("unknown top module '{0}'")]
    UnknownTop(String),
    #[error("module '{0}' is not defined")]
    UnknownModule(String),
    #[error("recursive instantiation: {0}")]
    RecursiveInstantiation(String),
    #[error("hierarchy depth exceeds {0}")]
    DepthExceeded(u32),
    #[error("expansion exceeds {0} items")]
    SizeExceeded(usize),
    #[error("unresolved width for '{0}'")]
    UnresolvedWidth(String),
    #[error("invalid connection: {0}")]
    InvalidConnection(String),
}

/// One inlined instance: where it sits in the hierarchy and what it was.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InlineEntry {
    /// Instance path joined with `__` (e.g. `u_alu` or `u0__u1`).
    pub path: String,
    /// Source module name.
    pub module: String,
}

/// A fully elaborated, hierarchy-free design.
#[derive(Debug, Clone)]
pub struct FlatDesign {
    pub top: String,
    pub module: AstModule,
    pub inline_map: Vec<InlineEntry>,
    /// Every net/port name mapped to its resolved `(msb, lsb)`.
    pub resolved_widths: BTreeMap<String, (i64, i64)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl FlatDesign {
    pub fn net_width(&self, name: &str) -> Option<u32> {
        self.resolved_widths
            .get(name)
            .map(|&(msb, lsb)| (msb - lsb).unsigned_abs() as u32 + 1)
    }

    /// Names of memory (2-D reg) declarations.
    pub fn memory_names(&self) -> BTreeSet<&str> {
        self.module
            .nets
            .iter()
            .filter(|n| n.array.is_some())
            .map(|n| n.name.as_str())
            .collect()
    }

    /// Context-free width of an expression; errors if any node cannot be
    /// given a positive width.
    pub fn expr_width(&self, expr: &Expression) -> Result<u32, ElabError> {
        expr_width(expr, self)
    }

    /// Validate the flat-design invariants: no instantiations or generate
    /// regions, unique nets, every expression width resolved.
    pub fn validate(&self) -> Result<(), ElabError> {
        for item in &self.module.items {
            match item {
                ModuleItem::Instantiation(i) => {
                    return Err(ElabError::InvalidConnection(format!(
                        "residual instantiation '{}'",
                        i.name
                    )))
                }
                ModuleItem::GenerateRegion(_) => {
                    return Err(ElabError::InvalidConnection(
                        "residual generate region".into(),
                    ))
                }
                _ => {}
            }
        }
        let mut seen = HashSet::new();
        for name in self.module.declared_names() {
            if !seen.insert(name) {
                return Err(ElabError::InvalidConnection(format!(
                    "duplicate net '{}'",
                    name
                )));
            }
        }
        let mut exprs = Vec::new();
        collect_item_exprs(&self.module.items, &mut exprs);
        for e in exprs {
            let w = expr_width(e, self)?;
            if w == 0 {
                return Err(ElabError::UnresolvedWidth(crate::emit::render_expression(e)));
            }
        }
        Ok(())
    }
}

// ----------------------------------------------------------------------
// constant folding
// ----------------------------------------------------------------------

type Env = HashMap<String, i128>;

/// Fold a constant expression under `env`; identifiers outside `env` are
/// non-constant.
pub fn fold_const(expr: &Expression, env: &Env) -> Result<i128, ElabError> {
    match expr {
        Expression::Literal(lit) => {
            if lit.has_xz() {
                return Err(ElabError::NonConstant("x/z literal".into()));
            }
            Ok(lit.value as i128)
        }
        Expression::Ident(n) => env
            .get(n)
            .copied()
            .ok_or_else(|| ElabError::NonConstant(n.clone())),
        Expression::Unary { op, operand } => {
            let v = fold_const(operand, env)?;
            Ok(match op {
                UnaryOp::Negate => -v,
                UnaryOp::Identity => v,
                UnaryOp::BitNot => !v,
                UnaryOp::LogicalNot => i128::from(v == 0),
                UnaryOp::RedAnd => i128::from((v as u32) == u32::MAX),
                UnaryOp::RedOr => i128::from((v as u32) != 0),
                UnaryOp::RedXor => i128::from((v as u32).count_ones() % 2 == 1),
                UnaryOp::RedNand => i128::from((v as u32) != u32::MAX),
                UnaryOp::RedNor => i128::from((v as u32) == 0),
                UnaryOp::RedXnor => i128::from((v as u32).count_ones() % 2 == 0),
            })
        }
        Expression::Binary { op, lhs, rhs } => {
            let a = fold_const(lhs, env)?;
            let b = fold_const(rhs, env)?;
            Ok(match op {
                BinaryOp::Add => a.wrapping_add(b),
                BinaryOp::Sub => a.wrapping_sub(b),
                BinaryOp::Mul => a.wrapping_mul(b),
                BinaryOp::Div => {
                    if b == 0 {
                        return Err(ElabError::DivideByZero(crate::emit::render_expression(
                            expr,
                        )));
                    }
                    a / b
                }
                BinaryOp::BitAnd => a & b,
                BinaryOp::BitOr => a | b,
                BinaryOp::BitXor => a ^ b,
                BinaryOp::BitXnor => !(a ^ b),
                BinaryOp::LogicalAnd => i128::from(a != 0 && b != 0),
                BinaryOp::LogicalOr => i128::from(a != 0 || b != 0),
                BinaryOp::Shl => {
                    if b >= 128 || b < 0 {
                        0
                    } else {
                        a.wrapping_shl(b as u32)
                    }
                }
                BinaryOp::Shr => {
                    if b >= 128 || b < 0 {
                        0
                    } else {
                        ((a as u128) >> b as u32) as i128
                    }
                }
                BinaryOp::Lt => i128::from(a < b),
                BinaryOp::Gt => i128::from(a > b),
                BinaryOp::Le => i128::from(a <= b),
                BinaryOp::Ge => i128::from(a >= b),
                BinaryOp::Eq => i128::from(a == b),
                BinaryOp::Ne => i128::from(a != b),
            })
        }
        Expression::Ternary {
            cond,
            then_value,
            else_value,
        } => {
            if fold_const(cond, env)? != 0 {
                fold_const(then_value, env)
            } else {
                fold_const(else_value, env)
            }
        }
        _ => Err(ElabError::NonConstant(crate::emit::render_expression(expr))),
    }
}

fn literal_expr(v: i128) -> Expression {
    if v >= 0 {
        Expression::Literal(Literal::unsized_dec(v as u128))
    } else {
        Expression::Unary {
            op: UnaryOp::Negate,
            operand: Box::new(Expression::Literal(Literal::unsized_dec(
                v.unsigned_abs(),
            ))),
        }
    }
}

// ----------------------------------------------------------------------
// substitution
// ----------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Subst {
    Value(i128),
    Rename(String),
}

type SubstMap = HashMap<String, Subst>;

fn subst_expr(expr: &Expression, map: &SubstMap) -> Expression {
    match expr {
        Expression::Literal(_) => expr.clone(),
        Expression::Ident(n) => match map.get(n) {
            Some(Subst::Value(v)) => literal_expr(*v),
            Some(Subst::Rename(r)) => Expression::Ident(r.clone()),
            None => expr.clone(),
        },
        Expression::BitSelect { base, index } => Expression::BitSelect {
            base: Box::new(subst_expr(base, map)),
            index: Box::new(subst_expr(index, map)),
        },
        Expression::PartSelect { base, msb, lsb } => Expression::PartSelect {
            base: Box::new(subst_expr(base, map)),
            msb: Box::new(subst_expr(msb, map)),
            lsb: Box::new(subst_expr(lsb, map)),
        },
        Expression::IndexedPartSelect {
            base,
            start,
            width,
            ascending,
        } => Expression::IndexedPartSelect {
            base: Box::new(subst_expr(base, map)),
            start: Box::new(subst_expr(start, map)),
            width: Box::new(subst_expr(width, map)),
            ascending: *ascending,
        },
        Expression::Concat(parts) => {
            Expression::Concat(parts.iter().map(|p| subst_expr(p, map)).collect())
        }
        Expression::Replicate { count, value } => Expression::Replicate {
            count: Box::new(subst_expr(count, map)),
            value: Box::new(subst_expr(value, map)),
        },
        Expression::Unary { op, operand } => Expression::Unary {
            op: *op,
            operand: Box::new(subst_expr(operand, map)),
        },
        Expression::Binary { op, lhs, rhs } => Expression::Binary {
            op: *op,
            lhs: Box::new(subst_expr(lhs, map)),
            rhs: Box::new(subst_expr(rhs, map)),
        },
        Expression::Ternary {
            cond,
            then_value,
            else_value,
        } => Expression::Ternary {
            cond: Box::new(subst_expr(cond, map)),
            then_value: Box::new(subst_expr(then_value, map)),
            else_value: Box::new(subst_expr(else_value, map)),
        },
    }
}

fn subst_stmt(stmt: &Statement, map: &SubstMap) -> Statement {
    match stmt {
        Statement::BlockingAssign { target, value } => Statement::BlockingAssign {
            target: subst_expr(target, map),
            value: subst_expr(value, map),
        },
        Statement::NonblockingAssign { target, value } => Statement::NonblockingAssign {
            target: subst_expr(target, map),
            value: subst_expr(value, map),
        },
        Statement::If {
            cond,
            then_branch,
            else_branch,
        } => Statement::If {
            cond: subst_expr(cond, map),
            then_branch: Box::new(subst_stmt(then_branch, map)),
            else_branch: else_branch.as_ref().map(|e| Box::new(subst_stmt(e, map))),
        },
        Statement::Case {
            kind,
            selector,
            arms,
        } => Statement::Case {
            kind: *kind,
            selector: subst_expr(selector, map),
            arms: arms
                .iter()
                .map(|a| CaseArm {
                    labels: a.labels.iter().map(|l| subst_expr(l, map)).collect(),
                    is_default: a.is_default,
                    body: subst_stmt(&a.body, map),
                })
                .collect(),
        },
        Statement::Block { label, statements } => Statement::Block {
            label: label.clone(),
            statements: statements.iter().map(|s| subst_stmt(s, map)).collect(),
        },
        Statement::ForLoop {
            var,
            init,
            cond,
            step,
            body,
        } => {
            // the loop variable shadows any outer binding
            let mut inner = map.clone();
            inner.remove(var);
            Statement::ForLoop {
                var: var.clone(),
                init: subst_expr(init, map),
                cond: subst_expr(cond, &inner),
                step: subst_expr(step, &inner),
                body: Box::new(subst_stmt(body, &inner)),
            }
        }
        Statement::Delay { amount, stmt } => Statement::Delay {
            amount: subst_expr(amount, map),
            stmt: stmt.as_ref().map(|s| Box::new(subst_stmt(s, map))),
        },
        Statement::SystemCall { name, args } => Statement::SystemCall {
            name: name.clone(),
            args: args.iter().map(|a| subst_expr(a, map)).collect(),
        },
        Statement::Empty => Statement::Empty,
    }
}

fn subst_item(item: &ModuleItem, map: &SubstMap) -> ModuleItem {
    match item {
        ModuleItem::ContinuousAssign { target, value } => ModuleItem::ContinuousAssign {
            target: subst_expr(target, map),
            value: subst_expr(value, map),
        },
        ModuleItem::AlwaysBlock { sensitivity, body } => ModuleItem::AlwaysBlock {
            sensitivity: subst_sensitivity(sensitivity, map),
            body: subst_stmt(body, map),
        },
        ModuleItem::InitialBlock { body } => ModuleItem::InitialBlock {
            body: subst_stmt(body, map),
        },
        ModuleItem::Instantiation(inst) => ModuleItem::Instantiation(Instance {
            module: inst.module.clone(),
            name: inst.name.clone(),
            parameters: subst_connections(&inst.parameters, map),
            ports: subst_connections(&inst.ports, map),
        }),
        ModuleItem::GenerateRegion(items) => {
            ModuleItem::GenerateRegion(items.iter().map(|g| subst_gen_item(g, map)).collect())
        }
    }
}

fn subst_sensitivity(s: &Sensitivity, map: &SubstMap) -> Sensitivity {
    match s {
        Sensitivity::Star => Sensitivity::Star,
        Sensitivity::Edges(events) => Sensitivity::Edges(
            events
                .iter()
                .map(|e| EdgeEvent {
                    polarity: e.polarity,
                    signal: match map.get(&e.signal) {
                        Some(Subst::Rename(r)) => r.clone(),
                        _ => e.signal.clone(),
                    },
                })
                .collect(),
        ),
    }
}

fn subst_connections(c: &Connections, map: &SubstMap) -> Connections {
    match c {
        Connections::Named(list) => Connections::Named(
            list.iter()
                .map(|nc| NamedConnection {
                    port: nc.port.clone(),
                    expr: nc.expr.as_ref().map(|e| subst_expr(e, map)),
                })
                .collect(),
        ),
        Connections::Positional(list) => {
            Connections::Positional(list.iter().map(|e| subst_expr(e, map)).collect())
        }
    }
}

fn subst_gen_item(g: &GenerateItem, map: &SubstMap) -> GenerateItem {
    match g {
        GenerateItem::For(f) => {
            let mut inner = map.clone();
            inner.remove(&f.genvar);
            GenerateItem::For(GenFor {
                genvar: f.genvar.clone(),
                init: subst_expr(&f.init, map),
                cond: subst_expr(&f.cond, &inner),
                step: subst_expr(&f.step, &inner),
                body: subst_gen_block(&f.body, &inner),
            })
        }
        GenerateItem::If(gif) => GenerateItem::If(GenIf {
            cond: subst_expr(&gif.cond, map),
            then_block: subst_gen_block(&gif.then_block, map),
            else_block: gif.else_block.as_ref().map(|b| subst_gen_block(b, map)),
        }),
        GenerateItem::Plain(item) => GenerateItem::Plain(Box::new(subst_item(item, map))),
    }
}

fn subst_gen_block(b: &GenBlock, map: &SubstMap) -> GenBlock {
    GenBlock {
        label: b.label.clone(),
        decls: b
            .decls
            .iter()
            .map(|d| NetDecl {
                name: d.name.clone(),
                kind: d.kind,
                range: d.range.as_ref().map(|r| Range {
                    msb: subst_expr(&r.msb, map),
                    lsb: subst_expr(&r.lsb, map),
                }),
                array: d.array.as_ref().map(|r| Range {
                    msb: subst_expr(&r.msb, map),
                    lsb: subst_expr(&r.lsb, map),
                }),
            })
            .collect(),
        items: b.items.iter().map(|i| subst_gen_item(i, map)).collect(),
    }
}

// ----------------------------------------------------------------------
// parameter resolution and generate expansion
// ----------------------------------------------------------------------

/// Resolve parameters (with `overrides` applied to non-local parameters),
/// expand generate regions, unroll procedural for loops, and fold ranges
/// to integer literals.
pub fn resolve_parameters(
    module: &AstModule,
    overrides: &BTreeMap<String, i128>,
) -> Result<AstModule, ElabError> {
    for name in overrides.keys() {
        let declared = module
            .parameters
            .iter()
            .any(|p| !p.is_local && &p.name == name);
        if !declared {
            return Err(ElabError::UnknownParameter(name.clone()));
        }
    }

    let mut env: Env = HashMap::new();
    for p in &module.parameters {
        let value = if !p.is_local {
            match overrides.get(&p.name) {
                Some(v) => *v,
                None => fold_const(&p.value, &env)?,
            }
        } else {
            fold_const(&p.value, &env)?
        };
        env.insert(p.name.clone(), value);
    }

    let map: SubstMap = env
        .iter()
        .map(|(k, v)| (k.clone(), Subst::Value(*v)))
        .collect();

    let mut out = AstModule {
        name: module.name.clone(),
        ports: Vec::new(),
        parameters: Vec::new(),
        nets: Vec::new(),
        items: Vec::new(),
    };
    for p in &module.parameters {
        out.parameters.push(Parameter {
            name: p.name.clone(),
            value: literal_expr(env[&p.name]),
            is_local: p.is_local,
            range: None,
        });
    }
    for p in &module.ports {
        out.ports.push(Port {
            name: p.name.clone(),
            direction: p.direction,
            range: fold_range(&p.range, &map, &env, &p.name)?,
            kind: p.kind,
        });
    }
    for n in &module.nets {
        if n.kind == NetKind::Genvar {
            continue; // consumed by generate expansion
        }
        out.nets.push(NetDecl {
            name: n.name.clone(),
            kind: n.kind,
            range: fold_range(&n.range, &map, &env, &n.name)?,
            array: fold_range(&n.array, &map, &env, &n.name)?,
        });
    }

    let mut genblk_counter = 0u32;
    for item in &module.items {
        let item = subst_item(item, &map);
        expand_item(item, &env, &mut out, &mut genblk_counter)?;
    }

    if out.items.len() > MAX_ITEMS {
        return Err(ElabError::SizeExceeded(MAX_ITEMS));
    }
    Ok(out)
}

fn fold_range(
    range: &Option<Range>,
    map: &SubstMap,
    env: &Env,
    what: &str,
) -> Result<Option<Range>, ElabError> {
    match range {
        None => Ok(None),
        Some(r) => {
            let msb = fold_const(&subst_expr(&r.msb, map), env)
                .map_err(|_| ElabError::NonConstant(format!("range of '{}'", what)))?;
            let lsb = fold_const(&subst_expr(&r.lsb, map), env)
                .map_err(|_| ElabError::NonConstant(format!("range of '{}'", what)))?;
            Ok(Some(Range {
                msb: literal_expr(msb),
                lsb: literal_expr(lsb),
            }))
        }
    }
}

/// Expand one (already substituted) item into `out`.
fn expand_item(
    item: ModuleItem,
    env: &Env,
    out: &mut AstModule,
    genblk_counter: &mut u32,
) -> Result<(), ElabError> {
    match item {
        ModuleItem::GenerateRegion(gen_items) => {
            for g in gen_items {
                expand_gen_item(g, env, out, genblk_counter, "")?;
            }
            Ok(())
        }
        ModuleItem::AlwaysBlock { sensitivity, body } => {
            let body = unroll_stmt(body, env)?;
            out.items.push(ModuleItem::AlwaysBlock { sensitivity, body });
            Ok(())
        }
        ModuleItem::InitialBlock { body } => {
            let body = unroll_stmt(body, env)?;
            out.items.push(ModuleItem::InitialBlock { body });
            Ok(())
        }
        other => {
            out.items.push(other);
            Ok(())
        }
    }
}

fn expand_gen_item(
    g: GenerateItem,
    env: &Env,
    out: &mut AstModule,
    genblk_counter: &mut u32,
    scope: &str,
) -> Result<(), ElabError> {
    if out.items.len() > MAX_ITEMS {
        return Err(ElabError::SizeExceeded(MAX_ITEMS));
    }
    match g {
        GenerateItem::Plain(item) => expand_item(*item, env, out, genblk_counter),
        GenerateItem::If(gif) => {
            let taken = fold_const(&gif.cond, env)? != 0;
            let block = if taken {
                Some(gif.then_block)
            } else {
                gif.else_block
            };
            if let Some(b) = block {
                expand_gen_block(b, None, env, out, genblk_counter, scope)?;
            }
            Ok(())
        }
        GenerateItem::For(f) => {
            let label = f
                .body
                .label
                .clone()
                .unwrap_or_else(|| {
                    let l = format!("genblk{}", genblk_counter);
                    *genblk_counter += 1;
                    l
                });
            let mut value = fold_const(&f.init, env)?;
            let mut iters: i128 = 0;
            loop {
                let mut loop_env = env.clone();
                loop_env.insert(f.genvar.clone(), value);
                if fold_const(&f.cond, &loop_env)? == 0 {
                    break;
                }
                iters += 1;
                if iters > MAX_LOOP_ITERS {
                    return Err(ElabError::SizeExceeded(MAX_ITEMS));
                }
                let iter_scope = if scope.is_empty() {
                    format!("{}_{}", label, render_index(value))
                } else {
                    format!("{}__{}_{}", scope, label, render_index(value))
                };
                let mut map: SubstMap = HashMap::new();
                map.insert(f.genvar.clone(), Subst::Value(value));
                let body = subst_gen_block(&f.body, &map);
                expand_gen_block(body, Some(&iter_scope), &loop_env, out, genblk_counter, scope)?;
                value = fold_const(&f.step, &loop_env)?;
            }
            Ok(())
        }
    }
}

fn render_index(v: i128) -> String {
    if v < 0 {
        format!("n{}", v.unsigned_abs())
    } else {
        v.to_string()
    }
}

fn expand_gen_block(
    block: GenBlock,
    iter_scope: Option<&str>,
    env: &Env,
    out: &mut AstModule,
    genblk_counter: &mut u32,
    outer_scope: &str,
) -> Result<(), ElabError> {
    // declarations inside the block get scope-prefixed names
    let mut map: SubstMap = HashMap::new();
    let scope_name = match iter_scope {
        Some(s) => s.to_string(),
        None => match (&block.label, outer_scope) {
            (Some(l), "") => l.clone(),
            (Some(l), s) => format!("{}__{}", s, l),
            (None, s) => s.to_string(),
        },
    };
    if !scope_name.is_empty() {
        for d in &block.decls {
            map.insert(
                d.name.clone(),
                Subst::Rename(format!("{}__{}", scope_name, d.name)),
            );
        }
        // instance names inside iterated scopes also need uniqueness; handled
        // by renaming at use below
    }
    for d in block.decls {
        let name = match map.get(&d.name) {
            Some(Subst::Rename(r)) => r.clone(),
            _ => d.name.clone(),
        };
        out.nets.push(NetDecl {
            name,
            kind: d.kind,
            range: fold_range(&d.range, &map, env, &d.name)?,
            array: fold_range(&d.array, &map, env, &d.name)?,
        });
    }
    for item in block.items {
        let item = subst_gen_item(&item, &map);
        let item = match item {
            GenerateItem::Plain(boxed) => {
                let renamed = match *boxed {
                    ModuleItem::Instantiation(mut inst) => {
                        if !scope_name.is_empty() {
                            inst.name = format!("{}__{}", scope_name, inst.name);
                        }
                        ModuleItem::Instantiation(inst)
                    }
                    other => other,
                };
                GenerateItem::Plain(Box::new(renamed))
            }
            other => other,
        };
        expand_gen_item(item, env, out, genblk_counter, &scope_name)?;
    }
    Ok(())
}

/// Unroll procedural for loops with constant bounds.
fn unroll_stmt(stmt: Statement, env: &Env) -> Result<Statement, ElabError> {
    Ok(match stmt {
        Statement::ForLoop {
            var,
            init,
            cond,
            step,
            body,
        } => {
            let mut statements = Vec::new();
            let mut value = fold_const(&init, env)?;
            let mut iters: i128 = 0;
            loop {
                let mut loop_env = env.clone();
                loop_env.insert(var.clone(), value);
                if fold_const(&cond, &loop_env)? == 0 {
                    break;
                }
                iters += 1;
                if iters > MAX_LOOP_ITERS {
                    return Err(ElabError::SizeExceeded(MAX_ITEMS));
                }
                let mut map: SubstMap = HashMap::new();
                map.insert(var.clone(), Subst::Value(value));
                let unrolled = unroll_stmt(subst_stmt(&body, &map), &loop_env)?;
                statements.push(unrolled);
                value = fold_const(&step, &loop_env)?;
            }
            Statement::Block {
                label: None,
                statements,
            }
        }
        Statement::Block { label, statements } => Statement::Block {
            label,
            statements: statements
                .into_iter()
                .map(|s| unroll_stmt(s, env))
                .collect::<Result<_, _>>()?,
        },
        Statement::If {
            cond,
            then_branch,
            else_branch,
        } => Statement::If {
            cond,
            then_branch: Box::new(unroll_stmt(*then_branch, env)?),
            else_branch: match else_branch {
                Some(e) => Some(Box::new(unroll_stmt(*e, env)?)),
                None => None,
            },
        },
        Statement::Case {
            kind,
            selector,
            arms,
        } => Statement::Case {
            kind,
            selector,
            arms: arms
                .into_iter()
                .map(|a| {
                    Ok(CaseArm {
                        labels: a.labels,
                        is_default: a.is_default,
                        body: unroll_stmt(a.body, env)?,
                    })
                })
                .collect::<Result<_, ElabError>>()?,
        },
        other => other,
    })
}

// ----------------------------------------------------------------------
// completeness
// ----------------------------------------------------------------------

const GATE_NAMES: &[&str] = &["and", "or", "not", "nand", "nor", "xor", "xnor", "buf"];

/// Module names instantiated (transitively from `top`) but not defined.
pub fn check_completeness(design: &[AstModule], top: &str) -> Result<Vec<String>, ElabError> {
    let by_name: HashMap<&str, &AstModule> =
        design.iter().map(|m| (m.name.as_str(), m)).collect();
    if !by_name.contains_key(top) {
        return Err(ElabError::UnknownTop(top.to_string()));
    }
    let mut missing = BTreeSet::new();
    let mut seen = HashSet::new();
    let mut stack = vec![top];
    while let Some(name) = stack.pop() {
        if !seen.insert(name) {
            continue;
        }
        let module = match by_name.get(name) {
            Some(m) => *m,
            None => continue,
        };
        let mut children = Vec::new();
        collect_instantiated(&module.items, &mut children);
        for child in children {
            if GATE_NAMES.contains(&child) {
                continue;
            }
            if by_name.contains_key(child) {
                stack.push(child);
            } else {
                missing.insert(child.to_string());
            }
        }
    }
    Ok(missing.into_iter().collect())
}

fn collect_instantiated<'a>(items: &'a [ModuleItem], out: &mut Vec<&'a str>) {
    for item in items {
        match item {
            ModuleItem::Instantiation(inst) => out.push(&inst.module),
            ModuleItem::GenerateRegion(gen) => collect_gen_instantiated(gen, out),
            _ => {}
        }
    }
}

fn collect_gen_instantiated<'a>(items: &'a [GenerateItem], out: &mut Vec<&'a str>) {
    for g in items {
        match g {
            GenerateItem::Plain(item) => collect_instantiated(std::slice::from_ref(item), out),
            GenerateItem::For(f) => collect_gen_instantiated(&f.body.items, out),
            GenerateItem::If(gif) => {
                collect_gen_instantiated(&gif.then_block.items, out);
                if let Some(e) = &gif.else_block {
                    collect_gen_instantiated(&e.items, out);
                }
            }
        }
    }
}

// ----------------------------------------------------------------------
// flattening
// ----------------------------------------------------------------------

/// Flatten `top` with default parameter values.
pub fn flatten(design: &[AstModule], top: &str) -> Result<FlatDesign, ElabError> {
    flatten_with(design, top, &BTreeMap::new())
}

/// Flatten `top` with parameter overrides applied to the top module.
pub fn flatten_with(
    design: &[AstModule],
    top: &str,
    overrides: &BTreeMap<String, i128>,
) -> Result<FlatDesign, ElabError> {
    let missing = check_completeness(design, top)?;
    if let Some(name) = missing.first() {
        return Err(ElabError::UnknownModule(name.clone()));
    }
    let by_name: HashMap<&str, &AstModule> =
        design.iter().map(|m| (m.name.as_str(), m)).collect();

    let mut ctx = FlattenCtx {
        by_name,
        inline_map: Vec::new(),
        diagnostics: Vec::new(),
        bindings: Vec::new(),
        active: Vec::new(),
    };
    let root = ctx.inline(top, overrides, "", 0)?;

    let top_module = ctx.by_name[top];
    let resolved_top = resolve_parameters(top_module, overrides)?;
    let mut module = AstModule {
        name: top.to_string(),
        ports: resolved_top.ports.clone(),
        parameters: resolved_top.parameters.clone(),
        nets: root.nets,
        items: root.items,
    };

    if module.items.len() > MAX_ITEMS {
        return Err(ElabError::SizeExceeded(MAX_ITEMS));
    }

    // unique net names; collisions between user nets and inlined prefixes
    let mut seen: HashSet<String> = module.ports.iter().map(|p| p.name.clone()).collect();
    for n in &mut module.nets {
        if !seen.insert(n.name.clone()) {
            let mut k = 2;
            let base = n.name.clone();
            while !seen.insert(format!("{}_dup{}", base, k)) {
                k += 1;
            }
            let fresh = format!("{}_dup{}", base, k);
            ctx.diagnostics.push(Diagnostic::warning(
                DiagKind::DuplicateName,
                1,
                1,
                format!("net '{}' renamed to '{}' during flattening", base, fresh),
            ));
            n.name = fresh;
        }
    }

    let mut resolved_widths = BTreeMap::new();
    for p in &module.ports {
        resolved_widths.insert(p.name.clone(), range_bounds(&p.range, &p.name)?);
    }
    for n in &module.nets {
        resolved_widths.insert(n.name.clone(), range_bounds(&n.range, &n.name)?);
    }

    let mut flat = FlatDesign {
        top: top.to_string(),
        module,
        inline_map: ctx.inline_map,
        resolved_widths,
        diagnostics: ctx.diagnostics,
    };

    // width mismatch checks on recorded port bindings
    let mut binding_diags = Vec::new();
    for (net, expr) in &ctx.bindings {
        let nw = flat.net_width(net);
        let ew = expr_width(expr, &flat).ok();
        if let (Some(nw), Some(ew)) = (nw, ew) {
            if nw != ew {
                binding_diags.push(Diagnostic::warning(
                    DiagKind::WidthMismatch,
                    1,
                    1,
                    format!(
                        "port binding '{}' is {} bits, actual expression is {} bits",
                        net, nw, ew
                    ),
                ));
            }
        }
    }
    flat.diagnostics.extend(binding_diags);
    flat.validate()?;
    Ok(flat)
}

fn range_bounds(range: &Option<Range>, what: &str) -> Result<(i64, i64), ElabError> {
    match range {
        None => Ok((0, 0)),
        Some(r) => {
            let env = HashMap::new();
            let msb = fold_const(&r.msb, &env)
                .map_err(|_| ElabError::UnresolvedWidth(what.to_string()))?;
            let lsb = fold_const(&r.lsb, &env)
                .map_err(|_| ElabError::UnresolvedWidth(what.to_string()))?;
            Ok((msb as i64, lsb as i64))
        }
    }
}

struct Inlined {
    nets: Vec<NetDecl>,
    items: Vec<ModuleItem>,
}

struct FlattenCtx<'a> {
    by_name: HashMap<&'a str, &'a AstModule>,
    inline_map: Vec<InlineEntry>,
    diagnostics: Vec<Diagnostic>,
    /// (bound net, actual expression) pairs for width checking
    bindings: Vec<(String, Expression)>,
    active: Vec<String>,
}

impl<'a> FlattenCtx<'a> {
    /// Inline `module_name` (its body renamed with `prefix`) and return the
    /// nets and items to splice into the parent.
    fn inline(
        &mut self,
        module_name: &str,
        overrides: &BTreeMap<String, i128>,
        prefix: &str,
        depth: u32,
    ) -> Result<Inlined, ElabError> {
        if depth > MAX_DEPTH {
            return Err(ElabError::DepthExceeded(MAX_DEPTH));
        }
        if self.active.iter().any(|a| a == module_name) {
            let mut path = self.active.join(" -> ");
            path.push_str(" -> ");
            path.push_str(module_name);
            return Err(ElabError::RecursiveInstantiation(path));
        }
        self.active.push(module_name.to_string());

        let module = *self
            .by_name
            .get(module_name)
            .ok_or_else(|| ElabError::UnknownModule(module_name.to_string()))?;
        let resolved = resolve_parameters(module, overrides)?;

        // rename everything in this module's scope with the instance prefix
        let mut rename: SubstMap = HashMap::new();
        if !prefix.is_empty() {
            for name in resolved.declared_names() {
                rename.insert(name.to_string(), Subst::Rename(format!("{}{}", prefix, name)));
            }
        }

        let mut nets: Vec<NetDecl> = Vec::new();
        if !prefix.is_empty() {
            // child ports become plain nets
            for p in &resolved.ports {
                nets.push(NetDecl {
                    name: format!("{}{}", prefix, p.name),
                    kind: if p.kind == NetKind::Reg {
                        NetKind::Reg
                    } else {
                        NetKind::Wire
                    },
                    range: p.range.clone(),
                    array: None,
                });
            }
        }
        for n in &resolved.nets {
            nets.push(NetDecl {
                name: format!("{}{}", prefix, n.name),
                kind: n.kind,
                range: n.range.clone(),
                array: n.array.clone(),
            });
        }

        let mut items: Vec<ModuleItem> = Vec::new();
        for item in &resolved.items {
            let item = subst_item(item, &rename);
            match item {
                ModuleItem::Instantiation(inst) => {
                    if GATE_NAMES.contains(&inst.module.as_str()) {
                        self.lower_gate(&inst, &mut items)?;
                        continue;
                    }
                    let path = if prefix.is_empty() {
                        inst.name.clone()
                    } else {
                        format!("{}{}", prefix, inst.name)
                    };
                    self.inline_map.push(InlineEntry {
                        path: path.clone(),
                        module: inst.module.clone(),
                    });
                    let child = *self
                        .by_name
                        .get(inst.module.as_str())
                        .ok_or_else(|| ElabError::UnknownModule(inst.module.clone()))?;
                    let child_overrides = self.child_overrides(child, &inst)?;
                    let child_prefix = format!("{}__", path);
                    let inlined =
                        self.inline(&inst.module, &child_overrides, &child_prefix, depth + 1)?;
                    let child_resolved = resolve_parameters(child, &child_overrides)?;
                    self.bind_ports(
                        &child_resolved,
                        &inst,
                        &child_prefix,
                        inlined,
                        &mut nets,
                        &mut items,
                    )?;
                }
                other => items.push(other),
            }
            if items.len() > MAX_ITEMS {
                return Err(ElabError::SizeExceeded(MAX_ITEMS));
            }
        }

        self.active.pop();
        Ok(Inlined { nets, items })
    }

    fn child_overrides(
        &mut self,
        child: &AstModule,
        inst: &Instance,
    ) -> Result<BTreeMap<String, i128>, ElabError> {
        let env = HashMap::new();
        let mut overrides = BTreeMap::new();
        match &inst.parameters {
            Connections::Named(list) => {
                for nc in list {
                    if let Some(e) = &nc.expr {
                        let v = fold_const(e, &env).map_err(|_| {
                            ElabError::NonConstant(format!(
                                "parameter override '{}' on instance '{}'",
                                nc.port, inst.name
                            ))
                        })?;
                        overrides.insert(nc.port.clone(), v);
                    }
                }
            }
            Connections::Positional(list) => {
                let mut formal = child.parameters.iter().filter(|p| !p.is_local);
                for e in list {
                    let p = formal.next().ok_or_else(|| {
                        ElabError::UnknownParameter(format!(
                            "too many parameter overrides on instance '{}'",
                            inst.name
                        ))
                    })?;
                    let v = fold_const(e, &env).map_err(|_| {
                        ElabError::NonConstant(format!(
                            "parameter override '{}' on instance '{}'",
                            p.name, inst.name
                        ))
                    })?;
                    overrides.insert(p.name.clone(), v);
                }
            }
        }
        Ok(overrides)
    }

    /// Wire up one inlined child: port-binding assigns plus the child body.
    fn bind_ports(
        &mut self,
        child: &AstModule,
        inst: &Instance,
        child_prefix: &str,
        inlined: Inlined,
        nets: &mut Vec<NetDecl>,
        items: &mut Vec<ModuleItem>,
    ) -> Result<(), ElabError> {
        // associate each child port with its actual expression
        let mut actuals: Vec<Option<Expression>> = vec![None; child.ports.len()];
        let mut connected: Vec<bool> = vec![false; child.ports.len()];
        match &inst.ports {
            Connections::Named(list) => {
                for nc in list {
                    match child.ports.iter().position(|p| p.name == nc.port) {
                        Some(idx) => {
                            connected[idx] = true;
                            actuals[idx] = nc.expr.clone();
                        }
                        None => self.diagnostics.push(Diagnostic::error(
                            DiagKind::UnconnectedPort,
                            1,
                            1,
                            format!(
                                "instance '{}' connects unknown port '{}' of '{}'",
                                inst.name, nc.port, child.name
                            ),
                        )),
                    }
                }
            }
            Connections::Positional(list) => {
                for (idx, e) in list.iter().enumerate() {
                    if idx < actuals.len() {
                        connected[idx] = true;
                        actuals[idx] = Some(e.clone());
                    } else {
                        self.diagnostics.push(Diagnostic::error(
                            DiagKind::UnconnectedPort,
                            1,
                            1,
                            format!(
                                "instance '{}' has more connections than '{}' has ports",
                                inst.name, child.name
                            ),
                        ));
                    }
                }
            }
        }

        let mut alias: SubstMap = HashMap::new();
        let mut binding_items: Vec<ModuleItem> = Vec::new();
        for (idx, port) in child.ports.iter().enumerate() {
            let bound = format!("{}{}", child_prefix, port.name);
            match (&actuals[idx], port.direction) {
                (Some(actual), PortDirection::Input) => {
                    self.bindings.push((bound.clone(), actual.clone()));
                    binding_items.push(ModuleItem::ContinuousAssign {
                        target: Expression::Ident(bound),
                        value: actual.clone(),
                    });
                }
                (Some(actual), PortDirection::Output) => {
                    if is_lvalue(actual) {
                        self.bindings.push((bound.clone(), actual.clone()));
                        binding_items.push(ModuleItem::ContinuousAssign {
                            target: actual.clone(),
                            value: Expression::Ident(bound),
                        });
                    } else {
                        self.diagnostics.push(Diagnostic::error(
                            DiagKind::UnconnectedPort,
                            1,
                            1,
                            format!(
                                "output port '{}' of instance '{}' connected to a non-lvalue",
                                port.name, inst.name
                            ),
                        ));
                    }
                }
                (Some(actual), PortDirection::Inout) => {
                    // alias the two nets when the actual is a plain net
                    if let Expression::Ident(parent_net) = actual {
                        alias.insert(bound.clone(), Subst::Rename(parent_net.clone()));
                        self.diagnostics.push(Diagnostic::warning(
                            DiagKind::Tristate,
                            1,
                            1,
                            format!(
                                "inout port '{}' of instance '{}' aliased to '{}'",
                                port.name, inst.name, parent_net
                            ),
                        ));
                    } else {
                        self.diagnostics.push(Diagnostic::error(
                            DiagKind::Tristate,
                            1,
                            1,
                            format!(
                                "inout port '{}' of instance '{}' needs a plain net connection",
                                port.name, inst.name
                            ),
                        ));
                    }
                }
                (None, PortDirection::Input) => {
                    let width = match range_bounds(&port.range, &port.name) {
                        Ok((msb, lsb)) => (msb - lsb).unsigned_abs() as u32 + 1,
                        Err(_) => 1,
                    };
                    if !connected[idx] || actuals[idx].is_none() {
                        self.diagnostics.push(Diagnostic::warning(
                            DiagKind::UnconnectedPort,
                            1,
                            1,
                            format!(
                                "input port '{}' of instance '{}' unconnected, tied to 0",
                                port.name, inst.name
                            ),
                        ));
                    }
                    binding_items.push(ModuleItem::ContinuousAssign {
                        target: Expression::Ident(bound),
                        value: Expression::Literal(Literal {
                            width: Some(width),
                            base: LiteralBase::Dec,
                            value: 0,
                            x_mask: 0,
                            z_mask: 0,
                        }),
                    });
                }
                (None, _) => {
                    // unconnected output/inout dangles
                    if !connected[idx] {
                        self.diagnostics.push(Diagnostic::warning(
                            DiagKind::UnconnectedPort,
                            1,
                            1,
                            format!(
                                "port '{}' of instance '{}' left unconnected",
                                port.name, inst.name
                            ),
                        ));
                    }
                }
            }
        }

        if alias.is_empty() {
            nets.extend(inlined.nets);
            items.extend(binding_items);
            items.extend(inlined.items);
        } else {
            let aliased: HashSet<&String> = alias
                .keys()
                .collect();
            nets.extend(
                inlined
                    .nets
                    .into_iter()
                    .filter(|n| !aliased.contains(&n.name)),
            );
            items.extend(
                binding_items
                    .into_iter()
                    .chain(inlined.items)
                    .map(|i| subst_item(&i, &alias)),
            );
        }
        Ok(())
    }

    /// Lower a gate primitive instance to a continuous assign.
    fn lower_gate(&mut self, inst: &Instance, items: &mut Vec<ModuleItem>) -> Result<(), ElabError> {
        let args = match &inst.ports {
            Connections::Positional(list) => list.clone(),
            Connections::Named(_) => {
                return Err(ElabError::InvalidConnection(format!(
                    "gate primitive '{}' with named connections",
                    inst.name
                )))
            }
        };
        if args.len() < 2 {
            return Err(ElabError::InvalidConnection(format!(
                "gate primitive '{}' needs at least 2 connections",
                inst.name
            )));
        }
        match inst.module.as_str() {
            "buf" | "not" => {
                let input = args.last().unwrap().clone();
                for target in &args[..args.len() - 1] {
                    let value = if inst.module == "not" {
                        Expression::Unary {
                            op: UnaryOp::BitNot,
                            operand: Box::new(input.clone()),
                        }
                    } else {
                        input.clone()
                    };
                    items.push(ModuleItem::ContinuousAssign {
                        target: target.clone(),
                        value,
                    });
                }
            }
            gate => {
                let op = match gate {
                    "and" | "nand" => BinaryOp::BitAnd,
                    "or" | "nor" => BinaryOp::BitOr,
                    _ => BinaryOp::BitXor,
                };
                let mut value = args[1].clone();
                for a in &args[2..] {
                    value = Expression::Binary {
                        op,
                        lhs: Box::new(value),
                        rhs: Box::new(a.clone()),
                    };
                }
                if matches!(gate, "nand" | "nor" | "xnor") {
                    value = Expression::Unary {
                        op: UnaryOp::BitNot,
                        operand: Box::new(value),
                    };
                }
                items.push(ModuleItem::ContinuousAssign {
                    target: args[0].clone(),
                    value,
                });
            }
        }
        Ok(())
    }
}

fn is_lvalue(e: &Expression) -> bool {
    match e {
        Expression::Ident(_)
        | Expression::BitSelect { .. }
        | Expression::PartSelect { .. }
        | Expression::IndexedPartSelect { .. } => true,
        Expression::Concat(parts) => parts.iter().all(is_lvalue),
        _ => false,
    }
}

// ----------------------------------------------------------------------
// expression widths
// ----------------------------------------------------------------------

fn collect_item_exprs<'a>(items: &'a [ModuleItem], out: &mut Vec<&'a Expression>) {
    for item in items {
        match item {
            ModuleItem::ContinuousAssign { target, value } => {
                out.push(target);
                out.push(value);
            }
            ModuleItem::AlwaysBlock { body, .. } | ModuleItem::InitialBlock { body } => {
                collect_stmt_exprs(body, out);
            }
            _ => {}
        }
    }
}

fn collect_stmt_exprs<'a>(stmt: &'a Statement, out: &mut Vec<&'a Expression>) {
    match stmt {
        Statement::BlockingAssign { target, value }
        | Statement::NonblockingAssign { target, value } => {
            out.push(target);
            out.push(value);
        }
        Statement::If {
            cond,
            then_branch,
            else_branch,
        } => {
            out.push(cond);
            collect_stmt_exprs(then_branch, out);
            if let Some(e) = else_branch {
                collect_stmt_exprs(e, out);
            }
        }
        Statement::Case {
            selector, arms, ..
        } => {
            out.push(selector);
            for a in arms {
                out.extend(a.labels.iter());
                collect_stmt_exprs(&a.body, out);
            }
        }
        Statement::Block { statements, .. } => {
            for s in statements {
                collect_stmt_exprs(s, out);
            }
        }
        Statement::ForLoop { body, .. } => collect_stmt_exprs(body, out),
        Statement::Delay { stmt, .. } => {
            if let Some(s) = stmt {
                collect_stmt_exprs(s, out);
            }
        }
        Statement::SystemCall { .. } | Statement::Empty => {}
    }
}

/// Self-determined expression width under the design's net widths.
fn expr_width(expr: &Expression, design: &FlatDesign) -> Result<u32, ElabError> {
    let memories = design.memory_names();
    expr_width_inner(expr, design, &memories)
}

fn expr_width_inner(
    expr: &Expression,
    design: &FlatDesign,
    memories: &BTreeSet<&str>,
) -> Result<u32, ElabError> {
    let env = HashMap::new();
    Ok(match expr {
        Expression::Literal(l) => l.self_width(),
        Expression::Ident(n) => design
            .net_width(n)
            .ok_or_else(|| ElabError::UnresolvedWidth(n.clone()))?,
        Expression::BitSelect { base, .. } => {
            // a memory word read selects the full word
            if let Expression::Ident(n) = base.as_ref() {
                if memories.contains(n.as_str()) {
                    return design
                        .net_width(n)
                        .ok_or_else(|| ElabError::UnresolvedWidth(n.clone()));
                }
            }
            1
        }
        Expression::PartSelect { msb, lsb, .. } => {
            let m = fold_const(msb, &env)
                .map_err(|_| ElabError::UnresolvedWidth("part select bound".into()))?;
            let l = fold_const(lsb, &env)
                .map_err(|_| ElabError::UnresolvedWidth("part select bound".into()))?;
            (m - l).unsigned_abs() as u32 + 1
        }
        Expression::IndexedPartSelect { width, .. } => fold_const(width, &env)
            .map_err(|_| ElabError::UnresolvedWidth("indexed part select width".into()))?
            as u32,
        Expression::Concat(parts) => {
            let mut total = 0;
            for p in parts {
                total += expr_width_inner(p, design, memories)?;
            }
            total
        }
        Expression::Replicate { count, value } => {
            let c = fold_const(count, &env)
                .map_err(|_| ElabError::UnresolvedWidth("replication count".into()))?;
            c as u32 * expr_width_inner(value, design, memories)?
        }
        Expression::Unary { op, operand } => match op {
            UnaryOp::LogicalNot
            | UnaryOp::RedAnd
            | UnaryOp::RedOr
            | UnaryOp::RedXor
            | UnaryOp::RedNand
            | UnaryOp::RedNor
            | UnaryOp::RedXnor => 1,
            _ => expr_width_inner(operand, design, memories)?,
        },
        Expression::Binary { op, lhs, rhs } => match op {
            BinaryOp::Lt
            | BinaryOp::Gt
            | BinaryOp::Le
            | BinaryOp::Ge
            | BinaryOp::Eq
            | BinaryOp::Ne
            | BinaryOp::LogicalAnd
            | BinaryOp::LogicalOr => 1,
            BinaryOp::Shl | BinaryOp::Shr => expr_width_inner(lhs, design, memories)?,
            _ => expr_width_inner(lhs, design, memories)?
                .max(expr_width_inner(rhs, design, memories)?),
        },
        Expression::Ternary {
            then_value,
            else_value,
            ..
        } => expr_width_inner(then_value, design, memories)?
            .max(expr_width_inner(else_value, design, memories)?),
    })
}

/// Width mask utility re-exported for evaluator-style consumers.
pub fn width_mask(width: u32) -> u128 {
    mask_for(width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_design;

    fn modules(src: &str) -> Vec<AstModule> {
        let out = parse_design(src).unwrap();
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        out.modules
    }

    #[test]
    fn parameter_folding_default() {
        let m = &modules("module p #(parameter W = 4) (output [W-1:0] y); assign y = 0; endmodule")[0];
        let r = resolve_parameters(m, &BTreeMap::new()).unwrap();
        let range = r.ports[0].range.as_ref().unwrap();
        assert_eq!(range.msb, Expression::literal(3));
        assert_eq!(range.lsb, Expression::literal(0));
    }

    #[test]
    fn parameter_override() {
        let m = &modules("module p #(parameter W = 4) (output [W-1:0] y); assign y = 0; endmodule")[0];
        let mut o = BTreeMap::new();
        o.insert("W".to_string(), 8);
        let r = resolve_parameters(m, &o).unwrap();
        let range = r.ports[0].range.as_ref().unwrap();
        assert_eq!(range.msb, Expression::literal(7));
    }

    #[test]
    fn unknown_override_rejected() {
        let m = &modules("module p #(parameter W = 4) (output y); assign y = 0; endmodule")[0];
        let mut o = BTreeMap::new();
        o.insert("NOPE".to_string(), 8);
        assert_eq!(
            resolve_parameters(m, &o),
            Err(ElabError::UnknownParameter("NOPE".into()))
        );
    }

    #[test]
    fn generate_for_unrolls() {
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
        let m = &modules(src)[0];
        let r = resolve_parameters(m, &BTreeMap::new()).unwrap();
        let assigns: Vec<String> = r
            .items
            .iter()
            .map(crate::emit::render_item)
            .collect();
        assert_eq!(assigns.len(), 2);
        assert!(assigns[0].contains("y[0] = a[0]"));
        assert!(assigns[1].contains("y[1] = a[1]"));
    }

    #[test]
    fn generate_if_picks_branch() {
        let src = r#"
module g #(parameter FAST = 1) (input a, output y);
  generate
    if (FAST) begin : f
      assign y = a;
    end else begin : s
      assign y = ~a;
    end
  endgenerate
endmodule
"#;
        let m = &modules(src)[0];
        let r = resolve_parameters(m, &BTreeMap::new()).unwrap();
        assert_eq!(r.items.len(), 1);
        assert!(crate::emit::render_item(&r.items[0]).contains("y = a"));
        let mut o = BTreeMap::new();
        o.insert("FAST".to_string(), 0);
        let r = resolve_parameters(m, &o).unwrap();
        assert!(crate::emit::render_item(&r.items[0]).contains("y = ~a"));
    }

    #[test]
    fn procedural_for_unrolls() {
        let src = r#"
module f(input [3:0] a, output reg [3:0] y);
  integer i;
  always @(*) begin
    for (i = 0; i < 4; i = i + 1) y[i] = ~a[i];
  end
endmodule
"#;
        let m = &modules(src)[0];
        let r = resolve_parameters(m, &BTreeMap::new()).unwrap();
        let text = crate::emit::render_item(&r.items[0]);
        assert!(text.contains("y[0] = ~a[0]"));
        assert!(text.contains("y[3] = ~a[3]"));
        assert!(!text.contains("for"));
    }

    #[test]
    fn divide_by_zero_detected() {
        let m = &modules(
            "module d #(parameter A = 1, parameter B = 0, localparam C = A / B) (output y); assign y = 0; endmodule",
        )[0];
        assert!(matches!(
            resolve_parameters(m, &BTreeMap::new()),
            Err(ElabError::DivideByZero(_))
        ));
    }

    #[test]
    fn completeness_closed_design() {
        let src = r#"
module adder(input a, input b, output s); assign s = a ^ b; endmodule
module top(input x, input y, output z);
  adder u0 (.a(x), .b(y), .s(z));
endmodule
"#;
        let ms = modules(src);
        assert_eq!(check_completeness(&ms, "top").unwrap(), Vec::<String>::new());
    }

    #[test]
    fn completeness_missing_module() {
        let src = r#"
module top(input x, output z);
  fifo_ctrl u0 (.a(x), .z(z));
endmodule
"#;
        let ms = modules(src);
        assert_eq!(check_completeness(&ms, "top").unwrap(), vec!["fifo_ctrl"]);
    }

    #[test]
    fn completeness_diamond() {
        let src = r#"
module d(input a, output y); assign y = a; endmodule
module b(input a, output y); d u (.a(a), .y(y)); endmodule
module c(input a, output y); d u (.a(a), .y(y)); endmodule
module a(input x, output z);
  wire t;
  b u0 (.a(x), .y(t));
  c u1 (.a(t), .y(z));
endmodule
"#;
        let ms = modules(src);
        assert_eq!(check_completeness(&ms, "a").unwrap(), Vec::<String>::new());
        assert!(matches!(
            check_completeness(&ms, "zz"),
            Err(ElabError::UnknownTop(_))
        ));
    }

    #[test]
    fn flatten_passthrough_buffer() {
        let src = r#"
module buf1(input x, output z); assign z = x; endmodule
module top(input a, output y);
  buf1 u0 (.x(a), .z(y));
endmodule
"#;
        let ms = modules(src);
        let flat = flatten(&ms, "top").unwrap();
        let names: Vec<&str> = flat.module.nets.iter().map(|n| n.name.as_str()).collect();
        assert!(names.contains(&"u0__x"));
        assert!(names.contains(&"u0__z"));
        let rendered: Vec<String> = flat.module.items.iter().map(crate::emit::render_item).collect();
        assert!(rendered.iter().any(|s| s.contains("u0__x = a")));
        assert!(rendered.iter().any(|s| s.contains("u0__z = u0__x")));
        assert!(rendered.iter().any(|s| s.contains("y = u0__z")));
        assert_eq!(flat.inline_map.len(), 1);
        assert_eq!(flat.inline_map[0].path, "u0");
        assert_eq!(flat.inline_map[0].module, "buf1");
    }

    #[test]
    fn flatten_detects_recursion() {
        let src = r#"
module r(input a, output y);
  r u (.a(a), .y(y));
endmodule
"#;
        let ms = modules(src);
        assert!(matches!(
            flatten(&ms, "r"),
            Err(ElabError::RecursiveInstantiation(_))
        ));
    }

    #[test]
    fn flatten_unconnected_input_ties_zero() {
        let src = r#"
module leaf(input a, input b, output y); assign y = a & b; endmodule
module top(input x, output z);
  leaf u0 (.a(x), .y(z));
endmodule
"#;
        let ms = modules(src);
        let flat = flatten(&ms, "top").unwrap();
        let rendered: Vec<String> = flat.module.items.iter().map(crate::emit::render_item).collect();
        assert!(rendered.iter().any(|s| s.contains("u0__b = 2'd0") || s.contains("u0__b = 1'd0")));
        assert!(flat
            .diagnostics
            .iter()
            .any(|d| d.kind == DiagKind::UnconnectedPort));
    }

    #[test]
    fn flatten_is_idempotent() {
        let src = r#"
module half(input a, input b, output s, output c);
  assign s = a ^ b;
  assign c = a & b;
endmodule
module top(input x, input y, output s, output c);
  half u0 (.a(x), .b(y), .s(s), .c(c));
endmodule
"#;
        let ms = modules(src);
        let flat = flatten(&ms, "top").unwrap();
        let again = flatten(std::slice::from_ref(&flat.module), "top").unwrap();
        assert_eq!(flat.module.items.len(), again.module.items.len());
        assert_eq!(flat.module.nets.len(), again.module.nets.len());
        assert!(again.inline_map.is_empty());
    }

    #[test]
    fn gate_primitives_lowered() {
        let src = r#"
module g(input a, input b, output y, output z);
  nand g0 (y, a, b);
  not g1 (z, a);
endmodule
"#;
        let ms = modules(src);
        let flat = flatten(&ms, "g").unwrap();
        let rendered: Vec<String> = flat.module.items.iter().map(crate::emit::render_item).collect();
        assert!(rendered.iter().any(|s| s.contains("y = ~(a & b)")));
        assert!(rendered.iter().any(|s| s.contains("z = ~a")));
    }

    #[test]
    fn width_resolution() {
        let src = r#"
module w(input [7:0] a, output [3:0] y);
  wire [15:0] t;
  assign t = {a, a};
  assign y = t[11:8];
endmodule
"#;
        let ms = modules(src);
        let flat = flatten(&ms, "w").unwrap();
        assert_eq!(flat.net_width("a"), Some(8));
        assert_eq!(flat.net_width("t"), Some(16));
        assert_eq!(flat.resolved_widths["y"], (3, 0));
    }
}
