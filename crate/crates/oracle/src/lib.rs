// SPDX-License-Identifier: Apache-2.0

//! Test oracles: a small 2-state combinational interpreter for parsed
//! designs, exhaustive-simulation helpers built on it, and an enumeration
//! oracle for the pass@k estimator.
//!
//! The interpreter walks the module hierarchy directly (instances are
//! evaluated recursively), so it shares no code path with `elab::flatten`;
//! expression width rules are implemented here independently as well.

use rtlgraph_core::ast::*;
use rtlgraph_core::elab::resolve_parameters;
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimError {
    Unsupported(String),
    NoConvergence(String),
    UnknownModule(String),
}

impl std::fmt::Display for SimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimError::Unsupported(m) => write!(f, "unsupported construct: {}", m),
            SimError::NoConvergence(m) => write!(f, "no convergence: {}", m),
            SimError::UnknownModule(m) => write!(f, "unknown module: {}", m),
        }
    }
}

fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// A set of modules forming one design under test.
pub struct Design<'a> {
    by_name: HashMap<&'a str, &'a AstModule>,
}

const GATES: &[&str] = &["and", "or", "not", "nand", "nor", "xor", "xnor", "buf"];
const MAX_PASSES: usize = 200;

impl<'a> Design<'a> {
    pub fn new(modules: &'a [AstModule]) -> Self {
        Design {
            by_name: modules.iter().map(|m| (m.name.as_str(), m)).collect(),
        }
    }

    pub fn input_ports(&self, top: &str) -> Result<Vec<(String, u32)>, SimError> {
        self.ports_of(top, PortDirection::Input)
    }

    pub fn output_ports(&self, top: &str) -> Result<Vec<(String, u32)>, SimError> {
        self.ports_of(top, PortDirection::Output)
    }

    fn ports_of(&self, top: &str, dir: PortDirection) -> Result<Vec<(String, u32)>, SimError> {
        let m = self
            .by_name
            .get(top)
            .ok_or_else(|| SimError::UnknownModule(top.to_string()))?;
        let resolved = resolve_parameters(m, &BTreeMap::new())
            .map_err(|e| SimError::Unsupported(e.to_string()))?;
        Ok(resolved
            .ports
            .iter()
            .filter(|p| p.direction == dir)
            .map(|p| (p.name.clone(), range_width(&p.range)))
            .collect())
    }

    /// Evaluate `top` combinationally for one input assignment.
    pub fn eval(
        &self,
        top: &str,
        inputs: &BTreeMap<String, u128>,
    ) -> Result<BTreeMap<String, u128>, SimError> {
        let m = self
            .by_name
            .get(top)
            .ok_or_else(|| SimError::UnknownModule(top.to_string()))?;
        let resolved = resolve_parameters(m, &BTreeMap::new())
            .map_err(|e| SimError::Unsupported(e.to_string()))?;
        let mut inst = ModuleState::new(self, &resolved)?;
        for (name, value) in inputs {
            inst.write_name(name, *value);
        }
        inst.settle()?;
        let mut out = BTreeMap::new();
        for p in &resolved.ports {
            if p.direction == PortDirection::Output {
                out.insert(p.name.clone(), inst.read_name(&p.name));
            }
        }
        Ok(out)
    }
}

fn range_width(r: &Option<Range>) -> u32 {
    match r {
        None => 1,
        Some(r) => {
            let env = HashMap::new();
            let msb = rtlgraph_core::elab::fold_const(&r.msb, &env).unwrap_or(0);
            let lsb = rtlgraph_core::elab::fold_const(&r.lsb, &env).unwrap_or(0);
            (msb - lsb).unsigned_abs() as u32 + 1
        }
    }
}

fn range_lsb(r: &Option<Range>) -> i128 {
    match r {
        None => 0,
        Some(r) => {
            let env = HashMap::new();
            rtlgraph_core::elab::fold_const(&r.lsb, &env).unwrap_or(0)
        }
    }
}

/// One evaluated module instance: signal environment plus memories.
struct ModuleState<'a> {
    design: &'a Design<'a>,
    module: &'a AstModule,
    widths: HashMap<String, u32>,
    lsbs: HashMap<String, i128>,
    env: HashMap<String, u128>,
    memories: HashMap<String, (Vec<u128>, i128)>, // words, base index
    initialized: bool,
}

impl<'a> ModuleState<'a> {
    fn new(design: &'a Design<'a>, module: &'a AstModule) -> Result<Self, SimError> {
        let mut widths = HashMap::new();
        let mut lsbs = HashMap::new();
        let mut env = HashMap::new();
        let mut memories = HashMap::new();
        for p in &module.ports {
            widths.insert(p.name.clone(), range_width(&p.range));
            lsbs.insert(p.name.clone(), range_lsb(&p.range));
            env.insert(p.name.clone(), 0);
        }
        for n in &module.nets {
            if n.kind == NetKind::Genvar {
                continue;
            }
            let w = if n.kind == NetKind::Integer {
                32
            } else {
                range_width(&n.range)
            };
            widths.insert(n.name.clone(), w);
            lsbs.insert(n.name.clone(), range_lsb(&n.range));
            if let Some(arr) = &n.array {
                let env0 = HashMap::new();
                let a = rtlgraph_core::elab::fold_const(&arr.msb, &env0).unwrap_or(0);
                let b = rtlgraph_core::elab::fold_const(&arr.lsb, &env0).unwrap_or(0);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let depth = (hi - lo + 1).max(0) as usize;
                if depth > 1 << 20 {
                    return Err(SimError::Unsupported(format!(
                        "memory '{}' too deep",
                        n.name
                    )));
                }
                memories.insert(n.name.clone(), (vec![0; depth], lo));
            } else {
                env.insert(n.name.clone(), 0);
            }
        }
        Ok(ModuleState {
            design,
            module,
            widths,
            lsbs,
            env,
            memories,
            initialized: false,
        })
    }

    fn width_of(&self, name: &str) -> u32 {
        self.widths.get(name).copied().unwrap_or(1)
    }

    fn read_name(&self, name: &str) -> u128 {
        self.env.get(name).copied().unwrap_or(0)
    }

    fn write_name(&mut self, name: &str, value: u128) {
        let w = self.width_of(name);
        self.env.insert(name.to_string(), value & mask(w));
    }

    /// Iterate items to a combinational fixed point.
    fn settle(&mut self) -> Result<(), SimError> {
        let items: Vec<ModuleItem> = self.module.items.clone();
        if !self.initialized {
            self.initialized = true;
            for item in &items {
                if let ModuleItem::InitialBlock { body } = item {
                    self.exec(body)?;
                }
            }
        }
        for pass in 0..MAX_PASSES {
            let before = (self.env.clone(), snapshot_mem(&self.memories));
            for item in &items {
                match item {
                    ModuleItem::ContinuousAssign { target, value } => {
                        let ctx = self.lvalue_width(target).max(self.self_width(value));
                        let v = self.eval_expr(value, ctx)?;
                        self.write_lvalue(target, v)?;
                    }
                    ModuleItem::AlwaysBlock { sensitivity, body } => match sensitivity {
                        Sensitivity::Star => self.exec(body)?,
                        Sensitivity::Edges(_) => {
                            return Err(SimError::Unsupported(format!(
                                "edge-triggered block in '{}'",
                                self.module.name
                            )))
                        }
                    },
                    ModuleItem::InitialBlock { .. } => {}
                    ModuleItem::Instantiation(inst) => self.eval_instance(inst)?,
                    ModuleItem::GenerateRegion(_) => {
                        return Err(SimError::Unsupported(
                            "unexpanded generate region".to_string(),
                        ))
                    }
                }
            }
            if before == (self.env.clone(), snapshot_mem(&self.memories)) {
                return Ok(());
            }
            let _ = pass;
        }
        Err(SimError::NoConvergence(self.module.name.clone()))
    }

    fn eval_instance(&mut self, inst: &Instance) -> Result<(), SimError> {
        if GATES.contains(&inst.module.as_str()) {
            return self.eval_gate(inst);
        }
        let child = self
            .design
            .by_name
            .get(inst.module.as_str())
            .ok_or_else(|| SimError::UnknownModule(inst.module.clone()))?;
        let mut overrides = BTreeMap::new();
        match &inst.parameters {
            Connections::Named(list) => {
                for nc in list {
                    if let Some(e) = &nc.expr {
                        let env0 = HashMap::new();
                        let v = rtlgraph_core::elab::fold_const(e, &env0)
                            .map_err(|e| SimError::Unsupported(e.to_string()))?;
                        overrides.insert(nc.port.clone(), v);
                    }
                }
            }
            Connections::Positional(list) => {
                let formals: Vec<&Parameter> =
                    child.parameters.iter().filter(|p| !p.is_local).collect();
                for (i, e) in list.iter().enumerate() {
                    if let Some(p) = formals.get(i) {
                        let env0 = HashMap::new();
                        let v = rtlgraph_core::elab::fold_const(e, &env0)
                            .map_err(|e| SimError::Unsupported(e.to_string()))?;
                        overrides.insert(p.name.clone(), v);
                    }
                }
            }
        }
        let resolved = resolve_parameters(child, &overrides)
            .map_err(|e| SimError::Unsupported(e.to_string()))?;

        // bind actuals to formals
        let mut actual_for: Vec<Option<Expression>> = vec![None; resolved.ports.len()];
        match &inst.ports {
            Connections::Named(list) => {
                for nc in list {
                    if let Some(i) = resolved.ports.iter().position(|p| p.name == nc.port) {
                        actual_for[i] = nc.expr.clone();
                    }
                }
            }
            Connections::Positional(list) => {
                for (i, e) in list.iter().enumerate() {
                    if i < actual_for.len() {
                        actual_for[i] = Some(e.clone());
                    }
                }
            }
        }

        let mut child_state = ModuleState::new(self.design, &resolved)?;
        for (i, p) in resolved.ports.iter().enumerate() {
            if p.direction == PortDirection::Input {
                let v = match &actual_for[i] {
                    Some(e) => {
                        let w = range_width(&p.range).max(self.self_width(e));
                        self.eval_expr(e, w)?
                    }
                    None => 0,
                };
                child_state.write_name(&p.name, v);
            }
        }
        child_state.settle()?;
        for (i, p) in resolved.ports.iter().enumerate() {
            if p.direction == PortDirection::Output {
                if let Some(actual) = &actual_for[i] {
                    let v = child_state.read_name(&p.name);
                    self.write_lvalue(actual, v)?;
                }
            }
        }
        Ok(())
    }

    fn eval_gate(&mut self, inst: &Instance) -> Result<(), SimError> {
        let args = match &inst.ports {
            Connections::Positional(list) => list.clone(),
            Connections::Named(_) => {
                return Err(SimError::Unsupported("named gate connections".into()))
            }
        };
        if args.len() < 2 {
            return Err(SimError::Unsupported("gate with fewer than 2 pins".into()));
        }
        match inst.module.as_str() {
            "buf" | "not" => {
                let v = self.eval_expr(args.last().unwrap(), 1)?;
                let v = if inst.module == "not" { !v & 1 } else { v & 1 };
                for t in &args[..args.len() - 1] {
                    self.write_lvalue(t, v)?;
                }
            }
            gate => {
                let mut acc = self.eval_expr(&args[1], 1)? & 1;
                for a in &args[2..] {
                    let v = self.eval_expr(a, 1)? & 1;
                    acc = match gate {
                        "and" | "nand" => acc & v,
                        "or" | "nor" => acc | v,
                        _ => acc ^ v,
                    };
                }
                if matches!(gate, "nand" | "nor" | "xnor") {
                    acc = !acc & 1;
                }
                self.write_lvalue(&args[0], acc)?;
            }
        }
        Ok(())
    }

    fn exec(&mut self, stmt: &Statement) -> Result<(), SimError> {
        match stmt {
            Statement::BlockingAssign { target, value }
            | Statement::NonblockingAssign { target, value } => {
                let ctx = self.lvalue_width(target).max(self.self_width(value));
                let v = self.eval_expr(value, ctx)?;
                self.write_lvalue(target, v)
            }
            Statement::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let c = self.eval_expr(cond, self.self_width(cond))?;
                if c != 0 {
                    self.exec(then_branch)
                } else if let Some(e) = else_branch {
                    self.exec(e)
                } else {
                    Ok(())
                }
            }
            Statement::Case {
                kind,
                selector,
                arms,
            } => {
                let sw = self.self_width(selector);
                let sel = self.eval_expr(selector, sw)?;
                let mut default: Option<&CaseArm> = None;
                for arm in arms {
                    if arm.is_default {
                        default = Some(arm);
                        continue;
                    }
                    for label in &arm.labels {
                        if self.case_label_matches(label, sel, sw, *kind)? {
                            return self.exec(&arm.body);
                        }
                    }
                }
                if let Some(d) = default {
                    return self.exec(&d.body);
                }
                Ok(())
            }
            Statement::Block { statements, .. } => {
                for s in statements {
                    self.exec(s)?;
                }
                Ok(())
            }
            Statement::ForLoop { .. } => Err(SimError::Unsupported(
                "for loop (should be unrolled)".into(),
            )),
            Statement::Delay { stmt, .. } => match stmt {
                Some(s) => self.exec(s),
                None => Ok(()),
            },
            Statement::SystemCall { .. } | Statement::Empty => Ok(()),
        }
    }

    fn case_label_matches(
        &mut self,
        label: &Expression,
        sel: u128,
        sel_width: u32,
        kind: CaseKind,
    ) -> Result<bool, SimError> {
        if let Expression::Literal(lit) = label {
            let care = match kind {
                CaseKind::Case => mask(sel_width),
                CaseKind::Casex => !(lit.x_mask | lit.z_mask) & mask(sel_width),
                CaseKind::Casez => !lit.z_mask & mask(sel_width),
            };
            Ok((lit.value & care) == (sel & care))
        } else {
            let w = self.self_width(label).max(sel_width);
            let v = self.eval_expr(label, w)?;
            Ok(v == sel)
        }
    }

    /// Self-determined width (independent re-implementation of the rules).
    fn self_width(&self, expr: &Expression) -> u32 {
        match expr {
            Expression::Literal(l) => l.width.unwrap_or(32),
            Expression::Ident(n) => self.width_of(n),
            Expression::BitSelect { base, .. } => {
                if let Expression::Ident(n) = base.as_ref() {
                    if self.memories.contains_key(n.as_str()) {
                        return self.width_of(n);
                    }
                }
                1
            }
            Expression::PartSelect { msb, lsb, .. } => {
                let env0 = HashMap::new();
                let m = rtlgraph_core::elab::fold_const(msb, &env0).unwrap_or(0);
                let l = rtlgraph_core::elab::fold_const(lsb, &env0).unwrap_or(0);
                (m - l).unsigned_abs() as u32 + 1
            }
            Expression::IndexedPartSelect { width, .. } => {
                let env0 = HashMap::new();
                rtlgraph_core::elab::fold_const(width, &env0).unwrap_or(1) as u32
            }
            Expression::Concat(parts) => parts.iter().map(|p| self.self_width(p)).sum(),
            Expression::Replicate { count, value } => {
                let env0 = HashMap::new();
                let c = rtlgraph_core::elab::fold_const(count, &env0).unwrap_or(1) as u32;
                c * self.self_width(value)
            }
            Expression::Unary { op, operand } => match op {
                UnaryOp::LogicalNot
                | UnaryOp::RedAnd
                | UnaryOp::RedOr
                | UnaryOp::RedXor
                | UnaryOp::RedNand
                | UnaryOp::RedNor
                | UnaryOp::RedXnor => 1,
                _ => self.self_width(operand),
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
                BinaryOp::Shl | BinaryOp::Shr => self.self_width(lhs),
                _ => self.self_width(lhs).max(self.self_width(rhs)),
            },
            Expression::Ternary {
                then_value,
                else_value,
                ..
            } => self
                .self_width(then_value)
                .max(self.self_width(else_value)),
        }
    }

    fn lvalue_width(&self, e: &Expression) -> u32 {
        self.self_width(e)
    }

    fn eval_expr(&mut self, expr: &Expression, ctx: u32) -> Result<u128, SimError> {
        let m = mask(ctx);
        Ok(match expr {
            Expression::Literal(l) => l.value & m,
            Expression::Ident(n) => self.read_name(n) & m,
            Expression::BitSelect { base, index } => {
                if let Expression::Ident(n) = base.as_ref() {
                    if self.memories.contains_key(n.as_str()) {
                        let iw = self.self_width(index);
                        let addr = self.eval_expr(index, iw)? as i128;
                        let (words, lo) = &self.memories[n.as_str()];
                        let off = addr - *lo;
                        let v = if off >= 0 && (off as usize) < words.len() {
                            words[off as usize]
                        } else {
                            0
                        };
                        return Ok(v & m);
                    }
                }
                let bw = self.self_width(base);
                let v = self.eval_expr(base, bw)?;
                let iw = self.self_width(index);
                let idx = self.eval_expr(index, iw)? as i128;
                let lsb = base
                    .base_name()
                    .and_then(|n| self.lsbs.get(n).copied())
                    .unwrap_or(0);
                let off = idx - lsb;
                if off < 0 || off >= bw as i128 {
                    0
                } else {
                    (v >> off) & 1 & m
                }
            }
            Expression::PartSelect { base, msb, lsb } => {
                let bw = self.self_width(base);
                let v = self.eval_expr(base, bw)?;
                let env0 = HashMap::new();
                let hi = rtlgraph_core::elab::fold_const(msb, &env0)
                    .map_err(|e| SimError::Unsupported(e.to_string()))?;
                let lo = rtlgraph_core::elab::fold_const(lsb, &env0)
                    .map_err(|e| SimError::Unsupported(e.to_string()))?;
                let base_lsb = base
                    .base_name()
                    .and_then(|n| self.lsbs.get(n).copied())
                    .unwrap_or(0);
                let w = (hi - lo).unsigned_abs() as u32 + 1;
                let off = lo - base_lsb;
                if off < 0 {
                    0
                } else {
                    (v >> off) & mask(w) & m
                }
            }
            Expression::IndexedPartSelect {
                base,
                start,
                width,
                ascending,
            } => {
                let bw = self.self_width(base);
                let v = self.eval_expr(base, bw)?;
                let sw = self.self_width(start);
                let s = self.eval_expr(start, sw)? as i128;
                let env0 = HashMap::new();
                let w = rtlgraph_core::elab::fold_const(width, &env0)
                    .map_err(|e| SimError::Unsupported(e.to_string()))? as u32;
                let base_lsb = base
                    .base_name()
                    .and_then(|n| self.lsbs.get(n).copied())
                    .unwrap_or(0);
                let lo = if *ascending { s } else { s - w as i128 + 1 };
                let off = lo - base_lsb;
                if off < 0 {
                    0
                } else {
                    (v >> off) & mask(w) & m
                }
            }
            Expression::Concat(parts) => {
                let mut v: u128 = 0;
                for p in parts {
                    let w = self.self_width(p);
                    let pv = self.eval_expr(p, w)?;
                    v = (v << w) | (pv & mask(w));
                }
                v & m
            }
            Expression::Replicate { count, value } => {
                let env0 = HashMap::new();
                let c = rtlgraph_core::elab::fold_const(count, &env0)
                    .map_err(|e| SimError::Unsupported(e.to_string()))? as u32;
                let w = self.self_width(value);
                let pv = self.eval_expr(value, w)?;
                let mut v: u128 = 0;
                for _ in 0..c {
                    v = (v << w) | (pv & mask(w));
                }
                v & m
            }
            Expression::Unary { op, operand } => match op {
                UnaryOp::BitNot => !self.eval_expr(operand, ctx)? & m,
                UnaryOp::Negate => 0u128.wrapping_sub(self.eval_expr(operand, ctx)?) & m,
                UnaryOp::Identity => self.eval_expr(operand, ctx)? & m,
                UnaryOp::LogicalNot => {
                    let w = self.self_width(operand);
                    u128::from(self.eval_expr(operand, w)? == 0)
                }
                _ => {
                    let w = self.self_width(operand);
                    let v = self.eval_expr(operand, w)?;
                    let ones = (v & mask(w)).count_ones();
                    match op {
                        UnaryOp::RedAnd => u128::from(ones == w),
                        UnaryOp::RedOr => u128::from(ones > 0),
                        UnaryOp::RedXor => u128::from(ones % 2 == 1),
                        UnaryOp::RedNand => u128::from(ones != w),
                        UnaryOp::RedNor => u128::from(ones == 0),
                        UnaryOp::RedXnor => u128::from(ones % 2 == 0),
                        _ => unreachable!(),
                    }
                }
            },
            Expression::Binary { op, lhs, rhs } => match op {
                BinaryOp::Add => {
                    self.eval_expr(lhs, ctx)?.wrapping_add(self.eval_expr(rhs, ctx)?) & m
                }
                BinaryOp::Sub => {
                    self.eval_expr(lhs, ctx)?.wrapping_sub(self.eval_expr(rhs, ctx)?) & m
                }
                BinaryOp::Mul => {
                    self.eval_expr(lhs, ctx)?.wrapping_mul(self.eval_expr(rhs, ctx)?) & m
                }
                BinaryOp::Div => {
                    let a = self.eval_expr(lhs, ctx)?;
                    let b = self.eval_expr(rhs, ctx)?;
                    if b == 0 {
                        0
                    } else {
                        (a / b) & m
                    }
                }
                BinaryOp::BitAnd => self.eval_expr(lhs, ctx)? & self.eval_expr(rhs, ctx)? & m,
                BinaryOp::BitOr => (self.eval_expr(lhs, ctx)? | self.eval_expr(rhs, ctx)?) & m,
                BinaryOp::BitXor => (self.eval_expr(lhs, ctx)? ^ self.eval_expr(rhs, ctx)?) & m,
                BinaryOp::BitXnor => !(self.eval_expr(lhs, ctx)? ^ self.eval_expr(rhs, ctx)?) & m,
                BinaryOp::LogicalAnd => {
                    let lw = self.self_width(lhs);
                    let rw = self.self_width(rhs);
                    u128::from(self.eval_expr(lhs, lw)? != 0 && self.eval_expr(rhs, rw)? != 0)
                }
                BinaryOp::LogicalOr => {
                    let lw = self.self_width(lhs);
                    let rw = self.self_width(rhs);
                    u128::from(self.eval_expr(lhs, lw)? != 0 || self.eval_expr(rhs, rw)? != 0)
                }
                BinaryOp::Shl => {
                    let sw = self.self_width(rhs);
                    let s = self.eval_expr(rhs, sw)?;
                    let v = self.eval_expr(lhs, ctx)?;
                    if s >= 128 {
                        0
                    } else {
                        (v << s) & m
                    }
                }
                BinaryOp::Shr => {
                    let sw = self.self_width(rhs);
                    let s = self.eval_expr(rhs, sw)?;
                    let v = self.eval_expr(lhs, ctx)?;
                    if s >= 128 {
                        0
                    } else {
                        (v >> s) & m
                    }
                }
                _ => {
                    let w = self.self_width(lhs).max(self.self_width(rhs));
                    let a = self.eval_expr(lhs, w)?;
                    let b = self.eval_expr(rhs, w)?;
                    match op {
                        BinaryOp::Lt => u128::from(a < b),
                        BinaryOp::Gt => u128::from(a > b),
                        BinaryOp::Le => u128::from(a <= b),
                        BinaryOp::Ge => u128::from(a >= b),
                        BinaryOp::Eq => u128::from(a == b),
                        BinaryOp::Ne => u128::from(a != b),
                        _ => unreachable!(),
                    }
                }
            },
            Expression::Ternary {
                cond,
                then_value,
                else_value,
            } => {
                let cw = self.self_width(cond);
                if self.eval_expr(cond, cw)? != 0 {
                    self.eval_expr(then_value, ctx)?
                } else {
                    self.eval_expr(else_value, ctx)?
                }
            }
        })
    }

    fn write_lvalue(&mut self, target: &Expression, value: u128) -> Result<(), SimError> {
        match target {
            Expression::Ident(n) => {
                if self.memories.contains_key(n.as_str()) {
                    return Ok(()); // whole-array writes are not a thing
                }
                self.write_name(n, value);
                Ok(())
            }
            Expression::BitSelect { base, index } => {
                let name = match base.base_name() {
                    Some(n) => n.to_string(),
                    None => return Ok(()),
                };
                if self.memories.contains_key(&name) {
                    let iw = self.self_width(index);
                    let addr = self.eval_expr(index, iw)? as i128;
                    let w = self.width_of(&name);
                    if let Some((words, lo)) = self.memories.get_mut(&name) {
                        let off = addr - *lo;
                        if off >= 0 && (off as usize) < words.len() {
                            words[off as usize] = value & mask(w);
                        }
                    }
                    return Ok(());
                }
                let iw = self.self_width(index);
                let idx = self.eval_expr(index, iw)? as i128;
                let lsb = self.lsbs.get(&name).copied().unwrap_or(0);
                let off = idx - lsb;
                let w = self.width_of(&name);
                if off >= 0 && off < w as i128 {
                    let old = self.read_name(&name);
                    let bit = 1u128 << off;
                    let new = (old & !bit) | ((value & 1) << off);
                    self.write_name(&name, new);
                }
                Ok(())
            }
            Expression::PartSelect { base, msb, lsb } => {
                let name = match base.base_name() {
                    Some(n) => n.to_string(),
                    None => return Ok(()),
                };
                let env0 = HashMap::new();
                let hi = rtlgraph_core::elab::fold_const(msb, &env0)
                    .map_err(|e| SimError::Unsupported(e.to_string()))?;
                let lo = rtlgraph_core::elab::fold_const(lsb, &env0)
                    .map_err(|e| SimError::Unsupported(e.to_string()))?;
                let base_lsb = self.lsbs.get(&name).copied().unwrap_or(0);
                let w = (hi - lo).unsigned_abs() as u32 + 1;
                let off = lo - base_lsb;
                if off >= 0 {
                    let old = self.read_name(&name);
                    let field = mask(w) << off;
                    let new = (old & !field) | ((value & mask(w)) << off);
                    self.write_name(&name, new);
                }
                Ok(())
            }
            Expression::Concat(parts) => {
                // MSB-first split
                let mut shift: u32 = parts.iter().map(|p| self.lvalue_width(p)).sum();
                for p in parts {
                    let w = self.lvalue_width(p);
                    shift -= w;
                    self.write_lvalue(p, (value >> shift) & mask(w))?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn snapshot_mem(m: &HashMap<String, (Vec<u128>, i128)>) -> Vec<(String, Vec<u128>)> {
    let mut v: Vec<(String, Vec<u128>)> =
        m.iter().map(|(k, (w, _))| (k.clone(), w.clone())).collect();
    v.sort();
    v
}

// ----------------------------------------------------------------------
// exhaustive helpers
// ----------------------------------------------------------------------

/// Total input bit count of `top`.
pub fn total_input_bits(modules: &[AstModule], top: &str) -> Result<u32, SimError> {
    let d = Design::new(modules);
    Ok(d.input_ports(top)?.iter().map(|(_, w)| w).sum())
}

/// Assign the bits of `vector` across the inputs in order.
pub fn vector_to_inputs(inputs: &[(String, u32)], vector: u128) -> BTreeMap<String, u128> {
    let mut map = BTreeMap::new();
    let mut shift = 0u32;
    for (name, w) in inputs {
        map.insert(name.clone(), (vector >> shift) & mask(*w));
        shift += w;
    }
    map
}

/// Exhaustively compare two designs on all input vectors; returns the first
/// mismatching vector if any.
pub fn equivalence_counterexample(
    a: &[AstModule],
    top_a: &str,
    b: &[AstModule],
    top_b: &str,
) -> Result<Option<u128>, SimError> {
    let da = Design::new(a);
    let db = Design::new(b);
    let inputs = da.input_ports(top_a)?;
    let bits: u32 = inputs.iter().map(|(_, w)| w).sum();
    assert!(bits <= 20, "exhaustive comparison capped at 20 input bits");
    for vector in 0..(1u128 << bits) {
        let iv = vector_to_inputs(&inputs, vector);
        let oa = da.eval(top_a, &iv)?;
        let ob = db.eval(top_b, &iv)?;
        if oa != ob {
            return Ok(Some(vector));
        }
    }
    Ok(None)
}

/// For each output, the set of input ports whose toggling (any bit, any
/// base vector) changes that output.
pub fn toggle_dependencies(
    modules: &[AstModule],
    top: &str,
) -> Result<BTreeMap<String, std::collections::BTreeSet<String>>, SimError> {
    let d = Design::new(modules);
    let inputs = d.input_ports(top)?;
    let outputs = d.output_ports(top)?;
    let bits: u32 = inputs.iter().map(|(_, w)| w).sum();
    assert!(bits <= 16, "toggle oracle capped at 16 input bits");
    let mut deps: BTreeMap<String, std::collections::BTreeSet<String>> = outputs
        .iter()
        .map(|(n, _)| (n.clone(), Default::default()))
        .collect();
    for vector in 0..(1u128 << bits) {
        let base = d.eval(top, &vector_to_inputs(&inputs, vector))?;
        for bit in 0..bits {
            let flipped = vector ^ (1u128 << bit);
            if flipped < vector {
                continue; // each unordered pair once
            }
            let alt = d.eval(top, &vector_to_inputs(&inputs, flipped))?;
            if alt == base {
                continue;
            }
            // bit -> owning input port
            let mut shift = 0u32;
            let mut owner = "";
            for (name, w) in &inputs {
                if bit < shift + w {
                    owner = name;
                    break;
                }
                shift += w;
            }
            for (out, _) in &outputs {
                if base.get(out) != alt.get(out) {
                    deps.get_mut(out).unwrap().insert(owner.to_string());
                }
            }
        }
    }
    Ok(deps)
}

// ----------------------------------------------------------------------
// pass@k enumeration oracle
// ----------------------------------------------------------------------

/// Exact pass@k by enumerating every k-subset of n outcomes (n <= 20):
/// the fraction of subsets containing at least one of the c successes.
pub fn pass_at_k_enumerated(n: u32, c: u32, k: u32) -> f64 {
    assert!(n <= 20 && c <= n && k >= 1 && k <= n);
    // successes are outcomes 0..c
    let success_mask: u32 = if c == 0 { 0 } else { (1u32 << c) - 1 };
    let mut total = 0u64;
    let mut hit = 0u64;
    for subset in 0u32..(1u32 << n) {
        if subset.count_ones() != k {
            continue;
        }
        total += 1;
        if subset & success_mask != 0 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rtlgraph_core::parser::parse_design;

    fn parse(src: &str) -> Vec<AstModule> {
        let out = parse_design(src).unwrap();
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        out.modules
    }

    #[test]
    fn adder_evaluates() {
        let ms = parse(
            "module a(input [1:0] x, input [1:0] y, output [2:0] s); assign s = x + y; endmodule",
        );
        let d = Design::new(&ms);
        let mut inputs = BTreeMap::new();
        inputs.insert("x".to_string(), 3);
        inputs.insert("y".to_string(), 2);
        let out = d.eval("a", &inputs).unwrap();
        assert_eq!(out["s"], 5);
    }

    #[test]
    fn carry_preserved_in_concat_target() {
        let ms = parse(
            "module a(input x, input y, output c, output s); assign {c, s} = x + y; endmodule",
        );
        let d = Design::new(&ms);
        let mut inputs = BTreeMap::new();
        inputs.insert("x".to_string(), 1);
        inputs.insert("y".to_string(), 1);
        let out = d.eval("a", &inputs).unwrap();
        assert_eq!((out["c"], out["s"]), (1, 0));
    }

    #[test]
    fn case_statement_evaluates() {
        let src = r#"
module alu(input [3:0] A, input [3:0] B, input [2:0] ALUOp,
           output reg [7:0] Result, output Zero);
  always @(*) begin
    case (ALUOp)
      3'b000: Result = A + B;
      3'b001: Result = A - B;
      3'b100: Result = A * B;
      default: Result = 8'b0;
    endcase
  end
  assign Zero = (Result == 8'b0);
endmodule
"#;
        let ms = parse(src);
        let d = Design::new(&ms);
        let mut inputs = BTreeMap::new();
        inputs.insert("A".to_string(), 9);
        inputs.insert("B".to_string(), 9);
        inputs.insert("ALUOp".to_string(), 4);
        let out = d.eval("alu", &inputs).unwrap();
        assert_eq!(out["Result"], 81);
        assert_eq!(out["Zero"], 0);
        inputs.insert("ALUOp".to_string(), 7);
        let out = d.eval("alu", &inputs).unwrap();
        assert_eq!(out["Result"], 0);
        assert_eq!(out["Zero"], 1);
    }

    #[test]
    fn hierarchy_evaluates() {
        let src = r#"
module half(input a, input b, output s, output c);
  assign s = a ^ b;
  assign c = a & b;
endmodule
module full(input a, input b, input cin, output s, output cout);
  wire s1;
  wire c1;
  wire c2;
  half h0 (.a(a), .b(b), .s(s1), .c(c1));
  half h1 (.a(s1), .b(cin), .s(s), .c(c2));
  assign cout = c1 | c2;
endmodule
"#;
        let ms = parse(src);
        let d = Design::new(&ms);
        for v in 0..8u128 {
            let mut inputs = BTreeMap::new();
            inputs.insert("a".to_string(), v & 1);
            inputs.insert("b".to_string(), (v >> 1) & 1);
            inputs.insert("cin".to_string(), (v >> 2) & 1);
            let out = d.eval("full", &inputs).unwrap();
            let expect = (v & 1) + ((v >> 1) & 1) + ((v >> 2) & 1);
            assert_eq!(out["s"], expect & 1, "v={}", v);
            assert_eq!(out["cout"], (expect >> 1) & 1, "v={}", v);
        }
    }

    #[test]
    fn toggle_dependencies_mux() {
        let ms = parse(
            "module m(input s, input a, input b, output y); assign y = s ? a : b; endmodule",
        );
        let deps = toggle_dependencies(&ms, "m").unwrap();
        let y = &deps["y"];
        assert!(y.contains("s") && y.contains("a") && y.contains("b"));
    }

    #[test]
    fn toggle_ignores_unused_input() {
        let ms = parse("module m(input a, input unused, output y); assign y = ~a; endmodule");
        let deps = toggle_dependencies(&ms, "m").unwrap();
        assert!(deps["y"].contains("a"));
        assert!(!deps["y"].contains("unused"));
    }

    #[test]
    fn pass_at_k_reference_values() {
        assert_eq!(pass_at_k_enumerated(10, 0, 5), 0.0);
        assert_eq!(pass_at_k_enumerated(10, 10, 5), 1.0);
        let v = pass_at_k_enumerated(10, 3, 5);
        assert!((v - (1.0 - 21.0 / 252.0)).abs() < 1e-12, "{}", v);
    }

    #[test]
    fn equivalence_on_identical_modules() {
        let a = parse("module m(input [1:0] a, output [1:0] y); assign y = ~a; endmodule");
        let b = parse("module m2(input [1:0] a, output [1:0] y); assign y = ~a; endmodule");
        assert_eq!(equivalence_counterexample(&a, "m", &b, "m2").unwrap(), None);
        let c = parse("module m3(input [1:0] a, output [1:0] y); assign y = a; endmodule");
        assert!(equivalence_counterexample(&a, "m", &c, "m3")
            .unwrap()
            .is_some());
    }

    #[test]
    fn nonzero_lsb_ranges() {
        let ms = parse("module m(input [4:1] a, output [4:1] y); assign y = a + 1; endmodule");
        let d = Design::new(&ms);
        let mut inputs = BTreeMap::new();
        inputs.insert("a".to_string(), 7);
        let out = d.eval("m", &inputs).unwrap();
        assert_eq!(out["y"], 8);
    }

    #[test]
    fn parameterized_instance() {
        let src = r#"
module inc #(parameter W = 2) (input [W-1:0] a, output [W-1:0] y);
  assign y = a + 1;
endmodule
module top(input [3:0] x, output [3:0] z);
  inc #(.W(4)) u0 (.a(x), .y(z));
endmodule
"#;
        let ms = parse(src);
        let d = Design::new(&ms);
        let mut inputs = BTreeMap::new();
        inputs.insert("x".to_string(), 14);
        let out = d.eval("top", &inputs).unwrap();
        assert_eq!(out["z"], 15);
    }
}
