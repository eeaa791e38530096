// SPDX-License-Identifier: Apache-2.0

//! Data-flow and control-flow graph construction from a flat design.
//!
//! Determinism: items are walked in a canonical order (sorted by their
//! rendered source text, so declaration order does not matter), and node
//! ids are assigned by topological order with ties broken by
//! (label, creation order). Cycles are broken at register nodes first.
//!
//! Granularity follows the high-level normalization: one node per operator
//! occurrence, constants deduplicated by rendering, single-use internal
//! nets collapsed into their driver, bit/part selects with constant
//! indices read straight from the base signal.

use crate::ast::*;
use crate::elab::{fold_const, FlatDesign};
use crate::emit::{render_expression, render_item};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Dfg,
    Cfg,
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphKind::Dfg => write!(f, "DFG"),
            GraphKind::Cfg => write!(f, "CFG"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeType {
    Input,
    Output,
    Inout,
    Net,
    Register,
    Operator,
    Constant,
    Branch,
    Module,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NodeFunc {
    Arith,
    Logic,
    Storage,
    Compare,
    Select,
    Route,
    Control,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Temporal {
    Combinational,
    Sequential,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphNode {
    pub id: usize,
    pub label: String,
    pub ntype: NodeType,
    pub func: NodeFunc,
    pub temporal: Temporal,
    pub width: u32,
    pub stage: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    Data,
    Control,
}

impl std::fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EdgeLabel::Data => write!(f, "data"),
            EdgeLabel::Control => write!(f, "control"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub label: EdgeLabel,
    /// `key=value` annotations (signal name, clock edge, ...).
    pub annotations: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowGraph {
    pub kind: GraphKind,
    pub top: String,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl FlowGraph {
    pub fn node_by_label(&self, label: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.label == label)
    }

    pub fn branch_nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(|n| n.ntype == NodeType::Branch)
    }

    /// Primary outputs with no incoming data edge (disconnected sinks).
    pub fn isolated_outputs(&self) -> Vec<String> {
        let driven: HashSet<usize> = self.edges.iter().map(|e| e.dst).collect();
        self.nodes
            .iter()
            .filter(|n| n.ntype == NodeType::Output && !driven.contains(&n.id))
            .map(|n| n.label.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unresolved width: {0}")]
    UnresolvedWidth(String),
    #[error("unknown output '{0}'")]
    UnknownOutput(String),
    #[error("graph does not match design: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopKind {
    CombinationalLoop,
    SequentialStateLoop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackCycle {
    /// Node ids in the cycle, ascending.
    pub nodes: Vec<usize>,
    pub kind: LoopKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeedbackReport {
    pub cycles: Vec<FeedbackCycle>,
}

impl FeedbackReport {
    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

// ----------------------------------------------------------------------
// public operations
// ----------------------------------------------------------------------

/// Build the data-flow graph, fully attributed.
pub fn build_dfg(design: &FlatDesign) -> Result<FlowGraph, GraphError> {
    Builder::new(design, GraphKind::Dfg)?.build()
}

/// Build the control-flow graph, fully attributed.
pub fn build_cfg(design: &FlatDesign) -> Result<FlowGraph, GraphError> {
    Builder::new(design, GraphKind::Cfg)?.build()
}

/// Both graphs of a design.
pub fn build_graphs(design: &FlatDesign) -> Result<(FlowGraph, FlowGraph), GraphError> {
    Ok((build_dfg(design)?, build_cfg(design)?))
}

/// Recompute node type/function attributes from the design and copy them
/// onto `graph` (which must have been built from the same design).
pub fn annotate_nodes(graph: &FlowGraph, design: &FlatDesign) -> Result<FlowGraph, GraphError> {
    let fresh = Builder::new(design, graph.kind)?.build()?;
    let mut out = graph.clone();
    copy_layer(&mut out, &fresh, |dst, src| {
        dst.ntype = src.ntype;
        dst.func = src.func;
        dst.width = src.width;
    })?;
    Ok(out)
}

/// Recompute temporal classification and stage depth from the design and
/// copy them onto `graph`.
pub fn classify_temporal(graph: &FlowGraph, design: &FlatDesign) -> Result<FlowGraph, GraphError> {
    let fresh = Builder::new(design, graph.kind)?.build()?;
    let mut out = graph.clone();
    copy_layer(&mut out, &fresh, |dst, src| {
        dst.temporal = src.temporal;
        dst.stage = src.stage;
    })?;
    Ok(out)
}

fn copy_layer(
    dst: &mut FlowGraph,
    src: &FlowGraph,
    f: impl Fn(&mut GraphNode, &GraphNode),
) -> Result<(), GraphError> {
    if dst.nodes.len() != src.nodes.len() {
        return Err(GraphError::Mismatch(format!(
            "{} nodes vs {}",
            dst.nodes.len(),
            src.nodes.len()
        )));
    }
    for (d, s) in dst.nodes.iter_mut().zip(&src.nodes) {
        if d.label != s.label {
            return Err(GraphError::Mismatch(format!(
                "node {} label '{}' vs '{}'",
                d.id, d.label, s.label
            )));
        }
        f(d, s);
    }
    Ok(())
}

/// Strongly connected components of size > 1 (or with a self-loop),
/// classified by register membership.
pub fn detect_feedback(dfg: &FlowGraph) -> FeedbackReport {
    let n = dfg.nodes.len();
    let mut adj = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for e in &dfg.edges {
        if e.src == e.dst {
            self_loop[e.src] = true;
        }
        adj[e.src].push(e.dst);
    }
    let sccs = tarjan_scc(&adj);
    let mut cycles = Vec::new();
    for comp in sccs {
        let cyclic = comp.len() > 1 || (comp.len() == 1 && self_loop[comp[0]]);
        if !cyclic {
            continue;
        }
        let mut nodes = comp;
        nodes.sort_unstable();
        let has_register = nodes
            .iter()
            .any(|&i| dfg.nodes[i].ntype == NodeType::Register);
        cycles.push(FeedbackCycle {
            nodes,
            kind: if has_register {
                LoopKind::SequentialStateLoop
            } else {
                LoopKind::CombinationalLoop
            },
        });
    }
    cycles.sort_by_key(|c| c.nodes[0]);
    FeedbackReport { cycles }
}

/// Primary input names with a directed path to the named output.
pub fn dependency_closure(
    dfg: &FlowGraph,
    output: &str,
) -> Result<BTreeSet<String>, GraphError> {
    let target = dfg
        .node_by_label(output)
        .filter(|n| {
            matches!(
                n.ntype,
                NodeType::Output | NodeType::Inout | NodeType::Register
            )
        })
        .ok_or_else(|| GraphError::UnknownOutput(output.to_string()))?;
    let n = dfg.nodes.len();
    let mut radj = vec![Vec::new(); n];
    for e in &dfg.edges {
        radj[e.dst].push(e.src);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![target.id];
    let mut inputs = BTreeSet::new();
    while let Some(i) = stack.pop() {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        let node = &dfg.nodes[i];
        if matches!(node.ntype, NodeType::Input | NodeType::Inout) && node.id != target.id {
            inputs.insert(node.label.clone());
        }
        for &p in &radj[i] {
            stack.push(p);
        }
    }
    Ok(inputs)
}

fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    // iterative Tarjan
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0usize;
    let mut sccs = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();

    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        call.push((start, 0));
        while let Some(&mut (v, ref mut ei)) = call.last_mut() {
            if *ei == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ei < adj[v].len() {
                let w = adj[v][*ei];
                *ei += 1;
                if index[w] == usize::MAX {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&mut (p, _)) = call.last_mut() {
                    low[p] = low[p].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    sccs.push(comp);
                }
            }
        }
    }
    sccs
}

// ----------------------------------------------------------------------
// builder
// ----------------------------------------------------------------------

struct NodeData {
    label: String,
    ntype: NodeType,
    func: NodeFunc,
    temporal: Temporal,
    width: u32,
}

struct Builder<'a> {
    design: &'a FlatDesign,
    kind: GraphKind,
    nodes: Vec<NodeData>,
    by_label: HashMap<String, usize>,
    edges: Vec<GraphEdge>,
    edge_keys: HashSet<(usize, usize, EdgeLabel)>,
    memories: BTreeSet<String>,
    /// signals assigned in edge-triggered blocks
    sequential_names: HashSet<String>,
    /// guard condition node ids active during procedural walks (DFG)
    guard_stack: Vec<usize>,
    /// branch nodes created for clock/reset edge events (CFG)
    edge_branches: HashSet<usize>,
}

#[derive(Default, Clone)]
struct ProcEnv {
    blocking: BTreeMap<String, usize>,
    nonblocking: BTreeMap<String, usize>,
}

impl<'a> Builder<'a> {
    fn new(design: &'a FlatDesign, kind: GraphKind) -> Result<Self, GraphError> {
        let memories = design
            .memory_names()
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut sequential_names = HashSet::new();
        for item in &design.module.items {
            if let ModuleItem::AlwaysBlock {
                sensitivity: Sensitivity::Edges(_),
                body,
            } = item
            {
                let mut targets = Vec::new();
                collect_targets(body, &mut targets);
                sequential_names.extend(targets.into_iter());
            }
        }
        Ok(Builder {
            design,
            kind,
            nodes: Vec::new(),
            by_label: HashMap::new(),
            edges: Vec::new(),
            edge_keys: HashSet::new(),
            memories,
            sequential_names,
            guard_stack: Vec::new(),
            edge_branches: HashSet::new(),
        })
    }

    fn signal_ntype(&self, name: &str, port: Option<&Port>) -> NodeType {
        if self.sequential_names.contains(name) || self.memories.contains(name) {
            return NodeType::Register;
        }
        match port {
            Some(p) => match p.direction {
                PortDirection::Input => NodeType::Input,
                PortDirection::Output => NodeType::Output,
                PortDirection::Inout => NodeType::Inout,
            },
            None => NodeType::Net,
        }
    }

    fn signal_width(&self, name: &str) -> Result<u32, GraphError> {
        self.design
            .net_width(name)
            .ok_or_else(|| GraphError::UnresolvedWidth(name.to_string()))
    }

    fn ensure_signal(&mut self, name: &str) -> Result<usize, GraphError> {
        if let Some(&id) = self.by_label.get(name) {
            return Ok(id);
        }
        let port = self.design.module.port(name);
        let ntype = self.signal_ntype(name, port);
        let width = self.signal_width(name)?;
        let func = if ntype == NodeType::Register {
            NodeFunc::Storage
        } else {
            NodeFunc::None
        };
        let id = self.nodes.len();
        self.nodes.push(NodeData {
            label: name.to_string(),
            ntype,
            func,
            temporal: Temporal::None,
            width,
        });
        self.by_label.insert(name.to_string(), id);
        Ok(id)
    }

    fn ensure_constant(&mut self, lit: &Literal) -> usize {
        let label = render_expression(&Expression::Literal(lit.clone()));
        if let Some(&id) = self.by_label.get(&label) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(NodeData {
            label: label.clone(),
            ntype: NodeType::Constant,
            func: NodeFunc::None,
            temporal: Temporal::None,
            width: lit.self_width(),
        });
        self.by_label.insert(label, id);
        id
    }

    fn fresh_node(&mut self, base_label: String, ntype: NodeType, func: NodeFunc, width: u32) -> usize {
        let mut label = base_label.clone();
        let mut k = 2;
        while self.by_label.contains_key(&label) {
            label = format!("{}_{}", base_label, k);
            k += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(NodeData {
            label: label.clone(),
            ntype,
            func,
            temporal: Temporal::None,
            width,
        });
        self.by_label.insert(label, id);
        id
    }

    fn add_edge(&mut self, src: usize, dst: usize, label: EdgeLabel, annotations: Vec<(String, String)>) {
        if self.edge_keys.insert((src, dst, label)) {
            self.edges.push(GraphEdge {
                src,
                dst,
                label,
                annotations,
            });
        }
    }

    /// Data edge annotated with the carried signal name when the source is
    /// a named signal.
    fn add_data_edge(&mut self, src: usize, dst: usize) {
        let ann = match self.nodes[src].ntype {
            NodeType::Input | NodeType::Output | NodeType::Inout | NodeType::Net
            | NodeType::Register => vec![("signal".to_string(), self.nodes[src].label.clone())],
            _ => Vec::new(),
        };
        self.add_edge(src, dst, EdgeLabel::Data, ann);
    }

    fn build(mut self) -> Result<FlowGraph, GraphError> {
        // signal nodes first: ports in declaration order, then nets by name
        let ports: Vec<String> = self.design.module.ports.iter().map(|p| p.name.clone()).collect();
        for p in &ports {
            self.ensure_signal(p)?;
        }
        if self.kind == GraphKind::Dfg {
            let mut net_names: Vec<String> =
                self.design.module.nets.iter().map(|n| n.name.clone()).collect();
            net_names.sort();
            for n in &net_names {
                self.ensure_signal(n)?;
            }
        }

        // canonical item order: by rendered text
        let mut items: Vec<&ModuleItem> = self.design.module.items.iter().collect();
        items.sort_by_key(|i| render_item(i));

        for item in items {
            match self.kind {
                GraphKind::Dfg => self.dfg_item(item)?,
                GraphKind::Cfg => self.cfg_item(item)?,
            }
        }

        if self.kind == GraphKind::Dfg {
            self.collapse_single_use_nets();
        }
        self.assign_temporal();
        let mut graph = self.canonicalize();
        if graph.kind == GraphKind::Dfg {
            compute_stages(&mut graph);
        }
        Ok(graph)
    }

    // ------------------------------------------------------------------
    // DFG
    // ------------------------------------------------------------------

    fn dfg_item(&mut self, item: &ModuleItem) -> Result<(), GraphError> {
        match item {
            ModuleItem::ContinuousAssign { target, value } => {
                let anchor = anchor_of(target);
                let ctx = self.assign_ctx_width(target, value)?;
                let vid = self.build_expr(value, None, &anchor, ctx)?;
                self.connect_target(target, vid, None)?;
                Ok(())
            }
            ModuleItem::AlwaysBlock { body, .. } | ModuleItem::InitialBlock { body } => {
                let mut env = ProcEnv::default();
                self.exec_stmt(body, &mut env)?;
                let assignments: Vec<(String, usize)> = env
                    .blocking
                    .iter()
                    .chain(env.nonblocking.iter())
                    .map(|(k, v)| (k.clone(), *v))
                    .collect();
                for (name, vid) in assignments {
                    let nid = self.ensure_signal(&name)?;
                    if vid != nid {
                        self.add_data_edge(vid, nid);
                    }
                }
                Ok(())
            }
            ModuleItem::Instantiation(_) | ModuleItem::GenerateRegion(_) => Ok(()),
        }
    }

    /// Context width for an assignment: max of target and source
    /// self-determined widths.
    fn assign_ctx_width(&self, target: &Expression, value: &Expression) -> Result<u32, GraphError> {
        let tw = self
            .design
            .expr_width(target)
            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
        let vw = self
            .design
            .expr_width(value)
            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
        Ok(tw.max(vw))
    }

    fn exec_stmt(&mut self, stmt: &Statement, env: &mut ProcEnv) -> Result<(), GraphError> {
        match stmt {
            Statement::BlockingAssign { target, value } => {
                self.proc_assign(target, value, env, false)
            }
            Statement::NonblockingAssign { target, value } => {
                self.proc_assign(target, value, env, true)
            }
            Statement::Block { statements, .. } => {
                for s in statements {
                    self.exec_stmt(s, env)?;
                }
                Ok(())
            }
            Statement::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let anchor = cond_anchor(cond);
                let cw = self
                    .design
                    .expr_width(cond)
                    .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                let cid = self.build_expr(cond, Some(env), &anchor, cw)?;
                let mut then_env = env.clone();
                let mut else_env = env.clone();
                self.guard_stack.push(cid);
                self.exec_stmt(then_branch, &mut then_env)?;
                if let Some(e) = else_branch {
                    self.exec_stmt(e, &mut else_env)?;
                }
                self.guard_stack.pop();
                self.merge_branches(env, cid, &[then_env, else_env])?;
                Ok(())
            }
            Statement::Case {
                selector, arms, ..
            } => {
                let anchor = cond_anchor(selector);
                let sw = self
                    .design
                    .expr_width(selector)
                    .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                let sid = self.build_expr(selector, Some(env), &anchor, sw)?;
                let mut arm_envs = Vec::new();
                self.guard_stack.push(sid);
                let mut has_default = false;
                for arm in arms {
                    let mut arm_env = env.clone();
                    self.exec_stmt(&arm.body, &mut arm_env)?;
                    arm_envs.push(arm_env);
                    has_default |= arm.is_default;
                }
                self.guard_stack.pop();
                if !has_default {
                    // missing default keeps the previous value reachable
                    arm_envs.push(env.clone());
                }
                self.merge_branches(env, sid, &arm_envs)?;
                Ok(())
            }
            Statement::Delay { stmt, .. } => {
                if let Some(s) = stmt {
                    self.exec_stmt(s, env)?;
                }
                Ok(())
            }
            Statement::ForLoop { body, .. } => self.exec_stmt(body, env),
            Statement::SystemCall { .. } | Statement::Empty => Ok(()),
        }
    }

    fn proc_assign(
        &mut self,
        target: &Expression,
        value: &Expression,
        env: &mut ProcEnv,
        nonblocking: bool,
    ) -> Result<(), GraphError> {
        let anchor = anchor_of(target);
        let ctx = self.assign_ctx_width(target, value)?;
        let vid = self.build_expr(value, Some(env), &anchor, ctx)?;
        match target {
            Expression::Ident(name) if !self.memories.contains(name) => {
                let map = if nonblocking {
                    &mut env.nonblocking
                } else {
                    &mut env.blocking
                };
                map.insert(name.clone(), vid);
                Ok(())
            }
            _ => {
                // partial or memory writes connect directly, with the active
                // guards as extra data operands
                self.connect_target(target, vid, Some(env))?;
                let guards = self.guard_stack.clone();
                if let Some(base) = target.base_name() {
                    let nid = self.ensure_signal(base)?;
                    for g in guards {
                        self.add_data_edge(g, nid);
                    }
                }
                Ok(())
            }
        }
    }

    fn merge_branches(
        &mut self,
        env: &mut ProcEnv,
        cond_id: usize,
        branches: &[ProcEnv],
    ) -> Result<(), GraphError> {
        for nonblocking in [false, true] {
            let mut touched: BTreeSet<String> = BTreeSet::new();
            for b in branches {
                let map = if nonblocking { &b.nonblocking } else { &b.blocking };
                touched.extend(map.keys().cloned());
            }
            for name in touched {
                let prior = {
                    let map = if nonblocking {
                        &env.nonblocking
                    } else {
                        &env.blocking
                    };
                    map.get(&name).copied()
                };
                let fallback = match prior {
                    Some(id) => id,
                    None => self.ensure_signal(&name)?,
                };
                let mut values: Vec<usize> = Vec::new();
                for b in branches {
                    let map = if nonblocking { &b.nonblocking } else { &b.blocking };
                    let v = map.get(&name).copied().unwrap_or(fallback);
                    if !values.contains(&v) {
                        values.push(v);
                    }
                }
                let merged = if values.len() == 1 {
                    values[0]
                } else {
                    let width = self.signal_width(&name)?;
                    let sel = self.fresh_node(
                        format!("{}_sel", name),
                        NodeType::Operator,
                        NodeFunc::Select,
                        width,
                    );
                    self.add_data_edge(cond_id, sel);
                    for v in values {
                        self.add_data_edge(v, sel);
                    }
                    sel
                };
                let map = if nonblocking {
                    &mut env.nonblocking
                } else {
                    &mut env.blocking
                };
                map.insert(name, merged);
            }
        }
        Ok(())
    }

    /// Build DFG nodes for an expression and return the node carrying its
    /// value. `env` supplies procedural read values when inside a block.
    fn build_expr(
        &mut self,
        expr: &Expression,
        env: Option<&ProcEnv>,
        anchor: &str,
        ctx_width: u32,
    ) -> Result<usize, GraphError> {
        match expr {
            Expression::Ident(name) => {
                if let Some(e) = env {
                    if let Some(&id) = e.blocking.get(name) {
                        return Ok(id);
                    }
                }
                self.ensure_signal(name)
            }
            Expression::Literal(lit) => Ok(self.ensure_constant(lit)),
            Expression::BitSelect { base, index } => {
                if let Expression::Ident(name) = base.as_ref() {
                    if self.memories.contains(name) {
                        // memory read: address attaches to the storage node
                        let mem = self.ensure_signal(name)?;
                        let iw = self
                            .design
                            .expr_width(index)
                            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                        let idx = self.build_expr(index, env, anchor, iw)?;
                        self.add_data_edge(idx, mem);
                        return Ok(mem);
                    }
                }
                self.select_value(base, &[index.as_ref()], env, anchor)
            }
            Expression::PartSelect { base, msb, lsb } => {
                self.select_value(base, &[msb.as_ref(), lsb.as_ref()], env, anchor)
            }
            Expression::IndexedPartSelect {
                base, start, width, ..
            } => self.select_value(base, &[start.as_ref(), width.as_ref()], env, anchor),
            Expression::Concat(parts) => {
                let w = self
                    .design
                    .expr_width(expr)
                    .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                let node = self.fresh_node(
                    format!("{}_concat", anchor),
                    NodeType::Operator,
                    NodeFunc::Route,
                    w,
                );
                for p in parts {
                    let pw = self
                        .design
                        .expr_width(p)
                        .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                    let pid = self.build_expr(p, env, anchor, pw)?;
                    self.add_data_edge(pid, node);
                }
                Ok(node)
            }
            Expression::Replicate { count: _, value } => {
                let w = self
                    .design
                    .expr_width(expr)
                    .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                let node = self.fresh_node(
                    format!("{}_repl", anchor),
                    NodeType::Operator,
                    NodeFunc::Route,
                    w,
                );
                let vw = self
                    .design
                    .expr_width(value)
                    .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                let vid = self.build_expr(value, env, anchor, vw)?;
                self.add_data_edge(vid, node);
                Ok(node)
            }
            Expression::Unary { op, operand } => {
                let (func, width) = match op {
                    UnaryOp::LogicalNot
                    | UnaryOp::RedAnd
                    | UnaryOp::RedOr
                    | UnaryOp::RedXor
                    | UnaryOp::RedNand
                    | UnaryOp::RedNor
                    | UnaryOp::RedXnor => (NodeFunc::Logic, 1),
                    UnaryOp::Negate | UnaryOp::Identity => (NodeFunc::Arith, ctx_width),
                    UnaryOp::BitNot => (NodeFunc::Logic, ctx_width),
                };
                let ow = match op {
                    UnaryOp::BitNot | UnaryOp::Negate | UnaryOp::Identity => ctx_width,
                    _ => self
                        .design
                        .expr_width(operand)
                        .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?,
                };
                let node = self.fresh_node(
                    format!("{}_{}", anchor, op.mnemonic()),
                    NodeType::Operator,
                    func,
                    width,
                );
                let oid = self.build_expr(operand, env, anchor, ow)?;
                self.add_data_edge(oid, node);
                Ok(node)
            }
            Expression::Binary { op, lhs, rhs } => {
                let func = match op {
                    BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div
                    | BinaryOp::Shl | BinaryOp::Shr => NodeFunc::Arith,
                    BinaryOp::BitAnd | BinaryOp::BitOr | BinaryOp::BitXor
                    | BinaryOp::BitXnor | BinaryOp::LogicalAnd | BinaryOp::LogicalOr => {
                        NodeFunc::Logic
                    }
                    BinaryOp::Lt | BinaryOp::Gt | BinaryOp::Le | BinaryOp::Ge | BinaryOp::Eq
                    | BinaryOp::Ne => NodeFunc::Compare,
                };
                let width = match func {
                    NodeFunc::Compare => 1,
                    NodeFunc::Logic
                        if matches!(op, BinaryOp::LogicalAnd | BinaryOp::LogicalOr) =>
                    {
                        1
                    }
                    _ => ctx_width,
                };
                // operand context: comparisons size to their own max; shift
                // amounts are self-determined
                let (lw, rw) = match op {
                    BinaryOp::Lt | BinaryOp::Gt | BinaryOp::Le | BinaryOp::Ge | BinaryOp::Eq
                    | BinaryOp::Ne | BinaryOp::LogicalAnd | BinaryOp::LogicalOr => {
                        let a = self
                            .design
                            .expr_width(lhs)
                            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                        let b = self
                            .design
                            .expr_width(rhs)
                            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                        (a.max(b), a.max(b))
                    }
                    BinaryOp::Shl | BinaryOp::Shr => {
                        let b = self
                            .design
                            .expr_width(rhs)
                            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                        (ctx_width, b)
                    }
                    _ => (ctx_width, ctx_width),
                };
                let node = self.fresh_node(
                    format!("{}_{}", anchor, op.mnemonic()),
                    NodeType::Operator,
                    func,
                    width,
                );
                let lid = self.build_expr(lhs, env, anchor, lw)?;
                let rid = self.build_expr(rhs, env, anchor, rw)?;
                self.add_data_edge(lid, node);
                self.add_data_edge(rid, node);
                Ok(node)
            }
            Expression::Ternary {
                cond,
                then_value,
                else_value,
            } => {
                let node = self.fresh_node(
                    format!("{}_sel", anchor),
                    NodeType::Operator,
                    NodeFunc::Select,
                    ctx_width,
                );
                let cw = self
                    .design
                    .expr_width(cond)
                    .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                let cid = self.build_expr(cond, env, anchor, cw)?;
                let tid = self.build_expr(then_value, env, anchor, ctx_width)?;
                let eid = self.build_expr(else_value, env, anchor, ctx_width)?;
                self.add_data_edge(cid, node);
                self.add_data_edge(tid, node);
                self.add_data_edge(eid, node);
                Ok(node)
            }
        }
    }

    /// Value of a bit/part select: constant indices read the base signal
    /// directly; dynamic indices go through a route node that also depends
    /// on the index expression.
    fn select_value(
        &mut self,
        base: &Expression,
        indices: &[&Expression],
        env: Option<&ProcEnv>,
        anchor: &str,
    ) -> Result<usize, GraphError> {
        let bw = self
            .design
            .expr_width(base)
            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
        let bid = self.build_expr(base, env, anchor, bw)?;
        let constenv = HashMap::new();
        let dynamic: Vec<&Expression> = indices
            .iter()
            .copied()
            .filter(|i| fold_const(i, &constenv).is_err())
            .collect();
        if dynamic.is_empty() {
            return Ok(bid);
        }
        let node = self.fresh_node(
            format!("{}_bitsel", anchor),
            NodeType::Operator,
            NodeFunc::Route,
            1,
        );
        self.add_data_edge(bid, node);
        for i in dynamic {
            let iw = self
                .design
                .expr_width(i)
                .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
            let iid = self.build_expr(i, env, anchor, iw)?;
            self.add_data_edge(iid, node);
        }
        Ok(node)
    }

    /// Connect a computed value to an lvalue's signal node(s).
    fn connect_target(
        &mut self,
        target: &Expression,
        vid: usize,
        env: Option<&ProcEnv>,
    ) -> Result<(), GraphError> {
        match target {
            Expression::Ident(name) => {
                let nid = self.ensure_signal(name)?;
                if vid != nid {
                    self.add_data_edge(vid, nid);
                }
                Ok(())
            }
            Expression::BitSelect { base, index } => {
                if let Some(name) = base.base_name() {
                    let nid = self.ensure_signal(name)?;
                    if vid != nid {
                        self.add_data_edge(vid, nid);
                    }
                    // dynamic index is an address dependency
                    let constenv = HashMap::new();
                    if fold_const(index, &constenv).is_err() {
                        let iw = self
                            .design
                            .expr_width(index)
                            .map_err(|e| GraphError::UnresolvedWidth(e.to_string()))?;
                        let iid = self.build_expr(index, env, name, iw)?;
                        self.add_data_edge(iid, nid);
                    }
                }
                Ok(())
            }
            Expression::PartSelect { base, .. } | Expression::IndexedPartSelect { base, .. } => {
                if let Some(name) = base.base_name() {
                    let nid = self.ensure_signal(name)?;
                    if vid != nid {
                        self.add_data_edge(vid, nid);
                    }
                }
                Ok(())
            }
            Expression::Concat(parts) => {
                for p in parts {
                    self.connect_target(p, vid, env)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    // ------------------------------------------------------------------
    // CFG
    // ------------------------------------------------------------------

    fn cfg_item(&mut self, item: &ModuleItem) -> Result<(), GraphError> {
        match item {
            ModuleItem::AlwaysBlock { sensitivity, body } => {
                if let Sensitivity::Edges(events) = sensitivity {
                    let mut targets = Vec::new();
                    collect_targets(body, &mut targets);
                    for ev in events {
                        let sid = self.ensure_signal(&ev.signal)?;
                        let branch = self.fresh_node(
                            format!("{}_{}", ev.signal, ev.polarity),
                            NodeType::Branch,
                            NodeFunc::Control,
                            1,
                        );
                        self.edge_branches.insert(branch);
                        self.add_edge(
                            sid,
                            branch,
                            EdgeLabel::Control,
                            vec![("signal".into(), ev.signal.clone())],
                        );
                        for t in &targets {
                            let tid = self.ensure_signal(t)?;
                            self.add_edge(
                                branch,
                                tid,
                                EdgeLabel::Control,
                                vec![("edge".into(), ev.polarity.to_string())],
                            );
                        }
                    }
                }
                self.cfg_stmt(body)
            }
            ModuleItem::InitialBlock { body } => self.cfg_stmt(body),
            _ => Ok(()),
        }
    }

    fn cfg_stmt(&mut self, stmt: &Statement) -> Result<(), GraphError> {
        match stmt {
            Statement::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let label = format!("{}_if", cond_anchor(cond));
                self.cfg_branch(cond, &label, |t| {
                    collect_targets(then_branch, t);
                    if let Some(e) = else_branch {
                        collect_targets(e, t);
                    }
                })?;
                self.cfg_stmt(then_branch)?;
                if let Some(e) = else_branch {
                    self.cfg_stmt(e)?;
                }
                Ok(())
            }
            Statement::Case {
                selector, arms, ..
            } => {
                let label = format!("{}_case", cond_anchor(selector));
                self.cfg_branch(selector, &label, |t| {
                    for arm in arms {
                        collect_targets(&arm.body, t);
                    }
                })?;
                for arm in arms {
                    self.cfg_stmt(&arm.body)?;
                }
                Ok(())
            }
            Statement::Block { statements, .. } => {
                for s in statements {
                    self.cfg_stmt(s)?;
                }
                Ok(())
            }
            Statement::Delay { stmt, .. } => match stmt {
                Some(s) => self.cfg_stmt(s),
                None => Ok(()),
            },
            Statement::ForLoop { body, .. } => self.cfg_stmt(body),
            _ => Ok(()),
        }
    }

    fn cfg_branch(
        &mut self,
        cond: &Expression,
        label: &str,
        collect: impl FnOnce(&mut Vec<String>),
    ) -> Result<(), GraphError> {
        let cw = self.design.expr_width(cond).unwrap_or(1);
        let branch = self.fresh_node(label.to_string(), NodeType::Branch, NodeFunc::Control, cw);
        let mut sources = Vec::new();
        cond.collect_idents(&mut sources);
        let mut seen = BTreeSet::new();
        for s in sources {
            if seen.insert(s.to_string()) {
                let sid = self.ensure_signal(s)?;
                self.add_edge(
                    sid,
                    branch,
                    EdgeLabel::Control,
                    vec![("signal".into(), s.to_string())],
                );
            }
        }
        let mut targets = Vec::new();
        collect(&mut targets);
        let mut seen = BTreeSet::new();
        for t in targets {
            if seen.insert(t.clone()) {
                let tid = self.ensure_signal(&t)?;
                self.add_edge(branch, tid, EdgeLabel::Control, Vec::new());
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // normalization and canonical ids
    // ------------------------------------------------------------------

    /// Remove internal net nodes with exactly one driver and one reader,
    /// keeping the net name as the edge annotation.
    fn collapse_single_use_nets(&mut self) {
        let mut skip: HashSet<usize> = HashSet::new();
        loop {
            let mut in_edges: HashMap<usize, Vec<usize>> = HashMap::new();
            let mut out_edges: HashMap<usize, Vec<usize>> = HashMap::new();
            for (i, e) in self.edges.iter().enumerate() {
                in_edges.entry(e.dst).or_default().push(i);
                out_edges.entry(e.src).or_default().push(i);
            }
            let mut victim = None;
            for (id, node) in self.nodes.iter().enumerate() {
                if node.ntype != NodeType::Net || skip.contains(&id) {
                    continue;
                }
                let ins = in_edges.get(&id).map(|v| v.len()).unwrap_or(0);
                let outs = out_edges.get(&id).map(|v| v.len()).unwrap_or(0);
                if ins == 1 && outs == 1 {
                    victim = Some(id);
                    break;
                }
            }
            let Some(id) = victim else { break };
            let in_idx = in_edges[&id][0];
            let out_idx = out_edges[&id][0];
            let src = self.edges[in_idx].src;
            let dst = self.edges[out_idx].dst;
            let name = self.nodes[id].label.clone();
            if src == dst || src == id || dst == id {
                // self-feeding net stays as a visible cycle participant
                skip.insert(id);
                continue;
            }
            // drop both edges, splice a new one carrying the net name
            let mut remove = [in_idx, out_idx];
            remove.sort_unstable();
            for idx in remove.iter().rev() {
                let e = self.edges.remove(*idx);
                self.edge_keys.remove(&(e.src, e.dst, e.label));
            }
            if self.edge_keys.insert((src, dst, EdgeLabel::Data)) {
                self.edges.push(GraphEdge {
                    src,
                    dst,
                    label: EdgeLabel::Data,
                    annotations: vec![("signal".to_string(), name)],
                });
            }
            self.nodes[id].ntype = NodeType::Module; // tombstone, dropped below
        }
        // remove tombstoned nodes
        let keep: Vec<bool> = self
            .nodes
            .iter()
            .map(|n| n.ntype != NodeType::Module)
            .collect();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for (i, k) in keep.iter().enumerate() {
            if *k {
                remap[i] = next;
                next += 1;
            }
        }
        let mut nodes = Vec::with_capacity(next);
        for (i, n) in self.nodes.drain(..).enumerate() {
            if keep[i] {
                nodes.push(n);
            }
        }
        self.nodes = nodes;
        for e in &mut self.edges {
            e.src = remap[e.src];
            e.dst = remap[e.dst];
        }
        self.edge_branches = self
            .edge_branches
            .iter()
            .filter(|&&i| remap[i] != usize::MAX)
            .map(|&i| remap[i])
            .collect();
        self.edge_keys = self
            .edges
            .iter()
            .map(|e| (e.src, e.dst, e.label))
            .collect();
    }

    fn assign_temporal(&mut self) {
        for (id, node) in self.nodes.iter_mut().enumerate() {
            node.temporal = match node.ntype {
                NodeType::Input | NodeType::Constant | NodeType::Inout => Temporal::None,
                NodeType::Register => Temporal::Sequential,
                NodeType::Branch => {
                    if self.edge_branches.contains(&id) {
                        Temporal::Sequential
                    } else {
                        Temporal::Combinational
                    }
                }
                // operators in a register's input cone stay combinational
                _ => Temporal::Combinational,
            };
        }
    }

    /// Assign final ids: topological order (register in-edges cut), ties by
    /// (label, creation index).
    fn canonicalize(self) -> FlowGraph {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            if self.nodes[e.dst].ntype == NodeType::Register {
                continue; // registers are legal cycle cut points
            }
            if e.src == e.dst {
                continue;
            }
            adj[e.src].push(e.dst);
            indegree[e.dst] += 1;
        }

        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let mut heap: BinaryHeap<Reverse<(String, usize)>> = BinaryHeap::new();
        for i in 0..n {
            if indegree[i] == 0 {
                heap.push(Reverse((self.nodes[i].label.clone(), i)));
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            let next = match heap.pop() {
                Some(Reverse((_, i))) if !placed[i] => i,
                Some(_) => continue,
                None => {
                    // combinational cycle: force the smallest remaining
                    let mut best: Option<(String, usize)> = None;
                    for i in 0..n {
                        if !placed[i] {
                            let key = (self.nodes[i].label.clone(), i);
                            if best.as_ref().map(|b| key < *b).unwrap_or(true) {
                                best = Some(key);
                            }
                        }
                    }
                    best.unwrap().1
                }
            };
            placed[next] = true;
            order.push(next);
            for &w in &adj[next] {
                if placed[w] {
                    continue;
                }
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    heap.push(Reverse((self.nodes[w].label.clone(), w)));
                }
            }
        }

        let mut remap = vec![0usize; n];
        for (new_id, &old_id) in order.iter().enumerate() {
            remap[old_id] = new_id;
        }
        let mut nodes: Vec<GraphNode> = Vec::with_capacity(n);
        for (new_id, &old_id) in order.iter().enumerate() {
            let d = &self.nodes[old_id];
            nodes.push(GraphNode {
                id: new_id,
                label: d.label.clone(),
                ntype: d.ntype,
                func: d.func,
                temporal: d.temporal,
                width: d.width,
                stage: None,
            });
        }
        let mut edges: Vec<GraphEdge> = self
            .edges
            .into_iter()
            .map(|e| GraphEdge {
                src: remap[e.src],
                dst: remap[e.dst],
                label: e.label,
                annotations: e.annotations,
            })
            .collect();
        edges.sort_by(|a, b| (a.src, a.dst, a.label).cmp(&(b.src, b.dst, b.label)));
        FlowGraph {
            kind: self.kind,
            top: self.design.top.clone(),
            nodes,
            edges,
        }
    }
}

/// Longest register-free data path from any input/register/constant node.
fn compute_stages(graph: &mut FlowGraph) {
    let n = graph.nodes.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &graph.edges {
        if e.label == EdgeLabel::Data {
            preds[e.dst].push(e.src);
        }
    }
    let mut depth = vec![0u32; n];
    // ids are topologically ordered (cycles broken at registers), so one
    // forward pass suffices; back edges contribute zero
    for i in 0..n {
        let node = &graph.nodes[i];
        if matches!(
            node.ntype,
            NodeType::Input | NodeType::Constant | NodeType::Register | NodeType::Inout
        ) {
            depth[i] = 0;
            continue;
        }
        let mut best = 0;
        for &p in &preds[i] {
            if p < i {
                let base = if graph.nodes[p].ntype == NodeType::Register {
                    0
                } else {
                    depth[p]
                };
                best = best.max(base + 1);
            }
        }
        depth[i] = best;
    }
    for (i, node) in graph.nodes.iter_mut().enumerate() {
        node.stage = Some(depth[i]);
    }
}

/// Base names assigned anywhere in a statement tree.
fn collect_targets(stmt: &Statement, out: &mut Vec<String>) {
    match stmt {
        Statement::BlockingAssign { target, .. }
        | Statement::NonblockingAssign { target, .. } => {
            collect_lvalue_names(target, out);
        }
        Statement::If {
            then_branch,
            else_branch,
            ..
        } => {
            collect_targets(then_branch, out);
            if let Some(e) = else_branch {
                collect_targets(e, out);
            }
        }
        Statement::Case { arms, .. } => {
            for a in arms {
                collect_targets(&a.body, out);
            }
        }
        Statement::Block { statements, .. } => {
            for s in statements {
                collect_targets(s, out);
            }
        }
        Statement::ForLoop { body, .. } => collect_targets(body, out),
        Statement::Delay { stmt, .. } => {
            if let Some(s) = stmt {
                collect_targets(s, out);
            }
        }
        _ => {}
    }
}

fn collect_lvalue_names(e: &Expression, out: &mut Vec<String>) {
    match e {
        Expression::Ident(n) => out.push(n.clone()),
        Expression::BitSelect { base, .. }
        | Expression::PartSelect { base, .. }
        | Expression::IndexedPartSelect { base, .. } => {
            if let Some(n) = base.base_name() {
                out.push(n.to_string());
            }
        }
        Expression::Concat(parts) => {
            for p in parts {
                collect_lvalue_names(p, out);
            }
        }
        _ => {}
    }
}

/// Label anchor for operator nodes created by an assignment to `target`.
fn anchor_of(target: &Expression) -> String {
    let mut names = Vec::new();
    collect_lvalue_names(target, &mut names);
    if names.is_empty() {
        "expr".to_string()
    } else {
        names.join("_")
    }
}

/// Label anchor for a branch condition.
fn cond_anchor(cond: &Expression) -> String {
    match cond {
        Expression::Ident(n) => n.clone(),
        _ => {
            let mut ids = Vec::new();
            cond.collect_idents(&mut ids);
            match ids.first() {
                Some(n) => (*n).to_string(),
                None => "cond".to_string(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elab::flatten;
    use crate::parser::parse_design;

    fn flat(src: &str, top: &str) -> FlatDesign {
        let out = parse_design(src).unwrap();
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        flatten(&out.modules, top).unwrap()
    }

    const ALU: &str = r#"
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

    #[test]
    fn passthrough_dfg_two_nodes_one_edge() {
        let design = flat("module m(input a, output y); assign y = a; endmodule", "m");
        let g = build_dfg(&design).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        let a = g.node_by_label("a").unwrap();
        let y = g.node_by_label("y").unwrap();
        assert_eq!(a.ntype, NodeType::Input);
        assert_eq!(y.ntype, NodeType::Output);
        assert_eq!(g.edges[0].src, a.id);
        assert_eq!(g.edges[0].dst, y.id);
        assert_eq!(
            g.edges[0].annotations,
            vec![("signal".to_string(), "a".to_string())]
        );
    }

    #[test]
    fn alu_dfg_closure() {
        let design = flat(ALU, "alu");
        let g = build_dfg(&design).unwrap();
        let result = dependency_closure(&g, "Result").unwrap();
        let expected: BTreeSet<String> =
            ["A", "B", "ALUOp"].iter().map(|s| s.to_string()).collect();
        assert_eq!(result, expected);
        let zero = dependency_closure(&g, "Zero").unwrap();
        assert_eq!(zero, expected);
        // operator inventory
        for op in ["Result_add", "Result_sub", "Result_and", "Result_or", "Result_mul"] {
            let n = g.node_by_label(op).unwrap_or_else(|| panic!("missing {}", op));
            assert_eq!(n.ntype, NodeType::Operator);
        }
        let sel = g.node_by_label("Result_sel").unwrap();
        assert_eq!(sel.func, NodeFunc::Select);
        let eq = g.node_by_label("Zero_eq").unwrap();
        assert_eq!(eq.func, NodeFunc::Compare);
    }

    #[test]
    fn alu_cfg_single_branch() {
        let design = flat(ALU, "alu");
        let g = build_cfg(&design).unwrap();
        let branches: Vec<&GraphNode> = g.branch_nodes().collect();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].label, "ALUOp_case");
        let aluop = g.node_by_label("ALUOp").unwrap();
        let result = g.node_by_label("Result").unwrap();
        assert!(g.edges.iter().any(|e| e.src == aluop.id
            && e.dst == branches[0].id
            && e.label == EdgeLabel::Control));
        assert!(g.edges.iter().any(|e| e.src == branches[0].id
            && e.dst == result.id
            && e.label == EdgeLabel::Control));
    }

    #[test]
    fn alu_all_assigned_nodes_combinational() {
        let design = flat(ALU, "alu");
        let g = build_dfg(&design).unwrap();
        for node in &g.nodes {
            match node.ntype {
                NodeType::Input | NodeType::Constant => {
                    assert_eq!(node.temporal, Temporal::None, "{}", node.label)
                }
                _ => assert_eq!(
                    node.temporal,
                    Temporal::Combinational,
                    "{}",
                    node.label
                ),
            }
        }
    }

    #[test]
    fn simple_guard_cfg() {
        let design = flat(
            "module m(input en, input a, output reg y); always @(*) if (en) y = a; endmodule",
            "m",
        );
        let g = build_cfg(&design).unwrap();
        let branch = g.node_by_label("en_if").unwrap();
        let en = g.node_by_label("en").unwrap();
        let y = g.node_by_label("y").unwrap();
        assert!(g
            .edges
            .iter()
            .any(|e| e.src == en.id && e.dst == branch.id));
        assert!(g.edges.iter().any(|e| e.src == branch.id && e.dst == y.id));
    }

    #[test]
    fn continuous_only_cfg_has_no_branches() {
        let design = flat(
            "module m(input a, input b, output y); assign y = a & b; endmodule",
            "m",
        );
        let g = build_cfg(&design).unwrap();
        assert_eq!(g.branch_nodes().count(), 0);
        assert!(g.node_by_label("a").is_some());
        assert!(g.node_by_label("y").is_some());
    }

    #[test]
    fn counter_feedback_is_sequential_loop() {
        let design = flat(
            "module c(input clk, output reg [3:0] q); always @(posedge clk) q <= q + 1; endmodule",
            "c",
        );
        let g = build_dfg(&design).unwrap();
        let report = detect_feedback(&g);
        assert_eq!(report.cycles.len(), 1);
        assert_eq!(report.cycles[0].kind, LoopKind::SequentialStateLoop);
        let q = g.node_by_label("q").unwrap();
        assert_eq!(q.ntype, NodeType::Register);
        assert!(report.cycles[0].nodes.contains(&q.id));
    }

    #[test]
    fn combinational_loop_detected() {
        let design = flat(
            "module l(input i, output y); wire a; wire b; assign a = b | i; assign b = a; assign y = a; endmodule",
            "l",
        );
        let g = build_dfg(&design).unwrap();
        let report = detect_feedback(&g);
        assert_eq!(report.cycles.len(), 1);
        assert_eq!(report.cycles[0].kind, LoopKind::CombinationalLoop);
    }

    #[test]
    fn passthrough_feedback_empty() {
        let design = flat("module m(input a, output y); assign y = a; endmodule", "m");
        let g = build_dfg(&design).unwrap();
        assert!(detect_feedback(&g).is_empty());
    }

    #[test]
    fn closure_of_constant_output_is_empty() {
        let design = flat("module k(output [3:0] y); assign y = 4'd9; endmodule", "k");
        let g = build_dfg(&design).unwrap();
        assert!(dependency_closure(&g, "y").unwrap().is_empty());
        assert!(matches!(
            dependency_closure(&g, "nope"),
            Err(GraphError::UnknownOutput(_))
        ));
    }

    #[test]
    fn dff_register_and_stage() {
        let design = flat(
            "module d(input clk, input dd, output reg q); always @(posedge clk) q <= dd; endmodule",
            "d",
        );
        let g = build_dfg(&design).unwrap();
        let q = g.node_by_label("q").unwrap();
        assert_eq!(q.ntype, NodeType::Register);
        assert_eq!(q.func, NodeFunc::Storage);
        assert_eq!(q.temporal, Temporal::Sequential);
        assert_eq!(q.stage, Some(0));
    }

    #[test]
    fn two_stage_pipeline_stage_depth() {
        let src = r#"
module p(input clk, input [3:0] a, input [3:0] b, output reg [3:0] r2);
  reg [3:0] r1;
  always @(posedge clk) r1 <= a;
  always @(posedge clk) r2 <= r1 + b;
endmodule
"#;
        let design = flat(src, "p");
        let g = build_dfg(&design).unwrap();
        let add = g.node_by_label("r2_add").unwrap();
        assert_eq!(add.stage, Some(1));
        assert_eq!(add.temporal, Temporal::Combinational);
    }

    #[test]
    fn build_is_deterministic() {
        let design = flat(ALU, "alu");
        let g1 = build_dfg(&design).unwrap();
        let g2 = build_dfg(&design).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn shuffled_items_same_graph() {
        let design = flat(ALU, "alu");
        let mut shuffled = design.clone();
        shuffled.module.items.reverse();
        let g1 = build_dfg(&design).unwrap();
        let g2 = build_dfg(&shuffled).unwrap();
        assert_eq!(g1, g2);
        let c1 = build_cfg(&design).unwrap();
        let c2 = build_cfg(&shuffled).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn annotate_and_classify_are_stable() {
        let design = flat(ALU, "alu");
        let g = build_dfg(&design).unwrap();
        let annotated = annotate_nodes(&g, &design).unwrap();
        assert_eq!(g, annotated);
        let classified = classify_temporal(&g, &design).unwrap();
        assert_eq!(g, classified);
    }

    #[test]
    fn operator_funcs_follow_table() {
        let src = r#"
module f(input [3:0] a, input [3:0] b, output [3:0] s, output gt, output [3:0] m);
  assign s = a + b;
  assign gt = a > b;
  assign m = a & b;
endmodule
"#;
        let design = flat(src, "f");
        let g = build_dfg(&design).unwrap();
        assert_eq!(g.node_by_label("s_add").unwrap().func, NodeFunc::Arith);
        assert_eq!(g.node_by_label("gt_gt").unwrap().func, NodeFunc::Compare);
        assert_eq!(g.node_by_label("m_and").unwrap().func, NodeFunc::Logic);
    }

    #[test]
    fn adder_concat_targets() {
        let design = flat(
            "module add2(input a, input b, output c, output s); assign {c, s} = a + b; endmodule",
            "add2",
        );
        let g = build_dfg(&design).unwrap();
        let add = g.node_by_label("c_s_add").unwrap();
        let c = g.node_by_label("c").unwrap();
        let s = g.node_by_label("s").unwrap();
        assert!(g.edges.iter().any(|e| e.src == add.id && e.dst == c.id));
        assert!(g.edges.iter().any(|e| e.src == add.id && e.dst == s.id));
        assert_eq!(
            dependency_closure(&g, "c").unwrap(),
            ["a", "b"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn single_use_net_collapses() {
        let src = r#"
module m(input a, input b, output y);
  wire t;
  assign t = a & b;
  assign y = ~t;
endmodule
"#;
        let design = flat(src, "m");
        let g = build_dfg(&design).unwrap();
        assert!(g.node_by_label("t").is_none());
        let e = g
            .edges
            .iter()
            .find(|e| e.annotations.iter().any(|(_, v)| v == "t"))
            .expect("collapsed edge keeps net name");
        assert_eq!(g.nodes[e.src].label, "t_and");
        assert_eq!(g.nodes[e.dst].label, "y_not");
    }

    #[test]
    fn memory_single_storage_node() {
        let src = r#"
module ram(input clk, input we, input [3:0] addr, input [7:0] din, output [7:0] dout);
  reg [7:0] store [0:15];
  always @(posedge clk) if (we) store[addr] <= din;
  assign dout = store[addr];
endmodule
"#;
        let design = flat(src, "ram");
        let g = build_dfg(&design).unwrap();
        let mem = g.node_by_label("store").unwrap();
        assert_eq!(mem.ntype, NodeType::Register);
        assert_eq!(mem.func, NodeFunc::Storage);
        let deps = dependency_closure(&g, "dout").unwrap();
        assert!(deps.contains("addr"));
        assert!(deps.contains("din"));
        assert!(deps.contains("we"));
    }
}
