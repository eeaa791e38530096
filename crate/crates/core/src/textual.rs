// SPDX-License-Identifier: Apache-2.0

//! Byte-deterministic textual graph encoding.
//!
//! Grammar (format 1, LF endings, UTF-8, no trailing whitespace):
//!
//! ```text
//! <DFG|CFG> module=<name> format=1
//! NODE <id> <label> type=<ntype> func=<func> temporal=<temporal> width=<int> [stage=<int>]
//! EDGE <src> -> <dst> [<data|control>] <key>=<value>...
//! ```
//!
//! Nodes are ordered by id, edges by (src, dst, label). Labels longer than
//! 64 characters are shortened to a 55-character prefix plus an 8-hex
//! content hash; the mapping is reported so callers can record it.

use crate::graph::{
    EdgeLabel, FlowGraph, GraphEdge, GraphKind, GraphNode, NodeFunc, NodeType, Temporal,
};
use sha2::{Digest, Sha256};
use std::fmt::Write;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
pub const MAX_LABEL_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextualGraph {
    pub header: String,
    pub node_lines: Vec<String>,
    pub edge_lines: Vec<String>,
    /// Full rendering: header, nodes, edges, one per line, trailing LF.
    pub text: String,
    /// (original, shortened) pairs for labels over [`MAX_LABEL_LEN`].
    pub renames: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct GraphSyntaxError {
    pub line: usize,
    pub message: String,
}

fn ntype_str(t: NodeType) -> &'static str {
    match t {
        NodeType::Input => "input",
        NodeType::Output => "output",
        NodeType::Inout => "inout",
        NodeType::Net => "net",
        NodeType::Register => "register",
        NodeType::Operator => "operator",
        NodeType::Constant => "constant",
        NodeType::Branch => "branch",
        NodeType::Module => "module",
    }
}

fn ntype_from(s: &str) -> Option<NodeType> {
    Some(match s {
        "input" => NodeType::Input,
        "output" => NodeType::Output,
        "inout" => NodeType::Inout,
        "net" => NodeType::Net,
        "register" => NodeType::Register,
        "operator" => NodeType::Operator,
        "constant" => NodeType::Constant,
        "branch" => NodeType::Branch,
        "module" => NodeType::Module,
        _ => return None,
    })
}

fn func_str(f: NodeFunc) -> &'static str {
    match f {
        NodeFunc::Arith => "arith",
        NodeFunc::Logic => "logic",
        NodeFunc::Storage => "storage",
        NodeFunc::Compare => "compare",
        NodeFunc::Select => "select",
        NodeFunc::Route => "route",
        NodeFunc::Control => "control",
        NodeFunc::None => "none",
    }
}

fn func_from(s: &str) -> Option<NodeFunc> {
    Some(match s {
        "arith" => NodeFunc::Arith,
        "logic" => NodeFunc::Logic,
        "storage" => NodeFunc::Storage,
        "compare" => NodeFunc::Compare,
        "select" => NodeFunc::Select,
        "route" => NodeFunc::Route,
        "control" => NodeFunc::Control,
        "none" => NodeFunc::None,
        _ => return None,
    })
}

fn temporal_str(t: Temporal) -> &'static str {
    match t {
        Temporal::Combinational => "combinational",
        Temporal::Sequential => "sequential",
        Temporal::None => "none",
    }
}

fn temporal_from(s: &str) -> Option<Temporal> {
    Some(match s {
        "combinational" => Temporal::Combinational,
        "sequential" => Temporal::Sequential,
        "none" => Temporal::None,
        _ => return None,
    })
}

/// Shorten a label over the limit: 55-char prefix + `_` + 8 hex of its hash.
fn shorten_label(label: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest[..4].iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{:02x}", b);
        acc
    });
    let prefix: String = label.chars().take(MAX_LABEL_LEN - 9).collect();
    format!("{}_{}", prefix, hex)
}

/// Serialize a graph; deterministic bytes for a given graph value.
pub fn textualize(graph: &FlowGraph) -> TextualGraph {
    let mut renames = Vec::new();
    let mut labels: Vec<String> = Vec::with_capacity(graph.nodes.len());
    for n in &graph.nodes {
        if n.label.chars().count() > MAX_LABEL_LEN {
            let short = shorten_label(&n.label);
            renames.push((n.label.clone(), short.clone()));
            labels.push(short);
        } else {
            labels.push(n.label.clone());
        }
    }

    let header = format!(
        "{} module={} format={}",
        graph.kind, graph.top, FORMAT_VERSION
    );
    let mut node_lines = Vec::with_capacity(graph.nodes.len());
    for n in &graph.nodes {
        let mut line = format!(
            "NODE {} {} type={} func={} temporal={} width={}",
            n.id,
            labels[n.id],
            ntype_str(n.ntype),
            func_str(n.func),
            temporal_str(n.temporal),
            n.width
        );
        if let Some(s) = n.stage {
            let _ = write!(line, " stage={}", s);
        }
        node_lines.push(line);
    }

    let mut edges: Vec<&GraphEdge> = graph.edges.iter().collect();
    edges.sort_by(|a, b| (a.src, a.dst, a.label).cmp(&(b.src, b.dst, b.label)));
    let mut edge_lines = Vec::with_capacity(edges.len());
    for e in edges {
        let mut line = format!("EDGE {} -> {} [{}]", e.src, e.dst, e.label);
        for (k, v) in &e.annotations {
            let _ = write!(line, " {}={}", k, v);
        }
        edge_lines.push(line);
    }

    let mut text = String::new();
    text.push_str(&header);
    text.push('\n');
    for l in &node_lines {
        text.push_str(l);
        text.push('\n');
    }
    for l in &edge_lines {
        text.push_str(l);
        text.push('\n');
    }

    TextualGraph {
        header,
        node_lines,
        edge_lines,
        text,
        renames,
    }
}

/// Parse the textual encoding back into a graph.
pub fn parse_textual_graph(text: &str) -> Result<FlowGraph, GraphSyntaxError> {
    let mut lines = text.lines().enumerate();
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty graph text"))?;
    let mut parts = header.split_whitespace();
    let kind = match parts.next() {
        Some("DFG") => GraphKind::Dfg,
        Some("CFG") => GraphKind::Cfg,
        other => {
            return Err(err(
                lineno + 1,
                format!("expected DFG or CFG, found {:?}", other.unwrap_or("")),
            ))
        }
    };
    let top = parts
        .next()
        .and_then(|p| p.strip_prefix("module="))
        .ok_or_else(|| err(lineno + 1, "missing module= in header"))?
        .to_string();
    match parts.next().and_then(|p| p.strip_prefix("format=")) {
        Some(v) if v == FORMAT_VERSION.to_string() => {}
        other => {
            return Err(err(
                lineno + 1,
                format!("unsupported format {:?}", other.unwrap_or("")),
            ))
        }
    }

    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut edges: Vec<GraphEdge> = Vec::new();
    let mut seen_edge_keys = std::collections::HashSet::new();

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            return Err(err(lineno, "blank line in graph text"));
        }
        let mut f = line.split_whitespace();
        match f.next() {
            Some("NODE") => {
                if !edges.is_empty() {
                    return Err(err(lineno, "NODE line after EDGE lines"));
                }
                let id: usize = f
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno, "bad node id"))?;
                if id != nodes.len() {
                    return Err(err(
                        lineno,
                        format!("node ids must be dense ascending, expected {}", nodes.len()),
                    ));
                }
                let label = f
                    .next()
                    .ok_or_else(|| err(lineno, "missing node label"))?
                    .to_string();
                let mut ntype = None;
                let mut func = None;
                let mut temporal = None;
                let mut width = None;
                let mut stage = None;
                for kv in f {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| err(lineno, format!("bad attribute '{}'", kv)))?;
                    match k {
                        "type" => {
                            ntype = Some(ntype_from(v).ok_or_else(|| {
                                err(lineno, format!("unknown node type '{}'", v))
                            })?)
                        }
                        "func" => {
                            func = Some(func_from(v).ok_or_else(|| {
                                err(lineno, format!("unknown func '{}'", v))
                            })?)
                        }
                        "temporal" => {
                            temporal = Some(temporal_from(v).ok_or_else(|| {
                                err(lineno, format!("unknown temporal '{}'", v))
                            })?)
                        }
                        "width" => {
                            width = Some(v.parse().map_err(|_| {
                                err(lineno, format!("bad width '{}'", v))
                            })?)
                        }
                        "stage" => {
                            stage = Some(v.parse().map_err(|_| {
                                err(lineno, format!("bad stage '{}'", v))
                            })?)
                        }
                        _ => return Err(err(lineno, format!("unknown attribute '{}'", k))),
                    }
                }
                nodes.push(GraphNode {
                    id,
                    label,
                    ntype: ntype.ok_or_else(|| err(lineno, "missing type="))?,
                    func: func.ok_or_else(|| err(lineno, "missing func="))?,
                    temporal: temporal.ok_or_else(|| err(lineno, "missing temporal="))?,
                    width: width.ok_or_else(|| err(lineno, "missing width="))?,
                    stage,
                });
            }
            Some("EDGE") => {
                let src: usize = f
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno, "bad edge source"))?;
                if f.next() != Some("->") {
                    return Err(err(lineno, "expected '->'"));
                }
                let dst: usize = f
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno, "bad edge destination"))?;
                let label = match f.next() {
                    Some("[data]") => EdgeLabel::Data,
                    Some("[control]") => EdgeLabel::Control,
                    other => {
                        return Err(err(
                            lineno,
                            format!("expected [data] or [control], found {:?}", other.unwrap_or("")),
                        ))
                    }
                };
                if src >= nodes.len() || dst >= nodes.len() {
                    return Err(err(
                        lineno,
                        format!("edge references missing node ({} -> {})", src, dst),
                    ));
                }
                if !seen_edge_keys.insert((src, dst, label)) {
                    return Err(err(lineno, format!("duplicate edge {} -> {}", src, dst)));
                }
                let mut annotations = Vec::new();
                for kv in f {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| err(lineno, format!("bad annotation '{}'", kv)))?;
                    annotations.push((k.to_string(), v.to_string()));
                }
                edges.push(GraphEdge {
                    src,
                    dst,
                    label,
                    annotations,
                });
            }
            other => {
                return Err(err(
                    lineno,
                    format!("expected NODE or EDGE, found {:?}", other.unwrap_or("")),
                ))
            }
        }
    }

    Ok(FlowGraph {
        kind,
        top,
        nodes,
        edges,
    })
}

fn err(line: usize, message: impl Into<String>) -> GraphSyntaxError {
    GraphSyntaxError {
        line,
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elab::flatten;
    use crate::graph::{build_cfg, build_dfg};
    use crate::parser::parse_design;

    fn flat(src: &str, top: &str) -> crate::elab::FlatDesign {
        let out = parse_design(src).unwrap();
        assert!(!out.has_errors(), "{:?}", out.diagnostics);
        flatten(&out.modules, top).unwrap()
    }

    #[test]
    fn passthrough_lines() {
        let design = flat("module m(input a, output y); assign y = a; endmodule", "m");
        let g = build_dfg(&design).unwrap();
        let t = textualize(&g);
        assert_eq!(t.header, "DFG module=m format=1");
        assert_eq!(
            t.node_lines,
            vec![
                "NODE 0 a type=input func=none temporal=none width=1 stage=0",
                "NODE 1 y type=output func=none temporal=combinational width=1 stage=1",
            ]
        );
        assert_eq!(t.edge_lines, vec!["EDGE 0 -> 1 [data] signal=a"]);
        assert!(t.text.ends_with('\n'));
        assert!(!t.text.contains(" \n"));
    }

    #[test]
    fn roundtrip_passthrough() {
        let design = flat("module m(input a, output y); assign y = a; endmodule", "m");
        let g = build_dfg(&design).unwrap();
        let parsed = parse_textual_graph(&textualize(&g).text).unwrap();
        assert_eq!(g, parsed);
    }

    #[test]
    fn alu_roundtrip_both_kinds() {
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
        let design = flat(src, "alu");
        for g in [build_dfg(&design).unwrap(), build_cfg(&design).unwrap()] {
            let t = textualize(&g);
            let parsed = parse_textual_graph(&t.text).unwrap();
            assert_eq!(g, parsed);
            // serializing the parsed graph reproduces the bytes
            assert_eq!(textualize(&parsed).text, t.text);
        }
    }

    #[test]
    fn alu_cfg_contains_branch_line() {
        let src = r#"
module alu(input [2:0] ALUOp, input [3:0] A, output reg [7:0] Result);
  always @(*) case (ALUOp)
    3'b000: Result = A;
    default: Result = 8'b0;
  endcase
endmodule
"#;
        let design = flat(src, "alu");
        let t = textualize(&build_cfg(&design).unwrap());
        assert!(t
            .node_lines
            .iter()
            .any(|l| l.contains("ALUOp_case type=branch func=control")));
        assert!(t
            .edge_lines
            .iter()
            .any(|l| l.contains("[control] signal=ALUOp")));
    }

    #[test]
    fn dangling_edge_rejected() {
        let text = "DFG module=m format=1\nNODE 0 a type=input func=none temporal=none width=1\nEDGE 0 -> 99 [data]\n";
        let e = parse_textual_graph(text).unwrap_err();
        assert!(e.message.contains("missing node"));
    }

    #[test]
    fn long_labels_hashed() {
        let design = flat("module m(input a, output y); assign y = a; endmodule", "m");
        let mut g = build_dfg(&design).unwrap();
        let long = "x".repeat(100);
        g.nodes[0].label = long.clone();
        let t = textualize(&g);
        assert_eq!(t.renames.len(), 1);
        assert_eq!(t.renames[0].0, long);
        let short = &t.renames[0].1;
        assert_eq!(short.chars().count(), MAX_LABEL_LEN);
        assert!(t.node_lines[0].contains(short.as_str()));
    }

    #[test]
    fn size_is_linear() {
        // synthetic 1000-node chain
        let nodes: Vec<GraphNode> = (0..1000)
            .map(|i| GraphNode {
                id: i,
                label: format!("n{}", i),
                ntype: if i == 0 { NodeType::Input } else { NodeType::Net },
                func: NodeFunc::None,
                temporal: Temporal::None,
                width: 8,
                stage: None,
            })
            .collect();
        let edges: Vec<GraphEdge> = (1..1000)
            .map(|i| GraphEdge {
                src: i - 1,
                dst: i,
                label: EdgeLabel::Data,
                annotations: vec![("signal".into(), format!("n{}", i - 1))],
            })
            .collect();
        let g = FlowGraph {
            kind: GraphKind::Dfg,
            top: "chain".into(),
            nodes,
            edges,
        };
        let t = textualize(&g);
        let per_element = t.text.len() / (1000 + 999);
        assert!(per_element < 120, "bytes per element: {}", per_element);
        let parsed = parse_textual_graph(&t.text).unwrap();
        assert_eq!(g, parsed);
    }
}
