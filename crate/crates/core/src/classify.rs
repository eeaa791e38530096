// SPDX-License-Identifier: Apache-2.0

//! File classification: RTL, testbench, netlist, or unknown.
//!
//! Heuristic (documented, configurable):
//! * testbench — every module has zero ports and some initial block uses
//!   `#` delay controls, or a module/file name matches the testbench
//!   patterns (`tb_` prefix, `_tb` suffix, contains `testbench`).
//! * netlist — no behavioral blocks and at least 90% of the counted items
//!   are gate-primitive instantiations.
//! * rtl — anything else that yields at least one module.
//! * unknown — nothing parses.

use crate::ast::{AstModule, ModuleItem, Statement};
use crate::parser::parse_design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileClass {
    Rtl,
    Testbench,
    Netlist,
    Unknown,
}

impl std::fmt::Display for FileClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FileClass::Rtl => write!(f, "rtl"),
            FileClass::Testbench => write!(f, "testbench"),
            FileClass::Netlist => write!(f, "netlist"),
            FileClass::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    /// Lowercased name fragments that mark a testbench.
    pub tb_name_patterns: Vec<TbPattern>,
    /// Fraction of items that must be gate primitives for the netlist class.
    pub netlist_gate_ratio: f64,
}

#[derive(Debug, Clone)]
pub enum TbPattern {
    Prefix(String),
    Suffix(String),
    Contains(String),
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            tb_name_patterns: vec![
                TbPattern::Prefix("tb_".into()),
                TbPattern::Suffix("_tb".into()),
                TbPattern::Contains("testbench".into()),
            ],
            netlist_gate_ratio: 0.9,
        }
    }
}

impl TbPattern {
    fn matches(&self, name: &str) -> bool {
        let name = name.to_ascii_lowercase();
        match self {
            TbPattern::Prefix(p) => name.starts_with(p.as_str()),
            TbPattern::Suffix(s) => name.ends_with(s.as_str()),
            TbPattern::Contains(c) => name.contains(c.as_str()),
        }
    }
}

/// Classify from source text alone, with the default heuristic.
pub fn classify_source(source: &str) -> FileClass {
    classify(source, None, &ClassifyConfig::default())
}

/// Classify with an optional file name (its stem participates in the
/// testbench name patterns) and explicit configuration.
pub fn classify(source: &str, filename: Option<&str>, cfg: &ClassifyConfig) -> FileClass {
    let outcome = match parse_design(source) {
        Ok(o) => o,
        Err(_) => return FileClass::Unknown,
    };
    if outcome.modules.is_empty() {
        return FileClass::Unknown;
    }
    classify_modules(&outcome.modules, filename, cfg)
}

/// Classification over already-parsed modules.
pub fn classify_modules(
    modules: &[AstModule],
    filename: Option<&str>,
    cfg: &ClassifyConfig,
) -> FileClass {
    let all_portless = modules.iter().all(|m| m.ports.is_empty());
    let any_delayed_initial = modules.iter().any(module_has_delayed_initial);
    let name_match = modules
        .iter()
        .map(|m| m.name.as_str())
        .chain(filename.into_iter().map(file_stem))
        .any(|n| cfg.tb_name_patterns.iter().any(|p| p.matches(n)));
    if (all_portless && any_delayed_initial) || name_match {
        return FileClass::Testbench;
    }

    let mut gates = 0usize;
    let mut behavioral = 0usize;
    let mut other = 0usize;
    for m in modules {
        count_items(&m.items, &mut gates, &mut behavioral, &mut other);
    }
    let total = gates + behavioral + other;
    if behavioral == 0 && total > 0 && (gates as f64) >= cfg.netlist_gate_ratio * (total as f64) {
        return FileClass::Netlist;
    }

    FileClass::Rtl
}

const GATE_NAMES: &[&str] = &["and", "or", "not", "nand", "nor", "xor", "xnor", "buf"];

fn count_items(
    items: &[ModuleItem],
    gates: &mut usize,
    behavioral: &mut usize,
    other: &mut usize,
) {
    for item in items {
        match item {
            ModuleItem::Instantiation(inst) => {
                if GATE_NAMES.contains(&inst.module.as_str()) {
                    *gates += 1;
                } else {
                    *other += 1;
                }
            }
            ModuleItem::AlwaysBlock { .. }
            | ModuleItem::InitialBlock { .. }
            | ModuleItem::ContinuousAssign { .. } => *behavioral += 1,
            ModuleItem::GenerateRegion(_) => *other += 1,
        }
    }
}

fn module_has_delayed_initial(m: &AstModule) -> bool {
    m.items.iter().any(|i| match i {
        ModuleItem::InitialBlock { body } => statement_has_delay(body),
        _ => false,
    })
}

fn statement_has_delay(s: &Statement) -> bool {
    match s {
        Statement::Delay { .. } => true,
        Statement::Block { statements, .. } => statements.iter().any(statement_has_delay),
        Statement::If {
            then_branch,
            else_branch,
            ..
        } => {
            statement_has_delay(then_branch)
                || else_branch.as_deref().map(statement_has_delay).unwrap_or(false)
        }
        Statement::Case { arms, .. } => arms.iter().any(|a| statement_has_delay(&a.body)),
        Statement::ForLoop { body, .. } => statement_has_delay(body),
        _ => false,
    }
}

fn file_stem(name: &str) -> &str {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    base.strip_suffix(".v").unwrap_or(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_port_delayed_initial_is_testbench() {
        let src = "module t; reg clk; initial begin #10 clk = 1; end endmodule";
        assert_eq!(classify_source(src), FileClass::Testbench);
    }

    #[test]
    fn gate_soup_is_netlist() {
        let mut src = String::from("module n(input a, input b, output y); wire n1;\n");
        for i in 0..20 {
            src.push_str(&format!("  nand g{} (n1, a, b);\n", i));
        }
        src.push_str("endmodule\n");
        assert_eq!(classify_source(&src), FileClass::Netlist);
    }

    #[test]
    fn alu_is_rtl() {
        let src = r#"
module alu(input [3:0] A, input [3:0] B, input [2:0] ALUOp,
           output reg [7:0] Result, output Zero);
  always @(*) begin
    case (ALUOp)
      3'b000: Result = A + B;
      default: Result = 8'b0;
    endcase
  end
  assign Zero = (Result == 8'b0);
endmodule
"#;
        assert_eq!(classify_source(src), FileClass::Rtl);
    }

    #[test]
    fn nothing_parses_is_unknown() {
        assert_eq!(classify_source("not verilog at all ("), FileClass::Unknown);
        assert_eq!(classify_source(""), FileClass::Unknown);
    }

    #[test]
    fn tb_name_pattern_matches() {
        let src = "module tb_counter(input clk); endmodule";
        assert_eq!(classify_source(src), FileClass::Testbench);
        let src = "module counter(input clk, output reg [3:0] q); always @(posedge clk) q <= q + 1; endmodule";
        assert_eq!(
            classify(src, Some("rig/tb_counter.v"), &ClassifyConfig::default()),
            FileClass::Testbench
        );
        assert_eq!(classify_source(src), FileClass::Rtl);
    }

    #[test]
    fn deterministic() {
        let src = "module m(input a, output y); assign y = a; endmodule";
        assert_eq!(classify_source(src), classify_source(src));
    }

    #[test]
    fn gates_with_behavior_is_rtl() {
        let src = r#"
module m(input a, input b, output y);
  wire n1;
  nand g0 (n1, a, b);
  assign y = n1;
endmodule
"#;
        assert_eq!(classify_source(src), FileClass::Rtl);
    }
}
