//! Line-oriented text format:
//!
//! ```text
//! spn v1 <num_vars> <num_nodes>
//! <cardinality of X0> <cardinality of X1> ...
//! I <var> <value>
//! P <child> <child> ...
//! S <child>:<weight> <child>:<weight> ...
//! root <id>
//! ```
//!
//! Node ids are line positions. Weights use 17 significant digits so a
//! write/read cycle reproduces every `f64` bit for bit.

use std::io::{BufRead, Write};

use super::{Node, NodeId, NodeRef, SpnError, SpnGraph, VariableId};

pub fn write_spn<W: Write>(graph: &SpnGraph, mut out: W) -> Result<(), SpnError> {
    writeln!(out, "spn v1 {} {}", graph.num_vars(), graph.num_nodes())?;
    let cards: Vec<String> = graph.cardinalities().iter().map(|c| c.to_string()).collect();
    writeln!(out, "{}", cards.join(" "))?;
    let mut line = String::new();
    for id in graph.node_ids() {
        line.clear();
        match graph.node(id) {
            NodeRef::Indicator { variable, value } => {
                line.push_str(&format!("I {} {}", variable.0, value));
            }
            NodeRef::Product { children } => {
                line.push('P');
                for c in children {
                    line.push_str(&format!(" {}", c.0));
                }
            }
            NodeRef::Sum { children, weights } => {
                line.push('S');
                for (c, w) in children.iter().zip(weights) {
                    line.push_str(&format!(" {}:{:.16e}", c.0, w));
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    writeln!(out, "root {}", graph.root().0)?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> SpnError {
    SpnError::Parse { line, message: message.into() }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, SpnError> {
    tok.parse().map_err(|_| parse_err(line, format!("bad number `{tok}`")))
}

/// Reads one network. Lines after `root` are left unread in `input`.
pub fn read_spn<R: BufRead>(input: R) -> Result<SpnGraph, SpnError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String), SpnError> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(parse_err(0, format!("unexpected end of input, expected {what}"))),
        }
    };

    let (ln, header) = next("header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "spn" || toks[1] != "v1" {
        return Err(parse_err(ln, "expected `spn v1 <num_vars> <num_nodes>`"));
    }
    let num_vars: usize = num(toks[2], ln)?;
    let num_nodes: usize = num(toks[3], ln)?;

    let (ln, card_line) = next("cardinalities")?;
    let cardinalities = card_line
        .split_whitespace()
        .map(|t| num::<usize>(t, ln))
        .collect::<Result<Vec<_>, _>>()?;
    if cardinalities.len() != num_vars {
        return Err(parse_err(ln, format!("expected {num_vars} cardinalities, got {}", cardinalities.len())));
    }

    let mut nodes = Vec::with_capacity(num_nodes);
    for _ in 0..num_nodes {
        let (ln, l) = next("node")?;
        let mut toks = l.split_whitespace();
        let node = match toks.next() {
            Some("I") => {
                let var = num(toks.next().ok_or_else(|| parse_err(ln, "missing variable"))?, ln)?;
                let value = num(toks.next().ok_or_else(|| parse_err(ln, "missing value"))?, ln)?;
                Node::Indicator { variable: VariableId(var), value }
            }
            Some("P") => Node::Product {
                children: toks.map(|t| num(t, ln).map(NodeId)).collect::<Result<_, _>>()?,
            },
            Some("S") => {
                let mut children = Vec::new();
                let mut weights = Vec::new();
                for t in toks {
                    let (c, w) = t.split_once(':').ok_or_else(|| parse_err(ln, format!("bad edge `{t}`")))?;
                    children.push(NodeId(num(c, ln)?));
                    weights.push(num(w, ln)?);
                }
                Node::Sum { children, weights }
            }
            _ => return Err(parse_err(ln, "expected node line starting with I, P or S")),
        };
        nodes.push(node);
    }

    let (ln, root_line) = next("root")?;
    let root = match root_line.split_whitespace().collect::<Vec<_>>()[..] {
        ["root", id] => NodeId(num(id, ln)?),
        _ => return Err(parse_err(ln, "expected `root <id>`")),
    };
    SpnGraph::from_nodes(cardinalities, nodes, root)
}
