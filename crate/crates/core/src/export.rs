//! DOT, GraphML and TSV renderings of a graph snapshot.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::Error;
use crate::model::{KgTree, NodeStatus};

pub const PRUNED_DOT_STYLE: &str = "style=dashed, color=gray";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    GraphMl,
    Tsv,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "graphml" => Ok(ExportFormat::GraphMl),
            "tsv" => Ok(ExportFormat::Tsv),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

pub fn export(tree: &KgTree, format: ExportFormat) -> String {
    match format {
        ExportFormat::Dot => to_dot(tree),
        ExportFormat::GraphMl => to_graphml(tree),
        ExportFormat::Tsv => to_tsv(tree),
    }
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// One edge per triple labeled with its relation. Pruned nodes get a
/// dashed gray style.
pub fn to_dot(tree: &KgTree) -> String {
    let mut out = String::from("digraph kg {\n");
    for node in tree.nodes() {
        let id = dot_quote(node.entity.surface());
        if node.status == NodeStatus::Pruned {
            let _ = writeln!(out, "  {id} [status=\"pruned\", {PRUNED_DOT_STYLE}];");
        } else {
            let _ = writeln!(out, "  {id} [status=\"{}\"];", node.status);
        }
    }
    for t in tree.triples() {
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            dot_quote(
                tree.node(t.head.normalized())
                    .map_or(t.head.surface(), |n| n.entity.surface())
            ),
            dot_quote(
                tree.node(t.tail.normalized())
                    .map_or(t.tail.surface(), |n| n.entity.surface())
            ),
            dot_quote(&t.relation)
        );
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// GraphML with `label`, `status` and `level` node attributes and a
/// `relation`/`level` pair on every edge. Roots have level 0.
pub fn to_graphml(tree: &KgTree) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n\
  <key id=\"status\" for=\"node\" attr.name=\"status\" attr.type=\"string\"/>\n\
  <key id=\"level\" for=\"node\" attr.name=\"level\" attr.type=\"int\"/>\n\
  <key id=\"relation\" for=\"edge\" attr.name=\"relation\" attr.type=\"string\"/>\n\
  <key id=\"elevel\" for=\"edge\" attr.name=\"level\" attr.type=\"int\"/>\n\
  <graph id=\"kg\" edgedefault=\"directed\">\n",
    );
    let mut ids = std::collections::HashMap::new();
    for (i, node) in tree.nodes().enumerate() {
        ids.insert(node.entity.normalized().to_string(), i);
        let _ = write!(
            out,
            "    <node id=\"n{i}\">\n      <data key=\"label\">{}</data>\n      \
<data key=\"status\">{}</data>\n      <data key=\"level\">{}</data>\n    </node>\n",
            xml_escape(node.entity.surface()),
            node.status,
            node.tail_level.unwrap_or(0)
        );
    }
    for (i, t) in tree.triples().enumerate() {
        let _ = write!(
            out,
            "    <edge id=\"e{i}\" source=\"n{}\" target=\"n{}\">\n      \
<data key=\"relation\">{}</data>\n      <data key=\"elevel\">{}</data>\n    </edge>\n",
            ids[t.head.normalized()],
            ids[t.tail.normalized()],
            xml_escape(&t.relation),
            t.level
        );
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

fn tsv_field(s: &str) -> String {
    s.split(['\t', '\n', '\r'])
        .collect::<Vec<_>>()
        .join(" ")
        .trim()
        .to_string()
}

/// `head<TAB>relation<TAB>tail` lines, readable as an open KG file.
pub fn to_tsv(tree: &KgTree) -> String {
    let mut out = String::new();
    for t in tree.triples() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            tsv_field(t.head.surface()),
            tsv_field(&t.relation),
            tsv_field(t.tail.surface())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, Triple};

    fn tree() -> KgTree {
        let mut tree = KgTree::new();
        let rice = Entity::new("rice").unwrap();
        tree.add_root(rice.clone());
        for (r, t) in [("type", "cereal"), ("area", "33 acres"), ("says", "\"quoted\" <x>")] {
            tree.insert_triple(Triple::new("rice", r, t, 1, rice.clone(), 0).unwrap())
                .unwrap();
        }
        tree.mark_status(&Entity::new("33 acres").unwrap(), NodeStatus::Pruned)
            .unwrap();
        tree
    }

    #[test]
    fn format_names() {
        assert_eq!("DOT".parse::<ExportFormat>().unwrap(), ExportFormat::Dot);
        assert_eq!("graphml".parse::<ExportFormat>().unwrap(), ExportFormat::GraphMl);
        assert!(matches!("png".parse::<ExportFormat>(), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn dot_edges_and_style() {
        let dot = to_dot(&tree());
        assert_eq!(dot.matches(" -> ").count(), 3);
        assert_eq!(dot.matches(PRUNED_DOT_STYLE).count(), 1);
        assert!(dot.contains("\"\\\"quoted\\\" <x>\""));
    }

    #[test]
    fn graphml_escapes() {
        let xml = to_graphml(&tree());
        assert!(xml.contains("&quot;quoted&quot; &lt;x&gt;"));
        assert_eq!(xml.matches("<edge ").count(), 3);
        assert_eq!(xml.matches("<node ").count(), 4);
    }

    #[test]
    fn empty_documents() {
        let empty = KgTree::new();
        assert_eq!(to_dot(&empty), "digraph kg {\n}\n");
        assert!(to_graphml(&empty).ends_with("</graph>\n</graphml>\n"));
        assert_eq!(to_tsv(&empty), "");
    }

    #[test]
    fn tsv_sanitizes_tabs() {
        assert_eq!(tsv_field("a\tb\nc "), "a b c");
        assert_eq!(to_tsv(&tree()).lines().count(), 3);
    }
}
