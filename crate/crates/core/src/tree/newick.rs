//! Newick parsing and serialization.
//!
//! Supports the common dialect: nested parentheses, optional internal-node
//! labels, `:length` annotations, single-quoted labels (with `''` escaping),
//! and square-bracket comments (skipped). One tree per input, terminated by
//! `;`. Missing branch lengths default to 0 and are reported as warnings
//! rather than errors, since published trees frequently omit them on the
//! root edge.

use crate::error::{Error, Result};
use crate::tree::{Node, NodeId, Tree};

/// Parse result: the tree plus any non-fatal irregularities encountered.
#[derive(Debug)]
pub struct Parsed {
    pub tree: Tree,
    pub warnings: Vec<String>,
}

/// Parse a single Newick statement.
pub fn parse(text: &str) -> Result<Parsed> {
    let mut p = Parser { b: text.as_bytes(), pos: 0, nodes: Vec::new(), warnings: Vec::new() };
    p.skip_trivia()?;
    if p.at_end() {
        return Err(Error::parse(p.pos, "empty input"));
    }
    let root = p.subtree(None)?;
    p.skip_trivia()?;
    if p.peek() != Some(b';') {
        return Err(Error::parse(p.pos, "expected ';' to terminate the tree (unterminated input)"));
    }
    p.pos += 1;
    p.skip_trivia()?;
    if !p.at_end() {
        return Err(Error::parse(p.pos, "trailing content after ';'"));
    }
    let tree = Tree::new(p.nodes, root).map_err(|e| match e {
        // surface structural problems found post-parse as parse errors with
        // the end-of-input offset, per the input-validation contract
        Error::Validation(msg) => Error::parse(text.len(), msg),
        other => other,
    })?;
    Ok(Parsed { tree, warnings: p.warnings })
}

/// Serialize a tree to a Newick statement. Inverse of [`parse`] on topology,
/// labels, and branch lengths.
pub fn write(tree: &Tree) -> String {
    let mut out = String::new();
    write_node(tree, tree.root(), &mut out);
    // the root's stored length is decorative but preserved for round-trips
    out.push_str(&format!(":{}", tree.node(tree.root()).length));
    out.push(';');
    out
}

fn write_node(tree: &Tree, id: NodeId, out: &mut String) {
    let n = tree.node(id);
    if !n.children.is_empty() {
        out.push('(');
        for (i, &c) in n.children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_node(tree, c, out);
            out.push_str(&format!(":{}", tree.node(c).length));
        }
        out.push(')');
    }
    if let Some(l) = &n.label {
        out.push_str(&quote_label(l));
    }
}

/// Quote a label if it contains Newick metacharacters or whitespace.
fn quote_label(l: &str) -> String {
    let plain = !l.is_empty()
        && l.chars().all(|c| !c.is_whitespace() && !"()[]{}:;,'\"".contains(c));
    if plain {
        l.to_string()
    } else {
        format!("'{}'", l.replace('\'', "''"))
    }
}

struct Parser<'a> {
    b: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
    warnings: Vec<String>,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.b.len()
    }

    fn peek(&self) -> Option<u8> {
        self.b.get(self.pos).copied()
    }

    /// Skip whitespace and `[...]` comments.
    fn skip_trivia(&mut self) -> Result<()> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(b'[') => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == b']' {
                            break;
                        }
                    }
                    if self.b.get(self.pos - 1) != Some(&b']') {
                        return Err(Error::parse(start, "unterminated '[' comment"));
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn subtree(&mut self, parent: Option<NodeId>) -> Result<NodeId> {
        self.skip_trivia()?;
        let id = self.nodes.len();
        self.nodes.push(Node { parent, children: Vec::new(), length: 0.0, label: None });
        if self.peek() == Some(b'(') {
            let open = self.pos;
            self.pos += 1;
            loop {
                let child = self.subtree(Some(id))?;
                self.nodes[id].children.push(child);
                self.skip_trivia()?;
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => {
                        return Err(Error::parse(
                            open,
                            "unbalanced parentheses (expected ',' or ')')",
                        ))
                    }
                }
            }
            self.skip_trivia()?;
            self.nodes[id].label = self.maybe_label()?;
        } else {
            let at = self.pos;
            match self.maybe_label()? {
                Some(l) => self.nodes[id].label = Some(l),
                None => return Err(Error::parse(at, "expected a tip label")),
            }
        }
        self.skip_trivia()?;
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip_trivia()?;
            self.nodes[id].length = self.length()?;
        } else {
            let who = self.nodes[id].label.clone().unwrap_or_else(|| format!("node {id}"));
            self.warnings
                .push(format!("missing branch length for {who} at byte {}; using 0", self.pos));
        }
        Ok(id)
    }

    fn maybe_label(&mut self) -> Result<Option<String>> {
        self.skip_trivia()?;
        match self.peek() {
            Some(b'\'') => {
                let start = self.pos;
                self.pos += 1;
                let mut out = String::new();
                loop {
                    match self.peek() {
                        None => return Err(Error::parse(start, "unterminated quoted label")),
                        Some(b'\'') => {
                            self.pos += 1;
                            if self.peek() == Some(b'\'') {
                                out.push('\'');
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                        Some(c) => {
                            out.push(c as char);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Some(out))
            }
            _ => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_whitespace() || b"()[]:;,'".contains(&c) {
                        break;
                    }
                    self.pos += 1;
                }
                if self.pos == start {
                    Ok(None)
                } else {
                    Ok(Some(String::from_utf8_lossy(&self.b[start..self.pos]).into_owned()))
                }
            }
        }
    }

    fn length(&mut self) -> Result<f64> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || b"+-.eE".contains(&c) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = std::str::from_utf8(&self.b[start..self.pos])
            .map_err(|_| Error::parse(start, "non-utf8 branch length"))?;
        let v: f64 =
            s.parse().map_err(|_| Error::parse(start, format!("invalid branch length '{s}'")))?;
        if !v.is_finite() {
            return Err(Error::parse(start, format!("non-finite branch length '{s}'")));
        }
        if v < 0.0 {
            return Err(Error::parse(start, format!("negative branch length '{s}'")));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_five_node_example() {
        let p = parse("(A:1.0,(B:2.0,C:3.0):0.5);").expect("parse");
        assert_eq!(p.tree.len(), 5);
        assert_eq!(p.tree.node(p.tree.root()).children.len(), 2);
        let m = p.tree.path_length_matrix();
        let i = |l: &str| m.index_of(l).unwrap();
        assert!((m.get(i("A"), i("B")) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn unterminated_input_is_a_parse_error() {
        let err = parse("((A:1,B:1):1,C:2").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("parse error"), "got: {msg}");
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        assert!(parse("").is_err());
        assert!(parse("   [comment only]  ").is_err());
    }

    #[test]
    fn duplicate_tip_labels_rejected() {
        let err = parse("(A:1,A:2);").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {err}");
    }

    #[test]
    fn unbalanced_parens_rejected() {
        assert!(parse("((A:1,B:2);").is_err());
        assert!(parse("(A:1,B:2)):0;").is_err());
    }

    #[test]
    fn missing_lengths_default_to_zero_with_warning() {
        let p = parse("(A,B:1);").expect("parse");
        assert_eq!(p.warnings.len(), 2, "A and the root both lack lengths: {:?}", p.warnings);
        let a = p.tree.tips()[0];
        assert_eq!(p.tree.node(a).length, 0.0);
    }

    #[test]
    fn comments_and_quoted_labels() {
        let p = parse("('Proto Indo-European':1[annotation], 'O''Odham':2):0;").expect("parse");
        let labels = p.tree.tip_labels();
        assert_eq!(labels, vec!["Proto Indo-European", "O'Odham"]);
    }

    #[test]
    fn negative_length_rejected() {
        assert!(parse("(A:-1,B:1);").is_err());
    }

    #[test]
    fn internal_labels_preserved() {
        let p = parse("((A:1,B:1)ab:1,C:2)root:0;").expect("parse");
        let has_ab = p
            .tree
            .preorder()
            .iter()
            .any(|&id| p.tree.node(id).label.as_deref() == Some("ab"));
        assert!(has_ab);
    }

    #[test]
    fn round_trip_preserves_text_structure() {
        let src = "((A:1,B:1.5)ab:1,(C:2,'D D':0.5):0.25):0;";
        let p1 = parse(src).expect("parse");
        let out = write(&p1.tree);
        let p2 = parse(&out).expect("reparse");
        assert_eq!(write(&p2.tree), out, "serialize∘parse must be a fixed point");
    }

    #[test]
    fn scientific_notation_lengths() {
        let p = parse("(A:1e-3,B:2.5E2);").expect("parse");
        let tips = p.tree.tips();
        assert_eq!(p.tree.node(tips[0]).length, 1e-3);
        assert_eq!(p.tree.node(tips[1]).length, 250.0);
    }
}
