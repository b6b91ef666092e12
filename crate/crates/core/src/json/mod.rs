//! Document JSON model: path-addressed flattening of nested documents
//! plus schema inference and complexity scoring (submodules).
//!
//! Documents are plain `serde_json::Value` trees. Object key order is
//! preserved as encountered (the `preserve_order` feature), so anything
//! rendered from a document is deterministic for a given input.

pub mod complexity;
pub mod schema;

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};

/// One step in a field path: an object key or an array index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathSegment {
    Key(String),
    Index(usize),
}

/// Path to a scalar leaf, rendered dotted with bracketed indices:
/// `supplier.name`, `items[2].price`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldPath(Vec<PathSegment>);

impl FieldPath {
    pub fn push_key(&mut self, key: &str) {
        self.0.push(PathSegment::Key(key.to_string()));
    }

    pub fn push_index(&mut self, idx: usize) {
        self.0.push(PathSegment::Index(idx));
    }

    pub fn pop(&mut self) {
        self.0.pop();
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for seg in &self.0 {
            match seg {
                PathSegment::Key(k) => {
                    if !out.is_empty() {
                        out.push('.');
                    }
                    out.push_str(k);
                }
                PathSegment::Index(i) => {
                    out.push('[');
                    out.push_str(&i.to_string());
                    out.push(']');
                }
            }
        }
        out
    }
}

impl std::fmt::Display for FieldPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

/// Flat view of a document: rendered path -> rendered scalar.
pub type FlatFields = BTreeMap<String, String>;

/// Renders a scalar leaf as text. Strings are trimmed; numbers keep their
/// shortest round-trip form; returns None for containers.
pub fn render_scalar(value: &Value) -> Option<String> {
    match value {
        Value::Null => Some("null".to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.trim().to_string()),
        Value::Array(_) | Value::Object(_) => None,
    }
}

/// Flattens a document into path -> scalar text. The root must be an
/// object. Empty containers contribute no entries, so the map size equals
/// the number of scalar leaves.
pub fn flatten(doc: &Value) -> Result<FlatFields> {
    if !doc.is_object() {
        return Err(Error::Shape(format!(
            "flatten expects an object root, got {}",
            kind_name(doc)
        )));
    }
    let mut out = FlatFields::new();
    let mut path = FieldPath::default();
    flatten_into(doc, &mut path, &mut out);
    Ok(out)
}

fn flatten_into(value: &Value, path: &mut FieldPath, out: &mut FlatFields) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                path.push_key(k);
                flatten_into(v, path, out);
                path.pop();
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                path.push_index(i);
                flatten_into(v, path, out);
                path.pop();
            }
        }
        scalar => {
            let rendered = render_scalar(scalar).expect("non-container is scalar");
            out.insert(path.render(), rendered);
        }
    }
}

/// Human name of a JSON value's kind, for error messages.
pub fn kind_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
