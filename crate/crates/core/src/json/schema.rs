//! Schema trees inferred from documents.
//!
//! A schema is the structural skeleton of a JSON document: objects keep
//! their children in encounter order, arrays carry a single unified item
//! schema, leaves carry a scalar kind. Unification widens: `null` is the
//! bottom element (absorbs into anything), `string` is the top (any
//! mismatch collapses to it).

use std::collections::HashSet;

use indexmap::IndexMap;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarKind {
    String,
    Number,
    Boolean,
    Null,
}

impl ScalarKind {
    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::String => "string",
            ScalarKind::Number => "number",
            ScalarKind::Boolean => "boolean",
            ScalarKind::Null => "null",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    Scalar(ScalarKind),
    Object(IndexMap<String, Schema>),
    Array(Box<Schema>),
}

/// Infers the schema of a document. Array items are unified across all
/// elements; an empty array infers `array of null` (the bottom item).
pub fn infer_schema(doc: &Value) -> Schema {
    match doc {
        Value::Null => Schema::Scalar(ScalarKind::Null),
        Value::Bool(_) => Schema::Scalar(ScalarKind::Boolean),
        Value::Number(_) => Schema::Scalar(ScalarKind::Number),
        Value::String(_) => Schema::Scalar(ScalarKind::String),
        Value::Array(items) => {
            let item = items
                .iter()
                .fold(Schema::Scalar(ScalarKind::Null), |acc, v| {
                    unify(&acc, &infer_schema(v))
                });
            Schema::Array(Box::new(item))
        }
        Value::Object(map) => Schema::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), infer_schema(v)))
                .collect(),
        ),
    }
}

/// Least widening of two schemas.
///
/// null + X -> X; equal kinds stay; differing non-null scalars -> string;
/// object + object merges children (shared keys unified, others kept);
/// array + array unifies items; any container/scalar or object/array
/// mismatch -> string.
pub fn unify(a: &Schema, b: &Schema) -> Schema {
    use Schema::*;
    match (a, b) {
        (Scalar(ScalarKind::Null), other) => other.clone(),
        (other, Scalar(ScalarKind::Null)) => other.clone(),
        (Scalar(x), Scalar(y)) if x == y => Scalar(*x),
        (Scalar(_), Scalar(_)) => Scalar(ScalarKind::String),
        (Object(ca), Object(cb)) => {
            let mut merged = ca.clone();
            for (k, v) in cb {
                match merged.get(k) {
                    Some(existing) => {
                        let u = unify(existing, v);
                        merged.insert(k.clone(), u);
                    }
                    None => {
                        merged.insert(k.clone(), v.clone());
                    }
                }
            }
            Object(merged)
        }
        (Array(ia), Array(ib)) => Array(Box::new(unify(ia, ib))),
        _ => Scalar(ScalarKind::String),
    }
}

impl Schema {
    /// Checks a document against this schema. `null` leaves validate
    /// anything (unobserved), and a `string` leaf schema validates any
    /// value since string is the widening top.
    pub fn validates(&self, doc: &Value) -> bool {
        if doc.is_null() {
            return true;
        }
        match self {
            Schema::Scalar(ScalarKind::String) => true,
            Schema::Scalar(ScalarKind::Number) => doc.is_number(),
            Schema::Scalar(ScalarKind::Boolean) => doc.is_boolean(),
            Schema::Scalar(ScalarKind::Null) => false,
            Schema::Object(children) => doc.as_object().is_some_and(|m| {
                m.iter()
                    .all(|(k, v)| children.get(k).is_some_and(|c| c.validates(v)))
            }),
            Schema::Array(item) => doc
                .as_array()
                .is_some_and(|items| items.iter().all(|v| item.validates(v))),
        }
    }

    /// Canonical structural signature. Children are listed sorted by name,
    /// so two subtrees that differ only in key order share a signature.
    pub fn signature(&self) -> String {
        match self {
            Schema::Scalar(k) => format!("s:{}", k.name()),
            Schema::Array(item) => format!("a[{}]", item.signature()),
            Schema::Object(children) => {
                let mut keys: Vec<&String> = children.keys().collect();
                keys.sort();
                let parts: Vec<String> = keys
                    .into_iter()
                    .map(|k| format!("{}={}", k, children[k].signature()))
                    .collect();
                format!("o{{{}}}", parts.join(";"))
            }
        }
    }

    pub fn structurally_eq(&self, other: &Schema) -> bool {
        self.signature() == other.signature()
    }

    /// Serializes to the wire form: nodes are objects with a `kind` field,
    /// objects add `children`, arrays add `item`.
    pub fn to_value(&self) -> Value {
        match self {
            Schema::Scalar(k) => json!({ "kind": k.name() }),
            Schema::Object(children) => {
                let mut kids = Map::new();
                for (k, v) in children {
                    kids.insert(k.clone(), v.to_value());
                }
                json!({ "kind": "object", "children": Value::Object(kids) })
            }
            Schema::Array(item) => json!({ "kind": "array", "item": item.to_value() }),
        }
    }

    pub fn from_value(value: &Value) -> Result<Schema> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Shape("schema node must be a JSON object".to_string()))?;
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Shape("schema node is missing a string `kind`".to_string()))?;
        match kind {
            "string" => Ok(Schema::Scalar(ScalarKind::String)),
            "number" => Ok(Schema::Scalar(ScalarKind::Number)),
            "boolean" => Ok(Schema::Scalar(ScalarKind::Boolean)),
            "null" => Ok(Schema::Scalar(ScalarKind::Null)),
            "object" => {
                let mut children = IndexMap::new();
                if let Some(kids) = obj.get("children") {
                    let map = kids.as_object().ok_or_else(|| {
                        Error::Shape("schema `children` must be an object".to_string())
                    })?;
                    for (k, v) in map {
                        children.insert(k.clone(), Schema::from_value(v)?);
                    }
                }
                Ok(Schema::Object(children))
            }
            "array" => {
                let item = match obj.get("item") {
                    Some(v) => Schema::from_value(v)?,
                    None => Schema::Scalar(ScalarKind::Null),
                };
                Ok(Schema::Array(Box::new(item)))
            }
            other => Err(Error::Shape(format!("unknown schema kind `{other}`"))),
        }
    }
}

/// Collapses structurally identical array-of-object children at each
/// object level, keeping the first occurrence. Applied bottom-up, so a
/// duplicated table nested inside another table also collapses.
/// Idempotent: a second pass finds nothing left to remove.
pub fn dedupe_tables(schema: &Schema) -> Schema {
    match schema {
        Schema::Object(children) => {
            let mut seen: HashSet<String> = HashSet::new();
            let mut out = IndexMap::new();
            for (k, v) in children {
                let v = dedupe_tables(v);
                if let Schema::Array(item) = &v {
                    if matches!(item.as_ref(), Schema::Object(_)) && !seen.insert(item.signature())
                    {
                        continue;
                    }
                }
                out.insert(k.clone(), v);
            }
            Schema::Object(out)
        }
        Schema::Array(item) => Schema::Array(Box::new(dedupe_tables(item))),
        scalar => scalar.clone(),
    }
}
