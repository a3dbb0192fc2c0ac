use serde_json::Value;

/// Indented plain-text view of a report document.
pub fn human(doc: &Value) -> String {
    let mut out = String::new();
    let verdict = if doc["holds"].as_bool() == Some(true) { "HOLDS" } else { "FAILS" };
    out.push_str(&format!("{} [{}]\n", doc["command"].as_str().unwrap_or("?"), verdict));
    walk(&doc["result"], 1, &mut out);
    out
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn walk(v: &Value, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                match x {
                    Value::Object(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        walk(x, depth + 1, out);
                    }
                    Value::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        walk(x, depth + 1, out);
                    }
                    Value::Array(items) => {
                        let s: Vec<String> = items.iter().map(scalar).collect();
                        out.push_str(&format!("{pad}{k}: [{}]\n", s.join(", ")));
                    }
                    Value::String(text) if text.contains('\n') => {
                        out.push_str(&format!("{pad}{k}: |\n"));
                        for line in text.lines() {
                            out.push_str(&format!("{pad}  {line}\n"));
                        }
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", scalar(x))),
                }
            }
        }
        Value::Array(items) => {
            for (n, x) in items.iter().enumerate() {
                if x.is_object() || x.is_array() {
                    out.push_str(&format!("{pad}- #{n}\n"));
                    walk(x, depth + 1, out);
                } else {
                    out.push_str(&format!("{pad}- {}\n", scalar(x)));
                }
            }
        }
        _ => out.push_str(&format!("{pad}{}\n", scalar(v))),
    }
}
