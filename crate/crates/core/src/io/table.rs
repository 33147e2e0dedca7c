use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use super::FormatError;

/// Named columns of numbers or strings, rendered as aligned column text or
/// as a JSON array of row objects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) if s.is_empty() => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.6e}"),
            _ => n.to_string(),
        },
        Value::Null => "nan".into(),
        other => other.to_string(),
    }
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
        let width: Vec<usize> = (0..self.columns.len())
            .map(|c| cells.iter().map(|r| r[c].len()).chain([self.columns[c].len() + 2]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let head: Vec<String> = self.columns.iter().enumerate().map(|(c, h)| format!("{h:>w$}", w = width[c] - 2)).collect();
        writeln!(out, "# {}", head.join("  ")).unwrap();
        for r in &cells {
            let line: Vec<String> = r.iter().enumerate().map(|(c, v)| format!("{v:>w$}", w = width[c])).collect();
            writeln!(out, "{}", line.join("  ")).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Map<String, Value>> = self
            .rows
            .iter()
            .map(|r| self.columns.iter().cloned().zip(r.iter().cloned()).collect())
            .collect();
        serde_json::to_string_pretty(&rows).expect("table serialises")
    }
}

/// Peak volume series: `id v1 v2 ...` per line; `#` starts a comment.
pub fn parse_volumes(text: &str) -> Result<Vec<(String, Vec<f64>)>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let id = it.next().expect("non-empty line").to_string();
        let vols = it
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| FormatError::Table { line: i + 1, reason: format!("'{line}': {e}") })?;
        if vols.is_empty() {
            return Err(FormatError::Table { line: i + 1, reason: format!("peak '{id}' has no volumes") });
        }
        out.push((id, vols));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn text_and_json() {
        let mut t = Table::new(["density", "r2"]);
        t.push(vec![json!(0.25), json!(0.5)]);
        t.push(vec![json!(0.3), Value::Null]);
        let text = t.to_text();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("# "));
        assert!(text.contains("nan"));
        let back: Vec<serde_json::Map<String, Value>> = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back[0]["density"], json!(0.25));
    }

    #[test]
    fn volumes() {
        let v = parse_volumes("# id A1 A2 A3\n1 2.05e9 9.08e8 3.60e8\n\n8 5.2e9 2.69e9 1.27e9 # beta-Ala\n").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].0, "8");
        assert_eq!(v[1].1, vec![5.2e9, 2.69e9, 1.27e9]);
        assert!(matches!(parse_volumes("a 1 x\n"), Err(FormatError::Table { line: 1, .. })));
        assert!(parse_volumes("a\n").is_err());
    }
}
