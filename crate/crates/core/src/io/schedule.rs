use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, write_atomic, FormatError};
use crate::sampling::Schedule;
use crate::spectral::Shape;

/// Text form: `#` header comments (`n`, `density`, `generator`, `seed`), then
/// one ascending index per line, or `row col` pairs for a plane grid.
pub fn format_schedule(s: &Schedule, generator: &str) -> String {
    let mut out = String::new();
    let ext: Vec<String> = s.grid().extents().iter().map(|e| e.to_string()).collect();
    writeln!(out, "# n: {}", ext.join(" ")).unwrap();
    writeln!(out, "# density: {}", s.density()).unwrap();
    writeln!(out, "# generator: {generator}").unwrap();
    writeln!(out, "# seed: {}", s.seed()).unwrap();
    let (_, cols) = s.grid().rows_cols();
    for &i in s.indices() {
        match s.grid() {
            Shape::Line(_) => writeln!(out, "{i}").unwrap(),
            Shape::Plane(..) => writeln!(out, "{} {}", i / cols, i % cols).unwrap(),
        }
    }
    out
}

pub fn parse_schedule(text: &str) -> Result<Schedule, FormatError> {
    let err = |line: usize, reason: String| FormatError::Schedule { line, reason };
    let mut grid: Option<Shape> = None;
    let mut seed = 0u64;
    let mut indices: Vec<usize> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let Some((key, value)) = comment.split_once(':') else { continue };
            let value = value.trim();
            match key.trim() {
                "n" => {
                    let ext = value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| err(line_no, format!("bad n '{value}': {e}")))?;
                    grid = Some(Shape::from_extents(&ext).map_err(|e| err(line_no, e.to_string()))?);
                }
                "seed" => seed = value.parse().map_err(|e| err(line_no, format!("bad seed '{value}': {e}")))?,
                _ => {}
            }
            continue;
        }
        let g = grid.ok_or_else(|| err(line_no, "index before '# n:' header".into()))?;
        let fields = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(line_no, format!("'{line}': {e}")))?;
        let flat = match (g, fields.as_slice()) {
            (Shape::Line(n), [k]) if *k < n => *k,
            (Shape::Plane(r, c), [a, b]) if *a < r && *b < c => a * c + b,
            (Shape::Line(_), [_]) | (Shape::Plane(..), [_, _]) => {
                return Err(err(line_no, format!("'{line}' outside grid {:?}", g.extents())))
            }
            _ => return Err(err(line_no, format!("expected {} integer(s), got '{line}'", g.dims()))),
        };
        if let Some(&prev) = indices.last() {
            if flat == prev {
                return Err(err(line_no, format!("duplicate index '{line}'")));
            }
            if flat < prev {
                return Err(err(line_no, format!("index '{line}' not ascending")));
            }
        }
        indices.push(flat);
    }
    let g = grid.ok_or_else(|| err(0, "missing '# n:' header".into()))?;
    Schedule::new(g, indices, seed).map_err(|e| err(0, e.to_string()))
}

pub fn read_schedule(path: &Path) -> Result<Schedule, FormatError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| FormatError::Schedule { line: 0, reason: "not UTF-8".into() })?;
    parse_schedule(&text)
}

pub fn write_schedule(s: &Schedule, generator: &str, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, format_schedule(s, generator).as_bytes())
}
