//! Store-build tokenization contract: lowercase, split on anything that is
//! not alphanumeric, no stemming.

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Parses `qid<TAB>query text` lines, keeping file order.
pub fn parse_queries(text: &str) -> crate::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (qid, query) = line.split_once('\t').ok_or_else(|| {
            crate::Error::Format { what: "queries file", detail: format!("line {}: expected `qid<TAB>query`", no + 1) }
        })?;
        out.push((qid.trim().to_string(), query.trim().to_string()));
    }
    Ok(out)
}

pub fn write_queries(queries: &[(String, String)]) -> String {
    queries.iter().map(|(q, t)| format!("{q}\t{t}\n")).collect()
}
