//! Tiny `key = value` config parsing shared by the simulation config and
//! dataset schema files. Blank lines and `#` comments are ignored.

pub(crate) fn parse_kv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = value`", lineno + 1));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}
