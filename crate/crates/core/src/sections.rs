//! Line-oriented `[section]` / `key = value` lexer shared by the machine and
//! kernel file formats.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Section {
    pub kind: String,
    pub arg: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| {
            Error::semantic(format!(
                "section [{}] starting at line {} is missing mandatory key `{key}`",
                self.header(),
                self.line
            ))
        })
    }

    /// Rejects keys outside `allowed` and duplicated keys.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (idx, e) in self.entries.iter().enumerate() {
            if !allowed.contains(&e.key.as_str()) {
                return Err(Error::syntax(
                    e.line,
                    format!("unknown key `{}` in section [{}]", e.key, self.header()),
                ));
            }
            if self.entries[..idx].iter().any(|p| p.key == e.key) {
                return Err(Error::syntax(e.line, format!("duplicate key `{}`", e.key)));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> String {
        match &self.arg {
            Some(arg) => format!("{} {arg}", self.kind),
            None => self.kind.clone(),
        }
    }
}

pub(crate) fn lex(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::syntax(line, "unterminated section header"))?
                .trim();
            let mut parts = inner.split_whitespace();
            let kind = parts
                .next()
                .ok_or_else(|| Error::syntax(line, "empty section header"))?
                .to_string();
            let arg = parts.next().map(str::to_string);
            if parts.next().is_some() {
                return Err(Error::syntax(line, "section header takes at most one argument"));
            }
            sections.push(Section {
                kind,
                arg,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::syntax(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::syntax(line, "empty key"));
        }
        if value.is_empty() {
            return Err(Error::syntax(line, format!("key `{key}` has no value")));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::syntax(line, "entry outside of any section"))?;
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(sections)
}

/// Parses a finite float; `a/b` is accepted as a ratio (e.g. `1/42`).
pub(crate) fn parse_f64(entry: &Entry) -> Result<f64> {
    let v = &entry.value;
    let parsed = match v.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad_number(entry))?;
            let den: f64 = den.trim().parse().map_err(|_| bad_number(entry))?;
            num / den
        }
        None => v.parse().map_err(|_| bad_number(entry))?,
    };
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(bad_number(entry))
    }
}

pub(crate) fn parse_positive(entry: &Entry) -> Result<f64> {
    let v = parse_f64(entry)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::semantic(format!(
            "line {}: `{}` must be positive, got {}",
            entry.line, entry.key, entry.value
        )))
    }
}

pub(crate) fn parse_u64(entry: &Entry) -> Result<u64> {
    entry
        .value
        .parse()
        .map_err(|_| Error::syntax(entry.line, format!("`{}` expects an integer, got `{}`", entry.key, entry.value)))
}

pub(crate) fn parse_bool(entry: &Entry) -> Result<bool> {
    match entry.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::syntax(
            entry.line,
            format!("`{}` expects true or false, got `{other}`", entry.key),
        )),
    }
}

/// Splits `CLASS.width` keys.
pub(crate) fn split_class_width(entry: &Entry) -> Result<(String, String)> {
    match entry.key.split_once('.') {
        Some((class, width)) if !class.is_empty() && !width.is_empty() => {
            Ok((class.to_string(), width.to_string()))
        }
        _ => Err(Error::syntax(
            entry.line,
            format!("expected `<CLASS>.<width>`, found `{}`", entry.key),
        )),
    }
}

fn bad_number(entry: &Entry) -> Error {
    Error::syntax(
        entry.line,
        format!("`{}` expects a number, got `{}`", entry.key, entry.value),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header\n\n[machine] # trailing\nname = x # c\n";
        let s = lex(text).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].entries[0].value, "x");
        assert_eq!(s[0].entries[0].line, 4);
    }

    #[test]
    fn entry_before_section_is_an_error() {
        let err = lex("a = 1\n").unwrap_err();
        assert_eq!(err, Error::syntax(1, "entry outside of any section"));
    }

    #[test]
    fn header_argument() {
        let s = lex("[cache L2]\n").unwrap();
        assert_eq!(s[0].kind, "cache");
        assert_eq!(s[0].arg.as_deref(), Some("L2"));
        assert!(matches!(lex("[cache L2 x]"), Err(Error::Syntax { line: 1, .. })));
    }

    #[test]
    fn ratio_values() {
        let e = Entry {
            key: "DIV.avx".into(),
            value: "1/42".into(),
            line: 1,
        };
        assert_eq!(parse_f64(&e).unwrap(), 1.0 / 42.0);
    }
}
