//! Parser and serializer for the questionnaire language.
//!
//! ```text
//! file   := header decl+
//! header := 'questionnaire' STRING 'version' INT
//! decl   := 'scale' IDENT 'likert' INT '..' INT ('labels' STRING+)?
//!         | 'item' IDENT STRING ('scale' IDENT)? ('reverse')? ('optional')?
//!         | 'item' IDENT STRING 'text' ('optional')?
//!         | 'score' ('mean' | 'sum')
//! ```
//!
//! One declaration per line, `#` starts a comment outside strings. Item
//! modifiers are accepted in any order. An item without `scale` uses the
//! first scale declared above it.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use super::{ItemDef, ItemKind, QuestionnaireDef, ScaleDef, ScoreMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    MissingHeader,
    DuplicateHeader,
    UnknownKeyword,
    DuplicateItem,
    DuplicateScale,
    UndeclaredScale,
    NoScale,
    ReverseOnText,
    BadScaleRange,
    LabelCount,
    DuplicateScore,
    ScoreWithoutLikert,
    NoItems,
    Syntax,
}

impl ParseErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MissingHeader => "missing_header",
            Self::DuplicateHeader => "duplicate_header",
            Self::UnknownKeyword => "unknown_keyword",
            Self::DuplicateItem => "duplicate_item",
            Self::DuplicateScale => "duplicate_scale",
            Self::UndeclaredScale => "undeclared_scale",
            Self::NoScale => "no_scale",
            Self::ReverseOnText => "reverse_on_text",
            Self::BadScaleRange => "bad_scale_range",
            Self::LabelCount => "label_count",
            Self::DuplicateScore => "duplicate_score",
            Self::ScoreWithoutLikert => "score_without_likert",
            Self::NoItems => "no_items",
            Self::Syntax => "syntax",
        }
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A parse failure with its 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, kind: ParseErrorKind, message: impl Into<String>) -> Self {
        Self {
            line,
            kind,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Str(String),
    Range,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Word(w) => format!("`{w}`"),
            Token::Str(s) => format!("string {s:?}"),
            Token::Range => "`..`".to_string(),
        }
    }
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    None => {
                        return Err(ParseError::new(
                            lineno,
                            ParseErrorKind::Syntax,
                            "unterminated string",
                        ))
                    }
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some('n') => s.push('\n'),
                        other => {
                            return Err(ParseError::new(
                                lineno,
                                ParseErrorKind::Syntax,
                                format!("bad escape sequence `\\{}`", other.unwrap_or(' ')),
                            ))
                        }
                    },
                    Some(ch) => s.push(ch),
                }
            }
            out.push(Token::Str(s));
        } else {
            let mut w = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' || ch == '#' {
                    break;
                }
                w.push(ch);
                chars.next();
            }
            // `1..6` arrives as one bare word
            let mut rest = w.as_str();
            while let Some(pos) = rest.find("..") {
                if pos > 0 {
                    out.push(Token::Word(rest[..pos].to_string()));
                }
                out.push(Token::Range);
                rest = &rest[pos + 2..];
            }
            if !rest.is_empty() {
                out.push(Token::Word(rest.to_string()));
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, ParseErrorKind::Syntax, msg)
    }

    fn expect_word(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(Token::Word(w)) if w == kw => Ok(()),
            Some(t) => Err(self.syntax(format!("expected `{kw}`, found {}", t.describe()))),
            None => Err(self.syntax(format!("expected `{kw}`"))),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Token::Str(s)) => Ok(s.clone()),
            Some(t) => Err(self.syntax(format!("expected {what} string, found {}", t.describe()))),
            None => Err(self.syntax(format!("expected {what} string"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Token::Word(w)) if is_ident(w) => Ok(w.clone()),
            Some(t) => Err(self.syntax(format!("expected {what} identifier, found {}", t.describe()))),
            None => Err(self.syntax(format!("expected {what} identifier"))),
        }
    }

    fn int(&mut self, what: &str) -> Result<i64, ParseError> {
        match self.next() {
            Some(Token::Word(w)) => w
                .parse::<i64>()
                .map_err(|_| self.syntax(format!("expected integer {what}, found `{w}`"))),
            Some(t) => Err(self.syntax(format!("expected integer {what}, found {}", t.describe()))),
            None => Err(self.syntax(format!("expected integer {what}"))),
        }
    }

    fn end(&mut self) -> Result<(), ParseError> {
        match self.next() {
            None => Ok(()),
            Some(t) => Err(self.syntax(format!("unexpected trailing {}", t.describe()))),
        }
    }
}

fn is_ident(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_alphabetic() || b == b'_')
        && bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// Parses questionnaire source into a validated definition.
pub fn parse_questionnaire(text: &str) -> Result<QuestionnaireDef, ParseError> {
    let mut header: Option<(String, u32)> = None;
    let mut scales: BTreeMap<String, ScaleDef> = BTreeMap::new();
    let mut scale_order: Vec<String> = Vec::new();
    let mut items: Vec<ItemDef> = Vec::new();
    let mut seen_items: HashSet<String> = HashSet::new();
    let mut score: Option<(ScoreMode, usize)> = None;
    let mut last_line = 1;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 1,
            line: lineno,
        };
        let keyword = match &toks[0] {
            Token::Word(w) => w.as_str(),
            other => {
                return Err(ParseError::new(
                    lineno,
                    ParseErrorKind::Syntax,
                    format!("expected a keyword, found {}", other.describe()),
                ))
            }
        };

        if header.is_none() && keyword != "questionnaire" {
            return Err(ParseError::new(
                lineno,
                ParseErrorKind::MissingHeader,
                "missing header: first declaration must be `questionnaire \"<id>\" version <n>`",
            ));
        }

        match keyword {
            "questionnaire" => {
                if header.is_some() {
                    return Err(ParseError::new(
                        lineno,
                        ParseErrorKind::DuplicateHeader,
                        "duplicate questionnaire header",
                    ));
                }
                let id = cur.string("questionnaire id")?;
                if id.is_empty() {
                    return Err(cur.syntax("questionnaire id must not be empty"));
                }
                cur.expect_word("version")?;
                let v = cur.int("version")?;
                if !(1..=i64::from(u32::MAX)).contains(&v) {
                    return Err(cur.syntax("version must be a positive integer"));
                }
                cur.end()?;
                header = Some((id, v as u32));
            }
            "scale" => {
                let name = cur.ident("scale name")?;
                cur.expect_word("likert")?;
                let lo = cur.int("lower bound")?;
                match cur.next() {
                    Some(Token::Range) => {}
                    _ => return Err(cur.syntax("expected `..` between scale bounds")),
                }
                let hi = cur.int("upper bound")?;
                let labels = if cur.peek().is_some() {
                    cur.expect_word("labels")?;
                    let mut labels = Vec::new();
                    while let Some(t) = cur.next() {
                        match t {
                            Token::Str(s) => labels.push(s.clone()),
                            other => {
                                return Err(cur.syntax(format!(
                                    "expected label string, found {}",
                                    other.describe()
                                )))
                            }
                        }
                    }
                    if labels.is_empty() {
                        return Err(cur.syntax("`labels` needs at least one string"));
                    }
                    Some(labels)
                } else {
                    None
                };
                if scales.contains_key(&name) {
                    return Err(ParseError::new(
                        lineno,
                        ParseErrorKind::DuplicateScale,
                        format!("duplicate scale `{name}`"),
                    ));
                }
                if lo >= hi {
                    return Err(ParseError::new(
                        lineno,
                        ParseErrorKind::BadScaleRange,
                        format!("scale range {lo}..{hi} must have lo < hi"),
                    ));
                }
                if let Some(l) = &labels {
                    let want = (hi - lo + 1) as usize;
                    if l.len() != want {
                        return Err(ParseError::new(
                            lineno,
                            ParseErrorKind::LabelCount,
                            format!("scale `{name}` needs {want} labels, found {}", l.len()),
                        ));
                    }
                }
                scale_order.push(name.clone());
                scales.insert(
                    name.clone(),
                    ScaleDef {
                        name,
                        lo,
                        hi,
                        labels,
                    },
                );
            }
            "item" => {
                let id = cur.ident("item id")?;
                let prompt = cur.string("prompt")?;
                if prompt.trim().is_empty() {
                    return Err(cur.syntax("item prompt must not be empty"));
                }
                let mut scale: Option<String> = None;
                let mut text = false;
                let mut reverse = false;
                let mut optional = false;
                while let Some(t) = cur.next() {
                    let flag = match t {
                        Token::Word(w) => w.as_str(),
                        other => {
                            return Err(
                                cur.syntax(format!("unexpected {} in item", other.describe()))
                            )
                        }
                    };
                    let dup = match flag {
                        "scale" => {
                            let s = cur.ident("scale name")?;
                            scale.replace(s).is_some()
                        }
                        "text" => std::mem::replace(&mut text, true),
                        "reverse" => std::mem::replace(&mut reverse, true),
                        "optional" => std::mem::replace(&mut optional, true),
                        other => {
                            return Err(cur.syntax(format!("unknown item modifier `{other}`")))
                        }
                    };
                    if dup {
                        return Err(cur.syntax(format!("modifier `{flag}` given twice")));
                    }
                }
                if seen_items.contains(&id) {
                    return Err(ParseError::new(
                        lineno,
                        ParseErrorKind::DuplicateItem,
                        format!("duplicate item id `{id}`"),
                    ));
                }
                let kind = if text {
                    if reverse {
                        return Err(ParseError::new(
                            lineno,
                            ParseErrorKind::ReverseOnText,
                            format!("`reverse` is not allowed on text item `{id}`"),
                        ));
                    }
                    if scale.is_some() {
                        return Err(cur.syntax("a text item cannot name a scale"));
                    }
                    ItemKind::Text
                } else {
                    let name = match scale {
                        Some(s) if scales.contains_key(&s) => s,
                        Some(s) => {
                            return Err(ParseError::new(
                                lineno,
                                ParseErrorKind::UndeclaredScale,
                                format!("item `{id}` references undeclared scale `{s}`"),
                            ))
                        }
                        None => match scale_order.first() {
                            Some(s) => s.clone(),
                            None => {
                                return Err(ParseError::new(
                                    lineno,
                                    ParseErrorKind::NoScale,
                                    format!("likert item `{id}` appears before any scale"),
                                ))
                            }
                        },
                    };
                    ItemKind::Likert(name)
                };
                seen_items.insert(id.clone());
                items.push(ItemDef {
                    id,
                    prompt,
                    kind,
                    reverse,
                    required: !optional,
                });
            }
            "score" => {
                let mode = match cur.next() {
                    Some(Token::Word(w)) if w == "mean" => ScoreMode::Mean,
                    Some(Token::Word(w)) if w == "sum" => ScoreMode::Sum,
                    _ => return Err(cur.syntax("expected `mean` or `sum` after `score`")),
                };
                cur.end()?;
                if score.is_some() {
                    return Err(ParseError::new(
                        lineno,
                        ParseErrorKind::DuplicateScore,
                        "duplicate score declaration",
                    ));
                }
                score = Some((mode, lineno));
            }
            other => {
                return Err(ParseError::new(
                    lineno,
                    ParseErrorKind::UnknownKeyword,
                    format!("unknown keyword `{other}`"),
                ))
            }
        }
    }

    let Some((id, version)) = header else {
        return Err(ParseError::new(
            last_line,
            ParseErrorKind::MissingHeader,
            "missing header: first declaration must be `questionnaire \"<id>\" version <n>`",
        ));
    };
    if items.is_empty() {
        return Err(ParseError::new(
            last_line,
            ParseErrorKind::NoItems,
            "questionnaire declares no items",
        ));
    }
    if let Some((_, line)) = score {
        if !items.iter().any(ItemDef::is_likert) {
            return Err(ParseError::new(
                line,
                ParseErrorKind::ScoreWithoutLikert,
                "`score` declared but there are no likert items",
            ));
        }
    }

    Ok(QuestionnaireDef {
        id,
        version,
        scales,
        scale_order,
        items,
        score_mode: score.map(|(m, _)| m).unwrap_or_default(),
    })
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders a definition back to canonical source. Every item names its scale
/// explicitly, so the output does not depend on default-scale resolution.
pub fn serialize_questionnaire(def: &QuestionnaireDef) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "questionnaire {} version {}", quote(&def.id), def.version);
    for name in &def.scale_order {
        let s = &def.scales[name];
        let _ = write!(out, "scale {} likert {}..{}", s.name, s.lo, s.hi);
        if let Some(labels) = &s.labels {
            out.push_str(" labels");
            for l in labels {
                out.push(' ');
                out.push_str(&quote(l));
            }
        }
        out.push('\n');
    }
    for item in &def.items {
        let _ = write!(out, "item {} {}", item.id, quote(&item.prompt));
        match &item.kind {
            ItemKind::Likert(s) => {
                let _ = write!(out, " scale {s}");
                if item.reverse {
                    out.push_str(" reverse");
                }
            }
            ItemKind::Text => out.push_str(" text"),
        }
        if !item.required {
            out.push_str(" optional");
        }
        out.push('\n');
    }
    if def.items.iter().any(ItemDef::is_likert) {
        let mode = match def.score_mode {
            ScoreMode::Mean => "mean",
            ScoreMode::Sum => "sum",
        };
        let _ = writeln!(out, "score {mode}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "questionnaire \"m\" version 1\n\
                           scale s likert 1..5\n\
                           item q1 \"One\"\n\
                           item q2 \"Two\"\n";

    #[test]
    fn minimal_source() {
        let def = parse_questionnaire(MINIMAL).unwrap();
        assert_eq!(def.items.len(), 2);
        assert_eq!(def.score_mode, ScoreMode::Mean);
        assert_eq!(def.items[0].kind, ItemKind::Likert("s".into()));
        assert!(def.items.iter().all(|i| i.required && !i.reverse));
    }

    #[test]
    fn duplicate_item_reports_second_line() {
        let src = format!("{MINIMAL}item q1 \"again\"\n");
        let err = parse_questionnaire(&src).unwrap_err();
        assert_eq!(err.line, 5);
        assert_eq!(err.kind, ParseErrorKind::DuplicateItem);
        assert!(err.message.contains("duplicate item id"));
    }

    #[test]
    fn range_tokenizing() {
        let toks = tokenize("scale s likert -3..3", 1).unwrap();
        assert_eq!(
            toks[3..],
            [
                Token::Word("-3".into()),
                Token::Range,
                Token::Word("3".into())
            ]
        );
    }

    #[test]
    fn comment_inside_string_is_literal() {
        let toks = tokenize("item a \"x # y\" # gone", 1).unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[2], Token::Str("x # y".into()));
    }

    #[test]
    fn error_classes() {
        let cases: &[(&str, usize, ParseErrorKind)] = &[
            ("", 1, ParseErrorKind::MissingHeader),
            ("scale s likert 1..2\n", 1, ParseErrorKind::MissingHeader),
            ("questionnaire \"a\" version 1\nfoo\n", 2, ParseErrorKind::UnknownKeyword),
            (
                "questionnaire \"a\" version 1\nscale s likert 1..2\nitem a \"x\" scale t\n",
                3,
                ParseErrorKind::UndeclaredScale,
            ),
            (
                "questionnaire \"a\" version 1\nitem a \"x\" reverse text\n",
                2,
                ParseErrorKind::ReverseOnText,
            ),
            ("questionnaire \"a\" version 1\n", 1, ParseErrorKind::NoItems),
            (
                "questionnaire \"a\" version 1\nscale s likert 2..2\n",
                2,
                ParseErrorKind::BadScaleRange,
            ),
            (
                "questionnaire \"a\" version 1\nscale s likert 1..2 labels \"x\"\n",
                2,
                ParseErrorKind::LabelCount,
            ),
            (
                "questionnaire \"a\" version 1\nitem a \"x\" scale\n",
                2,
                ParseErrorKind::Syntax,
            ),
            (
                "questionnaire \"a\" version 1\nitem a \"x\" reverse reverse\n",
                2,
                ParseErrorKind::Syntax,
            ),
            (
                "questionnaire \"a\" version 1\nitem a \"x\" text\nscore mean\n",
                3,
                ParseErrorKind::ScoreWithoutLikert,
            ),
            ("questionnaire \"a\" version x\n", 1, ParseErrorKind::Syntax),
            ("questionnaire \"\" version 1\n", 1, ParseErrorKind::Syntax),
            ("\"stray\"\n", 1, ParseErrorKind::Syntax),
        ];
        for (src, line, kind) in cases {
            let err = parse_questionnaire(src).unwrap_err();
            assert_eq!((err.line, err.kind), (*line, *kind), "source: {src:?} -> {err}");
        }
    }

    #[test]
    fn serializer_output_is_canonical() {
        let def = parse_questionnaire(MINIMAL).unwrap();
        let text = serialize_questionnaire(&def);
        assert_eq!(
            text,
            "questionnaire \"m\" version 1\n\
             scale s likert 1..5\n\
             item q1 \"One\" scale s\n\
             item q2 \"Two\" scale s\n\
             score mean\n"
        );
        assert_eq!(serialize_questionnaire(&parse_questionnaire(&text).unwrap()), text);
    }
}
