//! Tolerant parser for the subset of YARA rule files we harvest from.
//!
//! The parser works directly on raw bytes so that rule files in either UTF-8
//! or Latin-1 round-trip without corruption. It recognizes `rule` blocks,
//! splits them into `meta` / `strings` / `condition` sections, and extracts
//! `$ident = <definition> [modifiers]` entries verbatim. Everything else
//! (imports, includes, comments) is skipped. A malformed rule is dropped with
//! a diagnostic; the rest of the file still parses.
//!
//! Brace matching is string-, regex-, and comment-aware. Text strings and
//! regexes cannot span lines in the source grammar, so an unterminated quote
//! is closed at the newline (and the offending rule later rejected) instead
//! of swallowing the remainder of the file.

use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceEncoding {
    Utf8,
    Latin1,
}

/// One `$ident = ...` entry, with the right-hand side kept verbatim
/// (definition plus any trailing modifier tokens).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawString {
    pub identifier: String,
    pub definition: String,
}

#[derive(Clone, Debug)]
pub struct RawRule {
    pub name: String,
    pub tags: Vec<String>,
    pub strings: Vec<RawString>,
    pub condition: String,
    pub source_file: PathBuf,
    pub encoding: SourceEncoding,
}

#[derive(Debug, Default)]
pub struct FileParse {
    pub rules: Vec<RawRule>,
    pub diagnostics: Vec<String>,
}

/// Maps bytes to text: exact for valid UTF-8 input, Latin-1 otherwise.
pub(crate) fn bytes_to_text(bytes: &[u8], encoding: SourceEncoding) -> String {
    match encoding {
        SourceEncoding::Utf8 => String::from_utf8_lossy(bytes).into_owned(),
        SourceEncoding::Latin1 => bytes.iter().map(|&b| b as char).collect(),
    }
}

pub fn parse_rule_file(path: &Path, bytes: &[u8]) -> FileParse {
    let encoding = if std::str::from_utf8(bytes).is_ok() {
        SourceEncoding::Utf8
    } else {
        SourceEncoding::Latin1
    };
    let mut out = FileParse::default();
    let mut s = Scanner::new(bytes);
    loop {
        s.skip_trivia();
        if s.eof() {
            break;
        }
        if s.eat_word("import") || s.eat_word("include") {
            s.skip_line();
            continue;
        }
        while s.eat_word("private") || s.eat_word("global") {
            s.skip_trivia();
        }
        if s.eat_word("rule") {
            let at = s.line();
            match parse_rule(&mut s, path, encoding) {
                Ok(rule) => out.rules.push(rule),
                Err(msg) => out.diagnostics.push(format!(
                    "{}:{}: skipped rule: {}",
                    path.display(),
                    at,
                    msg
                )),
            }
        } else {
            out.diagnostics.push(format!(
                "{}:{}: unexpected token outside any rule",
                path.display(),
                s.line()
            ));
            s.skip_line();
        }
    }
    out
}

fn parse_rule(
    s: &mut Scanner,
    path: &Path,
    encoding: SourceEncoding,
) -> Result<RawRule, String> {
    s.skip_trivia();
    let name = s
        .parse_ident()
        .ok_or_else(|| "missing rule name".to_string())?;
    let mut tags = Vec::new();
    s.skip_trivia();
    if s.eat_byte(b':') {
        loop {
            s.skip_trivia();
            match s.parse_ident() {
                Some(t) => tags.push(t),
                None => break,
            }
        }
    }
    s.skip_trivia();
    if !s.eat_byte(b'{') {
        // Leave the cursor where it is; the top-level loop resynchronizes.
        s.skip_line();
        return Err(format!("rule {name}: missing body"));
    }
    let body = s.consume_balanced_body()?;

    let sections = split_sections(body);
    let mut strings = Vec::new();
    if let Some(span) = sections.strings {
        strings = parse_strings_section(&body[span.0..span.1], encoding)
            .map_err(|e| format!("rule {name}: {e}"))?;
    }
    let condition = match sections.condition {
        Some(span) => bytes_to_text(trim_bytes(&body[span.0..span.1]), encoding),
        None => String::new(),
    };
    Ok(RawRule {
        name,
        tags,
        strings,
        condition,
        source_file: path.to_path_buf(),
        encoding,
    })
}

struct Sections {
    strings: Option<(usize, usize)>,
    condition: Option<(usize, usize)>,
}

/// Locates the `strings:` and `condition:` sections of a rule body, walking
/// the same lexical state machine as the body scanner so keywords inside
/// string literals, regexes, or comments are never mistaken for sections.
fn split_sections(body: &[u8]) -> Sections {
    let mut marks: Vec<(&'static str, usize, usize)> = Vec::new();
    let mut lex = Lexer::new(body);
    while let Some(word) = lex.next_code_word() {
        let kw = match word.text {
            b"meta" => "meta",
            b"strings" => "strings",
            b"condition" => "condition",
            _ => continue,
        };
        // Only a section header when directly followed by ':'.
        let mut j = word.end;
        while j < body.len() && (body[j] == b' ' || body[j] == b'\t') {
            j += 1;
        }
        if j < body.len() && body[j] == b':' {
            marks.push((kw, word.start, j + 1));
        }
    }
    let mut strings = None;
    let mut condition = None;
    for (i, &(kw, _, content_start)) in marks.iter().enumerate() {
        let end = marks
            .get(i + 1)
            .map(|&(_, next_start, _)| next_start)
            .unwrap_or(body.len());
        match kw {
            "strings" if strings.is_none() => strings = Some((content_start, end)),
            "condition" if condition.is_none() => condition = Some((content_start, end)),
            _ => {}
        }
    }
    Sections { strings, condition }
}

fn parse_strings_section(
    section: &[u8],
    encoding: SourceEncoding,
) -> Result<Vec<RawString>, String> {
    let mut s = Scanner::new(section);
    let mut out = Vec::new();
    loop {
        s.skip_trivia();
        if s.eof() {
            break;
        }
        if !s.eat_byte(b'$') {
            return Err(format!(
                "expected a $identifier in the strings section (line {})",
                s.line()
            ));
        }
        let mut ident = String::from("$");
        ident.push_str(&s.take_word_text());
        s.skip_trivia();
        if !s.eat_byte(b'=') {
            return Err(format!("string {ident}: missing '='"));
        }
        s.skip_trivia();
        let def_start = s.pos;
        match s.peek() {
            Some(b'"') => s
                .consume_quoted()
                .map_err(|e| format!("string {ident}: {e}"))?,
            Some(b'{') => s
                .consume_hex_block()
                .map_err(|e| format!("string {ident}: {e}"))?,
            Some(b'/') => s
                .consume_regex()
                .map_err(|e| format!("string {ident}: {e}"))?,
            _ => return Err(format!("string {ident}: unrecognized definition")),
        }
        let mut def_end = s.pos;
        // Trailing modifier tokens, e.g. `nocase wide` or `xor(0x01-0xff)`,
        // run until the next `$entry` or the end of the section.
        loop {
            let save = s.pos;
            s.skip_trivia();
            if s.eof() || s.peek() == Some(b'$') {
                s.pos = save;
                break;
            }
            if s.take_word_text().is_empty() {
                s.pos = save;
                break;
            }
            s.skip_trivia();
            if s.peek() == Some(b'(') {
                s.consume_paren_group()
                    .map_err(|e| format!("string {ident}: {e}"))?;
            }
            def_end = s.pos;
        }
        let definition = bytes_to_text(trim_bytes(&section[def_start..def_end]), encoding);
        out.push(RawString {
            identifier: ident,
            definition,
        });
    }
    Ok(out)
}

fn trim_bytes(mut b: &[u8]) -> &[u8] {
    while let Some((&f, rest)) = b.split_first() {
        if f.is_ascii_whitespace() {
            b = rest;
        } else {
            break;
        }
    }
    while let Some((&l, rest)) = b.split_last() {
        if l.is_ascii_whitespace() {
            b = rest;
        } else {
            break;
        }
    }
    b
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

struct Scanner<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a [u8]) -> Self {
        Scanner { src, pos: 0 }
    }

    fn eof(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn line(&self) -> usize {
        1 + self.src[..self.pos.min(self.src.len())]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
    }

    fn eat_byte(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn skip_line(&mut self) {
        while let Some(b) = self.peek() {
            self.pos += 1;
            if b == b'\n' {
                break;
            }
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'/') if self.peek_at(1) == Some(b'/') => self.skip_line(),
                Some(b'/') if self.peek_at(1) == Some(b'*') => {
                    self.pos += 2;
                    while !self.eof() {
                        if self.peek() == Some(b'*') && self.peek_at(1) == Some(b'/') {
                            self.pos += 2;
                            break;
                        }
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn take_word_text(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if is_word_byte(b)) {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .iter()
            .map(|&b| b as char)
            .collect()
    }

    /// Consumes `word` only when it stands alone (word boundary on both sides).
    fn eat_word(&mut self, word: &str) -> bool {
        let w = word.as_bytes();
        if self.src.len() - self.pos < w.len() || &self.src[self.pos..self.pos + w.len()] != w {
            return false;
        }
        if self.pos > 0 && is_word_byte(self.src[self.pos - 1]) {
            return false;
        }
        if matches!(self.src.get(self.pos + w.len()), Some(&b) if is_word_byte(b)) {
            return false;
        }
        self.pos += w.len();
        true
    }

    fn parse_ident(&mut self) -> Option<String> {
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
            _ => return None,
        }
        Some(self.take_word_text())
    }

    /// Consumes a double-quoted literal (cursor on the opening quote).
    /// Text strings cannot span lines; a newline means the quote was never
    /// closed.
    fn consume_quoted(&mut self) -> Result<(), String> {
        debug_assert_eq!(self.peek(), Some(b'"'));
        self.pos += 1;
        while let Some(b) = self.peek() {
            match b {
                b'\\' => self.pos += 2,
                b'"' => {
                    self.pos += 1;
                    return Ok(());
                }
                b'\n' => return Err("unterminated string literal".into()),
                _ => self.pos += 1,
            }
        }
        Err("unterminated string literal".into())
    }

    fn consume_hex_block(&mut self) -> Result<(), String> {
        debug_assert_eq!(self.peek(), Some(b'{'));
        self.pos += 1;
        let mut depth = 1usize;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                _ => {}
            }
        }
        Err("unterminated hex string".into())
    }

    fn consume_regex(&mut self) -> Result<(), String> {
        debug_assert_eq!(self.peek(), Some(b'/'));
        self.pos += 1;
        let mut in_class = false;
        while let Some(b) = self.peek() {
            match b {
                b'\\' => self.pos += 2,
                b'[' => {
                    in_class = true;
                    self.pos += 1;
                }
                b']' if in_class => {
                    in_class = false;
                    self.pos += 1;
                }
                b'/' if !in_class => {
                    self.pos += 1;
                    // Trailing flags such as `i` or `s`.
                    self.take_word_text();
                    return Ok(());
                }
                b'\n' => return Err("unterminated regex literal".into()),
                _ => self.pos += 1,
            }
        }
        Err("unterminated regex literal".into())
    }

    fn consume_paren_group(&mut self) -> Result<(), String> {
        debug_assert_eq!(self.peek(), Some(b'('));
        self.pos += 1;
        let mut depth = 1usize;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'(' => depth += 1,
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                _ => {}
            }
        }
        Err("unterminated modifier argument list".into())
    }

    /// Consumes a rule body after its opening `{`, returning the bytes up to
    /// the matching `}`. Comments, string literals, and regexes are honored
    /// so their braces never count toward nesting.
    fn consume_balanced_body(&mut self) -> Result<&'a [u8], String> {
        let start = self.pos;
        let mut depth = 1usize;
        let mut lex = Lexer::new(&self.src[start..]);
        while let Some(ev) = lex.next_event() {
            match ev {
                LexEvent::Open => depth += 1,
                LexEvent::Close => {
                    depth -= 1;
                    if depth == 0 {
                        let body = &self.src[start..start + lex.pos - 1];
                        self.pos = start + lex.pos;
                        return Ok(body);
                    }
                }
            }
        }
        self.pos = self.src.len();
        Err("unterminated rule body".into())
    }
}

/// Lexical walker shared by body capture and section splitting: tracks
/// string/regex/comment state and reports only code-level events.
struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    last_sig: u8,
    last_word_matches: bool,
}

enum LexEvent {
    Open,
    Close,
}

struct CodeWord<'a> {
    text: &'a [u8],
    start: usize,
    end: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a [u8]) -> Self {
        Lexer {
            src,
            pos: 0,
            last_sig: 0,
            last_word_matches: false,
        }
    }

    fn regex_allowed(&self) -> bool {
        self.last_sig == b'=' || self.last_word_matches
    }

    /// Advances one lexical item, returning brace events from code context.
    fn step(&mut self) -> Option<Option<LexEvent>> {
        let b = *self.src.get(self.pos)?;
        match b {
            b'"' => {
                self.pos += 1;
                while let Some(&c) = self.src.get(self.pos) {
                    match c {
                        b'\\' => self.pos += 2,
                        b'"' => {
                            self.pos += 1;
                            break;
                        }
                        // Unterminated literal: close at end of line so the
                        // rest of the file still lexes.
                        b'\n' => break,
                        _ => self.pos += 1,
                    }
                }
                self.note_sig(b'"');
                Some(None)
            }
            b'/' if self.src.get(self.pos + 1) == Some(&b'/') => {
                while let Some(&c) = self.src.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
                Some(None)
            }
            b'/' if self.src.get(self.pos + 1) == Some(&b'*') => {
                self.pos += 2;
                while self.pos < self.src.len() {
                    if self.src[self.pos] == b'*' && self.src.get(self.pos + 1) == Some(&b'/') {
                        self.pos += 2;
                        break;
                    }
                    self.pos += 1;
                }
                Some(None)
            }
            b'/' if self.regex_allowed() => {
                self.pos += 1;
                let mut in_class = false;
                while let Some(&c) = self.src.get(self.pos) {
                    match c {
                        b'\\' => self.pos += 2,
                        b'[' => {
                            in_class = true;
                            self.pos += 1;
                        }
                        b']' if in_class => {
                            in_class = false;
                            self.pos += 1;
                        }
                        b'/' if !in_class => {
                            self.pos += 1;
                            break;
                        }
                        b'\n' => break,
                        _ => self.pos += 1,
                    }
                }
                self.note_sig(b'/');
                Some(None)
            }
            b'{' => {
                self.pos += 1;
                self.note_sig(b'{');
                Some(Some(LexEvent::Open))
            }
            b'}' => {
                self.pos += 1;
                self.note_sig(b'}');
                Some(Some(LexEvent::Close))
            }
            b if is_word_byte(b) => {
                let start = self.pos;
                while matches!(self.src.get(self.pos), Some(&c) if is_word_byte(c)) {
                    self.pos += 1;
                }
                self.last_word_matches = &self.src[start..self.pos] == b"matches";
                self.last_sig = b'a';
                Some(None)
            }
            b => {
                self.pos += 1;
                if !b.is_ascii_whitespace() {
                    self.note_sig(b);
                }
                Some(None)
            }
        }
    }

    fn note_sig(&mut self, b: u8) {
        self.last_sig = b;
        self.last_word_matches = false;
    }

    fn next_event(&mut self) -> Option<LexEvent> {
        loop {
            match self.step()? {
                Some(ev) => return Some(ev),
                None => continue,
            }
        }
    }

    /// Iterates code-context words (used for section-header discovery).
    fn next_code_word(&mut self) -> Option<CodeWord<'a>> {
        loop {
            let b = *self.src.get(self.pos)?;
            if is_word_byte(b) {
                let start = self.pos;
                self.step()?;
                return Some(CodeWord {
                    text: &self.src[start..self.pos],
                    start,
                    end: self.pos,
                });
            }
            self.step()?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> FileParse {
        parse_rule_file(Path::new("test.yar"), src.as_bytes())
    }

    #[test]
    fn parses_basic_rule() {
        let fp = parse(
            r#"
            rule demo : tag1 tag2 {
                meta:
                    author = "nobody"
                strings:
                    $a = "hello" nocase wide
                    $b = { 4D ?? 5A }
                condition:
                    any of them
            }
            "#,
        );
        assert!(fp.diagnostics.is_empty(), "{:?}", fp.diagnostics);
        assert_eq!(fp.rules.len(), 1);
        let r = &fp.rules[0];
        assert_eq!(r.name, "demo");
        assert_eq!(r.tags, vec!["tag1", "tag2"]);
        assert_eq!(r.strings.len(), 2);
        assert_eq!(r.strings[0].identifier, "$a");
        assert_eq!(r.strings[0].definition, "\"hello\" nocase wide");
        assert_eq!(r.strings[1].definition, "{ 4D ?? 5A }");
        assert_eq!(r.condition, "any of them");
    }

    #[test]
    fn braces_in_strings_do_not_end_body() {
        let fp = parse(
            r#"
            rule braces {
                strings:
                    $a = "weird } brace {"
                condition:
                    $a
            }
            rule after { condition: true }
            "#,
        );
        assert_eq!(fp.rules.len(), 2);
        assert_eq!(fp.rules[0].strings[0].definition, "\"weird } brace {\"");
        assert_eq!(fp.rules[1].name, "after");
    }

    #[test]
    fn imports_includes_and_comments_skipped() {
        let fp = parse(
            "import \"pe\"\ninclude \"other.yar\"\n// comment rule fake {}\n/* rule fake2 { } */\nrule real { condition: true }\n",
        );
        assert_eq!(fp.rules.len(), 1);
        assert_eq!(fp.rules[0].name, "real");
        assert!(fp.diagnostics.is_empty());
    }

    #[test]
    fn unterminated_string_skips_only_that_rule() {
        let fp = parse(
            "rule broken {\n strings:\n  $a = \"no end\n condition:\n  $a\n}\nrule fine { strings: $b = \"ok\" condition: $b }\n",
        );
        assert_eq!(fp.rules.len(), 1);
        assert_eq!(fp.rules[0].name, "fine");
        assert_eq!(fp.diagnostics.len(), 1);
        assert!(fp.diagnostics[0].contains("broken") || fp.diagnostics[0].contains("unterminated"));
    }

    #[test]
    fn regex_with_braces_in_condition_is_opaque() {
        let fp = parse(
            "rule re { strings: $a = \"x\" condition: $a and some.field matches /ab{2}[/}]z/ }\nrule next { condition: true }\n",
        );
        assert_eq!(fp.rules.len(), 2);
        assert!(fp.rules[0].condition.contains("matches"));
    }

    #[test]
    fn division_in_condition_is_not_a_regex() {
        let fp = parse("rule div { condition: #a / 2 > 3 }\nrule n2 { condition: true }\n");
        assert_eq!(fp.rules.len(), 2);
        assert_eq!(fp.rules[0].condition, "#a / 2 > 3");
    }

    #[test]
    fn latin1_bytes_survive_round_trip() {
        let mut src = b"rule enc { strings: $a = \"caf".to_vec();
        src.push(0xE9); // Latin-1 e-acute, invalid as UTF-8 here
        src.extend_from_slice(b"\" condition: $a }\n");
        let fp = parse_rule_file(Path::new("latin.yar"), &src);
        assert_eq!(fp.rules.len(), 1);
        assert_eq!(fp.rules[0].encoding, SourceEncoding::Latin1);
        let def = &fp.rules[0].strings[0].definition;
        assert!(def.starts_with("\"caf"));
        assert_eq!(def.chars().nth(4), Some('\u{e9}'));
    }

    #[test]
    fn global_private_prefixes_accepted() {
        let fp = parse("global private rule g { condition: true }\n");
        assert_eq!(fp.rules.len(), 1);
        assert_eq!(fp.rules[0].name, "g");
    }

    #[test]
    fn anonymous_string_identifier_is_bare_dollar() {
        let fp = parse("rule anon { strings: $ = \"x\" condition: any of them }\n");
        assert_eq!(fp.rules.len(), 1);
        assert_eq!(fp.rules[0].strings[0].identifier, "$");
    }

    #[test]
    fn xor_modifier_with_arguments_is_captured_verbatim() {
        let fp = parse("rule x { strings: $a = \"k\" xor(0x01-0xff) condition: $a }\n");
        assert_eq!(fp.rules[0].strings[0].definition, "\"k\" xor(0x01-0xff)");
    }
}
