//! Decoding of raw string definitions into concrete byte patterns.
//!
//! Text strings support the escape set `\"`, `\\`, `\t`, `\n`, `\r`, `\xNN`.
//! Hex strings decode fixed byte pairs and `?` nibble wildcards into a
//! pattern plus a nibble mask (`{ 4D ?? 5A }` gives pattern `4D 00 5A`, mask
//! `FF 00 FF`). Anything outside the supported subset (regexes, hex jumps and
//! alternations, xor/base64 modifiers, undecodable escapes) is skipped with a
//! recorded reason rather than guessed at.

use sha2::{Digest, Sha256};

use super::parser::SourceEncoding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SigKind {
    Text,
    HexFixed,
    HexWild,
}

impl SigKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SigKind::Text => "TEXT",
            SigKind::HexFixed => "HEX_FIXED",
            SigKind::HexWild => "HEX_WILD",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "TEXT" => Some(SigKind::Text),
            "HEX_FIXED" => Some(SigKind::HexFixed),
            "HEX_WILD" => Some(SigKind::HexWild),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Modifiers {
    pub nocase: bool,
    pub wide: bool,
    pub ascii: bool,
    pub fullword: bool,
}

impl Modifiers {
    pub fn names(self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.ascii {
            v.push("ASCII");
        }
        if self.fullword {
            v.push("FULLWORD");
        }
        if self.nocase {
            v.push("NOCASE");
        }
        if self.wide {
            v.push("WIDE");
        }
        v
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Option<Self> {
        let mut m = Modifiers::default();
        for n in names {
            match n.as_ref() {
                "ASCII" => m.ascii = true,
                "FULLWORD" => m.fullword = true,
                "NOCASE" => m.nocase = true,
                "WIDE" => m.wide = true,
                _ => return None,
            }
        }
        Some(m)
    }

    fn bits(self) -> u8 {
        (self.nocase as u8)
            | (self.wide as u8) << 1
            | (self.ascii as u8) << 2
            | (self.fullword as u8) << 3
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SkipReason {
    Regex,
    HexJump,
    HexAlternation,
    UnknownModifier(String),
    ModifierOnHex(String),
    UnsupportedEscape(String),
    EmptyPattern,
    NoFixedBytes,
    Malformed(String),
}

impl SkipReason {
    /// Stable bucket name used for aggregate counts in harvest reports.
    pub fn bucket(&self) -> &'static str {
        match self {
            SkipReason::Regex => "regex",
            SkipReason::HexJump => "hex_jump",
            SkipReason::HexAlternation => "hex_alternation",
            SkipReason::UnknownModifier(_) => "unknown_modifier",
            SkipReason::ModifierOnHex(_) => "modifier_on_hex",
            SkipReason::UnsupportedEscape(_) => "unsupported_escape",
            SkipReason::EmptyPattern => "empty_pattern",
            SkipReason::NoFixedBytes => "no_fixed_bytes",
            SkipReason::Malformed(_) => "malformed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedPattern {
    pub kind: SigKind,
    pub pattern: Vec<u8>,
    /// Nibble mask for `HexWild` (0xFF = fixed byte, 0x00 = wildcard byte,
    /// 0xF0/0x0F = one fixed nibble); `None` for fully fixed kinds.
    pub mask: Option<Vec<u8>>,
    pub modifiers: Modifiers,
}

impl DecodedPattern {
    /// Stable content-derived identifier: first 8 bytes of a SHA-256 over a
    /// canonical encoding of (kind, pattern, mask, modifiers).
    pub fn id(&self) -> u64 {
        signature_id(
            self.kind,
            &self.pattern,
            self.mask.as_deref(),
            self.modifiers,
        )
    }
}

pub fn signature_id(kind: SigKind, pattern: &[u8], mask: Option<&[u8]>, mods: Modifiers) -> u64 {
    let mut h = Sha256::new();
    h.update([match kind {
        SigKind::Text => 0u8,
        SigKind::HexFixed => 1,
        SigKind::HexWild => 2,
    }]);
    h.update((pattern.len() as u32).to_le_bytes());
    h.update(pattern);
    match mask {
        Some(m) => {
            h.update([1u8]);
            h.update(m);
        }
        None => h.update([0u8]),
    }
    h.update([mods.bits()]);
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecodeOutcome {
    Decoded(DecodedPattern),
    Skipped(SkipReason),
}

/// Decodes one raw `$ident = ...` right-hand side. The text is interpreted
/// with UTF-8 byte semantics; rule files that fell back to Latin-1 go through
/// [`decode_definition`] with their source encoding so every original byte is
/// preserved.
pub fn decode_sub_signature(_identifier: &str, raw_definition: &str) -> DecodeOutcome {
    decode_definition(raw_definition, SourceEncoding::Utf8)
}

pub(crate) fn decode_definition(raw: &str, encoding: SourceEncoding) -> DecodeOutcome {
    let bytes = match encoding {
        SourceEncoding::Utf8 => raw.as_bytes().to_vec(),
        SourceEncoding::Latin1 => raw
            .chars()
            .map(|c| {
                let cp = c as u32;
                debug_assert!(cp <= 0xFF, "latin-1 text cannot hold {cp:#x}");
                cp as u8
            })
            .collect(),
    };
    decode_bytes(&bytes)
}

fn decode_bytes(raw: &[u8]) -> DecodeOutcome {
    use DecodeOutcome::{Decoded, Skipped};
    let raw = trim(raw);
    let Some(&first) = raw.first() else {
        return Skipped(SkipReason::Malformed("empty definition".into()));
    };
    match first {
        b'"' => {
            let Some(close) = find_closing_quote(raw) else {
                return Skipped(SkipReason::Malformed("unterminated string".into()));
            };
            let mods = match parse_modifier_tokens(&raw[close + 1..]) {
                Ok(m) => m,
                Err(reason) => return Skipped(reason),
            };
            let pattern = match unescape_text(&raw[1..close]) {
                Ok(p) => p,
                Err(reason) => return Skipped(reason),
            };
            if pattern.is_empty() {
                return Skipped(SkipReason::EmptyPattern);
            }
            let mut modifiers = mods;
            // Plain matching is the default; an explicit `ascii` only carries
            // information next to `wide`, so it is dropped otherwise and
            // identical matchers share an id.
            if !modifiers.wide {
                modifiers.ascii = false;
            }
            Decoded(DecodedPattern {
                kind: SigKind::Text,
                pattern,
                mask: None,
                modifiers,
            })
        }
        b'{' => {
            let Some(close) = raw.iter().rposition(|&b| b == b'}') else {
                return Skipped(SkipReason::Malformed("unterminated hex string".into()));
            };
            if let Err(reason) = check_hex_modifier_tokens(&raw[close + 1..]) {
                return Skipped(reason);
            }
            match decode_hex_body(&raw[1..close]) {
                Ok((pattern, mask)) => {
                    if pattern.is_empty() {
                        return Skipped(SkipReason::EmptyPattern);
                    }
                    if mask.iter().all(|&m| m == 0xFF) {
                        Decoded(DecodedPattern {
                            kind: SigKind::HexFixed,
                            pattern,
                            mask: None,
                            modifiers: Modifiers::default(),
                        })
                    } else {
                        if !mask.iter().any(|&m| m == 0xFF) {
                            return Skipped(SkipReason::NoFixedBytes);
                        }
                        Decoded(DecodedPattern {
                            kind: SigKind::HexWild,
                            pattern,
                            mask: Some(mask),
                            modifiers: Modifiers::default(),
                        })
                    }
                }
                Err(reason) => Skipped(reason),
            }
        }
        b'/' => Skipped(SkipReason::Regex),
        _ => Skipped(SkipReason::Malformed("unrecognized definition".into())),
    }
}

fn trim(mut b: &[u8]) -> &[u8] {
    while b.first().is_some_and(|c| c.is_ascii_whitespace()) {
        b = &b[1..];
    }
    while b.last().is_some_and(|c| c.is_ascii_whitespace()) {
        b = &b[..b.len() - 1];
    }
    b
}

fn find_closing_quote(raw: &[u8]) -> Option<usize> {
    let mut i = 1;
    while i < raw.len() {
        match raw[i] {
            b'\\' => i += 2,
            b'"' => return Some(i),
            _ => i += 1,
        }
    }
    None
}

fn unescape_text(body: &[u8]) -> Result<Vec<u8>, SkipReason> {
    let mut out = Vec::with_capacity(body.len());
    let mut i = 0;
    while i < body.len() {
        let b = body[i];
        if b != b'\\' {
            out.push(b);
            i += 1;
            continue;
        }
        let Some(&esc) = body.get(i + 1) else {
            return Err(SkipReason::Malformed("dangling backslash".into()));
        };
        match esc {
            b'"' => out.push(b'"'),
            b'\\' => out.push(b'\\'),
            b't' => out.push(b'\t'),
            b'n' => out.push(b'\n'),
            b'r' => out.push(b'\r'),
            b'x' => {
                let hi = body.get(i + 2).copied().and_then(hex_val);
                let lo = body.get(i + 3).copied().and_then(hex_val);
                match (hi, lo) {
                    (Some(h), Some(l)) => {
                        out.push(h << 4 | l);
                        i += 4;
                        continue;
                    }
                    _ => {
                        return Err(SkipReason::UnsupportedEscape("\\x without two hex digits".into()))
                    }
                }
            }
            other => {
                return Err(SkipReason::UnsupportedEscape(format!(
                    "\\{}",
                    other as char
                )))
            }
        }
        i += 2;
    }
    Ok(out)
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn decode_hex_body(body: &[u8]) -> Result<(Vec<u8>, Vec<u8>), SkipReason> {
    let mut pattern = Vec::new();
    let mut mask = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let b = body[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        // Comments are legal inside hex strings.
        if b == b'/' && body.get(i + 1) == Some(&b'/') {
            while i < body.len() && body[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if b == b'/' && body.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < body.len() && !(body[i] == b'*' && body.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i = (i + 2).min(body.len());
            continue;
        }
        match b {
            b'[' => return Err(SkipReason::HexJump),
            b'(' | b'|' | b')' => return Err(SkipReason::HexAlternation),
            _ => {}
        }
        let hi = nibble(b).ok_or_else(|| {
            SkipReason::Malformed(format!("unexpected hex token {:?}", b as char))
        })?;
        let lo_byte = *body
            .get(i + 1)
            .ok_or_else(|| SkipReason::Malformed("odd nibble count".into()))?;
        let lo = nibble(lo_byte).ok_or_else(|| {
            SkipReason::Malformed(format!("unexpected hex token {:?}", lo_byte as char))
        })?;
        let m = (if hi.1 { 0xF0 } else { 0x00 }) | (if lo.1 { 0x0F } else { 0x00 });
        let v = (hi.0 << 4 | lo.0) & m;
        pattern.push(v);
        mask.push(m);
        i += 2;
    }
    Ok((pattern, mask))
}

/// Returns (value, fixed?) for a hex-string nibble; `?` is a wildcard.
fn nibble(b: u8) -> Option<(u8, bool)> {
    if b == b'?' {
        Some((0, false))
    } else {
        hex_val(b).map(|v| (v, true))
    }
}

fn parse_modifier_tokens(rest: &[u8]) -> Result<Modifiers, SkipReason> {
    let mut mods = Modifiers::default();
    for token in tokenize_modifiers(rest)? {
        match token.name.as_str() {
            "nocase" if !token.has_args => mods.nocase = true,
            "wide" if !token.has_args => mods.wide = true,
            "ascii" if !token.has_args => mods.ascii = true,
            "fullword" if !token.has_args => mods.fullword = true,
            _ => return Err(SkipReason::UnknownModifier(token.name)),
        }
    }
    Ok(mods)
}

/// Hex strings accept no matching modifiers in this subset; any token after
/// the closing brace removes the entry from the catalog.
fn check_hex_modifier_tokens(rest: &[u8]) -> Result<(), SkipReason> {
    match tokenize_modifiers(rest)?.into_iter().next() {
        Some(t) => Err(SkipReason::ModifierOnHex(t.name)),
        None => Ok(()),
    }
}

struct ModifierToken {
    name: String,
    has_args: bool,
}

fn tokenize_modifiers(rest: &[u8]) -> Result<Vec<ModifierToken>, SkipReason> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < rest.len() {
        let b = rest[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if !(b.is_ascii_alphanumeric() || b == b'_') {
            return Err(SkipReason::Malformed(format!(
                "unexpected token {:?} after definition",
                b as char
            )));
        }
        let start = i;
        while i < rest.len() && (rest[i].is_ascii_alphanumeric() || rest[i] == b'_') {
            i += 1;
        }
        let name: String = rest[start..i].iter().map(|&c| c as char).collect();
        let mut j = i;
        while j < rest.len() && rest[j].is_ascii_whitespace() {
            j += 1;
        }
        let mut has_args = false;
        if rest.get(j) == Some(&b'(') {
            let mut depth = 0usize;
            while j < rest.len() {
                match rest[j] {
                    b'(' => depth += 1,
                    b')' => {
                        depth -= 1;
                        if depth == 0 {
                            j += 1;
                            break;
                        }
                    }
                    _ => {}
                }
                j += 1;
            }
            has_args = true;
            i = j;
        }
        out.push(ModifierToken { name, has_args });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(def: &str) -> DecodeOutcome {
        decode_sub_signature("$t", def)
    }

    fn expect_pattern(def: &str) -> DecodedPattern {
        match decode(def) {
            DecodeOutcome::Decoded(p) => p,
            DecodeOutcome::Skipped(r) => panic!("expected decode of {def:?}, got skip {r:?}"),
        }
    }

    fn expect_skip(def: &str) -> SkipReason {
        match decode(def) {
            DecodeOutcome::Skipped(r) => r,
            DecodeOutcome::Decoded(p) => panic!("expected skip of {def:?}, got {p:?}"),
        }
    }

    #[test]
    fn text_escapes_decode() {
        let p = expect_pattern(r#""a\"b\\c\td\ne\rf\x00g""#);
        assert_eq!(p.kind, SigKind::Text);
        assert_eq!(p.pattern, b"a\"b\\c\td\ne\rf\x00g");
        assert_eq!(p.mask, None);
    }

    #[test]
    fn unknown_escape_is_skipped() {
        assert_eq!(
            expect_skip(r#""bad\qescape""#),
            SkipReason::UnsupportedEscape("\\q".into())
        );
        assert!(matches!(
            expect_skip(r#""bad\x1""#),
            SkipReason::UnsupportedEscape(_)
        ));
    }

    #[test]
    fn modifiers_parse_and_canonicalize() {
        let p = expect_pattern(r#""x" nocase wide fullword"#);
        assert!(p.modifiers.nocase && p.modifiers.wide && p.modifiers.fullword);
        assert!(!p.modifiers.ascii);
        // ascii alone is the default matcher and is normalized away
        let plain = expect_pattern(r#""x""#);
        let explicit = expect_pattern(r#""x" ascii"#);
        assert_eq!(plain.id(), explicit.id());
        // but next to wide it changes which forms match
        let both = expect_pattern(r#""x" wide ascii"#);
        let wide_only = expect_pattern(r#""x" wide"#);
        assert_ne!(both.id(), wide_only.id());
    }

    #[test]
    fn xor_and_base64_are_skipped() {
        assert_eq!(
            expect_skip(r#""k" xor"#),
            SkipReason::UnknownModifier("xor".into())
        );
        assert_eq!(
            expect_skip(r#""k" xor(0x01-0xff)"#),
            SkipReason::UnknownModifier("xor".into())
        );
        assert_eq!(
            expect_skip(r#""k" base64wide"#),
            SkipReason::UnknownModifier("base64wide".into())
        );
        assert_eq!(
            expect_skip(r#""k" private"#),
            SkipReason::UnknownModifier("private".into())
        );
    }

    #[test]
    fn fixed_hex_decodes() {
        let p = expect_pattern("{ 4D 5A 90 00 }");
        assert_eq!(p.kind, SigKind::HexFixed);
        assert_eq!(p.pattern, vec![0x4D, 0x5A, 0x90, 0x00]);
        assert_eq!(p.mask, None);
    }

    #[test]
    fn nibble_wildcards_build_mask() {
        let p = expect_pattern("{ 4D ?? 5A }");
        assert_eq!(p.kind, SigKind::HexWild);
        assert_eq!(p.pattern, vec![0x4D, 0x00, 0x5A]);
        assert_eq!(p.mask, Some(vec![0xFF, 0x00, 0xFF]));

        let p = expect_pattern("{ 4? ?A FF }");
        assert_eq!(p.pattern, vec![0x40, 0x0A, 0xFF]);
        assert_eq!(p.mask, Some(vec![0xF0, 0x0F, 0xFF]));
    }

    #[test]
    fn hex_jumps_and_alternations_skip() {
        assert_eq!(expect_skip("{ 4D [2-4] 5A }"), SkipReason::HexJump);
        assert_eq!(expect_skip("{ 4D ( 5A | 5B ) }"), SkipReason::HexAlternation);
    }

    #[test]
    fn hex_without_fixed_byte_skips() {
        assert_eq!(expect_skip("{ ?? ?? }"), SkipReason::NoFixedBytes);
        assert_eq!(expect_skip("{ 4? ?A }"), SkipReason::NoFixedBytes);
    }

    #[test]
    fn regex_definitions_skip() {
        assert_eq!(expect_skip("/evil[0-9]{2}/"), SkipReason::Regex);
    }

    #[test]
    fn empty_patterns_skip() {
        assert_eq!(expect_skip("\"\""), SkipReason::EmptyPattern);
        assert_eq!(expect_skip("{ }"), SkipReason::EmptyPattern);
    }

    #[test]
    fn modifier_on_hex_skips() {
        assert_eq!(
            expect_skip("{ 4D 5A } nocase"),
            SkipReason::ModifierOnHex("nocase".into())
        );
    }

    #[test]
    fn ids_depend_on_all_content() {
        let a = expect_pattern("\"abc\"");
        let b = expect_pattern("\"abd\"");
        let c = expect_pattern("\"abc\" nocase");
        assert_ne!(a.id(), b.id());
        assert_ne!(a.id(), c.id());
        // Same bytes, different kind.
        let t = expect_pattern("\"MZ\"");
        let h = expect_pattern("{ 4D 5A }");
        assert_eq!(t.pattern, h.pattern);
        assert_ne!(t.id(), h.id());
    }

    #[test]
    fn masked_nibbles_store_canonical_bytes() {
        // Wildcard nibbles are cleared in the stored pattern, so equal
        // matchers written with different junk nibbles share an id.
        let p = expect_pattern("{ 4? FF }");
        assert_eq!(p.pattern, vec![0x40, 0xFF]);
        assert_eq!(p.mask, Some(vec![0xF0, 0xFF]));
    }
}
