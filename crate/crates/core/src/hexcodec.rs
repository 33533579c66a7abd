//! Binary/hex conversion, length gating, prompt rendering and sanitization of
//! mutator responses.

use std::fmt;

/// Default cap on combined hex characters for one seed (or seed pair).
pub const DEFAULT_MAX_HEX_LEN: usize = 4096;

/// Formats that travel as raw text inside prompts instead of hex.
pub const TEXT_FORMATS: [&str; 5] = ["JSON", "XML", "LUA", "PHP", "SQL"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HexError {
    #[error("malformed hex: {0}")]
    MalformedHex(String),
    #[error("payload needs {needed} hex characters, limit is {limit}")]
    LengthGate { needed: usize, limit: usize },
    #[error("prompt template: {0}")]
    Template(String),
}

/// Lowercase hex text of a payload plus the format it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexSeed {
    hex: String,
    format_tag: String,
}

impl HexSeed {
    pub fn new(payload: &[u8], format_tag: impl Into<String>) -> Self {
        Self {
            hex: encode(payload),
            format_tag: format_tag.into(),
        }
    }

    /// Validate and normalize existing hex text.
    pub fn from_hex(hex: &str, format_tag: impl Into<String>) -> Result<Self, HexError> {
        decode(hex)?;
        Ok(Self {
            hex: hex.to_ascii_lowercase(),
            format_tag: format_tag.into(),
        })
    }

    pub fn hex(&self) -> &str {
        &self.hex
    }

    pub fn format_tag(&self) -> &str {
        &self.format_tag
    }

    pub fn byte_len(&self) -> usize {
        self.hex.len() / 2
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        // invariant: hex was validated at construction
        decode(&self.hex).expect("HexSeed holds valid hex")
    }
}

pub fn encode(payload: &[u8]) -> String {
    hex::encode(payload)
}

pub fn decode(text: &str) -> Result<Vec<u8>, HexError> {
    hex::decode(text).map_err(|e| HexError::MalformedHex(e.to_string()))
}

/// Clean up a raw mutator reply.
///
/// Whitespace is removed, `0x`/`Ox` prefixes (any case) are stripped and the
/// rest is lowercased. Returns `None` (a void response) when the residue is
/// not decodable hex. An empty residue is returned as `Some("")`; callers that
/// need a payload treat it as void.
pub fn sanitize_response(raw: &str) -> Option<String> {
    let compact: Vec<char> = raw.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = String::with_capacity(compact.len());
    let mut i = 0;
    while i < compact.len() {
        let c = compact[i];
        let next = compact.get(i + 1).copied();
        if matches!(c, '0' | 'o' | 'O') && matches!(next, Some('x' | 'X')) {
            i += 2;
            continue;
        }
        out.push(c.to_ascii_lowercase());
        i += 1;
    }
    if !out.len().is_multiple_of(2) || !out.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Pass,
    Skip,
}

/// Pass when the combined hex length of `a` and optional `b` fits `max_len`.
pub fn gate_length(a: &HexSeed, b: Option<&HexSeed>, max_len: usize) -> Gate {
    assert!(max_len > 0, "max_len must be positive");
    gate_hex_chars(a.hex.len() + b.map_or(0, |b| b.hex.len()), max_len)
}

/// Same gate expressed on raw byte lengths.
pub fn gate_bytes(a: usize, b: Option<usize>, max_len: usize) -> Gate {
    assert!(max_len > 0, "max_len must be positive");
    gate_hex_chars(2 * (a + b.unwrap_or(0)), max_len)
}

fn gate_hex_chars(chars: usize, max_len: usize) -> Gate {
    if chars <= max_len {
        Gate::Pass
    } else {
        Gate::Skip
    }
}

pub fn is_text_format(format_tag: &str) -> bool {
    TEXT_FORMATS.iter().any(|t| t.eq_ignore_ascii_case(format_tag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    FinetunePair,
    MutateOne,
}

impl PromptKind {
    pub fn id(self) -> &'static str {
        match self {
            PromptKind::FinetunePair => "finetune_pair.v1",
            PromptKind::MutateOne => "mutate_one.v1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub template_id: String,
    pub text: String,
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

const PLACEHOLDERS: [&str; 3] = ["FORMAT", "SEED", "MUTATED"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Lit(String),
    Slot(&'static str),
}

/// A prompt template with `{FORMAT}`, `{SEED}` and `{MUTATED}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    id: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(id: impl Into<String>, text: &str) -> Result<Self, HexError> {
        let mut pieces = Vec::new();
        let mut lit = String::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            lit.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after
                .find('}')
                .ok_or_else(|| HexError::Template("unterminated placeholder".into()))?;
            let name = &after[..close];
            let slot = PLACEHOLDERS
                .iter()
                .find(|p| **p == name)
                .ok_or_else(|| HexError::Template(format!("unknown placeholder {{{name}}}")))?;
            if !lit.is_empty() {
                pieces.push(Piece::Lit(std::mem::take(&mut lit)));
            }
            pieces.push(Piece::Slot(slot));
            rest = &after[close + 1..];
        }
        lit.push_str(rest);
        if !lit.is_empty() {
            pieces.push(Piece::Lit(lit));
        }
        Ok(Self { id: id.into(), pieces })
    }

    fn slot_count(&self, name: &str) -> usize {
        self.pieces
            .iter()
            .filter(|p| matches!(p, Piece::Slot(s) if *s == name))
            .count()
    }

    fn render(&self, format: &str, seed: &str, mutated: &str) -> String {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Lit(s) => out.push_str(s),
                Piece::Slot("FORMAT") => out.push_str(format),
                Piece::Slot("SEED") => out.push_str(seed),
                Piece::Slot(_) => out.push_str(mutated),
            }
        }
        out
    }
}

/// The pair of templates used for fine-tuning records and live mutation.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    mutate_one: Template,
    finetune_pair: Template,
    max_hex_len: usize,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_HEX_LEN)
    }
}

impl PromptBuilder {
    /// Builder using the bundled v1 templates.
    pub fn new(max_hex_len: usize) -> Self {
        Self::with_templates(
            include_str!("../templates/mutate_one.v1.txt"),
            include_str!("../templates/finetune_pair.v1.txt"),
            max_hex_len,
        )
        .expect("bundled templates are valid")
    }

    pub fn with_templates(mutate_one: &str, finetune_pair: &str, max_hex_len: usize) -> Result<Self, HexError> {
        let one = Template::parse(PromptKind::MutateOne.id(), mutate_one)?;
        let pair = Template::parse(PromptKind::FinetunePair.id(), finetune_pair)?;
        if one.slot_count("SEED") != 1 || one.slot_count("MUTATED") != 0 || one.slot_count("FORMAT") != 1 {
            return Err(HexError::Template(
                "mutate_one needs one {FORMAT}, one {SEED} and no {MUTATED}".into(),
            ));
        }
        if pair.slot_count("SEED") != 1 || pair.slot_count("MUTATED") != 1 || pair.slot_count("FORMAT") != 2 {
            return Err(HexError::Template(
                "finetune_pair needs one {SEED}, one {MUTATED} and two {FORMAT}".into(),
            ));
        }
        if max_hex_len == 0 {
            return Err(HexError::Template("max hex length must be positive".into()));
        }
        Ok(Self {
            mutate_one: one,
            finetune_pair: pair,
            max_hex_len,
        })
    }

    pub fn max_hex_len(&self) -> usize {
        self.max_hex_len
    }

    /// Render a prompt. `mutated` is required for [`PromptKind::FinetunePair`]
    /// and ignored otherwise. Text formats embed the payload verbatim.
    pub fn build(
        &self,
        kind: PromptKind,
        format_tag: &str,
        seed: &[u8],
        mutated: Option<&[u8]>,
    ) -> Result<Prompt, HexError> {
        let mutated = match kind {
            PromptKind::FinetunePair => {
                Some(mutated.ok_or_else(|| HexError::Template("finetune_pair prompt needs a mutated payload".into()))?)
            }
            PromptKind::MutateOne => None,
        };
        if gate_bytes(seed.len(), mutated.map(<[u8]>::len), self.max_hex_len) == Gate::Skip {
            return Err(HexError::LengthGate {
                needed: 2 * (seed.len() + mutated.map_or(0, <[u8]>::len)),
                limit: self.max_hex_len,
            });
        }
        let render = |p: &[u8]| {
            if is_text_format(format_tag) {
                String::from_utf8_lossy(p).into_owned()
            } else {
                encode(p)
            }
        };
        let seed_text = render(seed);
        let (template, mutated_text) = match (kind, mutated) {
            (PromptKind::FinetunePair, Some(m)) => (&self.finetune_pair, render(m)),
            _ => (&self.mutate_one, String::new()),
        };
        Ok(Prompt {
            template_id: template.id.clone(),
            text: template.render(format_tag, &seed_text, &mutated_text),
        })
    }
}
