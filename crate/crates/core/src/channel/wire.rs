//! Line protocol spoken with the mutator endpoint.
//!
//! ```text
//! server -> HELLO structfuzz-mutator 1
//! client -> REQ <seed_id> <format_tag> <hex>
//! server -> RES <seed_id> <hex>
//! server -> RES <seed_id> VOID
//! ```

use crate::corpus::SeedId;

pub const GREETING: &str = "HELLO structfuzz-mutator 1";
pub const VOID: &str = "VOID";
pub const MAX_TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("wrong number of fields")]
    FieldCount,
    #[error("bad seed id {0:?}")]
    BadSeedId(String),
    #[error("bad format tag {0:?}")]
    BadTag(String),
    #[error("payload is not lowercase hex")]
    BadHex,
    #[error("unexpected greeting {0:?}")]
    BadGreeting(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationRequest {
    pub seed_id: SeedId,
    pub format_tag: String,
    pub hex: String,
    /// Campaign-relative seconds at offer time. Not sent on the wire.
    pub offered_at: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationResponse {
    pub seed_id: SeedId,
    /// `None` for a void response.
    pub hex: Option<String>,
}

/// `[A-Z0-9_]{1,16}`
pub fn is_valid_tag(tag: &str) -> bool {
    (1..=MAX_TAG_LEN).contains(&tag.len())
        && tag
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
}

fn is_lower_hex(s: &str) -> bool {
    s.len().is_multiple_of(2) && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn parse_id(s: &str) -> Result<SeedId, WireError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(WireError::BadSeedId(s.to_string()));
    }
    s.parse().map_err(|_| WireError::BadSeedId(s.to_string()))
}

fn trim_eol(line: &str) -> &str {
    line.strip_suffix('\n')
        .map_or(line, |l| l.strip_suffix('\r').unwrap_or(l))
}

pub fn format_request(req: &MutationRequest) -> String {
    format!("REQ {} {} {}\n", req.seed_id, req.format_tag, req.hex)
}

pub fn parse_request(line: &str) -> Result<MutationRequest, WireError> {
    let fields: Vec<&str> = trim_eol(line).split(' ').collect();
    if fields.first() != Some(&"REQ") {
        return Err(WireError::UnknownRecord(fields[0].to_string()));
    }
    let [_, id, tag, hex] = fields[..] else {
        return Err(WireError::FieldCount);
    };
    let seed_id = parse_id(id)?;
    if !is_valid_tag(tag) {
        return Err(WireError::BadTag(tag.to_string()));
    }
    if !is_lower_hex(hex) {
        return Err(WireError::BadHex);
    }
    Ok(MutationRequest {
        seed_id,
        format_tag: tag.to_string(),
        hex: hex.to_string(),
        offered_at: 0.0,
    })
}

pub fn format_response(res: &MutationResponse) -> String {
    format!("RES {} {}\n", res.seed_id, res.hex.as_deref().unwrap_or(VOID))
}

pub fn parse_response(line: &str) -> Result<MutationResponse, WireError> {
    let fields: Vec<&str> = trim_eol(line).split(' ').collect();
    if fields.first() != Some(&"RES") {
        return Err(WireError::UnknownRecord(fields[0].to_string()));
    }
    let [_, id, payload] = fields[..] else {
        return Err(WireError::FieldCount);
    };
    let seed_id = parse_id(id)?;
    let hex = match payload {
        VOID => None,
        p if is_lower_hex(p) => Some(p.to_string()),
        _ => return Err(WireError::BadHex),
    };
    Ok(MutationResponse { seed_id, hex })
}

pub fn check_greeting(line: &str) -> Result<(), WireError> {
    match trim_eol(line) {
        GREETING => Ok(()),
        other => Err(WireError::BadGreeting(other.to_string())),
    }
}
