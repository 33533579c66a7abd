//! `jsonish`: a recursive-descent parser for a JSON subset (objects, arrays,
//! strings, integers). One edge per grammar production and error branch.
//!
//! Seeded bug: an object key equal to `boom` at nesting depth greater than 12.

use crate::coverage::EdgeTrace;
use crate::executor::{Crash, Target};

pub const FORMAT_TAG: &str = "JSON";
/// The bug fires strictly above this depth.
pub const BUG_DEPTH: usize = 12;
/// Inputs nested deeper than this are rejected.
pub const MAX_DEPTH: usize = 64;

pub mod edge {
    use crate::coverage::EdgeId;

    pub const EMPTY_INPUT: EdgeId = 100;
    pub const DOC_OK: EdgeId = 101;
    pub const TRAILING_GARBAGE: EdgeId = 102;
    pub const VALUE_OBJECT: EdgeId = 103;
    pub const VALUE_ARRAY: EdgeId = 104;
    pub const VALUE_STRING: EdgeId = 105;
    pub const VALUE_INT: EdgeId = 106;
    pub const VALUE_BAD: EdgeId = 107;
    pub const VALUE_EOF: EdgeId = 108;
    pub const OBJ_EMPTY: EdgeId = 110;
    pub const OBJ_MEMBER: EdgeId = 111;
    pub const OBJ_BAD_KEY: EdgeId = 112;
    pub const OBJ_NO_COLON: EdgeId = 113;
    pub const OBJ_COMMA: EdgeId = 114;
    pub const OBJ_UNTERMINATED: EdgeId = 115;
    pub const ARR_EMPTY: EdgeId = 120;
    pub const ARR_ELEM: EdgeId = 121;
    pub const ARR_COMMA: EdgeId = 122;
    pub const ARR_UNTERMINATED: EdgeId = 123;
    pub const STR_CHAR: EdgeId = 130;
    pub const STR_ESCAPE: EdgeId = 131;
    pub const STR_BAD_ESCAPE: EdgeId = 132;
    pub const STR_UNTERMINATED: EdgeId = 133;
    pub const INT_NEG: EdgeId = 140;
    pub const INT_DIGIT: EdgeId = 141;
    pub const INT_NO_DIGITS: EdgeId = 142;
    pub const INT_LEADING_ZERO: EdgeId = 143;
    pub const DEPTH_LIMIT: EdgeId = 150;
    pub const DEEP: EdgeId = 151;
    pub const KEY_BOOM: EdgeId = 152;
    pub const BUG_BOOM: EdgeId = 190;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Jsonish;

impl Target for Jsonish {
    fn name(&self) -> &'static str {
        "jsonish"
    }

    fn format_tag(&self) -> &'static str {
        FORMAT_TAG
    }

    fn run(&self, input: &[u8], trace: &mut EdgeTrace) -> Result<(), Crash> {
        let mut p = Parser { input, pos: 0, trace };
        p.skip_ws();
        if p.pos == input.len() {
            p.trace.hit(edge::EMPTY_INPUT);
            return Ok(());
        }
        if p.value(0)? {
            p.skip_ws();
            if p.pos == input.len() {
                p.trace.hit(edge::DOC_OK);
            } else {
                p.trace.hit(edge::TRAILING_GARBAGE);
            }
        }
        Ok(())
    }
}

struct Parser<'a, 't> {
    input: &'a [u8],
    pos: usize,
    trace: &'t mut EdgeTrace,
}

// Each production returns Ok(true) on success, Ok(false) on a syntax error
// (already recorded), Err on the seeded crash.
impl Parser<'_, '_> {
    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn value(&mut self, depth: usize) -> Result<bool, Crash> {
        self.skip_ws();
        match self.peek() {
            None => {
                self.trace.hit(edge::VALUE_EOF);
                Ok(false)
            }
            Some(b'{') => {
                self.trace.hit(edge::VALUE_OBJECT);
                self.object(depth + 1)
            }
            Some(b'[') => {
                self.trace.hit(edge::VALUE_ARRAY);
                self.array(depth + 1)
            }
            Some(b'"') => {
                self.trace.hit(edge::VALUE_STRING);
                Ok(self.string().is_some())
            }
            Some(b'-' | b'0'..=b'9') => {
                self.trace.hit(edge::VALUE_INT);
                Ok(self.integer())
            }
            Some(_) => {
                self.trace.hit(edge::VALUE_BAD);
                Ok(false)
            }
        }
    }

    fn enter(&mut self, depth: usize) -> bool {
        if depth > MAX_DEPTH {
            self.trace.hit(edge::DEPTH_LIMIT);
            return false;
        }
        if depth > BUG_DEPTH {
            self.trace.hit(edge::DEEP);
        }
        true
    }

    fn object(&mut self, depth: usize) -> Result<bool, Crash> {
        if !self.enter(depth) {
            return Ok(false);
        }
        self.pos += 1;
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            self.trace.hit(edge::OBJ_EMPTY);
            return Ok(true);
        }
        loop {
            self.skip_ws();
            if self.peek() != Some(b'"') {
                self.trace.hit(edge::OBJ_BAD_KEY);
                return Ok(false);
            }
            let Some(key) = self.string() else {
                return Ok(false);
            };
            if key == b"boom" {
                self.trace.hit(edge::KEY_BOOM);
                if depth > BUG_DEPTH {
                    self.trace.hit(edge::BUG_BOOM);
                    return Err(Crash::new("BOOM"));
                }
            }
            self.skip_ws();
            if self.peek() != Some(b':') {
                self.trace.hit(edge::OBJ_NO_COLON);
                return Ok(false);
            }
            self.pos += 1;
            self.trace.hit(edge::OBJ_MEMBER);
            if !self.value(depth)? {
                return Ok(false);
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.trace.hit(edge::OBJ_COMMA);
                }
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(true);
                }
                _ => {
                    self.trace.hit(edge::OBJ_UNTERMINATED);
                    return Ok(false);
                }
            }
        }
    }

    fn array(&mut self, depth: usize) -> Result<bool, Crash> {
        if !self.enter(depth) {
            return Ok(false);
        }
        self.pos += 1;
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            self.trace.hit(edge::ARR_EMPTY);
            return Ok(true);
        }
        loop {
            self.trace.hit(edge::ARR_ELEM);
            if !self.value(depth)? {
                return Ok(false);
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.trace.hit(edge::ARR_COMMA);
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok(true);
                }
                _ => {
                    self.trace.hit(edge::ARR_UNTERMINATED);
                    return Ok(false);
                }
            }
        }
    }

    // Cursor is on the opening quote.
    fn string(&mut self) -> Option<Vec<u8>> {
        self.pos += 1;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                None => {
                    self.trace.hit(edge::STR_UNTERMINATED);
                    return None;
                }
                Some(b'"') => {
                    self.pos += 1;
                    return Some(out);
                }
                Some(b'\\') => {
                    self.pos += 1;
                    let c = match self.peek() {
                        Some(b'"') => b'"',
                        Some(b'\\') => b'\\',
                        Some(b'/') => b'/',
                        Some(b'n') => b'\n',
                        Some(b't') => b'\t',
                        _ => {
                            self.trace.hit(edge::STR_BAD_ESCAPE);
                            return None;
                        }
                    };
                    self.trace.hit(edge::STR_ESCAPE);
                    out.push(c);
                    self.pos += 1;
                }
                Some(c) => {
                    self.trace.hit(edge::STR_CHAR);
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn integer(&mut self) -> bool {
        if self.peek() == Some(b'-') {
            self.trace.hit(edge::INT_NEG);
            self.pos += 1;
        }
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.trace.hit(edge::INT_DIGIT);
            self.pos += 1;
        }
        match self.pos - start {
            0 => {
                self.trace.hit(edge::INT_NO_DIGITS);
                false
            }
            n if n > 1 && self.input[start] == b'0' => {
                self.trace.hit(edge::INT_LEADING_ZERO);
                false
            }
            _ => true,
        }
    }
}

/// A small valid document used as the default seed.
pub fn sample_seed() -> Vec<u8> {
    br#"{"name":"fz","list":[1,-2,[3]],"obj":{"k":"v\n"}}"#.to_vec()
}
