//! Recursive-descent parser for the MLIR-style textual form.
//!
//! Every operation can be written in the generic form
//! `%r = "dialect.op"(%a, %b) ({...}) {attr = ...} : (ta, tb) -> tr`. The
//! quotes may be dropped, and ops that register a custom syntax are parsed
//! with it when the name is unquoted.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{Attribute, FieldType, FunctionType, Location, MemRefType, Module, Operation, Region, TempType, Type, ValueId, ValueTable};
use crate::dialects::{registry, Registry};
use crate::dmp::{ExchangeDecl, GridTopology};
use crate::stencil::Bounds;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Parses a module. Accepts either a bare list of top-level operations or one
/// wrapped in `builtin.module { ... }`.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    let mut p = Parser::new(text, registry());
    p.module()
}

/// Operation under construction, filled in by generic or custom parsers.
#[derive(Debug, Default)]
pub struct OpState {
    pub operands: Vec<ValueId>,
    pub result_types: Vec<Type>,
    pub attributes: BTreeMap<String, Attribute>,
    pub regions: Vec<Region>,
}

enum Number {
    Int(i64),
    Float(f64),
}

pub struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
    values: ValueTable,
    scopes: Vec<HashMap<String, ValueId>>,
    registry: &'a Registry,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'.' || c == b'$'
}

fn is_suffix_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'.' || c == b'$' || c == b'-'
}

impl<'a> Parser<'a> {
    pub fn new(text: &'a str, registry: &'a Registry) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
            values: ValueTable::default(),
            scopes: vec![HashMap::new()],
            registry,
        }
    }

    // ---- low-level cursor ----

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        loop {
            match self.src.get(self.pos) {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'/') => {
                    while let Some(c) = self.bump() {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    pub fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<u8> {
        self.src.get(self.pos + offset).copied()
    }

    fn rest_starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    pub fn location(&mut self) -> Location {
        self.skip_ws();
        Location { line: self.line, col: self.col }
    }

    pub fn error<T>(&mut self, message: impl Into<String>) -> Result<T, ParseError> {
        let loc = self.location();
        Err(ParseError { line: loc.line, col: loc.col, message: message.into() })
    }

    fn error_at<T>(&self, loc: Location, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line: loc.line, col: loc.col, message: message.into() })
    }

    fn at_eof(&mut self) -> bool {
        self.peek().is_none()
    }

    /// Consumes `tok` if it comes next.
    pub fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest_starts_with(tok) {
            for _ in 0..tok.len() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            let found = self.describe_next();
            self.error(format!("expected '{tok}', found {found}"))
        }
    }

    /// Consumes a keyword only when it is not the prefix of a longer identifier.
    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if self.rest_starts_with(kw) && !self.peek_at(kw.len()).is_some_and(is_ident_char) {
            for _ in 0..kw.len() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            let found = self.describe_next();
            self.error(format!("expected '{kw}', found {found}"))
        }
    }

    fn describe_next(&mut self) -> String {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return "end of input".into();
        }
        let end = (self.pos..self.src.len())
            .find(|&i| self.src[i].is_ascii_whitespace())
            .unwrap_or(self.src.len())
            .min(self.pos + 16);
        format!("'{}'", String::from_utf8_lossy(&self.src[self.pos..end]))
    }

    pub fn ident(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        match self.src.get(self.pos) {
            Some(&c) if is_ident_start(c) => {}
            _ => {
                let found = self.describe_next();
                return self.error(format!("expected identifier, found {found}"));
            }
        }
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|&c| is_ident_char(c)) {
            self.bump();
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn suffix_id(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|&c| is_suffix_char(c)) {
            self.bump();
        }
        if start == self.pos {
            return self.error("expected a name");
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<Number, ParseError> {
        self.skip_ws();
        let loc = self.location();
        let start = self.pos;
        if self.rest_starts_with("0x") || self.rest_starts_with("0X") {
            self.bump();
            self.bump();
            let hstart = self.pos;
            while self.src.get(self.pos).is_some_and(|c| c.is_ascii_hexdigit()) {
                self.bump();
            }
            let digits = std::str::from_utf8(&self.src[hstart..self.pos]).unwrap();
            return u64::from_str_radix(digits, 16)
                .map(|v| Number::Int(v as i64))
                .or_else(|_| self.error_at(loc, "invalid hexadecimal literal"));
        }
        if matches!(self.src.get(self.pos), Some(b'-') | Some(b'+')) {
            self.bump();
        }
        let mut is_float = false;
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_digit() {
                self.bump();
            } else if c == b'.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
                is_float = true;
                self.bump();
            } else if (c == b'e' || c == b'E')
                && (self.peek_at(1).is_some_and(|d| d.is_ascii_digit())
                    || (matches!(self.peek_at(1), Some(b'-') | Some(b'+'))
                        && self.peek_at(2).is_some_and(|d| d.is_ascii_digit())))
            {
                is_float = true;
                self.bump();
                if matches!(self.src.get(self.pos), Some(b'-') | Some(b'+')) {
                    self.bump();
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if text.is_empty() || text == "-" || text == "+" {
            return self.error_at(loc, "expected a number");
        }
        if is_float {
            text.parse::<f64>().map(Number::Float).or_else(|_| self.error_at(loc, format!("invalid float '{text}'")))
        } else {
            text.parse::<i64>().map(Number::Int).or_else(|_| self.error_at(loc, format!("integer '{text}' out of range")))
        }
    }

    pub fn integer(&mut self) -> Result<i64, ParseError> {
        match self.number()? {
            Number::Int(v) => Ok(v),
            Number::Float(_) => self.error("expected an integer"),
        }
    }

    /// `[a, b, c]`
    pub fn int_list(&mut self) -> Result<Vec<i64>, ParseError> {
        self.expect("[")?;
        let mut out = Vec::new();
        if self.eat("]") {
            return Ok(out);
        }
        loop {
            out.push(self.integer()?);
            if self.eat("]") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn string_literal(&mut self) -> Result<String, ParseError> {
        self.expect("\"")?;
        let mut bytes = Vec::new();
        loop {
            match self.bump() {
                None => return self.error("unterminated string"),
                Some(b'"') => break,
                Some(b'\\') => match self.bump() {
                    Some(b'n') => bytes.push(b'\n'),
                    Some(b't') => bytes.push(b'\t'),
                    Some(c) => bytes.push(c),
                    None => return self.error("unterminated string"),
                },
                Some(c) => bytes.push(c),
            }
        }
        String::from_utf8(bytes).or_else(|_| self.error("string is not valid UTF-8"))
    }

    pub fn symbol(&mut self) -> Result<String, ParseError> {
        self.expect("@")?;
        if self.src.get(self.pos) == Some(&b'"') {
            return self.string_literal();
        }
        self.suffix_id()
    }

    // ---- values and scoping ----

    /// Parses `%name` and returns the name without the sigil.
    pub fn value_name(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        if self.src.get(self.pos) != Some(&b'%') {
            let found = self.describe_next();
            return self.error(format!("expected value name, found {found}"));
        }
        self.bump();
        self.suffix_id()
    }

    /// Parses a use of a previously defined value.
    pub fn operand(&mut self) -> Result<ValueId, ParseError> {
        let loc = self.location();
        let name = self.value_name()?;
        for scope in self.scopes.iter().rev() {
            if let Some(&v) = scope.get(&name) {
                return Ok(v);
            }
        }
        self.error_at(loc, format!("use of undefined value '%{name}' (use before definition)"))
    }

    /// Comma-separated operands, possibly empty, up to but excluding `close`.
    pub fn operand_list_until(&mut self, close: &str) -> Result<Vec<ValueId>, ParseError> {
        let mut out = Vec::new();
        self.skip_ws();
        if self.rest_starts_with(close) {
            return Ok(out);
        }
        loop {
            out.push(self.operand()?);
            if !self.eat(",") {
                return Ok(out);
            }
        }
    }

    pub fn value_type(&self, v: ValueId) -> &Type {
        self.values.ty(v)
    }

    fn define(&mut self, name: &str, ty: Type, loc: Location) -> Result<ValueId, ParseError> {
        let (current, outer) = self.scopes.split_last().unwrap();
        if current.contains_key(name) {
            return self.error_at(loc, format!("value '%{name}' is defined more than once"));
        }
        if outer.iter().any(|s| s.contains_key(name)) {
            return self.error_at(loc, format!("value '%{name}' shadows a value of an enclosing region"));
        }
        let v = self.values.new_value(ty);
        self.scopes.last_mut().unwrap().insert(name.to_string(), v);
        Ok(v)
    }

    /// Parses `{ ops }` as a new scope whose arguments are `args`. When `args`
    /// is empty a generic `^bb0(%x: t, ...):` header is accepted instead.
    pub fn region(&mut self, args: Vec<(String, Type, Location)>) -> Result<Region, ParseError> {
        self.expect("{")?;
        self.scopes.push(HashMap::new());
        let result = self.region_body(args);
        self.scopes.pop();
        result
    }

    fn region_body(&mut self, mut args: Vec<(String, Type, Location)>) -> Result<Region, ParseError> {
        if self.peek() == Some(b'^') {
            if !args.is_empty() {
                return self.error("region arguments are already declared by the operation");
            }
            args = self.block_header()?;
        }
        let mut ids = Vec::with_capacity(args.len());
        for (name, ty, loc) in args {
            ids.push(self.define(&name, ty, loc)?);
        }
        let mut ops = Vec::new();
        loop {
            match self.peek() {
                Some(b'}') => {
                    self.bump();
                    break;
                }
                Some(b'^') => return self.error("multi-block regions are not supported"),
                None => return self.error("unterminated region, expected '}'"),
                _ => ops.push(self.operation()?),
            }
        }
        Ok(Region { args: ids, ops })
    }

    fn block_header(&mut self) -> Result<Vec<(String, Type, Location)>, ParseError> {
        self.expect("^")?;
        self.suffix_id()?;
        let mut args = Vec::new();
        if self.eat("(") && !self.eat(")") {
            loop {
                let loc = self.location();
                let name = self.value_name()?;
                self.expect(":")?;
                let ty = self.parse_type()?;
                args.push((name, ty, loc));
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect(":")?;
        Ok(args)
    }

    // ---- types ----

    pub fn parse_type(&mut self) -> Result<Type, ParseError> {
        self.skip_ws();
        let loc = self.location();
        match self.peek() {
            Some(b'(') => return self.function_type().map(Type::Function),
            Some(b'!') => return self.dialect_type(),
            _ => {}
        }
        let name = self.ident()?;
        match name.as_str() {
            "i1" => Ok(Type::I1),
            "i32" => Ok(Type::I32),
            "i64" => Ok(Type::I64),
            "index" => Ok(Type::Index),
            "f32" => Ok(Type::F32),
            "f64" => Ok(Type::F64),
            "memref" => {
                self.expect("<")?;
                let mut shape = Vec::new();
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    let d = self.integer()?;
                    if d <= 0 {
                        return self.error_at(loc, "memref extents must be positive");
                    }
                    shape.push(d);
                    self.expect("x")?;
                }
                if shape.is_empty() {
                    return self.error_at(loc, "memref needs a static shape");
                }
                let elem = self.element_type()?;
                self.expect(">")?;
                Ok(Type::MemRef(MemRefType::new(shape, elem)))
            }
            other => self.error_at(loc, format!("unknown type '{other}'")),
        }
    }

    fn element_type(&mut self) -> Result<Type, ParseError> {
        let loc = self.location();
        let t = self.parse_type()?;
        if !t.is_scalar() {
            return self.error_at(loc, format!("expected scalar element type, found {t}"));
        }
        Ok(t)
    }

    pub fn function_type(&mut self) -> Result<FunctionType, ParseError> {
        self.expect("(")?;
        let inputs = self.type_list_until(")")?;
        self.expect(")")?;
        self.expect("->")?;
        let results = if self.peek() == Some(b'(') {
            self.expect("(")?;
            let r = self.type_list_until(")")?;
            self.expect(")")?;
            r
        } else {
            vec![self.parse_type()?]
        };
        Ok(FunctionType { inputs, results })
    }

    /// Comma-separated types up to but excluding `close`.
    pub fn type_list_until(&mut self, close: &str) -> Result<Vec<Type>, ParseError> {
        let mut out = Vec::new();
        self.skip_ws();
        if self.rest_starts_with(close) {
            return Ok(out);
        }
        loop {
            out.push(self.parse_type()?);
            if !self.eat(",") {
                return Ok(out);
            }
        }
    }

    /// Either `(t, ...)` or a single type.
    pub fn type_list_or_single(&mut self) -> Result<Vec<Type>, ParseError> {
        if self.peek() == Some(b'(') {
            self.expect("(")?;
            let r = self.type_list_until(")")?;
            self.expect(")")?;
            Ok(r)
        } else {
            Ok(vec![self.parse_type()?])
        }
    }

    fn dialect_type(&mut self) -> Result<Type, ParseError> {
        let loc = self.location();
        self.expect("!")?;
        let name = self.ident()?;
        match name.as_str() {
            "field" | "stencil.field" => {
                self.expect("<")?;
                let (bounds, elem) = self.bounded_shape(loc)?;
                self.expect(">")?;
                match bounds {
                    Some(b) => Ok(Type::Field(FieldType::new(b, elem))),
                    None => self.error_at(loc, "field bounds must be statically known"),
                }
            }
            "temp" | "stencil.temp" => {
                self.expect("<")?;
                self.skip_ws();
                let mut rank = 0;
                let mut unknown = false;
                while self.peek() == Some(b'?') {
                    self.bump();
                    self.expect("x")?;
                    rank += 1;
                    unknown = true;
                }
                let ty = if unknown {
                    let elem = self.element_type()?;
                    Type::Temp(TempType::unknown(rank, elem))
                } else {
                    let (bounds, elem) = self.bounded_shape(loc)?;
                    match bounds {
                        Some(b) => Type::Temp(TempType::with_bounds(b, elem)),
                        None => return self.error_at(loc, "temp needs a rank"),
                    }
                };
                self.expect(">")?;
                Ok(ty)
            }
            "llvm.ptr" => Ok(Type::LlvmPtr),
            "mpi.request" => Ok(Type::MpiRequest),
            "mpi.status" => Ok(Type::MpiStatus),
            "mpi.datatype" => Ok(Type::MpiDatatype),
            other => self.error_at(loc, format!("unknown dialect type '!{other}'")),
        }
    }

    /// `[lb,ub]x[lb,ub]xT`
    fn bounded_shape(&mut self, loc: Location) -> Result<(Option<Bounds>, Type), ParseError> {
        let mut lb = Vec::new();
        let mut ub = Vec::new();
        while self.peek() == Some(b'[') {
            let pair = self.int_list()?;
            if pair.len() != 2 {
                return self.error_at(loc, "bounds must be written [lb,ub]");
            }
            lb.push(pair[0]);
            ub.push(pair[1]);
            self.expect("x")?;
        }
        let elem = self.element_type()?;
        if lb.is_empty() {
            return Ok((None, elem));
        }
        match Bounds::checked(lb, ub) {
            Ok(b) => Ok((Some(b), elem)),
            Err(e) => self.error_at(loc, e),
        }
    }

    // ---- attributes ----

    pub fn parse_attribute(&mut self) -> Result<Attribute, ParseError> {
        let loc = self.location();
        match self.peek() {
            Some(b'#') => return self.dialect_attribute(),
            Some(b'[') => {
                self.expect("[")?;
                let mut items = Vec::new();
                if !self.eat("]") {
                    loop {
                        items.push(self.parse_attribute()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                return Ok(Attribute::Array(items));
            }
            Some(b'"') => return self.string_literal().map(Attribute::String),
            Some(b'@') => return self.symbol().map(Attribute::Symbol),
            Some(c) if c.is_ascii_digit() || c == b'-' || c == b'+' => {
                let hex = self.rest_starts_with("0x") || self.rest_starts_with("0X");
                let n = self.number()?;
                let ty = if self.eat(":") { Some(self.parse_type()?) } else { None };
                return self.typed_number(n, hex, ty, loc);
            }
            _ => {}
        }
        if self.eat_keyword("true") {
            return Ok(Attribute::int(1, Type::I1));
        }
        if self.eat_keyword("false") {
            return Ok(Attribute::int(0, Type::I1));
        }
        if self.eat_keyword("unit") {
            return Ok(Attribute::Unit);
        }
        self.parse_type().map(Attribute::Type)
    }

    fn typed_number(&mut self, n: Number, hex: bool, ty: Option<Type>, loc: Location) -> Result<Attribute, ParseError> {
        match (n, ty) {
            (Number::Int(v), None) => Ok(Attribute::i64(v)),
            (Number::Float(v), None) => Ok(Attribute::Float { value: v, ty: Type::F64 }),
            (Number::Int(v), Some(ty)) if ty.is_integer() => {
                if !Attribute::int_fits(v, &ty) {
                    return self.error_at(loc, format!("integer {v} does not fit in {ty}"));
                }
                Ok(Attribute::int(v, ty))
            }
            (n, Some(ty @ (Type::F32 | Type::F64))) => {
                let value = match (n, &ty) {
                    (Number::Int(bits), Type::F32) if hex => f32::from_bits(bits as u32) as f64,
                    (Number::Int(bits), _) if hex => f64::from_bits(bits as u64),
                    (Number::Int(v), _) => v as f64,
                    (Number::Float(v), _) => v,
                };
                let value = if ty == Type::F32 { value as f32 as f64 } else { value };
                Ok(Attribute::Float { value, ty })
            }
            (_, Some(ty)) => self.error_at(loc, format!("numeric literal cannot have type {ty}")),
        }
    }

    /// Float literal that may be written as raw hexadecimal bits.
    pub fn float_literal(&mut self, ty: &Type) -> Result<f64, ParseError> {
        self.skip_ws();
        let hex = self.rest_starts_with("0x") || self.rest_starts_with("0X");
        let n = self.number()?;
        Ok(match (n, ty) {
            (Number::Int(bits), Type::F32) if hex => f32::from_bits(bits as u32) as f64,
            (Number::Int(bits), _) if hex => f64::from_bits(bits as u64),
            (Number::Int(v), Type::F32) => v as f32 as f64,
            (Number::Int(v), _) => v as f64,
            (Number::Float(v), Type::F32) => v as f32 as f64,
            (Number::Float(v), _) => v,
        })
    }

    fn dialect_attribute(&mut self) -> Result<Attribute, ParseError> {
        let loc = self.location();
        self.expect("#")?;
        let name = self.ident()?;
        match name.as_str() {
            "dmp.grid" => {
                self.expect("<")?;
                let mut dims = vec![self.integer()?];
                while self.eat("x") {
                    dims.push(self.integer()?);
                }
                self.expect(">")?;
                if dims.iter().any(|&d| d <= 0) {
                    return self.error_at(loc, "grid dimensions must be positive");
                }
                GridTopology::new(dims.into_iter().map(|d| d as usize).collect())
                    .map(Attribute::Grid)
                    .or_else(|e| self.error_at(loc, e))
            }
            "dmp.exchange" => {
                self.expect("<")?;
                self.expect_keyword("at")?;
                let at = self.int_list()?;
                self.expect_keyword("size")?;
                let size = self.int_list()?;
                self.expect_keyword("source")?;
                self.expect_keyword("offset")?;
                let source_offset = self.int_list()?;
                self.expect_keyword("to")?;
                let to = self.int_list()?;
                self.expect(">")?;
                let e = ExchangeDecl { at, size, source_offset, to };
                match e.validate() {
                    Ok(()) => Ok(Attribute::Exchange(e)),
                    Err(msg) => self.error_at(loc, msg),
                }
            }
            "stencil.bounds" => {
                self.expect("<")?;
                let b = self.bounds_pair(loc)?;
                self.expect(">")?;
                Ok(Attribute::Bounds(b))
            }
            other => self.error_at(loc, format!("unknown dialect attribute '#{other}'")),
        }
    }

    /// `[lb...], [ub...]`
    pub fn bounds_pair(&mut self, loc: Location) -> Result<Bounds, ParseError> {
        let lb = self.int_list()?;
        self.expect(",")?;
        let ub = self.int_list()?;
        Bounds::checked(lb, ub).or_else(|e| self.error_at(loc, e))
    }

    /// `{key = value, flag, "quoted" = value}`; the caller has checked for `{`.
    pub fn attr_dict(&mut self) -> Result<BTreeMap<String, Attribute>, ParseError> {
        self.expect("{")?;
        let mut attrs = BTreeMap::new();
        if self.eat("}") {
            return Ok(attrs);
        }
        loop {
            let loc = self.location();
            let key = if self.peek() == Some(b'"') { self.string_literal()? } else { self.ident()? };
            let value = if self.eat("=") { self.parse_attribute()? } else { Attribute::Unit };
            if attrs.insert(key.clone(), value).is_some() {
                return self.error_at(loc, format!("duplicate attribute '{key}'"));
            }
            if self.eat("}") {
                return Ok(attrs);
            }
            self.expect(",")?;
        }
    }

    // ---- operations ----

    fn operation(&mut self) -> Result<Operation, ParseError> {
        let loc = self.location();
        let mut result_names = Vec::new();
        if self.peek() == Some(b'%') {
            loop {
                let rloc = self.location();
                result_names.push((self.value_name()?, rloc));
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("=")?;
        }
        let name_loc = self.location();
        let (name, quoted) = if self.peek() == Some(b'"') {
            (self.string_literal()?, true)
        } else {
            (self.ident()?, false)
        };
        let Some(def) = self.registry.get(&name) else {
            return self.error_at(name_loc, format!("unknown operation '{name}'"));
        };
        let mut state = OpState::default();
        match (quoted, def.parse) {
            (false, Some(custom)) => {
                custom(self, &mut state)?;
                if self.peek() == Some(b'{') {
                    for (k, v) in self.attr_dict()? {
                        state.attributes.insert(k, v);
                    }
                }
            }
            _ => self.generic_body(&mut state)?,
        }
        if state.result_types.len() != result_names.len() {
            return self.error_at(
                loc,
                format!(
                    "'{name}' produces {} result(s) but {} name(s) were given",
                    state.result_types.len(),
                    result_names.len()
                ),
            );
        }
        let mut results = Vec::with_capacity(result_names.len());
        for ((rname, rloc), ty) in result_names.into_iter().zip(state.result_types) {
            results.push(self.define(&rname, ty, rloc)?);
        }
        Ok(Operation {
            name,
            operands: state.operands,
            results,
            attributes: state.attributes,
            regions: state.regions,
            location: Some(loc),
        })
    }

    /// `(operands) ({regions})? {attrs}? : (types) -> types`
    pub fn generic_body(&mut self, state: &mut OpState) -> Result<(), ParseError> {
        self.expect("(")?;
        state.operands = self.operand_list_until(")")?;
        self.expect(")")?;
        if self.peek() == Some(b'(') {
            self.expect("(")?;
            loop {
                state.regions.push(self.region(Vec::new())?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        if self.peek() == Some(b'{') {
            state.attributes = self.attr_dict()?;
        }
        self.expect(":")?;
        let loc = self.location();
        let ft = self.function_type()?;
        if ft.inputs.len() != state.operands.len() {
            return self.error_at(loc, format!("expected {} operand type(s), found {}", state.operands.len(), ft.inputs.len()));
        }
        for (v, t) in state.operands.iter().zip(&ft.inputs) {
            if self.value_type(*v) != t {
                let actual = self.value_type(*v).clone();
                return self.error_at(loc, format!("operand type mismatch: value has type {actual}, signature says {t}"));
            }
        }
        state.result_types = ft.results;
        Ok(())
    }

    /// Checks that a value has the type written in the text.
    pub fn check_type(&mut self, v: ValueId, ty: &Type, loc: Location) -> Result<(), ParseError> {
        if self.value_type(v) != ty {
            let actual = self.value_type(v).clone();
            return self.error_at(loc, format!("type mismatch: value has type {actual}, expected {ty}"));
        }
        Ok(())
    }

    fn module(&mut self) -> Result<Module, ParseError> {
        let wrapped = self.eat_keyword("builtin.module") || self.eat_keyword("module");
        let body = if wrapped {
            let region = self.region(Vec::new())?;
            if !self.at_eof() {
                return self.error("unexpected text after module");
            }
            region
        } else {
            let mut ops = Vec::new();
            while !self.at_eof() {
                ops.push(self.operation()?);
            }
            Region { args: Vec::new(), ops }
        };
        Ok(Module { values: std::mem::take(&mut self.values), body })
    }
}
