use std::fmt;

use super::Type;
use crate::dmp::{ExchangeDecl, GridTopology};
use crate::stencil::Bounds;

/// Compile-time constant data attached to operations.
#[derive(Clone, Debug)]
pub enum Attribute {
    Unit,
    Int { value: i64, ty: Type },
    /// Float constants. An `f32` attribute holds a value exactly representable as `f32`.
    Float { value: f64, ty: Type },
    String(String),
    Symbol(String),
    Type(Type),
    Array(Vec<Attribute>),
    Bounds(Bounds),
    Grid(GridTopology),
    Exchange(ExchangeDecl),
}

impl Attribute {
    pub fn i64(value: i64) -> Self {
        Attribute::Int { value, ty: Type::I64 }
    }

    pub fn int(value: i64, ty: Type) -> Self {
        Attribute::Int { value, ty }
    }

    pub fn index(value: i64) -> Self {
        Attribute::Int { value, ty: Type::Index }
    }

    pub fn string(s: impl Into<String>) -> Self {
        Attribute::String(s.into())
    }

    pub fn int_array(values: &[i64]) -> Self {
        Attribute::Array(values.iter().map(|&v| Attribute::i64(v)).collect())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Attribute::Int { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Attribute::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int_array(&self) -> Option<Vec<i64>> {
        match self {
            Attribute::Array(items) => items.iter().map(Attribute::as_int).collect(),
            _ => None,
        }
    }

    pub fn as_type(&self) -> Option<&Type> {
        match self {
            Attribute::Type(t) => Some(t),
            _ => None,
        }
    }

    /// True when an integer attribute's value fits its declared width.
    pub fn int_fits(value: i64, ty: &Type) -> bool {
        match ty {
            Type::I1 => value == 0 || value == 1,
            Type::I32 => i32::try_from(value).is_ok(),
            Type::I64 | Type::Index => true,
            _ => false,
        }
    }
}

impl PartialEq for Attribute {
    fn eq(&self, other: &Self) -> bool {
        use Attribute::*;
        match (self, other) {
            (Unit, Unit) => true,
            (Int { value: a, ty: ta }, Int { value: b, ty: tb }) => a == b && ta == tb,
            (Float { value: a, ty: ta }, Float { value: b, ty: tb }) => {
                a.to_bits() == b.to_bits() && ta == tb
            }
            (String(a), String(b)) | (Symbol(a), Symbol(b)) => a == b,
            (Type(a), Type(b)) => a == b,
            (Array(a), Array(b)) => a == b,
            (Bounds(a), Bounds(b)) => a == b,
            (Grid(a), Grid(b)) => a == b,
            (Exchange(a), Exchange(b)) => a == b,
            _ => false,
        }
    }
}

/// Formats a float so that parsing it back yields the same bits.
pub(crate) fn format_float(value: f64, ty: &Type) -> String {
    if *ty == Type::F32 {
        let v = value as f32;
        if v.is_finite() {
            format!("{v:?}")
        } else {
            format!("0x{:08X}", v.to_bits())
        }
    } else if value.is_finite() {
        format!("{value:?}")
    } else {
        format!("0x{:016X}", value.to_bits())
    }
}

pub fn write_int_list(f: &mut fmt::Formatter<'_>, values: &[i64]) -> fmt::Result {
    f.write_str("[")?;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{v}")?;
    }
    f.write_str("]")
}

pub(crate) fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::Unit => f.write_str("unit"),
            Attribute::Int { value, ty } => match ty {
                Type::I1 => f.write_str(if *value != 0 { "true" } else { "false" }),
                Type::I64 => write!(f, "{value}"),
                _ => write!(f, "{value} : {ty}"),
            },
            Attribute::Float { value, ty } => write!(f, "{} : {ty}", format_float(*value, ty)),
            Attribute::String(s) => f.write_str(&escape_string(s)),
            Attribute::Symbol(s) => write!(f, "@{s}"),
            Attribute::Type(t) => write!(f, "{t}"),
            Attribute::Array(items) => {
                f.write_str("[")?;
                for (i, a) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str("]")
            }
            Attribute::Bounds(b) => {
                f.write_str("#stencil.bounds<")?;
                write_int_list(f, &b.lb)?;
                f.write_str(", ")?;
                write_int_list(f, &b.ub)?;
                f.write_str(">")
            }
            Attribute::Grid(g) => write!(f, "#dmp.grid<{g}>"),
            Attribute::Exchange(e) => write!(f, "{e}"),
        }
    }
}
