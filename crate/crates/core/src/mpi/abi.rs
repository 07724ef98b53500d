//! Integer values an MPI implementation uses for its symbolic constants.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AbiError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("ABI table has no entry for {0}")]
    Missing(String),
    #[error("ABI table maps datatypes {0} and {1} to the same value")]
    DuplicateDatatype(String, String),
}

/// `NAME = integer` table. Values may be decimal or `0x` hex and are
/// stored as 64-bit; every value the lowering emits must fit in an `i32`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbiTable {
    entries: BTreeMap<String, i64>,
}

/// Symbolic datatypes, in the order the runtime decodes them.
pub const DATATYPES: &[&str] = &["MPI_DOUBLE", "MPI_FLOAT", "MPI_INT", "MPI_LONG_LONG"];

/// Reduction operators and the `mpi.reduce` kinds they implement.
pub const REDUCTION_OPS: &[(&str, &str)] = &[("sum", "MPI_SUM"), ("prod", "MPI_PROD"), ("max", "MPI_MAX"), ("min", "MPI_MIN")];

const MPICH: &str = "\
# mpich-style handle values
MPI_COMM_WORLD = 0x44000000
MPI_DOUBLE = 0x4c00080b
MPI_FLOAT = 0x4c00040a
MPI_INT = 0x4c000405
MPI_LONG_LONG = 0x4c000809
MPI_REQUEST_NULL = 0x2c000000
MPI_PROC_NULL = -1
MPI_STATUS_IGNORE = 1
MPI_STATUSES_IGNORE = 1
MPI_MAX = 0x58000001
MPI_MIN = 0x58000002
MPI_SUM = 0x58000003
MPI_PROD = 0x58000004
";

impl AbiTable {
    /// The built-in profile modelled on mpich's `mpi.h`.
    pub fn mpich() -> Self {
        Self::parse(MPICH).expect("built-in ABI table is well formed")
    }

    pub fn parse(text: &str) -> Result<Self, AbiError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| AbiError::Syntax { line: i + 1, message };
            let (name, value) = line.split_once('=').ok_or_else(|| syntax(format!("expected NAME = value, found '{line}'")))?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(syntax(format!("invalid name '{name}'")));
            }
            let value = parse_int(value.trim()).ok_or_else(|| syntax(format!("invalid integer '{}'", value.trim())))?;
            if i32::try_from(value).is_err() && u32::try_from(value).is_err() {
                return Err(syntax(format!("{name} = {value} does not fit in 32 bits")));
            }
            entries.insert(name.to_string(), value);
        }
        let table = AbiTable { entries };
        for (i, a) in DATATYPES.iter().enumerate() {
            for b in &DATATYPES[i + 1..] {
                if let (Some(x), Some(y)) = (table.entries.get(*a), table.entries.get(*b)) {
                    if x == y {
                        return Err(AbiError::DuplicateDatatype(a.to_string(), b.to_string()));
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn get(&self, name: &str) -> Result<i64, AbiError> {
        self.entries.get(name).copied().ok_or_else(|| AbiError::Missing(name.to_string()))
    }

    /// Value as the i32 the lowered code passes around (hex handles wrap).
    pub fn get_i32(&self, name: &str) -> Result<i64, AbiError> {
        self.get(name).map(|v| i64::from(v as u32 as i32))
    }

    /// Symbolic name of an integer value among `names`, for decoding at run time.
    pub fn lookup<'a>(&self, value: i64, names: &[&'a str]) -> Option<&'a str> {
        names.iter().copied().find(|n| self.get_i32(n).ok() == Some(i64::from(value as u32 as i32)))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl Default for AbiTable {
    fn default() -> Self {
        Self::mpich()
    }
}

impl fmt::Display for AbiTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            if *v < 0 {
                writeln!(f, "{k} = {v}")?;
            } else {
                writeln!(f, "{k} = {v:#x}")?;
            }
        }
        Ok(())
    }
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = match body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        Some(hex) => i64::from_str_radix(hex, 16).ok()?,
        None => body.parse::<i64>().ok()?,
    };
    Some(if neg { -v } else { v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_round_trips_through_text() {
        let t = AbiTable::mpich();
        assert_eq!(AbiTable::parse(&t.to_string()).unwrap(), t);
        assert_eq!(t.get("MPI_PROC_NULL").unwrap(), -1);
        assert_eq!(t.get_i32("MPI_COMM_WORLD").unwrap(), 0x44000000);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(AbiTable::parse("MPI_INT 3"), Err(AbiError::Syntax { line: 1, .. })));
        assert!(matches!(AbiTable::parse("MPI_INT = 3\nMPI_FLOAT = 3"), Err(AbiError::DuplicateDatatype(..))));
        assert!(matches!(AbiTable::parse("").unwrap().get("MPI_INT"), Err(AbiError::Missing(_))));
    }
}
